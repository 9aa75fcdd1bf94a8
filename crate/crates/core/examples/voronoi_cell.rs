//! Builds one conditioned Voronoi zero cell and prints its observables.
//!
//! `cargo run --release --example voronoi_cell -- 50 7`

use pvcell::cell::{conditioned_cell, measure_cell, Model, DEFAULT_ALPHAS};
use pvcell::RngStream;

fn main() {
    let mut args = std::env::args().skip(1);
    let r: f64 = args.next().map_or(50.0, |a| a.parse().expect("r"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed"));

    let built = conditioned_cell(Model::Voronoi, r, RngStream::new(seed)).expect("bounded cell");
    let rec = measure_cell(&built.polygon, Model::Voronoi, r, &DEFAULT_ALPHAS);
    println!("inradius r            {r}");
    println!("generators read       {}", built.generators_consumed());
    println!("vertices              {}", rec.n_vertices);
    println!("scaled circumradius   {:.6}", rec.circumradius_scaled);
    println!("area outside indisk   {:.6} (scaled), {:.4} (physical)", rec.area_outside_scaled, rec.area_outside_physical);
    for v in built.polygon.vertices().iter().take(5) {
        println!("  vertex {v}");
    }
    if rec.n_vertices > 5 {
        println!("  ... {} more", rec.n_vertices - 5);
    }
}
