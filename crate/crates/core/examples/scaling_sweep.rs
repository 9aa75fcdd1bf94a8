//! Power-law fits of the mean vertex count and mean area over a Voronoi sweep.

use pvcell::cli::{run_simulation, ExperimentConfig};
use pvcell::stats::{fit_exponent, summarize, theory_constants};
use pvcell::Model;

fn main() {
    let config = ExperimentConfig {
        r_values: vec![10.0, 20.0, 50.0, 100.0],
        replicates: 100,
        ..ExperimentConfig::default()
    };
    let data = run_simulation(&config).unwrap();
    let c = theory_constants();
    let mut n_pairs = Vec::new();
    let mut v_pairs = Vec::new();
    for &r in &config.r_values {
        let s = summarize(&data, Model::Voronoi, r).unwrap();
        println!(
            "r = {r:>5}: N = {:7.2} ± {:.2} ({:.3} of limit), V = {:7.3} ± {:.3}",
            s.n_vertices.mean,
            s.n_vertices.se_mean,
            s.n_vertices.mean / c.mean_n(Model::Voronoi, r),
            s.area_outside.mean,
            s.area_outside.se_mean
        );
        n_pairs.push((r, s.n_vertices.mean));
        v_pairs.push((r, s.area_outside.mean));
    }
    let n = fit_exponent(&n_pairs).unwrap();
    let v = fit_exponent(&v_pairs).unwrap();
    println!("exponent of E N: {:.4} ± {:.4} (2/3)", n.slope, n.slope_se);
    println!("exponent of E V: {:.4} ± {:.4} (2/3)", v.slope, v.slope_se);
}
