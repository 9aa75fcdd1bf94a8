//! The two inversion dualities on a single cell: vertices of the cell against
//! extreme points of the inverted generators, and the area outside the unit
//! disk against the uncovered mass of the grain union.

use pvcell::cell::{conditioned_cell, Model};
use pvcell::dual::{defect_measure_mc, grain_union_covers, vertices_equal_extremes, GrainModel};
use pvcell::geom::{circumradius, polygon_minus_disk_area};
use pvcell::RngStream;

fn main() {
    let key = RngStream::new(3);
    let built = conditioned_cell(Model::Voronoi, 10.0, key).unwrap();
    println!("{:?}", vertices_equal_extremes(&built.generators).unwrap());

    let grains = GrainModel::from_generators(&built.generators).unwrap();
    let exact = polygon_minus_disk_area(&built.polygon, 1.0).unwrap();
    let est = defect_measure_mc(&grains, 200_000, &mut key.child(1 << 63).rng()).unwrap();
    println!(
        "area outside 𝔻 {exact:.6}, uncovered μ-mass {:.6} ± {:.6}",
        est.estimate, est.std_error
    );

    let s_crit = circumradius(&built.polygon).recip();
    for s in [0.99 * s_crit, 0.5 * (s_crit + 1.0)] {
        println!("D(0, {s:.4}) covered: {}", grain_union_covers(&grains, s).unwrap());
    }
}
