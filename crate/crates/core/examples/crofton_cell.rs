//! Conditioned Crofton cells over a range of inradii.

use pvcell::cell::{conditioned_cell, measure_cell, Model};
use pvcell::stats::theory_constants;
use pvcell::RngStream;

fn main() {
    let c = theory_constants();
    let key = RngStream::new(11);
    println!("{:>6} {:>4} {:>8} {:>12} {:>12}", "r", "N", "E N", "V", "E V");
    for (i, r) in [10.0, 100.0, 1000.0, 10000.0].into_iter().enumerate() {
        let built = conditioned_cell(Model::Crofton, r, key.child(i as u64)).unwrap();
        let rec = measure_cell(&built.polygon, Model::Crofton, r, &[]);
        println!(
            "{r:>6} {:>4} {:>8.2} {:>12.1} {:>12.1}",
            rec.n_vertices,
            c.mean_n(Model::Crofton, r),
            rec.area_outside_physical,
            c.mean_v(Model::Crofton, r)
        );
    }
}
