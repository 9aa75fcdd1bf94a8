//! Limiting constants and growth exponents.

use pvcell::stats::{gamma_fn, theory_constants};

fn main() {
    println!("Γ(5/3) = {:.12}", gamma_fn(5.0 / 3.0).unwrap());
    print!("{}", pvcell::cli::constants_table());
    let c = theory_constants();
    for r in [10.0, 100.0, 1000.0] {
        println!(
            "r = {r:>6}: E N ≈ {:8.2} (voronoi), {:6.2} (crofton)",
            c.mean_n(pvcell::Model::Voronoi, r),
            c.mean_n(pvcell::Model::Crofton, r)
        );
    }
}
