//! Normality and tail tables for the area outside the indisk.

use pvcell::cli::{run_simulation, ExperimentConfig};
use pvcell::stats::{normality_statistic, tail_estimates, TailProbability};
use pvcell::Model;

fn main() {
    let r = 20.0;
    let config = ExperimentConfig {
        r_values: vec![r],
        replicates: 1000,
        ..ExperimentConfig::default()
    };
    let vs: Vec<f64> = run_simulation(&config)
        .unwrap()
        .records
        .iter()
        .map(|c| c.area_outside_physical)
        .collect();
    println!("KS distance to N(0,1): {:.4}", normality_statistic(&vs).unwrap().ks_distance);

    let show = |p: TailProbability| match p {
        TailProbability::Estimate { p, wilson_low, wilson_high, .. } => {
            format!("{p:.4} [{wilson_low:.4}, {wilson_high:.4}]")
        }
        TailProbability::Below { bound, .. } => format!("< {bound:.4}"),
    };
    for row in tail_estimates(&vs, Model::Voronoi, r, &[0.0, 0.1, 0.25, 0.5]) {
        println!(
            "η = {:<4}  upper {:<26} lower {:<26} -log p / r^(2/3) {}{:.4}",
            row.eta,
            show(row.upper),
            show(row.lower),
            if row.normalized_upper_is_bound { "≥ " } else { "" },
            row.normalized_upper
        );
    }
}
