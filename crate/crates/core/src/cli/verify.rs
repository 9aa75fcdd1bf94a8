use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::simulate::{replicate_key, thread_pool};
use super::{CliError, EXIT_ANOMALY, EXIT_OK, EXIT_VERIFICATION};
use crate::cell::{conditioned_cell, Model};
use crate::dual::{default_defect_samples, defect_measure_mc, vertices_equal_extremes, DualityOutcome, GrainModel};
use crate::geom::polygon_minus_disk_area;
use crate::sampler::{coupled_triple, coupling_gap_mean, RngStream};
use crate::stats::theory_constants;

/// Child id of the defect-measure stream, disjoint from the ring ids of the
/// generator stream.
const DEFECT_STREAM: u64 = 1 << 63;
const COUPLING_STREAM: u64 = 3;

/// Minimum fraction of defect estimates within 4 SE of the exact area.
pub const DEFECT_PASS_FRACTION: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DefectCheck {
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// `|estimate − exact| / SE`; infinite when SE is zero and the values differ.
    pub deviation_se: f64,
}

impl DefectCheck {
    pub fn within(&self, k: f64) -> bool {
        self.deviation_se <= k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityReplicate {
    pub model: Model,
    pub r: f64,
    pub replicate: u64,
    pub vertices: Result<DualityOutcome, String>,
    pub defect: Result<DefectCheck, String>,
}

/// Both duality checks on one replicate. Uses the same stream as `simulate`.
pub fn check_duality_replicate(
    model: Model,
    r: f64,
    replicate: u64,
    master_seed: u64,
    mc_samples: usize,
) -> DualityReplicate {
    let key = replicate_key(master_seed, model, r, replicate);
    let failed = |e: String| DualityReplicate {
        model,
        r,
        replicate,
        vertices: Err(e.clone()),
        defect: Err(e),
    };
    let built = match conditioned_cell(model, r, key) {
        Ok(b) => b,
        Err(e) => return failed(e.to_string()),
    };
    let vertices = vertices_equal_extremes(&built.generators).map_err(|e| e.to_string());
    let defect = GrainModel::from_generators(&built.generators)
        .map_err(|e| e.to_string())
        .and_then(|grains| {
            let n = if mc_samples == 0 {
                default_defect_samples(&grains)
            } else {
                mc_samples
            };
            let est = defect_measure_mc(&grains, n, &mut key.child(DEFECT_STREAM).rng())
                .map_err(|e| e.to_string())?;
            let exact = polygon_minus_disk_area(&built.polygon, 1.0).map_err(|e| e.to_string())?;
            let diff = (est.estimate - exact).abs();
            let deviation_se = if est.std_error > 0.0 {
                diff / est.std_error
            } else if diff <= 1e-12 * exact.max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(DefectCheck {
                exact,
                estimate: est.estimate,
                std_error: est.std_error,
                deviation_se,
            })
        });
    DualityReplicate {
        model,
        r,
        replicate,
        vertices,
        defect,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Mismatch {
    pub model: Model,
    pub r: f64,
    pub replicate: u64,
    pub n_cell: usize,
    pub n_hull: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct VertexCountReport {
    pub matches: usize,
    pub mismatches: usize,
    pub degenerate: usize,
    pub errors: usize,
    pub skip_rate: f64,
    pub mismatched: Vec<Mismatch>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectReport {
    pub evaluated: usize,
    pub within_4se: usize,
    pub pass_fraction: f64,
    /// `None` when some estimate had zero SE but differed from the exact value.
    pub max_deviation_se: Option<f64>,
    pub errors: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub replicates: usize,
    pub vertex_count: VertexCountReport,
    pub defect_measure: DefectReport,
    pub passed: bool,
}

pub fn run_duality(config: &ExperimentConfig) -> Result<(DualityReport, Vec<DualityReplicate>), CliError> {
    config.validate()?;
    let jobs: Vec<(Model, f64, u64)> = config
        .model
        .models()
        .into_iter()
        .flat_map(|m| {
            config
                .r_values
                .iter()
                .flat_map(move |&r| (0..config.replicates).map(move |i| (m, r, i)))
        })
        .collect();
    let pool = thread_pool(config.workers)?;
    let results: Vec<DualityReplicate> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, r, i)| check_duality_replicate(m, r, i, config.master_seed, config.mc_defect_samples))
            .collect()
    });
    Ok((summarize_duality(&results), results))
}

pub fn summarize_duality(results: &[DualityReplicate]) -> DualityReport {
    let (mut matches, mut degenerate, mut errors) = (0, 0, 0);
    let mut mismatched = Vec::new();
    for d in results {
        match d.vertices {
            Ok(DualityOutcome::Counted { n_cell, n_hull }) if n_cell == n_hull => matches += 1,
            Ok(DualityOutcome::Counted { n_cell, n_hull }) => mismatched.push(Mismatch {
                model: d.model,
                r: d.r,
                replicate: d.replicate,
                n_cell,
                n_hull,
            }),
            Ok(DualityOutcome::Degenerate) => degenerate += 1,
            Err(_) => errors += 1,
        }
    }
    let checks: Vec<&DefectCheck> = results.iter().filter_map(|d| d.defect.as_ref().ok()).collect();
    let within_4se = checks.iter().filter(|c| c.within(4.0)).count();
    let max_dev = checks.iter().map(|c| c.deviation_se).fold(0.0, f64::max);
    let pass_fraction = if checks.is_empty() {
        0.0
    } else {
        within_4se as f64 / checks.len() as f64
    };
    let n = results.len().max(1) as f64;
    let vertex_count = VertexCountReport {
        matches,
        mismatches: mismatched.len(),
        degenerate,
        errors,
        skip_rate: (degenerate + errors) as f64 / n,
        mismatched,
    };
    let defect_measure = DefectReport {
        evaluated: checks.len(),
        within_4se,
        pass_fraction,
        max_deviation_se: max_dev.is_finite().then_some(max_dev),
        errors: results.len() - checks.len(),
    };
    DualityReport {
        replicates: results.len(),
        passed: vertex_count.mismatches == 0 && pass_fraction >= DEFECT_PASS_FRACTION,
        vertex_count,
        defect_measure,
    }
}

/// Exit 2 on any vertex-count mismatch or a defect pass fraction below 0.99;
/// exit 3 if the skip rate reaches the anomaly threshold.
pub fn cmd_verify_duality(config: &ExperimentConfig) -> Result<i32, CliError> {
    let (report, _) = run_duality(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(config.output_dir.join("duality.json"), &text)?;
    let v = &report.vertex_count;
    let d = &report.defect_measure;
    println!(
        "vertex count = extreme points: {}/{} matched, {} mismatched, {} degenerate, {} errors",
        v.matches,
        report.replicates,
        v.mismatches,
        v.degenerate,
        v.errors
    );
    println!(
        "defect measure within 4 SE: {}/{} ({:.4}), max deviation {} SE",
        d.within_4se,
        d.evaluated,
        d.pass_fraction,
        d.max_deviation_se.map_or("inf".to_string(), |m| format!("{m:.3}"))
    );
    for m in &v.mismatched {
        eprintln!("mismatch {} r={} replicate {}: cell {} vs hull {}", m.model, m.r, m.replicate, m.n_cell, m.n_hull);
    }
    Ok(if !report.passed {
        EXIT_VERIFICATION
    } else if v.skip_rate >= super::simulate::ANOMALY_THRESHOLD {
        EXIT_ANOMALY
    } else {
        EXIT_OK
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub t: f64,
    pub eps: f64,
    pub draws: usize,
    pub inclusion_failures: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_x_up: f64,
    pub expected_x: f64,
    pub expected_y: f64,
    pub expected_x_up: f64,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub expected_gap: f64,
    pub gap_deviation_se: f64,
}

pub fn run_coupling(t: f64, eps: f64, draws: usize, seed: u64, workers: usize) -> Result<CouplingReport, CliError> {
    if draws < 2 {
        return Err(CliError::Usage("coupling demo needs at least 2 draws".into()));
    }
    let key = RngStream::new(seed)
        .child(COUPLING_STREAM)
        .child(t.to_bits())
        .child(eps.to_bits());
    // validate once so that bad parameters are a usage error
    coupled_triple(t, eps, &mut key.rng()).map_err(|e| CliError::Usage(e.to_string()))?;
    let pool = thread_pool(workers)?;
    let sizes: Vec<(bool, [f64; 3])> = pool.install(|| {
        (0..draws as u64)
            .into_par_iter()
            .map(|i| {
                let tri = coupled_triple(t, eps, &mut key.child(i).rng()).expect("validated parameters");
                (
                    tri.inclusions_hold(),
                    [tri.x.len() as f64, tri.y.len() as f64, tri.x_up.len() as f64],
                )
            })
            .collect()
    });
    let n = draws as f64;
    let mean = |k: usize| sizes.iter().map(|s| s.1[k]).sum::<f64>() / n;
    let gaps: Vec<f64> = sizes.iter().map(|s| s.1[1] - s.1[0]).collect();
    let mean_gap = gaps.iter().sum::<f64>() / n;
    let var_gap = gaps.iter().map(|g| (g - mean_gap).powi(2)).sum::<f64>() / (n - 1.0);
    let se_gap = (var_gap / n).sqrt();
    let expected_gap = coupling_gap_mean(t, eps);
    let inner = 1.0 - eps;
    let annulus = std::f64::consts::PI * (1.0 - inner * inner);
    let expected_x = t * annulus;
    Ok(CouplingReport {
        t,
        eps,
        draws,
        inclusion_failures: sizes.iter().filter(|s| !s.0).count(),
        mean_x: mean(0),
        mean_y: mean(1),
        mean_x_up: mean(2),
        expected_x,
        expected_y: expected_x + expected_gap,
        expected_x_up: expected_x / inner.powi(4),
        mean_gap,
        se_gap,
        expected_gap,
        gap_deviation_se: (mean_gap - expected_gap).abs() / se_gap,
    })
}

/// Default coupling settings, one per row.
pub const COUPLING_SETTINGS: [(f64, f64); 2] = [(1e3, 0.1), (1e4, 0.05)];

/// Exit 2 if any draw violates `X ⊆ Y ⊆ X_up`.
pub fn cmd_coupling_demo(
    settings: &[(f64, f64)],
    draws: usize,
    seed: u64,
    workers: usize,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    let reports = settings
        .iter()
        .map(|&(t, eps)| run_coupling(t, eps, draws, seed, workers))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &reports {
        println!(
            "t={} eps={}: inclusions {}/{}  E|X|={:.2} ({:.2})  E|Y|={:.2} ({:.2})  E|X_up|={:.2} ({:.2})  gap {:.3} ± {:.3} vs {:.3} ({:.2} SE)",
            c.t,
            c.eps,
            c.draws - c.inclusion_failures,
            c.draws,
            c.mean_x,
            c.expected_x,
            c.mean_y,
            c.expected_y,
            c.mean_x_up,
            c.expected_x_up,
            c.mean_gap,
            c.se_gap,
            c.expected_gap,
            c.gap_deviation_se
        );
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        fs::write(dir.join("coupling.json"), text)?;
    }
    Ok(if reports.iter().any(|c| c.inclusion_failures > 0) {
        EXIT_VERIFICATION
    } else {
        EXIT_OK
    })
}

pub fn constants_table() -> String {
    let c = theory_constants();
    let rows = [
        ("a1", "4π · 3^(-1/3) · Γ(5/3)", c.a1),
        ("a1_prime", "2^(4/3) π · 3^(-1/3) · Γ(5/3)", c.a1_prime),
        ("b1", "Γ(2/3) (π/2)^(2/3) · 3^(-1/3)", c.b1),
        ("voronoi_area_coeff", "2π (4π)^(-2/3) · b1", c.voronoi_area_coeff),
        ("crofton_area_coeff", "2π π^(-2/3) · b1", c.crofton_area_coeff),
        ("voronoi_tail_slope", "(4π)^(1/3) · b1", c.voronoi_tail_slope),
        ("crofton_tail_slope", "π^(1/3) · b1", c.crofton_tail_slope),
    ];
    let mut out = String::new();
    for (name, formula, value) in rows {
        out.push_str(&format!("{name:<20} = {formula:<32} = {value:.5}  ({value:.12})\n"));
    }
    let (v, k) = (c.voronoi_exponents, c.crofton_exponents);
    out.push_str(&format!(
        "exponents voronoi    N {:.4}  V {:.4}  Var V {:.4}\n",
        v.mean_n, v.mean_v, v.var_v
    ));
    out.push_str(&format!(
        "exponents crofton    N {:.4}  V {:.4}  Var V {:.4}\n",
        k.mean_n, k.mean_v, k.var_v
    ));
    out
}

pub fn cmd_constants() -> Result<i32, CliError> {
    print!("{}", constants_table());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_lines() {
        let table = constants_table();
        let line = |name: &str| table.lines().find(|l| l.starts_with(name)).unwrap().to_string();
        assert!(line("a1 ").contains("7.86565"));
        assert!(line("a1_prime").contains("4.95505"));
        assert!(line("voronoi_area_coeff").contains("1.4748"));
    }

    #[test]
    fn small_duality_run_passes() {
        let cfg = ExperimentConfig {
            r_values: vec![2.0, 5.0],
            replicates: 10,
            ..ExperimentConfig::default()
        };
        let (report, results) = run_duality(&cfg).unwrap();
        assert_eq!(results.len(), 20);
        assert_eq!(report.vertex_count.mismatches, 0);
        assert!(report.defect_measure.evaluated >= 19);
    }

    #[test]
    fn coupling_rejects_unit_eps() {
        assert!(matches!(run_coupling(10.0, 1.0, 10, 1, 1), Err(CliError::Usage(_))));
        let c = run_coupling(10.0, 0.5, 50, 1, 2).unwrap();
        assert_eq!(c.inclusion_failures, 0);
    }
}
