use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ModelChoice};
use super::{CliError, EXIT_ANOMALY, EXIT_OK};
use crate::cell::{conditioned_cell, measure_cell, CellRecord, EscapeFlag, Model};
use crate::sampler::RngStream;
use crate::stats::{
    fit_exponent, normality_statistic, summarize, tail_estimates, theory_constants,
    ExperimentDataset, KsResult, SkippedReplicate, Summary, TailRow, TheoryConstants,
};

pub const RECORDS_HEADER: [&str; 10] = [
    "model",
    "r",
    "replicate",
    "seed",
    "n_vertices",
    "area_outside_scaled",
    "area_outside_physical",
    "circumradius_scaled",
    "generators_consumed",
    "a_event_flags",
];

/// Skip rate at or above which a run is flagged as anomalous.
pub const ANOMALY_THRESHOLD: f64 = 1e-3;

/// Tail tables are emitted only for groups at least this large.
pub const MIN_TAIL_REPLICATES: usize = 1000;

/// Stream of one replicate. Depends only on the master seed, the model, the
/// exact value of `r` and the replicate index.
pub fn replicate_key(master_seed: u64, model: Model, r: f64, replicate: u64) -> RngStream {
    RngStream::new(master_seed)
        .child(model.stream_id())
        .child(r.to_bits())
        .child(replicate)
}

pub fn simulate_replicate(
    model: Model,
    r: f64,
    replicate: u64,
    master_seed: u64,
    alphas: &[f64],
) -> Result<CellRecord, SkippedReplicate> {
    let key = replicate_key(master_seed, model, r, replicate);
    match conditioned_cell(model, r, key) {
        Ok(built) => {
            let mut rec = measure_cell(&built.polygon, model, r, alphas);
            rec.replicate = replicate;
            rec.seed = key.key();
            rec.generators_consumed = built.generators_consumed();
            Ok(rec)
        }
        Err(e) => Err(SkippedReplicate {
            model,
            r,
            replicate,
            reason: e.to_string(),
        }),
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

/// Runs every `(model, r, replicate)` of the config. Workers fold records
/// into partial datasets which are then merged; the result does not depend on
/// the worker count.
pub fn run_simulation(config: &ExperimentConfig) -> Result<ExperimentDataset, CliError> {
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
    let dataset = pool.install(|| {
        jobs.par_iter()
            .fold(ExperimentDataset::default, |mut acc, &(m, r, i)| {
                match simulate_replicate(m, r, i, config.master_seed, &config.alphas) {
                    Ok(rec) => acc.records.push(rec),
                    Err(skip) => acc.skipped.push(skip),
                }
                acc
            })
            .reduce(ExperimentDataset::default, ExperimentDataset::merge)
    });
    Ok(dataset)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_flags(flags: &[EscapeFlag]) -> String {
    flags
        .iter()
        .map(|f| format!("{}:{}", f.alpha, u8::from(f.escaped)))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_flags(s: &str) -> Result<Vec<EscapeFlag>, String> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (a, e) = p.split_once(':').ok_or_else(|| format!("bad flag '{p}'"))?;
            Ok(EscapeFlag {
                alpha: a.parse().map_err(|_| format!("bad alpha '{a}'"))?,
                escaped: match e {
                    "0" => false,
                    "1" => true,
                    _ => return Err(format!("bad flag value '{e}'")),
                },
            })
        })
        .collect()
}

/// Writes records as CSV (LF line endings, floats to 17 significant digits).
pub fn write_records<W: Write>(out: W, records: &[CellRecord]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(RECORDS_HEADER)?;
    for c in records {
        w.write_record([
            c.model.as_str().to_string(),
            fmt_f64(c.r),
            c.replicate.to_string(),
            c.seed.to_string(),
            c.n_vertices.to_string(),
            fmt_f64(c.area_outside_scaled),
            fmt_f64(c.area_outside_physical),
            fmt_f64(c.circumradius_scaled),
            c.generators_consumed.to_string(),
            fmt_flags(&c.a_event_flags),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<CellRecord>, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORDS_HEADER {
        return Err(CliError::Usage(format!("unexpected records header: {}", header.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| CliError::Usage(format!("row {}: bad {what}", i + 1));
        let f = |k: usize| row[k].parse::<f64>().map_err(|_| bad(RECORDS_HEADER[k]));
        let u = |k: usize| row[k].parse::<u64>().map_err(|_| bad(RECORDS_HEADER[k]));
        out.push(CellRecord {
            model: row[0].parse().map_err(|_| bad("model"))?,
            r: f(1)?,
            replicate: u(2)?,
            seed: u(3)?,
            n_vertices: u(4)? as usize,
            area_outside_scaled: f(5)?,
            area_outside_physical: f(6)?,
            circumradius_scaled: f(7)?,
            generators_consumed: u(8)? as usize,
            a_event_flags: parse_flags(&row[9]).map_err(|e| CliError::Usage(format!("row {}: {e}", i + 1)))?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub theory: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentFits {
    pub mean_n: Option<FitReport>,
    pub mean_v: Option<FitReport>,
    pub var_v: Option<FitReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupReport {
    pub summary: Summary,
    pub theory_mean_n: f64,
    pub mean_n_ratio: f64,
    pub theory_mean_v: f64,
    pub mean_v_ratio: f64,
    pub normality: Option<KsResult>,
    pub tails: Vec<TailRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub model: Model,
    pub exponent_fit: Option<ExponentFits>,
    pub groups: Vec<GroupReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnomalyReport {
    pub attempted: usize,
    pub skipped: usize,
    pub rate: f64,
    pub threshold: f64,
    pub exceeded: bool,
    pub skipped_replicates: Vec<SkippedReplicate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryReport {
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
    pub config: ExperimentConfig,
    pub theory: TheoryConstants,
    pub models: Vec<ModelReport>,
    pub anomalies: AnomalyReport,
}

fn fit_report(pairs: &[(f64, f64)], theory: f64) -> Option<FitReport> {
    fit_exponent(pairs).ok().map(|f| FitReport {
        slope: f.slope,
        intercept: f.intercept,
        slope_se: f.slope_se,
        theory,
    })
}

fn model_report(
    dataset: &ExperimentDataset,
    model: Model,
    config: &ExperimentConfig,
    theory: &TheoryConstants,
) -> ModelReport {
    let mut groups = Vec::new();
    for (m, r) in dataset.groups() {
        if m != model {
            continue;
        }
        let Ok(summary) = summarize(dataset, model, r) else {
            continue;
        };
        let vs: Vec<f64> = dataset.group(model, r).map(|c| c.area_outside_physical).collect();
        let theory_mean_n = theory.mean_n(model, r);
        let theory_mean_v = theory.mean_v(model, r);
        groups.push(GroupReport {
            theory_mean_n,
            mean_n_ratio: summary.n_vertices.mean / theory_mean_n,
            theory_mean_v,
            mean_v_ratio: summary.area_outside.mean / theory_mean_v,
            normality: normality_statistic(&vs).ok(),
            tails: if vs.len() >= MIN_TAIL_REPLICATES {
                tail_estimates(&vs, model, r, &config.etas)
            } else {
                Vec::new()
            },
            summary,
        });
    }
    let exponent_fit = (groups.len() >= 3).then(|| {
        let ex = theory.exponents(model);
        let pairs = |f: &dyn Fn(&Summary) -> f64| -> Vec<(f64, f64)> {
            groups.iter().map(|g| (g.summary.r, f(&g.summary))).collect()
        };
        ExponentFits {
            mean_n: fit_report(&pairs(&|s| s.n_vertices.mean), ex.mean_n),
            mean_v: fit_report(&pairs(&|s| s.area_outside.mean), ex.mean_v),
            var_v: fit_report(&pairs(&|s| s.area_outside.variance), ex.var_v),
        }
    });
    ModelReport {
        model,
        exponent_fit,
        groups,
    }
}

pub fn build_report(
    config: &ExperimentConfig,
    dataset: &ExperimentDataset,
    timestamp_unix: Option<u64>,
) -> SummaryReport {
    let theory = theory_constants();
    let models = config
        .model
        .models()
        .into_iter()
        .map(|m| model_report(dataset, m, config, &theory))
        .collect();
    let skipped = dataset.skipped.len();
    let attempted = skipped + dataset.records.len();
    let rate = if attempted == 0 {
        0.0
    } else {
        skipped as f64 / attempted as f64
    };
    SummaryReport {
        generator: format!("pvcell {}", env!("CARGO_PKG_VERSION")),
        timestamp_unix,
        config: config.clone(),
        theory,
        models,
        anomalies: AnomalyReport {
            attempted,
            skipped,
            rate,
            threshold: ANOMALY_THRESHOLD,
            exceeded: rate >= ANOMALY_THRESHOLD,
            skipped_replicates: dataset.skipped.clone(),
        },
    }
}

fn print_overview(report: &SummaryReport) {
    for m in &report.models {
        for g in &m.groups {
            let s = &g.summary;
            println!(
                "{:<8} r={:<8} n={:<6} mean_N={:<10.4} N/theory={:.4}  mean_V={:<12.5} V/theory={:.4}",
                m.model.as_str(),
                s.r,
                s.replicates,
                s.n_vertices.mean,
                g.mean_n_ratio,
                s.area_outside.mean,
                g.mean_v_ratio
            );
        }
        if let Some(fits) = &m.exponent_fit {
            let show = |name: &str, f: &Option<FitReport>| {
                if let Some(f) = f {
                    println!(
                        "{:<8} exponent {name:<7} {:.4} ± {:.4} (theory {:.4})",
                        m.model.as_str(),
                        f.slope,
                        f.slope_se,
                        f.theory
                    );
                }
            };
            show("mean_N", &fits.mean_n);
            show("mean_V", &fits.mean_v);
            show("var_V", &fits.var_v);
        }
    }
    let a = &report.anomalies;
    println!("skipped {}/{} replicates", a.skipped, a.attempted);
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `records.csv` and `summary.json` into the output directory.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<i32, CliError> {
    let dataset = run_simulation(config)?;
    fs::create_dir_all(&config.output_dir)?;
    let file = fs::File::create(config.output_dir.join("records.csv"))?;
    write_records(std::io::BufWriter::new(file), &dataset.records)?;
    let timestamp = (!config.no_timestamp).then(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = build_report(config, &dataset, timestamp);
    write_json(&config.output_dir.join("summary.json"), &report)?;
    print_overview(&report);
    for s in &report.anomalies.skipped_replicates {
        eprintln!("skipped {} r={} replicate {}: {}", s.model, s.r, s.replicate, s.reason);
    }
    Ok(if report.anomalies.exceeded {
        eprintln!(
            "skip rate {:.2e} reaches the anomaly threshold {:.0e}",
            report.anomalies.rate, ANOMALY_THRESHOLD
        );
        EXIT_ANOMALY
    } else {
        EXIT_OK
    })
}

/// Re-summarizes an existing `records.csv` into `analysis.json`. Skipped
/// replicates are not part of the records file and are not counted.
pub fn cmd_analyze(input: &Path, config: &ExperimentConfig) -> Result<i32, CliError> {
    let file = fs::File::open(input)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", input.display())))?;
    let records = read_records(std::io::BufReader::new(file))?;
    let dataset = ExperimentDataset::new(records, Vec::new());
    let groups = dataset.groups();
    let models: Vec<Model> = {
        let mut m: Vec<Model> = groups.iter().map(|g| g.0).collect();
        m.dedup();
        m
    };
    let mut r_values: Vec<f64> = groups.iter().map(|g| g.1).collect();
    r_values.sort_by(f64::total_cmp);
    r_values.dedup();
    let echo = ExperimentConfig {
        model: match models.as_slice() {
            [Model::Crofton] => ModelChoice::Crofton,
            [_, _] => ModelChoice::Both,
            _ => ModelChoice::Voronoi,
        },
        r_values,
        replicates: groups
            .iter()
            .map(|&(m, r)| dataset.group(m, r).count() as u64)
            .max()
            .unwrap_or(0),
        alphas: dataset
            .records
            .first()
            .map(|c| c.a_event_flags.iter().map(|f| f.alpha).collect())
            .unwrap_or_default(),
        no_timestamp: true,
        ..config.clone()
    };
    let report = build_report(&echo, &dataset, None);
    fs::create_dir_all(&config.output_dir)?;
    write_json(&config.output_dir.join("analysis.json"), &report)?;
    print_overview(&report);
    Ok(EXIT_OK)
}
