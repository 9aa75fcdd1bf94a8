//! Moments, power-law fits, normality and tail diagnostics, and the limiting
//! constants of the vertex-count and area laws.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::cell::{CellRecord, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("gamma function requires a positive argument, got {0}")]
    GammaDomain(f64),
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("need at least 3 distinct abscissae for a fit, got {0}")]
    TooFewPoints(usize),
    #[error("power-law fit requires positive values, got ({0}, {1})")]
    NonPositive(f64, f64),
    #[error("sample variance is zero")]
    ZeroVariance,
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for x > 0 by the Lanczos approximation (g = 7, 9 terms), relative
/// error around 1e-15; reflection below ½.
pub fn gamma_fn(x: f64) -> Result<f64, StatsError> {
    if x <= 0.0 || !x.is_finite() {
        return Err(StatsError::GammaDomain(x));
    }
    Ok(lanczos(x))
}

fn lanczos(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let w = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * w.powf(x + 0.5) * (-w).exp() * acc
}

/// Growth exponents in `r` of the mean vertex count, the mean area outside
/// the indisk, and its variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Exponents {
    pub mean_n: f64,
    pub mean_v: f64,
    pub var_v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryConstants {
    /// `4π · 3^{-1/3} Γ(5/3)`
    pub a1: f64,
    /// `2^{4/3} π · 3^{-1/3} Γ(5/3)`
    pub a1_prime: f64,
    /// `Γ(2/3) (π/2)^{2/3} 3^{-1/3}`
    pub b1: f64,
    /// `2π (4π)^{-2/3} b1`
    pub voronoi_area_coeff: f64,
    /// `2π π^{-2/3} b1`
    pub crofton_area_coeff: f64,
    /// Large-η slope of the Voronoi upper-tail rate, `(4π)^{1/3} b1`.
    pub voronoi_tail_slope: f64,
    /// Crofton analogue, `π^{1/3} b1`.
    pub crofton_tail_slope: f64,
    pub voronoi_exponents: Exponents,
    pub crofton_exponents: Exponents,
}

pub fn theory_constants() -> TheoryConstants {
    let third = 1.0 / 3.0;
    let g53 = lanczos(5.0 / 3.0);
    let g23 = lanczos(2.0 / 3.0);
    let cbrt3_inv = 3f64.powf(-third);
    let b1 = g23 * (PI / 2.0).powf(2.0 * third) * cbrt3_inv;
    TheoryConstants {
        a1: 4.0 * PI * cbrt3_inv * g53,
        a1_prime: 2f64.powf(4.0 * third) * PI * cbrt3_inv * g53,
        b1,
        voronoi_area_coeff: 2.0 * PI * (4.0 * PI).powf(-2.0 * third) * b1,
        crofton_area_coeff: 2.0 * PI * PI.powf(-2.0 * third) * b1,
        voronoi_tail_slope: (4.0 * PI).powf(third) * b1,
        crofton_tail_slope: PI.powf(third) * b1,
        voronoi_exponents: Exponents {
            mean_n: 2.0 * third,
            mean_v: 2.0 * third,
            var_v: 2.0 * third,
        },
        crofton_exponents: Exponents {
            mean_n: third,
            mean_v: 4.0 * third,
            var_v: 7.0 * third,
        },
    }
}

impl TheoryConstants {
    pub fn exponents(&self, model: Model) -> Exponents {
        match model {
            Model::Voronoi => self.voronoi_exponents,
            Model::Crofton => self.crofton_exponents,
        }
    }

    /// Leading-order mean vertex count at inradius `r`.
    pub fn mean_n(&self, model: Model, r: f64) -> f64 {
        let c = match model {
            Model::Voronoi => self.a1,
            Model::Crofton => self.a1_prime,
        };
        c * r.powf(self.exponents(model).mean_n)
    }

    /// Leading-order mean area outside the indisk at inradius `r`.
    pub fn mean_v(&self, model: Model, r: f64) -> f64 {
        let c = match model {
            Model::Voronoi => self.voronoi_area_coeff,
            Model::Crofton => self.crofton_area_coeff,
        };
        c * r.powf(self.exponents(model).mean_v)
    }
}

/// A replicate that produced no record, kept so that failures stay visible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedReplicate {
    pub model: Model,
    pub r: f64,
    pub replicate: u64,
    pub reason: String,
}

/// Per-replicate records of one experiment.
///
/// `merge` is a sorted union keyed by `(model, r, replicate)`, so any merge
/// order of per-worker partials gives the same dataset and therefore the same
/// summaries bit for bit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentDataset {
    pub records: Vec<CellRecord>,
    pub skipped: Vec<SkippedReplicate>,
}

fn record_key(model: Model, r: f64, replicate: u64) -> (Model, u64, u64) {
    (model, r.to_bits(), replicate)
}

impl ExperimentDataset {
    pub fn new(mut records: Vec<CellRecord>, mut skipped: Vec<SkippedReplicate>) -> Self {
        records.sort_by_key(|c| record_key(c.model, c.r, c.replicate));
        skipped.sort_by_key(|s| record_key(s.model, s.r, s.replicate));
        ExperimentDataset { records, skipped }
    }

    pub fn merge(self, other: ExperimentDataset) -> Self {
        let mut records = self.records;
        records.extend(other.records);
        let mut skipped = self.skipped;
        skipped.extend(other.skipped);
        ExperimentDataset::new(records, skipped)
    }

    /// Distinct `(model, r)` groups in sorted order.
    pub fn groups(&self) -> Vec<(Model, f64)> {
        let mut g: Vec<(Model, f64)> = self
            .records
            .iter()
            .map(|c| (c.model, c.r))
            .chain(self.skipped.iter().map(|s| (s.model, s.r)))
            .collect();
        g.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        g.dedup();
        g
    }

    pub fn group(&self, model: Model, r: f64) -> impl Iterator<Item = &CellRecord> {
        self.records
            .iter()
            .filter(move |c| c.model == model && c.r == r)
    }

    pub fn skipped_in(&self, model: Model, r: f64) -> usize {
        self.skipped
            .iter()
            .filter(|s| s.model == model && s.r == r)
            .count()
    }
}

/// Unbiased sample moments with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    /// From the fourth central moment: `√((m₄ − (n−3)/(n−1) s⁴) / n)`.
    pub se_variance: f64,
}

pub fn moments(xs: &[f64]) -> Result<Moments, StatsError> {
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::InsufficientSamples { need: 2, got: n });
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let variance = m2 / (nf - 1.0);
    let var_of_var = (m4 - (nf - 3.0) / (nf - 1.0) * variance * variance) / nf;
    Ok(Moments {
        n,
        mean,
        variance,
        se_mean: (variance / nf).sqrt(),
        se_variance: var_of_var.max(0.0).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventFrequency {
    pub alpha: f64,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub model: Model,
    pub r: f64,
    pub replicates: usize,
    pub skipped: usize,
    pub n_vertices: Moments,
    /// Physical area outside the indisk, `r²` times the scaled area.
    pub area_outside: Moments,
    pub escape_events: Vec<EventFrequency>,
}

pub fn summarize(dataset: &ExperimentDataset, model: Model, r: f64) -> Result<Summary, StatsError> {
    let group: Vec<&CellRecord> = dataset.group(model, r).collect();
    let ns: Vec<f64> = group.iter().map(|c| c.n_vertices as f64).collect();
    let vs: Vec<f64> = group.iter().map(|c| c.area_outside_physical).collect();
    let n_vertices = moments(&ns)?;
    let area_outside = moments(&vs)?;
    let mut escape_events: Vec<EventFrequency> = Vec::new();
    if let Some(first) = group.first() {
        for (k, flag) in first.a_event_flags.iter().enumerate() {
            let count = group
                .iter()
                .filter(|c| c.a_event_flags.get(k).is_some_and(|f| f.escaped))
                .count();
            escape_events.push(EventFrequency {
                alpha: flag.alpha,
                count,
                frequency: count as f64 / group.len() as f64,
            });
        }
    }
    Ok(Summary {
        model,
        r,
        replicates: group.len(),
        skipped: dataset.skipped_in(model, r),
        n_vertices,
        area_outside,
        escape_events,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl PowerFit {
    pub fn predict(&self, r: f64) -> f64 {
        (self.intercept + self.slope * r.ln()).exp()
    }
}

/// Least squares of `log value` on `log r`.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<PowerFit, StatsError> {
    for &(r, v) in pairs {
        if !(r > 0.0 && v > 0.0) {
            return Err(StatsError::NonPositive(r, v));
        }
    }
    let mut distinct: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(StatsError::TooFewPoints(distinct.len()));
    }
    let n = pairs.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(r, v)| (r.ln(), v.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_se = if pairs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerFit {
        slope,
        intercept,
        slope_se,
    })
}

/// Φ(z) through the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub ks_distance: f64,
    pub n: usize,
}

/// Kolmogorov distance between the standardized sample and `N(0, 1)`.
pub fn normality_statistic(samples: &[f64]) -> Result<KsResult, StatsError> {
    if samples.len() < 100 {
        return Err(StatsError::InsufficientSamples {
            need: 100,
            got: samples.len(),
        });
    }
    let m = moments(samples)?;
    if m.variance == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sd = m.variance.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - m.mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let ks_distance = z
        .iter()
        .enumerate()
        .map(|(i, &zi)| {
            let f = normal_cdf(zi);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        ks_distance,
        n: samples.len(),
    })
}

/// 95% Wilson score interval for `count` successes out of `n`.
pub fn wilson_interval(count: usize, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = count as f64 / nf;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let low = if count == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if count == n { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

/// Empirical tail frequency. Zero counts are reported only as the bound
/// `p < 1/(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailProbability {
    Estimate {
        p: f64,
        count: usize,
        n: usize,
        wilson_low: f64,
        wilson_high: f64,
    },
    Below {
        bound: f64,
        n: usize,
    },
}

impl TailProbability {
    fn from_count(count: usize, n: usize) -> Self {
        if count == 0 {
            TailProbability::Below {
                bound: 1.0 / (n as f64 + 1.0),
                n,
            }
        } else {
            let (wilson_low, wilson_high) = wilson_interval(count, n);
            TailProbability::Estimate {
                p: count as f64 / n as f64,
                count,
                n,
                wilson_low,
                wilson_high,
            }
        }
    }

    pub fn count(&self) -> usize {
        match *self {
            TailProbability::Estimate { count, .. } => count,
            TailProbability::Below { .. } => 0,
        }
    }

    /// Point estimate; `None` for a bound.
    pub fn estimate(&self) -> Option<f64> {
        match *self {
            TailProbability::Estimate { p, .. } => Some(p),
            TailProbability::Below { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub eta: f64,
    pub upper: TailProbability,
    pub lower: TailProbability,
    /// `−log p̂_upper / r^{κ}` with `κ = 2/3` (Voronoi) or `1/3` (Crofton).
    /// When the upper tail is empty this is the lower bound obtained from
    /// `p < 1/(n+1)`.
    pub normalized_upper: f64,
    pub normalized_upper_is_bound: bool,
}

/// Upper and lower tail frequencies of the area around `(1 ± η) · mean`.
pub fn tail_estimates(values: &[f64], model: Model, r: f64, etas: &[f64]) -> Vec<TailRow> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let norm = r.powf(model.count_exponent());
    etas.iter()
        .map(|&eta| {
            let hi = (1.0 + eta) * mean;
            let lo = (1.0 - eta) * mean;
            let upper = TailProbability::from_count(values.iter().filter(|&&v| v >= hi).count(), n);
            let lower = TailProbability::from_count(values.iter().filter(|&&v| v <= lo).count(), n);
            let (p, is_bound) = match upper {
                TailProbability::Estimate { p, .. } => (p, false),
                TailProbability::Below { bound, .. } => (bound, true),
            };
            TailRow {
                eta,
                upper,
                lower,
                normalized_upper: -p.ln() / norm,
                normalized_upper_is_bound: is_bound,
            }
        })
        .collect()
}
