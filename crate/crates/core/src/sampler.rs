//! Seeded Poisson samplers.
//!
//! Randomness is addressed by an [`RngStream`]: a 64-bit key that splits into
//! child keys (`model → r-index → replicate → ring`). Each leaf seeds its own
//! ChaCha8 generator, so a replicate's output does not depend on which worker
//! produced it or in which order.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::geom::Point2;

/// Points beyond this norm (scaled frame) are never generated by the lazy
/// streams; running into it surfaces as an error in the cell builder.
pub const SAFETY_CAP: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("radial law not integrable on [{lo}, {hi}]")]
    NonIntegrable { lo: f64, hi: f64 },
    #[error("invalid radial range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("intensity scale must be positive and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("inradius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("annulus width must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("expected {0:.3e} points exceeds the limit of {MAX_EXPECTED_POINTS:e}")]
    TooManyPoints(f64),
}

/// Upper bound on the expected size of a single simulated point set.
pub const MAX_EXPECTED_POINTS: f64 = 5e7;

/// Splittable stream identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream(splitmix64(seed))
    }

    pub fn child(self, id: u64) -> Self {
        RngStream(splitmix64(self.0 ^ splitmix64(id.wrapping_add(0x632b_e59b_d9b4_e019))))
    }

    pub fn key(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Radial weight `w(ρ)` of a rotation-invariant intensity `w(ρ) dρ dθ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadialDensity {
    /// `ρ`: planar Lebesgue measure.
    Homogeneous,
    /// `ρ⁻³`: image of exterior Lebesgue measure under inversion.
    Mu,
    /// `ρ⁻²`: image of the line-process intensity under inversion.
    Nu,
    /// `1`: polar-flat intensity of the line process.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialLaw {
    density: RadialDensity,
    lo: f64,
    hi: f64,
}

impl RadialLaw {
    pub fn new(density: RadialDensity, lo: f64, hi: f64) -> Result<Self, SamplerError> {
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(SamplerError::InvalidRange { lo, hi });
        }
        if matches!(density, RadialDensity::Mu | RadialDensity::Nu) && lo == 0.0 {
            return Err(SamplerError::NonIntegrable { lo, hi });
        }
        Ok(RadialLaw { density, lo, hi })
    }

    pub fn density(&self) -> RadialDensity {
        self.density
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// `∫ w(ρ) dρ` over the range.
    pub fn radial_mass(&self) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        match self.density {
            RadialDensity::Homogeneous => 0.5 * (hi * hi - lo * lo),
            RadialDensity::Mu => 0.5 * (lo.powi(-2) - hi.powi(-2)),
            RadialDensity::Nu => lo.recip() - hi.recip(),
            RadialDensity::Flat => hi - lo,
        }
    }

    /// Total mass `∫∫ w(ρ) dρ dθ` of the unit-scale intensity.
    pub fn total_mass(&self) -> f64 {
        2.0 * PI * self.radial_mass()
    }

    /// Closed-form inverse of the normalised radial CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = (self.lo, self.hi);
        match self.density {
            RadialDensity::Homogeneous => (lo * lo + u * (hi * hi - lo * lo)).sqrt(),
            RadialDensity::Mu => {
                let (a, b) = (lo.powi(-2), hi.powi(-2));
                (a - u * (a - b)).powf(-0.5)
            }
            RadialDensity::Nu => {
                let (a, b) = (lo.recip(), hi.recip());
                (a - u * (a - b)).recip()
            }
            RadialDensity::Flat => lo + u * (hi - lo),
        }
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng);
    draw as u64
}

/// Poisson process of intensity `t · w(ρ) dρ dθ` on the law's annulus.
pub fn sample_poisson_polar<R: Rng + ?Sized>(
    law: &RadialLaw,
    t: f64,
    rng: &mut R,
) -> Result<Vec<Point2>, SamplerError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SamplerError::InvalidIntensity(t));
    }
    let expected = t * law.total_mass();
    if expected > MAX_EXPECTED_POINTS {
        return Err(SamplerError::TooManyPoints(expected));
    }
    let n = poisson_count(expected, rng);
    Ok((0..n)
        .map(|_| {
            let rho = law.sample_radius(rng);
            let theta = rng.random::<f64>() * 2.0 * PI;
            Point2::from_polar(rho, theta)
        })
        .collect())
}

/// Lazily generated generator process outside the unit disk, emitted in
/// nondecreasing norm order after the tangent point `(1, 0)`.
///
/// Annuli `[1 + kδ, 1 + (k + 1)δ]` are drawn one at a time from the ring's
/// own child stream, so the realisation does not depend on how far a consumer
/// reads.
#[derive(Clone, Debug)]
pub struct GeneratorStream {
    density: RadialDensity,
    scale: f64,
    ring_width: f64,
    key: RngStream,
    next_ring: u64,
    emitted_x0: bool,
    buffer: VecDeque<Point2>,
    cap: f64,
}

impl GeneratorStream {
    fn new(density: RadialDensity, scale: f64, effective_t: f64, key: RngStream) -> Self {
        GeneratorStream {
            density,
            scale,
            ring_width: ring_width(effective_t),
            key,
            next_ring: 0,
            emitted_x0: false,
            buffer: VecDeque::new(),
            cap: SAFETY_CAP,
        }
    }

    pub fn ring_width(&self) -> f64 {
        self.ring_width
    }

    /// Outer radius of the rings generated so far.
    pub fn generated_radius(&self) -> f64 {
        (1.0 + self.next_ring as f64 * self.ring_width).min(self.cap)
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    fn fill_ring(&mut self) -> bool {
        let lo = 1.0 + self.next_ring as f64 * self.ring_width;
        if lo >= self.cap {
            return false;
        }
        let hi = (lo + self.ring_width).min(self.cap);
        let law = RadialLaw::new(self.density, lo, hi).expect("ring range is valid");
        let mut rng = self.key.child(self.next_ring).rng();
        self.next_ring += 1;
        let mut pts = sample_poisson_polar(&law, self.scale, &mut rng).expect("positive scale");
        pts.sort_by(|a, b| {
            a.norm()
                .total_cmp(&b.norm())
                .then(a.x.total_cmp(&b.x))
                .then(a.y.total_cmp(&b.y))
        });
        self.buffer.extend(pts);
        true
    }
}

impl Iterator for GeneratorStream {
    type Item = Point2;

    fn next(&mut self) -> Option<Point2> {
        if !self.emitted_x0 {
            self.emitted_x0 = true;
            return Some(Point2::X0);
        }
        while self.buffer.is_empty() {
            if !self.fill_ring() {
                return None;
            }
        }
        self.buffer.pop_front()
    }
}

/// `δ = min(0.05, t^(-1/3))`.
pub fn ring_width(t: f64) -> f64 {
    t.powf(-1.0 / 3.0).min(0.05)
}

/// Scaled generators of the Voronoi cell conditioned on inradius `r`:
/// Cartesian intensity `4r²` on the complement of the unit disk.
pub fn voronoi_generator_stream(r: f64, key: RngStream) -> Result<GeneratorStream, SamplerError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SamplerError::InvalidRadius(r));
    }
    let t = 4.0 * r * r;
    Ok(GeneratorStream::new(RadialDensity::Homogeneous, t, t, key))
}

/// Scaled line-process generators of the Crofton cell conditioned on inradius
/// `r`: polar intensity `r dρ dθ` on `ρ > 1`.
pub fn crofton_generator_stream(r: f64, key: RngStream) -> Result<GeneratorStream, SamplerError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SamplerError::InvalidRadius(r));
    }
    // boundary layer thickness is r^(-2/3) = (r²)^(-1/3)
    Ok(GeneratorStream::new(RadialDensity::Flat, r, r * r, key))
}

/// A point of the space-time process with its arrival time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkedPoint {
    pub rho: f64,
    pub theta: f64,
    pub mark: f64,
}

impl MarkedPoint {
    pub fn point(&self) -> Point2 {
        Point2::from_polar(self.rho, self.theta)
    }
}

/// Three processes on the annulus `𝔻 ∖ D(0, 1 − ε)` read off one marked
/// process: `x` (homogeneous, level `t`), `y` (intensity `t ρ⁻³`) and `x_up`
/// (homogeneous, level `t / (1 − ε)⁴`).
#[derive(Clone, Debug)]
pub struct CoupledTriple {
    pub marked: Vec<MarkedPoint>,
    pub x: Vec<Point2>,
    pub y: Vec<Point2>,
    pub x_up: Vec<Point2>,
}

impl CoupledTriple {
    /// Checks `x ⊆ y ⊆ x_up` as sets of points.
    pub fn inclusions_hold(&self) -> bool {
        use std::collections::HashSet;
        let key = |p: &Point2| (p.x.to_bits(), p.y.to_bits());
        let y: HashSet<_> = self.y.iter().map(key).collect();
        let up: HashSet<_> = self.x_up.iter().map(key).collect();
        self.x.iter().all(|p| y.contains(&key(p))) && self.y.iter().all(|p| up.contains(&key(p)))
    }
}

pub fn coupled_triple<R: Rng + ?Sized>(
    t: f64,
    eps: f64,
    rng: &mut R,
) -> Result<CoupledTriple, SamplerError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SamplerError::InvalidEpsilon(eps));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(SamplerError::InvalidIntensity(t));
    }
    let inner = 1.0 - eps;
    let horizon = t / inner.powi(4);
    let law = RadialLaw::new(RadialDensity::Homogeneous, inner, 1.0)?;
    let expected = law.total_mass() * horizon;
    if expected > MAX_EXPECTED_POINTS {
        return Err(SamplerError::TooManyPoints(expected));
    }
    let n = poisson_count(expected, rng);
    let marked: Vec<MarkedPoint> = (0..n)
        .map(|_| MarkedPoint {
            rho: law.sample_radius(rng),
            theta: rng.random::<f64>() * 2.0 * PI,
            mark: rng.random::<f64>() * horizon,
        })
        .collect();
    let select = |keep: &dyn Fn(&MarkedPoint) -> bool| {
        marked.iter().filter(|m| keep(m)).map(MarkedPoint::point).collect::<Vec<_>>()
    };
    let x = select(&|m| m.mark <= t);
    let y = select(&|m| m.mark <= t / m.rho.powi(4));
    let x_up = select(&|m| m.mark <= horizon);
    Ok(CoupledTriple { marked, x, y, x_up })
}

/// `E|Y| − E|X| = t (μ − Lebesgue)(annulus) = tπ(2ε − ε²)² / (1 − ε)²`.
pub fn coupling_gap_mean(t: f64, eps: f64) -> f64 {
    let w = 2.0 * eps - eps * eps;
    t * PI * w * w / (1.0 - eps).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Normalised CDF by composite Simpson quadrature of the density.
    fn cdf_by_quadrature(law: &RadialLaw, x: f64) -> f64 {
        let w = |rho: f64| match law.density() {
            RadialDensity::Homogeneous => rho,
            RadialDensity::Mu => rho.powi(-3),
            RadialDensity::Nu => rho.powi(-2),
            RadialDensity::Flat => 1.0,
        };
        let simpson = |a: f64, b: f64| {
            let n = 2000;
            let h = (b - a) / n as f64;
            let mut s = w(a) + w(b);
            for i in 1..n {
                s += w(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let (lo, hi) = law.range();
        simpson(lo, x) / simpson(lo, hi)
    }

    fn invert_by_bisection(law: &RadialLaw, u: f64) -> f64 {
        let (mut a, mut b) = law.range();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if cdf_by_quadrature(law, m) < u {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn quantiles_match_numerical_inversion() {
        let laws = [
            RadialLaw::new(RadialDensity::Mu, 0.3, 1.0).unwrap(),
            RadialLaw::new(RadialDensity::Mu, 0.9, 1.0).unwrap(),
            RadialLaw::new(RadialDensity::Nu, 0.5, 1.0).unwrap(),
            RadialLaw::new(RadialDensity::Homogeneous, 0.0, 1.0).unwrap(),
            RadialLaw::new(RadialDensity::Flat, 1.0, 1.5).unwrap(),
        ];
        for law in &laws {
            for u in [0.01, 0.25, 0.5, 0.77, 0.99] {
                let closed = law.quantile(u);
                let numeric = invert_by_bisection(law, u);
                assert!(
                    (closed - numeric).abs() < 1e-10,
                    "{law:?} u={u}: {closed} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn mu_quantile_formula() {
        let rmin: f64 = 0.4;
        let law = RadialLaw::new(RadialDensity::Mu, rmin, 1.0).unwrap();
        let u = 0.3;
        let expected = (rmin.powi(-2) - u * (rmin.powi(-2) - 1.0)).powf(-0.5);
        assert_relative_eq!(law.quantile(u), expected, max_relative = 1e-15);
    }

    #[test]
    fn masses() {
        let t = 7.0;
        let hom = RadialLaw::new(RadialDensity::Homogeneous, 0.0, 1.0).unwrap();
        assert_relative_eq!(t * hom.total_mass(), t * PI, max_relative = 1e-15);
        let mu = RadialLaw::new(RadialDensity::Mu, 0.5, 1.0).unwrap();
        assert_relative_eq!(t * mu.total_mass(), t * PI * (4.0 - 1.0), max_relative = 1e-15);
        let flat = RadialLaw::new(RadialDensity::Flat, 1.0, 1.5).unwrap();
        assert_relative_eq!(flat.total_mass(), PI, max_relative = 1e-15);
    }

    #[test]
    fn non_integrable_law_is_rejected() {
        assert!(matches!(
            RadialLaw::new(RadialDensity::Mu, 0.0, 1.0),
            Err(SamplerError::NonIntegrable { .. })
        ));
        assert!(matches!(
            RadialLaw::new(RadialDensity::Nu, 0.0, 1.0),
            Err(SamplerError::NonIntegrable { .. })
        ));
        assert!(RadialLaw::new(RadialDensity::Flat, 1.0, 1.0).is_err());
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn count_laws_match_intensity_mass() {
        let base = RngStream::new(11);
        let cases = [
            (RadialLaw::new(RadialDensity::Homogeneous, 0.0, 1.0).unwrap(), 20.0),
            (RadialLaw::new(RadialDensity::Mu, 0.6, 1.0).unwrap(), 5.0),
            (RadialLaw::new(RadialDensity::Nu, 0.5, 1.0).unwrap(), 3.0),
            (RadialLaw::new(RadialDensity::Flat, 1.0, 1.5).unwrap(), 4.0),
        ];
        for (ci, (law, t)) in cases.iter().enumerate() {
            let counts: Vec<f64> = (0..10_000)
                .map(|i| {
                    let mut rng = base.child(ci as u64).child(i).rng();
                    sample_poisson_polar(law, *t, &mut rng).unwrap().len() as f64
                })
                .collect();
            let (m, se) = mean_and_se(&counts);
            let expected = t * law.total_mass();
            assert!((m - expected).abs() < 4.0 * se, "{law:?}: {m} vs {expected} (se {se})");
        }
    }

    #[test]
    fn angles_are_uniform() {
        let law = RadialLaw::new(RadialDensity::Mu, 0.5, 1.0).unwrap();
        let mut rng = RngStream::new(5).rng();
        let mut pts = Vec::new();
        while pts.len() < 10_000 {
            pts.extend(sample_poisson_polar(&law, 100.0, &mut rng).unwrap());
        }
        let mut bins = [0usize; 36];
        for p in &pts {
            bins[((p.angle() / (2.0 * PI) * 36.0) as usize).min(35)] += 1;
        }
        let e = pts.len() as f64 / 36.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // χ²₃₅ upper 0.001 quantile
        assert!(chi2 < 66.62, "chi2 = {chi2}");
    }

    #[test]
    fn voronoi_stream_shape() {
        let r = 3.0;
        let mut s = voronoi_generator_stream(r, RngStream::new(1)).unwrap();
        assert_eq!(s.next(), Some(Point2::X0));
        let pts: Vec<Point2> = s.take_while(|p| p.norm() < 1.5).collect();
        assert!(pts.windows(2).all(|w| w[0].norm() <= w[1].norm()));
        assert!(pts.iter().all(|p| p.norm() >= 1.0));
        assert!(voronoi_generator_stream(0.0, RngStream::new(1)).is_err());
        assert!(crofton_generator_stream(-1.0, RngStream::new(1)).is_err());
    }

    #[test]
    fn stream_counts_in_annulus() {
        // Voronoi: 4r²π(1.1² − 1); Crofton: r·2π·0.5
        let r = 4.0;
        let base = RngStream::new(99);
        let n = 4000;
        let count = |mk: &dyn Fn(RngStream) -> GeneratorStream, hi: f64| -> Vec<f64> {
            (0..n)
                .map(|i| mk(base.child(i)).skip(1).take_while(|p| p.norm() < hi).count() as f64)
                .collect()
        };
        let vor = count(&|k| voronoi_generator_stream(r, k).unwrap(), 1.1);
        let (m, se) = mean_and_se(&vor);
        assert!((m - 0.84 * PI * r * r).abs() < 4.0 * se);
        let cro = count(&|k| crofton_generator_stream(r, k).unwrap(), 1.5);
        let (m, se) = mean_and_se(&cro);
        assert!((m - PI * r).abs() < 4.0 * se);
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<Point2> = voronoi_generator_stream(5.0, RngStream::new(3)).unwrap().take(500).collect();
        let b: Vec<Point2> = voronoi_generator_stream(5.0, RngStream::new(3)).unwrap().take(500).collect();
        assert_eq!(a, b);
        let c: Vec<Point2> = voronoi_generator_stream(5.0, RngStream::new(4)).unwrap().take(500).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn stream_stops_at_cap() {
        let s = crofton_generator_stream(0.5, RngStream::new(2)).unwrap();
        let last = s.last().unwrap();
        assert!(last.norm() <= SAFETY_CAP);
    }

    #[test]
    fn coupling_inclusions_and_gap() {
        let (t, eps) = (500.0, 0.1);
        let base = RngStream::new(17);
        let mut gaps = Vec::new();
        for i in 0..3000 {
            let tri = coupled_triple(t, eps, &mut base.child(i).rng()).unwrap();
            assert!(tri.inclusions_hold());
            assert!(tri.x.len() <= tri.y.len() && tri.y.len() <= tri.x_up.len());
            gaps.push(tri.y.len() as f64 - tri.x.len() as f64);
        }
        let (m, se) = mean_and_se(&gaps);
        assert!((m - coupling_gap_mean(t, eps)).abs() < 4.0 * se);
        assert!(coupled_triple(t, 1.0, &mut base.rng()).is_err());
        assert!(coupled_triple(t, 0.0, &mut base.rng()).is_err());
        let tri = coupled_triple(1e-9, 0.999, &mut base.rng()).unwrap();
        assert!(tri.inclusions_hold());
        assert!(matches!(
            coupled_triple(t, 0.999, &mut base.rng()),
            Err(SamplerError::TooManyPoints(_))
        ));
    }

    #[test]
    fn coupling_gap_matches_measure_difference() {
        let (t, eps) = (1000.0_f64, 0.05_f64);
        let inner = 1.0 - eps;
        let mu = RadialLaw::new(RadialDensity::Mu, inner, 1.0).unwrap().total_mass();
        let leb = PI * (1.0 - inner * inner);
        assert_relative_eq!(coupling_gap_mean(t, eps), t * (mu - leb), max_relative = 1e-12);
    }
}
