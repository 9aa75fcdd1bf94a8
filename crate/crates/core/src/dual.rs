//! Executable forms of the inversion dualities.
//!
//! Under `p ↦ p/‖p‖²` a generator `x` outside the unit disk becomes a germ `y`
//! inside it, the line `L(x)` becomes the boundary circle of the grain
//! `G(y) = D(y/2, ‖y‖/2)`, and the part of the cell outside the unit disk
//! becomes the part of the disk covered by no grain. The functions here compute
//! each side of those identities through an independent route so the two can be
//! compared replicate by replicate.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::geom::{
    circumradius, convex_hull, halfplane_of, intersect_halfplanes, invert, ConvexPolygon,
    GeomError, HalfPlane, Intersection, Point2, EPS,
};
use crate::sampler::{RadialDensity, RadialLaw};

/// Relative tolerance used to flag near-degenerate realizations.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("germ {0} is outside the closed unit disk")]
    GermOutsideDisk(Point2),
    #[error("coverage radius must lie in (0, 1), got {0}")]
    InvalidRadius(f64),
    #[error("the dual cell is unbounded; the defect measure is infinite")]
    UnboundedDefect,
    #[error("the generators do not bound a cell")]
    UnboundedCell,
    #[error("at least 1000 Monte Carlo samples are required, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Germs in the closed unit disk plus the deterministic grain at `(1, 0)`.
#[derive(Clone, Debug)]
pub struct GrainModel {
    germs: Vec<Point2>,
    // (angle, germ) sorted by angle, x0 included
    by_angle: Vec<(f64, Point2)>,
}

impl GrainModel {
    pub fn new(germs: Vec<Point2>) -> Result<Self, DualError> {
        for &g in &germs {
            if !g.is_finite() || g.norm_sq() == 0.0 {
                return Err(GeomError::ZeroPoint.into());
            }
            if g.norm() > 1.0 + EPS {
                return Err(DualError::GermOutsideDisk(g));
            }
        }
        let mut by_angle: Vec<(f64, Point2)> = germs
            .iter()
            .chain(std::iter::once(&Point2::X0))
            .map(|&g| (g.angle(), g))
            .collect();
        by_angle.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(GrainModel { germs, by_angle })
    }

    /// Germs of the inverted generators. `(1, 0)` is a fixed point of the
    /// inversion and is kept only as the deterministic grain.
    pub fn from_generators(generators: &[Point2]) -> Result<Self, DualError> {
        let germs = generators
            .iter()
            .filter(|&&g| g != Point2::X0)
            .map(|&g| invert(g))
            .collect::<Result<Vec<_>, _>>()?;
        GrainModel::new(germs)
    }

    pub fn germs(&self) -> &[Point2] {
        &self.germs
    }

    /// `y ∈ G(g)  ⇔  ‖y‖² ≤ ⟨y, g⟩`, checked over every grain whose germ is
    /// within angular distance `acos(‖y‖)` of `y`; other grains cannot reach.
    pub fn covers(&self, y: Point2) -> bool {
        let rho = y.norm();
        if rho == 0.0 {
            return true;
        }
        if rho > 1.0 {
            return false;
        }
        let window = rho.acos() + 1e-9;
        let r2 = rho * rho;
        let hit = |&(_, g): &(f64, Point2)| r2 <= y.dot(g);
        if window >= PI {
            return self.by_angle.iter().any(hit);
        }
        let phi = y.angle();
        let (lo, hi) = (phi - window, phi + window);
        let tau = 2.0 * PI;
        let ranges = if lo < 0.0 {
            [(0.0, hi), (lo + tau, tau)]
        } else if hi >= tau {
            [(lo, tau), (0.0, hi - tau)]
        } else {
            [(lo, hi), (0.0, -1.0)]
        };
        ranges.iter().any(|&(a, b)| {
            let start = self.by_angle.partition_point(|&(t, _)| t < a);
            self.by_angle[start..]
                .iter()
                .take_while(|&&(t, _)| t <= b)
                .any(hit)
        })
    }

    /// Half-planes of the generators `I(g)` and of `(1, 0)`.
    fn dual_halfplanes(&self) -> Vec<HalfPlane> {
        self.germs
            .iter()
            .chain(std::iter::once(&Point2::X0))
            .map(|&g| halfplane_of(invert(g).expect("germs are nonzero")).expect("nonzero"))
            .collect()
    }

    /// Zero cell of the inverted germs.
    pub fn dual_cell(&self) -> Intersection {
        intersect_halfplanes(&self.dual_halfplanes())
    }
}

/// Outcome of [`vertices_equal_extremes`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualityOutcome {
    Counted { n_cell: usize, n_hull: usize },
    /// Three lines within tolerance of a common point (equivalently, a sample
    /// point within tolerance of a hull edge); skipped.
    Degenerate,
}

impl DualityOutcome {
    pub fn is_match(&self) -> bool {
        matches!(self, DualityOutcome::Counted { n_cell, n_hull } if n_cell == n_hull)
    }
}

fn cell_is_degenerate(cell: &ConvexPolygon, hs: &[HalfPlane]) -> bool {
    let anchors = cell.edge_anchors().unwrap_or(&[]);
    let scale = circumradius(cell);
    hs.iter().any(|h| {
        !anchors.contains(&h.anchor())
            && cell
                .vertices()
                .iter()
                .any(|&v| h.signed_distance(v).abs() <= DEGENERACY_TOL * scale)
    }) || cell.edges().any(|(a, b)| (b - a).norm() <= DEGENERACY_TOL * scale)
}

fn hull_is_degenerate(hull: &ConvexPolygon, points: &[Point2]) -> bool {
    points.iter().any(|&p| {
        !hull.vertices().contains(&p)
            && hull.edges().any(|(a, b)| {
                let d = b - a;
                let len = d.norm();
                let u = (p - a).dot(d) / (len * len);
                (-DEGENERACY_TOL..=1.0 + DEGENERACY_TOL).contains(&u)
                    && (d.cross(p - a) / len).abs() <= DEGENERACY_TOL
            })
    })
}

/// Vertex count of `⋂ H(x)` against the extreme-point count of the hull of
/// the inverted generators. `(1, 0)` is added if absent.
pub fn vertices_equal_extremes(generators: &[Point2]) -> Result<DualityOutcome, DualError> {
    let mut gens = generators.to_vec();
    if !gens.contains(&Point2::X0) {
        gens.push(Point2::X0);
    }
    let hs = gens
        .iter()
        .map(|&g| halfplane_of(g))
        .collect::<Result<Vec<_>, _>>()?;
    let Intersection::Bounded(cell) = intersect_halfplanes(&hs) else {
        return Err(DualError::UnboundedCell);
    };
    let germs = gens.iter().map(|&g| invert(g)).collect::<Result<Vec<_>, _>>()?;
    let hull = match convex_hull(&germs) {
        Ok(h) => h,
        Err(GeomError::Degenerate(_)) => return Ok(DualityOutcome::Degenerate),
        Err(e) => return Err(e.into()),
    };
    if cell_is_degenerate(&cell, &hs) || hull_is_degenerate(&hull, &germs) {
        return Ok(DualityOutcome::Degenerate);
    }
    Ok(DualityOutcome::Counted {
        n_cell: cell.vertex_count(),
        n_hull: hull.vertex_count(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Inner radius of the sampled annulus.
    pub rho_min: f64,
    pub samples: usize,
}

/// Sample budget `max(10⁴, 100 · germs)`.
pub fn default_defect_samples(model: &GrainModel) -> usize {
    (100 * (model.germs().len() + 1)).max(10_000)
}

/// Monte Carlo estimate of `μ(𝔻 ∖ ⋃ G)` with `μ = ρ⁻³ dρ dθ`.
///
/// Samples are drawn from `μ` restricted to the annulus `(1/R, 1)`, where `R`
/// is the circumradius of the dual cell; every uncovered point lies there.
pub fn defect_measure_mc<R: Rng + ?Sized>(
    model: &GrainModel,
    n_mc: usize,
    rng: &mut R,
) -> Result<DefectEstimate, DualError> {
    if n_mc < 1000 {
        return Err(DualError::TooFewSamples(n_mc));
    }
    let Intersection::Bounded(cell) = model.dual_cell() else {
        return Err(DualError::UnboundedDefect);
    };
    let rho_min = circumradius(&cell).recip();
    if rho_min >= 1.0 {
        return Ok(DefectEstimate {
            estimate: 0.0,
            std_error: 0.0,
            rho_min,
            samples: 0,
        });
    }
    let law = RadialLaw::new(RadialDensity::Mu, rho_min, 1.0).expect("rho_min in (0, 1)");
    let mass = law.total_mass();
    let mut uncovered = 0usize;
    for _ in 0..n_mc {
        let rho = law.sample_radius(rng);
        let theta = rng.random::<f64>() * 2.0 * PI;
        if !model.covers(Point2::from_polar(rho, theta)) {
            uncovered += 1;
        }
    }
    let p = uncovered as f64 / n_mc as f64;
    Ok(DefectEstimate {
        estimate: mass * p,
        std_error: mass * (p * (1.0 - p) / n_mc as f64).sqrt(),
        rho_min,
        samples: n_mc,
    })
}

/// Relative slack on `circumradius · s ≤ 1`, absorbing rounding in `1/s`.
const COVER_TOL: f64 = 1e-12;

/// Whether `D(0, s)` lies inside the grain union, decided exactly through the
/// dual cell: covered iff the cell fits in `D(0, 1/s)`.
pub fn grain_union_covers(model: &GrainModel, s: f64) -> Result<bool, DualError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(DualError::InvalidRadius(s));
    }
    Ok(match model.dual_cell() {
        Intersection::Bounded(cell) => circumradius(&cell) * s <= 1.0 + COVER_TOL,
        Intersection::Unbounded => false,
    })
}

/// Slow direct check of the same property on `n` equally spaced points of the
/// circle of radius `s`. The grain union is star-shaped about the origin, so
/// covering the circle covers the disk. Meant as a test oracle.
pub fn grain_union_covers_sampled(model: &GrainModel, s: f64, n: usize) -> bool {
    (0..n).all(|k| {
        let y = Point2::from_polar(s, 2.0 * PI * k as f64 / n as f64);
        let r2 = y.norm_sq();
        model
            .germs()
            .iter()
            .chain(std::iter::once(&Point2::X0))
            .any(|&g| r2 <= y.dot(g))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{conditioned_cell, Model};
    use crate::geom::polygon_minus_disk_area;
    use crate::sampler::RngStream;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn square_generators(norm: f64) -> Vec<Point2> {
        vec![
            Point2::X0,
            Point2::new(0.0, norm),
            Point2::new(-norm, 0.0),
            Point2::new(0.0, -norm),
        ]
    }

    #[test]
    fn square_counts() {
        let out = vertices_equal_extremes(&square_generators(1.0 + 1e-9)).unwrap();
        assert_eq!(out, DualityOutcome::Counted { n_cell: 4, n_hull: 4 });
    }

    #[test]
    fn hidden_generator_changes_neither_count() {
        let mut g = square_generators(1.0 + 1e-9);
        g.push(Point2::from_polar(3.0, 0.3));
        let out = vertices_equal_extremes(&g).unwrap();
        assert_eq!(out, DualityOutcome::Counted { n_cell: 4, n_hull: 4 });
    }

    #[test]
    fn concurrent_lines_are_flagged() {
        let mut g = square_generators(1.0);
        // L((1, 1)) touches the square only at the corner (1, 1); dually the
        // germ (½, ½) sits on the hull edge between (1, 0) and (0, 1)
        g.push(Point2::new(1.0, 1.0));
        assert_eq!(vertices_equal_extremes(&g).unwrap(), DualityOutcome::Degenerate);
    }

    #[test]
    fn vertex_counts_match_hull_on_random_cells() {
        let base = RngStream::new(55);
        for i in 0..100 {
            let cell = conditioned_cell(Model::Voronoi, 5.0, base.child(i)).unwrap();
            match vertices_equal_extremes(&cell.generators).unwrap() {
                DualityOutcome::Counted { n_cell, n_hull } => {
                    assert_eq!(n_cell, n_hull, "replicate {i}");
                    assert_eq!(n_cell, cell.polygon.vertex_count());
                }
                DualityOutcome::Degenerate => panic!("unexpected degeneracy in replicate {i}"),
            }
        }
    }

    #[test]
    fn annulus_mu_mass() {
        let eps: f64 = 0.2;
        let law = RadialLaw::new(RadialDensity::Mu, 1.0 - eps, 1.0).unwrap();
        assert_relative_eq!(law.total_mass(), PI * ((1.0 - eps).powi(-2) - 1.0), max_relative = 1e-14);
    }

    #[test]
    fn lone_tangent_grain_defect_is_infinite_and_never_covers() {
        let model = GrainModel::new(vec![]).unwrap();
        assert_eq!(
            defect_measure_mc(&model, 10_000, &mut RngStream::new(1).rng()),
            Err(DualError::UnboundedDefect)
        );
        for s in [1e-6, 0.3, 0.99] {
            assert!(!grain_union_covers(&model, s).unwrap());
        }
    }

    #[test]
    fn triangle_defect_matches_closed_form() {
        // Three generators at norm 1 spaced by 2π/3: the cell is an equilateral
        // triangle with inradius 1. Oracle: triangle area minus the unit disk,
        // 3√3 − π.
        let gens: Vec<Point2> = (0..3).map(|k| Point2::from_polar(1.0, 2.0 * PI * k as f64 / 3.0)).collect();
        let model = GrainModel::from_generators(&gens).unwrap();
        let est = defect_measure_mc(&model, 200_000, &mut RngStream::new(3).rng()).unwrap();
        let exact = 3.0 * 3f64.sqrt() - PI;
        assert!((est.estimate - exact).abs() < 4.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn square_defect_is_four_minus_pi() {
        let model = GrainModel::from_generators(&square_generators(1.0)).unwrap();
        let est = defect_measure_mc(&model, 100_000, &mut RngStream::new(4).rng()).unwrap();
        assert!((est.estimate - (4.0 - PI)).abs() < 4.0 * est.std_error);
        assert_relative_eq!(est.rho_min, FRAC_1_SQRT_2, max_relative = 1e-12);
    }

    #[test]
    fn defect_of_random_cell_matches_exact_area() {
        let base = RngStream::new(77);
        let mut within = 0;
        let n = 40;
        for i in 0..n {
            let cell = conditioned_cell(Model::Voronoi, 3.0, base.child(i)).unwrap();
            let model = GrainModel::from_generators(&cell.generators).unwrap();
            let est = defect_measure_mc(&model, 20_000, &mut base.child(1000 + i).rng()).unwrap();
            let exact = polygon_minus_disk_area(&cell.polygon, 1.0).unwrap();
            if (est.estimate - exact).abs() <= 4.0 * est.std_error {
                within += 1;
            }
        }
        assert!(within >= n - 1, "{within}/{n}");
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let model = GrainModel::from_generators(&square_generators(1.0)).unwrap();
        assert_eq!(
            defect_measure_mc(&model, 10, &mut RngStream::new(1).rng()),
            Err(DualError::TooFewSamples(10))
        );
    }

    #[test]
    fn square_coverage_threshold() {
        let model = GrainModel::from_generators(&square_generators(1.0)).unwrap();
        assert!(grain_union_covers(&model, FRAC_1_SQRT_2).unwrap());
        assert!(!grain_union_covers(&model, FRAC_1_SQRT_2 + 1e-6).unwrap());
        assert!(grain_union_covers(&model, 0.0).is_err());
        assert!(grain_union_covers(&model, 1.0).is_err());
    }

    #[test]
    fn exact_cover_agrees_with_boundary_sampling() {
        let base = RngStream::new(31);
        for i in 0..20 {
            let cell = conditioned_cell(Model::Voronoi, 2.0, base.child(i)).unwrap();
            let model = GrainModel::from_generators(&cell.generators).unwrap();
            let critical = circumradius(&cell.polygon).recip();
            // away from the critical radius the two routes must agree
            for s in [critical * 0.98, critical * 1.02] {
                if s <= 0.0 || s >= 1.0 {
                    continue;
                }
                assert_eq!(
                    grain_union_covers(&model, s).unwrap(),
                    grain_union_covers_sampled(&model, s, 10_000),
                    "replicate {i}, s = {s}"
                );
            }
        }
    }

    #[test]
    fn windowed_cover_agrees_with_scan() {
        let base = RngStream::new(12);
        let cell = conditioned_cell(Model::Voronoi, 4.0, base).unwrap();
        let model = GrainModel::from_generators(&cell.generators).unwrap();
        let mut rng = base.child(1).rng();
        for _ in 0..20_000 {
            let y = Point2::from_polar(rng.random::<f64>().sqrt(), rng.random::<f64>() * 2.0 * PI);
            let scan = model
                .germs()
                .iter()
                .chain(std::iter::once(&Point2::X0))
                .any(|&g| y.norm_sq() <= y.dot(g));
            assert_eq!(model.covers(y), scan, "{y}");
        }
    }

    #[test]
    fn germs_must_lie_in_the_disk() {
        assert!(matches!(
            GrainModel::new(vec![Point2::new(1.5, 0.0)]),
            Err(DualError::GermOutsideDisk(_))
        ));
    }
}
