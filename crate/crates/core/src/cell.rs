//! The scaled zero cell and its per-replicate observables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    circumradius, halfplane_of, intersect_halfplanes, polygon_minus_disk_area, ConvexPolygon,
    HalfPlane, Intersection, Point2,
};
use crate::sampler::{
    crofton_generator_stream, voronoi_generator_stream, RngStream, SamplerError,
};

/// Alpha grid for the escape events when none is configured.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.4, 0.5, 0.6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("empty generator stream")]
    EmptyStream,
    #[error("stream must start with the tangent generator (1, 0), got {0}")]
    MissingTangent(Point2),
    #[error(
        "cell not certified before the safety cap: bounded={bounded}, consumed={consumed}, \
         last norm={last_norm}"
    )]
    UnboundedCell {
        bounded: bool,
        consumed: usize,
        last_norm: f64,
    },
    #[error("tangent half-plane is not an edge of the cell")]
    InactiveTangent,
    #[error("generator at the origin")]
    ZeroGenerator,
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Voronoi,
    Crofton,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Voronoi => "voronoi",
            Model::Crofton => "crofton",
        }
    }

    pub(crate) fn stream_id(self) -> u64 {
        match self {
            Model::Voronoi => 1,
            Model::Crofton => 2,
        }
    }

    /// Intensity level of the inverted process: `4r²` for Voronoi, `r` for
    /// Crofton.
    pub fn intensity_level(self, r: f64) -> f64 {
        match self {
            Model::Voronoi => 4.0 * r * r,
            Model::Crofton => r,
        }
    }

    /// Growth exponent of the vertex count and of the log-tail normaliser.
    pub fn count_exponent(self) -> f64 {
        match self {
            Model::Voronoi => 2.0 / 3.0,
            Model::Crofton => 1.0 / 3.0,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "voronoi" => Ok(Model::Voronoi),
            "crofton" => Ok(Model::Crofton),
            other => Err(format!("unknown model '{other}'")),
        }
    }
}

/// Zero cell together with the generators that were read to certify it.
#[derive(Clone, Debug)]
pub struct BuiltCell {
    pub polygon: ConvexPolygon,
    /// Generators consumed, `(1, 0)` first, in stream order.
    pub generators: Vec<Point2>,
}

impl BuiltCell {
    pub fn generators_consumed(&self) -> usize {
        self.generators.len()
    }
}

/// Intersects `H(x)` over a norm-ordered stream that starts with `(1, 0)`.
///
/// Once the running intersection is bounded, the first generator with norm
/// beyond the current circumradius ends the construction: its line, and the
/// line of every later generator, misses the disk containing the cell.
pub fn build_zero_cell<I>(stream: I) -> Result<BuiltCell, CellError>
where
    I: IntoIterator<Item = Point2>,
{
    let mut stream = stream.into_iter();
    let first = stream.next().ok_or(CellError::EmptyStream)?;
    if first != Point2::X0 {
        return Err(CellError::MissingTangent(first));
    }
    let mut generators = vec![first];
    let mut halfplanes: Vec<HalfPlane> = vec![halfplane_of(first).expect("nonzero")];
    let mut last_norm = 1.0;

    // Unbounded phase: accumulate until the normals span the circle.
    let mut polygon = loop {
        let Some(p) = stream.next() else {
            return Err(CellError::UnboundedCell {
                bounded: false,
                consumed: generators.len(),
                last_norm,
            });
        };
        last_norm = p.norm();
        halfplanes.push(halfplane_of(p).map_err(|_| CellError::ZeroGenerator)?);
        generators.push(p);
        if halfplanes.len() >= 3 {
            if let Intersection::Bounded(poly) = intersect_halfplanes(&halfplanes) {
                break poly;
            }
        }
    };

    let mut radius = circumradius(&polygon);
    loop {
        let Some(p) = stream.next() else {
            return Err(CellError::UnboundedCell {
                bounded: true,
                consumed: generators.len(),
                last_norm,
            });
        };
        last_norm = p.norm();
        if last_norm > radius {
            break;
        }
        let hp = halfplane_of(p).map_err(|_| CellError::ZeroGenerator)?;
        generators.push(p);
        if polygon.clip(&hp) {
            radius = circumradius(&polygon);
        }
    }

    let tangent_active = polygon
        .edge_anchors()
        .is_some_and(|anchors| anchors.contains(&Point2::X0));
    if !tangent_active {
        return Err(CellError::InactiveTangent);
    }
    Ok(BuiltCell {
        polygon,
        generators,
    })
}

/// Builds the conditioned cell of `model` at inradius `r` from the stream
/// keyed by `key`.
pub fn conditioned_cell(model: Model, r: f64, key: RngStream) -> Result<BuiltCell, CellError> {
    match model {
        Model::Voronoi => build_zero_cell(voronoi_generator_stream(r, key)?),
        Model::Crofton => build_zero_cell(crofton_generator_stream(r, key)?),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeFlag {
    pub alpha: f64,
    pub escaped: bool,
}

/// Per-replicate observables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: Model,
    pub r: f64,
    pub replicate: u64,
    /// Stream key of the replicate.
    pub seed: u64,
    pub n_vertices: usize,
    pub area_outside_scaled: f64,
    pub area_outside_physical: f64,
    pub circumradius_scaled: f64,
    pub generators_consumed: usize,
    pub a_event_flags: Vec<EscapeFlag>,
}

/// Radius `(1 − 2^{3α} t^{−α})^{−1}` the scaled cell must exceed for the
/// escape event at level `t`; `None` when the shrunken disk is empty, in which
/// case the event cannot occur.
pub fn escape_threshold(t: f64, alpha: f64) -> Option<f64> {
    let shrunk = 1.0 - 2f64.powf(3.0 * alpha) * t.powf(-alpha);
    (shrunk > 0.0).then(|| shrunk.recip())
}

/// Escape event for a cell of scaled circumradius `circumradius` at level
/// `model.intensity_level(r)`.
///
/// For Voronoi this is the dual form of "the shrunken disk is not covered by
/// the grains". Crofton uses the same formula with level `r`; it is a
/// diagnostic only.
pub fn escape_event(model: Model, r: f64, alpha: f64, circumradius: f64) -> bool {
    escape_threshold(model.intensity_level(r), alpha).is_some_and(|th| circumradius > th)
}

pub fn measure_cell(poly: &ConvexPolygon, model: Model, r: f64, alphas: &[f64]) -> CellRecord {
    let area_outside_scaled = polygon_minus_disk_area(poly, 1.0).expect("unit radius");
    let circumradius_scaled = circumradius(poly);
    CellRecord {
        model,
        r,
        replicate: 0,
        seed: 0,
        n_vertices: poly.vertex_count(),
        area_outside_scaled,
        area_outside_physical: r * r * area_outside_scaled,
        circumradius_scaled,
        generators_consumed: 0,
        a_event_flags: alphas
            .iter()
            .map(|&alpha| EscapeFlag {
                alpha,
                escaped: escape_event(model, r, alpha, circumradius_scaled),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::EPS;
    use crate::sampler::GeneratorStream;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn square_stream() -> Vec<Point2> {
        vec![
            Point2::X0,
            Point2::new(0.0, 1.0),
            Point2::new(-1.0, 0.0),
            Point2::new(0.0, -1.0),
            Point2::new(10.0, 0.0),
            Point2::new(11.0, 0.0),
        ]
    }

    #[test]
    fn square_cell_stops_at_far_point() {
        let cell = build_zero_cell(square_stream()).unwrap();
        assert_eq!(cell.polygon.vertex_count(), 4);
        assert_relative_eq!(cell.polygon.area(), 4.0, epsilon = 1e-12);
        assert_eq!(cell.generators_consumed(), 4);
        assert!(!cell.generators.contains(&Point2::new(10.0, 0.0)));
    }

    #[test]
    fn corner_cut_adds_one_vertex() {
        let mut s = square_stream();
        let corner = Point2::from_polar(1.3, PI / 4.0);
        s.insert(4, corner);
        let cell = build_zero_cell(s).unwrap();
        assert_eq!(cell.polygon.vertex_count(), 5);
        assert_eq!(cell.generators_consumed(), 5);
    }

    #[test]
    fn stream_preconditions() {
        assert_eq!(build_zero_cell(Vec::new()).unwrap_err(), CellError::EmptyStream);
        assert!(matches!(
            build_zero_cell(vec![Point2::new(0.0, 1.0)]),
            Err(CellError::MissingTangent(_))
        ));
        assert!(matches!(
            build_zero_cell(vec![Point2::X0, Point2::new(0.0, 1.0)]),
            Err(CellError::UnboundedCell { bounded: false, .. })
        ));
        // bounded but the stream ends before certification
        assert!(matches!(
            build_zero_cell(square_stream().into_iter().take(4)),
            Err(CellError::UnboundedCell { bounded: true, .. })
        ));
    }

    #[test]
    fn square_measurements() {
        let cell = build_zero_cell(square_stream()).unwrap();
        let rec = measure_cell(&cell.polygon, Model::Voronoi, 10.0, &[0.5]);
        assert_eq!(rec.n_vertices, 4);
        assert_relative_eq!(rec.area_outside_scaled, 4.0 - PI, epsilon = 1e-12);
        assert_relative_eq!(rec.circumradius_scaled, SQRT_2, epsilon = 1e-15);
        // threshold at t = 400, α = 0.5 is 1/(1 − √8/20) ≈ 1.165 < √2
        assert!(rec.a_event_flags[0].escaped);
        // a threshold above √2 leaves the square inside
        let th = escape_threshold(400.0, 0.2).unwrap();
        assert!(th > SQRT_2);
        let rec = measure_cell(&cell.polygon, Model::Voronoi, 10.0, &[0.2]);
        assert!(!rec.a_event_flags[0].escaped);
    }

    #[test]
    fn physical_area_scaling() {
        // V = r² · scaled area
        let cell = build_zero_cell(square_stream()).unwrap();
        let rec = measure_cell(&cell.polygon, Model::Crofton, 10.0, &[]);
        assert_relative_eq!(rec.area_outside_physical, 100.0 * (4.0 - PI), epsilon = 1e-10);
    }

    #[test]
    fn empty_shrunken_disk_never_escapes() {
        assert_eq!(escape_threshold(4.0, 0.6), None);
        assert!(!escape_event(Model::Voronoi, 1.0, 0.6, 100.0));
    }

    fn full_intersection_through(stream: GeneratorStream, norm: f64) -> ConvexPolygon {
        let hs: Vec<_> = stream
            .take_while(|p| p.norm() <= norm)
            .map(|p| halfplane_of(p).unwrap())
            .collect();
        intersect_halfplanes(&hs).bounded().unwrap()
    }

    #[test]
    fn termination_rule_is_sound() {
        let base = RngStream::new(2024);
        for (i, (model, r)) in [(Model::Voronoi, 3.0), (Model::Voronoi, 12.0), (Model::Crofton, 20.0)]
            .into_iter()
            .cycle()
            .take(120)
            .enumerate()
        {
            let key = base.child(i as u64);
            let cell = conditioned_cell(model, r, key).unwrap();
            let mk = || match model {
                Model::Voronoi => voronoi_generator_stream(r, key).unwrap(),
                Model::Crofton => crofton_generator_stream(r, key).unwrap(),
            };
            let extra = cell.polygon.circumradius() + 3.0 * mk().ring_width();
            let full = full_intersection_through(mk(), extra);
            assert_eq!(full.vertex_count(), cell.polygon.vertex_count(), "replicate {i}");
            for v in cell.polygon.vertices() {
                assert!(full.vertices().iter().any(|w| (*v - *w).norm() < 1e-9));
            }
        }
    }

    #[test]
    fn cell_contains_unit_disk_and_tangent_is_active() {
        let base = RngStream::new(7);
        for i in 0..50 {
            let cell = conditioned_cell(Model::Voronoi, 5.0, base.child(i)).unwrap();
            let inr = cell.polygon.inradius_about_origin();
            assert!((inr - 1.0).abs() < 1e-9, "inradius {inr}");
            assert!(cell.polygon.vertices().iter().all(|v| v.norm() >= 1.0 - 1e-9));
        }
    }

    #[test]
    fn extra_halfplane_never_grows_the_cell() {
        let base = RngStream::new(8);
        for i in 0..50 {
            let cell = conditioned_cell(Model::Voronoi, 4.0, base.child(i)).unwrap();
            let mut poly = cell.polygon.clone();
            let extra = Point2::from_polar(1.0 + 0.5 * (i as f64 / 50.0), i as f64);
            poly.clip(&halfplane_of(extra).unwrap());
            assert!(poly.area() <= cell.polygon.area() + EPS);
            assert!(poly.circumradius() <= cell.polygon.circumradius() + EPS);
        }
    }

    #[test]
    fn model_round_trips_through_str() {
        for m in [Model::Voronoi, Model::Crofton] {
            assert_eq!(m.as_str().parse::<Model>().unwrap(), m);
        }
        assert!("delaunay".parse::<Model>().is_err());
    }
}
