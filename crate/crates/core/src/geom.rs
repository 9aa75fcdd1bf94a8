//! Planar geometry in the unit-indisk frame.
//!
//! Everything here is pure and floating point. Degenerate configurations
//! (coincident points, three concurrent lines) have probability zero under the
//! sampling laws used by the rest of the crate; where a tie has to be broken the
//! rule is lexicographic on `(x, y)` and distances below [`EPS`] (scaled by the
//! local coordinate magnitude) are treated as zero.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Relative tolerance for collinearity and coincidence tests.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("operation undefined at the origin")]
    ZeroPoint,
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };
    /// The deterministic tangent generator `(1, 0)`.
    pub const X0: Point2 = Point2 { x: 1.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn from_polar(rho: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Point2::new(rho * c, rho * s)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3d cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Polar angle in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        let a = self.y.atan2(self.x);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn lex_cmp(&self, other: &Point2) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Inversion in the unit circle, `p ↦ p / ‖p‖²`.
pub fn invert(p: Point2) -> Result<Point2, GeomError> {
    if !p.is_finite() {
        return Err(GeomError::NonFinite);
    }
    let n2 = p.norm_sq();
    if n2 == 0.0 {
        return Err(GeomError::ZeroPoint);
    }
    Ok(p * (1.0 / n2))
}

/// Closed half-plane `{y : ⟨y − a, a⟩ ≤ 0}` bounded by the line through the
/// anchor `a` perpendicular to `a`. It always contains the origin strictly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    anchor: Point2,
}

impl HalfPlane {
    pub fn anchor(&self) -> Point2 {
        self.anchor
    }

    /// Distance of the boundary line from the origin.
    pub fn offset(&self) -> f64 {
        self.anchor.norm()
    }

    /// Unit outward normal.
    pub fn normal(&self) -> Point2 {
        self.anchor * (1.0 / self.offset())
    }

    /// `⟨p, a⟩ − ‖a‖²`; nonpositive inside. Not normalised.
    fn raw_side(&self, p: Point2) -> f64 {
        p.dot(self.anchor) - self.anchor.norm_sq()
    }

    /// Signed Euclidean distance of `p` to the boundary line, negative inside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.raw_side(p) / self.offset()
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.raw_side(p) <= 0.0
    }
}

/// Half-plane `H(x)` of the line through `x` orthogonal to `x`, origin side.
pub fn halfplane_of(x: Point2) -> Result<HalfPlane, GeomError> {
    if !x.is_finite() {
        return Err(GeomError::NonFinite);
    }
    if x.norm_sq() == 0.0 {
        return Err(GeomError::ZeroPoint);
    }
    Ok(HalfPlane { anchor: x })
}

/// Convex polygon with counterclockwise vertices.
///
/// When the polygon comes from a half-plane intersection, `edge_anchors[i]`
/// is the anchor of the half-plane supporting the edge `vertices[i] →
/// vertices[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
    edge_anchors: Option<Vec<Point2>>,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edge_anchors(&self) -> Option<&[Point2]> {
        self.edge_anchors.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    pub fn circumradius(&self) -> f64 {
        circumradius(self)
    }

    /// Smallest distance from the origin to an edge line.
    pub fn inradius_about_origin(&self) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let d = b - a;
                a.cross(d).abs() / d.norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= -EPS * (1.0 + p.norm()))
    }

    /// Clip against a half-plane in place. Returns `true` if the polygon
    /// changed. Vertices within `EPS` of the line are treated as on it.
    pub fn clip(&mut self, hp: &HalfPlane) -> bool {
        let n = self.vertices.len();
        let scale = hp.offset();
        let tol = EPS * scale.max(1.0) * scale;
        let sides: Vec<f64> = self.vertices.iter().map(|&v| hp.raw_side(v)).collect();
        if sides.iter().all(|&s| s <= tol) {
            return false;
        }
        let anchors = self.edge_anchors.as_ref();
        let mut verts = Vec::with_capacity(n + 1);
        let mut labels = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, b) = (self.vertices[i], self.vertices[j]);
            let (sa, sb) = (sides[i], sides[j]);
            let label = anchors.map(|e| e[i]);
            let crossing = || a + (b - a) * (sa / (sa - sb));
            match (sa <= tol, sb <= tol) {
                (true, true) => {
                    verts.push(a);
                    labels.push(label);
                }
                (true, false) if sa < -tol => {
                    verts.push(a);
                    labels.push(label);
                    verts.push(crossing());
                    labels.push(Some(hp.anchor));
                }
                (true, false) => {
                    // `a` sits on the clip line, which becomes its outgoing edge
                    verts.push(a);
                    labels.push(Some(hp.anchor));
                }
                (false, true) if sb < -tol => {
                    verts.push(crossing());
                    labels.push(label);
                }
                _ => {}
            }
        }
        self.vertices = verts;
        if self.edge_anchors.is_some() {
            self.edge_anchors = Some(labels.into_iter().map(|l| l.unwrap_or(BOX_LABEL)).collect());
        }
        self.dedup_vertices();
        true
    }

    fn dedup_vertices(&mut self) {
        let mut i = 0;
        while self.vertices.len() > 3 && i < self.vertices.len() {
            let j = (i + 1) % self.vertices.len();
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if (a - b).norm() <= EPS * (1.0 + a.norm()) {
                // Drop `a`; the merged vertex keeps the label of the edge
                // leaving `b`, and the edge entering `a` still ends at `b`.
                self.vertices.remove(i);
                if let Some(labels) = self.edge_anchors.as_mut() {
                    labels.remove(i);
                }
            } else {
                i += 1;
            }
        }
    }

    fn has_box_edge(&self) -> bool {
        self.edge_anchors
            .as_ref()
            .is_some_and(|l| l.contains(&BOX_LABEL))
    }
}

// Placeholder anchor for the edges of the certified bounding box; never a
// valid half-plane anchor since half-planes reject the origin.
const BOX_LABEL: Point2 = Point2::ORIGIN;

/// Result of [`intersect_halfplanes`].
#[derive(Clone, Debug, PartialEq)]
pub enum Intersection {
    Bounded(ConvexPolygon),
    Unbounded,
}

impl Intersection {
    pub fn bounded(self) -> Option<ConvexPolygon> {
        match self {
            Intersection::Bounded(p) => Some(p),
            Intersection::Unbounded => None,
        }
    }
}

/// Whether the normals leave an angular gap of at least π, in which case the
/// intersection of origin-containing half-planes is unbounded.
fn sorted_angles(hs: &[HalfPlane]) -> Vec<(f64, usize)> {
    let mut angles: Vec<(f64, usize)> =
        hs.iter().enumerate().map(|(i, h)| (h.anchor.angle(), i)).collect();
    angles.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    angles
}

fn max_gap(angles: &[(f64, usize)]) -> f64 {
    let n = angles.len();
    let mut gap = angles[0].0 + 2.0 * PI - angles[n - 1].0;
    for w in angles.windows(2) {
        gap = gap.max(w[1].0 - w[0].0);
    }
    gap
}

fn line_intersection(a: &HalfPlane, b: &HalfPlane) -> Option<Point2> {
    // ⟨p, a⟩ = ‖a‖², ⟨p, b⟩ = ‖b‖²
    let (p, q) = (a.anchor, b.anchor);
    let det = p.cross(q);
    if det.abs() <= EPS * p.norm() * q.norm() {
        return None;
    }
    let (c1, c2) = (p.norm_sq(), q.norm_sq());
    Some(Point2::new((c1 * q.y - c2 * p.y) / det, (p.x * c2 - q.x * c1) / det))
}

/// Radius of a disk certified to contain the intersection, or `None` if the
/// intersection is unbounded.
///
/// A subset whose normals leave no angular gap ≥ π is picked greedily (at most
/// a handful of half-planes); its intersection is a bounded polygon whose
/// vertices are pairwise line intersections within the subset.
fn certified_radius(hs: &[HalfPlane]) -> Option<f64> {
    if hs.len() < 3 {
        return None;
    }
    let angles = sorted_angles(hs);
    if max_gap(&angles) >= PI - EPS {
        return None;
    }
    let n = angles.len();
    let unwrapped = |k: usize| angles[k % n].0 + if k >= n { 2.0 * PI } else { 0.0 };
    let mut subset = vec![angles[0].1];
    let mut pos = 0usize;
    while unwrapped(n) - unwrapped(pos) >= PI - EPS {
        let mut next = pos;
        while next < pos + n && unwrapped(next + 1) - unwrapped(pos) < PI - EPS {
            next += 1;
        }
        if next == pos {
            return None;
        }
        pos = next;
        subset.push(angles[pos % n].1);
    }
    let mut radius: f64 = 0.0;
    for (i, &a) in subset.iter().enumerate() {
        for &b in &subset[i + 1..] {
            if let Some(p) = line_intersection(&hs[a], &hs[b]) {
                radius = radius.max(p.norm());
            }
        }
    }
    Some(radius)
}

/// Intersection of origin-containing half-planes.
///
/// A square certified to contain the result is clipped by every half-plane in
/// input order; unbounded intersections are reported, never truncated.
pub fn intersect_halfplanes(hs: &[HalfPlane]) -> Intersection {
    let Some(radius) = certified_radius(hs) else {
        return Intersection::Unbounded;
    };
    let half = 2.0 * radius + 1.0;
    let mut poly = ConvexPolygon {
        vertices: vec![
            Point2::new(-half, -half),
            Point2::new(half, -half),
            Point2::new(half, half),
            Point2::new(-half, half),
        ],
        edge_anchors: Some(vec![BOX_LABEL; 4]),
    };
    for h in hs {
        poly.clip(h);
    }
    if poly.has_box_edge() || poly.vertices.len() < 3 {
        return Intersection::Unbounded;
    }
    Intersection::Bounded(poly)
}

fn orient(o: Point2, a: Point2, b: Point2) -> f64 {
    (a - o).cross(b - o)
}

/// Strict extreme points of a finite point set, counterclockwise (Andrew's
/// monotone chain). Points on the relative interior of hull edges are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon, GeomError> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    let mut pts = points.to_vec();
    pts.sort_by(Point2::lex_cmp);
    pts.dedup_by(|a, b| (*a - *b).norm() <= EPS * (1.0 + a.norm()));
    if pts.len() < 3 {
        return Err(GeomError::Degenerate("fewer than three distinct points"));
    }
    let turns_left = |o: Point2, a: Point2, b: Point2| {
        let scale = (a - o).norm() * (b - o).norm();
        orient(o, a, b) > EPS * scale
    };
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() + 1);
    // `floor` keeps the upper chain from popping into the lower one.
    let push = |hull: &mut Vec<Point2>, p: Point2, floor: usize| {
        while hull.len() >= floor && !turns_left(hull[hull.len() - 2], hull[hull.len() - 1], p) {
            hull.pop();
        }
        hull.push(p);
    };
    for &p in &pts {
        push(&mut hull, p, 2);
    }
    let floor = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        push(&mut hull, p, floor);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(GeomError::Degenerate("all points collinear"));
    }
    Ok(ConvexPolygon {
        vertices: hull,
        edge_anchors: None,
    })
}

/// Max vertex norm; the radius of the smallest origin-centred disk containing
/// the polygon.
pub fn circumradius(poly: &ConvexPolygon) -> f64 {
    poly.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Signed area of `triangle(0, a, b) ∩ D(0, s)`.
fn triangle_disk_area(a: Point2, b: Point2, s: f64) -> f64 {
    let r2 = s * s;
    let sector = |p: Point2, q: Point2| 0.5 * r2 * p.cross(q).atan2(p.dot(q));
    let tri = |p: Point2, q: Point2| 0.5 * p.cross(q);
    let a_in = a.norm_sq() <= r2;
    let b_in = b.norm_sq() <= r2;
    if a_in && b_in {
        return tri(a, b);
    }
    // Solve ‖a + u (b − a)‖² = s² for u.
    let d = b - a;
    let qa = d.norm_sq();
    if qa == 0.0 {
        return 0.0;
    }
    let qb = a.dot(d);
    let qc = a.norm_sq() - r2;
    let disc = qb * qb - qa * qc;
    if disc <= 0.0 {
        return sector(a, b);
    }
    let root = disc.sqrt();
    let u1 = (-qb - root) / qa;
    let u2 = (-qb + root) / qa;
    let p1 = a + d * u1.clamp(0.0, 1.0);
    let p2 = a + d * u2.clamp(0.0, 1.0);
    match (a_in, b_in) {
        (true, false) => tri(a, p2) + sector(p2, b),
        (false, true) => sector(a, p1) + tri(p1, b),
        _ => {
            if u1 >= 1.0 || u2 <= 0.0 {
                sector(a, b)
            } else {
                sector(a, p1) + tri(p1, p2) + sector(p2, b)
            }
        }
    }
}

/// Area of `poly ∖ D(0, s)` by exact chord and circular-segment arithmetic.
pub fn polygon_minus_disk_area(poly: &ConvexPolygon, s: f64) -> Result<f64, GeomError> {
    if s < 0.0 || s.is_nan() {
        return Err(GeomError::NegativeRadius(s));
    }
    let area = poly.area();
    if s == 0.0 {
        return Ok(area);
    }
    if s >= circumradius(poly) {
        return Ok(0.0);
    }
    let inside: f64 = poly.edges().map(|(a, b)| triangle_disk_area(a, b, s)).sum();
    Ok((area - inside).max(0.0))
}
