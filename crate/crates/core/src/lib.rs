//! Conditioned Poisson–Voronoi and Crofton zero cells: exact construction,
//! inversion dualities, coupling, and Monte Carlo scaling experiments.

pub mod cell;
pub mod cli;
pub mod dual;
pub mod geom;
pub mod sampler;
pub mod stats;

pub use cell::{build_zero_cell, conditioned_cell, measure_cell, CellError, CellRecord, Model};
pub use dual::{defect_measure_mc, grain_union_covers, vertices_equal_extremes, GrainModel};
pub use geom::{convex_hull, halfplane_of, intersect_halfplanes, invert, polygon_minus_disk_area, ConvexPolygon, HalfPlane, Intersection, Point2};
pub use sampler::{coupled_triple, RngStream};
pub use stats::{theory_constants, TheoryConstants};
