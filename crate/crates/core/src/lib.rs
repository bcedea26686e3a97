//! Adaptive quadratic finite element methods for fourth-order semilinear
//! plate problems: the stream-function vorticity formulation of the 2D
//! Navier-Stokes equations and the von Karman plate equations.
//!
//! The crate provides five lowest-order schemes (Morley, two discontinuous
//! Galerkin variants, C0 interior penalty, WOPSIP), smoother operators based
//! on Morley interpolation and a C1 companion lift, Newton solvers with a
//! two-stage termination criterion, explicit residual-based a posteriori
//! error estimators, and an adaptive loop with Doerfler marking and
//! newest-vertex bisection.

pub mod afem;
pub mod bench;
pub mod estimate;
pub mod fields;
pub mod forms;
pub mod geom;
pub mod hct;
pub mod lu;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod smalldense;
pub mod solve;
pub mod space;
pub mod sparse;
pub mod transfer;

pub use afem::{adapt_loop, doerfler_mark, AdaptConfig, AdaptHistory, AdaptOutcome};
pub use bench::{error_h, nse_grisvard_problem, vke_pointload_problem, GrisvardSolution};
pub use estimate::EstimatorReport;
pub use fields::{Eval, PwField};
pub use geom::{Pt, Sym2};
pub use mesh::{MarkSet, Triangulation};
pub use scalar::Real;
pub use space::{DiscreteFunction, DofMap, SchemeConfig, SchemeKind};
pub use transfer::SmootherChoice;

/// Concrete `f64` aliases for the main solver types.
pub type Point = Pt<f64>;
pub type Mesh = Triangulation<f64>;
