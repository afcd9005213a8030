//! Numerical workbench for invariant convex sets of reaction-diffusion
//! systems and vector-bundle heat flows.
//!
//! The crate is organised around one question: given a closed convex set
//! `W` and a parabolic equation `∂_t f = Δf + ∇_ζ f + φ(t, x, f)`, does the
//! solution stay in `W`, and if it leaves, where and how does it leave?
//!
//! - [`convex`]: boxes, balls and polytopes with projection, distance,
//!   deviation vectors and normal cones.
//! - [`tangency`]: sampled certification of `⟨λ, φ(t, x, ω)⟩ ≤ 0` on `∂W`.
//! - [`dini`]: upper Dini derivatives and the growth-point search behind the
//!   boundary argument.
//! - [`flat`]: finite-difference solver on intervals and rectangles.
//! - [`bundle`]: covariant solver on a 1-D base with a metric and a
//!   metric-compatible connection.
//! - [`diagnostics`]: maximal distance pairs, the Hopf boundary functional
//!   and invariance verdicts.
//! - [`scenario`]: JSON scenario files, built-in terms and a small
//!   expression language.

pub mod bundle;
pub mod convex;
pub mod demo;
pub mod diagnostics;
pub mod dini;
pub mod error;
pub mod expr;
pub mod field;
pub mod flat;
pub mod scenario;
pub mod tangency;
mod vecmath;

pub use convex::{ConvexSet, NormalCone, Projection};
pub use diagnostics::{InvarianceVerdict, Status};
pub use error::{Error, Result};
pub use field::{FieldGeometry, FieldState, Integrator, TimeStep, VectorField};
pub use tangency::ReactionTerm;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/convex-sets.md")]
    mod convex_sets {}
    #[doc = include_str!("../../../book/src/tangency.md")]
    mod tangency {}
    #[doc = include_str!("../../../book/src/dini.md")]
    mod dini {}
    #[doc = include_str!("../../../book/src/flat-solver.md")]
    mod flat_solver {}
    #[doc = include_str!("../../../book/src/bundle-solver.md")]
    mod bundle_solver {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
