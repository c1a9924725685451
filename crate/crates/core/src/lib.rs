//! Numerical toolkit for transversely convex tubes whose horizontal sections
//! are ovaloids.
//!
//! The crate is organised bottom-up:
//!
//! * [`spharm`]: band-limited functions on the circle and the 2-sphere,
//!   quadrature and exact spectral differential operators;
//! * [`convex`]: support functions of ovaloids, the support
//!   parameterization, the centrix and curvature functionals;
//! * [`tube`]: tube generators, transverse support extraction and the
//!   splitting test;
//! * [`slicing`]: tilted cross-sections, the height-function fixed point and
//!   the finite-difference derivative of the tilted centrix;
//! * [`obstruction`]: the closed-form symmetry obstruction, its two PDE
//!   residuals, the ellipsoid criterion and the affine-axis test;
//! * [`classifier`]: the end-to-end cylinder / quadric / not-cop decision;
//! * [`io`]: JSON documents with path-aware schema errors.

pub mod classifier;
pub mod convex;
pub mod error;
pub mod io;
pub mod obstruction;
pub mod slicing;
pub mod spharm;
pub mod tube;

pub use classifier::{
    classify, Classification, Config, QuadricFamily, Thresholds, Verdict, Witness,
};
pub use error::{Error, Result};
pub use spharm::{SphereDim, SupportField};
pub use tube::{Family, TransverseSupport, TubeSpec};
