//! Numerical toolkit for nonparametric minimal surfaces in the first
//! Heisenberg group with its Carnot–Carathéodory metric.

pub mod characteristics;
pub mod error;
pub mod families;
pub mod freefn;
pub mod geometry;
pub mod grid;
pub mod ode;
pub mod solver;
pub mod stencil;

pub use error::{Error, Result};
pub use families::{ExampleDocument, ExampleSpec};
pub use freefn::FreeFunction;
pub use geometry::{Lambda, HorizontalField, MaskedField};
pub use grid::{GridDomain, GridFunction, NodeKind, Region};
