//! Numerical laboratory for partially segregated three-component systems.
//!
//! Minimizers of
//! `J_β(u) = Σ_i ∫_Ω |∇u_i|² + β ∫_Ω u₁²u₂²u₃²`
//! with fixed nonnegative traces are computed on uniform 2-D grids by block
//! coordinate descent and followed along increasing `β`. The
//! [`diagnostics`] module measures the objects that govern the limit
//! `β → ∞` (monotonicity formulas, Pohozaev identities, Hölder seminorms,
//! overlap areas, exponential decay), and [`sphere`] computes the optimal
//! circle partition constant that sets the Hölder threshold.

// `!(x > 0.0)` also rejects NaN; stencil loops read better indexed
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod par;
pub mod run;
pub mod sphere;

pub use error::{Result, SegError};
