//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] is a static graph over named inputs. Parameters live in a
//! [`ParamStore`] and are bound into tapes by name; [`Adam`] applies
//! gradient updates to a store.

mod check;
mod optim;
mod params;
mod tape;
mod tensor;

pub use check::{finite_diff_check, finite_diff_check_against, FdReport, ParamCheck};
pub use optim::Adam;
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("tensor of shape {shape:?} cannot hold {len} values")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: String,
        detail: String,
    },
    #[error("input `{0}` is not declared on this tape")]
    UnknownInput(String),
    #[error("input `{0}` has no bound value")]
    Unbound(String),
    #[error("tape has not been evaluated since its inputs last changed")]
    NotEvaluated,
    #[error("seed shape {seed:?} does not match output shape {output:?}")]
    SeedShape { seed: [usize; 2], output: [usize; 2] },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("no parameter named `{0}`")]
    UnknownParam(String),
    #[error("gradient for `{name}` has shape {grad:?}, parameter has {param:?}")]
    GradShape {
        name: String,
        grad: [usize; 2],
        param: [usize; 2],
    },
}
