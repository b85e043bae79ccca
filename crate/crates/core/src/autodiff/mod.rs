//! A small reverse-mode differentiation core in `f64`.
//!
//! Forward operations are methods on [`Graph`]; each appends a node and
//! returns a [`Var`]. [`Graph::backward`] sweeps the tape in reverse and
//! returns [`Gradients`] keyed by [`ParamId`] (for parameters) or by
//! [`Var`] (for [`Graph::input`] leaves).
//!
//! Sequence tensors use the `[batch, channels, time]` layout. Shapes are
//! explicit: the only broadcasts are scalar scaling and
//! [`Graph::add_channel_bias`].

mod checkpoint;
pub mod gradcheck;
mod conv;
mod graph;
mod norm;
mod param;
mod spectral;

pub use checkpoint::{Checkpoint, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, Var};
pub use norm::GRN_EPS;
pub use param::{Module, ParamId, Parameter};

/// Plain-buffer same-size average pooling, shared with the noise prior.
pub fn avg_pool2d_values(x: &[f64], shape: &[usize], kh: usize, kw: usize) -> Vec<f64> {
    norm::avg_pool2d_forward(x, shape, kh, kw)
}
