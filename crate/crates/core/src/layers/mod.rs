//! Forward and reverse passes of the network building blocks.
//!
//! Every layer exposes a pure `forward` plus the per-unit kernels that the
//! model uses for backpropagation and for cheap single-unit re-evaluation
//! during gradient checks.

mod activation;
mod network;
mod operational;
mod pool;
mod selfgop;

pub use activation::{sigmoid, Activation};
pub use network::{InputShape, Layer, Network, Trace};
pub use operational::{
    operational_forward, transposed_operational_forward, upsample_zero, OperationalLayerParams,
};
pub use pool::{avgpool_groups, grouped_avgpool_softmax, maxpool2, softmax, MaxPoolIndices};
pub use selfgop::{selfgop_forward, SelfGopParams};

pub(crate) use operational::OperationalScratch;
pub(crate) use pool::{avgpool_groups_backward, maxpool2_backward};
