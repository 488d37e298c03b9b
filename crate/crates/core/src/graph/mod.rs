//! Sliding-window graph construction, aggregation and the SwG module.

mod aggregate;
mod chunk;
mod knn;
mod swg;

pub use aggregate::{AggregatorKind, NeighborTable};
pub use chunk::{check_window, chunk_time, unchunk, GraphChunk};
pub use knn::{knn_graph, NeighborIndex};
pub use swg::{swg_module_forward, SwgConfig, SwgModule, TransformFfn, VertexUpdate, DEFAULT_FFN_RATIO};
