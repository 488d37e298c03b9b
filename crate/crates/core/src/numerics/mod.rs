//! Dense tensor engine with reverse-mode differentiation.

mod graph;
mod gradcheck;
pub mod kernels;
mod ops;
mod optim;
mod param;

pub use graph::{BackwardCtx, Gradients, Graph, Mode, PinnedChoices, Var};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport, ParamCheck};
pub use ops::act::{gelu, sigmoid, swish, Activation};
pub use ops::norm::{RunningStats, BN_MOMENTUM, NORM_EPS};
pub use optim::Adam;
pub use param::{Buffer, BufferId, ParamId, ParamStore, Parameter};
