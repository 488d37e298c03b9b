//! Network blocks: macaron feed-forward, self-attention, the SwG-former block and MS-Conv.

mod ff;
mod former;
mod mhsa;
mod msconv;
pub mod nn;

pub use ff::{FeedForward, DEFAULT_FF_RATIO};
pub use former::{format_order, parse_order, BlockModule, SwgBlockConfig, SwgFormerBlock, MODULE_ORDERS};
pub use mhsa::{MultiHeadAttention, DEFAULT_HEADS};
pub use msconv::{DualConv, MsConv, MsConvConfig, MSCONV_POOL};
pub use nn::sinusoidal_encoding;
