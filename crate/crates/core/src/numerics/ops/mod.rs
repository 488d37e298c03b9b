pub mod act;
mod basic;
mod conv;
mod linalg;
pub mod norm;
