//! Reverse-mode automatic differentiation on an append-only graph whose
//! backward pass emits ordinary graph nodes (double backward).

mod backward;
mod graph;
pub mod kernels;
mod tensor;

#[cfg(test)]
mod tests;

pub use backward::GradientMap;
pub use graph::{Graph, Var};
pub use tensor::Tensor;
