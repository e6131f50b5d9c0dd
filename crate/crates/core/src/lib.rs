//! Attribute-decomposed GAN for controllable person image synthesis.
//!
//! The generator encodes a target pose and a component-decomposed source
//! appearance through two independent pathways and recombines them with
//! AdaIN-based style blocks; two conditional PatchGAN discriminators drive
//! adversarial training alongside reconstruction, perceptual and contextual
//! objectives. Style codes are explicit and editable, enabling per-component
//! attribute mixing and continuous interpolation.
//!
//! Everything runs on a small built-in reverse-mode autodiff engine
//! ([`graph`], [`ops`], [`conv`]) over `ndarray`, so the full pipeline —
//! data synthesis, training, editing, evaluation — works on CPU (and
//! compiles to wasm) without external ML runtimes.

pub mod graph;
pub mod ops;
pub mod conv;
pub mod gradcheck;
pub mod util;

pub use graph::{Element, Gradients, Graph, Tensor};
