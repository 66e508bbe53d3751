//! Learnable morphological operators built from counter-harmonic mean
//! filters.
//!
//! A `PConv` layer computes, for kernel `w` and order `P`,
//!
//! ```text
//! h(x) = sum_k w_k f(x+k)^(P+1) / sum_k w_k f(x+k)^P
//! ```
//!
//! which tends to a dilation as `P -> +inf` and to an erosion as
//! `P -> -inf`. Networks of such layers, mixed with linear convolutions,
//! absolute differences and averages, are trained by online SGD to imitate
//! morphological pipelines.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar type for the common cases.

pub mod chm;
pub mod datagen;
pub mod error;
pub mod imaging;
pub mod layers;
pub mod morphology;
pub mod network;
pub mod scalar;
pub mod training;

pub use chm::{chm_filter, Kernel, MAX_ORDER, WEIGHT_FLOOR};
pub use error::{Error, Result};
pub use imaging::{load_pgm, normalize, denormalize, save_pgm, Image};
pub use morphology::StructuringElement;
pub use network::{LayerSpec, Network, NetworkSpec};
pub use scalar::Scalar;
pub use training::{train_online, TrainConfig, TrainReport};

pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type Kernel64 = Kernel<f64>;
pub type Kernel32 = Kernel<f32>;
pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
