//! Face verification from learned Gaussian receptive fields.

pub mod admm;
pub mod error;
pub mod evalharness;
pub mod grfbank;
pub mod imgcore;
pub mod lda;
pub mod linalg;
pub mod pairengine;
pub mod pairs;
pub mod patchpool;
pub mod pipeline;
pub mod pooling;
pub mod sffs;
pub(crate) mod wire;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/pooling.md")]
    mod pooling {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
}
