//! Multitaper magnitude and modified group delay spectral estimation,
//! ensemble bias/variance analysis and a GMM-UBM speaker verification back
//! end. The guide under `book/` walks through each part.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod export;
pub mod features;
pub mod recognition;
pub mod spectral;
pub mod synth;
pub mod tapers;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/tapers.md")]
    mod tapers {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/recognition.md")]
    mod recognition {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
