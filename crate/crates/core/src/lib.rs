//! Machine-learning receiver for colliding RFID tags under framed slotted
//! ALOHA: slot statistics, a baseband collision model, tag-count and channel
//! estimators, a minimum-distance multi-tag decoder and the Monte Carlo
//! harness that ties them together.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the training and evaluation pipeline.

pub mod baseband;
pub mod chanest;
pub mod count;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod fsa;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type SlotSignal32 = baseband::SlotSignal<f32>;
pub type SlotSignal64 = baseband::SlotSignal<f64>;
pub type ChannelVector32 = baseband::ChannelVector<f32>;
pub type ChannelEstimate32 = chanest::ChannelEstimate<f32>;
pub type ChannelEstimator32 = chanest::ChannelEstimator<f32>;
pub type TagCountClassifier32 = count::TagCountClassifier<f32>;
pub type GmmParams64 = count::GmmParams<f64>;
pub type Dataset32 = nn::Dataset<f32>;
