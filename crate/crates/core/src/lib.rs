//! Desire backpropagation for multi-layer spiking neural networks.
//!
//! A supervised learning rule built on spike-timing-dependent plasticity:
//! every neuron receives a ternary *desire* (spike more, spike less, or
//! indifferent) derived from the label and propagated backwards through
//! local layer losses; the desire then signs and gates a post-synaptic STDP
//! weight update. Inference and learning need no multiplications per
//! synaptic event beyond one membrane decay and one learning-rate scale.
//!
//! - [`snn`]: LIF membranes, spike traces, rate encoding
//! - [`layer`], [`network`]: fully-connected spiking layers, dropout, forward pass
//! - [`desire`]: errors, ternarization, desire backpropagation, STDP update
//! - [`dataset`]: MNIST-family IDX loading
//! - [`trainer`], [`config`], [`checkpoint`], [`metrics`]: training orchestration
//! - [`profiler`]: arithmetic operation counting per neuron and phase

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod desire;
pub mod error;
pub mod layer;
pub mod metrics;
pub mod network;
pub mod profiler;
pub mod snn;
pub mod trainer;

pub use error::{Error, Result};
