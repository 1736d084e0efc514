//! Flow-level traffic anomaly detection for AGC/ICS networks.
//!
//! The pipeline: simulate labeled packet logs (AGC telemetry plus an
//! internet-style source domain), assemble bidirectional flows, compute a
//! 39-attribute feature vector per flow (intrinsic, wavelet frequency, and
//! sliding-window statistics), encode to 130-dim vectors / 12x12 grayscale
//! images, train DNN / CNN / split-attention classifiers with a
//! pretrain-then-finetune transfer path, and score them with ACC/FPR/DR.

pub mod bench;
pub mod encode;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod packet;
pub mod pipeline;
pub mod sim;
pub mod wavelet;

pub use error::{Error, ErrorCategory, Result};
