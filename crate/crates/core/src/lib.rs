//! Adversarial affine augmentation for episodic few-shot learning.
//!
//! An adversary network predicts a bounded rotation, scale and translation
//! for every support image; the warped support conditions a prototype
//! classifier whose query loss the adversary tries to raise, while a penalty
//! keeps the warps near the identity.

pub mod adversary;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod fewshot;
pub mod geometry;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod sampler;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
