//! Selective privacy obfuscation for video.
//!
//! Privacy-salient regions are located by matching patch descriptors against
//! a library of interpretable templates, then replaced by noise that moves
//! with the scene's optical flow. The crate also carries the naive
//! baselines and the action/privacy trade-off metrics used to compare
//! obfuscation methods.

pub mod baselines;
pub mod digest;
pub mod error;
pub mod frame;
pub mod manifest;
pub mod metrics;
pub mod motion_noise;
pub mod obfuscator;
pub mod parallel;
pub mod rng;
pub mod saliency;
pub mod synth;
pub mod template_lib;
pub mod tensor;

pub use error::{Error, Result};
pub use frame::Frame;
pub use manifest::{load_manifest, ClipManifest, PatchGeometry};
pub use motion_noise::{FlowField, NoiseMode, NoiseSequence};
pub use obfuscator::{obfuscate_clip, ObfuscationConfig};
pub use saliency::{DescriptorGrid, Reassembly, SaliencyMap};
pub use template_lib::{SelectedTemplates, Template, TemplateLibrary};
