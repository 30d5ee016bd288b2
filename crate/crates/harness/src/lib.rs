//! Experiment harness: manifests, batch attacks, ablation sweeps and the
//! synthetic dataset generator behind the `vqadv` command.

pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod sweep;
pub mod synth;

pub use config::{AttackChoice, ExperimentConfig, MosFallback, ScorerChoice};
pub use error::{HarnessError, Result};
pub use experiment::{audit_outputs, run_experiment, ExperimentReport};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use sweep::{sweep, SweepAxis};
pub use synth::{gen_synthetic, GenConfig};
