//! Adversarial attacks on no-reference video quality scorers.
//!
//! [`whitebox`] runs projected gradient steps against a
//! [`DifferentiableScorer`]; [`blackbox`] runs a patch random search against
//! any [`ScorerOracle`]. Both minimise [`loss::srb_loss`], the distance to an
//! anchor on the opposite end of the quality range. [`metrics`] turns a batch
//! of outcomes into SRCC, PLCC and R.

pub mod blackbox;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod scorers;
pub mod trace;
pub mod video;
pub mod whitebox;

pub use blackbox::{blackbox_attack, coverage_check, pixel_baseline_attack, BlackBoxConfig};
pub use error::{Error, Result};
pub use loss::{AnchorScore, Boundary, BoundaryPolicy, ScorerStats, ThresholdRule};
pub use metrics::{assemble_report, plcc, r_metric, srcc, BatchRecord, RobustnessReport};
pub use scorers::{DifferentiableScorer, ScorerOracle};
pub use trace::{AttackOutcome, AttackTrace};
pub use video::{NormBudget, Perturbation, VideoTensor};
pub use whitebox::{whitebox_attack, StepRule, WhiteBoxConfig};
