//! Dual-stream backbone and single-stream stage-interchange classifiers.

pub mod checkpoint;
mod cls;
mod config;
mod dual;
mod stage;

pub use cls::{build_cls_variant, pad_to, Classifier};
pub use config::{BackboneConfig, StageKind, DUAL_STAGES, NUM_STAGES};
pub use dual::{build_dual_backbone, forward_dual, DualBackbone, DualClassifier, DualFeatures};
pub use stage::{AdwtStage, CnnStage, ResidualBlock, Stage};
