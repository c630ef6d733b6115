//! Sharpened Bell inequalities for coincidence-postselected data.

pub mod causal;
pub mod classical_bounds;
pub mod detection;
pub mod error;
pub mod hvmodels;
pub mod inequalities;
pub mod quantum;
pub mod scalar;
pub mod scenario;
pub mod sharpening;
pub mod yurke_stoler;

pub use detection::{
    apply_detector_model, Allocation, ConditionalEfficiency, DetectionBehavior, DetectorModel,
    LocalEvent,
};
pub use error::{Error, Result};
pub use inequalities::{
    catalog, BellFunctional, Catalog, CatalogRecord, CorrelatorFunctional, ModelClass,
};
pub use scalar::Real;
pub use scenario::{
    Behavior, BellScenario, NoSignalingReport, OutcomeVector, SettingVector, Violation,
};
pub use sharpening::{sharpen, threshold_eta_c, SharpenedBound, Threshold};

pub type Behavior64 = Behavior<f64>;
pub type Behavior32 = Behavior<f32>;
pub type DetectionBehavior64 = DetectionBehavior<f64>;
pub type DetectionBehavior32 = DetectionBehavior<f32>;
pub type BellFunctional64 = BellFunctional<f64>;
pub type BellFunctional32 = BellFunctional<f32>;
