//! Domain-shift-aware conformal prediction for multiple-choice classifiers.
//!
//! Calibration prompts from an old domain are reweighted by an estimated
//! embedding-space density ratio toward a new domain, a regularized mass
//! `lambda` is placed at `+inf`, and the resulting weighted score quantile
//! becomes a single threshold for every prompt of the new domain.
//!
//! ```
//! use driftcal::conformal::ExtendedScore;
//! use driftcal::pipeline::{calibrate, predict};
//! use driftcal::scores::ScoreKind;
//!
//! let scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
//! let weights = [1.0; 9];
//! let cal = calibrate(&scores, &weights, 1.0, 0.1, ScoreKind::Lac).unwrap();
//! assert_eq!(cal.threshold, ExtendedScore::Finite(0.9));
//!
//! let set = predict(&cal, &[2.0, 0.5, -1.0]).unwrap();
//! assert!(set.contains(0));
//! ```

pub mod classifier;
pub mod conformal;
pub mod data;
pub mod density_ratio;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod report;
pub mod scores;
pub mod synthetic;

pub use classifier::{ClassifierConfig, ClassifierModel, ProbabilisticClassifier};
pub use conformal::{ExtendedScore, PredictionSet, Threshold, WeightedScoreDistribution};
pub use data::{DatasetManifest, Profile, SampleRecord};
pub use density_ratio::{ClipBounds, DensityRatioModel};
pub use error::{Error, Result};
pub use eval::{DomainDataset, EvalConfig, Method, PairResult, SweepReport};
pub use pipeline::{DscpCalibration, DscpConfig, LambdaPolicy};
pub use scores::{ChoiceProbabilities, LogitVector, ScoreKind};
pub use synthetic::{ShiftSpec, SuiteSpec, TheoryGapReport};
