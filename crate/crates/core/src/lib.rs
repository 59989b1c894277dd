//! Conformalized robust optimization with decision-aware model selection.
//!
//! Given a finite family of candidate nonconformity scores, this crate builds
//! conformal prediction sets for each candidate, solves the induced min-max
//! decision problem over each set, and picks the candidate whose robust
//! decisions incur the smallest empirical loss. Four selectors are provided:
//!
//! * [`select::ECroms`]: split thresholds, model chosen by plain ERM over the
//!   labeled auxiliary decisions.
//! * [`select::FCroms`]: full-conformal selection over an augmented dataset per
//!   hypothesized label; finite-sample coverage. Regression labels go through a
//!   finite grid ([`grid::LabelGrid`]).
//! * [`select::Croims`]: kernel-localized thresholds and a kernel-weighted ERM,
//!   so the chosen model depends on the test covariate.
//! * [`select::f_croims`]: the swap-based full-conformal variant of the above.
//!
//! Baselines ([`select::NaiveCp`], [`select::NaiveLcp`], [`select::E2e`]) and
//! the synthetic benchmark harness ([`harness`]) live alongside.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`data`], [`score`], [`loss`], [`set`] | shared domain types |
//! | [`quantile`] | empirical / inflated / weighted / augmented quantiles |
//! | [`cro`] | robust decision solvers and simplex projection |
//! | [`conformal`] | split and localized prediction sets |
//! | [`kernel`] | localization kernels, weights, effective sample size |
//! | [`select`] | the selection algorithms and baselines |
//! | [`eval`] | coverage, robustness and loss metrics |
//! | [`synth`] | data generators and built-in learners |
//! | [`harness`] | experiment configs, replication runner, CSV/SVG output |

pub mod conformal;
pub mod cro;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod loss;
pub mod quantile;
pub mod score;
pub mod select;
pub mod set;
pub mod sum;
pub mod synth;

pub use error::{Error, Result};
