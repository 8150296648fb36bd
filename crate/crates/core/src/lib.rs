//! Calibration measurement for probabilistic classifiers.
//!
//! The toolkit consumes cached logits (from any model) and provides:
//!
//! - [`store`]: prediction-log ingestion (JSONL / CSV), validation and
//!   seeded dev-set halving.
//! - [`numerics`]: stable softmax, log-softmax, NLL, KL and entropy, plus
//!   the per-prediction confidence outcome at a temperature.
//! - [`metrics`]: reliability tables and expected calibration error.
//! - [`temperature`]: temperature scaling fitted by line search over a grid.
//! - [`smoothing`] and [`train`]: label-smoothed targets, the KL objective
//!   and its gradient, and a linear softmax classifier trained on it.
//! - [`benchmark`]: a synthetic domain-shift benchmark comparing MLE and
//!   label-smoothed training before and after temperature scaling.
//! - [`cli`]: the `calibkit` command-line front end.
//!
//! ```
//! use calibkit::metrics::{evaluate, BinSpec};
//! use calibkit::store::{PredictionRecord, PredictionSet, SplitTag};
//!
//! let set = PredictionSet::new(
//!     vec![
//!         PredictionRecord::new(vec![2.0, 0.0], 0),
//!         PredictionRecord::new(vec![0.5, 1.0], 0),
//!     ],
//!     SplitTag::InDomainTest,
//! )?;
//! let eval = evaluate(&set, 1.0, BinSpec::default())?;
//! assert_eq!(eval.accuracy, 0.5);
//! # Ok::<(), calibkit::Error>(())
//! ```

pub mod benchmark;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod smoothing;
pub mod store;
pub mod temperature;
pub mod train;

pub use error::{Error, Result};
