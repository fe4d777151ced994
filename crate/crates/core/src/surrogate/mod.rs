//! Learned surrogate for the association solver: dataset generation,
//! integer encoding, the feed-forward network, Levenberg-Marquardt training
//! and evaluation.

pub mod dataset;
pub mod encoding;
pub mod eval;
pub mod fnn;
pub mod train;

pub use dataset::{generate_dataset, load_dataset, pair_features, save_dataset, Dataset, Sample};
pub use encoding::{decode_codes, decode_output, encode_association};
pub use eval::{accuracy, bench_solver, evaluate_surrogate, EvalReport};
pub use fnn::{load_model, save_model, FnnModel};
pub use train::{
    analytic_jacobian, mean_squared_error, train_lm, EpochRecord, StopReason, TrainOptions,
    TrainOutcome,
};

use crate::error::Result;
use crate::scenario::ValidatedScenario;

/// End-to-end training pipeline: freeze normalization on the train split,
/// then run Levenberg-Marquardt. Returns the epoch history.
pub fn fit_surrogate(
    model: &mut FnnModel,
    ds: &Dataset,
    scn: &ValidatedScenario,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let train_x = ds.features_of(&ds.split.train);
    let train_t = ds.codes_of(&ds.split.train);
    let val_x = ds.features_of(&ds.split.val);
    let val_t = ds.codes_of(&ds.split.val);
    let code_hi = (1u64 << (scn.num_users() - 1)) as f64;
    model.fit_normalization(&train_x, 1.0, code_hi);
    train_lm(model, &train_x, &train_t, &val_x, &val_t, opts)
}
