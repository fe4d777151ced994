//! Simulator and solvers for a tile-partitioned reflecting-surface aided
//! MISO downlink: channel generation, sum-rate evaluation, the alternating
//! association/beamforming/phase optimizer with its exhaustive oracle, and a
//! learned surrogate that replaces the iterative association step.
//!
//! Everything is deterministic given a scenario and a seed. Monte-Carlo
//! sweeps and dataset generation parallelize across realizations via rayon
//! (`RAYON_NUM_THREADS` caps the workers); reductions keep a fixed order, so
//! parallel runs reproduce serial results bit for bit.

pub mod alternating;
pub mod association;
pub mod channel;
pub mod error;
pub mod phasing;
pub mod rates;
pub mod scenario;
pub mod surrogate;

pub use alternating::{
    alternate, enumerate_feasible_associations, exhaustive_search, monte_carlo, run_case,
    seed_list, CaseId, CaseOutcome, CaseRecord, CaseSummary, MonteCarlo, Solution,
};
pub use association::{
    dual_update, fixed_point_c, select_association, solve_association, AssociationMatrix,
    DualState, Selection,
};
pub use channel::{
    composite_channel, draw_channels, dump_channels, load_channels, path_loss, subseed,
    ChannelSet,
};
pub use error::{Error, Result};
pub use phasing::{mrt_beamform, optimal_phases, BeamformingSet, ReflectionSet};
pub use rates::{
    interference_rate, link_gains, rate_report, upper_bound_rate, user_rate, LinkGains,
    RateReport,
};
pub use scenario::{
    db_to_linear, dbm_to_watts, derive_quotas, noise_power, required_tiles, watts_to_dbm,
    MlSection, QuotaVector, ScenarioConfig, ScenarioFile, Tolerances, ValidatedScenario,
};
pub use surrogate::{
    accuracy, decode_output, encode_association, evaluate_surrogate, fit_surrogate,
    generate_dataset, train_lm, Dataset, FnnModel, TrainOptions,
};
