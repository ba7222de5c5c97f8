//! Gaussian autoregressive hidden Markov models.
//!
//! Exact filtering, EM estimation, a parametric-bootstrap goodness-of-fit test,
//! discrete-time quadratic-optimal option hedging and a backtest harness.

pub mod backtest;
pub mod bs;
pub mod error;
pub mod estimate;
pub mod filter;
pub mod gof;
pub mod hedge;
pub mod io;
pub mod model;
pub mod presets;
pub mod rng;
pub mod series;
pub mod stats;

// unit tests share the integration tests' oracles, which name the crate `arhmm`
#[cfg(test)]
extern crate self as arhmm;
#[cfg(test)]
#[path = "../tests/common/mod.rs"]
mod common;

pub use error::{ArhmmError, Result};
pub use estimate::{
    e_step, em_fit, likelihood_ratio_test, m_step, EmConfig, EmResult, SmoothedQuantities,
};
pub use filter::{filter_path, filter_step, most_probable_regime, predict_regime, FilterState};
pub use gof::{
    cvm_statistic, parametric_bootstrap, rosenblatt_transform, select_num_regimes, GofResult,
    RosenblattSeries,
};
pub use hedge::{
    build_tables, price, simulate_hedging, HedgeConfig, HedgeSimResult, HedgeTables, Payoff,
};
pub use model::{
    stationary_moments, stationary_regime_dist, ArhmmModel, RegimeParams, StationaryMoments,
};
pub use series::Series;
pub use stats::{hedging_error_stats, HedgingErrorStats};
