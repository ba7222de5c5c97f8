//! Fixtures shared by the benchmarks.

use arhmm::hedge::{build_grids, GridSpec, HedgeConfig, Payoff};
use arhmm::{ArhmmModel, Series};

pub use arhmm::presets::sp500_arhmm;

/// Stationary sample of `n` returns from `model`.
pub fn sample(model: &ArhmmModel, n: usize, seed: u64) -> Series {
    model
        .simulate_stationary(n, 100, &mut arhmm::rng::seeded(seed))
        .expect("model simulates")
        .0
}

/// At-the-money call on a spot of 100 with `n_y` x `n_s` grids.
pub fn atm_call(model: &ArhmmModel, steps: usize, n_y: usize, n_s: usize) -> HedgeConfig {
    let rate = 0.01 / 252.0;
    let rates = vec![rate; steps];
    let spec = GridSpec {
        n_y,
        n_s,
        n_sim: 5_000,
        seed: 1,
        ..Default::default()
    };
    let k_disc = 100.0 * (-rate * steps as f64).exp();
    let (y, s) =
        build_grids(model, steps, 100.0, &rates, Some(k_disc), &spec).expect("grids build");
    HedgeConfig::new(steps, rate, Payoff::call(100.0), y, s).expect("valid contract")
}
