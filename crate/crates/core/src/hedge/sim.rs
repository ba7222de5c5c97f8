//! Monte Carlo study of hedging strategies on simulated market paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategy::{hedge_weights, price, RegimeChoice};
use super::tables::HedgeTables;
use super::HedgeConfig;
use crate::bs::black_scholes_price_delta;
use crate::error::{ArhmmError, Result};
use crate::filter::{filter_step, most_probable_regime, FilterState};
use crate::model::{stationary_moments, ArhmmModel};
use crate::rng;
use crate::stats::{hedging_error_stats, HedgingErrorStats};
use nalgebra::DVector;

/// Simulated steps before the hedge starts.
pub const BURN_IN: usize = 100;

/// How the hedger picks the regime the tables are read in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimePolicy {
    /// Filter from a uniform prior and use the most probable regime.
    MostProbable,
    /// Use the simulated regime (oracle information).
    Known,
    /// Blend the per-regime prices and weights with the filtered probabilities.
    Weighted,
}

/// One simulated market scenario. `history` ends with `y_0`; `regimes[t]` is `tau_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub history: Vec<f64>,
    pub returns: Vec<f64>,
    pub regimes: Vec<usize>,
}

/// Simulates `n_paths` scenarios of `n_steps` returns, each preceded by `burn_in` returns
/// started at the stationary mean with a stationary regime draw.
pub fn simulate_market_paths(
    model: &ArhmmModel,
    n_steps: usize,
    n_paths: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<MarketPath>> {
    if model.dim() != 1 {
        return Err(ArhmmError::UnsupportedDimension(model.dim()));
    }
    if burn_in == 0 || n_steps == 0 {
        return Err(ArhmmError::InvalidInput(
            "burn-in and horizon must be positive".into(),
        ));
    }
    let mom = stationary_moments(model)?;
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::substream(seed, p as u64);
            let tau = ArhmmModel::draw_from(mom.nu.as_slice(), &mut r);
            let (ys, taus) =
                model.simulate_path_with(mom.mu.as_slice(), tau, burn_in + n_steps, &mut r)?;
            let ys = ys.as_slice();
            Ok(MarketPath {
                history: ys[..burn_in].to_vec(),
                returns: ys[burn_in..].to_vec(),
                regimes: taus[burn_in - 1..].to_vec(),
            })
        })
        .collect()
}

/// A hedging rule.
#[derive(Debug, Clone, Copy)]
pub enum Hedger<'a> {
    /// Quadratic-optimal hedge from `tables`; regimes are inferred with `filter_model`.
    Optimal {
        tables: &'a HedgeTables,
        filter_model: &'a ArhmmModel,
        policy: RegimePolicy,
    },
    /// Black-Scholes delta with a constant per-period volatility, priced at the
    /// Black-Scholes value.
    Delta { config: &'a HedgeConfig, vol: f64 },
    /// Black-Scholes delta with volatility `vols[t - 1]` at rebalance `t`, started from a
    /// given initial value.
    ScheduledDelta {
        config: &'a HedgeConfig,
        vols: &'a [f64],
        v0: f64,
    },
}

impl Hedger<'_> {
    fn config(&self) -> &HedgeConfig {
        match self {
            Hedger::Optimal { tables, .. } => &tables.config,
            Hedger::Delta { config, .. } | Hedger::ScheduledDelta { config, .. } => config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub v0: f64,
    /// Discounted terminal portfolio value.
    pub v_n: f64,
    /// Discounted liability minus discounted terminal portfolio.
    pub error: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeSimResult {
    pub paths: Vec<PathOutcome>,
    pub stats: HedgingErrorStats,
}

impl HedgeSimResult {
    pub fn errors(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.error).collect()
    }
}

fn uniform_prior(model: &ArhmmModel) -> Result<ArhmmModel> {
    let l = model.num_regimes();
    model
        .clone()
        .with_eta0(DVector::from_element(l, 1.0 / l as f64))
}

/// Filtered regime probabilities, advanced one return at a time.
struct Tracker<'a> {
    model: &'a ArhmmModel,
    state: FilterState,
    last: f64,
}

impl<'a> Tracker<'a> {
    fn new(model: &'a ArhmmModel, history: &[f64]) -> Result<Self> {
        let mut tr = Tracker {
            model,
            state: FilterState::initial(model),
            last: history[0],
        };
        for &y in &history[1..] {
            tr.push(y)?;
        }
        Ok(tr)
    }

    fn push(&mut self, y: f64) -> Result<()> {
        self.state = filter_step(self.model, &self.state, &[self.last], &[y])?;
        self.last = y;
        Ok(())
    }
}

fn delta_terms(
    config: &HedgeConfig,
    vol: f64,
    t_left: usize,
    spot: f64,
    rate: f64,
) -> Result<(f64, f64)> {
    let (kind, strike) = config
        .payoff
        .vanilla()
        .ok_or_else(|| ArhmmError::InvalidInput("delta hedging needs a call or put".into()))?;
    Ok(black_scholes_price_delta(
        spot,
        strike,
        vol,
        rate,
        0.0,
        t_left as f64,
        kind,
    ))
}

/// Runs one hedger along one path starting from spot `s0`.
pub fn hedge_path(hedger: &Hedger<'_>, path: &MarketPath, s0: f64) -> Result<PathOutcome> {
    let cfg = hedger.config();
    let n = cfg.n_steps;
    if path.returns.len() < n || path.history.is_empty() {
        return Err(ArhmmError::InvalidInput(
            "path shorter than the hedging horizon".into(),
        ));
    }
    if let Hedger::ScheduledDelta { vols, .. } = hedger {
        if vols.len() < n {
            return Err(ArhmmError::InvalidInput(
                "one volatility per rebalance is needed".into(),
            ));
        }
    }
    let mean_rate = cfg.rates.iter().sum::<f64>() / n as f64;
    let mut tracker = match hedger {
        Hedger::Optimal {
            filter_model,
            policy,
            ..
        } if *policy != RegimePolicy::Known => Some(Tracker::new(filter_model, &path.history)?),
        _ => None,
    };
    let mut y = *path.history.last().unwrap();
    let mut s = s0;
    let mut spot = s0;
    let v0 = match hedger {
        Hedger::Optimal { tables, policy, .. } => match policy {
            RegimePolicy::Known => price(tables, s, y, RegimeChoice::Index(path.regimes[0]))?,
            RegimePolicy::MostProbable => {
                let eta = &tracker.as_ref().unwrap().state.eta;
                price(tables, s, y, RegimeChoice::Index(most_probable_regime(eta)))?
            }
            RegimePolicy::Weighted => price(
                tables,
                s,
                y,
                RegimeChoice::Probabilities(&tracker.as_ref().unwrap().state.eta),
            )?,
        },
        Hedger::Delta { config, vol } => delta_terms(config, *vol, n, spot, mean_rate)?.0,
        Hedger::ScheduledDelta { v0, .. } => *v0,
    };
    let mut v = v0;
    let mut weights = Vec::with_capacity(n);
    for t in 1..=n {
        let phi = match hedger {
            Hedger::Optimal { tables, policy, .. } => match policy {
                RegimePolicy::Known => hedge_weights(tables, t, s, y, path.regimes[t - 1], v)?,
                RegimePolicy::MostProbable => {
                    let i = most_probable_regime(&tracker.as_ref().unwrap().state.eta);
                    hedge_weights(tables, t, s, y, i, v)?
                }
                RegimePolicy::Weighted => {
                    let eta = tracker.as_ref().unwrap().state.eta.clone();
                    let mut acc = 0.0;
                    for (i, w) in eta.iter().enumerate() {
                        if *w > 0.0 {
                            acc += w * hedge_weights(tables, t, s, y, i, v)?;
                        }
                    }
                    acc
                }
            },
            Hedger::Delta { config, vol } => {
                delta_terms(config, *vol, n - t + 1, spot, mean_rate)?.1
            }
            Hedger::ScheduledDelta { config, vols, .. } => {
                delta_terms(config, vols[t - 1], n - t + 1, spot, mean_rate)?.1
            }
        };
        let y_new = path.returns[t - 1];
        let r = cfg.rates[t - 1];
        let s_new = s * (y_new - r).exp();
        v += phi * (s_new - s);
        weights.push(phi);
        spot *= y_new.exp();
        s = s_new;
        y = y_new;
        if let Some(tr) = tracker.as_mut() {
            tr.push(y_new)?;
        }
    }
    let liability = cfg.payoff.discounted(s, cfg.beta_n());
    Ok(PathOutcome {
        v0,
        v_n: v,
        error: liability - v,
        weights,
    })
}

/// Runs one hedger over all paths in parallel.
pub fn run_strategy(hedger: &Hedger<'_>, paths: &[MarketPath], s0: f64) -> Result<HedgeSimResult> {
    let uniform;
    let hedger = match hedger {
        Hedger::Optimal {
            tables,
            filter_model,
            policy,
        } => {
            if *policy == RegimePolicy::Known && filter_model.num_regimes() != tables.num_regimes()
            {
                return Err(ArhmmError::InvalidInput(
                    "known regimes need the tables' own model".into(),
                ));
            }
            uniform = uniform_prior(filter_model)?;
            Hedger::Optimal {
                tables,
                filter_model: &uniform,
                policy: *policy,
            }
        }
        other => *other,
    };
    let outcomes: Vec<PathOutcome> = paths
        .par_iter()
        .map(|p| hedge_path(&hedger, p, s0))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let stats = hedging_error_stats(&errors)?;
    Ok(HedgeSimResult {
        paths: outcomes,
        stats,
    })
}

/// Simulates `n_paths` scenarios from `model` and hedges each with the optimal strategy.
pub fn simulate_hedging(
    model: &ArhmmModel,
    tables: &HedgeTables,
    s0: f64,
    n_paths: usize,
    policy: RegimePolicy,
    seed: u64,
) -> Result<HedgeSimResult> {
    let paths = simulate_market_paths(model, tables.n_steps(), n_paths, BURN_IN, seed)?;
    run_strategy(
        &Hedger::Optimal {
            tables,
            filter_model: model,
            policy,
        },
        &paths,
        s0,
    )
}
