//! Quadratic-optimal discrete-time hedging under a univariate ARHMM.
//!
//! Prices are handled in discounted units throughout: `s` is the discounted spot
//! `beta_t S_t` and the terminal liability is `Psi_n(s)`. Tables are built backward on an
//! `s x y` grid per regime and evaluated off-grid by interpolation.

mod cache;
mod grids;
mod interp;
mod mc;
mod moments;
mod sim;
mod strategy;
mod tables;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};

pub use cache::{read_tables, tables_cache_key, write_tables, CACHE_VERSION};
pub use grids::{build_grids, GridSpec};
pub use interp::{bilinear_coeffs, interp_bilinear, interp_linear, piecewise_linear_coeffs};
pub use mc::mc_backward_tables;
pub use moments::truncated_gaussian_moments;
pub use sim::{
    hedge_path, run_strategy, simulate_hedging, simulate_market_paths, HedgeSimResult, Hedger,
    MarketPath, PathOutcome, RegimePolicy, BURN_IN,
};
pub use strategy::{hedge_weights, price, RegimeChoice};
pub use tables::{
    backward_scalar_tables, backward_value_tables, build_tables, HedgeTables, ScalarTables,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

impl std::str::FromStr for OptionKind {
    type Err = ArhmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(ArhmmError::InvalidInput(format!(
                "unknown option kind '{other}'"
            ))),
        }
    }
}

/// Terminal liability. Custom payoffs map the discounted terminal spot to the discounted
/// claim directly.
#[derive(Clone)]
pub enum Payoff {
    Vanilla { kind: OptionKind, strike: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Vanilla { kind, strike } => write!(f, "{kind}({strike})"),
            Payoff::Custom(_) => f.write_str("custom"),
        }
    }
}

impl Payoff {
    pub fn call(strike: f64) -> Self {
        Payoff::Vanilla {
            kind: OptionKind::Call,
            strike,
        }
    }

    pub fn put(strike: f64) -> Self {
        Payoff::Vanilla {
            kind: OptionKind::Put,
            strike,
        }
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Payoff::Custom(Arc::new(f))
    }

    /// `Psi_n(s)` given the terminal discount factor `beta_n`.
    pub fn discounted(&self, s: f64, beta_n: f64) -> f64 {
        match self {
            Payoff::Vanilla {
                kind: OptionKind::Call,
                strike,
            } => (s - beta_n * strike).max(0.0),
            Payoff::Vanilla {
                kind: OptionKind::Put,
                strike,
            } => (beta_n * strike - s).max(0.0),
            Payoff::Custom(f) => f(s),
        }
    }

    pub fn vanilla(&self) -> Option<(OptionKind, f64)> {
        match self {
            Payoff::Vanilla { kind, strike } => Some((*kind, *strike)),
            Payoff::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HedgeConfig {
    pub n_steps: usize,
    /// Per-period rates `r_1..r_n`.
    pub rates: Vec<f64>,
    pub payoff: Payoff,
    pub y_grid: Vec<f64>,
    /// Starts with the `0` sentinel.
    pub s_grid: Vec<f64>,
}

impl HedgeConfig {
    /// Constant per-period rate.
    pub fn new(
        n_steps: usize,
        rate: f64,
        payoff: Payoff,
        y_grid: Vec<f64>,
        s_grid: Vec<f64>,
    ) -> Result<Self> {
        let cfg = HedgeConfig {
            n_steps,
            rates: vec![rate; n_steps],
            payoff,
            y_grid,
            s_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(ArhmmError::InvalidInput(
                "n_steps must be at least 1".into(),
            ));
        }
        if self.rates.len() != self.n_steps {
            return Err(ArhmmError::InvalidInput(format!(
                "{} rates for {} steps",
                self.rates.len(),
                self.n_steps
            )));
        }
        if self.rates.iter().any(|r| !r.is_finite()) {
            return Err(ArhmmError::InvalidInput("rates must be finite".into()));
        }
        check_increasing(&self.y_grid, "y_grid", 1)?;
        check_increasing(&self.s_grid, "s_grid", 2)?;
        if self.s_grid[0] != 0.0 {
            return Err(ArhmmError::InvalidInput(
                "s_grid must start with the 0 sentinel".into(),
            ));
        }
        if let Some((_, k)) = self.payoff.vanilla() {
            if !(k > 0.0 && k.is_finite()) {
                return Err(ArhmmError::InvalidInput(format!(
                    "strike must be positive, got {k}"
                )));
            }
        }
        if !self
            .payoff
            .discounted(0.0, self.beta(self.n_steps))
            .is_finite()
        {
            return Err(ArhmmError::InvalidInput("payoff at 0 is not finite".into()));
        }
        Ok(())
    }

    /// `beta_t = exp(-(r_1 + ... + r_t))`, with `beta_0 = 1`.
    pub fn beta(&self, t: usize) -> f64 {
        (-self.rates[..t].iter().sum::<f64>()).exp()
    }

    pub fn beta_n(&self) -> f64 {
        self.beta(self.n_steps)
    }
}

fn check_increasing(g: &[f64], what: &str, min_len: usize) -> Result<()> {
    if g.len() < min_len {
        return Err(ArhmmError::InvalidInput(format!(
            "{what} needs at least {min_len} points"
        )));
    }
    if g.iter().any(|x| !x.is_finite()) || g.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ArhmmError::InvalidInput(format!(
            "{what} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_and_put_payoffs() {
        assert_eq!(Payoff::call(100.0).discounted(110.0, 1.0), 10.0);
        assert_eq!(Payoff::put(100.0).discounted(0.0, 0.9), 90.0);
        assert_eq!(Payoff::custom(|s| 2.0 * s).discounted(3.0, 0.5), 6.0);
    }

    #[test]
    fn config_validation() {
        let y = vec![-0.1, 0.0, 0.1];
        let s = vec![0.0, 50.0, 100.0];
        assert!(HedgeConfig::new(3, 0.0, Payoff::call(100.0), y.clone(), s.clone()).is_ok());
        assert!(HedgeConfig::new(0, 0.0, Payoff::call(100.0), y.clone(), s.clone()).is_err());
        assert!(HedgeConfig::new(3, 0.0, Payoff::call(100.0), vec![0.0, 0.0], s.clone()).is_err());
        assert!(HedgeConfig::new(3, 0.0, Payoff::call(100.0), y.clone(), vec![1.0, 2.0]).is_err());
        assert!(HedgeConfig::new(3, 0.0, Payoff::call(-1.0), y, s).is_err());
    }

    #[test]
    fn discount_factors() {
        let cfg = HedgeConfig::new(4, 0.01, Payoff::call(1.0), vec![0.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(cfg.beta(0), 1.0);
        assert!((cfg.beta_n() - (-0.04f64).exp()).abs() < 1e-15);
    }
}
