//! Pricing and hedge ratios read off built tables.

use super::interp::locate;
use super::tables::HedgeTables;
use crate::error::{ArhmmError, Result};

/// Regime information used to evaluate the tables.
#[derive(Debug, Clone, Copy)]
pub enum RegimeChoice<'a> {
    Index(usize),
    /// Blend of per-regime values weighted by these probabilities.
    Probabilities(&'a [f64]),
}

fn check_regime(tables: &HedgeTables, i: usize) -> Result<()> {
    if i >= tables.num_regimes() {
        return Err(ArhmmError::InvalidInput(format!(
            "regime {i} out of range for {} regimes",
            tables.num_regimes()
        )));
    }
    Ok(())
}

fn price_in(tables: &HedgeTables, s0: f64, y0: f64, i: usize) -> Result<f64> {
    check_regime(tables, i)?;
    let g1 = tables.scalars.g_at(1, i, y0);
    if !(g1 > 0.0) {
        return Err(ArhmmError::HedgeDegenerate {
            t: 1,
            y: y0,
            regime: i,
            reason: format!("g = {g1} is not positive"),
        });
    }
    Ok(tables.psi_at(0, i, s0, y0) / g1)
}

/// Inception price `Psi_0(s0, y0, i) / g_1(y0, i)`; `s0` is the spot at time 0.
pub fn price(tables: &HedgeTables, s0: f64, y0: f64, regime: RegimeChoice<'_>) -> Result<f64> {
    if !(s0 >= 0.0) {
        return Err(ArhmmError::InvalidInput(format!(
            "spot must be nonnegative, got {s0}"
        )));
    }
    match regime {
        RegimeChoice::Index(i) => price_in(tables, s0, y0, i),
        RegimeChoice::Probabilities(p) => {
            if p.len() != tables.num_regimes() {
                return Err(ArhmmError::InvalidInput(
                    "probability vector has the wrong length".into(),
                ));
            }
            let mut total = 0.0;
            for (i, w) in p.iter().enumerate() {
                if *w > 0.0 {
                    total += w * price_in(tables, s0, y0, i)?;
                }
            }
            Ok(total)
        }
    }
}

/// Number of shares held over period `t` (in `1..=n`), given the discounted spot
/// `s_prev`, the last return `y_prev`, the regime in force and the discounted portfolio
/// value `v_prev` at `t - 1`.
pub fn hedge_weights(
    tables: &HedgeTables,
    t: usize,
    s_prev: f64,
    y_prev: f64,
    regime: usize,
    v_prev: f64,
) -> Result<f64> {
    if !(s_prev > 0.0) {
        return Err(ArhmmError::InvalidInput(format!(
            "discounted spot must be positive, got {s_prev}"
        )));
    }
    if !(1..=tables.n_steps()).contains(&t) {
        return Err(ArhmmError::InvalidInput(format!(
            "hedging period {t} outside 1..={}",
            tables.n_steps()
        )));
    }
    check_regime(tables, regime)?;
    let a = tables.scalars.a_at(t, regime, y_prev);
    if a == 0.0 {
        // riskless step: hold the value function's slope
        let s = &tables.s_grid;
        let q = locate(s, s_prev);
        let lo = tables.psi_at(t - 1, regime, s[q], y_prev);
        let hi = tables.psi_at(t - 1, regime, s[q + 1], y_prev);
        return Ok((hi - lo) / (s[q + 1] - s[q]));
    }
    let h = tables.scalars.h_at(t, regime, y_prev);
    let big_a = tables.big_a_at(t, regime, s_prev, y_prev);
    Ok((big_a / a - v_prev * h) / s_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hedge::tables::tests::{small_config, two_regime};
    use crate::hedge::{build_tables, HedgeConfig, Payoff};
    use crate::model::{ArhmmModel, RegimeParams};
    use nalgebra::{DMatrix, DVector};

    fn riskless(cfg_s: Vec<f64>, payoff: Payoff) -> crate::hedge::HedgeTables {
        let reg =
            RegimeParams::zero_noise(DVector::from_element(1, 0.0), DMatrix::zeros(1, 1)).unwrap();
        let model =
            ArhmmModel::with_uniform_start(vec![reg], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let cfg = HedgeConfig::new(5, 0.0, payoff, vec![-0.01, 0.0, 0.01], cfg_s).unwrap();
        build_tables(&model, &cfg).unwrap()
    }

    #[test]
    fn riskless_call_is_intrinsic_and_fully_hedged() {
        let tables = riskless(
            vec![0.0, 60.0, 90.0, 100.0, 110.0, 150.0],
            Payoff::call(100.0),
        );
        let c0 = price(&tables, 110.0, 0.0, RegimeChoice::Index(0)).unwrap();
        assert!((c0 - 10.0).abs() < 1e-12);
        for t in 1..=5 {
            let phi = hedge_weights(&tables, t, 130.0, 0.0, 0, 30.0).unwrap();
            assert!((phi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn put_price_at_zero_spot_is_discounted_strike() {
        let model = two_regime();
        let cfg = small_config(4, Payoff::put(95.0));
        let tables = build_tables(&model, &cfg).unwrap();
        let want = cfg.beta_n() * 95.0;
        for i in 0..2 {
            for &y in &[-0.03, 0.0, 0.012] {
                let p = price(&tables, 0.0, y, RegimeChoice::Index(i)).unwrap();
                assert!((p - want).abs() < 1e-10 * want, "{p} vs {want}");
            }
        }
    }

    #[test]
    fn call_price_nondecreasing_in_spot() {
        let model = two_regime();
        let cfg = small_config(4, Payoff::call(100.0));
        let tables = build_tables(&model, &cfg).unwrap();
        for i in 0..2 {
            let mut last = f64::NEG_INFINITY;
            for &s in &cfg.s_grid {
                let p = price(&tables, s, 0.001, RegimeChoice::Index(i)).unwrap();
                // far out of the money the recursion cancels terms of order the strike, so
                // values near zero carry noise of order 1e-9 times the strike
                assert!(p >= last - 1e-9 * 100.0, "{p} < {last} at s={s}");
                last = p;
            }
        }
    }

    #[test]
    fn weights_are_affine_in_portfolio_value() {
        let model = two_regime();
        let cfg = small_config(3, Payoff::call(100.0));
        let tables = build_tables(&model, &cfg).unwrap();
        let (s, y) = (101.3, 0.004);
        let p0 = hedge_weights(&tables, 2, s, y, 1, 0.0).unwrap();
        let p1 = hedge_weights(&tables, 2, s, y, 1, 1.0).unwrap();
        let h = tables.scalars.h_at(2, 1, y);
        assert!(((p1 - p0) - (-h / s)).abs() < 1e-15);
    }

    #[test]
    fn blended_price_mixes_regime_prices() {
        let model = two_regime();
        let cfg = small_config(3, Payoff::call(100.0));
        let tables = build_tables(&model, &cfg).unwrap();
        let p0 = price(&tables, 100.0, 0.0, RegimeChoice::Index(0)).unwrap();
        let p1 = price(&tables, 100.0, 0.0, RegimeChoice::Index(1)).unwrap();
        let pb = price(
            &tables,
            100.0,
            0.0,
            RegimeChoice::Probabilities(&[0.25, 0.75]),
        )
        .unwrap();
        assert!((pb - (0.25 * p0 + 0.75 * p1)).abs() < 1e-12);
    }

    #[test]
    fn invalid_states_rejected() {
        let model = two_regime();
        let cfg = small_config(2, Payoff::call(100.0));
        let tables = build_tables(&model, &cfg).unwrap();
        assert!(hedge_weights(&tables, 1, 0.0, 0.0, 0, 1.0).is_err());
        assert!(hedge_weights(&tables, 3, 100.0, 0.0, 0, 1.0).is_err());
        assert!(hedge_weights(&tables, 1, 100.0, 0.0, 2, 1.0).is_err());
    }
}
