//! Synthetic option markets simulated from a known model, used as backtest fixtures.

use std::collections::HashMap;

use super::{normalized_tables, OptionQuote};
use crate::bs::black_scholes_price_delta;
use crate::error::{ArhmmError, Result};
use crate::hedge::{build_tables, price, GridSpec, HedgeTables, OptionKind, RegimeChoice, BURN_IN};
use crate::io::ReturnSeries;
use crate::model::ArhmmModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticPricing {
    /// Black-Scholes with a per-day volatility.
    BlackScholes { vol: f64 },
    /// Optimal-hedge price under the generating model, read in the true regime.
    Model { grid: GridSpec },
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub days: usize,
    /// Index of the first inception date.
    pub first_inception: usize,
    /// Days between inception dates.
    pub spacing: usize,
    pub maturity_days: usize,
    /// Strikes as multiples of the close on the inception date.
    pub moneyness: Vec<f64>,
    pub kinds: Vec<OptionKind>,
    pub s0: f64,
    pub daily_rate: f64,
    pub pricing: SyntheticPricing,
    /// Also quote every live contract on each later day (Black-Scholes pricing only).
    pub daily_quotes: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub returns: ReturnSeries,
    /// Regime behind each return.
    pub regimes: Vec<usize>,
    /// Underlying close on each date, after that date's return.
    pub closes: Vec<f64>,
    pub quotes: Vec<OptionQuote>,
}

/// Simulates `days` returns from `model` (after a stationary start and burn-in) and quotes
/// options on them.
pub fn synthetic_market(model: &ArhmmModel, spec: &SyntheticSpec) -> Result<SyntheticMarket> {
    if spec.days == 0 || spec.spacing == 0 || spec.maturity_days == 0 || !(spec.s0 > 0.0) {
        return Err(ArhmmError::InvalidInput(
            "days, spacing, maturity and spot must be positive".into(),
        ));
    }
    if spec.daily_quotes && matches!(spec.pricing, SyntheticPricing::Model { .. }) {
        return Err(ArhmmError::InvalidInput(
            "daily quotes need Black-Scholes pricing".into(),
        ));
    }
    let (ys, regimes) =
        model.simulate_stationary(spec.days, BURN_IN, &mut rng::seeded(spec.seed))?;
    let values = ys.column(0);
    let mut closes = Vec::with_capacity(spec.days);
    let mut cum = 0.0;
    for y in &values {
        cum += y;
        closes.push(spec.s0 * cum.exp());
    }
    let dates: Vec<String> = (0..spec.days).map(|t| format!("d{t:05}")).collect();

    let n = spec.maturity_days;
    let mut tables: HashMap<String, HedgeTables> = HashMap::new();
    let mut quotes = Vec::new();
    let mut t0 = spec.first_inception;
    while t0 + n < spec.days {
        let s0 = closes[t0];
        for &m in &spec.moneyness {
            for &kind in &spec.kinds {
                let strike = m * s0;
                let mid = match &spec.pricing {
                    SyntheticPricing::BlackScholes { vol } => {
                        black_scholes_price_delta(
                            s0,
                            strike,
                            *vol,
                            spec.daily_rate,
                            0.0,
                            n as f64,
                            kind,
                        )
                        .0
                    }
                    SyntheticPricing::Model { grid } => {
                        let scale = 100.0 / s0;
                        let (cfg, key) = normalized_tables(
                            model,
                            n,
                            spec.daily_rate,
                            kind,
                            strike * scale,
                            grid,
                        )?;
                        if !tables.contains_key(&key) {
                            tables.insert(key.clone(), build_tables(model, &cfg)?);
                        }
                        let p = price(
                            &tables[&key],
                            100.0,
                            values[t0],
                            RegimeChoice::Index(regimes[t0]),
                        )?;
                        p / scale
                    }
                };
                if mid > 0.0 {
                    quotes.push(OptionQuote {
                        date: dates[t0].clone(),
                        kind,
                        strike,
                        maturity_days: n,
                        mid,
                        underlying_close: s0,
                    });
                }
                if spec.daily_quotes {
                    if let SyntheticPricing::BlackScholes { vol } = spec.pricing {
                        for t in t0 + 1..t0 + n {
                            let left = n - (t - t0);
                            let mid = black_scholes_price_delta(
                                closes[t],
                                strike,
                                vol,
                                spec.daily_rate,
                                0.0,
                                left as f64,
                                kind,
                            )
                            .0;
                            if mid > 0.0 {
                                quotes.push(OptionQuote {
                                    date: dates[t].clone(),
                                    kind,
                                    strike,
                                    maturity_days: left,
                                    mid,
                                    underlying_close: closes[t],
                                });
                            }
                        }
                    }
                }
            }
        }
        t0 += spec.spacing;
    }
    Ok(SyntheticMarket {
        returns: ReturnSeries::new(dates, values)?,
        regimes,
        closes,
        quotes,
    })
}
