use nalgebra::DMatrix;
use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

use super::*;

fn two_regime() -> ArhmmModel {
    ArhmmModel::univariate(
        &[(0.0005, 0.1, 0.008), (-0.001, -0.2, 0.02)],
        DMatrix::from_row_slice(2, 2, &[0.98, 0.02, 0.05, 0.95]),
    )
    .unwrap()
}

fn small_grid() -> GridSpec {
    GridSpec {
        n_y: 31,
        n_s: 81,
        coverage: 5.0,
        n_sim: 4000,
        seed: 3,
    }
}

fn bs_market(days: usize, first: usize, seed: u64) -> SyntheticMarket {
    let spec = SyntheticSpec {
        days,
        first_inception: first,
        spacing: 20,
        maturity_days: 10,
        moneyness: vec![0.97, 1.0, 1.03],
        kinds: vec![OptionKind::Call, OptionKind::Put],
        s0: 2000.0,
        daily_rate: 0.0001,
        pricing: SyntheticPricing::BlackScholes { vol: 0.011 },
        daily_quotes: true,
        seed,
    };
    synthetic_market(&two_regime(), &spec).unwrap()
}

fn fixed_config(model: ArhmmModel) -> BacktestConfig {
    BacktestConfig {
        window_days: 50,
        grid: small_grid(),
        fixed_model: Some(model),
        ..Default::default()
    }
}

#[test]
fn closed_loop_market_at_model_price_is_fair() {
    let model = two_regime();
    let spec = SyntheticSpec {
        days: 1300,
        first_inception: 60,
        spacing: 10,
        maturity_days: 10,
        moneyness: vec![0.96, 1.0, 1.04],
        // calls only: without put-call pairs the carry rate is the configured one, so the
        // backtest rebuilds exactly the generating tables
        kinds: vec![OptionKind::Call],
        s0: 1500.0,
        daily_rate: 0.0252 / crate::model::TRADING_DAYS,
        pricing: SyntheticPricing::Model { grid: small_grid() },
        daily_quotes: false,
        seed: 11,
    };
    let market = synthetic_market(&model, &spec).unwrap();
    let cfg = BacktestConfig {
        strategies: vec![Strategy::BsImplied, Strategy::OhArhmm],
        policy: RegimePolicy::Known,
        regime_path: Some(market.regimes.clone()),
        parity_rate: 0.0252,
        ..fixed_config(model)
    };
    let report = run_backtest(&market.quotes, &market.returns, &cfg).unwrap();
    assert!(report.skipped.is_empty(), "{:?}", report.skipped.first());
    let oh = report.strategy(Strategy::OhArhmm).unwrap();
    assert_eq!(oh.trades.len(), market.quotes.len());
    for t in &oh.trades {
        assert_eq!(t.direction, Direction::None, "{t:?}");
        assert_eq!(t.pnl, 0.0);
    }
    assert_eq!(oh.total_pnl, 0.0);

    // options sharing an inception date are correlated: average per date first
    let mut by_date: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for t in &oh.trades {
        let e = by_date.entry(t.date.as_str()).or_default();
        e.0 += t.sale_pnl;
        e.1 += 1;
    }
    let means: Vec<f64> = by_date.values().map(|(s, c)| s / *c as f64).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    let se = (var / means.len() as f64).sqrt();
    assert!(
        m.abs() <= 4.0 * se,
        "mean sale P&L {m} with standard error {se}"
    );

    let bsm = report.strategy(Strategy::BsImplied).unwrap();
    assert_eq!(bsm.stats.bias, 0.0);
    assert_eq!(bsm.total_pnl, 0.0);
}

#[test]
fn implied_volatility_strategy_has_zero_bias() {
    let market = bs_market(200, 60, 5);
    let cfg = BacktestConfig {
        strategies: vec![Strategy::BsImplied, Strategy::Bs],
        ..fixed_config(two_regime())
    };
    let report = run_backtest(&market.quotes, &market.returns, &cfg).unwrap();
    let bsm = report.strategy(Strategy::BsImplied).unwrap();
    assert!(!bsm.trades.is_empty());
    assert_eq!(bsm.stats.bias, 0.0);
    for t in &bsm.trades {
        assert_eq!(t.market, t.theoretical);
        assert_eq!(t.direction, Direction::None);
    }
    // the recalibrated hedge of a Black-Scholes market tracks closely
    assert!(bsm.stats.rmse < 1.0, "rmse {}", bsm.stats.rmse);
}

#[test]
fn later_data_does_not_leak_into_earlier_decisions() {
    let market = bs_market(260, 150, 8);
    let cfg = BacktestConfig {
        window_days: 120,
        regimes: 2,
        em: EmConfig {
            max_iter: 40,
            ..Default::default()
        },
        grid: small_grid(),
        ..Default::default()
    };
    let cut = 175;
    let mut returns = market.returns.clone();
    for t in cut + 1..returns.len() {
        returns.values[t] = if t % 2 == 0 { 0.3 } else { -0.25 };
    }
    let quotes: Vec<OptionQuote> = market
        .quotes
        .iter()
        .map(|q| {
            if returns.position(&q.date).unwrap() > cut {
                OptionQuote {
                    mid: q.mid * 3.0,
                    underlying_close: q.underlying_close * 1.5,
                    ..q.clone()
                }
            } else {
                q.clone()
            }
        })
        .collect();
    let clean = run_backtest(&market.quotes, &market.returns, &cfg).unwrap();
    let dirty = run_backtest(&quotes, &returns, &cfg).unwrap();

    let mut compared = 0;
    for (k, inc) in clean.inceptions.iter().enumerate() {
        let t0 = market.returns.position(&inc.date).unwrap();
        if t0 > cut {
            continue;
        }
        assert_eq!(&dirty.inceptions[k], inc);
        for (a, b) in clean.strategies.iter().zip(&dirty.strategies) {
            assert_eq!(
                a.trades[k].theoretical, b.trades[k].theoretical,
                "{}",
                a.strategy
            );
            let known = (cut - t0 + 1).min(a.weights[k].len());
            assert_eq!(
                a.weights[k][..known],
                b.weights[k][..known],
                "{} on {}",
                a.strategy,
                inc.date
            );
            compared += 1;
        }
    }
    assert!(compared >= 2 * Strategy::ALL.len());
}

#[test]
fn outputs_scale_with_the_underlying() {
    let market = bs_market(150, 60, 13);
    let c = 7.25;
    let scaled: Vec<OptionQuote> = market
        .quotes
        .iter()
        .map(|q| OptionQuote {
            strike: q.strike * c,
            mid: q.mid * c,
            underlying_close: q.underlying_close * c,
            ..q.clone()
        })
        .collect();
    let cfg = BacktestConfig {
        normalize: false,
        ..fixed_config(two_regime())
    };
    let a = run_backtest(&market.quotes, &market.returns, &cfg).unwrap();
    let b = run_backtest(&scaled, &market.returns, &cfg).unwrap();
    for (ra, rb) in a.strategies.iter().zip(&b.strategies) {
        assert_eq!(ra.trades.len(), rb.trades.len());
        for (ta, tb) in ra.trades.iter().zip(&rb.trades) {
            let tol = 1e-9 * c * ta.strike;
            assert!(
                (tb.theoretical - c * ta.theoretical).abs() < tol,
                "{} {ta:?} {tb:?}",
                ra.strategy
            );
            assert!(
                (tb.error - c * ta.error).abs() < tol,
                "{} {ta:?} {tb:?}",
                ra.strategy
            );
            assert!((tb.sale_pnl - c * ta.sale_pnl).abs() < tol);
        }
    }
    // normalized output does not depend on the quote units at all
    let cfg = fixed_config(two_regime());
    let na = run_backtest(&market.quotes, &market.returns, &cfg).unwrap();
    let nb = run_backtest(&scaled, &market.returns, &cfg).unwrap();
    for (ra, rb) in na.strategies.iter().zip(&nb.strategies) {
        for (ta, tb) in ra.trades.iter().zip(&rb.trades) {
            assert!((ta.error - tb.error).abs() < 1e-9 * ta.strike);
        }
    }
}

#[test]
fn short_history_and_band_filtering() {
    let market = bs_market(200, 30, 21);
    let mut quotes = market.quotes.clone();
    // an inception far out of the money never trades; its later quotes do not start a new option
    let t0 = 90;
    let close = market.closes[t0];
    for t in t0..t0 + 3 {
        quotes.push(OptionQuote {
            date: market.returns.dates[t].clone(),
            kind: OptionKind::Call,
            strike: 1.3 * close,
            maturity_days: 10 - (t - t0),
            mid: 0.01,
            underlying_close: market.closes[t],
        });
    }
    let cfg = BacktestConfig {
        strategies: vec![Strategy::Bs],
        ..fixed_config(two_regime())
    };
    let cfg = BacktestConfig {
        window_days: 60,
        ..cfg
    };
    let report = run_backtest(&quotes, &market.returns, &cfg).unwrap();
    let trades = &report.strategy(Strategy::Bs).unwrap().trades;
    assert!(trades.iter().all(|t| t.strike != 1.3 * close));
    assert!(trades
        .iter()
        .all(|t| market.returns.position(&t.date).unwrap() + 1 >= 60));
    // the inception at index 30 lacks a full window
    assert!(report
        .skipped
        .iter()
        .any(|s| s.date == market.returns.dates[30] && s.reason.contains("window")));
    assert!(report
        .skipped
        .iter()
        .all(|s| s.date != market.returns.dates[t0 + 1]));
}

#[test]
fn cumulative_pnl_ends_at_total() {
    let market = bs_market(200, 60, 2);
    let report =
        run_backtest(&market.quotes, &market.returns, &fixed_config(two_regime())).unwrap();
    let (dates, cols) = report.cumulative_pnl();
    let distinct: BTreeSet<&String> = report.inceptions.iter().map(|i| &i.date).collect();
    assert_eq!(dates.len(), distinct.len());
    for (s, series) in cols {
        let total = report.strategy(s).unwrap().total_pnl;
        assert!((series.last().unwrap() - total).abs() < 1e-9 * (1.0 + total.abs()));
    }
}

#[test]
fn strategy_names_roundtrip() {
    for s in Strategy::ALL {
        assert_eq!(s.key().parse::<Strategy>().unwrap(), s);
        assert_eq!(s.label().parse::<Strategy>().unwrap(), s);
    }
    assert!("oh-garch".parse::<Strategy>().is_err());
}

#[test]
fn known_regimes_require_a_path() {
    let market = bs_market(120, 60, 1);
    let cfg = BacktestConfig {
        policy: RegimePolicy::Known,
        ..fixed_config(two_regime())
    };
    assert!(run_backtest(&market.quotes, &market.returns, &cfg).is_err());
}

proptest! {
    #[test]
    fn trade_direction_follows_the_price_gap(market in 0.01f64..100.0, theo in 0.01f64..100.0, error in -50.0f64..50.0) {
        let t = TradeRecord {
            strategy: Strategy::OhArhmm,
            date: "d".into(),
            kind: OptionKind::Call,
            strike: 100.0,
            maturity_days: 5,
            market,
            theoretical: theo,
            direction: Direction::None,
            error,
            pnl: 0.0,
            sale_pnl: 0.0,
        }
        .settle();
        prop_assert_eq!(t.sale_pnl, (market - theo) - error);
        match t.direction {
            Direction::Sell => { prop_assert!(market > theo); prop_assert_eq!(t.pnl, t.sale_pnl); }
            Direction::Buy => { prop_assert!(market < theo); prop_assert_eq!(t.pnl, -t.sale_pnl); }
            Direction::None => { prop_assert!((market - theo).abs() <= PRICE_TIE_TOL * market.max(theo)); prop_assert_eq!(t.pnl, 0.0); }
        }
    }
}
