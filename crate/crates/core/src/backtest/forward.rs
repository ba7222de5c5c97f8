//! Implied forwards, normalization and quote-level implied volatility.

use super::OptionQuote;
use crate::bs::implied_vol_from_price;
use crate::error::{ArhmmError, Result};
use crate::hedge::OptionKind;

/// Forward value at maturity implied by put-call parity, with the daily carry rate and
/// one-day discount factor it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedForward {
    pub forward: f64,
    /// `(1/n) ln(F_n / S_0)`.
    pub daily_rate: f64,
    /// `e^{-daily_rate}`.
    pub beta: f64,
}

/// `F_n = (C - P) e^{r n} + K` and the carry rate relative to `s0`. `rate` is per day.
pub fn implied_forward(
    call_mid: f64,
    put_mid: f64,
    strike: f64,
    rate: f64,
    n_days: usize,
    s0: f64,
) -> Result<ImpliedForward> {
    if !(call_mid > 0.0 && put_mid > 0.0 && strike > 0.0 && s0 > 0.0) || n_days == 0 {
        return Err(ArhmmError::InvalidInput(
            "implied forward needs positive prices, strike, spot and horizon".into(),
        ));
    }
    let forward = (call_mid - put_mid) * (rate * n_days as f64).exp() + strike;
    if !(forward > 0.0) {
        return Err(ArhmmError::NoSolution(format!(
            "parity gives a non-positive forward {forward}"
        )));
    }
    let daily_rate = (forward / s0).ln() / n_days as f64;
    Ok(ImpliedForward {
        forward,
        daily_rate,
        beta: (-daily_rate).exp(),
    })
}

/// Among strikes quoted as both call and put, the one where the two mids are closest,
/// returned as `(strike, call_mid, put_mid)`.
pub fn parity_strike<'a, I>(quotes: I) -> Option<(f64, f64, f64)>
where
    I: IntoIterator<Item = &'a OptionQuote>,
{
    let mut calls: Vec<(f64, f64)> = Vec::new();
    let mut puts: Vec<(f64, f64)> = Vec::new();
    for q in quotes {
        match q.kind {
            OptionKind::Call => calls.push((q.strike, q.mid)),
            OptionKind::Put => puts.push((q.strike, q.mid)),
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &(k, c) in &calls {
        for &(kp, p) in &puts {
            if kp == k && best.is_none_or(|(_, bc, bp)| (c - p).abs() < (bc - bp).abs()) {
                best = Some((k, c, p));
            }
        }
    }
    best
}

/// Rescales quotes and the underlying path so the path starts at 100. Strikes, mids and
/// closes are multiplied by `100 / path[0]`; moneyness is unchanged.
pub fn normalize_to_100(
    quotes: &[OptionQuote],
    path: &[f64],
) -> Result<(Vec<OptionQuote>, Vec<f64>)> {
    let s0 = *path
        .first()
        .ok_or_else(|| ArhmmError::InvalidInput("empty underlying path".into()))?;
    if !(s0 > 0.0) {
        return Err(ArhmmError::InvalidInput(format!(
            "initial underlying {s0} must be positive"
        )));
    }
    let c = 100.0 / s0;
    let quotes = quotes
        .iter()
        .map(|q| OptionQuote {
            strike: q.strike * c,
            mid: q.mid * c,
            underlying_close: q.underlying_close * c,
            ..q.clone()
        })
        .collect();
    Ok((quotes, path.iter().map(|s| s * c).collect()))
}

/// Volatility per day that reprices `quote` at spot `spot` with daily rate `rate`.
pub fn implied_vol(quote: &OptionQuote, rate: f64, spot: f64) -> Result<f64> {
    implied_vol_from_price(
        quote.mid,
        spot,
        quote.strike,
        rate,
        0.0,
        quote.maturity_days as f64,
        quote.kind,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::black_scholes_price_delta;

    fn quote(kind: OptionKind, strike: f64, mid: f64) -> OptionQuote {
        OptionQuote {
            date: "d".into(),
            kind,
            strike,
            maturity_days: 20,
            mid,
            underlying_close: 100.0,
        }
    }

    #[test]
    fn parity_at_the_money_gives_strike() {
        let f = implied_forward(3.0, 3.0, 100.0, 0.0003, 20, 100.0).unwrap();
        assert_eq!(f.forward, 100.0);
        assert_eq!(f.daily_rate, 0.0);
    }

    #[test]
    fn parity_arithmetic() {
        let f = implied_forward(5.0, 3.0, 100.0, 0.0, 30, 100.0).unwrap();
        assert!((f.forward - 102.0).abs() < 1e-12);
        // beta^n F_n = S_0
        assert!((f.beta.powi(30) * f.forward - 100.0).abs() < 1e-10);
        assert!(implied_forward(1.0, 200.0, 100.0, 0.0, 30, 100.0).is_err());
    }

    #[test]
    fn parity_strike_picks_closest_pair() {
        let qs = vec![
            quote(OptionKind::Call, 95.0, 7.0),
            quote(OptionKind::Put, 95.0, 2.0),
            quote(OptionKind::Call, 100.0, 4.0),
            quote(OptionKind::Put, 100.0, 3.5),
            quote(OptionKind::Call, 105.0, 1.0),
        ];
        assert_eq!(parity_strike(&qs), Some((100.0, 4.0, 3.5)));
        assert_eq!(parity_strike(&qs[4..]), None);
    }

    #[test]
    fn normalization_preserves_moneyness_and_is_idempotent() {
        let q = OptionQuote {
            underlying_close: 2000.0,
            ..quote(OptionKind::Call, 2100.0, 50.0)
        };
        let (nq, np) = normalize_to_100(&[q], &[2000.0, 2020.0]).unwrap();
        assert!((nq[0].strike - 105.0).abs() < 1e-12);
        assert!((nq[0].strike / nq[0].underlying_close - 1.05).abs() < 1e-15);
        assert!((np[1] - 101.0).abs() < 1e-12);
        let (again, path2) = normalize_to_100(&nq, &np).unwrap();
        assert_eq!(again, nq);
        assert_eq!(path2, np);
    }

    #[test]
    fn quote_implied_vol_roundtrip() {
        let (p, _) =
            black_scholes_price_delta(100.0, 102.0, 0.012, 0.0001, 0.0, 20.0, OptionKind::Put);
        let q = quote(OptionKind::Put, 102.0, p);
        assert!((implied_vol(&q, 0.0001, 100.0).unwrap() - 0.012).abs() < 1e-9);
    }
}
