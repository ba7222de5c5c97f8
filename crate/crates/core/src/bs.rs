//! Black-Scholes closed forms.

use crate::error::{ArhmmError, Result};
use crate::gof::norm_cdf;
use crate::hedge::OptionKind;

/// Price and spot delta of a European option. `vol`, `rate`, `div` and `t` share one time
/// unit (years, days, ...).
pub fn black_scholes_price_delta(
    s: f64,
    k: f64,
    vol: f64,
    rate: f64,
    div: f64,
    t: f64,
    kind: OptionKind,
) -> (f64, f64) {
    let sd = vol * t.sqrt();
    let fwd_disc = (-div * t).exp();
    let k_disc = k * (-rate * t).exp();
    let d1 = ((s / k).ln() + (rate - div) * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => (
            s * fwd_disc * norm_cdf(d1) - k_disc * norm_cdf(d2),
            fwd_disc * norm_cdf(d1),
        ),
        OptionKind::Put => (
            k_disc * norm_cdf(-d2) - s * fwd_disc * norm_cdf(-d1),
            -fwd_disc * norm_cdf(-d1),
        ),
    }
}

/// Volatility reproducing `price`, found by bisection on the monotone price map.
pub fn implied_vol_from_price(
    price: f64,
    s: f64,
    k: f64,
    rate: f64,
    div: f64,
    t: f64,
    kind: OptionKind,
) -> Result<f64> {
    if !(s > 0.0 && k > 0.0 && t > 0.0 && price.is_finite()) {
        return Err(ArhmmError::InvalidInput(
            "implied vol needs positive s, k, t and a finite price".into(),
        ));
    }
    let fwd_s = s * (-div * t).exp();
    let k_disc = k * (-rate * t).exp();
    let (lower, upper) = match kind {
        OptionKind::Call => ((fwd_s - k_disc).max(0.0), fwd_s),
        OptionKind::Put => ((k_disc - fwd_s).max(0.0), k_disc),
    };
    if !(price > lower && price < upper) {
        return Err(ArhmmError::NoSolution(format!(
            "price {price} outside the no-arbitrage range ({lower}, {upper})"
        )));
    }
    let f = |v: f64| black_scholes_price_delta(s, k, v, rate, div, t, kind).0 - price;
    let (mut lo, mut hi) = (1e-12, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(ArhmmError::NoSolution(format!(
                "no volatility reaches price {price}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
