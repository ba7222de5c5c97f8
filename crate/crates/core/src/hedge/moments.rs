//! Exponentially tilted moments of a Gaussian restricted to an interval.

use libm::erfc;

use crate::error::{ArhmmError, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Returns `(E[e^{tX} 1(a<X<b)], E[X e^{tX} 1(a<X<b)], E[X^2 e^{tX} 1(a<X<b)])` for
/// `X ~ N(mu, sigma^2)`. Infinite limits are allowed. `sigma = 0` is treated as a point
/// mass at `mu` counted on `[a, b)`.
pub fn truncated_gaussian_moments(
    theta: f64,
    mu: f64,
    sigma: f64,
    a: f64,
    b: f64,
) -> Result<(f64, f64, f64)> {
    if !(sigma >= 0.0) || !theta.is_finite() || !mu.is_finite() || a.is_nan() || b.is_nan() {
        return Err(ArhmmError::InvalidInput(format!(
            "truncated moments need finite theta, mu and sigma >= 0 (got {theta}, {mu}, {sigma})"
        )));
    }
    if !(a < b) {
        return Err(ArhmmError::InvalidInput(format!(
            "empty interval ({a}, {b})"
        )));
    }
    if sigma == 0.0 {
        if a <= mu && mu < b {
            let m = (theta * mu).exp();
            if !m.is_finite() {
                return Err(ArhmmError::Overflow(format!("exp({})", theta * mu)));
            }
            return Ok((m, mu * m, mu * mu * m));
        }
        return Ok((0.0, 0.0, 0.0));
    }
    let shift = mu + theta * sigma * sigma;
    let log_scale = theta * mu + 0.5 * theta * theta * sigma * sigma;
    let (ka, kb) = ((a - shift) / sigma, (b - shift) / sigma);
    if log_scale.abs() < 700.0 && ka < 37.0 && kb > -37.0 {
        let scale = log_scale.exp();
        let (lo, hi) = (Point::standard(ka), Point::standard(kb));
        let m0 = scale * cdf_diff(&lo, &hi);
        let e_pdf = scale * (hi.pdf - lo.pdf);
        let zpdf = |p: &Point| if p.pdf == 0.0 { 0.0 } else { p.kappa * p.pdf };
        let e_zpdf = scale * (zpdf(&hi) - zpdf(&lo));
        return assemble(shift, sigma, m0, e_pdf, e_zpdf);
    }
    // deep tails or large tilts: every term is carried as (sign, ln|x|) so nothing underflows
    // or overflows before the final product
    let mass = if ka >= 0.0 {
        log_diff(ln_tail(ka), ln_tail(kb))
    } else if kb <= 0.0 {
        log_diff(ln_tail(kb), ln_tail(ka))
    } else {
        (1.0, (-(ln_tail(ka).exp() + ln_tail(kb).exp())).ln_1p())
    };
    let dpdf = signed_sub((1.0, ln_pdf(kb)), (1.0, ln_pdf(ka)));
    let dzpdf = signed_sub(kappa_pdf(kb), kappa_pdf(ka));
    let m0 = scaled(log_scale, mass)?;
    let e_pdf = scaled(log_scale, dpdf)?;
    let e_zpdf = scaled(log_scale, dzpdf)?;
    assemble(shift, sigma, m0, e_pdf, e_zpdf)
}

fn assemble(shift: f64, sigma: f64, m0: f64, e_pdf: f64, e_zpdf: f64) -> Result<(f64, f64, f64)> {
    let m1 = shift * m0 - sigma * e_pdf;
    // pdf'(z) = -z pdf(z)
    let m2 = sigma * sigma * m0 + shift * m1 + sigma * (sigma * (-e_zpdf) - shift * e_pdf);
    for v in [m0, m1, m2] {
        if !v.is_finite() {
            return Err(ArhmmError::Overflow("truncated moment".into()));
        }
    }
    Ok((m0, m1, m2))
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn ln_pdf(k: f64) -> f64 {
    -0.5 * k * k - LN_SQRT_2PI
}

fn kappa_pdf(k: f64) -> (f64, f64) {
    if k.is_infinite() {
        return (0.0, f64::NEG_INFINITY);
    }
    (k.signum(), k.abs().ln() + ln_pdf(k))
}

/// Log of the normal tail beyond `|k|`.
fn ln_tail(k: f64) -> f64 {
    let x = k.abs();
    if x < 37.0 {
        (0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)).ln()
    } else if x.is_infinite() {
        f64::NEG_INFINITY
    } else {
        let u = 1.0 / (x * x);
        ln_pdf(x) - x.ln() + (-u * (1.0 - u * (3.0 - u * (15.0 - 105.0 * u)))).ln_1p()
    }
}

/// `e^p - e^q` for `p >= q`, as `(sign, ln|.|)`.
fn log_diff(p: f64, q: f64) -> (f64, f64) {
    if p == f64::NEG_INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    (1.0, p + (-(q - p).exp()).ln_1p())
}

fn signed_sub(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
    let (sx, lx) = if x.0 == 0.0 {
        (0.0, f64::NEG_INFINITY)
    } else {
        x
    };
    let (sy, ly) = if y.0 == 0.0 {
        (0.0, f64::NEG_INFINITY)
    } else {
        y
    };
    if sy == 0.0 || ly == f64::NEG_INFINITY {
        return (sx, lx);
    }
    if sx == 0.0 || lx == f64::NEG_INFINITY {
        return (-sy, ly);
    }
    if sx != sy {
        let (hi, lo) = if lx >= ly { (lx, ly) } else { (ly, lx) };
        return (sx, hi + (lo - hi).exp().ln_1p());
    }
    if lx >= ly {
        let (s, l) = log_diff(lx, ly);
        (sx * s, l)
    } else {
        let (s, l) = log_diff(ly, lx);
        (-sx * s, l)
    }
}

fn scaled(log_scale: f64, (sign, ln_abs): (f64, f64)) -> Result<f64> {
    if sign == 0.0 || ln_abs == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let v = sign * (log_scale + ln_abs).exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ArhmmError::Overflow(format!("exp({log_scale} + {ln_abs})")))
    }
}

/// Standardized endpoint of an integration interval: `kappa`, the smaller normal tail
/// beyond it and the standard normal density there.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Point {
    pub kappa: f64,
    pub tail: f64,
    pub pdf: f64,
}

impl Point {
    #[inline]
    pub fn new(x: f64, shift: f64, sigma: f64) -> Self {
        Self::standard((x - shift) / sigma)
    }

    #[inline]
    pub fn standard(kappa: f64) -> Self {
        if kappa.is_infinite() {
            return Point {
                kappa,
                tail: 0.0,
                pdf: 0.0,
            };
        }
        let tail = 0.5 * erfc(kappa.abs() * std::f64::consts::FRAC_1_SQRT_2);
        let pdf = INV_SQRT_2PI * (-0.5 * kappa * kappa).exp();
        Point { kappa, tail, pdf }
    }
}

/// `Phi(hi) - Phi(lo)` evaluated on the side that avoids cancellation.
#[inline]
pub(crate) fn cdf_diff(lo: &Point, hi: &Point) -> f64 {
    if lo.kappa >= 0.0 {
        lo.tail - hi.tail
    } else if hi.kappa <= 0.0 {
        hi.tail - lo.tail
    } else {
        1.0 - lo.tail - hi.tail
    }
}

/// Gaussian `N(mean, sd^2)` with its tilts by `e^{theta x}` for theta = 0, 1, 2 precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tilted {
    pub mean: f64,
    pub sd: f64,
    pub shift: [f64; 3],
    pub scale: [f64; 3],
}

/// Endpoint data for all three tilts.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ends {
    pub p: [Point; 3],
}

impl Tilted {
    pub fn new(mean: f64, sd: f64) -> Self {
        let mut shift = [0.0; 3];
        let mut scale = [0.0; 3];
        for k in 0..3 {
            let t = k as f64;
            shift[k] = mean + t * sd * sd;
            scale[k] = (t * mean + 0.5 * t * t * sd * sd).exp();
        }
        Tilted {
            mean,
            sd,
            shift,
            scale,
        }
    }

    /// Range outside of which every tilt has negligible mass.
    pub fn window(&self) -> (f64, f64) {
        (self.mean - 12.0 * self.sd, self.shift[2] + 12.0 * self.sd)
    }

    #[inline]
    pub fn ends(&self, x: f64) -> Ends {
        let mut p = [Point::standard(0.0); 3];
        for k in 0..3 {
            p[k] = Point::new(x, self.shift[k], self.sd);
        }
        Ends { p }
    }

    /// `(E[e^{kX} 1], E[X e^{kX} 1])` over `(lo, hi)` for tilt `k`.
    #[inline]
    pub fn piece(&self, k: usize, lo: &Ends, hi: &Ends) -> (f64, f64) {
        let m0 = self.scale[k] * cdf_diff(&lo.p[k], &hi.p[k]);
        let m1 = self.shift[k] * m0 - self.sd * self.scale[k] * (hi.p[k].pdf - lo.p[k].pdf);
        (m0, m1)
    }
}
