//! EM estimation with a forward-backward smoother, and the likelihood-ratio
//! test of autoregressive regimes against plain HMM regimes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{ArhmmError, Result};
use crate::filter::{forward_from_table, log_density_table};
use crate::model::{spectral_radius, ArhmmModel, RegimeParams};
use crate::rng;
use crate::series::Series;

/// Smoothed regime probabilities from one E-step.
#[derive(Debug, Clone)]
pub struct SmoothedQuantities {
    pub n: usize,
    pub l: usize,
    /// `lambda_t(i)`, row-major `n x l`.
    pub lambda: Vec<f64>,
    /// `Lambda_t(i, j)` for `t = 1..n-1`, row-major `(n-1) x l x l`.
    pub big_lambda: Vec<f64>,
    /// Normalized backward variables, row-major `n x l`.
    pub eta_bar: Vec<f64>,
    /// Filtered probabilities, row-major `n x l`.
    pub eta: Vec<f64>,
    /// Log-likelihood of the model that produced these quantities.
    pub log_lik: f64,
}

impl SmoothedQuantities {
    pub fn lambda_row(&self, t: usize) -> &[f64] {
        &self.lambda[t * self.l..(t + 1) * self.l]
    }

    pub fn big_lambda_at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.big_lambda[(t * self.l + i) * self.l + j]
    }

    pub fn eta_bar_row(&self, t: usize) -> &[f64] {
        &self.eta_bar[t * self.l..(t + 1) * self.l]
    }
}

/// Forward-backward pass.
pub fn e_step(model: &ArhmmModel, y: &Series) -> Result<SmoothedQuantities> {
    let n = y.len();
    if n < 3 {
        return Err(ArhmmError::InvalidInput(
            "the smoother needs at least 3 observations".into(),
        ));
    }
    let l = model.num_regimes();
    let log_f = log_density_table(model, y)?;
    let (eta, log_lik) = forward_from_table(model, &log_f, n)?;
    let q = model.q();

    // u_t(j) = f_j(y_{t+1} | y_t) eta_bar_{t+1}(j), scaled by exp(-max)
    let mut u = vec![0.0; (n - 1) * l];
    let mut eta_bar = vec![0.0; n * l];
    eta_bar[(n - 1) * l..]
        .iter_mut()
        .for_each(|x| *x = 1.0 / l as f64);
    for t in (0..n - 1).rev() {
        let lf = &log_f[t * l..(t + 1) * l];
        let next = &eta_bar[(t + 1) * l..(t + 2) * l];
        let m = lf
            .iter()
            .zip(next)
            .filter(|(_, e)| **e > 0.0)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(ArhmmError::Underflow { step: t + 1 });
        }
        let ut = &mut u[t * l..(t + 1) * l];
        for j in 0..l {
            ut[j] = if next[j] > 0.0 {
                (lf[j] - m).exp() * next[j]
            } else {
                0.0
            };
        }
        let mut z = 0.0;
        for i in 0..l {
            let mut s = 0.0;
            for j in 0..l {
                s += q[(i, j)] * ut[j];
            }
            eta_bar[t * l + i] = s;
            z += s;
        }
        if !(z > 0.0 && z.is_finite()) {
            return Err(ArhmmError::Underflow { step: t + 1 });
        }
        eta_bar[t * l..(t + 1) * l].iter_mut().for_each(|x| *x /= z);
    }

    let mut lambda = vec![0.0; n * l];
    for t in 0..n {
        let row = &mut lambda[t * l..(t + 1) * l];
        let mut z = 0.0;
        for i in 0..l {
            row[i] = eta[t * l + i] * eta_bar[t * l + i];
            z += row[i];
        }
        if !(z > 0.0) {
            return Err(ArhmmError::Underflow { step: t + 1 });
        }
        row.iter_mut().for_each(|x| *x /= z);
    }

    let mut big = vec![0.0; (n - 1) * l * l];
    for t in 0..n - 1 {
        let block = &mut big[t * l * l..(t + 1) * l * l];
        let mut z = 0.0;
        for i in 0..l {
            let e = eta[t * l + i];
            for j in 0..l {
                let v = e * q[(i, j)] * u[t * l + j];
                block[i * l + j] = v;
                z += v;
            }
        }
        if !(z > 0.0) {
            return Err(ArhmmError::Underflow { step: t + 1 });
        }
        block.iter_mut().for_each(|x| *x /= z);
    }

    Ok(SmoothedQuantities {
        n,
        l,
        lambda,
        big_lambda: big,
        eta_bar,
        eta,
        log_lik,
    })
}

/// Parameters produced by one M-step.
#[derive(Debug, Clone)]
pub struct MStepOutput {
    pub regimes: Vec<RegimeParams>,
    pub q: DMatrix<f64>,
    /// Regimes whose AR matrix had to be shrunk back inside the unit circle.
    pub shrunk: Vec<usize>,
}

/// Maximization step. With `autoregressive == false` every `Phi_i` is held at zero.
pub fn m_step(y: &Series, sq: &SmoothedQuantities, autoregressive: bool) -> Result<MStepOutput> {
    let (n, l, d) = (sq.n, sq.l, y.dim());
    if y.len() != n {
        return Err(ArhmmError::InvalidInput(
            "series and smoothed quantities differ in length".into(),
        ));
    }

    let mut q = DMatrix::<f64>::zeros(l, l);
    for t in 0..n - 1 {
        for i in 0..l {
            for j in 0..l {
                q[(i, j)] += sq.big_lambda_at(t, i, j);
            }
        }
    }
    for i in 0..l {
        let s: f64 = q.row(i).sum();
        if !(s > 0.0) {
            return Err(ArhmmError::DegenerateRegime {
                regime: i,
                reason: "no transitions out of this regime carry weight".into(),
            });
        }
        for j in 0..l {
            q[(i, j)] /= s;
        }
    }

    let mut regimes = Vec::with_capacity(l);
    let mut shrunk = Vec::new();
    for i in 0..l {
        let (reg, was_shrunk) = fit_regime(y, sq, i, d, autoregressive)?;
        if was_shrunk {
            shrunk.push(i);
        }
        regimes.push(reg);
    }
    Ok(MStepOutput { regimes, q, shrunk })
}

fn degenerate(regime: usize, reason: impl Into<String>) -> ArhmmError {
    ArhmmError::DegenerateRegime {
        regime,
        reason: reason.into(),
    }
}

/// Weighted AR(1) regression for regime `i` over the pairs `(y_{t-1}, y_t)`.
fn fit_regime(
    y: &Series,
    sq: &SmoothedQuantities,
    i: usize,
    d: usize,
    autoregressive: bool,
) -> Result<(RegimeParams, bool)> {
    let n = sq.n;
    let total: f64 = (1..n).map(|t| sq.lambda[t * sq.l + i]).sum();
    if !(total > 1e-8) {
        return Err(degenerate(
            i,
            format!("total smoothed weight {total:e} is negligible"),
        ));
    }
    let w = |t: usize| sq.lambda[t * sq.l + i] / total;

    let mut ybar = vec![0.0; d];
    let mut ylow = vec![0.0; d];
    for t in 1..n {
        let wt = w(t);
        for a in 0..d {
            ybar[a] += wt * y.row(t)[a];
            ylow[a] += wt * y.row(t - 1)[a];
        }
    }

    let mut phi = DMatrix::<f64>::zeros(d, d);
    let mut was_shrunk = false;
    if autoregressive {
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut cross = DMatrix::<f64>::zeros(d, d);
        for t in 1..n {
            let wt = w(t);
            let (cur, prev) = (y.row(t), y.row(t - 1));
            for a in 0..d {
                let pa = prev[a] - ylow[a];
                let ca = cur[a] - ybar[a];
                for b in 0..d {
                    let pb = prev[b] - ylow[b];
                    gram[(a, b)] += wt * pa * pb;
                    cross[(a, b)] += wt * ca * pb;
                }
            }
        }
        let scale = gram.diagonal().amax();
        if !(scale > 0.0) {
            return Err(degenerate(i, "weighted lagged Gram matrix is zero"));
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| degenerate(i, "weighted lagged Gram matrix is singular"))?;
        // Phi = cross * gram^{-1}
        phi = chol.solve(&cross.transpose()).transpose();
        let rho = spectral_radius(&phi);
        if !rho.is_finite() {
            return Err(degenerate(i, "non-finite AR matrix"));
        }
        if rho >= 1.0 {
            log::warn!("regime {i}: AR spectral radius {rho:.6} >= 1, shrinking");
            phi *= 0.99 / rho;
            was_shrunk = true;
        }
    }

    let id = DMatrix::<f64>::identity(d, d);
    let rhs = DVector::from_fn(d, |a, _| {
        ybar[a] - (0..d).map(|b| phi[(a, b)] * ylow[b]).sum::<f64>()
    });
    let mu = (&id - &phi)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| degenerate(i, "I - Phi is singular"))?;

    // residuals e_t = y_t - ybar - Phi (y_{t-1} - ylow)
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut e = vec![0.0; d];
    for t in 1..n {
        let wt = w(t);
        let (cur, prev) = (y.row(t), y.row(t - 1));
        for a in 0..d {
            let mut v = cur[a] - ybar[a];
            for b in 0..d {
                v -= phi[(a, b)] * (prev[b] - ylow[b]);
            }
            e[a] = v;
        }
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += wt * e[a] * e[b];
            }
        }
    }
    cov = 0.5 * (&cov + cov.transpose());
    let reg = RegimeParams::new(mu, phi, cov).map_err(|e| degenerate(i, e.to_string()))?;
    Ok((reg, was_shrunk))
}

/// EM settings.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop when the log-likelihood gain falls below this.
    pub tol: f64,
    /// Fit with zero AR matrices first, then release them.
    pub warm_start: bool,
    /// Estimate AR matrices; `false` fits the plain HMM.
    pub autoregressive: bool,
    pub seed: u64,
    /// Perturbed re-initializations allowed after a degenerate regime.
    pub max_restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            warm_start: true,
            autoregressive: true,
            seed: 0,
            max_restarts: 3,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(ArhmmError::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ArhmmError::InvalidInput("tol must be > 0".into()));
        }
        Ok(())
    }

    /// Same settings with the AR matrices frozen at zero.
    pub fn hmm(&self) -> Self {
        Self {
            autoregressive: false,
            warm_start: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub model: ArhmmModel,
    pub log_lik: f64,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub restarts: usize,
}

/// Absolute slack allowed in the monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Fit an `l`-regime model by EM.
pub fn em_fit(y: &Series, l: usize, cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    if l == 0 {
        return Err(ArhmmError::InvalidInput("need at least one regime".into()));
    }
    if y.len() < 10 * l || y.len() < 3 {
        return Err(ArhmmError::InvalidInput(format!(
            "{} observations are too few for {l} regimes (need >= {})",
            y.len(),
            (10 * l).max(3)
        )));
    }
    if !y.is_finite() {
        return Err(ArhmmError::InvalidInput(
            "series contains non-finite values".into(),
        ));
    }
    let mut last_err = None;
    for attempt in 0..=cfg.max_restarts {
        let seed = if attempt == 0 {
            cfg.seed
        } else {
            rng::child_seed(cfg.seed, attempt as u64)
        };
        let init = initial_model(y, l, seed, attempt)?;
        match fit_from(y, init, cfg) {
            Ok(mut res) => {
                res.restarts = attempt;
                res.model = sort_by_volatility(&res.model)?;
                return Ok(res);
            }
            Err(e @ ArhmmError::DegenerateRegime { .. }) => {
                log::info!("EM attempt {attempt} hit a degenerate regime: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Run EM from a given starting model (no restarts, no final sorting).
pub fn fit_from(y: &Series, init: ArhmmModel, cfg: &EmConfig) -> Result<EmResult> {
    if cfg.autoregressive && cfg.warm_start {
        let first = run_em(y, init.without_autoregression()?, false, cfg)?;
        let second = run_em(y, first.model, true, cfg)?;
        let mut trace = first.loglik_trace;
        trace.extend(second.loglik_trace);
        return Ok(EmResult {
            model: second.model,
            log_lik: second.log_lik,
            iterations: first.iterations + second.iterations,
            loglik_trace: trace,
            converged: second.converged,
            restarts: 0,
        });
    }
    let start = if cfg.autoregressive {
        init
    } else {
        init.without_autoregression()?
    };
    run_em(y, start, cfg.autoregressive, cfg)
}

fn run_em(y: &Series, init: ArhmmModel, autoregressive: bool, cfg: &EmConfig) -> Result<EmResult> {
    let mut model = init;
    let mut sq = e_step(&model, y)?;
    let mut trace = vec![sq.log_lik];
    let mut converged = false;
    let mut iterations = 0;
    let mut skip_check = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let out = m_step(y, &sq, autoregressive)?;
        let next = ArhmmModel::new(out.regimes, out.q, model.eta0().clone())?;
        let next_sq = e_step(&next, y)?;
        let (prev_ll, ll) = (sq.log_lik, next_sq.log_lik);
        if !skip_check && out.shrunk.is_empty() && ll < prev_ll - MONOTONE_SLACK {
            return Err(ArhmmError::NonMonotone {
                iteration: iterations,
                previous: prev_ll,
                current: ll,
            });
        }
        skip_check = false;
        if !out.shrunk.is_empty() {
            // the next comparison starts from a projected point
            skip_check = true;
        }
        trace.push(ll);
        model = next;
        sq = next_sq;
        if out.shrunk.is_empty() && (ll - prev_ll).abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        model,
        log_lik: sq.log_lik,
        iterations,
        loglik_trace: trace,
        converged,
        restarts: 0,
    })
}

/// Volatility-bucket initialization: observations are split into `l` groups by
/// their distance from the sample mean, each group seeds one regime.
pub fn initial_model(y: &Series, l: usize, seed: u64, attempt: usize) -> Result<ArhmmModel> {
    let (n, d) = (y.len(), y.dim());
    let mean: Vec<f64> = (0..d)
        .map(|a| y.rows().map(|r| r[a]).sum::<f64>() / n as f64)
        .collect();
    let dist = |r: &[f64]| {
        r.iter()
            .zip(&mean)
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>()
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist(y.row(a)).total_cmp(&dist(y.row(b))));

    let mut total_var = vec![0.0; d];
    for r in y.rows() {
        for a in 0..d {
            total_var[a] += (r[a] - mean[a]).powi(2) / n as f64;
        }
    }
    let floor: Vec<f64> = total_var.iter().map(|v| (v * 1e-4).max(1e-300)).collect();

    let mut rng = rng::seeded(seed);
    let jitter = if attempt == 0 { 0.02 } else { 0.25 };
    let mut regimes = Vec::with_capacity(l);
    for k in 0..l {
        let idx = &order[k * n / l..(k + 1) * n / l];
        let m = idx.len().max(1) as f64;
        let mu: Vec<f64> = (0..d)
            .map(|a| idx.iter().map(|&t| y.row(t)[a]).sum::<f64>() / m)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for &t in idx {
            let r = y.row(t);
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / m;
                }
            }
        }
        for a in 0..d {
            let s: f64 = 1.0 + jitter * (2.0 * rng.gen::<f64>() - 1.0);
            cov[(a, a)] = cov[(a, a)] * s * s + floor[a];
        }
        // keep the bucket covariance well conditioned
        let diag = DMatrix::from_diagonal(&cov.diagonal());
        let cov = 0.9 * cov + 0.1 * diag;
        let mu = DVector::from_fn(d, |a, _| {
            mu[a] + jitter * total_var[a].sqrt() * 0.1 * (2.0 * rng.gen::<f64>() - 1.0)
        });
        regimes.push(RegimeParams::new(mu, DMatrix::zeros(d, d), cov)?);
    }
    let q = if l == 1 {
        DMatrix::from_element(1, 1, 1.0)
    } else {
        DMatrix::from_fn(l, l, |a, b| if a == b { 0.9 } else { 0.1 / (l - 1) as f64 })
    };
    ArhmmModel::with_uniform_start(regimes, q)
}

/// Relabel regimes by increasing stationary volatility of their own AR(1) law.
pub fn sort_by_volatility(model: &ArhmmModel) -> Result<ArhmmModel> {
    let vols = model.regime_stationary_vols();
    let mut perm: Vec<usize> = (0..model.num_regimes()).collect();
    perm.sort_by(|&a, &b| vols[a].total_cmp(&vols[b]));
    model.permuted(&perm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
    /// The alternative fitted worse than the null; the p-value was set to 1.
    pub negative_statistic: bool,
}

/// `D = -2 (ll_null - ll_alt)` against the upper tail of a chi-square law.
pub fn likelihood_ratio_test(loglik_null: f64, loglik_alt: f64, df: usize) -> Result<LrtResult> {
    if df == 0 {
        return Err(ArhmmError::InvalidInput(
            "degrees of freedom must be >= 1".into(),
        ));
    }
    let d = -2.0 * (loglik_null - loglik_alt);
    if d < 0.0 {
        log::warn!(
            "likelihood-ratio statistic {d} is negative; alternative fit is worse than the null"
        );
        return Ok(LrtResult {
            statistic: d,
            p_value: 1.0,
            df,
            negative_statistic: true,
        });
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| ArhmmError::InvalidInput(e.to_string()))?;
    Ok(LrtResult {
        statistic: d,
        p_value: chi.sf(d),
        df,
        negative_statistic: false,
    })
}

/// Number of AR parameters added by the autoregressive model: `l * d^2`.
pub fn lrt_degrees_of_freedom(l: usize, d: usize) -> usize {
    l * d * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::enumerate as oracle;
    use crate::presets;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two_regime() -> ArhmmModel {
        let q = DMatrix::from_row_slice(2, 2, &[0.85, 0.15, 0.25, 0.75]);
        ArhmmModel::univariate(&[(0.3, 0.4, 0.5), (-0.5, -0.3, 1.5)], q)
            .unwrap()
            .with_eta0(DVector::from_vec(vec![0.3, 0.7]))
            .unwrap()
    }

    #[test]
    fn single_regime_smoother_is_trivial() {
        let m =
            ArhmmModel::univariate(&[(0.0, 0.5, 1.0)], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = m.simulate_path(&[0.0], 0, 20, 1).unwrap().0;
        let sq = e_step(&m, &y).unwrap();
        assert!(sq.lambda.iter().all(|x| *x == 1.0));
        assert!(sq.big_lambda.iter().all(|x| *x == 1.0));
    }

    #[test]
    fn identical_regimes_give_uniform_lambda() {
        let r = || RegimeParams::univariate(0.0, 0.3, 1.0).unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]);
        let m = ArhmmModel::with_uniform_start(vec![r(), r()], q).unwrap();
        let y = m.simulate_path(&[0.0], 0, 30, 2).unwrap().0;
        let sq = e_step(&m, &y).unwrap();
        for x in &sq.lambda {
            assert_abs_diff_eq!(*x, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn smoother_matches_enumeration() {
        let m = two_regime();
        let y = m.simulate_path(&[0.1], 1, 7, 11).unwrap().0;
        let ex = oracle::enumerate(&m, &y);
        let sq = e_step(&m, &y).unwrap();
        for (a, b) in sq.lambda.iter().zip(&ex.smoothed) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        for (a, b) in sq.big_lambda.iter().zip(&ex.pairs) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert!((sq.log_lik - ex.log_lik).abs() < 1e-10 * ex.log_lik.abs().max(1.0));
    }

    fn ols_ar1(y: &[f64]) -> (f64, f64, f64) {
        // regress y_t on (1, y_{t-1}) by the 2x2 normal equations
        let n = (y.len() - 1) as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for w in y.windows(2) {
            sx += w[0];
            sy += w[1];
            sxx += w[0] * w[0];
            sxy += w[0] * w[1];
        }
        let det = n * sxx - sx * sx;
        let c = (sxx * sy - sx * sxy) / det;
        let phi = (n * sxy - sx * sy) / det;
        let rss: f64 = y.windows(2).map(|w| (w[1] - c - phi * w[0]).powi(2)).sum();
        (c / (1.0 - phi), phi, rss / n)
    }

    #[test]
    fn single_regime_fit_is_ols() {
        let m =
            ArhmmModel::univariate(&[(0.2, 0.6, 0.8)], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = m.simulate_path(&[0.0], 0, 2000, 4).unwrap().0;
        let fit = em_fit(&y, 1, &EmConfig::default()).unwrap();
        let (mu, phi, var) = ols_ar1(y.as_slice());
        let r = fit.model.regime(0);
        assert!((r.mu()[0] - mu).abs() < 1e-8);
        assert!((r.phi()[(0, 0)] - phi).abs() < 1e-8);
        assert!((r.cov()[(0, 0)] - var).abs() < 1e-8);
    }

    #[test]
    fn collapsed_weights_flag_other_regimes() {
        let m = two_regime();
        let y = m.simulate_path(&[0.0], 0, 50, 5).unwrap().0;
        let mut sq = e_step(&m, &y).unwrap();
        for t in 0..sq.n {
            sq.lambda[t * 2] = 1.0;
            sq.lambda[t * 2 + 1] = 0.0;
        }
        for t in 0..sq.n - 1 {
            sq.big_lambda[t * 4..t * 4 + 4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        }
        let err = m_step(&y, &sq, true).unwrap_err();
        assert!(
            matches!(err, ArhmmError::DegenerateRegime { regime: 1, .. }),
            "{err}"
        );
        // regime 0 on its own equals the one-regime regression
        let (reg, _) = fit_regime(&y, &sq, 0, 1, true).unwrap();
        let (mu, phi, var) = ols_ar1(y.as_slice());
        assert!((reg.mu()[0] - mu).abs() < 1e-10);
        assert!((reg.phi()[(0, 0)] - phi).abs() < 1e-10);
        assert!((reg.cov()[(0, 0)] - var).abs() < 1e-10);
    }

    #[test]
    fn m_step_output_satisfies_first_order_conditions() {
        let m = two_regime();
        let y = m.simulate_path(&[0.0], 0, 400, 6).unwrap().0;
        let sq = e_step(&m, &y).unwrap();
        let out = m_step(&y, &sq, true).unwrap();
        for (i, r) in out.regimes.iter().enumerate() {
            let total: f64 = (1..sq.n).map(|t| sq.lambda[t * 2 + i]).sum();
            let (mut g_mu, mut g_phi) = (0.0, 0.0);
            for t in 1..sq.n {
                let w = sq.lambda[t * 2 + i] / total;
                let (yc, yp) = (y.row(t)[0], y.row(t - 1)[0]);
                let e = yc - r.cond_mean_1d(yp);
                g_mu += w * e;
                g_phi += w * e * (yp - r.mu()[0]);
            }
            assert!(g_mu.abs() < 1e-8 && g_phi.abs() < 1e-8, "{g_mu} {g_phi}");
        }
        for i in 0..2 {
            assert_abs_diff_eq!(out.q.row(i).sum(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn recovers_reference_three_regime_model() {
        let truth = presets::sp500_arhmm();
        let mut r = rng::seeded(21);
        let (y, _) = truth.simulate_stationary(10_000, 100, &mut r).unwrap();
        let fit = em_fit(&y, 3, &EmConfig::default()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - MONOTONE_SLACK);
        }
        let mus: Vec<f64> = fit.model.regimes().iter().map(|r| r.mu()[0]).collect();
        assert!(mus[0] > mus[1] && mus[1] > mus[2], "{mus:?}");
        for j in 0..3 {
            let got = fit.model.regime(j).phi()[(0, 0)];
            let want = truth.regime(j).phi()[(0, 0)];
            assert!((got - want).abs() < 0.1, "regime {j}: {got} vs {want}");
        }
    }

    #[test]
    fn hmm_fit_never_beats_released_fit() {
        let m = two_regime();
        let y = m.simulate_path(&[0.0], 0, 800, 7).unwrap().0;
        let cfg = EmConfig::default();
        let ar = em_fit(&y, 2, &cfg).unwrap();
        let hmm = em_fit(&y, 2, &cfg.hmm()).unwrap();
        assert!(hmm.log_lik <= ar.log_lik + 1e-6);
        assert!(hmm.model.regimes().iter().all(|r| r.phi()[(0, 0)] == 0.0));
    }

    #[test]
    fn lrt_examples() {
        let r = likelihood_ratio_test(-10.0, -10.0, 3).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = likelihood_ratio_test(3552.0, 3559.0, 3).unwrap();
        assert_abs_diff_eq!(r.statistic, 14.0, epsilon = 1e-12);
        assert!(r.p_value < 0.005 && r.p_value > 0.001);
        // 7.8147279 is the 95% quantile of chi-square(3); 7.81 is its rounding
        let r = likelihood_ratio_test(0.0, 7.814_727_903_251_178 / 2.0, 3).unwrap();
        assert_abs_diff_eq!(r.p_value, 0.05, epsilon = 1e-10);
        let r = likelihood_ratio_test(0.0, 7.81 / 2.0, 3).unwrap();
        assert_abs_diff_eq!(r.p_value, 0.050_106_056_35, epsilon = 1e-9);
        let r = likelihood_ratio_test(0.0, -1.0, 3).unwrap();
        assert!(r.negative_statistic && r.p_value == 1.0);
        assert_eq!(lrt_degrees_of_freedom(3, 1), 3);
        assert_eq!(lrt_degrees_of_freedom(3, 2), 12);
    }

    #[test]
    fn bivariate_fit_runs() {
        let mu = DVector::from_vec(vec![0.0, 0.1]);
        let phi = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, -0.2]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let reg = RegimeParams::new(mu, phi, cov).unwrap();
        let m =
            ArhmmModel::with_uniform_start(vec![reg], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = m.simulate_path(&[0.0, 0.0], 0, 3000, 8).unwrap().0;
        let fit = em_fit(&y, 1, &EmConfig::default()).unwrap();
        let got = fit.model.regime(0);
        assert!((got.phi()[(0, 1)] - 0.1).abs() < 0.08);
        assert!((got.cov()[(0, 1)] - 0.3).abs() < 0.08);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn lambda_rows_and_pair_marginals(seed in 0u64..10_000) {
            let m = two_regime();
            let y = m.simulate_path(&[0.0], 0, 60, seed).unwrap().0;
            let sq = e_step(&m, &y).unwrap();
            for t in 0..sq.n {
                prop_assert!((sq.lambda_row(t).iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
            for t in 0..sq.n - 1 {
                for i in 0..2 {
                    let s: f64 = (0..2).map(|j| sq.big_lambda_at(t, i, j)).sum();
                    prop_assert!((s - sq.lambda[t * 2 + i]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn em_is_monotone(seed in 0u64..10_000) {
            let m = two_regime();
            let y = m.simulate_path(&[0.0], 0, 300, seed).unwrap().0;
            let cfg = EmConfig { seed, max_iter: 100, ..EmConfig::default() };
            let fit = em_fit(&y, 2, &cfg).unwrap();
            for w in fit.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - MONOTONE_SLACK);
            }
        }
    }
}
