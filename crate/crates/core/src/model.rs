//! Gaussian AR(1) hidden Markov model parameters.
//!
//! Given `Y_{t-1} = y` and regime `j` at time `t`,
//! `Y_t = mu_j + Phi_j (y - mu_j) + eps_t` with `eps_t ~ N(0, A_j)`.
//! The plain HMM is the special case `Phi_1 = ... = Phi_l = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};
use crate::rng;
use crate::series::Series;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row sums of the transition matrix and the initial law must be 1 within this.
pub const PROB_TOL: f64 = 1e-12;

/// Trading days per year used by the annualization helpers.
pub const TRADING_DAYS: f64 = 252.0;

/// Per-regime AR(1) parameters with cached Cholesky data.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeParams {
    mu: DVector<f64>,
    phi: DMatrix<f64>,
    cov: DMatrix<f64>,
    chol: Option<DMatrix<f64>>,
    cov_inv: Option<DMatrix<f64>>,
    log_norm: f64,
}

impl RegimeParams {
    pub fn new(mu: DVector<f64>, phi: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        check_shapes(d, &phi, &cov)?;
        let sym_err = (&cov - cov.transpose()).amax();
        if sym_err > 1e-12 * cov.amax().max(1.0) {
            return Err(ArhmmError::InvalidModel(format!(
                "covariance is not symmetric (asymmetry {sym_err:e})"
            )));
        }
        let chol = cov.clone().cholesky().ok_or_else(|| {
            ArhmmError::InvalidModel("covariance is not positive definite".into())
        })?;
        let rho = spectral_radius(&phi);
        if !(rho < 1.0) {
            return Err(ArhmmError::InvalidModel(format!(
                "spectral radius of phi is {rho} (must be < 1)"
            )));
        }
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let cov_inv = chol.inverse();
        Ok(Self {
            mu,
            phi,
            cov,
            chol: Some(l),
            cov_inv: Some(cov_inv),
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    /// Scalar regime from mean, AR coefficient and innovation standard deviation.
    pub fn univariate(mu: f64, phi: f64, sigma: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, phi),
            DMatrix::from_element(1, 1, sigma * sigma),
        )
    }

    /// Noiseless regime (`A_j = 0`) for deterministic simulation fixtures.
    ///
    /// Such a regime has no density; only simulation and the hedging engine's
    /// zero-volatility path accept it.
    #[doc(hidden)]
    pub fn zero_noise(mu: DVector<f64>, phi: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        let cov = DMatrix::zeros(d, d);
        check_shapes(d, &phi, &cov)?;
        let rho = spectral_radius(&phi);
        if !(rho < 1.0) {
            return Err(ArhmmError::InvalidModel(format!(
                "spectral radius of phi is {rho} (must be < 1)"
            )));
        }
        Ok(Self {
            mu,
            phi,
            cov,
            chol: None,
            cov_inv: None,
            log_norm: f64::NAN,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the innovation covariance (`None` for noiseless regimes).
    pub fn chol_factor(&self) -> Option<&DMatrix<f64>> {
        self.chol.as_ref()
    }

    pub fn is_degenerate(&self) -> bool {
        self.chol.is_none()
    }

    /// Innovation standard deviation for d = 1.
    pub fn sigma(&self) -> f64 {
        self.cov[(0, 0)].sqrt()
    }

    /// Conditional mean `mu + Phi (y_prev - mu)` written into `out`.
    pub fn conditional_mean_into(&self, y_prev: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for a in 0..d {
            let mut m = self.mu[a];
            for b in 0..d {
                m += self.phi[(a, b)] * (y_prev[b] - self.mu[b]);
            }
            out[a] = m;
        }
    }

    pub fn conditional_mean(&self, y_prev: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.conditional_mean_into(y_prev, &mut out);
        out
    }

    /// Scalar conditional mean for d = 1.
    #[inline]
    pub fn cond_mean_1d(&self, y_prev: f64) -> f64 {
        self.mu[0] + self.phi[(0, 0)] * (y_prev - self.mu[0])
    }

    /// `log f_j(y | y_prev)`.
    pub fn log_density(&self, y_prev: &[f64], y: &[f64]) -> Result<f64> {
        let inv = self.cov_inv.as_ref().ok_or_else(|| {
            ArhmmError::InvalidModel("density of a noiseless regime is undefined".into())
        })?;
        let d = self.dim();
        if d == 1 {
            let r = y[0] - self.cond_mean_1d(y_prev[0]);
            return Ok(self.log_norm - 0.5 * r * r * inv[(0, 0)]);
        }
        let mut r = self.conditional_mean(y_prev);
        for (ra, ya) in r.iter_mut().zip(y) {
            *ra = ya - *ra;
        }
        let mut quad = 0.0;
        for a in 0..d {
            let mut acc = 0.0;
            for b in 0..d {
                acc += inv[(a, b)] * r[b];
            }
            quad += r[a] * acc;
        }
        Ok(self.log_norm - 0.5 * quad)
    }

    pub fn density(&self, y_prev: &[f64], y: &[f64]) -> Result<f64> {
        self.log_density(y_prev, y).map(f64::exp)
    }

    /// Stationary covariance of the regime's own AR(1) process,
    /// `B = sum_k Phi^k A (Phi^k)^T`, the fixed point of `B = Phi B Phi^T + A`.
    pub fn own_stationary_cov(&self) -> DMatrix<f64> {
        let mut b = self.cov.clone();
        for _ in 0..100_000 {
            let next = &self.phi * &b * self.phi.transpose() + &self.cov;
            let change = (&next - &b).amax();
            b = next;
            if change <= 1e-15 * b.amax().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        b
    }
}

fn check_shapes(d: usize, phi: &DMatrix<f64>, cov: &DMatrix<f64>) -> Result<()> {
    if d == 0 {
        return Err(ArhmmError::InvalidModel("dimension must be >= 1".into()));
    }
    if phi.shape() != (d, d) || cov.shape() != (d, d) {
        return Err(ArhmmError::InvalidModel(format!(
            "phi {:?} and cov {:?} must both be {d}x{d}",
            phi.shape(),
            cov.shape()
        )));
    }
    if phi.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
        return Err(ArhmmError::InvalidModel("non-finite parameter".into()));
    }
    Ok(())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    if m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    }
    // Gelfand's formula by repeated squaring with rescaling
    let mut p = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..60 {
        let nrm = p.amax();
        if nrm == 0.0 {
            return 0.0;
        }
        p /= nrm;
        log_scale += nrm.ln() / k;
        p = &p * &p;
        k *= 2.0;
    }
    (log_scale + p.amax().ln() / k).exp()
}

/// Full ARHMM parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ArhmmModel {
    regimes: Vec<RegimeParams>,
    q: DMatrix<f64>,
    eta0: DVector<f64>,
}

impl ArhmmModel {
    pub fn new(regimes: Vec<RegimeParams>, q: DMatrix<f64>, eta0: DVector<f64>) -> Result<Self> {
        let l = regimes.len();
        if l == 0 {
            return Err(ArhmmError::InvalidModel(
                "at least one regime is required".into(),
            ));
        }
        let d = regimes[0].dim();
        if let Some((j, _)) = regimes.iter().enumerate().find(|(_, r)| r.dim() != d) {
            return Err(ArhmmError::InvalidModel(format!(
                "regime {j} has dimension {} but regime 0 has {d}",
                regimes[j].dim()
            )));
        }
        validate_transition(&q, l)?;
        validate_probability(eta0.as_slice(), l, "eta0")?;
        Ok(Self { regimes, q, eta0 })
    }

    /// Model with a uniform initial regime law.
    pub fn with_uniform_start(regimes: Vec<RegimeParams>, q: DMatrix<f64>) -> Result<Self> {
        let l = regimes.len().max(1);
        Self::new(regimes, q, DVector::from_element(l, 1.0 / l as f64))
    }

    /// Univariate model from per-regime `(mu, phi, sigma)` in per-period units.
    pub fn univariate(params: &[(f64, f64, f64)], q: DMatrix<f64>) -> Result<Self> {
        let regimes = params
            .iter()
            .map(|&(m, p, s)| RegimeParams::univariate(m, p, s))
            .collect::<Result<Vec<_>>>()?;
        Self::with_uniform_start(regimes, q)
    }

    #[inline]
    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.regimes[0].dim()
    }

    pub fn regimes(&self) -> &[RegimeParams] {
        &self.regimes
    }

    pub fn regime(&self, j: usize) -> &RegimeParams {
        &self.regimes[j]
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn eta0(&self) -> &DVector<f64> {
        &self.eta0
    }

    pub fn with_eta0(mut self, eta0: DVector<f64>) -> Result<Self> {
        validate_probability(eta0.as_slice(), self.num_regimes(), "eta0")?;
        self.eta0 = eta0;
        Ok(self)
    }

    /// Same model with every `Phi_j` set to zero (the nested HMM).
    pub fn without_autoregression(&self) -> Result<Self> {
        let d = self.dim();
        let regimes = self
            .regimes
            .iter()
            .map(|r| RegimeParams::new(r.mu.clone(), DMatrix::zeros(d, d), r.cov.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(regimes, self.q.clone(), self.eta0.clone())
    }

    /// Relabel regimes: new regime `k` is old regime `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let l = self.num_regimes();
        if perm.len() != l {
            return Err(ArhmmError::InvalidInput(
                "permutation length mismatch".into(),
            ));
        }
        let regimes = perm.iter().map(|&p| self.regimes[p].clone()).collect();
        let q = DMatrix::from_fn(l, l, |a, b| self.q[(perm[a], perm[b])]);
        let eta0 = DVector::from_fn(l, |a, _| self.eta0[perm[a]]);
        Self::new(regimes, q, eta0)
    }

    /// `f_j(y | y_prev)`; `j` is zero-based.
    pub fn conditional_density(&self, j: usize, y_prev: &[f64], y: &[f64]) -> Result<f64> {
        self.check_regime_and_dims(j, y_prev, y)?;
        self.regimes[j].density(y_prev, y)
    }

    pub fn conditional_log_density(&self, j: usize, y_prev: &[f64], y: &[f64]) -> Result<f64> {
        self.check_regime_and_dims(j, y_prev, y)?;
        self.regimes[j].log_density(y_prev, y)
    }

    fn check_regime_and_dims(&self, j: usize, y_prev: &[f64], y: &[f64]) -> Result<()> {
        if j >= self.num_regimes() {
            return Err(ArhmmError::InvalidInput(format!(
                "regime index {j} out of range (l={})",
                self.num_regimes()
            )));
        }
        let d = self.dim();
        if y_prev.len() != d || y.len() != d {
            return Err(ArhmmError::InvalidInput(format!(
                "vectors must have length d={d}"
            )));
        }
        Ok(())
    }

    /// Simulate `n` steps from `(y0, tau0)`; returns observations and regimes
    /// (zero-based), excluding the starting point.
    pub fn simulate_path(
        &self,
        y0: &[f64],
        tau0: usize,
        n: usize,
        seed: u64,
    ) -> Result<(Series, Vec<usize>)> {
        let mut rng = rng::seeded(seed);
        self.simulate_path_with(y0, tau0, n, &mut rng)
    }

    pub fn simulate_path_with<R: Rng + ?Sized>(
        &self,
        y0: &[f64],
        tau0: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<(Series, Vec<usize>)> {
        let d = self.dim();
        if y0.len() != d {
            return Err(ArhmmError::InvalidInput(format!("y0 must have length {d}")));
        }
        if tau0 >= self.num_regimes() {
            return Err(ArhmmError::InvalidInput(format!(
                "initial regime {tau0} out of range"
            )));
        }
        let mut ys = Series::with_capacity(d, n);
        let mut taus = Vec::with_capacity(n);
        let mut y = y0.to_vec();
        let mut next = vec![0.0; d];
        let mut eps = vec![0.0; d];
        let mut tau = tau0;
        for _ in 0..n {
            tau = self.next_regime(tau, rng);
            self.step_from(tau, &y, &mut next, &mut eps, rng);
            std::mem::swap(&mut y, &mut next);
            ys.push(&y);
            taus.push(tau);
        }
        Ok((ys, taus))
    }

    /// Draw `tau_{t+1}` given `tau_t = i`.
    pub fn next_regime<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let l = self.num_regimes();
        let mut acc = 0.0;
        for j in 0..l {
            acc += self.q[(i, j)];
            if u < acc {
                return j;
            }
        }
        // rounding in the row sum: fall back to the last state with positive mass
        (0..l)
            .rev()
            .find(|&j| self.q[(i, j)] > 0.0)
            .unwrap_or(l - 1)
    }

    /// `out = mu_j + Phi_j (y - mu_j) + L_j eps` with a fresh standard normal `eps`.
    pub fn step_from<R: Rng + ?Sized>(
        &self,
        j: usize,
        y: &[f64],
        out: &mut [f64],
        eps: &mut [f64],
        rng: &mut R,
    ) {
        let reg = &self.regimes[j];
        let d = self.dim();
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(rng);
        }
        reg.conditional_mean_into(y, out);
        if let Some(l) = &reg.chol {
            for a in 0..d {
                let mut s = 0.0;
                for b in 0..=a {
                    s += l[(a, b)] * eps[b];
                }
                out[a] += s;
            }
        }
    }

    /// Draw a regime from a probability vector.
    pub fn draw_from<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        probs.len() - 1
    }

    /// Simulate `n` observations after `burn_in` discarded steps, starting at
    /// the stationary mean with a regime drawn from the stationary law.
    pub fn simulate_stationary<R: Rng + ?Sized>(
        &self,
        n: usize,
        burn_in: usize,
        rng: &mut R,
    ) -> Result<(Series, Vec<usize>)> {
        let mom = stationary_moments(self)?;
        let tau0 = Self::draw_from(mom.nu.as_slice(), rng);
        let (ys, taus) = self.simulate_path_with(mom.mu.as_slice(), tau0, n + burn_in, rng)?;
        Ok((ys.slice(burn_in, n + burn_in), taus[burn_in..].to_vec()))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            d: self.dim(),
            l: self.num_regimes(),
            regimes: self
                .regimes
                .iter()
                .map(|r| RegimeFile {
                    mu: r.mu.iter().copied().collect(),
                    phi: matrix_rows(&r.phi),
                    cov: matrix_rows(&r.cov),
                })
                .collect(),
            q: matrix_rows(&self.q),
            eta0: self.eta0.iter().copied().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.into_model()
    }

    /// Per-regime stationary volatility `sqrt(trace B_j)`.
    pub fn regime_stationary_vols(&self) -> Vec<f64> {
        self.regimes
            .iter()
            .map(|r| r.own_stationary_cov().trace().sqrt())
            .collect()
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|a| (0..m.ncols()).map(|b| m[(a, b)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|x| x.len() != c) {
        return Err(ArhmmError::InvalidModel(format!("{what} is ragged")));
    }
    Ok(DMatrix::from_fn(r, c, |a, b| rows[a][b]))
}

pub(crate) fn validate_probability(p: &[f64], l: usize, what: &str) -> Result<()> {
    if p.len() != l {
        return Err(ArhmmError::InvalidModel(format!(
            "{what} has length {} but l={l}",
            p.len()
        )));
    }
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(ArhmmError::InvalidModel(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(ArhmmError::InvalidModel(format!(
            "{what} sums to {s}, not 1"
        )));
    }
    Ok(())
}

fn validate_transition(q: &DMatrix<f64>, l: usize) -> Result<()> {
    if q.shape() != (l, l) {
        return Err(ArhmmError::InvalidModel(format!(
            "transition matrix is {:?}, expected {l}x{l}",
            q.shape()
        )));
    }
    for i in 0..l {
        let row: Vec<f64> = q.row(i).iter().copied().collect();
        validate_probability(&row, l, &format!("row {i} of q"))?;
    }
    Ok(())
}

/// JSON model schema (all parameters in per-period units).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub d: usize,
    pub l: usize,
    pub regimes: Vec<RegimeFile>,
    pub q: Vec<Vec<f64>>,
    pub eta0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegimeFile {
    pub mu: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
}

impl ModelFile {
    /// Validate and build; the error names the first violated invariant.
    pub fn into_model(self) -> Result<ArhmmModel> {
        if self.l == 0 || self.d == 0 {
            return Err(ArhmmError::InvalidModel("d and l must be >= 1".into()));
        }
        if self.regimes.len() != self.l {
            return Err(ArhmmError::InvalidModel(format!(
                "l={} but {} regimes given",
                self.l,
                self.regimes.len()
            )));
        }
        let mut regimes = Vec::with_capacity(self.l);
        for (j, r) in self.regimes.iter().enumerate() {
            if r.mu.len() != self.d {
                return Err(ArhmmError::InvalidModel(format!(
                    "regime {j}: mu has length {} but d={}",
                    r.mu.len(),
                    self.d
                )));
            }
            let reg = RegimeParams::new(
                DVector::from_vec(r.mu.clone()),
                rows_matrix(&r.phi, "phi")?,
                rows_matrix(&r.cov, "cov")?,
            )
            .map_err(|e| ArhmmError::InvalidModel(format!("regime {j}: {e}")))?;
            regimes.push(reg);
        }
        let q = rows_matrix(&self.q, "q")?;
        ArhmmModel::new(regimes, q, DVector::from_vec(self.eta0))
    }
}

/// Stationary regime law, mean and covariance of the observations.
#[derive(Debug, Clone)]
pub struct StationaryMoments {
    pub nu: DVector<f64>,
    pub mu: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub iterations: usize,
}

impl StationaryMoments {
    /// Standard deviation of the first coordinate.
    pub fn std(&self) -> f64 {
        self.cov[(0, 0)].sqrt()
    }
}

/// Stationary distribution `nu` of an ergodic transition matrix.
pub fn stationary_regime_dist(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    let l = q.nrows();
    if q.ncols() != l || l == 0 {
        return Err(ArhmmError::InvalidInput(
            "transition matrix must be square".into(),
        ));
    }
    check_ergodic(q)?;
    // (Q^T - I) nu = 0 with the last equation replaced by sum(nu) = 1.
    let mut m = q.transpose() - DMatrix::identity(l, l);
    let mut rhs = DVector::zeros(l);
    for b in 0..l {
        m[(l - 1, b)] = 1.0;
    }
    rhs[l - 1] = 1.0;
    let nu = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ArhmmError::NonErgodic("stationary system is singular".into()))?;
    Ok(nu.map(|x| x.max(0.0)))
}

fn check_ergodic(q: &DMatrix<f64>) -> Result<()> {
    let l = q.nrows();
    let reach = |from: usize, forward: bool| -> Vec<bool> {
        let mut seen = vec![false; l];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(a) = stack.pop() {
            for b in 0..l {
                let p = if forward { q[(a, b)] } else { q[(b, a)] };
                if p > 0.0 && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    };
    if !reach(0, true).iter().all(|&x| x) || !reach(0, false).iter().all(|&x| x) {
        return Err(ArhmmError::NonErgodic("chain is reducible".into()));
    }
    // period = gcd over edges (a,b) of level(a) + 1 - level(b) from a BFS tree
    let mut level = vec![usize::MAX; l];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(a) = queue.pop_front() {
        for b in 0..l {
            if q[(a, b)] > 0.0 && level[b] == usize::MAX {
                level[b] = level[a] + 1;
                queue.push_back(b);
            }
        }
    }
    let mut period = 0usize;
    for a in 0..l {
        for b in 0..l {
            if q[(a, b)] > 0.0 {
                let diff = (level[a] as i64 + 1 - level[b] as i64).unsigned_abs() as usize;
                period = gcd(period, diff);
            }
        }
    }
    if period != 1 {
        return Err(ArhmmError::NonErgodic(format!(
            "chain is periodic with period {period}"
        )));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary mean and covariance of the observations.
///
/// The covariance is the fixed point of
/// `T(A) = B + sum_i nu_i Phi_i A Phi_i^T`, iterated from `A_0 = 0`.
pub fn stationary_moments(model: &ArhmmModel) -> Result<StationaryMoments> {
    let nu = stationary_regime_dist(model.q())?;
    let d = model.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut lhs = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for (i, r) in model.regimes().iter().enumerate() {
        let imp = &id - &r.phi;
        rhs += nu[i] * (&imp * &r.mu);
        lhs += nu[i] * imp;
    }
    let mu = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ArhmmError::InvalidModel("sum nu_i (I - Phi_i) is singular".into()))?;
    let b = stationary_offset(model, &nu, &mu);
    let mut a = DMatrix::<f64>::zeros(d, d);
    const MAX_ITER: usize = 100_000;
    let mut last_change = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let next = apply_t(model, &nu, &b, &a);
        last_change = (&next - &a).amax();
        a = next;
        if last_change <= 1e-12 * a.amax() {
            // symmetrize away rounding asymmetry
            let cov = 0.5 * (&a + a.transpose());
            return Ok(StationaryMoments {
                nu,
                mu,
                cov,
                iterations: it,
            });
        }
    }
    Err(ArhmmError::IterationLimit {
        iterations: MAX_ITER,
        last_change,
    })
}

fn stationary_offset(model: &ArhmmModel, nu: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let d = model.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut b = -(mu * mu.transpose());
    for (i, r) in model.regimes().iter().enumerate() {
        let c = (&id - &r.phi) * &r.mu + &r.phi * mu;
        b += nu[i] * (&c * c.transpose() + &r.cov);
    }
    b
}

fn apply_t(
    model: &ArhmmModel,
    nu: &DVector<f64>,
    b: &DMatrix<f64>,
    a: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = b.clone();
    for (i, r) in model.regimes().iter().enumerate() {
        out += nu[i] * (&r.phi * a * r.phi.transpose());
    }
    out
}

/// The operator `T` for an arbitrary symmetric argument (exposed for property checks).
pub fn stationary_operator(model: &ArhmmModel, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mom_nu = stationary_regime_dist(model.q())?;
    let d = model.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut lhs = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for (i, r) in model.regimes().iter().enumerate() {
        let imp = &id - &r.phi;
        rhs += mom_nu[i] * (&imp * &r.mu);
        lhs += mom_nu[i] * imp;
    }
    let mu = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ArhmmError::InvalidModel("sum nu_i (I - Phi_i) is singular".into()))?;
    let b = stationary_offset(model, &mom_nu, &mu);
    Ok(apply_t(model, &mom_nu, &b, a))
}

/// Convert an annualized percentage mean and volatility to per-day units.
pub fn daily_from_annual_percent(mu_ann_pct: f64, sigma_ann_pct: f64) -> (f64, f64) {
    (
        mu_ann_pct / (100.0 * TRADING_DAYS),
        sigma_ann_pct / (100.0 * TRADING_DAYS.sqrt()),
    )
}

/// Inverse of [`daily_from_annual_percent`].
pub fn annual_percent_from_daily(mu: f64, sigma: f64) -> (f64, f64) {
    (
        mu * 100.0 * TRADING_DAYS,
        sigma * 100.0 * TRADING_DAYS.sqrt(),
    )
}
