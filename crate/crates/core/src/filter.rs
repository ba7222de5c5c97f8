//! Forward filtering of regime probabilities and predictive densities.
//!
//! All regime indices are zero-based. The first observation only conditions the
//! second one, so the state at `t = 1` is the prior `eta0` with zero log-likelihood.

use nalgebra::DMatrix;

use crate::error::{ArhmmError, Result};
use crate::model::ArhmmModel;
use crate::series::Series;

/// `eta_t` with the cumulative log-likelihood `log Z_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub eta: Vec<f64>,
    pub log_lik: f64,
    /// One-based time index of the last observation absorbed.
    pub step: usize,
}

impl FilterState {
    /// State before any transition has been observed.
    pub fn initial(model: &ArhmmModel) -> Self {
        Self {
            eta: model.eta0().iter().copied().collect(),
            log_lik: 0.0,
            step: 1,
        }
    }

    /// Predictive regime weights `W_t = eta_t^T Q`.
    pub fn predictive_weights(&self, q: &DMatrix<f64>) -> Vec<f64> {
        row_times(&self.eta, q)
    }
}

/// `v^T Q`.
pub fn row_times(v: &[f64], q: &DMatrix<f64>) -> Vec<f64> {
    let l = v.len();
    let mut out = vec![0.0; l];
    for (j, vj) in v.iter().enumerate() {
        if *vj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += vj * q[(j, i)];
        }
    }
    out
}

/// Combine prior weights with regime log-densities; returns the normalized
/// posterior and `log sum_i w_i f_i`. `None` when every term vanishes.
pub(crate) fn weighted_update(weights: &[f64], log_f: &[f64], out: &mut [f64]) -> Option<f64> {
    let mut m = f64::NEG_INFINITY;
    for (w, lf) in weights.iter().zip(log_f) {
        if *w > 0.0 && *lf > m {
            m = *lf;
        }
    }
    if !m.is_finite() {
        return None;
    }
    let mut z = 0.0;
    for ((o, w), lf) in out.iter_mut().zip(weights).zip(log_f) {
        *o = if *w > 0.0 { w * (lf - m).exp() } else { 0.0 };
        z += *o;
    }
    if !(z > 0.0 && z.is_finite()) {
        return None;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Some(m + z.ln())
}

/// One filtering step from `eta_{t-1}` to `eta_t`.
pub fn filter_step(
    model: &ArhmmModel,
    state: &FilterState,
    y_prev: &[f64],
    y: &[f64],
) -> Result<FilterState> {
    let l = model.num_regimes();
    if state.eta.len() != l {
        return Err(ArhmmError::InvalidInput(format!(
            "state has {} regimes, model has {l}",
            state.eta.len()
        )));
    }
    let mut log_f = vec![0.0; l];
    for (j, lf) in log_f.iter_mut().enumerate() {
        *lf = model.conditional_log_density(j, y_prev, y)?;
    }
    let w = state.predictive_weights(model.q());
    let mut eta = vec![0.0; l];
    let step = state.step + 1;
    let log_z = weighted_update(&w, &log_f, &mut eta).ok_or(ArhmmError::Underflow { step })?;
    Ok(FilterState {
        eta,
        log_lik: state.log_lik + log_z,
        step,
    })
}

/// Log-densities `log f_j(y_t | y_{t-1})` for `t = 2..n`, row-major `(n-1) x l`.
pub fn log_density_table(model: &ArhmmModel, y: &Series) -> Result<Vec<f64>> {
    if y.dim() != model.dim() {
        return Err(ArhmmError::InvalidInput(format!(
            "series has dimension {} but model has {}",
            y.dim(),
            model.dim()
        )));
    }
    let l = model.num_regimes();
    let n = y.len();
    let mut out = Vec::with_capacity(n.saturating_sub(1) * l);
    for t in 1..n {
        for j in 0..l {
            out.push(model.regime(j).log_density(y.row(t - 1), y.row(t))?);
        }
    }
    Ok(out)
}

/// Forward pass over precomputed log-densities; returns the filtered
/// probabilities (row-major `n x l`) and the total log-likelihood.
pub(crate) fn forward_from_table(
    model: &ArhmmModel,
    log_f: &[f64],
    n: usize,
) -> Result<(Vec<f64>, f64)> {
    let l = model.num_regimes();
    let mut eta = Vec::with_capacity(n * l);
    eta.extend(model.eta0().iter());
    let mut log_lik = 0.0;
    let mut w = vec![0.0; l];
    let mut next = vec![0.0; l];
    for t in 1..n {
        let prev = &eta[(t - 1) * l..t * l];
        w.iter_mut().for_each(|x| *x = 0.0);
        for (j, pj) in prev.iter().enumerate() {
            if *pj == 0.0 {
                continue;
            }
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += pj * model.q()[(j, i)];
            }
        }
        let lz = weighted_update(&w, &log_f[(t - 1) * l..t * l], &mut next)
            .ok_or(ArhmmError::Underflow { step: t + 1 })?;
        log_lik += lz;
        eta.extend_from_slice(&next);
    }
    Ok((eta, log_lik))
}

/// Filter a whole series. Returns one state per observation (the first is the
/// prior) and `log f(y_2, ..., y_n | y_1)`.
pub fn filter_path(model: &ArhmmModel, y: &Series) -> Result<(Vec<FilterState>, f64)> {
    if y.len() < 2 {
        return Err(ArhmmError::InvalidInput(
            "filtering needs at least 2 observations".into(),
        ));
    }
    let l = model.num_regimes();
    let table = log_density_table(model, y)?;
    let mut states = Vec::with_capacity(y.len());
    states.push(FilterState::initial(model));
    let mut w = vec![0.0; l];
    for t in 1..y.len() {
        let prev = &states[t - 1];
        let pw = prev.predictive_weights(model.q());
        w.copy_from_slice(&pw);
        let mut eta = vec![0.0; l];
        let step = t + 1;
        let lz = weighted_update(&w, &table[(t - 1) * l..t * l], &mut eta)
            .ok_or(ArhmmError::Underflow { step })?;
        let log_lik = prev.log_lik + lz;
        states.push(FilterState { eta, log_lik, step });
    }
    let ll = states.last().map(|s| s.log_lik).unwrap_or(0.0);
    Ok((states, ll))
}

/// Log-likelihood only.
pub fn log_likelihood(model: &ArhmmModel, y: &Series) -> Result<f64> {
    if y.len() < 2 {
        return Err(ArhmmError::InvalidInput(
            "filtering needs at least 2 observations".into(),
        ));
    }
    let table = log_density_table(model, y)?;
    forward_from_table(model, &table, y.len()).map(|(_, ll)| ll)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn most_probable_regime(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

/// `eta^T Q^k`.
pub fn predict_regime(eta: &[f64], q: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let mut v = eta.to_vec();
    for _ in 0..k {
        v = row_times(&v, q);
    }
    v
}

/// One-step predictive density `sum_i W_t(i) f_i(y_next | y_prev)`.
pub fn predictive_density(
    model: &ArhmmModel,
    state: &FilterState,
    y_prev: &[f64],
    y_next: &[f64],
) -> Result<f64> {
    let w = state.predictive_weights(model.q());
    let mut f = 0.0;
    for (i, wi) in w.iter().enumerate() {
        if *wi > 0.0 {
            f += wi * model.conditional_density(i, y_prev, y_next)?;
        }
    }
    Ok(f)
}

/// Joint predictive density of the next `m` observations by a forward recursion.
pub fn predictive_density_m(
    model: &ArhmmModel,
    state: &FilterState,
    y_prev: &[f64],
    y_future: &Series,
) -> Result<f64> {
    if y_future.is_empty() {
        return Err(ArhmmError::InvalidInput(
            "need at least one future observation".into(),
        ));
    }
    let l = model.num_regimes();
    let mut alpha = state.predictive_weights(model.q());
    let mut log_scale = 0.0;
    let mut prev = y_prev;
    let mut log_f = vec![0.0; l];
    let mut next = vec![0.0; l];
    for (k, y) in y_future.rows().enumerate() {
        if k > 0 {
            alpha = row_times(&alpha, model.q());
        }
        for (j, lf) in log_f.iter_mut().enumerate() {
            *lf = model.conditional_log_density(j, prev, y)?;
        }
        match weighted_update(&alpha, &log_f, &mut next) {
            Some(lz) => log_scale += lz,
            None => return Ok(0.0),
        }
        std::mem::swap(&mut alpha, &mut next);
        prev = y;
    }
    Ok(log_scale.exp())
}
