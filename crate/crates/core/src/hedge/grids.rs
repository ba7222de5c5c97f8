//! Grid placement from simulated returns and terminal prices.

use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};
use crate::model::{stationary_moments, ArhmmModel};
use crate::rng;

/// Sizes and coverage of the `y` and `s` grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_y: usize,
    /// Total `s` nodes including the 0 sentinel and the strike node.
    pub n_s: usize,
    /// Half-width of the guaranteed coverage, in stationary standard deviations of the most
    /// volatile regime.
    pub coverage: f64,
    /// Simulated returns (for `y`) and paths (for `s`).
    pub n_sim: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_y: 101,
            n_s: 201,
            coverage: 5.0,
            n_sim: 20_000,
            seed: 0,
        }
    }
}

/// Share of grid nodes placed by simulated percentiles; the rest are spread uniformly so
/// that sparse tails still get nodes.
const PERCENTILE_SHARE: f64 = 0.75;
const BURN_IN: usize = 100;

/// Quantiles of a mixture of the empirical law of `sorted` and the uniform law on
/// `[lo, hi]`, at `k` equally spaced levels from 0 to 1.
fn mixture_quantiles(sorted: &[f64], lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let n = sorted.len() as f64;
    let cdf = |x: f64| {
        let emp = sorted.partition_point(|&v| v <= x) as f64 / n;
        PERCENTILE_SHARE * emp + (1.0 - PERCENTILE_SHARE) * ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    };
    (0..k)
        .map(|i| {
            let p = i as f64 / (k - 1) as f64;
            if i == 0 {
                return lo;
            }
            if i == k - 1 {
                return hi;
            }
            let (mut a, mut b) = (lo, hi);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if cdf(m) < p {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn strictly_increasing(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|b, a| *b <= *a);
    v
}

/// Builds `(y_grid, s_grid)` for hedging `n_steps` periods from discounted spot `s0`.
/// `strike_node`, in discounted units, is inserted into the `s` grid when given.
pub fn build_grids(
    model: &ArhmmModel,
    n_steps: usize,
    s0: f64,
    rates: &[f64],
    strike_node: Option<f64>,
    spec: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if model.dim() != 1 {
        return Err(ArhmmError::UnsupportedDimension(model.dim()));
    }
    if n_steps == 0 || rates.len() != n_steps {
        return Err(ArhmmError::InvalidInput(
            "need one rate per hedging period".into(),
        ));
    }
    if !(s0 > 0.0) || spec.n_y < 2 || spec.n_s < 4 || spec.n_sim < 10 || !(spec.coverage > 0.0) {
        return Err(ArhmmError::InvalidInput(format!(
            "invalid grid request (s0 = {s0}, {spec:?})"
        )));
    }
    let mom = stationary_moments(model)?;
    let mean = mom.mu[0];
    let sd_max = model
        .regime_stationary_vols()
        .into_iter()
        .fold(0.0, f64::max);
    let mut draw = rng::substream(spec.seed, 0);
    let tau0 = ArhmmModel::draw_from(mom.nu.as_slice(), &mut draw);
    let (path, _) = model.simulate_path_with(&[mean], tau0, spec.n_sim + BURN_IN, &mut draw)?;
    let mut ys: Vec<f64> = path.as_slice()[BURN_IN..].to_vec();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = spec.coverage * sd_max.max(1e-12);
    let y_lo = (mean - span).min(ys[0]);
    let y_hi = (mean + span).max(ys[ys.len() - 1]);
    let y_grid = strictly_increasing(mixture_quantiles(&ys, y_lo, y_hi, spec.n_y));

    let drift: f64 = n_steps as f64 * mean - rates.iter().sum::<f64>();
    let ln_s0 = s0.ln();
    let mut terminal: Vec<f64> = (0..spec.n_sim)
        .map(|p| {
            let mut r = rng::substream(spec.seed, 1 + p as u64);
            let tau = ArhmmModel::draw_from(mom.nu.as_slice(), &mut r);
            let (ys, _) = model.simulate_path_with(&[mean], tau, BURN_IN + n_steps, &mut r)?;
            let gain: f64 = ys.as_slice()[BURN_IN..]
                .iter()
                .zip(rates)
                .map(|(y, r)| y - r)
                .sum();
            Ok(ln_s0 + gain)
        })
        .collect::<Result<_>>()?;
    terminal.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let s_span = spec.coverage * sd_max.max(1e-12) * (n_steps as f64).sqrt();
    let x_lo = (ln_s0 + drift - s_span)
        .min(terminal[0])
        .min(ln_s0 - s_span);
    let x_hi = (ln_s0 + drift + s_span)
        .max(terminal[terminal.len() - 1])
        .max(ln_s0 + s_span);
    let extra = usize::from(strike_node.is_some());
    let mut s_grid = vec![0.0];
    s_grid.extend(
        mixture_quantiles(&terminal, x_lo, x_hi, spec.n_s - 1 - extra)
            .into_iter()
            .map(f64::exp),
    );
    if let Some(k) = strike_node {
        if let Some(pos) = s_grid
            .iter()
            .position(|&v| v > 0.0 && (v - k).abs() <= 1e-9 * k)
        {
            s_grid[pos] = k;
        } else {
            s_grid.push(k);
        }
    }
    Ok((y_grid, strictly_increasing(s_grid)))
}
