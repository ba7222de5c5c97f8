//! Goodness-of-fit: Rosenblatt transform, Cramér-von Mises statistic and a
//! parametric bootstrap P-value, plus selection of the number of regimes.

use libm::erfc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ArhmmError, Result};
use crate::estimate::{em_fit, EmConfig};
use crate::filter::{forward_from_table, log_density_table, row_times};
use crate::model::ArhmmModel;
use crate::rng;
use crate::series::Series;

/// Burn-in discarded before each bootstrap sample.
pub const BOOTSTRAP_BURN_IN: usize = 100;

/// Largest fraction of failed bootstrap replicates before the test aborts.
pub const MAX_DROP_FRACTION: f64 = 0.05;

#[inline]
pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Pseudo-observations, row-major `n x d`, all in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RosenblattSeries {
    pub d: usize,
    pub u: Vec<f64>,
}

impl RosenblattSeries {
    pub fn new(d: usize, u: Vec<f64>) -> Result<Self> {
        if d == 0 || !u.len().is_multiple_of(d) {
            return Err(ArhmmError::InvalidInput(
                "pseudo-observations have the wrong shape".into(),
            ));
        }
        if let Some(x) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(ArhmmError::InvalidInput(format!(
                "pseudo-observation {x} outside [0, 1]"
            )));
        }
        Ok(Self { d, u })
    }

    pub fn len(&self) -> usize {
        self.u.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.u[t * self.d..(t + 1) * self.d]
    }
}

/// Transform `y_2, ..., y_n` with the conditional law given the past.
pub fn rosenblatt_transform(model: &ArhmmModel, y: &Series) -> Result<RosenblattSeries> {
    let d = model.dim();
    if d > 2 {
        return Err(ArhmmError::UnsupportedDimension(d));
    }
    if y.len() < 3 {
        return Err(ArhmmError::InvalidInput(
            "need at least 3 observations".into(),
        ));
    }
    let n = y.len();
    let l = model.num_regimes();
    let table = log_density_table(model, y)?;
    let (eta, _) = forward_from_table(model, &table, n)?;
    let mut u = Vec::with_capacity((n - 1) * d);
    let mut mean = vec![0.0; d];
    let mut logw = vec![0.0; l];
    for t in 1..n {
        let w = row_times(&eta[(t - 1) * l..t * l], model.q());
        let (prev, cur) = (y.row(t - 1), y.row(t));
        if d == 1 {
            let mut s = 0.0;
            for (i, wi) in w.iter().enumerate() {
                let r = model.regime(i);
                s += wi * norm_cdf((cur[0] - r.cond_mean_1d(prev[0])) / r.sigma());
            }
            u.push(s.clamp(0.0, 1.0));
            continue;
        }
        let (mut u1, mut num) = (0.0, 0.0);
        for (i, wi) in w.iter().enumerate() {
            let r = model.regime(i);
            r.conditional_mean_into(prev, &mut mean);
            let a = r.cov();
            let sd1 = a[(0, 0)].sqrt();
            let z1 = (cur[0] - mean[0]) / sd1;
            u1 += wi * norm_cdf(z1);
            logw[i] = if *wi > 0.0 {
                wi.ln() - 0.5 * z1 * z1 - sd1.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
        let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut den = 0.0;
        for (i, lw) in logw.iter().enumerate() {
            let k = (lw - m).exp();
            if k == 0.0 {
                continue;
            }
            let r = model.regime(i);
            r.conditional_mean_into(prev, &mut mean);
            let a = r.cov();
            let beta = a[(0, 1)] / a[(0, 0)];
            let v = a[(1, 1)] - a[(0, 1)] * a[(0, 1)] / a[(0, 0)];
            let m2 = mean[1] + beta * (cur[0] - mean[0]);
            num += k * norm_cdf((cur[1] - m2) / v.sqrt());
            den += k;
        }
        u.push(u1.clamp(0.0, 1.0));
        u.push((num / den).clamp(0.0, 1.0));
    }
    RosenblattSeries::new(d, u)
}

/// Closed-form Cramér-von Mises statistic of pseudo-observations against the
/// uniform law on the unit cube.
pub fn cvm_statistic(u: &RosenblattSeries) -> Result<f64> {
    if u.is_empty() {
        return Err(ArhmmError::InvalidInput("no pseudo-observations".into()));
    }
    if let Some(x) = u.u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(ArhmmError::InvalidInput(format!(
            "pseudo-observation {x} outside [0, 1]"
        )));
    }
    let n = u.len();
    let nf = n as f64;
    let d = u.d;
    let double_sum = if d == 1 {
        // sum_{t,k} (1 - max(u_t, u_k)) = n^2 - sum_i (2i - 1) u_(i)
        let mut s = u.u.clone();
        s.sort_by(f64::total_cmp);
        let weighted: f64 = s
            .iter()
            .enumerate()
            .map(|(i, x)| (2 * i + 1) as f64 * x)
            .sum();
        nf * nf - weighted
    } else {
        let mut acc = 0.0;
        for t in 0..n {
            let ut = u.row(t);
            // diagonal term once, off-diagonal pairs twice
            acc += ut.iter().map(|x| 1.0 - x).product::<f64>();
            for k in t + 1..n {
                let uk = u.row(k);
                acc += 2.0
                    * ut.iter()
                        .zip(uk)
                        .map(|(a, b)| 1.0 - a.max(*b))
                        .product::<f64>();
            }
        }
        acc
    };
    let single: f64 =
        u.u.chunks_exact(d)
            .map(|r| r.iter().map(|x| 1.0 - x * x).product::<f64>())
            .sum();
    Ok(double_sum / nf - single / 2f64.powi(d as i32 - 1) + nf / 3f64.powi(d as i32))
}

/// Outcome of the bootstrap test for one regime count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofResult {
    pub regimes: usize,
    pub s_n: f64,
    /// Statistics of the replicates that fitted successfully.
    pub boot: Vec<f64>,
    pub p_value: f64,
    pub n_boot: usize,
    pub dropped: usize,
}

/// Exceedance fraction `(1/N) sum 1(S^k > S_n)`.
pub fn bootstrap_p_value(s_n: f64, boot: &[f64]) -> f64 {
    if boot.is_empty() {
        return f64::NAN;
    }
    boot.iter().filter(|&&s| s > s_n).count() as f64 / boot.len() as f64
}

/// Statistic of `y` under the model fitted to it.
pub fn fitted_statistic(y: &Series, l: usize, cfg: &EmConfig) -> Result<(ArhmmModel, f64)> {
    let fit = em_fit(y, l, cfg)?;
    let s = cvm_statistic(&rosenblatt_transform(&fit.model, y)?)?;
    Ok((fit.model, s))
}

/// Parametric bootstrap P-value for an `l`-regime model.
pub fn parametric_bootstrap(
    y: &Series,
    l: usize,
    n_boot: usize,
    cfg: &EmConfig,
    seed: u64,
) -> Result<GofResult> {
    if n_boot == 0 {
        return Err(ArhmmError::InvalidInput("n_boot must be >= 1".into()));
    }
    if y.dim() > 2 {
        return Err(ArhmmError::UnsupportedDimension(y.dim()));
    }
    let (model, s_n) = fitted_statistic(y, l, cfg)?;
    let n = y.len();
    let results: Vec<Option<f64>> = (0..n_boot)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k as u64);
            let rep_cfg = EmConfig {
                seed: rng::child_seed(cfg.seed, k as u64 + 1),
                ..cfg.clone()
            };
            let out = model
                .simulate_stationary(n, BOOTSTRAP_BURN_IN, &mut r)
                .and_then(|(ys, _)| fitted_statistic(&ys, l, &rep_cfg));
            match out {
                Ok((_, s)) => Some(s),
                Err(e) => {
                    log::warn!("bootstrap replicate {k} dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let boot: Vec<f64> = results.iter().flatten().copied().collect();
    let dropped = n_boot - boot.len();
    if dropped as f64 > MAX_DROP_FRACTION * n_boot as f64 {
        return Err(ArhmmError::BootstrapAborted {
            dropped,
            total: n_boot,
        });
    }
    Ok(GofResult {
        regimes: l,
        s_n,
        p_value: bootstrap_p_value(s_n, &boot),
        n_boot: boot.len(),
        boot,
        dropped,
    })
}

/// Per-regime-count results and the selected count, if any.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeSelection {
    pub results: Vec<GofResult>,
    /// First regime count whose P-value exceeds the level; `None` if none does.
    pub selected: Option<usize>,
}

/// Test `l = 1, 2, ...` and stop at the first P-value above 5%.
pub fn select_num_regimes(
    y: &Series,
    l_max: usize,
    n_boot: usize,
    cfg: &EmConfig,
    seed: u64,
) -> Result<RegimeSelection> {
    select_with(l_max, |l| {
        parametric_bootstrap(y, l, n_boot, cfg, rng::child_seed(seed, l as u64))
    })
}

pub(crate) fn select_with(
    l_max: usize,
    mut run: impl FnMut(usize) -> Result<GofResult>,
) -> Result<RegimeSelection> {
    if l_max == 0 {
        return Err(ArhmmError::InvalidInput("l_max must be >= 1".into()));
    }
    let mut results = Vec::new();
    for l in 1..=l_max {
        let r = run(l)?;
        let pass = r.p_value > 0.05;
        results.push(r);
        if pass {
            return Ok(RegimeSelection {
                results,
                selected: Some(l),
            });
        }
    }
    Ok(RegimeSelection {
        results,
        selected: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RegimeParams;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;

    /// `n * int (D_n(u) - prod u)^2 du` over the cells cut by the observed
    /// coordinates. Inside a cell the integrand has degree 2 per axis, so
    /// Simpson's rule is exact there.
    fn cvm_by_integration(u: &RosenblattSeries) -> f64 {
        let n = u.len();
        let d = u.d;
        let mut cuts: Vec<Vec<f64>> = (0..d)
            .map(|q| {
                let mut c: Vec<f64> = (0..n).map(|t| u.row(t)[q]).collect();
                c.push(0.0);
                c.push(1.0);
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .collect();
        let simpson = [(0.0, 1.0 / 6.0), (0.5, 4.0 / 6.0), (1.0, 1.0 / 6.0)];
        let mut total = 0.0;
        if d == 1 {
            let c = &cuts[0];
            for w in c.windows(2) {
                let (a, b) = (w[0], w[1]);
                // D_n is constant on the open cell: evaluate just inside
                let dn_probe = a + 0.5 * (b - a);
                let dn = (0..n).filter(|&t| u.row(t)[0] <= dn_probe).count() as f64 / n as f64;
                for (x, wt) in simpson {
                    let p = a + x * (b - a);
                    total += wt * (b - a) * (dn - p).powi(2);
                }
            }
        } else {
            let cy = cuts.pop().unwrap();
            let cx = cuts.pop().unwrap();
            for wx in cx.windows(2) {
                for wy in cy.windows(2) {
                    let (ax, bx, ay, by) = (wx[0], wx[1], wy[0], wy[1]);
                    let probe = [0.5 * (ax + bx), 0.5 * (ay + by)];
                    let dn = (0..n)
                        .filter(|&t| u.row(t)[0] <= probe[0] && u.row(t)[1] <= probe[1])
                        .count() as f64
                        / n as f64;
                    for (x, wxs) in simpson {
                        for (yv, wys) in simpson {
                            let p = [ax + x * (bx - ax), ay + yv * (by - ay)];
                            total += wxs * wys * (bx - ax) * (by - ay) * (dn - p[0] * p[1]).powi(2);
                        }
                    }
                }
            }
        }
        n as f64 * total
    }

    #[test]
    fn cvm_single_point() {
        let u = RosenblattSeries::new(1, vec![0.5]).unwrap();
        assert!((cvm_statistic(&u).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn cvm_two_points_matches_integral() {
        let u = RosenblattSeries::new(1, vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let closed = cvm_statistic(&u).unwrap();
        assert!((closed - cvm_by_integration(&u)).abs() < 1e-10);
    }

    #[test]
    fn cvm_random_instances_match_integral() {
        let mut r = rng::seeded(17);
        for case in 0..50 {
            let d = 1 + case % 2;
            let n = r.gen_range(1..=10);
            let u: Vec<f64> = (0..n * d).map(|_| r.gen::<f64>()).collect();
            let u = RosenblattSeries::new(d, u).unwrap();
            let closed = cvm_statistic(&u).unwrap();
            let integral = cvm_by_integration(&u);
            assert!(
                (closed - integral).abs() < 1e-8,
                "d={d} n={n}: {closed} vs {integral}"
            );
        }
    }

    #[test]
    fn cvm_rejects_out_of_range() {
        let bad = RosenblattSeries {
            d: 1,
            u: vec![0.2, 1.2],
        };
        assert!(cvm_statistic(&bad).is_err());
    }

    #[test]
    fn single_regime_transform_is_standardized_residual() {
        let m =
            ArhmmModel::univariate(&[(0.1, 0.5, 2.0)], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = Series::univariate(vec![0.0, 1.0, -1.0, 3.0]);
        let u = rosenblatt_transform(&m, &y).unwrap();
        assert_eq!(u.len(), 3);
        for t in 1..4 {
            let (p, c) = (y.row(t - 1)[0], y.row(t)[0]);
            let z = (c - (0.1 + 0.5 * (p - 0.1))) / 2.0;
            assert!((u.u[t - 1] - norm_cdf(z)).abs() < 1e-15);
        }
    }

    fn two_regime() -> ArhmmModel {
        let q = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.1, 0.9]);
        ArhmmModel::univariate(&[(0.05, 0.2, 0.5), (-0.1, -0.3, 1.5)], q).unwrap()
    }

    #[test]
    fn transform_monotone_in_last_observation() {
        let m = two_regime();
        let base = m.simulate_path(&[0.0], 0, 30, 3).unwrap().0;
        let mut last = f64::NEG_INFINITY;
        for k in -40..=40 {
            let mut v = base.as_slice().to_vec();
            *v.last_mut().unwrap() = k as f64 * 0.1;
            let u = rosenblatt_transform(&m, &Series::univariate(v)).unwrap();
            let x = *u.u.last().unwrap();
            assert!(x >= last);
            last = x;
        }
    }

    #[test]
    fn transform_of_model_data_is_uniform() {
        let m = two_regime();
        let n = 2000;
        let crit = 1.36 / ((n - 1) as f64).sqrt();
        let mut passes = 0;
        for rep in 0..100 {
            let mut r = rng::substream(99, rep);
            let (y, _) = m.simulate_stationary(n, 100, &mut r).unwrap();
            let mut u = rosenblatt_transform(&m, &y).unwrap().u;
            u.sort_by(f64::total_cmp);
            let k = u.len() as f64;
            let ks = u
                .iter()
                .enumerate()
                .map(|(i, x)| ((i + 1) as f64 / k - x).max(x - i as f64 / k))
                .fold(0.0, f64::max);
            if ks < crit {
                passes += 1;
            }
        }
        assert!(passes >= 90, "{passes}/100");
    }

    #[test]
    fn transform_has_no_lag_one_correlation() {
        let m = two_regime();
        let mut r = rng::seeded(5);
        let (y, _) = m.simulate_stationary(5000, 100, &mut r).unwrap();
        let u = rosenblatt_transform(&m, &y).unwrap().u;
        let k = u.len() as f64;
        let mean = u.iter().sum::<f64>() / k;
        let var = u.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let cov: f64 = u.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((cov / var).abs() < 3.0 / k.sqrt());
    }

    #[test]
    fn bivariate_transform_single_regime() {
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 4.0]);
        let reg = RegimeParams::new(mu, DMatrix::zeros(2, 2), cov).unwrap();
        let m =
            ArhmmModel::with_uniform_start(vec![reg], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = Series::from_rows(&[vec![0.0, 0.0], vec![0.5, 1.0], vec![-1.0, 2.0]]).unwrap();
        let u = rosenblatt_transform(&m, &y).unwrap();
        // x2 | x1 ~ N(0.6 x1, 4 - 0.36)
        let expect2 = norm_cdf((1.0 - 0.6 * 0.5) / (3.64f64).sqrt());
        assert!((u.row(0)[0] - norm_cdf(0.5)).abs() < 1e-15);
        assert!((u.row(0)[1] - expect2).abs() < 1e-15);
    }

    #[test]
    fn three_dimensions_unsupported() {
        let reg = RegimeParams::new(
            DVector::zeros(3),
            DMatrix::zeros(3, 3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let m =
            ArhmmModel::with_uniform_start(vec![reg], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = Series::new(3, vec![0.0; 12]).unwrap();
        assert!(matches!(
            rosenblatt_transform(&m, &y),
            Err(ArhmmError::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn bootstrap_is_reproducible_and_counts_exceedances() {
        let m = two_regime();
        let y = m.simulate_path(&[0.0], 0, 300, 1).unwrap().0;
        let cfg = EmConfig::default();
        let a = parametric_bootstrap(&y, 1, 40, &cfg, 7).unwrap();
        let b = parametric_bootstrap(&y, 1, 40, &cfg, 7).unwrap();
        assert_eq!(a.boot, b.boot);
        assert_eq!(a.p_value, bootstrap_p_value(a.s_n, &a.boot));
        assert!((0.0..=1.0).contains(&a.p_value));
        let count = a.boot.iter().filter(|&&s| s > a.s_n).count();
        assert_eq!(a.p_value, count as f64 / a.boot.len() as f64);
    }

    #[test]
    fn selection_contract() {
        let fake = |ps: Vec<f64>| {
            move |l: usize| -> Result<GofResult> {
                Ok(GofResult {
                    regimes: l,
                    s_n: 0.0,
                    boot: vec![],
                    p_value: ps[l - 1],
                    n_boot: 0,
                    dropped: 0,
                })
            }
        };
        let sel = select_with(3, fake(vec![0.0, 0.0, 0.2651])).unwrap();
        assert_eq!(sel.selected, Some(3));
        let sel = select_with(3, fake(vec![0.01, 0.05, 0.0])).unwrap();
        assert_eq!(sel.selected, None);
        assert_eq!(sel.results.len(), 3);
        let sel = select_with(3, fake(vec![0.5, 0.0, 0.0])).unwrap();
        assert_eq!(sel.selected, Some(1));
        assert_eq!(sel.results.len(), 1);
    }

    proptest! {
        #[test]
        fn cvm_is_nonnegative(u in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let s = cvm_statistic(&RosenblattSeries::new(1, u).unwrap()).unwrap();
            prop_assert!(s >= -1e-12);
        }
    }
}
