//! Backward recursion with Monte Carlo integrals in place of the closed forms.
//!
//! At each step one batch of standard normal innovations is drawn and rescaled to exact zero
//! mean and unit variance. Every node and destination regime reuses that batch, shifted and
//! scaled to its conditional mean and volatility.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::interp::interp_linear;
use super::tables::{
    check_model, combine_scalar, combine_values, effective_y_grid, extended_eval, law,
    terminal_psi, HedgeTables, ScalarTables,
};
use super::HedgeConfig;
use crate::error::{ArhmmError, Result};
use crate::model::ArhmmModel;
use crate::rng;

/// `n` standard normal draws rescaled to sample mean 0 and population variance 1.
pub(crate) fn rescaled_normals(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut r = rng::substream(seed, index);
    let mut e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let m = e.iter().sum::<f64>() / n as f64;
    let sd = (e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    for x in e.iter_mut() {
        *x = (*x - m) / sd;
    }
    e
}

/// Same tables as the closed-form recursion, with each conditional expectation replaced by a
/// sample average over `n_samples` rescaled draws.
pub fn mc_backward_tables(
    model: &ArhmmModel,
    cfg: &HedgeConfig,
    n_samples: usize,
    seed: u64,
) -> Result<HedgeTables> {
    check_model(model)?;
    cfg.validate()?;
    if n_samples < 2 {
        return Err(ArhmmError::InvalidInput("need at least two samples".into()));
    }
    let n = cfg.n_steps;
    let l = model.num_regimes();
    let y = effective_y_grid(model, &cfg.y_grid);
    let s = cfg.s_grid.clone();
    let (ny, ns) = (y.len(), s.len());
    let inv = 1.0 / n_samples as f64;

    let mut g = vec![0.0; (n + 1) * l * ny];
    let mut a = vec![0.0; n * l * ny];
    let mut b = vec![0.0; n * l * ny];
    let mut h = vec![0.0; n * l * ny];
    let idx = |t: usize, i: usize, v: usize| ((t - 1) * l + i) * ny + v;
    for i in 0..l {
        for v in 0..ny {
            g[idx(n + 1, i, v)] = 1.0;
        }
    }
    let block = l * ns * ny;
    let mut psi = vec![0.0; (n + 1) * block];
    let mut big_a = vec![0.0; n * block];
    psi[n * block..].copy_from_slice(&terminal_psi(cfg, l, ny));

    for t in (1..=n).rev() {
        let r = cfg.rates[t - 1];
        let eps = rescaled_normals(n_samples, seed, t as u64);
        let g_next: Vec<Vec<f64>> = (0..l)
            .map(|j| (0..ny).map(|v| g[idx(t + 1, j, v)]).collect())
            .collect();
        let rows: Vec<Vec<(f64, f64, f64, f64)>> = (0..ny)
            .into_par_iter()
            .map(|v| {
                let jk: Vec<[f64; 3]> = (0..l)
                    .map(|j| {
                        let lw = law(model, j, y[v]);
                        let mut acc = [0.0; 3];
                        for e in &eps {
                            let z = lw.mean + lw.sd * e;
                            let gz = interp_linear(&y, &g_next[j], z);
                            let x = (z - r).exp();
                            acc[0] += gz;
                            acc[1] += x * gz;
                            acc[2] += x * x * gz;
                        }
                        acc.map(|v| v * inv)
                    })
                    .collect();
                (0..l)
                    .map(|i| combine_scalar(model, t, y[v], i, &jk))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (v, row) in rows.into_iter().enumerate() {
            for (i, (gv, av, bv, hv)) in row.into_iter().enumerate() {
                g[idx(t, i, v)] = gv;
                a[idx(t, i, v)] = av;
                b[idx(t, i, v)] = bv;
                h[idx(t, i, v)] = hv;
            }
        }
    }
    let scalars = ScalarTables {
        n,
        l,
        y_grid: y.clone(),
        rates: cfg.rates.clone(),
        g,
        a,
        b,
        h,
    };

    for t in (1..=n).rev() {
        let r = cfg.rates[t - 1];
        let eps = rescaled_normals(n_samples, seed, (n + t) as u64);
        let (head, tail) = psi.split_at_mut(t * block);
        let next = &tail[..block];
        let per_v: Vec<Vec<Vec<(f64, f64)>>> = (0..ny)
            .into_par_iter()
            .map(|v| {
                (0..l)
                    .map(|j| {
                        let lw = law(model, j, y[v]);
                        let table = &next[j * ns * ny..(j + 1) * ns * ny];
                        let zs: Vec<(f64, f64)> = eps
                            .iter()
                            .map(|e| {
                                let z = lw.mean + lw.sd * e;
                                (z, (z - r).exp())
                            })
                            .collect();
                        s.iter()
                            .map(|&sq| {
                                let (mut i0, mut i1) = (0.0, 0.0);
                                for &(z, x) in &zs {
                                    let p = extended_eval(&s, &y, table, sq * x, z);
                                    i0 += p;
                                    i1 += x * p;
                                }
                                (i0 * inv, i1 * inv)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        combine_values(
            model,
            &scalars,
            t,
            ns,
            &per_v,
            &mut head[(t - 1) * block..],
            &mut big_a[(t - 1) * block..t * block],
        );
    }
    Ok(HedgeTables {
        config: cfg.clone(),
        scalars,
        s_grid: s,
        psi,
        big_a,
    })
}
