// Backward hedging recursion evaluated by direct quadrature on given grids.

use arhmm::hedge::HedgeConfig;
use arhmm::ArhmmModel;

use super::quad;

/// Independent interpolant: bilinear inside, frozen in y beyond the edges, linear in s
/// continuation above the top node.
pub fn oracle_interp(
    s: &[f64],
    y: &[f64],
    f: &dyn Fn(usize, usize) -> f64,
    sv: f64,
    z: f64,
) -> f64 {
    let ns = s.len();
    let ny = y.len();
    let zc = z.max(y[0]).min(y[ny - 1]);
    let mut q = 0;
    while q + 2 < ns && sv >= s[q + 1] {
        q += 1;
    }
    let mut v = 0;
    while v + 2 < ny && zc >= y[v + 1] {
        v += 1;
    }
    let u = (sv - s[q]) / (s[q + 1] - s[q]);
    let w = if ny == 1 {
        0.0
    } else {
        (zc - y[v]) / (y[v + 1] - y[v])
    };
    let f00 = f(q, v);
    let f10 = f(q + 1, v);
    let (f01, f11) = if ny == 1 {
        (f00, f10)
    } else {
        (f(q, v + 1), f(q + 1, v + 1))
    };
    (1.0 - u) * (1.0 - w) * f00 + u * (1.0 - w) * f10 + (1.0 - u) * w * f01 + u * w * f11
}

pub struct OracleTables {
    pub g: Vec<Vec<Vec<f64>>>,
    pub a: Vec<Vec<Vec<f64>>>,
    pub h: Vec<Vec<Vec<f64>>>,
    pub psi: Vec<Vec<Vec<f64>>>,
    pub big_a: Vec<Vec<Vec<f64>>>,
}

/// Direct quadrature of the backward recursion on the given grids.
pub fn oracle_tables(model: &ArhmmModel, cfg: &HedgeConfig, y: &[f64]) -> OracleTables {
    let n = cfg.n_steps;
    let l = model.num_regimes();
    let s = &cfg.s_grid;
    let (ns, ny) = (s.len(), y.len());
    let mut g = vec![vec![vec![1.0; ny]; l]; n + 2];
    let mut a = vec![vec![vec![0.0; ny]; l]; n + 1];
    let mut h = vec![vec![vec![0.0; ny]; l]; n + 1];
    let beta_n = cfg.beta_n();
    let term: Vec<f64> = s
        .iter()
        .map(|&v| cfg.payoff.discounted(v, beta_n))
        .collect();
    let mut psi = vec![vec![vec![0.0; ns * ny]; l]; n + 1];
    for i in 0..l {
        for q in 0..ns {
            for v in 0..ny {
                psi[n][i][q * ny + v] = term[q];
            }
        }
    }
    let mut big_a = vec![vec![vec![0.0; ns * ny]; l]; n + 1];
    for t in (1..=n).rev() {
        let r = cfg.rates[t - 1];
        for v in 0..ny {
            let mut ints = vec![[0.0; 3]; l];
            for j in 0..l {
                let reg = model.regime(j);
                let (m, sd) = (reg.cond_mean_1d(y[v]), reg.sigma());
                let gn = g[t + 1][j].clone();
                for k in 0..3 {
                    ints[j][k] = quad::integrate_gaussian(
                        |z| {
                            let gz = if ny == 1 {
                                gn[0]
                            } else {
                                arhmm::hedge::interp_linear(y, &gn, z)
                            };
                            (k as f64 * (z - r)).exp() * gz
                        },
                        m,
                        sd,
                        m,
                        f64::NEG_INFINITY,
                        f64::INFINITY,
                        y,
                        1e-13,
                    );
                }
            }
            for i in 0..l {
                let (mut eg, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for j in 0..l {
                    let w = model.q()[(i, j)];
                    eg += w * ints[j][0];
                    bb += w * (ints[j][1] - ints[j][0]);
                    aa += w * (ints[j][2] - 2.0 * ints[j][1] + ints[j][0]);
                }
                a[t][i][v] = aa;
                h[t][i][v] = bb / aa;
                g[t][i][v] = eg - bb * bb / aa;
            }
        }
        for v in 0..ny {
            for q in 0..ns {
                let mut per_j = vec![(0.0, 0.0); l];
                for j in 0..l {
                    let reg = model.regime(j);
                    let (m, sd) = (reg.cond_mean_1d(y[v]), reg.sigma());
                    let table = psi[t][j].clone();
                    let f = |qq: usize, vv: usize| table[qq * ny + vv];
                    let mut breaks: Vec<f64> = y.to_vec();
                    if s[q] > 0.0 {
                        breaks.extend(s[1..].iter().map(|&x| (x / s[q]).ln() + r));
                    }
                    let psi_z = |z: f64| oracle_interp(s, y, &f, s[q] * (z - r).exp(), z);
                    let i0 = quad::integrate_gaussian(
                        psi_z,
                        m,
                        sd,
                        m,
                        f64::NEG_INFINITY,
                        f64::INFINITY,
                        &breaks,
                        1e-11,
                    );
                    let gain = quad::integrate_gaussian(
                        |z| psi_z(z) * ((z - r).exp() - 1.0),
                        m,
                        sd,
                        m,
                        f64::NEG_INFINITY,
                        f64::INFINITY,
                        &breaks,
                        1e-11,
                    );
                    per_j[j] = (i0, gain);
                }
                for i in 0..l {
                    let (mut p, mut ab) = (0.0, 0.0);
                    for j in 0..l {
                        let w = model.q()[(i, j)];
                        p += w * (per_j[j].0 - h[t][i][v] * per_j[j].1);
                        ab += w * per_j[j].1;
                    }
                    psi[t - 1][i][q * ny + v] = p;
                    big_a[t][i][q * ny + v] = ab;
                }
            }
        }
    }
    OracleTables {
        g,
        a,
        h,
        psi,
        big_a,
    }
}
