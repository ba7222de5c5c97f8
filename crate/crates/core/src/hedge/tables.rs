//! Backward recursion for the hedging tables with closed-form Gaussian integrals.
//!
//! Every integral against the regime-`j` transition density is split at the `y` grid nodes
//! and at the points where `s e^{z-r}` crosses an `s` grid node. On each piece the
//! interpolant is linear in `(s e^z, z, s e^z z)`, so the integral reduces to truncated
//! moments with tilts 0, 1 and 2.

use rayon::prelude::*;

use super::interp::{bilinear_absolute, interp_bilinear, interp_linear, line_through, locate};
use super::moments::{Ends, Tilted};
use super::HedgeConfig;
use crate::error::{ArhmmError, Result};
use crate::model::ArhmmModel;

/// `g, a, b, h` on the `y` grid for each regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTables {
    pub n: usize,
    pub l: usize,
    /// Grid the tables are sampled on. A single point when no regime is autoregressive,
    /// since then every table is constant in `y`.
    pub y_grid: Vec<f64>,
    pub rates: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) a: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

impl ScalarTables {
    fn ny(&self) -> usize {
        self.y_grid.len()
    }

    fn row(&self, t: usize, i: usize) -> std::ops::Range<usize> {
        let start = ((t - 1) * self.l + i) * self.ny();
        start..start + self.ny()
    }

    /// `g_t(., i)` for `t` in `1..=n+1`.
    pub fn g_row(&self, t: usize, i: usize) -> &[f64] {
        assert!((1..=self.n + 1).contains(&t));
        &self.g[self.row(t, i)]
    }

    pub fn a_row(&self, t: usize, i: usize) -> &[f64] {
        assert!((1..=self.n).contains(&t));
        &self.a[self.row(t, i)]
    }

    pub fn b_row(&self, t: usize, i: usize) -> &[f64] {
        assert!((1..=self.n).contains(&t));
        &self.b[self.row(t, i)]
    }

    pub fn h_row(&self, t: usize, i: usize) -> &[f64] {
        assert!((1..=self.n).contains(&t));
        &self.h[self.row(t, i)]
    }

    pub fn g_at(&self, t: usize, i: usize, y: f64) -> f64 {
        interp_linear(&self.y_grid, self.g_row(t, i), y)
    }

    pub fn a_at(&self, t: usize, i: usize, y: f64) -> f64 {
        interp_linear(&self.y_grid, self.a_row(t, i), y)
    }

    pub fn b_at(&self, t: usize, i: usize, y: f64) -> f64 {
        interp_linear(&self.y_grid, self.b_row(t, i), y)
    }

    pub fn h_at(&self, t: usize, i: usize, y: f64) -> f64 {
        interp_linear(&self.y_grid, self.h_row(t, i), y)
    }
}

/// Complete set of tables for one model, contract and grid.
#[derive(Debug, Clone)]
pub struct HedgeTables {
    pub config: HedgeConfig,
    pub scalars: ScalarTables,
    pub s_grid: Vec<f64>,
    pub(crate) psi: Vec<f64>,
    pub(crate) big_a: Vec<f64>,
}

impl HedgeTables {
    pub fn n_steps(&self) -> usize {
        self.scalars.n
    }

    pub fn num_regimes(&self) -> usize {
        self.scalars.l
    }

    pub fn y_grid(&self) -> &[f64] {
        &self.scalars.y_grid
    }

    fn block(&self) -> usize {
        self.s_grid.len() * self.scalars.y_grid.len()
    }

    /// `Psi_t(., ., i)` for `t` in `0..=n`, laid out `[q][v]`.
    pub fn psi_table(&self, t: usize, i: usize) -> &[f64] {
        assert!(t <= self.scalars.n);
        let b = self.block();
        let start = (t * self.scalars.l + i) * b;
        &self.psi[start..start + b]
    }

    /// The value-gain cross moment at `t` in `1..=n`, laid out `[q][v]`.
    pub fn big_a_table(&self, t: usize, i: usize) -> &[f64] {
        assert!((1..=self.scalars.n).contains(&t));
        let b = self.block();
        let start = ((t - 1) * self.scalars.l + i) * b;
        &self.big_a[start..start + b]
    }

    pub fn psi_node(&self, t: usize, i: usize, q: usize, v: usize) -> f64 {
        self.psi_table(t, i)[q * self.scalars.y_grid.len() + v]
    }

    pub fn big_a_node(&self, t: usize, i: usize, q: usize, v: usize) -> f64 {
        self.big_a_table(t, i)[q * self.scalars.y_grid.len() + v]
    }

    pub fn psi_at(&self, t: usize, i: usize, s: f64, y: f64) -> f64 {
        interp_bilinear(
            &self.s_grid,
            &self.scalars.y_grid,
            self.psi_table(t, i),
            s,
            y,
        )
    }

    pub fn big_a_at(&self, t: usize, i: usize, s: f64, y: f64) -> f64 {
        interp_bilinear(
            &self.s_grid,
            &self.scalars.y_grid,
            self.big_a_table(t, i),
            s,
            y,
        )
    }

    pub fn beta_n(&self) -> f64 {
        self.config.beta_n()
    }
}

pub(crate) fn check_model(model: &ArhmmModel) -> Result<()> {
    if model.dim() != 1 {
        return Err(ArhmmError::UnsupportedDimension(model.dim()));
    }
    Ok(())
}

/// Sampling grid for `y`, collapsed to one node when the conditional laws do not depend on
/// the previous return.
pub(crate) fn effective_y_grid(model: &ArhmmModel, y_grid: &[f64]) -> Vec<f64> {
    if model.regimes().iter().all(|r| r.phi()[(0, 0)] == 0.0) {
        vec![y_grid[y_grid.len() / 2]]
    } else {
        y_grid.to_vec()
    }
}

pub(crate) fn law(model: &ArhmmModel, j: usize, y: f64) -> Tilted {
    let r = model.regime(j);
    Tilted::new(r.cond_mean_1d(y), r.sigma())
}

/// Truncation window and cached endpoint data at the `y` nodes inside it.
struct YBreaks {
    first: usize,
    last: usize,
    ends: Vec<Ends>,
    lo: Ends,
    hi: Ends,
}

impl YBreaks {
    fn new(law: &Tilted, y: &[f64]) -> Self {
        let (wlo, whi) = law.window();
        let first = y.partition_point(|&v| v <= wlo);
        let last = y.partition_point(|&v| v < whi).max(first);
        YBreaks {
            first,
            last,
            ends: y[first..last].iter().map(|&v| law.ends(v)).collect(),
            lo: law.ends(wlo),
            hi: law.ends(whi),
        }
    }
}

/// Intercept and slope in `z` of a function linear between `y` nodes, constant beyond.
#[inline]
fn linear_piece(y: &[f64], f: &[f64], ypos: usize) -> (f64, f64) {
    let ny = y.len();
    if ypos == 0 {
        (f[0], 0.0)
    } else if ypos >= ny {
        (f[ny - 1], 0.0)
    } else {
        line_through(y[ypos - 1], f[ypos - 1], y[ypos], f[ypos])
    }
}

/// `E[e^{k(Z-r)} f(Z)]` for `k = 0, 1, 2`, with `f` the linear interpolant of `f` on `y`.
fn scalar_integrals(law: &Tilted, r: f64, y: &[f64], yb: &YBreaks, f: &[f64]) -> [f64; 3] {
    if law.sd == 0.0 {
        let v = interp_linear(y, f, law.mean);
        return [
            v,
            v * (law.mean - r).exp(),
            v * (2.0 * (law.mean - r)).exp(),
        ];
    }
    let mut out = [0.0; 3];
    let mut lo = yb.lo;
    let mut ypos = yb.first;
    loop {
        let (hi, done) = if ypos < yb.last {
            (yb.ends[ypos - yb.first], false)
        } else {
            (yb.hi, true)
        };
        let (a, b) = linear_piece(y, f, ypos);
        for (k, o) in out.iter_mut().enumerate() {
            let (m0, m1) = law.piece(k, &lo, &hi);
            *o += a * m0 + b * m1;
        }
        if done {
            break;
        }
        ypos += 1;
        lo = hi;
    }
    out[1] *= (-r).exp();
    out[2] *= (-2.0 * r).exp();
    out
}

/// Coefficients `[c0, c1, c2, c3]` of `c0 + c1 s + c2 z + c3 s z` for the interpolant of
/// `psi` (laid out `[q][v]`) on s-cell `sc` and y-position `ypos`. Beyond the `y` range the
/// interpolant is frozen at the edge node; above the top `s` node the last cell continues
/// linearly.
#[inline]
fn cell_coeffs(s: &[f64], y: &[f64], psi: &[f64], sc: usize, ypos: usize) -> [f64; 4] {
    let ny = y.len();
    let at = |q: usize, v: usize| psi[q * ny + v];
    if ny == 1 || ypos == 0 || ypos >= ny {
        let v = if ypos == 0 { 0 } else { ny - 1 };
        let (c0, c1) = line_through(s[sc], at(sc, v), s[sc + 1], at(sc + 1, v));
        return [c0, c1, 0.0, 0.0];
    }
    let v = ypos - 1;
    bilinear_absolute(
        s[sc],
        s[sc + 1],
        y[v],
        y[v + 1],
        [
            [at(sc, v), at(sc, v + 1)],
            [at(sc + 1, v), at(sc + 1, v + 1)],
        ],
    )
}

/// The interpolant used inside the integrals, evaluated at a point.
pub(crate) fn extended_eval(s: &[f64], y: &[f64], psi: &[f64], sv: f64, z: f64) -> f64 {
    let sc = locate(s, sv);
    let ypos = y.partition_point(|&v| v <= z);
    let c = cell_coeffs(s, y, psi, sc, ypos);
    let zc = z.clamp(y[0], y[y.len() - 1]);
    c[0] + c[1] * sv + c[2] * zc + c[3] * sv * zc
}

/// `(E[Psi(s e^{Z-r}, Z)], E[e^{Z-r} Psi(s e^{Z-r}, Z)])` for one node and regime.
fn value_integrals(
    law: &Tilted,
    r: f64,
    sq: f64,
    s: &[f64],
    ln_s: &[f64],
    y: &[f64],
    yb: &YBreaks,
    psi: &[f64],
) -> (f64, f64) {
    let ns = s.len();
    let c = sq * (-r).exp();
    if law.sd == 0.0 {
        let v = extended_eval(s, y, psi, c * law.mean.exp(), law.mean);
        return (v, v * (law.mean - r).exp());
    }
    let (wlo, whi) = law.window();
    // s nodes 1..ns-1 cross at z = ln s_q' - ln sq + r
    let (mut qn, s_end, off) = if sq > 0.0 {
        let off = r - sq.ln();
        let first = 1 + ln_s[1..].partition_point(|&v| v + off <= wlo);
        let end = (1 + ln_s[1..].partition_point(|&v| v + off < whi)).max(first);
        (first, end, off)
    } else {
        (ns, ns, 0.0)
    };
    let mut sc = if sq > 0.0 { (qn - 1).min(ns - 2) } else { 0 };
    let mut ypos = yb.first;
    let mut lo = yb.lo;
    let (mut i0, mut i1) = (0.0, 0.0);
    loop {
        let zy = if ypos < yb.last {
            y[ypos]
        } else {
            f64::INFINITY
        };
        let zs = if qn < s_end {
            ln_s[qn] + off
        } else {
            f64::INFINITY
        };
        let (hi, step) = if zy.is_infinite() && zs.is_infinite() {
            (yb.hi, 0u8)
        } else if zy <= zs {
            (yb.ends[ypos - yb.first], 1)
        } else {
            (law.ends(zs), 2)
        };
        let [c0, c1, c2, c3] = cell_coeffs(s, y, psi, sc, ypos);
        let (p00, p01) = law.piece(0, &lo, &hi);
        let (p10, p11) = law.piece(1, &lo, &hi);
        i0 += c0 * p00 + c2 * p01 + c * (c1 * p10 + c3 * p11);
        if c != 0.0 {
            let (p20, p21) = law.piece(2, &lo, &hi);
            i1 += c0 * p10 + c2 * p11 + c * (c1 * p20 + c3 * p21);
        } else {
            i1 += c0 * p10 + c2 * p11;
        }
        match step {
            0 => break,
            1 => ypos += 1,
            _ => {
                sc = qn.min(ns - 2);
                qn += 1;
            }
        }
        lo = hi;
    }
    (i0, i1 * (-r).exp())
}

/// Relative size below which `a_t` counts as zero.
const A_FLOOR: f64 = 1e-12;

/// Combines per-destination-regime integrals `j_k = E[e^{k(Z-r)} g_{t+1}(Z)]` into
/// `(g, a, b, h)` for origin regime `i`.
pub(crate) fn combine_scalar(
    model: &ArhmmModel,
    t: usize,
    y: f64,
    i: usize,
    jk: &[[f64; 3]],
) -> Result<(f64, f64, f64, f64)> {
    let q = model.q();
    let (mut eg, mut a, mut b, mut second) = (0.0, 0.0, 0.0, 0.0);
    for (j, v) in jk.iter().enumerate() {
        let w = q[(i, j)];
        if w == 0.0 {
            continue;
        }
        eg += w * v[0];
        b += w * (v[1] - v[0]);
        a += w * (v[2] - 2.0 * v[1] + v[0]);
        second += w * v[2].abs();
    }
    let degenerate = |reason: String| ArhmmError::HedgeDegenerate {
        t,
        y,
        regime: i,
        reason,
    };
    if !(a > A_FLOOR * eg.abs()) {
        let all_flat = (0..jk.len()).all(|j| q[(i, j)] == 0.0 || model.regime(j).is_degenerate());
        if all_flat && a.abs() <= A_FLOOR * eg.abs() {
            // riskless step: nothing to hedge
            if !(eg > 0.0) {
                return Err(degenerate(format!("g = {eg} is not positive")));
            }
            return Ok((eg, 0.0, 0.0, 0.0));
        }
        return Err(degenerate(format!("a = {a} is not positive")));
    }
    let h = b / a;
    let g = eg - b * h;
    // b h carries the rounding of a, which was formed by cancelling terms of size `second`
    let noise = 64.0 * f64::EPSILON * eg.abs() * (1.0 + second / a);
    if !(g > noise) || !g.is_finite() {
        return Err(degenerate(format!("g = {g} is not positive")));
    }
    Ok((g, a, b, h))
}

/// `g_t, a_t, b_t, h_t` for `t = n..1` on the `y` grid.
pub fn backward_scalar_tables(model: &ArhmmModel, cfg: &HedgeConfig) -> Result<ScalarTables> {
    check_model(model)?;
    cfg.validate()?;
    let n = cfg.n_steps;
    let l = model.num_regimes();
    let y = effective_y_grid(model, &cfg.y_grid);
    let ny = y.len();
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
    for t in (1..=n).rev() {
        let r = cfg.rates[t - 1];
        let g_next: Vec<Vec<f64>> = (0..l)
            .map(|j| (0..ny).map(|v| g[idx(t + 1, j, v)]).collect())
            .collect();
        let rows: Vec<Vec<(f64, f64, f64, f64)>> = (0..ny)
            .into_par_iter()
            .map(|v| {
                let jk: Vec<[f64; 3]> = (0..l)
                    .map(|j| {
                        let lw = law(model, j, y[v]);
                        let yb = YBreaks::new(&lw, &y);
                        scalar_integrals(&lw, r, &y, &yb, &g_next[j])
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
    Ok(ScalarTables {
        n,
        l,
        y_grid: y,
        rates: cfg.rates.clone(),
        g,
        a,
        b,
        h,
    })
}

/// Terminal `Psi_n` replicated over regimes and `y` nodes.
pub(crate) fn terminal_psi(cfg: &HedgeConfig, l: usize, ny: usize) -> Vec<f64> {
    let beta_n = cfg.beta_n();
    let mut out = Vec::with_capacity(l * cfg.s_grid.len() * ny);
    for _ in 0..l {
        for &s in &cfg.s_grid {
            let p = cfg.payoff.discounted(s, beta_n);
            out.extend(std::iter::repeat_n(p, ny));
        }
    }
    out
}

/// Assembles `Psi_{t-1}` and the cross moment at `t` for every node from per-regime
/// integrals `(I0, I1)` indexed `[v][j][q]`.
pub(crate) fn combine_values(
    model: &ArhmmModel,
    sc: &ScalarTables,
    t: usize,
    ns: usize,
    per_v: &[Vec<Vec<(f64, f64)>>],
    psi_prev: &mut [f64],
    big_a: &mut [f64],
) {
    let l = sc.l;
    let ny = sc.y_grid.len();
    let q = model.q();
    for (v, per_j) in per_v.iter().enumerate() {
        for i in 0..l {
            let h = sc.h_row(t, i)[v];
            for qq in 0..ns {
                let (mut p, mut ab) = (0.0, 0.0);
                for (j, ints) in per_j.iter().enumerate() {
                    let w = q[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    let (i0, i1) = ints[qq];
                    let gain = i1 - i0;
                    p += w * (i0 - h * gain);
                    ab += w * gain;
                }
                let k = (i * ns + qq) * ny + v;
                psi_prev[k] = p;
                big_a[k] = ab;
            }
        }
    }
}

/// `Psi_t` for `t = n..0` and the cross moments for `t = n..1` on `s_grid x y_grid`.
pub fn backward_value_tables(
    model: &ArhmmModel,
    cfg: &HedgeConfig,
    scalars: &ScalarTables,
) -> Result<HedgeTables> {
    check_model(model)?;
    cfg.validate()?;
    if scalars.n != cfg.n_steps || scalars.l != model.num_regimes() {
        return Err(ArhmmError::InvalidInput(
            "scalar tables do not match the model and config".into(),
        ));
    }
    let n = cfg.n_steps;
    let l = model.num_regimes();
    let y = scalars.y_grid.clone();
    let s = cfg.s_grid.clone();
    let (ny, ns) = (y.len(), s.len());
    let block = l * ns * ny;
    let ln_s: Vec<f64> = s
        .iter()
        .map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut psi = vec![0.0; (n + 1) * block];
    let mut big_a = vec![0.0; n * block];
    psi[n * block..].copy_from_slice(&terminal_psi(cfg, l, ny));
    for t in (1..=n).rev() {
        let r = cfg.rates[t - 1];
        let (head, tail) = psi.split_at_mut(t * block);
        let next = &tail[..block];
        let per_v: Vec<Vec<Vec<(f64, f64)>>> = (0..ny)
            .into_par_iter()
            .map(|v| {
                (0..l)
                    .map(|j| {
                        let lw = law(model, j, y[v]);
                        let yb = YBreaks::new(&lw, &y);
                        let table = &next[j * ns * ny..(j + 1) * ns * ny];
                        s.iter()
                            .map(|&sq| value_integrals(&lw, r, sq, &s, &ln_s, &y, &yb, table))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        combine_values(
            model,
            scalars,
            t,
            ns,
            &per_v,
            &mut head[(t - 1) * block..],
            &mut big_a[(t - 1) * block..t * block],
        );
    }
    Ok(HedgeTables {
        config: cfg.clone(),
        scalars: scalars.clone(),
        s_grid: s,
        psi,
        big_a,
    })
}

/// Scalar and value tables in one pass.
pub fn build_tables(model: &ArhmmModel, cfg: &HedgeConfig) -> Result<HedgeTables> {
    let scalars = backward_scalar_tables(model, cfg)?;
    backward_value_tables(model, cfg, &scalars)
}
