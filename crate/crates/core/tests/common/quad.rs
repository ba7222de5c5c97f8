// Adaptive Gauss-Kronrod (7/15) quadrature used as an independent oracle.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrates `f` over the finite interval `[a, b]` to the given absolute and relative tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut stack = vec![(a, b, 0usize)];
    let (whole, _) = gk15(&f, a, b);
    let mut total = 0.0;
    let mut comp = 0.0;
    let scale = whole.abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        let width_share = (hi - lo) / (b - a);
        let allowed = (abs_tol.max(rel_tol * scale)) * width_share.max(1e-6);
        if err <= allowed || depth >= 40 {
            let y = v - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Integrates `f` against the N(mu, sigma^2) density over `(a, b)`, with infinite limits
/// truncated at 40 standard deviations around `center`. Extra breakpoints split the range
/// where the integrand has kinks.
pub fn integrate_gaussian<F: Fn(f64) -> f64>(
    f: F,
    mu: f64,
    sigma: f64,
    center: f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> f64 {
    let lo = a.max(center - 40.0 * sigma);
    let hi = b.min(center + 40.0 * sigma);
    if !(hi > lo) {
        return 0.0;
    }
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let g = |x: f64| {
        let z = (x - mu) / sigma;
        f(x) * norm * (-0.5 * z * z).exp()
    };
    let mut pts = vec![lo];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > lo && x < hi)
        .collect();
    for k in -8..=8 {
        let x = center + k as f64 * sigma;
        if x > lo && x < hi {
            inner.push(x);
        }
    }
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    inner.dedup();
    pts.extend(inner);
    pts.push(hi);
    // a coarse pass sets one absolute tolerance for all pieces, so pieces carrying a negligible
    // share of the mass are not refined to their own relative precision
    let coarse: f64 = pts.windows(2).map(|w| integrate_abs(&g, w[0], w[1])).sum();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let share = (w[1] - w[0]) / (hi - lo);
        total += integrate(g, w[0], w[1], rel_tol * coarse * share, rel_tol);
    }
    total
}

fn integrate_abs<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let m = 4;
    let w = (b - a) / m as f64;
    (0..m)
        .map(|k| {
            gk15(
                &|x: f64| f(x).abs(),
                a + k as f64 * w,
                a + (k + 1) as f64 * w,
            )
            .0
        })
        .sum()
}
