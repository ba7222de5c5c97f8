// Exhaustive enumeration over regime paths.

use arhmm::{ArhmmModel, Series};

pub struct Enumerated {
    /// `P(tau_t = i | y_1..y_t)` (filtered), row-major n x l.
    pub filtered: Vec<f64>,
    /// `P(tau_t = i | y_1..y_n)`, row-major n x l.
    pub smoothed: Vec<f64>,
    /// `P(tau_t = i, tau_{t+1} = j | y_1..y_n)`, row-major (n-1) x l x l.
    pub pairs: Vec<f64>,
    pub log_lik: f64,
}

pub fn enumerate(model: &ArhmmModel, y: &Series) -> Enumerated {
    let l = model.num_regimes();
    let n = y.len();
    let f = |j: usize, t: usize| {
        model
            .conditional_density(j, y.row(t - 1), y.row(t))
            .unwrap()
    };
    let mut filtered = vec![0.0; n * l];
    // prefix sums: filtered_t uses paths of length t
    for t in 0..n {
        let mut tot = 0.0;
        let mut by_last = vec![0.0; l];
        for_each_path(l, t + 1, |p| {
            let mut w = model.eta0()[p[0]];
            for s in 1..=t {
                w *= model.q()[(p[s - 1], p[s])] * f(p[s], s);
            }
            tot += w;
            by_last[p[t]] += w;
        });
        for i in 0..l {
            filtered[t * l + i] = by_last[i] / tot;
        }
    }
    let mut smoothed = vec![0.0; n * l];
    let mut pairs = vec![0.0; (n - 1) * l * l];
    let mut total = 0.0;
    for_each_path(l, n, |p| {
        let mut w = model.eta0()[p[0]];
        for s in 1..n {
            w *= model.q()[(p[s - 1], p[s])] * f(p[s], s);
        }
        total += w;
        for t in 0..n {
            smoothed[t * l + p[t]] += w;
        }
        for t in 0..n - 1 {
            pairs[t * l * l + p[t] * l + p[t + 1]] += w;
        }
    });
    smoothed.iter_mut().for_each(|x| *x /= total);
    pairs.iter_mut().for_each(|x| *x /= total);
    Enumerated {
        filtered,
        smoothed,
        pairs,
        log_lik: total.ln(),
    }
}

fn for_each_path(l: usize, len: usize, mut visit: impl FnMut(&[usize])) {
    let mut p = vec![0usize; len];
    loop {
        visit(&p);
        let mut k = len;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            p[k] += 1;
            if p[k] < l {
                break;
            }
            p[k] = 0;
        }
    }
}
