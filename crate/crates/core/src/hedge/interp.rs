//! Piecewise linear and bilinear interpolation on rectilinear grids.

/// Intercept and slope `(A, B)` of the linear interpolant on each cell `[x_q, x_{q+1}]`.
pub fn piecewise_linear_coeffs(x: &[f64], f: &[f64]) -> Vec<(f64, f64)> {
    assert_eq!(x.len(), f.len());
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| line_through(xs[0], fs[0], xs[1], fs[1]))
        .collect()
}

#[inline]
pub(crate) fn line_through(x0: f64, f0: f64, x1: f64, f1: f64) -> (f64, f64) {
    let b = (f1 - f0) / (x1 - x0);
    (f0 - b * x0, b)
}

/// Coefficients of `f00 + B10 u + B01 w + B11 u w` on the unit cell, where `u` runs along
/// `s` and `w` along `y`.
pub fn bilinear_coeffs(f00: f64, f10: f64, f01: f64, f11: f64) -> (f64, f64, f64, f64) {
    (f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00)
}

/// Bilinear interpolant on `[s0, s1] x [y0, y1]` expressed in absolute coordinates as
/// `c0 + c1 s + c2 y + c3 s y`. Corner values are indexed `[s][y]`.
#[inline]
pub(crate) fn bilinear_absolute(s0: f64, s1: f64, y0: f64, y1: f64, f: [[f64; 2]; 2]) -> [f64; 4] {
    let (b00, b10, b01, b11) = bilinear_coeffs(f[0][0], f[1][0], f[0][1], f[1][1]);
    let ds = 1.0 / (s1 - s0);
    let dy = 1.0 / (y1 - y0);
    // u = (s - s0) ds, w = (y - y0) dy
    let c3 = b11 * ds * dy;
    let c1 = b10 * ds - c3 * y0;
    let c2 = b01 * dy - c3 * s0;
    let c0 = b00 - b10 * s0 * ds - b01 * y0 * dy + b11 * s0 * y0 * ds * dy;
    [c0, c1, c2, c3]
}

/// Index `q` with `grid[q] <= x < grid[q+1]`, clamped to `0..=len-2`.
#[inline]
pub(crate) fn locate(grid: &[f64], x: f64) -> usize {
    let n = grid.len();
    debug_assert!(n >= 2);
    if x <= grid[0] {
        return 0;
    }
    if x >= grid[n - 1] {
        return n - 2;
    }
    grid.partition_point(|&g| g <= x) - 1
}

/// Linear interpolation with constant extrapolation beyond the end nodes.
pub fn interp_linear(grid: &[f64], f: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return f[0];
    }
    if x >= grid[n - 1] {
        return f[n - 1];
    }
    let q = locate(grid, x);
    let w = (x - grid[q]) / (grid[q + 1] - grid[q]);
    f[q] + w * (f[q + 1] - f[q])
}

/// Bilinear interpolation of `f[q * ny + v]` sampled on `s_grid x y_grid`, constant beyond
/// the grid edges in both directions.
pub fn interp_bilinear(s_grid: &[f64], y_grid: &[f64], f: &[f64], s: f64, y: f64) -> f64 {
    let ny = y_grid.len();
    let s = s.clamp(s_grid[0], s_grid[s_grid.len() - 1]);
    let y = y.clamp(y_grid[0], y_grid[ny - 1]);
    let q = locate(s_grid, s);
    let u = (s - s_grid[q]) / (s_grid[q + 1] - s_grid[q]);
    if ny == 1 {
        return f[q] + u * (f[q + 1] - f[q]);
    }
    let v = locate(y_grid, y);
    let w = (y - y_grid[v]) / (y_grid[v + 1] - y_grid[v]);
    let (b00, b10, b01, b11) = bilinear_coeffs(
        f[q * ny + v],
        f[(q + 1) * ny + v],
        f[q * ny + v + 1],
        f[(q + 1) * ny + v + 1],
    );
    b00 + b10 * u + b01 * w + b11 * u * w
}
