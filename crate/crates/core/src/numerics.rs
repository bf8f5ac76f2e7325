//! Small numerical kernels shared by the ODE, identity and cylinder modules.

use std::f64::consts::PI;

/// Surface measure |S^m| of the unit m-sphere in R^{m+1}.
pub fn sphere_area(m: u32) -> f64 {
    // |S^0| = 2, |S^1| = 2π, |S^m| = 2π |S^{m-2}| / (m-1)
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(m - 2) / f64::from(m - 1),
    }
}

/// Composite quadrature weights on `n` uniformly spaced nodes.
///
/// Simpson's rule when the number of intervals is even; otherwise Simpson on
/// the leading intervals and the 3/8 rule on the last three, so the rule stays
/// fourth order for either parity.
pub fn composite_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2, "quadrature needs at least two nodes");
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    if intervals == 1 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    if intervals == 3 {
        add_three_eighths(&mut w, 0, h);
        return w;
    }
    let simpson_intervals = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    for k in (0..simpson_intervals).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson_intervals < intervals {
        add_three_eighths(&mut w, simpson_intervals, h);
    }
    w
}

fn add_three_eighths(w: &mut [f64], start: usize, h: f64) {
    let c = 3.0 * h / 8.0;
    w[start] += c;
    w[start + 1] += 3.0 * c;
    w[start + 2] += 3.0 * c;
    w[start + 3] += c;
}

/// Integral of uniformly sampled values by [`composite_weights`].
pub fn integrate_uniform(values: &[f64], h: f64) -> f64 {
    composite_weights(values.len(), h)
        .iter()
        .zip(values)
        .map(|(w, f)| w * f)
        .sum()
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Finite-difference weights for the `order`-th derivative at `x0` from
/// samples at `nodes` (Fornberg's recursion).
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > order, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Weights on integer offsets (in units of `h`) for the given derivative.
pub fn offset_weights(offsets: &[i64], order: usize, h: f64) -> Vec<f64> {
    let nodes: Vec<f64> = offsets.iter().map(|&k| k as f64).collect();
    let scale = h.powi(order as i32);
    fd_weights(0.0, &nodes, order).into_iter().map(|w| w / scale).collect()
}
