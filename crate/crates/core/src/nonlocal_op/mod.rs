//! Discrete nonlocal operator on a uniform window with constant exterior data.
//!
//! A grid function stores nodes `x_i = origin - R + i h`, `i = 0..=N`, and
//! is extended by `left_tail` / `right_tail` outside the window.  The operator
//! is product integration of the increment `u(x+z) + u(x-z) - 2u(x)` against
//! K with piecewise linear interpolation in z (quadratic on the first cell),
//! plus a one-term correction for the interpolation error near z = 0 so the
//! scheme is second order for smooth u.

mod analytic;
mod asymptotics;
pub(crate) mod grid;

pub use analytic::{apply_analytic, AnalyticProfile};
pub use asymptotics::{asymptotic_limit_check, AsymptoticReport, LimitRow, TestProfile};
pub use grid::{node_count, GridFunction};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::RadialKernel;
use crate::quad;

/// sum over k >= 1 of int_k^{k+1} (t-k)(k+1-t) t^{-1-2s} dt
pub fn interp_error_constant(s: f64) -> f64 {
    let q = 1.0 + 2.0 * s;
    let kmax = 4000usize;
    let mut acc = 0.0;
    for k in (1..kmax).rev() {
        let kf = k as f64;
        acc += quad::gl_integrate(|t| (t - kf) * (kf + 1.0 - t) * t.powf(-q), kf, kf + 1.0);
    }
    // cells beyond kmax: midpoint expansion m^{-q} (1/6 + q(q+1) / (240 m^2)) summed
    // with the midpoint Euler-Maclaurin correction
    let a = kmax as f64;
    let f_int = a.powf(1.0 - q) / (6.0 * (q - 1.0)) + q * (q + 1.0) / 240.0 * a.powf(-1.0 - q) / (1.0 + q);
    let f_prime = -q * a.powf(-q - 1.0) / 6.0;
    acc + f_int + f_prime / 24.0
}

/// Toeplitz weights and exterior tail sums for one (kernel, h, N).
#[derive(Debug, Clone)]
pub struct OperatorTable {
    pub h: f64,
    pub n: usize,
    /// `w[k]` couples nodes k apart; `w[0] = 0`.
    w: Vec<f64>,
    /// `tailsum[k] = sum over k' >= k of w[k']`, for k = 1..=n+1.
    tailsum: Vec<f64>,
    /// `2 * tailsum[1]`, the same for every node.
    pub diag: f64,
    /// Number of leading weights rescaled by the near-origin correction.
    pub corrected_weights: usize,
    pub correction_factor: f64,
}

impl OperatorTable {
    pub fn new<K: RadialKernel + ?Sized>(k: &K, h: f64, n: usize) -> Result<OperatorTable> {
        if !(h > 0.0 && h.is_finite()) || n < 2 {
            return Err(Error::Grid(format!("bad grid h={h}, N={n}")));
        }
        let bps = k.breakpoints();
        let cell = |c: usize| -> (f64, f64) {
            // (rising half, falling half) of the hats on cell [c h, (c+1) h]
            let (a, b) = (c as f64 * h, (c + 1) as f64 * h);
            let mut pts = vec![a];
            pts.extend(bps.iter().copied().filter(|&p| p > a && p < b));
            pts.push(b);
            let mut rise = 0.0;
            let mut fall = 0.0;
            for seg in pts.windows(2) {
                rise += quad::gl_integrate(|z| (z / h - c as f64) * k.value(z), seg[0], seg[1]);
                fall += quad::gl_integrate(|z| ((c + 1) as f64 - z / h) * k.value(z), seg[0], seg[1]);
            }
            (rise, fall)
        };
        let cells: Vec<(f64, f64)> = (0..=n + 1)
            .into_par_iter()
            .map(|c| if c == 0 { (0.0, 0.0) } else { cell(c) })
            .collect();
        let first = k.second_moment_from_zero(h) / (h * h);
        let mut w = vec![0.0; n + 2];
        w[1] = first + cells[1].1;
        for kk in 2..=n + 1 {
            w[kk] = cells[kk - 1].0 + cells[kk].1;
        }
        // mass[k] = int_{k h}^inf K
        let mut mass = vec![0.0; n + 3];
        mass[n + 2] = k.tail_mass((n + 2) as f64 * h);
        for c in (1..=n + 1).rev() {
            mass[c] = mass[c + 1] + cells[c].0 + cells[c].1;
        }
        let mut tailsum = vec![0.0; n + 2];
        for kk in 2..=n + 1 {
            tailsum[kk] = mass[kk] + cells[kk - 1].0;
        }

        // near-origin correction: subtract a0 c(s) h^{2-2s} u'' with u''
        // estimated from the leading increments, by scaling the first m weights
        let s = k.s();
        let cc = k.near_origin_amplitude() * interp_error_constant(s) * h.powf(2.0 - 2.0 * s);
        let mut m = 0;
        let mut sm = 0.0;
        let mut factor = 1.0;
        if cc > 0.0 {
            for j in 1..=n + 1 {
                sm += w[j] * (j as f64 * h).powi(2);
                if cc / sm <= 0.5 {
                    m = j;
                    factor = 1.0 - cc / sm;
                    break;
                }
            }
            if m == 0 {
                return Err(Error::Grid("near-origin correction does not fit in the window".into()));
            }
            for wj in w.iter_mut().take(m + 1).skip(1) {
                *wj *= factor;
            }
        }
        let mut acc = mass[m + 1] + cells[m].0;
        for kk in (1..=m.min(n + 1)).rev() {
            acc += w[kk];
            tailsum[kk] = acc;
        }
        if m == 0 {
            tailsum[1] = w[1] + tailsum[2];
        }
        let diag = 2.0 * tailsum[1];
        Ok(OperatorTable {
            h,
            n,
            w,
            tailsum,
            diag,
            corrected_weights: m,
            correction_factor: factor,
        })
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.w[k]
    }

    pub fn tail_sum(&self, k: usize) -> f64 {
        self.tailsum[k]
    }

    /// sum over grid nodes j != i of w_{|i-j|} x_j, using `xr[m] = x[n-m]`.
    #[inline]
    fn offdiag(&self, x: &[f64], xr: &[f64], i: usize) -> f64 {
        let n = self.n;
        dot(&self.w[1..=n - i], &x[i + 1..=n]) + dot(&self.w[1..=i], &xr[n - i + 1..=n])
    }

    /// Operator at node i of a grid function.
    pub fn apply_node(&self, u: &GridFunction, i: usize) -> f64 {
        let n = self.n;
        let v = &u.values;
        let mut acc = 0.0;
        for k in 1..=i {
            acc += self.w[k] * (v[i - k] - v[i]);
        }
        for k in 1..=n - i {
            acc += self.w[k] * (v[i + k] - v[i]);
        }
        acc + self.tailsum[i + 1] * (u.left_tail - v[i]) + self.tailsum[n - i + 1] * (u.right_tail - v[i])
    }

    /// Operator at every node (endpoints included).
    pub fn apply_all(&self, u: &GridFunction) -> Vec<f64> {
        let n = self.n;
        let v = &u.values;
        let vr: Vec<f64> = v.iter().rev().copied().collect();
        (0..=n)
            .into_par_iter()
            .map(|i| {
                self.offdiag(v, &vr, i) - self.diag * v[i]
                    + self.tailsum[i + 1] * u.left_tail
                    + self.tailsum[n - i + 1] * u.right_tail
            })
            .collect()
    }

    /// `out_i = sum_{j != i} w x_j - D x_i`: the operator on data with zero exterior.
    pub fn apply_homogeneous(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n + 1);
        let xr: Vec<f64> = x.iter().rev().copied().collect();
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = self.offdiag(x, &xr, i) - self.diag * x[i];
        });
    }

    /// Operator at an arbitrary point strictly inside the window.  Off-node
    /// points use the same weights on the grid shifted to x, with u linearly
    /// interpolated.
    pub fn apply_at(&self, u: &GridFunction, x: f64) -> Result<PointValue> {
        let n = self.n;
        let h = self.h;
        let x0 = u.node(0);
        let p = (x - x0) / h;
        if !(p > 0.0 && p < n as f64) {
            return Err(Error::Domain(format!(
                "x = {x} is not strictly inside [{}, {}]",
                x0,
                u.node(n)
            )));
        }
        let near_edge = p < 1.0 || p > (n - 1) as f64;
        let pr = p.round();
        if (p - pr).abs() < 1e-9 {
            return Ok(PointValue {
                value: self.apply_node(u, pr as usize),
                near_edge,
            });
        }
        let i0 = p.floor() as usize;
        let th = p - i0 as f64;
        let v = &u.values;
        let interp = |m: isize| -> f64 {
            // value at p + m
            let q = i0 as isize + m;
            if q < 0 {
                u.left_tail
            } else if q as usize >= n {
                u.right_tail
            } else {
                let q = q as usize;
                (1.0 - th) * v[q] + th * v[q + 1]
            }
        };
        let uc = interp(0);
        // right: x + k h lies beyond x_N once i0 + k >= n
        let kr = n - i0;
        let kl = i0 + 1;
        let mut acc = 0.0;
        for k in 1..kr {
            acc += self.w[k] * (interp(k as isize) - uc);
        }
        for k in 1..kl {
            acc += self.w[k] * (interp(-(k as isize)) - uc);
        }
        acc += self.tailsum[kr] * (u.right_tail - uc) + self.tailsum[kl] * (u.left_tail - uc);
        Ok(PointValue { value: acc, near_edge })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: f64,
    /// Within one cell of the window edge, where truncation dominates.
    pub near_edge: bool,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut s = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// L_K u(x) for a grid function, building the weight table on the fly.
pub fn apply_lk<K: RadialKernel + ?Sized>(k: &K, u: &GridFunction, x: f64) -> Result<PointValue> {
    OperatorTable::new(k, u.h, u.n())?.apply_at(u, x)
}

/// L_K u at every node of the grid.
pub fn apply_lk_profile<K: RadialKernel + ?Sized>(k: &K, u: &GridFunction) -> Result<Vec<f64>> {
    Ok(OperatorTable::new(k, u.h, u.n())?.apply_all(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;

    #[test]
    fn interpolation_constant_values() {
        // direct partial sums converge slowly; compare against a long sum
        for s in [0.25, 0.7] {
            let q = 1.0 + 2.0 * s;
            let mut direct = 0.0;
            for k in 1..200000usize {
                let kf = k as f64;
                direct += quad::gl_integrate(|t| (t - kf) * (kf + 1.0 - t) * t.powf(-q), kf, kf + 1.0);
            }
            let a = 200000f64;
            direct += a.powf(1.0 - q) / (6.0 * (q - 1.0));
            let c = interp_error_constant(s);
            assert!((c - direct).abs() < 1e-9, "s={s}: {c} vs {direct}");
        }
        let c = interp_error_constant(0.25);
        assert!((c - 0.329_756_466_485_5).abs() < 1e-10, "{c}");
    }

    #[test]
    fn weights_positive_and_tails_consistent() {
        for k in [
            Kernel::fractional_laplacian(0.1).unwrap(),
            Kernel::fractional_laplacian(0.9).unwrap(),
            Kernel::piecewise_power(0.5, 2.0, 0.33).unwrap(),
            Kernel::truncated(0.3, 0.37).unwrap(),
            Kernel::modulated(0.4, 2.0, 1.0, 2.0, 1.0).unwrap(),
        ] {
            let t = OperatorTable::new(&k, 0.05, 200).unwrap();
            for j in 1..=201 {
                assert!(t.weight(j) >= 0.0);
            }
            assert!(t.weight(1) > 0.0);
            for j in 1..201 {
                let d = t.tail_sum(j) - t.tail_sum(j + 1) - t.weight(j);
                assert!(d.abs() < 1e-12 * t.tail_sum(1), "{} j={j}", k.descriptor());
            }
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let k = Kernel::fractional_laplacian(0.4).unwrap();
        let u = GridFunction::from_fn(5.0, 0.05, 0.0, |_| 0.7, 0.7, 0.7).unwrap();
        let t = OperatorTable::new(&k, u.h, u.n()).unwrap();
        for v in t.apply_all(&u) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_and_batched_agree() {
        let k = Kernel::piecewise_power(0.35, 2.0, 1.0).unwrap();
        let u = GridFunction::from_fn(8.0, 0.05, 0.0, |x: f64| x.tanh(), -1.0, 1.0).unwrap();
        let t = OperatorTable::new(&k, u.h, u.n()).unwrap();
        let all = t.apply_all(&u);
        for i in (1..u.n()).step_by(7) {
            let a = t.apply_node(&u, i);
            assert!((a - all[i]).abs() < 1e-12 * (1.0 + a.abs()), "i={i}");
            let b = t.apply_at(&u, u.node(i)).unwrap().value;
            assert!((b - a).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn off_grid_rejects_outside() {
        let k = Kernel::fractional_laplacian(0.4).unwrap();
        let u = GridFunction::from_fn(2.0, 0.5, 0.0, |x: f64| x.tanh(), -1.0, 1.0).unwrap();
        assert!(apply_lk(&k, &u, 2.0).is_err());
        assert!(apply_lk(&k, &u, -2.5).is_err());
        assert!(apply_lk(&k, &u, 1.9).unwrap().near_edge);
    }
}
