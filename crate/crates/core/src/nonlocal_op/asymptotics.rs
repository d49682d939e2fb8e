use nalgebra::{SMatrix, SVector};

use super::analytic::{apply_analytic, AnalyticProfile};
use crate::error::{invalid, Result};
use crate::kernels::Kernel;
use crate::quad::QuadOptions;

/// |x|^{-sigma} left of -kappa, x^{-tau} right of kappa, joined by a degree
/// six polynomial matching values, first and second derivatives at +-kappa
/// and a prescribed integral over the bridge.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProfile {
    pub sigma: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Coefficients in y = x / kappa.
    coeffs: [f64; 7],
    pub bridge_integral: f64,
    pub floor: f64,
}

impl TestProfile {
    /// `bridge_integral` defaults to kappa (kappa^{-sigma} + kappa^{-tau}).
    pub fn new(sigma: f64, tau: f64, kappa: f64, bridge_integral: Option<f64>) -> Result<TestProfile> {
        if !(sigma > 1.0 && tau > 1.0) {
            return Err(invalid(format!("need sigma, tau > 1, got {sigma}, {tau}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid(format!("kappa must be positive, got {kappa}")));
        }
        let target = bridge_integral.unwrap_or(kappa * (kappa.powf(-sigma) + kappa.powf(-tau)));
        let k = kappa;
        // rows: q(-1), q'(-1), q''(-1), q(1), q'(1), q''(1), int_{-1}^{1} q
        let mut a = SMatrix::<f64, 7, 7>::zeros();
        let mut b = SVector::<f64, 7>::zeros();
        for j in 0..7 {
            let jf = j as f64;
            for (row, y) in [(0usize, -1.0f64), (3, 1.0)] {
                a[(row, j)] = y.powi(j as i32);
                if j >= 1 {
                    a[(row + 1, j)] = jf * y.powi(j as i32 - 1);
                }
                if j >= 2 {
                    a[(row + 2, j)] = jf * (jf - 1.0) * y.powi(j as i32 - 2);
                }
            }
            a[(6, j)] = if j % 2 == 0 { 2.0 / (jf + 1.0) } else { 0.0 };
        }
        b[0] = k.powf(-sigma);
        b[1] = k * sigma * k.powf(-sigma - 1.0);
        b[2] = k * k * sigma * (sigma + 1.0) * k.powf(-sigma - 2.0);
        b[3] = k.powf(-tau);
        b[4] = -k * tau * k.powf(-tau - 1.0);
        b[5] = k * k * tau * (tau + 1.0) * k.powf(-tau - 2.0);
        b[6] = target / k;
        let c = a.lu().solve(&b).ok_or_else(|| invalid("bridge system is singular"))?;
        let coeffs: [f64; 7] = std::array::from_fn(|j| c[j]);
        let mut p = TestProfile {
            sigma,
            tau,
            kappa,
            coeffs,
            bridge_integral: target,
            floor: 0.0,
        };
        p.floor = (0..=4000)
            .map(|i| p.poly(-1.0 + 2.0 * i as f64 / 4000.0, 0))
            .fold(f64::INFINITY, f64::min);
        if !(p.floor > 0.0) {
            return Err(invalid(format!(
                "bridge is not positive (min {}); choose a larger bridge integral",
                p.floor
            )));
        }
        Ok(p)
    }

    /// d-th derivative of the bridge polynomial in y.
    fn poly(&self, y: f64, d: usize) -> f64 {
        let mut acc = 0.0;
        for j in (d..7).rev() {
            let mut c = self.coeffs[j];
            for m in 0..d {
                c *= (j - m) as f64;
            }
            acc = acc * y + c;
        }
        acc
    }

    /// int phi over the line.
    pub fn total_integral(&self) -> f64 {
        let k = self.kappa;
        k.powf(1.0 - self.sigma) / (self.sigma - 1.0) + self.bridge_integral + k.powf(1.0 - self.tau) / (self.tau - 1.0)
    }
}

impl AnalyticProfile for TestProfile {
    fn value(&self, x: f64) -> f64 {
        if x < -self.kappa {
            (-x).powf(-self.sigma)
        } else if x > self.kappa {
            x.powf(-self.tau)
        } else {
            self.poly(x / self.kappa, 0)
        }
    }

    fn second_derivative(&self, x: f64) -> f64 {
        if x < -self.kappa {
            self.sigma * (self.sigma + 1.0) * (-x).powf(-self.sigma - 2.0)
        } else if x > self.kappa {
            self.tau * (self.tau + 1.0) * x.powf(-self.tau - 2.0)
        } else {
            self.poly(x / self.kappa, 2) / (self.kappa * self.kappa)
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![-self.kappa, self.kappa]
    }

    fn local_scale(&self, x: f64) -> f64 {
        0.5 * x.abs().max(self.kappa)
    }

    fn constant_outside(&self) -> Option<(f64, f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub x: f64,
    pub value: f64,
    /// |x|^{1+2s} L_K phi(x)
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub target: f64,
    pub lower: f64,
    pub upper: f64,
    pub rel_tol: f64,
    pub rows: Vec<LimitRow>,
    /// Index (in |x| order) from which every row lies in the widened band.
    pub settled_from: Option<usize>,
    /// Distance to the target shrinks monotonically with |x| on each side.
    pub monotone: bool,
    pub pass: bool,
}

/// Evaluate |x|^{1+2s} L_K phi at the given points (sorted by |x|) and
/// compare against [lambda S, Lambda S] with S = int phi, lambda the
/// whole-line lower constant and Lambda the upper one.
pub fn asymptotic_limit_check(k: &Kernel, phi: &TestProfile, xs: &[f64], rel_tol: f64) -> Result<AsymptoticReport> {
    if xs.is_empty() {
        return Err(invalid("no evaluation points"));
    }
    let mut xs = xs.to_vec();
    xs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let opts = QuadOptions {
        abs_tol: 1e-300,
        rel_tol: 1e-11,
        max_intervals: 20000,
    };
    let q = 1.0 + 2.0 * k.s;
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let value = apply_analytic(k, phi, x, opts)?;
        rows.push(LimitRow {
            x,
            value,
            scaled: x.abs().powf(q) * value,
        });
    }
    let target = phi.total_integral();
    let lower = k.k3_lambda() * target;
    let upper = k.big_lambda() * target;
    let inside = |v: f64| v >= lower - rel_tol * target.abs() && v <= upper + rel_tol * target.abs();
    let mut settled_from = None;
    for i in (0..rows.len()).rev() {
        if inside(rows[i].scaled) {
            settled_from = Some(i);
        } else {
            break;
        }
    }
    let mut monotone = true;
    for side in [-1.0f64, 1.0] {
        let d: Vec<f64> = rows
            .iter()
            .filter(|r| r.x.signum() == side)
            .map(|r| (r.scaled - target).abs())
            .collect();
        if d.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9)) {
            monotone = false;
        }
    }
    Ok(AsymptoticReport {
        target,
        lower,
        upper,
        rel_tol,
        pass: settled_from.is_some(),
        rows,
        settled_from,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_matches_tails_to_second_order() {
        let p = TestProfile::new(2.0, 3.0, 1.5, None).unwrap();
        let k = p.kappa;
        for (x, dir) in [(-k, -1.0), (k, 1.0)] {
            let out = x + dir * 1e-7;
            let inn = x - dir * 1e-7;
            assert!((p.value(out) - p.value(inn)).abs() < 1e-6);
            assert!((p.second_derivative(out) - p.second_derivative(inn)).abs() < 1e-5);
        }
        assert!(p.floor > 0.0);
    }

    #[test]
    fn symmetric_unit_bridge() {
        let p = TestProfile::new(2.0, 2.0, 1.0, None).unwrap();
        assert!((p.bridge_integral - 2.0).abs() < 1e-15);
        assert!((p.total_integral() - 4.0).abs() < 1e-14);
        assert!((p.value(0.0) - 0.375).abs() < 1e-12);
    }
}
