//! Radial interaction kernels and their admissibility checks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Amplitude {
    #[default]
    Unit,
    Constant {
        value: f64,
    },
}

impl Amplitude {
    fn value(&self) -> f64 {
        match *self {
            Amplitude::Unit => 1.0,
            Amplitude::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// |x|^{-1-2s}
    FractionalLaplacian,
    /// |x|^{-1-2s} inside B_rho, 2 rho^{(theta-1)(1+2s)} |x|^{-theta(1+2s)} outside.
    PiecewisePower { theta: f64, rho: f64 },
    /// scale * K_pw(x) * (exp(-x^2) cos(tau |x|) + zeta)
    Modulated {
        tau: f64,
        zeta: f64,
        scale: f64,
        theta: f64,
        rho: f64,
    },
    /// amplitude * 1_{|x| < r0} |x|^{-1-2s}
    TruncatedIndicator {
        r0: f64,
        #[serde(default)]
        amplitude: Amplitude,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub s: f64,
    #[serde(flatten)]
    pub family: KernelFamily,
}

/// `coef * r^exponent` on [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPiece {
    pub lo: f64,
    pub hi: f64,
    pub coef: f64,
    pub exponent: f64,
}

/// Beyond this radius the Gaussian factor of the modulated kernel is below 1e-35.
const GAUSS_CUT: f64 = 9.0;

/// What the discrete operator needs from a kernel.
pub trait RadialKernel: Sync {
    fn s(&self) -> f64;
    /// K at radius r > 0.
    fn value(&self, r: f64) -> f64;
    /// Radii where K fails to be smooth.
    fn breakpoints(&self) -> Vec<f64>;
    /// Integral of K over [a, inf), a > 0.
    fn tail_mass(&self, a: f64) -> f64;
    /// Integral of z^2 K(z) over [0, b].
    fn second_moment_from_zero(&self, b: f64) -> f64;
    /// lim_{r -> 0} r^{1+2s} K(r).
    fn near_origin_amplitude(&self) -> f64;
}

fn power_integral(coef: f64, e: f64, a: f64, b: f64) -> f64 {
    // integral of coef * z^e over [a, b]
    let q = e + 1.0;
    if b.is_infinite() {
        assert!(q < 0.0);
        return coef * (-a.powf(q) / q);
    }
    if q.abs() < 1e-13 {
        return coef * (b / a).ln();
    }
    if a == 0.0 {
        assert!(q > 0.0);
        return coef * b.powf(q) / q;
    }
    coef * (b.powf(q) - a.powf(q)) / q
}

fn pieces_integral(pieces: &[PowerPiece], p: f64, a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for pc in pieces {
        let lo = pc.lo.max(a);
        let hi = pc.hi.min(b);
        if hi > lo {
            acc += power_integral(pc.coef, pc.exponent + p, lo, hi);
        }
    }
    acc
}

impl Kernel {
    pub fn new(s: f64, family: KernelFamily) -> Result<Kernel> {
        let k = Kernel { s, family };
        k.validate()?;
        Ok(k)
    }

    pub fn fractional_laplacian(s: f64) -> Result<Kernel> {
        Kernel::new(s, KernelFamily::FractionalLaplacian)
    }

    pub fn piecewise_power(s: f64, theta: f64, rho: f64) -> Result<Kernel> {
        Kernel::new(s, KernelFamily::PiecewisePower { theta, rho })
    }

    /// Modulated kernel with the default scale 1 / (1 + zeta).
    pub fn modulated(s: f64, tau: f64, zeta: f64, theta: f64, rho: f64) -> Result<Kernel> {
        Kernel::new(
            s,
            KernelFamily::Modulated {
                tau,
                zeta,
                scale: 1.0 / (1.0 + zeta),
                theta,
                rho,
            },
        )
    }

    pub fn truncated(s: f64, r0: f64) -> Result<Kernel> {
        Kernel::new(
            s,
            KernelFamily::TruncatedIndicator {
                r0,
                amplitude: Amplitude::Unit,
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.s;
        if !(s > 0.0 && s < 1.0) {
            return Err(invalid(format!("s must lie in (0, 1), got {s}")));
        }
        let pos = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self.family {
            KernelFamily::FractionalLaplacian => Ok(()),
            KernelFamily::PiecewisePower { theta, rho } => {
                if !(theta > 1.0) {
                    return Err(invalid(format!("theta must exceed 1, got {theta}")));
                }
                pos("rho", rho)
            }
            KernelFamily::Modulated {
                tau,
                zeta,
                scale,
                theta,
                rho,
            } => {
                if !(theta > 1.0) {
                    return Err(invalid(format!("theta must exceed 1, got {theta}")));
                }
                if !(zeta >= 1.0) {
                    return Err(invalid(format!("zeta must be at least 1, got {zeta}")));
                }
                if !tau.is_finite() {
                    return Err(invalid("tau must be finite"));
                }
                pos("rho", rho)?;
                pos("scale", scale)
            }
            KernelFamily::TruncatedIndicator { r0, amplitude } => {
                pos("r0", r0)?;
                pos("amplitude", amplitude.value())
            }
        }
    }

    pub fn descriptor(&self) -> String {
        let s = self.s;
        match self.family {
            KernelFamily::FractionalLaplacian => format!("fractional_laplacian(s={s})"),
            KernelFamily::PiecewisePower { theta, rho } => {
                format!("piecewise_power(s={s},theta={theta},rho={rho})")
            }
            KernelFamily::Modulated {
                tau,
                zeta,
                scale,
                theta,
                rho,
            } => format!("modulated(s={s},tau={tau},zeta={zeta},scale={scale},theta={theta},rho={rho})"),
            KernelFamily::TruncatedIndicator { r0, amplitude } => {
                format!("truncated_indicator(s={s},r0={r0},amplitude={})", amplitude.value())
            }
        }
    }

    /// Exact piecewise power representation, when the family has one.
    pub fn power_pieces(&self) -> Option<Vec<PowerPiece>> {
        let e = -1.0 - 2.0 * self.s;
        match self.family {
            KernelFamily::FractionalLaplacian => Some(vec![PowerPiece {
                lo: 0.0,
                hi: f64::INFINITY,
                coef: 1.0,
                exponent: e,
            }]),
            KernelFamily::PiecewisePower { theta, rho } => Some(pw_pieces(self.s, theta, rho)),
            KernelFamily::TruncatedIndicator { r0, amplitude } => Some(vec![PowerPiece {
                lo: 0.0,
                hi: r0,
                coef: amplitude.value(),
                exponent: e,
            }]),
            KernelFamily::Modulated { .. } => None,
        }
    }

    /// K(x); the origin is excluded.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!("kernel evaluated at x = {x}")));
        }
        Ok(self.value(x.abs()))
    }

    /// Radius used for the (K2) comparison.
    pub fn r0(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian => 1.0,
            KernelFamily::PiecewisePower { rho, .. } | KernelFamily::Modulated { rho, .. } => rho,
            KernelFamily::TruncatedIndicator { r0, .. } => r0,
        }
    }

    /// Lower (K2) constant: K(x) |x|^{1+2s} >= lambda on B_{r0}.
    pub fn lambda(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian | KernelFamily::PiecewisePower { .. } => 1.0,
            KernelFamily::TruncatedIndicator { amplitude, .. } => amplitude.value(),
            KernelFamily::Modulated { .. } => {
                let r0 = self.r0();
                scaled_samples(self, r0 * 1e-6, r0, false)
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Upper (K2) constant: K(x) |x|^{1+2s} <= Lambda on the whole line.
    pub fn big_lambda(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian => 1.0,
            KernelFamily::PiecewisePower { .. } => 2.0,
            KernelFamily::TruncatedIndicator { amplitude, .. } => amplitude.value(),
            KernelFamily::Modulated { rho, .. } => {
                let mut m = scaled_samples(self, rho * 1e-6, rho * 1e6, true)
                    .into_iter()
                    .fold(0.0, f64::max);
                // the outer piece attains its sup right at rho
                m = m.max(self.value(rho) * rho.powf(1.0 + 2.0 * self.s));
                m
            }
        }
    }

    /// inf over the line of K(x) |x|^{1+2s}; positive exactly when (K3) holds.
    pub fn k3_lambda(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian => 1.0,
            _ => 0.0,
        }
    }

    /// sup over x of K(sigma x) / K(x), closed form where available.
    pub fn sup_ratio(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let s = self.s;
        Ok(match self.family {
            KernelFamily::FractionalLaplacian => sigma.powf(-1.0 - 2.0 * s),
            KernelFamily::PiecewisePower { theta, .. } => sigma.powf(-theta * (1.0 + 2.0 * s)),
            KernelFamily::TruncatedIndicator { .. } => f64::INFINITY,
            KernelFamily::Modulated { .. } => self.sup_ratio_sampled(sigma)?,
        })
    }

    /// sup over a logarithmic sample (4096 points per decade over 12 decades
    /// centred on r0), plus probes straddling the breakpoints.
    pub fn sup_ratio_sampled(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        let c = self.r0();
        let per_decade = 4096usize;
        let mut xs: Vec<f64> = (0..=12 * per_decade)
            .map(|j| c * 10f64.powf(-6.0 + j as f64 / per_decade as f64))
            .collect();
        for b in self.breakpoints() {
            for y in [b, b / sigma] {
                for f in [1.0 - 1e-12, 1.0 + 1e-12, 1.0 - 1e-9, 1.0 + 1e-9] {
                    xs.push(y * f);
                }
            }
        }
        let mut sup: f64 = 0.0;
        for x in xs {
            let den = self.value(x);
            let num = self.value(sigma * x);
            if den > 0.0 {
                sup = sup.max(num / den);
            } else if num > 0.0 {
                return Ok(f64::INFINITY);
            }
        }
        Ok(sup)
    }

    /// (K4) diagnostic on sigma_j = 1 - 2^{-j}, j = 1..=terms.
    pub fn check_k4(&self, eps: f64, terms: usize) -> Result<K4Report> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        if terms < 4 {
            return Err(invalid("need at least 4 sigma values"));
        }
        let mut rows = Vec::with_capacity(terms);
        for j in 1..=terms {
            let d = 0.5f64.powi(j as i32);
            let sigma = 1.0 - d;
            let sup = self.sup_ratio(sigma)?;
            let value = (sup - 1.0) / d.powf(1.0 - eps);
            rows.push(K4Row {
                sigma,
                sup_ratio: sup,
                value,
            });
        }
        let witness = rows.iter().find(|r| !r.value.is_finite()).map(|r| r.sigma);
        let tail = &rows[rows.len() / 2..];
        let tail_max = tail.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
        // log-log slope of the positive tail values against (1 - sigma)
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .filter(|r| r.value > 0.0 && r.value.is_finite())
            .map(|r| ((1.0 - r.sigma).ln(), r.value.ln()))
            .collect();
        let slope = if pts.len() >= 3 { ols(&pts).0 } else { f64::NAN };
        let pass = witness.is_none() && (tail_max <= K4_TAIL_TOL || slope > 0.0);
        Ok(K4Report {
            eps,
            rows,
            tail_max,
            tail_slope: slope,
            divergence_witness: witness,
            pass,
        })
    }

    /// Combined (K1)-(K4) report.
    pub fn admissibility(&self, eps: f64, terms: usize) -> Result<AdmissibilityReport> {
        let k1 = {
            let xs = log_samples(self.r0() * 1e-6, self.r0() * 1e6, 2000);
            xs.iter().all(|&x| {
                let v = self.value(x);
                v >= 0.0 && v.is_finite()
            })
        };
        let lambda = self.lambda();
        let big_lambda = self.big_lambda();
        let k2 = lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite();
        let k3_lambda = self.k3_lambda();
        let k4 = self.check_k4(eps, terms)?;
        Ok(AdmissibilityReport {
            descriptor: self.descriptor(),
            k1,
            k2,
            lambda,
            big_lambda,
            r0: self.r0(),
            k3: k3_lambda > 0.0,
            k3_lambda,
            admissible: k1 && k2 && k4.pass,
            k4,
        })
    }
}

const K4_TAIL_TOL: f64 = 0.05;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("sigma must lie in (0, 1), got {sigma}")))
    }
}

fn pw_pieces(s: f64, theta: f64, rho: f64) -> Vec<PowerPiece> {
    let e = -1.0 - 2.0 * s;
    vec![
        PowerPiece {
            lo: 0.0,
            hi: rho,
            coef: 1.0,
            exponent: e,
        },
        PowerPiece {
            lo: rho,
            hi: f64::INFINITY,
            coef: 2.0 * rho.powf((theta - 1.0) * (1.0 + 2.0 * s)),
            exponent: -theta * (1.0 + 2.0 * s),
        },
    ]
}

fn pieces_value(pieces: &[PowerPiece], r: f64) -> f64 {
    for pc in pieces {
        if r >= pc.lo && r < pc.hi {
            return pc.coef * r.powf(pc.exponent);
        }
    }
    0.0
}

fn log_samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=n).map(|j| (a + (b - a) * j as f64 / n as f64).exp()).collect()
}

/// K(x) |x|^{1+2s} on a log sample of [lo, hi], optionally with a dense
/// linear sample of [0, 10] added.
fn scaled_samples(k: &Kernel, lo: f64, hi: f64, add_linear: bool) -> Vec<f64> {
    let mut xs = log_samples(lo, hi, 20000);
    if add_linear {
        xs.extend((1..=20000).map(|j| 10.0 * j as f64 / 20000.0));
    }
    xs.into_iter()
        .filter(|&x| x <= hi)
        .map(|x| k.value(x) * x.powf(1.0 + 2.0 * k.s))
        .collect()
}

/// Ordinary least squares fit y = slope x + intercept; returns (slope, intercept, r^2).
pub(crate) fn ols(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

impl RadialKernel for Kernel {
    fn s(&self) -> f64 {
        self.s
    }

    fn value(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian => r.powf(-1.0 - 2.0 * self.s),
            KernelFamily::PiecewisePower { theta, rho } => pw_value(self.s, theta, rho, r),
            KernelFamily::TruncatedIndicator { r0, amplitude } => {
                if r < r0 {
                    amplitude.value() * r.powf(-1.0 - 2.0 * self.s)
                } else {
                    0.0
                }
            }
            KernelFamily::Modulated {
                tau,
                zeta,
                scale,
                theta,
                rho,
            } => scale * pw_value(self.s, theta, rho, r) * ((-r * r).exp() * (tau * r).cos() + zeta),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.family {
            KernelFamily::FractionalLaplacian => vec![],
            KernelFamily::PiecewisePower { rho, .. } | KernelFamily::Modulated { rho, .. } => {
                vec![rho]
            }
            KernelFamily::TruncatedIndicator { r0, .. } => vec![r0],
        }
    }

    fn tail_mass(&self, a: f64) -> f64 {
        assert!(a > 0.0);
        if let Some(p) = self.power_pieces() {
            return pieces_integral(&p, 0.0, a, f64::INFINITY);
        }
        let KernelFamily::Modulated {
            tau,
            zeta,
            scale,
            theta,
            rho,
        } = self.family
        else {
            unreachable!()
        };
        let pw = pw_pieces(self.s, theta, rho);
        let mut acc = zeta * pieces_integral(&pw, 0.0, a, f64::INFINITY);
        if a < GAUSS_CUT {
            let f = |z: f64| (-z * z).exp() * (tau * z).cos() * pieces_value(&pw, z);
            let mut pts = vec![a];
            let mut p = 2.0 * a;
            while p < GAUSS_CUT.min(1.0) {
                pts.push(p);
                p *= 2.0;
            }
            if rho > a && rho < GAUSS_CUT {
                pts.push(rho);
            }
            pts.push(GAUSS_CUT);
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let opts = QuadOptions {
                abs_tol: 1e-300,
                rel_tol: 1e-14,
                max_intervals: 20000,
            };
            acc += quad::integrate_points(f, &pts, opts).value;
        }
        scale * acc
    }

    fn second_moment_from_zero(&self, b: f64) -> f64 {
        if let Some(p) = self.power_pieces() {
            return pieces_integral(&p, 2.0, 0.0, b);
        }
        let KernelFamily::Modulated {
            tau,
            zeta,
            scale,
            theta,
            rho,
        } = self.family
        else {
            unreachable!()
        };
        let pw = pw_pieces(self.s, theta, rho);
        // split g = (1 + zeta) + (exp(-z^2) cos(tau z) - 1); the second part
        // vanishes to second order at the origin
        let smooth = |z: f64| z * z * ((-z * z).exp() * (tau * z).cos() - 1.0) * pieces_value(&pw, z);
        let mut rest = 0.0;
        let inner = b.min(rho);
        rest += quad::graded_gauss(smooth, inner, 80);
        if b > rho {
            let opts = QuadOptions {
                abs_tol: 1e-300,
                rel_tol: 1e-14,
                max_intervals: 20000,
            };
            rest += quad::integrate(smooth, rho, b, opts).value;
        }
        scale * ((1.0 + zeta) * pieces_integral(&pw, 2.0, 0.0, b) + rest)
    }

    fn near_origin_amplitude(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalLaplacian | KernelFamily::PiecewisePower { .. } => 1.0,
            KernelFamily::TruncatedIndicator { amplitude, .. } => amplitude.value(),
            KernelFamily::Modulated { zeta, scale, .. } => scale * (1.0 + zeta),
        }
    }
}

fn pw_value(s: f64, theta: f64, rho: f64, r: f64) -> f64 {
    if r < rho {
        r.powf(-1.0 - 2.0 * s)
    } else {
        2.0 * rho.powf((theta - 1.0) * (1.0 + 2.0 * s)) * r.powf(-theta * (1.0 + 2.0 * s))
    }
}

/// K_sigma(z) = sigma^{1+2s} K(sigma z).
#[derive(Debug, Clone, Copy)]
pub struct ScaledKernel<'a> {
    pub base: &'a Kernel,
    pub sigma: f64,
}

impl RadialKernel for ScaledKernel<'_> {
    fn s(&self) -> f64 {
        self.base.s
    }
    fn value(&self, r: f64) -> f64 {
        self.sigma.powf(1.0 + 2.0 * self.base.s) * self.base.value(self.sigma * r)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints().into_iter().map(|b| b / self.sigma).collect()
    }
    fn tail_mass(&self, a: f64) -> f64 {
        self.sigma.powf(2.0 * self.base.s) * self.base.tail_mass(self.sigma * a)
    }
    fn second_moment_from_zero(&self, b: f64) -> f64 {
        self.sigma.powf(2.0 * self.base.s - 2.0) * self.base.second_moment_from_zero(self.sigma * b)
    }
    fn near_origin_amplitude(&self) -> f64 {
        self.base.near_origin_amplitude()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct K4Row {
    pub sigma: f64,
    pub sup_ratio: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct K4Report {
    pub eps: f64,
    pub rows: Vec<K4Row>,
    pub tail_max: f64,
    pub tail_slope: f64,
    /// First sigma at which the sequence is infinite.
    pub divergence_witness: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub descriptor: String,
    pub k1: bool,
    pub k2: bool,
    pub lambda: f64,
    pub big_lambda: f64,
    pub r0: f64,
    /// Informational: the pure power lower bound on the whole line.
    pub k3: bool,
    pub k3_lambda: f64,
    pub k4: K4Report,
    /// (K1), (K2) and (K4) together.
    pub admissible: bool,
}
