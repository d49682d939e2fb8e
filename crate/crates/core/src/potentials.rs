//! Double-well potentials and certification of the near-well convexity bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialFamily {
    /// (1 - t^2)^p / (2p)
    SymmetricPower { p: f64 },
    /// amplitude (1 + t)^alpha (1 - t)^gamma
    AsymmetricProduct {
        alpha: f64,
        gamma: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_xi() -> f64 {
    0.25
}

/// Exponents of the two-sided second derivative bounds near the wells:
/// `(1+t)^{alpha-2} <~ W'' <~ (1+t)^{beta-2}` near -1 and
/// `(1-t)^{gamma-2} <~ W'' <~ (1-t)^{delta-2}` near 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellExponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    #[serde(flatten)]
    pub family: PotentialFamily,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Declared exponents; defaults to the family's natural ones.
    #[serde(default)]
    pub exponents: Option<WellExponents>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Anything with a C^2 double-well profile on [-1, 1].
pub trait DoubleWell: Sync {
    fn w(&self, t: f64) -> f64;
    fn dw(&self, t: f64) -> f64;
    fn d2w(&self, t: f64) -> f64;
    fn exponents(&self) -> WellExponents;
    fn xi(&self) -> f64;
}

/// b^e, using exact integer powers when e is an integer and clamping the
/// base at zero otherwise (the extension outside [-1, 1] is then flat).
fn bpow(b: f64, e: f64) -> f64 {
    if e == e.round() && e.abs() < 64.0 {
        b.powi(e as i32)
    } else {
        b.max(0.0).powf(e)
    }
}

impl Potential {
    pub fn new(family: PotentialFamily, xi: f64, exponents: Option<WellExponents>) -> Result<Potential> {
        let p = Potential { family, xi, exponents };
        p.validate()?;
        Ok(p)
    }

    pub fn symmetric_power(p: f64) -> Result<Potential> {
        Potential::new(PotentialFamily::SymmetricPower { p }, 0.25, None)
    }

    pub fn asymmetric_product(alpha: f64, gamma: f64, amplitude: f64) -> Result<Potential> {
        Potential::new(
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            },
            0.25,
            None,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(invalid(format!("xi must lie in (0, 1), got {}", self.xi)));
        }
        match self.family {
            PotentialFamily::SymmetricPower { p } => {
                if !(p >= 2.0 && p.is_finite()) {
                    return Err(invalid(format!("p must be at least 2, got {p}")));
                }
            }
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            } => {
                if !(alpha >= 2.0 && gamma >= 2.0 && alpha.is_finite() && gamma.is_finite()) {
                    return Err(invalid("alpha and gamma must be at least 2"));
                }
                if !(amplitude > 0.0 && amplitude.is_finite()) {
                    return Err(invalid("amplitude must be positive"));
                }
            }
        }
        if let Some(e) = self.exponents {
            if !(e.alpha >= e.beta && e.beta >= 2.0 && e.gamma >= e.delta && e.delta >= 2.0) {
                return Err(invalid(format!(
                    "declared exponents need alpha >= beta >= 2 and gamma >= delta >= 2, got {e:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        match self.family {
            PotentialFamily::SymmetricPower { p } => format!("symmetric_power(p={p})"),
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            } => format!("asymmetric_product(alpha={alpha},gamma={gamma},amplitude={amplitude})"),
        }
    }

    fn natural_exponents(&self) -> WellExponents {
        match self.family {
            PotentialFamily::SymmetricPower { p } => WellExponents {
                alpha: p,
                beta: p,
                gamma: p,
                delta: p,
            },
            PotentialFamily::AsymmetricProduct { alpha, gamma, .. } => WellExponents {
                alpha,
                beta: alpha,
                gamma,
                delta: gamma,
            },
        }
    }

    /// W(t), W'(t), W''(t).
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        if !t.is_finite() {
            return Err(Error::Domain(format!("potential evaluated at {t}")));
        }
        Ok((self.w(t), self.dw(t), self.d2w(t)))
    }
}

impl DoubleWell for Potential {
    fn w(&self, t: f64) -> f64 {
        match self.family {
            PotentialFamily::SymmetricPower { p } => bpow(1.0 - t * t, p) / (2.0 * p),
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            } => amplitude * bpow(1.0 + t, alpha) * bpow(1.0 - t, gamma),
        }
    }

    fn dw(&self, t: f64) -> f64 {
        match self.family {
            PotentialFamily::SymmetricPower { p } => -t * bpow(1.0 - t * t, p - 1.0),
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            } => {
                let (a, c) = (1.0 + t, 1.0 - t);
                amplitude
                    * (alpha * bpow(a, alpha - 1.0) * bpow(c, gamma) - gamma * bpow(a, alpha) * bpow(c, gamma - 1.0))
            }
        }
    }

    fn d2w(&self, t: f64) -> f64 {
        match self.family {
            PotentialFamily::SymmetricPower { p } => {
                let b = 1.0 - t * t;
                -bpow(b, p - 1.0) + 2.0 * (p - 1.0) * t * t * bpow(b, p - 2.0)
            }
            PotentialFamily::AsymmetricProduct {
                alpha,
                gamma,
                amplitude,
            } => {
                let (a, c) = (1.0 + t, 1.0 - t);
                amplitude
                    * (alpha * (alpha - 1.0) * bpow(a, alpha - 2.0) * bpow(c, gamma)
                        - 2.0 * alpha * gamma * bpow(a, alpha - 1.0) * bpow(c, gamma - 1.0)
                        + gamma * (gamma - 1.0) * bpow(a, alpha) * bpow(c, gamma - 2.0))
            }
        }
    }

    fn exponents(&self) -> WellExponents {
        self.exponents.unwrap_or_else(|| self.natural_exponents())
    }

    fn xi(&self) -> f64 {
        self.xi
    }
}

/// Decay exponents the theory allows for `1 -/+ u` on the given side:
/// the measured exponent should lie in [min, max].
pub fn decay_exponent_bounds(e: &WellExponents, s: f64, side: Side) -> (f64, f64) {
    let (hi, lo) = match side {
        Side::Right => (e.gamma, e.delta),
        Side::Left => (e.alpha, e.beta),
    };
    let min = 2.0 * s / (hi - 1.0);
    let max = 2.0 * s * (hi - lo + 1.0) / (hi - 1.0);
    (min, max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct W3Certificate {
    /// Constants used downstream; the lower ones are capped by the upper ones.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// Raw scan minima before capping.
    pub c1_scan: f64,
    pub c3_scan: f64,
    pub alpha_tight: bool,
    pub beta_tight: bool,
    pub gamma_tight: bool,
    pub delta_tight: bool,
    /// Local log-log slopes of W'' at the wells, expected alpha-2 (= beta-2
    /// when tight) and gamma-2.
    pub left_slope: f64,
    pub right_slope: f64,
    pub negative_witness: Option<f64>,
    pub pass: bool,
}

fn well_distances(xi: f64, n: usize) -> Vec<f64> {
    let mut d: Vec<f64> = (1..=n).map(|j| xi * j as f64 / n as f64).collect();
    let (a, b) = ((1e-8 * xi).ln(), xi.ln());
    d.extend((0..n).map(|j| (a + (b - a) * j as f64 / (n - 1) as f64).exp()));
    d.sort_by(f64::total_cmp);
    d
}

/// Scan W'' near both wells with `n` uniform plus `n` logarithmic samples per side.
pub fn certify_w3<P: DoubleWell + ?Sized>(p: &P, n: usize) -> Result<W3Certificate> {
    if n < 16 {
        return Err(invalid("need at least 16 samples per side"));
    }
    let e = p.exponents();
    let xi = p.xi();
    let d = well_distances(xi, n);
    let mut negative_witness = None;

    let mut scan = |t_of: &dyn Fn(f64) -> f64, lo_exp: f64, hi_exp: f64| -> (f64, f64, f64) {
        let mut cmin = f64::INFINITY;
        let mut cmax: f64 = 0.0;
        for &di in &d {
            let t = t_of(di);
            // distance as actually represented after rounding t
            let di = 1.0 - t.abs();
            let v = p.d2w(t);
            if v < 0.0 && negative_witness.is_none() {
                negative_witness = Some(t);
            }
            cmin = cmin.min(v / di.powf(lo_exp - 2.0));
            cmax = cmax.max(v / di.powf(hi_exp - 2.0));
        }
        let (d1, d2) = (1e-8 * xi, 1e-7 * xi);
        let slope = (p.d2w(t_of(d2)).ln() - p.d2w(t_of(d1)).ln()) / (d2 / d1).ln();
        (cmin, cmax, slope)
    };
    let (c1s, c2, lslope) = scan(&|di| -1.0 + di, e.alpha, e.beta);
    let (c3s, c4, rslope) = scan(&|di| 1.0 - di, e.gamma, e.delta);

    let tight = |slope: f64, ex: f64| slope.is_finite() && (slope - (ex - 2.0)).abs() < 0.05;
    let c1 = c1s.min(c2);
    let c3 = c3s.min(c4);
    let pass = negative_witness.is_none() && [c1, c2, c3, c4].iter().all(|c| c.is_finite() && *c > 0.0);
    Ok(W3Certificate {
        c1,
        c2,
        c3,
        c4,
        c1_scan: c1s,
        c3_scan: c3s,
        alpha_tight: tight(lslope, e.alpha),
        beta_tight: tight(lslope, e.beta),
        gamma_tight: tight(rslope, e.gamma),
        delta_tight: tight(rslope, e.delta),
        left_slope: lslope,
        right_slope: rslope,
        negative_witness,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl Bracket {
    fn holds(&self) -> bool {
        let slack = 1e-10 * (self.lower.abs() + self.value.abs() + self.upper.abs()) + 1e-300;
        self.lower <= self.value + slack && self.value <= self.upper + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub side: Side,
    /// Bounds on W(t) - W(r).
    pub w: Bracket,
    /// Bounds on W'(t) - W'(r).
    pub dw: Bracket,
    pub pass: bool,
}

/// Increment bounds for W and W' between two points r <= t in the same
/// near-well region.
pub fn check_convexity<P: DoubleWell + ?Sized>(p: &P, cert: &W3Certificate, r: f64, t: f64) -> Result<ConvexityReport> {
    if !(r <= t) {
        return Err(invalid(format!("need r <= t, got r={r}, t={t}")));
    }
    let e = p.exponents();
    let xi = p.xi();
    let dwv = p.dw(t) - p.dw(r);
    let wv = p.w(t) - p.w(r);
    let (side, w, dw) = if r >= -1.0 && t <= -1.0 + xi {
        let (a, b) = (1.0 + t, 1.0 + r);
        let (al, be) = (e.alpha, e.beta);
        (
            Side::Left,
            Bracket {
                lower: cert.c1 / (al * (al - 1.0)) * (a.powf(al) - b.powf(al)),
                value: wv,
                upper: cert.c2 / (be * (be - 1.0)) * (a.powf(be) - b.powf(be)),
            },
            Bracket {
                lower: cert.c1 / (al - 1.0) * (a.powf(al - 1.0) - b.powf(al - 1.0)),
                value: dwv,
                upper: cert.c2 / (be - 1.0) * (a.powf(be - 1.0) - b.powf(be - 1.0)),
            },
        )
    } else if r >= 1.0 - xi && t <= 1.0 {
        let (a, b) = (1.0 - t, 1.0 - r);
        let (ga, de) = (e.gamma, e.delta);
        (
            Side::Right,
            Bracket {
                lower: cert.c4 / (de * (de - 1.0)) * (a.powf(de) - b.powf(de)),
                value: wv,
                upper: cert.c3 / (ga * (ga - 1.0)) * (a.powf(ga) - b.powf(ga)),
            },
            Bracket {
                lower: cert.c3 / (ga - 1.0) * (b.powf(ga - 1.0) - a.powf(ga - 1.0)),
                value: dwv,
                upper: cert.c4 / (de - 1.0) * (b.powf(de - 1.0) - a.powf(de - 1.0)),
            },
        )
    } else {
        return Err(Error::Domain(format!(
            "r={r}, t={t} are not in a common near-well region of width {xi}"
        )));
    };
    Ok(ConvexityReport {
        side,
        w,
        dw,
        pass: w.holds() && dw.holds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// W'' equal to c (1+t)^{a-2} near -1 and c (1-t)^{a-2} near 1.
    struct ExactPower {
        a: f64,
        c: f64,
    }

    impl DoubleWell for ExactPower {
        fn w(&self, t: f64) -> f64 {
            let d = if t < 0.0 { 1.0 + t } else { 1.0 - t };
            self.c * d.powf(self.a) / (self.a * (self.a - 1.0))
        }
        fn dw(&self, t: f64) -> f64 {
            if t < 0.0 {
                self.c * (1.0 + t).powf(self.a - 1.0) / (self.a - 1.0)
            } else {
                -self.c * (1.0 - t).powf(self.a - 1.0) / (self.a - 1.0)
            }
        }
        fn d2w(&self, t: f64) -> f64 {
            let d = if t < 0.0 { 1.0 + t } else { 1.0 - t };
            self.c * d.powf(self.a - 2.0)
        }
        fn exponents(&self) -> WellExponents {
            WellExponents {
                alpha: self.a,
                beta: self.a,
                gamma: self.a,
                delta: self.a,
            }
        }
        fn xi(&self) -> f64 {
            0.25
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            Potential::symmetric_power(2.0).unwrap(),
            Potential::symmetric_power(2.5).unwrap(),
            Potential::symmetric_power(3.0).unwrap(),
            Potential::asymmetric_product(3.0, 2.0, 1.0).unwrap(),
        ];
        for p in &pots {
            for t in [-0.9, -0.3, 0.1, 0.77] {
                let h = 1e-5;
                let fd1 = (p.w(t + h) - p.w(t - h)) / (2.0 * h);
                let fd2 = (p.dw(t + h) - p.dw(t - h)) / (2.0 * h);
                assert!((fd1 - p.dw(t)).abs() < 1e-8, "{}", p.descriptor());
                assert!((fd2 - p.d2w(t)).abs() < 1e-8, "{}", p.descriptor());
            }
        }
    }

    #[test]
    fn quartic_second_derivative() {
        let p = Potential::symmetric_power(2.0).unwrap();
        for t in [-1.0, -0.4, 0.0, 0.5, 1.0] {
            assert!((p.d2w(t) - (3.0 * t * t - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn quartic_certificate() {
        let p = Potential::symmetric_power(2.0).unwrap();
        let c = certify_w3(&p, 512).unwrap();
        assert!(c.pass);
        assert!(c.alpha_tight && c.gamma_tight);
        // W'' = 3t^2 - 1 runs from 2 at the well to 0.6875 at distance 1/4
        assert!((c.c2 - 2.0).abs() < 1e-6);
        assert!((c.c1 - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn overdeclared_alpha_is_flagged_not_tight() {
        let p = Potential::new(
            PotentialFamily::SymmetricPower { p: 2.0 },
            0.25,
            Some(WellExponents {
                alpha: 5.0,
                beta: 2.0,
                gamma: 2.0,
                delta: 2.0,
            }),
        )
        .unwrap();
        let c = certify_w3(&p, 512).unwrap();
        assert!(!c.alpha_tight);
        assert!(c.beta_tight);
        assert!(c.c1_scan > c.c2);
        assert!(c.pass);
    }

    #[test]
    fn exact_power_bounds_are_equalities() {
        let p = ExactPower { a: 3.5, c: 1.7 };
        let c = certify_w3(&p, 256).unwrap();
        assert!((c.c1 - 1.7).abs() < 1e-12 && (c.c2 - 1.7).abs() < 1e-12, "{c:?}");
        for (r, t) in [(-0.99, -0.8), (0.8, 0.95)] {
            let rep = check_convexity(&p, &c, r, t).unwrap();
            assert!(rep.pass);
            for b in [rep.w, rep.dw] {
                assert!((b.lower - b.value).abs() < 1e-12, "{b:?}");
                assert!((b.upper - b.value).abs() < 1e-12, "{b:?}");
            }
        }
    }

    #[test]
    fn convexity_holds_for_random_pairs() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let pots = [
            Potential::symmetric_power(2.0).unwrap(),
            Potential::symmetric_power(2.5).unwrap(),
            Potential::symmetric_power(3.0).unwrap(),
            Potential::symmetric_power(4.0).unwrap(),
            Potential::asymmetric_product(3.0, 2.0, 1.0).unwrap(),
            Potential::new(
                PotentialFamily::AsymmetricProduct {
                    alpha: 2.0,
                    gamma: 4.0,
                    amplitude: 0.5,
                },
                0.1,
                None,
            )
            .unwrap(),
        ];
        for p in &pots {
            let c = certify_w3(p, 1024).unwrap();
            assert!(c.pass, "{}", p.descriptor());
            for _ in 0..1000 {
                let left = rng.random_bool(0.5);
                let mut a: f64 = rng.random_range(0.0..p.xi);
                let mut b: f64 = rng.random_range(0.0..p.xi);
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                let (r, t) = if left { (-1.0 + a, -1.0 + b) } else { (1.0 - b, 1.0 - a) };
                let rep = check_convexity(p, &c, r, t).unwrap();
                assert!(rep.pass, "{} r={r} t={t} {rep:?} {c:?}", p.descriptor());
            }
        }
    }

    #[test]
    fn concave_near_well_region_fails_with_witness() {
        let p = Potential::asymmetric_product(2.0, 4.0, 0.5).unwrap();
        let c = certify_w3(&p, 512).unwrap();
        assert!(!c.pass);
        let t = c.negative_witness.unwrap();
        assert!(p.d2w(t) < 0.0 && (-1.0..-0.5).contains(&t));
    }

    #[test]
    fn off_region_pairs_are_rejected() {
        let p = Potential::symmetric_power(2.0).unwrap();
        let c = certify_w3(&p, 64).unwrap();
        assert!(check_convexity(&p, &c, -0.9, 0.9).is_err());
        assert!(check_convexity(&p, &c, -0.8, -0.9).is_err());
    }

    #[test]
    fn degenerate_exponents() {
        let p = Potential::symmetric_power(3.0).unwrap();
        let c = certify_w3(&p, 512).unwrap();
        assert!(c.alpha_tight, "slope {}", c.left_slope);
        let (lo, hi) = decay_exponent_bounds(&p.exponents(), 0.5, Side::Right);
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
    }
}
