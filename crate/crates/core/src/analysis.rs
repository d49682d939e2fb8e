//! Post-processing of computed layers: tail and derivative decay fits,
//! interval energy growth, and the growth gauge psi_s.

use serde::Serialize;

use crate::energy_min::{energy_with_table, minimize, MinimizerResult};
use crate::error::{invalid, Error, Result};
use crate::kernels::{ols, Kernel};
use crate::nonlocal_op::{GridFunction, OperatorTable};
use crate::potentials::{decay_exponent_bounds, DoubleWell, Potential, Side, WellExponents};

/// rho^{1-2s} for s < 1/2, log rho at s = 1/2, 1 for s > 1/2.
pub fn psi_s(s: f64, rho: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!("s = {s} is outside (0, 1)")));
    }
    if !(rho > 1.0) {
        return Err(Error::Domain(format!("rho = {rho} must exceed 1")));
    }
    Ok(if s < 0.5 {
        rho.powf(1.0 - 2.0 * s)
    } else if s == 0.5 {
        rho.ln()
    } else {
        1.0
    })
}

/// Fractions of the half-width R delimiting the fit window in |x|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { lo: 0.4, hi: 0.85 }
    }
}

impl FitWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi <= 0.9) {
            return Err(invalid(format!(
                "fit window [{}, {}] must satisfy 0 < lo < hi <= 0.9",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitKind {
    Tail,
    Derivative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub kind: FitKind,
    pub side: Side,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
    pub fitted_exponent: f64,
    pub fit_r2: f64,
    /// Exponent of the theoretical upper estimate (the slower decay).
    pub theoretical_upper: f64,
    /// Exponent of the theoretical lower estimate (the faster decay).
    pub theoretical_lower: f64,
    pub power_law: bool,
    /// Whether the bracket is expected to contain the fit: always for
    /// tails, and under max{(a-2)(a-b), (g-2)(g-d)} < 1 for derivatives.
    pub bracket_applies: bool,
    /// Fit inside [upper, lower] widened by 20% of each end.
    pub within_bracket: bool,
}

fn side_exponents(e: &WellExponents, side: Side) -> (f64, f64) {
    match side {
        Side::Left => (e.alpha, e.beta),
        Side::Right => (e.gamma, e.delta),
    }
}

/// Theoretical exponents (slow, fast) for the given fit.
pub fn theoretical_exponents(e: &WellExponents, s: f64, side: Side, kind: FitKind) -> (f64, f64) {
    match kind {
        FitKind::Tail => decay_exponent_bounds(e, s, side),
        FitKind::Derivative => {
            let (a, b) = side_exponents(e, side);
            let slow = 1.0 + 2.0 * s * (1.0 - (a - 2.0) * (a - b)) / (a - 1.0);
            let fast = 1.0 + 2.0 * s * (a - b + 1.0) / (a - 1.0);
            (slow, fast)
        }
    }
}

/// Log-log fit of 1 -/+ u (or of u') against |x| on a centred profile.
pub fn fit_profile(
    u: &GridFunction,
    s: f64,
    e: &WellExponents,
    kind: FitKind,
    side: Side,
    window: FitWindow,
) -> Result<DecayFit> {
    window.validate()?;
    let (lo, hi) = (window.lo * u.r, window.hi * u.r);
    let n = u.n();
    let mut pts = Vec::new();
    for i in 1..n {
        let x = u.node(i);
        let ax = match side {
            Side::Right => x,
            Side::Left => -x,
        };
        if ax < lo || ax > hi {
            continue;
        }
        let y = match kind {
            FitKind::Tail => match side {
                Side::Right => 1.0 - u.values[i],
                Side::Left => 1.0 + u.values[i],
            },
            FitKind::Derivative => (u.values[i + 1] - u.values[i - 1]) / (2.0 * u.h),
        };
        let floor = match kind {
            FitKind::Tail => 1e-12,
            FitKind::Derivative => 1e-14,
        };
        if !(y >= floor) {
            return Err(Error::Fit(format!(
                "{kind:?} value {y:e} at x = {x} is below {floor:e}; the profile saturates, try a larger window or a finer grid"
            )));
        }
        pts.push((ax.ln(), y.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::Fit(format!("only {} nodes in the fit window", pts.len())));
    }
    let (slope, _, r2) = ols(&pts);
    let fitted = -slope;
    let (slow, fast) = theoretical_exponents(e, s, side, kind);
    let bracket_applies = match kind {
        FitKind::Tail => true,
        FitKind::Derivative => {
            (e.alpha - 2.0) * (e.alpha - e.beta) < 1.0 && (e.gamma - 2.0) * (e.gamma - e.delta) < 1.0
        }
    };
    Ok(DecayFit {
        kind,
        side,
        x_lo: lo,
        x_hi: hi,
        points: pts.len(),
        fitted_exponent: fitted,
        fit_r2: r2,
        theoretical_upper: slow,
        theoretical_lower: fast,
        power_law: r2 >= 0.995,
        bracket_applies,
        within_bracket: fitted >= 0.8 * slow && fitted <= 1.2 * fast,
    })
}

fn require_converged(result: &MinimizerResult) -> Result<()> {
    if !result.converged {
        return Err(Error::Fit(format!(
            "minimizer did not converge (residual {:e})",
            result.residual
        )));
    }
    Ok(())
}

pub fn fit_tail_exponent(result: &MinimizerResult, side: Side, window: FitWindow) -> Result<DecayFit> {
    require_converged(result)?;
    let e = result.potential.exponents();
    fit_profile(&result.profile, result.kernel.s, &e, FitKind::Tail, side, window)
}

pub fn fit_derivative_exponent(result: &MinimizerResult, side: Side, window: FitWindow) -> Result<DecayFit> {
    require_converged(result)?;
    let e = result.potential.exponents();
    fit_profile(&result.profile, result.kernel.s, &e, FitKind::Derivative, side, window)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationCheck {
    pub radius: f64,
    pub base: DecayFit,
    pub rerun: DecayFit,
    /// |rerun - base| / base
    pub relative_shift: f64,
    /// Set when the exponent moves by 5% or more: R is too small.
    pub r_too_small: bool,
}

/// Solve again on a window 1.5 times wider and compare fitted exponents.
pub fn truncation_check(
    result: &MinimizerResult,
    kind: FitKind,
    side: Side,
    window: FitWindow,
) -> Result<TruncationCheck> {
    require_converged(result)?;
    let g = &result.profile;
    let radius = (1.5 * g.r / g.h).ceil() * g.h;
    let rerun = minimize(&result.kernel, &result.potential, radius, g.h, &result.opts)?;
    require_converged(&rerun)?;
    let e = result.potential.exponents();
    let s = result.kernel.s;
    let base = fit_profile(g, s, &e, kind, side, window)?;
    let wide = fit_profile(&rerun.profile, s, &e, kind, side, window)?;
    let shift = (wide.fitted_exponent - base.fitted_exponent).abs() / base.fitted_exponent.abs();
    Ok(TruncationCheck {
        radius,
        base,
        rerun: wide,
        relative_shift: shift,
        r_too_small: shift >= 0.05,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub rho: f64,
    pub energy: f64,
    pub psi: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCurve {
    pub rows: Vec<EnergyRow>,
    pub max_ratio: f64,
    /// (max - min) / mean of the ratios.
    pub spread: f64,
    /// The same over the larger half of the radii.
    pub top_half_spread: f64,
}

fn spread(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / mean.abs()
}

/// E(u; [-rho, rho]) / psi_s(rho) for each radius.
pub fn renormalized_energy_curve(k: &Kernel, p: &Potential, u: &GridFunction, rhos: &[f64]) -> Result<EnergyCurve> {
    if rhos.is_empty() {
        return Err(invalid("no radii given"));
    }
    let mut rhos = rhos.to_vec();
    rhos.sort_by(f64::total_cmp);
    let centre = u.origin;
    if let Some(&bad) = rhos.iter().find(|&&r| !(r <= 0.9 * u.r)) {
        return Err(invalid(format!("rho = {bad} exceeds 0.9 R = {}", 0.9 * u.r)));
    }
    let table = OperatorTable::new(k, u.h, u.n())?;
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in &rhos {
        let psi = psi_s(k.s, rho)?;
        let e = energy_with_table(&table, p, u, centre - rho, centre + rho)?.total;
        rows.push(EnergyRow {
            rho,
            energy: e,
            psi,
            ratio: e / psi,
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let half = ratios.len() / 2;
    Ok(EnergyCurve {
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        spread: spread(&ratios),
        top_half_spread: spread(&ratios[half..]),
        rows,
    })
}
