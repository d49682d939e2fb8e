//! Explicit barrier for the operator inequality |L_K w| <= zeta (1+w)^{m-1}.
//!
//! The profile lives on [0, r): it is flat zero up to r/2, follows a
//! normalised copy of (r-t)^{-qs} with its tangent at r/2 removed, and is
//! blended to 1 on [r-7/4, r-5/4]. The barrier w rescales it to radius R.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernels::{Kernel, KernelFamily, RadialKernel, ScaledKernel};
use crate::nonlocal_op::{apply_analytic, AnalyticProfile};
use crate::quad::QuadOptions;

/// c1 in the derivative bounds of the radial profile.
pub const DERIVATIVE_CONSTANT: f64 = 128.0;
/// Safety factor applied to the measured operator supremum.
pub const C4_SAFETY: f64 = 1.5;

fn quad_opts(abs: f64) -> QuadOptions {
    QuadOptions {
        abs_tol: abs,
        rel_tol: 1e-10,
        max_intervals: 20000,
    }
}

/// Normaliser making the profile reach 1 at t = r - 1.
pub fn gamma_r(qs: f64, r: f64) -> f64 {
    let half = 0.5 * r;
    let ell_half = half.powf(-qs);
    let dell_half = qs * half.powf(-qs - 1.0);
    1.0 / (1.0 - ell_half - dell_half * (half - 1.0))
}

/// Quintic smoothstep: 1 below `a`, 0 above `a + width`. Returns value and
/// first two derivatives.
fn cutoff(t: f64, a: f64, width: f64) -> [f64; 3] {
    if t <= a {
        return [1.0, 0.0, 0.0];
    }
    if t >= a + width {
        return [0.0, 0.0, 0.0];
    }
    let y = (t - a) / width;
    let s = y * y * y * (10.0 - 15.0 * y + 6.0 * y * y);
    let ds = 30.0 * y * y * (1.0 - y) * (1.0 - y);
    let d2s = 60.0 * y * (1.0 - y) * (1.0 - 2.0 * y);
    [1.0 - s, -ds / width, -d2s / (width * width)]
}

/// The radial profile g on [0, inf).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileG {
    pub r: f64,
    pub qs: f64,
    pub gamma_r: f64,
}

impl ProfileG {
    pub fn new(qs: f64, r: f64) -> Result<ProfileG> {
        if !(qs > 0.0) || !(r > 4.0) {
            return Err(invalid(format!("profile needs qs > 0 and r > 4, got {qs}, {r}")));
        }
        Ok(ProfileG {
            r,
            qs,
            gamma_r: gamma_r(qs, r),
        })
    }

    /// h and its first two derivatives (one-sided from the right at kinks).
    pub fn h(&self, t: f64) -> [f64; 3] {
        let (r, qs) = (self.r, self.qs);
        let half = 0.5 * r;
        if t < half {
            return [0.0, 0.0, 0.0];
        }
        if t >= r - 1.0 {
            return [1.0, 0.0, 0.0];
        }
        let d = r - t;
        let ell = d.powf(-qs);
        let dell = qs * d.powf(-qs - 1.0);
        let d2ell = qs * (qs + 1.0) * d.powf(-qs - 2.0);
        let ell_half = half.powf(-qs);
        let dell_half = qs * half.powf(-qs - 1.0);
        let g = self.gamma_r;
        [
            g * (ell - ell_half - dell_half * (t - half)),
            g * (dell - dell_half),
            g * d2ell,
        ]
    }

    pub fn eta(&self, t: f64) -> [f64; 3] {
        cutoff(t, self.r - 1.75, 0.5)
    }

    /// g, g', g''.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let [h, dh, d2h] = self.h(t);
        let [e, de, d2e] = self.eta(t);
        [
            e * h + 1.0 - e,
            de * (h - 1.0) + e * dh,
            d2e * (h - 1.0) + 2.0 * de * dh + e * d2h,
        ]
    }

    fn kinks(&self) -> [f64; 3] {
        [0.5 * self.r, self.r - 1.75, self.r - 1.25]
    }
}

/// v(x) = g(|x|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile(pub ProfileG);

impl AnalyticProfile for RadialProfile {
    fn value(&self, x: f64) -> f64 {
        self.0.eval(x.abs())[0]
    }
    fn second_derivative(&self, x: f64) -> f64 {
        self.0.eval(x.abs())[2]
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.kinks().iter().flat_map(|&b| [-b, b]).collect()
    }
    fn local_scale(&self, x: f64) -> f64 {
        (0.5 * (self.0.r - x.abs())).max(0.125)
    }
    fn constant_outside(&self) -> Option<(f64, f64, f64)> {
        Some((self.0.r - 1.25, 1.0, 1.0))
    }
}

/// w(x) = (2 - beta) v(x / scale) + beta - 1 with scale = R / r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierW {
    pub g: ProfileG,
    pub beta: f64,
    pub scale: f64,
}

impl BarrierW {
    pub fn radius(&self) -> f64 {
        self.scale * self.g.r
    }
}

impl AnalyticProfile for BarrierW {
    fn value(&self, x: f64) -> f64 {
        (2.0 - self.beta) * self.g.eval(x.abs() / self.scale)[0] + self.beta - 1.0
    }
    fn second_derivative(&self, x: f64) -> f64 {
        (2.0 - self.beta) * self.g.eval(x.abs() / self.scale)[2] / (self.scale * self.scale)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.g
            .kinks()
            .iter()
            .flat_map(|&b| [-b * self.scale, b * self.scale])
            .collect()
    }
    fn local_scale(&self, x: f64) -> f64 {
        self.scale * RadialProfile(self.g).local_scale(x / self.scale)
    }
    fn constant_outside(&self) -> Option<(f64, f64, f64)> {
        Some((self.scale * (self.g.r - 1.25), 1.0, 1.0))
    }
}

/// Points of [0, r) used to probe a radial quantity: a uniform layer, a
/// geometric layer toward r and a dense band at the boundary.
pub fn radial_probes(r: f64, density: f64) -> Vec<f64> {
    let density = density.max(0.25);
    let n = (2048.0 * density).ceil() as usize;
    let mut t: Vec<f64> = (0..n).map(|i| r * i as f64 / n as f64).collect();
    let per_octave = (32.0 * density).ceil() as usize;
    let mut d = 0.5 * r;
    let ratio = 0.5f64.powf(1.0 / per_octave as f64);
    while d > 1e-3 {
        t.push(r - d);
        d *= ratio;
    }
    let step = 1.0 / (64.0 * density);
    let mut x = (r - 3.0).max(0.0);
    while x < r {
        t.push(x);
        x += step;
    }
    for b in [0.5 * r, r - 1.75, r - 1.25, r - 1.0] {
        t.push(b);
    }
    t.retain(|&v| (0.0..r).contains(&v));
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C4Estimate {
    /// sup |L v| / (v + 12 r^{-qs})^{m-1} over the probes.
    pub sup: f64,
    pub argmax: f64,
    pub c4_hat: f64,
    pub probes: usize,
}

/// Measured operator constant of the radial profile at radius `r_probe`.
pub fn estimate_c4<K: RadialKernel + ?Sized>(k: &K, m: f64, r_probe: f64, density: f64) -> Result<C4Estimate> {
    let s = k.s();
    check_inputs(m, s, 1.0)?;
    let qs = 2.0 * s / (m - 1.0);
    let r1 = base_radius(qs);
    if !(r_probe >= r1 * (1.0 - 1e-12)) {
        return Err(invalid(format!("probe radius {r_probe} is below r1 = {r1}")));
    }
    let g = ProfileG::new(qs, r_probe)?;
    let v = RadialProfile(g);
    let floor = 12.0 * r_probe.powf(-qs);
    let probes = radial_probes(r_probe, density);
    let ratios: Vec<Result<(f64, f64)>> = probes
        .par_iter()
        .map(|&t| {
            let den = (v.value(t) + floor).powf(m - 1.0);
            let lv = apply_analytic(k, &v, t, quad_opts(1e-10 * den))?;
            Ok((t, lv.abs() / den))
        })
        .collect();
    let mut sup = 0.0;
    let mut argmax = 0.0;
    for item in ratios {
        let (t, q) = item?;
        if !q.is_finite() {
            return Err(Error::Barrier(format!("operator constant is not finite at t = {t}")));
        }
        if q > sup {
            sup = q;
            argmax = t;
        }
    }
    if !(sup > 0.0) {
        return Err(Error::Barrier("operator constant estimate vanished".into()));
    }
    Ok(C4Estimate {
        sup,
        argmax,
        c4_hat: C4_SAFETY * sup,
        probes: probes.len(),
    })
}

fn base_radius(qs: f64) -> f64 {
    2f64.powf(5.0 / qs)
}

fn check_inputs(m: f64, s: f64, zeta: f64) -> Result<()> {
    if !(m >= 2.0 && m.is_finite()) {
        return Err(invalid(format!("m must be >= 2, got {m}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s must lie in (0, 1), got {s}")));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(invalid(format!("zeta must be positive, got {zeta}")));
    }
    Ok(())
}

/// Every constant of the construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSpec {
    pub m: f64,
    pub zeta: f64,
    pub s: f64,
    pub q: f64,
    pub r1: f64,
    pub c4_hat: f64,
    /// Scale of the kernel at which c4_hat was measured, (c4_hat / zeta)^{1/(2s)}.
    pub sigma: f64,
    pub radius0: f64,
    pub radius: f64,
    pub r: f64,
    pub beta: f64,
    pub gamma_r: f64,
    pub c4_iterations: usize,
}

impl BarrierSpec {
    /// Build the barrier of radius `factor * R0` for kernel `k`.
    pub fn new(k: &Kernel, m: f64, zeta: f64, factor: f64, density: f64) -> Result<BarrierSpec> {
        let s = k.s;
        check_inputs(m, s, zeta)?;
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(invalid(format!("radius factor must be >= 1, got {factor}")));
        }
        let q = 2.0 / (m - 1.0);
        let qs = q * s;
        let r1 = base_radius(qs);
        let r = factor * r1;
        let mut c4 = estimate_c4(k, m, r, density)?.c4_hat;
        let mut iterations = 1;
        // pure powers are invariant under the kernel rescaling
        if !matches!(k.family, KernelFamily::FractionalLaplacian) {
            loop {
                let sigma = (c4 / zeta).powf(0.5 / s);
                let est = estimate_c4(&ScaledKernel { base: k, sigma }, m, r, density)?;
                iterations += 1;
                if est.c4_hat <= c4 * (1.0 + 1e-6) {
                    break;
                }
                c4 = est.c4_hat;
                if iterations > 16 {
                    return Err(Error::Barrier(format!(
                        "operator constant did not settle under kernel rescaling (last {c4})"
                    )));
                }
            }
        }
        let sigma = (c4 / zeta).powf(0.5 / s);
        let radius0 = sigma * r1;
        let beta = 24.0 * r.powf(-qs);
        let spec = BarrierSpec {
            m,
            zeta,
            s,
            q,
            r1,
            c4_hat: c4,
            sigma,
            radius0,
            radius: factor * radius0,
            r,
            beta,
            gamma_r: gamma_r(qs, r),
            c4_iterations: iterations,
        };
        if !(spec.beta > 0.0 && spec.beta < 1.0) {
            return Err(Error::Barrier(format!("beta = {} outside (0, 1)", spec.beta)));
        }
        Ok(spec)
    }

    pub fn qs(&self) -> f64 {
        self.q * self.s
    }

    pub fn profile_g(&self) -> ProfileG {
        ProfileG {
            r: self.r,
            qs: self.qs(),
            gamma_r: self.gamma_r,
        }
    }

    pub fn barrier_w(&self) -> BarrierW {
        BarrierW {
            g: self.profile_g(),
            beta: self.beta,
            scale: self.radius / self.r,
        }
    }
}

/// Checks on the radial profile itself, independent of the kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub samples: usize,
    pub eta_slope_max: f64,
    pub eta_slope_sign_ok: bool,
    pub eta_curvature_max: f64,
    /// max |g'| / min{(r-t)^{-(qs+1)}, 1}
    pub g1_ratio: f64,
    /// max |g''| / min{(r-t)^{-(qs+2)}, 1}
    pub g2_ratio: f64,
    /// min of (g + 12 r^{-qs}) / min{(r-t)^{-qs}, 1}; must be >= 1
    pub sandwich_low: f64,
    /// max of the same ratio; must be <= 18
    pub sandwich_high: f64,
    pub gamma_r_ok: bool,
    pub pass: bool,
}

pub fn check_profile(g: &ProfileG, n: usize) -> ProfileReport {
    let (r, qs) = (g.r, g.qs);
    let mut t: Vec<f64> = (0..n).map(|i| r * i as f64 / n as f64).collect();
    t.extend(radial_probes(r, 1.0));
    t.sort_by(f64::total_cmp);
    t.dedup();
    let floor = 12.0 * r.powf(-qs);
    let (mut g1, mut g2, mut lo, mut hi) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for &ti in &t {
        let d = r - ti;
        let [gv, dg, d2g] = g.eval(ti);
        g1 = g1.max(dg.abs() / d.powf(-(qs + 1.0)).min(1.0));
        g2 = g2.max(d2g.abs() / d.powf(-(qs + 2.0)).min(1.0));
        let env = d.powf(-qs).min(1.0);
        lo = lo.min((gv + floor) / env);
        hi = hi.max((gv + floor) / env);
    }
    let (mut eta1, mut eta2, mut sign_ok) = (0.0f64, 0.0f64, true);
    for i in 0..=4000 {
        let ti = r - 1.75 + 0.5 * i as f64 / 4000.0;
        let [_, de, d2e] = g.eta(ti);
        eta1 = eta1.max(de.abs());
        eta2 = eta2.max(d2e.abs());
        sign_ok &= de <= 0.0;
    }
    let gamma_r_ok = g.gamma_r > 1.0 && g.gamma_r < 2.0;
    let pass = sign_ok
        && eta1 < 4.0
        && eta2 <= 32.0
        && g1 <= DERIVATIVE_CONSTANT
        && g2 <= DERIVATIVE_CONSTANT
        && lo >= 1.0 - 1e-12
        && hi <= 18.0
        && gamma_r_ok;
    ProfileReport {
        samples: t.len(),
        eta_slope_max: eta1,
        eta_slope_sign_ok: sign_ok,
        eta_curvature_max: eta2,
        g1_ratio: g1,
        g2_ratio: g2,
        sandwich_low: lo,
        sandwich_high: hi,
        gamma_r_ok,
        pass,
    }
}

/// Uniform points of [0, R) with spacing R/4096, plus bands [R - R 2^{-k}, R)
/// of 64 points each until the band is narrower than 1e-3. Only |x| matters
/// since w and L_K w are even.
pub fn certification_grid(radius: f64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..4096).map(|j| radius * j as f64 / 4096.0).collect();
    let mut width = 0.5 * radius;
    while width >= 1e-3 {
        for i in 0..64 {
            x.push(radius - width * (1.0 - i as f64 / 64.0));
        }
        width *= 0.5;
    }
    x.retain(|&v| v >= 0.0 && v < radius);
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierRow {
    pub x: f64,
    pub w: f64,
    pub lw: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierCertificate {
    pub rows: Vec<BarrierRow>,
    /// max |L_K w| - zeta (1+w)^{m-1}
    pub max_margin: f64,
    pub argmax_margin: f64,
    /// max |L_K w| / (zeta (1+w)^{m-1})
    pub max_ratio: f64,
    /// Smallest C >= 1 with both sides of the decay sandwich on the grid.
    pub sandwich_c: f64,
    pub monotone_defect: f64,
    pub inequality_pass: bool,
    pub sandwich_pass: bool,
    pub monotone_pass: bool,
    pub profile: ProfileReport,
    pub pass: bool,
}

pub fn certify_barrier<K: RadialKernel + ?Sized>(
    k: &K,
    spec: &BarrierSpec,
    grid: &[f64],
) -> Result<BarrierCertificate> {
    let w = spec.barrier_w();
    let radius = spec.radius;
    let m = spec.m;
    let zeta = spec.zeta;
    let rows: Vec<Result<BarrierRow>> = grid
        .par_iter()
        .filter(|x| x.abs() < radius)
        .map(|&x| {
            let wx = w.value(x);
            if !(1.0 + wx > 0.0) {
                return Err(Error::Barrier(format!("1 + w = {} at x = {x}", 1.0 + wx)));
            }
            let lw = apply_analytic(k, &w, x, quad_opts(1e-12 * zeta))?;
            let bound = zeta * (1.0 + wx).powf(m - 1.0);
            Ok(BarrierRow {
                x,
                w: wx,
                lw,
                bound,
                margin: lw.abs() - bound,
            })
        })
        .collect();
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.x.abs().total_cmp(&b.x.abs()));
    if rows.is_empty() {
        return Err(invalid("certification grid has no points inside the ball"));
    }
    let qs = spec.qs();
    let (mut max_margin, mut arg, mut max_ratio, mut c) = (f64::NEG_INFINITY, 0.0, 0.0f64, 1.0f64);
    for row in &rows {
        if row.margin > max_margin {
            max_margin = row.margin;
            arg = row.x;
        }
        max_ratio = max_ratio.max(row.lw.abs() / row.bound);
        let a = (1.0 + row.w) * (1.0 + radius - row.x.abs()).powf(qs);
        c = c.max(a).max(1.0 / a);
    }
    let monotone_defect = rows.windows(2).map(|p| (p[0].w - p[1].w).max(0.0)).fold(0.0, f64::max);
    let profile = check_profile(&spec.profile_g(), 10_000);
    let inequality_pass = max_margin <= 1e-6 * zeta;
    let sandwich_pass = c.is_finite();
    let monotone_pass = monotone_defect <= 1e-12;
    Ok(BarrierCertificate {
        pass: inequality_pass && sandwich_pass && monotone_pass && profile.pass,
        rows,
        max_margin,
        argmax_margin: arg,
        max_ratio,
        sandwich_c: c,
        monotone_defect,
        inequality_pass,
        sandwich_pass,
        monotone_pass,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_r_closed_form() {
        for (m, s) in [(2.0, 0.3), (2.5, 0.5), (3.0, 0.7), (4.0, 0.3)] {
            let qs = 2.0 * s / (m - 1.0);
            let r1 = base_radius(qs);
            for f in [1.0, 1.7, 4.0, 100.0] {
                let r = f * r1;
                let inv =
                    1.0 - 2f64.powf(qs) * r.powf(-qs) - qs * 2f64.powf(qs + 1.0) * r.powf(-qs - 1.0) * (0.5 * r - 1.0);
                let g = gamma_r(qs, r);
                assert!((1.0 / g - inv).abs() < 1e-13);
                assert!(g > 1.0 && g < 2.0, "{m} {s} {f}: {g}");
            }
        }
    }

    #[test]
    fn profile_landmarks() {
        let g = ProfileG::new(1.0, 64.0).unwrap();
        let [h, dh, _] = g.h(32.0);
        assert!(h.abs() < 1e-15 && dh.abs() < 1e-15);
        assert!((g.h(63.0 - 1e-12)[0] - 1.0).abs() < 1e-9);
        for t in [62.75, 63.0, 70.0] {
            assert_eq!(g.eval(t)[0], 1.0);
        }
        assert_eq!(g.eval(10.0), [0.0, 0.0, 0.0]);
        // g agrees with h away from the blending band
        for t in [40.0, 55.0, 62.0] {
            let (a, b) = (g.eval(t), g.h(t));
            assert!((0..3).all(|i| (a[i] - b[i]).abs() < 1e-15));
        }
        let g2 = g.eval(62.5);
        assert!(g2[0] >= g.h(62.5)[0] && g2[0] <= 1.0);
    }

    #[test]
    fn profile_bounds_hold() {
        for (m, s) in [(2.0, 0.3), (2.0, 0.5), (3.0, 0.3), (3.0, 0.7), (4.0, 0.5)] {
            let qs = 2.0 * s / (m - 1.0);
            let g = ProfileG::new(qs, 2.0 * base_radius(qs)).unwrap();
            let rep = check_profile(&g, 10_000);
            assert!(rep.pass, "{m} {s}: {rep:?}");
            assert!(rep.eta_slope_max < 3.76 && rep.eta_curvature_max < 23.2);
        }
    }

    #[test]
    fn radial_operator_matches_scaled_kernel_identity() {
        // L_K [v(./a)](x) = a^{-2s} L_{K_a} v(x/a)
        let k = Kernel::piecewise_power(0.5, 2.0, 1.0).unwrap();
        let g = ProfileG::new(1.0, 64.0).unwrap();
        let a = 3.0;
        let w = BarrierW { g, beta: 0.0, scale: a };
        let o = quad_opts(1e-14);
        for x in [10.0, 150.0, 185.0, 188.5] {
            // with beta = 0, w = 2 v(x/a) - 1 so L w = 2 L[v(./a)]
            let lhs = apply_analytic(&k, &w, x, o).unwrap();
            let ks = ScaledKernel { base: &k, sigma: a };
            let rhs = 2.0 * a.powf(-1.0) * apply_analytic(&ks, &RadialProfile(g), x / a, o).unwrap();
            assert!((lhs - rhs).abs() < 1e-8 * rhs.abs().max(1e-6), "{x}: {lhs} {rhs}");
        }
    }
}
