use crate::error::{Error, Result};
use crate::kernels::RadialKernel;
use crate::quad::{self, QuadOptions};

/// A profile given in closed form on the whole line.
pub trait AnalyticProfile: Sync {
    fn value(&self, x: f64) -> f64;
    /// Second derivative; at a kink, the mean of the one-sided values.
    fn second_derivative(&self, x: f64) -> f64;
    /// Points where the profile is not smooth.
    fn breakpoints(&self) -> Vec<f64>;
    /// Length over which the profile changes appreciably near x.
    fn local_scale(&self, x: f64) -> f64;
    /// `(radius, left, right)` if the profile is constant outside [-radius, radius].
    fn constant_outside(&self) -> Option<(f64, f64, f64)>;
}

/// L_K f(x) by adaptive quadrature in the increment variable z, with the
/// second order Taylor term used on [0, z0].
pub fn apply_analytic<K, P>(k: &K, f: &P, x: f64, opts: QuadOptions) -> Result<f64>
where
    K: RadialKernel + ?Sized,
    P: AnalyticProfile + ?Sized,
{
    if !x.is_finite() {
        return Err(Error::Domain(format!("x = {x}")));
    }
    let fx = f.value(x);
    let mut scale = f.local_scale(x);
    let mut zpts = Vec::new();
    for b in f.breakpoints() {
        for z in [b - x, x - b] {
            if z > 0.0 {
                zpts.push(z);
                scale = scale.min(z);
            }
        }
    }
    let z0 = 1e-3 * scale;
    // the near-origin moment is exact across kernel breakpoints, so they
    // only split the integration range
    zpts.extend(k.breakpoints());
    let near = f.second_derivative(x) * k.second_moment_from_zero(z0);

    let delta = |z: f64| f.value(x + z) + f.value(x - z) - 2.0 * fx;
    let integrand = |z: f64| delta(z) * k.value(z);

    let (zmax, far) = match f.constant_outside() {
        Some((radius, left, right)) => {
            let zmax = radius + x.abs();
            (zmax, Some((left + right - 2.0 * fx) * k.tail_mass(zmax)))
        }
        None => (4.0 * (zpts.iter().copied().fold(0.0, f64::max) + x.abs() + 1.0), None),
    };
    let mut pts = vec![z0];
    pts.extend(zpts.into_iter().filter(|&z| z > z0 && z < zmax));
    // geometric points so the adaptive rule does not have to discover the
    // scale of the integrand near z0
    let mut g = 2.0 * z0;
    while g < zmax.min(64.0 * scale) {
        pts.push(g);
        g *= 4.0;
    }
    pts.push(zmax);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let body = quad::integrate_points(integrand, &pts, opts);
    if !body.converged && body.error > 1e-6 * body.value.abs().max(1e-300) {
        return Err(Error::Quadrature(format!(
            "L_K at x={x}: estimate {} with error {}",
            body.value, body.error
        )));
    }
    let far = match far {
        Some(v) => v,
        None => quad::integrate_to_infinity(integrand, zmax, opts).value,
    };
    Ok(near + body.value + far)
}
