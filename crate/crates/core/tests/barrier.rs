use heteroclinic::barrier::{certification_grid, certify_barrier, check_profile, estimate_c4, BarrierSpec};
use heteroclinic::kernels::ScaledKernel;
use heteroclinic::Kernel;

#[test]
fn operator_constant_is_stable_under_probe_refinement() {
    for (m, s) in [(2.0, 0.5), (3.0, 0.3)] {
        let k = Kernel::fractional_laplacian(s).unwrap();
        let spec = BarrierSpec::new(&k, m, 0.1, 2.0, 1.0).unwrap();
        let fine = estimate_c4(&k, m, spec.r, 2.0).unwrap();
        let rel = (fine.c4_hat - spec.c4_hat).abs() / spec.c4_hat;
        assert!(rel < 0.1, "m={m} s={s}: {} vs {}", fine.c4_hat, spec.c4_hat);
    }
}

#[test]
fn pure_power_constant_ignores_rescaling() {
    let k = Kernel::fractional_laplacian(0.4).unwrap();
    let r = 2.0 * 2f64.powf(5.0 / (2.0 * 0.4));
    let a = estimate_c4(&k, 2.0, r, 1.0).unwrap();
    let b = estimate_c4(&ScaledKernel { base: &k, sigma: 7.0 }, 2.0, r, 1.0).unwrap();
    assert!(
        (a.c4_hat - b.c4_hat).abs() <= 0.05 * a.c4_hat,
        "{} {}",
        a.c4_hat,
        b.c4_hat
    );
}

#[test]
fn piecewise_kernel_barrier_certifies() {
    let k = Kernel::piecewise_power(0.5, 2.0, 1.0).unwrap();
    let spec = BarrierSpec::new(&k, 2.0, 0.1, 2.0, 1.0).unwrap();
    assert!(spec.c4_iterations >= 1);
    let sigma = (spec.c4_hat / spec.zeta).powf(0.5 / spec.s);
    assert!((sigma - spec.sigma).abs() <= 1e-12 * sigma);
    let cert = certify_barrier(&k, &spec, &certification_grid(spec.radius)).unwrap();
    assert!(cert.pass, "ratio {} margin {}", cert.max_ratio, cert.max_margin);
    assert!(cert.sandwich_c.is_finite() && cert.sandwich_c > 0.0);
}

#[test]
fn profile_checks_hold_and_radius_grows_with_m() {
    let k = Kernel::fractional_laplacian(0.5).unwrap();
    let a = BarrierSpec::new(&k, 2.0, 0.1, 2.0, 1.0).unwrap();
    let b = BarrierSpec::new(&k, 3.0, 0.1, 2.0, 1.0).unwrap();
    for spec in [&a, &b] {
        assert!(spec.gamma_r > 1.0 && spec.gamma_r < 2.0);
        let rep = check_profile(&spec.profile_g(), 20000);
        assert!(rep.pass, "{rep:?}");
    }
    assert!(b.radius > a.radius);
    assert!(b.radius.is_finite());
}

#[test]
fn rejects_out_of_range_inputs() {
    let k = Kernel::fractional_laplacian(0.5).unwrap();
    assert!(BarrierSpec::new(&k, 1.0, 0.1, 2.0, 1.0).is_err());
    assert!(BarrierSpec::new(&k, 2.0, 0.0, 2.0, 1.0).is_err());
    assert!(BarrierSpec::new(&k, 2.0, 0.1, 0.5, 1.0).is_err());
}
