use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use heteroclinic::analysis::{
    fit_derivative_exponent, fit_tail_exponent, renormalized_energy_curve, truncation_check, FitKind,
};
use heteroclinic::barrier::{certification_grid, certify_barrier, BarrierSpec, DERIVATIVE_CONSTANT};
use heteroclinic::energy_min::{energy_with_table, minimize, MinimizerResult};
use heteroclinic::nonlocal_op::{asymptotic_limit_check, GridFunction, OperatorTable, TestProfile};
use heteroclinic::potentials::{certify_w3, check_convexity, PotentialFamily};
use heteroclinic::{Error, KernelFamily};
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    NotConverged(String),
    Criteria(Vec<String>),
    Hard(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 64,
            Failure::NotConverged(_) => 2,
            Failure::Criteria(_) => 3,
            Failure::Hard(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
            Failure::Criteria(names) => write!(f, "failed: {}", names.join(", ")),
            Failure::Hard(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Grid(_) => Failure::Config(e.to_string()),
            _ => Failure::Hard(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Hard(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Hard(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Pass/fail lines for one invocation, plus notes that do not decide the exit code.
#[derive(Default)]
struct Summary {
    lines: Vec<(String, Option<bool>, String)>,
}

impl Summary {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.lines.push((name.to_string(), Some(pass), detail));
    }

    fn note(&mut self, name: &str, detail: String) {
        self.lines.push((name.to_string(), None, detail));
    }

    fn failed(&self) -> Vec<String> {
        self.lines
            .iter()
            .filter(|l| l.1 == Some(false))
            .map(|l| l.0.clone())
            .collect()
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for (name, pass, detail) in &self.lines {
            let tag = match pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "NOTE",
            };
            let _ = writeln!(out, "{tag} {name}: {detail}");
        }
        out
    }

    /// Print, write `summary.txt`, and turn failed checks into an exit status.
    fn finish(self, out: &Path) -> Outcome {
        let text = self.render();
        print!("{text}");
        fs::write(out.join("summary.txt"), &text)?;
        let failed = self.failed();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Criteria(failed))
        }
    }
}

fn write_rows<T: Serialize>(path: PathBuf, rows: impl IntoIterator<Item = T>) -> Outcome {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LedgerRow {
    lo: f64,
    hi: f64,
    kinetic: f64,
    potential: f64,
    total: f64,
    zero_crossing: f64,
    residual: f64,
    iterations: usize,
    relaxation_sweeps: usize,
    newton_steps: usize,
    cg_iterations: usize,
    converged: bool,
    monotonicity_defect: f64,
}

/// max |u(x) + u(-x)| away from the window edges.
fn odd_defect(u: &GridFunction) -> f64 {
    u.nodes()
        .zip(&u.values)
        .filter(|(x, _)| (x - u.origin).abs() < u.r - 2.0)
        .map(|(x, v)| (v + u.interpolate(2.0 * u.origin - x)).abs())
        .fold(0.0, f64::max)
}

fn is_symmetric(cfg: &ExperimentConfig) -> bool {
    matches!(cfg.potential.family, PotentialFamily::SymmetricPower { .. })
        && cfg
            .potential
            .exponents
            .is_none_or(|e| e.alpha == e.gamma && e.beta == e.delta)
}

/// Solve, write profile and ledger, and record the convergence lines.
fn solve_and_write(cfg: &ExperimentConfig, out: &Path, summary: &mut Summary) -> Result<MinimizerResult, Failure> {
    let res = minimize(
        &cfg.kernel,
        &cfg.potential,
        cfg.window.r,
        cfg.window.h,
        &cfg.solver.options(),
    )?;
    res.profile.write(
        &out.join("profile.csv"),
        &[
            ("kernel", cfg.kernel.descriptor()),
            ("potential", cfg.potential.descriptor()),
        ],
    )?;
    let l = res.ledger;
    write_rows(
        out.join("ledger.csv"),
        [LedgerRow {
            lo: l.lo,
            hi: l.hi,
            kinetic: l.kinetic,
            potential: l.potential,
            total: l.total,
            zero_crossing: res.zero_crossing,
            residual: res.residual,
            iterations: res.iterations,
            relaxation_sweeps: res.relaxation_sweeps,
            newton_steps: res.newton_steps,
            cg_iterations: res.cg_iterations,
            converged: res.converged,
            monotonicity_defect: res.monotonicity_defect,
        }],
    )?;
    summary.check(
        "converged",
        res.converged,
        format!(
            "residual {:.3e} after {} iterations ({} relaxation sweeps, {} Newton steps), energy {:.10}",
            res.residual, res.iterations, res.relaxation_sweeps, res.newton_steps, l.total
        ),
    );
    summary.check(
        "monotone",
        res.monotonicity_defect <= 1e-4,
        format!("max decrease {:.3e}", res.monotonicity_defect),
    );
    if is_symmetric(cfg) {
        let d = odd_defect(&res.profile);
        summary.check("odd", d <= 1e-4, format!("max |u(x) + u(-x)| {d:.3e}"));
    }
    for w in &res.warnings {
        summary.note("solver", w.clone());
    }
    Ok(res)
}

/// Non-convergence takes precedence over criterion failures.
fn finish_after_solve(summary: Summary, res: &MinimizerResult, out: &Path) -> Outcome {
    let status = summary.finish(out);
    if !res.converged {
        return Err(Failure::NotConverged(format!("residual {:.3e}", res.residual)));
    }
    status
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let mut summary = Summary::default();
    let res = solve_and_write(cfg, out, &mut summary)?;
    finish_after_solve(summary, &res, out)
}

pub fn decay(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Outcome {
    let mut summary = Summary::default();
    let res = solve_and_write(cfg, out, &mut summary)?;
    if !res.converged {
        return finish_after_solve(summary, &res, out);
    }
    let window = cfg.analysis.fit_window;
    let mut fits = Vec::new();
    for &side in &cfg.analysis.sides {
        for fit in [
            fit_tail_exponent(&res, side, window)?,
            fit_derivative_exponent(&res, side, window)?,
        ] {
            let name = format!("{:?} {:?} exponent", fit.side, fit.kind).to_lowercase();
            let detail = format!(
                "{:.4} on |x| in [{:.2}, {:.2}] (r2 {:.4}), theory [{:.4}, {:.4}]{}",
                fit.fitted_exponent,
                fit.x_lo,
                fit.x_hi,
                fit.fit_r2,
                fit.theoretical_upper,
                fit.theoretical_lower,
                if fit.power_law { "" } else { ", not a clean power law" }
            );
            if fit.bracket_applies {
                summary.check(&name, fit.within_bracket, detail);
            } else {
                summary.note(&name, detail);
            }
            fits.push(fit);
        }
        if cfg.analysis.truncation_check {
            let t = truncation_check(&res, FitKind::Tail, side, window)?;
            summary.check(
                &format!("{side:?} truncation").to_lowercase(),
                !t.r_too_small,
                format!(
                    "R = {} gives {:.4}, shift {:.2}%",
                    t.radius,
                    t.rerun.fitted_exponent,
                    100.0 * t.relative_shift
                ),
            );
        }
    }
    write_rows(out.join("decay.csv"), &fits)?;

    let cert = certify_w3(&cfg.potential, 4000)?;
    summary.check(
        "well bounds",
        cert.pass,
        format!(
            "c1 {:.4e} c2 {:.4e} c3 {:.4e} c4 {:.4e}",
            cert.c1, cert.c2, cert.c3, cert.c4
        ),
    );
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let xi = cfg.potential.xi;
    let mut failures = 0;
    for _ in 0..cfg.analysis.convexity_pairs {
        let (a, b) = (rng.random_range(0.0..xi), rng.random_range(0.0..xi));
        let (a, b) = (a.min(b), a.max(b));
        let (r, t) = if rng.random_bool(0.5) {
            (-1.0 + a, -1.0 + b)
        } else {
            (1.0 - b, 1.0 - a)
        };
        if !check_convexity(&cfg.potential, &cert, r, t)?.pass {
            failures += 1;
        }
    }
    summary.check(
        "convexity",
        cert.pass && failures == 0,
        format!(
            "{failures} of {} random pairs violate the increment bounds",
            cfg.analysis.convexity_pairs
        ),
    );
    finish_after_solve(summary, &res, out)
}

pub fn energy_growth(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let mut summary = Summary::default();
    let res = solve_and_write(cfg, out, &mut summary)?;
    if !res.converged {
        return finish_after_solve(summary, &res, out);
    }
    let curve = renormalized_energy_curve(&cfg.kernel, &cfg.potential, &res.profile, &cfg.analysis.rhos)?;
    write_rows(out.join("energy.csv"), &curve.rows)?;
    let ratios: Vec<String> = curve.rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    summary.check(
        "energy growth",
        curve.spread < cfg.analysis.max_spread,
        format!(
            "E / psi = [{}], spread {:.2}% (limit {:.0}%), top-half spread {:.2}%",
            ratios.join(", "),
            100.0 * curve.spread,
            100.0 * cfg.analysis.max_spread,
            100.0 * curve.top_half_spread
        ),
    );
    finish_after_solve(summary, &res, out)
}

pub fn barrier(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let b = cfg.barrier;
    let spec = BarrierSpec::new(&cfg.kernel, b.m, b.zeta, b.factor, b.density)?;
    write_rows(out.join("barrier_constants.csv"), [&spec])?;
    let cert = certify_barrier(&cfg.kernel, &spec, &certification_grid(spec.radius))?;
    write_rows(out.join("barrier.csv"), &cert.rows)?;
    let mut summary = Summary::default();
    summary.note(
        "constants",
        format!(
            "c4 {:.6} sigma {:.6e} R {:.6e} r {:.4} beta {:.4e} gamma_r {:.6}",
            spec.c4_hat, spec.sigma, spec.radius, spec.r, spec.beta, spec.gamma_r
        ),
    );
    summary.check(
        "operator inequality",
        cert.inequality_pass,
        format!(
            "max |L w| / bound {:.4}, max margin {:.3e} at x = {:.4e} over {} points",
            cert.max_ratio,
            cert.max_margin,
            cert.argmax_margin,
            cert.rows.len()
        ),
    );
    summary.check("sandwich", cert.sandwich_pass, format!("C = {:.6}", cert.sandwich_c));
    summary.check(
        "monotone",
        cert.monotone_pass,
        format!("max decrease {:.3e}", cert.monotone_defect),
    );
    let p = &cert.profile;
    summary.check(
        "profile bounds",
        p.pass,
        format!(
            "g' ratio {:.4}, g'' ratio {:.4} (limit {DERIVATIVE_CONSTANT}), sandwich [{:.4}, {:.4}] (need [1, 18]), \
             eta slope {:.4}, eta curvature {:.4}",
            p.g1_ratio, p.g2_ratio, p.sandwich_low, p.sandwich_high, p.eta_slope_max, p.eta_curvature_max
        ),
    );
    summary.finish(out)
}

fn random_profile(rng: &mut impl Rng, n: usize, h: f64) -> Result<GridFunction, Failure> {
    let r = 0.5 * h * n as f64;
    let mut g = GridFunction::from_fn(r, h, 0.0, |_| 0.0, -1.0, 1.0)?;
    for v in g.values.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    Ok(g)
}

pub fn kernel_check(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Outcome {
    let k = &cfg.kernel;
    let kc = cfg.kernel_check;
    let rep = k.admissibility(kc.eps, kc.terms)?;
    let mut w = csv::Writer::from_path(out.join("k4.csv"))?;
    w.write_record(["sigma", "sup_ratio", "value"])?;
    for r in &rep.k4.rows {
        w.write_record([r.sigma.to_string(), r.sup_ratio.to_string(), r.value.to_string()])?;
    }
    w.flush()?;

    let mut summary = Summary::default();
    summary.check("K1", rep.k1, "nonnegative and finite on the sample".into());
    summary.check(
        "K2",
        rep.k2,
        format!("lambda {} Lambda {} r0 {}", rep.lambda, rep.big_lambda, rep.r0),
    );
    summary.note("K3", format!("whole-line lower constant {}", rep.k3_lambda));
    let k4 = match rep.k4.divergence_witness {
        Some(s) => format!("sup ratio is infinite at sigma = {s}"),
        None => format!("tail max {:.4e}, tail slope {:.3}", rep.k4.tail_max, rep.k4.tail_slope),
    };
    summary.check("K4", rep.k4.pass, k4);
    if !matches!(k.family, KernelFamily::Modulated { .. }) {
        let mut worst = 0.0f64;
        for sigma in [0.5, 0.75, 0.9, 0.99, 0.999] {
            let a = k.sup_ratio(sigma)?;
            let b = k.sup_ratio_sampled(sigma)?;
            if a.is_finite() || b.is_finite() {
                worst = worst.max((a - b).abs() / a);
            }
        }
        summary.check(
            "sup ratio",
            worst <= 1e-8,
            format!("closed form vs sampled, max relative gap {worst:.2e}"),
        );
    }

    let (n, h) = (120, 0.1);
    let table = OperatorTable::new(k, h, n)?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..kc.pairs {
        let u = random_profile(&mut rng, n, h)?;
        let v = random_profile(&mut rng, n, h)?;
        let (mut lo, mut hi) = (u.clone(), u.clone());
        for i in 0..u.values.len() {
            lo.values[i] = u.values[i].min(v.values[i]);
            hi.values[i] = u.values[i].max(v.values[i]);
        }
        let i0 = rng.random_range(0..n - 1);
        let i1 = rng.random_range(i0 + 1..=n);
        let (a, b) = (u.node(i0), u.node(i1));
        let e = |g: &GridFunction| energy_with_table(&table, &cfg.potential, g, a, b).map(|l| l.total);
        let rhs = e(&u)? + e(&v)?;
        let excess = (e(&lo)? + e(&hi)? - rhs) / rhs.max(1.0);
        worst = worst.max(excess);
        if excess > 1e-10 {
            violations += 1;
        }
    }
    summary.check(
        "min/max inequality",
        violations == 0,
        format!("{violations} of {} random pairs, worst excess {worst:.2e}", kc.pairs),
    );
    summary.finish(out)
}

#[derive(Serialize)]
struct AsymptoticRow {
    x: f64,
    value: f64,
    scaled: f64,
    lower: f64,
    upper: f64,
}

pub fn asymptotics(cfg: &ExperimentConfig, out: &Path) -> Outcome {
    let a = &cfg.asymptotics;
    let phi = TestProfile::new(a.sigma, a.tau, a.kappa, a.bridge_integral)?;
    let rep = asymptotic_limit_check(&cfg.kernel, &phi, &a.points, a.rel_tol)?;
    write_rows(
        out.join("asymptotics.csv"),
        rep.rows.iter().map(|r| AsymptoticRow {
            x: r.x,
            value: r.value,
            scaled: r.scaled,
            lower: rep.lower,
            upper: rep.upper,
        }),
    )?;
    let mut summary = Summary::default();
    let settled = match rep.settled_from {
        Some(i) => format!("inside from |x| = {}", rep.rows[i].x.abs()),
        None => "outermost point outside the band".into(),
    };
    summary.check(
        "band",
        rep.pass,
        format!(
            "|x|^(1+2s) L phi in [{:.6}, {:.6}] widened by {}; {settled}",
            rep.lower, rep.upper, a.rel_tol
        ),
    );
    summary.note("monotone approach", rep.monotone.to_string());
    if rep.lower == rep.upper {
        let far = rep.rows.last().expect("at least one point");
        let dev = (far.scaled - rep.target).abs() / rep.target;
        summary.check(
            "pinch",
            dev <= a.rel_tol,
            format!(
                "{:.6} vs {:.6} at |x| = {}, relative gap {dev:.3e}",
                far.scaled,
                rep.target,
                far.x.abs()
            ),
        );
    }
    summary.finish(out)
}
