use std::path::{Path, PathBuf};

use heteroclinic::analysis::FitWindow;
use heteroclinic::energy_min::{Initialization, SolverOptions};
use heteroclinic::nonlocal_op::node_count;
use heteroclinic::potentials::Side;
use heteroclinic::{Kernel, Potential};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub kernel: Kernel,
    pub potential: Potential,
    pub window: Window,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub kernel_check: KernelCheckConfig,
    #[serde(default)]
    pub asymptotics: AsymptoticsConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    /// Half-width R of the computational window.
    pub r: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Width of the initial ramp clamp(x / width, -1, 1).
    pub init_width: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter,
            damping: d.damping,
            init_width: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            init: Initialization::Ramp { width: self.init_width },
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub fit_window: FitWindow,
    pub sides: Vec<Side>,
    /// Also solve on a window 1.5 times wider and compare tail exponents.
    pub truncation_check: bool,
    pub rhos: Vec<f64>,
    /// energy-growth passes when the spread of E / psi is below this.
    pub max_spread: f64,
    /// Random (r, t) pairs per well for the convexity check in `decay`.
    pub convexity_pairs: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            fit_window: FitWindow::default(),
            sides: vec![Side::Right],
            truncation_check: false,
            rhos: vec![10.0, 20.0, 40.0],
            max_spread: 0.25,
            convexity_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub m: f64,
    pub zeta: f64,
    /// Barrier radius as a multiple of R0.
    pub factor: f64,
    /// Probe density for the operator constant.
    pub density: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig {
            m: 2.0,
            zeta: 0.1,
            factor: 2.0,
            density: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelCheckConfig {
    pub eps: f64,
    pub terms: usize,
    /// Random profile pairs for the min/max energy inequality.
    pub pairs: usize,
}

impl Default for KernelCheckConfig {
    fn default() -> Self {
        KernelCheckConfig {
            eps: 0.5,
            terms: 20,
            pairs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    pub sigma: f64,
    pub tau: f64,
    pub kappa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bridge_integral: Option<f64>,
    pub points: Vec<f64>,
    pub rel_tol: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        AsymptoticsConfig {
            sigma: 2.0,
            tau: 2.0,
            kappa: 1.0,
            bridge_integral: None,
            points: vec![-1e3, -1e2, -1e1, 1e1, 1e2, 1e3],
            rel_tol: 0.02,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: default_out(),
            kernel: Kernel::fractional_laplacian(0.5).unwrap(),
            potential: Potential::symmetric_power(2.0).unwrap(),
            window: Window { r: 50.0, h: 0.1 },
            solver: SolverConfig::default(),
            analysis: AnalysisConfig::default(),
            barrier: BarrierConfig::default(),
            kernel_check: KernelCheckConfig::default(),
            asymptotics: AsymptoticsConfig::default(),
        }
    }
}

pub const TEMPLATE: &str = r#"# Experiment configuration. Every table except [kernel], [potential] and
# [window] is optional; the values shown are the defaults.

# Output directory, overridden by --out.
out = "out"

[kernel]
# fractional_laplacian | piecewise_power | modulated | truncated_indicator
family = "fractional_laplacian"
s = 0.5
# piecewise_power:     theta = 2.0, rho = 1.0
# modulated:           tau = 1.0, zeta = 1.0, scale = 0.5, theta = 2.0, rho = 1.0
# truncated_indicator: r0 = 1.0

[potential]
# symmetric_power (p >= 2) | asymmetric_product (alpha, gamma, amplitude)
family = "symmetric_power"
p = 2.0
# width of the near-well regions
xi = 0.25
# Declared well exponents, defaulting to the family's own:
# exponents = { alpha = 2.0, beta = 2.0, gamma = 2.0, delta = 2.0 }

[window]
# half-width R and grid spacing h; R / h must be an integer
r = 50.0
h = 0.1

[solver]
# max |L u - W'(u)| at convergence
tol = 1e-8
max_iter = 50000
damping = 0.8
init_width = 1.0

[analysis]
# fit window as fractions of R, 0 < lo < hi <= 0.9
fit_window = { lo = 0.4, hi = 0.85 }
sides = ["right"]
truncation_check = false
# radii for energy-growth, each at most 0.9 R
rhos = [10.0, 20.0, 40.0]
max_spread = 0.25
convexity_pairs = 1000

[barrier]
m = 2.0
zeta = 0.1
factor = 2.0
density = 1.0

[kernel_check]
eps = 0.5
terms = 20
pairs = 100

[asymptotics]
sigma = 2.0
tau = 2.0
kappa = 1.0
# bridge_integral defaults to kappa (kappa^-sigma + kappa^-tau)
points = [-1000.0, -100.0, -10.0, 10.0, 100.0, 1000.0]
rel_tol = 0.02
"#;

pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.kernel.validate().map_err(|e| e.to_string())?;
        self.potential.validate().map_err(|e| e.to_string())?;
        let Window { r, h } = self.window;
        let cells = 2.0 * r / h;
        if !(r > 0.0 && h > 0.0 && r.is_finite()) || (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(format!("window: h = {h} does not divide 2R = {}", 2.0 * r));
        }
        node_count(r, h).map_err(|e| format!("window: {e}"))?;
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || !(s.damping > 0.0 && s.damping <= 1.0) || !(s.init_width > 0.0) {
            return Err("solver: need tol > 0, max_iter > 0, damping in (0, 1], init_width > 0".into());
        }
        let a = &self.analysis;
        a.fit_window.validate().map_err(|e| format!("analysis: {e}"))?;
        if a.sides.is_empty() {
            return Err("analysis: sides is empty".into());
        }
        if a.rhos.is_empty() || a.rhos.iter().any(|&rho| !(rho > 1.0 && rho <= 0.9 * r)) {
            return Err(format!("analysis: every rho must lie in (1, 0.9 R] = (1, {}]", 0.9 * r));
        }
        if !(a.max_spread > 0.0) {
            return Err("analysis: max_spread must be positive".into());
        }
        let b = &self.barrier;
        if !(b.m >= 2.0 && b.zeta > 0.0 && b.factor >= 1.0 && b.density > 0.0) {
            return Err("barrier: need m >= 2, zeta > 0, factor >= 1, density > 0".into());
        }
        let k = &self.kernel_check;
        if !(k.eps > 0.0 && k.eps < 1.0) || k.terms < 4 {
            return Err("kernel_check: need eps in (0, 1) and terms >= 4".into());
        }
        let q = &self.asymptotics;
        if !(q.sigma > 1.0 && q.tau > 1.0 && q.kappa > 0.0 && q.rel_tol > 0.0) || q.points.is_empty() {
            return Err("asymptotics: need sigma, tau > 1, kappa > 0, rel_tol > 0 and some points".into());
        }
        if q.points.iter().any(|x| x.abs() <= q.kappa) {
            return Err("asymptotics: points must lie outside [-kappa, kappa]".into());
        }
        Ok(())
    }
}
