//! Declarative run configuration (one JSON document) and its translation
//! into solver objects.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constitutive::{ConstitutiveLaw, LawConstants};
use crate::error::{Error, Result};
use crate::experiments::bump;
use crate::geometry::{build_grid, DiscreteField, GridDomain};
use crate::noise::{CoefficientRule, NoiseModel};
use crate::porous_operator::{default_mu, BoundaryData, OperatorConfig};
use crate::robin_laplace::{eigensolve, RobinCoefficient, RobinOperator, RobinSpectralBasis};
use crate::sde_solver::{Scheme, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    pub law: LawBlock,
    #[serde(default)]
    pub operator: OperatorBlock,
    #[serde(default)]
    pub noise: NoiseBlock,
    #[serde(default)]
    pub boundary: BoundaryBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default)]
    pub time: TimeBlock,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub experiment: ExperimentParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_replicas() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

impl DomainBlock {
    pub fn extents(&self) -> Vec<f64> {
        self.extents.clone().unwrap_or_else(|| vec![1.0; self.d])
    }

    pub fn cells(&self) -> Vec<usize> {
        self.cells.clone().unwrap_or_else(|| vec![64; self.d])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawBlock {
    /// `cubic` (params `[c0]`), `linear` (`[slope]`) or `stefan` (`[threshold]`).
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<LawConstants>,
}

impl LawBlock {
    pub fn law(&self) -> Result<ConstitutiveLaw> {
        let p = |i: usize, default: f64| self.params.get(i).copied().unwrap_or(default);
        if self.params.len() > 1 {
            return Err(Error::Config(format!("law '{}' takes at most one parameter", self.name)));
        }
        let law = match self.name.as_str() {
            "cubic" => ConstitutiveLaw::cubic(p(0, 0.0)),
            "linear" | "identity" => ConstitutiveLaw::linear(p(0, 1.0)),
            "stefan" => ConstitutiveLaw::stefan(p(0, 1.0)),
            other => return Err(Error::Config(format!("unknown law '{other}' (expected cubic, linear or stefan)"))),
        };
        if !self.params.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::Config("law parameters must be finite and non-negative".into()));
        }
        Ok(match self.constants {
            Some(c) => law.with_constants(c),
            None => law,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSetting {
    Value(f64),
    Auto(AutoTag),
}

impl Default for MuSetting {
    fn default() -> Self {
        MuSetting::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBlock {
    #[serde(default)]
    pub k: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub mu: MuSetting,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_lambda() -> f64 {
    0.5
}

fn default_epsilon() -> f64 {
    0.01
}

impl Default for OperatorBlock {
    fn default() -> Self {
        OperatorBlock { k: 0.0, lambda: default_lambda(), mu: MuSetting::default(), epsilon: default_epsilon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// Number of noise modes; 0 switches the noise off.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub rule: CoefficientRule,
    #[serde(default)]
    pub seed: u64,
}

fn default_modes() -> usize {
    16
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock { modes: default_modes(), rule: CoefficientRule::default(), seed: 0 }
    }
}

/// A boundary source: a constant, or values held piecewise constant from
/// each of the given times on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Series { times: Vec<f64>, values: Vec<f64> },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Constant(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBlock {
    #[serde(default)]
    pub s: Profile,
    #[serde(default)]
    pub u: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialBlock {
    Bump {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude·e_j`
    Mode {
        j: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Constant {
        value: f64,
    },
    Zero,
}

fn default_width() -> f64 {
    0.15
}

impl Default for InitialBlock {
    fn default() -> Self {
        InitialBlock::Bump { center: None, width: default_width(), amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Interior snapshots between 0 and T.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
}

fn default_horizon() -> f64 {
    0.25
}
fn default_steps() -> usize {
    100
}
fn default_scheme() -> Scheme {
    Scheme::ImplicitResolvent
}
fn default_snapshots() -> usize {
    8
}

impl Default for TimeBlock {
    fn default() -> Self {
        TimeBlock {
            horizon: default_horizon(),
            steps: default_steps(),
            scheme: default_scheme(),
            snapshots: default_snapshots(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentParams {
    pub eigen_count: usize,
    pub eps_ladder: Vec<f64>,
    pub lambda_ladder: Vec<f64>,
    pub k_values: Vec<f64>,
    /// Declared max/min factor for the integrated drift across the ε ladder.
    pub bound_factor: f64,
    pub slope_min: f64,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<Vec<f64>>,
    pub law_samples: usize,
    pub law_range: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            eigen_count: 16,
            eps_ladder: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
            lambda_ladder: vec![0.4, 0.2, 0.1, 0.05],
            k_values: vec![0.0, 1.0],
            bound_factor: 2.0,
            slope_min: 0.8,
            trials: 1000,
            mu_grid: None,
            law_samples: 10_000,
            law_range: 10.0,
        }
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn law(&self) -> Result<ConstitutiveLaw> {
        self.law.law()
    }

    /// `μ`, with `"auto"` resolved to `max((K²+1)/λ³, K²/(4C₀))`.
    pub fn resolved_mu(&self) -> Result<f64> {
        Ok(match self.operator.mu {
            MuSetting::Value(v) => v,
            MuSetting::Auto(_) => default_mu(self.operator.lambda, self.operator.k, self.law()?.constants.c0),
        })
    }

    /// The configuration with every default and `μ` written out.
    pub fn resolved(&self) -> Result<RunConfig> {
        let mut c = self.clone();
        c.domain.extents = Some(self.domain.extents());
        c.domain.cells = Some(self.domain.cells());
        c.operator.mu = MuSetting::Value(self.resolved_mu()?);
        c.law.constants = Some(self.law()?.constants);
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.domain.d;
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("domain.d must be 1, 2 or 3, got {d}")));
        }
        if self.domain.extents().len() != d || self.domain.cells().len() != d {
            return Err(Error::Config(format!("domain.extents and domain.cells need {d} entries")));
        }
        if self.domain.cells().iter().any(|c| *c < 2) || self.domain.extents().iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("domain needs at least 2 cells and a positive extent per axis".into()));
        }
        if !(self.domain.alpha > 0.0 && self.domain.alpha.is_finite()) {
            return Err(Error::Config("assumption 2: Robin coefficient alpha must be positive and bounded".into()));
        }
        let law = self.law()?;
        let op = &self.operator;
        if op.k != 0.0 && !(law.constants.c0 > 0.0) {
            return Err(Error::Config("assumption 1: C0 must be positive when K != 0".into()));
        }
        if !(op.lambda > 0.0) || !(op.epsilon > 0.0) || !op.k.is_finite() {
            return Err(Error::Config("operator.lambda and operator.epsilon must be positive, K finite".into()));
        }
        let mu = self.resolved_mu()?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("operator.mu must be finite and non-negative, got {mu}")));
        }
        if op.k * op.k > 4.0 * mu * op.lambda * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "quasi-accretivity: need K^2 <= 4 mu lambda for the regularised operator (K = {}, mu = {mu}, lambda = {}); use mu = \"auto\"",
                op.k, op.lambda
            )));
        }
        let nodes: usize = self.domain.cells().iter().map(|c| c + 1).product();
        if self.noise.modes > nodes {
            return Err(Error::Config(format!("at most {nodes} eigenmodes exist on this grid")));
        }
        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) || t.steps == 0 {
            return Err(Error::Config("time.horizon must be positive and time.steps at least 1".into()));
        }
        if t.scheme == Scheme::ExplicitYosida && t.horizon / t.steps as f64 > 0.5 * op.epsilon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "explicit scheme needs dt <= epsilon/2 (dt = {:e}, epsilon = {:e})",
                t.horizon / t.steps as f64,
                op.epsilon
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        for p in [&self.boundary.s, &self.boundary.u] {
            if let Profile::Series { times, values } = p {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Config("boundary series need matching, non-empty times and values".into()));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Arc<GridDomain>> {
        build_grid(&self.domain.extents(), &self.domain.cells())
    }

    pub fn robin(&self) -> Result<Arc<RobinOperator>> {
        let g = self.domain()?;
        let alpha = RobinCoefficient::constant(&g, self.domain.alpha)?;
        Ok(Arc::new(RobinOperator::assemble(g, alpha)?))
    }

    pub fn operator(&self, op: Arc<RobinOperator>) -> Result<OperatorConfig> {
        let o = &self.operator;
        OperatorConfig::new(op, self.law()?, o.k, o.lambda, self.resolved_mu()?, o.epsilon)
    }

    /// Basis large enough for the noise and the initial datum, and for
    /// `at_least` modes as far as the grid allows.
    pub fn basis(&self, op: &RobinOperator, at_least: usize) -> Result<Arc<RobinSpectralBasis>> {
        let mode = match self.initial {
            InitialBlock::Mode { j, .. } => j,
            _ => 0,
        };
        let n = self.noise.modes.max(mode).max(at_least.min(op.domain().node_count())).max(1);
        Ok(Arc::new(eigensolve(op, n)?))
    }

    pub fn initial(&self, basis: &RobinSpectralBasis) -> Result<DiscreteField> {
        let g = basis.domain();
        match &self.initial {
            InitialBlock::Bump { center, width, amplitude } => bump(g, center.as_deref(), *width, *amplitude),
            InitialBlock::Mode { j, amplitude } => {
                if *j == 0 || *j > basis.len() {
                    return Err(Error::Config(format!("initial mode {j} outside the basis")));
                }
                Ok(basis.mode(*j).scaled(*amplitude))
            }
            InitialBlock::Constant { value } => Ok(DiscreteField::constant(g.clone(), *value)),
            InitialBlock::Zero => Ok(DiscreteField::zeros(g.clone())),
        }
    }

    pub fn boundary(&self, domain: &Arc<GridDomain>) -> Result<BoundaryData> {
        let n = domain.node_count();
        let horizon = self.time.horizon;
        let (ts, sv) = profile_series(&self.boundary.s, horizon);
        let (tu, uv) = profile_series(&self.boundary.u, horizon);
        let mut times: Vec<f64> = ts.iter().chain(&tu).copied().collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let at = |t: &[f64], v: &[f64], x: f64| v[t.iter().rposition(|s| *s <= x).unwrap_or(0)];
        let surface = times.iter().map(|&x| vec![at(&ts, &sv, x); n]).collect();
        let under = times.iter().map(|&x| vec![at(&tu, &uv, x); n]).collect();
        BoundaryData::new(domain.clone(), times, surface, under)
    }

    pub fn noise(&self, basis: Arc<RobinSpectralBasis>) -> Result<Option<NoiseModel>> {
        if self.noise.modes == 0 {
            return Ok(None);
        }
        Ok(Some(NoiseModel::new(basis, self.noise.modes, self.noise.rule.clone())?))
    }

    /// Everything a simulation needs, built from scratch.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let op = self.robin()?;
        let basis = self.basis(&op, 0)?;
        self.sim_config_with(op, basis)
    }

    pub fn sim_config_with(&self, op: Arc<RobinOperator>, basis: Arc<RobinSpectralBasis>) -> Result<SimConfig> {
        let domain = op.domain().clone();
        Ok(SimConfig {
            operator: self.operator(op)?,
            noise: self.noise(basis.clone())?,
            boundary: self.boundary(&domain)?,
            initial: self.initial(&basis)?,
            horizon: self.time.horizon,
            steps: self.time.steps,
            scheme: self.time.scheme,
            replicas: self.replicas,
            seed: self.noise.seed,
            checkpoints: self.time.snapshots,
        })
    }
}

/// Breakpoints and values of a profile, extended to cover `[0, horizon]`.
fn profile_series(p: &Profile, horizon: f64) -> (Vec<f64>, Vec<f64>) {
    match p {
        Profile::Constant(v) => (vec![0.0, horizon], vec![*v, *v]),
        Profile::Series { times, values } => {
            let mut t = times.clone();
            let mut v = values.clone();
            if t[0] > 0.0 {
                t.insert(0, 0.0);
                v.insert(0, values[0]);
            }
            if *t.last().unwrap() < horizon {
                t.push(horizon);
                v.push(*v.last().unwrap());
            }
            (t, v)
        }
    }
}
