//! The porous-media operator and its regularisations.
//!
//! In weak form `A(X)(φ) = ∫∇Ψ(X)·∇φ - K∫X ∂φ/∂x_d + ∫_{Γu} αΨ(X)φ`.
//! Discretely this is the load vector `a(x) = S Ψ(x) - K Bᵀ x` with the
//! stiffness `S` and transport `B` of [`RobinOperator`]. Replacing `Ψ` by
//! `Ψ̃_λ` gives `A_λ`; `A_λ^μ = μI + A_λ`, and its resolvent
//! `J^{μ,ε} = (I + εA_λ^μ)⁻¹` and Yosida approximation
//! `A^{μ,ε} = (I - J^{μ,ε})/ε` complete the double regularisation.
//!
//! The boundary sources enter through `F_u(φ) = -∫_{Γu} uφ` and
//! `F_s(φ) = -∫_{Γs} sφ`; with these signs the state evolves by
//! `dX = (-A(X) + F_u + F_s) dt + Σ(X) dW`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedCholesky, BandedLu};
use crate::constitutive::ConstitutiveLaw;
use crate::error::{Error, Result};
use crate::geometry::{weighted_dot, BoundaryTag, DiscreteField, GridDomain};
use crate::robin_laplace::{RobinOperator, RobinSpectralBasis};

/// Which nonlinearity an operator evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// The law `Ψ` itself (operator `A`).
    Exact,
    /// `Ψ̃_λ` (operator `A_λ`).
    Regularized,
}

/// `(K² + 1)/λ³`, the shift used for the Lipschitz estimate of the resolvent.
pub fn mu_lipschitz_min(lambda: f64, k: f64) -> f64 {
    (k * k + 1.0) / lambda.powi(3)
}

/// `K²/(4C₀)`, above which `μI + A` is accretive in V′ (Young's inequality).
pub fn mu_accretive_min(k: f64, c0: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * k / (4.0 * c0 + f64::MIN_POSITIVE)
    }
}

pub fn default_mu(lambda: f64, k: f64, c0: f64) -> f64 {
    mu_lipschitz_min(lambda, k).max(mu_accretive_min(k, c0))
}

/// `λ + εμλ - εK² - ε/(2λ²)`.
pub fn lipschitz_bracket(lambda: f64, epsilon: f64, mu: f64, k: f64) -> f64 {
    lambda + epsilon * mu * lambda - epsilon * k * k - epsilon / (2.0 * lambda * lambda)
}

/// `L = (2·bracket)^{-1/2}`; `None` when the bracket is not positive.
pub fn lipschitz_constant(lambda: f64, epsilon: f64, mu: f64, k: f64) -> Option<f64> {
    let b = lipschitz_bracket(lambda, epsilon, mu, k);
    (b > 0.0).then(|| 1.0 / (2.0 * b).sqrt())
}

#[derive(Debug, Clone)]
pub struct OperatorConfig {
    pub k: f64,
    pub law: ConstitutiveLaw,
    pub lambda: f64,
    pub mu: f64,
    pub epsilon: f64,
    op: Arc<RobinOperator>,
    // transport transpose laid out on the stiffness pattern, for Jacobians
    bt_on_s: Arc<Vec<f64>>,
}

impl OperatorConfig {
    pub fn new(op: Arc<RobinOperator>, law: ConstitutiveLaw, k: f64, lambda: f64, mu: f64, epsilon: f64) -> Result<Self> {
        for (name, v) in [("K", k), ("lambda", lambda), ("mu", mu), ("epsilon", epsilon)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if epsilon <= 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if mu < 0.0 {
            return Err(Error::InvalidParameter(format!("mu must be non-negative, got {mu}")));
        }
        if k != 0.0 && !(law.constants.c0 > 0.0) {
            return Err(Error::Assumption("assumption 1: C0 must be positive when K != 0".into()));
        }
        let bt = op.transport().transpose();
        let bt_on_s = Arc::new(op.stiffness().values_on_pattern_of(&bt));
        Ok(OperatorConfig { k, law, lambda, mu, epsilon, op, bt_on_s })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(OperatorConfig { epsilon, ..self.clone() })
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.op.clone(), self.law, self.k, self.lambda, mu, self.epsilon)
    }

    pub fn with_k(&self, k: f64) -> Result<Self> {
        Self::new(self.op.clone(), self.law, k, self.lambda, self.mu, self.epsilon)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.op.clone(), self.law, self.k, lambda, self.mu, self.epsilon)
    }

    pub fn robin(&self) -> &Arc<RobinOperator> {
        &self.op
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        self.op.domain()
    }

    pub fn lipschitz_constant(&self) -> Option<f64> {
        lipschitz_constant(self.lambda, self.epsilon, self.mu, self.k)
    }

    /// `A_λ^μ` is accretive in V′ iff (sufficiently) `K² ≤ 4μλ`, since `Ψ̃_λ`
    /// is strongly monotone with constant `λ`.
    pub fn regularized_is_accretive(&self) -> bool {
        self.k * self.k <= 4.0 * self.mu * self.lambda * (1.0 + 1e-12)
    }

    fn check_field(&self, x: &DiscreteField) -> Result<()> {
        if x.len() != self.op.domain().node_count() {
            return Err(Error::DimensionMismatch { expected: self.op.domain().node_count(), got: x.len() });
        }
        Ok(())
    }

    /// Nodal values of `Ψ(x)` or `Ψ̃_λ(x)`.
    pub fn psi_field(&self, x: &DiscreteField, nl: Nonlinearity) -> Result<Vec<f64>> {
        self.check_field(x)?;
        match nl {
            Nonlinearity::Exact => Ok(x.values().iter().map(|&v| self.law.psi(v)).collect()),
            Nonlinearity::Regularized => x.values().iter().map(|&v| self.law.tilde_psi(self.lambda, v)).collect(),
        }
    }

    /// Load vector of `A(x)` or `A_λ(x)`: `S Ψ(x) - K Bᵀ x`.
    pub fn operator_load(&self, x: &DiscreteField, nl: Nonlinearity) -> Result<Vec<f64>> {
        let psi = self.psi_field(x, nl)?;
        let mut load = self.op.stiffness().matvec(&psi);
        if self.k != 0.0 {
            let bt = self.op.transport().matvec_transpose(x.values());
            load.iter_mut().zip(bt).for_each(|(l, b)| *l -= self.k * b);
        }
        Ok(load)
    }

    /// Load vector of `A_λ^μ(x) = μx + A_λ(x)`.
    pub fn shifted_load(&self, x: &DiscreteField) -> Result<Vec<f64>> {
        let mut load = self.operator_load(x, Nonlinearity::Regularized)?;
        load.iter_mut().zip(self.op.mass().iter().zip(x.values())).for_each(|(l, (w, v))| *l += self.mu * w * v);
        Ok(load)
    }

    /// V′ pairing of a load vector with a field: `loadᵀ S⁻¹ M ζ`.
    pub fn pair_load(&self, load: &[f64], zeta: &DiscreteField) -> f64 {
        let phi = self.op.solve_load(&self.op.mass_times(zeta.values()));
        load.iter().zip(&phi).map(|(a, b)| a * b).sum()
    }

    /// The field representing a load vector in L²: `M⁻¹ load`.
    pub fn lift(&self, load: &[f64]) -> DiscreteField {
        let v = load.iter().zip(self.op.mass()).map(|(l, w)| l / w).collect();
        DiscreteField::from_raw(self.op.domain().clone(), v)
    }
}

/// `⟨A(X), e_j⟩_{V′} = ∫Ψ(X)e_j - K∫X ∂φ_j/∂x_d` with `φ_j = e_j/λ_j`.
pub fn apply_a_weak(cfg: &OperatorConfig, basis: &RobinSpectralBasis, x: &DiscreteField, j: usize, nl: Nonlinearity) -> Result<f64> {
    if j == 0 || j > basis.len() {
        return Err(Error::InvalidParameter(format!("mode index {j} outside 1..={}", basis.len())));
    }
    let psi = cfg.psi_field(x, nl)?;
    let e = basis.mode(j);
    let mut v = weighted_dot(cfg.op.mass(), &psi, e.values());
    if cfg.k != 0.0 {
        let phi = e.scaled(1.0 / basis.eigenvalue(j));
        v -= cfg.k * cfg.op.transport_form(x, &phi);
    }
    Ok(v)
}

/// Boundary sources `s` on the surface and `u` underground, as nodal
/// slices that are piecewise constant in time.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    domain: Arc<GridDomain>,
    times: Vec<f64>,
    surface: Vec<Vec<f64>>,
    underground: Vec<Vec<f64>>,
}

impl BoundaryData {
    pub fn new(domain: Arc<GridDomain>, times: Vec<f64>, surface: Vec<Vec<f64>>, underground: Vec<Vec<f64>>) -> Result<Self> {
        let n = domain.node_count();
        if times.is_empty() || times.len() != surface.len() || times.len() != underground.len() {
            return Err(Error::InvalidParameter("boundary data needs one surface and underground slice per time".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("boundary data times must be finite and increasing".into()));
        }
        for slice in surface.iter().chain(&underground) {
            if slice.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: slice.len() });
            }
            if slice.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("boundary data must be finite".into()));
            }
        }
        Ok(BoundaryData { domain, times, surface, underground })
    }

    /// Constant sources on `[0, horizon]`.
    pub fn constant(domain: Arc<GridDomain>, s: f64, u: f64, horizon: f64) -> Result<Self> {
        let n = domain.node_count();
        let times = if horizon > 0.0 { vec![0.0, horizon] } else { vec![0.0] };
        let k = times.len();
        Self::new(domain, times, vec![vec![s; n]; k], vec![vec![u; n]; k])
    }

    pub fn zero(domain: Arc<GridDomain>, horizon: f64) -> Result<Self> {
        Self::constant(domain, 0.0, 0.0, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn slice_index(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.times[0], *self.times.last().unwrap());
        let slack = 1e-12 * end.abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
        Ok(self.times.iter().rposition(|&s| s <= t + slack).unwrap_or(0))
    }

    /// Load vector `f` with `F_u(t)(φ) + F_s(t)(φ) = fᵀφ`.
    pub fn forcing_load(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.slice_index(t)?;
        let bs = self.domain.boundary_weights(BoundaryTag::Surface);
        let bu = self.domain.boundary_weights(BoundaryTag::Underground);
        Ok((0..self.domain.node_count())
            .map(|i| -(bs[i] * self.surface[k][i] + bu[i] * self.underground[k][i]))
            .collect())
    }

    /// `F_u(t)(φ) + F_s(t)(φ)` for a test field.
    pub fn forcing_pairing(&self, t: f64, test: &DiscreteField) -> Result<f64> {
        let f = self.forcing_load(t)?;
        Ok(f.iter().zip(test.values()).map(|(a, b)| a * b).sum())
    }

    /// The L² representative `M⁻¹f` of the forcing.
    pub fn forcing_lift(&self, t: f64) -> Result<DiscreteField> {
        let f = self.forcing_load(t)?;
        let w = self.domain.volume_weights();
        Ok(DiscreteField::from_raw(self.domain.clone(), f.iter().zip(w).map(|(a, b)| a / b).collect()))
    }

    pub fn is_zero(&self) -> bool {
        self.surface.iter().chain(&self.underground).all(|s| s.iter().all(|v| *v == 0.0))
    }
}

/// `⟨F_u(t) + F_s(t), e_j⟩`.
pub fn assemble_forcing(data: &BoundaryData, t: f64, basis: &RobinSpectralBasis, j: usize) -> Result<f64> {
    if j == 0 || j > basis.len() {
        return Err(Error::InvalidParameter(format!("mode index {j} outside 1..={}", basis.len())));
    }
    data.forcing_pairing(t, basis.mode(j))
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    pub field: DiscreteField,
    pub iterations: usize,
    /// Final V′ residual relative to `|g|_{V′}`.
    pub residual: f64,
    pub used_fallback: bool,
}

const NEWTON_MAX_ITER: usize = 60;
const PICARD_MAX_ITER: usize = 5000;
const TARGET_TOL: f64 = 1e-11;
const ACCEPT_TOL: f64 = 1e-9;

struct ResolventProblem<'a> {
    cfg: &'a OperatorConfig,
    g_load: Vec<f64>,
    shift: f64,
}

impl ResolventProblem<'_> {
    /// `x(y)` and `dx/dy` nodewise.
    fn invert(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut x = Vec::with_capacity(y.len());
        let mut dx = Vec::with_capacity(y.len());
        for &z in y {
            let (a, b) = self.cfg.law.tilde_psi_inverse(self.cfg.lambda, z)?;
            x.push(a);
            dx.push(b);
        }
        Ok((x, dx))
    }

    /// `R(y) = (1+εμ) M x - εK Bᵀx + εS y - M g`.
    fn residual(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        let cfg = self.cfg;
        let eps = cfg.epsilon;
        let mut r = cfg.op.stiffness().matvec(y);
        let bt = if cfg.k != 0.0 { cfg.op.transport().matvec_transpose(x) } else { vec![0.0; x.len()] };
        let w = cfg.op.mass();
        for i in 0..r.len() {
            r[i] = eps * r[i] + self.shift * w[i] * x[i] - eps * cfg.k * bt[i] - self.g_load[i];
        }
        r
    }

    fn jacobian_lu(&self, dx: &[f64]) -> Result<BandedLu> {
        let cfg = self.cfg;
        let s = cfg.op.stiffness();
        let w = cfg.op.mass();
        let eps = cfg.epsilon;
        let mut vals = Vec::with_capacity(s.vals().len());
        for i in 0..s.dim() {
            for k in s.row_ptr()[i]..s.row_ptr()[i + 1] {
                let c = s.cols()[k];
                let mut v = eps * s.vals()[k] - eps * cfg.k * cfg.bt_on_s[k] * dx[c];
                if c == i {
                    v += self.shift * w[i] * dx[i];
                }
                vals.push(v);
            }
        }
        let bw = cfg.op.domain().bandwidth();
        BandedLu::factor_csr(s.row_ptr(), s.cols(), &vals, s.dim(), bw, bw)
    }
}

/// Solves `x + εA_λ^μ(x) = g`, i.e. returns `J^{μ,ε}(g)`.
pub fn resolve_a(cfg: &OperatorConfig, g: &DiscreteField) -> Result<DiscreteField> {
    resolve_a_detailed(cfg, g).map(|s| s.field)
}

/// Damped Newton in `y = Ψ̃_λ(x)` with Armijo backtracking on the V′
/// residual, falling back to preconditioned Picard iteration.
pub fn resolve_a_detailed(cfg: &OperatorConfig, g: &DiscreteField) -> Result<ResolventSolution> {
    cfg.check_field(g)?;
    if !cfg.regularized_is_accretive() {
        return Err(Error::Config(format!(
            "A_lambda^mu is not accretive in V': need K^2 <= 4 mu lambda (K = {}, mu = {}, lambda = {})",
            cfg.k, cfg.mu, cfg.lambda
        )));
    }
    let domain = cfg.op.domain().clone();
    let g_load = cfg.op.mass_times(g.values());
    let g_norm = cfg.op.load_dual_norm(&g_load);
    if g_norm == 0.0 {
        return Ok(ResolventSolution { field: DiscreteField::zeros(domain), iterations: 0, residual: 0.0, used_fallback: false });
    }
    let prob = ResolventProblem { cfg, g_load, shift: 1.0 + cfg.epsilon * cfg.mu };

    let mut y: Vec<f64> = g.values().iter().map(|&v| cfg.law.tilde_psi(cfg.lambda, v)).collect::<Result<_>>()?;
    let (mut x, mut dx) = prob.invert(&y)?;
    let mut r = prob.residual(&y, &x);
    let mut rnorm = cfg.op.load_dual_norm(&r) / g_norm;
    let mut trace = vec![rnorm];

    let mut iterations = 0;
    let mut stalled = false;
    while rnorm > TARGET_TOL && iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let lu = match prob.jacobian_lu(&dx) {
            Ok(lu) => lu,
            Err(_) => {
                stalled = true;
                break;
            }
        };
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut step);

        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1.0 / 1024.0 {
            let y_try: Vec<f64> = y.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let (x_try, dx_try) = prob.invert(&y_try)?;
            let r_try = prob.residual(&y_try, &x_try);
            let n_try = cfg.op.load_dual_norm(&r_try) / g_norm;
            if n_try <= (1.0 - 1e-4 * t) * rnorm {
                y = y_try;
                x = x_try;
                dx = dx_try;
                r = r_try;
                rnorm = n_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(rnorm);
        if !accepted {
            stalled = true;
            break;
        }
    }

    let mut used_fallback = false;
    if rnorm > ACCEPT_TOL && stalled {
        used_fallback = true;
        // Picard with the SPD preconditioner εS + (1+εμ)M/λ, which dominates
        // the Jacobian since dx/dy ≤ 1/λ.
        let s = cfg.op.stiffness();
        let w = cfg.op.mass();
        let scale = prob.shift / cfg.lambda;
        let p = BandedCholesky::factor_with(s.dim(), domain.bandwidth(), |i, j| {
            cfg.epsilon * s.get(i, j) + if i == j { scale * w[i] } else { 0.0 }
        })?;
        for _ in 0..PICARD_MAX_ITER {
            iterations += 1;
            let corr = p.solve(&r);
            y.iter_mut().zip(&corr).for_each(|(a, b)| *a -= b);
            let (x_new, _) = prob.invert(&y)?;
            x = x_new;
            r = prob.residual(&y, &x);
            rnorm = cfg.op.load_dual_norm(&r) / g_norm;
            if rnorm <= TARGET_TOL {
                break;
            }
        }
        trace.push(rnorm);
    }

    if !(rnorm <= ACCEPT_TOL) {
        return Err(Error::NonlinearDivergence { iterations, trace });
    }
    Ok(ResolventSolution { field: DiscreteField::from_raw(domain, x), iterations, residual: rnorm, used_fallback })
}

/// `A^{μ,ε}(X) = (X - J^{μ,ε}(X))/ε`.
pub fn yosida_a(cfg: &OperatorConfig, x: &DiscreteField) -> Result<DiscreteField> {
    let j = resolve_a(cfg, x)?;
    Ok(x.sub(&j).scaled(1.0 / cfg.epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub trial: usize,
    pub lhs: f64,
    pub bound: f64,
    pub margin: f64,
    /// Secondary measurement (the V′ ratio for the Lipschitz probe).
    pub aux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: String,
    pub rows: Vec<ProbeRow>,
    pub min_lhs: f64,
    pub max_lhs: f64,
    pub min_margin: f64,
    /// Fraction of trials with `lhs ≥ -1e-12`.
    pub fraction_nonnegative: f64,
    pub max_aux: Option<f64>,
    pub notes: Vec<String>,
}

impl ProbeReport {
    pub const CSV_HEADER: &'static str = "trial,lhs,bound,margin,aux";

    fn from_rows(kind: &str, rows: Vec<ProbeRow>, notes: Vec<String>) -> Self {
        let min_lhs = rows.iter().map(|r| r.lhs).fold(f64::INFINITY, f64::min);
        let max_lhs = rows.iter().map(|r| r.lhs).fold(f64::NEG_INFINITY, f64::max);
        let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        let nonneg = rows.iter().filter(|r| r.lhs >= -1e-12).count();
        let fraction_nonnegative = if rows.is_empty() { 1.0 } else { nonneg as f64 / rows.len() as f64 };
        let max_aux = rows.iter().filter_map(|r| r.aux).reduce(f64::max);
        ProbeReport { kind: kind.into(), rows, min_lhs, max_lhs, min_margin, fraction_nonnegative, max_aux, notes }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let aux = r.aux.map(|a| format!("{a:e}")).unwrap_or_default();
            s.push_str(&format!("{},{:e},{:e},{:e},{}\n", r.trial, r.lhs, r.bound, r.margin, aux));
        }
        s
    }
}

/// `Q = ⟨(μI+A)x - (μI+A)y, x-y⟩_{V′}` and its lower bound
/// `μ|x-y|²_{V′} + C₀|x-y|₂² - K|x-y|₂|x-y|_{V′}`.
pub fn accretivity_pair(cfg: &OperatorConfig, x: &DiscreteField, y: &DiscreteField) -> Result<(f64, f64)> {
    x.check_same_domain(y)?;
    let ax = cfg.operator_load(x, Nonlinearity::Exact)?;
    let ay = cfg.operator_load(y, Nonlinearity::Exact)?;
    let diff = x.sub(y);
    let w = cfg.op.mass();
    let load: Vec<f64> = (0..ax.len()).map(|i| cfg.mu * w[i] * diff.values()[i] + ax[i] - ay[i]).collect();
    let phi = cfg.op.solve_load(&cfg.op.mass_times(diff.values()));
    let q: f64 = load.iter().zip(&phi).map(|(a, b)| a * b).sum();
    let dv2 = weighted_dot(w, diff.values(), &phi).max(0.0);
    let dl2 = diff.l2_inner(&diff);
    let bound = cfg.mu * dv2 + cfg.law.constants.c0 * dl2 - cfg.k.abs() * dl2.sqrt() * dv2.sqrt();
    Ok((q, bound))
}

pub fn accretivity_probe(cfg: &OperatorConfig, basis: &RobinSpectralBasis, trials: usize, seed: u64) -> Result<ProbeReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("probe needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let x = basis.random_field(&mut rng);
        let y = basis.random_field(&mut rng);
        let (q, bound) = accretivity_pair(cfg, &x, &y)?;
        rows.push(ProbeRow { trial, lhs: q, bound, margin: q - bound, aux: None });
    }
    let notes = vec![format!(
        "accretivity threshold K^2/(4 C0) = {:e} is derived from Young's inequality, not quoted",
        mu_accretive_min(cfg.k, cfg.law.constants.c0)
    )];
    Ok(ProbeReport::from_rows("accretivity", rows, notes))
}

/// Empirical Lipschitz ratios of `J^{μ,ε}` in L² (against `L`) and in V′
/// (recorded in `aux`, expected ≤ 1).
pub fn lipschitz_probe(cfg: &OperatorConfig, basis: &RobinSpectralBasis, trials: usize, seed: u64) -> Result<ProbeReport> {
    let bracket = lipschitz_bracket(cfg.lambda, cfg.epsilon, cfg.mu, cfg.k);
    let l = cfg.lipschitz_constant().ok_or_else(|| {
        Error::Config(format!("Lipschitz bracket lambda + eps mu lambda - eps K^2 - eps/(2 lambda^2) = {bracket:e} is not positive"))
    })?;
    if trials == 0 {
        return Err(Error::InvalidParameter("probe needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let y = basis.random_field(&mut rng);
        let ybar = basis.random_field(&mut rng);
        let dy = y.sub(&ybar);
        let dy_l2 = dy.l2_norm();
        if dy_l2 == 0.0 {
            continue;
        }
        let dj = resolve_a(cfg, &y)?.sub(&resolve_a(cfg, &ybar)?);
        let ratio = dj.l2_norm() / dy_l2;
        let ratio_v = cfg.op.vprime_norm(&dj) / cfg.op.vprime_norm(&dy);
        rows.push(ProbeRow { trial, lhs: ratio, bound: l, margin: l - ratio, aux: Some(ratio_v) });
    }
    let notes = vec![format!("bracket = {bracket:e}, L = {l:e}")];
    Ok(ProbeReport::from_rows("lipschitz", rows, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;
    use crate::robin_laplace::{assemble, eigensolve, RobinCoefficient};

    fn setup(n: usize, alpha: f64) -> (Arc<RobinOperator>, RobinSpectralBasis) {
        let g = build_grid(&[1.0], &[n]).unwrap();
        let op = Arc::new(assemble(g.clone(), RobinCoefficient::constant(&g, alpha).unwrap()).unwrap());
        let basis = eigensolve(&op, n + 1).unwrap();
        (op, basis)
    }

    #[test]
    fn weak_operator_on_eigenfunction() {
        let (op, basis) = setup(32, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::linear(1.0), 0.0, 0.5, 0.0, 0.01).unwrap();
        for j in 1..=5 {
            let v = apply_a_weak(&cfg, &basis, basis.mode(1), j, Nonlinearity::Exact).unwrap();
            let expect = if j == 1 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "{j} {v}");
        }
        let zero = DiscreteField::zeros(basis.domain().clone());
        assert_eq!(apply_a_weak(&cfg, &basis, &zero, 3, Nonlinearity::Regularized).unwrap(), 0.0);
    }

    #[test]
    fn transport_of_constant_matches_central_differences() {
        let (op, basis) = setup(40, 1.0);
        let cfg = OperatorConfig::new(op.clone(), ConstitutiveLaw::linear(1.0), 1.0, 0.5, 4.0, 0.01).unwrap();
        let c = 0.7;
        let x = DiscreteField::constant(basis.domain().clone(), c);
        for j in [1, 2, 7] {
            let phi = basis.mode(j).scaled(1.0 / basis.eigenvalue(j));
            // trapezoid rule over cell-centred differences of φ_j
            let v = phi.values();
            let h = 1.0 / 40.0;
            let quad_dphi: f64 = (0..40).map(|i| (v[i + 1] - v[i]) / h * h).sum();
            let psi_part = weighted_dot(op.mass(), x.values(), basis.mode(j).values());
            let got = apply_a_weak(&cfg, &basis, &x, j, Nonlinearity::Exact).unwrap();
            assert!((got - (psi_part - c * quad_dphi)).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_form_reconstructs_direct_pairing() {
        let (op, basis) = setup(24, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::cubic(0.1), 1.0, 0.5, 16.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = basis.random_field(&mut rng);
            let coeffs: Vec<f64> = (0..8).map(|k| (k as f64 * 0.37).sin()).collect();
            let zeta = basis.synthesize(&coeffs);
            let load = cfg.operator_load(&x, Nonlinearity::Exact).unwrap();
            let direct = cfg.pair_load(&load, &zeta);
            let summed: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * apply_a_weak(&cfg, &basis, &x, k + 1, Nonlinearity::Exact).unwrap())
                .sum();
            assert!((direct - summed).abs() < 1e-8 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn forcing_examples() {
        let g = build_grid(&[1.0], &[8]).unwrap();
        let one = DiscreteField::constant(g.clone(), 1.0);
        let zero = BoundaryData::zero(g.clone(), 1.0).unwrap();
        assert_eq!(zero.forcing_pairing(0.5, &one).unwrap(), 0.0);
        let u = BoundaryData::constant(g.clone(), 0.0, 1.0, 1.0).unwrap();
        assert_eq!(u.forcing_pairing(0.3, &one).unwrap(), -1.0);
        assert!(matches!(u.forcing_pairing(1.5, &one), Err(Error::TimeOutOfRange { .. })));

        let sq = build_grid(&[1.0, 1.0], &[6, 6]).unwrap();
        let s = BoundaryData::constant(sq.clone(), 1.0, 0.0, 1.0).unwrap();
        let one = DiscreteField::constant(sq, 1.0);
        assert!((s.forcing_pairing(0.0, &one).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn linear_resolvent_is_diagonal() {
        let (op, basis) = setup(32, 1.0);
        let (lam, eps, mu) = (0.5, 0.01, 3.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::linear(1.0), 0.0, lam, mu, eps).unwrap();
        let c_lam = lam + 1.0 / (1.0 + lam);
        let coeffs: Vec<f64> = (0..basis.len()).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let g = basis.synthesize(&coeffs);
        let got = resolve_a(&cfg, &g).unwrap();
        let expect: Vec<f64> = coeffs
            .iter()
            .zip(basis.eigenvalues())
            .map(|(c, l)| c / (1.0 + eps * mu + eps * c_lam * l))
            .collect();
        assert!(got.sub(&basis.synthesize(&expect)).max_abs() < 1e-8);

        // Yosida coefficients (εμ + ε c λ_j)/(ε(1 + εμ + ε c λ_j))
        let yos = yosida_a(&cfg, &g).unwrap();
        let expect: Vec<f64> = coeffs
            .iter()
            .zip(basis.eigenvalues())
            .map(|(c, l)| c * (eps * mu + eps * c_lam * l) / (eps * (1.0 + eps * mu + eps * c_lam * l)))
            .collect();
        let want = basis.synthesize(&expect);
        assert!(yos.sub(&want).max_abs() < 1e-6 * want.max_abs());
    }

    #[test]
    fn resolvent_of_zero_is_zero() {
        let (op, basis) = setup(16, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::cubic(0.1), 1.0, 0.5, 16.0, 0.01).unwrap();
        let z = DiscreteField::zeros(basis.domain().clone());
        assert_eq!(resolve_a(&cfg, &z).unwrap().max_abs(), 0.0);
        assert_eq!(yosida_a(&cfg, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn rejects_gravity_without_strict_monotonicity() {
        let (op, _) = setup(8, 1.0);
        let err = OperatorConfig::new(op, ConstitutiveLaw::cubic(0.0), 1.0, 0.5, 16.0, 0.01).unwrap_err();
        assert_eq!(err.to_string(), "assumption 1: C0 must be positive when K != 0");
    }

    #[test]
    fn resolvent_rejects_non_accretive_shift() {
        let (op, basis) = setup(8, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::cubic(0.1), 2.0, 0.5, 0.1, 0.01).unwrap();
        assert!(matches!(resolve_a(&cfg, basis.mode(1)), Err(Error::Config(_))));
    }

    #[test]
    fn resolvent_and_yosida_algebra() {
        let (op, basis) = setup(32, 1.0);
        let cfg = OperatorConfig::new(op.clone(), ConstitutiveLaw::cubic(0.1), 0.0, 0.5, 2.0, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = basis.random_field(&mut rng);
            let sol = resolve_a_detailed(&cfg, &x).unwrap();
            assert!(sol.residual <= 1e-9);
            let yos = x.sub(&sol.field).scaled(1.0 / cfg.epsilon);
            // X = J(X) + ε A^{μ,ε}(X)
            let mut back = sol.field.clone();
            back.axpy(cfg.epsilon, &yos);
            assert!(back.sub(&x).max_abs() <= 1e-12 * x.max_abs().max(1.0));
            assert!(op.vprime_inner(&yos, &x) >= 0.0);
            // A^{μ,ε}(X) = A_λ^μ(J(X)) in V′
            let direct = cfg.lift(&cfg.shifted_load(&sol.field).unwrap());
            assert!(op.vprime_norm(&direct.sub(&yos)) <= 1e-7 * op.vprime_norm(&yos).max(1.0));
            // |A^{μ,ε}(X)|_{V′} ≤ |A_λ^μ(X)|_{V′}
            let full = cfg.lift(&cfg.shifted_load(&x).unwrap());
            assert!(op.vprime_norm(&yos) <= op.vprime_norm(&full) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn accretivity_of_equal_fields_is_zero() {
        let (op, basis) = setup(16, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::cubic(0.1), 1.0, 0.5, 2.5, 0.01).unwrap();
        let x = basis.synthesize(&[0.3, -1.0, 0.5]);
        let (q, _) = accretivity_pair(&cfg, &x, &x).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn accretivity_without_gravity() {
        let (op, basis) = setup(32, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::stefan(1.0), 0.0, 0.5, 0.0, 0.01).unwrap();
        let rep = accretivity_probe(&cfg, &basis, 100, 5).unwrap();
        assert!(rep.min_lhs >= -1e-12);
        assert!(rep.min_margin >= -1e-10);
        assert_eq!(rep.fraction_nonnegative, 1.0);
    }

    #[test]
    fn lipschitz_probe_linear_case_is_contractive() {
        let (op, basis) = setup(32, 1.0);
        let cfg = OperatorConfig::new(op, ConstitutiveLaw::linear(1.0), 0.0, 0.5, 0.0, 0.01).unwrap();
        let rep = lipschitz_probe(&cfg, &basis, 50, 9).unwrap();
        assert!(rep.max_lhs <= 1.0 + 1e-12);
        assert!(rep.max_aux.unwrap() <= 1.0 + 1e-12);
        let bad = OperatorConfig::new(cfg.robin().clone(), ConstitutiveLaw::cubic(0.1), 1.0, 0.1, 0.0, 0.5).unwrap();
        assert!(matches!(lipschitz_probe(&bad, &basis, 5, 1), Err(Error::Config(_))));
    }

    #[test]
    fn constants() {
        assert_eq!(mu_lipschitz_min(0.5, 1.0), 16.0);
        assert!((mu_accretive_min(1.0, 0.1) - 2.5).abs() < 1e-12);
        assert_eq!(mu_accretive_min(0.0, 0.0), 0.0);
        let l = lipschitz_constant(0.5, 0.01, 16.0, 1.0).unwrap();
        assert!((lipschitz_bracket(0.5, 0.01, 16.0, 1.0) - 0.55).abs() < 1e-12);
        assert!((l - (1.0f64 / 1.1).sqrt()).abs() < 1e-12);
        assert!(lipschitz_constant(0.1, 0.5, 0.0, 1.0).is_none());
    }
}
