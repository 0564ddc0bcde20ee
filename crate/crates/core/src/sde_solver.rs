//! Euler-Maruyama time stepping of the doubly regularised equation
//! `dX + A^{μ,ε}(X) dt - μX dt = (F_u + F_s) dt + Σ(X) dW`.
//!
//! Two schemes are provided. `ImplicitResolvent` takes
//! `X_{n+1} = J^{μ,Δt}(X_n + μΔt X_n + Δt F + Σ(X_n)ΔW)`, i.e. the resolvent
//! with `Δt` in the role of `ε`. `ExplicitYosida` evaluates the Yosida drift
//! at `X_n` and needs `Δt ≤ ε/2`. In both, the `+μX` term is explicit, so the
//! shift cancels only up to `O(μΔt)` per unit time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{weighted_dot, DiscreteField};
use crate::noise::{apply_sigma, sample_increment, NoiseKey, NoiseModel};
use crate::porous_operator::{resolve_a_detailed, BoundaryData, OperatorConfig};
use crate::stats::{mean_stderr, MeanStderr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitResolvent,
    ExplicitYosida,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub operator: OperatorConfig,
    pub noise: Option<NoiseModel>,
    pub boundary: BoundaryData,
    pub initial: DiscreteField,
    pub horizon: f64,
    pub steps: usize,
    pub scheme: Scheme,
    pub replicas: usize,
    pub seed: u64,
    /// Interior snapshot times between `0` and `T` (both always recorded).
    pub checkpoints: usize,
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("at least one time step is required".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("at least one replica is required".into()));
        }
        let n = self.operator.domain().node_count();
        if self.initial.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.initial.len() });
        }
        if !self.initial.is_finite() {
            return Err(Error::InvalidParameter("initial field must be finite".into()));
        }
        if self.scheme == Scheme::ExplicitYosida && self.dt() > 0.5 * self.operator.epsilon * (1.0 + 1e-12) {
            return Err(Error::Stability(format!(
                "explicit Yosida scheme needs dt <= epsilon/2, got dt = {:e}, epsilon = {:e}",
                self.dt(),
                self.operator.epsilon
            )));
        }
        Ok(())
    }

    /// Step indices at which snapshots are stored.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let m = self.checkpoints;
        let mut out = vec![0];
        for k in 1..=m {
            let n = ((k as f64) * self.steps as f64 / (m + 1) as f64).round() as usize;
            if n > *out.last().unwrap() && n < self.steps {
                out.push(n);
            }
        }
        out.push(self.steps);
        out
    }

    fn stepping_operator(&self) -> Result<OperatorConfig> {
        match self.scheme {
            Scheme::ImplicitResolvent => self.operator.with_epsilon(self.dt()),
            Scheme::ExplicitYosida => Ok(self.operator.clone()),
        }
    }
}

/// Per-step quantities. `J` is the resolvent output of the step, `v` its
/// input and `ε'` its step (`ε` for the explicit scheme, `Δt` otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    /// `|(v - J)/ε'|²_{V′}`, the squared Yosida drift.
    pub drift_vprime_sq: f64,
    /// `μ|J|²_{V′}`
    pub shift_vprime_sq: f64,
    /// `|v - J|²_{V′}/ε'`
    pub gap_vprime_sq: f64,
    /// `μ|J|₂²`
    pub shift_l2_sq: f64,
    /// `⟨A_λ(J), J⟩`
    pub operator_pairing: f64,
    /// `∫Ψ_λ(X_{n+1}) X_{n+1}`
    pub psi_pairing: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub field: DiscreteField,
    pub diagnostics: StepDiagnostics,
}

struct Stepper<'a> {
    cfg: &'a SimConfig,
    op: OperatorConfig,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Stepper { cfg, op: cfg.stepping_operator()? })
    }

    fn step(&self, x: &DiscreteField, n: usize, key: NoiseKey) -> Result<StepOutcome> {
        let cfg = self.cfg;
        let dt = cfg.dt();
        let mu = cfg.operator.mu;
        let robin = cfg.operator.robin();

        let mut explicit = x.scaled(mu * dt);
        if !cfg.boundary.is_zero() {
            explicit.axpy(dt, &cfg.boundary.forcing_lift(n as f64 * dt)?);
        }
        if let Some(noise) = cfg.noise.as_ref().filter(|m| m.modes() > 0) {
            let inc = sample_increment(noise, dt, key.at_step(n as u64))?;
            explicit.axpy(1.0, &apply_sigma(noise, x, &inc)?);
        }

        let (v, sol, next) = match cfg.scheme {
            Scheme::ImplicitResolvent => {
                let mut g = x.clone();
                g.axpy(1.0, &explicit);
                let sol = resolve_a_detailed(&self.op, &g)?;
                let next = sol.field.clone();
                (g, sol, next)
            }
            Scheme::ExplicitYosida => {
                let sol = resolve_a_detailed(&self.op, x)?;
                let mut next = x.clone();
                // X - Δt (X - J)/ε
                let r = dt / self.op.epsilon;
                next.values_mut()
                    .iter_mut()
                    .zip(sol.field.values())
                    .for_each(|(a, j)| *a -= r * (*a - j));
                next.axpy(1.0, &explicit);
                (x.clone(), sol, next)
            }
        };
        if !next.is_finite() {
            return Err(Error::NonlinearDivergence { iterations: sol.iterations, trace: vec![f64::INFINITY] });
        }

        let eps = self.op.epsilon;
        let j = &sol.field;
        let gap = v.sub(j);
        let gap_v2 = robin.vprime_inner(&gap, &gap);
        let j_v2 = robin.vprime_inner(j, j);
        let a_load = self.op.operator_load(j, crate::porous_operator::Nonlinearity::Regularized)?;
        let law = &cfg.operator.law;
        let lam = cfg.operator.lambda;
        let psi_l: Vec<f64> = next.values().iter().map(|&r| law.yosida(lam, r)).collect::<Result<_>>()?;
        let diagnostics = StepDiagnostics {
            iterations: sol.iterations,
            residual: sol.residual,
            drift_vprime_sq: gap_v2 / (eps * eps),
            shift_vprime_sq: mu * j_v2,
            gap_vprime_sq: gap_v2 / eps,
            shift_l2_sq: mu * j.l2_inner(j),
            operator_pairing: a_load.iter().zip(j.values()).map(|(a, b)| a * b).sum(),
            psi_pairing: weighted_dot(robin.mass(), &psi_l, next.values()),
        };
        Ok(StepOutcome { field: next, diagnostics })
    }
}

/// One step of the configured scheme from `X_n` at step index `n`.
pub fn step(cfg: &SimConfig, x: &DiscreteField, n: usize, key: NoiseKey) -> Result<StepOutcome> {
    Stepper::new(cfg)?.step(x, n, key).map_err(|e| Error::Step { step: n, source: Box::new(e) })
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub replica: usize,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub snapshots: Vec<DiscreteField>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn last(&self) -> &DiscreteField {
        self.snapshots.last().unwrap()
    }

    pub const CSV_HEADER_1D: &'static str = "t,i,value";

    /// Long-format snapshots: `t,i[,j[,k]],value`.
    pub fn to_csv(&self) -> String {
        let dom = self.snapshots[0].domain().clone();
        let d = dom.dim();
        let axes = ["i", "j", "k"];
        let mut s = format!("t,{},value\n", axes[..d].join(","));
        for (t, f) in self.times.iter().zip(&self.snapshots) {
            for (node, v) in f.values().iter().enumerate() {
                let idx: Vec<String> = dom.multi_index(node).iter().map(|i| i.to_string()).collect();
                s.push_str(&format!("{t:e},{},{v:e}\n", idx.join(",")));
            }
        }
        s
    }
}

pub fn run_replica(cfg: &SimConfig, replica: usize) -> Result<Trajectory> {
    let stepper = Stepper::new(cfg)?;
    let key = NoiseKey::new(cfg.seed, replica as u64);
    let snap_steps = cfg.snapshot_steps();
    let dt = cfg.dt();
    let mut snapshots = vec![cfg.initial.clone()];
    let mut diagnostics = Vec::with_capacity(cfg.steps);
    let mut x = cfg.initial.clone();
    let mut next_snap = 1;
    for n in 0..cfg.steps {
        let out = stepper.step(&x, n, key).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
        x = out.field;
        diagnostics.push(out.diagnostics);
        if next_snap < snap_steps.len() && snap_steps[next_snap] == n + 1 {
            snapshots.push(x.clone());
            next_snap += 1;
        }
    }
    let times = snap_steps.iter().map(|&n| n as f64 * dt).collect();
    Ok(Trajectory { replica, steps: snap_steps, times, snapshots, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub vprime_sq: Vec<MeanStderr>,
    pub l2_sq: Vec<MeanStderr>,
    pub psi_pairing: Vec<MeanStderr>,
    /// `|X(t)|²_{V′} + 2∫₀^t (μ|J|²_{V′} + |X - J|²_{V′}/ε)`
    pub vprime_budget: Vec<MeanStderr>,
    /// `|X(t)|₂² + 2∫₀^t (μ|J|₂² + ⟨A_λ(J), J⟩)`
    pub l2_budget: Vec<MeanStderr>,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "t,vprime_sq,vprime_sq_stderr,l2_sq,l2_sq_stderr,psi_pairing,psi_pairing_stderr,vprime_budget,vprime_budget_stderr,l2_budget,l2_budget_stderr";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for k in 0..self.times.len() {
            s.push_str(&format!("{:e}", self.times[k]));
            for q in [&self.vprime_sq, &self.l2_sq, &self.psi_pairing, &self.vprime_budget, &self.l2_budget] {
                s.push_str(&format!(",{:e},{:e}", q[k].mean, q[k].stderr));
            }
            s.push('\n');
        }
        s
    }
}

pub fn energy_report(trajectories: &[Trajectory], cfg: &SimConfig) -> Result<EnergyReport> {
    if trajectories.is_empty() {
        return Err(Error::InvalidParameter("energy report needs at least one trajectory".into()));
    }
    let robin = cfg.operator.robin();
    let law = &cfg.operator.law;
    let lam = cfg.operator.lambda;
    let dt = cfg.dt();
    let times = trajectories[0].times.clone();
    let k = times.len();
    let mut cols: Vec<[Vec<f64>; 5]> = (0..k).map(|_| Default::default()).collect();
    for tr in trajectories {
        let (mut int_v, mut int_l) = (0.0, 0.0);
        let mut done = 0;
        for (s, (&n, x)) in tr.steps.iter().zip(&tr.snapshots).enumerate() {
            for d in &tr.diagnostics[done..n] {
                int_v += dt * (d.shift_vprime_sq + d.gap_vprime_sq);
                int_l += dt * (d.shift_l2_sq + d.operator_pairing);
            }
            done = n;
            let v2 = robin.vprime_inner(x, x);
            let l2 = x.l2_inner(x);
            let psi: Vec<f64> = x.values().iter().map(|&r| law.yosida(lam, r)).collect::<Result<_>>()?;
            let pp = weighted_dot(robin.mass(), &psi, x.values());
            let c = &mut cols[s];
            c[0].push(v2);
            c[1].push(l2);
            c[2].push(pp);
            c[3].push(v2 + 2.0 * int_v);
            c[4].push(l2 + 2.0 * int_l);
        }
    }
    let pick = |q: usize| cols.iter().map(|c| mean_stderr(&c[q])).collect::<Vec<_>>();
    Ok(EnergyReport {
        times,
        vprime_sq: pick(0),
        l2_sq: pick(1),
        psi_pairing: pick(2),
        vprime_budget: pick(3),
        l2_budget: pick(4),
    })
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trajectories: Vec<Trajectory>,
    pub energy: EnergyReport,
}

/// Runs all replicas; results are ordered by replica and independent of
/// the thread count.
pub fn simulate(cfg: &SimConfig) -> Result<SimulationOutput> {
    let trajectories = run_replicas(cfg)?;
    let energy = energy_report(&trajectories, cfg)?;
    Ok(SimulationOutput { trajectories, energy })
}

pub fn run_replicas(cfg: &SimConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..cfg.replicas).into_par_iter().map(|r| run_replica(cfg, r)).collect()
}
