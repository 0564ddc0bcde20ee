use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spme_core::constitutive::ConstitutiveLaw;
use spme_core::experiments::{bound_a_sweep, bump, lambda_sweep};
use spme_core::geometry::{build_grid, quad_volume, BoundaryTag, DiscreteField};
use spme_core::noise::{CoefficientRule, NoiseKey, NoiseModel};
use spme_core::porous_operator::{resolve_a, BoundaryData, OperatorConfig};
use spme_core::robin_laplace::{assemble, eigensolve, RobinCoefficient, RobinOperator, RobinSpectralBasis};
use spme_core::sde_solver::{run_replica, step, Scheme, SimConfig};
use spme_core::stats::mean_stderr;

fn line(n: usize) -> (Arc<RobinOperator>, Arc<RobinSpectralBasis>) {
    let g = build_grid(&[1.0], &[n]).unwrap();
    let op = Arc::new(assemble(g.clone(), RobinCoefficient::constant(&g, 1.0).unwrap()).unwrap());
    let basis = Arc::new(eigensolve(&op, 12.min(n + 1)).unwrap());
    (op, basis)
}

fn sim(op: &Arc<RobinOperator>, operator: OperatorConfig, x0: DiscreteField, horizon: f64, steps: usize, scheme: Scheme) -> SimConfig {
    SimConfig {
        operator,
        noise: None,
        boundary: BoundaryData::zero(op.domain().clone(), horizon).unwrap(),
        initial: x0,
        horizon,
        steps,
        scheme,
        replicas: 1,
        seed: 5,
        checkpoints: steps.saturating_sub(1),
    }
}

/// Plain dense Newton in `x` on `(1+εμ)Mx + εSΨ̃(x) - εKBᵀx = Mg`.
fn dense_resolvent(cfg: &OperatorConfig, g: &DiscreteField) -> Vec<f64> {
    let op = cfg.robin();
    let n = g.len();
    let s = DMatrix::from_fn(n, n, |i, j| op.stiffness().to_dense()[i][j]);
    let bt = DMatrix::from_fn(n, n, |i, j| op.transport().to_dense()[j][i]);
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(op.mass()));
    let (eps, shift) = (cfg.epsilon, 1.0 + cfg.epsilon * cfg.mu);
    let rhs = &m * DVector::from_column_slice(g.values());
    let law = cfg.law;
    let psi = |x: &DVector<f64>| x.map(|v| law.tilde_psi(cfg.lambda, v).unwrap());
    let res = |x: &DVector<f64>| &m * x * shift + &s * psi(x) * eps - &bt * x * (eps * cfg.k) - &rhs;
    let mut x = DVector::from_column_slice(g.values());
    for _ in 0..200 {
        let r = res(&x);
        if r.norm() < 1e-15 * rhs.norm().max(1e-300) {
            break;
        }
        let dpsi = DMatrix::from_diagonal(&x.map(|v| law.tilde_psi_prime(cfg.lambda, v).unwrap()));
        let jac = &m * shift + &s * dpsi * eps - &bt * (eps * cfg.k);
        let dx = jac.lu().solve(&(-&r)).unwrap();
        let mut t = 1.0;
        while t > 1e-6 {
            let xt = &x + &dx * t;
            if res(&xt).norm() < (1.0 - 1e-4 * t) * r.norm() {
                x = xt;
                break;
            }
            t *= 0.5;
        }
        if t <= 1e-6 {
            break;
        }
    }
    x.as_slice().to_vec()
}

#[test]
fn resolvent_matches_dense_newton() {
    let (op, basis) = line(32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (law, k, mu, eps) in [
        (ConstitutiveLaw::cubic(0.1), 1.0, 16.0, 0.01),
        (ConstitutiveLaw::cubic(0.0), 0.0, 0.0, 0.1),
        (ConstitutiveLaw::stefan(0.5), 0.0, 0.0, 0.05),
        (ConstitutiveLaw::linear(2.0), 2.0, 4.0, 0.02),
    ] {
        let cfg = OperatorConfig::new(op.clone(), law, k, 0.5, mu, eps).unwrap();
        for _ in 0..5 {
            let g = basis.random_field(&mut rng).scaled(3.0);
            let ours = resolve_a(&cfg, &g).unwrap();
            let oracle = dense_resolvent(&cfg, &g);
            let err = ours.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-7, "{} err {err:e}", law.name());
        }
    }
}

#[test]
fn linear_recursions_for_both_schemes() {
    let (op, basis) = line(32);
    let lam = 0.5;
    let c = lam + 1.0 / (1.0 + lam);
    let l1 = basis.eigenvalue(1);
    let (dt, eps) = (0.005, 0.02);
    let implicit = OperatorConfig::new(op.clone(), ConstitutiveLaw::linear(1.0), 0.0, lam, 0.0, eps).unwrap();
    let cfg = sim(&op, implicit.clone(), basis.mode(1).clone(), 40.0 * dt, 40, Scheme::ImplicitResolvent);
    let tr = run_replica(&cfg, 0).unwrap();
    let rho = 1.0 / (1.0 + dt * c * l1);
    for (n, x) in tr.steps.iter().zip(&tr.snapshots) {
        assert!(x.sub(&basis.mode(1).scaled(rho.powi(*n as i32))).max_abs() <= 1e-10);
    }

    let cfg = SimConfig { scheme: Scheme::ExplicitYosida, ..cfg };
    let tr = run_replica(&cfg, 0).unwrap();
    let gamma = c * l1 / (1.0 + eps * c * l1);
    let rho = 1.0 - dt * gamma;
    for (n, x) in tr.steps.iter().zip(&tr.snapshots) {
        assert!(x.sub(&basis.mode(1).scaled(rho.powi(*n as i32))).max_abs() <= 1e-10);
    }
}

#[test]
fn bound_a_matches_linear_recursion() {
    let (op, basis) = line(16);
    let lam = 0.5;
    let mu = 3.0;
    let c = lam + 1.0 / (1.0 + lam);
    let l1 = basis.eigenvalue(1);
    let operator = OperatorConfig::new(op.clone(), ConstitutiveLaw::linear(1.0), 0.0, lam, mu, 0.01).unwrap();
    let mut cfg = sim(&op, operator, basis.mode(1).clone(), 0.25, 1, Scheme::ExplicitYosida);
    cfg.replicas = 8;
    let ladder = [1e-2, 5e-3];
    let table = bound_a_sweep(&cfg, &ladder, 2.0).unwrap();
    let steps = (0.25_f64 / 2.5e-3).ceil() as usize;
    let dt = 0.25 / steps as f64;
    for (eps, entry) in ladder.iter().zip(&table.entries) {
        let a = mu + c * l1;
        let gamma = a / (1.0 + eps * a);
        let (mut x, mut total) = (1.0_f64, 0.0);
        for _ in 0..steps {
            total += dt * gamma * gamma * x * x / l1;
            x *= 1.0 - dt * gamma + mu * dt;
        }
        assert!((entry.mean - total).abs() <= 1e-6 * total, "{} vs {total}", entry.mean);
        assert_eq!(entry.stderr, 0.0);
    }
}

#[test]
fn mass_budget_closes() {
    let (op, _) = line(64);
    let law = ConstitutiveLaw::cubic(0.1);
    let lam = 0.5;
    let operator = OperatorConfig::new(op.clone(), law, 1.0, lam, 16.0, 0.01).unwrap();
    let g = op.domain().clone();
    let x0 = bump(&g, None, 0.15, 1.0).unwrap();
    let cfg = sim(&op, operator, x0, 0.2, 40, Scheme::ImplicitResolvent);
    let dt = cfg.dt();
    let bu = g.boundary_weights(BoundaryTag::Underground);
    let mut x = cfg.initial.clone();
    for n in 0..cfg.steps {
        let next = step(&cfg, &x, n, NoiseKey::new(cfg.seed, 0)).unwrap().field;
        // the transport edge form has no net flux, so only the Robin outflow moves mass
        let outflow: f64 = next
            .values()
            .iter()
            .zip(bu)
            .map(|(v, b)| b * law.tilde_psi(lam, *v).unwrap())
            .sum();
        let shift = 1.0 + 16.0 * dt;
        let defect = shift * (quad_volume(&next) - quad_volume(&x)) + dt * outflow;
        assert!(defect.abs() <= 1e-8, "step {n}: {defect:e}");
        x = next;
    }
}

#[test]
fn noise_is_a_martingale_in_the_linear_case() {
    let (op, basis) = line(32);
    let operator = OperatorConfig::new(op.clone(), ConstitutiveLaw::linear(1.0), 0.0, 0.5, 0.0, 0.01).unwrap();
    let mut cfg = sim(&op, operator, basis.mode(1).clone(), 0.2, 20, Scheme::ImplicitResolvent);
    let det = run_replica(&cfg, 0).unwrap();
    cfg.noise = Some(NoiseModel::new(basis.clone(), 1, CoefficientRule::Explicit { values: vec![0.8] }).unwrap());
    cfg.replicas = 256;
    let trs = spme_core::sde_solver::run_replicas(&cfg).unwrap();
    let e1 = basis.mode(1);
    for s in 0..det.snapshots.len() {
        let vals: Vec<f64> = trs.iter().map(|t| t.snapshots[s].l2_inner(e1)).collect();
        let m = mean_stderr(&vals);
        let want = det.snapshots[s].l2_inner(e1);
        assert!((m.mean - want).abs() <= 3.0 * m.stderr + 1e-14, "snapshot {s}: {} vs {want} ({})", m.mean, m.stderr);
    }
    assert!(trs[0].last().values() != det.last().values());
}

#[test]
fn implicit_scheme_is_contractive_in_vprime() {
    let (op, basis) = line(48);
    let operator = OperatorConfig::new(op.clone(), ConstitutiveLaw::cubic(0.0), 0.0, 0.1, 0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x0 = basis.random_field(&mut rng).scaled(2.0);
        let y0 = basis.random_field(&mut rng).scaled(2.0);
        let cx = sim(&op, operator.clone(), x0, 0.1, 10, Scheme::ImplicitResolvent);
        let cy = SimConfig { initial: y0, ..cx.clone() };
        let (tx, ty) = (run_replica(&cx, 0).unwrap(), run_replica(&cy, 0).unwrap());
        let d: Vec<f64> = tx.snapshots.iter().zip(&ty.snapshots).map(|(a, b)| op.vprime_norm(&a.sub(b))).collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{d:?}");
    }
}

#[test]
fn lambda_budget_is_uniform_for_the_linear_law() {
    let (op, basis) = line(32);
    let operator = OperatorConfig::new(op.clone(), ConstitutiveLaw::linear(1.0), 0.0, 0.4, 0.0, 0.01).unwrap();
    let mut cfg = sim(&op, operator, bump(op.domain(), None, 0.15, 1.0).unwrap(), 0.25, 25, Scheme::ImplicitResolvent);
    cfg.noise = Some(NoiseModel::new(basis, 8, CoefficientRule::Default { scale: 1.0 }).unwrap());
    cfg.replicas = 8;
    let r = lambda_sweep(&cfg, &[0.4, 0.2, 0.1, 0.05]).unwrap();
    for q in [&r.psi_budget, &r.l2_budget] {
        let max = q.iter().map(|m| m.mean).fold(f64::MIN, f64::max);
        let min = q.iter().map(|m| m.mean).fold(f64::MAX, f64::min);
        assert!(max <= 2.0 * min, "{q:?}");
    }
    assert!(r.rungs.windows(2).all(|w| w[1].distance.mean < w[0].distance.mean));
}
