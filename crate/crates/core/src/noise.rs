//! Truncated cylindrical Wiener process and the multiplicative noise map
//! `Σ(X) dW = Σ_j μ_j (X e_j) dβ_j`.
//!
//! Increments are drawn from ChaCha8 streams addressed by a [`NoiseKey`]:
//! the seed picks the generator, the replica picks the stream, and the step
//! picks a fixed block of the stream. Mode `j` is the `j`-th normal drawn in
//! that block, so a model with fewer modes sees a prefix of the same draws.
//! Two runs that share keys share their Brownian paths exactly.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiscreteField;
use crate::robin_laplace::RobinSpectralBasis;

/// `Σ_{j≥1} (1+j)^{-2} = π²/6 - 1`.
pub const DEFAULT_HS_BOUND: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0 - 1.0;

/// 32-bit words of stream reserved per time step.
const WORDS_PER_STEP: u128 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum CoefficientRule {
    /// `μ_j = scale·(1 + λ_j^{(d+1)/2})^{-1/2} (1+j)^{-1}`
    Default { scale: f64 },
    Constant { value: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for CoefficientRule {
    fn default() -> Self {
        CoefficientRule::Default { scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    basis: Arc<RobinSpectralBasis>,
    coefficients: Vec<f64>,
    rule: CoefficientRule,
    hs_bound: f64,
}

impl NoiseModel {
    pub fn new(basis: Arc<RobinSpectralBasis>, modes: usize, rule: CoefficientRule) -> Result<Self> {
        if modes > basis.len() {
            return Err(Error::InvalidParameter(format!(
                "noise uses {modes} modes but the basis has {}",
                basis.len()
            )));
        }
        let d = basis.domain().dim() as f64;
        let coefficients: Vec<f64> = match &rule {
            CoefficientRule::Default { scale } => (1..=modes)
                .map(|j| scale * (1.0 + basis.eigenvalue(j).powf((d + 1.0) / 2.0)).powf(-0.5) / (1.0 + j as f64))
                .collect(),
            CoefficientRule::Constant { value } => vec![*value; modes],
            CoefficientRule::Explicit { values } => {
                if values.len() != modes {
                    return Err(Error::DimensionMismatch { expected: modes, got: values.len() });
                }
                values.clone()
            }
        };
        if coefficients.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidParameter("noise coefficients must be finite and non-negative".into()));
        }
        Ok(NoiseModel { basis, coefficients, rule, hs_bound: DEFAULT_HS_BOUND })
    }

    pub fn with_hs_bound(mut self, bound: f64) -> Self {
        self.hs_bound = bound;
        self
    }

    pub fn modes(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn rule(&self) -> &CoefficientRule {
        &self.rule
    }

    pub fn basis(&self) -> &Arc<RobinSpectralBasis> {
        &self.basis
    }

    pub fn hs_bound(&self) -> f64 {
        self.hs_bound
    }

    pub fn is_silent(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }

    /// Terms `μ_j²(1 + λ_j^{(d+1)/2})` of the Hilbert-Schmidt series.
    pub fn hs_terms(&self) -> Vec<f64> {
        let d = self.basis.domain().dim() as f64;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, m)| m * m * (1.0 + self.basis.eigenvalue(k + 1).powf((d + 1.0) / 2.0)))
            .collect()
    }
}

pub fn default_coefficients(basis: Arc<RobinSpectralBasis>, modes: usize) -> Result<NoiseModel> {
    NoiseModel::new(basis, modes, CoefficientRule::default())
}

/// Partial Hilbert-Schmidt sum, failing when it exceeds the declared bound
/// or when its terms do not decay (mean of the upper half of the terms at
/// least the mean of the lower half).
pub fn validate_hs(model: &NoiseModel) -> Result<f64> {
    let terms = model.hs_terms();
    let sum: f64 = terms.iter().sum();
    if sum > model.hs_bound * (1.0 + 1e-12) {
        return Err(Error::HilbertSchmidt(format!(
            "partial sum {sum:e} exceeds the declared bound {:e}",
            model.hs_bound
        )));
    }
    let n = terms.len();
    if n >= 4 {
        let half = n / 2;
        let lower = terms[..half].iter().sum::<f64>() / half as f64;
        let upper = terms[half..].iter().sum::<f64>() / (n - half) as f64;
        if upper > 0.0 && upper >= lower {
            return Err(Error::HilbertSchmidt(format!(
                "series tail does not decay: mean term {upper:e} over modes {}..={n} vs {lower:e} over 1..={half}",
                half + 1
            )));
        }
    }
    Ok(sum)
}

/// Address of one time step's increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub replica: u64,
    pub step: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, replica: u64) -> Self {
        NoiseKey { seed, replica, step: 0 }
    }

    pub fn at_step(self, step: u64) -> Self {
        NoiseKey { step, ..self }
    }

    pub fn advance(self) -> Self {
        NoiseKey { step: self.step + 1, ..self }
    }

    fn stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.replica);
        rng.set_word_pos(self.step as u128 * WORDS_PER_STEP);
        rng
    }
}

/// `J_noise` independent `N(0, dt)` draws.
pub fn sample_increment(model: &NoiseModel, dt: f64, key: NoiseKey) -> Result<Vec<f64>> {
    draw_normals(model.modes(), dt, key)
}

pub fn draw_normals(count: usize, dt: f64, key: NoiseKey) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let sd = dt.sqrt();
    let mut rng = key.stream();
    Ok((0..count).map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect())
}

/// `Σ_j μ_j (X ⊙ e_j) Δβ_j`.
pub fn apply_sigma(model: &NoiseModel, x: &DiscreteField, increments: &[f64]) -> Result<DiscreteField> {
    if increments.len() != model.modes() {
        return Err(Error::DimensionMismatch { expected: model.modes(), got: increments.len() });
    }
    if x.len() != model.basis.domain().node_count() {
        return Err(Error::DimensionMismatch { expected: model.basis.domain().node_count(), got: x.len() });
    }
    let mut amp = vec![0.0; x.len()];
    for (k, (m, db)) in model.coefficients.iter().zip(increments).enumerate() {
        let c = m * db;
        if c == 0.0 {
            continue;
        }
        amp.iter_mut().zip(model.basis.mode(k + 1).values()).for_each(|(a, e)| *a += c * e);
    }
    let v = x.values().iter().zip(&amp).map(|(a, b)| a * b).collect();
    Ok(DiscreteField::new(x.domain().clone(), v)?)
}
