//! Constitutive laws `Ψ` and their scalar regularisations.
//!
//! For `λ > 0`:
//! * resolvent `J_λ(y)` solves `r + λΨ(r) = y`,
//! * Yosida approximation `Ψ_λ(r) = (r - J_λ(r))/λ = Ψ(J_λ(r))`,
//! * `Ψ̃_λ(r) = λr + Ψ_λ(r)`, which is Lipschitz and strongly monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LawKind {
    /// `Ψ(r) = r³ + c0·r`
    Cubic { c0: f64 },
    /// `Ψ(r) = slope·r`
    Linear { slope: f64 },
    /// `Ψ(r) = sign(r)·max(|r| - threshold, 0)`, flat on the mushy zone.
    Stefan { threshold: f64 },
}

/// Structural constants: strong monotonicity `C0`, growth `C1, C2, m`,
/// coercivity of the primitive `C3, C4, C5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveLaw {
    pub kind: LawKind,
    pub constants: LawConstants,
}

impl ConstitutiveLaw {
    pub fn cubic(c0: f64) -> Self {
        let constants = LawConstants { c0, c1: 1.0 + c0, c2: c0, c3: 0.125, c4: 0.125, c5: 1.0, m: 3.0 };
        ConstitutiveLaw { kind: LawKind::Cubic { c0 }, constants }
    }

    pub fn linear(slope: f64) -> Self {
        let q = 0.25 * slope;
        let constants = LawConstants { c0: slope, c1: slope, c2: 0.0, c3: q, c4: q, c5: 0.0, m: 1.0 };
        ConstitutiveLaw { kind: LawKind::Linear { slope }, constants }
    }

    pub fn stefan(threshold: f64) -> Self {
        let constants =
            LawConstants { c0: 0.0, c1: 1.0, c2: 0.0, c3: 0.125, c4: 0.125, c5: threshold * threshold, m: 1.0 };
        ConstitutiveLaw { kind: LawKind::Stefan { threshold }, constants }
    }

    pub fn with_constants(mut self, constants: LawConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LawKind::Cubic { .. } => "cubic",
            LawKind::Linear { .. } => "linear",
            LawKind::Stefan { .. } => "stefan",
        }
    }

    #[inline]
    pub fn psi(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Cubic { c0 } => r * r * r + c0 * r,
            LawKind::Linear { slope } => slope * r,
            LawKind::Stefan { threshold } => r.signum() * (r.abs() - threshold).max(0.0),
        }
    }

    #[inline]
    pub fn psi_prime(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Cubic { c0 } => 3.0 * r * r + c0,
            LawKind::Linear { slope } => slope,
            LawKind::Stefan { threshold } => {
                if r.abs() > threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `j(r) = ∫₀^r Ψ`.
    pub fn primitive(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Cubic { c0 } => 0.25 * r.powi(4) + 0.5 * c0 * r * r,
            LawKind::Linear { slope } => 0.5 * slope * r * r,
            LawKind::Stefan { threshold } => {
                let e = (r.abs() - threshold).max(0.0);
                0.5 * e * e
            }
        }
    }

    /// `J_λ(y)`: the root of `r + λΨ(r) = y`.
    pub fn resolvent(&self, lambda: f64, y: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("resolvent step must be positive, got {lambda}")));
        }
        if !y.is_finite() {
            return Err(Error::ScalarResolvent { y, reason: "non-finite argument".into() });
        }
        if let LawKind::Linear { slope } = self.kind {
            let den = 1.0 + lambda * slope;
            if den > 0.0 {
                return Ok(y / den);
            }
        }
        let f = |r: f64| r + lambda * self.psi(r) - y;
        let tol = 1e-13 * y.abs().max(1.0);

        // For monotone Ψ with Ψ(0) = 0 the root lies between 0 and y.
        let (mut lo, mut hi) = (y.min(0.0), y.max(0.0));
        let (mut flo, mut fhi) = (f(lo), f(hi));
        let mut grow = 0;
        while !(flo <= 0.0 && fhi >= 0.0) {
            grow += 1;
            if grow > 60 {
                return Err(Error::ScalarResolvent { y, reason: "no sign change found; is the law monotone?".into() });
            }
            let w = (hi - lo).max(1.0);
            lo -= w;
            hi += w;
            flo = f(lo);
            fhi = f(hi);
        }
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }

        let mut r = {
            let guess = y / (1.0 + lambda * self.psi_prime(0.0).max(0.0));
            if guess > lo && guess < hi {
                guess
            } else {
                0.5 * (lo + hi)
            }
        };
        for _ in 0..300 {
            let fr = f(r);
            if fr.abs() <= tol {
                return Ok(r);
            }
            if fr > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
                return Ok(r);
            }
            let slope = 1.0 + lambda * self.psi_prime(r);
            let next = r - fr / slope;
            r = if next > lo && next < hi && next.is_finite() { next } else { 0.5 * (lo + hi) };
        }
        let fr = f(r);
        if fr.abs() <= 1e-12 * y.abs().max(1.0) {
            Ok(r)
        } else {
            Err(Error::ScalarResolvent { y, reason: format!("residual {fr:e} after 300 iterations") })
        }
    }

    /// `Ψ_λ(r) = Ψ(J_λ(r))`.
    pub fn yosida(&self, lambda: f64, r: f64) -> Result<f64> {
        Ok(self.psi(self.resolvent(lambda, r)?))
    }

    /// `Ψ̃_λ(r) = λr + Ψ_λ(r)`.
    pub fn tilde_psi(&self, lambda: f64, r: f64) -> Result<f64> {
        Ok(lambda * r + self.yosida(lambda, r)?)
    }

    /// `Ψ̃_λ'(r) = λ + Ψ'(s)/(1 + λΨ'(s))` with `s = J_λ(r)`.
    pub fn tilde_psi_prime(&self, lambda: f64, r: f64) -> Result<f64> {
        let p = self.psi_prime(self.resolvent(lambda, r)?);
        Ok(lambda + p / (1.0 + lambda * p))
    }

    /// Inverse of `Ψ̃_λ` with its derivative.
    ///
    /// With `s = J_λ(x)` one has `Ψ̃_λ(x) = λs + (1+λ²)Ψ(s)`, so `s` is the
    /// resolvent of step `(1+λ²)/λ` at `z/λ` and `x = s + λΨ(s)`.
    pub fn tilde_psi_inverse(&self, lambda: f64, z: f64) -> Result<(f64, f64)> {
        let kappa = (1.0 + lambda * lambda) / lambda;
        let s = self.resolvent(kappa, z / lambda)?;
        let p = self.psi_prime(s);
        let x = s + lambda * self.psi(s);
        let dx = (1.0 + lambda * p) / (lambda + (1.0 + lambda * lambda) * p);
        Ok((x, dx))
    }
}

pub fn resolvent_scalar(law: &ConstitutiveLaw, lambda: f64, y: f64) -> Result<f64> {
    law.resolvent(lambda, y)
}

pub fn yosida_scalar(law: &ConstitutiveLaw, lambda: f64, r: f64) -> Result<f64> {
    law.yosida(lambda, r)
}

pub fn tilde_psi_scalar(law: &ConstitutiveLaw, lambda: f64, r: f64) -> Result<f64> {
    law.tilde_psi(lambda, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    ZeroAtOrigin,
    Constants,
    Monotonicity,
    Growth,
    Coercivity,
    PrimitiveBound,
}

impl Inequality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Inequality::ZeroAtOrigin => "psi(0)=0",
            Inequality::Constants => "constant signs",
            Inequality::Monotonicity => "(psi(r)-psi(s))(r-s) >= C0 (r-s)^2",
            Inequality::Growth => "|psi(r)| <= C1 |r|^m + C2",
            Inequality::Coercivity => "j(r) >= C3 |r|^(m+1) + C4 r^2 - C5",
            Inequality::PrimitiveBound => "j(r) <= r psi(r)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub inequality: Inequality,
    /// Smallest observed `rhs - lhs` slack (negative means violated).
    pub worst_margin: f64,
    /// Sample point(s) attaining the worst margin.
    pub witness: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub law: String,
    pub samples: usize,
    pub range: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InequalityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub const CSV_HEADER: &'static str = "inequality,worst_margin,passed,witness";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.checks {
            let w: Vec<String> = c.witness.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&format!("\"{}\",{:e},{},{}\n", c.inequality.as_str(), c.worst_margin, c.passed, w.join(";")));
        }
        s
    }
}

struct Tracker {
    inequality: Inequality,
    worst: f64,
    witness: Vec<f64>,
    passed: bool,
}

impl Tracker {
    fn new(inequality: Inequality) -> Self {
        Tracker { inequality, worst: f64::INFINITY, witness: Vec::new(), passed: true }
    }

    /// Records `lhs <= rhs` with a rounding allowance relative to the terms.
    fn record(&mut self, lhs: f64, rhs: f64, scale: f64, at: &[f64]) {
        let margin = rhs - lhs;
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
            self.witness = at.to_vec();
        }
        if !(margin >= -1e-12 * scale.max(1.0)) {
            self.passed = false;
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck { inequality: self.inequality, worst_margin: self.worst, witness: self.witness, passed: self.passed }
    }
}

/// Checks the structural inequalities on a uniform grid of `samples` points
/// in `[-range, range]` plus `samples / 10` seeded random points.
pub fn validate_law(law: &ConstitutiveLaw, samples: usize, range: f64) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!("validation needs at least 100 samples, got {samples}")));
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidParameter(format!("validation range must be positive, got {range}")));
    }
    let k = law.constants;
    let mut pts: Vec<f64> =
        (0..samples).map(|i| -range + 2.0 * range * i as f64 / (samples - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3_0f_1a3);
    pts.extend((0..samples / 10).map(|_| rng.random_range(-range..range)));

    let mut zero = Tracker::new(Inequality::ZeroAtOrigin);
    let p0 = law.psi(0.0);
    zero.record(p0.abs(), 0.0, 0.0, &[0.0]);

    let mut consts = Tracker::new(Inequality::Constants);
    let sign_ok = k.c0 >= 0.0 && k.c3 > 0.0 && k.c4 > 0.0 && k.c5 >= 0.0 && k.m >= 1.0 && k.c1 >= 0.0 && k.c2 >= 0.0;
    consts.record(if sign_ok { 0.0 } else { 1.0 }, 0.0, 0.0, &[k.c0, k.c1, k.c2, k.c3, k.c4, k.c5, k.m]);

    let mut mono = Tracker::new(Inequality::Monotonicity);
    let mut growth = Tracker::new(Inequality::Growth);
    let mut coerc = Tracker::new(Inequality::Coercivity);
    let mut prim = Tracker::new(Inequality::PrimitiveBound);

    let n_grid = samples;
    for (i, &r) in pts.iter().enumerate() {
        let pr = law.psi(r);
        let jr = law.primitive(r);
        let a = r.abs();

        let bound = k.c1 * a.powf(k.m) + k.c2;
        growth.record(pr.abs(), bound, bound.abs(), &[r]);

        let lower = k.c3 * a.powf(k.m + 1.0) + k.c4 * r * r - k.c5;
        coerc.record(lower, jr, jr.abs().max(lower.abs()), &[r]);

        prim.record(jr, r * pr, jr.abs(), &[r]);

        // pairs: grid neighbour, mirrored point, and a random partner
        let partners = [
            if i + 1 < n_grid { pts[i + 1] } else { pts[0] },
            -r,
            pts[(i * 7919 + 13) % pts.len()],
        ];
        for s in partners {
            if s == r {
                continue;
            }
            let ps = law.psi(s);
            let lhs = k.c0 * (r - s) * (r - s);
            let rhs = (pr - ps) * (r - s);
            mono.record(lhs, rhs, pr.abs().max(ps.abs()) * (r - s).abs(), &[r, s]);
        }
    }

    Ok(ValidationReport {
        law: law.name().to_string(),
        samples,
        range,
        checks: vec![zero.finish(), consts.finish(), mono.finish(), growth.finish(), coerc.finish(), prim.finish()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn resolvent_examples() {
        let cubic = ConstitutiveLaw::cubic(0.0);
        assert!((cubic.resolvent(1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let lin = ConstitutiveLaw::linear(1.0);
        assert!((lin.resolvent(0.5, 3.0).unwrap() - 2.0).abs() < 1e-14);
        let oracle = bisect(|r| r + 0.1 * r * r * r - 1.0, 0.0, 1.0);
        let r = cubic.resolvent(0.1, 1.0).unwrap();
        assert!((r - oracle).abs() < 1e-10);
        assert!((r - 0.9217).abs() < 1e-4);
    }

    #[test]
    fn resolvent_rejects_bad_input() {
        let cubic = ConstitutiveLaw::cubic(0.0);
        assert!(cubic.resolvent(0.0, 1.0).is_err());
        assert!(cubic.resolvent(-1.0, 1.0).is_err());
        assert!(cubic.resolvent(1.0, f64::NAN).is_err());
    }

    #[test]
    fn yosida_and_tilde_examples() {
        let cubic = ConstitutiveLaw::cubic(0.0);
        assert!((cubic.yosida(1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((cubic.tilde_psi(1.0, 2.0).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(cubic.tilde_psi(0.3, 0.0).unwrap(), 0.0);
        for law in [ConstitutiveLaw::cubic(0.1), ConstitutiveLaw::stefan(1.0), ConstitutiveLaw::linear(2.0)] {
            assert_eq!(law.yosida(0.7, 0.0).unwrap(), 0.0);
        }
        let lin = ConstitutiveLaw::linear(1.0);
        assert!((lin.yosida(0.5, 3.0).unwrap() - 2.0).abs() < 1e-14);
        // Ψ = r gives Ψ̃ = (λ + 1/(1+λ)) r
        let l = 0.4;
        assert!((lin.tilde_psi(l, 1.5).unwrap() - (l + 1.0 / (1.0 + l)) * 1.5).abs() < 1e-14);
    }

    #[test]
    fn yosida_converges_monotonically() {
        let law = ConstitutiveLaw::cubic(0.1);
        let r = 1.3;
        let errs: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&l| (law.yosida(l, r).unwrap() - law.psi(r)).abs()).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
        assert!(errs[2] < 0.05);
    }

    #[test]
    fn validation_examples() {
        let cubic = ConstitutiveLaw::cubic(0.0);
        let rep = validate_law(&cubic, 10_000, 10.0).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let lin = ConstitutiveLaw::linear(1.0);
        assert!(validate_law(&lin, 10_000, 10.0).unwrap().passed());
        assert!(validate_law(&ConstitutiveLaw::stefan(1.0), 10_000, 10.0).unwrap().passed());
        assert!(validate_law(&ConstitutiveLaw::cubic(0.1), 10_000, 10.0).unwrap().passed());

        let neg = ConstitutiveLaw::linear(-1.0).with_constants(LawConstants {
            c0: 0.0, c1: 1.0, c2: 0.0, c3: 0.25, c4: 0.25, c5: 0.0, m: 1.0,
        });
        let rep = validate_law(&neg, 10_000, 10.0).unwrap();
        let mono = rep.checks.iter().find(|c| c.inequality == Inequality::Monotonicity).unwrap();
        assert!(!mono.passed);
        assert_eq!(mono.witness.len(), 2);
        assert!(mono.worst_margin < 0.0);

        // overstated coercivity is caught
        let greedy = cubic.with_constants(LawConstants { c3: 0.5, ..cubic.constants });
        assert!(!validate_law(&greedy, 1000, 10.0).unwrap().passed());
        assert!(validate_law(&cubic, 10, 1.0).is_err());
    }

    #[test]
    fn tilde_inverse_round_trip() {
        for law in [ConstitutiveLaw::cubic(0.1), ConstitutiveLaw::stefan(1.0), ConstitutiveLaw::linear(1.0)] {
            for &l in &[0.05, 0.5, 2.0] {
                for &x in &[-3.0, -0.7, 0.0, 0.2, 1.0, 5.0] {
                    let z = law.tilde_psi(l, x).unwrap();
                    let (back, dx) = law.tilde_psi_inverse(l, z).unwrap();
                    assert!((back - x).abs() < 1e-10 * x.abs().max(1.0), "{law:?} {l} {x} {back}");
                    let slope = law.tilde_psi_prime(l, x).unwrap();
                    assert!((dx * slope - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn resolvent_identity(lambda in 1e-3f64..10.0, r in -50.0f64..50.0, which in 0usize..3) {
            let law = [ConstitutiveLaw::linear(1.0), ConstitutiveLaw::cubic(0.0), ConstitutiveLaw::stefan(1.0)][which];
            let y = r + lambda * law.psi(r);
            let back = law.resolvent(lambda, y).unwrap();
            prop_assert!((back - r).abs() <= 1e-9 * r.abs().max(1.0));
        }

        #[test]
        fn resolvent_is_nonexpansive(lambda in 1e-3f64..10.0, a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let law = ConstitutiveLaw::cubic(0.1);
            let (ja, jb) = (law.resolvent(lambda, a).unwrap(), law.resolvent(lambda, b).unwrap());
            prop_assert!((ja - jb).abs() <= (a - b).abs() * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn tilde_psi_is_strongly_monotone(lambda in 1e-2f64..2.0, a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let law = ConstitutiveLaw::stefan(1.0);
            let (ta, tb) = (law.tilde_psi(lambda, a).unwrap(), law.tilde_psi(lambda, b).unwrap());
            let slope_bound = lambda + 1.0 / lambda;
            prop_assert!((ta - tb) * (a - b) >= lambda * (a - b) * (a - b) * (1.0 - 1e-9) - 1e-12);
            prop_assert!((ta - tb).abs() <= slope_bound * (a - b).abs() * (1.0 + 1e-9) + 1e-12);
        }
    }
}
