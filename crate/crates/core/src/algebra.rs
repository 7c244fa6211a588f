//! Qubit states and two-outcome POVMs in Bloch parametrization.
//!
//! A state is `ρ = (I + r·σ)/2` and an effect is `F = a(I + n·σ)`. Every
//! quantity the certification pipeline needs reduces to real 3-vector
//! arithmetic on `(a, n)`, so no complex matrices appear anywhere.
//!
//! Pairs are frequently handled in *weighted* form `(a, m)` with `m = a·n`;
//! this is the parametrization tomography observes directly and the one in
//! which convex mixing is linear.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randomness::min_entropy_binary;

/// Absolute tolerance for invariant checks on O(1) quantities.
pub const TOLERANCE: f64 = 1e-9;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(u: Vec3, v: Vec3) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

pub(crate) fn norm(v: Vec3) -> f64 {
    dot(v, v).sqrt()
}

pub(crate) fn scale(v: Vec3, s: f64) -> Vec3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

pub(crate) fn add(u: Vec3, v: Vec3) -> Vec3 {
    [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
}

/// Norm of the component of `v` orthogonal to the unit vector `axis`.
pub(crate) fn perp_norm(v: Vec3, axis: Vec3) -> f64 {
    let along = dot(v, axis);
    (dot(v, v) - along * along).max(0.0).sqrt()
}

/// A qubit density matrix given by its Bloch vector `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub r: Vec3,
}

impl BlochState {
    /// `|0⟩`, eigenstate of σ_z with eigenvalue +1.
    pub const ZERO: BlochState = BlochState { r: [0.0, 0.0, 1.0] };
    /// `|1⟩`.
    pub const ONE: BlochState = BlochState { r: [0.0, 0.0, -1.0] };
    /// `|+⟩ = (|0⟩ + |1⟩)/√2`, the generation-run input.
    pub const PLUS: BlochState = BlochState { r: [1.0, 0.0, 0.0] };
    /// `|+i⟩ = (|0⟩ + i|1⟩)/√2`.
    pub const PLUS_I: BlochState = BlochState { r: [0.0, 1.0, 0.0] };
    /// The maximally mixed state `I/2`.
    pub const MIXED: BlochState = BlochState { r: [0.0, 0.0, 0.0] };

    pub fn new(r: Vec3) -> Result<Self> {
        let s = BlochState { r };
        s.validate()?;
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        norm(self.r)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || n > 1.0 + TOLERANCE {
            return Err(Error::UnphysicalState { norm: n });
        }
        Ok(())
    }

    pub fn is_pure(&self) -> bool {
        (self.norm() - 1.0).abs() <= TOLERANCE
    }

    /// Rejects anything that is not a pure state.
    pub fn require_pure(&self) -> Result<()> {
        self.validate()?;
        if !self.is_pure() {
            return Err(Error::MixedInput { norm: self.norm() });
        }
        Ok(())
    }
}

/// One effect `F = a(I + n·σ)` of a two-outcome qubit POVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmEffect {
    pub a: f64,
    pub n: Vec3,
}

impl PovmEffect {
    pub fn new(a: f64, n: Vec3) -> Self {
        PovmEffect { a, n }
    }

    /// The weighted vector `a·n`.
    pub fn weighted(&self) -> Vec3 {
        scale(self.n, self.a)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations(0);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidEffect(
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    fn violations(&self, index: u8) -> Vec<Violation> {
        let mut out = Vec::new();
        let len = norm(self.n);
        if !(self.a.is_finite() && len.is_finite()) {
            out.push(Violation {
                kind: ViolationKind::NonFinite { effect: index },
                residual: f64::INFINITY,
            });
            return out;
        }
        if self.a < -TOLERANCE {
            out.push(Violation {
                kind: ViolationKind::NegativeWeight { effect: index },
                residual: -self.a,
            });
        }
        if len > 1.0 + TOLERANCE {
            out.push(Violation {
                kind: ViolationKind::VectorTooLong { effect: index },
                residual: len - 1.0,
            });
        }
        let top = self.a * (1.0 + len);
        if top > 1.0 + TOLERANCE {
            out.push(Violation {
                kind: ViolationKind::ExceedsIdentity { effect: index },
                residual: top - 1.0,
            });
        }
        out
    }
}

/// A two-outcome POVM `{F₀, F₁}` with `F₀ + F₁ = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmPair {
    pub f0: PovmEffect,
    pub f1: PovmEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite { effect: u8 },
    NegativeWeight { effect: u8 },
    VectorTooLong { effect: u8 },
    ExceedsIdentity { effect: u8 },
    /// `a₁ + a₂ ≠ 1`
    WeightSum,
    /// `a₁n₁ + a₂n₂ ≠ 0`
    Completeness,
}

/// A violated POVM constraint together with its numeric residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(flatten)]
    pub kind: ViolationKind,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::NonFinite { effect } => write!(f, "F{effect} has non-finite entries"),
            ViolationKind::NegativeWeight { effect } => {
                write!(f, "F{effect}: a < 0 (residual {:e})", self.residual)
            }
            ViolationKind::VectorTooLong { effect } => {
                write!(f, "F{effect}: |n| > 1 (residual {:e})", self.residual)
            }
            ViolationKind::ExceedsIdentity { effect } => {
                write!(f, "F{effect}: a(1+|n|) > 1 (residual {:e})", self.residual)
            }
            ViolationKind::WeightSum => write!(f, "a0 + a1 != 1 (residual {:e})", self.residual),
            ViolationKind::Completeness => {
                write!(f, "a0 n0 + a1 n1 != 0 (residual {:e})", self.residual)
            }
        }
    }
}

impl PovmPair {
    /// Ideal σ_z measurement: `F₀ = |0⟩⟨0|`.
    pub const IDEAL_Z: PovmPair = PovmPair {
        f0: PovmEffect { a: 0.5, n: [0.0, 0.0, 1.0] },
        f1: PovmEffect { a: 0.5, n: [0.0, 0.0, -1.0] },
    };

    /// `F₀ = F₁ = I/2`: perfectly balanced outcomes, zero quantum randomness.
    pub const WHITE_NOISE: PovmPair = PovmPair {
        f0: PovmEffect { a: 0.5, n: [0.0; 3] },
        f1: PovmEffect { a: 0.5, n: [0.0; 3] },
    };

    pub fn new(f0: PovmEffect, f1: PovmEffect) -> Result<Self> {
        let p = PovmPair { f0, f1 };
        p.validate()?;
        Ok(p)
    }

    /// Builds the pair from outcome-0 weight `a` and weighted vector `m = a·n₀`.
    /// `F₁` follows from completeness.
    pub fn from_weighted(a: f64, m: Vec3) -> Self {
        let effect = |w: f64, v: Vec3| {
            if w > 0.0 {
                PovmEffect::new(w, scale(v, 1.0 / w))
            } else {
                PovmEffect::new(w, [0.0; 3])
            }
        };
        PovmPair {
            f0: effect(a, m),
            f1: effect(1.0 - a, scale(m, -1.0)),
        }
    }

    /// `(a₀, a₀·n₀)`.
    pub fn weighted(&self) -> (f64, Vec3) {
        (self.f0.a, self.f0.weighted())
    }

    /// The same measurement with outcomes relabeled.
    pub fn swapped(&self) -> Self {
        PovmPair { f0: self.f1, f1: self.f0 }
    }

    /// Every violated completeness or positivity constraint.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = self.f0.violations(0);
        out.extend(self.f1.violations(1));
        let sum = self.f0.a + self.f1.a;
        if (sum - 1.0).abs() > TOLERANCE || !sum.is_finite() {
            out.push(Violation { kind: ViolationKind::WeightSum, residual: (sum - 1.0).abs() });
        }
        let resid = norm(add(self.f0.weighted(), self.f1.weighted()));
        if resid > TOLERANCE || !resid.is_finite() {
            out.push(Violation { kind: ViolationKind::Completeness, residual: resid });
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPovm(v))
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.f0.a <= self.f1.a
    }
}

/// Outcome probability `tr(ρF) = a(1 + n·r)`.
pub fn born_prob(state: &BlochState, effect: &PovmEffect) -> Result<f64> {
    state.validate()?;
    effect.validate()?;
    Ok((effect.a * (1.0 + dot(effect.n, state.r))).clamp(0.0, 1.0))
}

/// Diagnostic check of a pair against the POVM constraints.
pub fn validate_povm(pair: &PovmPair) -> std::result::Result<(), Vec<Violation>> {
    let v = pair.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Relabels outcomes so that `f0.a ≤ f1.a`. The flag tells whether a relabel
/// happened, in which case the generated bit stream must be complemented.
pub fn canonicalize(pair: &PovmPair) -> (PovmPair, bool) {
    if pair.f0.a > pair.f1.a {
        (pair.swapped(), true)
    } else {
        (*pair, false)
    }
}

/// One projective branch `p·|ψ⟩⟨ψ|` of a standard decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub p: f64,
    pub psi: BlochState,
}

/// Standard-form decomposition: with probability `c` the device outputs 1
/// deterministically, otherwise it performs the PVM `{ψᵢ, ψᵢ⊥}` chosen with
/// weight `pᵢ`, so that `F₀ = Σ pᵢ |ψᵢ⟩⟨ψᵢ|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub c: f64,
    pub branches: Vec<Branch>,
}

impl Decomposition {
    /// The effect `Σ pᵢ (I + ψᵢ·σ)/2` reconstructed from the branches, in
    /// weighted form `(a, a·n)`.
    pub fn reconstruct_weighted(&self) -> (f64, Vec3) {
        let mut a = 0.0;
        let mut m = [0.0; 3];
        for b in &self.branches {
            a += b.p / 2.0;
            m = add(m, scale(b.psi.r, b.p / 2.0));
        }
        (a, m)
    }

    /// Largest absolute component error between the reconstruction and `f0`.
    pub fn reconstruction_residual(&self, f0: &PovmEffect) -> f64 {
        let (a, m) = self.reconstruct_weighted();
        let target = f0.weighted();
        let mut worst = (a - f0.a).abs();
        for k in 0..3 {
            worst = worst.max((m[k] - target[k]).abs());
        }
        worst
    }

    pub fn total_weight(&self) -> f64 {
        self.c + self.branches.iter().map(|b| b.p).sum::<f64>()
    }
}

/// The decomposition obtained by splitting `F₀ = a₁(1-|n₁|)I + a₁(|n₁|I + n₁·σ)`:
/// the isotropic mass goes to the `{|0⟩, |1⟩}` pair, the rest to one PVM along
/// `n₁/|n₁|`, and `c = a₂ - a₁`.
///
/// When `n₁ = 0` the directional branch has zero weight and is omitted, so the
/// isotropic pair alone carries `F₀`.
pub fn example_decomposition(pair: &PovmPair) -> Result<Decomposition> {
    pair.validate()?;
    if !pair.is_canonical() {
        return Err(Error::NotCanonical { a0: pair.f0.a, a1: pair.f1.a });
    }
    let a1 = pair.f0.a.max(0.0);
    let len = norm(pair.f0.n).min(1.0);
    let c1 = a1 * (1.0 - len);
    let directional = 2.0 * a1 * len;

    let mut branches = Vec::with_capacity(3);
    if c1 > 0.0 {
        branches.push(Branch { p: c1, psi: BlochState::ZERO });
        branches.push(Branch { p: c1, psi: BlochState::ONE });
    }
    if directional > 0.0 {
        let dir = scale(pair.f0.n, 1.0 / norm(pair.f0.n));
        branches.push(Branch { p: directional, psi: BlochState { r: dir } });
    }
    Ok(Decomposition { c: (pair.f1.a - pair.f0.a).max(0.0), branches })
}

/// `Σ pᵢ H∞(|⟨input|ψᵢ⟩|²)`; the deterministic branch contributes nothing.
pub fn decomposition_randomness(d: &Decomposition, input: &BlochState) -> Result<f64> {
    input.require_pure()?;
    let mut total = 0.0;
    for b in &d.branches {
        let overlap = ((1.0 + dot(input.r, b.psi.r)) / 2.0).clamp(0.0, 1.0);
        total += b.p * min_entropy_binary(overlap)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ATTACK: PovmPair = PovmPair {
        f0: PovmEffect { a: 0.75, n: [0.0, 0.0, 1.0 / 3.0] },
        f1: PovmEffect { a: 0.25, n: [0.0, 0.0, -1.0] },
    };

    #[test]
    fn born_rule_examples() {
        let z = PovmEffect::new(0.5, [0.0, 0.0, 1.0]);
        assert_eq!(born_prob(&BlochState::PLUS, &z).unwrap(), 0.5);
        assert_eq!(born_prob(&BlochState::ZERO, &z).unwrap(), 1.0);
        let p = born_prob(&BlochState::PLUS, &ATTACK.f0).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn born_rejects_unphysical_arguments() {
        let s = BlochState { r: [1.0, 1.0, 0.0] };
        assert!(born_prob(&s, &PovmPair::IDEAL_Z.f0).is_err());
        let e = PovmEffect::new(0.8, [0.0, 0.0, 0.9]);
        assert!(born_prob(&BlochState::PLUS, &e).is_err());
    }

    #[test]
    fn validate_examples() {
        assert!(validate_povm(&PovmPair::IDEAL_Z).is_ok());
        assert!(validate_povm(&PovmPair::WHITE_NOISE).is_ok());
        let bad = PovmPair {
            f0: PovmEffect::new(0.75, [0.0, 0.0, 1.0]),
            f1: PovmEffect::new(0.25, [0.0, 0.0, 1.0]),
        };
        let v = validate_povm(&bad).unwrap_err();
        assert!(v.iter().any(|x| x.kind == ViolationKind::Completeness));
        let c = v.iter().find(|x| x.kind == ViolationKind::Completeness).unwrap();
        assert!((c.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(canonicalize(&PovmPair::IDEAL_Z), (PovmPair::IDEAL_Z, false));
        let (c, swapped) = canonicalize(&ATTACK);
        assert!(swapped);
        assert_eq!(c.f0, ATTACK.f1);
        assert_eq!(c.f1, ATTACK.f0);
        let n = [0.3, -0.2, 0.5];
        let p = PovmPair::from_weighted(0.3, scale(n, 0.3));
        assert!(p.validate().is_ok());
        assert!(!canonicalize(&p).1);
        assert!((p.f1.n[2] + 3.0 / 7.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn example_decomposition_examples() {
        let d = example_decomposition(&PovmPair::IDEAL_Z).unwrap();
        assert_eq!(d.c, 0.0);
        assert_eq!(d.branches, vec![Branch { p: 1.0, psi: BlochState::ZERO }]);

        let d = example_decomposition(&PovmPair::WHITE_NOISE).unwrap();
        assert_eq!(d.c, 0.0);
        assert_eq!(
            d.branches,
            vec![
                Branch { p: 0.5, psi: BlochState::ZERO },
                Branch { p: 0.5, psi: BlochState::ONE }
            ]
        );

        let (attack, _) = canonicalize(&ATTACK);
        let d = example_decomposition(&attack).unwrap();
        assert!((d.c - 0.5).abs() < 1e-15);
        assert_eq!(d.branches.len(), 1);
        assert!((d.branches[0].p - 0.5).abs() < 1e-15);
        assert_eq!(d.branches[0].psi, BlochState::ONE);
        assert!(d.reconstruction_residual(&attack.f0) < 1e-12);
    }

    #[test]
    fn example_decomposition_requires_canonical() {
        assert!(matches!(example_decomposition(&ATTACK), Err(Error::NotCanonical { .. })));
    }

    #[test]
    fn decomposition_randomness_examples() {
        let d = Decomposition { c: 0.0, branches: vec![Branch { p: 1.0, psi: BlochState::ZERO }] };
        assert_eq!(decomposition_randomness(&d, &BlochState::PLUS).unwrap(), 1.0);
        let d = Decomposition { c: 1.0, branches: vec![] };
        assert_eq!(decomposition_randomness(&d, &BlochState::ZERO).unwrap(), 0.0);
        let d = Decomposition { c: 0.5, branches: vec![Branch { p: 0.5, psi: BlochState::ONE }] };
        assert_eq!(decomposition_randomness(&d, &BlochState::PLUS).unwrap(), 0.5);
        assert!(matches!(
            decomposition_randomness(&d, &BlochState::MIXED),
            Err(Error::MixedInput { .. })
        ));
    }
}
