//! Certified randomness of a two-outcome qubit POVM.
//!
//! The certified value is the minimum, over every way an adversary could
//! implement the POVM as a mixture of projective measurements plus a
//! deterministic branch, of the quantum min-entropy left in the outcome. For a
//! pure input with Bloch axis `r` and a canonical pair (`a₁ ≤ a₂`) it has the
//! closed form
//!
//! ```text
//! R = 2 a₁ H∞((1 + sqrt(1 - |n₁⊥|²)) / 2)
//! ```
//!
//! where `n₁⊥` is the part of `n₁` orthogonal to `r`. [`oracle`] recomputes the
//! same minimum by brute force over discretized decompositions.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::algebra::{self, canonicalize, BlochState, PovmPair, Vec3, TOLERANCE};
use crate::error::{Error, Result};

pub use oracle::{brute_force_randomness, OracleConfig, OracleResult};

/// `H∞(p) = -log₂ max(p, 1-p)`.
pub fn min_entropy_binary(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange { what: "min-entropy argument", value: p });
    }
    Ok(-p.max(1.0 - p).log2())
}

/// `H∞((1 + sqrt(1 - x²))/2)` for `x ∈ [0, 1]`: the min-entropy of measuring
/// a pure state whose Bloch vector has perpendicular component `x` relative
/// to the measured axis.
pub(crate) fn perp_entropy(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let p = (1.0 + (1.0 - x * x).max(0.0).sqrt()) / 2.0;
    -p.log2()
}

/// Entropy used to score a branch in the closed form. Certification uses the
/// min-entropy; the Shannon variant gives the more optimistic coherent-source
/// figure for comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    #[default]
    MinEntropy,
    Shannon,
}

impl EntropyKind {
    /// Entropy of a pure state with perpendicular component `x` measured
    /// along its axis.
    pub fn perp(self, x: f64) -> f64 {
        match self {
            EntropyKind::MinEntropy => perp_entropy(x),
            EntropyKind::Shannon => {
                let x = x.clamp(0.0, 1.0);
                let p = (1.0 + (1.0 - x * x).max(0.0).sqrt()) / 2.0;
                let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
                term(p) + term(1.0 - p)
            }
        }
    }
}

/// Closed form on weighted parameters: `a` is the outcome-0 weight (any
/// labeling), `m_perp` the norm of the input-orthogonal part of `a·n`.
pub fn rate_from_weighted(kind: EntropyKind, a: f64, m_perp: f64) -> f64 {
    let t = a.min(1.0 - a);
    if t <= 0.0 {
        return 0.0;
    }
    2.0 * t * kind.perp(snap_unit(m_perp / t, t)) + 0.0
}

/// Weights computed as `1 - a` carry an absolute error of a few ulps of 1,
/// which the square root in the closed form amplifies to ~1e-8 for pairs on
/// the physical boundary. `weight` is the weight `x` was normalized by.
fn snap_unit(x: f64, weight: f64) -> f64 {
    if weight * (1.0 - x) <= 4.0 * f64::EPSILON {
        1.0
    } else {
        x
    }
}

/// Certified randomness per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomnessValue {
    pub bits_per_run: f64,
    /// Whether the outcome labels had to be swapped to reach `a₁ ≤ a₂`.
    pub labeling_swapped: bool,
}

/// Closed-form certified randomness of `pair` on the pure state `input`.
pub fn certified_randomness(pair: &PovmPair, input: &BlochState) -> Result<RandomnessValue> {
    pair.validate()?;
    input.require_pure()?;
    let (canon, swapped) = canonicalize(pair);
    let a = canon.f0.a.max(0.0);
    let bits = if a == 0.0 {
        0.0
    } else {
        let axis = algebra::scale(input.r, 1.0 / input.norm());
        let x = algebra::perp_norm(canon.f0.n, axis);
        2.0 * a * perp_entropy(snap_unit(x, a)) + 0.0
    };
    Ok(RandomnessValue { bits_per_run: bits.clamp(0.0, 1.0), labeling_swapped: swapped })
}

/// Component-wise convex combination of POVM pairs: what tomography observes
/// when every run uses an independently chosen POVM.
pub fn average_povm(pairs: &[PovmPair], weights: &[f64]) -> Result<PovmPair> {
    if pairs.is_empty() || pairs.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} pairs vs {} weights",
            pairs.len(),
            weights.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::ProbabilityOutOfRange { what: "mixing weight", value: w });
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > TOLERANCE {
        return Err(Error::Config(format!("mixing weights sum to {total}, not 1")));
    }
    let mut a = 0.0;
    let mut m: Vec3 = [0.0; 3];
    for (p, &w) in pairs.iter().zip(weights) {
        p.validate()?;
        let (pa, pm) = p.weighted();
        a += w * pa;
        m = algebra::add(m, algebra::scale(pm, w));
    }
    Ok(PovmPair::from_weighted(a, m))
}
