//! Finite-size corrections: how far the generation-run statistics can sit
//! from the observed test-run statistics, at a chosen failure probability.
//!
//! The random-sampling bound for a probe observed `e` times out of `Nᵢ` test
//! runs, with `N₀` generation runs, is
//!
//! ```text
//! P(e_z > e + θ) ≤ C · 2^{-(Nᵢ+N₀) ξ(θ)}
//! ξ(θ) = H(e + N₀θ/(N₀+Nᵢ)) - [Nᵢ H(e) + N₀ H(e+θ)] / (N₀+Nᵢ)
//! C    = sqrt(Nᵢ+N₀) / sqrt(Nᵢ N₀ e (1-e))
//! ```
//!
//! The scaled variant replaces `e` by `(1+e)/2` inside every entropy and uses
//! `C = 4 sqrt(Nᵢ+N₀) / sqrt(Nᵢ N₀ (1+e)(1-e))`; it is implemented exactly in
//! that form. Failure probabilities are evaluated in the log domain so that
//! targets such as `2^-100` do not underflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomography::TomographyResult;
use crate::worst_case::{minimize_rate, Interval, ParamBox, WorstCase};
use crate::randomness::EntropyKind;

const BISECTION_TOLERANCE: f64 = 1e-10;

/// `H(p) = -p log₂ p - (1-p) log₂(1-p)` with `H(0) = H(1) = 0`.
pub fn shannon_entropy_binary(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange { what: "Shannon entropy argument", value: p });
    }
    Ok(h(p))
}

fn h(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    #[default]
    Unscaled,
    Scaled,
}

fn check_counts(n_i: u64, n0: u64) -> Result<()> {
    if n_i == 0 || n0 == 0 {
        return Err(Error::Domain(format!("counts must be >= 1 (Nᵢ = {n_i}, N₀ = {n0})")));
    }
    Ok(())
}

fn xi_core(y: f64, theta: f64, n_i: u64, n0: u64) -> Result<f64> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::Domain(format!("θ = {theta} must be >= 0")));
    }
    if y + theta > 1.0 + 1e-15 {
        return Err(Error::Domain(format!("shifted frequency {} exceeds 1", y + theta)));
    }
    let (ni, n0) = (n_i as f64, n0 as f64);
    let total = ni + n0;
    let shifted = (y + theta).min(1.0);
    let mid = (y + n0 * theta / total).min(1.0);
    Ok((h(mid) - (ni * h(y) + n0 * h(shifted)) / total).max(0.0))
}

fn effective_unscaled(e: f64, n_i: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::ProbabilityOutOfRange { what: "observed frequency", value: e });
    }
    Ok(if e == 0.0 { (1.0 / n_i as f64).min(1.0) } else { e })
}

/// `ξ(θ)` for a frequency in `[0, 1]`; `e = 0` is replaced by `1/Nᵢ`.
pub fn xi_unscaled(theta: f64, n_i: u64, n0: u64, e: f64) -> Result<f64> {
    check_counts(n_i, n0)?;
    let e = effective_unscaled(e, n_i)?;
    xi_core(e, theta, n_i, n0)
}

/// `ξ(θ)` for a variable in `[-1, 1]` after the map `y = (1+e)/2`; `θ`
/// enters unscaled.
pub fn xi_scaled(theta: f64, n_i: u64, n0: u64, e: f64) -> Result<f64> {
    check_counts(n_i, n0)?;
    if !(-1.0..=1.0).contains(&e) {
        return Err(Error::Domain(format!("scaled variable {e} outside [-1, 1]")));
    }
    xi_core((1.0 + e) / 2.0, theta, n_i, n0)
}

/// log₂ of the failure bound before capping at 1.
fn log2_failure(kind: BoundKind, theta: f64, n_i: u64, n0: u64, e: f64) -> Result<f64> {
    let (ni, nz) = (n_i as f64, n0 as f64);
    let total = ni + nz;
    let (xi, log2_prefactor) = match kind {
        BoundKind::Unscaled => {
            let xi = xi_unscaled(theta, n_i, n0, e)?;
            let e = effective_unscaled(e, n_i)?;
            (xi, 0.5 * (total.log2() - ni.log2() - nz.log2() - (e * (1.0 - e)).log2()))
        }
        BoundKind::Scaled => {
            let xi = xi_scaled(theta, n_i, n0, e)?;
            let var = (1.0 + e) * (1.0 - e);
            (xi, 2.0 + 0.5 * (total.log2() - ni.log2() - nz.log2() - var.log2()))
        }
    };
    Ok(log2_prefactor - total * xi)
}

/// `min(1, C · 2^{-(Nᵢ+N₀)ξ(θ)})`.
pub fn failure_probability(kind: BoundKind, theta: f64, n_i: u64, n0: u64, e: f64) -> Result<f64> {
    Ok(log2_failure(kind, theta, n_i, n0, e)?.min(0.0).exp2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationInput {
    /// Test runs per probe, in probe order.
    pub n_test: [u64; 4],
    pub n_gen: u64,
    /// Observed outcome-0 frequencies, in probe order.
    pub observed: [f64; 4],
    /// Total failure probability, shared equally by the eight one-sided
    /// bounds (two per probe).
    pub epsilon: f64,
    #[serde(default)]
    pub kinds: [BoundKind; 4],
}

impl FluctuationInput {
    pub fn validate(&self) -> Result<()> {
        for &n in &self.n_test {
            check_counts(n, self.n_gen)?;
        }
        if let Some(&e) = self.observed.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::ProbabilityOutOfRange { what: "observed frequency", value: e });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Domain(format!("ε = {} must lie in (0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// Two-sided deviation per probe: with probability at least `1 - ε` every
/// generation-run frequency lies in `[e - lower, e + upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationBound {
    /// `max(lower, upper)` per probe.
    pub theta: [f64; 4],
    pub lower: [f64; 4],
    pub upper: [f64; 4],
    /// Failure probability actually achieved per probe (both sides).
    pub epsilon_achieved: [f64; 4],
    /// Sides where the target was unreachable and the domain edge was used.
    pub saturated: [bool; 4],
}

impl DeviationBound {
    pub fn zero() -> Self {
        DeviationBound {
            theta: [0.0; 4],
            lower: [0.0; 4],
            upper: [0.0; 4],
            epsilon_achieved: [0.0; 4],
            saturated: [false; 4],
        }
    }

    /// Interval `[e - lower, e + upper] ∩ [0, 1]` for each probe.
    pub fn intervals(&self, observed: [f64; 4]) -> [Interval; 4] {
        std::array::from_fn(|k| {
            Interval::new((observed[k] - self.lower[k]).max(0.0), (observed[k] + self.upper[k]).min(1.0))
        })
    }
}

struct Side {
    theta: f64,
    achieved: f64,
    saturated: bool,
}

/// Smallest upward deviation from `e` whose failure bound is at most
/// `target`. Deviations are measured from the observed value even when the
/// bound itself is evaluated at a substituted frequency.
fn one_side(kind: BoundKind, n_i: u64, n0: u64, e: f64, target: f64) -> Result<Side> {
    let (base, edge) = match kind {
        BoundKind::Unscaled => {
            let base = effective_unscaled(e, n_i)?;
            (base, 1.0 - base)
        }
        BoundKind::Scaled => (e, 1.0 - (1.0 + e) / 2.0),
    };
    let offset = match kind {
        BoundKind::Unscaled => base - e,
        BoundKind::Scaled => 0.0,
    };
    let log_target = target.log2();
    let fails = |theta: f64| -> Result<bool> { Ok(log2_failure(kind, theta, n_i, n0, base)? > log_target) };
    if edge <= 0.0 {
        // The variable cannot exceed its maximum.
        return Ok(Side { theta: offset, achieved: 0.0, saturated: false });
    }
    if !fails(0.0)? {
        let achieved = failure_probability(kind, 0.0, n_i, n0, base)?;
        return Ok(Side { theta: offset, achieved, saturated: false });
    }
    if fails(edge)? {
        return Ok(Side { theta: offset + edge, achieved: 0.0, saturated: true });
    }
    let (mut lo, mut hi) = (0.0, edge);
    while hi - lo > BISECTION_TOLERANCE {
        let mid = (lo + hi) / 2.0;
        if fails(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = failure_probability(kind, hi, n_i, n0, base)?;
    Ok(Side { theta: offset + hi, achieved, saturated: false })
}

/// Per-probe deviation at total failure probability `ε`, split as `ε/8` for
/// each side of each probe. The lower side applies the same bound to the
/// complementary outcome.
pub fn deviation_for_epsilon(input: &FluctuationInput) -> Result<DeviationBound> {
    input.validate()?;
    let target = input.epsilon / 8.0;
    let mut out = DeviationBound::zero();
    for k in 0..4 {
        let (n_i, e, kind) = (input.n_test[k], input.observed[k], input.kinds[k]);
        let mirrored = match kind {
            BoundKind::Unscaled => 1.0 - e,
            BoundKind::Scaled => -e,
        };
        let up = one_side(kind, n_i, input.n_gen, e, target)?;
        let down = one_side(kind, n_i, input.n_gen, mirrored, target)?;
        out.upper[k] = up.theta;
        out.lower[k] = down.theta;
        out.theta[k] = up.theta.max(down.theta);
        out.epsilon_achieved[k] = up.achieved + down.achieved;
        out.saturated[k] = up.saturated || down.saturated;
    }
    Ok(out)
}

/// Least random pair compatible with the tomography statistics widened by
/// `bound`.
pub fn worst_case_pair(result: &TomographyResult, bound: &DeviationBound) -> Result<WorstCase> {
    worst_case_pair_with(result, bound, EntropyKind::MinEntropy)
}

pub fn worst_case_pair_with(
    result: &TomographyResult,
    bound: &DeviationBound,
    kind: EntropyKind,
) -> Result<WorstCase> {
    let [a, mx, my, mz] = result.raw;
    let observed = [a + mz, a - mz, a + mx, a + my].map(|f| f.clamp(0.0, 1.0));
    minimize_rate(&tomography_box(bound.intervals(observed)), kind)
}

/// Parameter constraints implied by probe-frequency intervals in the order
/// `|0⟩, |1⟩, |+⟩, |+i⟩`.
pub fn tomography_box(iv: [Interval; 4]) -> ParamBox {
    ParamBox {
        a: Interval::new((iv[0].lo + iv[1].lo) / 2.0, (iv[0].hi + iv[1].hi) / 2.0),
        plus: [iv[2], iv[3], iv[0]],
        minus: [None, None, Some(iv[1])],
    }
}
