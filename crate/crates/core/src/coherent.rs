//! Phase-randomized coherent source.
//!
//! A pulse of mean photon number `μ` is vacuum with probability `e^{-μ}`,
//! a single photon with probability `μe^{-μ}`, and multi-photon otherwise.
//! Vacuum and single-photon pulses are treated together as one qubit channel
//! of weight `K = (1+μ)e^{-μ}`; multi-photon pulses are credited with no
//! randomness and may push each probe's outcome-0 probability anywhere within
//! their weight `M = 1 - K`. An observed probability `P` therefore constrains
//! the combined channel's parameters to
//!
//! ```text
//! K · (a₁ + a₁ n₁·r) ∈ [P - M, P]
//! ```
//!
//! for each probe with Bloch vector `r`. Probes are the unpolarized state
//! followed by `|+⟩`, `|+i⟩` and `|0⟩`, so the first one pins `a₁` alone.
//! The certified rate per pulse is `K` times the smallest closed-form rate
//! inside that box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{BlochState, PovmPair};
use crate::error::{Error, Result};
use crate::randomness::EntropyKind;
use crate::tomography::ProbeCount;
use crate::worst_case::{feasible_a_range, golden_min, minimize_rate, Interval, ParamBox};

/// Outcome reported when the detector does not click.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoClick {
    Zero,
    #[default]
    One,
}

impl NoClick {
    pub fn bit(self) -> u8 {
        match self {
            NoClick::Zero => 0,
            NoClick::One => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub mu: f64,
    pub eta: f64,
    pub rep_rate: f64,
    #[serde(default)]
    pub no_click: NoClick,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        check_mu(self.mu)?;
        check_eta(self.eta)?;
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(Error::Domain(format!("rep_rate = {} must be positive", self.rep_rate)));
        }
        Ok(())
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("μ = {mu} must be finite and >= 0")));
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::ProbabilityOutOfRange { what: "transmittance", value: eta });
    }
    Ok(())
}

/// Polarizations of the coherent probes, in order: unpolarized, `|+⟩`,
/// `|+i⟩`, `|0⟩`.
pub const PROBE_STATES: [BlochState; 4] =
    [BlochState::MIXED, BlochState::PLUS, BlochState::PLUS_I, BlochState::ZERO];

/// Outcome-0 counts for the coherent probes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentCounts {
    pub unpolarized: ProbeCount,
    pub plus: ProbeCount,
    pub plus_i: ProbeCount,
    pub zero: ProbeCount,
}

impl CoherentCounts {
    pub fn as_array(&self) -> [ProbeCount; 4] {
        [self.unpolarized, self.plus, self.plus_i, self.zero]
    }

    pub fn from_array(c: [ProbeCount; 4]) -> Self {
        CoherentCounts { unpolarized: c[0], plus: c[1], plus_i: c[2], zero: c[3] }
    }

    pub fn trials(&self) -> [u64; 4] {
        self.as_array().map(|c| c.trials)
    }

    pub fn frequencies(&self) -> Result<[f64; 4]> {
        let c = self.as_array();
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = c[k].frequency()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonFractions {
    pub vacuum: f64,
    pub single: f64,
    pub multi: f64,
}

impl PhotonFractions {
    /// Weight of the combined vacuum and single-photon channel.
    pub fn usable(&self) -> f64 {
        self.vacuum + self.single
    }
}

pub fn photon_fractions(mu: f64) -> Result<PhotonFractions> {
    check_mu(mu)?;
    let vacuum = (-mu).exp();
    let single = mu * vacuum;
    let multi = if mu < 0.5 {
        // e^{-μ} Σ_{k≥2} μ^k/k!, avoiding cancellation in 1 - e^{-μ}(1+μ).
        let mut term = mu * mu / 2.0;
        let mut sum = 0.0;
        let mut k = 2.0;
        while term > sum * 1e-17 && term > 0.0 {
            sum += term;
            k += 1.0;
            term *= mu / k;
        }
        sum * vacuum
    } else {
        1.0 - vacuum - single
    };
    Ok(PhotonFractions { vacuum, single, multi })
}

/// Outcome-0 probability intervals of an honest lossy Z measurement on the
/// four coherent probes, bracketing the multi-photon contribution between
/// never and always reading 0.
pub fn honest_model_probabilities(model: &SourceModel) -> Result<[Interval; 4]> {
    model.validate()?;
    let f = photon_fractions(model.mu)?;
    let (eta, mu) = (model.eta, model.mu);
    let ideal = [0.5, 0.5, 0.5, 1.0];
    Ok(ideal.map(|p| {
        let lo = match model.no_click {
            NoClick::One => eta * mu * (-mu).exp() * p,
            NoClick::Zero => f.vacuum + f.single * (1.0 - eta + eta * p),
        };
        Interval::new(lo.clamp(0.0, 1.0), (lo + f.multi).clamp(0.0, 1.0))
    }))
}

/// Parameter box for the combined channel. The first probe bounds `a₁` and
/// the others bound `a₁ + a₁n_k` for `k = x, y, z`.
pub type FeasibleBox = ParamBox;

/// Box implied by observed probabilities, each known to lie within the given
/// interval. Point intervals give the box of a single observation.
pub fn feasible_box_from_intervals(observed: [Interval; 4], mu: f64) -> Result<FeasibleBox> {
    for iv in &observed {
        if !(0.0 <= iv.lo && iv.lo <= iv.hi && iv.hi <= 1.0) {
            return Err(Error::Domain(format!("observation interval [{}, {}] not within [0, 1]", iv.lo, iv.hi)));
        }
    }
    let f = photon_fractions(mu)?;
    let k = f.usable();
    let scale = |iv: Interval| Interval::new(((iv.lo - f.multi) / k).max(0.0), (iv.hi / k).min(1.0));
    let b = ParamBox {
        a: scale(observed[0]),
        plus: [scale(observed[1]), scale(observed[2]), scale(observed[3])],
        minus: [None; 3],
    };
    feasible_a_range(&b)?;
    Ok(b)
}

pub fn feasible_box(observed: [f64; 4], mu: f64) -> Result<FeasibleBox> {
    if let Some(&p) = observed.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::ProbabilityOutOfRange { what: "observed probability", value: p });
    }
    feasible_box_from_intervals(observed.map(Interval::point), mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseRate {
    pub bits_per_pulse: f64,
    pub worst_pair: PovmPair,
    pub a_range: Interval,
}

/// `(1+μ)e^{-μ}` times the smallest rate inside the box.
pub fn worst_case_rate(b: &FeasibleBox, mu: f64, kind: EntropyKind) -> Result<WorstCaseRate> {
    let f = photon_fractions(mu)?;
    let w = minimize_rate(b, kind)?;
    Ok(WorstCaseRate { bits_per_pulse: f.usable() * w.bits, worst_pair: w.pair, a_range: w.a_range })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentOptions {
    pub rep_rate: f64,
    pub no_click: NoClick,
    pub entropy: EntropyKind,
}

impl Default for CoherentOptions {
    fn default() -> Self {
        CoherentOptions { rep_rate: 1e8, no_click: NoClick::One, entropy: EntropyKind::MinEntropy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub eta: f64,
    pub mu_star: f64,
    pub bits_per_pulse: f64,
    pub bits_per_second: f64,
    /// `None` when no intensity certifies anything.
    pub feasible_box: Option<FeasibleBox>,
    pub worst_pair: Option<PovmPair>,
}

/// Certified bits per pulse of an honest device at intensity `mu`, taking
/// the least favourable observation inside the model intervals. An empty
/// box certifies nothing.
pub fn honest_rate(eta: f64, mu: f64, opts: &CoherentOptions) -> Result<Option<(FeasibleBox, WorstCaseRate)>> {
    let model = SourceModel { mu, eta, rep_rate: opts.rep_rate, no_click: opts.no_click };
    let intervals = honest_model_probabilities(&model)?;
    // Minimizing over observations in the intervals equals minimizing over
    // the union of their boxes, which is the box of the interval endpoints.
    let b = match feasible_box_from_intervals(intervals, mu) {
        Ok(b) => b,
        Err(e) if e.is_certification_failure() => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some((b, worst_case_rate(&b, mu, opts.entropy)?)))
}

fn rate_or_zero(eta: f64, mu: f64, opts: &CoherentOptions) -> f64 {
    match honest_rate(eta, mu, opts) {
        Ok(Some((_, r))) => r.bits_per_pulse,
        _ => 0.0,
    }
}

/// `count` log-spaced intensities from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (l, h) = (lo.ln(), hi.ln());
            (0..count).map(|i| (l + (h - l) * i as f64 / (count - 1) as f64).exp()).collect()
        }
    }
}

/// Intensity grid used by default: `10⁻⁶` to `1`, 100 points per decade.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(1e-6, 1.0, 601)
}

/// Maximizes the certified rate over `mu_grid`, then refines between the
/// neighbours of the best grid point.
pub fn optimize_intensity(eta: f64, mu_grid: &[f64], opts: &CoherentOptions) -> Result<RateReport> {
    check_eta(eta)?;
    if mu_grid.is_empty() {
        return Err(Error::Config("intensity grid is empty".into()));
    }
    for &mu in mu_grid {
        check_mu(mu)?;
    }
    let rates: Vec<f64> = mu_grid.par_iter().map(|&mu| rate_or_zero(eta, mu, opts)).collect();
    let mut best = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > rates[best] {
            best = i;
        }
    }
    let mut mu_star = mu_grid[best];
    if rates[best] > 0.0 {
        let lo = if best > 0 { mu_grid[best - 1] } else { mu_star };
        let hi = if best + 1 < mu_grid.len() { mu_grid[best + 1] } else { mu_star };
        if hi > lo {
            let refined = golden_min(|mu| -rate_or_zero(eta, mu, opts), lo, hi);
            if rate_or_zero(eta, refined, opts) > rates[best] {
                mu_star = refined;
            }
        }
    }
    let (feasible_box, worst) = match honest_rate(eta, mu_star, opts)? {
        Some((b, w)) => (Some(b), Some(w)),
        None => (None, None),
    };
    let bits_per_pulse = worst.map_or(0.0, |w| w.bits_per_pulse);
    Ok(RateReport {
        eta,
        mu_star,
        bits_per_pulse,
        bits_per_second: bits_per_pulse * opts.rep_rate,
        feasible_box,
        worst_pair: worst.map(|w| w.worst_pair),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub eta_db: f64,
    pub mu_star: f64,
    pub bits_per_pulse: f64,
    pub bits_per_second: f64,
}

/// Loss in dB to transmittance.
pub fn eta_from_db(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn db_from_eta(eta: f64) -> f64 {
    -10.0 * eta.log10()
}

/// One optimized row per transmittance, in input order.
pub fn rate_sweep(etas: &[f64], mu_grid: &[f64], opts: &CoherentOptions) -> Result<Vec<SweepRow>> {
    etas.par_iter()
        .map(|&eta| {
            let r = optimize_intensity(eta, mu_grid, opts)?;
            Ok(SweepRow {
                eta,
                eta_db: db_from_eta(eta),
                mu_star: r.mu_star,
                bits_per_pulse: r.bits_per_pulse,
                bits_per_second: r.bits_per_second,
            })
        })
        .collect()
}
