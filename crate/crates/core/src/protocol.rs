//! Monte Carlo engine for the full protocol: run partitioning, device
//! models, counting and end-to-end certification.
//!
//! Every run draws its randomness from its own ChaCha stream, keyed by the
//! experiment seed and the run index, so any partition of the runs into
//! shards reproduces the same bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{born_prob, BlochState, PovmPair};
use crate::coherent::{
    feasible_box, feasible_box_from_intervals, worst_case_rate, CoherentCounts, FeasibleBox, NoClick,
    PROBE_STATES,
};
use crate::error::{Error, Result};
use crate::extraction::BitString;
use crate::finite_size::{deviation_for_epsilon, shannon_entropy_binary, worst_case_pair, DeviationBound, FluctuationInput};
use crate::randomness::{certified_randomness, min_entropy_binary, EntropyKind};
use crate::tomography::{predicted_frequencies, solve_tomography, Probe, ProbeCount, TomographyCounts, TomographyResult};

const SHARD_RUNS: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    #[default]
    SinglePhoton,
    Coherent { mu: f64 },
}

fn default_probes() -> [f64; 4] {
    [0.25; 4]
}

fn default_epsilon() -> f64 {
    2f64.powi(-100)
}

fn default_no_click() -> NoClick {
    NoClick::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_runs: u64,
    pub test_fraction: f64,
    #[serde(default = "default_probes")]
    pub probe_distribution: [f64; 4],
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub source: Source,
    #[serde(default = "default_no_click")]
    pub no_click_maps_to: NoClick,
}

impl ProtocolConfig {
    pub fn new(n_runs: u64, test_fraction: f64) -> Self {
        ProtocolConfig {
            n_runs,
            test_fraction,
            probe_distribution: default_probes(),
            epsilon: default_epsilon(),
            source: Source::SinglePhoton,
            no_click_maps_to: default_no_click(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction = {} must lie in (0, 1)", self.test_fraction)));
        }
        if self.probe_distribution.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probe probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = self.probe_distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("probe probabilities sum to {total}, not 1")));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("ε = {} must lie in (0, 1)", self.epsilon)));
        }
        if let Source::Coherent { mu } = self.source {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::Config(format!("μ = {mu} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Bits the adversary wants the device to output, one per run index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredeterminedStream {
    Explicit { bits: Vec<u8> },
    Seeded { seed: u64, length: u64 },
}

impl PredeterminedStream {
    pub fn bit(&self, run: u64) -> Result<u8> {
        match self {
            PredeterminedStream::Explicit { bits } => {
                bits.get(run as usize).map(|&b| (b != 0) as u8).ok_or(Error::StreamExhausted { run })
            }
            PredeterminedStream::Seeded { seed, length } => {
                if run >= *length {
                    return Err(Error::StreamExhausted { run });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(run);
                Ok(rng.random::<bool>() as u8)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceModel {
    /// Ideal Z measurement behind a detector of efficiency `eta`.
    HonestLossy { eta: f64 },
    /// Run `i` is measured with `schedule[i % schedule.len()]`.
    FixedPovm { schedule: Vec<PovmPair> },
    /// Measures Z faithfully and reports a loss whenever the outcome differs
    /// from the predetermined bit.
    PostselectionAttacker { stream: PredeterminedStream },
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DeviceModel::HonestLossy { eta } if !(0.0..=1.0).contains(eta) => {
                Err(Error::ProbabilityOutOfRange { what: "detector efficiency", value: *eta })
            }
            DeviceModel::FixedPovm { schedule } if schedule.is_empty() => {
                Err(Error::Config("POVM schedule is empty".into()))
            }
            DeviceModel::FixedPovm { schedule } => schedule.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }

    /// POVM that tomography converges to: the schedule average, or the
    /// closed-form pair of the honest and attacker models.
    pub fn average_pair(&self, no_click: NoClick) -> Result<PovmPair> {
        let lost = |eta: f64| match no_click {
            NoClick::Zero => PovmPair::from_weighted(1.0 - eta / 2.0, [0.0, 0.0, eta / 2.0]),
            NoClick::One => PovmPair::from_weighted(eta / 2.0, [0.0, 0.0, eta / 2.0]),
        };
        match self {
            DeviceModel::HonestLossy { eta } => Ok(lost(*eta)),
            DeviceModel::FixedPovm { schedule } => {
                let w = vec![1.0 / schedule.len() as f64; schedule.len()];
                crate::randomness::average_povm(schedule, &w)
            }
            // A fair predetermined stream keeps half of the Z outcomes.
            DeviceModel::PostselectionAttacker { .. } => Ok(lost(0.5)),
        }
    }
}

fn ideal_z<R: Rng>(state: &BlochState, rng: &mut R) -> u8 {
    let p0 = ((1.0 + state.r[2]) / 2.0).clamp(0.0, 1.0);
    (!rng.random_bool(p0)) as u8
}

/// Output bit of `device` for a single-photon `probe` on run `run`.
pub fn device_response<R: Rng>(
    device: &DeviceModel,
    probe: &BlochState,
    run: u64,
    no_click: NoClick,
    rng: &mut R,
) -> Result<u8> {
    probe.validate()?;
    match device {
        DeviceModel::HonestLossy { eta } => {
            Ok(if rng.random_bool(*eta) { ideal_z(probe, rng) } else { no_click.bit() })
        }
        DeviceModel::FixedPovm { schedule } => {
            let pair = &schedule[(run % schedule.len() as u64) as usize];
            let p0 = born_prob(probe, &pair.f0)?.clamp(0.0, 1.0);
            Ok((!rng.random_bool(p0)) as u8)
        }
        DeviceModel::PostselectionAttacker { stream } => {
            let z = ideal_z(probe, rng);
            Ok(if z == stream.bit(run)? { z } else { no_click.bit() })
        }
    }
}

/// Output bit for a phase-randomized pulse carrying `photons` photons.
fn pulse_response<R: Rng>(
    device: &DeviceModel,
    probe: &BlochState,
    photons: u64,
    run: u64,
    no_click: NoClick,
    rng: &mut R,
) -> Result<u8> {
    if photons == 0 {
        return Ok(no_click.bit());
    }
    match device {
        DeviceModel::HonestLossy { eta } => {
            // The first detected photon decides the outcome.
            let click = 1.0 - (1.0 - eta).powf(photons as f64);
            Ok(if rng.random_bool(click.clamp(0.0, 1.0)) { ideal_z(probe, rng) } else { no_click.bit() })
        }
        _ => device_response(device, probe, run, no_click, rng),
    }
}

/// Counts and generation bits of a contiguous range of runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Shard {
    pub counts: [ProbeCount; 4],
    pub generation: BitString,
}

impl Shard {
    /// Concatenation of two adjacent shards.
    pub fn merge(mut self, next: Shard) -> Shard {
        for k in 0..4 {
            self.counts[k].trials += next.counts[k].trials;
            self.counts[k].zeros += next.counts[k].zeros;
        }
        self.generation.append(&next.generation);
        self
    }
}

pub fn simulate_range(
    config: &ProtocolConfig,
    device: &DeviceModel,
    seed: u64,
    runs: std::ops::Range<u64>,
) -> Result<Shard> {
    let base = ChaCha8Rng::seed_from_u64(seed);
    let poisson = match config.source {
        Source::Coherent { mu } if mu > 0.0 => {
            Some(Poisson::new(mu).map_err(|e| Error::Config(format!("Poisson(μ = {mu}): {e}")))?)
        }
        _ => None,
    };
    let mut shard = Shard { counts: Default::default(), generation: BitString::with_capacity((runs.end - runs.start) as usize) };
    for run in runs {
        let mut rng = base.clone();
        rng.set_stream(run);
        let test = rng.random_bool(config.test_fraction);
        let probe = if test {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = 3;
            for (i, p) in config.probe_distribution.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = i;
                    break;
                }
            }
            Some(k)
        } else {
            None
        };
        let bit = match config.source {
            Source::SinglePhoton => {
                let state = probe.map_or(BlochState::PLUS, |k| Probe::ALL[k].state());
                device_response(device, &state, run, config.no_click_maps_to, &mut rng)?
            }
            Source::Coherent { .. } => {
                let state = probe.map_or(BlochState::PLUS, |k| PROBE_STATES[k]);
                let photons = poisson.as_ref().map_or(0, |d| d.sample(&mut rng) as u64);
                pulse_response(device, &state, photons, run, config.no_click_maps_to, &mut rng)?
            }
        };
        match probe {
            Some(k) => shard.counts[k].record(bit),
            None => shard.generation.push(bit == 1),
        }
    }
    Ok(shard)
}

/// Probe counts with the probe convention of the source they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RunCounts {
    SinglePhoton { counts: TomographyCounts },
    Coherent { mu: f64, counts: CoherentCounts },
}

impl RunCounts {
    pub fn trials(&self) -> [u64; 4] {
        match self {
            RunCounts::SinglePhoton { counts } => counts.trials(),
            RunCounts::Coherent { counts, .. } => counts.trials(),
        }
    }

    pub fn frequencies(&self) -> Result<[f64; 4]> {
        match self {
            RunCounts::SinglePhoton { counts } => {
                counts.validate()?;
                counts.frequencies()
            }
            RunCounts::Coherent { counts, .. } => counts.frequencies(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    /// Point estimate from the raw frequencies (single-photon source).
    pub tomography: Option<TomographyResult>,
    pub deviation: DeviationBound,
    /// Widened parameter box (coherent source).
    pub feasible_box: Option<FeasibleBox>,
    pub worst_pair: PovmPair,
    /// Certified bits per generation run after finite-size widening.
    pub bits_per_run: f64,
    /// Rate of the point estimate, without finite-size widening.
    pub asymptotic_bits_per_run: f64,
    pub labeling_swapped: bool,
}

/// Tomography, finite-size widening and worst-case randomness for observed
/// counts and `n_gen` generation runs.
pub fn certify(counts: &RunCounts, n_gen: u64, epsilon: f64) -> Result<Certification> {
    let observed = counts.frequencies()?;
    let deviation = deviation_for_epsilon(&FluctuationInput {
        n_test: counts.trials(),
        n_gen,
        observed,
        epsilon,
        kinds: Default::default(),
    })?;
    match counts {
        RunCounts::SinglePhoton { .. } => {
            let tomography = solve_tomography(observed)?;
            let worst = worst_case_pair(&tomography, &deviation)?;
            let asymptotic = certified_randomness(&tomography.pair, &BlochState::PLUS)?.bits_per_run;
            Ok(Certification {
                tomography: Some(tomography),
                deviation,
                feasible_box: None,
                worst_pair: worst.pair,
                bits_per_run: worst.bits,
                asymptotic_bits_per_run: asymptotic,
                labeling_swapped: certified_randomness(&worst.pair, &BlochState::PLUS)?.labeling_swapped,
            })
        }
        RunCounts::Coherent { mu, .. } => {
            let b = feasible_box_from_intervals(deviation.intervals(observed), *mu)?;
            let worst = worst_case_rate(&b, *mu, EntropyKind::MinEntropy)?;
            let asymptotic = match feasible_box(observed, *mu) {
                Ok(point) => worst_case_rate(&point, *mu, EntropyKind::MinEntropy)?.bits_per_pulse,
                Err(e) if e.is_certification_failure() => 0.0,
                Err(e) => return Err(e),
            };
            Ok(Certification {
                tomography: None,
                deviation,
                feasible_box: Some(b),
                worst_pair: worst.worst_pair,
                bits_per_run: worst.bits_per_pulse,
                asymptotic_bits_per_run: asymptotic,
                labeling_swapped: certified_randomness(&worst.worst_pair, &BlochState::PLUS)?.labeling_swapped,
            })
        }
    }
}

/// `floor(N·R)` and `floor(N·R - 2 log₂(1/ε))`, both floored at zero.
pub fn output_lengths(n_gen: u64, bits_per_run: f64, epsilon: f64) -> (u64, u64) {
    let raw = n_gen as f64 * bits_per_run.max(0.0);
    let deducted = raw - 2.0 * (1.0 / epsilon).log2();
    (raw.floor().max(0.0) as u64, deducted.floor().max(0.0) as u64)
}

/// Seed consumed by run-type selection and probe choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedAccounting {
    pub subset_bits: f64,
    pub probe_bits: f64,
    pub total_bits: f64,
}

pub fn seed_accounting(n_runs: u64, n_test: u64, test_fraction: f64, probes: &[f64; 4]) -> SeedAccounting {
    let subset_bits = n_runs as f64 * shannon_entropy_binary(test_fraction).unwrap_or(0.0);
    let probe_entropy: f64 = probes.iter().filter(|&&p| p > 0.0).map(|p| -p * p.log2()).sum();
    let probe_bits = n_test as f64 * probe_entropy;
    SeedAccounting { subset_bits, probe_bits, total_bits: subset_bits + probe_bits }
}

/// `-log₂ max(p̂₀, p̂₁)` of a nonempty bit stream.
pub fn empirical_min_entropy(bits: &BitString) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::Domain("empirical min-entropy of an empty stream".into()));
    }
    min_entropy_binary(bits.count_ones() as f64 / bits.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub counts: RunCounts,
    #[serde(skip)]
    pub generation_bits: BitString,
    pub n_test: u64,
    pub n_gen: u64,
    pub generation_ones_frequency: Option<f64>,
    pub empirical_min_entropy: Option<f64>,
    pub certification: Option<Certification>,
    pub certified_bits_per_run: f64,
    /// `floor(N_gen · R)`.
    pub rn_length: u64,
    /// `floor(N_gen · R - 2 log₂(1/ε))`.
    pub extractable_length: u64,
    pub seed: SeedAccounting,
    /// Why nothing was certified, when that happens.
    pub diagnostic: Option<String>,
}

pub fn run_protocol(config: &ProtocolConfig, device: &DeviceModel, seed: u64) -> Result<ProtocolResult> {
    config.validate()?;
    device.validate()?;
    let shards: Vec<Shard> = (0..config.n_runs.div_ceil(SHARD_RUNS))
        .into_par_iter()
        .map(|s| simulate_range(config, device, seed, s * SHARD_RUNS..((s + 1) * SHARD_RUNS).min(config.n_runs)))
        .collect::<Result<_>>()?;
    let merged = shards.into_iter().fold(Shard::default(), Shard::merge);
    Ok(finish(config, merged))
}

fn finish(config: &ProtocolConfig, shard: Shard) -> ProtocolResult {
    let counts = match config.source {
        Source::SinglePhoton => RunCounts::SinglePhoton { counts: TomographyCounts::from_array(shard.counts) },
        Source::Coherent { mu } => RunCounts::Coherent { mu, counts: CoherentCounts::from_array(shard.counts) },
    };
    let n_test: u64 = shard.counts.iter().map(|c| c.trials).sum();
    let n_gen = shard.generation.len() as u64;
    let bits = &shard.generation;
    let (certification, diagnostic) = if n_gen == 0 {
        (None, Some("no generation runs".to_string()))
    } else {
        match certify(&counts, n_gen, config.epsilon) {
            Ok(c) if c.bits_per_run > 0.0 => (Some(c), None),
            Ok(c) => (Some(c), Some("certified rate is zero".to_string())),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let rate = certification.map_or(0.0, |c| c.bits_per_run);
    let (rn_length, extractable_length) = output_lengths(n_gen, rate, config.epsilon);
    ProtocolResult {
        counts,
        n_test,
        n_gen,
        generation_ones_frequency: (n_gen > 0).then(|| bits.count_ones() as f64 / n_gen as f64),
        empirical_min_entropy: empirical_min_entropy(bits).ok(),
        certification,
        certified_bits_per_run: rate,
        rn_length,
        extractable_length,
        seed: seed_accounting(config.n_runs, n_test, config.test_fraction, &config.probe_distribution),
        diagnostic,
        generation_bits: shard.generation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub n_runs: u64,
    pub n_gen: u64,
    pub ones_frequency: f64,
    /// Standard deviation of the 1-frequency if each bit is 1 with
    /// probability ¼.
    pub ones_sigma: f64,
    pub tomography: Option<TomographyResult>,
    pub empirical_min_entropy: f64,
    /// Closed-form rate of the tomography estimate.
    pub asymptotic_bits_per_run: f64,
    /// Rate after finite-size widening.
    pub certified_bits_per_run: f64,
    pub extractable_length: u64,
    pub diagnostic: Option<String>,
}

/// Post-selection attack with a fair predetermined stream, certified on the
/// single-photon pipeline with lost runs reported as 0.
pub fn attack_demo(n_runs: u64, seed: u64, test_fraction: f64, epsilon: f64) -> Result<(AttackReport, ProtocolResult)> {
    let config = ProtocolConfig { epsilon, ..ProtocolConfig::new(n_runs, test_fraction) };
    let device = DeviceModel::PostselectionAttacker {
        stream: PredeterminedStream::Seeded { seed: seed ^ 0x5eed_5eed_5eed_5eed, length: n_runs },
    };
    let r = run_protocol(&config, &device, seed)?;
    let ones = r.generation_ones_frequency.ok_or_else(|| Error::Config("no generation runs".into()))?;
    let report = AttackReport {
        n_runs,
        n_gen: r.n_gen,
        ones_frequency: ones,
        ones_sigma: (0.25 * 0.75 / r.n_gen as f64).sqrt(),
        tomography: r.certification.and_then(|c| c.tomography),
        empirical_min_entropy: r.empirical_min_entropy.unwrap_or(0.0),
        asymptotic_bits_per_run: r.certification.map_or(0.0, |c| c.asymptotic_bits_per_run),
        certified_bits_per_run: r.certified_bits_per_run,
        extractable_length: r.extractable_length,
        diagnostic: r.diagnostic.clone(),
    };
    Ok((report, r))
}

/// `log₂ C(n, k)`.
pub fn log2_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|j| ((n - j) as f64 / (k - j) as f64).log2()).sum()
}

/// Output and seed budget of an experiment with `n_test_per_probe` runs on
/// each probe and `n_gen` generation runs, for a device whose statistics
/// match `pair` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPoint {
    pub n_gen: u64,
    pub bits_per_run: f64,
    pub output_bits: u64,
    /// `log₂` of the number of ways to place the test runs.
    pub subset_seed_bits: f64,
    pub probe_seed_bits: f64,
    pub ratio: f64,
}

pub fn expansion_point(pair: &PovmPair, n_test_per_probe: u64, n_gen: u64, epsilon: f64) -> Result<ExpansionPoint> {
    let observed = predicted_frequencies(pair);
    let counts = TomographyCounts::from_array(observed.map(|f| ProbeCount {
        trials: n_test_per_probe,
        zeros: (f * n_test_per_probe as f64).round() as u64,
    }));
    let c = certify(&RunCounts::SinglePhoton { counts }, n_gen, epsilon)?;
    let (_, output_bits) = output_lengths(n_gen, c.bits_per_run, epsilon);
    let n_test = 4 * n_test_per_probe;
    let subset_seed_bits = log2_binomial(n_gen + n_test, n_test);
    let probe_seed_bits = 2.0 * n_test as f64;
    Ok(ExpansionPoint {
        n_gen,
        bits_per_run: c.bits_per_run,
        output_bits,
        subset_seed_bits,
        probe_seed_bits,
        ratio: output_bits as f64 / (subset_seed_bits + probe_seed_bits),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let honest = DeviceModel::HonestLossy { eta: 1.0 };
        for run in 0..200 {
            assert_eq!(device_response(&honest, &BlochState::ZERO, run, NoClick::Zero, &mut rng).unwrap(), 0);
        }
        let noise = DeviceModel::FixedPovm { schedule: vec![PovmPair::WHITE_NOISE] };
        let ones: u32 = (0..20_000)
            .map(|run| device_response(&noise, &BlochState::ZERO, run, NoClick::Zero, &mut rng).unwrap() as u32)
            .sum();
        assert!((ones as f64 / 20_000.0 - 0.5).abs() < 0.02);

        let attacker = DeviceModel::PostselectionAttacker { stream: PredeterminedStream::Explicit { bits: vec![0] } };
        assert_eq!(device_response(&attacker, &BlochState::ONE, 0, NoClick::Zero, &mut rng).unwrap(), 0);
        assert_eq!(
            device_response(&attacker, &BlochState::ONE, 1, NoClick::Zero, &mut rng).unwrap_err(),
            Error::StreamExhausted { run: 1 }
        );
        let seeded = PredeterminedStream::Seeded { seed: 3, length: 10 };
        assert_eq!(seeded.bit(4).unwrap(), seeded.bit(4).unwrap());
        assert!(seeded.bit(10).is_err());
    }

    #[test]
    fn deterministic_and_shard_independent() {
        let config = ProtocolConfig::new(150_000, 0.2);
        let device = DeviceModel::HonestLossy { eta: 0.3 };
        let a = run_protocol(&config, &device, 42).unwrap();
        let b = run_protocol(&config, &device, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generation_bits, b.generation_bits);
        let one = simulate_range(&config, &device, 42, 0..150_000).unwrap();
        let split = simulate_range(&config, &device, 42, 0..12_345)
            .unwrap()
            .merge(simulate_range(&config, &device, 42, 12_345..150_000).unwrap());
        assert_eq!(one, split);
        assert_eq!(one.generation, a.generation_bits);
        let c = run_protocol(&config, &device, 43).unwrap();
        assert_ne!(a.generation_bits, c.generation_bits);
    }

    #[test]
    fn honest_ideal_device_approaches_one_bit() {
        let config = ProtocolConfig::new(1_000_000, 0.2);
        let r = run_protocol(&config, &DeviceModel::HonestLossy { eta: 1.0 }, 7).unwrap();
        let c = r.certification.unwrap();
        assert!(c.asymptotic_bits_per_run > 0.99);
        assert!(r.certified_bits_per_run > 0.6 && r.certified_bits_per_run < 1.0);
        assert!(r.extractable_length < r.rn_length && r.rn_length <= r.n_gen);
        assert_eq!(r.n_test + r.n_gen, 1_000_000);
    }

    #[test]
    fn honest_lossy_device_approaches_eta() {
        let config = ProtocolConfig::new(1_000_000, 0.5);
        let r = run_protocol(&config, &DeviceModel::HonestLossy { eta: 0.1 }, 11).unwrap();
        let c = r.certification.unwrap();
        assert!((c.asymptotic_bits_per_run - 0.1).abs() < 0.02, "{}", c.asymptotic_bits_per_run);
        assert!(r.certified_bits_per_run <= c.asymptotic_bits_per_run + 1e-9);
    }

    #[test]
    fn white_noise_device_is_rejected() {
        let config = ProtocolConfig::new(100_000, 0.3);
        let r = run_protocol(&config, &DeviceModel::FixedPovm { schedule: vec![PovmPair::WHITE_NOISE] }, 5).unwrap();
        assert_eq!(r.certified_bits_per_run, 0.0);
        assert_eq!(r.extractable_length, 0);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn collective_schedule_certifies_the_average() {
        let attack = PovmPair::from_weighted(0.75, [0.0, 0.0, 0.25]);
        let device = DeviceModel::FixedPovm { schedule: vec![attack, PovmPair::IDEAL_Z] };
        let avg = device.average_pair(NoClick::Zero).unwrap();
        let config = ProtocolConfig::new(1_000_000, 0.5);
        let r = run_protocol(&config, &device, 9).unwrap();
        let c = r.certification.unwrap();
        let expected = certified_randomness(&avg, &BlochState::PLUS).unwrap().bits_per_run;
        assert!((c.asymptotic_bits_per_run - expected).abs() < 0.03);
        // Convexity: the average certifies no more than the mean of the parts.
        let parts = (0.5 + 1.0) / 2.0;
        assert!(expected <= parts + 1e-9);
    }

    #[test]
    fn attacker_statistics() {
        let (report, _) = attack_demo(400_000, 3, 0.2, 2f64.powi(-100)).unwrap();
        assert!((report.ones_frequency - 0.25).abs() < 4.0 * report.ones_sigma);
        assert!((report.empirical_min_entropy - (4.0f64 / 3.0).log2()).abs() < 0.01);
        let t = report.tomography.unwrap();
        assert!((t.pair.f0.a - 0.75).abs() < 0.01);
        assert!(report.asymptotic_bits_per_run <= 0.5 + 1e-9);
        assert!(report.certified_bits_per_run < report.asymptotic_bits_per_run);
    }

    #[test]
    fn coherent_source_pipeline() {
        let config = ProtocolConfig {
            source: Source::Coherent { mu: 0.05 },
            no_click_maps_to: NoClick::One,
            ..ProtocolConfig::new(2_000_000, 0.5)
        };
        let r = run_protocol(&config, &DeviceModel::HonestLossy { eta: 1.0 }, 17).unwrap();
        let c = r.certification.unwrap();
        assert!(c.feasible_box.is_some());
        assert!(c.asymptotic_bits_per_run > 0.0);
        assert!(c.bits_per_run <= c.asymptotic_bits_per_run);
        let f = crate::coherent::photon_fractions(0.05).unwrap();
        assert!(c.asymptotic_bits_per_run <= f.single + 1e-9);
    }

    #[test]
    fn accounting_and_lengths() {
        assert_eq!(output_lengths(1000, 0.5, 0.25), (500, 496));
        assert_eq!(output_lengths(10, 0.1, 2f64.powi(-100)), (1, 0));
        let s = seed_accounting(1000, 100, 0.5, &[0.25; 4]);
        assert_eq!((s.subset_bits, s.probe_bits), (1000.0, 200.0));
        assert!((log2_binomial(10, 3) - 120f64.log2()).abs() < 1e-12);
        assert_eq!(log2_binomial(5, 0), 0.0);
        assert!(empirical_min_entropy(&BitString::zeros(8)).unwrap() == 0.0);
        assert!(empirical_min_entropy(&BitString::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::new(10, 0.0).validate().is_err());
        assert!(ProtocolConfig { probe_distribution: [0.5, 0.5, 0.5, 0.0], ..ProtocolConfig::new(10, 0.1) }
            .validate()
            .is_err());
        let json = r#"{"n_runs": 10, "test_fraction": 0.1}"#;
        let c: ProtocolConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.no_click_maps_to, NoClick::Zero);
        assert_eq!(c.probe_distribution, [0.25; 4]);
        assert!(serde_json::from_str::<ProtocolConfig>(r#"{"n_runs": 1, "test_fraction": 0.1, "x": 1}"#).is_err());
    }
}
