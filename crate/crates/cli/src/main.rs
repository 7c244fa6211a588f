//! `mdiqrng`: tomography, certification, coherent-source sweeps, protocol
//! simulation and Toeplitz extraction from the command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 certification failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdi_qrng::coherent::{self, CoherentCounts, CoherentOptions, NoClick};
use mdi_qrng::extraction::{toeplitz_extract, BitString, ExtractorSpec};
use mdi_qrng::protocol::{self, DeviceModel, ProtocolConfig, RunCounts, Source};
use mdi_qrng::tomography::{predicted_frequencies, solve_tomography, TomographyCounts};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "mdiqrng", version, about = "Loss-tolerant measurement-device-independent QRNG toolkit")]
struct Cli {
    /// Output encoding
    #[arg(long, value_enum, global = true, default_value = "json")]
    format: Format,

    /// Write the report to this file (atomically) instead of stdout
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoClickArg {
    Zero,
    One,
}

impl From<NoClickArg> for NoClick {
    fn from(v: NoClickArg) -> Self {
        match v {
            NoClickArg::Zero => NoClick::Zero,
            NoClickArg::One => NoClick::One,
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
#[group(multiple = false)]
struct Transmittance {
    /// Transmittance as a fraction in [0, 1]
    #[arg(long)]
    eta: Option<f64>,

    /// Loss in dB, converted as η = 10^(-dB/10)
    #[arg(long)]
    eta_db: Option<f64>,
}

impl Transmittance {
    fn value(&self, default: f64) -> f64 {
        match (self.eta, self.eta_db) {
            (Some(eta), _) => eta,
            (None, Some(db)) => coherent::eta_from_db(db),
            (None, None) => default,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve measurement tomography from a counts file
    Tomo {
        /// Counts JSON with keys zero, one, plus, plus_i
        counts: PathBuf,
    },
    /// Certified rate and extractable length for observed counts
    Rate {
        /// Counts JSON; with --mu the keys are unpolarized, plus, plus_i, zero
        counts: PathBuf,
        /// Failure probability
        #[arg(long, default_value_t = 2f64.powi(-100))]
        epsilon: f64,
        /// Number of generation runs
        #[arg(long)]
        n_gen: u64,
        /// Mean photon number of a phase-randomized coherent source
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Optimal coherent-source rate as a function of loss
    Sweep {
        #[arg(long, default_value_t = 0.0)]
        eta_db_min: f64,
        #[arg(long, default_value_t = 30.0)]
        eta_db_max: f64,
        #[arg(long, default_value_t = 16)]
        points: usize,
        /// Pulses per second
        #[arg(long, default_value_t = 1e8)]
        rep_rate: f64,
        /// Points of the logarithmic intensity grid in [1e-6, 1]
        #[arg(long, default_value_t = 601)]
        mu_points: usize,
        /// Output assigned to pulses that produce no click
        #[arg(long, value_enum, default_value = "one")]
        no_click: NoClickArg,
    },
    /// Monte Carlo run of the protocol
    Simulate(SimulateArgs),
    /// Post-selection attack on a lossy device
    AttackDemo {
        #[arg(long, short, default_value_t = 1_000_000)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 2f64.powi(-100))]
        epsilon: f64,
    },
    /// Toeplitz hashing of a packed bit file
    Extract {
        /// Packed bit file (8-byte big-endian bit count, then MSB-first bytes)
        #[arg(long)]
        input: PathBuf,
        /// Seed as hex, read MSB-first; extra trailing bits are ignored
        #[arg(long, conflicts_with = "seed_file", required_unless_present = "seed_file")]
        seed_hex: Option<String>,
        /// Seed as a packed bit file
        #[arg(long)]
        seed_file: Option<PathBuf>,
        #[arg(long)]
        output_length: usize,
        /// Where to write the packed output bits
        #[arg(long)]
        bits_out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Protocol configuration JSON; flags below fill in when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Device model JSON; defaults to an honest lossy detector
    #[arg(long)]
    device: Option<PathBuf>,
    #[arg(long, short, default_value_t = 1_000_000)]
    n: u64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[command(flatten)]
    transmittance: Transmittance,
    #[arg(long, default_value_t = 2f64.powi(-100))]
    epsilon: f64,
    /// Mean photon number; simulates a coherent source when given
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, value_enum)]
    no_click: Option<NoClickArg>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where to write the packed generation bits
    #[arg(long)]
    bits_out: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Certification(String),
}

impl From<mdi_qrng::Error> for Failure {
    fn from(e: mdi_qrng::Error) -> Self {
        if e.is_certification_failure() {
            Failure::Certification(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type CmdResult = Result<Outcome, Failure>;

/// Rendered report plus whether the run certified anything.
struct Outcome {
    body: String,
    certified: bool,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_packed(path: &Path) -> Result<BitString, Failure> {
    let data = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    BitString::from_packed(&data).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Failure::Input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(data).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn render<T: Serialize>(format: Format, rows: &[T], single: bool) -> Result<String, Failure> {
    match format {
        Format::Json => {
            let text = if single && rows.len() == 1 {
                serde_json::to_string_pretty(&rows[0])
            } else {
                serde_json::to_string_pretty(rows)
            };
            text.map(|t| t + "\n").map_err(|e| Failure::Input(e.to_string()))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| Failure::Input(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Failure::Input(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Failure::Input(e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct TomoRow {
    a0: f64,
    n0_x: f64,
    n0_y: f64,
    n0_z: f64,
    a1: f64,
    n1_x: f64,
    n1_y: f64,
    n1_z: f64,
    projected: bool,
    residual_zero: f64,
    residual_one: f64,
    residual_plus: f64,
    residual_plus_i: f64,
}

fn cmd_tomo(format: Format, counts: &Path) -> CmdResult {
    let counts: TomographyCounts = read_json(counts)?;
    counts.validate()?;
    let observed = counts.frequencies()?;
    let t = solve_tomography(observed)?;
    let predicted = predicted_frequencies(&t.pair);
    let r: [f64; 4] = std::array::from_fn(|k| predicted[k] - observed[k]);
    let p = t.pair;
    let row = TomoRow {
        a0: p.f0.a,
        n0_x: p.f0.n[0],
        n0_y: p.f0.n[1],
        n0_z: p.f0.n[2],
        a1: p.f1.a,
        n1_x: p.f1.n[0],
        n1_y: p.f1.n[1],
        n1_z: p.f1.n[2],
        projected: t.projected,
        residual_zero: r[0],
        residual_one: r[1],
        residual_plus: r[2],
        residual_plus_i: r[3],
    };
    Ok(Outcome { body: render(format, &[row], true)?, certified: true })
}

#[derive(Serialize)]
struct RateRow {
    bits_per_run: f64,
    asymptotic_bits_per_run: f64,
    n_gen: u64,
    rn_length: u64,
    extractable_length: u64,
    epsilon: f64,
    theta_1: f64,
    theta_2: f64,
    theta_3: f64,
    theta_4: f64,
    labeling_swapped: bool,
    /// Worst-case outcome-0 effect.
    worst_a0: Option<f64>,
    worst_n0_x: Option<f64>,
    worst_n0_y: Option<f64>,
    worst_n0_z: Option<f64>,
    diagnostic: String,
}

fn cmd_rate(format: Format, counts: &Path, epsilon: f64, n_gen: u64, mu: Option<f64>) -> CmdResult {
    let counts = match mu {
        None => {
            let c: TomographyCounts = read_json(counts)?;
            c.validate()?;
            RunCounts::SinglePhoton { counts: c }
        }
        Some(mu) => {
            let c: CoherentCounts = read_json(counts)?;
            c.frequencies()?;
            RunCounts::Coherent { mu, counts: c }
        }
    };
    let row = match protocol::certify(&counts, n_gen, epsilon) {
        Ok(c) => {
            let (rn_length, extractable_length) = protocol::output_lengths(n_gen, c.bits_per_run, epsilon);
            RateRow {
                bits_per_run: c.bits_per_run,
                asymptotic_bits_per_run: c.asymptotic_bits_per_run,
                n_gen,
                rn_length,
                extractable_length,
                epsilon,
                theta_1: c.deviation.theta[0],
                theta_2: c.deviation.theta[1],
                theta_3: c.deviation.theta[2],
                theta_4: c.deviation.theta[3],
                labeling_swapped: c.labeling_swapped,
                worst_a0: Some(c.worst_pair.f0.a),
                worst_n0_x: Some(c.worst_pair.f0.n[0]),
                worst_n0_y: Some(c.worst_pair.f0.n[1]),
                worst_n0_z: Some(c.worst_pair.f0.n[2]),
                diagnostic: if c.bits_per_run > 0.0 { String::new() } else { "certified rate is zero".into() },
            }
        }
        Err(e) if e.is_certification_failure() => RateRow {
            bits_per_run: 0.0,
            asymptotic_bits_per_run: 0.0,
            n_gen,
            rn_length: 0,
            extractable_length: 0,
            epsilon,
            theta_1: f64::NAN,
            theta_2: f64::NAN,
            theta_3: f64::NAN,
            theta_4: f64::NAN,
            labeling_swapped: false,
            worst_a0: None,
            worst_n0_x: None,
            worst_n0_y: None,
            worst_n0_z: None,
            diagnostic: e.to_string(),
        },
        Err(e) => return Err(e.into()),
    };
    let certified = row.bits_per_run > 0.0;
    Ok(Outcome { body: render(format, &[row], true)?, certified })
}

fn cmd_sweep(
    format: Format,
    db_min: f64,
    db_max: f64,
    points: usize,
    rep_rate: f64,
    mu_points: usize,
    no_click: NoClick,
) -> CmdResult {
    if !(db_min.is_finite() && db_max.is_finite() && db_min >= 0.0 && db_max >= db_min) {
        return Err(Failure::Input(format!("invalid loss range [{db_min}, {db_max}] dB")));
    }
    if mu_points < 2 {
        return Err(Failure::Input("--mu-points must be at least 2".into()));
    }
    let etas: Vec<f64> = (0..points)
        .map(|k| {
            let db = if points == 1 { db_min } else { db_min + (db_max - db_min) * k as f64 / (points - 1) as f64 };
            coherent::eta_from_db(db)
        })
        .collect();
    let opts = CoherentOptions { rep_rate, no_click, ..CoherentOptions::default() };
    let rows = coherent::rate_sweep(&etas, &coherent::log_grid(1e-6, 1.0, mu_points), &opts)?;
    let body = match (format, rows.is_empty()) {
        (Format::Csv, true) => "eta,eta_db,mu_star,bits_per_pulse,bits_per_second\n".to_string(),
        _ => render(format, &rows, false)?,
    };
    Ok(Outcome { body, certified: true })
}

#[derive(Serialize)]
struct SimulateRow {
    n_runs: u64,
    n_test: u64,
    n_gen: u64,
    generation_ones_frequency: Option<f64>,
    empirical_min_entropy: Option<f64>,
    asymptotic_bits_per_run: Option<f64>,
    certified_bits_per_run: f64,
    rn_length: u64,
    extractable_length: u64,
    seed_subset_bits: f64,
    seed_probe_bits: f64,
    diagnostic: String,
}

fn cmd_simulate(format: Format, a: &SimulateArgs) -> CmdResult {
    let config = match &a.config {
        Some(path) => read_json::<ProtocolConfig>(path)?,
        None => {
            let source = a.mu.map_or(Source::SinglePhoton, |mu| Source::Coherent { mu });
            let default_no_click = if a.mu.is_some() { NoClick::One } else { NoClick::Zero };
            ProtocolConfig {
                epsilon: a.epsilon,
                source,
                no_click_maps_to: a.no_click.map_or(default_no_click, NoClick::from),
                ..ProtocolConfig::new(a.n, a.test_fraction)
            }
        }
    };
    let device = match &a.device {
        Some(path) => read_json::<DeviceModel>(path)?,
        None => DeviceModel::HonestLossy { eta: a.transmittance.value(1.0) },
    };
    let r = protocol::run_protocol(&config, &device, a.seed)?;
    if let Some(path) = &a.bits_out {
        write_atomic(path, &r.generation_bits.to_packed())?;
    }
    let row = SimulateRow {
        n_runs: config.n_runs,
        n_test: r.n_test,
        n_gen: r.n_gen,
        generation_ones_frequency: r.generation_ones_frequency,
        empirical_min_entropy: r.empirical_min_entropy,
        asymptotic_bits_per_run: r.certification.map(|c| c.asymptotic_bits_per_run),
        certified_bits_per_run: r.certified_bits_per_run,
        rn_length: r.rn_length,
        extractable_length: r.extractable_length,
        seed_subset_bits: r.seed.subset_bits,
        seed_probe_bits: r.seed.probe_bits,
        diagnostic: r.diagnostic.clone().unwrap_or_default(),
    };
    Ok(Outcome { body: render(format, &[row], true)?, certified: r.certified_bits_per_run > 0.0 })
}

#[derive(Serialize)]
struct AttackRow {
    n_runs: u64,
    n_gen: u64,
    ones_frequency: f64,
    ones_sigma: f64,
    empirical_min_entropy: f64,
    tomography_a0: Option<f64>,
    tomography_n0_z: Option<f64>,
    asymptotic_bits_per_run: f64,
    certified_bits_per_run: f64,
    extractable_length: u64,
}

fn cmd_attack(format: Format, n: u64, seed: u64, test_fraction: f64, epsilon: f64) -> CmdResult {
    let (r, _) = protocol::attack_demo(n, seed, test_fraction, epsilon)?;
    let row = AttackRow {
        n_runs: r.n_runs,
        n_gen: r.n_gen,
        ones_frequency: r.ones_frequency,
        ones_sigma: r.ones_sigma,
        empirical_min_entropy: r.empirical_min_entropy,
        tomography_a0: r.tomography.map(|t| t.pair.f0.a),
        tomography_n0_z: r.tomography.map(|t| t.pair.f0.n[2]),
        asymptotic_bits_per_run: r.asymptotic_bits_per_run,
        certified_bits_per_run: r.certified_bits_per_run,
        extractable_length: r.extractable_length,
    };
    Ok(Outcome { body: render(format, &[row], true)?, certified: true })
}

#[derive(Serialize)]
struct ExtractRow {
    input_length: usize,
    output_length: usize,
    seed_length: usize,
    output_hex: String,
}

fn cmd_extract(
    format: Format,
    input: &Path,
    seed_hex: Option<&str>,
    seed_file: Option<&Path>,
    output_length: usize,
    bits_out: Option<&Path>,
) -> CmdResult {
    let raw = read_packed(input)?;
    let spec = ExtractorSpec::new(raw.len(), output_length)?;
    let seed = match (seed_hex, seed_file) {
        (Some(h), _) => BitString::from_hex(h)?,
        (None, Some(p)) => read_packed(p)?,
        (None, None) => return Err(Failure::Input("a seed is required".into())),
    };
    if seed.len() < spec.seed_length() {
        return Err(Failure::Input(format!("seed has {} bits, needs {}", seed.len(), spec.seed_length())));
    }
    let out = toeplitz_extract(&raw, &seed.truncated(spec.seed_length()), &spec)?;
    if let Some(path) = bits_out {
        write_atomic(path, &out.to_packed())?;
    }
    let row = ExtractRow {
        input_length: spec.input_length,
        output_length: spec.output_length,
        seed_length: spec.seed_length(),
        output_hex: hex::encode(out.to_bytes_msb()),
    };
    Ok(Outcome { body: render(format, &[row], true)?, certified: true })
}

fn run(cli: &Cli) -> CmdResult {
    let f = cli.format;
    match &cli.command {
        Command::Tomo { counts } => cmd_tomo(f, counts),
        Command::Rate { counts, epsilon, n_gen, mu } => cmd_rate(f, counts, *epsilon, *n_gen, *mu),
        Command::Sweep { eta_db_min, eta_db_max, points, rep_rate, mu_points, no_click } => {
            cmd_sweep(f, *eta_db_min, *eta_db_max, *points, *rep_rate, *mu_points, (*no_click).into())
        }
        Command::Simulate(args) => cmd_simulate(f, args),
        Command::AttackDemo { n, seed, test_fraction, epsilon } => cmd_attack(f, *n, *seed, *test_fraction, *epsilon),
        Command::Extract { input, seed_hex, seed_file, output_length, bits_out } => cmd_extract(
            f,
            input,
            seed_hex.as_deref(),
            seed_file.as_deref(),
            *output_length,
            bits_out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Certification(msg)) => {
            eprintln!("certification failed: {msg}");
            return ExitCode::from(3);
        }
    };
    let written = match &cli.output {
        Some(path) => write_atomic(path, outcome.body.as_bytes()),
        None => {
            print!("{}", outcome.body);
            Ok(())
        }
    };
    if let Err(Failure::Input(msg) | Failure::Certification(msg)) = written {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    if outcome.certified {
        ExitCode::SUCCESS
    } else {
        eprintln!("certification failed: no randomness certified");
        ExitCode::from(3)
    }
}
