//! Measurement tomography from probe-state statistics.
//!
//! Probes are sent in the fixed order `|0⟩, |1⟩, |+⟩, |+i⟩`. For a pair with
//! weighted outcome-0 parameters `(a, m) = (a₁, a₁n₁)` the probability of
//! reading 0 on each probe is
//!
//! ```text
//! f = (a + m_z, a - m_z, a + m_x, a + m_y)
//! ```
//!
//! which is inverted exactly by [`solve_tomography`].

use serde::{Deserialize, Serialize};

use crate::algebra::{self, BlochState, PovmPair, Vec3, TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Zero,
    One,
    Plus,
    PlusI,
}

impl Probe {
    pub const ALL: [Probe; 4] = [Probe::Zero, Probe::One, Probe::Plus, Probe::PlusI];

    pub fn state(self) -> BlochState {
        match self {
            Probe::Zero => BlochState::ZERO,
            Probe::One => BlochState::ONE,
            Probe::Plus => BlochState::PLUS,
            Probe::PlusI => BlochState::PLUS_I,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCount {
    pub trials: u64,
    pub zeros: u64,
}

impl ProbeCount {
    pub fn frequency(&self) -> Result<f64> {
        if self.zeros > self.trials {
            return Err(Error::Domain(format!(
                "zeros ({}) exceed trials ({})",
                self.zeros, self.trials
            )));
        }
        if self.trials == 0 {
            return Err(Error::Domain("probe has no trials".into()));
        }
        Ok(self.zeros as f64 / self.trials as f64)
    }

    pub fn record(&mut self, bit: u8) {
        self.trials += 1;
        if bit == 0 {
            self.zeros += 1;
        }
    }
}

/// Per-probe outcome-0 counts from test runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyCounts {
    pub zero: ProbeCount,
    pub one: ProbeCount,
    pub plus: ProbeCount,
    pub plus_i: ProbeCount,
}

impl TomographyCounts {
    pub fn get(&self, probe: Probe) -> &ProbeCount {
        match probe {
            Probe::Zero => &self.zero,
            Probe::One => &self.one,
            Probe::Plus => &self.plus,
            Probe::PlusI => &self.plus_i,
        }
    }

    pub fn get_mut(&mut self, probe: Probe) -> &mut ProbeCount {
        match probe {
            Probe::Zero => &mut self.zero,
            Probe::One => &mut self.one,
            Probe::Plus => &mut self.plus,
            Probe::PlusI => &mut self.plus_i,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in Probe::ALL {
            let c = self.get(p);
            if c.zeros > c.trials {
                return Err(Error::Domain(format!(
                    "{p:?}: zeros ({}) exceed trials ({})",
                    c.zeros, c.trials
                )));
            }
        }
        Ok(())
    }

    pub fn trials(&self) -> [u64; 4] {
        Probe::ALL.map(|p| self.get(p).trials)
    }

    pub fn as_array(&self) -> [ProbeCount; 4] {
        Probe::ALL.map(|p| *self.get(p))
    }

    pub fn from_array(c: [ProbeCount; 4]) -> Self {
        TomographyCounts { zero: c[0], one: c[1], plus: c[2], plus_i: c[3] }
    }

    pub fn frequencies(&self) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for p in Probe::ALL {
            out[p.index()] = self.get(p).frequency()?;
        }
        Ok(out)
    }

    /// Sum of two shards' counts.
    pub fn merge(&self, other: &TomographyCounts) -> TomographyCounts {
        let mut out = *self;
        for p in Probe::ALL {
            let (a, b) = (out.get_mut(p), other.get(p));
            a.trials += b.trials;
            a.zeros += b.zeros;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub pair: PovmPair,
    /// Unprojected solution `(a₁, a₁n_x, a₁n_y, a₁n_z)`.
    pub raw: [f64; 4],
    pub projected: bool,
}

/// Outcome-0 probabilities of `pair` on the four probes.
pub fn predicted_frequencies(pair: &PovmPair) -> [f64; 4] {
    let (a, m) = pair.weighted();
    [a + m[2], a - m[2], a + m[0], a + m[1]].map(|f| f.clamp(0.0, 1.0))
}

/// Inverts the probe statistics; unphysical solutions are projected.
pub fn solve_tomography(freqs: [f64; 4]) -> Result<TomographyResult> {
    if let Some(&f) = freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::ProbabilityOutOfRange { what: "probe frequency", value: f });
    }
    let [f1, f2, f3, f4] = freqs;
    let a = (f1 + f2) / 2.0;
    let raw = [a, f3 - a, f4 - a, (f1 - f2) / 2.0];
    let (pair, distance) = project(raw);
    Ok(TomographyResult { pair, raw, projected: distance > TOLERANCE })
}

/// Nearest physical pair to `raw = (a₁, a₁n_x, a₁n_y, a₁n_z)` in Euclidean
/// distance.
pub fn project_to_physical(raw: [f64; 4]) -> PovmPair {
    project(raw).0
}

fn project(raw: [f64; 4]) -> (PovmPair, f64) {
    let [a, mx, my, mz] = raw;
    let m: Vec3 = [mx, my, mz];
    let r = algebra::norm(m);
    // The feasible set |m| <= min(a, 1-a) is rotationally symmetric in m, so
    // the problem reduces to the triangle (0,0), (1,0), (1/2,1/2) in (a, |m|).
    let (pa, pr) = project_triangle(a, r);
    let dist = ((pa - a).powi(2) + (pr - r).powi(2)).sqrt();
    let pm = if r > 0.0 { algebra::scale(m, pr / r) } else { [0.0; 3] };
    (PovmPair::from_weighted(pa, pm), dist)
}

fn project_triangle(a: f64, r: f64) -> (f64, f64) {
    if r >= 0.0 && r <= a && r <= 1.0 - a {
        return (a, r);
    }
    let vertices = [(0.0, 0.0), (1.0, 0.0), (0.5, 0.5)];
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for i in 0..3 {
        let (p, q) = (vertices[i], vertices[(i + 1) % 3]);
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        let t = (((a - p.0) * dx + (r - p.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let c = (p.0 + t * dx, p.1 + t * dy);
        let d = (c.0 - a).powi(2) + (c.1 - r).powi(2);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}
