//! Minimum certified randomness over a box of POVM parameters.
//!
//! Both the finite-size and the coherent-source analyses end with the same
//! problem: the probe statistics only pin the weighted parameters
//! `(a, m) = (a₁, a₁n₁)` to a polytope, and the certified value is the
//! smallest closed-form rate over that polytope intersected with the
//! physical set `|m| ≤ min(a, 1-a)`. The generation input is `|+⟩`, so only
//! `(m_y, m_z)` enter the objective.
//!
//! For fixed `a` every constraint on `m_k` is an interval, and the objective
//! and the physicality margin both grow with `|m_k|`, so the inner problem is
//! solved exactly by taking each `m_k` closest to zero. What remains is a
//! convex function of `a` on a convex feasible interval, minimized by a dense
//! scan followed by golden-section refinement.

use serde::{Deserialize, Serialize};

use crate::algebra::PovmPair;
use crate::error::{Error, Result};
use crate::randomness::{rate_from_weighted, EntropyKind};

const GRID: usize = 257;
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

/// Linear constraints on `(a, m)`: `a ∈ a`, `a + m_k ∈ plus[k]` and, where
/// present, `a - m_k ∈ minus[k]`. Index `k` runs over `x, y, z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub a: Interval,
    pub plus: [Interval; 3],
    pub minus: [Option<Interval>; 3],
}

impl ParamBox {
    /// Range of `a` for which every `m_k` interval is nonempty.
    fn a_range(&self) -> Interval {
        let mut r = self.a.intersect(&Interval::new(0.0, 1.0));
        for k in 0..3 {
            r = r.intersect(&Interval::new(self.plus[k].lo - 1.0, self.plus[k].hi + 1.0));
            if let Some(minus) = self.minus[k] {
                r = r.intersect(&Interval::new(
                    (self.plus[k].lo + minus.lo) / 2.0,
                    (self.plus[k].hi + minus.hi) / 2.0,
                ));
            }
        }
        r
    }

    /// `m` of smallest components compatible with `a`.
    pub fn smallest_m(&self, a: f64) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (k, mk) in m.iter_mut().enumerate() {
            let mut lo = self.plus[k].lo - a;
            let mut hi = self.plus[k].hi - a;
            if let Some(minus) = self.minus[k] {
                lo = lo.max(a - minus.hi);
                hi = hi.min(a - minus.lo);
            }
            *mk = if lo > hi { (lo + hi) / 2.0 } else { 0.0f64.clamp(lo, hi) };
        }
        m
    }

    /// Whether the point `(a, m)` satisfies every linear constraint.
    pub fn contains(&self, a: f64, m: [f64; 3], tol: f64) -> bool {
        let inside = |iv: &Interval, x: f64| iv.lo - tol <= x && x <= iv.hi + tol;
        inside(&self.a, a)
            && (0..3).all(|k| {
                inside(&self.plus[k], a + m[k]) && self.minus[k].is_none_or(|iv| inside(&iv, a - m[k]))
            })
    }

    fn margin(&self, a: f64) -> f64 {
        let m = self.smallest_m(a);
        (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt() - a.min(1.0 - a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub pair: PovmPair,
    pub bits: f64,
    /// Feasible range of `a₁` after physicality.
    pub a_range: Interval,
}

/// Range of `a₁` admitting a physical `(a, m)` inside `b`.
pub fn feasible_a_range(b: &ParamBox) -> Result<Interval> {
    let mut range = b.a_range();
    if range.is_empty() {
        if range.lo - range.hi > SLACK {
            return Err(Error::EmptyFeasibleSet(format!(
                "no a₁ satisfies the probe constraints (range [{:.6e}, {:.6e}])",
                range.lo, range.hi
            )));
        }
        range = Interval::point((range.lo + range.hi) / 2.0);
    }
    let a0 = golden_min(|a| b.margin(a), range.lo, range.hi);
    if b.margin(a0) > SLACK {
        return Err(Error::EmptyFeasibleSet(format!(
            "probe constraints admit no physical POVM (margin {:.3e})",
            b.margin(a0)
        )));
    }
    let feasible = |a: f64| b.margin(a) <= SLACK;
    let lo = if feasible(range.lo) { range.lo } else { bisect_edge(&feasible, range.lo, a0) };
    let hi = if feasible(range.hi) { range.hi } else { bisect_edge(&feasible, range.hi, a0) };
    Ok(Interval::new(lo, hi))
}

/// Smallest closed-form rate (input `|+⟩`) over the physical part of `b`.
pub fn minimize_rate(b: &ParamBox, kind: EntropyKind) -> Result<WorstCase> {
    let Interval { lo, hi } = feasible_a_range(b)?;
    let objective = |a: f64| {
        let m = b.smallest_m(a);
        rate_from_weighted(kind, a, m[1].hypot(m[2]))
    };
    let mut best_a = lo;
    let mut best = objective(lo);
    let step = (hi - lo) / (GRID - 1) as f64;
    if step > 0.0 {
        for i in 1..GRID {
            let a = lo + step * i as f64;
            let v = objective(a);
            if v < best {
                best = v;
                best_a = a;
            }
        }
        let refined = golden_min(objective, (best_a - step).max(lo), (best_a + step).min(hi));
        if objective(refined) < best {
            best_a = refined;
            best = objective(refined);
        }
    }

    let mut m = b.smallest_m(best_a);
    let len = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    let t = best_a.min(1.0 - best_a);
    if len > t {
        m = if len > 0.0 { m.map(|x| x * t / len) } else { m };
    }
    Ok(WorstCase {
        pair: PovmPair::from_weighted(best_a, m),
        bits: best.clamp(0.0, 1.0),
        a_range: Interval::new(lo, hi),
    })
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = (lo + hi) / 2.0;
    [lo, mid, hi].into_iter().fold(mid, |acc, x| if f(x) < f(acc) { x } else { acc })
}

/// Boundary of a feasible interval between an infeasible `out` and a
/// feasible `inside`, returned on the feasible side.
fn bisect_edge(feasible: &impl Fn(f64) -> bool, mut out: f64, mut inside: f64) -> f64 {
    for _ in 0..200 {
        let mid = (out + inside) / 2.0;
        if mid == out || mid == inside {
            break;
        }
        if feasible(mid) {
            inside = mid;
        } else {
            out = mid;
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::certified_randomness;
    use crate::algebra::BlochState;

    fn tomo_box(lo: [f64; 4], hi: [f64; 4]) -> ParamBox {
        ParamBox {
            a: Interval::new((lo[0] + lo[1]) / 2.0, (hi[0] + hi[1]) / 2.0),
            plus: [Interval::new(lo[2], hi[2]), Interval::new(lo[3], hi[3]), Interval::new(lo[0], hi[0])],
            minus: [None, None, Some(Interval::new(lo[1], hi[1]))],
        }
    }

    #[test]
    fn degenerate_box_is_the_point() {
        let f = [1.0, 0.0, 0.5, 0.5];
        let w = minimize_rate(&tomo_box(f, f), EntropyKind::MinEntropy).unwrap();
        assert!((w.bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn white_noise_inside_box_gives_zero() {
        let w = minimize_rate(&tomo_box([0.4; 4], [0.6; 4]), EntropyKind::MinEntropy).unwrap();
        assert!(w.bits.abs() < 1e-12);
    }

    #[test]
    fn empty_box_is_reported() {
        // |0⟩ and |1⟩ both always give 0: a = 1 with a + m_x = 0 is unphysical.
        let b = tomo_box([1.0, 1.0, 0.0, 0.5], [1.0, 1.0, 0.0, 0.5]);
        let e = minimize_rate(&b, EntropyKind::MinEntropy).unwrap_err();
        assert!(e.is_certification_failure());
    }

    #[test]
    fn result_is_feasible_and_consistent() {
        let b = tomo_box([0.9, 0.05, 0.4, 0.45], [0.95, 0.1, 0.6, 0.55]);
        let w = minimize_rate(&b, EntropyKind::MinEntropy).unwrap();
        assert!(w.pair.validate().is_ok());
        let (a, m) = w.pair.weighted();
        assert!(b.contains(a, m, 1e-9));
        let r = certified_randomness(&w.pair, &BlochState::PLUS).unwrap().bits_per_run;
        assert!((r - w.bits).abs() < 1e-9);
    }

    #[test]
    fn matches_frequency_grid_search() {
        // Brute-force oracle: scan every frequency vector in the box on a grid.
        let cases = [
            ([0.9, 0.05, 0.4, 0.45], [0.95, 0.1, 0.6, 0.55]),
            ([0.7, 0.2, 0.55, 0.3], [0.8, 0.25, 0.6, 0.35]),
            ([0.98, 0.0, 0.48, 0.48], [1.0, 0.02, 0.52, 0.52]),
        ];
        for (lo, hi) in cases {
            let w = minimize_rate(&tomo_box(lo, hi), EntropyKind::MinEntropy).unwrap();
            let n = 24;
            let at = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * i as f64 / n as f64;
            let mut best = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=n {
                    for l in 0..=n {
                        for q in 0..=n {
                            let f = [at(0, i), at(1, j), at(2, l), at(3, q)];
                            let a = (f[0] + f[1]) / 2.0;
                            let m = [f[2] - a, f[3] - a, (f[0] - f[1]) / 2.0];
                            let len = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                            if len <= a.min(1.0 - a) {
                                let r = rate_from_weighted(EntropyKind::MinEntropy, a, m[1].hypot(m[2]));
                                best = best.min(r);
                            }
                        }
                    }
                }
            }
            assert!(w.bits <= best + 1e-9, "{lo:?}: {} > grid {best}", w.bits);
            assert!(w.bits >= best - 0.02, "{lo:?}: {} << grid {best}", w.bits);
        }
    }

    #[test]
    fn golden_finds_minimum() {
        let x = golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-7);
    }
}
