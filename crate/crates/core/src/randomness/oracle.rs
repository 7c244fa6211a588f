//! Brute-force randomness of a POVM by direct minimization over
//! standard-form decompositions.
//!
//! Branch directions are restricted to a quasi-uniform point set on the Bloch
//! sphere. For each candidate direction `ψ` the branch weight `p_ψ ≥ 0` is a
//! variable of a linear program
//!
//! ```text
//! minimize   Σ p_ψ H∞((1 + r·ψ)/2)
//! subject to Σ p_ψ = 2a₁,   Σ p_ψ ψ = 2a₁n₁
//! ```
//!
//! whose optimum is the convex-roof value restricted to the grid. Any feasible
//! point is a genuine decomposition, so the result can only overshoot the true
//! minimum; the overshoot shrinks with the grid spacing.
//!
//! The point set is augmented with `±n₁/|n₁|` (so the constraints are always
//! satisfiable, including for rank-one effects) and with `±r`.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::algebra::{self, BlochState, Branch, Decomposition, PovmPair, Vec3};
use crate::error::{Error, Result};

use super::min_entropy_binary;

/// Reconstruction tolerance for grid decompositions, in Bloch components.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// The sphere is sampled with `grid_resolution²` directions.
    pub grid_resolution: usize,
    /// Upper bound on the number of branches in the returned witness.
    /// Vertex solutions of the program carry at most four branches, so any
    /// value ≥ 4 never binds.
    pub max_branches: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { grid_resolution: 64, max_branches: 4 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 8 {
            return Err(Error::Config(format!(
                "grid_resolution must be >= 8, got {}",
                self.grid_resolution
            )));
        }
        if self.max_branches < 2 {
            return Err(Error::Config(format!(
                "max_branches must be >= 2, got {}",
                self.max_branches
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub bits: f64,
    /// A minimizing decomposition on the grid.
    pub witness: Decomposition,
    /// Largest component error of the witness against `F₀`.
    pub residual: f64,
}

/// `count` quasi-uniform unit vectors (Fibonacci lattice).
pub fn sphere_grid(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

/// Minimal randomness over grid decompositions of a canonical pair.
pub fn brute_force_randomness(
    pair: &PovmPair,
    input: &BlochState,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    cfg.validate()?;
    pair.validate()?;
    input.require_pure()?;
    if !pair.is_canonical() {
        return Err(Error::NotCanonical { a0: pair.f0.a, a1: pair.f1.a });
    }
    let a = pair.f0.a.max(0.0);
    let c = (pair.f1.a - pair.f0.a).max(0.0);
    if a == 0.0 {
        return Ok(OracleResult {
            bits: 0.0,
            witness: Decomposition { c, branches: vec![] },
            residual: 0.0,
        });
    }

    let axis = algebra::scale(input.r, 1.0 / input.norm());
    let mut directions = sphere_grid(cfg.grid_resolution * cfg.grid_resolution);
    let len = algebra::norm(pair.f0.n);
    if len > 0.0 {
        let dir = algebra::scale(pair.f0.n, 1.0 / len);
        directions.push(dir);
        directions.push(algebra::scale(dir, -1.0));
    }
    directions.push(axis);
    directions.push(algebra::scale(axis, -1.0));

    let costs = directions
        .iter()
        .map(|d| min_entropy_binary(((1.0 + algebra::dot(axis, *d)) / 2.0).clamp(0.0, 1.0)))
        .collect::<Result<Vec<f64>>>()?;

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = costs.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
    let mass = 2.0 * a;
    let target = algebra::scale(pair.f0.n, mass);
    lp.add_constraint(
        vars.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(),
        ComparisonOp::Eq,
        mass,
    );
    for k in 0..3 {
        let row: Vec<_> = vars.iter().zip(&directions).map(|(&v, d)| (v, d[k])).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, target[k]);
    }

    let solution = lp
        .solve()
        .map_err(|_| Error::OracleInfeasible { residual: f64::INFINITY })?
        .into_solution()
        .map_err(|_| Error::OracleInfeasible { residual: f64::INFINITY })?;

    let mut branches: Vec<Branch> = vars
        .iter()
        .zip(&directions)
        .filter_map(|(&v, d)| {
            let p = solution.var_value(v);
            (p > 1e-13).then_some(Branch { p, psi: BlochState { r: *d } })
        })
        .collect();
    branches.sort_by(|x, y| y.p.total_cmp(&x.p));

    let witness = Decomposition { c, branches };
    let residual = witness.reconstruction_residual(&pair.f0);
    if residual > ORACLE_TOLERANCE {
        return Err(Error::OracleInfeasible { residual });
    }
    if witness.branches.len() > cfg.max_branches {
        return Err(Error::Config(format!(
            "witness needs {} branches, above max_branches = {}",
            witness.branches.len(),
            cfg.max_branches
        )));
    }
    let bits = witness
        .branches
        .iter()
        .map(|b| {
            let overlap = ((1.0 + algebra::dot(axis, b.psi.r)) / 2.0).clamp(0.0, 1.0);
            b.p * min_entropy_binary(overlap).unwrap_or(0.0)
        })
        .sum::<f64>();
    Ok(OracleResult { bits, witness, residual })
}
