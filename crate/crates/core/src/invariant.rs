//! Backward construction of a robust controlled invariant set.
//!
//! Starting from `X⁰ = X`, each pass tightens the current set by the noise support,
//! collects the state–input pairs `(x, u)` that every vertex plant maps into it, projects
//! them onto the state coordinates and intersects with the current set:
//!
//! ```text
//!   M = { (x, u) : F (A_i x + B_i u) <= g - h_V(F),  all i;  u ∈ U }
//!   X⁺ = proj_x(M) ∩ X
//! ```
//!
//! The sequence is nested; it stops when two consecutive sets contain each other.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::consistency::SystemPair;
use crate::lp::{self, LinearProgram, LpStatus};
use crate::polytope::{HPolytope, VPolytope};
use crate::{Error, Result, TOL};

pub const DEFAULT_MAX_ITER: usize = 20;
/// Largest tolerated constraint excess in [`certify_invariance`].
pub const CERTIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct InvariantResult {
    /// Normalized (`g = 1`) invariant set.
    pub set: HPolytope,
    pub iterations: usize,
    pub converged: bool,
    /// Row count of `X⁰, X¹, …` after redundancy removal.
    pub row_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub row_counts: Vec<usize>,
    pub final_rows: usize,
}

impl InvariantResult {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            iterations: self.iterations,
            converged: self.converged,
            row_counts: self.row_counts.clone(),
            final_rows: self.set.num_rows(),
        }
    }
}

fn check_inputs(x_set: &HPolytope, u_set: &HPolytope, noise: &VPolytope, systems: &[SystemPair]) -> Result<()> {
    let n = x_set.dim();
    let m = u_set.dim();
    if systems.is_empty() {
        return Err(Error::Config("no vertex systems supplied".into()));
    }
    if !x_set.is_gauge_carrier() || !u_set.is_gauge_carrier() {
        return Err(Error::InvalidPolytope("state and input sets must contain the origin in their interior".into()));
    }
    if noise.dim() != n {
        return Err(Error::Dimension("noise vertices do not match the state dimension".into()));
    }
    if systems.iter().any(|s| s.state_dim() != n || s.input_dim() != m) {
        return Err(Error::Dimension(format!("vertex systems must have n = {n}, m = {m}")));
    }
    Ok(())
}

/// One backward step: the states from which some `u ∈ U` keeps every vertex plant inside
/// `target` under every noise vertex, intersected with `target`.
pub fn one_step(target: &HPolytope, u_set: &HPolytope, noise: &VPolytope, systems: &[SystemPair]) -> Result<HPolytope> {
    let n = target.dim();
    let m = u_set.dim();
    let shrunk = target.pontryagin_shrink(noise)?;
    if shrunk.polytope.offsets().iter().all(|&g| g <= 0.0) {
        return Err(Error::NoInvariantSet("noise support exceeds every constraint".into()));
    }
    let f = target.normals();
    let rows = systems.len() * f.nrows() + u_set.num_rows();
    let mut normals = DMatrix::zeros(rows, n + m);
    let mut offsets = DVector::zeros(rows);
    for (s, sys) in systems.iter().enumerate() {
        let base = s * f.nrows();
        normals.view_mut((base, 0), (f.nrows(), n)).copy_from(&(f * &sys.a));
        normals.view_mut((base, n), (f.nrows(), m)).copy_from(&(f * &sys.b));
        offsets.rows_mut(base, f.nrows()).copy_from(shrunk.polytope.offsets());
    }
    let base = systems.len() * f.nrows();
    normals.view_mut((base, n), (u_set.num_rows(), m)).copy_from(u_set.normals());
    offsets.rows_mut(base, u_set.num_rows()).copy_from(u_set.offsets());

    let joint = HPolytope::new(normals, offsets)?;
    let keep: Vec<usize> = (0..n).collect();
    let reach = joint.project(&keep).map_err(collapse)?;
    let next = if reach.num_rows() == 0 {
        target.clone()
    } else {
        reach.intersect(target).map_err(collapse)?
    };
    if !next.is_gauge_carrier() {
        return Err(Error::NoInvariantSet("origin left the interior of the iterate".into()));
    }
    next.normalized()
}

fn collapse(e: Error) -> Error {
    match e {
        Error::Empty => Error::NoInvariantSet("iterate became empty".into()),
        other => other,
    }
}

/// Iterates [`one_step`] from `X` until a fixed point or `max_iter` passes.
pub fn compute_invariant(
    x_set: &HPolytope,
    u_set: &HPolytope,
    noise: &VPolytope,
    systems: &[SystemPair],
    max_iter: usize,
) -> Result<InvariantResult> {
    check_inputs(x_set, u_set, noise, systems)?;
    let mut current = x_set.normalized()?.remove_redundancy()?;
    let mut row_counts = vec![current.num_rows()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = one_step(&current, u_set, noise, systems)?;
        iterations += 1;
        row_counts.push(next.num_rows());
        let fixed = next.contains(&current)?.holds && current.contains(&next)?.holds;
        debug!("invariant pass {iterations}: {} rows, fixed point {fixed}", next.num_rows());
        current = next;
        if fixed {
            converged = true;
            break;
        }
    }
    info!(
        "invariant set: {} rows after {iterations} passes (converged: {converged})",
        current.num_rows()
    );
    Ok(InvariantResult {
        set: current,
        iterations,
        converged,
        row_counts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationFailure {
    pub x: Vec<f64>,
    /// Smallest achievable worst-case constraint excess at `x`.
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub samples: usize,
    pub failures: Vec<CertificationFailure>,
    pub worst_excess: f64,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks robust one-step invariance at random boundary points of `x_i`.
///
/// For each sample `x` the program `min s` over `u ∈ U` subject to
/// `F (A_i x + B_i u) + h_V(F) <= g + s` for every vertex plant is solved; `s > CERTIFY_TOL`
/// is a failure.
pub fn certify_invariance(
    x_i: &HPolytope,
    u_set: &HPolytope,
    noise: &VPolytope,
    systems: &[SystemPair],
    samples: usize,
    seed: u64,
) -> Result<CertificationReport> {
    check_inputs(x_i, u_set, noise, systems)?;
    let n = x_i.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x = boundary_point(x_i, n, &mut rng)?;
        let excess = worst_excess(x_i, u_set, noise, systems, &x)?;
        worst = worst.max(excess);
        if excess > CERTIFY_TOL {
            failures.push(CertificationFailure {
                x: x.iter().copied().collect(),
                excess,
            });
        }
    }
    Ok(CertificationReport {
        samples,
        failures,
        worst_excess: worst,
    })
}

fn boundary_point(set: &HPolytope, n: usize, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    loop {
        let d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let psi = set.gauge(&d)?;
        if psi > TOL {
            return Ok(d / psi);
        }
    }
}

fn worst_excess(
    set: &HPolytope,
    u_set: &HPolytope,
    noise: &VPolytope,
    systems: &[SystemPair],
    x: &DVector<f64>,
) -> Result<f64> {
    let m = u_set.dim();
    let f = set.normals();
    let support: Vec<f64> = (0..f.nrows()).map(|j| noise.support(&f.row(j).transpose())).collect();
    let s = m;
    let mut lp = LinearProgram::new(m + 1);
    lp.set_objective_coeff(s, 1.0);
    for sys in systems {
        let fax = f * (&sys.a * x);
        let fb = f * &sys.b;
        for j in 0..f.nrows() {
            let mut row: Vec<f64> = fb.row(j).iter().copied().collect();
            row.push(-1.0);
            lp.add_le(row, set.offsets()[j] - fax[j] - support[j]);
        }
    }
    for (i, r) in u_set.normals().row_iter().enumerate() {
        let mut row: Vec<f64> = r.iter().copied().collect();
        row.push(0.0);
        lp.add_le(row, u_set.offsets()[i]);
    }
    let sol = lp::solve(&lp).map_err(|e| Error::lp("invariance certificate", e))?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.x[s]),
        _ => Err(Error::lp(
            "invariance certificate",
            crate::lp::LpError::Numerical("excess program has no optimum".into()),
        )),
    }
}
