//! One-step robust control synthesis.
//!
//! At state `x` the controller looks for the input `u ∈ U` minimizing the worst-case
//! contraction `λ` of the carrier gauge `ψ`:
//!
//! ```text
//!   ψ(A x + B u + v) <= λ ψ(x)   for every consistent (A, B) and every noise v.
//! ```
//!
//! In coefficient space the left-hand side is linear in `(a, b, v)`:
//! `G (A x + B u + v) = (G ⊗ xᵀ) a + (G ⊗ uᵀ) b + G v`. The robust constraint is a
//! polytope inclusion, consistency-set × noise-set inside `{ M(u) (a; b; v) <= λψ(x)·1 }`,
//! and the extended Farkas lemma turns it into linear constraints on a nonnegative
//! multiplier matrix `Y`: `Y N = M(u)` and `Y q <= λψ(x)·1`. The equality rows are
//! jointly linear in `(Y, u)`, so [`solve_dual`] is a single linear program that never
//! touches the vertices of the consistency set.
//!
//! [`solve_primal_vertex`] enumerates the constraint at every vertex plant instead; it
//! solves the same problem and is kept as an independent cross-check.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::consistency::{ConsistencySet, SystemPair};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::polytope::{HPolytope, VPolytope};
use crate::{Error, Result, TOL};

/// Below this gauge value the contraction ratio is not meaningful.
pub const LAMBDA_FLOOR: f64 = 1e-6;
/// Residual tolerance for re-checking a returned multiplier certificate.
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// Process-noise set `{v : ‖V v‖∞ <= 1}` with its vertices.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    shape: DMatrix<f64>,
    vertices: VPolytope,
}

impl NoiseModel {
    pub fn new(shape: DMatrix<f64>) -> Result<Self> {
        let vertices = HPolytope::from_shape(&shape)?.vertices()?;
        Ok(Self { shape, vertices })
    }

    pub fn from_bound(n: usize, epsilon: f64) -> Result<Self> {
        Self::new(crate::consistency::noise_shape_for_bound(n, epsilon)?)
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn vertices(&self) -> &VPolytope {
        &self.vertices
    }
}

#[derive(Debug, Clone)]
pub struct ControllerContext {
    carrier: HPolytope,
    input_set: HPolytope,
    noise: Option<NoiseModel>,
    consistency: ConsistencySet,
}

impl ControllerContext {
    /// `carrier` is normalized to unit offsets; `noise = None` drops the disturbance
    /// from the robust constraint (the consistency set still uses its own shape).
    pub fn new(
        carrier: &HPolytope,
        input_set: &HPolytope,
        noise: Option<NoiseModel>,
        consistency: ConsistencySet,
    ) -> Result<Self> {
        let n = consistency.state_dim();
        let m = consistency.input_dim();
        if carrier.dim() != n || input_set.dim() != m {
            return Err(Error::Dimension(format!(
                "carrier in ℝ^{}, input set in ℝ^{}, plant has n = {n}, m = {m}",
                carrier.dim(),
                input_set.dim()
            )));
        }
        if let Some(noise) = &noise {
            if noise.shape.ncols() != n {
                return Err(Error::Dimension("noise shape does not match state dimension".into()));
            }
        }
        let ctx = Self {
            carrier: carrier.normalized()?,
            input_set: input_set.clone(),
            noise,
            consistency,
        };
        ctx.check_consistency()?;
        Ok(ctx)
    }

    fn check_consistency(&self) -> Result<()> {
        if self.consistency.is_empty()? {
            return Err(Error::ModelInvalidated);
        }
        Ok(())
    }

    /// Replaces the consistency set (e.g. after appending execution data).
    pub fn set_consistency(&mut self, consistency: ConsistencySet) -> Result<()> {
        if consistency.state_dim() != self.state_dim() || consistency.input_dim() != self.input_dim() {
            return Err(Error::Dimension("consistency set dimensions changed".into()));
        }
        self.consistency = consistency;
        self.check_consistency()
    }

    pub fn carrier(&self) -> &HPolytope {
        &self.carrier
    }

    pub fn input_set(&self) -> &HPolytope {
        &self.input_set
    }

    pub fn noise(&self) -> Option<&NoiseModel> {
        self.noise.as_ref()
    }

    pub fn consistency(&self) -> &ConsistencySet {
        &self.consistency
    }

    pub fn state_dim(&self) -> usize {
        self.consistency.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.consistency.input_dim()
    }

    pub fn gauge(&self, x: &DVector<f64>) -> Result<f64> {
        self.carrier.gauge(x)
    }

    /// `N` and `q` of the inner polytope (consistency set × noise set) over `(a; b; v)`.
    pub fn inner_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let cs = &self.consistency;
        let coeff = cs.coefficient_dim();
        let data = cs.data_matrix();
        let t = data.nrows();
        let (noise_rows, v_cols) = match &self.noise {
            Some(noise) => (noise.shape.nrows(), self.state_dim()),
            None => (0, 0),
        };
        let mut n_mat = DMatrix::zeros(2 * t + 2 * noise_rows, coeff + v_cols);
        let mut q = DVector::zeros(2 * t + 2 * noise_rows);
        n_mat.view_mut((0, 0), (t, coeff)).copy_from(&data);
        n_mat.view_mut((t, 0), (t, coeff)).copy_from(&(-&data));
        for i in 0..t {
            q[i] = 1.0 + cs.xi()[i];
            q[t + i] = 1.0 - cs.xi()[i];
        }
        if let Some(noise) = &self.noise {
            n_mat.view_mut((2 * t, coeff), (noise_rows, v_cols)).copy_from(&noise.shape);
            n_mat
                .view_mut((2 * t + noise_rows, coeff), (noise_rows, v_cols))
                .copy_from(&(-&noise.shape));
            for i in 2 * t..q.len() {
                q[i] = 1.0;
            }
        }
        for (mut row, qi) in n_mat.row_iter_mut().zip(q.iter_mut()) {
            let s = row.amax();
            if s > 0.0 {
                row /= s;
                *qi /= s;
            }
        }
        (n_mat, q)
    }

    /// `M(u) = [G ⊗ xᵀ, G ⊗ uᵀ, G]` (last block only with noise).
    pub fn outer_rows(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let g = self.carrier.normals();
        let ax = g.kronecker(&x.transpose());
        let bu = g.kronecker(&u.transpose());
        let v_cols = if self.noise.is_some() { self.state_dim() } else { 0 };
        let mut out = DMatrix::zeros(g.nrows(), ax.ncols() + bu.ncols() + v_cols);
        out.columns_mut(0, ax.ncols()).copy_from(&ax);
        out.columns_mut(ax.ncols(), bu.ncols()).copy_from(&bu);
        if v_cols > 0 {
            out.columns_mut(ax.ncols() + bu.ncols(), v_cols).copy_from(g);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// `λ` minimizes the contraction ratio.
    Contraction,
    /// `ψ(x) <= LAMBDA_FLOOR`: the absolute worst-case gauge was minimized instead and
    /// `λ` is reported as `+∞`.
    NearOrigin,
}

#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    pub lambda: f64,
    /// Optimal bound on the worst-case next gauge: `λψ(x)`, or `t` near the origin.
    pub bound: f64,
    pub psi: f64,
    pub kind: DecisionKind,
    /// Multipliers `Y` (carrier rows × inner rows); dual path only.
    pub certificate: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub solve_time: Duration,
}

fn infeasible(x: &DVector<f64>) -> Error {
    Error::ControllerInfeasible(format!("no admissible input at x = {}", fmt_vec(x)))
}

pub(crate) fn fmt_vec(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_state(ctx: &ControllerContext, x: &DVector<f64>) -> Result<(f64, DecisionKind)> {
    if x.len() != ctx.state_dim() {
        return Err(Error::Dimension("state dimension".into()));
    }
    let psi = ctx.gauge(x)?;
    let kind = if psi <= LAMBDA_FLOOR {
        DecisionKind::NearOrigin
    } else {
        DecisionKind::Contraction
    };
    Ok((psi, kind))
}

/// Farkas-dual synthesis over `(Y >= 0, u ∈ U, λ >= 0)`.
pub fn solve_dual(ctx: &ControllerContext, x: &DVector<f64>) -> Result<ControlDecision> {
    let start = Instant::now();
    let (psi, kind) = check_state(ctx, x)?;
    let n = ctx.state_dim();
    let m = ctx.input_dim();
    let g = ctx.carrier.normals();
    let rows = g.nrows();
    let (n_mat, q) = ctx.inner_system();
    let cols = n_mat.nrows();
    let y_vars = rows * cols;
    let u0 = y_vars;
    let lam = y_vars + m;
    let mut lp = LinearProgram::new(y_vars + m + 1);
    lp.set_objective_coeff(lam, 1.0);
    lp.set_nonnegative(0..y_vars);
    lp.set_lower_bound(lam, 0.0);

    let coeff_a = n * n;
    let coeff_b = n * m;
    for j in 0..rows {
        for k in 0..n_mat.ncols() {
            let mut row = vec![0.0; lp.num_vars()];
            for c in 0..cols {
                row[j * cols + c] = n_mat[(c, k)];
            }
            let rhs = if k < coeff_a {
                // (G ⊗ xᵀ)_{j, i·n + l} = G_ji x_l
                g[(j, k / n)] * x[k % n]
            } else if k < coeff_a + coeff_b {
                // (G ⊗ uᵀ)_{j, i·m + l} = G_ji u_l, moved to the left.
                let off = k - coeff_a;
                row[u0 + off % m] -= g[(j, off / m)];
                0.0
            } else {
                g[(j, k - coeff_a - coeff_b)]
            };
            lp.add_eq(row, rhs);
        }
        let mut row = vec![0.0; lp.num_vars()];
        for c in 0..cols {
            row[j * cols + c] = q[c];
        }
        row[lam] = match kind {
            DecisionKind::Contraction => -psi,
            DecisionKind::NearOrigin => -1.0,
        };
        lp.add_le(row, 0.0);
    }
    add_input_rows(&mut lp, &ctx.input_set, u0);

    let sol = lp::solve(&lp).map_err(|e| Error::lp("dual control program", e))?;
    if sol.status != LpStatus::Optimal {
        return Err(infeasible(x));
    }
    let u = DVector::from_column_slice(&sol.x[u0..u0 + m]);
    let y = DMatrix::from_fn(rows, cols, |j, c| sol.x[j * cols + c].max(0.0));
    Ok(decision(sol.x[lam], psi, kind, u, Some(y), sol.iterations, start))
}

/// Vertex-enumeration synthesis over `(u ∈ U, λ >= 0)`: the robust constraint imposed at
/// every vertex plant and the worst noise vertex of every carrier row.
pub fn solve_primal_vertex(
    ctx: &ControllerContext,
    x: &DVector<f64>,
    vertices: &[SystemPair],
) -> Result<ControlDecision> {
    let start = Instant::now();
    let (psi, kind) = check_state(ctx, x)?;
    if vertices.is_empty() {
        return Err(Error::Config("vertex list is empty".into()));
    }
    let m = ctx.input_dim();
    let g = ctx.carrier.normals();
    let noise_support: Vec<f64> = (0..g.nrows())
        .map(|j| match &ctx.noise {
            Some(noise) => noise.vertices.support(&g.row(j).transpose()),
            None => 0.0,
        })
        .collect();
    let lam = m;
    let mut lp = LinearProgram::new(m + 1);
    lp.set_objective_coeff(lam, 1.0);
    lp.set_lower_bound(lam, 0.0);
    for sys in vertices {
        let gax = g * (&sys.a * x);
        let gb = g * &sys.b;
        for j in 0..g.nrows() {
            let mut row: Vec<f64> = gb.row(j).iter().copied().collect();
            row.push(match kind {
                DecisionKind::Contraction => -psi,
                DecisionKind::NearOrigin => -1.0,
            });
            lp.add_le(row, -gax[j] - noise_support[j]);
        }
    }
    add_input_rows(&mut lp, &ctx.input_set, 0);
    let sol = lp::solve(&lp).map_err(|e| Error::lp("vertex control program", e))?;
    if sol.status != LpStatus::Optimal {
        return Err(infeasible(x));
    }
    let u = DVector::from_column_slice(&sol.x[..m]);
    Ok(decision(sol.x[lam], psi, kind, u, None, sol.iterations, start))
}

fn add_input_rows(lp: &mut LinearProgram, input_set: &HPolytope, u0: usize) {
    for (i, h) in input_set.normals().row_iter().enumerate() {
        let mut row = vec![0.0; lp.num_vars()];
        for (k, &v) in h.iter().enumerate() {
            row[u0 + k] = v;
        }
        lp.add_le(row, input_set.offsets()[i]);
    }
}

fn decision(
    var: f64,
    psi: f64,
    kind: DecisionKind,
    u: DVector<f64>,
    certificate: Option<DMatrix<f64>>,
    iterations: usize,
    start: Instant,
) -> ControlDecision {
    let (lambda, bound) = match kind {
        DecisionKind::Contraction => (var, var * psi),
        DecisionKind::NearOrigin => (f64::INFINITY, var),
    };
    ControlDecision {
        u,
        lambda,
        bound,
        psi,
        kind,
        certificate,
        iterations,
        solve_time: start.elapsed(),
    }
}

/// Re-checks `Y >= 0`, `Y N = M(u)` and `Y q <= λψ(x)·1` at the returned decision.
pub fn verify_certificate(decision: &ControlDecision, ctx: &ControllerContext, x: &DVector<f64>) -> bool {
    let Some(y) = &decision.certificate else {
        return false;
    };
    let (n_mat, q) = ctx.inner_system();
    let outer = ctx.outer_rows(x, &decision.u);
    if y.nrows() != outer.nrows() || y.ncols() != n_mat.nrows() {
        return false;
    }
    if y.iter().any(|&v| v < 0.0) {
        return false;
    }
    if (y * &n_mat - outer).amax() > CERTIFICATE_TOL {
        return false;
    }
    let rhs = match decision.kind {
        DecisionKind::Contraction => match ctx.gauge(x) {
            Ok(psi) => decision.lambda * psi,
            Err(_) => return false,
        },
        DecisionKind::NearOrigin => decision.bound,
    };
    (y * q).iter().all(|&v| v <= rhs + CERTIFICATE_TOL)
        && ctx.input_set.contains_point(&decision.u, TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::{DataDictionary, Provenance, Triple};
    use nalgebra::{dmatrix, dvector};

    /// Noise-free data from `A = 0.5 I`, `B = 0`, with a very tight consistency set.
    fn scaled_identity_context(noise: bool) -> (ControllerContext, Vec<SystemPair>) {
        let plant = SystemPair::new(DMatrix::identity(2, 2) * 0.5, DMatrix::zeros(2, 1)).unwrap();
        let samples = [
            (dvector![1.0, 0.0], dvector![0.3]),
            (dvector![0.0, 1.0], dvector![-0.7]),
            (dvector![0.6, -0.4], dvector![1.0]),
            (dvector![-0.2, 0.9], dvector![0.1]),
        ];
        let triples = samples
            .iter()
            .map(|(x, u)| Triple {
                x: x.clone(),
                u: u.clone(),
                x_next: plant.step(x, u),
                tag: Provenance::Training,
            })
            .collect();
        let data = DataDictionary::from_triples(2, 1, triples).unwrap();
        let eps = 1e-9;
        let cs = ConsistencySet::build(&data, &crate::consistency::noise_shape_for_bound(2, eps).unwrap()).unwrap();
        let vertices = cs.system_vertices().unwrap();
        let noise = noise.then(|| NoiseModel::from_bound(2, eps).unwrap());
        let ctx = ControllerContext::new(&HPolytope::unit_box(2), &HPolytope::unit_box(1), noise, cs).unwrap();
        (ctx, vertices)
    }

    #[test]
    fn scaled_identity_contracts_by_half() {
        let (ctx, vertices) = scaled_identity_context(true);
        for x in [dvector![1.0, 0.3], dvector![-0.2, 1.0], dvector![1.0, 1.0]] {
            let d = solve_dual(&ctx, &x).unwrap();
            assert!((d.lambda - 0.5).abs() < 1e-6, "dual λ = {}", d.lambda);
            assert!(verify_certificate(&d, &ctx, &x));
            let p = solve_primal_vertex(&ctx, &x, &vertices).unwrap();
            assert!((p.lambda - 0.5).abs() < 1e-6, "primal λ = {}", p.lambda);
        }
    }

    #[test]
    fn perturbed_certificate_rejected() {
        let (ctx, _) = scaled_identity_context(true);
        let x = dvector![1.0, 0.3];
        let mut d = solve_dual(&ctx, &x).unwrap();
        let y = d.certificate.as_mut().unwrap();
        let (r, c) = y.iamax_full();
        y[(r, c)] -= 0.1;
        assert!(!verify_certificate(&d, &ctx, &x));
    }

    #[test]
    fn near_origin_branch_reports_infinite_lambda() {
        let (ctx, _) = scaled_identity_context(true);
        let d = solve_dual(&ctx, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(d.kind, DecisionKind::NearOrigin);
        assert!(d.lambda.is_infinite());
        assert!(d.bound >= 0.0 && d.bound < 1e-6);
        assert!(verify_certificate(&d, &ctx, &dvector![0.0, 0.0]));
    }

    #[test]
    fn outer_rows_match_kronecker_identity() {
        let (ctx, _) = scaled_identity_context(true);
        let x = dvector![0.4, -0.9];
        let u = dvector![0.25];
        let sys = SystemPair::new(dmatrix![0.1, 0.2; 0.3, 0.4], dmatrix![0.5; 0.6]).unwrap();
        let v = dvector![0.01, -0.02];
        let mut z = sys.to_coefficients().as_slice().to_vec();
        z.extend(v.iter());
        let lhs = ctx.outer_rows(&x, &u) * DVector::from_vec(z);
        let rhs = ctx.carrier().normals() * (sys.step(&x, &u) + v);
        assert!((lhs - rhs).amax() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (ctx, _) = scaled_identity_context(false);
        let cs = ctx.consistency().clone();
        assert!(ControllerContext::new(&HPolytope::unit_box(3), &HPolytope::unit_box(1), None, cs).is_err());
        assert!(solve_dual(&ctx, &dvector![1.0]).is_err());
    }
}
