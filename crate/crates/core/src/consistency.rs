//! Set-membership description of every plant `(A, B)` compatible with measured data.
//!
//! A triple `(x, u, x_next)` is explained by `(A, B)` when the implied disturbance
//! stays inside the noise set, `‖V (A x + B u - x_next)‖∞ <= 1`. With `a = vec(Aᵀ)` and
//! `b = vec(Bᵀ)` (rows of `A` and `B` stacked) we have `V A x = (V ⊗ xᵀ) a`, so each
//! triple contributes the linear rows
//!
//! ```text
//!   (V ⊗ xᵀ) a + (V ⊗ uᵀ) b <= 1 + V x_next
//!  -(V ⊗ xᵀ) a - (V ⊗ uᵀ) b <= 1 - V x_next
//! ```
//!
//! and the consistency set is the polytope cut out by all of them in `ℝ^(n² + nm)`.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::polytope::{stack_rows, HPolytope};
use crate::{Error, Result, TOL};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Training,
    Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_next: DVector<f64>,
    pub tag: Provenance,
}

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    x: Vec<f64>,
    u: Vec<f64>,
    x_next: Vec<f64>,
    tag: Provenance,
}

/// Ordered measurements; execution triples always follow training triples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDictionary {
    n: usize,
    m: usize,
    triples: Vec<Triple>,
}

impl DataDictionary {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            triples: Vec::new(),
        }
    }

    pub fn from_triples(n: usize, m: usize, triples: Vec<Triple>) -> Result<Self> {
        let mut dict = Self::new(n, m);
        for t in triples {
            dict.push(t)?;
        }
        Ok(dict)
    }

    pub fn push(&mut self, triple: Triple) -> Result<()> {
        if triple.x.len() != self.n || triple.x_next.len() != self.n || triple.u.len() != self.m {
            return Err(Error::Dimension(format!(
                "triple {} has dimensions (x: {}, u: {}, x_next: {}), expected (n: {}, m: {})",
                self.triples.len(),
                triple.x.len(),
                triple.u.len(),
                triple.x_next.len(),
                self.n,
                self.m
            )));
        }
        let finite = |v: &DVector<f64>| v.iter().all(|a| a.is_finite());
        if !finite(&triple.x) || !finite(&triple.u) || !finite(&triple.x_next) {
            return Err(Error::Config(format!("triple {} has non-finite entries", self.triples.len())));
        }
        if triple.tag == Provenance::Training
            && self.triples.last().is_some_and(|t| t.tag == Provenance::Execution)
        {
            return Err(Error::Config("training triple after execution triples".into()));
        }
        self.triples.push(triple);
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn training(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter().filter(|t| t.tag == Provenance::Training)
    }

    pub fn to_json(&self) -> Result<String> {
        let records: Vec<TripleRecord> = self
            .triples
            .iter()
            .map(|t| TripleRecord {
                x: t.x.iter().copied().collect(),
                u: t.u.iter().copied().collect(),
                x_next: t.x_next.iter().copied().collect(),
                tag: t.tag,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<TripleRecord> = serde_json::from_str(text)?;
        let first = records
            .first()
            .ok_or_else(|| Error::Config("data dictionary is empty".into()))?;
        let (n, m) = (first.x.len(), first.u.len());
        let triples = records
            .into_iter()
            .map(|r| Triple {
                x: DVector::from_vec(r.x),
                u: DVector::from_vec(r.u),
                x_next: DVector::from_vec(r.x_next),
                tag: r.tag,
            })
            .collect();
        Self::from_triples(n, m, triples)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A plant `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl SystemPair {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `(vec(Aᵀ); vec(Bᵀ))`: the rows of `A` followed by the rows of `B`.
    pub fn to_coefficients(&self) -> DVector<f64> {
        let coeffs = self
            .a
            .row_iter()
            .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
            .chain(self.b.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()));
        DVector::from_iterator(self.a.len() + self.b.len(), coeffs)
    }

    pub fn from_coefficients(z: &DVector<f64>, n: usize, m: usize) -> Result<Self> {
        if z.len() != n * n + n * m {
            return Err(Error::Dimension(format!(
                "coefficient vector of length {} for n = {n}, m = {m}",
                z.len()
            )));
        }
        let a = DMatrix::from_fn(n, n, |i, j| z[i * n + j]);
        let b = DMatrix::from_fn(n, m, |i, j| z[n * n + i * m + j]);
        Ok(Self { a, b })
    }
}

/// `(1/ε)·I`, the shape of the `ε`-ball `{v : ‖v‖∞ <= ε}`.
pub fn noise_shape_for_bound(n: usize, epsilon: f64) -> Result<DMatrix<f64>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("noise bound must be positive, got {epsilon}")));
    }
    Ok(DMatrix::identity(n, n) / epsilon)
}

/// Stacked blocks `P1 = [V ⊗ x_kᵀ]`, `Q1 = [V ⊗ u_kᵀ]`, `ξ = [V x_{k+1}]` over all triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencySet {
    n: usize,
    m: usize,
    shape: DMatrix<f64>,
    p1: DMatrix<f64>,
    q1: DMatrix<f64>,
    xi: DVector<f64>,
}

impl ConsistencySet {
    pub fn build(data: &DataDictionary, shape: &DMatrix<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("cannot build a consistency set from no data".into()));
        }
        if shape.ncols() != data.state_dim() || shape.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "noise shape is {}x{}, state dimension is {}",
                shape.nrows(),
                shape.ncols(),
                data.state_dim()
            )));
        }
        let mut set = Self {
            n: data.state_dim(),
            m: data.input_dim(),
            shape: shape.clone(),
            p1: DMatrix::zeros(0, data.state_dim().pow(2)),
            q1: DMatrix::zeros(0, data.state_dim() * data.input_dim()),
            xi: DVector::zeros(0),
        };
        for t in data.triples() {
            set.append(t)?;
        }
        Ok(set)
    }

    fn append(&mut self, t: &Triple) -> Result<()> {
        if t.x.len() != self.n || t.x_next.len() != self.n || t.u.len() != self.m {
            return Err(Error::Dimension("triple does not match plant dimensions".into()));
        }
        let xi = &self.shape * &t.x_next;
        // x = 0, u = 0 constrains no plant: keep nothing, or reject the whole data set.
        if t.x.iter().chain(t.u.iter()).all(|&c| c == 0.0) {
            return if xi.amax() <= 1.0 + TOL {
                Ok(())
            } else {
                Err(Error::ModelInvalidated)
            };
        }
        let p = self.shape.kronecker(&t.x.transpose());
        let q = self.shape.kronecker(&t.u.transpose());
        self.p1 = stack_rows(&self.p1, &p);
        self.q1 = stack_rows(&self.q1, &q);
        self.xi = DVector::from_iterator(self.xi.len() + xi.len(), self.xi.iter().chain(xi.iter()).copied());
        Ok(())
    }

    /// New snapshot with one more triple; existing rows are untouched.
    pub fn update(&self, triple: &Triple) -> Result<Self> {
        let mut next = self.clone();
        next.append(triple)?;
        Ok(next)
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// Dimension of the coefficient space, `n² + nm`.
    pub fn coefficient_dim(&self) -> usize {
        self.n * self.n + self.n * self.m
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn p1(&self) -> &DMatrix<f64> {
        &self.p1
    }

    pub fn q1(&self) -> &DMatrix<f64> {
        &self.q1
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    /// Rows of the H-representation (both signs).
    pub fn num_rows(&self) -> usize {
        2 * self.p1.nrows()
    }

    /// `[P1 Q1]`.
    pub fn data_matrix(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.p1.nrows(), self.coefficient_dim());
        out.columns_mut(0, self.p1.ncols()).copy_from(&self.p1);
        out.columns_mut(self.p1.ncols(), self.q1.ncols()).copy_from(&self.q1);
        out
    }

    /// Largest `‖V (A x + B u - x_next)‖∞` over the recorded rows.
    pub fn residual(&self, system: &SystemPair) -> Result<f64> {
        if system.state_dim() != self.n || system.input_dim() != self.m {
            return Err(Error::Dimension("system does not match consistency set".into()));
        }
        let r = self.data_matrix() * system.to_coefficients() - &self.xi;
        Ok(r.amax())
    }

    pub fn membership(&self, system: &SystemPair) -> Result<bool> {
        Ok(self.residual(system)? <= 1.0 + TOL)
    }

    /// Full column rank of `[P1 Q1]`, which makes the set compact.
    pub fn check_rank(&self) -> bool {
        let data = self.data_matrix();
        if data.nrows() < data.ncols() {
            return false;
        }
        let sv = data.singular_values();
        let largest = sv.max();
        if largest <= 0.0 {
            return false;
        }
        sv.iter().filter(|&&s| s > RANK_TOL * largest).count() == data.ncols()
    }

    /// `[P1 Q1; -P1 -Q1] (a; b) <= [1 + ξ; 1 - ξ]`.
    pub fn as_polytope(&self) -> HPolytope {
        if !self.check_rank() {
            warn!("consistency data matrix is rank deficient; the set may be unbounded");
        }
        let data = self.data_matrix();
        let normals = stack_rows(&data, &(-&data));
        let rows = self.xi.len();
        let offsets = DVector::from_fn(2 * rows, |i, _| {
            if i < rows {
                1.0 + self.xi[i]
            } else {
                1.0 - self.xi[i - rows]
            }
        });
        HPolytope::new(normals, offsets).expect("consistency rows are finite and nonzero")
    }

    /// Vertices of the consistency polytope as plant pairs.
    pub fn system_vertices(&self) -> Result<Vec<SystemPair>> {
        let vertices = match self.as_polytope().vertices() {
            Ok(v) => v,
            Err(Error::Unbounded) => return Err(Error::RankDeficient),
            Err(Error::Empty) => return Err(Error::ModelInvalidated),
            Err(e) => return Err(e),
        };
        vertices
            .vertices()
            .iter()
            .map(|z| SystemPair::from_coefficients(z, self.n, self.m))
            .collect()
    }

    pub fn is_empty(&self) -> Result<bool> {
        self.as_polytope().is_empty()
    }

    /// Drops noise-shape rows whose `+` and `-` halves are both redundant. Not used by
    /// default: the online loop keeps every row.
    pub fn prune_redundant(&self) -> Result<Self> {
        let poly = self.as_polytope();
        let rows = self.xi.len();
        let unit = poly.unit_rows();
        let mut keep = Vec::new();
        for i in 0..rows {
            let plus = is_row_redundant(&unit, i)?;
            let minus = plus && is_row_redundant(&unit, rows + i)?;
            if !(plus && minus) {
                keep.push(i);
            }
        }
        let pick = |mat: &DMatrix<f64>| DMatrix::from_fn(keep.len(), mat.ncols(), |r, c| mat[(keep[r], c)]);
        Ok(Self {
            n: self.n,
            m: self.m,
            shape: self.shape.clone(),
            p1: pick(&self.p1),
            q1: pick(&self.q1),
            xi: DVector::from_fn(keep.len(), |r, _| self.xi[keep[r]]),
        })
    }
}

fn is_row_redundant(p: &HPolytope, i: usize) -> Result<bool> {
    let mut lp = crate::lp::LinearProgram::new(p.dim());
    lp.maximize(p.normals().row(i).iter().copied().collect());
    for j in 0..p.num_rows() {
        let rhs = if j == i { p.offsets()[j] + 1.0 } else { p.offsets()[j] };
        lp.add_le(p.normals().row(j).iter().copied().collect(), rhs);
    }
    let sol = crate::lp::solve(&lp).map_err(|e| Error::lp("consistency pruning", e))?;
    match sol.status {
        crate::lp::LpStatus::Optimal => Ok(-sol.objective <= p.offsets()[i] + TOL),
        crate::lp::LpStatus::Infeasible => Err(Error::ModelInvalidated),
        crate::lp::LpStatus::Unbounded => Ok(false),
    }
}
