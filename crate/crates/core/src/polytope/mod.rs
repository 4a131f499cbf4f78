//! Halfspace and vertex polytopes and the geometric primitives built on them.
//!
//! [`HPolytope`] is `{x : F x <= g}`. It carries every set in the toolkit: state and
//! input constraints, the noise set, invariant sets and the consistency set. When the
//! origin is strictly interior (`g > 0`) it also induces a gauge (Minkowski functional),
//! `gauge(x) = max(0, max_i F_i x / g_i)`.

mod projection;
mod redundancy;
mod vertex;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lp::{self, LinearProgram, LpStatus};
use crate::{Error, Result, TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
}

/// Outcome of a Farkas containment test `inner ⊆ outer`.
#[derive(Debug, Clone)]
pub struct Containment {
    pub holds: bool,
    /// Nonnegative `Y` with `Y·F_inner = F_outer` and `Y·g_inner <= g_outer`,
    /// present when `holds`.
    pub certificate: Option<DMatrix<f64>>,
    /// Largest `support(inner, F_outer_i) - g_outer_i` over outer rows.
    pub worst_excess: f64,
}

/// Result of tightening facet offsets by the support of a disturbance set.
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub polytope: HPolytope,
    /// Some tightened offset is `<= 0`, so the origin is no longer interior.
    pub lost_interior: bool,
}

#[derive(Serialize, Deserialize)]
struct PolytopeFile {
    #[serde(rename = "F")]
    normals: Vec<Vec<f64>>,
    g: Vec<f64>,
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::Dimension(format!(
                "{} facet normals but {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPolytope("non-finite coefficient".into()));
        }
        for (i, row) in normals.row_iter().enumerate() {
            if row.iter().all(|&a| a == 0.0) {
                return Err(Error::InvalidPolytope(format!("row {i} is all zero")));
            }
        }
        Ok(Self { normals, offsets })
    }

    /// Builds from row vectors; `dim` is needed when `rows` is empty.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>], offsets: &[f64]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("rows must all have length {dim}")));
        }
        let normals = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(normals, DVector::from_column_slice(offsets))
    }

    /// `{x : |x_i| <= radius}`.
    pub fn inf_ball(dim: usize, radius: f64) -> Self {
        let mut normals = DMatrix::zeros(2 * dim, dim);
        for i in 0..dim {
            normals[(i, i)] = 1.0;
            normals[(dim + i, i)] = -1.0;
        }
        Self {
            normals,
            offsets: DVector::from_element(2 * dim, radius),
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        Self::inf_ball(dim, 1.0)
    }

    /// `{x : ‖S x‖∞ <= 1}` for a shape matrix `S`.
    pub fn from_shape(shape: &DMatrix<f64>) -> Result<Self> {
        let normals = stack_rows(shape, &(-shape));
        Self::new(normals, DVector::from_element(2 * shape.nrows(), 1.0))
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// True when every offset is positive, i.e. the origin is strictly interior.
    pub fn is_gauge_carrier(&self) -> bool {
        self.offsets.iter().all(|&g| g > 0.0)
    }

    fn require_gauge_carrier(&self) -> Result<()> {
        match self.offsets.iter().position(|&g| g <= 0.0) {
            Some(row) => Err(Error::NotGaugeCarrier {
                row,
                offset: self.offsets[row],
            }),
            None => Ok(()),
        }
    }

    /// Rows rescaled so every offset is one. Same set, same gauge.
    pub fn normalized(&self) -> Result<Self> {
        self.require_gauge_carrier()?;
        let mut normals = self.normals.clone();
        for (i, mut row) in normals.row_iter_mut().enumerate() {
            row /= self.offsets[i];
        }
        Ok(Self {
            normals,
            offsets: DVector::from_element(self.num_rows(), 1.0),
        })
    }

    /// Rows rescaled to unit Euclidean norm.
    pub(crate) fn unit_rows(&self) -> Self {
        let mut normals = self.normals.clone();
        let mut offsets = self.offsets.clone();
        for (i, mut row) in normals.row_iter_mut().enumerate() {
            let norm = row.norm();
            row /= norm;
            offsets[i] /= norm;
        }
        Self { normals, offsets }
    }

    /// `α·P = {x : F x <= α g}`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            normals: self.normals.clone(),
            offsets: &self.offsets * alpha,
        }
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.normals.row(i).transpose()
    }

    /// Largest row violation `max_i (F_i x - g_i)`; nonpositive inside.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let fx = &self.normals * x;
        fx.iter()
            .zip(self.offsets.iter())
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.num_rows() == 0 || self.max_violation(x) <= tol
    }

    /// Minkowski functional `inf{r > 0 : x ∈ r·P}`.
    pub fn gauge(&self, x: &DVector<f64>) -> Result<f64> {
        self.require_gauge_carrier()?;
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point of dimension {} for polytope of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let fx = &self.normals * x;
        Ok(fx
            .iter()
            .zip(self.offsets.iter())
            .map(|(a, g)| a / g)
            .fold(0.0, f64::max))
    }

    fn feasibility_lp(&self, objective: Vec<f64>) -> LinearProgram {
        let mut lp = LinearProgram::new(self.dim());
        lp.maximize(objective);
        for (i, row) in self.normals.row_iter().enumerate() {
            lp.add_le(row.iter().copied().collect(), self.offsets[i]);
        }
        lp
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.num_rows() == 0 {
            return Ok(false);
        }
        let lp = self.feasibility_lp(vec![0.0; self.dim()]);
        let sol = lp::solve(&lp).map_err(|e| Error::lp("emptiness check", e))?;
        Ok(sol.status == LpStatus::Infeasible)
    }

    /// `max direction·x` over the polytope; `+∞` when unbounded in that direction.
    pub fn support(&self, direction: &DVector<f64>) -> Result<f64> {
        if direction.len() != self.dim() {
            return Err(Error::Dimension("support direction".into()));
        }
        let lp = self.feasibility_lp(direction.iter().copied().collect());
        let sol = lp::solve(&lp).map_err(|e| Error::lp("support function", e))?;
        match sol.status {
            LpStatus::Optimal => Ok(-sol.objective),
            LpStatus::Unbounded => Ok(f64::INFINITY),
            LpStatus::Infeasible => Err(Error::Empty),
        }
    }

    /// Axis-aligned bounds `(lower, upper)`; errors when unbounded.
    pub fn bounding_box(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            hi[k] = self.support(&e)?;
            lo[k] = -self.support(&(-e))?;
            if !hi[k].is_finite() || !lo[k].is_finite() {
                return Err(Error::Unbounded);
            }
        }
        Ok((lo, hi))
    }

    /// Same set with every redundant row dropped.
    pub fn remove_redundancy(&self) -> Result<Self> {
        redundancy::remove_redundancy(self)
    }

    /// Exact vertex list by the double description method.
    pub fn vertices(&self) -> Result<VPolytope> {
        Ok(VPolytope {
            vertices: vertex::enumerate(self)?,
        })
    }

    /// Orthogonal projection onto the coordinates in `keep` (Fourier–Motzkin).
    pub fn project(&self, keep: &[usize]) -> Result<Self> {
        projection::project(self, keep)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "cannot intersect polytopes of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        self.stack(other).remove_redundancy()
    }

    /// Row concatenation without cleanup.
    pub fn stack(&self, other: &Self) -> Self {
        let offsets = DVector::from_iterator(
            self.num_rows() + other.num_rows(),
            self.offsets.iter().chain(other.offsets.iter()).copied(),
        );
        Self {
            normals: stack_rows(&self.normals, &other.normals),
            offsets,
        }
    }

    /// Offsets tightened by the support of `noise`: `g_i - max_v F_i v`.
    pub fn pontryagin_shrink(&self, noise: &VPolytope) -> Result<Shrunk> {
        if noise.is_empty() {
            return Err(Error::InvalidPolytope("noise vertex list is empty".into()));
        }
        if noise.dim() != self.dim() {
            return Err(Error::Dimension("noise and polytope dimensions differ".into()));
        }
        let offsets = DVector::from_fn(self.num_rows(), |i, _| {
            let row = self.row(i);
            self.offsets[i] - noise.support(&row)
        });
        let lost_interior = offsets.iter().any(|&g| g <= 0.0);
        Ok(Shrunk {
            polytope: Self {
                normals: self.normals.clone(),
                offsets,
            },
            lost_interior,
        })
    }

    /// Decides `inner ⊆ self` by one Farkas program per row of `self`:
    /// `min y·g_inner  s.t.  y·F_inner = F_i,  y >= 0`.
    pub fn contains(&self, inner: &Self) -> Result<Containment> {
        if inner.dim() != self.dim() {
            return Err(Error::Dimension("containment between different dimensions".into()));
        }
        if inner.is_empty()? {
            return Err(Error::Empty);
        }
        let n = self.dim();
        let r = inner.num_rows();
        let mut certificate = DMatrix::zeros(self.num_rows(), r);
        let mut holds = true;
        let mut worst_excess = f64::NEG_INFINITY;
        for i in 0..self.num_rows() {
            let mut lp = LinearProgram::new(r);
            lp.minimize(inner.offsets.iter().copied().collect());
            lp.set_nonnegative(0..r);
            for k in 0..n {
                lp.add_eq(inner.normals.column(k).iter().copied().collect(), self.normals[(i, k)]);
            }
            let sol = lp::solve(&lp).map_err(|e| Error::lp("Farkas containment", e))?;
            match sol.status {
                LpStatus::Optimal => {
                    let excess = sol.objective - self.offsets[i];
                    worst_excess = worst_excess.max(excess);
                    if excess > TOL * (1.0 + self.offsets[i].abs()) {
                        holds = false;
                    }
                    for (k, y) in sol.x.iter().enumerate() {
                        certificate[(i, k)] = y.max(0.0);
                    }
                }
                // No multiplier reproduces the row: inner is unbounded along it.
                LpStatus::Infeasible => {
                    holds = false;
                    worst_excess = f64::INFINITY;
                }
                LpStatus::Unbounded => return Err(Error::Empty),
            }
        }
        Ok(Containment {
            holds,
            certificate: holds.then_some(certificate),
            worst_excess,
        })
    }

    /// Mutual containment.
    pub fn same_set(&self, other: &Self) -> Result<bool> {
        Ok(self.contains(other)?.holds && other.contains(self)?.holds)
    }

    /// Uniform samples by rejection from the bounding box.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Result<Vec<DVector<f64>>> {
        let (lo, hi) = self.bounding_box()?;
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > 10_000 * (count + 10) {
                return Err(Error::InvalidPolytope(
                    "rejection sampling found no interior points".into(),
                ));
            }
            let x = DVector::from_fn(self.dim(), |k, _| {
                if hi[k] > lo[k] {
                    rng.gen_range(lo[k]..hi[k])
                } else {
                    lo[k]
                }
            });
            if self.contains_point(&x, 0.0) {
                out.push(x);
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PolytopeFile {
            normals: self.normals.row_iter().map(|r| r.iter().copied().collect()).collect(),
            g: self.offsets.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolytopeFile = serde_json::from_str(text)?;
        let dim = file.normals.first().map_or(0, Vec::len);
        Self::from_rows(dim, &file.normals, &file.g)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Checks `Y >= 0`, `Y·F_inner = F_outer` and `Y·g_inner <= g_outer` to within `tol`.
pub fn verify_farkas(y: &DMatrix<f64>, inner: &HPolytope, outer: &HPolytope, tol: f64) -> bool {
    if y.nrows() != outer.num_rows() || y.ncols() != inner.num_rows() {
        return false;
    }
    if y.iter().any(|&v| v < -tol) {
        return false;
    }
    let identity = y * inner.normals() - outer.normals();
    if identity.iter().any(|v| v.abs() > tol) {
        return false;
    }
    let bound = y * inner.offsets() - outer.offsets();
    bound.iter().all(|&v| v <= tol)
}

impl VPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        if let Some(first) = vertices.first() {
            if vertices.iter().any(|v| v.len() != first.len()) {
                return Err(Error::Dimension("vertices of different dimensions".into()));
            }
        }
        Ok(Self { vertices })
    }

    /// The single point at the origin.
    pub fn origin(dim: usize) -> Self {
        Self {
            vertices: vec![DVector::zeros(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, |v| v.len())
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    pub fn support(&self, direction: &DVector<f64>) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(direction))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}
