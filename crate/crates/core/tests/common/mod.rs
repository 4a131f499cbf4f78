//! Brute-force references shared by the integration tests. Nothing here calls the
//! library's vertex enumeration, projection or LP solver.
#![allow(dead_code)]

use ddrhc::consistency::{ConsistencySet, DataDictionary, SystemPair};
use ddrhc::controller::NoiseModel;
use ddrhc::invariant::{compute_invariant, InvariantResult};
use ddrhc::polytope::HPolytope;
use ddrhc::simulator::{gen_training_data, NoiseMode, TruePlant};
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;

pub const ORACLE_TOL: f64 = 1e-9;

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn push_unique(points: &mut Vec<DVector<f64>>, p: DVector<f64>, tol: f64) {
    if !points.iter().any(|q| (q - &p).amax() <= tol) {
        points.push(p);
    }
}

/// Vertices of `{x : F x <= g}` by solving every square subsystem of `n` rows.
pub fn brute_vertices(f: &DMatrix<f64>, g: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = f.ncols();
    let mut out = Vec::new();
    for rows in subsets(f.nrows(), n) {
        let a = DMatrix::from_fn(n, n, |i, j| f[(rows[i], j)]);
        let b = DVector::from_fn(n, |i, _| g[rows[i]]);
        let svd = a.clone().svd(false, false);
        if svd.singular_values.min() < 1e-10 * svd.singular_values.max().max(1.0) {
            continue;
        }
        let Some(x) = a.lu().solve(&b) else { continue };
        let scale = 1.0 + x.amax();
        if (f * &x - g).max() <= ORACLE_TOL * scale {
            push_unique(&mut out, x, 1e-7 * scale);
        }
    }
    out
}

/// Facets of the convex hull of full-dimensional `points` in ℝ¹, ℝ² or ℝ³: every hyperplane
/// through `dim` affinely independent points with all points on one side.
pub fn hull_hrep(points: &[DVector<f64>]) -> (DMatrix<f64>, DVector<f64>) {
    let dim = points[0].len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let add = |normal: DVector<f64>, offset: f64, rows: &mut Vec<(Vec<f64>, f64)>| {
        let s = normal.norm();
        let (normal, offset) = (normal / s, offset / s);
        let slack_ok = points.iter().all(|p| normal.dot(p) <= offset + 1e-9);
        if !slack_ok {
            return;
        }
        let row: Vec<f64> = normal.iter().copied().collect();
        if !rows
            .iter()
            .any(|(r, o)| r.iter().zip(&row).all(|(a, b)| (a - b).abs() < 1e-7) && (o - offset).abs() < 1e-7)
        {
            rows.push((row, offset));
        }
    };
    match dim {
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            rows.push((vec![1.0], hi));
            rows.push((vec![-1.0], -lo));
        }
        2 => {
            for idx in subsets(points.len(), 2) {
                let d = &points[idx[1]] - &points[idx[0]];
                if d.norm() < 1e-9 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let normal = DVector::from_vec(vec![-d[1], d[0]]) * sign;
                    let offset = normal.dot(&points[idx[0]]);
                    add(normal, offset, &mut rows);
                }
            }
        }
        3 => {
            for idx in subsets(points.len(), 3) {
                let a = &points[idx[1]] - &points[idx[0]];
                let b = &points[idx[2]] - &points[idx[0]];
                let normal = a.cross(&b);
                if normal.norm() < 1e-9 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let normal = &normal * sign;
                    let offset = normal.dot(&points[idx[0]]);
                    add(normal, offset, &mut rows);
                }
            }
        }
        _ => panic!("hull oracle supports dimensions 1 to 3"),
    }
    let f = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    let g = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    (f, g)
}

/// Minimum of `c·x` over a bounded `{F x <= g}` by vertex enumeration.
pub fn brute_lp_min(c: &DVector<f64>, f: &DMatrix<f64>, g: &DVector<f64>) -> Option<f64> {
    brute_vertices(f, g).iter().map(|v| c.dot(v)).min_by(|a, b| a.total_cmp(b))
}

/// Random bounded polytope around the origin: `rows` random halfspaces at distance
/// `[0.3, 1.5]` plus a box of half-width 2 so the result stays bounded.
pub fn random_polytope<R: Rng>(rng: &mut R, dim: usize, rows: usize) -> HPolytope {
    let mut f = Vec::new();
    let mut g = Vec::new();
    for _ in 0..rows {
        let mut d: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
        d.iter_mut().for_each(|x| *x /= norm);
        f.push(d);
        g.push(rng.gen_range(0.3..1.5));
    }
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[k] = s;
            f.push(e);
            g.push(2.0);
        }
    }
    HPolytope::from_rows(dim, &f, &g).unwrap()
}

/// The rotation-like plant shared by both worked examples.
pub fn example_system() -> SystemPair {
    SystemPair::new(dmatrix![0.0, -0.99; 0.99, 0.0], dmatrix![0.0; 1.0]).unwrap()
}

pub const DATA_SEED: u64 = 1;
pub const SIM_SEED: u64 = 7;
/// Constant disturbance for the second example.
pub const CONSTANT_NOISE: [f64; 2] = [-0.1, 0.1];

pub struct Setup {
    pub epsilon: f64,
    pub plant: TruePlant,
    pub x_set: HPolytope,
    pub u_set: HPolytope,
    pub data: DataDictionary,
    pub noise: NoiseModel,
    pub consistency: ConsistencySet,
    pub systems: Vec<SystemPair>,
}

impl Setup {
    pub fn new(epsilon: f64, noise: NoiseMode) -> Self {
        let plant = TruePlant::new(example_system(), epsilon, noise).unwrap();
        let x_set = HPolytope::unit_box(2);
        let u_set = HPolytope::unit_box(1);
        let data = gen_training_data(&plant, 10, &x_set, &u_set, DATA_SEED).unwrap();
        let noise = NoiseModel::from_bound(2, epsilon).unwrap();
        let consistency = ConsistencySet::build(&data, noise.shape()).unwrap();
        let systems = consistency.system_vertices().unwrap();
        Self {
            epsilon,
            plant,
            x_set,
            u_set,
            data,
            noise,
            consistency,
            systems,
        }
    }

    pub fn example1() -> Self {
        Self::new(0.04, NoiseMode::UniformIid)
    }

    pub fn example2() -> Self {
        Self::new(0.1, NoiseMode::Constant { v: CONSTANT_NOISE.to_vec() })
    }

    pub fn invariant(&self) -> InvariantResult {
        compute_invariant(&self.x_set, &self.u_set, self.noise.vertices(), &self.systems, 20).unwrap()
    }
}
