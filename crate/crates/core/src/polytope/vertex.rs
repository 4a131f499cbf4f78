//! Vertex enumeration by the double description method.
//!
//! Starts from a box strictly containing the polytope (from support programs) and
//! inserts the facet halfspaces one at a time. Each vertex tracks the set of
//! constraints active at it; two vertices on opposite sides of a new halfspace are
//! adjacent when no third vertex is active on every constraint they share
//! (the combinatorial adjacency test), and each adjacent pair yields one new vertex.

use nalgebra::DVector;

use super::HPolytope;
use crate::{Error, Result, TOL};

#[derive(Clone)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(bits: usize) -> Self {
        Self(vec![0; bits.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn intersection(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn union_with(&mut self, other: &Self) {
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a |= b);
    }

    fn is_subset_of(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }

    fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct Vertex {
    point: Vec<f64>,
    active: BitSet,
}

pub(crate) fn enumerate(p: &HPolytope) -> Result<Vec<DVector<f64>>> {
    let n = p.dim();
    if n == 0 {
        return Err(Error::Dimension("vertex enumeration in dimension zero".into()));
    }
    if p.is_empty()? {
        return Err(Error::Empty);
    }
    let (lo, hi) = p.bounding_box()?;
    let unit = p.unit_rows();

    let scale = lo.iter().chain(hi.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    let width = (&hi - &lo).amax();
    let margin = 0.1 * width + 1e-3 * scale;
    let eps = TOL * scale;

    let total = 2 * n + p.num_rows();
    let corners = 1usize
        .checked_shl(n as u32)
        .filter(|_| n < 24)
        .ok_or_else(|| Error::Dimension(format!("dimension {n} too large for vertex enumeration")))?;
    let mut verts: Vec<Vertex> = (0..corners)
        .map(|mask| {
            let mut active = BitSet::new(total);
            let point = (0..n)
                .map(|k| {
                    if mask >> k & 1 == 1 {
                        active.insert(2 * k);
                        hi[k] + margin
                    } else {
                        active.insert(2 * k + 1);
                        lo[k] - margin
                    }
                })
                .collect();
            Vertex { point, active }
        })
        .collect();

    for i in 0..p.num_rows() {
        let a: Vec<f64> = unit.normals.row(i).iter().copied().collect();
        let b = unit.offsets[i];
        let cid = 2 * n + i;
        let slack: Vec<f64> = verts
            .iter()
            .map(|v| v.point.iter().zip(&a).map(|(x, c)| x * c).sum::<f64>() - b)
            .collect();
        let plus: Vec<usize> = (0..verts.len()).filter(|&k| slack[k] > eps).collect();
        if plus.is_empty() {
            for (v, s) in verts.iter_mut().zip(&slack) {
                if s.abs() <= eps {
                    v.active.insert(cid);
                }
            }
            continue;
        }
        let minus: Vec<usize> = (0..verts.len()).filter(|&k| slack[k] < -eps).collect();

        let mut created: Vec<Vertex> = Vec::new();
        for &pi in &plus {
            for &qi in &minus {
                let common = verts[pi].active.intersection(&verts[qi].active);
                if common.len() + 1 < n {
                    continue;
                }
                let blocked = verts
                    .iter()
                    .enumerate()
                    .any(|(r, v)| r != pi && r != qi && common.is_subset_of(&v.active));
                if blocked {
                    continue;
                }
                let t = slack[pi] / (slack[pi] - slack[qi]);
                let point: Vec<f64> = verts[pi]
                    .point
                    .iter()
                    .zip(&verts[qi].point)
                    .map(|(x, y)| x + t * (y - x))
                    .collect();
                let mut active = common;
                active.insert(cid);
                created.push(Vertex { point, active });
            }
        }

        let mut next: Vec<Vertex> = Vec::with_capacity(verts.len() + created.len());
        for (k, mut v) in verts.into_iter().enumerate() {
            if slack[k] > eps {
                continue;
            }
            if slack[k] >= -eps {
                v.active.insert(cid);
            }
            next.push(v);
        }
        for v in created {
            match next.iter_mut().find(|w| close(&w.point, &v.point, eps)) {
                Some(w) => w.active.union_with(&v.active),
                None => next.push(v),
            }
        }
        if next.is_empty() {
            return Err(Error::Empty);
        }
        verts = next;
    }

    Ok(verts
        .into_iter()
        .map(|v| DVector::from_vec(v.point))
        .collect())
}

fn close(a: &[f64], b: &[f64], eps: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= eps)
}
