use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::{Error, Result, TOL};

/// Fourier–Motzkin elimination of every coordinate not in `keep`, highest index first,
/// with redundancy removal before the first and after every eliminated coordinate.
pub(crate) fn project(p: &HPolytope, keep: &[usize]) -> Result<HPolytope> {
    let n = p.dim();
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() || kept.iter().any(|&k| k >= n) {
        return Err(Error::Dimension(format!("invalid coordinate selection {keep:?} in dimension {n}")));
    }
    if kept.len() == n {
        return Ok(p.clone());
    }

    let mut current = p.remove_redundancy()?;
    let mut coords: Vec<usize> = (0..n).collect();
    for k in (0..n).rev() {
        if kept.contains(&k) {
            continue;
        }
        let col = coords.iter().position(|&c| c == k).unwrap();
        current = eliminate(&current, col)?.remove_redundancy()?;
        coords.remove(col);
    }
    Ok(current)
}

fn eliminate(p: &HPolytope, col: usize) -> Result<HPolytope> {
    let n = p.dim();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();

    let push = |rows: &mut Vec<(Vec<f64>, f64)>, row: Vec<f64>, b: f64| -> Result<()> {
        let scale = row.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if scale <= TOL {
            // 0 <= b: vacuous, or the input was empty.
            return if b >= -TOL { Ok(()) } else { Err(Error::Empty) };
        }
        rows.push((row.iter().map(|a| a / scale).collect(), b / scale));
        Ok(())
    };

    for i in 0..p.num_rows() {
        let row = p.normals.row(i);
        let norm = row.amax();
        let c = row[col];
        if c > TOL * norm {
            pos.push(i);
        } else if c < -TOL * norm {
            neg.push(i);
        } else {
            let reduced: Vec<f64> = (0..n).filter(|&j| j != col).map(|j| row[j]).collect();
            push(&mut rows, reduced, p.offsets[i])?;
        }
    }
    for &i in &pos {
        for &j in &neg {
            let ci = p.normals[(i, col)];
            let cj = -p.normals[(j, col)];
            let combined: Vec<f64> = (0..n)
                .filter(|&k| k != col)
                .map(|k| cj * p.normals[(i, k)] + ci * p.normals[(j, k)])
                .collect();
            push(&mut rows, combined, cj * p.offsets[i] + ci * p.offsets[j])?;
        }
    }

    let normals = DMatrix::from_fn(rows.len(), n - 1, |r, c| rows[r].0[c]);
    let offsets = DVector::from_fn(rows.len(), |r, _| rows[r].1);
    Ok(HPolytope { normals, offsets })
}
