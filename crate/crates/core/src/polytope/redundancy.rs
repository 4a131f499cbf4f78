use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::lp::{self, LinearProgram, LpStatus};
use crate::{Error, Result, TOL};

/// Row `i` is redundant when maximizing `F_i x` subject to the other rows (with row `i`
/// loosened by one unit to keep the program bounded) stays within `g_i`.
///
/// The programs are solved over a growing working set of rows rather than all of them:
/// when the working-set optimum violates some other row, the row first crossed on the
/// segment from an interior point to that optimum joins the set and the program is
/// re-solved. A row is kept only when its optimum satisfies every other row.
pub(crate) fn remove_redundancy(p: &HPolytope) -> Result<HPolytope> {
    let n = p.dim();
    let unit = p.unit_rows();
    let rows = p.num_rows();

    for i in 0..rows {
        if !unit.offsets[i].is_finite() {
            return Err(Error::InvalidPolytope(format!("row {i} is degenerate")));
        }
    }
    if p.is_empty()? {
        return Err(Error::Empty);
    }

    // Parallel copies: keep the tightest one.
    let mut alive = vec![true; rows];
    for i in 0..rows {
        if !alive[i] {
            continue;
        }
        for j in i + 1..rows {
            if !alive[j] {
                continue;
            }
            let diff = (unit.normals.row(i) - unit.normals.row(j)).amax();
            if diff <= TOL {
                if unit.offsets[j] < unit.offsets[i] {
                    alive[i] = false;
                    break;
                }
                alive[j] = false;
            }
        }
    }

    let candidates: Vec<usize> = (0..rows).filter(|&i| alive[i]).collect();
    let center = interior_point(&unit, &candidates)?;
    let slack_tol = |j: usize| TOL * (1.0 + unit.offsets[j].abs());
    let value = |j: usize, x: &[f64]| -> f64 { unit.normals.row(j).iter().zip(x).map(|(a, b)| a * b).sum() };

    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; rows];
    let mut keep = vec![false; rows];
    for &i in &candidates {
        loop {
            let mut lp = LinearProgram::new(n);
            lp.maximize(unit.normals.row(i).iter().copied().collect());
            lp.add_le(unit.normals.row(i).iter().copied().collect(), unit.offsets[i] + 1.0);
            for &j in working.iter().filter(|&&j| j != i) {
                lp.add_le(unit.normals.row(j).iter().copied().collect(), unit.offsets[j]);
            }
            let sol = lp::solve(&lp).map_err(|e| Error::lp("redundancy check", e))?;
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return Err(Error::Empty),
                LpStatus::Unbounded => {
                    return Err(Error::lp(
                        "redundancy check",
                        crate::lp::LpError::Numerical("relaxed row did not bound the program".into()),
                    ))
                }
            }
            let x = sol.x;
            if value(i, &x) <= unit.offsets[i] + slack_tol(i) {
                break;
            }
            let violated: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&j| j != i && !in_working[j] && value(j, &x) > unit.offsets[j] + slack_tol(j))
                .collect();
            if violated.is_empty() {
                keep[i] = true;
                if !in_working[i] {
                    in_working[i] = true;
                    working.push(i);
                }
                break;
            }
            let next = match &center {
                Some(z) => {
                    let dir: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
                    let zv: Vec<f64> = z.clone();
                    violated
                        .iter()
                        .copied()
                        .map(|j| {
                            let rate = value(j, &dir);
                            let t = if rate > 0.0 { (unit.offsets[j] - value(j, &zv)) / rate } else { f64::INFINITY };
                            (t, j)
                        })
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .map(|(_, j)| j)
                        .unwrap()
                }
                None => violated
                    .iter()
                    .copied()
                    .max_by(|&a, &b| (value(a, &x) - unit.offsets[a]).total_cmp(&(value(b, &x) - unit.offsets[b])))
                    .unwrap(),
            };
            in_working[next] = true;
            working.push(next);
        }
    }

    let kept: Vec<usize> = (0..rows).filter(|&i| keep[i]).collect();
    let normals = DMatrix::from_fn(kept.len(), n, |r, c| p.normals[(kept[r], c)]);
    let offsets = DVector::from_fn(kept.len(), |r, _| p.offsets[kept[r]]);
    Ok(HPolytope { normals, offsets })
}

/// Chebyshev-style centre of the unit-normalized rows, capped at radius one; `None`
/// when the set has no interior.
fn interior_point(unit: &HPolytope, rows: &[usize]) -> Result<Option<Vec<f64>>> {
    let n = unit.dim();
    let mut lp = LinearProgram::new(n + 1);
    lp.set_objective_coeff(n, -1.0);
    lp.set_lower_bound(n, 0.0);
    let mut cap = vec![0.0; n + 1];
    cap[n] = 1.0;
    lp.add_le(cap, 1.0);
    for &j in rows {
        let mut row: Vec<f64> = unit.normals.row(j).iter().copied().collect();
        row.push(unit.normals.row(j).norm());
        lp.add_le(row, unit.offsets[j]);
    }
    let sol = lp::solve(&lp).map_err(|e| Error::lp("interior point", e))?;
    if sol.status != LpStatus::Optimal || sol.x[n] <= TOL {
        return Ok(None);
    }
    Ok(Some(sol.x[..n].to_vec()))
}
