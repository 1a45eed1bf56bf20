//! Dense tableau simplex, used as an independent route to the metric LP.

use super::GroundMetric;
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

/// Largest point count accepted by [`bl_distance_simplex`].
pub const SIMPLEX_MAX_POINTS: usize = 40;

/// `max cᵀx` subject to `Ax ≤ b`, `x ≥ 0`, with `b ≥ 0`.
///
/// Bland's rule guarantees termination; returns the optimum and a maximizer.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("inconsistent LP dimensions".into()));
    }
    if b.iter().any(|&v| v < 0.0) {
        return Err(Error::Solver("origin must be feasible".into()));
    }
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, row) in a.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for (j, &cj) in c.iter().enumerate() {
        t[m][j] = -cj;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let limit = 50 * (n + m) * (n + m) + 1000;
    for _ in 0..limit {
        let Some(col) = (0..n + m).find(|&j| t[m][j] < -PIVOT_TOL) else {
            let mut x = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i][width - 1];
                }
            }
            return Ok((t[m][width - 1], x));
        };
        let mut row = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][col] > PIVOT_TOL {
                let ratio = t[i][width - 1] / t[i][col];
                let better = ratio < best - PIVOT_TOL
                    || (ratio <= best + PIVOT_TOL && row.is_some_and(|r: usize| basis[i] < basis[r]));
                if row.is_none() || better {
                    best = ratio.min(best);
                    row = Some(i);
                }
            }
        }
        let r = row.ok_or_else(|| Error::Solver("LP is unbounded".into()))?;
        let p = t[r][col];
        t[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = t[r].clone();
        for (i, line) in t.iter_mut().enumerate() {
            if i != r {
                let f = line[col];
                if f != 0.0 {
                    line.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
                }
            }
        }
        basis[r] = col;
    }
    Err(Error::Solver("simplex iteration limit reached".into()))
}

/// The metric LP in the shifted variables `gᵢ = fᵢ + 1 ∈ [0, 2]`.
pub fn bl_distance_simplex(c: &[f64], ground: &GroundMetric) -> Result<f64> {
    let n = ground.len();
    if c.len() != n {
        return Err(Error::Shape(format!("{} masses for {n} points", c.len())));
    }
    if n > SIMPLEX_MAX_POINTS {
        return Err(Error::OracleTooLarge(format!(
            "dense simplex limited to {SIMPLEX_MAX_POINTS} points, got {n}"
        )));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row[j] = -1.0;
                a.push(row);
                b.push(ground.get(i, j));
            }
        }
        let mut cap = vec![0.0; n];
        cap[i] = 1.0;
        a.push(cap);
        b.push(2.0);
    }
    let (opt, _) = maximize(c, &a, &b)?;
    Ok(opt - c.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let (v, x) = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((v - 36.0).abs() < 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        assert!(maximize(&[1.0], &[vec![-1.0]], &[1.0]).is_err());
    }

    #[test]
    fn two_point_closed_form() {
        for delta in [0.0, 0.4, 1.7, 2.0, 5.0] {
            let g = GroundMetric::from_points(&[vec![0.0], vec![delta]]).unwrap();
            let v = bl_distance_simplex(&[1.0, -1.0], &g).unwrap();
            assert!((v - f64::min(delta, 2.0)).abs() < 1e-12, "{delta}");
        }
    }
}
