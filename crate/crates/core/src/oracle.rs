//! Slow, independent computations used to cross-check the fast paths.

use rand::Rng;

use crate::dyadic::{cube_count, Word};
use crate::error::{Error, Result};
use crate::measure::DyadicMeasure;
use crate::metric::GroundMetric;
use crate::splice::{splice_words, SpliceSchedule};

/// Largest point count for vertex enumeration.
pub const VERTEX_MAX_POINTS: usize = 5;

/// Random probability with every leaf charged.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, dim: usize, depth: usize) -> DyadicMeasure {
    let n = 1usize << (dim * depth);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
    let s: f64 = raw.iter().sum();
    DyadicMeasure::new(dim, depth, raw.into_iter().map(|v| v / s).collect()).expect("valid random measure")
}

/// Random probability where roughly half the leaves are empty.
pub fn random_sparse_measure<R: Rng + ?Sized>(rng: &mut R, dim: usize, depth: usize) -> DyadicMeasure {
    let n = 1usize << (dim * depth);
    let mut raw: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 }).collect();
    let keep = rng.gen_range(0..n);
    raw[keep] += 1.0;
    let s: f64 = raw.iter().sum();
    DyadicMeasure::new(dim, depth, raw.into_iter().map(|v| v / s).collect()).expect("valid random measure")
}

/// The metric LP solved by enumerating every vertex of the feasible polytope.
///
/// Each vertex is cut out by `n` tight constraints among `fᵢ - fⱼ = wᵢⱼ`
/// and `fᵢ = ±1`; the polytope is bounded, so the best vertex is optimal.
pub fn brute_force_bl(c: &[f64], ground: &GroundMetric) -> Result<f64> {
    let n = ground.len();
    if c.len() != n {
        return Err(Error::Shape(format!("{} masses for {n} points", c.len())));
    }
    if n > VERTEX_MAX_POINTS {
        return Err(Error::OracleTooLarge(format!(
            "vertex enumeration limited to {VERTEX_MAX_POINTS} points, got {n}"
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                a[j] = -1.0;
                rows.push((a, ground.get(i, j)));
            }
        }
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; n];
            a[i] = s;
            rows.push((a, 1.0));
        }
    }
    let feasible = |f: &[f64]| {
        rows.iter()
            .all(|(a, b)| a.iter().zip(f).map(|(x, y)| x * y).sum::<f64>() <= b + 1e-9)
    };
    let mut best = f64::NEG_INFINITY;
    let mut pick = vec![0usize; n];
    enumerate((0, 0), &mut pick, &rows, n, c, &feasible, &mut best);
    Ok(best.max(0.0))
}

fn enumerate<F: Fn(&[f64]) -> bool>(
    (depth, from): (usize, usize),
    pick: &mut [usize],
    rows: &[(Vec<f64>, f64)],
    n: usize,
    c: &[f64],
    feasible: &F,
    best: &mut f64,
) {
    if depth == n {
        let a: Vec<Vec<f64>> = pick.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&r| rows[r].1).collect();
        if let Some(f) = solve_square(a, b) {
            if feasible(&f) {
                *best = best.max(c.iter().zip(&f).map(|(x, y)| x * y).sum());
            }
        }
        return;
    }
    for r in from..rows.len() {
        if rows.len() - r < n - depth {
            break;
        }
        pick[depth] = r;
        enumerate((depth + 1, r + 1), pick, rows, n, c, feasible, best);
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    let pivot = a[col].clone();
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                        *x -= f * p;
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Mass of a leaf under a splice, read block by block from the components.
pub fn splice_leaf_mass(components: &[DyadicMeasure], schedule: &SpliceSchedule, leaf: &Word) -> Result<f64> {
    let mut mass = 1.0;
    let mut block = 0;
    let mut start = 0;
    while start < leaf.len() {
        let len = schedule
            .block_len(block)
            .ok_or_else(|| Error::Shape("schedule too short for the leaf".into()))?;
        let end = (start + len).min(leaf.len());
        mass *= components[block % components.len()].mass(&leaf.slice(start, end))?;
        start = end;
        block += 1;
    }
    Ok(mass)
}

/// The splice pushed forward from the product space by enumerating every
/// tuple of component words (the last block cut at `depth`).
pub fn splice_by_enumeration(
    components: &[DyadicMeasure],
    schedule: &SpliceSchedule,
    depth: usize,
) -> Result<DyadicMeasure> {
    let dim = components[0].dim();
    // (full block length, length kept below `depth`)
    let mut lens = Vec::new();
    let mut covered = 0;
    while covered < depth {
        let len = schedule
            .block_len(lens.len())
            .ok_or_else(|| Error::Shape("schedule too short".into()))?;
        lens.push((len, len.min(depth - covered)));
        covered += len;
    }
    let tuples = cube_count(dim, depth)?;
    if tuples > 1 << 22 {
        return Err(Error::OracleTooLarge(format!("{tuples} word tuples")));
    }
    let mut out = vec![0.0; tuples];
    for t in 0..tuples {
        let mut rest = t;
        let mut words = Vec::with_capacity(lens.len());
        let mut weight = 1.0;
        for (b, &(full, kept)) in lens.iter().enumerate().rev() {
            let count = cube_count(dim, kept)?;
            let w = Word::from_index(dim, kept, rest % count)?;
            rest /= count;
            weight *= components[b % components.len()].mass(&w)?;
            let mut padded = w.digits().to_vec();
            padded.resize(full, 0);
            words.push(Word::new(dim, padded)?);
        }
        if weight == 0.0 {
            continue;
        }
        words.reverse();
        let y = splice_words(&words, schedule)?;
        out[y.prefix(depth).index()] += weight;
    }
    DyadicMeasure::new(dim, depth, out)
}
