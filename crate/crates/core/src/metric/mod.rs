//! The bounded-Lipschitz metric between atomic measures and between
//! distributions of measures.
//!
//! `d(μ, ν) = sup { ∫ f d(μ - ν) : Lip(f) ≤ 1, ‖f‖_∞ ≤ 1 }`, computed
//! exactly on finite supports. Measures are compared through their
//! projections onto level-`p` cube centers under the sup-norm.

mod network;
mod simplex;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub use network::{BlSolution, PreparedMetric, CERTIFICATE_TOL};
pub use simplex::{bl_distance_simplex, maximize, SIMPLEX_MAX_POINTS};

use crate::distribution::{Atom, EmpiricalDistribution};
use crate::dyadic::{cube_count, digits_to_center};
use crate::error::{Error, Result};
use crate::measure::DyadicMeasure;
use crate::par::{self, Exec};

/// Point count up to which the triangle inequality is checked on construction.
const TRIANGLE_CHECK_LIMIT: usize = 64;

/// A symmetric pairwise distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundMetric {
    n: usize,
    d: Vec<f64>,
}

impl GroundMetric {
    pub fn from_matrix(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::Shape(format!("{n} points need {} distances, got {}", n * n, d.len())));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::Domain(format!("nonzero self-distance at {i}")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 || v != d[j * n + i] {
                    return Err(Error::Domain(format!("distance ({i}, {j}) = {v} is not a symmetric nonnegative value")));
                }
            }
        }
        if n <= TRIANGLE_CHECK_LIMIT {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if d[i * n + j] > d[i * n + k] + d[k * n + j] + 1e-12 {
                            return Err(Error::Domain(format!("triangle inequality fails at ({i}, {k}, {j})")));
                        }
                    }
                }
            }
        }
        Ok(Self { n, d })
    }

    /// Sup-norm distances between points of `ℝ^d`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = sup_distance(&points[i], &points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self::from_matrix(n, d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Fingerprints closer than this are the same location.
const MERGE_TOL: f64 = 1e-12;

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact bounded-Lipschitz value for signed masses `c` on the points of `ground`.
pub fn bl_distance(c: &[f64], ground: &GroundMetric) -> Result<f64> {
    Ok(PreparedMetric::new(ground).solve(c)?.value)
}

/// Atoms at locations in `ℝ^d` with masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicCloud {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

/// `μ_k = Σ_{D ∈ D_k} μ(D) δ_{z_D}` with `z_D` the center of `D`.
pub fn project(mu: &DyadicMeasure, k: usize) -> Result<AtomicCloud> {
    let masses = mu.level_masses(k)?;
    Ok(AtomicCloud { points: grid_centers(mu.dim(), k, mu.support_half_width())?, masses })
}

fn grid_centers(dim: usize, k: usize, hw: u8) -> Result<Vec<Vec<f64>>> {
    let n = cube_count(dim, k)?;
    let mask = (1usize << dim) - 1;
    Ok((0..n)
        .map(|idx| {
            let digits: Vec<u8> = (0..k).map(|j| ((idx >> (dim * (k - 1 - j))) & mask) as u8).collect();
            digits_to_center(dim, &digits, hw as f64).0
        })
        .collect())
}

type GridKey = (usize, usize, u8);

fn grid_cache() -> &'static Mutex<HashMap<GridKey, Arc<PreparedMetric>>> {
    static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<PreparedMetric>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Prepared sup-norm metric on the level-`p` cube centers, built once per shape.
pub fn grid_metric(dim: usize, p: usize, hw: u8) -> Result<Arc<PreparedMetric>> {
    let key = (dim, p, hw);
    if let Some(m) = grid_cache().lock().expect("grid cache").get(&key) {
        return Ok(m.clone());
    }
    let ground = GroundMetric::from_points(&grid_centers(dim, p, hw)?)?;
    let prepared = Arc::new(PreparedMetric::new(&ground));
    grid_cache().lock().expect("grid cache").insert(key, prepared.clone());
    Ok(prepared)
}

/// Bounded-Lipschitz distance between the level-`p` projections of two measures.
pub fn measure_distance(mu: &DyadicMeasure, nu: &DyadicMeasure, p: usize) -> Result<f64> {
    if mu.dim() != nu.dim() || mu.support_half_width() != nu.support_half_width() {
        return Err(Error::Shape("measures on different cubes".into()));
    }
    let a = mu.level_masses(p)?;
    let b = nu.level_masses(p)?;
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    if c.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    grid_metric(mu.dim(), p, mu.support_half_width())?.solve(&c).map(|s| s.value)
}

/// Distance between the full-depth measure and its level-`k` projection.
///
/// Both live on the level-`K` grid: `μ` as leaf masses at leaf centers and
/// `μ_k` as cube masses moved to their level-`k` centers.
pub fn projection_distance(mu: &DyadicMeasure, k: usize) -> Result<f64> {
    let depth = mu.depth();
    let fine = project(mu, depth)?;
    let coarse = project(mu, k)?;
    let mut points = fine.points.clone();
    points.extend(coarse.points);
    let mut c = fine.masses.clone();
    c.extend(coarse.masses.iter().map(|m| -m));
    bl_distance(&c, &GroundMetric::from_points(&points)?)
}

/// Ground distance between two atoms: measure distance, and for tagged atoms
/// the larger of that and the sup-distance of the tracked points.
pub fn atom_distance<A: Atom>(a: &A, b: &A, p: usize) -> Result<f64> {
    let m = measure_distance(a.measure(), b.measure(), p)?;
    Ok(match (a.point(), b.point()) {
        (Some(x), Some(y)) => m.max(sup_distance(&x, &y)),
        _ => m,
    })
}

/// Bounded-Lipschitz distance between two distributions at resolution `p`.
pub fn distribution_distance<A: Atom>(
    p_dist: &EmpiricalDistribution<A>,
    q_dist: &EmpiricalDistribution<A>,
    p: usize,
) -> Result<f64> {
    distribution_distance_with(p_dist, q_dist, p, Exec::default())
}

pub fn distribution_distance_with<A: Atom>(
    p_dist: &EmpiricalDistribution<A>,
    q_dist: &EmpiricalDistribution<A>,
    p: usize,
    exec: Exec,
) -> Result<f64> {
    if p_dist.dim() != q_dist.dim() {
        return Err(Error::Shape("distributions over different dimensions".into()));
    }
    // atoms whose projections agree within the merge tolerance (and points) are one location
    let mut locations: Vec<&A> = Vec::new();
    let mut prints: Vec<(Vec<f64>, Option<Vec<f64>>)> = Vec::new();
    let mut c: Vec<f64> = Vec::new();
    for (sign, dist) in [(1.0, p_dist), (-1.0, q_dist)] {
        for (w, a) in dist.atoms() {
            let print = (a.measure().level_masses(p)?, a.point());
            let found = prints.iter().position(|(m, x)| {
                *x == print.1 && m.len() == print.0.len() && m.iter().zip(&print.0).all(|(u, v)| (u - v).abs() <= MERGE_TOL)
            });
            let idx = match found {
                Some(i) => i,
                None => {
                    locations.push(a);
                    prints.push(print);
                    c.push(0.0);
                    locations.len() - 1
                }
            };
            c[idx] += sign * w;
        }
    }
    let n = locations.len();
    if c.iter().all(|&v| v.abs() <= 1e-15) {
        return Ok(0.0);
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = par::map_slice(exec, &pairs, |&(i, j)| atom_distance(locations[i], locations[j], p));
    let mut d = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        d[i * n + j] = v;
        d[j * n + i] = v;
    }
    bl_distance(&c, &GroundMetric::from_matrix(n, d)?)
}
