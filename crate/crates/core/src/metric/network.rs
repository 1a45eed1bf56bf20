//! Successive-shortest-path min-cost flow on the potential graph.
//!
//! The bounded-Lipschitz LP `max Σ cᵢ fᵢ` subject to `fᵢ - fⱼ ≤ wᵢⱼ` and
//! `|fᵢ| ≤ 1` is the dual of an uncapacitated transshipment problem on the
//! points plus a ground node joined to every point at cost 1. Flow is routed
//! from surplus to deficit points; the final node potentials are the optimal
//! test function, which is checked against the full constraint set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::GroundMetric;
use crate::error::{Error, Result};

/// Primal-dual gap accepted for a certified optimum.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Points with more atoms than this skip the triangle-dominance pruning pass.
const PRUNE_LIMIT: usize = 1500;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cost: f64,
    /// Residual capacity; forward arcs are uncapacitated.
    cap: f64,
    rev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A ground metric reduced to the arcs that can carry optimal flow.
///
/// Points at distance zero are collapsed into one node. An arc `i → j` is
/// dropped when `wᵢⱼ ≥ 2` (the ground node is never worse) or when some
/// intermediate `k` gives `wᵢₖ + wₖⱼ ≤ wᵢⱼ` with both legs shorter than `wᵢⱼ`.
#[derive(Debug, Clone)]
pub struct PreparedMetric {
    cluster_of: Vec<usize>,
    representatives: Vec<usize>,
    ground: GroundMetric,
    arcs: Vec<(usize, usize, f64)>,
}

/// Optimal value with the certified test function on the original points.
#[derive(Debug, Clone)]
pub struct BlSolution {
    pub value: f64,
    pub potential: Vec<f64>,
    pub augmentations: usize,
}

impl PreparedMetric {
    pub fn new(ground: &GroundMetric) -> Self {
        let n = ground.len();
        let mut cluster_of = vec![usize::MAX; n];
        let mut representatives = Vec::new();
        for i in 0..n {
            if cluster_of[i] != usize::MAX {
                continue;
            }
            let id = representatives.len();
            representatives.push(i);
            for (j, slot) in cluster_of.iter_mut().enumerate().skip(i) {
                if *slot == usize::MAX && ground.get(i, j) == 0.0 {
                    *slot = id;
                }
            }
        }
        let k = representatives.len();
        let w = |a: usize, b: usize| ground.get(representatives[a], representatives[b]);
        let mut arcs = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let wij = w(i, j);
                if wij >= 2.0 {
                    continue;
                }
                // both legs strictly shorter, so domination never cycles under rounding
                let dominated = k <= PRUNE_LIMIT
                    && (0..k).any(|m| {
                        let (a, b) = (w(i, m), w(m, j));
                        m != i && m != j && a < wij && b < wij && a + b <= wij
                    });
                if !dominated {
                    arcs.push((i, j, wij));
                }
            }
        }
        Self { cluster_of, representatives, ground: ground.clone(), arcs }
    }

    pub fn point_count(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Solve for the signed masses `c` (one per original point).
    pub fn solve(&self, c: &[f64]) -> Result<BlSolution> {
        let n = self.point_count();
        if c.len() != n {
            return Err(Error::Shape(format!("{} masses for {n} points", c.len())));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("signed masses must be finite".into()));
        }
        let k = self.representatives.len();
        let mut supply = vec![0.0; k + 1];
        for (i, &v) in c.iter().enumerate() {
            supply[self.cluster_of[i]] += v;
        }
        let scale: f64 = c.iter().map(|v| v.abs()).sum();
        supply[k] = -supply[..k].iter().sum::<f64>();
        let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

        let ground = k;
        let mut graph: Vec<Vec<Edge>> = vec![Vec::new(); k + 1];
        let add = |graph: &mut Vec<Vec<Edge>>, u: usize, v: usize, cost: f64| {
            let ru = graph[v].len();
            let rv = graph[u].len();
            graph[u].push(Edge { to: v, cost, cap: f64::INFINITY, rev: ru });
            graph[v].push(Edge { to: u, cost: -cost, cap: 0.0, rev: rv });
        };
        for &(i, j, w) in &self.arcs {
            add(&mut graph, i, j, w);
        }
        for i in 0..k {
            add(&mut graph, i, ground, 1.0);
            add(&mut graph, ground, i, 1.0);
        }

        let mut excess = supply;
        let mut pi = vec![0.0; k + 1];
        let mut dist = vec![f64::INFINITY; k + 1];
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; k + 1];
        let mut done = vec![false; k + 1];
        let mut augmentations = 0;
        let max_rounds = 64 * (k + 1) * (k + 1) + 1024;

        while excess.iter().any(|&e| e > tol) {
            if augmentations > max_rounds {
                return Err(Error::Solver("augmentation limit reached".into()));
            }
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            pred.iter_mut().for_each(|p| *p = None);
            done.iter_mut().for_each(|d| *d = false);
            let mut heap = BinaryHeap::new();
            for (v, &e) in excess.iter().enumerate() {
                if e > tol {
                    dist[v] = 0.0;
                    heap.push(Visit { dist: 0.0, node: v });
                }
            }
            let mut target = None;
            while let Some(Visit { dist: du, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if excess[u] < -tol {
                    target = Some(u);
                    break;
                }
                for (ei, e) in graph[u].iter().enumerate() {
                    if e.cap <= 0.0 {
                        continue;
                    }
                    let reduced = (e.cost + pi[u] - pi[e.to]).max(0.0);
                    let nd = du + reduced;
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        pred[e.to] = Some((u, ei));
                        heap.push(Visit { dist: nd, node: e.to });
                    }
                }
            }
            let Some(t) = target else {
                // rounding can strand surplus once every deficit is below `tol`
                let stranded: f64 = excess.iter().filter(|e| **e > 0.0).sum();
                if stranded <= CERTIFICATE_TOL * scale.max(1.0) {
                    break;
                }
                return Err(Error::Solver(format!("surplus {stranded} with no reachable deficit")));
            };
            let reach = dist[t];
            for v in 0..=k {
                pi[v] += dist[v].min(reach);
            }

            let mut delta = -excess[t];
            let mut v = t;
            while let Some((u, ei)) = pred[v] {
                delta = delta.min(graph[u][ei].cap);
                v = u;
            }
            let s = v;
            delta = delta.min(excess[s]);
            if delta.is_nan() || delta <= 0.0 {
                return Err(Error::Solver("zero-capacity augmenting path".into()));
            }
            let mut v = t;
            while let Some((u, ei)) = pred[v] {
                let rev = graph[u][ei].rev;
                if graph[u][ei].cap.is_finite() {
                    graph[u][ei].cap -= delta;
                    if graph[u][ei].cap <= tol {
                        graph[u][ei].cap = 0.0;
                    }
                }
                if graph[v][rev].cap.is_finite() {
                    graph[v][rev].cap += delta;
                }
                v = u;
            }
            excess[s] -= delta;
            excess[t] += delta;
            augmentations += 1;
        }

        let mut primal = 0.0;
        for edges in &graph {
            for e in edges {
                if e.cap.is_infinite() {
                    primal += e.cost * graph[e.to][e.rev].cap;
                }
            }
        }

        let f: Vec<f64> = (0..k).map(|i| pi[ground] - pi[i]).collect();
        self.certify(&f, &excess, c, primal, scale)?;
        let potential = self.cluster_of.iter().map(|&ci| f[ci].clamp(-1.0, 1.0)).collect();
        Ok(BlSolution { value: primal.max(0.0), potential, augmentations })
    }

    fn certify(&self, f: &[f64], residual: &[f64], c: &[f64], primal: f64, scale: f64) -> Result<()> {
        let slack = CERTIFICATE_TOL * scale.max(1.0);
        for (i, &fi) in f.iter().enumerate() {
            if fi.abs() > 1.0 + CERTIFICATE_TOL {
                return Err(Error::Solver(format!("potential {fi} at node {i} exceeds the cap")));
            }
            for (j, &fj) in f.iter().enumerate() {
                let w = self.ground.get(self.representatives[i], self.representatives[j]);
                if fi - fj > w + CERTIFICATE_TOL {
                    return Err(Error::Solver(format!(
                        "potential violates the Lipschitz bound between nodes {i} and {j}: {} > {w}", fi - fj
                    )));
                }
            }
        }
        let dual: f64 = c
            .iter()
            .enumerate()
            .map(|(i, v)| v * f[self.cluster_of[i]].clamp(-1.0, 1.0))
            .sum();
        let leftover: f64 = residual.iter().map(|e| e.abs()).sum();
        if (primal - dual).abs() > slack + 2.0 * leftover {
            return Err(Error::Solver(format!("primal {primal} and dual {dual} disagree")));
        }
        Ok(())
    }
}
