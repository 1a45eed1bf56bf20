//! Verification suites: oracle cross-checks, invariance on exact fixtures and
//! the analytic error bounds.

use rand::Rng;
use serde::Serialize;

use crate::cp::{check_intensity_lebesgue, check_m_invariance_with, cp_scenery, magnify, telescoping_bound};
use crate::distribution::EmpiricalDistribution;
use crate::dyadic::{cube_count, Word};
use crate::error::{Error, Result};
use crate::experiment::{self, Check, Experiment, LebesgueSmoke, RunConfig};
use crate::measure::{CylinderMeasure, DyadicMeasure};
use crate::metric::{bl_distance, distribution_distance_with, measure_distance, project, projection_distance, GroundMetric};
use crate::oracle::{brute_force_bl, random_measure, random_sparse_measure, splice_by_enumeration, splice_leaf_mass};
use crate::par::{self, Exec};
use crate::splice::{splice_measures, SpliceSchedule, SplicedMeasure};

pub const SUITES: [&str; 4] = ["metric-oracle", "splice-oracle", "invariance", "bounds"];

/// Tolerance for agreement between the LP solver and vertex enumeration.
pub const ORACLE_TOL: f64 = 1e-9;

/// Tolerance for leafwise splice equalities.
pub const SPLICE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn run_suite(name: &str, seed: u64, exec: Exec) -> Result<SuiteReport> {
    let checks = match name {
        "metric-oracle" => metric_oracle(200, seed)?,
        "splice-oracle" => splice_oracle(500, seed, exec)?,
        "invariance" => invariance(seed, exec)?,
        "bounds" => bounds(100, seed, exec)?,
        other => {
            return Err(Error::Config(format!("unknown suite `{other}` (one of: {})", SUITES.join(", "))));
        }
    };
    Ok(SuiteReport { suite: name.into(), seed, checks })
}

/// Difference of two random probability vectors on `n` points.
fn signed_masses<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut draw = || {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let (a, b) = (draw(), draw());
    a.iter().zip(&b).map(|(x, y)| x - y).collect()
}

/// Solver against vertex enumeration on tiny instances.
pub fn metric_oracle(instances: usize, seed: u64) -> Result<Vec<Check>> {
    let mut random_gap: f64 = 0.0;
    for i in 0..instances {
        let mut rng = par::stream_rng(seed, i as u64);
        let n = rng.gen_range(1..=3);
        let dim = rng.gen_range(1..=2);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let c = signed_masses(&mut rng, n);
        let ground = GroundMetric::from_points(&points)?;
        random_gap = random_gap.max((bl_distance(&c, &ground)? - brute_force_bl(&c, &ground)?).abs());
    }

    // both regimes of min(δ, 2)
    let mut closed_gap: f64 = 0.0;
    for delta in [0.0, 0.125, 0.5, 1.0, 1.75, 2.0, 2.5, 4.0] {
        let ground = GroundMetric::from_points(&[vec![0.0], vec![delta]])?;
        let exact = f64::min(delta, 2.0);
        closed_gap = closed_gap
            .max((bl_distance(&[1.0, -1.0], &ground)? - exact).abs())
            .max((brute_force_bl(&[1.0, -1.0], &ground)? - exact).abs());
    }

    // measures on the level-2 grid of the line: four atoms
    let mut grid_gap: f64 = 0.0;
    for i in 0..instances / 4 {
        let mut rng = par::stream_rng(seed ^ 0x5eed, i as u64);
        let mu = random_sparse_measure(&mut rng, 1, 2);
        let nu = random_sparse_measure(&mut rng, 1, 2);
        let cloud = project(&mu, 2)?;
        let c: Vec<f64> = mu.masses().iter().zip(nu.masses()).map(|(a, b)| a - b).collect();
        let exact = brute_force_bl(&c, &GroundMetric::from_points(&cloud.points)?)?;
        grid_gap = grid_gap.max((measure_distance(&mu, &nu, 2)? - exact).abs());
    }

    Ok(vec![
        Check::within("random-instances/max-gap", 0, random_gap, ORACLE_TOL, seed),
        Check::within("two-atom-closed-form/max-gap", 0, closed_gap, ORACLE_TOL, seed),
        Check::within("grid-measures/max-gap", 2, grid_gap, ORACLE_TOL, seed),
    ])
}

/// A random splice instance: components, schedule and depth.
pub struct SpliceDraw {
    pub components: Vec<DyadicMeasure>,
    pub schedule: SpliceSchedule,
    pub depth: usize,
}

pub fn random_splice<R: Rng>(rng: &mut R) -> Result<SpliceDraw> {
    let dim = rng.gen_range(1..=2);
    let max_depth = if dim == 1 { 12 } else { 6 };
    let depth = rng.gen_range(1..=max_depth);
    let blocks = rng.gen_range(1..=4);
    let lens: Vec<usize> = (0..blocks).map(|_| rng.gen_range(1..=depth.max(2) / 2 + 1)).collect();
    let longest = *lens.iter().max().expect("at least one block");
    let k = rng.gen_range(1..=3);
    let components = (0..k)
        .map(|_| if rng.gen_bool(0.5) { random_sparse_measure(rng, dim, longest) } else { random_measure(rng, dim, longest) })
        .collect();
    let covered: usize = lens.iter().sum();
    let schedule = if covered >= depth && rng.gen_bool(0.5) {
        SpliceSchedule::finite(lens)?
    } else {
        SpliceSchedule::periodic(lens)?
    };
    Ok(SpliceDraw { components, schedule, depth })
}

/// Largest leafwise gap between the materialized splice, the block product
/// formula, product-space enumeration and the lazy splice.
pub fn splice_gap(draw: &SpliceDraw) -> Result<f64> {
    let fast = splice_measures(&draw.components, &draw.schedule, draw.depth)?;
    let enumerated = splice_by_enumeration(&draw.components, &draw.schedule, draw.depth)?;
    let lazy = SplicedMeasure::new(draw.components.iter().collect(), draw.schedule.clone())?;
    let dim = fast.dim();
    let mut gap = fast.max_abs_diff(&enumerated).unwrap_or(f64::INFINITY);
    for idx in 0..cube_count(dim, draw.depth)? {
        let leaf = Word::from_index(dim, draw.depth, idx)?;
        let formula = splice_leaf_mass(&draw.components, &draw.schedule, &leaf)?;
        let m = fast.masses()[idx];
        gap = gap.max((m - formula).abs()).max((m - lazy.cylinder_mass(leaf.digits())).abs());
    }
    Ok(gap)
}

pub fn splice_oracle(draws: usize, seed: u64, exec: Exec) -> Result<Vec<Check>> {
    let gaps = par::map_range(exec, draws, |i| splice_gap(&random_splice(&mut par::stream_rng(seed, i as u64))?));
    let worst = gaps.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok(vec![Check::within("leafwise/max-gap", 0, worst, SPLICE_TOL, seed)])
}

/// Exact Lebesgue fixtures: every distance must vanish.
pub fn invariance(seed: u64, exec: Exec) -> Result<Vec<Check>> {
    let mut config = RunConfig::new(seed, Experiment::LebesgueSmoke(LebesgueSmoke::default()));
    config.sequential = exec == Exec::Sequential;
    let mut checks = experiment::run(&config)?.checks;
    let p = 3;
    for dim in 1..=2 {
        let lebesgue = DyadicMeasure::lebesgue(dim, 8)?;
        let mut rng = par::stream_rng(seed, 100 + dim as u64);
        let x = Word::from_index(dim, 8, rng.gen_range(0..lebesgue.leaf_count()))?;
        let orbit = cp_scenery(&lebesgue, &x, 4, p)?;
        let pushed = orbit.map_atoms(magnify)?;
        let marginal_shift = distribution_distance_with(&orbit.marginal(), &pushed.marginal(), p, exec)?;
        checks.push(Check::within(format!("d{dim}/magnified-marginal"), p, marginal_shift, 0.0, seed));
        checks.push(Check::within(format!("d{dim}/pushed-intensity"), p, check_intensity_lebesgue(&pushed, p)?, 0.0, seed));
    }
    Ok(checks)
}

/// Projection, telescoping and splice-boundary bounds on random inputs.
pub fn bounds(measures: usize, seed: u64, exec: Exec) -> Result<Vec<Check>> {
    let mut excess = f64::NEG_INFINITY;
    for i in 0..measures {
        let mut rng = par::stream_rng(seed, i as u64);
        let dim = 1 + i % 2;
        let depth = if dim == 1 { 7 } else { 4 };
        let mu = random_measure(&mut rng, dim, depth);
        for k in 1..=4 {
            let bound = (dim as f64).sqrt() * 2f64.powi(-(k as i32));
            excess = excess.max(projection_distance(&mu, k)? - bound);
        }
    }

    let mut telescoping = f64::NEG_INFINITY;
    for i in 0..20 {
        let mut rng = par::stream_rng(seed ^ 0x7e1e, i as u64);
        let mu = random_measure(&mut rng, 1, 10);
        let x = Word::from_index(1, 10, mu.leaf_sampler()?.sample(&mut rng))?;
        let n = [2, 4, 6][i % 3];
        let orbit = cp_scenery(&mu, &x, n, 3)?;
        telescoping = telescoping.max(check_m_invariance_with(&orbit, 3, exec)? - telescoping_bound(n));
    }

    let lebesgue = DyadicMeasure::lebesgue(1, 10)?;
    let mut rng = par::stream_rng(seed, 999);
    let x = Word::from_index(1, 10, rng.gen_range(0..1024))?;
    let single = cp_scenery(&DyadicMeasure::coin(0.7, 10)?, &x, 5, 3)?.marginal().merged().len();
    let uniform = EmpiricalDistribution::dirac(lebesgue, 3)?;

    Ok(vec![
        Check::within("projection/excess", 4, excess.max(0.0), 1e-9, seed),
        Check::within("telescoping/excess", 3, telescoping.max(0.0), 1e-9, seed),
        Check::holds("bernoulli-marginal/atoms", 3, single as f64, single == 1, seed),
        Check::within("lebesgue-intensity", 3, check_intensity_lebesgue(&uniform, 3)?, 0.0, seed),
    ])
}
