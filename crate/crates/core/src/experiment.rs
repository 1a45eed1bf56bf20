//! Config-driven experiment pipelines with deterministic tables and manifests.
//!
//! A run is fully determined by its config: every random draw comes from
//! per-item streams of the configured seed, tables are assembled in a fixed
//! order, and floats are printed with 17 significant digits.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cp::{check_intensity_lebesgue, cp_scenery, point_in_word, rejection_probability};
use crate::distribution::{basis_functions, convex_combine, EmpiricalDistribution};
use crate::dyadic::Word;
use crate::error::{Error, Result};
use crate::flow::{center, scenery_distribution_with, successive_distances, tangent_distribution_probe, CenterInput};
use crate::measure::{CylinderMeasure, DigitLaw, DyadicMeasure};
use crate::metric::distribution_distance_with;
use crate::par::{self, Exec, RNG_ALGORITHM};
use crate::splice::{
    boundary_count, usm_splice, ComponentLaw, Growth, PeriodicSplice, SpliceComponent, SpliceSchedule,
    SplicedMeasure,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Fixed float format: 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// An i.i.d. digit law named in a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    Lebesgue { dim: usize },
    /// `P(digit = 1) = p` in one dimension.
    Coin { p: f64 },
    Bernoulli { dim: usize, weights: Vec<f64> },
}

impl LawSpec {
    pub fn law(&self) -> Result<DigitLaw> {
        match self {
            LawSpec::Lebesgue { dim } => DigitLaw::uniform(*dim),
            LawSpec::Coin { p } => DigitLaw::coin(*p),
            LawSpec::Bernoulli { dim, weights } => DigitLaw::new(*dim, weights.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LebesgueSmoke {
    pub dims: Vec<usize>,
    pub depth: usize,
    pub p: usize,
    pub octaves: usize,
    pub steps: usize,
    pub cp_n: usize,
    pub center_n: usize,
    pub samples: usize,
    pub splice_n: usize,
}

impl Default for LebesgueSmoke {
    fn default() -> Self {
        Self { dims: vec![1, 2], depth: 9, p: 3, octaves: 3, steps: 12, cp_n: 4, center_n: 2, samples: 256, splice_n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpliceConvergence {
    pub components: Vec<LawSpec>,
    pub t: Vec<usize>,
    pub ns: Vec<usize>,
    pub p: usize,
    pub samples: usize,
}

impl Default for SpliceConvergence {
    fn default() -> Self {
        Self {
            components: vec![LawSpec::Lebesgue { dim: 1 }, LawSpec::Coin { p: 0.7 }],
            t: vec![1, 1],
            ns: vec![8, 16, 32, 64],
            p: 2,
            samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsmConvergence {
    pub components: Vec<LawSpec>,
    pub thresholds: Vec<usize>,
    pub growth: Growth,
    pub eps: f64,
    /// Depth of the materialized cross-check.
    pub materialized_depth: usize,
    pub p: usize,
    /// Per-step control parameter of the bound.
    pub control: usize,
    pub first_checkpoint: usize,
    pub last_checkpoint: usize,
}

impl Default for UsmConvergence {
    fn default() -> Self {
        Self {
            components: vec![LawSpec::Coin { p: 0.7 }, LawSpec::Coin { p: 0.2 }],
            thresholds: vec![1; 7],
            growth: Growth::Scale { factor: 4 },
            eps: 0.5,
            materialized_depth: 20,
            p: 4,
            control: 4,
            first_checkpoint: 2,
            last_checkpoint: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Centering {
    pub dim: usize,
    pub depth: usize,
    pub ns: Vec<usize>,
    pub samples: usize,
    pub p: usize,
}

impl Default for Centering {
    fn default() -> Self {
        Self { dim: 1, depth: 12, ns: vec![2, 3, 4], samples: 100_000, p: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bridge {
    pub weights: Vec<f64>,
    pub depth: usize,
    /// Extension level used by centering.
    pub n: usize,
    pub p: usize,
    /// CP horizons `N`; the flow horizon is `N log 2`.
    pub horizons: Vec<usize>,
    pub steps_per_octave: usize,
    pub samples: usize,
}

impl Default for Bridge {
    fn default() -> Self {
        Self {
            weights: vec![0.7, 0.3],
            depth: 23,
            n: 3,
            p: 4,
            horizons: vec![8, 16],
            steps_per_octave: 8,
            samples: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TangentProbe {
    pub weights: Vec<f64>,
    pub depth: usize,
    pub octaves: Vec<usize>,
    pub steps_per_octave: usize,
    pub p: usize,
}

impl Default for TangentProbe {
    fn default() -> Self {
        Self { weights: vec![0.7, 0.3], depth: 18, octaves: vec![2, 4, 8, 12], steps_per_octave: 8, p: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    LebesgueSmoke(LebesgueSmoke),
    SpliceConvergence(SpliceConvergence),
    UsmConvergence(UsmConvergence),
    Centering(Centering),
    Bridge(Bridge),
    TangentProbe(TangentProbe),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::LebesgueSmoke(_) => "lebesgue-smoke",
            Experiment::SpliceConvergence(_) => "splice-convergence",
            Experiment::UsmConvergence(_) => "usm-convergence",
            Experiment::Centering(_) => "centering",
            Experiment::Bridge(_) => "bridge",
            Experiment::TangentProbe(_) => "tangent-probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Run the kernels sequentially; output is identical either way.
    #[serde(default)]
    pub sequential: bool,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl RunConfig {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        Self { schema_version: SCHEMA_VERSION, seed, sequential: false, experiment }
    }

    /// Parse and validate; a missing `params` object means all defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("not valid JSON: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        match obj.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(Error::Config(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"))),
            None => return Err(Error::Config("missing integer field `schema_version`".into())),
        }
        if !obj.contains_key("experiment") {
            return Err(Error::Config(format!("missing field `experiment` (one of: {})", EXPERIMENTS.join(", "))));
        }
        obj.entry("params").or_insert_with(|| json!({}));
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

pub const EXPERIMENTS: [&str; 6] =
    ["lebesgue-smoke", "splice-convergence", "usm-convergence", "centering", "bridge", "tangent-probe"];

/// One asserted comparison of a measured value against its budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub resolution_p: usize,
    pub value: f64,
    pub slack_budget: f64,
    pub seed: u64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value ≤ slack_budget`.
    pub fn within(check: impl Into<String>, p: usize, value: f64, budget: f64, seed: u64) -> Self {
        Self { check: check.into(), resolution_p: p, value, slack_budget: budget, seed, pass: value <= budget }
    }

    /// A structural assertion; `value` is reported as given.
    pub fn holds(check: impl Into<String>, p: usize, value: f64, pass: bool, seed: u64) -> Self {
        Self { check: check.into(), resolution_p: p, value, slack_budget: 0.0, seed, pass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "resolution_p", "value", "slack_budget", "seed", "pass"]);
        for c in &self.checks {
            t.push(vec![
                c.check.clone(),
                c.resolution_p.to_string(),
                fmt_float(c.value),
                fmt_float(c.slack_budget),
                c.seed.to_string(),
                c.pass.to_string(),
            ]);
        }
        t
    }

    /// All tables including the check table, in output order.
    pub fn all_tables(&self) -> Vec<Table> {
        let mut out = self.tables.clone();
        out.push(self.checks_table());
        out
    }
}

/// Run manifest: inputs, seed, generator and library version. No timestamps.
pub fn manifest(config: &RunConfig, report: &Report) -> Result<String> {
    let params = serde_json::to_value(&config.experiment)?;
    let value = json!({
        "experiment": report.experiment,
        "schema_version": config.schema_version,
        "seed": config.seed,
        "rng": RNG_ALGORITHM,
        "library_version": env!("CARGO_PKG_VERSION"),
        "config": params,
        "tables": report.all_tables().iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
        "checks": report.checks,
        "passed": report.passed(),
    });
    let mut text = serde_json::to_string_pretty(&value)?;
    text.push('\n');
    Ok(text)
}

pub fn run(config: &RunConfig) -> Result<Report> {
    let exec = config.exec();
    let seed = config.seed;
    let (tables, checks) = match &config.experiment {
        Experiment::LebesgueSmoke(c) => lebesgue_smoke(c, seed, exec)?,
        Experiment::SpliceConvergence(c) => splice_convergence(c, seed, exec)?,
        Experiment::UsmConvergence(c) => usm_convergence(c, seed, exec)?,
        Experiment::Centering(c) => centering(c, seed, exec)?,
        Experiment::Bridge(c) => bridge(c, seed, exec)?,
        Experiment::TangentProbe(c) => tangent_probe(c, seed, exec)?,
    };
    Ok(Report { experiment: config.experiment.name().into(), tables, checks })
}

type Outcome = Result<(Vec<Table>, Vec<Check>)>;

fn lebesgue_smoke(c: &LebesgueSmoke, seed: u64, exec: Exec) -> Outcome {
    let mut table = Table::new("distances", &["dim", "pipeline", "resolution_p", "distance"]);
    let mut checks = Vec::new();
    let p = c.p;
    for &dim in &c.dims {
        let lebesgue = DyadicMeasure::lebesgue(dim, c.depth)?;
        let target = EmpiricalDistribution::dirac(DyadicMeasure::lebesgue(dim, p)?, p)?;
        let mut rng = par::stream_rng(seed, dim as u64);
        let word = Word::from_index(dim, c.depth, lebesgue.leaf_sampler()?.sample(&mut rng))?;

        let mut rows: Vec<(&str, f64)> = Vec::new();
        let origin = vec![0.0; dim];
        let flow = scenery_distribution_with(&lebesgue, &origin, c.octaves as f64 * LN_2, c.steps, p, exec)?;
        rows.push(("scenery-distribution", distribution_distance_with(&flow, &target, p, exec)?));

        let cps = cp_scenery(&lebesgue, &word, c.cp_n, p)?;
        rows.push(("cp-scenery-marginal", distribution_distance_with(&cps.marginal(), &target, p, exec)?));
        rows.push(("cp-scenery-intensity", check_intensity_lebesgue(&cps, p)?));

        let fixture = EmpiricalDistribution::dirac(lebesgue.clone(), p)?;
        let centered = center(CenterInput::Adapted(&fixture), c.center_n, c.samples, seed, p, exec)?;
        rows.push(("centered", distribution_distance_with(&centered.distribution, &target, p, exec)?));

        let laws = [ComponentLaw::dirac(DigitLaw::uniform(dim)?)];
        let splice = PeriodicSplice::new(&laws, &[1], c.splice_n, p)?;
        let spliced = splice.sample(c.samples, seed, exec)?;
        rows.push(("periodic-splice", distribution_distance_with(&spliced, &target, p, exec)?));
        let exact = splice.exact_intensity(p)?;
        rows.push(("periodic-splice-intensity", exact.max_abs_diff(&target.atoms()[0].1).unwrap_or(f64::INFINITY)));

        for (name, v) in rows {
            table.push(vec![dim.to_string(), name.into(), p.to_string(), fmt_float(v)]);
            checks.push(Check::within(format!("d{dim}/{name}"), p, v, 0.0, seed));
        }
    }
    Ok((vec![table], checks))
}

fn splice_convergence(c: &SpliceConvergence, seed: u64, exec: Exec) -> Outcome {
    if c.components.len() != c.t.len() {
        return Err(Error::Config("one weight t_i per component".into()));
    }
    let laws: Vec<ComponentLaw> =
        c.components.iter().map(|s| Ok(ComponentLaw::dirac(s.law()?))).collect::<Result<_>>()?;
    let dim = laws[0].dim();
    let functions = basis_functions(dim, c.p)?;
    let mut table = Table::new(
        "convergence",
        &["n", "function", "estimate", "target", "error", "lemma_bound", "mc_slack", "slack_budget", "pass"],
    );
    let mut bounds = Table::new("bounds", &["n", "boundary_count", "lemma_bound", "period_bound"]);
    let mut checks = Vec::new();
    let mut lemma_bounds = Vec::new();
    for &n in &c.ns {
        let splice = PeriodicSplice::new(&laws, &c.t, n, c.p)?;
        let emissions = splice.emissions(c.samples, seed ^ n as u64, exec)?;
        let mut worst: f64 = f64::NEG_INFINITY;
        for (name, f) in &functions {
            let values = emissions.iter().map(|m| f.evaluate(m)).collect::<Result<Vec<_>>>()?;
            let count = values.len() as f64;
            let mean = values.iter().sum::<f64>() / count;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
            let mc = 3.0 * (var / count).sqrt();
            let target = splice.target_integral(f)?;
            let error = (mean - target).abs();
            let bound = splice.lemma_bound(f.sup_bound());
            let budget = bound + mc;
            worst = worst.max(error - budget);
            table.push(vec![
                n.to_string(),
                name.clone(),
                fmt_float(mean),
                fmt_float(target),
                fmt_float(error),
                fmt_float(bound),
                fmt_float(mc),
                fmt_float(budget),
                (error <= budget).to_string(),
            ]);
        }
        let bound = splice.lemma_bound(1.0);
        lemma_bounds.push(bound);
        bounds.push(vec![
            n.to_string(),
            boundary_count(n, &c.t, c.p).to_string(),
            fmt_float(bound),
            fmt_float(splice.period_bound(1.0)),
        ]);
        checks.push(Check::within(format!("n{n}/excess-over-budget"), c.p, worst.max(0.0), 0.0, seed));
    }
    let decreasing = lemma_bounds.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::holds("lemma-bound-decreasing", c.p, *lemma_bounds.last().unwrap_or(&0.0), decreasing, seed));
    Ok((vec![table, bounds], checks))
}

/// Limit of the share of the latest block among the first `S_i` digits.
fn latest_block_share(growth: Growth) -> f64 {
    match growth {
        Growth::Scale { factor } => factor as f64 / (factor as f64 + 1.0),
        Growth::Exponential => 1.0,
    }
}

fn usm_convergence(c: &UsmConvergence, seed: u64, exec: Exec) -> Outcome {
    let p = c.p;
    if c.components.len() < 2 {
        return Err(Error::Config("the alternation needs at least two components".into()));
    }
    if c.first_checkpoint < 2 || c.last_checkpoint < c.first_checkpoint {
        return Err(Error::Config("checkpoints must satisfy 2 ≤ first ≤ last".into()));
    }
    let digit_laws: Vec<DigitLaw> = c.components.iter().map(LawSpec::law).collect::<Result<_>>()?;
    let dim = digit_laws[0].dim();
    let schedule = SpliceSchedule::usm(c.thresholds.clone(), c.growth, c.eps)?;
    let book = schedule.usm_book().cloned().ok_or_else(|| Error::Shape("not a USM schedule".into()))?;
    let last = c.last_checkpoint;
    let sums: Vec<usize> = (0..=last)
        .map(|i| schedule.partial_sum(i).ok_or_else(|| Error::ResolutionExceeded(format!("schedule has fewer than {i} blocks"))))
        .collect::<Result<_>>()?;
    let comps: Vec<SpliceComponent> = digit_laws.iter().cloned().map(SpliceComponent::from).collect();
    let spliced = SplicedMeasure::new(comps, schedule.clone())?;

    let mut rng = par::stream_rng(seed, 0);
    let z = spliced.sample_digits(sums[last] + p, &mut rng)?;
    let fingerprints = par::map_range(exec, sums[last], |k| spliced.conditional_fingerprint(&z[..k], p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    // the lazy splice against materialized components where both are available
    let spans = schedule.spans_to(c.materialized_depth)?;
    let longest = spans.iter().map(|s| s.len.min(c.materialized_depth - s.start)).max().unwrap_or(0);
    let materialized_components =
        digit_laws.iter().map(|l| l.to_measure(longest)).collect::<Result<Vec<_>>>()?;
    let materialized = usm_splice(&materialized_components, &schedule, c.materialized_depth)?;
    let reach = c.materialized_depth.saturating_sub(p).min(z.len());
    let mut agreement: f64 = 0.0;
    for k in 0..=reach {
        let a = materialized.conditional_at_depth(&z[..k], p)?;
        let b = spliced.conditional_fingerprint(&z[..k], p)?;
        agreement = agreement.max(a.max_abs_diff(&b).unwrap_or(f64::INFINITY));
    }

    let fixed: Vec<EmpiricalDistribution<DyadicMeasure>> = digit_laws
        .iter()
        .map(|l| EmpiricalDistribution::dirac(l.to_measure(p)?, p))
        .collect::<Result<_>>()?;
    let share = latest_block_share(c.growth);
    let per_step = (dim as f64).sqrt() * 2f64.powi(-(c.control as i32));
    let projection = 2.0 * (dim as f64).sqrt() * 2f64.powi(-(p as i32));

    let mut table = Table::new(
        "checkpoints",
        &[
            "i", "n", "block_len", "weight", "tolerance", "target_gap", "distance_to_target", "bound",
            "distance_to_block_law", "block_bound",
        ],
    );
    let mut checks = vec![Check::within("materialized-agreement", p, agreement, 1e-12, seed)];
    let (mut measured, mut bounds) = (Vec::new(), Vec::new());
    let k = c.components.len();
    for i in c.first_checkpoint..=last {
        let n = sums[i];
        let marginal = EmpiricalDistribution::uniform(fingerprints[..n].to_vec(), p)?.merged();
        let current = &fixed[(i - 1) % k];
        let previous = &fixed[(i - 2) % k];
        let target = convex_combine(&[share, 1.0 - share], &[current.clone(), previous.clone()])?.merged();
        let gap = distribution_distance_with(current, &target, p, exec)?;
        let weight = 1.0 - (sums[i - 1] + c.control) as f64 / n as f64;
        let tolerance = book.tolerances[i - 1];
        let bound = weight * (per_step + tolerance + gap) + 2.0 * (1.0 - weight) + projection;
        let block_bound = weight * (per_step + tolerance) + 2.0 * (1.0 - weight) + projection;
        let d_target = distribution_distance_with(&marginal, &target, p, exec)?;
        let d_block = distribution_distance_with(&marginal, current, p, exec)?;
        table.push(vec![
            i.to_string(),
            n.to_string(),
            (n - sums[i - 1]).to_string(),
            fmt_float(weight),
            fmt_float(tolerance),
            fmt_float(gap),
            fmt_float(d_target),
            fmt_float(bound),
            fmt_float(d_block),
            fmt_float(block_bound),
        ]);
        checks.push(Check::within(format!("checkpoint{i}/target"), p, d_target, bound, seed));
        checks.push(Check::within(format!("checkpoint{i}/block-law"), p, d_block, block_bound, seed));
        measured.push(d_target);
        bounds.push(bound);
    }
    let falling = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::holds("bound-decreasing", p, *bounds.last().unwrap_or(&0.0), falling(&bounds), seed));
    checks.push(Check::holds("distance-decreasing", p, *measured.last().unwrap_or(&0.0), falling(&measured), seed));
    Ok((vec![table], checks))
}

fn centering(c: &Centering, seed: u64, exec: Exec) -> Outcome {
    let lebesgue = DyadicMeasure::lebesgue(c.dim, c.depth)?;
    let fixture = EmpiricalDistribution::dirac(lebesgue, c.p)?;
    let coarse = DyadicMeasure::lebesgue(c.dim, c.p)?;
    let mut table = Table::new(
        "rejection",
        &["n", "samples", "rejected", "rate", "expected", "sigma", "rate_times_2n", "atoms", "max_leaf_error"],
    );
    let mut checks = Vec::new();
    for &n in &c.ns {
        let out = center(CenterInput::Adapted(&fixture), n, c.samples, seed.wrapping_add(n as u64), c.p, exec)?;
        let rate = out.rejection_rate();
        let expected = rejection_probability(c.dim, n);
        let sigma = (expected * (1.0 - expected) / c.samples as f64).sqrt();
        let leaf_error = out
            .distribution
            .atoms()
            .iter()
            .map(|(_, m)| m.max_abs_diff(&coarse).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        table.push(vec![
            n.to_string(),
            c.samples.to_string(),
            out.rejected.to_string(),
            fmt_float(rate),
            fmt_float(expected),
            fmt_float(sigma),
            fmt_float(rate * 2f64.powi(n as i32)),
            out.distribution.len().to_string(),
            fmt_float(leaf_error),
        ]);
        checks.push(Check::within(format!("n{n}/rejection"), c.p, (rate - expected).abs(), 3.0 * sigma, seed));
        checks.push(Check::within(format!("n{n}/leafwise-lebesgue"), c.p, leaf_error, 1e-12, seed));
        checks.push(Check::holds(format!("n{n}/single-atom"), c.p, out.distribution.len() as f64, out.distribution.len() == 1, seed));
    }
    Ok((vec![table], checks))
}

/// Dimension of a digit law given by `2^d` weights.
fn weights_dim(weights: &[f64]) -> Result<usize> {
    let n = weights.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!("{n} digit weights; expected 2^d with d ≥ 1")));
    }
    Ok(n.trailing_zeros() as usize)
}

/// Components of the bridge slack for one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeRow {
    pub horizon: usize,
    pub distance: f64,
    pub projection: f64,
    pub rejection: f64,
    pub telescoping: f64,
    pub monte_carlo: f64,
}

impl BridgeRow {
    pub fn slack(&self) -> f64 {
        self.projection + self.rejection + self.telescoping + self.monte_carlo
    }
}

/// The tangent probe at `T = N log 2` against the centered CP scenery at `N`.
pub fn bridge_rows(c: &Bridge, seed: u64, exec: Exec) -> Result<Vec<BridgeRow>> {
    let law_dim = weights_dim(&c.weights)?;
    let mu = DyadicMeasure::bernoulli(law_dim, &c.weights, c.depth)?;
    let mut rng = par::stream_rng(seed, 0);
    let word = Word::from_index(law_dim, c.depth, mu.leaf_sampler()?.sample(&mut rng))?;
    let point = point_in_word(&word, &mut rng);
    let projection = 2.0 * (law_dim as f64).sqrt() * 2f64.powi(-(c.p as i32));
    let mut rows = Vec::new();
    for &n_cp in &c.horizons {
        let probe = scenery_distribution_with(&mu, &point, n_cp as f64 * LN_2, c.steps_per_octave * n_cp, c.p, exec)?;
        let cps = cp_scenery(&mu, &word, n_cp, c.p)?;
        let first = center(CenterInput::Tagged(&cps), c.n, c.samples, seed.wrapping_add(2 * n_cp as u64), c.p, exec)?;
        let second = center(CenterInput::Tagged(&cps), c.n, c.samples, seed.wrapping_add(2 * n_cp as u64 + 1), c.p, exec)?;
        rows.push(BridgeRow {
            horizon: n_cp,
            distance: distribution_distance_with(&probe, &first.distribution, c.p, exec)?,
            projection,
            rejection: 2.0 * first.rejection_rate(),
            telescoping: 2.0 * c.n as f64 / n_cp as f64,
            monte_carlo: distribution_distance_with(&first.distribution, &second.distribution, c.p, exec)?,
        });
    }
    Ok(rows)
}

fn bridge(c: &Bridge, seed: u64, exec: Exec) -> Outcome {
    let rows = bridge_rows(c, seed, exec)?;
    let mut table = Table::new(
        "bridge",
        &["horizon_n", "horizon_t", "distance", "projection", "rejection", "telescoping", "monte_carlo", "slack"],
    );
    let mut checks = Vec::new();
    for r in &rows {
        table.push(vec![
            r.horizon.to_string(),
            fmt_float(r.horizon as f64 * LN_2),
            fmt_float(r.distance),
            fmt_float(r.projection),
            fmt_float(r.rejection),
            fmt_float(r.telescoping),
            fmt_float(r.monte_carlo),
            fmt_float(r.slack()),
        ]);
        checks.push(Check::within(format!("n{}/within-slack", r.horizon), c.p, r.distance, r.slack(), seed));
    }
    let decreasing = rows.windows(2).all(|w| w[1].distance < w[0].distance);
    checks.push(Check::holds("distance-decreasing", c.p, rows.last().map_or(0.0, |r| r.distance), decreasing, seed));
    Ok((vec![table], checks))
}

fn tangent_probe(c: &TangentProbe, seed: u64, exec: Exec) -> Outcome {
    let law_dim = weights_dim(&c.weights)?;
    let mu = DyadicMeasure::bernoulli(law_dim, &c.weights, c.depth)?;
    let mut rng = par::stream_rng(seed, 0);
    let word = Word::from_index(law_dim, c.depth, mu.leaf_sampler()?.sample(&mut rng))?;
    let point = point_in_word(&word, &mut rng);
    let mut table = Table::new("probe", &["octaves", "horizon_t", "steps", "atoms", "distance_to_previous"]);
    let mut previous = None;
    let mut probes = Vec::new();
    for &o in &c.octaves {
        let steps = c.steps_per_octave * o.max(1);
        let horizon = o as f64 * LN_2;
        let probe = tangent_distribution_probe(&mu, &point, &[horizon], steps, c.p, exec)?.remove(0);
        let d = match &previous {
            Some(prev) => fmt_float(distribution_distance_with(prev, &probe, c.p, exec)?),
            None => String::new(),
        };
        table.push(vec![o.to_string(), fmt_float(horizon), steps.to_string(), probe.len().to_string(), d]);
        previous = Some(probe.clone());
        probes.push(probe);
    }
    let successive = successive_distances(&probes, c.p, exec)?;
    let bounded = successive.iter().all(|&d| d <= 2.0);
    let checks = vec![Check::holds("successive-distances-bounded", c.p, successive.iter().copied().fold(0.0, f64::max), bounded, seed)];
    Ok((vec![table], checks))
}

/// Render a report as human-readable text.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "experiment {}", report.experiment);
    for c in &report.checks {
        let _ = writeln!(
            out,
            "  {} {:<40} value {} budget {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.check,
            fmt_float(c.value),
            fmt_float(c.slack_budget)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_with_defaults() {
        let cfg = RunConfig::from_json(r#"{"schema_version": 1, "seed": 3, "experiment": "centering"}"#).unwrap();
        assert_eq!(cfg.experiment, Experiment::Centering(Centering::default()));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "[]",
            r#"{"experiment": "centering"}"#,
            r#"{"schema_version": 2, "experiment": "centering"}"#,
            r#"{"schema_version": 1, "experiment": "nope"}"#,
            r#"{"schema_version": 1, "experiment": "centering", "params": {"bogus": 1}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn csv_has_fixed_format() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), fmt_float(0.1)]);
        assert_eq!(t.to_csv(), "a,b\n1,1.0000000000000001e-1\n");
    }

    #[test]
    fn lebesgue_smoke_is_exactly_zero() {
        let cfg = RunConfig::new(
            5,
            Experiment::LebesgueSmoke(LebesgueSmoke { dims: vec![1], samples: 64, ..Default::default() }),
        );
        let report = run(&cfg).unwrap();
        assert!(report.passed(), "{}", summary(&report));
        assert!(report.checks.iter().all(|c| c.value == 0.0));
    }
}
