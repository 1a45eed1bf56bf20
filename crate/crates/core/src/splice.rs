//! Splicing: building a measure from consecutive digit blocks of component measures.
//!
//! A schedule `n = (n₁, n₂, …)` cuts the digit positions into blocks; block
//! `j` (positions `S_{j-1} .. S_j`) is drawn from component `j`, with
//! components reused cyclically when fewer are supplied than blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{EmpiricalDistribution, TestFunction};
use crate::dyadic::{cube_count, Word};
use crate::error::{Error, Result};
use crate::measure::{kron, pick, CylinderMeasure, DigitLaw, DyadicMeasure};
use crate::par::{self, Exec};

/// Monotone stand-in for the exponential in the USM block recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Growth {
    /// `g(x) = factor · x`.
    Scale { factor: usize },
    /// `g(x) = ⌈e^x⌉`.
    Exponential,
}

impl Default for Growth {
    fn default() -> Self {
        Growth::Scale { factor: 4 }
    }
}

impl Growth {
    pub fn apply(&self, x: usize) -> Result<usize> {
        match *self {
            Growth::Scale { factor } => x
                .checked_mul(factor)
                .ok_or_else(|| Error::Shape(format!("growth overflow at {x}"))),
            Growth::Exponential => {
                let v = (x as f64).exp().ceil();
                if v >= 1e15 {
                    return Err(Error::Shape(format!("e^{x} is beyond any representable schedule")));
                }
                Ok(v as usize)
            }
        }
    }
}

/// Bookkeeping of the uniformly-scaling construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsmBook {
    /// Approximation thresholds `m_i`.
    pub thresholds: Vec<usize>,
    /// Padding lengths `k_i` (the first entry is the whole first block).
    pub padding: Vec<usize>,
    /// Tolerances `ε_i` with `Π (1 - ε_i) = ε`.
    pub tolerances: Vec<f64>,
    pub eps: f64,
    pub growth: Growth,
}

/// `ε_i = 1 - ε^{2^{-i}}` for `i = 1..=count`, so the infinite product of `1 - ε_i` is `ε`.
pub fn usm_tolerances(eps: f64, count: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("target ε = {eps} must lie in (0, 1)")));
    }
    Ok((1..=count).map(|i| 1.0 - eps.powf(0.5f64.powi(i as i32))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Blocks {
    Finite { n: Vec<usize> },
    Periodic { n: Vec<usize> },
}

/// Block lengths `n_i` with partial sums `S_k`, optionally carrying USM bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpliceSchedule {
    #[serde(flatten)]
    blocks: Blocks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    usm: Option<UsmBook>,
    #[serde(skip)]
    sums: Vec<usize>,
}

/// One block of a schedule, clipped to a depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpan {
    pub index: usize,
    pub start: usize,
    pub len: usize,
}

impl SpliceSchedule {
    pub fn finite(n: Vec<usize>) -> Result<Self> {
        Self::build(Blocks::Finite { n }, None)
    }

    /// `(n₁, …, n_k)^∞`.
    pub fn periodic(pattern: Vec<usize>) -> Result<Self> {
        Self::build(Blocks::Periodic { n: pattern }, None)
    }

    /// `n₁ = max(g(m₁), g(m₂))`, `k_i = max(g(n_{i-1}), g(m_i), g(m_{i+1}))`,
    /// `n_i = m_i + k_i`; one block per threshold except the last, which is lookahead.
    pub fn usm(thresholds: Vec<usize>, growth: Growth, eps: f64) -> Result<Self> {
        if thresholds.len() < 2 {
            return Err(Error::Shape("USM schedule needs at least two thresholds".into()));
        }
        let blocks = thresholds.len() - 1;
        let mut n = Vec::with_capacity(blocks);
        let mut padding = Vec::with_capacity(blocks);
        let first = growth.apply(thresholds[0])?.max(growth.apply(thresholds[1])?);
        n.push(first);
        padding.push(first);
        for i in 1..blocks {
            let k = growth
                .apply(n[i - 1])?
                .max(growth.apply(thresholds[i])?)
                .max(growth.apply(thresholds[i + 1])?);
            padding.push(k);
            n.push(thresholds[i] + k);
        }
        let tolerances = usm_tolerances(eps, blocks)?;
        let book = UsmBook { thresholds, padding, tolerances, eps, growth };
        Self::build(Blocks::Finite { n }, Some(book))
    }

    fn build(blocks: Blocks, usm: Option<UsmBook>) -> Result<Self> {
        let pattern = match &blocks {
            Blocks::Finite { n } | Blocks::Periodic { n } => n,
        };
        if pattern.is_empty() || pattern.contains(&0) {
            return Err(Error::Shape("block lengths must be positive and non-empty".into()));
        }
        let mut sums = vec![0];
        for &b in pattern {
            let next = sums.last().unwrap() + b;
            sums.push(next);
        }
        Ok(Self { blocks, usm, sums })
    }

    /// Recompute derived fields after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::build(self.blocks, self.usm)
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    pub fn usm_book(&self) -> Option<&UsmBook> {
        self.usm.as_ref()
    }

    fn pattern(&self) -> &[usize] {
        match &self.blocks {
            Blocks::Finite { n } | Blocks::Periodic { n } => n,
        }
    }

    fn period(&self) -> usize {
        *self.sums.last().unwrap()
    }

    /// Number of blocks, `None` if infinite.
    pub fn block_count(&self) -> Option<usize> {
        match self.blocks {
            Blocks::Finite { ref n } => Some(n.len()),
            Blocks::Periodic { .. } => None,
        }
    }

    /// Total length covered, `None` if infinite.
    pub fn total_len(&self) -> Option<usize> {
        self.block_count().map(|_| self.period())
    }

    /// `n_i` for the 0-based block index `i`.
    pub fn block_len(&self, i: usize) -> Option<usize> {
        let p = self.pattern();
        match self.blocks {
            Blocks::Finite { .. } => p.get(i).copied(),
            Blocks::Periodic { .. } => Some(p[i % p.len()]),
        }
    }

    /// `S_k = n₁ + … + n_k`, with `S_0 = 0`.
    pub fn partial_sum(&self, k: usize) -> Option<usize> {
        let p = self.pattern().len();
        match self.blocks {
            Blocks::Finite { .. } => self.sums.get(k).copied(),
            Blocks::Periodic { .. } => Some((k / p) * self.period() + self.sums[k % p]),
        }
    }

    /// The block containing digit position `pos` (0-based).
    pub fn block_at(&self, pos: usize) -> Option<BlockSpan> {
        let p = self.pattern().len();
        let (round, offset) = match self.blocks {
            Blocks::Finite { .. } => {
                if pos >= self.period() {
                    return None;
                }
                (0, pos)
            }
            Blocks::Periodic { .. } => (pos / self.period(), pos % self.period()),
        };
        let local = self.sums.partition_point(|&s| s <= offset) - 1;
        let index = round * p + local;
        Some(BlockSpan {
            index,
            start: round * self.period() + self.sums[local],
            len: self.pattern()[local],
        })
    }

    /// Blocks covering positions `0..depth`, the last one clipped.
    pub fn spans_to(&self, depth: usize) -> Result<Vec<BlockSpan>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < depth {
            let b = self.block_at(pos).ok_or_else(|| {
                Error::Shape(format!("schedule covers {} digits, {depth} requested", self.period()))
            })?;
            let len = b.len.min(depth - pos);
            out.push(BlockSpan { len, ..b });
            pos += len;
        }
        Ok(out)
    }
}

/// `spl_n((xⁱ)) = x¹|_{n₁} x²|_{n₂} ⋯` over as many blocks as words are given.
pub fn splice_words(words: &[Word], schedule: &SpliceSchedule) -> Result<Word> {
    let dim = words
        .first()
        .map(|w| w.dim())
        .ok_or_else(|| Error::Shape("no words to splice".into()))?;
    let mut digits = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let len = schedule
            .block_len(i)
            .ok_or_else(|| Error::Shape(format!("schedule has no block {}", i + 1)))?;
        if w.dim() != dim || w.len() < len {
            return Err(Error::Shape(format!(
                "word {} has length {} but block {} needs {len}",
                i + 1,
                w.len(),
                i + 1
            )));
        }
        digits.extend_from_slice(&w.digits()[..len]);
    }
    Word::new(dim, digits)
}

/// Exact masses of `spl_n(×μⁱ)` down to `depth`.
///
/// Leaf `y` gets `Π_j μ^j(y restricted to block j)`: the Kronecker product of
/// the components coarsened to their block lengths.
pub fn splice_measures(
    components: &[DyadicMeasure],
    schedule: &SpliceSchedule,
    depth: usize,
) -> Result<DyadicMeasure> {
    let dim = components
        .first()
        .map(|c| c.dim())
        .ok_or_else(|| Error::Shape("no components to splice".into()))?;
    if components.iter().any(|c| c.dim() != dim || c.support_half_width() != 1) {
        return Err(Error::Shape("components must share dimension and live on B₁".into()));
    }
    cube_count(dim, depth)?;
    let mut masses = vec![1.0];
    for span in schedule.spans_to(depth)? {
        let c = &components[span.index % components.len()];
        if c.depth() < span.len {
            return Err(Error::Shape(format!(
                "component for block {} has depth {} below the block length {}",
                span.index + 1,
                c.depth(),
                span.len
            )));
        }
        masses = kron(&masses, &c.level_masses(span.len)?);
    }
    DyadicMeasure::new(dim, depth, masses)
}

/// The spliced measure over the USM schedule, materialized to `depth`.
pub fn usm_splice(
    components: &[DyadicMeasure],
    schedule: &SpliceSchedule,
    depth: usize,
) -> Result<DyadicMeasure> {
    if schedule.usm_book().is_none() {
        return Err(Error::Config("schedule carries no USM bookkeeping".into()));
    }
    splice_measures(components, schedule, depth)
}

/// A splice evaluated on demand, so arbitrarily deep positions stay cheap.
///
/// Conditional masses are products of per-block conditionals; mass never
/// needs to be accumulated across the whole prefix.
#[derive(Debug, Clone)]
pub struct SplicedMeasure<C> {
    dim: usize,
    components: Vec<C>,
    schedule: SpliceSchedule,
}

impl<C: CylinderMeasure> SplicedMeasure<C> {
    pub fn new(components: Vec<C>, schedule: SpliceSchedule) -> Result<Self> {
        let dim = components
            .first()
            .map(|c| c.dim())
            .ok_or_else(|| Error::Shape("no components to splice".into()))?;
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Shape("components of different dimensions".into()));
        }
        Ok(Self { dim, components, schedule })
    }

    pub fn schedule(&self) -> &SpliceSchedule {
        &self.schedule
    }

    pub fn component_for_block(&self, index: usize) -> &C {
        &self.components[index % self.components.len()]
    }

    fn walk<F>(&self, start: usize, len: usize, mut visit: F) -> Result<()>
    where
        F: FnMut(BlockSpan, usize, usize) -> Result<()>,
    {
        let mut pos = start;
        while pos < start + len {
            let b = self
                .schedule
                .block_at(pos)
                .ok_or_else(|| Error::ResolutionExceeded(format!("position {pos} is past the schedule")))?;
            let take = (b.start + b.len - pos).min(start + len - pos);
            visit(b, pos - b.start, take)?;
            pos += take;
        }
        Ok(())
    }

    /// `μ(·|prefix)` at `len` further levels, as a depth-`len` measure on `B₁`.
    pub fn conditional_fingerprint(&self, prefix: &[u8], len: usize) -> Result<DyadicMeasure> {
        let masses = self.conditional_extension(prefix, len)?;
        DyadicMeasure::new(self.dim, len, masses)
    }
}

impl<C: CylinderMeasure> CylinderMeasure for SplicedMeasure<C> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_depth(&self) -> Option<usize> {
        let own = self.schedule.total_len();
        let limited = self
            .schedule
            .block_count()
            .map(|count| (0..count).all(|i| self.component_for_block(i).max_depth().is_some()));
        match (own, limited) {
            (Some(total), _) => Some(total),
            _ => None,
        }
    }

    fn cylinder_mass(&self, digits: &[u8]) -> f64 {
        let mut mass = 1.0;
        let ok = self.walk(0, digits.len(), |b, off, take| {
            let c = self.component_for_block(b.index);
            mass *= c.cylinder_mass(&digits[b.start..b.start + off + take]);
            Ok(())
        });
        if ok.is_err() {
            return 0.0;
        }
        mass
    }

    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        let scale = self.cylinder_mass(prefix);
        Ok(self.conditional_extension(prefix, len)?.into_iter().map(|v| v * scale).collect())
    }

    fn conditional_extension(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        let mut out = vec![1.0];
        self.walk(prefix.len(), len, |b, off, take| {
            let c = self.component_for_block(b.index);
            let local = &prefix[b.start.min(prefix.len())..];
            let local = &local[..off.min(local.len())];
            out = kron(&out, &c.conditional_extension(local, take)?);
            Ok(())
        })?;
        Ok(out)
    }

    fn sample_digits(&self, len: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<u8>> {
        let mut digits = Vec::with_capacity(len);
        self.walk(0, len, |b, _, take| {
            digits.extend(self.component_for_block(b.index).sample_digits(take, rng)?);
            Ok(())
        })?;
        Ok(digits)
    }
}

/// A component measure: either finite-depth or an i.i.d. digit law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpliceComponent {
    Dyadic { measure: DyadicMeasure },
    Product { law: DigitLaw },
}

impl SpliceComponent {
    /// Level-`len` window marginal at digit offset `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        match self {
            SpliceComponent::Dyadic { measure } => Ok(measure.window_marginal(start, len)?.into_masses()),
            SpliceComponent::Product { law } => law.conditional_extension(&[], len),
        }
    }

    /// The component seen at `depth` levels.
    pub fn at_depth(&self, depth: usize) -> Result<DyadicMeasure> {
        match self {
            SpliceComponent::Dyadic { measure } => measure.coarsen(depth),
            SpliceComponent::Product { law } => law.to_measure(depth),
        }
    }
}

impl From<DyadicMeasure> for SpliceComponent {
    fn from(measure: DyadicMeasure) -> Self {
        SpliceComponent::Dyadic { measure }
    }
}

impl From<DigitLaw> for SpliceComponent {
    fn from(law: DigitLaw) -> Self {
        SpliceComponent::Product { law }
    }
}

impl CylinderMeasure for SpliceComponent {
    fn dim(&self) -> usize {
        match self {
            SpliceComponent::Dyadic { measure } => measure.dim(),
            SpliceComponent::Product { law } => law.dim(),
        }
    }

    fn max_depth(&self) -> Option<usize> {
        match self {
            SpliceComponent::Dyadic { measure } => Some(measure.depth()),
            SpliceComponent::Product { .. } => None,
        }
    }

    fn cylinder_mass(&self, digits: &[u8]) -> f64 {
        match self {
            SpliceComponent::Dyadic { measure } => measure.cylinder_mass(digits),
            SpliceComponent::Product { law } => law.cylinder_mass(digits),
        }
    }

    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        match self {
            SpliceComponent::Dyadic { measure } => measure.extension_masses(prefix, len),
            SpliceComponent::Product { law } => law.extension_masses(prefix, len),
        }
    }

    fn conditional_extension(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        match self {
            SpliceComponent::Dyadic { measure } => measure.conditional_extension(prefix, len),
            SpliceComponent::Product { law } => law.conditional_extension(prefix, len),
        }
    }

    fn sample_digits(&self, len: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<u8>> {
        match self {
            SpliceComponent::Dyadic { measure } => measure.sample_digits(len, rng),
            SpliceComponent::Product { law } => law.sample_digits(len, rng),
        }
    }
}

/// Measure marginal `R̄` of a component CP distribution: a finite law over components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLaw {
    atoms: Vec<(f64, SpliceComponent)>,
}

impl ComponentLaw {
    pub fn new(atoms: Vec<(f64, SpliceComponent)>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| Error::Shape("empty component law".into()))?;
        let dim = first.1.dim();
        if atoms.iter().any(|(w, c)| c.dim() != dim || !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("component law atoms disagree in dimension or weight".into()));
        }
        let total: f64 = atoms.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("component weights sum to {total}")));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(c: impl Into<SpliceComponent>) -> Self {
        Self { atoms: vec![(1.0, c.into())] }
    }

    pub fn uniform(cs: Vec<SpliceComponent>) -> Result<Self> {
        let w = 1.0 / cs.len().max(1) as f64;
        Self::new(cs.into_iter().map(|c| (w, c)).collect())
    }

    /// Uniform law over all `2^{dK}` leaf point masses: Lebesgue intensity, no self-similarity.
    pub fn leaf_diracs(dim: usize, depth: usize) -> Result<Self> {
        let n = cube_count(dim, depth)?;
        let cs = (0..n)
            .map(|i| {
                let mut m = vec![0.0; n];
                m[i] = 1.0;
                DyadicMeasure::new(dim, depth, m).map(SpliceComponent::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(cs)
    }

    /// Uniform law over the cyclic shifts of a leaf-mass vector: Lebesgue intensity.
    pub fn cyclic_shifts(base: &DyadicMeasure) -> Result<Self> {
        let m = base.masses();
        let n = m.len();
        let cs = (0..n)
            .map(|s| {
                let shifted: Vec<f64> = (0..n).map(|i| m[(i + n - s) % n]).collect();
                DyadicMeasure::new(base.dim(), base.depth(), shifted).map(SpliceComponent::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(cs)
    }

    pub fn from_distribution(q: &EmpiricalDistribution<DyadicMeasure>) -> Result<Self> {
        Self::new(q.atoms().iter().map(|(w, m)| (*w, m.clone().into())).collect())
    }

    pub fn atoms(&self) -> &[(f64, SpliceComponent)] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].1.dim()
    }

    /// Shallowest finite component depth, `None` when all components are unbounded.
    pub fn min_depth(&self) -> Option<usize> {
        self.atoms.iter().filter_map(|(_, c)| c.max_depth()).min()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &SpliceComponent {
        let weights: Vec<f64> = self.atoms.iter().map(|(w, _)| *w).collect();
        &self.atoms[pick(&weights, rng.gen::<f64>())].1
    }

    /// `∫ f dR̄`.
    pub fn integrate(&self, f: &TestFunction) -> Result<f64> {
        let mut acc = 0.0;
        for (w, c) in &self.atoms {
            acc += w * f.evaluate(&c.at_depth(f.resolution())?)?;
        }
        Ok(acc)
    }

    /// Expected window marginal: `∫ (law of digits start..start+len under μ) dR̄(μ)`.
    pub fn intensity_window(&self, start: usize, len: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; cube_count(self.dim(), len)?];
        for (w, c) in &self.atoms {
            for (o, v) in out.iter_mut().zip(c.window(start, len)?) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// `#G_{N,i}` with `G_{N,i} = { j : N·t_{<i} ≤ j ≤ j + p ≤ N·t_{≤i} }`.
pub fn good_count(n: usize, t: &[usize], i: usize, p: usize) -> usize {
    (n * t[i] + 1).saturating_sub(p)
}

/// `Σ_i |t_i N − #G_{N,i}|`.
pub fn boundary_count(n: usize, t: &[usize], p: usize) -> usize {
    (0..t.len()).map(|i| n * t[i] - good_count(n, t, i, p)).sum()
}

/// Inputs of the periodic splice approximating `(1/q) Σ tᵢ Rᵢ`.
#[derive(Debug, Clone)]
pub struct PeriodicSplice<'a> {
    pub laws: &'a [ComponentLaw],
    pub t: &'a [usize],
    pub n: usize,
    pub p: usize,
}

impl<'a> PeriodicSplice<'a> {
    pub fn new(laws: &'a [ComponentLaw], t: &'a [usize], n: usize, p: usize) -> Result<Self> {
        if laws.is_empty() || laws.len() != t.len() || t.contains(&0) || n == 0 {
            return Err(Error::Shape("periodic splice needs one positive weight per law".into()));
        }
        let dim = laws[0].dim();
        if laws.iter().any(|l| l.dim() != dim) {
            return Err(Error::Shape("component laws of different dimensions".into()));
        }
        let s = Self { laws, t, n, p };
        for (i, law) in laws.iter().enumerate() {
            if let Some(depth) = law.min_depth() {
                if depth < n * t[i] {
                    return Err(Error::Shape(format!(
                        "law {} has depth {depth} below its block length {}",
                        i + 1,
                        n * t[i]
                    )));
                }
            }
        }
        Ok(s)
    }

    pub fn q(&self) -> usize {
        self.t.iter().sum()
    }

    pub fn period(&self) -> usize {
        self.n * self.q()
    }

    pub fn schedule(&self) -> Result<SpliceSchedule> {
        SpliceSchedule::periodic(self.t.iter().map(|ti| ti * self.n).collect())
    }

    /// One Monte Carlo emission: draw the components and a point, then
    /// return `μ(·|x₀^j)` at depth `p` for `j` uniform in one period.
    pub fn emit<R: Rng>(&self, rng: &mut R) -> Result<DyadicMeasure> {
        let schedule = self.schedule()?;
        let j = rng.gen_range(0..self.period());
        let needed = j + self.p;
        let spans = schedule.spans_to(needed)?;
        let k = self.laws.len();
        let comps: Vec<&SpliceComponent> = (0..=spans.last().map_or(0, |s| s.index))
            .map(|b| self.laws[b % k].sample(rng))
            .collect();
        let spliced = SplicedMeasure::new(comps, schedule)?;
        let x = spliced.sample_digits(j, rng)?;
        spliced.conditional_fingerprint(&x, self.p)
    }

    /// Independent emissions, emission `s` drawn from stream `s` of `seed`.
    pub fn emissions(&self, samples: usize, seed: u64, exec: Exec) -> Result<Vec<DyadicMeasure>> {
        par::map_range(exec, samples, |s| self.emit(&mut par::stream_rng(seed, s as u64)))
            .into_iter()
            .collect()
    }

    /// Monte Carlo `Q̄^N` from `samples` emissions, merged.
    pub fn sample(&self, samples: usize, seed: u64, exec: Exec) -> Result<EmpiricalDistribution<DyadicMeasure>> {
        Ok(EmpiricalDistribution::uniform(self.emissions(samples, seed, exec)?, self.p)?.merged())
    }

    /// `(1/q) Σ tᵢ ∫ f dR̄ᵢ`.
    pub fn target_integral(&self, f: &TestFunction) -> Result<f64> {
        let q = self.q() as f64;
        let mut acc = 0.0;
        for (law, &ti) in self.laws.iter().zip(self.t) {
            acc += ti as f64 / q * law.integrate(f)?;
        }
        Ok(acc)
    }

    /// `‖f‖_∞ · Σ|tᵢN − #G_{N,i}| / N`.
    pub fn lemma_bound(&self, sup: f64) -> f64 {
        sup * boundary_count(self.n, self.t, self.p) as f64 / self.n as f64
    }

    /// The same count averaged over the full period `N q`.
    pub fn period_bound(&self, sup: f64) -> f64 {
        sup * boundary_count(self.n, self.t, self.p) as f64 / self.period() as f64
    }

    /// Exact intensity `[Q^N]` at level `k`, averaging window intensities over `j`.
    ///
    /// Blocks are drawn independently, so the window law at `j` is the
    /// Kronecker product of each law's intensity window over the blocks it meets.
    pub fn exact_intensity(&self, k: usize) -> Result<DyadicMeasure> {
        let dim = self.laws[0].dim();
        let schedule = self.schedule()?;
        let mut acc = vec![0.0; cube_count(dim, k)?];
        for j in 0..self.period() {
            let mut window = vec![1.0];
            let mut pos = j;
            while pos < j + k {
                let b = schedule.block_at(pos).expect("periodic schedule");
                let take = (b.start + b.len - pos).min(j + k - pos);
                let law = &self.laws[b.index % self.laws.len()];
                window = kron(&window, &law.intensity_window(pos - b.start, take)?);
                pos += take;
            }
            for (a, v) in acc.iter_mut().zip(window) {
                *a += v;
            }
        }
        let scale = 1.0 / self.period() as f64;
        acc.iter_mut().for_each(|v| *v *= scale);
        DyadicMeasure::new(dim, k, acc)
    }
}

/// `(ν, n)`-discretization: keep `τ` down to level `n`, then a rescaled copy of `ν` in each level-`n` cube.
pub fn discretize(tau: &DyadicMeasure, nu: &DyadicMeasure, n: usize) -> Result<DyadicMeasure> {
    if tau.dim() != nu.dim() {
        return Err(Error::Shape("discretizing with a measure of another dimension".into()));
    }
    if n > tau.depth() || nu.depth() + n > tau.depth() {
        return Err(Error::Shape(format!(
            "depth {} cannot host level {n} plus {} levels of ν",
            tau.depth(),
            nu.depth()
        )));
    }
    let masses = kron(&tau.level_masses(n)?, nu.masses());
    DyadicMeasure::new(tau.dim(), n + nu.depth(), masses)
}

/// Two one-dimensional coin laws used as alternating splice components.
pub fn coin_components(a: f64, b: f64) -> Result<Vec<SpliceComponent>> {
    Ok(vec![DigitLaw::coin(a)?.into(), DigitLaw::coin(b)?.into()])
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn word(d: &[u8]) -> Word {
        Word::new(1, d.to_vec()).unwrap()
    }

    #[test]
    fn splice_words_examples() {
        let s = SpliceSchedule::periodic(vec![1]).unwrap();
        let out = splice_words(&[word(&[0, 1]), word(&[1, 1]), word(&[0, 0])], &s).unwrap();
        assert_eq!(out.digits(), &[0, 1, 0]);
        let single = SpliceSchedule::finite(vec![3]).unwrap();
        assert_eq!(splice_words(&[word(&[1, 0, 1, 1])], &single).unwrap().digits(), &[1, 0, 1]);
        let s = SpliceSchedule::finite(vec![2, 1, 3]).unwrap();
        let w = [word(&[0, 0]), word(&[1]), word(&[1, 0, 1])];
        assert_eq!(splice_words(&w, &s).unwrap().len(), s.partial_sum(3).unwrap());
        assert!(splice_words(&[word(&[0])], &s).is_err());
    }

    #[test]
    fn hand_product_example() {
        let comps = [DyadicMeasure::coin(0.7, 2).unwrap(), DyadicMeasure::coin(0.4, 2).unwrap()];
        let s = SpliceSchedule::periodic(vec![2]).unwrap();
        let nu = splice_measures(&comps, &s, 3).unwrap();
        let y = word(&[0, 1, 1]);
        assert!((nu.mass(&y).unwrap() - 0.084).abs() < 1e-15);
    }

    #[test]
    fn lebesgue_components_splice_to_lebesgue() {
        let l = DyadicMeasure::lebesgue(2, 3).unwrap();
        let s = SpliceSchedule::finite(vec![2, 3, 1]).unwrap();
        let out = splice_measures(&[l.clone(), l.clone(), l], &s, 5).unwrap();
        assert!(out.leafwise_eq(&DyadicMeasure::lebesgue(2, 5).unwrap(), 1e-15));
    }

    #[test]
    fn local_form_holds_leafwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let comps: Vec<DyadicMeasure> = (0..3).map(|_| oracle::random_measure(&mut rng, 1, 4)).collect();
        let s = SpliceSchedule::finite(vec![3, 4, 4]).unwrap();
        let nu = splice_measures(&comps, &s, 10).unwrap();
        // x ends i digits into block 2 (positions 3..7); y stays inside the block
        for xi in 0..(1 << 5) {
            let x = Word::from_index(1, 5, xi).unwrap();
            if nu.mass(&x).unwrap() == 0.0 {
                continue;
            }
            let local = nu.conditional(&x).unwrap().coarsen(2).unwrap();
            let expect = comps[1].conditional(&x.slice(3, 5)).unwrap().coarsen(2).unwrap();
            assert!(local.leafwise_eq(&expect, 1e-12), "{x}");
        }
    }

    #[test]
    fn lazy_splice_matches_materialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let comps: Vec<DyadicMeasure> = (0..2).map(|_| oracle::random_measure(&mut rng, 1, 5)).collect();
        let s = SpliceSchedule::periodic(vec![3, 5]).unwrap();
        let dense = splice_measures(&comps, &s, 12).unwrap();
        let lazy = SplicedMeasure::new(comps.iter().collect(), s).unwrap();
        for k in 0..8 {
            let prefix = lazy.sample_digits(k, &mut rng).unwrap();
            let a = lazy.conditional_fingerprint(&prefix, 4).unwrap();
            let b = dense.conditional_at_depth(&prefix, 4).unwrap();
            assert!(a.leafwise_eq(&b, 1e-12));
        }
    }

    #[test]
    fn schedule_bookkeeping() {
        let s = SpliceSchedule::periodic(vec![2, 3]).unwrap();
        assert_eq!(s.partial_sum(0), Some(0));
        assert_eq!(s.partial_sum(3), Some(7));
        assert_eq!(s.block_at(6), Some(BlockSpan { index: 2, start: 5, len: 2 }));
        assert_eq!(s.block_at(7), Some(BlockSpan { index: 3, start: 7, len: 3 }));
        let f = SpliceSchedule::finite(vec![2, 3]).unwrap();
        assert_eq!(f.block_at(5), None);
        let spans = s.spans_to(6).unwrap();
        assert_eq!(spans.iter().map(|b| b.len).collect::<Vec<_>>(), vec![2, 3, 1]);
    }

    #[test]
    fn usm_schedule_recursion() {
        let s = SpliceSchedule::usm(vec![1; 6], Growth::default(), 0.5).unwrap();
        let n: Vec<usize> = (0..5).map(|i| s.block_len(i).unwrap()).collect();
        assert_eq!(n, vec![4, 17, 69, 277, 1109]);
        assert_eq!(s.partial_sum(5), Some(1476));
        let book = s.usm_book().unwrap();
        for i in 1..5 {
            assert!(book.padding[i] >= Growth::default().apply(n[i - 1]).unwrap());
            assert_eq!(n[i], book.thresholds[i] + book.padding[i]);
        }
        let prod: f64 = usm_tolerances(0.5, 60).unwrap().iter().map(|e| 1.0 - e).product();
        assert!((prod - 0.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_json_round_trip() {
        let s = SpliceSchedule::usm(vec![1, 2, 1], Growth::Scale { factor: 3 }, 0.25).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: SpliceSchedule = serde_json::from_str::<SpliceSchedule>(&text).unwrap().validated().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn good_count_matches_enumeration() {
        for n in 1..12 {
            for p in 1..6 {
                let t = [1, 2, 3];
                for i in 0..3 {
                    let lo: usize = t[..i].iter().sum::<usize>() * n;
                    let hi: usize = t[..=i].iter().sum::<usize>() * n;
                    let direct = (0..n * 6).filter(|&j| lo <= j && j + p <= hi).count();
                    assert_eq!(good_count(n, &t, i, p), direct);
                }
            }
        }
    }

    #[test]
    fn lebesgue_laws_give_lebesgue_periodic_splice() {
        let laws = [ComponentLaw::dirac(DigitLaw::uniform(1).unwrap())];
        let ps = PeriodicSplice::new(&laws, &[1], 8, 3).unwrap();
        let q = ps.sample(64, 1, Exec::Sequential).unwrap();
        assert_eq!(q.len(), 1);
        assert!(q.atoms()[0].1.leafwise_eq(&DyadicMeasure::lebesgue(1, 3).unwrap(), 1e-15));
    }

    #[test]
    fn leaf_dirac_laws_have_lebesgue_intensity() {
        let laws = [ComponentLaw::leaf_diracs(1, 4).unwrap(), ComponentLaw::leaf_diracs(1, 4).unwrap()];
        let ps = PeriodicSplice::new(&laws, &[1, 1], 4, 2).unwrap();
        for k in 1..=4 {
            let i = ps.exact_intensity(k).unwrap();
            let expect = 0.5f64.powi(k as i32);
            assert!(i.masses().iter().all(|&m| (m - expect).abs() < 1e-15));
        }
    }

    #[test]
    fn discretize_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = oracle::random_measure(&mut rng, 1, 8);
        let nu = oracle::random_measure(&mut rng, 1, 4);
        let out = discretize(&tau, &nu, 3).unwrap();
        assert!(out.coarsen(3).unwrap().leafwise_eq(&tau.coarsen(3).unwrap(), 1e-15));
        let flat = discretize(&tau, &DyadicMeasure::lebesgue(1, 5).unwrap(), 3).unwrap();
        assert!(flat.leafwise_eq(&tau.coarsen(3).unwrap().refine(5).unwrap(), 1e-15));
        let b = DyadicMeasure::coin(0.3, 8).unwrap();
        let bb = discretize(&b, &DyadicMeasure::coin(0.3, 5).unwrap(), 3).unwrap();
        assert!(bb.leafwise_eq(&b, 1e-15));
        for xi in 0..(1 << 5) {
            let x = Word::from_index(1, 5, xi).unwrap();
            if out.mass(&x).unwrap() > 0.0 {
                let lhs = out.conditional(&x).unwrap();
                let rhs = nu.conditional(&x.slice(3, 5)).unwrap();
                assert!(lhs.leafwise_eq(&rhs, 1e-12));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn splice_is_a_probability(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = rng.gen_range(1..3);
            let blocks: Vec<usize> = (0..3).map(|_| rng.gen_range(1..4)).collect();
            let comps: Vec<DyadicMeasure> = (0..3).map(|_| oracle::random_measure(&mut rng, dim, 3)).collect();
            let s = SpliceSchedule::periodic(blocks).unwrap();
            let depth = if dim == 1 { 10 } else { 5 };
            let out = splice_measures(&comps, &s, depth).unwrap();
            prop_assert!((out.total() - 1.0).abs() < 1e-10);
        }
    }
}
