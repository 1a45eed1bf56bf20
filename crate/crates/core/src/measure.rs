//! Finite-depth dyadic measures.
//!
//! A [`DyadicMeasure`] assigns mass to the `2^(d·K)` leaves of a dyadic cube
//! (`B₁`, or `B₂ = [-2, 2]^d` for ◇-measures) and is read as a piecewise
//! constant density: inside each leaf the mass is spread uniformly. Every
//! geometric operation here integrates against that density exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{self, alphabet_size, check_dim, cube_count, digits_index, Word};
use crate::error::{Error, Result};

/// Tolerance for probability totals and leafwise identities.
pub const MASS_TOL: f64 = 1e-12;

/// Anything that can report the mass of a dyadic cylinder `[digits]`.
///
/// Implemented by finite [`DyadicMeasure`]s and by the unbounded i.i.d.
/// [`DigitLaw`]s; splicing works over either.
pub trait CylinderMeasure: Send + Sync {
    fn dim(&self) -> usize;

    /// Deepest level at which cylinder masses are defined, `None` if unbounded.
    fn max_depth(&self) -> Option<usize>;

    fn cylinder_mass(&self, digits: &[u8]) -> f64;

    /// Masses of all length-`len` extensions of `prefix`, in lexicographic order.
    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        let dim = self.dim();
        let count = cube_count(dim, len)?;
        let mut buf = prefix.to_vec();
        buf.resize(prefix.len() + len, 0);
        let mut out = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rest = idx;
            for slot in buf[prefix.len()..].iter_mut().rev() {
                *slot = (rest & (alphabet_size(dim) - 1)) as u8;
                rest >>= dim;
            }
            out.push(self.cylinder_mass(&buf));
        }
        Ok(out)
    }

    /// Conditional masses of the length-`len` extensions of `prefix`,
    /// normalized to total one.
    fn conditional_extension(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        let mut m = self.extension_masses(prefix, len)?;
        let total: f64 = m.iter().sum();
        if total <= 0.0 {
            return Err(Error::ConditionOnNull(format!("prefix of length {} has zero mass", prefix.len())));
        }
        m.iter_mut().for_each(|v| *v /= total);
        Ok(m)
    }

    /// Draw `len` digits distributed according to the measure.
    fn sample_digits(&self, len: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<u8>> {
        if let Some(max) = self.max_depth() {
            if len > max {
                return Err(Error::ResolutionExceeded(format!(
                    "cannot sample {len} digits from a depth-{max} measure"
                )));
            }
        }
        let mut digits = Vec::with_capacity(len);
        for _ in 0..len {
            let probs = self.conditional_extension(&digits, 1)?;
            digits.push(pick(&probs, rng.gen::<f64>()) as u8);
        }
        Ok(digits)
    }
}

/// Index chosen by inverse-CDF lookup of `u ∈ [0, 1)`, never landing on a zero entry.
pub(crate) fn pick(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

impl<T: CylinderMeasure + ?Sized> CylinderMeasure for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn max_depth(&self) -> Option<usize> {
        (**self).max_depth()
    }

    fn cylinder_mass(&self, digits: &[u8]) -> f64 {
        (**self).cylinder_mass(digits)
    }

    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        (**self).extension_masses(prefix, len)
    }

    fn conditional_extension(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        (**self).conditional_extension(prefix, len)
    }

    fn sample_digits(&self, len: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<u8>> {
        (**self).sample_digits(len, rng)
    }
}

/// An i.i.d. digit law: the product measure with the same digit weights at
/// every level. Uniform weights give Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitLaw {
    dim: usize,
    weights: Vec<f64>,
}

impl DigitLaw {
    pub fn new(dim: usize, weights: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if weights.len() != alphabet_size(dim) {
            return Err(Error::Shape(format!(
                "digit law needs {} weights, got {}",
                alphabet_size(dim),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("digit weights must be finite and nonnegative".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("digit weights sum to {s}, not 1")));
        }
        Ok(Self { dim, weights })
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let a = alphabet_size(dim);
        Self::new(dim, vec![1.0 / a as f64; a])
    }

    /// One-dimensional law with `P(digit = 1) = p`.
    pub fn coin(p: f64) -> Result<Self> {
        Self::new(1, vec![1.0 - p, p])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The finite-depth restriction of this law.
    pub fn to_measure(&self, depth: usize) -> Result<DyadicMeasure> {
        DyadicMeasure::bernoulli(self.dim, &self.weights, depth)
    }
}

impl CylinderMeasure for DigitLaw {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_depth(&self) -> Option<usize> {
        None
    }

    fn cylinder_mass(&self, digits: &[u8]) -> f64 {
        digits.iter().map(|&g| self.weights[g as usize]).product()
    }

    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        let scale = self.cylinder_mass(prefix);
        let mut out = vec![scale];
        for _ in 0..len {
            out = kron(&out, &self.weights);
        }
        Ok(out)
    }

    fn conditional_extension(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        if prefix.iter().any(|&g| self.weights[g as usize] <= 0.0) {
            return Err(Error::ConditionOnNull("prefix uses a zero-weight digit".into()));
        }
        let mut out = vec![1.0];
        for _ in 0..len {
            out = kron(&out, &self.weights);
        }
        Ok(out)
    }

    fn sample_digits(&self, len: usize, rng: &mut dyn rand::RngCore) -> Result<Vec<u8>> {
        Ok((0..len).map(|_| pick(&self.weights, rng.gen::<f64>()) as u8).collect())
    }
}

/// Kronecker product of two mass vectors (concatenation of independent blocks).
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// A finite-depth mass assignment on the dyadic leaves of `[-s, s]^d`, `s ∈ {1, 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMeasure {
    dim: usize,
    depth: usize,
    support_half_width: u8,
    masses: Vec<f64>,
}

/// On-disk form of a [`DyadicMeasure`]: header then leaves in lexicographic word order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub depth: usize,
    pub support_half_width: u8,
    pub total: f64,
    pub masses: Vec<f64>,
}

pub const MEASURE_FORMAT: &str = "dyadic-measure";

impl Serialize for DyadicMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureFile {
            format: MEASURE_FORMAT.into(),
            version: 1,
            dim: self.dim,
            depth: self.depth,
            support_half_width: self.support_half_width,
            total: self.total(),
            masses: self.masses.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = MeasureFile::deserialize(d)?;
        if file.format != MEASURE_FORMAT {
            return Err(serde::de::Error::custom(format!("unknown format {:?}", file.format)));
        }
        let m = DyadicMeasure::with_support(file.dim, file.depth, file.support_half_width, file.masses)
            .map_err(serde::de::Error::custom)?;
        if (m.total() - file.total).abs() > MASS_TOL * file.total.abs().max(1.0) {
            return Err(serde::de::Error::custom(format!(
                "header total {} disagrees with leaf sum {}",
                file.total,
                m.total()
            )));
        }
        Ok(m)
    }
}

impl DyadicMeasure {
    /// A measure on the leaves of `B₁`.
    pub fn new(dim: usize, depth: usize, masses: Vec<f64>) -> Result<Self> {
        Self::with_support(dim, depth, 1, masses)
    }

    pub fn with_support(dim: usize, depth: usize, support_half_width: u8, masses: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if !(support_half_width == 1 || support_half_width == 2) {
            return Err(Error::Shape(format!(
                "support half-width must be 1 or 2, got {support_half_width}"
            )));
        }
        let expected = cube_count(dim, depth)?;
        if masses.len() != expected {
            return Err(Error::Shape(format!(
                "depth {depth} in dimension {dim} needs {expected} leaves, got {}",
                masses.len()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidMeasure(format!("leaf mass {bad} is not a finite nonnegative number")));
        }
        Ok(Self { dim, depth, support_half_width, masses })
    }

    /// Normalized Lebesgue measure on `B₁` at depth `depth`.
    pub fn lebesgue(dim: usize, depth: usize) -> Result<Self> {
        let n = cube_count(dim, depth)?;
        Self::new(dim, depth, vec![1.0 / n as f64; n])
    }

    /// Product measure whose digits are i.i.d. with the given weights over the alphabet.
    pub fn bernoulli(dim: usize, weights: &[f64], depth: usize) -> Result<Self> {
        let law = DigitLaw::new(dim, weights.to_vec())?;
        cube_count(dim, depth)?;
        let mut masses = vec![1.0];
        for _ in 0..depth {
            masses = kron(&masses, &law.weights);
        }
        Self::new(dim, depth, masses)
    }

    /// One-dimensional Bernoulli measure with `P(digit = 1) = p`.
    pub fn coin(p: f64, depth: usize) -> Result<Self> {
        Self::bernoulli(1, &[1.0 - p, p], depth)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn support_half_width(&self) -> u8 {
        self.support_half_width
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total() - 1.0).abs() <= MASS_TOL
    }

    pub fn leaf_count(&self) -> usize {
        self.masses.len()
    }

    fn same_shape(&self, other: &DyadicMeasure) -> bool {
        self.dim == other.dim && self.depth == other.depth && self.support_half_width == other.support_half_width
    }

    fn check_prefix(&self, digits: &[u8]) -> Result<()> {
        if digits.len() > self.depth {
            return Err(Error::ResolutionExceeded(format!(
                "word of length {} is deeper than the measure (depth {})",
                digits.len(),
                self.depth
            )));
        }
        let a = alphabet_size(self.dim);
        if digits.iter().any(|&g| g as usize >= a) {
            return Err(Error::Domain("digit outside alphabet".into()));
        }
        Ok(())
    }

    fn prefix_range(&self, digits: &[u8]) -> std::ops::Range<usize> {
        let span = 1usize << (self.dim * (self.depth - digits.len()));
        let start = digits_index(self.dim, digits) * span;
        start..start + span
    }

    /// Mass of the cube named by `w` (sum of its descendant leaves).
    pub fn mass(&self, w: &Word) -> Result<f64> {
        if w.dim() != self.dim {
            return Err(Error::Shape(format!("word of dimension {} for a {}-d measure", w.dim(), self.dim)));
        }
        self.check_prefix(w.digits())?;
        Ok(self.masses[self.prefix_range(w.digits())].iter().sum())
    }

    /// Masses of the level-`k` cubes, in lexicographic order.
    pub fn level_masses(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.depth {
            return Err(Error::ResolutionExceeded(format!(
                "level {k} is deeper than the measure (depth {})",
                self.depth
            )));
        }
        let span = 1usize << (self.dim * (self.depth - k));
        Ok(self.masses.chunks(span).map(|c| c.iter().sum()).collect())
    }

    /// The same measure seen only down to level `k`.
    pub fn coarsen(&self, k: usize) -> Result<DyadicMeasure> {
        if k == self.depth {
            return Ok(self.clone());
        }
        let masses = self.level_masses(k)?;
        Self::with_support(self.dim, k, self.support_half_width, masses)
    }

    /// Uniform subdivision of every leaf into `2^(d·extra)` equal children.
    pub fn refine(&self, extra: usize) -> Result<DyadicMeasure> {
        let per = cube_count(self.dim, extra)?;
        cube_count(self.dim, self.depth + extra)?;
        let scale = 1.0 / per as f64;
        let masses = self
            .masses
            .iter()
            .flat_map(|&m| std::iter::repeat_n(m * scale, per))
            .collect();
        Self::with_support(self.dim, self.depth + extra, self.support_half_width, masses)
    }

    /// Bring the measure to exactly depth `k`, coarsening or subdividing.
    pub fn at_depth(&self, k: usize) -> Result<DyadicMeasure> {
        if k <= self.depth {
            self.coarsen(k)
        } else {
            self.refine(k - self.depth)
        }
    }

    /// Rescale to total mass one.
    pub fn normalized(&self) -> Result<DyadicMeasure> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::ConditionOnNull("normalizing a zero measure".into()));
        }
        let masses = self.masses.iter().map(|m| m / t).collect();
        Self::with_support(self.dim, self.depth, self.support_half_width, masses)
    }

    /// `μ(·|x) = T_{B_x} μ_{B_x}`: the rescaled conditional on the cube of `x`,
    /// of depth `K - |x|`. Leaf masses are `μ(xy)/μ(x)`.
    pub fn conditional(&self, x: &Word) -> Result<DyadicMeasure> {
        if x.dim() != self.dim {
            return Err(Error::Shape(format!("word of dimension {} for a {}-d measure", x.dim(), self.dim)));
        }
        self.conditional_digits(x.digits())
    }

    pub fn conditional_digits(&self, digits: &[u8]) -> Result<DyadicMeasure> {
        self.check_prefix(digits)?;
        let slice = &self.masses[self.prefix_range(digits)];
        let m: f64 = slice.iter().sum();
        if m <= 0.0 {
            return Err(Error::ConditionOnNull(format!(
                "cube {digits:?} has zero mass"
            )));
        }
        let masses = slice.iter().map(|v| v / m).collect();
        Self::with_support(self.dim, self.depth - digits.len(), self.support_half_width, masses)
    }

    /// `μ(·|digits)` seen down to `depth` levels, without copying the full subtree.
    pub fn conditional_at_depth(&self, digits: &[u8], depth: usize) -> Result<DyadicMeasure> {
        self.check_prefix(digits)?;
        if digits.len() + depth > self.depth {
            return Err(Error::ResolutionExceeded(format!(
                "conditional to level {} beyond depth {}",
                digits.len() + depth,
                self.depth
            )));
        }
        let masses = CylinderMeasure::conditional_extension(self, digits, depth)?;
        Self::with_support(self.dim, depth, self.support_half_width, masses)
    }

    /// Conditional re-deepened to the original depth by uniform subdivision.
    pub fn conditional_redeepened(&self, x: &Word) -> Result<DyadicMeasure> {
        self.conditional(x)?.refine(x.len())
    }

    /// `μ_A`: restriction to the union of the cubes in `words`, normalized.
    pub fn restrict_normalize(&self, words: &[Word]) -> Result<DyadicMeasure> {
        for (i, a) in words.iter().enumerate() {
            if a.dim() != self.dim {
                return Err(Error::Shape("word dimension mismatch".into()));
            }
            self.check_prefix(a.digits())?;
            for b in &words[i + 1..] {
                if a.is_prefix_of(b) || b.is_prefix_of(a) {
                    return Err(Error::Domain(format!("words {a} and {b} are nested")));
                }
            }
        }
        let mut masses = vec![0.0; self.masses.len()];
        for w in words {
            let r = self.prefix_range(w.digits());
            masses[r.clone()].copy_from_slice(&self.masses[r]);
        }
        let kept: f64 = masses.iter().sum();
        if kept <= 0.0 {
            return Err(Error::ConditionOnNull("restriction set has zero mass".into()));
        }
        masses.iter_mut().for_each(|m| *m /= kept);
        Self::with_support(self.dim, self.depth, self.support_half_width, masses)
    }

    /// Law of the digits at positions `start .. start + len` (a window marginal).
    pub fn window_marginal(&self, start: usize, len: usize) -> Result<DyadicMeasure> {
        if start + len > self.depth {
            return Err(Error::ResolutionExceeded(format!(
                "window {start}..{} is deeper than the measure (depth {})",
                start + len,
                self.depth
            )));
        }
        let coarse = self.level_masses(start + len)?;
        let width = cube_count(self.dim, len)?;
        let mut out = vec![0.0; width];
        for chunk in coarse.chunks(width) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        Self::with_support(self.dim, len, self.support_half_width, out)
    }

    /// Leafwise equality within `tol`, requiring identical shape.
    pub fn leafwise_eq(&self, other: &DyadicMeasure, tol: f64) -> bool {
        self.same_shape(other) && self.masses.iter().zip(&other.masses).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Largest leafwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &DyadicMeasure) -> Option<f64> {
        self.same_shape(other)
            .then(|| self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Cumulative sampler over the leaves.
    pub fn leaf_sampler(&self) -> Result<LeafSampler> {
        LeafSampler::new(&self.masses)
    }

    pub(crate) fn from_grid(dim: usize, depth: usize, hw: u8, grid: Vec<f64>) -> Result<DyadicMeasure> {
        if dim == 1 {
            return Self::with_support(dim, depth, hw, grid);
        }
        let side = 1u64 << depth;
        let mut masses = vec![0.0; grid.len()];
        for (idx, slot) in masses.iter_mut().enumerate() {
            let w = index_digits(dim, depth, idx);
            let g = dyadic::digits_to_grid(dim, &w);
            *slot = grid[flat_grid(&g, side)];
        }
        Self::with_support(dim, depth, hw, masses)
    }
}

fn index_digits(dim: usize, len: usize, idx: usize) -> Vec<u8> {
    let mask = alphabet_size(dim) - 1;
    (0..len).map(|j| ((idx >> (dim * (len - 1 - j))) & mask) as u8).collect()
}

fn flat_grid(g: &[u64], side: u64) -> usize {
    g.iter().rev().fold(0u64, |acc, &gi| acc * side + gi) as usize
}

impl CylinderMeasure for DyadicMeasure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_depth(&self) -> Option<usize> {
        Some(self.depth)
    }

    fn cylinder_mass(&self, digits: &[u8]) -> f64 {
        self.masses[self.prefix_range(digits)].iter().sum()
    }

    fn extension_masses(&self, prefix: &[u8], len: usize) -> Result<Vec<f64>> {
        if prefix.len() + len > self.depth {
            return Err(Error::ResolutionExceeded(format!(
                "extension to level {} beyond depth {}",
                prefix.len() + len,
                self.depth
            )));
        }
        let slice = &self.masses[self.prefix_range(prefix)];
        let span = 1usize << (self.dim * (self.depth - prefix.len() - len));
        Ok(slice.chunks(span).map(|c| c.iter().sum()).collect())
    }
}

/// Binary-search sampler over a fixed mass vector.
#[derive(Debug, Clone)]
pub struct LeafSampler {
    cumulative: Vec<f64>,
}

impl LeafSampler {
    pub fn new(masses: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::ConditionOnNull("sampling from a zero measure".into()));
        }
        Ok(Self { cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        // never land on a zero-mass cell at the top end
        let mut i = i.min(self.cumulative.len() - 1);
        while i > 0 && self.cumulative[i] == self.cumulative[i - 1] {
            i -= 1;
        }
        i
    }
}

/// `[Q](A) = Σ wᵢ μᵢ(A)`: the leafwise weighted average of a family of measures.
pub fn intensity_of_family(weights: &[f64], measures: &[DyadicMeasure]) -> Result<DyadicMeasure> {
    if weights.len() != measures.len() || measures.is_empty() {
        return Err(Error::Shape(format!(
            "{} weights for {} measures",
            weights.len(),
            measures.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidMeasure("weights must be nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidMeasure(format!("weights sum to {s}, not 1")));
    }
    let first = &measures[0];
    if let Some(bad) = measures.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::Shape(format!(
            "intensity of measures with shapes (d={}, K={}) and (d={}, K={})",
            first.dim, first.depth, bad.dim, bad.depth
        )));
    }
    let mut out = vec![0.0; first.masses.len()];
    for (w, m) in weights.iter().zip(measures) {
        for (o, v) in out.iter_mut().zip(&m.masses) {
            *o += w * v;
        }
    }
    DyadicMeasure::with_support(first.dim, first.depth, first.support_half_width, out)
}

/// Overlap weights of a target interval grid against a source grid on one axis.
///
/// Returns, for each target cell, the first overlapped source cell and the
/// fractions of each overlapped source cell lying inside the target cell.
fn axis_overlaps(
    src_lo: f64,
    src_cell: f64,
    src_cells: usize,
    tgt_lo: f64,
    tgt_cell: f64,
    tgt_cells: usize,
) -> Vec<(usize, Vec<f64>)> {
    (0..tgt_cells)
        .map(|j| {
            let a = tgt_lo + j as f64 * tgt_cell;
            let b = tgt_lo + (j + 1) as f64 * tgt_cell;
            let first = ((a - src_lo) / src_cell).floor().max(0.0) as usize;
            let last = (((b - src_lo) / src_cell).ceil().max(0.0) as usize).min(src_cells);
            let mut fracs = Vec::new();
            let mut start = first.min(src_cells);
            for m in first.min(src_cells)..last {
                let lo = src_lo + m as f64 * src_cell;
                let hi = lo + src_cell;
                let overlap = (b.min(hi) - a.max(lo)).max(0.0) / src_cell;
                if fracs.is_empty() && overlap == 0.0 {
                    start = m + 1;
                    continue;
                }
                fracs.push(overlap);
            }
            (start, fracs)
        })
        .collect()
}

/// Leaf masses over a box of grid cells, coordinate 0 varying fastest.
fn window_block(mu: &DyadicMeasure, ranges: &[(usize, usize)]) -> Vec<f64> {
    if mu.dim == 1 {
        return mu.masses[ranges[0].0..ranges[0].1].to_vec();
    }
    let shape: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo).collect();
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut g: Vec<u64> = ranges.iter().map(|r| r.0 as u64).collect();
    for _ in 0..total {
        out.push(mu.masses[dyadic::grid_to_index(mu.dim, mu.depth, &g)]);
        for (axis, slot) in g.iter_mut().enumerate() {
            *slot += 1;
            if *slot < ranges[axis].1 as u64 {
                break;
            }
            *slot = ranges[axis].0 as u64;
        }
    }
    out
}

/// `μ_{x,t} = S_t^□(T_x μ)`: blow up the window `B(x, e^{-t})` onto `B₁`,
/// restrict, normalize, and report at depth `out_depth`.
///
/// The map sends `z ↦ e^t (z - x)`, so the tracked point lands at the
/// origin. Leaf boxes are intersected exactly with the pulled-back output
/// grid under the uniform-within-leaf reading of the input.
pub fn translate_scale(mu: &DyadicMeasure, x: &[f64], t: f64, out_depth: usize) -> Result<DyadicMeasure> {
    translate_zoom(mu, x, (-t).exp(), out_depth)
}

/// As [`translate_scale`] with the window radius `r = e^{-t}` given directly.
pub fn translate_zoom(mu: &DyadicMeasure, x: &[f64], radius: f64, out_depth: usize) -> Result<DyadicMeasure> {
    let d = mu.dim();
    if x.len() != d {
        return Err(Error::Shape(format!("point of dimension {} for a {d}-d measure", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) || !(radius > 0.0 && radius <= 1.0) {
        return Err(Error::Domain(format!("window radius {radius} must lie in (0, 1]")));
    }
    let outer = mu.support_half_width() as f64;
    let src_cells = 1usize << mu.depth();
    let src_cell = 2.0 * outer / src_cells as f64;
    let tgt_cells = 1usize << out_depth;
    let tgt_cell = 2.0 * radius / tgt_cells as f64;
    if tgt_cell < src_cell * (1.0 - 1e-12) {
        return Err(Error::ResolutionExceeded(format!(
            "window radius {radius:.6e} at output depth {out_depth} needs finer leaves than depth {}",
            mu.depth()
        )));
    }
    cube_count(d, out_depth)?;

    // only the block of leaves meeting the window matters
    let ranges: Vec<(usize, usize)> = x
        .iter()
        .map(|&c| {
            let lo = (((c - radius + outer) / src_cell).floor().max(0.0) as usize).min(src_cells);
            let hi = (((c + radius + outer) / src_cell).ceil().max(0.0) as usize).min(src_cells);
            (lo, hi.max(lo))
        })
        .collect();
    let mut shape: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo).collect();
    let mut grid = window_block(mu, &ranges);
    for axis in 0..d {
        let src_lo = -outer + ranges[axis].0 as f64 * src_cell;
        let ov = axis_overlaps(src_lo, src_cell, shape[axis], x[axis] - radius, tgt_cell, tgt_cells);
        let stride: usize = shape[..axis].iter().product();
        let outer_count: usize = shape[axis + 1..].iter().product();
        let mut next = vec![0.0; stride * tgt_cells * outer_count];
        for o in 0..outer_count {
            for (j, (start, fracs)) in ov.iter().enumerate() {
                for (k, &f) in fracs.iter().enumerate() {
                    if f == 0.0 {
                        continue;
                    }
                    let m = start + k;
                    let src_base = (o * shape[axis] + m) * stride;
                    let dst_base = (o * tgt_cells + j) * stride;
                    for s in 0..stride {
                        next[dst_base + s] += f * grid[src_base + s];
                    }
                }
            }
        }
        shape[axis] = tgt_cells;
        grid = next;
    }
    let total: f64 = grid.iter().sum();
    if total <= 0.0 {
        return Err(Error::ConditionOnNull(format!(
            "window B({x:?}, {radius:.6e}) carries no mass"
        )));
    }
    grid.iter_mut().for_each(|v| *v /= total);
    DyadicMeasure::from_grid(d, out_depth, 1, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn word(dim: usize, d: &[u8]) -> Word {
        Word::new(dim, d.to_vec()).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> DyadicMeasure {
        let n = 1usize << (dim * depth);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        DyadicMeasure::new(dim, depth, raw.into_iter().map(|v| v / s).collect()).unwrap()
    }

    #[test]
    fn uniform_bernoulli_is_lebesgue() {
        for dim in 1..=3 {
            let a = alphabet_size(dim);
            let b = DyadicMeasure::bernoulli(dim, &vec![1.0 / a as f64; a], 4).unwrap();
            let l = DyadicMeasure::lebesgue(dim, 4).unwrap();
            assert_eq!(b, l);
        }
    }

    #[test]
    fn conditional_of_bernoulli_is_bernoulli() {
        let b = DyadicMeasure::coin(0.3, 6).unwrap();
        let c = b.conditional(&word(1, &[1, 0])).unwrap();
        assert!(c.leafwise_eq(&DyadicMeasure::coin(0.3, 4).unwrap(), 1e-15));
    }

    #[test]
    fn conditional_by_hand() {
        let m = DyadicMeasure::new(1, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = m.conditional(&word(1, &[0])).unwrap();
        assert!((c.masses()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.masses()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_times_mass_recovers_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_measure(&mut rng, 2, 3);
        for xi in 0..16 {
            let x = Word::from_index(2, 2, xi).unwrap();
            let c = m.conditional(&x).unwrap();
            let mx = m.mass(&x).unwrap();
            for yi in 0..4 {
                let y = Word::from_index(2, 1, yi).unwrap();
                let joint = m.mass(&x.concat(&y).unwrap()).unwrap();
                assert!((c.mass(&y).unwrap() * mx - joint).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn conditional_on_null_cube_fails() {
        let m = DyadicMeasure::new(1, 2, vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        assert!(matches!(m.conditional(&word(1, &[0])), Err(Error::ConditionOnNull(_))));
    }

    #[test]
    fn redeepened_conditional_keeps_depth() {
        let m = DyadicMeasure::coin(0.2, 5).unwrap();
        let c = m.conditional_redeepened(&word(1, &[1, 1])).unwrap();
        assert_eq!(c.depth(), 5);
        assert!(c.coarsen(3).unwrap().leafwise_eq(&DyadicMeasure::coin(0.2, 3).unwrap(), 1e-15));
    }

    #[test]
    fn restrict_normalize_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_measure(&mut rng, 1, 4);
        let all = [word(1, &[0]), word(1, &[1])];
        assert!(m.restrict_normalize(&all).unwrap().leafwise_eq(&m, 1e-15));

        let l = DyadicMeasure::lebesgue(1, 3).unwrap();
        let half = l.restrict_normalize(&[word(1, &[1])]).unwrap();
        assert_eq!(half.masses(), &[0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25]);

        let picks = [word(1, &[0, 1]), word(1, &[1, 1, 0])];
        let r = m.restrict_normalize(&picks).unwrap();
        assert!(r.is_probability());
        for (i, &v) in r.masses().iter().enumerate() {
            let w = Word::from_index(1, 4, i).unwrap();
            let inside = picks.iter().any(|p| p.is_prefix_of(&w));
            assert!(inside || v == 0.0);
        }
        assert!(m.restrict_normalize(&[word(1, &[0]), word(1, &[0, 1])]).is_err());
    }

    #[test]
    fn intensity_examples() {
        let a = 0.3;
        let b1 = DyadicMeasure::coin(1.0 - a, 2).unwrap(); // weights (a, 1-a)
        let b2 = DyadicMeasure::coin(a, 2).unwrap(); // weights (1-a, a)
        let avg = intensity_of_family(&[0.5, 0.5], &[b1.clone(), b2]).unwrap();
        let level1 = avg.level_masses(1).unwrap();
        assert!((level1[0] - 0.5).abs() < 1e-15 && (level1[1] - 0.5).abs() < 1e-15);
        // cube 00 gets ½a² + ½(1-a)², which is ¼ only when a = ½
        let expect = 0.5 * a * a + 0.5 * (1.0 - a) * (1.0 - a);
        assert!((avg.masses()[0] - expect).abs() < 1e-15);
        assert!((avg.masses()[0] - 0.25).abs() > 1e-3);
        // the mixed cube 01 gets a(1-a)
        assert!((avg.masses()[1] - a * (1.0 - a)).abs() < 1e-15);

        assert_eq!(intensity_of_family(&[1.0], std::slice::from_ref(&b1)).unwrap(), b1);
        let deeper = DyadicMeasure::coin(a, 3).unwrap();
        assert!(matches!(intensity_of_family(&[0.5, 0.5], &[b1, deeper]), Err(Error::Shape(_))));
    }

    #[test]
    fn translate_scale_of_lebesgue_is_lebesgue() {
        let l = DyadicMeasure::lebesgue(2, 6).unwrap();
        let out = translate_scale(&l, &[0.13, -0.41], 0.7, 3).unwrap();
        assert!(out.leafwise_eq(&DyadicMeasure::lebesgue(2, 3).unwrap(), 1e-12));
    }

    #[test]
    fn translate_scale_identity_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_measure(&mut rng, 2, 4);
        let out = translate_scale(&m, &[0.0, 0.0], 0.0, 3).unwrap();
        assert!(out.leafwise_eq(&m.coarsen(3).unwrap(), 1e-12));
    }

    #[test]
    fn aligned_zoom_matches_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_measure(&mut rng, 1, 8);
        for xi in 0..8 {
            let w = Word::from_index(1, 3, xi).unwrap();
            let cube = dyadic::word_to_cube(&w);
            let out = translate_scale(&m, &cube.center, 3.0 * std::f64::consts::LN_2, 4).unwrap();
            let cond = m.conditional(&w).unwrap().coarsen(4).unwrap();
            assert!(out.leafwise_eq(&cond, 1e-12), "{w}");
        }
    }

    #[test]
    fn translate_scale_budget_and_null_window() {
        let l = DyadicMeasure::lebesgue(1, 4).unwrap();
        assert!(matches!(translate_scale(&l, &[0.0], 2.0, 4), Err(Error::ResolutionExceeded(_))));
        let left = DyadicMeasure::new(1, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            translate_scale(&left, &[0.75], 2f64.ln() * 2.0, 0),
            Err(Error::ConditionOnNull(_))
        ));
    }

    #[test]
    fn window_marginal_of_bernoulli() {
        let b = DyadicMeasure::bernoulli(2, &[0.1, 0.2, 0.3, 0.4], 4).unwrap();
        let w = b.window_marginal(1, 2).unwrap();
        assert!(w.leafwise_eq(&DyadicMeasure::bernoulli(2, &[0.1, 0.2, 0.3, 0.4], 2).unwrap(), 1e-15));
    }

    #[test]
    fn sampler_skips_zero_cells() {
        let s = LeafSampler::new(&[0.0, 0.5, 0.0, 0.5, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let i = s.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = random_measure(&mut rng, 2, 3);
        let text = serde_json::to_string(&m).unwrap();
        let back: DyadicMeasure = serde_json::from_str(&text).unwrap();
        assert_eq!(m.masses().len(), back.masses().len());
        assert!(m.masses().iter().zip(back.masses()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn digit_law_matches_finite_bernoulli() {
        let law = DigitLaw::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let m = law.to_measure(3).unwrap();
        let ext = law.extension_masses(&[2], 2).unwrap();
        let direct = m.extension_masses(&[2], 2).unwrap();
        for (a, b) in ext.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn conditional_composes(seed in 0u64..1000, a in 0usize..4, b in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_measure(&mut rng, 1, 6);
            let x = Word::from_index(1, 2, a).unwrap();
            let y = Word::from_index(1, 2, b).unwrap();
            let two_step = m.conditional(&x).unwrap().conditional(&y).unwrap();
            let one_step = m.conditional(&x.concat(&y).unwrap()).unwrap();
            prop_assert!(two_step.leafwise_eq(&one_step, 1e-12));
        }

        #[test]
        fn operations_preserve_total(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_measure(&mut rng, 2, 3);
            let c = m.conditional(&word(2, &[1])).unwrap();
            prop_assert!((c.total() - 1.0).abs() < 1e-12);
            prop_assert!(c.masses().iter().all(|&v| v >= 0.0));
            let r = m.restrict_normalize(&[word(2, &[0]), word(2, &[3, 1])]).unwrap();
            prop_assert!((r.total() - 1.0).abs() < 1e-12);
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let s = translate_scale(&m, &x, rng.gen_range(0.0..1.0), 1).unwrap();
            prop_assert!((s.total() - 1.0).abs() < 1e-12);
        }
    }
}
