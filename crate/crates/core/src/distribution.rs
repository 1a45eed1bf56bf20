//! Finitely supported distributions over measures and over measure–point pairs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dyadic::{digits_to_center, Word};
use crate::error::{Error, Result};
use crate::measure::{intensity_of_family, DyadicMeasure, MASS_TOL};

/// Default resolution at which distributions are compared and integrated.
pub const DEFAULT_FINGERPRINT_DEPTH: usize = 4;

/// A measure on `B₁` together with the dyadic code of a tracked point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedMeasure {
    pub mu: DyadicMeasure,
    pub x: Word,
}

impl TaggedMeasure {
    pub fn new(mu: DyadicMeasure, x: Word) -> Result<Self> {
        if mu.dim() != x.dim() {
            return Err(Error::Shape(format!(
                "measure of dimension {} tagged with a {}-d word",
                mu.dim(),
                x.dim()
            )));
        }
        Ok(Self { mu, x })
    }

    /// Center of the tracked point's cube, the point to precision `2^{-|x|}`.
    pub fn point(&self) -> Vec<f64> {
        digits_to_center(self.x.dim(), self.x.digits(), 1.0).0
    }
}

/// Something a distribution can be built over.
pub trait Atom: Clone + Send + Sync + fmt::Debug {
    fn measure(&self) -> &DyadicMeasure;

    /// Tracked point, when the atom carries one.
    fn point(&self) -> Option<Vec<f64>> {
        None
    }

    /// Leafwise equality within `tol` (and equal words for tagged atoms).
    fn same_as(&self, other: &Self, tol: f64) -> bool;

    fn to_record(&self) -> AtomRecord;

    fn from_record(record: AtomRecord) -> Result<Self>;
}

impl Atom for DyadicMeasure {
    fn measure(&self) -> &DyadicMeasure {
        self
    }

    fn same_as(&self, other: &Self, tol: f64) -> bool {
        self.leafwise_eq(other, tol)
    }

    fn to_record(&self) -> AtomRecord {
        AtomRecord { weight: 0.0, measure: self.clone(), point: None }
    }

    fn from_record(record: AtomRecord) -> Result<Self> {
        match record.point {
            None => Ok(record.measure),
            Some(_) => Err(Error::Config("measure atom carries a point".into())),
        }
    }
}

impl Atom for TaggedMeasure {
    fn measure(&self) -> &DyadicMeasure {
        &self.mu
    }

    fn point(&self) -> Option<Vec<f64>> {
        Some(TaggedMeasure::point(self))
    }

    fn same_as(&self, other: &Self, tol: f64) -> bool {
        self.x == other.x && self.mu.leafwise_eq(&other.mu, tol)
    }

    fn to_record(&self) -> AtomRecord {
        AtomRecord { weight: 0.0, measure: self.mu.clone(), point: Some(self.x.clone()) }
    }

    fn from_record(record: AtomRecord) -> Result<Self> {
        match record.point {
            Some(x) => TaggedMeasure::new(record.measure, x),
            None => Err(Error::Config("tagged atom is missing its point".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomRecord {
    pub weight: f64,
    pub measure: DyadicMeasure,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Word>,
}

/// On-disk form of an [`EmpiricalDistribution`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionFile {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub fingerprint_depth: usize,
    pub atoms: Vec<AtomRecord>,
}

pub const DISTRIBUTION_FORMAT: &str = "measure-distribution";

/// A finitely supported probability distribution over atoms.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution<A> {
    atoms: Vec<(f64, A)>,
    fingerprint_depth: usize,
}

impl<A: Atom> EmpiricalDistribution<A> {
    pub fn new(atoms: Vec<(f64, A)>, fingerprint_depth: usize) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::EmptyOutput("distribution with no atoms".into()))?;
        let dim = first.1.measure().dim();
        let mut total = 0.0;
        for (w, a) in &atoms {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom weight {w} is negative or not finite")));
            }
            let m = a.measure();
            if m.dim() != dim {
                return Err(Error::Shape("atoms of different dimensions".into()));
            }
            if m.depth() < fingerprint_depth {
                return Err(Error::ResolutionExceeded(format!(
                    "atom of depth {} below fingerprint depth {fingerprint_depth}",
                    m.depth()
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > MASS_TOL * (atoms.len() as f64).max(1.0) {
            return Err(Error::InvalidMeasure(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, fingerprint_depth })
    }

    pub fn dirac(atom: A, fingerprint_depth: usize) -> Result<Self> {
        Self::new(vec![(1.0, atom)], fingerprint_depth)
    }

    /// Equal weights on the given atoms (repetitions allowed, not merged).
    pub fn uniform(atoms: Vec<A>, fingerprint_depth: usize) -> Result<Self> {
        let w = 1.0 / atoms.len().max(1) as f64;
        Self::new(atoms.into_iter().map(|a| (w, a)).collect(), fingerprint_depth)
    }

    pub fn atoms(&self) -> &[(f64, A)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn fingerprint_depth(&self) -> usize {
        self.fingerprint_depth
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].1.measure().dim()
    }

    pub fn min_depth(&self) -> usize {
        self.atoms.iter().map(|(_, a)| a.measure().depth()).min().unwrap_or(0)
    }

    /// Merge leafwise-equal atoms (tolerance `1e-12`), keeping first occurrences in order.
    /// Weights are renormalized to absorb rounding in the accumulated sums.
    pub fn merged(&self) -> Self {
        let mut kept: Vec<(f64, A)> = Vec::new();
        // cheap prefilter: first leaf mass and depth must agree
        let mut keys: Vec<(f64, usize)> = Vec::new();
        for (w, a) in &self.atoms {
            let key = quick_key(a.measure());
            let hit = keys
                .iter()
                .zip(&kept)
                .position(|(k, (_, b))| {
                    (k.0 - key.0).abs() <= MASS_TOL && k.1 == key.1 && a.same_as(b, MASS_TOL)
                });
            match hit {
                Some(i) => kept[i].0 += w,
                None => {
                    keys.push(key);
                    kept.push((*w, a.clone()));
                }
            }
        }
        let total: f64 = kept.iter().map(|(w, _)| w).sum();
        kept.iter_mut().for_each(|(w, _)| *w /= total);
        Self { atoms: kept, fingerprint_depth: self.fingerprint_depth }
    }

    /// Same weights, fingerprint depth changed.
    pub fn with_fingerprint_depth(&self, p: usize) -> Result<Self> {
        Self::new(self.atoms.clone(), p)
    }

    /// Push forward under a map of atoms.
    pub fn map_atoms<B: Atom, F>(&self, f: F) -> Result<EmpiricalDistribution<B>>
    where
        F: Fn(&A) -> Result<B>,
    {
        let atoms = self
            .atoms
            .iter()
            .map(|(w, a)| Ok((*w, f(a)?)))
            .collect::<Result<Vec<_>>>()?;
        EmpiricalDistribution::new(atoms, self.fingerprint_depth)
    }

    /// `[Q](A) = ∫ μ(A) dQ̄(μ)`, computed at the shallowest atom depth.
    pub fn intensity(&self) -> Result<DyadicMeasure> {
        let depth = self.min_depth();
        let weights: Vec<f64> = self.atoms.iter().map(|(w, _)| *w).collect();
        let measures = self
            .atoms
            .iter()
            .map(|(_, a)| a.measure().coarsen(depth))
            .collect::<Result<Vec<_>>>()?;
        intensity_of_family(&weights, &measures)
    }

    /// `∫ f dQ` for a test function of resolution at most the fingerprint depth.
    pub fn integrate(&self, f: &TestFunction) -> Result<f64> {
        if f.resolution() > self.fingerprint_depth {
            return Err(Error::ResolutionExceeded(format!(
                "test function of resolution {} exceeds fingerprint depth {}",
                f.resolution(),
                self.fingerprint_depth
            )));
        }
        let mut acc = 0.0;
        for (w, a) in &self.atoms {
            acc += w * f.evaluate(a.measure())?;
        }
        Ok(acc)
    }

    pub fn to_file(&self) -> DistributionFile {
        DistributionFile {
            format: DISTRIBUTION_FORMAT.into(),
            version: 1,
            count: self.atoms.len(),
            fingerprint_depth: self.fingerprint_depth,
            atoms: self
                .atoms
                .iter()
                .map(|(w, a)| AtomRecord { weight: *w, ..a.to_record() })
                .collect(),
        }
    }

    pub fn from_file(file: DistributionFile) -> Result<Self> {
        if file.format != DISTRIBUTION_FORMAT {
            return Err(Error::Config(format!("unknown distribution format {:?}", file.format)));
        }
        if file.count != file.atoms.len() {
            return Err(Error::Config(format!(
                "header count {} but {} atoms",
                file.count,
                file.atoms.len()
            )));
        }
        let atoms = file
            .atoms
            .into_iter()
            .map(|r| {
                let w = r.weight;
                Ok((w, A::from_record(r)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms, file.fingerprint_depth)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

fn quick_key(m: &DyadicMeasure) -> (f64, usize) {
    let first = if m.depth() == 0 { m.total() } else { m.masses()[0] };
    (first, m.depth())
}

impl EmpiricalDistribution<TaggedMeasure> {
    /// `Q̄`: drop the points and merge equal measures.
    pub fn marginal(&self) -> EmpiricalDistribution<DyadicMeasure> {
        EmpiricalDistribution {
            atoms: self.atoms.iter().map(|(w, a)| (*w, a.mu.clone())).collect(),
            fingerprint_depth: self.fingerprint_depth,
        }
        .merged()
    }
}

/// `Σ wᵢ Qᵢ`: concatenated atom lists with scaled weights.
pub fn convex_combine<A: Atom>(
    weights: &[f64],
    parts: &[EmpiricalDistribution<A>],
) -> Result<EmpiricalDistribution<A>> {
    if weights.len() != parts.len() || parts.is_empty() {
        return Err(Error::Shape(format!("{} weights for {} distributions", weights.len(), parts.len())));
    }
    let p = parts[0].fingerprint_depth;
    if parts.iter().any(|q| q.fingerprint_depth != p || q.dim() != parts[0].dim()) {
        return Err(Error::Shape("combining distributions of different shapes".into()));
    }
    let atoms = weights
        .iter()
        .zip(parts)
        .flat_map(|(w, q)| q.atoms.iter().map(move |(v, a)| (w * v, a.clone())))
        .collect();
    EmpiricalDistribution::new(atoms, p)
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A bounded function of a measure that only sees its level-`k` cube masses.
#[derive(Clone)]
pub struct TestFunction {
    resolution: usize,
    sup_bound: f64,
    evaluator: Evaluator,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("resolution", &self.resolution)
            .field("sup_bound", &self.sup_bound)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F>(resolution: usize, sup_bound: f64, evaluator: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { resolution, sup_bound, evaluator: Arc::new(evaluator) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(0, c.abs(), move |_| c)
    }

    /// `μ ↦ μ(D)` for the cube `D` named by `w`.
    pub fn cube_mass(w: &Word) -> Self {
        let idx = w.index();
        Self::new(w.len(), 1.0, move |m| m[idx])
    }

    /// Indicator-free smooth probe: `μ ↦ μ(D)·μ(D')`.
    pub fn cube_product(a: &Word, b: &Word) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape("cube product needs equal levels".into()));
        }
        let (i, j) = (a.index(), b.index());
        Ok(Self::new(a.len(), 1.0, move |m| m[i] * m[j]))
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn evaluate(&self, mu: &DyadicMeasure) -> Result<f64> {
        let masses = mu.level_masses(self.resolution)?;
        Ok((self.evaluator)(&masses))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.evaluator.clone();
        Self::new(self.resolution, self.sup_bound * c.abs(), move |m| c * inner(m))
    }

    pub fn plus(&self, other: &TestFunction) -> Self {
        let (f, g) = (self.evaluator.clone(), other.evaluator.clone());
        Self::new(
            self.resolution.max(other.resolution),
            self.sup_bound + other.sup_bound,
            {
                let (rf, rg, r) = (self.resolution, other.resolution, self.resolution.max(other.resolution));
                move |m: &[f64]| f(&coarse_view(m, r, rf)) + g(&coarse_view(m, r, rg))
            },
        )
    }
}

/// Level-`to` masses from level-`from` masses of a measure of unknown dimension.
fn coarse_view(m: &[f64], from: usize, to: usize) -> Vec<f64> {
    if from == to {
        return m.to_vec();
    }
    let dim = m.len().trailing_zeros() as usize / from;
    let per = 1usize << (dim * (from - to));
    m.chunks(per).map(|c| c.iter().sum()).collect()
}

/// Cube-mass functions at level `k` together with pairwise products: a basis of probes for `F_k`.
pub fn basis_functions(dim: usize, k: usize) -> Result<Vec<(String, TestFunction)>> {
    let n = crate::dyadic::cube_count(dim, k)?;
    let words: Vec<Word> = (0..n).map(|i| Word::from_index(dim, k, i)).collect::<Result<_>>()?;
    let mut out: Vec<(String, TestFunction)> =
        words.iter().map(|w| (format!("mass[{w}]"), TestFunction::cube_mass(w))).collect();
    for (i, a) in words.iter().enumerate() {
        for b in &words[i..] {
            out.push((format!("mass[{a}]*mass[{b}]"), TestFunction::cube_product(a, b)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(dim: usize, d: &[u8]) -> Word {
        Word::new(dim, d.to_vec()).unwrap()
    }

    #[test]
    fn marginal_merges_points() {
        let l = DyadicMeasure::lebesgue(1, 5).unwrap();
        let q = EmpiricalDistribution::uniform(
            vec![
                TaggedMeasure::new(l.clone(), w(1, &[0, 1])).unwrap(),
                TaggedMeasure::new(l.clone(), w(1, &[1, 1])).unwrap(),
            ],
            4,
        )
        .unwrap();
        let m = q.marginal();
        assert_eq!(m.len(), 1);
        assert!((m.atoms()[0].0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intensity_of_diracs() {
        let l = DyadicMeasure::lebesgue(2, 3).unwrap();
        assert_eq!(EmpiricalDistribution::dirac(l.clone(), 3).unwrap().intensity().unwrap(), l);
        let b = DyadicMeasure::coin(0.2, 4).unwrap();
        assert_eq!(EmpiricalDistribution::dirac(b.clone(), 4).unwrap().intensity().unwrap(), b);
    }

    #[test]
    fn convex_combination_rules() {
        let l = DyadicMeasure::lebesgue(1, 4).unwrap();
        let b = DyadicMeasure::coin(0.3, 4).unwrap();
        let dl = EmpiricalDistribution::dirac(l.clone(), 4).unwrap();
        let db = EmpiricalDistribution::dirac(b.clone(), 4).unwrap();
        let same = convex_combine(&[0.5, 0.5], &[dl.clone(), dl.clone()]).unwrap().merged();
        assert_eq!(same.len(), 1);
        assert!((same.atoms()[0].0 - 1.0).abs() < 1e-15);

        let one = convex_combine(&[1.0], std::slice::from_ref(&db)).unwrap();
        assert_eq!(one.atoms()[0].1, b);

        let mix = convex_combine(&[0.25, 0.75], &[dl, db]).unwrap();
        let direct = intensity_of_family(&[0.25, 0.75], &[l, b]).unwrap();
        assert!(mix.intensity().unwrap().leafwise_eq(&direct, 1e-15));
    }

    #[test]
    fn integrate_examples() {
        let b = DyadicMeasure::coin(0.3, 4).unwrap();
        let l = DyadicMeasure::lebesgue(1, 4).unwrap();
        let q = EmpiricalDistribution::new(vec![(0.4, b), (0.6, l)], 4).unwrap();
        assert!((q.integrate(&TestFunction::constant(2.5)).unwrap() - 2.5).abs() < 1e-15);
        let cube = w(1, &[1, 0]);
        let f = TestFunction::cube_mass(&cube);
        let intensity = q.intensity().unwrap();
        assert!((q.integrate(&f).unwrap() - intensity.mass(&cube).unwrap()).abs() < 1e-15);
        let deep = TestFunction::cube_mass(&w(1, &[0, 0, 0, 0, 0]));
        assert!(matches!(q.integrate(&deep), Err(Error::ResolutionExceeded(_))));
    }

    #[test]
    fn sum_of_test_functions_coarsens_correctly() {
        let b = DyadicMeasure::bernoulli(2, &[0.1, 0.2, 0.3, 0.4], 3).unwrap();
        let f = TestFunction::cube_mass(&w(2, &[2]));
        let g = TestFunction::cube_mass(&w(2, &[1, 3]));
        let h = f.plus(&g);
        assert_eq!(h.resolution(), 2);
        let expect = 0.3 + 0.2 * 0.4;
        assert!((h.evaluate(&b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn distribution_round_trip() {
        let b = DyadicMeasure::coin(0.3, 4).unwrap();
        let q = EmpiricalDistribution::new(
            vec![
                (0.3, TaggedMeasure::new(b.clone(), w(1, &[0, 1, 1])).unwrap()),
                (0.7, TaggedMeasure::new(b, w(1, &[1])).unwrap()),
            ],
            3,
        )
        .unwrap();
        let text = q.to_json().unwrap();
        let back = EmpiricalDistribution::<TaggedMeasure>::from_json(&text).unwrap();
        assert_eq!(back.len(), 2);
        for ((wa, a), (wb, b)) in q.atoms().iter().zip(back.atoms()) {
            assert_eq!(wa.to_bits(), wb.to_bits());
            assert_eq!(a, b);
        }
        assert!(EmpiricalDistribution::<DyadicMeasure>::from_json(&text).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let l = DyadicMeasure::lebesgue(1, 4).unwrap();
        assert!(EmpiricalDistribution::new(vec![(0.5, l.clone())], 4).is_err());
        assert!(EmpiricalDistribution::new(vec![(1.0, l)], 5).is_err());
    }

    proptest! {
        #[test]
        fn integrate_is_linear(a in 0.0f64..1.0, c1 in -3.0f64..3.0, c2 in -3.0f64..3.0) {
            let p = EmpiricalDistribution::dirac(DyadicMeasure::coin(0.2, 4).unwrap(), 4).unwrap();
            let q = EmpiricalDistribution::dirac(DyadicMeasure::coin(0.9, 4).unwrap(), 4).unwrap();
            let f = TestFunction::cube_mass(&w(1, &[0, 1]));
            let g = TestFunction::cube_product(&w(1, &[1, 1]), &w(1, &[0, 0])).unwrap();
            let h = f.scaled(c1).plus(&g.scaled(c2));
            let mix = convex_combine(&[a, 1.0 - a], &[p.clone(), q.clone()]).unwrap();
            let lhs = mix.integrate(&h).unwrap();
            let rhs = a * (c1 * p.integrate(&f).unwrap() + c2 * p.integrate(&g).unwrap())
                + (1.0 - a) * (c1 * q.integrate(&f).unwrap() + c2 * q.integrate(&g).unwrap());
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!(lhs.abs() <= h.sup_bound() + 1e-12);
        }
    }
}
