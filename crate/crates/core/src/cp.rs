//! CP-chain dynamics: magnification, CP sceneries and their diagnostics.

use rand::Rng;

use crate::distribution::{Atom, EmpiricalDistribution, TaggedMeasure};
use crate::dyadic::{cube_count, digits_to_grid, grid_to_index, Word};
use crate::error::{Error, Result};
use crate::measure::{DyadicMeasure, LeafSampler};
use crate::metric::distribution_distance_with;
use crate::par::{self, Exec};

/// `M(μ, x)`: condition on the first digit of `x` and shift the word.
pub fn magnify(tm: &TaggedMeasure) -> Result<TaggedMeasure> {
    if tm.x.is_empty() {
        return Err(Error::ResolutionExceeded("tracked word has no digits left".into()));
    }
    if tm.mu.depth() == 0 {
        return Err(Error::ResolutionExceeded("measure has no levels left to magnify".into()));
    }
    let mu = tm.mu.conditional_digits(&tm.x.digits()[..1])?;
    TaggedMeasure::new(mu, tm.x.shift(1))
}

/// `M^k(μ, x)`, computed in one conditioning step.
pub fn magnify_n(tm: &TaggedMeasure, k: usize) -> Result<TaggedMeasure> {
    if tm.x.len() < k {
        return Err(Error::ResolutionExceeded(format!(
            "cannot magnify {k} times along a word of length {}",
            tm.x.len()
        )));
    }
    let mu = tm.mu.conditional_digits(&tm.x.digits()[..k])?;
    TaggedMeasure::new(mu, tm.x.shift(k))
}

/// `⟨μ, x⟩_N = (1/N) Σ_{k<N} δ_{M^k(μ,x)}`.
///
/// Orbit atoms are reported at the common depth `K - N + 1`, so that atoms
/// from different steps compare leafwise.
pub fn cp_scenery(mu: &DyadicMeasure, x: &Word, n: usize, p: usize) -> Result<EmpiricalDistribution<TaggedMeasure>> {
    if n == 0 {
        return Err(Error::Domain("CP scenery needs N ≥ 1".into()));
    }
    if x.len() < n {
        return Err(Error::ResolutionExceeded(format!("word of length {} is shorter than N = {n}", x.len())));
    }
    if mu.depth() < n + p {
        return Err(Error::ResolutionExceeded(format!(
            "depth {} leaves fewer than p = {p} levels after {n} magnifications",
            mu.depth()
        )));
    }
    let common = mu.depth() + 1 - n;
    let mut atoms = Vec::with_capacity(n);
    for k in 0..n {
        let cond = mu.conditional_at_depth(&x.digits()[..k], common)?;
        atoms.push(TaggedMeasure::new(cond, x.shift(k))?);
    }
    EmpiricalDistribution::uniform(atoms, p)
}

/// Draw `μ ~ Q̄` and then a leaf word `x ~ μ`.
pub fn sample_adapted<R: Rng + ?Sized>(qbar: &EmpiricalDistribution<DyadicMeasure>, rng: &mut R) -> Result<TaggedMeasure> {
    let weights: Vec<f64> = qbar.atoms().iter().map(|(w, _)| *w).collect();
    let i = LeafSampler::new(&weights)?.sample(rng);
    let mu = &qbar.atoms()[i].1;
    let leaf = mu.leaf_sampler()?.sample(rng);
    TaggedMeasure::new(mu.clone(), Word::from_index(mu.dim(), mu.depth(), leaf)?)
}

/// A uniformly random point inside the cube of `word` (in `B₁` coordinates).
pub fn point_in_word<R: Rng + ?Sized>(word: &Word, rng: &mut R) -> Vec<f64> {
    let len = word.len();
    let grid = digits_to_grid(word.dim(), word.digits());
    let side = 2.0 / (1u64 << len) as f64;
    grid.iter().map(|&g| -1.0 + side * (g as f64 + rng.gen::<f64>())).collect()
}

/// The adapted distribution `∫ δ_μ × μ dQ̄` estimated by `samples` draws.
pub fn adapted_distribution(
    qbar: &EmpiricalDistribution<DyadicMeasure>,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<EmpiricalDistribution<TaggedMeasure>> {
    let weights: Vec<f64> = qbar.atoms().iter().map(|(w, _)| *w).collect();
    let pick = LeafSampler::new(&weights)?;
    let leaves = qbar
        .atoms()
        .iter()
        .map(|(_, m)| m.leaf_sampler())
        .collect::<Result<Vec<_>>>()?;
    let draws = par::map_range(exec, samples, |s| {
        let mut rng = par::stream_rng(seed, s as u64);
        let i = pick.sample(&mut rng);
        let mu = &qbar.atoms()[i].1;
        let leaf = leaves[i].sample(&mut rng);
        TaggedMeasure::new(mu.clone(), Word::from_index(mu.dim(), mu.depth(), leaf)?)
    });
    let atoms = draws.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalDistribution::uniform(atoms, qbar.fingerprint_depth())?.merged())
}

/// `d(Q, MQ)` at resolution `p`.
pub fn check_m_invariance(q: &EmpiricalDistribution<TaggedMeasure>, p: usize) -> Result<f64> {
    check_m_invariance_with(q, p, Exec::default())
}

pub fn check_m_invariance_with(q: &EmpiricalDistribution<TaggedMeasure>, p: usize, exec: Exec) -> Result<f64> {
    let pushed = q.map_atoms(magnify)?;
    distribution_distance_with(q, &pushed, p, exec)
}

/// Distance between `Q` and the adapted distribution built from its own marginal.
pub fn check_adapted(
    q: &EmpiricalDistribution<TaggedMeasure>,
    samples: usize,
    seed: u64,
    p: usize,
    exec: Exec,
) -> Result<f64> {
    let resampled = adapted_distribution(&q.marginal(), samples, seed, exec)?;
    distribution_distance_with(q, &resampled, p, exec)
}

/// `max_D |[Q](D) - 2^{-dk}|` over level-`k` cubes.
pub fn check_intensity_lebesgue<A: Atom>(q: &EmpiricalDistribution<A>, k: usize) -> Result<f64> {
    if k > q.fingerprint_depth() {
        return Err(Error::ResolutionExceeded(format!(
            "intensity level {k} beyond the fingerprint depth {}",
            q.fingerprint_depth()
        )));
    }
    let dim = q.dim();
    let target = 1.0 / cube_count(dim, k)? as f64;
    let mut acc = vec![0.0; cube_count(dim, k)?];
    for (w, a) in q.atoms() {
        for (o, v) in acc.iter_mut().zip(a.measure().level_masses(k)?) {
            *o += w * v;
        }
    }
    Ok(acc.iter().map(|v| (v - target).abs()).fold(0.0, f64::max))
}

/// `d(MQ, Q)` for an orbit average can move by at most two atoms of weight `1/N`.
pub fn telescoping_bound(n: usize) -> f64 {
    4.0 / n as f64
}

/// Lebesgue volume of `B₁ ∖ Δ_n`, the rejection probability of [`extended_sample`].
pub fn rejection_probability(dim: usize, n: usize) -> f64 {
    1.0 - (1.0 - 2f64.powi(1 - n as i32)).powi(dim as i32)
}

/// `T_{x,n}^◇ μ` with the mapped word.
#[derive(Debug, Clone, PartialEq)]
pub struct Extended {
    /// Measure on `B₂` at depth `K - n + 1`, normalized.
    pub measure: DyadicMeasure,
    /// `T_{x,n} x`: the word remaining after the first `n` digits.
    pub word: Word,
}

/// Re-center on the level-`n` cube of `x` so that it maps onto `B₁`, and keep
/// the measure on the surrounding `B₂`.
///
/// Returns `None` (rejected) when the cube touches `∂B₁`, since then `B₂` is
/// not covered by the data.
pub fn extended_sample(tm: &TaggedMeasure, n: usize) -> Result<Option<Extended>> {
    extend(&tm.mu, &tm.x, n)
}

pub(crate) fn extend(mu: &DyadicMeasure, x: &Word, n: usize) -> Result<Option<Extended>> {
    if n < 2 {
        return Err(Error::Domain(format!("extension level n = {n} must be at least 2")));
    }
    if x.len() < n {
        return Err(Error::ResolutionExceeded(format!("word of length {} is shorter than n = {n}", x.len())));
    }
    if mu.depth() < n + 1 {
        return Err(Error::ResolutionExceeded(format!(
            "depth {} leaves no level below n = {n}",
            mu.depth()
        )));
    }
    let dim = mu.dim();
    let cube = digits_to_grid(dim, &x.digits()[..n]);
    let last = (1u64 << n) - 1;
    if cube.iter().any(|&g| g == 0 || g == last) {
        return Ok(None);
    }
    let depth = mu.depth();
    let q = depth - n + 1;
    let per = 1u64 << (depth - n);
    let lo: Vec<u64> = cube.iter().map(|&g| g * per - per / 2).collect();
    let count = cube_count(dim, q)?;
    let mut masses = Vec::with_capacity(count);
    if dim == 1 {
        masses.extend_from_slice(&mu.masses()[lo[0] as usize..lo[0] as usize + count]);
    } else {
        let mut g = vec![0u64; dim];
        for idx in 0..count {
            // digit j of idx holds bit (q-1-j) of every coordinate
            for (axis, slot) in g.iter_mut().enumerate() {
                let mut v = 0u64;
                for j in 0..q {
                    let digit = (idx >> (dim * (q - 1 - j))) & ((1 << dim) - 1);
                    v = (v << 1) | ((digit >> axis) & 1) as u64;
                }
                *slot = v + lo[axis];
            }
            masses.push(mu.masses()[grid_to_index(dim, depth, &g)]);
        }
    }
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::ConditionOnNull("window around the tracked cube has no mass".into()));
    }
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(Some(Extended {
        measure: DyadicMeasure::with_support(dim, q, 2, masses)?,
        word: x.shift(n),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn word(d: &[u8]) -> Word {
        Word::new(1, d.to_vec()).unwrap()
    }

    #[test]
    fn magnify_is_the_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in 1..=2 {
            let depth = if dim == 1 { 6 } else { 3 };
            let mu = oracle::random_measure(&mut rng, dim, depth);
            for idx in 0..cube_count(dim, depth).unwrap() {
                let x = Word::from_index(dim, depth, idx).unwrap();
                let tm = TaggedMeasure::new(mu.clone(), x.clone()).unwrap();
                let m = magnify(&tm).unwrap();
                assert_eq!(m.x, x.shift(1));
                assert!(m.mu.leafwise_eq(&mu.conditional(&x.prefix(1)).unwrap(), 0.0));
                let m3 = magnify(&magnify(&m).unwrap()).unwrap();
                assert!(m3.mu.leafwise_eq(&magnify_n(&tm, 3).unwrap().mu, 1e-12));
            }
        }
    }

    #[test]
    fn magnify_errors() {
        let mu = DyadicMeasure::new(1, 1, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            magnify(&TaggedMeasure::new(mu.clone(), word(&[1])).unwrap()),
            Err(Error::ConditionOnNull(_))
        ));
        assert!(matches!(
            magnify(&TaggedMeasure::new(mu, word(&[])).unwrap()),
            Err(Error::ResolutionExceeded(_))
        ));
    }

    #[test]
    fn hand_cp_scenery() {
        let m = vec![0.05, 0.1, 0.15, 0.2, 0.1, 0.1, 0.2, 0.1];
        let mu = DyadicMeasure::new(1, 3, m).unwrap();
        let q = cp_scenery(&mu, &word(&[0, 1, 1]), 2, 1).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.atoms()[0].0, 0.5);
        assert!(q.atoms()[0].1.mu.leafwise_eq(&mu.coarsen(2).unwrap(), 1e-15));
        let first = &q.atoms()[1].1;
        assert_eq!(first.x, word(&[1, 1]));
        let expect = [0.1, 0.2, 0.3, 0.4];
        assert!(first.mu.masses().iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn bernoulli_cp_scenery_marginal_is_one_atom() {
        let mu = DyadicMeasure::coin(0.3, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let leaf = mu.leaf_sampler().unwrap().sample(&mut rng);
        let x = Word::from_index(1, 12, leaf).unwrap();
        for n in [1, 3, 8] {
            let q = cp_scenery(&mu, &x, n, 4).unwrap();
            assert_eq!(q.marginal().len(), 1);
        }
    }

    #[test]
    fn telescoping_on_orbit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = oracle::random_measure(&mut rng, 1, 12);
        let leaf = mu.leaf_sampler().unwrap().sample(&mut rng);
        let x = Word::from_index(1, 12, leaf).unwrap();
        for n in [2, 4, 8] {
            let q = cp_scenery(&mu, &x, n, 3).unwrap();
            let d = check_m_invariance(&q, 3).unwrap();
            assert!(d <= telescoping_bound(n) + 1e-9, "{n}: {d}");
        }
    }

    #[test]
    fn lebesgue_intensity_checks() {
        let l = EmpiricalDistribution::dirac(DyadicMeasure::lebesgue(2, 4).unwrap(), 4).unwrap();
        assert_eq!(check_intensity_lebesgue(&l, 3).unwrap(), 0.0);
        let a = 0.8;
        let mix = EmpiricalDistribution::new(
            vec![(0.5, DyadicMeasure::coin(a, 4).unwrap()), (0.5, DyadicMeasure::coin(1.0 - a, 4).unwrap())],
            4,
        )
        .unwrap();
        assert!(check_intensity_lebesgue(&mix, 1).unwrap() < 1e-15);
        let level2 = check_intensity_lebesgue(&mix, 2).unwrap();
        assert!((level2 - (0.5 * (a * a + (1.0 - a) * (1.0 - a)) - 0.25).abs()).abs() < 1e-15);
    }

    #[test]
    fn extended_lebesgue_is_lebesgue_on_b2() {
        let tm = TaggedMeasure::new(DyadicMeasure::lebesgue(2, 6).unwrap(), Word::new(2, vec![1, 2, 3, 0]).unwrap()).unwrap();
        let e = extended_sample(&tm, 2).unwrap().unwrap();
        assert_eq!(e.measure.support_half_width(), 2);
        let flat = 1.0 / e.measure.leaf_count() as f64;
        assert!(e.measure.masses().iter().all(|&m| (m - flat).abs() < 1e-15));
        assert_eq!(e.word.len(), 2);
    }

    #[test]
    fn extended_restriction_matches_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mu = oracle::random_measure(&mut rng, 1, 9);
        let n = 3;
        for idx in 0..(1 << 9) {
            let x = Word::from_index(1, 9, idx).unwrap();
            let tm = TaggedMeasure::new(mu.clone(), x.clone()).unwrap();
            match extended_sample(&tm, n).unwrap() {
                None => assert!(x.digits()[..n].iter().all(|&g| g == 0) || x.digits()[..n].iter().all(|&g| g == 1)),
                Some(e) => {
                    let side = 1 << (9 - n);
                    let inner = &e.measure.masses()[side / 2..side / 2 + side];
                    let s: f64 = inner.iter().sum();
                    let cond = mu.conditional(&x.prefix(n)).unwrap();
                    assert!(inner.iter().zip(cond.masses()).all(|(a, b)| (a / s - b).abs() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn extended_window_in_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = oracle::random_measure(&mut rng, 2, 5);
        let x = Word::new(2, vec![1, 2, 0, 3, 1]).unwrap();
        let e = extend(&mu, &x, 2).unwrap().unwrap();
        let cube = digits_to_grid(2, &x.digits()[..2]);
        let per = 1u64 << 3;
        let mut direct = Vec::new();
        for idx in 0..cube_count(2, 4).unwrap() {
            let w = Word::from_index(2, 4, idx).unwrap();
            let g: Vec<u64> = digits_to_grid(2, w.digits()).iter().zip(&cube).map(|(a, c)| a + c * per - per / 2).collect();
            direct.push(mu.masses()[grid_to_index(2, 5, &g)]);
        }
        let s: f64 = direct.iter().sum();
        assert!(e.measure.masses().iter().zip(&direct).all(|(a, b)| (a - b / s).abs() < 1e-15));
    }

    #[test]
    fn rejection_volume() {
        assert_eq!(rejection_probability(1, 3), 0.25);
        assert!((rejection_probability(2, 2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn adapted_sampling_is_seeded() {
        let q = EmpiricalDistribution::dirac(DyadicMeasure::coin(0.3, 8).unwrap(), 4).unwrap();
        let a = sample_adapted(&q, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_adapted(&q, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forced_point_is_not_adapted() {
        let mu = DyadicMeasure::lebesgue(1, 6).unwrap();
        let forced = EmpiricalDistribution::dirac(TaggedMeasure::new(mu, word(&[0; 6])).unwrap(), 3).unwrap();
        let d = check_adapted(&forced, 200, 5, 3, Exec::Sequential).unwrap();
        assert!(d > 0.5, "{d}");
    }
}
