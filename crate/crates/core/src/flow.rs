//! The scenery flow and centering of CP distributions.

use std::f64::consts::LN_2;

use rand::Rng;

use crate::cp::{extend, point_in_word};
use crate::distribution::{EmpiricalDistribution, TaggedMeasure};
use crate::dyadic::Word;
use crate::error::{Error, Result};
use crate::measure::{translate_scale, translate_zoom, DyadicMeasure, LeafSampler};
use crate::metric::distribution_distance_with;
use crate::par::{self, Exec};

/// `μ_{x,t} = S_t^□ T_x μ` at depth `p`.
pub fn scenery(mu: &DyadicMeasure, x: &[f64], t: f64, p: usize) -> Result<DyadicMeasure> {
    translate_scale(mu, x, t, p)
}

/// `⟨μ⟩_{x,T}` by the midpoint rule `t_j = (j + ½) T / steps`.
pub fn scenery_distribution(
    mu: &DyadicMeasure,
    x: &[f64],
    horizon: f64,
    steps: usize,
    p: usize,
) -> Result<EmpiricalDistribution<DyadicMeasure>> {
    scenery_distribution_with(mu, x, horizon, steps, p, Exec::default())
}

pub fn scenery_distribution_with(
    mu: &DyadicMeasure,
    x: &[f64],
    horizon: f64,
    steps: usize,
    p: usize,
    exec: Exec,
) -> Result<EmpiricalDistribution<DyadicMeasure>> {
    if steps == 0 || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("need steps ≥ 1 and a finite T ≥ 0, got {steps} and {horizon}")));
    }
    let atoms = par::map_range(exec, steps, |j| {
        scenery(mu, x, (j as f64 + 0.5) * horizon / steps as f64, p)
    });
    let atoms = atoms.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalDistribution::uniform(atoms, p)?.merged())
}

/// `⟨μ⟩_{x,T}` for each horizon in turn.
pub fn tangent_distribution_probe(
    mu: &DyadicMeasure,
    x: &[f64],
    horizons: &[f64],
    steps: usize,
    p: usize,
    exec: Exec,
) -> Result<Vec<EmpiricalDistribution<DyadicMeasure>>> {
    horizons
        .iter()
        .map(|&t| scenery_distribution_with(mu, x, t, steps, p, exec))
        .collect()
}

/// Distances between consecutive entries of a probe.
pub fn successive_distances(
    probe: &[EmpiricalDistribution<DyadicMeasure>],
    p: usize,
    exec: Exec,
) -> Result<Vec<f64>> {
    probe
        .windows(2)
        .map(|w| distribution_distance_with(&w[0], &w[1], p, exec))
        .collect()
}

/// Where centering takes its pairs from.
#[derive(Debug, Clone, Copy)]
pub enum CenterInput<'a> {
    /// A distribution on measure–point pairs.
    Tagged(&'a EmpiricalDistribution<TaggedMeasure>),
    /// A measure marginal; points are drawn fresh from each chosen measure.
    Adapted(&'a EmpiricalDistribution<DyadicMeasure>),
}

#[derive(Debug, Clone)]
pub struct Centered {
    pub distribution: EmpiricalDistribution<DyadicMeasure>,
    pub samples: usize,
    pub rejected: usize,
}

impl Centered {
    pub fn rejection_rate(&self) -> f64 {
        self.rejected as f64 / self.samples as f64
    }
}

/// `cent(Q) = C(Q × λ)` by Monte Carlo.
///
/// Each sample takes a pair, extends it to `B₂` at level `n`, places the
/// point uniformly in its remaining cube, draws `t` uniform on `[0, log 2)`
/// and emits `S_t^□ T_x ν^◇` at depth `p`. Rejected pairs are counted and dropped.
pub fn center(input: CenterInput<'_>, n: usize, samples: usize, seed: u64, p: usize, exec: Exec) -> Result<Centered> {
    if samples == 0 {
        return Err(Error::Domain("centering needs at least one sample".into()));
    }
    let weights: Vec<f64> = match input {
        CenterInput::Tagged(q) => q.atoms().iter().map(|(w, _)| *w).collect(),
        CenterInput::Adapted(q) => q.atoms().iter().map(|(w, _)| *w).collect(),
    };
    let pick = LeafSampler::new(&weights)?;
    let leaves = match input {
        CenterInput::Tagged(_) => Vec::new(),
        CenterInput::Adapted(q) => q.atoms().iter().map(|(_, m)| m.leaf_sampler()).collect::<Result<Vec<_>>>()?,
    };
    let draws = par::map_range(exec, samples, |s| -> Result<Option<DyadicMeasure>> {
        let mut rng = par::stream_rng(seed, s as u64);
        let i = pick.sample(&mut rng);
        let extended = match input {
            CenterInput::Tagged(q) => {
                let tm = &q.atoms()[i].1;
                extend(&tm.mu, &tm.x, n)?
            }
            CenterInput::Adapted(q) => {
                let mu = &q.atoms()[i].1;
                let x = Word::from_index(mu.dim(), mu.depth(), leaves[i].sample(&mut rng))?;
                extend(mu, &x, n)?
            }
        };
        let Some(e) = extended else { return Ok(None) };
        let point = point_in_word(&e.word, &mut rng);
        let t = rng.gen::<f64>() * LN_2;
        translate_zoom(&e.measure, &point, (-t).exp(), p).map(Some)
    });
    let mut atoms = Vec::with_capacity(samples);
    let mut rejected = 0;
    for d in draws {
        match d? {
            Some(m) => atoms.push(m),
            None => rejected += 1,
        }
    }
    if atoms.is_empty() {
        return Err(Error::EmptyOutput(format!("all {samples} centering samples were rejected")));
    }
    Ok(Centered {
        distribution: EmpiricalDistribution::uniform(atoms, p)?.merged(),
        samples,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{cp_scenery, rejection_probability};
    use crate::metric::measure_distance;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lebesgue_scenery_is_lebesgue() {
        let l = DyadicMeasure::lebesgue(2, 10).unwrap();
        let s = scenery(&l, &[0.3, -0.2], 1.0, 4).unwrap();
        assert!(s.leafwise_eq(&DyadicMeasure::lebesgue(2, 4).unwrap(), 1e-14));
        let q = scenery_distribution(&l, &[0.1, 0.1], 2.0, 8, 3).unwrap();
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn zero_time_at_origin_is_the_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = oracle::random_measure(&mut rng, 1, 8);
        let s = scenery(&mu, &[0.0], 0.0, 5).unwrap();
        assert!(s.leafwise_eq(&mu.coarsen(5).unwrap(), 1e-14));
    }

    #[test]
    fn single_step_is_the_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mu = oracle::random_measure(&mut rng, 1, 12);
        let q = scenery_distribution(&mu, &[0.2], 3.0, 1, 4).unwrap();
        assert_eq!(q.len(), 1);
        assert!(q.atoms()[0].1.leafwise_eq(&scenery(&mu, &[0.2], 1.5, 4).unwrap(), 0.0));
    }

    #[test]
    fn budget_is_enforced() {
        let mu = DyadicMeasure::lebesgue(1, 6).unwrap();
        assert!(matches!(scenery(&mu, &[0.0], 4.0, 4), Err(Error::ResolutionExceeded(_))));
    }

    #[test]
    fn centered_lebesgue_is_lebesgue() {
        let q = EmpiricalDistribution::dirac(DyadicMeasure::lebesgue(1, 12).unwrap(), 4).unwrap();
        let c = center(CenterInput::Adapted(&q), 3, 2000, 7, 4, Exec::Sequential).unwrap();
        assert_eq!(c.distribution.len(), 1);
        assert!(c.distribution.atoms()[0].1.leafwise_eq(&DyadicMeasure::lebesgue(1, 4).unwrap(), 1e-12));
        let sigma = (0.25f64 * 0.75 / 2000.0).sqrt();
        assert!((c.rejection_rate() - rejection_probability(1, 3)).abs() < 4.0 * sigma);
    }

    #[test]
    fn centering_a_cp_scenery_runs() {
        let mu = DyadicMeasure::coin(0.7, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Word::from_index(1, 14, mu.leaf_sampler().unwrap().sample(&mut rng)).unwrap();
        let q = cp_scenery(&mu, &x, 4, 4).unwrap();
        let c = center(CenterInput::Tagged(&q), 3, 200, 1, 4, Exec::Sequential).unwrap();
        assert!(c.samples == 200 && c.rejected < 200);
        for (_, m) in c.distribution.atoms() {
            assert!((m.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_rejected_is_an_error() {
        let tm = TaggedMeasure::new(DyadicMeasure::lebesgue(1, 8).unwrap(), Word::new(1, vec![0; 8]).unwrap()).unwrap();
        let q = EmpiricalDistribution::dirac(tm, 4).unwrap();
        assert!(matches!(
            center(CenterInput::Tagged(&q), 3, 10, 0, 4, Exec::Sequential),
            Err(Error::EmptyOutput(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn flow_composes_up_to_resolution(seed in 0u64..10_000, s in 0.1f64..1.0, t in 0.1f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = oracle::random_measure(&mut rng, 1, 14);
            let x = rng.gen_range(-0.2..0.2);
            let direct = scenery(&mu, &[x], s + t, 5).unwrap();
            let first = scenery(&mu, &[x], s, 10).unwrap();
            let composed = scenery(&first, &[0.0], t, 5).unwrap();
            let d = measure_distance(&direct, &composed, 5).unwrap();
            prop_assert!(d <= 2.0 * 2f64.powi(-5) + 1e-9, "{}", d);
        }
    }
}
