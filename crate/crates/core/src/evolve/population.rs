use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EvolveError, Individual};

/// Evaluated members, ascending by fitness (ties: older first).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub members: Vec<Individual>,
    pub capacity: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    pub fn fitnesses(&self) -> Vec<f64> {
        self.members.iter().map(Individual::score).collect()
    }
}

/// `p_i ∝ 1 / (r_i + N)` for ranks `r_i = 1..=N` of a sorted population.
pub fn parent_probabilities(n: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|r| 1.0 / (r + n) as f64).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding left u at the top edge
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Rank-weighted parent draw: without replacement when the population holds
/// at least `m` members, with replacement otherwise. Unevaluated members are
/// never chosen.
pub fn sample_parents<'a>(
    pop: &'a [Individual],
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<&'a Individual>, EvolveError> {
    let mut ranked: Vec<&Individual> = pop.iter().filter(|i| i.fitness.is_some()).collect();
    if ranked.is_empty() {
        return Err(EvolveError::EmptyPopulation);
    }
    ranked.sort_by(|a, b| a.score().total_cmp(&b.score()).then(a.id.cmp(&b.id)));
    let mut weights = parent_probabilities(ranked.len());
    let replace = ranked.len() < m;
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let i = draw(&weights, rng);
        out.push(ranked[i]);
        if !replace {
            weights[i] = 0.0;
        }
    }
    Ok(out)
}

/// Keeps the `n` fittest of `pool`; equal fitness favours the older id.
pub fn select_survivors(mut pool: Vec<Individual>, n: usize) -> Population {
    pool.retain(|i| i.fitness.is_some_and(f64::is_finite));
    pool.sort_by(|a, b| a.score().total_cmp(&b.score()).then(a.id.cmp(&b.id)));
    pool.truncate(n);
    Population { members: pool, capacity: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{Lineage, Operator, Stage};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ind(id: u64, fitness: Option<f64>) -> Individual {
        let mut i = Individual::new(
            id,
            "t".into(),
            format!("c{id}"),
            Stage::LogitsComputation,
            Lineage { parents: vec![], operator: Operator::Init },
        );
        i.fitness = fitness;
        i
    }

    #[test]
    fn ratio_of_extremes() {
        let p = parent_probabilities(10);
        assert!((p[0] / p[9] - 20.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = [ind(0, Some(0.3))];
        let got = sample_parents(&pop, 2, &mut rng).unwrap();
        assert_eq!(got.iter().map(|i| i.id).collect::<Vec<_>>(), [0, 0]);
        assert!(matches!(
            sample_parents(&[ind(1, None)], 1, &mut rng),
            Err(EvolveError::EmptyPopulation)
        ));
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop: Vec<_> = (0..3).map(|i| ind(i, Some(i as f64 / 10.0))).collect();
        for _ in 0..200 {
            let got = sample_parents(&pop, 2, &mut rng).unwrap();
            assert_ne!(got[0].id, got[1].id);
        }
    }

    #[test]
    fn survivors_order_and_ties() {
        let pool: Vec<_> = (0..15).map(|i| ind(i, Some(((i * 7) % 15) as f64 / 15.0))).collect();
        let pop = select_survivors(pool.clone(), 10);
        assert_eq!(pop.len(), 10);
        let worst_kept = pop.members.last().unwrap().score();
        let kept: Vec<u64> = pop.members.iter().map(|i| i.id).collect();
        assert!(pool.iter().filter(|i| !kept.contains(&i.id)).all(|i| i.score() >= worst_kept));

        let tied: Vec<_> = (0..15).rev().map(|i| ind(i, Some(0.5))).collect();
        let pop = select_survivors(tied, 10);
        assert_eq!(pop.members.iter().map(|i| i.id).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());

        assert_eq!(select_survivors(pool[..4].to_vec(), 10).len(), 4);
    }
}
