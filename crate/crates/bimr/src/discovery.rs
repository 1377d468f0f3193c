//! Step I: cluster-fusion search for valid instrument sets.
//!
//! Seeding scans all candidate pairs for the one whose two leave-one-out
//! pseudo-residual correlations are jointly smallest, among pairs that pass
//! the valid-set test. The seed then grows greedily: candidates whose
//! addition keeps the set passing are ranked by their correlation with the
//! current pseudo-residual, and the smallest joins. A second cluster is
//! sought among the remaining variants; if fusing it with the first cluster
//! still passes the test, the two belong to the same causal direction and
//! merge (configurable), otherwise it is kept as the opposite-direction set.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{pseudo_residual_correlation, valid_set_test, DEFAULT_TOLERANCE};

/// Knobs for [`find_valid_iv_sets`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    /// Significance level for the Pearson correlation test.
    pub alpha: f64,
    /// Maximum instruments per set (W). Effectively `min(max_set_size, g)`.
    pub max_set_size: usize,
    /// Merge a newly grown set into an existing one when their union still
    /// passes the valid-set test; keep it separate otherwise. When false,
    /// a passing union discards the new set instead.
    pub merge_same_direction: bool,
    /// Numerical zero threshold for degenerate-moment guards.
    pub tolerance: f64,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            max_set_size: 10,
            merge_same_direction: true,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.max_set_size < 2 {
            return Err(Error::InvalidParams(
                "max_set_size must be at least 2".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParams("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Discovered valid instrument sets: at most two, pairwise disjoint, each of
/// size at least two, indices sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IVSetCollection {
    pub sets: Vec<Vec<usize>>,
}

impl IVSetCollection {
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// All member variants across sets, sorted.
    pub fn all_variants(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.sets.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn validate(&self, g: usize) -> Result<()> {
        let mut seen = vec![false; g];
        for set in &self.sets {
            if set.len() < 2 {
                return Err(Error::InvalidSubset(
                    "each discovered set needs at least two variants".into(),
                ));
            }
            for &j in set {
                if j >= g {
                    return Err(Error::IndexOutOfRange {
                        index: j,
                        num_variants: g,
                    });
                }
                if seen[j] {
                    return Err(Error::InvalidSubset(
                        "discovered sets must be pairwise disjoint".into(),
                    ));
                }
                seen[j] = true;
            }
        }
        Ok(())
    }
}

/// Scored candidate seed pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedScore {
    pub pair: (usize, usize),
    /// `|corr(PR_{j}, G_i)| + |corr(PR_{i}, G_j)|`.
    pub score: f64,
}

/// One growth step of a set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthStep {
    pub set: Vec<usize>,
    pub added_variant: usize,
    pub correlation: f64,
}

/// Outcome of fusing a grown set with a kept set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionDecision {
    pub set_a: Vec<usize>,
    pub set_b: Vec<usize>,
    pub merged: bool,
}

/// Decision log of one discovery run, serializable for the CLI `--trace`
/// flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DiscoveryTrace {
    pub seed_pairs_considered: Vec<SeedScore>,
    pub growth_steps: Vec<GrowthStep>,
    pub fusion_decisions: Vec<FusionDecision>,
}

/// Sum of the two leave-one-out pseudo-residual correlation magnitudes for
/// the pair `(i, j)`. `None` when either TSLS is degenerate.
fn pair_score(ds: &Dataset, i: usize, j: usize) -> Option<f64> {
    let a = pseudo_residual_correlation(ds, &[j], i).ok()?;
    let b = pseudo_residual_correlation(ds, &[i], j).ok()?;
    Some(a.abs() + b.abs())
}

/// Finds the seed pair among `candidates`: the pair with the smallest
/// summed leave-one-out correlation magnitude, provided at least one pair
/// passes the valid-set test at level `alpha`. Ties break toward lower
/// indices. `None` when no pair passes, which ends the search.
///
/// Seeding by score rather than by the test outcome keeps a true pair whose
/// test statistic landed in the alpha tail; the test itself still decides
/// whether any candidate cluster exists at all.
pub fn seed_pair(ds: &Dataset, candidates: &[usize], alpha: f64) -> Option<(usize, usize)> {
    seed_pair_traced(ds, candidates, alpha, None)
}

fn seed_pair_traced(
    ds: &Dataset,
    candidates: &[usize],
    alpha: f64,
    mut trace: Option<&mut DiscoveryTrace>,
) -> Option<(usize, usize)> {
    let mut scored: Vec<SeedScore> = Vec::new();
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            if let Some(score) = pair_score(ds, i, j) {
                scored.push(SeedScore { pair: (i, j), score });
            }
        }
    }
    if let Some(t) = trace.as_deref_mut() {
        t.seed_pairs_considered.extend(scored.iter().cloned());
    }
    scored.sort_by(|p, q| {
        p.score
            .partial_cmp(&q.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p.pair.cmp(&q.pair))
    });
    let any_pass = scored
        .iter()
        .any(|s| valid_set_test(ds, &[s.pair.0, s.pair.1], alpha).unwrap_or(false));
    if !any_pass {
        return None;
    }
    scored.first().map(|s| s.pair)
}

/// Greedily grows `seed` from `candidates`, keeping the set passing the
/// valid-set test, until no candidate survives or the set reaches `w`.
pub fn grow_valid_set(
    ds: &Dataset,
    seed: &[usize],
    candidates: &[usize],
    alpha: f64,
    w: usize,
) -> Vec<usize> {
    grow_valid_set_traced(ds, seed, candidates, alpha, w, None)
}

fn grow_valid_set_traced(
    ds: &Dataset,
    seed: &[usize],
    candidates: &[usize],
    alpha: f64,
    w: usize,
    mut trace: Option<&mut DiscoveryTrace>,
) -> Vec<usize> {
    let mut current = seed.to_vec();
    current.sort_unstable();
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|k| !current.contains(k))
        .collect();
    while current.len() < w && !pool.is_empty() {
        // Survivors: candidates whose addition still passes the test.
        let mut best: Option<(f64, usize)> = None;
        for &k in &pool {
            let mut extended = current.clone();
            extended.push(k);
            extended.sort_unstable();
            if !valid_set_test(ds, &extended, alpha).unwrap_or(false) {
                continue;
            }
            let r = match pseudo_residual_correlation(ds, &current, k) {
                Ok(r) => r.abs(),
                Err(_) => continue,
            };
            let better = match best {
                None => true,
                Some((b, bk)) => r < b || (r == b && k < bk),
            };
            if better {
                best = Some((r, k));
            }
        }
        match best {
            Some((r, k)) => {
                if let Some(t) = trace.as_deref_mut() {
                    t.growth_steps.push(GrowthStep {
                        set: current.clone(),
                        added_variant: k,
                        correlation: r,
                    });
                }
                current.push(k);
                current.sort_unstable();
                pool.retain(|&c| c != k);
            }
            None => break,
        }
    }
    current
}

/// Step I entry point: discovers at most two disjoint valid instrument sets.
///
/// An empty collection is a legal outcome meaning no identifiable valid set
/// was found at the configured level.
pub fn find_valid_iv_sets(ds: &Dataset, config: &DiscoveryConfig) -> (IVSetCollection, DiscoveryTrace) {
    let mut trace = DiscoveryTrace::default();
    let mut collection = IVSetCollection::default();
    if config.validate().is_err() {
        return (collection, trace);
    }
    let w = config.max_set_size.min(ds.g());
    let mut candidates: Vec<usize> = (0..ds.g()).collect();

    while collection.sets.len() < 2 && candidates.len() > 1 {
        let Some((i, j)) = seed_pair_traced(ds, &candidates, config.alpha, Some(&mut trace)) else {
            break;
        };
        let grown = grow_valid_set_traced(ds, &[i, j], &candidates, config.alpha, w, Some(&mut trace));
        candidates.retain(|c| !grown.contains(c));
        if collection.sets.is_empty() {
            collection.sets.push(grown);
            continue;
        }
        let first = collection.sets[0].clone();
        let mut fused: Vec<usize> = first.iter().copied().chain(grown.iter().copied()).collect();
        fused.sort_unstable();
        let union_passes = valid_set_test(ds, &fused, config.alpha).unwrap_or(false);
        trace.fusion_decisions.push(FusionDecision {
            set_a: first,
            set_b: grown.clone(),
            merged: union_passes && config.merge_same_direction,
        });
        if union_passes {
            if config.merge_same_direction {
                collection.sets[0] = fused;
            }
            // Otherwise the grown set is discarded; its variants stay out of
            // the pool either way.
        } else {
            collection.sets.push(grown);
        }
    }
    (collection, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::pearson_correlation;
    use crate::model::fixtures::reference_params;
    use crate::simulator::generate_from_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_from_params(&reference_params(), n, &mut rng).unwrap()
    }

    #[test]
    fn seed_pair_finds_the_valid_pair() {
        let ds = reference_dataset(20_000, 42);
        let pair = seed_pair(&ds, &[0, 1, 2, 3, 4], 0.05);
        assert_eq!(pair, Some((0, 2)));
    }

    #[test]
    fn seed_pair_two_valid_candidates_only() {
        let ds = reference_dataset(20_000, 43);
        assert_eq!(seed_pair(&ds, &[0, 2], 0.05), Some((0, 2)));
    }

    /// Independent scoring route: materialized residuals from the covariance
    /// ratio estimator, correlations from `pearson_correlation` directly.
    fn brute_force_scores(ds: &Dataset, candidates: &[usize]) -> Vec<((usize, usize), f64)> {
        let ratio_slope = |j: usize| -> f64 {
            let gj = ds.genotype(j);
            let sy: f64 = gj.iter().zip(ds.y()).map(|(a, b)| a * b).sum();
            let sx: f64 = gj.iter().zip(ds.x()).map(|(a, b)| a * b).sum();
            sy / sx
        };
        let mut out = Vec::new();
        for (a, &i) in candidates.iter().enumerate() {
            for &j in &candidates[a + 1..] {
                let wi = ratio_slope(i);
                let wj = ratio_slope(j);
                let pr_i: Vec<f64> = ds.y().iter().zip(ds.x()).map(|(&y, &x)| y - wi * x).collect();
                let pr_j: Vec<f64> = ds.y().iter().zip(ds.x()).map(|(&y, &x)| y - wj * x).collect();
                let score = pearson_correlation(&pr_j, ds.genotype(i)).unwrap().abs()
                    + pearson_correlation(&pr_i, ds.genotype(j)).unwrap().abs();
                out.push(((i, j), score));
            }
        }
        out
    }

    #[test]
    fn seed_pair_matches_brute_force_enumeration() {
        let ds = reference_dataset(10_000, 44);
        let candidates: Vec<usize> = (0..5).collect();
        let chosen = seed_pair(&ds, &candidates, 0.05).expect("a pair must pass");
        let scores = brute_force_scores(&ds, &candidates);
        let (best_pair, best_score) = scores
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .copied()
            .unwrap();
        assert_eq!(chosen, best_pair);
        // The singleton TSLS slope is the covariance ratio, so the scores of
        // the two routes agree numerically as well.
        let ours = pair_score(&ds, chosen.0, chosen.1).unwrap();
        assert!((ours - best_score).abs() < 1e-10);
    }

    #[test]
    fn grow_keeps_seed_when_candidates_invalid() {
        let ds = reference_dataset(20_000, 45);
        let grown = grow_valid_set(&ds, &[0, 2], &[1, 3, 4], 0.05, 5);
        assert_eq!(grown, vec![0, 2]);
    }

    #[test]
    fn grow_respects_the_size_cap() {
        let ds = reference_dataset(2_000, 46);
        let grown = grow_valid_set(&ds, &[0, 2], &[1, 3, 4], 0.05, 2);
        assert_eq!(grown, vec![0, 2]);
    }

    #[test]
    fn discovery_on_reference_model_finds_exactly_the_valid_pair() {
        let ds = reference_dataset(20_000, 47);
        let (coll, trace) = find_valid_iv_sets(&ds, &DiscoveryConfig::default());
        assert_eq!(coll.sets, vec![vec![0, 2]]);
        assert!(!trace.seed_pairs_considered.is_empty());
    }

    #[test]
    fn discovery_all_invalid_returns_empty() {
        // Two pleiotropic variants with non-proportional effects.
        let params = crate::model::ModelParams {
            beta_xy: 0.6,
            beta_yx: 0.0,
            gamma_x: vec![1.0, 0.8],
            gamma_y: vec![0.7, -0.6],
            gamma_u: vec![0.0, 0.0],
            gamma_xu: 1.0,
            gamma_yu: 1.0,
            variant_variances: vec![0.5, 0.5],
            noise_variances: [1.0, 1.0, 1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let ds = generate_from_params(&params, 20_000, &mut rng).unwrap();
        let (coll, _) = find_valid_iv_sets(&ds, &DiscoveryConfig::default());
        assert!(coll.is_empty());
    }

    /// Proportional pleiotropic effects defeat the test: the non-generic
    /// geometry where an invalid pair looks valid.
    #[test]
    fn discovery_accepts_proportional_counterexample() {
        let params = crate::model::ModelParams {
            beta_xy: 0.6,
            beta_yx: 0.6,
            gamma_x: vec![1.0, 2.0],
            gamma_y: vec![0.5, 1.0],
            gamma_u: vec![0.0, 0.0],
            gamma_xu: 1.0,
            gamma_yu: 1.0,
            variant_variances: vec![0.5, 0.5],
            noise_variances: [1.0, 1.0, 1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let ds = generate_from_params(&params, 20_000, &mut rng).unwrap();
        // gamma_x[0]*gamma_y[1] == gamma_y[0]*gamma_x[1], so the pair passes
        // despite both variants being pleiotropic.
        assert!(valid_set_test(&ds, &[0, 1], 0.01).unwrap());
    }

    #[test]
    fn collection_validation_rejects_overlap() {
        let coll = IVSetCollection {
            sets: vec![vec![0, 1], vec![1, 2]],
        };
        assert!(coll.validate(4).is_err());
    }
}
