//! Planted-precursor dynamic graphs.
//!
//! Every sample draws its snapshots over `N` nodes from a `G(N, p)` background.
//! A vocabulary of `N` words is shared by all samples; each sample assigns the
//! words to its nodes by a random permutation, and the nodes holding words
//! `0..m` form the motif. In a positive sample the motif's internal edges
//! accumulate over the final snapshots following the growth schedule, ending
//! in a dense cluster on the last day.
//!
//! With `decoy_negatives` the negatives receive the same motif edges in reverse
//! time order (dense first, dissolving towards the end), so the union of all
//! snapshots is statistically identical across labels and only the temporal
//! order separates the classes. Otherwise negatives are background only.
//!
//! Motif words carry a feature offset of alternating sign along the first
//! embedding coordinate on top of `U(-0.1, 0.1)` noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embeddings::random_matrix;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::graph::{DynamicGraphSample, SparseAdjacency};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub steps: usize,
    pub embed_dim: usize,
    pub edge_prob: f64,
    pub motif_size: usize,
    /// Motif edges added at each snapshot of a positive; `None` ramps to a full
    /// clique over the final snapshots.
    pub growth: Option<Vec<usize>>,
    pub positive_fraction: f64,
    pub samples: usize,
    pub feature_offset: f64,
    pub decoy_negatives: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 30,
            steps: 5,
            embed_dim: 100,
            edge_prob: 0.05,
            motif_size: 6,
            growth: None,
            positive_fraction: 0.5,
            samples: 400,
            feature_offset: 1.0,
            decoy_negatives: false,
            seed: 0,
        }
    }
}

/// Spreads `C(m, 2)` edges over the last `min(3, steps)` snapshots, earlier
/// snapshots of that ramp taking any remainder.
pub fn default_growth(motif_size: usize, steps: usize) -> Vec<usize> {
    let total = motif_size * motif_size.saturating_sub(1) / 2;
    let ramp = steps.min(3);
    let mut g = vec![0; steps];
    for (k, slot) in g[steps - ramp..].iter_mut().enumerate() {
        *slot = total / ramp + usize::from(k < total % ramp);
    }
    g
}

impl SyntheticSpec {
    pub fn growth_schedule(&self) -> Vec<usize> {
        self.growth
            .clone()
            .unwrap_or_else(|| default_growth(self.motif_size, self.steps))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.steps == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "num_nodes, steps and embed_dim must be positive".into(),
            ));
        }
        if self.motif_size > self.num_nodes {
            return Err(Error::Config(format!(
                "motif larger than graph ({} > {})",
                self.motif_size, self.num_nodes
            )));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::Config(format!(
                "edge_prob {} outside [0, 1]",
                self.edge_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return Err(Error::Config(format!(
                "positive_fraction {} outside [0, 1]",
                self.positive_fraction
            )));
        }
        if !self.feature_offset.is_finite() {
            return Err(Error::Config("feature_offset must be finite".into()));
        }
        let growth = self.growth_schedule();
        if growth.len() != self.steps {
            return Err(Error::Config(format!(
                "growth schedule has {} entries for {} snapshots",
                growth.len(),
                self.steps
            )));
        }
        let pairs = self.motif_size * self.motif_size.saturating_sub(1) / 2;
        if growth.iter().sum::<usize>() > pairs {
            return Err(Error::Config(format!(
                "growth schedule adds more than the {pairs} motif edges"
            )));
        }
        Ok(())
    }
}

pub struct SyntheticData {
    pub samples: Vec<DynamicGraphSample>,
    /// Shared `N × d` word-embedding table indexed by `node_vocab_ids`.
    pub table: Matrix,
}

/// Vocabulary ids of the motif words.
pub fn motif_words(spec: &SyntheticSpec) -> std::ops::Range<usize> {
    0..spec.motif_size
}

fn feature_table(spec: &SyntheticSpec) -> Matrix {
    let mut table = random_matrix(spec.num_nodes, spec.embed_dim, spec.seed);
    for k in motif_words(spec) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let v = table.get(k, 0) + sign * spec.feature_offset;
        table.set(k, 0, v);
    }
    table
}

fn cumulative(growth: &[usize]) -> Vec<usize> {
    growth
        .iter()
        .scan(0, |acc, &g| {
            *acc += g;
            Some(*acc)
        })
        .collect()
}

fn generate_one(spec: &SyntheticSpec, index: usize, label: u8) -> Result<DynamicGraphSample> {
    let n = spec.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);

    let mut vocab_ids: Vec<usize> = (0..n).collect();
    vocab_ids.shuffle(&mut rng);
    let mut motif: Vec<usize> = (0..n).filter(|&i| vocab_ids[i] < spec.motif_size).collect();
    motif.sort_unstable_by_key(|&i| vocab_ids[i]);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for a in 0..motif.len() {
        for b in a + 1..motif.len() {
            pairs.push((motif[a], motif[b]));
        }
    }
    pairs.shuffle(&mut rng);

    let cum = cumulative(&spec.growth_schedule());
    let motif_edges: Vec<usize> = match (label, spec.decoy_negatives) {
        (1, _) => cum,
        (_, true) => cum.iter().rev().copied().collect(),
        (_, false) => vec![0; spec.steps],
    };

    let snapshots = motif_edges
        .iter()
        .map(|&k| {
            let mut edges: Vec<(usize, usize)> = pairs[..k].to_vec();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(spec.edge_prob) {
                        edges.push((u, v));
                    }
                }
            }
            SparseAdjacency::from_pairs_dedup(n, edges)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DynamicGraphSample {
        sample_id: format!("syn-{index:05}"),
        num_nodes: n,
        snapshots,
        node_vocab_ids: vocab_ids,
        label,
    })
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let positives = (spec.samples as f64 * spec.positive_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..spec.samples).map(|i| u8::from(i < positives)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(u64::MAX);
    labels.shuffle(&mut rng);
    let samples = labels
        .par_iter()
        .enumerate()
        .map(|(i, &y)| generate_one(spec, i, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData {
        samples,
        table: feature_table(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            samples: 40,
            embed_dim: 4,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn default_growth_ramps_to_clique() {
        assert_eq!(default_growth(6, 5), vec![0, 0, 5, 5, 5]);
        assert_eq!(default_growth(4, 2), vec![3, 3]);
        assert_eq!(default_growth(5, 4), vec![0, 4, 3, 3]);
        assert_eq!(default_growth(1, 3), vec![0, 0, 0]);
    }

    #[test]
    fn rejects_infeasible_specs() {
        let e = SyntheticSpec {
            motif_size: 40,
            num_nodes: 30,
            ..small()
        }
        .validate()
        .unwrap_err();
        assert!(e.to_string().contains("motif larger than graph"));
        assert!(SyntheticSpec {
            edge_prob: 1.5,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SyntheticSpec {
            growth: Some(vec![20, 0, 0, 0, 0]),
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn balanced_labels_and_reproducible() {
        let spec = SyntheticSpec {
            samples: 200,
            ..small()
        };
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.samples.iter().filter(|s| s.label == 1).count(), 100);
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn positives_end_in_a_motif_clique() {
        let data = generate_synthetic(&small()).unwrap();
        for s in data.samples.iter().filter(|s| s.label == 1) {
            let motif: Vec<usize> = (0..s.num_nodes)
                .filter(|&i| s.node_vocab_ids[i] < 6)
                .collect();
            let last = s.snapshots.last().unwrap();
            for a in 0..motif.len() {
                for b in a + 1..motif.len() {
                    assert!(last.has_edge(motif[a], motif[b]));
                }
            }
        }
    }

    #[test]
    fn decoy_negatives_share_the_union_structure() {
        let spec = SyntheticSpec {
            decoy_negatives: true,
            edge_prob: 0.0,
            ..small()
        };
        let data = generate_synthetic(&spec).unwrap();
        for s in &data.samples {
            let counts: Vec<usize> = s.snapshots.iter().map(SparseAdjacency::num_edges).collect();
            let union = SparseAdjacency::union(&s.snapshots).unwrap();
            assert_eq!(union.num_edges(), 15);
            if s.label == 1 {
                assert_eq!(counts, vec![0, 0, 5, 10, 15]);
            } else {
                assert_eq!(counts, vec![15, 10, 5, 0, 0]);
            }
        }
    }

    #[test]
    fn motif_words_carry_alternating_offset() {
        let spec = small();
        let data = generate_synthetic(&spec).unwrap();
        assert!(data.table.get(0, 0) > 0.8);
        assert!(data.table.get(1, 0) < -0.8);
        assert!(data.table.get(6, 0).abs() < 0.1);
    }
}
