#![allow(dead_code)]

use std::sync::Arc;

use croms::data::LabeledDataset;
use croms::loss::LossSpec;
use croms::score::{ClassProbabilities, ScoreModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Probabilities read from a table row whose index is stored in `x[0]`.
#[derive(Debug)]
pub struct TableProbs(pub Vec<Vec<f64>>);

impl ClassProbabilities for TableProbs {
    fn num_classes(&self) -> usize {
        self.0[0].len()
    }
    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.0[x[0] as usize].clone()
    }
}

pub struct Fixture {
    pub models: Vec<ScoreModel>,
    pub labeled: LabeledDataset,
    pub loss: LossSpec,
    /// Row `n` of every table.
    pub test_x: Vec<f64>,
}

fn coarse_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    // small integer weights so that ties between labels and rows occur
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(1..6) as f64).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// `n` labeled rows, `k` classes, `models` table-driven softmax candidates
/// and a random loss matrix with a zero diagonal. The second covariate is a
/// real feature for kernel methods.
pub fn classification_fixture(seed: u64, n: usize, k: usize, models: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ms = (0..models)
        .map(|id| {
            let table: Vec<Vec<f64>> = (0..=n).map(|_| coarse_probs(&mut rng, k)).collect();
            ScoreModel::softmax(id, Arc::new(TableProbs(table)))
        })
        .collect();
    let xs = (0..n).map(|i| vec![i as f64, rng.gen_range(-1.0..1.0)]).collect();
    let ys = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let matrix = (0..k)
        .map(|y| (0..k).map(|z| if y == z { 0.0 } else { rng.gen_range(1..10) as f64 }).collect())
        .collect();
    Fixture {
        models: ms,
        labeled: LabeledDataset::classification(xs, ys, k).unwrap(),
        loss: LossSpec::matrix(matrix).unwrap(),
        test_x: vec![n as f64, rng.gen_range(-1.0..1.0)],
    }
}

/// Row-permuted copy: row `i` of the result is row `perm[i]` of `data`.
pub fn permute(data: &LabeledDataset, perm: &[usize]) -> LabeledDataset {
    data.subset(perm).unwrap()
}
