//! Encoder with a linear softmax head, trained by weighted cross-entropy.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::train::Objective;
use super::transformer::{random_matrix, softmax_rows, EncoderConfig, EncoderParams};
use super::EncoderError;

/// One cross-entropy term: the head output at `row` should be `class`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub row: usize,
    pub class: usize,
    pub weight: f64,
}

impl Target {
    pub fn new(row: usize, class: usize) -> Self {
        Target {
            row,
            class,
            weight: 1.0,
        }
    }
}

/// A piece sequence with its cross-entropy targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub ids: Vec<u32>,
    pub targets: Vec<Target>,
}

/// Weighted cross-entropy over [`Example`]s, used for both the token-level
/// and the sequence-level objective.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Objective for CrossEntropy {
    type Net = HeadNet;
    type Example = Example;

    fn accumulate(
        &self,
        net: &HeadNet,
        example: &Example,
        grad: &mut HeadNet,
    ) -> Result<(f64, usize), EncoderError> {
        net.accumulate_cross_entropy(&example.ids, &example.targets, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadNet {
    pub encoder: EncoderParams,
    /// `d_model × outputs`
    pub w: Array2<f64>,
    /// `1 × outputs`
    pub b: Array2<f64>,
}

impl Parameters for HeadNet {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = self.encoder.named_tensors();
        out.push(("head.w".into(), &self.w));
        out.push(("head.b".into(), &self.b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.encoder.tensors_mut();
        out.push(&mut self.w);
        out.push(&mut self.b);
        out
    }
}

impl HeadNet {
    pub fn init(config: EncoderConfig, outputs: usize, seed: u64) -> Result<Self, EncoderError> {
        if outputs == 0 {
            return Err(EncoderError::Config("head needs at least one output".into()));
        }
        let encoder = EncoderParams::init(config, seed)?;
        Self::with_encoder(encoder, outputs, seed)
    }

    /// Fresh output layer on top of existing encoder weights.
    pub fn with_encoder(encoder: EncoderParams, outputs: usize, seed: u64) -> Result<Self, EncoderError> {
        if outputs == 0 {
            return Err(EncoderError::Config("head needs at least one output".into()));
        }
        let d = encoder.config.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Ok(HeadNet {
            encoder,
            w: random_matrix(&mut rng, d, outputs, 0.02),
            b: Array2::zeros((1, outputs)),
        })
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }

    /// Softmax probabilities for every position of the sequence.
    pub fn probabilities(&self, ids: &[u32]) -> Result<Array2<f64>, EncoderError> {
        let (vectors, _) = self.encoder.forward(ids)?;
        let mut p = vectors.dot(&self.w) + &self.b;
        softmax_rows(&mut p);
        Ok(p)
    }

    /// Softmax probabilities at a single position.
    pub fn row_probabilities(&self, ids: &[u32], row: usize) -> Result<Vec<f64>, EncoderError> {
        let (vectors, _) = self.encoder.forward(ids)?;
        let mut p = vectors.row(row).insert_axis(Axis(0)).dot(&self.w) + &self.b;
        softmax_rows(&mut p);
        Ok(p.row(0).to_vec())
    }

    fn check_targets(&self, ids: &[u32], targets: &[Target]) -> Result<(), EncoderError> {
        for t in targets {
            if t.row >= ids.len() || t.class >= self.outputs() {
                return Err(EncoderError::Config(format!(
                    "target (row {}, class {}) outside {} rows × {} classes",
                    t.row,
                    t.class,
                    ids.len(),
                    self.outputs()
                )));
            }
        }
        Ok(())
    }

    /// Weighted cross-entropy summed over `targets`.
    pub fn loss(&self, ids: &[u32], targets: &[Target]) -> Result<f64, EncoderError> {
        self.check_targets(ids, targets)?;
        let p = self.probabilities(ids)?;
        Ok(targets
            .iter()
            .map(|t| -t.weight * p[[t.row, t.class]].ln())
            .sum())
    }

    /// Adds the gradient of the weighted cross-entropy into `grad`.
    ///
    /// Returns the loss sum and the number of terms with non-zero weight.
    pub fn accumulate_cross_entropy(
        &self,
        ids: &[u32],
        targets: &[Target],
        grad: &mut HeadNet,
    ) -> Result<(f64, usize), EncoderError> {
        self.check_targets(ids, targets)?;
        let (vectors, cache) = self.encoder.forward(ids)?;
        let mut p = vectors.dot(&self.w) + &self.b;
        softmax_rows(&mut p);
        let mut dlogits = Array2::<f64>::zeros(p.raw_dim());
        let mut loss = 0.0;
        let mut terms = 0;
        for t in targets {
            loss -= t.weight * p[[t.row, t.class]].ln();
            if t.weight != 0.0 {
                terms += 1;
            }
            let mut row = dlogits.row_mut(t.row);
            row.scaled_add(t.weight, &p.row(t.row));
            row[t.class] -= t.weight;
        }
        grad.w += &vectors.t().dot(&dlogits);
        grad.b += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_out = dlogits.dot(&self.w.t());
        self.encoder.backward(&cache, &d_out, &mut grad.encoder);
        Ok((loss, terms))
    }
}
