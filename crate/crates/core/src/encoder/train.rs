//! Mini-batch gradient steps shared by the tagger and the classifier.

use rayon::prelude::*;

use super::optim::Adam;
use super::params::Parameters;
use super::EncoderError;

/// Examples per gradient shard. Shards are summed in index order, so the
/// result does not depend on the number of worker threads.
const SHARD: usize = 8;

/// Summed loss, term count and gradient of one batch shard.
type Shard<N> = Result<(f64, usize, N), EncoderError>;

/// A training objective over some network.
pub trait Objective: Sync {
    type Net: Parameters + Clone + Send + Sync;
    type Example: Sync;

    /// Adds the gradient of this example's summed loss into `grad` and
    /// returns `(loss sum, number of loss terms)`.
    fn accumulate(
        &self,
        net: &Self::Net,
        example: &Self::Example,
        grad: &mut Self::Net,
    ) -> Result<(f64, usize), EncoderError>;

    /// Mean loss and mean gradient over a batch, without updating anything.
    fn batch_gradient(
        &self,
        net: &Self::Net,
        batch: &[&Self::Example],
    ) -> Result<(f64, usize, Self::Net), EncoderError> {
        let shards: Vec<Shard<Self::Net>> = batch
            .par_chunks(SHARD)
            .map(|chunk| {
                let mut grad = net.zeros_like();
                let mut loss = 0.0;
                let mut terms = 0;
                for ex in chunk {
                    let (l, t) = self.accumulate(net, ex, &mut grad)?;
                    loss += l;
                    terms += t;
                }
                Ok((loss, terms, grad))
            })
            .collect();
        let mut total = net.zeros_like();
        let mut loss = 0.0;
        let mut terms = 0;
        for shard in shards {
            let (l, t, g) = shard?;
            loss += l;
            terms += t;
            total.add_assign(&g);
        }
        if terms > 0 {
            total.scale(1.0 / terms as f64);
            loss /= terms as f64;
        }
        Ok((loss, terms, total))
    }
}

/// One optimizer step on a batch; returns the mean loss.
///
/// A batch without loss terms leaves the parameters untouched. A non-finite
/// loss is reported as divergence and no update is applied.
pub fn train_step<O: Objective>(
    objective: &O,
    net: &mut O::Net,
    batch: &[&O::Example],
    optimizer: &mut Adam,
) -> Result<f64, EncoderError> {
    let (loss, terms, grad) = objective.batch_gradient(net, batch)?;
    if terms == 0 {
        return Ok(0.0);
    }
    if !loss.is_finite() {
        return Err(EncoderError::Divergence(loss));
    }
    optimizer.update(net, &grad);
    Ok(loss)
}
