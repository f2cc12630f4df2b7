//! Uniform access to the parameter tensors of a network.

use ndarray::Array2;

/// A network whose parameters are a fixed, ordered list of matrices.
///
/// The order of `named_tensors` and `tensors_mut` must agree; optimizers,
/// gradient buffers and checkpoints all rely on it.
pub trait Parameters {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn tensors(&self) -> Vec<&Array2<f64>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// A same-shaped copy with every entry zero, used as a gradient buffer.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}
