//! Feed-forward layers: dense, 1-D convolution and dropout.
//!
//! Inputs are batches stored as `[batch x features]` matrices. A sequence of
//! `len` steps with `channels` values per step is laid out row-major by
//! step, so one example's window of `k` consecutive steps is a contiguous
//! run of `k * channels` values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_view, Activation, MatRef, Matrix};

/// Fully connected layer `activation(x W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[inputs x units]`
    pub weights: Matrix,
    /// `[1 x units]`
    pub bias: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Matrix,
    pre: Matrix,
    out: Matrix,
}

impl Dense {
    pub fn zeros(inputs: usize, units: usize, activation: Activation) -> Self {
        Dense {
            weights: Matrix::zeros(inputs, units),
            bias: Matrix::zeros(1, units),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn units(&self) -> usize {
        self.weights.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        if x.cols() != self.inputs() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut pre = Matrix::zeros(x.rows(), self.units());
        gemm(false, x, false, &self.weights, 0.0, &mut pre);
        pre.add_row_vector(self.bias.as_slice());
        let out = pre.map(|v| self.activation.apply_scalar(v));
        Ok((
            out.clone(),
            DenseCache {
                x: x.clone(),
                pre,
                out,
            },
        ))
    }

    /// Gradients given `dy = dL/d(output)`: returns `(dx, [dW, db])`.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let mut dpre = dy.clone();
        for ((d, &x), &y) in dpre
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre.as_slice())
            .zip(cache.out.as_slice())
        {
            *d *= self.activation.derivative(x, y);
        }
        self.backward_pre(cache, &dpre)
    }

    /// Same as [`Dense::backward`] but starting from `dL/d(pre-activation)`.
    pub fn backward_pre(&self, cache: &DenseCache, dpre: &Matrix) -> (Matrix, Vec<Matrix>) {
        let mut dw = Matrix::zeros(self.inputs(), self.units());
        gemm(true, &cache.x, false, dpre, 0.0, &mut dw);
        let mut db = Matrix::zeros(1, self.units());
        dpre.add_column_sums_to(db.as_mut_slice());
        let mut dx = Matrix::zeros(cache.x.rows(), self.inputs());
        gemm(false, dpre, true, &self.weights, 0.0, &mut dx);
        (dx, vec![dw, db])
    }

    /// Pre-activation values from the last forward pass.
    pub fn pre_activation(cache: &DenseCache) -> &Matrix {
        &cache.pre
    }
}

/// Valid (unpadded) 1-D convolution over the step axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[kernel * in_channels x filters]`; row `j * in_channels + c` holds
    /// tap `j` of channel `c`.
    pub weights: Matrix,
    /// `[1 x filters]`
    pub bias: Matrix,
    pub kernel: usize,
    pub in_channels: usize,
    pub len: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    x: Matrix,
    pre: Matrix,
    out: Matrix,
}

impl Conv1d {
    pub fn zeros(
        len: usize,
        in_channels: usize,
        filters: usize,
        kernel: usize,
        activation: Activation,
    ) -> Result<Self> {
        if kernel == 0 || kernel > len {
            return Err(Error::KernelTooWide { kernel, length: len });
        }
        Ok(Conv1d {
            weights: Matrix::zeros(kernel * in_channels, filters),
            bias: Matrix::zeros(1, filters),
            kernel,
            in_channels,
            len,
            activation,
        })
    }

    pub fn filters(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_len(&self) -> usize {
        self.len - self.kernel + 1
    }

    fn window<'a>(&self, row: &'a [f64]) -> MatRef<'a> {
        MatRef::new(
            row,
            self.out_len(),
            self.kernel * self.in_channels,
            self.in_channels,
            1,
        )
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Conv1dCache)> {
        if x.cols() != self.len * self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv1d expects {} x {} inputs, got {}",
                self.len,
                self.in_channels,
                x.cols()
            )));
        }
        let f = self.filters();
        let mut pre = Matrix::zeros(x.rows(), self.out_len() * f);
        for b in 0..x.rows() {
            gemm_view(1.0, self.window(x.row(b)), self.weights.view(), 0.0, pre.row_mut(b), f);
        }
        for row in pre.as_mut_slice().chunks_exact_mut(f) {
            for (v, bias) in row.iter_mut().zip(self.bias.as_slice()) {
                *v += bias;
            }
        }
        let out = pre.map(|v| self.activation.apply_scalar(v));
        Ok((
            out.clone(),
            Conv1dCache {
                x: x.clone(),
                pre,
                out,
            },
        ))
    }

    pub fn backward(&self, cache: &Conv1dCache, dy: &Matrix) -> (Matrix, Vec<Matrix>) {
        let f = self.filters();
        let width = self.kernel * self.in_channels;
        let mut dpre = dy.clone();
        for ((d, &x), &y) in dpre
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre.as_slice())
            .zip(cache.out.as_slice())
        {
            *d *= self.activation.derivative(x, y);
        }
        let mut dw = Matrix::zeros(width, f);
        let mut db = Matrix::zeros(1, f);
        let mut dx = Matrix::zeros(cache.x.rows(), cache.x.cols());
        let mut dcol = vec![0.0; self.out_len() * width];
        for b in 0..cache.x.rows() {
            let dpre_b = MatRef::new(dpre.row(b), self.out_len(), f, f, 1);
            gemm_view(1.0, self.window(cache.x.row(b)).t(), dpre_b, 1.0, dw.as_mut_slice(), f);
            for row in dpre.row(b).chunks_exact(f) {
                for (acc, v) in db.as_mut_slice().iter_mut().zip(row) {
                    *acc += v;
                }
            }
            gemm_view(1.0, dpre_b, self.weights.view().t(), 0.0, &mut dcol, width);
            let dx_row = dx.row_mut(b);
            for (t, chunk) in dcol.chunks_exact(width).enumerate() {
                let start = t * self.in_channels;
                for (acc, v) in dx_row[start..start + width].iter_mut().zip(chunk) {
                    *acc += v;
                }
            }
        }
        (dx, vec![dw, db])
    }
}

/// Inverted dropout: in training, zeroes each value with probability `rate`
/// and scales survivors by `1 / (1 - rate)`. Identity at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn forward(&self, x: &Matrix, rng: Option<&mut ChaCha8Rng>) -> (Matrix, DropoutCache) {
        match rng {
            Some(rng) if self.rate > 0.0 => {
                let scale = 1.0 / (1.0 - self.rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() < self.rate { 0.0 } else { scale })
                    .collect();
                let mut out = x.clone();
                for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (out, DropoutCache { mask: Some(mask) })
            }
            _ => (x.clone(), DropoutCache { mask: None }),
        }
    }

    pub fn backward(&self, cache: &DropoutCache, dy: &Matrix) -> Matrix {
        let mut dx = dy.clone();
        if let Some(mask) = &cache.mask {
            for (v, m) in dx.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        dx
    }
}
