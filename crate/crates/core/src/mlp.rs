//! Fully connected networks with ReLU hidden layers and a `tanh` output layer.
//!
//! All parameters live in one flat vector: for each layer, the row-major
//! `out × in` weight matrix followed by the `out` biases.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation outputs of every layer; `activations[0]` is the input.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub activations: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    /// Zero-initialised network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        let count = sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
        })
    }

    /// Weights from `N(0, std²)`, biases zero.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], std: f64, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
        for l in 0..mlp.layers() {
            let (w_range, _) = mlp.layer_ranges(l);
            for p in &mut mlp.params[w_range] {
                *p = normal.sample(rng);
            }
        }
        Ok(mlp)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_ranges(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.sizes.windows(2).take(l).map(|w| w[1] * w[0] + w[1]).sum();
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    pub fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.layer_ranges(l);
        ArrayView2::from_shape((self.sizes[l + 1], self.sizes[l]), &self.params[w]).expect("layer shape")
    }

    pub fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_ranges(l);
        ArrayView1::from(&self.params[b])
    }

    /// Forward pass over a batch, one sample per row.
    pub fn forward_trace(&self, input: ArrayView2<'_, f64>) -> Result<MlpTrace> {
        if input.ncols() != self.input_dim() {
            return Err(Error::dim(self.input_dim(), input.ncols()));
        }
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_owned());
        for l in 0..self.layers() {
            let prev = activations.last().expect("nonempty");
            let mut z = prev.dot(&self.weight(l).t());
            z += &self.bias(l);
            if l + 1 == self.layers() {
                z.mapv_inplace(f64::tanh);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(z);
        }
        Ok(MlpTrace { activations })
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().expect("output layer"))
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Parameter(e.to_string()))?;
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradient of a scalar loss with respect to all parameters, given the loss
    /// gradient with respect to the network output.
    pub fn backward(&self, trace: &MlpTrace, grad_output: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        let mut delta: Array2<f64> = grad_output.to_owned();
        for l in (0..self.layers()).rev() {
            let out = &trace.activations[l + 1];
            if l + 1 == self.layers() {
                delta.zip_mut_with(out, |d, &a| *d *= 1.0 - a * a);
            } else {
                delta.zip_mut_with(out, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let prev = &trace.activations[l];
            let (w_range, b_range) = self.layer_ranges(l);
            let mut gw = ArrayViewMut2::from_shape(
                (self.sizes[l + 1], self.sizes[l]),
                &mut grads[w_range],
            )
            .expect("layer shape");
            gw.assign(&delta.t().dot(prev));
            let mut gb = ArrayViewMut1::from(&mut grads[b_range]);
            gb.assign(&delta.sum_axis(Axis(0)));
            if l > 0 {
                delta = delta.dot(&self.weight(l));
            }
        }
        grads
    }
}

/// Stacks equal-length rows into a matrix.
pub fn rows_to_matrix<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != cols {
            return Err(Error::dim(cols, r.len()));
        }
        m.row_mut(i).assign(&Array1::from(r.to_vec()));
    }
    Ok(m)
}
