//! Coupled image/attribute hash encoders and their training objective.
//!
//! Batches are stored one sample per row: `P[i]` is the `c`-dimensional `tanh`
//! activation of image `i`, `Q[j]` that of attribute vector `j`, and
//! `S[i][j] = 1` when image `i` and attribute vector `j` describe the same
//! subject.
//!
//! The objective is
//!
//! ```text
//! J = Σᵢⱼ ℓ(r(Dᵢⱼ), Sᵢⱼ) − θ/c (Σᵢ‖Pᵢ‖² + Σⱼ‖Qⱼ‖²) + λ (Σ_b (Σᵢ Pᵢb)² + Σ_b (Σⱼ Qⱼb)²)
//! ```
//!
//! with `Dᵢⱼ = ‖Pᵢ − Qⱼ‖²`, `r(D) = (1 + e^(−μ)) / (1 + e^(D − μ))` and
//! `ℓ(r, s) = −s ln r − (1 − s) ln(1 − r)`. The margin is given in Hamming
//! units `m`; on ±1 vectors the squared distance is four times the Hamming
//! distance, so `μ = 4m`.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpTrace};
use crate::necd::sigmoid;

pub const DEFAULT_HIDDEN: usize = 512;
/// Standard deviation of the initial weights: `N(0, 0.01)` read as a variance.
pub const INIT_STD: f64 = 0.1;
/// Floor applied to the arguments of both logarithms in the pairwise loss.
pub const PROB_FLOOR: f64 = 1e-12;

const MAGIC: &[u8; 4] = b"ENCD";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Image,
    Attribute,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderShape {
    pub d_img: usize,
    pub d_attr: usize,
    pub image_hidden: Vec<usize>,
    pub attribute_hidden: Vec<usize>,
    pub code_len: usize,
}

impl EncoderShape {
    /// Both branches with two hidden layers of 512 units.
    pub fn standard(d_img: usize, d_attr: usize, code_len: usize) -> Self {
        Self {
            d_img,
            d_attr,
            image_hidden: vec![DEFAULT_HIDDEN; 2],
            attribute_hidden: vec![DEFAULT_HIDDEN; 2],
            code_len,
        }
    }

    fn image_sizes(&self) -> Vec<usize> {
        layer_sizes(self.d_img, &self.image_hidden, self.code_len)
    }

    fn attribute_sizes(&self) -> Vec<usize> {
        layer_sizes(self.d_attr, &self.attribute_hidden, self.code_len)
    }
}

fn layer_sizes(input: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(out);
    s
}

/// Weights of the image branch (`w_x`) and the attribute branch (`w_y`).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub image: Mlp,
    pub attribute: Mlp,
}

impl EncoderParams {
    pub fn random<R: Rng + ?Sized>(shape: &EncoderShape, std: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            image: Mlp::random(&shape.image_sizes(), std, rng)?,
            attribute: Mlp::random(&shape.attribute_sizes(), std, rng)?,
        })
    }

    pub fn zeros(shape: &EncoderShape) -> Result<Self> {
        Ok(Self {
            image: Mlp::zeros(&shape.image_sizes())?,
            attribute: Mlp::zeros(&shape.attribute_sizes())?,
        })
    }

    pub fn shape(&self) -> EncoderShape {
        let hidden = |m: &Mlp| m.sizes()[1..m.sizes().len() - 1].to_vec();
        EncoderShape {
            d_img: self.image.input_dim(),
            d_attr: self.attribute.input_dim(),
            image_hidden: hidden(&self.image),
            attribute_hidden: hidden(&self.attribute),
            code_len: self.code_len(),
        }
    }

    pub fn code_len(&self) -> usize {
        self.image.output_dim()
    }

    pub fn branch(&self, modality: Modality) -> &Mlp {
        match modality {
            Modality::Image => &self.image,
            Modality::Attribute => &self.attribute,
        }
    }

    pub fn branch_mut(&mut self, modality: Modality) -> &mut Mlp {
        match modality {
            Modality::Image => &mut self.image,
            Modality::Attribute => &mut self.attribute,
        }
    }

    pub fn image_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.image.forward_one(x)
    }

    pub fn attribute_forward(&self, y: &[u8]) -> Result<Vec<f64>> {
        if let Some(&b) = y.iter().find(|&&b| b > 1) {
            return Err(Error::Parameter(format!("attribute entries must be 0/1, got {b}")));
        }
        let y: Vec<f64> = y.iter().map(|&b| f64::from(b)).collect();
        self.attribute.forward_one(&y)
    }

    /// Versioned binary format: `ENCD`, version, `d_img`, `d_attr`, the image
    /// hidden-layer count and widths, the attribute hidden-layer count and
    /// widths, `c` (all little-endian `u32`), then the image parameters and the
    /// attribute parameters as little-endian `f64` (per layer: row-major
    /// weights, then biases).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let shape = self.shape();
        let mut header = vec![FORMAT_VERSION, shape.d_img as u32, shape.d_attr as u32];
        header.push(shape.image_hidden.len() as u32);
        header.extend(shape.image_hidden.iter().map(|&h| h as u32));
        header.push(shape.attribute_hidden.len() as u32);
        header.extend(shape.attribute_hidden.iter().map(|&h| h as u32));
        header.push(shape.code_len as u32);
        w.write_all(MAGIC)?;
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for &p in self.image.params().iter().chain(self.attribute.params()) {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an encoder weight file".into()));
        }
        let mut next = || -> Result<usize> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let version = next()?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported encoder format version {version}")));
        }
        let d_img = next()?;
        let d_attr = next()?;
        let n_img = next()?;
        let image_hidden = (0..n_img).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let n_attr = next()?;
        let attribute_hidden = (0..n_attr).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let code_len = next()?;
        let shape = EncoderShape {
            d_img,
            d_attr,
            image_hidden,
            attribute_hidden,
            code_len,
        };
        let mut params = Self::zeros(&shape)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expected = params.image.param_count() + params.attribute.param_count();
        if bytes.len() != 8 * expected {
            return Err(Error::Format(format!(
                "expected {expected} parameters, found {} bytes",
                bytes.len()
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for p in params.image.params_mut().iter_mut().chain(params.attribute.params_mut()) {
            *p = values.next().expect("length checked");
        }
        Ok(params)
    }
}

/// Sign quantisation of an activation; `sign(0) = +1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HashCode(Vec<i8>);

impl HashCode {
    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Parameter("hash code entries must be ±1".into()));
        }
        Ok(Self(signs))
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bit view with `+1 ↦ 0` and `−1 ↦ 1`, matching the LLR sign convention.
    pub fn to_bits(&self) -> Vec<u8> {
        self.0.iter().map(|&s| u8::from(s < 0)).collect()
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| if b & 1 == 0 { 1 } else { -1 }).collect())
    }

    pub fn hamming(&self, other: &HashCode) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

pub fn hash(activation: &[f64]) -> HashCode {
    HashCode(activation.iter().map(|&a| if a >= 0.0 { 1 } else { -1 }).collect())
}

/// Squared-distance margin for a Hamming margin `m`.
pub fn distance_margin(hamming_margin: f64) -> f64 {
    4.0 * hamming_margin
}

/// `(1 + e^(−margin)) / (1 + e^(D − margin))` for a squared distance `D`.
pub fn dll_prob_at(distance: f64, margin: f64) -> f64 {
    let x = distance - margin;
    if x > 700.0 {
        (1.0 + (-margin).exp()) * (-x).exp()
    } else {
        (1.0 + (-margin).exp()) / (1.0 + x.exp())
    }
}

/// Distance-based logistic probability of two activations; `margin` is in
/// squared-distance units (see [`distance_margin`]).
pub fn dll_prob(p: &[f64], q: &[f64], margin: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(p.len(), q.len()));
    }
    if !(margin > 0.0) {
        return Err(Error::Parameter(format!("margin must be positive, got {margin}")));
    }
    Ok(dll_prob_at(squared_distance(p, q), margin))
}

pub fn dll_loss(r: f64, s: f64) -> f64 {
    -s * r.max(PROB_FLOOR).ln() - (1.0 - s) * (1.0 - r).max(PROB_FLOOR).ln()
}

/// `(ℓ, ∂ℓ/∂D)` for one pair.
fn pair_loss_and_slope(distance: f64, margin: f64, s: f64) -> (f64, f64) {
    let r = dll_prob_at(distance, margin);
    let sig = sigmoid(distance - margin);
    let mut slope = 0.0;
    if s != 0.0 && r >= PROB_FLOOR {
        slope += s * sig;
    }
    if s != 1.0 && 1.0 - r >= PROB_FLOOR {
        slope -= (1.0 - s) * r * sig / (1.0 - r);
    }
    (dll_loss(r, s), slope)
}

fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Activations of both modalities for one batch plus their similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HashBatch {
    pub p: Array2<f64>,
    pub q: Array2<f64>,
    pub s: Array2<f64>,
}

impl HashBatch {
    pub fn new(p: Array2<f64>, q: Array2<f64>, s: Array2<f64>) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::dim(p.len(), q.len()));
        }
        let n = p.nrows();
        if s.dim() != (n, n) {
            return Err(Error::dim(n * n, s.len()));
        }
        if s.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter("similarity entries must be 0 or 1".into()));
        }
        Ok(Self { p, q, s })
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn code_len(&self) -> usize {
        self.p.ncols()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveParts {
    pub total: f64,
    /// Σ of the pairwise logistic losses.
    pub dll: f64,
    /// `−θ/c (Σ‖P‖² + Σ‖Q‖²)`.
    pub quantization: f64,
    /// `λ · (Σ_b colsum(P)_b² + Σ_b colsum(Q)_b²)`.
    pub balance: f64,
}

impl std::ops::AddAssign for ObjectiveParts {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.dll += o.dll;
        self.quantization += o.quantization;
        self.balance += o.balance;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Margin in Hamming units.
    pub margin: f64,
    pub theta: f64,
    pub lambda: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Parameter(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.theta >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Parameter("θ and λ must be nonnegative".into()));
        }
        Ok(())
    }
}

pub fn objective(batch: &HashBatch, w: &LossWeights) -> Result<ObjectiveParts> {
    Ok(objective_with_grad(batch, w)?.0)
}

/// The objective and its gradient with respect to `P` and `Q`.
pub fn objective_with_grad(batch: &HashBatch, w: &LossWeights) -> Result<(ObjectiveParts, Array2<f64>, Array2<f64>)> {
    w.validate()?;
    let (n, c) = batch.p.dim();
    let margin = distance_margin(w.margin);
    let mut gp = Array2::<f64>::zeros((n, c));
    let mut gq = Array2::<f64>::zeros((n, c));
    let mut dll = 0.0;
    for i in 0..n {
        let pi = batch.p.row(i);
        let pi = pi.as_slice().expect("standard layout");
        for j in 0..n {
            let qj = batch.q.row(j);
            let qj = qj.as_slice().expect("standard layout");
            let (loss, slope) = pair_loss_and_slope(squared_distance(pi, qj), margin, batch.s[[i, j]]);
            dll += loss;
            if slope != 0.0 {
                for b in 0..c {
                    let g = 2.0 * slope * (pi[b] - qj[b]);
                    gp[[i, b]] += g;
                    gq[[j, b]] -= g;
                }
            }
        }
    }
    let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let quant_scale = w.theta / c.max(1) as f64;
    let quantization = -quant_scale * (sq(&batch.p) + sq(&batch.q));
    let col_p = batch.p.sum_axis(Axis(0));
    let col_q = batch.q.sum_axis(Axis(0));
    let balance = w.lambda * (col_p.iter().map(|v| v * v).sum::<f64>() + col_q.iter().map(|v| v * v).sum::<f64>());

    gp.scaled_add(-2.0 * quant_scale, &batch.p);
    gq.scaled_add(-2.0 * quant_scale, &batch.q);
    gp += &(&col_p * (2.0 * w.lambda));
    gq += &(&col_q * (2.0 * w.lambda));

    let parts = ObjectiveParts {
        total: dll + quantization + balance,
        dll,
        quantization,
        balance,
    };
    Ok((parts, gp, gq))
}

/// Raw inputs of one batch: image features, binary attributes (as reals) and
/// the similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InputBatch {
    pub images: Array2<f64>,
    pub attributes: Array2<f64>,
    pub similarity: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGradients {
    pub parts: ObjectiveParts,
    pub image: Vec<f64>,
    pub attribute: Vec<f64>,
}

pub(crate) struct BatchForward {
    pub image: MlpTrace,
    pub attribute: MlpTrace,
}

pub(crate) fn forward_batch(params: &EncoderParams, batch: &InputBatch) -> Result<BatchForward> {
    Ok(BatchForward {
        image: params.image.forward_trace(batch.images.view())?,
        attribute: params.attribute.forward_trace(batch.attributes.view())?,
    })
}

/// Exact gradients of the objective with respect to both branches.
pub fn gradients(params: &EncoderParams, batch: &InputBatch, w: &LossWeights) -> Result<EncoderGradients> {
    let fwd = forward_batch(params, batch)?;
    let hb = HashBatch::new(fwd.image.output().clone(), fwd.attribute.output().clone(), batch.similarity.clone())?;
    let (parts, gp, gq) = objective_with_grad(&hb, w)?;
    Ok(EncoderGradients {
        parts,
        image: params.image.backward(&fwd.image, gp.view()),
        attribute: params.attribute.backward(&fwd.attribute, gq.view()),
    })
}

/// Gradient for one branch only, the other held fixed.
pub fn branch_gradient(
    params: &EncoderParams,
    batch: &InputBatch,
    w: &LossWeights,
    modality: Modality,
) -> Result<(ObjectiveParts, Vec<f64>)> {
    let fwd = forward_batch(params, batch)?;
    let hb = HashBatch::new(fwd.image.output().clone(), fwd.attribute.output().clone(), batch.similarity.clone())?;
    let (parts, gp, gq) = objective_with_grad(&hb, w)?;
    let grad = match modality {
        Modality::Image => params.image.backward(&fwd.image, gp.view()),
        Modality::Attribute => params.attribute.backward(&fwd.attribute, gq.view()),
    };
    Ok((parts, grad))
}

/// Objective value on an input batch (no gradients).
pub fn batch_objective(params: &EncoderParams, batch: &InputBatch, w: &LossWeights) -> Result<ObjectiveParts> {
    let p = params.image.forward(batch.images.view())?;
    let q = params.attribute.forward(batch.attributes.view())?;
    objective(&HashBatch::new(p, q, batch.similarity.clone())?, w)
}

/// Hash codes for every row of an activation matrix.
pub fn hash_rows(activations: ArrayView2<'_, f64>) -> Vec<HashCode> {
    activations
        .rows()
        .into_iter()
        .map(|r| hash(r.as_slice().expect("standard layout")))
        .collect()
}
