//! Neural error-correcting decoder: belief propagation unrolled into `2L`
//! hidden layers with trainable weights on the variable-to-check layers and on
//! the output layer.
//!
//! Odd hidden layer `i`, edge `e = (v, c)`:
//! `x[i][e] = tanh(½ (w[i][e]·l_v + Σ_{e'=(v,c'), c'≠c} w[i][e][e']·x[i−1][e']))`.
//! Even hidden layer: `x[i][e] = 2 atanh(Π_{e'=(v',c), v'≠v} x[i−1][e'])`, no
//! weights. Output: `z_v = w_out[v]·l_v + Σ_{e'=(v,c')} w_out[v][e']·x[2L][e']`
//! and `o_v = σ(−z_v)`, the probability that bit `v` is 1 given the crate's
//! positive-LLR-means-zero convention. With all weights 1 the network is
//! exactly `L` iterations of flooding BP.

use std::io::{Read, Write};

use rand::Rng;

use crate::bp::{bp_decode_with, BpConfig, TannerGraph};
use crate::channel::{awgn_with, bpsk_modulate, llr_from_channel, rng_stream, LlrVector};
use crate::codes::LinearCode;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};

/// Magnitude bound applied to the `atanh` argument in even layers.
pub const NECD_ATANH_CLAMP: f64 = 1e-7;
pub const DEFAULT_ITERATIONS: usize = 5;

const MAGIC: &[u8; 4] = b"NECD";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NecdNetwork {
    graph: TannerGraph,
    iterations: usize,
    /// Per odd layer, per edge: the channel weight followed by one weight per
    /// other edge at the same variable.
    odd: Vec<Vec<f64>>,
    /// Per variable: the channel weight followed by one weight per incident edge.
    output: Vec<f64>,
    edge_offset: Vec<usize>,
    var_offset: Vec<usize>,
    /// For edge `e = (v, c)`: the edges `(v, c')`, `c' ≠ c`, ascending.
    incoming: Vec<Vec<usize>>,
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `x[0]` is the all-zero initial message layer, `x[1..=2L]` the hidden layers.
    pub x: Vec<Vec<f64>>,
    /// Output logits `z_v`; `o_v = σ(−z_v)`.
    pub logits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NecdOutput {
    pub outputs: Vec<f64>,
    pub hard_bits: Vec<u8>,
}

impl NecdNetwork {
    /// Unit-weight network over `graph` with `iterations` unrolled BP iterations.
    pub fn new(graph: TannerGraph, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Parameter("NECD needs L ≥ 1".into()));
        }
        let mut incoming = Vec::with_capacity(graph.n_edges());
        let mut edge_offset = Vec::with_capacity(graph.n_edges() + 1);
        let mut off = 0;
        for (e, &(v, _)) in graph.edges().iter().enumerate() {
            let inc: Vec<usize> = graph.var_edges(v).iter().copied().filter(|&o| o != e).collect();
            edge_offset.push(off);
            off += 1 + inc.len();
            incoming.push(inc);
        }
        edge_offset.push(off);
        let mut var_offset = Vec::with_capacity(graph.n_var() + 1);
        let mut voff = 0;
        for v in 0..graph.n_var() {
            var_offset.push(voff);
            voff += 1 + graph.var_degree(v);
        }
        var_offset.push(voff);
        Ok(Self {
            odd: vec![vec![1.0; off]; iterations],
            output: vec![1.0; voff],
            graph,
            iterations,
            edge_offset,
            var_offset,
            incoming,
        })
    }

    pub fn graph(&self) -> &TannerGraph {
        &self.graph
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn hidden_layers(&self) -> usize {
        2 * self.iterations
    }

    pub fn hidden_width(&self) -> usize {
        self.graph.n_edges()
    }

    /// Weights attached to edge `e` in odd layer `2j + 1` (`j` counts from 0).
    pub fn edge_weights(&self, j: usize, e: usize) -> &[f64] {
        &self.odd[j][self.edge_offset[e]..self.edge_offset[e + 1]]
    }

    pub fn output_weights(&self, v: usize) -> &[f64] {
        &self.output[self.var_offset[v]..self.var_offset[v + 1]]
    }

    pub fn weight_count(&self) -> usize {
        self.odd.iter().map(Vec::len).sum::<usize>() + self.output.len()
    }

    /// All weights in serialization order.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.weight_count());
        for layer in &self.odd {
            w.extend_from_slice(layer);
        }
        w.extend_from_slice(&self.output);
        w
    }

    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weight_count() {
            return Err(Error::dim(self.weight_count(), w.len()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("non-finite NECD weight".into()));
        }
        let mut rest = w;
        for layer in &mut self.odd {
            let (head, tail) = rest.split_at(layer.len());
            layer.copy_from_slice(head);
            rest = tail;
        }
        self.output.copy_from_slice(rest);
        Ok(())
    }

    pub fn forward(&self, llr: &LlrVector) -> Result<NecdOutput> {
        let trace = self.forward_trace(llr)?;
        Ok(NecdOutput {
            outputs: trace.logits.iter().map(|&z| sigmoid(-z)).collect(),
            hard_bits: trace.logits.iter().map(|&z| u8::from(z < 0.0)).collect(),
        })
    }

    pub fn forward_trace(&self, llr: &LlrVector) -> Result<ForwardTrace> {
        let g = &self.graph;
        if llr.len() != g.n_var() {
            return Err(Error::dim(g.n_var(), llr.len()));
        }
        let l = llr.values();
        let n_edges = g.n_edges();
        let limit = 1.0 - NECD_ATANH_CLAMP;
        let mut x = Vec::with_capacity(2 * self.iterations + 1);
        x.push(vec![0.0; n_edges]);
        for j in 0..self.iterations {
            let prev = &x[2 * j];
            let w = &self.odd[j];
            let mut odd = vec![0.0; n_edges];
            for (e, &(v, _)) in g.edges().iter().enumerate() {
                let base = self.edge_offset[e];
                let mut a = w[base] * l[v];
                for (k, &o) in self.incoming[e].iter().enumerate() {
                    a += w[base + 1 + k] * prev[o];
                }
                odd[e] = (0.5 * a).tanh();
            }
            let mut even = vec![0.0; n_edges];
            for (e, &(_, c)) in g.edges().iter().enumerate() {
                let mut p = 1.0;
                for &o in g.check_edges(c) {
                    if o != e {
                        p *= odd[o];
                    }
                }
                even[e] = 2.0 * p.clamp(-limit, limit).atanh();
            }
            x.push(odd);
            x.push(even);
        }
        let last = &x[2 * self.iterations];
        let logits = (0..g.n_var())
            .map(|v| {
                let base = self.var_offset[v];
                let mut z = self.output[base] * l[v];
                for (k, &e) in g.var_edges(v).iter().enumerate() {
                    z += self.output[base + 1 + k] * last[e];
                }
                z
            })
            .collect();
        Ok(ForwardTrace { x, logits })
    }

    /// Mean binary cross-entropy between `o_v` and `targets` over all bits of
    /// all frames, and its gradient with respect to [`Self::weights`].
    pub fn loss_and_gradient(&self, llrs: &[LlrVector], targets: &[Vec<u8>]) -> Result<(f64, Vec<f64>)> {
        if llrs.len() != targets.len() {
            return Err(Error::dim(llrs.len(), targets.len()));
        }
        let n_var = self.graph.n_var();
        let scale = 1.0 / (llrs.len() * n_var).max(1) as f64;
        let mut grad = GradBuffers::zeros(self);
        let mut loss = 0.0;
        for (llr, target) in llrs.iter().zip(targets) {
            if target.len() != n_var {
                return Err(Error::dim(n_var, target.len()));
            }
            let trace = self.forward_trace(llr)?;
            let mut g_logits = vec![0.0; n_var];
            for v in 0..n_var {
                let z = trace.logits[v];
                let y = f64::from(target[v] & 1);
                loss += y * softplus(z) + (1.0 - y) * softplus(-z);
                g_logits[v] = scale * (sigmoid(z) - 1.0 + y);
            }
            self.backward(llr.values(), &trace, &g_logits, &mut grad);
        }
        Ok((loss * scale, grad.flatten()))
    }

    /// Mean cross-entropy loss alone (same definition as [`Self::loss_and_gradient`]).
    pub fn loss(&self, llrs: &[LlrVector], targets: &[Vec<u8>]) -> Result<f64> {
        let n_var = self.graph.n_var();
        let mut loss = 0.0;
        for (llr, target) in llrs.iter().zip(targets) {
            let trace = self.forward_trace(llr)?;
            for (z, &t) in trace.logits.iter().zip(target) {
                let y = f64::from(t & 1);
                loss += y * softplus(*z) + (1.0 - y) * softplus(-*z);
            }
        }
        Ok(loss / (llrs.len() * n_var).max(1) as f64)
    }

    fn backward(&self, l: &[f64], trace: &ForwardTrace, g_logits: &[f64], grad: &mut GradBuffers) {
        let g = &self.graph;
        let n_edges = g.n_edges();
        let limit = 1.0 - NECD_ATANH_CLAMP;
        let top = 2 * self.iterations;
        let mut gx = vec![0.0; n_edges];
        for v in 0..g.n_var() {
            let base = self.var_offset[v];
            let gz = g_logits[v];
            grad.output[base] += gz * l[v];
            for (k, &e) in g.var_edges(v).iter().enumerate() {
                grad.output[base + 1 + k] += gz * trace.x[top][e];
                gx[e] += gz * self.output[base + 1 + k];
            }
        }
        for j in (0..self.iterations).rev() {
            let odd_x = &trace.x[2 * j + 1];
            // even layer 2j+2: x = 2 atanh(clamp(p))
            let mut g_odd = vec![0.0; n_edges];
            for (e, &(_, c)) in g.edges().iter().enumerate() {
                if gx[e] == 0.0 {
                    continue;
                }
                let checks = g.check_edges(c);
                let mut p = 1.0;
                for &o in checks {
                    if o != e {
                        p *= odd_x[o];
                    }
                }
                if p.abs() >= limit {
                    continue;
                }
                let gp = gx[e] * 2.0 / (1.0 - p * p);
                for &o in checks {
                    if o == e {
                        continue;
                    }
                    let mut partial = 1.0;
                    for &q in checks {
                        if q != e && q != o {
                            partial *= odd_x[q];
                        }
                    }
                    g_odd[o] += gp * partial;
                }
            }
            // odd layer 2j+1: x = tanh(a / 2)
            let prev = &trace.x[2 * j];
            let w = &self.odd[j];
            let gw = &mut grad.odd[j];
            let mut g_prev = vec![0.0; n_edges];
            for (e, &(v, _)) in g.edges().iter().enumerate() {
                let xe = odd_x[e];
                let ga = g_odd[e] * 0.5 * (1.0 - xe * xe);
                let base = self.edge_offset[e];
                gw[base] += ga * l[v];
                for (k, &o) in self.incoming[e].iter().enumerate() {
                    gw[base + 1 + k] += ga * prev[o];
                    g_prev[o] += ga * w[base + 1 + k];
                }
            }
            gx = g_prev;
        }
    }

    /// Writes the versioned binary format: `NECD`, version, then `n k t L` as
    /// little-endian `u32`, then every weight as little-endian `f64` in
    /// (layer, edge, incoming edge) order with the output layer last.
    pub fn write_to<W: Write>(&self, code: &LinearCode, mut w: W) -> Result<()> {
        self.check_code(code)?;
        w.write_all(MAGIC)?;
        for v in [FORMAT_VERSION, code.n() as u32, code.k() as u32, code.t() as u32, self.iterations as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for x in self.weights() {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(code: &LinearCode, mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an NECD weight file".into()));
        }
        let mut header = [0u32; 5];
        for h in &mut header {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, n, k, t, iterations] = header;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported NECD format version {version}")));
        }
        if (n as usize, k as usize, t as usize) != (code.n(), code.k(), code.t()) {
            return Err(Error::Format(format!(
                "weights are for ({n}, {k}, t={t}), code is ({}, {}, t={})",
                code.n(),
                code.k(),
                code.t()
            )));
        }
        let graph = TannerGraph::from_parity_check(code.parity_check())?;
        let mut net = Self::new(graph, iterations as usize)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * net.weight_count() {
            return Err(Error::Format(format!(
                "expected {} weights, found {} bytes",
                net.weight_count(),
                bytes.len()
            )));
        }
        let w: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        net.set_weights(&w)?;
        Ok(net)
    }

    fn check_code(&self, code: &LinearCode) -> Result<()> {
        if TannerGraph::from_parity_check(code.parity_check())? != self.graph {
            return Err(Error::Parameter("network graph does not match the code's H".into()));
        }
        Ok(())
    }
}

struct GradBuffers {
    odd: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl GradBuffers {
    fn zeros(net: &NecdNetwork) -> Self {
        Self {
            odd: net.odd.iter().map(|l| vec![0.0; l.len()]).collect(),
            output: vec![0.0; net.output.len()],
        }
    }

    fn flatten(self) -> Vec<f64> {
        let mut w: Vec<f64> = self.odd.into_iter().flatten().collect();
        w.extend(self.output);
        w
    }
}

pub fn necd_build(graph: TannerGraph, iterations: usize) -> Result<NecdNetwork> {
    NecdNetwork::new(graph, iterations)
}

pub fn necd_forward(llr: &LlrVector, net: &NecdNetwork) -> Result<NecdOutput> {
    net.forward(llr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NecdTrainConfig {
    pub snr_db_list: Vec<f64>,
    pub frames_per_epoch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Frames per gradient step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for NecdTrainConfig {
    fn default() -> Self {
        Self {
            snr_db_list: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            frames_per_epoch: 1200,
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 120,
            seed: 0,
        }
    }
}

impl NecdTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db_list.is_empty() {
            return Err(Error::Parameter("at least one training SNR is required".into()));
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::Parameter("training SNRs must be finite".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Trains on noisy all-zero codewords. Frame `f` of every epoch is sent at
/// `snr_db_list[f % len]`, so each batch mixes the configured SNRs evenly.
/// Returns the network and the mean training loss of each epoch.
pub fn necd_train_with_history(
    mut net: NecdNetwork,
    code: &LinearCode,
    cfg: &NecdTrainConfig,
) -> Result<(NecdNetwork, Vec<f64>)> {
    cfg.validate()?;
    net.check_code(code)?;
    let mut rng = rng_stream(cfg.seed, 0x4e45_4344);
    let mut adam = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate), net.weight_count());
    let mut weights = net.weights();
    let zero = code.zero_codeword();
    let symbols = bpsk_modulate(zero.bits());
    let rate = code.rate();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut frame = 0usize;
        while frame < cfg.frames_per_epoch {
            let batch = cfg.batch_size.min(cfg.frames_per_epoch - frame);
            let mut llrs = Vec::with_capacity(batch);
            for f in frame..frame + batch {
                let snr = cfg.snr_db_list[f % cfg.snr_db_list.len()];
                let (y, sigma) = awgn_with(&symbols, snr, rate, &mut rng)?;
                llrs.push(llr_from_channel(&y, sigma)?);
            }
            let targets = vec![zero.bits().to_vec(); batch];
            let (loss, grad) = net.loss_and_gradient(&llrs, &targets)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure {
                    epoch,
                    detail: format!("loss {loss}"),
                });
            }
            adam.update(&mut weights, &grad);
            if weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::TrainingFailure {
                    epoch,
                    detail: "weights became non-finite".into(),
                });
            }
            net.set_weights(&weights)?;
            epoch_loss += loss * batch as f64;
            seen += batch;
            frame += batch;
        }
        history.push(epoch_loss / seen.max(1) as f64);
    }
    Ok((net, history))
}

pub fn necd_train(net: NecdNetwork, code: &LinearCode, cfg: &NecdTrainConfig) -> Result<NecdNetwork> {
    Ok(necd_train_with_history(net, code, cfg)?.0)
}

/// Anything that maps channel LLRs to a hard bit decision.
pub trait HardDecoder {
    fn decode_bits(&self, llr: &LlrVector) -> Result<Vec<u8>>;
}

impl HardDecoder for NecdNetwork {
    fn decode_bits(&self, llr: &LlrVector) -> Result<Vec<u8>> {
        Ok(self.forward(llr)?.hard_bits)
    }
}

/// Plain sum-product decoding as a [`HardDecoder`].
#[derive(Clone, Debug)]
pub struct BpReference {
    pub graph: TannerGraph,
    pub config: BpConfig,
}

impl BpReference {
    pub fn new(code: &LinearCode, iterations: usize) -> Result<Self> {
        Ok(Self {
            graph: TannerGraph::from_parity_check(code.parity_check())?,
            config: BpConfig::new(iterations),
        })
    }
}

impl HardDecoder for BpReference {
    fn decode_bits(&self, llr: &LlrVector) -> Result<Vec<u8>> {
        Ok(bp_decode_with(llr, &self.graph, &self.config)?.hard_bits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmission {
    ZeroCodeword,
    RandomCodewords,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BerResult {
    pub ber: f64,
    pub fer: f64,
    pub bit_errors: usize,
    pub frame_errors: usize,
    pub frames: usize,
}

/// Monte-Carlo bit and frame error rates at one Eb/N0 point. `snr_db = ∞`
/// gives a noiseless channel.
pub fn ber_eval<D: HardDecoder + ?Sized>(
    decoder: &D,
    code: &LinearCode,
    snr_db: f64,
    frames: usize,
    seed: u64,
    tx: Transmission,
) -> Result<BerResult> {
    if frames == 0 {
        return Err(Error::Parameter("frames must be ≥ 1".into()));
    }
    let mut noise = rng_stream(seed, 1);
    let mut messages = rng_stream(seed, 2);
    let rate = code.rate();
    let (mut bit_errors, mut frame_errors) = (0usize, 0usize);
    for _ in 0..frames {
        let cw = match tx {
            Transmission::ZeroCodeword => code.zero_codeword(),
            Transmission::RandomCodewords => {
                let msg: Vec<u8> = (0..code.k()).map(|_| messages.random_range(0..2u8)).collect();
                code.encode(&msg)?
            }
        };
        let (y, sigma) = awgn_with(&bpsk_modulate(cw.bits()), snr_db, rate, &mut noise)?;
        let llr = if sigma == 0.0 {
            // noiseless: any positive scale gives the same decisions
            LlrVector::new(y.iter().map(|&s| 2.0 * s).collect())?
        } else {
            llr_from_channel(&y, sigma)?
        };
        let decided = decoder.decode_bits(&llr)?;
        let errs = decided.iter().zip(cw.bits()).filter(|(a, b)| a != b).count();
        bit_errors += errs;
        frame_errors += usize::from(errs > 0);
    }
    Ok(BerResult {
        ber: bit_errors as f64 / (frames * code.n()) as f64,
        fer: frame_errors as f64 / frames as f64,
        bit_errors,
        frame_errors,
        frames,
    })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
