//! Alternating DNDCMH training: Stage 1(a) encoder training, Stage 1(b) NECD
//! training on a BCH code with `t ≥ m`, Stage 2 refinement towards NECD-decoded
//! codewords, and the outer loop driven by training-set MAP.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adcmh::{
    batch_objective, branch_gradient, hash, hash_rows, EncoderParams, EncoderShape, LossWeights, Modality,
    ObjectiveParts, DEFAULT_HIDDEN, INIT_STD, PROB_FLOOR,
};
use crate::bp::TannerGraph;
use crate::channel::{rng_stream, LlrVector};
use crate::codes::{available_bch_codes, build_bch, LinearCode};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::necd::{necd_train, NecdNetwork, NecdTrainConfig, DEFAULT_ITERATIONS};
use crate::optim::{Adam, AdamConfig};
use crate::retrieval::{mean_average_precision, MapSummary, QuerySpec, RankedQuery, RetrievalIndex};

pub const DEFAULT_KAPPA: f64 = 4.0;
pub const MAP_IMPROVEMENT: f64 = 1e-4;

const STREAM_INIT: u64 = 10;
const STREAM_STAGE1: u64 = 11;
const STREAM_STAGE2: u64 = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumedChannel {
    pub kappa: f64,
}

impl AssumedChannel {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Parameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa })
    }
}

impl Default for AssumedChannel {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub c: usize,
    /// Margin in Hamming units.
    pub m: f64,
    pub theta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs_stage1a: usize,
    pub outer_rounds_max: usize,
    pub patience: usize,
    pub kappa: f64,
    /// NECD decoding iterations.
    pub l: usize,
    pub seed: u64,
    pub snr_db_list: Vec<f64>,
    pub image_hidden: Vec<usize>,
    pub attribute_hidden: Vec<usize>,
    pub necd_epochs: usize,
    pub necd_frames_per_epoch: usize,
    pub necd_batch_size: usize,
    /// Standard deviation of the initial encoder weights.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let necd = NecdTrainConfig::default();
        Self {
            c: 63,
            m: 6.0,
            theta: 1.0,
            lambda: 1.0,
            gamma: 1.0,
            lr: 1e-3,
            batch_size: 128,
            epochs_stage1a: 30,
            outer_rounds_max: 5,
            patience: 2,
            kappa: DEFAULT_KAPPA,
            l: DEFAULT_ITERATIONS,
            seed: 0,
            snr_db_list: necd.snr_db_list,
            image_hidden: vec![DEFAULT_HIDDEN; 2],
            attribute_hidden: vec![DEFAULT_HIDDEN; 2],
            necd_epochs: necd.epochs,
            necd_frames_per_epoch: necd.frames_per_epoch,
            necd_batch_size: necd.batch_size,
            init_std: INIT_STD,
        }
    }
}

const CONFIG_KEYS: [&str; 14] = [
    "c",
    "m",
    "theta",
    "lambda",
    "gamma",
    "lr",
    "batch_size",
    "epochs_stage1a",
    "outer_rounds_max",
    "patience",
    "kappa",
    "L",
    "seed",
    "snr_db_list",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.m));
        }
        for (name, v) in [("theta", self.theta), ("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and ≥ 0, got {v}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad(format!("init_std must be finite and ≥ 0, got {}", self.init_std));
        }
        if self.l == 0 {
            return bad("L must be ≥ 1".into());
        }
        AssumedChannel::new(self.kappa)?;
        self.necd_config().validate()
    }

    pub fn channel(&self) -> AssumedChannel {
        AssumedChannel { kappa: self.kappa }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            margin: self.m,
            theta: self.theta,
            lambda: self.lambda,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.lr)
    }

    pub fn necd_config(&self) -> NecdTrainConfig {
        NecdTrainConfig {
            snr_db_list: self.snr_db_list.clone(),
            frames_per_epoch: self.necd_frames_per_epoch,
            epochs: self.necd_epochs,
            learning_rate: self.lr,
            batch_size: self.necd_batch_size,
            seed: self.seed,
        }
    }

    pub fn encoder_shape(&self, d_img: usize, d_attr: usize) -> EncoderShape {
        EncoderShape {
            d_img,
            d_attr,
            image_hidden: self.image_hidden.clone(),
            attribute_hidden: self.attribute_hidden.clone(),
            code_len: self.c,
        }
    }

    /// Overrides fields from `key = value` lines. `#` starts a comment;
    /// `snr_db_list` takes comma- or space-separated values.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| Error::parse(lineno, format!("{key}: {e}")));
            let int = |v: &str| v.parse::<usize>().map_err(|e| Error::parse(lineno, format!("{key}: {e}")));
            match key {
                "c" => self.c = int(value)?,
                "m" => self.m = num(value)?,
                "theta" => self.theta = num(value)?,
                "lambda" => self.lambda = num(value)?,
                "gamma" => self.gamma = num(value)?,
                "lr" => self.lr = num(value)?,
                "batch_size" => self.batch_size = int(value)?,
                "epochs_stage1a" => self.epochs_stage1a = int(value)?,
                "outer_rounds_max" => self.outer_rounds_max = int(value)?,
                "patience" => self.patience = int(value)?,
                "kappa" => self.kappa = num(value)?,
                "L" => self.l = int(value)?,
                "seed" => {
                    self.seed = value
                        .parse::<u64>()
                        .map_err(|e| Error::parse(lineno, format!("seed: {e}")))?
                }
                "snr_db_list" => {
                    self.snr_db_list = value
                        .split(|ch: char| ch == ',' || ch.is_whitespace())
                        .filter(|s| !s.is_empty())
                        .map(num)
                        .collect::<Result<Vec<_>>>()?
                }
                other => {
                    return Err(Error::parse(
                        lineno,
                        format!("unknown key {other:?}; expected one of {}", CONFIG_KEYS.join(", ")),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_config_text(text)?;
        Ok(cfg)
    }

    pub fn to_config_text(&self) -> String {
        let snr: Vec<String> = self.snr_db_list.iter().map(f64::to_string).collect();
        format!(
            "c = {}\nm = {}\ntheta = {}\nlambda = {}\ngamma = {}\nlr = {}\nbatch_size = {}\nepochs_stage1a = {}\n\
             outer_rounds_max = {}\npatience = {}\nkappa = {}\nL = {}\nseed = {}\nsnr_db_list = {}\n",
            self.c,
            self.m,
            self.theta,
            self.lambda,
            self.gamma,
            self.lr,
            self.batch_size,
            self.epochs_stage1a,
            self.outer_rounds_max,
            self.patience,
            self.kappa,
            self.l,
            self.seed,
            snr.join(", ")
        )
    }
}

/// The BCH code of length `c` with the smallest `t ≥ m`.
pub fn select_code(m: f64, c: usize) -> Result<LinearCode> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Parameter(format!("margin must be finite and ≥ 0, got {m}")));
    }
    let need = m.ceil() as usize;
    let codes = available_bch_codes(c)?;
    let Some(p) = codes.iter().find(|p| p.t >= need) else {
        return Err(Error::UnsatisfiableMargin {
            n: c,
            margin: need,
            available: codes.iter().map(|p| (p.k, p.t)).collect(),
        });
    };
    let field_degree = (c + 1).trailing_zeros() as usize;
    build_bch(field_degree, p.t)
}

/// `l_v = κ·a_v`; activation `+1` reads as bit 0.
pub fn activation_to_llr(a: &[f64], channel: AssumedChannel) -> Result<LlrVector> {
    LlrVector::new(a.iter().map(|&v| channel.kappa * v).collect())
}

fn check_finite(values: &[f64], epoch: usize, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::TrainingFailure {
            epoch,
            detail: format!("non-finite {what}"),
        })
    }
}

/// Encoder parameters plus the optimiser state and shuffling stream that
/// persist across the outer rounds.
#[derive(Clone, Debug)]
pub struct EncoderTrainer {
    pub params: EncoderParams,
    cfg: TrainConfig,
    stage1: [Adam; 2],
    stage2: [Adam; 2],
    rng1: ChaCha8Rng,
    rng2: ChaCha8Rng,
    epochs_done: usize,
}

fn slot(modality: Modality) -> usize {
    match modality {
        Modality::Image => 0,
        Modality::Attribute => 1,
    }
}

impl EncoderTrainer {
    /// Fresh encoders sized for `data`, initialised from the config seed.
    pub fn new(data: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Parameter("training set is empty".into()));
        }
        let shape = cfg.encoder_shape(data.d_img(), data.d_attr());
        let params = EncoderParams::random(&shape, cfg.init_std, &mut rng_stream(cfg.seed, STREAM_INIT))?;
        Ok(Self::with_params(params, cfg))
    }

    pub fn with_params(params: EncoderParams, cfg: &TrainConfig) -> Self {
        let adam = |m: &crate::mlp::Mlp| Adam::new(cfg.adam(), m.param_count());
        Self {
            stage1: [adam(&params.image), adam(&params.attribute)],
            stage2: [adam(&params.image), adam(&params.attribute)],
            params,
            cfg: cfg.clone(),
            rng1: rng_stream(cfg.seed, STREAM_STAGE1),
            rng2: rng_stream(cfg.seed, STREAM_STAGE2),
            epochs_done: 0,
        }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Parameter("training set is empty".into()));
        }
        let shape = self.params.shape();
        if data.d_img() != shape.d_img {
            return Err(Error::dim(shape.d_img, data.d_img()));
        }
        if data.d_attr() != shape.d_attr {
            return Err(Error::dim(shape.d_attr, data.d_attr()));
        }
        Ok(())
    }

    /// `epochs` of alternating minimisation: each epoch updates the image
    /// branch over every mini-batch, then the attribute branch. Returns the
    /// objective summed over the attribute pass of each epoch.
    pub fn stage1a(&mut self, data: &Dataset, epochs: usize) -> Result<Vec<ObjectiveParts>> {
        self.check_data(data)?;
        let w = self.cfg.loss_weights();
        let mut history = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            let epoch = self.epochs_done;
            order.shuffle(&mut self.rng1);
            let mut last = ObjectiveParts::default();
            for modality in [Modality::Image, Modality::Attribute] {
                last = ObjectiveParts::default();
                for chunk in order.chunks(self.cfg.batch_size) {
                    let batch = data.batch(chunk);
                    let (parts, grad) = branch_gradient(&self.params, &batch, &w, modality)?;
                    check_finite(&[parts.total], epoch, "objective")?;
                    check_finite(&grad, epoch, "gradient")?;
                    self.stage1[slot(modality)].update(self.params.branch_mut(modality).params_mut(), &grad);
                    last += parts;
                }
            }
            self.epochs_done += 1;
            history.push(last);
        }
        Ok(history)
    }

    /// One pass of cross-entropy refinement towards NECD-decoded targets, per
    /// modality. Targets are computed once from the activations at entry.
    /// Returns the mean per-sample `L_C` of each modality at entry.
    pub fn stage2(&mut self, data: &Dataset, necd: &NecdNetwork) -> Result<(f64, f64)> {
        self.check_data(data)?;
        if necd.graph().n_var() != self.params.code_len() {
            return Err(Error::dim(self.params.code_len(), necd.graph().n_var()));
        }
        let channel = self.cfg.channel();
        let all: Vec<usize> = (0..data.len()).collect();
        let images = data.image_matrix(&all);
        let attributes = data.attribute_matrix(&all);
        let mut entry_losses = [0.0; 2];
        let mut order = all.clone();
        order.shuffle(&mut self.rng2);
        for (modality, inputs) in [(Modality::Image, &images), (Modality::Attribute, &attributes)] {
            let activations = self.params.branch(modality).forward(inputs.view())?;
            let targets = necd_targets(activations.view(), necd, channel)?;
            entry_losses[slot(modality)] = refinement_loss(activations.view(), &targets)?.0 / data.len() as f64;
            if self.cfg.gamma == 0.0 {
                continue;
            }
            for chunk in order.chunks(self.cfg.batch_size) {
                let x = inputs.select(ndarray::Axis(0), chunk);
                let mlp = self.params.branch(modality);
                let trace = mlp.forward_trace(x.view())?;
                let batch_targets = targets.select(ndarray::Axis(0), chunk);
                let (loss, mut grad_out) = refinement_loss(trace.output().view(), &batch_targets)?;
                check_finite(&[loss], self.epochs_done, "refinement loss")?;
                grad_out *= self.cfg.gamma / chunk.len() as f64;
                let grad = mlp.backward(&trace, grad_out.view());
                check_finite(&grad, self.epochs_done, "refinement gradient")?;
                self.stage2[slot(modality)].update(self.params.branch_mut(modality).params_mut(), &grad);
            }
        }
        Ok((entry_losses[0], entry_losses[1]))
    }
}

/// NECD hard decisions for every activation row.
pub fn necd_targets(activations: ArrayView2<'_, f64>, necd: &NecdNetwork, channel: AssumedChannel) -> Result<Array2<u8>> {
    let (n, c) = activations.dim();
    let mut out = Array2::zeros((n, c));
    for (i, row) in activations.rows().into_iter().enumerate() {
        let llr = activation_to_llr(&row.to_vec(), channel)?;
        let bits = necd.forward(&llr)?.hard_bits;
        for (b, bit) in bits.into_iter().enumerate() {
            out[[i, b]] = bit;
        }
    }
    Ok(out)
}

/// Summed bitwise cross-entropy between target bits and `P(bit 1) = (1 − a)/2`,
/// with its gradient with respect to `a`. Log arguments are floored; a floored
/// term contributes no gradient.
pub fn refinement_loss(activations: ArrayView2<'_, f64>, targets: &Array2<u8>) -> Result<(f64, Array2<f64>)> {
    if activations.dim() != targets.dim() {
        return Err(Error::dim(targets.len(), activations.len()));
    }
    let mut grad = Array2::zeros(activations.dim());
    let mut loss = 0.0;
    for ((idx, &a), &t) in activations.indexed_iter().zip(targets.iter()) {
        let p1 = (1.0 - a) / 2.0;
        if t == 1 {
            if p1 > PROB_FLOOR {
                loss -= p1.ln();
                grad[idx] = 0.5 / p1;
            } else {
                loss -= PROB_FLOOR.ln();
            }
        } else {
            let p0 = 1.0 - p1;
            if p0 > PROB_FLOOR {
                loss -= p0.ln();
                grad[idx] = -0.5 / p0;
            } else {
                loss -= PROB_FLOOR.ln();
            }
        }
    }
    Ok((loss, grad))
}

/// Encoders after `epochs_stage1a` epochs from a fresh initialisation.
pub fn stage1a(data: &Dataset, cfg: &TrainConfig) -> Result<EncoderParams> {
    let mut trainer = EncoderTrainer::new(data, cfg)?;
    trainer.stage1a(data, cfg.epochs_stage1a)?;
    Ok(trainer.params)
}

/// Selects the code and trains an NECD on its Tanner graph.
pub fn stage1b(cfg: &TrainConfig) -> Result<(LinearCode, NecdNetwork)> {
    cfg.validate()?;
    let code = select_code(cfg.m, cfg.c)?;
    let net = NecdNetwork::new(TannerGraph::from_parity_check(code.parity_check())?, cfg.l)?;
    let net = necd_train(net, &code, &cfg.necd_config())?;
    Ok((code, net))
}

/// One refinement pass from fresh optimiser state.
pub fn stage2_refine(encoders: EncoderParams, necd: &NecdNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<EncoderParams> {
    cfg.validate()?;
    let mut trainer = EncoderTrainer::with_params(encoders, cfg);
    trainer.stage2(data, necd)?;
    Ok(trainer.params)
}

/// Training-set MAP: every sample's attribute code queries the image codes;
/// relevant items share the query's attribute vector.
pub fn training_map(params: &EncoderParams, data: &Dataset) -> Result<MapSummary> {
    let all: Vec<usize> = (0..data.len()).collect();
    let gallery = hash_rows(params.image.forward(data.image_matrix(&all).view())?.view());
    let queries = hash_rows(params.attribute.forward(data.attribute_matrix(&all).view())?.view());
    let index = RetrievalIndex::from_codes(params.code_len(), gallery, data.metadata())?;
    let mut lists = Vec::with_capacity(queries.len());
    for (q, code) in queries.iter().enumerate() {
        let ranked = index.rank(code)?;
        lists.push(ranked.iter().map(|&(id, _)| data.similar(id, q)).collect::<Vec<bool>>());
    }
    mean_average_precision(&lists)
}

/// Hash code of an attribute query: the mask itself is the attribute input.
pub fn query_code(params: &EncoderParams, query: &QuerySpec) -> Result<crate::adcmh::HashCode> {
    Ok(hash(&params.attribute_forward(query.mask())?))
}

/// `count` distinct-index masks with `arity` ones each.
pub fn random_queries(d_attr: usize, arity: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<QuerySpec>> {
    if arity == 0 || arity > d_attr {
        return Err(Error::Parameter(format!("query arity {arity} outside 1..={d_attr}")));
    }
    (0..count)
        .map(|_| {
            let mut idx = index::sample(rng, d_attr, arity).into_vec();
            idx.sort_unstable();
            QuerySpec::from_indices(d_attr, &idx)
        })
        .collect()
}

/// Ranks the image codes of `gallery` for each attribute query.
pub fn evaluate_queries(params: &EncoderParams, gallery: &Dataset, queries: &[QuerySpec]) -> Result<Vec<RankedQuery>> {
    let all: Vec<usize> = (0..gallery.len()).collect();
    let codes = hash_rows(params.image.forward(gallery.image_matrix(&all).view())?.view());
    let index = RetrievalIndex::from_codes(params.code_len(), codes, gallery.metadata())?;
    queries
        .iter()
        .map(|q| RankedQuery::evaluate(&index, q, &query_code(params, q)?))
        .collect()
}

/// MAP of `count` random attribute queries of the given arity against `gallery`.
pub fn attribute_query_map(
    params: &EncoderParams,
    gallery: &Dataset,
    arity: usize,
    count: usize,
    seed: u64,
) -> Result<MapSummary> {
    let mut rng = rng_stream(seed, arity as u64);
    let queries = random_queries(gallery.d_attr(), arity, count, &mut rng)?;
    let ranked = evaluate_queries(params, gallery, &queries)?;
    let lists: Vec<Vec<bool>> = ranked.iter().map(RankedQuery::relevance_list).collect();
    mean_average_precision(&lists)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub objective: ObjectiveParts,
    pub lc_image: f64,
    pub lc_attr: f64,
    pub train_map: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Round 0 is the state after Stage 1(a) and 1(b).
    pub rounds: Vec<RoundRecord>,
}

impl TrainReport {
    pub fn stage1a_map(&self) -> Option<f64> {
        self.rounds.first().map(|r| r.train_map)
    }

    pub fn final_map(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.train_map)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("round, J, dll, quant, balance, Lc_image, Lc_attr, train_map\n");
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "{}, {}, {}, {}, {}, {}, {}, {}",
                r.round,
                r.objective.total,
                r.objective.dll,
                r.objective.quantization,
                r.objective.balance,
                r.lc_image,
                r.lc_attr,
                r.train_map
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub encoders: EncoderParams,
    pub code: LinearCode,
    pub necd: NecdNetwork,
    pub report: TrainReport,
}

fn round_record(round: usize, params: &EncoderParams, necd: &NecdNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<RoundRecord> {
    let all: Vec<usize> = (0..data.len()).collect();
    let objective = batch_objective(params, &data.batch(&all), &cfg.loss_weights())?;
    let mut lc = [0.0; 2];
    for modality in [Modality::Image, Modality::Attribute] {
        let inputs = match modality {
            Modality::Image => data.image_matrix(&all),
            Modality::Attribute => data.attribute_matrix(&all),
        };
        let act = params.branch(modality).forward(inputs.view())?;
        let targets = necd_targets(act.view(), necd, cfg.channel())?;
        lc[slot(modality)] = refinement_loss(act.view(), &targets)?.0 / data.len() as f64;
    }
    Ok(RoundRecord {
        round,
        objective,
        lc_image: lc[0],
        lc_attr: lc[1],
        train_map: training_map(params, data)?.map,
    })
}

/// Full alternating training. Round 1 is a Stage 2 pass; every later round
/// runs `epochs_stage1a` Stage 1(a) epochs and then a Stage 2 pass. Training
/// stops after `patience` rounds without a MAP gain above 1e−4.
pub fn train_dndcmh(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut trainer = EncoderTrainer::new(data, cfg)?;
    trainer.stage1a(data, cfg.epochs_stage1a)?;
    let (code, necd) = stage1b(cfg)?;
    let mut rounds = vec![round_record(0, &trainer.params, &necd, data, cfg)?];
    let mut best = rounds[0].train_map;
    let mut stale = 0usize;
    for round in 1..=cfg.outer_rounds_max {
        if round > 1 {
            trainer.stage1a(data, cfg.epochs_stage1a)?;
        }
        trainer.stage2(data, &necd)?;
        let record = round_record(round, &trainer.params, &necd, data, cfg)?;
        if record.train_map > best + MAP_IMPROVEMENT {
            best = record.train_map;
            stale = 0;
        } else {
            stale += 1;
        }
        rounds.push(record);
        if stale >= cfg.patience.max(1) {
            break;
        }
    }
    Ok(TrainOutput {
        encoders: trainer.params,
        code,
        necd,
        report: TrainReport { rounds },
    })
}
