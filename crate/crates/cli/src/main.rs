//! `dndcmh`: data generation, training, encoding, retrieval, evaluation and
//! channel simulation from the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dndcmh_core::adcmh::{hash, EncoderParams, HashCode};
use dndcmh_core::channel::rng_stream;
use dndcmh_core::codes::{available_bch_codes, LinearCode};
use dndcmh_core::dataio::{generate_synthetic, Dataset, SyntheticSpec, DEFAULT_D_ATTR, DEFAULT_D_IMG};
use dndcmh_core::gf2::{bits_to_string, parse_bit_string};
use dndcmh_core::necd::{ber_eval, BpReference, HardDecoder, NecdNetwork, Transmission, DEFAULT_ITERATIONS};
use dndcmh_core::pipeline::{
    query_code, random_queries, stage1a, stage1b, stage2_refine, train_dndcmh, TrainConfig,
};
use dndcmh_core::retrieval::{
    mean_average_precision, ndcg_at_k, read_rankings, write_rankings, ItemMeta, QuerySpec, RankedQuery,
    RetrievalIndex,
};

const ENCODERS_FILE: &str = "encoders.bin";
const NECD_FILE: &str = "necd.bin";
const CODE_FILE: &str = "code.txt";
const REPORT_FILE: &str = "report.csv";

#[derive(Parser, Debug)]
#[command(name = "dndcmh", version, about = "Error-corrected cross-modal hashing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset.
    GenData(GenDataArgs),
    /// Train encoders and/or the neural decoder.
    Train(TrainArgs),
    /// Hash a dataset with one encoder branch.
    Encode(EncodeArgs),
    /// Rank an encoded gallery for attribute queries.
    Retrieve(RetrieveArgs),
    /// MAP and NDCG@k of a rankings file.
    Eval(EvalArgs),
    /// BER/FER of BP and optionally a trained decoder over AWGN.
    Ber(BerArgs),
    /// List the BCH codes of a given length.
    Codes(CodesArgs),
}

#[derive(clap::Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    subjects: usize,
    #[arg(long, default_value_t = 10)]
    images_per_subject: usize,
    #[arg(long, default_value_t = DEFAULT_D_ATTR)]
    d_attr: usize,
    #[arg(long, default_value_t = DEFAULT_D_IMG)]
    d_img: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also split off the last images of every subject into this file.
    #[arg(long, requires = "test_per_subject")]
    test_out: Option<PathBuf>,
    #[arg(long, requires = "test_out")]
    test_per_subject: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Stage {
    #[value(name = "1a")]
    S1a,
    #[value(name = "1b")]
    S1b,
    #[value(name = "2")]
    S2,
    All,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset (not needed for stage 1b).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    stage: Stage,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden layer widths of both encoder branches, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    necd_epochs: Option<usize>,
    #[arg(long)]
    necd_frames: Option<usize>,
    #[arg(long)]
    init_std: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    Image,
    Attribute,
}

#[derive(clap::Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    encoders: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    modality: ModalityArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct RetrieveArgs {
    /// Code file of the gallery, as written by `encode`.
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    encoders: PathBuf,
    /// Queried attribute indices, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "random_queries")]
    mask: Option<Vec<usize>>,
    #[arg(long, requires = "arity")]
    random_queries: Option<usize>,
    #[arg(long)]
    arity: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    rankings: PathBuf,
    /// Gallery code file; gives graded NDCG relevance from attribute metadata.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Only evaluate queries of this arity.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=3))]
    arity: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "10,50")]
    ndcg_k: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct BerArgs {
    /// Code descriptor file.
    #[arg(long)]
    code: PathBuf,
    /// Trained decoder weights.
    #[arg(long)]
    necd: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    snr: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// BP iterations; defaults to the decoder's depth.
    #[arg(long)]
    iterations: Option<usize>,
    /// Send random codewords instead of the all-zero codeword.
    #[arg(long)]
    random_codewords: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct CodesArgs {
    #[arg(long)]
    c: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Encode(a) => encode(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Eval(a) => eval(a),
        Command::Ber(a) => ber(a),
        Command::Codes(a) => codes(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        n_subjects: a.subjects,
        images_per_subject: a.images_per_subject,
        d_attr: a.d_attr,
        d_img: a.d_img,
        attribute_density: a.density,
        feature_noise_std: a.noise,
        seed: a.seed,
    })?;
    match (a.test_out, a.test_per_subject) {
        (Some(test_out), Some(k)) => {
            if k >= a.images_per_subject {
                bail!("--test-per-subject must be smaller than --images-per-subject");
            }
            let (train, test) = ds.split_per_subject(k);
            train.save(&a.out)?;
            test.save(&test_out)?;
        }
        _ => ds.save(&a.out)?,
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_encoders(path: &Path) -> Result<EncoderParams> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    EncoderParams::read_from(BufReader::new(f)).with_context(|| format!("reading encoders {}", path.display()))
}

fn save_encoders(path: &Path, params: &EncoderParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    params.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn load_code(path: &Path) -> Result<LinearCode> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    LinearCode::read_descriptor(BufReader::new(f)).with_context(|| format!("reading code {}", path.display()))
}

fn save_necd(dir: &Path, code: &LinearCode, net: &NecdNetwork) -> Result<()> {
    fs::write(dir.join(CODE_FILE), code.to_descriptor())?;
    let mut w = BufWriter::new(File::create(dir.join(NECD_FILE))?);
    net.write_to(code, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_necd(path: &Path, code: &LinearCode) -> Result<NecdNetwork> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    NecdNetwork::read_from(code, BufReader::new(f)).with_context(|| format!("reading decoder {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_config_text(&text)
            .with_context(|| format!("in config {}", path.display()))?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(h) = a.hidden {
        cfg.image_hidden = h.clone();
        cfg.attribute_hidden = h;
    }
    if let Some(e) = a.necd_epochs {
        cfg.necd_epochs = e;
    }
    if let Some(f) = a.necd_frames {
        cfg.necd_frames_per_epoch = f;
    }
    if let Some(s) = a.init_std {
        cfg.init_std = s;
    }
    cfg.validate()?;
    fs::create_dir_all(&a.out_dir)?;
    let dir = a.out_dir.as_path();
    let data = || -> Result<Dataset> {
        let path = a.data.as_deref().context("--data is required for this stage")?;
        load_dataset(path)
    };
    match a.stage {
        Stage::S1a => save_encoders(&dir.join(ENCODERS_FILE), &stage1a(&data()?, &cfg)?),
        Stage::S1b => {
            let (code, net) = stage1b(&cfg)?;
            save_necd(dir, &code, &net)
        }
        Stage::S2 => {
            let data = data()?;
            let code = load_code(&dir.join(CODE_FILE))?;
            let net = load_necd(&dir.join(NECD_FILE), &code)?;
            let enc = load_encoders(&dir.join(ENCODERS_FILE))?;
            save_encoders(&dir.join(ENCODERS_FILE), &stage2_refine(enc, &net, &data, &cfg)?)
        }
        Stage::All => {
            let out = train_dndcmh(&data()?, &cfg)?;
            save_encoders(&dir.join(ENCODERS_FILE), &out.encoders)?;
            save_necd(dir, &out.code, &out.necd)?;
            fs::write(dir.join(REPORT_FILE), out.report.to_text())?;
            Ok(())
        }
    }
}

/// One line per item: `item_id | subject_id | code bits | attributes`.
fn encode(a: EncodeArgs) -> Result<()> {
    let params = load_encoders(&a.encoders)?;
    let ds = load_dataset(&a.data)?;
    let mut out = String::new();
    for (i, r) in ds.records.iter().enumerate() {
        let act = match a.modality {
            ModalityArg::Image => params.image_forward(&r.image_features)?,
            ModalityArg::Attribute => params.attribute_forward(&r.attributes)?,
        };
        let _ = writeln!(
            out,
            "{i} | {} | {} | {}",
            r.subject_id,
            bits_to_string(&hash(&act).to_bits()),
            bits_to_string(&r.attributes)
        );
    }
    emit(Some(&a.out), &out)
}

struct CodeFile {
    codes: Vec<HashCode>,
    meta: Vec<ItemMeta>,
}

fn read_code_file(path: &Path) -> Result<CodeFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut codes = Vec::new();
    let mut meta = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), idx + 1);
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if parts.len() != 4 {
            bail!("{}: expected `item_id | subject_id | code | attributes`", ctx());
        }
        let item: usize = parts[0].parse().with_context(ctx)?;
        if item != codes.len() {
            bail!("{}: item ids must be consecutive from 0", ctx());
        }
        let subject_id: u64 = parts[1].parse().with_context(ctx)?;
        codes.push(HashCode::from_bits(&parse_bit_string(parts[2]).with_context(ctx)?));
        meta.push(ItemMeta {
            subject_id,
            attributes: parse_bit_string(parts[3]).with_context(ctx)?,
        });
    }
    Ok(CodeFile { codes, meta })
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let params = load_encoders(&a.encoders)?;
    let gallery = read_code_file(&a.index)?;
    let d_attr = params.shape().d_attr;
    let index = RetrievalIndex::from_codes(params.code_len(), gallery.codes, gallery.meta)?;
    let queries = match (a.mask, a.random_queries) {
        (Some(idx), None) => vec![QuerySpec::from_indices(d_attr, &idx)?],
        (None, Some(n)) => {
            let arity = a.arity.context("--random-queries needs --arity")?;
            random_queries(d_attr, arity, n, &mut rng_stream(a.seed, arity as u64))?
        }
        _ => bail!("give either --mask or --random-queries"),
    };
    let ranked = queries
        .iter()
        .map(|q| RankedQuery::evaluate(&index, q, &query_code(&params, q)?))
        .collect::<dndcmh_core::Result<Vec<_>>>()?;
    emit(Some(&a.out), &write_rankings(&ranked))
}

fn eval(a: EvalArgs) -> Result<()> {
    let f = File::open(&a.rankings).with_context(|| format!("opening {}", a.rankings.display()))?;
    let queries = read_rankings(BufReader::new(f))?;
    let meta = a.index.as_deref().map(read_code_file).transpose()?.map(|c| c.meta);
    let mut groups: BTreeMap<Option<usize>, Vec<&RankedQuery>> = BTreeMap::new();
    for q in &queries {
        let arity = q.arity();
        if let Some(want) = a.arity {
            if arity != Some(want as usize) {
                continue;
            }
        }
        groups.entry(arity).or_default().push(q);
    }
    if groups.is_empty() {
        bail!("no queries to evaluate");
    }
    let mut out = String::from("metric, query_arity, value\n");
    for (arity, qs) in &groups {
        let label = arity.map_or_else(|| "all".to_string(), |a| a.to_string());
        let lists: Vec<Vec<bool>> = qs.iter().map(|q| q.relevance_list()).collect();
        match mean_average_precision(&lists) {
            Ok(s) => {
                let _ = writeln!(out, "MAP, {label}, {}", s.map);
            }
            Err(e) => eprintln!("MAP for arity {label}: {e}"),
        }
        for &k in &a.ndcg_k {
            let mut total = 0.0;
            let mut used = 0usize;
            for q in qs {
                let grades = graded(q, meta.as_deref())?;
                if let Ok(v) = ndcg_at_k(&grades, k) {
                    total += v;
                    used += 1;
                }
            }
            if used > 0 {
                let _ = writeln!(out, "NDCG@{k}, {label}, {}", total / used as f64);
            }
        }
    }
    emit(a.out.as_deref(), &out)
}

/// Graded relevance per ranked item: queried attributes held, if metadata and
/// the query mask are known; otherwise the binary relevance column.
fn graded(q: &RankedQuery, meta: Option<&[ItemMeta]>) -> Result<Vec<f64>> {
    match (meta, &q.mask) {
        (Some(meta), Some(mask)) => {
            let spec = QuerySpec::new(mask.clone())?;
            q.rows
                .iter()
                .map(|r| {
                    let item = meta
                        .get(r.item_id)
                        .with_context(|| format!("item {} not in the index file", r.item_id))?;
                    Ok(spec.grade(item)? as f64)
                })
                .collect()
        }
        _ => Ok(q.rows.iter().map(|r| f64::from(r.relevance)).collect()),
    }
}

fn ber(a: BerArgs) -> Result<()> {
    let code = load_code(&a.code)?;
    let net = a.necd.as_deref().map(|p| load_necd(p, &code)).transpose()?;
    let iterations = a
        .iterations
        .or_else(|| net.as_ref().map(NecdNetwork::iterations))
        .unwrap_or(DEFAULT_ITERATIONS);
    let bp = BpReference::new(&code, iterations)?;
    let tx = if a.random_codewords {
        Transmission::RandomCodewords
    } else {
        Transmission::ZeroCodeword
    };
    let mut decoders: Vec<(&str, &dyn HardDecoder)> = vec![("bp", &bp)];
    if let Some(n) = &net {
        decoders.push(("necd", n));
    }
    let mut out = String::from("decoder,snr_db,ber,fer\n");
    for &snr in &a.snr {
        for (name, dec) in &decoders {
            let r = ber_eval(*dec, &code, snr, a.frames, a.seed, tx)?;
            let _ = writeln!(out, "{name},{snr},{},{}", r.ber, r.fer);
        }
    }
    emit(a.out.as_deref(), &out)
}

fn codes(a: CodesArgs) -> Result<()> {
    let mut out = String::from("n, k, t\n");
    for p in available_bch_codes(a.c)? {
        let _ = writeln!(out, "{}, {}, {}", p.n, p.k, p.t);
    }
    emit(None, &out)
}
