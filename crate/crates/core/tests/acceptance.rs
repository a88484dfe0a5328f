//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;

use dndcmh_core::adcmh::{
    batch_objective, dll_prob, dll_prob_at, gradients, EncoderParams, EncoderShape, InputBatch, LossWeights,
};
use dndcmh_core::bp::{bp_decode_with, BpConfig, TannerGraph};
use dndcmh_core::channel::{rng_stream, LlrVector};
use dndcmh_core::codes::{available_bch_codes, build_bch, BddOutcome, BoundedDistanceDecoder, LinearCode};
use dndcmh_core::dataio::{generate_synthetic, SyntheticSpec};
use dndcmh_core::necd::{
    ber_eval, necd_build, necd_forward, necd_train, BpReference, NecdNetwork, NecdTrainConfig, Transmission,
    NECD_ATANH_CLAMP,
};
use dndcmh_core::pipeline::{
    attribute_query_map, evaluate_queries, random_queries, stage1a, train_dndcmh, training_map, TrainConfig,
};
use dndcmh_core::retrieval::{average_precision, mean_average_precision, ndcg_at_k, write_rankings};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fmt_err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bch_for(n: usize, t: usize) -> Result<LinearCode, String> {
    build_bch((n + 1).trailing_zeros() as usize, t).map_err(fmt_err)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let table: [(usize, usize); 9] = [(51, 2), (45, 3), (39, 4), (36, 5), (30, 6), (24, 7), (18, 10), (16, 11), (10, 13)];
    let listed: Vec<(usize, usize)> = available_bch_codes(63).map_err(fmt_err)?.iter().map(|p| (p.k, p.t)).collect();
    for &(k, t) in &table {
        check(listed.contains(&(k, t)), format!("(63,{k}) t={t} missing from the code list"))?;
        let code = bch_for(63, t)?;
        check((code.k(), code.t()) == (k, t), format!("build_bch(63, t={t}) gave k={} t={}", code.k(), code.t()))?;
    }
    for (n, k, t) in [(31, 21, 2), (63, 45, 3), (127, 92, 5)] {
        let code = bch_for(n, t)?;
        check(
            (code.n(), code.k(), code.t()) == (n, k, t),
            format!("expected ({n},{k},{t}), got ({},{},{})", code.n(), code.k(), code.t()),
        )?;
    }
    let mut decoded = 0usize;
    for (n, t) in [(7, 1), (15, 2)] {
        let code = bch_for(n, t)?;
        let bdd = BoundedDistanceDecoder::new(&code).map_err(fmt_err)?;
        let patterns: Vec<u32> = (0u32..1 << n).filter(|p| p.count_ones() as usize <= t).collect();
        for cw in code.codewords().map_err(fmt_err)? {
            for &p in &patterns {
                let received: Vec<u8> = cw.bits().iter().enumerate().map(|(j, &b)| b ^ ((p >> j) & 1) as u8).collect();
                match bdd.decode(&received).map_err(fmt_err)? {
                    BddOutcome::Corrected { codeword, errors } if codeword == cw && errors == p.count_ones() as usize => {}
                    other => return Err(format!("BCH({n},{}) pattern {p:b}: {other:?}", code.k())),
                }
                decoded += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("12 code parameter sets match; {decoded} error patterns corrected in {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let code = bch_for(15, 2)?;
    let graph = TannerGraph::from_parity_check(code.parity_check()).map_err(fmt_err)?;
    let iterations = 5;
    let net = necd_build(graph.clone(), iterations).map_err(fmt_err)?;
    let cfg = BpConfig::new(iterations).without_early_exit().with_clamp(NECD_ATANH_CLAMP);
    let mut rng = rng_stream(2024, 2);
    let mut worst = 0.0f64;
    let vectors = 1000;
    for i in 0..vectors {
        let scale = [1.0, 3.0, 8.0][i % 3];
        let llr = LlrVector::new((0..15).map(|_| rng.random_range(-scale..scale)).collect()).map_err(fmt_err)?;
        let nn = necd_forward(&llr, &net).map_err(fmt_err)?;
        let bp = bp_decode_with(&llr, &graph, &cfg).map_err(fmt_err)?;
        check(nn.hard_bits == bp.hard_bits, format!("vector {i}: hard decisions differ"))?;
        for (o, l) in nn.outputs.iter().zip(&bp.posteriors) {
            let expected = 1.0 / (1.0 + l.exp());
            worst = worst.max((o - expected).abs());
        }
    }
    check(worst <= 1e-9, format!("max soft-output difference {worst:e}"))?;
    Ok(format!("{vectors} vectors, hard bits identical, max soft difference {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let code = bch_for(15, 2)?;
    let graph = TannerGraph::from_parity_check(code.parity_check()).map_err(fmt_err)?;
    let net = NecdNetwork::new(graph, 5).map_err(fmt_err)?;
    let trained = necd_train(net, &code, &NecdTrainConfig { seed: 3, ..NecdTrainConfig::default() }).map_err(fmt_err)?;
    let frames = 20_000;
    let bp = BpReference::new(&code, 5).map_err(fmt_err)?;
    let base = ber_eval(&bp, &code, 4.0, frames, 77, Transmission::ZeroCodeword).map_err(fmt_err)?;
    let learned = ber_eval(&trained, &code, 4.0, frames, 77, Transmission::ZeroCodeword).map_err(fmt_err)?;
    let elapsed = start.elapsed();
    let detail = format!(
        "BER at 4 dB over {frames} frames: trained {:.3e} vs BP {:.3e} (FER {:.3e} vs {:.3e}), {elapsed:.1?}",
        learned.ber, base.ber, learned.fer, base.fer
    );
    check(learned.ber <= base.ber, detail.clone())?;
    check(elapsed < Duration::from_secs(600), detail.clone())?;
    Ok(detail)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn adcmh_instance(seed: u64) -> Result<f64, String> {
    let mut rng = rng_stream(seed, 40);
    let (n, c, d_img, d_attr) = (4, 8, 5, 6);
    let shape = EncoderShape {
        d_img,
        d_attr,
        image_hidden: vec![7],
        attribute_hidden: vec![6, 5],
        code_len: c,
    };
    let mut params = EncoderParams::random(&shape, 0.6, &mut rng).map_err(fmt_err)?;
    for p in params.image.params_mut().iter_mut().chain(params.attribute.params_mut()) {
        *p += rng.random_range(-0.05..0.05);
    }
    let batch = InputBatch {
        images: Array2::from_shape_fn((n, d_img), |_| rng.random_range(-1.5..1.5)),
        attributes: Array2::from_shape_fn((n, d_attr), |_| f64::from(rng.random_range(0..2u8))),
        similarity: Array2::from_shape_fn((n, n), |_| f64::from(rng.random_range(0..2u8))),
    };
    let w = LossWeights {
        margin: rng.random_range(0.5..3.0),
        theta: rng.random_range(0.1..2.0),
        lambda: rng.random_range(0.1..2.0),
    };
    let g = gradients(&params, &batch, &w).map_err(fmt_err)?;
    let analytic: Vec<f64> = g.image.iter().chain(&g.attribute).copied().collect();
    let h = 1e-6;
    let mut fd = Vec::with_capacity(analytic.len());
    let total = params.image.param_count() + params.attribute.param_count();
    for i in 0..total {
        let eval = |delta: f64| -> Result<f64, String> {
            let mut p = params.clone();
            let ni = p.image.param_count();
            if i < ni {
                p.image.params_mut()[i] += delta;
            } else {
                p.attribute.params_mut()[i - ni] += delta;
            }
            Ok(batch_objective(&p, &batch, &w).map_err(fmt_err)?.total)
        };
        fd.push((eval(h)? - eval(-h)?) / (2.0 * h));
    }
    Ok(rel_err(&analytic, &fd))
}

fn necd_instance(seed: u64) -> Result<f64, String> {
    let mut rng = rng_stream(seed, 41);
    let code = if seed.is_multiple_of(2) { bch_for(7, 1)? } else { bch_for(15, 2)? };
    let graph = TannerGraph::from_parity_check(code.parity_check()).map_err(fmt_err)?;
    let mut net = NecdNetwork::new(graph, 1 + (seed as usize % 3)).map_err(fmt_err)?;
    let w: Vec<f64> = net.weights().iter().map(|_| rng.random_range(0.5..1.5)).collect();
    net.set_weights(&w).map_err(fmt_err)?;
    let n = code.n();
    let frames = 3;
    let llrs: Vec<LlrVector> = (0..frames)
        .map(|_| LlrVector::new((0..n).map(|_| rng.random_range(-2.5..2.5)).collect()))
        .collect::<Result<_, _>>()
        .map_err(fmt_err)?;
    let targets: Vec<Vec<u8>> = (0..frames).map(|_| vec![0u8; n]).collect();
    let (_, grad) = net.loss_and_gradient(&llrs, &targets).map_err(fmt_err)?;
    let h = 1e-6;
    let mut fd = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let eval = |delta: f64| -> Result<f64, String> {
            let mut p = net.clone();
            let mut ww = w.clone();
            ww[i] += delta;
            p.set_weights(&ww).map_err(fmt_err)?;
            p.loss(&llrs, &targets).map_err(fmt_err)
        };
        fd.push((eval(h)? - eval(-h)?) / (2.0 * h));
    }
    Ok(rel_err(&grad, &fd))
}

fn criterion_4() -> Outcome {
    let instances = 20;
    let mut worst_adcmh = 0.0f64;
    let mut worst_necd = 0.0f64;
    for s in 0..instances {
        worst_adcmh = worst_adcmh.max(adcmh_instance(s)?);
        worst_necd = worst_necd.max(necd_instance(s)?);
    }
    let detail = format!("{instances} instances each; worst relative error encoder {worst_adcmh:.2e}, decoder {worst_necd:.2e}");
    check(worst_adcmh < 1e-5 && worst_necd < 1e-5, detail.clone())?;
    Ok(detail)
}

fn criterion_5() -> Outcome {
    for m in [0.5, 1.0, 6.0, 12.0, 24.0] {
        check(dll_prob_at(0.0, m) == 1.0, format!("r(0) != 1 for m={m}"))?;
        let want = (1.0 + (-m).exp()) / 2.0;
        let got = dll_prob_at(m, m);
        check((got - want).abs() <= 1e-12, format!("r(m) = {got} vs {want} for m={m}"))?;
        let grid: Vec<f64> = (0..100).map(|i| dll_prob_at(3.0 * m * i as f64 / 99.0, m)).collect();
        check(grid.windows(2).all(|w| w[1] < w[0]), format!("not strictly decreasing for m={m}"))?;
    }
    let p = [0.5, -0.5, 0.25];
    check(dll_prob(&p, &p, 6.0).map_err(fmt_err)? == 1.0, "identical vectors do not give 1")?;
    Ok("r(0)=1 exactly, r(m) closed form within 1e-12 and strict decrease on 100-point grids for 5 margins".into())
}

fn criterion_6() -> Outcome {
    let code = LinearCode::repetition(3).map_err(fmt_err)?;
    let graph = TannerGraph::from_parity_check(code.parity_check()).map_err(fmt_err)?;
    let cfg = BpConfig::new(5).without_early_exit();
    let codewords = code.codewords().map_err(fmt_err)?;
    let mut rng = rng_stream(6, 6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let l: Vec<f64> = (0..3).map(|_| rng.random_range(-8.0..8.0)).collect();
        let out = bp_decode_with(&LlrVector::new(l.clone()).map_err(fmt_err)?, &graph, &cfg).map_err(fmt_err)?;
        for v in 0..3 {
            let (mut p0, mut p1) = (0.0, 0.0);
            for cw in &codewords {
                let weight: f64 = cw.bits().iter().zip(&l).map(|(&b, &li)| if b == 0 { li / 2.0 } else { -li / 2.0 }).sum();
                if cw.bits()[v] == 0 {
                    p0 += weight.exp();
                } else {
                    p1 += weight.exp();
                }
            }
            worst = worst.max((out.posteriors[v] - (p0 / p1).ln()).abs());
        }
    }
    check(worst <= 1e-9, format!("max posterior error {worst:e}"))?;
    Ok(format!("1000 inputs, max posterior error {worst:.2e}"))
}

fn e2e_config() -> TrainConfig {
    TrainConfig {
        c: 63,
        m: 6.0,
        lr: 1e-4,
        epochs_stage1a: 100,
        outer_rounds_max: 4,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let full = generate_synthetic(&SyntheticSpec {
        n_subjects: 50,
        images_per_subject: 10,
        d_attr: 40,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .map_err(fmt_err)?;
    let (train, test) = full.split_per_subject(2);
    let cfg = e2e_config();
    let out = train_dndcmh(&train, &cfg).map_err(fmt_err)?;
    check((out.code.n(), out.code.k(), out.code.t()) == (63, 30, 6), "selected code is not BCH(63,30)")?;
    let first = out.report.stage1a_map().ok_or("empty report")?;
    let last = out.report.final_map().ok_or("empty report")?;
    let maps: Vec<f64> = (1..=3)
        .map(|a| attribute_query_map(&out.encoders, &test, a, 300, 5).map(|s| s.map))
        .collect::<Result<_, _>>()
        .map_err(fmt_err)?;
    let rounds = out.report.rounds.len() - 1;
    let epochs = cfg.epochs_stage1a * rounds.max(1);
    let control = stage1a(&train, &TrainConfig { epochs_stage1a: epochs, ..cfg.clone() }).map_err(fmt_err)?;
    let control_map = training_map(&control, &train).map_err(fmt_err)?.map;
    let elapsed = start.elapsed();
    let detail = format!(
        "train MAP {last:.4} after {rounds} rounds vs {first:.4} after stage 1(a) \
         (control: stage 1(a) alone for {epochs} epochs gives {control_map:.4}); \
         test MAP single {:.4} double {:.4} triple {:.4}; {elapsed:.1?}",
        maps[0],
        maps[1],
        maps[2]
    );
    check(last >= first, detail.clone())?;
    check(maps[0] >= maps[1] && maps[1] >= maps[2], detail.clone())?;
    check(elapsed < Duration::from_secs(1800), detail.clone())?;
    Ok(detail)
}

fn criterion_8() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let ap = |r: &[u8]| average_precision(&r.iter().map(|&x| x == 1).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    check(close(ap(&[1, 0, 1]), 5.0 / 6.0), "AP(1,0,1) != 5/6")?;
    check(close(ap(&[0, 1, 0, 0]), 0.5), "AP(0,1,0,0) != 1/2")?;
    check(close(ap(&[1, 1, 0, 0]), 1.0), "AP(1,1,0,0) != 1")?;
    check(close(ap(&[0, 0, 1, 1]), (1.0 / 3.0 + 2.0 / 4.0) / 2.0), "AP(0,0,1,1) != 5/12")?;
    let map = mean_average_precision(&[vec![true, false, true], vec![false, true], vec![false, false]]).map_err(fmt_err)?;
    check(close(map.map, (5.0 / 6.0 + 0.5) / 2.0) && map.queries == 2 && map.excluded == 1, "MAP fixture")?;
    check(mean_average_precision(&[vec![false, false]]).is_err(), "MAP with no relevant item should be undefined")?;
    let ndcg = |g: &[f64], k: usize| ndcg_at_k(g, k).unwrap_or(f64::NAN);
    check(close(ndcg(&[0.0, 1.0], 2), 1.0 / 3f64.log2()), "NDCG(0,1)@2 != 0.6309")?;
    check((ndcg(&[0.0, 1.0], 2) - 0.6309).abs() < 1e-4, "NDCG(0,1)@2 not ≈ 0.6309")?;
    check(ndcg(&[3.0, 2.0, 1.0, 0.0], 4) == 1.0, "perfect graded ranking != 1")?;
    check(ndcg(&[1.0, 1.0, 0.0], 3) == 1.0, "perfect binary ranking != 1")?;
    check(close(ndcg(&[2.0, 0.0, 3.0], 1), 3.0 / 7.0), "NDCG@1 fixture")?;
    let dcg = 1.0 + 1.0 / 2.0;
    let idcg = 1.0 + 1.0 / 3f64.log2();
    check(close(ndcg(&[1.0, 0.0, 1.0], 3), dcg / idcg), "NDCG(1,0,1)@3 fixture")?;
    check(ndcg_at_k(&[0.0, 0.0], 2).is_err(), "all-zero NDCG should be undefined")?;
    Ok("5 AP, 2 MAP and 7 NDCG fixtures reproduced; perfect rankings give exactly 1".into())
}

struct RunArtifacts {
    encoders: Vec<u8>,
    necd: Vec<u8>,
    code: String,
    report: String,
    rankings: String,
}

fn small_run() -> Result<RunArtifacts, String> {
    let full = generate_synthetic(&SyntheticSpec {
        n_subjects: 12,
        images_per_subject: 6,
        d_attr: 16,
        d_img: 24,
        seed: 21,
        ..SyntheticSpec::default()
    })
    .map_err(fmt_err)?;
    let (train, test) = full.split_per_subject(2);
    let cfg = TrainConfig {
        c: 31,
        m: 2.0,
        lr: 1e-4,
        batch_size: 32,
        epochs_stage1a: 8,
        outer_rounds_max: 2,
        image_hidden: vec![48, 48],
        attribute_hidden: vec![48, 48],
        necd_epochs: 2,
        necd_frames_per_epoch: 240,
        seed: 21,
        ..TrainConfig::default()
    };
    let out = train_dndcmh(&train, &cfg).map_err(fmt_err)?;
    let mut encoders = Vec::new();
    out.encoders.write_to(&mut encoders).map_err(fmt_err)?;
    let mut necd = Vec::new();
    out.necd.write_to(&out.code, &mut necd).map_err(fmt_err)?;
    let queries = random_queries(test.d_attr(), 2, 20, &mut rng_stream(21, 9)).map_err(fmt_err)?;
    let ranked = evaluate_queries(&out.encoders, &test, &queries).map_err(fmt_err)?;
    Ok(RunArtifacts {
        encoders,
        necd,
        code: out.code.to_descriptor(),
        report: out.report.to_text(),
        rankings: write_rankings(&ranked),
    })
}

fn criterion_9() -> Outcome {
    let a = small_run()?;
    let b = small_run()?;
    check(a.encoders == b.encoders, "encoder files differ")?;
    check(a.necd == b.necd, "decoder files differ")?;
    check(a.code == b.code, "code descriptors differ")?;
    check(a.report == b.report, "reports differ")?;
    check(a.rankings == b.rankings, "rankings differ")?;
    Ok(format!(
        "two seeded runs identical: {} B encoders, {} B decoder, {} report lines, {} ranking lines",
        a.encoders.len(),
        a.necd.len(),
        a.report.lines().count(),
        a.rankings.lines().count()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("BCH codec", criterion_1),
        ("BP/NECD equivalence", criterion_2),
        ("NECD training gain", criterion_3),
        ("gradient correctness", criterion_4),
        ("DLL closed forms", criterion_5),
        ("cycle-free BP exactness", criterion_6),
        ("end-to-end trend", criterion_7),
        ("metric correctness", criterion_8),
        ("determinism", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
