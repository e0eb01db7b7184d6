//! Acceptance suite. Prints one `criterion N ... PASS|FAIL` line per
//! criterion and exits non-zero if any fails. Pass criterion numbers as
//! arguments to run a subset.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::Rng;

use clic_core::checkpoint::Checkpoint;
use clic_core::encoder::{momentum_update, EncoderState, FaeStages};
use clic_core::eval::study::{cells, run_study, study_csv, StudyConfig, StudyName, LAMBDA_GRID};
use clic_core::eval::{fae_scores, gen_synthetic, pcc, probe_features, srcc, view_ge_pcc, SyntheticKind};
use clic_core::eval::features;
use clic_core::gradcheck;
use clic_core::image::Image;
use clic_core::metrics::global_entropy;
use clic_core::seed;
use clic_core::trainer::{FineTuneConfig, NegativeQueue, Prior, TrainConfig, TrainData, Trainer};
use clic_core::views::{crop_side, CropStrategy};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, t0: Instant, o: Outcome) -> Outcome {
    let took = t0.elapsed();
    let pass = o.pass && took < limit;
    outcome(pass, format!("{} [{:.1}s, limit {}s]", o.detail, took.as_secs_f64(), limit.as_secs()))
}

// ---- 1: entropy ---------------------------------------------------------

/// Counts each level by a full scan per level.
fn entropy_oracle(samples: &[u8]) -> f64 {
    let n = samples.len() as f64;
    let mut h = 0.0;
    for level in 0..=255u8 {
        let c = samples.iter().filter(|&&s| s == level).count();
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h / 8.0
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seed::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let lo: u8 = rng.gen();
        let hi: u8 = rng.gen_range(lo..=255);
        let samples: Vec<u8> = (0..w * h).map(|_| rng.gen_range(lo..=hi)).collect();
        let img = Image::gray(w, h, samples.clone()).unwrap();
        let got = global_entropy(&img).unwrap().value;
        worst = worst.max((got - entropy_oracle(&samples)).abs());
    }
    let constant = global_entropy(&Image::constant(16, 16, 77)).unwrap().value;
    let two = global_entropy(&Image::from_fn(16, 16, |x, _| if x < 8 { 0 } else { 255 })).unwrap().value;
    let all = global_entropy(&Image::from_fn(16, 16, |x, y| (y * 16 + x) as u8)).unwrap().value;
    let analytic = constant == 0.0 && two == 0.125 && all == 1.0;
    within(
        Duration::from_secs(5),
        t0,
        outcome(
            worst <= 1e-12 && analytic,
            format!("max |GE - oracle| = {worst:.2e}; analytic cases {constant}, {two}, {all}"),
        ),
    )
}

// ---- 2: gradients -------------------------------------------------------

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    match gradcheck::run(2024) {
        Ok(r) => {
            let cases: Vec<String> = r
                .cases
                .iter()
                .map(|c| format!("{} {:.1e} over {}", c.name, c.max_rel_err, c.checked))
                .collect();
            within(
                Duration::from_secs(60),
                t0,
                outcome(r.max_rel_err() < 1e-3, cases.join("; ")),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

// ---- 3: momentum and queue ----------------------------------------------

/// Correctly rounded `keep * k + t` computed without a fused instruction:
/// the product is exact in f64, the f64 sum's error is recovered with
/// TwoSum and settles the one case where rounding twice could go wrong.
fn fma_oracle(keep: f32, k: f32, t: f32) -> f32 {
    let a = keep as f64 * k as f64;
    let b = t as f64;
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    let r = s as f32;
    let d = s - r as f64;
    if err == 0.0 || d == 0.0 {
        return r;
    }
    let other = if d > 0.0 { r.next_up() } else { r.next_down() };
    let midpoint = other as f64 - s == -d;
    if midpoint && (err > 0.0) == (d > 0.0) {
        other
    } else {
        r
    }
}

fn criterion_3() -> Outcome {
    let arch = clic_core::encoder::Architecture::default();
    let key = EncoderState::init(arch.clone(), 1).unwrap();
    let query = EncoderState::init(arch, 2).unwrap();

    let copy = momentum_update(&key, &query, 0.0).unwrap();
    let copy_exact = copy
        .params()
        .iter()
        .zip(query.params())
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    let m = 0.999f64;
    let (keep, take) = (m as f32, (1.0 - m) as f32);
    let step = momentum_update(&key, &query, m).unwrap();
    let mut mismatches = 0;
    let mut checked = 0;
    for ((s, k), q) in step.params().iter().zip(key.params()).zip(query.params()) {
        for ((&sv, &kv), &qv) in s.data().iter().zip(k.data()).zip(q.data()) {
            let t = (take as f64 * qv as f64) as f32;
            if sv.to_bits() != fma_oracle(keep, kv, t).to_bits() {
                mismatches += 1;
            }
            checked += 1;
        }
    }

    // FIFO against a deque model
    let mut rng = seed::rng(303);
    let mut fifo_ok = true;
    let dim = 2;
    let mut next = 0u32;
    for _ in 0..10_000 {
        let cap = rng.gen_range(1..=12);
        let mut q = NegativeQueue::new(cap, dim).unwrap();
        let mut model: VecDeque<u32> = VecDeque::new();
        for _ in 0..rng.gen_range(1..=8) {
            let ids: Vec<u32> = (0..rng.gen_range(1..=2 * cap))
                .map(|_| {
                    next = next.wrapping_add(1);
                    next % 100_000
                })
                .collect();
            let rows: Vec<f32> = ids
                .iter()
                .flat_map(|&i| {
                    let a = i as f32 * 1e-3;
                    [a.cos(), a.sin()]
                })
                .collect();
            q.enqueue(&rows).unwrap();
            for id in ids {
                if model.len() == cap {
                    model.pop_front();
                }
                model.push_back(id);
            }
            let expect: Vec<f32> = model
                .iter()
                .flat_map(|&i| {
                    let a = i as f32 * 1e-3;
                    [a.cos(), a.sin()]
                })
                .collect();
            fifo_ok &= q.len() == model.len() && q.negatives().data() == &expect[..];
        }
    }
    outcome(
        copy_exact && mismatches == 0 && fifo_ok,
        format!(
            "m=0 copy bit-exact: {copy_exact}; m=0.999 {mismatches}/{checked} mismatching bits; FIFO over 10000 sequences: {fifo_ok}"
        ),
    )
}

// ---- 4: correlation -----------------------------------------------------

fn pcc_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Average rank by pairwise counting.
fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let below = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let xs = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 4.0, 5.0];
    let ys = [0.0, 1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 7.0];
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for n in 3..=8 {
        let x = &xs[..n];
        for y in permutations(&ys[..n]) {
            let (Ok(p), Ok(s)) = (pcc(x, &y), srcc(x, &y)) else {
                continue;
            };
            worst = worst.max((p - pcc_oracle(x, &y)).abs());
            worst = worst.max((s - pcc_oracle(&rank_oracle(x), &rank_oracle(&y))).abs());
            cases += 1;
        }
    }
    let mut rng = seed::rng(404);
    let mut invariant = true;
    for _ in 0..500 {
        let n = rng.gen_range(3..=8);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (p, s) = (pcc(&x, &y).unwrap(), srcc(&x, &y).unwrap());
        worst = worst.max((p - pcc_oracle(&x, &y)).abs());
        let affine: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
        let flipped: Vec<f64> = x.iter().map(|v| -0.5 * v + 1.0).collect();
        let monotone: Vec<f64> = x.iter().map(|v| v.powi(3) + v).collect();
        invariant &= (pcc(&affine, &y).unwrap() - p).abs() < 1e-12;
        invariant &= (pcc(&flipped, &y).unwrap() + p).abs() < 1e-12;
        invariant &= srcc(&monotone, &y).unwrap() == s;
        invariant &= srcc(&y, &x).unwrap() == s;
    }
    outcome(
        worst < 1e-12 && invariant,
        format!("max deviation {worst:.2e} over {cases} exhaustive cases; invariances hold: {invariant}"),
    )
}

// ---- 5 + 6: end-to-end training -----------------------------------------

fn train(cfg: &TrainConfig, data: &TrainData) -> Trainer {
    let mut t = Trainer::new(cfg.clone()).expect("trainer");
    t.fit(data, |_| Ok(())).expect("training");
    t
}

fn mean_abs_gap(enc: &EncoderState, images: &[Image], ge: &[f64]) -> f64 {
    let fae = fae_scores(enc, images, FaeStages::All).unwrap();
    fae.iter().zip(ge).map(|(f, g)| (f - g).abs()).sum::<f64>() / ge.len() as f64
}

struct Runs {
    data: TrainData,
    knobs: Vec<f64>,
    init: EncoderState,
    clic: Trainer,
    took: Duration,
}

fn clic_run() -> Runs {
    let t0 = Instant::now();
    let cfg = TrainConfig::default();
    let corpus = TrainData::synthetic(&cfg).unwrap();
    let data = TrainData::prepare(&cfg).unwrap();
    let init = Trainer::new(cfg.clone()).unwrap().state.query;
    let clic = train(&cfg, &data);
    Runs {
        data,
        knobs: corpus.knobs,
        init,
        clic,
        took: t0.elapsed(),
    }
}

fn criterion_5(r: &Runs) -> Outcome {
    let t0 = Instant::now();
    let probe = |enc: &EncoderState| {
        let f = features(enc, &r.data.images).unwrap();
        probe_features(&f, &r.knobs, 200, 200, &FineTuneConfig::default()).map(|o| o.report.pcc)
    };
    let (trained, baseline) = match (probe(&r.clic.state.query), probe(&r.init)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(false, format!("probe failed: {a:?} / {b:?}")),
    };
    let first = r.clic.log.first().map_or(f64::NAN, |l| l.total);
    let last = r.clic.log.last().map_or(f64::NAN, |l| l.total);
    let took = r.took + t0.elapsed();
    let pass = trained - baseline >= 0.2 && took < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "probe PCC trained {trained:.4} vs random init {baseline:.4} (gain {:.4}, need >= 0.2); loss {first:.4} -> {last:.4} [{:.1}s, limit 600s]",
            trained - baseline,
            took.as_secs_f64()
        ),
    )
}

fn criterion_6(r: &Runs) -> Outcome {
    let ge = &r.data.ge;
    let before = mean_abs_gap(&r.init, &r.data.images, ge);
    let after = mean_abs_gap(&r.clic.state.query, &r.data.images, ge);
    let control_cfg = TrainConfig {
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let control = train(&control_cfg, &r.data);
    let after0 = mean_abs_gap(&control.state.query, &r.data.images, ge);
    let red = 1.0 - after / before;
    let red0 = 1.0 - after0 / before;
    outcome(
        red >= 0.5 && red0 < 0.2,
        format!(
            "mean |fae - ge| {before:.4} -> {after:.4} (reduction {:.1}%, need >= 50%); lambda=0 control -> {after0:.4} (reduction {:.1}%, need < 20%)",
            100.0 * red,
            100.0 * red0
        ),
    )
}

// ---- 7: crop study ------------------------------------------------------

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let corpus = gen_synthetic(SyntheticKind::Mosaic, 500, 707).unwrap();
    let fracs = [1.0, 0.8, 144.0 / 224.0, 0.3];
    let pccs: Vec<f64> = fracs
        .iter()
        .map(|&f| {
            view_ge_pcc(&corpus.images, |img| crop_side(img.width(), img.height(), f), CropStrategy::Fa, 7).unwrap()
        })
        .collect();
    let monotone = pccs.windows(2).all(|w| w[1] <= w[0]);
    let gap = pccs[2] - pccs[3];
    within(
        Duration::from_secs(120),
        t0,
        outcome(
            monotone && gap >= 0.05,
            format!(
                "PCC at 1.0/0.8/0.643/0.3 of side: {:.4}/{:.4}/{:.4}/{:.4}; 0.643 - 0.3 = {gap:.4} (need >= 0.05)",
                pccs[0], pccs[1], pccs[2], pccs[3]
            ),
        ),
    )
}

// ---- 8: lambda sweep ----------------------------------------------------

fn small_config() -> TrainConfig {
    TrainConfig {
        synth_n: 96,
        epochs: 3,
        batch_size: 16,
        queue_capacity: 64,
        ..TrainConfig::default()
    }
}

fn criterion_8() -> Outcome {
    let base = small_config();
    let study = StudyConfig {
        base: base.clone(),
        n_labels: 40,
        test_n: 40,
        ..StudyConfig::default()
    };
    let rows = run_study(StudyName::LambdaSweep, &study).unwrap();
    let expected: Vec<String> = LAMBDA_GRID.iter().map(|l| format!("lambda={l}")).collect();
    let emitted: Vec<String> = rows.iter().map(|r| r.cell_params.clone()).collect();
    let csv = study_csv(&rows);
    let grid_ok = emitted == expected
        && csv.starts_with("study,cell_params,pcc,srcc,steps,final_loss\n")
        && csv.lines().count() == 1 + LAMBDA_GRID.len();

    let zero_cfg = cells(StudyName::LambdaSweep, &base)
        .into_iter()
        .find(|(p, _)| p == "lambda=0")
        .map(|c| c.1)
        .unwrap();
    let pure_cfg = TrainConfig {
        prior: Prior::None,
        ..zero_cfg.clone()
    };
    let zero = train(&zero_cfg, &TrainData::prepare(&zero_cfg).unwrap());
    let pure = train(&pure_cfg, &TrainData::prepare(&pure_cfg).unwrap());
    let tensors = |t: &Trainer| {
        let mut c = t.to_checkpoint();
        c.metadata.clear();
        c.to_bytes().unwrap()
    };
    let same_state = tensors(&zero) == tensors(&pure);
    let same_loss = zero
        .log
        .iter()
        .zip(&pure.log)
        .all(|(a, b)| a.total.to_bits() == b.total.to_bits() && a.infonce.to_bits() == b.infonce.to_bits())
        && zero.log.len() == pure.log.len();
    outcome(
        grid_ok && same_state && same_loss,
        format!(
            "grid {emitted:?}; lambda=0 vs pure InfoNCE: parameters/queue bit-identical {same_state}, losses bit-identical {same_loss} over {} steps",
            zero.log.len()
        ),
    )
}

// ---- 9: checkpoints -----------------------------------------------------

fn criterion_9() -> Outcome {
    let cfg = TrainConfig {
        epochs: 4,
        ..small_config()
    };
    let data = TrainData::prepare(&cfg).unwrap();
    let mut full = Trainer::new(cfg.clone()).unwrap();
    let mut saved = None;
    full.fit(&data, |t| {
        if t.state.epoch == 2 {
            saved = Some(t.to_checkpoint().to_bytes().unwrap());
        }
        Ok(())
    })
    .unwrap();
    let bytes = saved.unwrap();
    let reloaded = Trainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    let roundtrip = reloaded.to_checkpoint().to_bytes().unwrap() == bytes;

    let mut resumed = reloaded;
    let done = resumed.state.step;
    resumed.fit(&data, |_| Ok(())).unwrap();
    let tail = &full.log[done..];
    let matches = tail.len() == resumed.log.len()
        && tail.iter().zip(&resumed.log).all(|(a, b)| a == b);
    let final_same = full.to_checkpoint().to_bytes().unwrap() == resumed.to_checkpoint().to_bytes().unwrap();
    outcome(
        roundtrip && matches && final_same,
        format!(
            "save/load/save byte-identical {roundtrip}; resumed losses match {} steps {matches}; final states identical {final_same}",
            tail.len()
        ),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let names = [
        "",
        "entropy oracle",
        "gradient suite",
        "momentum/queue exactness",
        "correlation oracle",
        "end-to-end representation quality",
        "CAL direction",
        "crop study",
        "lambda sweep",
        "checkpoint round-trip",
    ];
    let mut failed = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!(
            "criterion {n} ({}): {} - {}",
            names[n],
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(n);
        }
    };
    let simple: [(usize, fn() -> Outcome); 4] = [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4)];
    for (n, f) in simple {
        if run(n) {
            report(n, f());
        }
    }
    if run(5) || run(6) {
        let runs = clic_run();
        if run(5) {
            report(5, criterion_5(&runs));
        }
        if run(6) {
            report(6, criterion_6(&runs));
        }
    }
    let rest: [(usize, fn() -> Outcome); 3] = [(7, criterion_7), (8, criterion_8), (9, criterion_9)];
    for (n, f) in rest {
        if run(n) {
            report(n, f());
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
