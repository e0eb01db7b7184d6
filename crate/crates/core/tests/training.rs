use clic_core::checkpoint::Checkpoint;
use clic_core::encoder::momentum_update;
use clic_core::trainer::{Prior, TrainConfig, TrainData, Trainer};

fn small(extra: &str) -> TrainConfig {
    let mut cfg = TrainConfig::parse(
        "synth_n = 64\nsynth_side = 64\nresolution = 32\nbatch_size = 16\nqueue_capacity = 64\nepochs = 2\nseed = 11",
    )
    .unwrap();
    for line in extra.lines() {
        let (k, v) = line.split_once('=').unwrap();
        cfg.set(k.trim(), v.trim()).unwrap();
    }
    cfg
}

fn ema(losses: &[f64], span: usize) -> Vec<f64> {
    let a = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(losses.len());
    let mut acc = losses[0];
    for &l in losses {
        acc = a * l + (1.0 - a) * acc;
        out.push(acc);
    }
    out
}

#[test]
fn smoothed_loss_descends_at_a_fixed_queue_size() {
    // The chance level of the contrastive loss is ln(K + 1) for K negatives,
    // so raw losses are only comparable while K is constant. A queue as large
    // as one batch is full from the warm-up on.
    let cfg = small("synth_n = 320\nqueue_capacity = 16\nepochs = 10\nseed = 3");
    let data = TrainData::prepare(&cfg).unwrap();
    let mut t = Trainer::new(cfg).unwrap();
    t.fit(&data, |_| Ok(())).unwrap();
    assert!(t.state.queue.is_full());
    let totals: Vec<f64> = t.log.iter().map(|r| r.total).collect();
    let infonce: Vec<f64> = t.log.iter().map(|r| r.infonce).collect();
    assert_eq!(totals.len(), 200);
    for losses in [totals, infonce] {
        let smooth = ema(&losses, 50);
        assert!(smooth[199] < smooth[49], "ema at 50 {} vs at 200 {}", smooth[49], smooth[199]);
    }
}

#[test]
fn key_encoder_follows_the_momentum_rule_only() {
    let cfg = small("");
    let data = TrainData::prepare(&cfg).unwrap();
    let mut t = Trainer::new(cfg).unwrap();
    t.run_epoch(&data).unwrap();
    let order = t.epoch_order(data.len(), 1);
    let batch = &order[..16];
    let pairs = t.batch_pairs(&data, 1, batch).unwrap();
    let priors: Vec<f32> = batch.iter().map(|&i| data.priors[i]).collect();
    let key_before = t.state.key.clone();
    let query_before = t.state.query.clone();
    t.train_step(&pairs, &priors, 0.03).unwrap();
    assert_ne!(t.state.query, query_before);
    let expect = momentum_update(&key_before, &t.state.query, t.cfg.m).unwrap();
    assert_eq!(t.state.key, expect);
}

#[test]
fn queue_holds_the_latest_keys_in_order() {
    let cfg = small("");
    let data = TrainData::prepare(&cfg).unwrap();
    let mut t = Trainer::new(cfg).unwrap();
    t.run_epoch(&data).unwrap();
    // warm-up batch plus four steps of 16 overflow 64 slots: only the last
    // four batches remain
    assert!(t.state.queue.is_full());
    let q = t.state.queue.negatives();
    let d = t.state.query.arch().embed_dim;
    assert_eq!(q.shape(), &[64, d]);
    for row in q.data().chunks(d) {
        let norm: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-4, "{norm}");
    }
}

#[test]
fn zero_lambda_matches_no_prior_bit_for_bit() {
    let data_cfg = small("lambda = 0");
    let data = TrainData::prepare(&data_cfg).unwrap();
    let mut with = Trainer::new(data_cfg.clone()).unwrap();
    let mut without = Trainer::new(TrainConfig {
        prior: Prior::None,
        ..data_cfg
    })
    .unwrap();
    with.fit(&data, |_| Ok(())).unwrap();
    without.fit(&data, |_| Ok(())).unwrap();
    let totals = |t: &Trainer| t.log.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>();
    assert_eq!(totals(&with), totals(&without));
    assert_eq!(with.state, without.state);
    assert!(with.log.iter().any(|r| r.cal > 0.0));
    assert!(without.log.iter().all(|r| r.cal == 0.0));
}

#[test]
fn resumed_training_equals_uninterrupted() {
    let cfg = small("epochs = 3");
    let data = TrainData::prepare(&cfg).unwrap();
    let mut full = Trainer::new(cfg.clone()).unwrap();
    full.fit(&data, |_| Ok(())).unwrap();

    let mut first = Trainer::new(cfg).unwrap();
    first.run_epoch(&data).unwrap();
    let bytes = first.to_checkpoint().to_bytes().unwrap();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ckpt.to_bytes().unwrap(), bytes);
    let mut resumed = Trainer::from_checkpoint(&ckpt).unwrap();
    resumed.fit(&data, |_| Ok(())).unwrap();

    assert_eq!(resumed.state, full.state);
    let tail: Vec<_> = full.log[first.log.len()..].to_vec();
    assert_eq!(resumed.log, tail);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let cfg = small("epochs = 1");
    let data = TrainData::prepare(&cfg).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut t = Trainer::new(cfg.clone()).unwrap();
            t.fit(&data, |_| Ok(())).unwrap();
            t.to_checkpoint().to_bytes().unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn crop_merge_multiplies_the_corpus() {
    let cfg = small("crop_merge = 2\nsynth_n = 8");
    let data = TrainData::prepare(&cfg).unwrap();
    // sources are kept alongside their merged images
    assert_eq!(data.len(), 8 * (1 + clic_core::views::merged_count(2)));
    let sampled = TrainData::prepare(&small("sample_n = 20\nsampling = uniform")).unwrap();
    assert_eq!(sampled.len(), 20);
}
