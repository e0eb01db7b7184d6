//! `clic` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::encoder::{Architecture, EncoderState, FaeStages};
use crate::error::{Error, Result};
use crate::eval::study::{run_study, study_csv, StudyConfig, StudyName};
use crate::eval::synth::{gen_synthetic_sized, SyntheticKind, DEFAULT_SIDE};
use crate::eval::{crop_study, crop_study_csv, correlate, export_features, fae_scores, features, probe_features, read_labels, to_resolution};
use crate::gradcheck;
use crate::image::Image;
use crate::io::{fmt6, list_images, load_image, read_bytes, read_to_string, write_atomic, CsvTable};
use crate::metrics::sampling::{balanced_indices, SampleTarget};
use crate::metrics::icd::icd_stats_values;
use crate::metrics::{compression_ratio, edge_density, global_entropy, uae_last, CannyParams, Metric};
use crate::trainer::{FineTuneConfig, TrainConfig, TrainData, Trainer};
use crate::views::CropStrategy;

#[derive(Parser, Debug)]
#[command(name = "clic", version, about = "Image-complexity representation learning lab")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Debug)]
struct Output {
    /// Write the CSV here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeadArgs {
    /// Fine-tuning epochs over the labeled set.
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
}

impl HeadArgs {
    fn config(&self) -> FineTuneConfig {
        FineTuneConfig {
            epochs: self.epochs,
            lr: self.lr,
            ..FineTuneConfig::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Per-image complexity scores: `path,metric,value`.
    Metrics {
        #[arg(long, default_value = "ge")]
        metric: Metric,
        /// Encoder for `uae`; a random initialization when absent.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Histogram of global entropy over a directory: `bin_low,bin_high,mass`.
    Icd {
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Entropy-balanced subset of a directory: `path,ge`.
    Sample {
        dir: PathBuf,
        #[arg(long, default_value = "uniform")]
        target: SampleTarget,
        #[arg(short)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Synthetic corpus with a known complexity knob plus `labels.csv`.
    Synth {
        #[arg(long, default_value = "noise")]
        kind: SyntheticKind,
        #[arg(short)]
        n: usize,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIDE)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Contrastive pretraining from a `key = value` config file.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fits a head on the first K labels and scores the rest.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long = "n-labels")]
        n_labels: usize,
        /// Save the checkpoint with the fitted head attached.
        #[arg(long = "save-head")]
        save_head: Option<PathBuf>,
        #[command(flatten)]
        probe: HeadArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Scores a directory with a checkpoint: `path,metric,value`. Uses the
    /// attached head when present, else the activation energy. With a
    /// `labels.csv` in the directory a correlation summary goes to stderr.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// PCC between view and source entropy per crop side and strategy.
    Cropstudy {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "240,192,144,96")]
        sides: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "oc,fa,ma")]
        strategies: Vec<CropStrategy>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Ablation sweep: `study,cell_params,pcc,srcc,steps,final_loss`.
    Study {
        #[arg(long)]
        name: StudyName,
        /// Base training config for every cell.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "n-labels", default_value_t = 200)]
        n_labels: usize,
        #[arg(long = "test-n", default_value_t = 500)]
        test_n: usize,
        #[command(flatten)]
        probe: HeadArgs,
        #[command(flatten)]
        output: Output,
    },
    /// `path,ge,pred_score,f1..fD` for every image of a directory.
    ExportFeatures {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `argv` (program name first) and runs the verb.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.verb) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_dir(dir: &Path) -> Result<(Vec<PathBuf>, Vec<Image>)> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::EmptyInput("image directory"));
    }
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
    Ok((paths, images))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read_bytes(path)?)
}

/// Query encoder and input resolution of a training checkpoint.
fn load_encoder(ckpt: &Checkpoint) -> Result<(EncoderState, usize)> {
    let enc = ckpt.encoder("query.")?;
    let resolution = match ckpt.meta("resolution") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Format(format!("bad resolution '{v}'")))?,
        None => DEFAULT_SIDE,
    };
    Ok((enc, resolution))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::parse(&read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    cfg.apply_env()?;
    cfg.validate()?;
    Ok(cfg)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn dispatch(verb: Verb) -> Result<i32> {
    match verb {
        Verb::Metrics {
            metric,
            ckpt,
            seed,
            paths,
            output,
        } => {
            let enc = match (metric, &ckpt) {
                (Metric::Uae, Some(p)) => Some(load_encoder(&load_checkpoint(p)?)?.0),
                (Metric::Uae, None) => Some(EncoderState::init(Architecture::default(), seed)?),
                (Metric::Learned, _) => {
                    return Err(Error::Parameter("use `eval` for learned scores".into()))
                }
                _ => None,
            };
            let mut t = CsvTable::new(&["path", "metric", "value"]);
            for p in &paths {
                let img = load_image(p)?;
                let score = match metric {
                    Metric::Ge => global_entropy(&img)?,
                    Metric::Ed => edge_density(&img, &CannyParams::default())?,
                    Metric::Cr => compression_ratio(&img)?.score,
                    _ => uae_last(&img, enc.as_ref().expect("encoder loaded for uae"))?,
                };
                t.row(&[display(p), metric.to_string(), fmt6(score.value)]);
            }
            emit(&output, t.as_str())?;
        }
        Verb::Icd { dir, bins, output } => {
            let (_, images) = load_dir(&dir)?;
            let ge = images
                .iter()
                .map(|i| global_entropy(i).map(|s| s.value))
                .collect::<Result<Vec<_>>>()?;
            let stats = icd_stats_values(&ge, bins)?;
            eprintln!("mean {} stddev {}", fmt6(stats.mean), fmt6(stats.stddev));
            emit(&output, &stats.to_csv())?;
        }
        Verb::Sample {
            dir,
            target,
            n,
            seed,
            output,
        } => {
            let (paths, images) = load_dir(&dir)?;
            let ge = images
                .iter()
                .map(|i| global_entropy(i).map(|s| s.value))
                .collect::<Result<Vec<_>>>()?;
            let picked = balanced_indices(&ge, n, target, seed)?;
            if picked.borrowed > 0 {
                eprintln!("{} picks borrowed from neighbouring bins", picked.borrowed);
            }
            let mut t = CsvTable::new(&["path", "ge"]);
            for i in picked.indices {
                t.row(&[display(&paths[i]), fmt6(ge[i])]);
            }
            emit(&output, t.as_str())?;
        }
        Verb::Synth {
            kind,
            n,
            out,
            side,
            seed,
        } => {
            let corpus = gen_synthetic_sized(kind, n, side, seed)?;
            corpus.save(&out)?;
            eprintln!("wrote {n} {kind} images to {}", out.display());
        }
        Verb::Train { config, resume } => return train(config.as_deref(), resume.as_deref()),
        Verb::Probe {
            ckpt,
            labels,
            n_labels,
            save_head,
            probe,
            output,
        } => {
            let mut c = load_checkpoint(&ckpt)?;
            let (enc, resolution) = load_encoder(&c)?;
            let rows = read_labels(&labels)?;
            let images = rows.iter().map(|(p, _)| load_image(p)).collect::<Result<Vec<_>>>()?;
            let scores: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let feats = features(&enc, &to_resolution(&images, resolution)?)?;
            let out = probe_features(&feats, &scores, n_labels, n_labels, &probe.config())?;
            let mut t = CsvTable::new(&["n_labels", "n_test", "pcc", "srcc"]);
            t.row(&[
                n_labels.to_string(),
                out.report.n.to_string(),
                fmt6(out.report.pcc),
                fmt6(out.report.srcc),
            ]);
            emit(&output, t.as_str())?;
            if let Some(p) = save_head {
                c.set_head(&out.head);
                write_atomic(&p, &c.to_bytes()?)?;
            }
        }
        Verb::Eval { ckpt, corpus, output } => {
            let c = load_checkpoint(&ckpt)?;
            let (enc, resolution) = load_encoder(&c)?;
            let (paths, images) = load_dir(&corpus)?;
            let inputs = to_resolution(&images, resolution)?;
            let (metric, scores) = match c.head()? {
                Some(h) => (
                    Metric::Learned,
                    features(&enc, &inputs)?.iter().map(|f| h.predict(f)).collect(),
                ),
                None => (Metric::Uae, fae_scores(&enc, &inputs, FaeStages::All)?),
            };
            let mut t = CsvTable::new(&["path", "metric", "value"]);
            for (p, s) in paths.iter().zip(&scores) {
                t.row(&[display(p), metric.to_string(), fmt6(*s)]);
            }
            emit(&output, t.as_str())?;
            let labels_file = corpus.join(crate::eval::synth::LABELS_FILE);
            if labels_file.exists() {
                let truth: std::collections::HashMap<PathBuf, f64> = read_labels(&labels_file)?.into_iter().collect();
                let (pred, gt): (Vec<f64>, Vec<f64>) = paths
                    .iter()
                    .zip(&scores)
                    .filter_map(|(p, s)| truth.get(p).map(|g| (*s, *g)))
                    .unzip();
                let r = correlate(&pred, &gt)?;
                eprintln!("n {} pcc {} srcc {}", r.n, fmt6(r.pcc), fmt6(r.srcc));
            }
        }
        Verb::Cropstudy {
            dir,
            sides,
            strategies,
            seed,
            output,
        } => {
            let (_, images) = load_dir(&dir)?;
            let rows = crop_study(&images, &sides, &strategies, seed)?;
            emit(&output, &crop_study_csv(&rows))?;
        }
        Verb::Study {
            name,
            config,
            n_labels,
            test_n,
            probe,
            output,
        } => {
            let cfg = StudyConfig {
                base: load_config(config.as_deref())?,
                n_labels,
                test_n,
                probe: probe.config(),
                ..StudyConfig::default()
            };
            let rows = run_study(name, &cfg)?;
            for r in &rows {
                if let Some(e) = &r.error {
                    eprintln!("{} {}: {e}", r.study, r.cell_params);
                }
            }
            emit(&output, &study_csv(&rows))?;
        }
        Verb::ExportFeatures { ckpt, dir, output } => {
            let c = load_checkpoint(&ckpt)?;
            let (enc, resolution) = load_encoder(&c)?;
            let (paths, images) = load_dir(&dir)?;
            let names: Vec<String> = paths.iter().map(|p| display(p)).collect();
            let csv = export_features(&enc, c.head()?.as_ref(), &names, &to_resolution(&images, resolution)?)?;
            emit(&output, &csv)?;
        }
        Verb::Gradcheck { seed } => {
            let report = gradcheck::run(seed)?;
            for c in &report.cases {
                println!("{} checked {} max_rel_err {:.3e}", c.name, c.checked, c.max_rel_err);
            }
            let worst = report.max_rel_err();
            if !report.passed() {
                eprintln!("gradient check failed: {worst:.3e} >= {:.0e}", gradcheck::TOLERANCE);
                return Ok(3);
            }
            println!("ok: max relative error {worst:.3e}");
        }
    }
    Ok(0)
}

/// Trains and writes `config.txt`, `train_log.csv`, periodic
/// `checkpoint_eNNN.clic` and `final.clic` into the output directory. The
/// log is written even when training aborts.
fn train(config: Option<&Path>, resume: Option<&Path>) -> Result<i32> {
    let mut trainer = match resume {
        Some(p) => {
            let mut t = Trainer::from_checkpoint(&load_checkpoint(p)?)?;
            if let Some(c) = config {
                // a config given alongside a checkpoint may extend the run
                t.cfg = load_config(Some(c))?;
            }
            t
        }
        None => Trainer::new(load_config(config)?)?,
    };
    let out_dir = PathBuf::from(&trainer.cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    write_atomic(&out_dir.join("config.txt"), trainer.cfg.to_text().as_bytes())?;
    let data = TrainData::prepare(&trainer.cfg)?;
    eprintln!("training on {} images", data.len());
    let every = trainer.cfg.checkpoint_every;
    let result = trainer.fit(&data, |t| {
        let last = t.log.last().map_or(f64::NAN, |r| r.total);
        eprintln!("epoch {} step {} loss {}", t.state.epoch, t.state.step, fmt6(last));
        if every > 0 && t.state.epoch % every == 0 {
            let p = out_dir.join(format!("checkpoint_e{:03}.clic", t.state.epoch));
            write_atomic(&p, &t.to_checkpoint().to_bytes()?)?;
        }
        Ok(())
    });
    write_atomic(&out_dir.join("train_log.csv"), trainer.log_csv().as_bytes())?;
    result?;
    write_atomic(&out_dir.join("final.clic"), &trainer.to_checkpoint().to_bytes()?)?;
    Ok(0)
}
