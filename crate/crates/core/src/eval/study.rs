//! Ablation grids. Each cell trains from scratch with a seed derived from
//! the base config and is scored by a linear probe against the generation
//! knob of a held-out synthetic corpus.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::{fmt6, CsvTable};
use crate::seed;
use crate::trainer::finetune::FineTuneConfig;
use crate::trainer::{Prior, Sampling, TrainConfig, TrainData, Trainer};
use crate::metrics::sampling::SampleTarget;
use crate::views::{CropStrategy, DEFAULT_CROP_FRACTION};

use super::synth::gen_synthetic_sized;
use super::{features, probe_features, to_resolution};

pub const LAMBDA_GRID: [f64; 5] = [0.0, 0.15, 0.25, 0.35, 0.5];
pub const PRIOR_GRID: [Prior; 4] = [Prior::None, Prior::Cr, Prior::Ed, Prior::Ge];
pub const CM_GRID: [usize; 5] = [0, 2, 3, 4, 5];
pub const LABEL_GRID: [usize; 5] = [10, 50, 100, 500, 1000];
/// Source side used by the crop-and-merge sweep so `c = 5` still yields
/// 8-pixel crops.
pub const CM_SOURCE_SIDE: usize = 160;

const TAG_EVAL: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StudyName {
    LambdaSweep,
    PriorAblation,
    CropStudy,
    CmSweep,
    LabelEfficiency,
    SamplingAblation,
}

impl StudyName {
    pub const ALL: [StudyName; 6] = [
        StudyName::LambdaSweep,
        StudyName::PriorAblation,
        StudyName::CropStudy,
        StudyName::CmSweep,
        StudyName::LabelEfficiency,
        StudyName::SamplingAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyName::LambdaSweep => "lambda_sweep",
            StudyName::PriorAblation => "prior_ablation",
            StudyName::CropStudy => "crop_study",
            StudyName::CmSweep => "cm_sweep",
            StudyName::LabelEfficiency => "label_efficiency",
            StudyName::SamplingAblation => "sampling_ablation",
        }
    }
}

impl FromStr for StudyName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyName::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown study '{s}'")))
    }
}

impl fmt::Display for StudyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub base: TrainConfig,
    /// Labeled images available to the probe (label-efficiency uses its
    /// own grid).
    pub n_labels: usize,
    /// Held-out images scored by the probe.
    pub test_n: usize,
    pub probe: FineTuneConfig,
    pub label_grid: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            base: TrainConfig::default(),
            n_labels: 200,
            test_n: 500,
            probe: FineTuneConfig::default(),
            label_grid: LABEL_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub study: StudyName,
    pub cell_params: String,
    pub pcc: f64,
    pub srcc: f64,
    pub steps: usize,
    pub final_loss: f64,
    /// Set when the cell aborted; the numbers are then NaN.
    pub error: Option<String>,
}

/// `study,cell_params,pcc,srcc,steps,final_loss`
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut t = CsvTable::new(&["study", "cell_params", "pcc", "srcc", "steps", "final_loss"]);
    for r in rows {
        t.row(&[
            r.study.to_string(),
            r.cell_params.clone(),
            fmt6(r.pcc),
            fmt6(r.srcc),
            r.steps.to_string(),
            fmt6(r.final_loss),
        ]);
    }
    t.into_string()
}

/// `(cell_params, config)` for every training cell of `name`.
pub fn cells(name: StudyName, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    match name {
        StudyName::LambdaSweep => LAMBDA_GRID
            .iter()
            .map(|&l| {
                (
                    format!("lambda={l}"),
                    with(&|c| {
                        c.lambda = l;
                        c.prior = Prior::Ge;
                    }),
                )
            })
            .collect(),
        StudyName::PriorAblation => PRIOR_GRID
            .iter()
            .map(|&p| (format!("prior={p}"), with(&|c| c.prior = p)))
            .collect(),
        StudyName::CropStudy => {
            let full = 1.0;
            let best = DEFAULT_CROP_FRACTION;
            use CropStrategy::*;
            [
                ("a", Oc, full, Oc, full),
                ("b", Oc, full, Fa, best),
                ("c", Oc, full, Fa, full),
                ("d", Fa, best, Ma, best),
            ]
            .into_iter()
            .map(|(case, qs, qf, ks, kf)| {
                (
                    format!("case={case};query={qs}@{qf:.3};key={ks}@{kf:.3}"),
                    with(&|c| {
                        c.pairs.query_strategy = qs;
                        c.pairs.query_fraction = qf;
                        c.pairs.key_strategy = ks;
                        c.pairs.key_fraction = kf;
                    }),
                )
            })
            .collect()
        }
        StudyName::CmSweep => CM_GRID
            .iter()
            .map(|&cm| {
                (
                    format!("c={cm}"),
                    with(&|c| {
                        c.crop_merge = cm;
                        c.synth_side = CM_SOURCE_SIDE;
                        c.synth_n = (base.synth_n / 8).max(8);
                    }),
                )
            })
            .collect(),
        StudyName::LabelEfficiency => vec![("train".into(), base.clone())],
        StudyName::SamplingAblation => [
            Sampling::Random,
            Sampling::Balanced(SampleTarget::Uniform),
            Sampling::Balanced(SampleTarget::Gaussian),
        ]
        .into_iter()
        .map(|s| {
            (
                format!("sampling={s}"),
                with(&|c| {
                    c.sampling = s;
                    c.sample_n = (base.synth_n / 2).max(1);
                }),
            )
        })
        .collect(),
    }
}

/// Held-out probe corpus: labeled pool first, test images last.
struct EvalSet {
    feats_src: Vec<crate::image::Image>,
    knobs: Vec<f64>,
    pool: usize,
}

fn eval_set(cfg: &StudyConfig, pool: usize) -> Result<EvalSet> {
    let b = &cfg.base;
    let corpus = gen_synthetic_sized(
        b.synth_kind,
        pool + cfg.test_n,
        b.synth_side,
        seed::derive(b.seed, &[TAG_EVAL]),
    )?;
    Ok(EvalSet {
        feats_src: to_resolution(&corpus.images, b.pairs.resolution)?,
        knobs: corpus.knobs,
        pool,
    })
}

fn train_cell(cfg: &TrainConfig) -> (Option<Trainer>, usize, f64, Option<String>) {
    let data = match TrainData::prepare(cfg) {
        Ok(d) => d,
        Err(e) => return (None, 0, f64::NAN, Some(e.to_string())),
    };
    let mut t = match Trainer::new(cfg.clone()) {
        Ok(t) => t,
        Err(e) => return (None, 0, f64::NAN, Some(e.to_string())),
    };
    while t.state.epoch < cfg.epochs {
        if let Err(e) = t.run_epoch(&data) {
            return (None, t.state.step, f64::NAN, Some(e.to_string()));
        }
    }
    let steps = t.state.step;
    let last = t.log.last().map_or(f64::NAN, |r| r.total);
    (Some(t), steps, last, None)
}

/// Runs every cell of `name`; a cell that fails is recorded with NaN scores
/// and the sweep continues.
pub fn run_study(name: StudyName, cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.base.validate()?;
    let mut rows = Vec::new();
    if name == StudyName::LabelEfficiency {
        let pool = cfg.label_grid.iter().copied().max().unwrap_or(0);
        let eval = eval_set(cfg, pool)?;
        let (trainer, steps, final_loss, error) = train_cell(&cfg.base);
        let feats = match &trainer {
            Some(t) => Some(features(&t.state.query, &eval.feats_src)?),
            None => None,
        };
        for &k in &cfg.label_grid {
            let (pcc, srcc, err) = match &feats {
                Some(f) => match probe_features(f, &eval.knobs, k, eval.pool, &cfg.probe) {
                    Ok(o) => (o.report.pcc, o.report.srcc, None),
                    Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
                },
                None => (f64::NAN, f64::NAN, error.clone()),
            };
            rows.push(StudyRow {
                study: name,
                cell_params: format!("labels={k}"),
                pcc,
                srcc,
                steps,
                final_loss,
                error: err,
            });
        }
        return Ok(rows);
    }
    let eval = eval_set(cfg, cfg.n_labels)?;
    for (params, cell_cfg) in cells(name, &cfg.base) {
        let (trainer, steps, final_loss, mut error) = train_cell(&cell_cfg);
        let (mut pcc, mut srcc) = (f64::NAN, f64::NAN);
        if let Some(t) = trainer {
            match features(&t.state.query, &eval.feats_src)
                .and_then(|f| probe_features(&f, &eval.knobs, cfg.n_labels, eval.pool, &cfg.probe))
            {
                Ok(o) => {
                    pcc = o.report.pcc;
                    srcc = o.report.srcc;
                }
                Err(e) => error = Some(e.to_string()),
            }
        }
        rows.push(StudyRow {
            study: name,
            cell_params: params,
            pcc,
            srcc,
            steps,
            final_loss,
            error,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_follow_the_published_tables() {
        let base = TrainConfig::default();
        let names: Vec<String> = cells(StudyName::LambdaSweep, &base).into_iter().map(|c| c.0).collect();
        assert_eq!(names, ["lambda=0", "lambda=0.15", "lambda=0.25", "lambda=0.35", "lambda=0.5"]);
        let priors: Vec<Prior> = cells(StudyName::PriorAblation, &base).into_iter().map(|c| c.1.prior).collect();
        assert_eq!(priors, PRIOR_GRID);
        let cms: Vec<usize> = cells(StudyName::CmSweep, &base).into_iter().map(|c| c.1.crop_merge).collect();
        assert_eq!(cms, CM_GRID);
        assert_eq!(cells(StudyName::SamplingAblation, &base).len(), 3);
        assert_eq!(cells(StudyName::CropStudy, &base).len(), 4);
        for n in StudyName::ALL {
            assert_eq!(n.name().parse::<StudyName>().unwrap(), n);
        }
    }

    #[test]
    fn tiny_sweep_runs_and_is_deterministic() {
        let cfg = StudyConfig {
            base: TrainConfig {
                synth_n: 16,
                synth_side: 32,
                batch_size: 8,
                epochs: 1,
                queue_capacity: 32,
                pairs: crate::views::PairConfig {
                    resolution: 32,
                    ..Default::default()
                },
                ..TrainConfig::default()
            },
            n_labels: 10,
            test_n: 10,
            probe: FineTuneConfig {
                epochs: 5,
                ..FineTuneConfig::default()
            },
            label_grid: vec![5, 10],
        };
        let a = run_study(StudyName::PriorAblation, &cfg).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(study_csv(&a), study_csv(&run_study(StudyName::PriorAblation, &cfg).unwrap()));
        assert!(study_csv(&a).starts_with("study,cell_params,pcc,srcc,steps,final_loss\nprior_ablation,prior=none,"));
        let l = run_study(StudyName::LabelEfficiency, &cfg).unwrap();
        assert_eq!(l.len(), 2);
    }
}
