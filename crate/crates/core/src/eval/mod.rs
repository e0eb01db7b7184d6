//! Evaluation: correlations, synthetic ground truth, probes and studies.

pub mod correlation;
pub mod study;
pub mod synth;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::encoder::{EncoderState, FaeStages};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{fmt6, read_to_string, CsvTable};
use crate::metrics::global_entropy;
use crate::trainer::finetune::{fit_head, FineTuneConfig, FineTuneHead};
use crate::views::{make_view, CropSpec, CropStrategy};
use crate::seed;

pub use correlation::{correlate, pcc, srcc, CorrelationReport};
pub use study::{run_study, StudyConfig, StudyName, StudyRow};
pub use synth::{gen_synthetic, SyntheticCorpus, SyntheticKind};

const FEATURE_CHUNK: usize = 128;

/// Resizes every image to `side x side` where needed.
pub fn to_resolution(images: &[Image], side: usize) -> Result<Vec<Image>> {
    images
        .par_iter()
        .map(|img| {
            if img.width() == side && img.height() == side {
                Ok(img.clone())
            } else {
                img.resize(side, side)
            }
        })
        .collect()
}

/// Pooled last-stage features, computed in parallel chunks.
pub fn features(enc: &EncoderState, images: &[Image]) -> Result<Vec<Vec<f32>>> {
    let chunks = images
        .par_chunks(FEATURE_CHUNK)
        .map(|c| enc.pooled_features(&c.iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Aggregated activation energy of each image.
pub fn fae_scores(enc: &EncoderState, images: &[Image], stages: FaeStages) -> Result<Vec<f64>> {
    let chunks = images
        .par_chunks(FEATURE_CHUNK)
        .map(|c| {
            enc.encode_batch(&c.iter().collect::<Vec<_>>(), stages)
                .map(|o| o.into_iter().map(|e| e.fae).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub head: FineTuneHead,
    pub report: CorrelationReport,
}

/// Linear probe: fits a head on the first `n_labels` feature rows and
/// scores the rows from `test_from` on.
pub fn probe_features(
    feats: &[Vec<f32>],
    labels: &[f64],
    n_labels: usize,
    test_from: usize,
    cfg: &FineTuneConfig,
) -> Result<ProbeOutcome> {
    if feats.len() != labels.len() {
        return Err(Error::Contract(format!("{} feature rows for {} labels", feats.len(), labels.len())));
    }
    if n_labels > test_from || test_from > feats.len() {
        return Err(Error::Capacity {
            requested: n_labels.max(test_from),
            available: feats.len(),
        });
    }
    let dim = feats.first().map_or(0, |f| f.len());
    let head = fit_head(FineTuneHead::new(dim), &feats[..n_labels], &labels[..n_labels], cfg)?;
    let preds: Vec<f64> = feats[test_from..].iter().map(|f| head.predict(f)).collect();
    let report = correlate(&preds, &labels[test_from..])?;
    Ok(ProbeOutcome { head, report })
}

/// Probe of a frozen encoder on `images` with `labels`.
pub fn probe(
    enc: &EncoderState,
    images: &[Image],
    labels: &[f64],
    n_labels: usize,
    cfg: &FineTuneConfig,
) -> Result<ProbeOutcome> {
    let feats = features(enc, images)?;
    probe_features(&feats, labels, n_labels, n_labels, cfg)
}

/// `path,score` rows of a labels file; paths are resolved against the
/// file's directory.
pub fn read_labels(path: &Path) -> Result<Vec<(PathBuf, f64)>> {
    let text = read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "path,score" => {}
        _ => return Err(Error::Format(format!("{}: expected header 'path,score'", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (p, s) = l
                .rsplit_once(',')
                .ok_or_else(|| Error::Format(format!("bad label row '{l}'")))?;
            let score: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad score in '{l}'")))?;
            Ok((base.join(p.trim()), score))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropStudyRow {
    pub side: usize,
    pub strategy: CropStrategy,
    pub pcc: f64,
}

/// PCC between the GE of one random view per image and the GE of its source.
pub fn view_ge_pcc(
    images: &[Image],
    side_of: impl Fn(&Image) -> usize + Sync,
    strategy: CropStrategy,
    seed: u64,
) -> Result<f64> {
    let pairs = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let spec = CropSpec {
                strategy,
                side: side_of(img),
                seed: seed::derive(seed, &[i as u64]),
            };
            let view = make_view(img, &spec)?;
            Ok((global_entropy(&view)?.value, global_entropy(img)?.value))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (v, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    pcc(&v, &s)
}

/// View/source GE agreement for absolute crop sides.
pub fn crop_study(
    images: &[Image],
    sides: &[usize],
    strategies: &[CropStrategy],
    seed: u64,
) -> Result<Vec<CropStudyRow>> {
    let mut rows = Vec::new();
    for &side in sides {
        for &strategy in strategies {
            let pcc = view_ge_pcc(images, |_| side, strategy, seed)?;
            rows.push(CropStudyRow { side, strategy, pcc });
        }
    }
    Ok(rows)
}

pub fn crop_study_csv(rows: &[CropStudyRow]) -> String {
    let mut t = CsvTable::new(&["side", "strategy", "pcc_ge_views_vs_source"]);
    for r in rows {
        t.row(&[r.side.to_string(), r.strategy.to_string(), fmt6(r.pcc)]);
    }
    t.into_string()
}

/// `path,ge,pred_score,f1..fD` for every image. Without a head the score is
/// the aggregated activation energy.
pub fn export_features(
    enc: &EncoderState,
    head: Option<&FineTuneHead>,
    names: &[String],
    images: &[Image],
) -> Result<String> {
    if names.len() != images.len() {
        return Err(Error::Contract("one name per image required".into()));
    }
    let feats = features(enc, images)?;
    let scores = match head {
        Some(h) => feats.iter().map(|f| h.predict(f)).collect(),
        None => fae_scores(enc, images, FaeStages::All)?,
    };
    let d = enc.arch().pooled_dim();
    let mut header = vec!["path".to_string(), "ge".into(), "pred_score".into()];
    header.extend((1..=d).map(|i| format!("f{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&header_refs);
    for ((name, img), (f, score)) in names.iter().zip(images).zip(feats.iter().zip(&scores)) {
        let mut row = vec![name.clone(), fmt6(global_entropy(img)?.value), fmt6(*score)];
        row.extend(f.iter().map(|&v| fmt6(v as f64)));
        t.row(&row);
    }
    Ok(t.into_string())
}
