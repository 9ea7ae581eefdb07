//! Evaluation protocol and the experiment runners (SSL/SGLA ablation grid
//! and SGLA probability sweep).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inversion::{predict_development, InversionConfig};
use crate::metrics::{
    foreground_area, hc_error_stats, mae, prediction_mask, psnr, ssim, summarize, BcMethod, EvalRecord,
    RegressionModel, PREDICTION_THRESHOLD,
};
use crate::network::{InrNetwork, NetworkConfig};
use crate::training::{train, LatentTable, TrainConfig, TrainState, TrainingLog, TrainingScan};
use crate::volume::{DatasetManifest, ForegroundMask, ScanRecord, VolumeImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Also predict from the later scan back to the earlier one.
    pub both_directions: bool,
    pub bc_method: BcMethod,
    /// Foreground threshold for predicted images.
    pub threshold: f32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            both_directions: true,
            bc_method: BcMethod::Hull,
            threshold: PREDICTION_THRESHOLD,
        }
    }
}

/// BC→HC line fitted on ground-truth training images. Falls back to the
/// clinical reference model when the training split cannot support a fit.
pub fn fit_bc_model(train: &DatasetManifest, method: BcMethod) -> Result<RegressionModel> {
    let pairs: Vec<(f64, f64)> = train
        .records
        .par_iter()
        .filter(|r| r.hc_cm.is_some())
        .map(|r| -> Result<(f64, f64)> {
            let img = train.load(r)?;
            let bc = method.measure(&ForegroundMask::from_intensity(&img), img.spacing())?;
            Ok((bc, r.hc_cm.unwrap()))
        })
        .collect::<Result<_>>()?;
    match crate::metrics::fit_regression(&pairs) {
        Ok(m) => Ok(m),
        Err(e) => {
            log::warn!("BC regression unavailable ({e}); using the reference model");
            Ok(RegressionModel::REFERENCE)
        }
    }
}

/// (input, target) scan pairs: earliest → latest scan of every subject
/// with at least two scans, plus the reverse when `both_directions`.
pub fn eval_pairs(test: &DatasetManifest, both_directions: bool) -> Vec<(ScanRecord, ScanRecord)> {
    let mut out = Vec::new();
    for (_, scans) in test.by_subject() {
        if scans.len() < 2 {
            continue;
        }
        let first = scans.iter().min_by(|a, b| a.pma_weeks.total_cmp(&b.pma_weeks)).unwrap();
        let last = scans.iter().max_by(|a, b| a.pma_weeks.total_cmp(&b.pma_weeks)).unwrap();
        out.push(((*first).clone(), (*last).clone()));
        if both_directions {
            out.push(((*last).clone(), (*first).clone()));
        }
    }
    out
}

/// Invert `input` at its age, predict at the target's age and score
/// against the target image.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair(
    net: &InrNetwork,
    input: &ScanRecord,
    input_img: &VolumeImage,
    target: &ScanRecord,
    target_img: &VolumeImage,
    inversion: &InversionConfig,
    model: &RegressionModel,
    eval: &EvalConfig,
) -> Result<EvalRecord> {
    let (t1, t2) = (input.t()?, target.t()?);
    let dev = predict_development(net, input_img, t1, t2, inversion)?;
    let spacing = target_img.spacing();
    let pred_mask = prediction_mask(&dev.prediction, eval.threshold);
    let recon_mask = prediction_mask(&dev.reconstruction, eval.threshold);
    let predicted_bc = if pred_mask.count() > 0 {
        eval.bc_method.measure(&pred_mask, spacing).unwrap_or(0.0)
    } else {
        0.0
    };
    Ok(EvalRecord {
        subject_id: input.subject_id.clone(),
        scan_id_in: input.scan_id.clone(),
        scan_id_target: target.scan_id.clone(),
        t1,
        t2,
        psnr: psnr(&dev.prediction, target_img)?,
        ssim: ssim(&dev.prediction, target_img)?,
        mae: mae(&dev.prediction, target_img)?,
        inversion_loss: dev.inversion.loss,
        recon_area: foreground_area(&recon_mask, spacing),
        pred_area: foreground_area(&pred_mask, spacing),
        predicted_bc,
        predicted_hc: model.predict(predicted_bc),
        true_hc: target.hc_cm,
    })
}

/// Evaluate every pair of the test split.
pub fn evaluate(
    net: &InrNetwork,
    test: &DatasetManifest,
    model: &RegressionModel,
    inversion: &InversionConfig,
    eval: &EvalConfig,
) -> Result<Vec<EvalRecord>> {
    let pairs = eval_pairs(test, eval.both_directions);
    if pairs.is_empty() {
        return Err(Error::Empty("test split has no subject with two scans"));
    }
    pairs
        .par_iter()
        .map(|(a, b)| {
            let (ia, ib) = (test.load(a)?, test.load(b)?);
            evaluate_pair(net, a, &ia, b, &ib, inversion, model, eval)
        })
        .collect()
}

/// One line of the per-case JSONL log; field order is the key order.
#[derive(Serialize)]
struct CaseLine<'a> {
    subject_id: &'a str,
    scan_id_in: &'a str,
    scan_id_target: &'a str,
    t1: f64,
    t2: f64,
    inversion_loss: f64,
}

pub fn write_jsonl(records: &[EvalRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        let line = CaseLine {
            subject_id: &r.subject_id,
            scan_id_in: &r.scan_id_in,
            scan_id_target: &r.scan_id_target,
            t1: r.t1,
            t2: r.t2,
            inversion_loss: r.inversion_loss,
        };
        let s = serde_json::to_string(&line).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{s}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// SHA-256 over the manifests' records and volume bytes, in order.
pub fn dataset_hash(manifests: &[&DatasetManifest]) -> Result<String> {
    let mut h = Sha256::new();
    for m in manifests {
        for r in &m.records {
            h.update(format!("{},{},{},{},{:?}\n", r.subject_id, r.scan_id, r.pma_weeks, r.path, r.hc_cm));
            let p = m.resolve(r);
            h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// A freshly initialized model trained on `scans`.
pub fn train_model(
    scans: &[TrainingScan],
    net_config: NetworkConfig,
    config: &TrainConfig,
) -> Result<(InrNetwork, LatentTable, TrainingLog)> {
    let mut net = InrNetwork::init(net_config, config.seed)?;
    let mut table = LatentTable::new(net_config.latent_dim, config.keying());
    let mut state = TrainState::new(&net, config);
    let log = train(scans, &mut net, &mut table, &mut state, config)?;
    Ok((net, table, log))
}

/// One row of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ssl: bool,
    pub sgla: bool,
    pub sgla_p: f64,
    pub cases: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub hc_sigma: f64,
    pub hc_r: f64,
    pub final_loss: f64,
}

/// Summarize one trained configuration as a table row.
pub fn ablation_row(config: &TrainConfig, records: &[EvalRecord], log: &TrainingLog) -> Result<AblationRow> {
    let s = summarize(records)?;
    let hc: Vec<(f64, f64)> = records.iter().filter_map(|r| r.true_hc.map(|t| (r.predicted_hc, t))).collect();
    let stats = hc_error_stats(&hc)?;
    let n = log.entries.len();
    Ok(AblationRow {
        ssl: config.ssl_enabled,
        sgla: config.sgla_enabled,
        sgla_p: if config.sgla_enabled { config.sgla_p } else { 0.0 },
        cases: s.cases,
        psnr_mean: s.psnr.0,
        psnr_std: s.psnr.1,
        ssim_mean: s.ssim.0,
        ssim_std: s.ssim.1,
        mae_mean: s.mae.0,
        mae_std: s.mae.1,
        hc_sigma: stats.sigma,
        hc_r: stats.r.unwrap_or(f64::NAN),
        final_loss: log.mean_loss(n.saturating_sub(n / 10).min(n.saturating_sub(1))..n),
    })
}

/// Everything an experiment needs besides the training configuration.
pub struct ExperimentData<'a> {
    pub scans: &'a [TrainingScan],
    pub test: &'a DatasetManifest,
    pub bc_model: RegressionModel,
    pub net: NetworkConfig,
    pub inversion: InversionConfig,
    pub eval: EvalConfig,
}

/// Train and evaluate one configuration.
pub fn run_config(data: &ExperimentData, config: &TrainConfig) -> Result<(AblationRow, Vec<EvalRecord>)> {
    let (net, _, log) = train_model(data.scans, data.net, config)?;
    let records = evaluate(&net, data.test, &data.bc_model, &data.inversion, &data.eval)?;
    Ok((ablation_row(config, &records, &log)?, records))
}

/// The four (SSL, SGLA) configurations in table order:
/// (n,n), (y,n), (n,y), (y,y) as (SGLA, SSL) pairs.
pub fn ablation_configs(base: &TrainConfig) -> Vec<TrainConfig> {
    [(false, false), (true, false), (false, true), (true, true)]
        .into_iter()
        .map(|(sgla, ssl)| TrainConfig {
            sgla_enabled: sgla,
            ssl_enabled: ssl,
            ..base.clone()
        })
        .collect()
}

pub fn run_ablation(data: &ExperimentData, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    ablation_configs(base)
        .iter()
        .map(|c| {
            log::info!("ablation: sgla={} ssl={}", c.sgla_enabled, c.ssl_enabled);
            run_config(data, c).map(|r| r.0)
        })
        .collect()
}

pub fn sweep_configs(base: &TrainConfig, p_list: &[f64]) -> Vec<TrainConfig> {
    p_list
        .iter()
        .map(|&p| TrainConfig {
            sgla_enabled: true,
            sgla_p: p,
            ..base.clone()
        })
        .collect()
}

pub fn run_p_sweep(data: &ExperimentData, base: &TrainConfig, p_list: &[f64]) -> Result<Vec<AblationRow>> {
    sweep_configs(base, p_list)
        .iter()
        .map(|c| {
            log::info!("p-sweep: p={}", c.sgla_p);
            run_config(data, c).map(|r| r.0)
        })
        .collect()
}

pub fn write_rows(rows: &[AblationRow], dataset_hash: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "sgla", "ssl", "sgla_p", "cases", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "mae_mean", "mae_std",
        "hc_sigma", "hc_r", "final_loss", "dataset_sha256",
    ])?;
    let yn = |b: bool| if b { "y" } else { "n" }.to_string();
    for r in rows {
        w.write_record([
            yn(r.sgla),
            yn(r.ssl),
            r.sgla_p.to_string(),
            r.cases.to_string(),
            r.psnr_mean.to_string(),
            r.psnr_std.to_string(),
            r.ssim_mean.to_string(),
            r.ssim_std.to_string(),
            r.mae_mean.to_string(),
            r.mae_std.to_string(),
            r.hc_sigma.to_string(),
            r.hc_r.to_string(),
            r.final_loss.to_string(),
            dataset_hash.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
