use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use neoinr::atlas::{self, GrowthCurve, SequenceOptions};
use neoinr::checkpoint::{decode_train_state, encode_train_state, load_checkpoint, save_checkpoint};
use neoinr::config::RunConfig;
use neoinr::experiment::{
    ablation_configs, ablation_row, dataset_hash, evaluate, fit_bc_model, sweep_configs, train_model, write_jsonl,
    write_rows, AblationRow,
};
use neoinr::inversion::predict_development;
use neoinr::metrics::{psnr, summarize, write_report, RegressionModel};
use neoinr::network::InrNetwork;
use neoinr::phantom::generate_dataset;
use neoinr::training::{train, LatentTable, TrainState, TrainingScan};
use neoinr::volume::{load_volume, normalize_time, save_volume, DatasetManifest, VolumeImage};
use neoinr::{Error, Result};

#[derive(Parser)]
#[command(name = "neoinr", version, about = "Longitudinal development INR: train, invert, evaluate")]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides train.seed, invert.seed and phantom.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (paths.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic phantom dataset to paths.dataset.
    PhantomGen,
    /// Train a model on the dataset's training split.
    Train {
        /// Continue from paths.checkpoint and its optimizer sidecar.
        #[arg(long)]
        resume: bool,
    },
    /// Invert one volume at t1 and render it at t2.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Age of the input scan in weeks PMA.
        #[arg(long)]
        t1: f64,
        /// Target age in weeks PMA.
        #[arg(long)]
        t2: f64,
        /// Ground truth at t2, copied into the output set when given.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate the four SSL/SGLA configurations.
    AblationGrid,
    /// Train and evaluate SGLA at every probability in sweep.p_list.
    PSweep {
        /// Comma-separated probabilities, overriding sweep.p_list.
        #[arg(long)]
        p: Option<String>,
    },
    /// Zero- and average-latent growth curves and image strips.
    Atlas {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.invert.seed = s;
        cfg.phantom.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn state_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".state");
    PathBuf::from(s)
}

fn manifest(cfg: &RunConfig, split: &str) -> Result<DatasetManifest> {
    DatasetManifest::read(cfg.paths.dataset.join(format!("{split}.csv")))
}

/// BC→HC model from the training split, or the reference line without one.
fn bc_model(cfg: &RunConfig) -> Result<RegressionModel> {
    let path = cfg.paths.dataset.join("train.csv");
    if path.exists() {
        fit_bc_model(&DatasetManifest::read(path)?, cfg.eval.bc_method)
    } else {
        Ok(RegressionModel::REFERENCE)
    }
}

fn load_network(cfg: &RunConfig, path: Option<&PathBuf>) -> Result<(InrNetwork, Option<LatentTable>)> {
    let path = path.unwrap_or(&cfg.paths.checkpoint);
    let ck = load_checkpoint(path)?;
    Ok((ck.network, ck.latents))
}

fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<()> {
    let train_m = manifest(cfg, "train")?;
    let scans = TrainingScan::load_all(&train_m)?;
    let ckpt = &cfg.paths.checkpoint;
    let (mut net, mut table, mut state) = if resume {
        let ck = load_checkpoint(ckpt)?;
        let have = *ck.network.config();
        if have.latent_dim != cfg.net.latent_dim {
            return Err(Error::Config(format!(
                "checkpoint latent dimension {} differs from net.latent_dim = {}",
                have.latent_dim, cfg.net.latent_dim
            )));
        }
        if have != cfg.net {
            return Err(Error::Config("checkpoint network configuration differs from net.*".into()));
        }
        let table = ck
            .latents
            .ok_or_else(|| Error::Format("checkpoint has no latent table to resume from".into()))?;
        let sp = state_path(ckpt);
        let bytes = std::fs::read(&sp).map_err(|e| Error::Io { path: sp, source: e })?;
        (ck.network, table, decode_train_state(&bytes)?)
    } else {
        let net = InrNetwork::init(cfg.net, cfg.train.seed)?;
        let table = LatentTable::new(cfg.net.latent_dim, cfg.train.keying());
        let state = TrainState::new(&net, &cfg.train);
        (net, table, state)
    };
    let run = neoinr::training::TrainConfig {
        steps: cfg.train.steps.saturating_sub(state.iteration),
        ..cfg.train.clone()
    };
    info!(
        "training {} scans from iteration {} for {} steps",
        scans.len(),
        state.iteration,
        run.steps
    );
    let log = train(&scans, &mut net, &mut table, &mut state, &run)?;
    if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    create_dir(&cfg.paths.out)?;
    save_checkpoint(&net, Some(&table), ckpt)?;
    let sp = state_path(ckpt);
    std::fs::write(&sp, encode_train_state(&state)).map_err(|e| Error::Io { path: sp, source: e })?;
    log.write_csv(cfg.paths.out.join("train_log.csv"))?;
    let n = log.entries.len();
    if n > 0 {
        info!("final loss {:.6}", log.mean_loss(n - (n / 10).max(1)..n));
    }
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn cmd_predict(
    cfg: &RunConfig,
    checkpoint: Option<&PathBuf>,
    input: &Path,
    t1: f64,
    t2: f64,
    target: Option<&PathBuf>,
) -> Result<()> {
    let (net, _) = load_network(cfg, checkpoint)?;
    let img = load_volume(input)?;
    let dev = predict_development(&net, &img, normalize_time(t1)?, normalize_time(t2)?, &cfg.invert)?;
    let target_img = match target {
        Some(p) => load_volume(p)?,
        None => VolumeImage::zeros(img.shape().to_vec(), img.spacing().to_vec())?,
    };
    let dir = cfg.paths.out.join("predict");
    create_dir(&dir)?;
    save_volume(&img, dir.join("input.ndv"))?;
    save_volume(&dev.reconstruction, dir.join("reconstruction.ndv"))?;
    save_volume(&target_img, dir.join("target.ndv"))?;
    save_volume(&dev.prediction, dir.join("prediction.ndv"))?;
    println!("reconstruction PSNR {:.2} dB", psnr(&dev.reconstruction, &img)?);
    if target.is_some() {
        println!("prediction PSNR {:.2} dB", psnr(&dev.prediction, &target_img)?);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&PathBuf>) -> Result<()> {
    let (net, _) = load_network(cfg, checkpoint)?;
    let test = manifest(cfg, "test")?;
    let model = bc_model(cfg)?;
    let records = evaluate(&net, &test, &model, &cfg.invert, &cfg.eval)?;
    create_dir(&cfg.paths.out)?;
    write_report(&records, cfg.paths.out.join("eval_report.csv"))?;
    write_jsonl(&records, cfg.paths.out.join("eval_cases.jsonl"))?;
    let s = summarize(&records)?;
    println!(
        "cases {}  PSNR {:.2}±{:.2}  SSIM {:.3}±{:.3}  MAE {:.4}±{:.4}",
        s.cases, s.psnr.0, s.psnr.1, s.ssim.0, s.ssim.1, s.mae.0, s.mae.1
    );
    if let Some(hc) = s.hc {
        match hc.r {
            Some(r) => println!("HC σ {:.3} cm  r {r:.3}", hc.sigma),
            None => println!("HC σ {:.3} cm  r undefined", hc.sigma),
        }
    }
    Ok(())
}

fn print_rows(rows: &[AblationRow]) {
    println!("sgla ssl     p   PSNR          SSIM           HC σ    HC r");
    for r in rows {
        println!(
            "{:<4} {:<4} {:>5.2}  {:>5.2}±{:<5.2}  {:.3}±{:.3}  {:>6.3}  {:>6.3}",
            if r.sgla { "y" } else { "n" },
            if r.ssl { "y" } else { "n" },
            r.sgla_p,
            r.psnr_mean,
            r.psnr_std,
            r.ssim_mean,
            r.ssim_std,
            r.hc_sigma,
            r.hc_r
        );
    }
}

/// Train, save, and evaluate each configuration; `name` labels checkpoints.
fn run_grid(
    cfg: &RunConfig,
    configs: &[neoinr::training::TrainConfig],
    name: impl Fn(&neoinr::training::TrainConfig) -> String,
    report: &str,
) -> Result<()> {
    let train_m = manifest(cfg, "train")?;
    let test = manifest(cfg, "test")?;
    let hash = dataset_hash(&[&train_m, &test])?;
    let scans = TrainingScan::load_all(&train_m)?;
    let model = bc_model(cfg)?;
    let dir = cfg.paths.out.join(report);
    create_dir(&dir)?;
    let mut rows = Vec::new();
    for c in configs {
        let label = name(c);
        info!("{report}: training {label}");
        let (net, table, log) = train_model(&scans, cfg.net, c)?;
        save_checkpoint(&net, Some(&table), dir.join(format!("{label}.ckpt")))?;
        let records = evaluate(&net, &test, &model, &cfg.invert, &cfg.eval)?;
        write_jsonl(&records, dir.join(format!("{label}.jsonl")))?;
        rows.push(ablation_row(c, &records, &log)?);
    }
    write_rows(&rows, &hash, cfg.paths.out.join(format!("{report}.csv")))?;
    print_rows(&rows);
    println!("dataset sha256 {hash}");
    Ok(())
}

fn cmd_atlas(cfg: &RunConfig, checkpoint: Option<&PathBuf>) -> Result<()> {
    let (net, table) = load_network(cfg, checkpoint)?;
    let table = table.ok_or_else(|| Error::Format("checkpoint has no latent table; cannot average latents".into()))?;
    let avg = atlas::average_latent(&table)?;
    let zero = vec![0.0f32; net.config().latent_dim];
    let opts = SequenceOptions {
        shape: &cfg.phantom.shape,
        spacing: &cfg.phantom.spacing,
        model: bc_model(cfg)?,
        bc_method: cfg.eval.bc_method,
        threshold: cfg.eval.threshold,
        micro_batch_size: cfg.invert.micro_batch_size,
    };
    let dir = cfg.paths.out.join("atlas");
    create_dir(&dir)?;
    let mut curves: Vec<GrowthCurve> = Vec::new();
    for (label, latent) in [(atlas::ZERO_LABEL, &zero), (atlas::AVERAGE_LABEL, &avg)] {
        curves.push(atlas::generate_sequence(&net, latent, &cfg.atlas.curve_pmas(), label, &opts)?.curve);
        let strip = atlas::generate_sequence(&net, latent, &cfg.atlas.strip, label, &opts)?;
        for (img, (pma, _)) in strip.images.iter().zip(&strip.curve.points) {
            save_volume(img, dir.join(format!("{label}_{pma}w.ndv")))?;
        }
    }
    atlas::write_curves_csv(&curves, dir.join("growth_curves.csv"))?;
    write_text(&dir.join("growth_curves.svg"), &atlas::curves_svg(&curves))?;
    for c in &curves {
        let (first, last) = (c.points[0], c.points[c.points.len() - 1]);
        println!(
            "{}: HC {:.2} cm at {} w -> {:.2} cm at {} w",
            c.label, first.1, first.0, last.1, last.0
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::PhantomGen => {
            let ds = generate_dataset(&cfg.phantom, &cfg.paths.dataset)?;
            println!(
                "wrote {} train / {} val / {} test scans to {}",
                ds.train.records.len(),
                ds.val.records.len(),
                ds.test.records.len(),
                ds.dir.display()
            );
        }
        Command::Train { resume } => cmd_train(&cfg, *resume)?,
        Command::Predict {
            checkpoint,
            input,
            t1,
            t2,
            target,
        } => cmd_predict(&cfg, checkpoint.as_ref(), input, *t1, *t2, target.as_ref())?,
        Command::Eval { checkpoint } => cmd_eval(&cfg, checkpoint.as_ref())?,
        Command::AblationGrid => {
            let label = |c: &neoinr::training::TrainConfig| {
                format!(
                    "sgla-{}_ssl-{}",
                    if c.sgla_enabled { "y" } else { "n" },
                    if c.ssl_enabled { "y" } else { "n" }
                )
            };
            run_grid(&cfg, &ablation_configs(&cfg.train), label, "ablation")?
        }
        Command::PSweep { p } => {
            if let Some(p) = p {
                cfg.set("sweep.p_list", p)?;
                cfg.validate()?;
            }
            let label = |c: &neoinr::training::TrainConfig| format!("p-{}", c.sgla_p);
            run_grid(&cfg, &sweep_configs(&cfg.train, &cfg.sweep_p), label, "p_sweep")?
        }
        Command::Atlas { checkpoint } => cmd_atlas(&cfg, checkpoint.as_ref())?,
        Command::Config => print!("{}", cfg.dump()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
