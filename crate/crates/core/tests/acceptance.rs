//! End-to-end acceptance suite. Each test prints one line
//! `criterion N <name>: PASS|FAIL <details>` and then asserts.
//!
//! Criteria 4, 5, 6 and 10 share one trained ablation grid on the default
//! 2D phantom dataset; it is built once, on first use.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neoinr::atlas::{average_latent, generate_sequence, SequenceOptions, AVERAGE_LABEL, ZERO_LABEL};
use neoinr::checkpoint::encode_checkpoint;
use neoinr::config::RunConfig;
use neoinr::experiment::{
    ablation_configs, ablation_row, evaluate, fit_bc_model, train_model, write_jsonl, AblationRow,
};
use neoinr::inversion::{invert_latent, predict_image};
use neoinr::metrics::{fit_regression, measure_bc, psnr, write_report, EvalRecord, RegressionModel};
use neoinr::network::{GradTarget, GradientSet, InrNetwork, NetworkConfig, WireLayer};
use neoinr::phantom::{generate_dataset, generate_subject, render_phantom, GeneratedDataset, PhantomDatasetConfig, T_MAX, T_MIN};
use neoinr::training::{train, LatentTable, TrainConfig, TrainState, TrainingScan};

/// Writes straight to stderr so the line survives the harness's output capture.
fn note(line: String) {
    std::io::stderr().write_all(format!("{line}\n").as_bytes()).unwrap();
}

fn report(n: u32, name: &str, pass: bool, details: String) {
    note(format!("criterion {n} {name}: {} {details}", if pass { "PASS" } else { "FAIL" }));
    assert!(pass, "criterion {n} {name}: {details}");
}

// ---------------------------------------------------------------------------
// Shared ablation grid

struct Trained {
    config: TrainConfig,
    net: InrNetwork,
    table: LatentTable,
    records: Vec<EvalRecord>,
    row: AblationRow,
}

struct Grid {
    _dir: tempfile::TempDir,
    dataset: GeneratedDataset,
    run: RunConfig,
    bc_model: RegressionModel,
    models: Vec<Trained>,
    seconds: f64,
}

impl Grid {
    fn get(&self, sgla: bool, ssl: bool) -> &Trained {
        self.models
            .iter()
            .find(|m| m.config.sgla_enabled == sgla && m.config.ssl_enabled == ssl)
            .expect("configuration trained")
    }
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let run = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let dataset = generate_dataset(&run.phantom, dir.path()).unwrap();
        let scans = TrainingScan::load_all(&dataset.train).unwrap();
        let bc_model = fit_bc_model(&dataset.train, run.eval.bc_method).unwrap();
        let start = Instant::now();
        let models = ablation_configs(&run.train)
            .into_iter()
            .map(|config| {
                let (net, table, log) = train_model(&scans, run.net, &config).unwrap();
                let records = evaluate(&net, &dataset.test, &bc_model, &run.invert, &run.eval).unwrap();
                let row = ablation_row(&config, &records, &log).unwrap();
                note(format!(
                    "  grid sgla={} ssl={}: r={:.3} sigma={:.3} psnr={:.2} ssim={:.3} ({:.0} s elapsed)",
                    config.sgla_enabled,
                    config.ssl_enabled,
                    row.hc_r,
                    row.hc_sigma,
                    row.psnr_mean,
                    row.ssim_mean,
                    start.elapsed().as_secs_f64()
                ));
                Trained {
                    config,
                    net,
                    table,
                    records,
                    row,
                }
            })
            .collect();
        Grid {
            _dir: dir,
            dataset,
            run,
            bc_model,
            models,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}

// ---------------------------------------------------------------------------
// 1. Gradients against an independent double-precision oracle

type Params64 = Vec<[Vec<f64>; 4]>;

fn widen(net: &InrNetwork) -> Params64 {
    net.layers()
        .iter()
        .map(|l: &WireLayer| l.groups().map(|g| g.iter().map(|&v| v as f64).collect()))
        .collect()
}

/// `f_N ∘ ψ ∘ … ∘ f_1` on `(x, t, l)` in f64; mean squared error.
fn oracle_loss(p: &Params64, cfg: &NetworkConfig, coords: &[f64], t: f64, l: &[f64], y: &[f64]) -> f64 {
    let (w, s) = (cfg.omega0 as f64, cfg.s0 as f64);
    let mut total = 0.0;
    for (c, target) in coords.chunks(cfg.spatial_dims).zip(y) {
        let mut x: Vec<f64> = c.iter().copied().chain([t]).chain(l.iter().copied()).collect();
        for (li, [uw, ub, vw, vb]) in p.iter().enumerate() {
            let n = x.len();
            let phi: Vec<f64> = (0..ub.len())
                .map(|i| {
                    let u = ub[i] + (0..n).map(|j| uw[i * n + j] * x[j]).sum::<f64>();
                    let v = vb[i] + (0..n).map(|j| vw[i * n + j] * x[j]).sum::<f64>();
                    (w * u).sin() * (-(s * v).powi(2)).exp()
                })
                .collect();
            x = if li == 0 || li == p.len() - 1 {
                phi
            } else {
                x.iter().zip(&phi).map(|(a, b)| 0.5 * (a + b)).collect()
            };
        }
        total += (x[0] - target).powi(2);
    }
    total / y.len() as f64
}

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-6;
    let (mut probes, mut failures, mut worst) = (0usize, 0usize, 0.0f64);
    for (case, d) in (0..10u64).zip([2usize, 3].into_iter().cycle()) {
        let cfg = NetworkConfig {
            spatial_dims: d,
            latent_dim: 4,
            hidden_dim: 8,
            layers: 3,
            omega0: 10.0,
            s0: 10.0,
        };
        let net = InrNetwork::init(cfg, 100 + case).unwrap();
        let points = 8;
        let coords: Vec<f32> = (0..points * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let y: Vec<f32> = (0..points).map(|_| rng.gen_range(0.0..1.0)).collect();
        let l: Vec<f32> = (0..4).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let t = rng.gen_range(0.26f32..0.45) as f64;
        let (_, g) = net.loss_and_grad(&coords, &y, t, &l, GradTarget::All).unwrap();
        let c64: Vec<f64> = coords.iter().map(|&v| v as f64).collect();
        let y64: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let l64: Vec<f64> = l.iter().map(|&v| v as f64).collect();
        let p64 = widen(&net);
        let mut check = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs();
            let tol = (1e-3 * analytic.abs().max(numeric.abs())).max(1e-6);
            worst = worst.max(err / tol);
            if err > tol {
                failures += 1;
            }
            probes += 1;
        };
        for k in 0..4 {
            let (mut lp, mut lm) = (l64.clone(), l64.clone());
            lp[k] += h;
            lm[k] -= h;
            let num = (oracle_loss(&p64, &cfg, &c64, t, &lp, &y64) - oracle_loss(&p64, &cfg, &c64, t, &lm, &y64)) / (2.0 * h);
            check(g.latent[k], num);
        }
        for _ in 0..100 {
            let li = rng.gen_range(0..cfg.layers);
            let gi = rng.gen_range(0..4);
            let k = rng.gen_range(0..p64[li][gi].len());
            let (mut pp, mut pm) = (p64.clone(), p64.clone());
            pp[li][gi][k] += h;
            pm[li][gi][k] -= h;
            let num = (oracle_loss(&pp, &cfg, &c64, t, &l64, &y64) - oracle_loss(&pm, &cfg, &c64, t, &l64, &y64)) / (2.0 * h);
            check(g.layers[li].groups()[gi][k], num);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "gradient correctness",
        probes >= 1000 && failures == 0 && secs < 60.0,
        format!("{probes} probes, {failures} outside rel 1e-3 / abs 1e-6, worst err/tol {worst:.3}, {secs:.1} s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Micro-batch accumulation

#[test]
fn c02_micro_batch_equivalence() {
    let start = Instant::now();
    let net = InrNetwork::init(NetworkConfig::desk_2d(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = 1000;
    let coords: Vec<f32> = (0..2 * p).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let y: Vec<f32> = (0..p).map(|_| rng.gen_range(0.0..1.0)).collect();
    let l: Vec<f32> = (0..16).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let (full_loss, full) = net.loss_and_grad(&coords, &y, 0.33, &l, GradTarget::All).unwrap();
    let scale = full.values().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(&mut rng);
        let cuts = rng.gen_range(2..12);
        let mut bounds: Vec<usize> = (0..cuts - 1).map(|_| rng.gen_range(1..p)).collect();
        bounds.extend([0, p]);
        bounds.sort_unstable();
        bounds.dedup();
        let mut loss = 0.0;
        let mut acc = GradientSet::zeros(net.config());
        for w in bounds.windows(2) {
            let idx = &order[w[0]..w[1]];
            let c: Vec<f32> = idx.iter().flat_map(|&i| [coords[2 * i], coords[2 * i + 1]]).collect();
            let t: Vec<f32> = idx.iter().map(|&i| y[i]).collect();
            let (li, gi) = net.loss_and_grad(&c, &t, 0.33, &l, GradTarget::All).unwrap();
            let weight = idx.len() as f64 / p as f64;
            loss += li * weight;
            acc.add_scaled(&gi, weight);
        }
        worst = worst.max((loss - full_loss).abs() / full_loss.abs());
        for (a, b) in acc.values().zip(full.values()) {
            worst = worst.max((a - b).abs() / b.abs().max(1e-3 * scale));
        }
    }
    report(
        2,
        "micro-batch equivalence",
        worst <= 1e-5,
        format!("20 random partitions, worst relative deviation {worst:.2e}, {:.1} s", start.elapsed().as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 3. Parameter counts of the full-size networks

#[test]
fn c03_parameter_counts() {
    let n2 = InrNetwork::zeros(NetworkConfig::paper_2d()).unwrap().param_count();
    let n3 = InrNetwork::zeros(NetworkConfig::paper_3d()).unwrap().param_count();
    report(
        3,
        "parameter count",
        n2 == 232_194 && n3 == 232_450,
        format!("2D {n2} (expected 232194), 3D {n3} (expected 232450)"),
    );
}

// ---------------------------------------------------------------------------
// 4. Disentanglement ordering across the ablation grid

#[test]
fn c04_disentanglement_ordering() {
    let g = grid();
    let r = |sgla, ssl| g.get(sgla, ssl).row.hc_r;
    let (nn, yn, ny, yy) = (r(false, false), r(true, false), r(false, true), r(true, true));
    let dpsnr = g.get(true, true).row.psnr_mean - g.get(false, false).row.psnr_mean;
    let checks = [
        ("r(n,n) < 0.5", nn < 0.5),
        ("r(y,y) >= 0.9", yy >= 0.9),
        ("r(n,n) < r(y,n)", nn < yn),
        ("r(y,n) <= r(n,y) + 0.03", yn <= ny + 0.03),
        ("r(n,y) <= r(y,y) + 0.03", ny <= yy + 0.03),
        ("PSNR(y,y) - PSNR(n,n) >= 0.5 dB", dpsnr >= 0.5),
        ("grid within 30 min", g.seconds <= 1800.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        4,
        "disentanglement ordering",
        failed.is_empty(),
        format!(
            "r(n,n)={nn:.3} r(y,n)={yn:.3} r(n,y)={ny:.3} r(y,y)={yy:.3}, ΔPSNR={dpsnr:.2} dB, grid {:.0} s; failed: {failed:?}",
            g.seconds
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Inversion of a rendered latent

#[test]
fn c05_self_consistency_inversion() {
    let g = grid();
    let m = g.get(true, true);
    let known = average_latent(&m.table).unwrap();
    let (shape, spacing) = (&g.run.phantom.shape, &g.run.phantom.spacing);
    let (t1, t2) = (0.30, 0.42);
    let img = predict_image(&m.net, &known, t1, shape, spacing, 4096).unwrap();
    let truth2 = predict_image(&m.net, &known, t2, shape, spacing, 4096).unwrap();
    let before = encode_checkpoint(&m.net, None);
    let start = Instant::now();
    let inv = invert_latent(&m.net, &img, t1, &g.run.invert).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let unchanged = encode_checkpoint(&m.net, None) == before;
    let rec = predict_image(&m.net, &inv.latent, t1, shape, spacing, 4096).unwrap();
    let pred = predict_image(&m.net, &inv.latent, t2, shape, spacing, 4096).unwrap();
    let (p1, p2) = (psnr(&rec, &img).unwrap(), psnr(&pred, &truth2).unwrap());
    report(
        5,
        "self-consistency inversion",
        p1 >= 35.0 && unchanged && secs < 120.0,
        format!("re-prediction PSNR {p1:.2} dB at t1 ({p2:.2} dB at t2), weights unchanged: {unchanged}, inversion {secs:.1} s"),
    );
}

// ---------------------------------------------------------------------------
// 6. Growth direction

#[test]
fn c06_growth_direction() {
    let g = grid();
    let recs = &g.get(true, true).records;
    let ok = recs
        .iter()
        .filter(|r| if r.t2 > r.t1 { r.pred_area > r.recon_area } else { r.pred_area < r.recon_area })
        .count();
    let frac = ok as f64 / recs.len() as f64;
    report(
        6,
        "growth direction",
        frac >= 0.9,
        format!("{ok}/{} test cases grow forward and shrink backward ({:.0}%)", recs.len(), 100.0 * frac),
    );
}

// ---------------------------------------------------------------------------
// 7. Circumference pipeline

fn hull_perimeter_oracle(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            (a.0 - b.0).hypot(a.1 - b.1)
        })
        .sum()
}

#[test]
fn c07_circumference_pipeline() {
    let (shape, spacing) = ([64usize, 64], [0.3f32, 0.3]);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for idx in 0..30u64 {
        let p = generate_subject(5, idx);
        for t in [T_MIN, 0.35, T_MAX] {
            let (_, mask) = render_phantom(&p, t, &shape, &spacing).unwrap();
            let measured = measure_bc(&mask, &spacing).unwrap();
            let boundary: Vec<(f64, f64)> = (0..20_000)
                .map(|i| {
                    let th = i as f64 * std::f64::consts::TAU / 20_000.0;
                    let r = p.radius(t, th);
                    (r * th.cos(), r * th.sin())
                })
                .collect();
            let oracle = hull_perimeter_oracle(boundary);
            worst = worst.max((measured - oracle).abs() / oracle);
            cases += 1;
        }
    }

    let exact: Vec<(f64, f64)> = (0..50).map(|i| {
        let bc = 20.0 + 0.3 * i as f64;
        (bc, 1.090 * bc + 1.758)
    }).collect();
    let fit = fit_regression(&exact).unwrap();
    let exact_ok = (fit.slope - 1.090).abs() <= 1e-6 && (fit.intercept - 1.758).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let normal = rand_distr::Normal::new(0.0, 0.3).unwrap();
    let noisy: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let bc: f64 = rng.gen_range(18.0..34.0);
            (bc, 1.090 * bc + 1.758 + rng.sample(normal))
        })
        .collect();
    let sigma = fit_regression(&noisy).unwrap().sigma;

    report(
        7,
        "circumference pipeline",
        worst <= 0.03 && exact_ok && (0.2..=0.4).contains(&sigma),
        format!(
            "worst BC error {:.2}% over {cases} masks; noise-free fit slope {:.9} intercept {:.9}; noisy sigma {sigma:.3} cm",
            100.0 * worst,
            fit.slope,
            fit.intercept
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Determinism

fn tiny_dataset(dir: &Path) -> GeneratedDataset {
    let cfg = PhantomDatasetConfig {
        train_single: 6,
        train_multi: 2,
        val: 1,
        test: 2,
        shape: vec![32, 32],
        spacing: vec![0.6, 0.6],
        seed: 3,
        ..PhantomDatasetConfig::default_2d()
    };
    generate_dataset(&cfg, dir).unwrap()
}

fn pipeline_bytes(dir: &Path) -> [Vec<u8>; 4] {
    let ds = tiny_dataset(&dir.join("data"));
    let scans = TrainingScan::load_all(&ds.train).unwrap();
    let run = RunConfig::default();
    let cfg = TrainConfig {
        steps: 300,
        ..run.train.clone()
    };
    let (net, table, _) = train_model(&scans, run.net, &cfg).unwrap();
    let model = fit_bc_model(&ds.train, run.eval.bc_method).unwrap();
    let inv = neoinr::inversion::InversionConfig {
        steps: 30,
        ..run.invert.clone()
    };
    let records = evaluate(&net, &ds.test, &model, &inv, &run.eval).unwrap();
    write_report(&records, dir.join("report.csv")).unwrap();
    write_jsonl(&records, dir.join("cases.jsonl")).unwrap();
    let pred = predict_image(&net, table.global(), 0.4, &[32, 32], &[0.6, 0.6], 512).unwrap();
    [
        encode_checkpoint(&net, Some(&table)),
        neoinr::volume::encode_volume(&pred),
        std::fs::read(dir.join("report.csv")).unwrap(),
        std::fs::read(dir.join("cases.jsonl")).unwrap(),
    ]
}

#[test]
fn c08_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (x, y) = (pipeline_bytes(a.path()), pipeline_bytes(b.path()));
    let names = ["checkpoint", "prediction", "report", "case log"];
    let differing: Vec<&str> = names.iter().zip(x.iter().zip(&y)).filter(|(_, (p, q))| p != q).map(|(n, _)| *n).collect();
    report(
        8,
        "determinism",
        differing.is_empty(),
        format!("two seeded runs; differing artifacts: {differing:?}"),
    );
}

// ---------------------------------------------------------------------------
// 9. SGLA selection frequency

#[test]
fn c09_sgla_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(dir.path());
    let scans = TrainingScan::load_all(&ds.train).unwrap();
    let net_cfg = NetworkConfig {
        spatial_dims: 2,
        latent_dim: 4,
        hidden_dim: 8,
        layers: 3,
        omega0: 10.0,
        s0: 10.0,
    };
    let run = |p: f64, steps: u64| {
        let cfg = TrainConfig {
            steps,
            sgla_p: p,
            sgla_enabled: true,
            pixel_fraction: 0.02,
            seed: 19,
            ..TrainConfig::desk()
        };
        let mut net = InrNetwork::init(net_cfg, cfg.seed).unwrap();
        let mut table = LatentTable::new(4, cfg.keying());
        let mut state = TrainState::new(&net, &cfg);
        let log = train(&scans, &mut net, &mut table, &mut state, &cfg).unwrap();
        (log, table)
    };
    let (log, _) = run(0.1, 10_000);
    let frac = log.entries.iter().filter(|e| e.used_global).count() as f64 / log.entries.len() as f64;
    let (log0, table0) = run(0.0, 500);
    let untouched = log0.entries.iter().all(|e| !e.used_global) && table0.global().iter().all(|&v| v == 0.0);
    report(
        9,
        "SGLA frequency",
        (0.09..=0.11).contains(&frac) && untouched,
        format!("global latent chosen in {:.2}% of 10000 iterations at p=0.1; p=0 leaves it zero: {untouched}", 100.0 * frac),
    );
}

// ---------------------------------------------------------------------------
// 10. Atlas growth curve

#[test]
fn c10_atlas_sanity() {
    let g = grid();
    let m = g.get(true, true);
    let zero = vec![0.0f32; m.net.config().latent_dim];
    let opts = SequenceOptions {
        shape: &g.run.phantom.shape,
        spacing: &g.run.phantom.spacing,
        model: g.bc_model,
        bc_method: g.run.eval.bc_method,
        threshold: g.run.eval.threshold,
        micro_batch_size: 4096,
    };
    let seq = generate_sequence(&m.net, &zero, &g.run.atlas.curve_pmas(), ZERO_LABEL, &opts).unwrap();
    let hc: Vec<f64> = seq.curve.points.iter().map(|p| p.1).collect();
    let monotone = hc.windows(2).all(|w| w[1] >= w[0]);
    let increase = hc[hc.len() - 1] - hc[0];
    let slope = g.run.phantom.hc_slope;
    let truth: Vec<f64> = g
        .dataset
        .subjects
        .iter()
        .map(|p| {
            let c = |t| neoinr::phantom::true_circumference(p, t);
            slope * (c(T_MAX) - c(T_MIN))
        })
        .collect();
    let mean_truth = truth.iter().sum::<f64>() / truth.len() as f64;
    report(
        10,
        "atlas sanity",
        hc.len() == 20 && monotone && increase >= 0.5 * mean_truth,
        format!(
            "zero-latent HC {:.2} -> {:.2} cm over {} ages, monotone: {monotone}, increase {increase:.2} cm vs mean ground-truth {mean_truth:.2} cm",
            hc[0],
            hc[hc.len() - 1],
            hc.len()
        ),
    );
}

#[test]
fn atlas_zero_and_average_curves_agree() {
    let g = grid();
    let m = g.get(true, true);
    let opts = SequenceOptions {
        shape: &g.run.phantom.shape,
        spacing: &g.run.phantom.spacing,
        model: g.bc_model,
        bc_method: g.run.eval.bc_method,
        threshold: g.run.eval.threshold,
        micro_batch_size: 4096,
    };
    let pmas = g.run.atlas.curve_pmas();
    let zero = vec![0.0f32; m.net.config().latent_dim];
    let avg = average_latent(&m.table).unwrap();
    let z = generate_sequence(&m.net, &zero, &pmas, ZERO_LABEL, &opts).unwrap().curve;
    let a = generate_sequence(&m.net, &avg, &pmas, AVERAGE_LABEL, &opts).unwrap().curve;
    let gap = z.points.iter().zip(&a.points).map(|(p, q)| (p.1 - q.1).abs()).fold(0.0, f64::max);
    note(format!("  zero vs average latent: max HC gap {gap:.3} cm"));
    assert!(z.points.windows(2).all(|w| w[1].1 > w[0].1), "zero-latent curve not strictly increasing: {:?}", z.points);
    assert!(gap <= 1.0, "curves differ by {gap:.3} cm");
}
