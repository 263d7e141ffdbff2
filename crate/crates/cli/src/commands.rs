use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cvxattn_core::dataio::{ms_to_frames, remove_drift, smooth, DRIFT_WINDOW_MS};
use cvxattn_core::model::{deserialize, serialize};
use cvxattn_core::trainer::{kfold_evaluate, split_evaluate};
use cvxattn_core::verify::{
    convexity_check, nonexpansiveness_sweep, softmax_counterexample, CONVEXITY_TOL,
};
use cvxattn_core::{
    load_dataset, param_count, predict, save_dataset, synth_generate, train, Dataset, GestureKind,
    LossKind, ModelBundle, Precision,
};

use crate::config::{resolve_train, CliConfig, TrainFlags};
use crate::error::{CliError, CliResult};

/// Options shared by every subcommand.
pub struct Globals {
    pub seed: Option<u64>,
    pub config: CliConfig,
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    Ok(load_dataset(path)?)
}

fn load_model(path: &Path) -> CliResult<(ModelBundle, u64)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((deserialize(&bytes)?, bytes.len() as u64))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn echo_config<T: serde::Serialize>(what: &str, value: &T) {
    match serde_json::to_string(value) {
        Ok(json) => eprintln!("effective {what} config: {json}"),
        Err(e) => log::warn!("could not echo {what} config: {e}"),
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub struct SynthArgs {
    pub kind: Option<GestureKind>,
    pub n_per_class: Option<usize>,
    pub noise: Option<f64>,
    pub out: PathBuf,
}

pub fn synth(g: &Globals, args: SynthArgs) -> CliResult<()> {
    let mut cfg = g.config.synth.clone().unwrap_or_default();
    if let Some(kind) = args.kind {
        cfg.kind = kind;
    }
    if let Some(n) = args.n_per_class {
        cfg.samples_per_class = n;
    }
    if let Some(noise) = args.noise {
        cfg.noise_stddev = noise;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("synth config: {e}")))?;
    echo_config("synth", &cfg);
    let ds = synth_generate(&cfg)?;
    save_dataset(&ds, &args.out)?;
    println!(
        "wrote {} {} samples ({} classes, {} frames) to {}",
        ds.len(),
        cfg.kind,
        ds.classes(),
        ds.frames(),
        args.out.display()
    );
    Ok(())
}

pub struct TrainArgs {
    pub data: Option<PathBuf>,
    pub flags: TrainFlags,
    pub out_model: PathBuf,
    pub report: Option<PathBuf>,
}

pub fn train_cmd(g: &Globals, args: TrainArgs) -> CliResult<()> {
    let ds = load_data(&g.config.data_path(args.data.as_deref())?)?;
    let flags = TrainFlags {
        seed: g.seed,
        ..args.flags
    };
    let cfg = resolve_train(&g.config, &flags, &ds)?;
    echo_config("train", &cfg);
    let (bundle, report) = train(&ds, &cfg)?;
    let bytes = serialize(&bundle, Precision::F64)?;
    write_file(&args.out_model, &bytes)?;
    if let Some(path) = &args.report {
        let mut out = String::new();
        for rec in &report.epochs {
            out.push_str(&serde_json::to_string(rec).expect("epoch records serialize"));
            out.push('\n');
        }
        write_file(path, out.as_bytes())?;
    }
    let pc = param_count(&bundle);
    println!("trainable={} fixed={}", pc.trainable, pc.fixed);
    println!(
        "epochs={} final_loss={:.6} final_accuracy={:.4} nuclear_norm={:.6} converged_at={}",
        report.epochs.len(),
        report.final_loss(),
        report.final_accuracy(),
        report.final_nuclear_norm,
        report
            .epochs_to_convergence
            .map_or("never".to_string(), |e| e.to_string())
    );
    println!("model={} bytes={}", args.out_model.display(), bytes.len());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    KFold,
    Split,
}

pub struct EvalArgs {
    pub data: Option<PathBuf>,
    pub flags: TrainFlags,
    pub mode: EvalMode,
    pub folds: usize,
    pub parallel: bool,
}

pub fn eval(g: &Globals, args: EvalArgs) -> CliResult<()> {
    let ds = load_data(&g.config.data_path(args.data.as_deref())?)?;
    let flags = TrainFlags {
        seed: g.seed,
        ..args.flags
    };
    let cfg = resolve_train(&g.config, &flags, &ds)?;
    echo_config("train", &cfg);
    match args.mode {
        EvalMode::KFold => {
            if args.folds < 2 {
                return Err(CliError::Usage("--folds must be at least 2".into()));
            }
            println!(
                "method: stratified {}-fold cross-validation, {} samples, seed {}",
                args.folds,
                ds.len(),
                cfg.seed
            );
            let r = kfold_evaluate(&ds, &cfg, args.folds, args.parallel)?;
            for (i, (acc, f1)) in r.fold_accuracy.iter().zip(&r.fold_macro_f1).enumerate() {
                println!("fold {i}: accuracy {acc:.4} macro_f1 {f1:.4}");
            }
            println!("accuracy: {:.4} +/- {:.4}", r.mean_accuracy, r.std_accuracy);
            println!("macro_f1: {:.4} +/- {:.4}", r.mean_macro_f1, r.std_macro_f1);
        }
        EvalMode::Split => {
            println!(
                "method: stratified 60/20/20 train/validation/test split, {} samples, seed {}",
                ds.len(),
                cfg.seed
            );
            let r = split_evaluate(&ds, &cfg)?;
            println!(
                "sizes: train {} validation {} test {}",
                r.train_size, r.validation_size, r.test_size
            );
            println!(
                "validation: accuracy {:.4} macro_f1 {:.4}",
                r.validation.accuracy, r.validation.macro_f1
            );
            println!(
                "test: accuracy {:.4} macro_f1 {:.4}",
                r.test.accuracy, r.test.macro_f1
            );
        }
    }
    Ok(())
}

pub struct PredictArgs {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn predict_cmd(g: &Globals, args: PredictArgs) -> CliResult<()> {
    let (bundle, _) = load_model(&g.config.model_path(args.model.as_deref())?)?;
    let ds = load_data(&g.config.data_path(args.data.as_deref())?)?;
    if ds.classes() != bundle.classes() {
        return Err(CliError::Usage(format!(
            "model has {} classes, dataset has {}",
            bundle.classes(),
            ds.classes()
        )));
    }
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| CliError::io(path, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["gesture_id".to_string(), "label".into(), "predicted".into()];
    header.extend(ds.class_names.iter().map(|c| format!("score_{c}")));
    w.write_record(&header)?;
    let mut agree = 0usize;
    for s in &ds.samples {
        let p = predict(&s.x, &bundle)?;
        if p.label == s.label {
            agree += 1;
        }
        let mut row = vec![
            s.id.clone(),
            ds.class_names[s.label].clone(),
            ds.class_names[p.label].clone(),
        ];
        row.extend(p.scores.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
        .map_err(|e| CliError::io(args.out.clone().unwrap_or_default(), e))?;
    eprintln!(
        "predicted {} gestures; {:.4} agree with stored labels",
        ds.len(),
        agree as f64 / ds.len() as f64
    );
    Ok(())
}

pub struct VerifyArgs {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub trials: usize,
    pub noise: f64,
    pub pairs: usize,
    /// Loss to probe; the model's own training loss when `None`.
    pub loss: Option<LossKind>,
}

pub fn verify(g: &Globals, args: VerifyArgs) -> CliResult<()> {
    let (bundle, _) = load_model(&g.config.model_path(args.model.as_deref())?)?;
    if !bundle.trained {
        return Err(CliError::Usage("model is not trained".into()));
    }
    let ds = load_data(&g.config.data_path(args.data.as_deref())?)?;
    let seed = g.seed.unwrap_or(0);
    let xs: Vec<_> = ds.samples.iter().map(|s| s.x.clone()).collect();
    let labels = ds.labels();
    let mut failures = Vec::new();

    // The midpoint protocol is meaningful around a model trained with the
    // loss being probed.
    let kinds = match args.loss {
        Some(kind) => vec![kind],
        None => vec![bundle.loss_kind],
    };
    for kind in kinds {
        let r = convexity_check(&bundle, &xs, &labels, kind, args.trials, args.noise, seed)?;
        println!(
            "{kind}: {}/{} satisfied (tol {CONVEXITY_TOL:e}, noise {}, mean violation {:.3e}, max {:.3e})",
            r.satisfied, r.trials, r.noise_stddev, r.mean_violation, r.max_violation
        );
        if !r.passed() {
            failures.push(format!("{kind} convexity"));
        }
    }

    let dim = bundle.spec.patches;
    let r = nonexpansiveness_sweep(args.pairs, dim, 3.0, seed)?;
    println!(
        "nonexpansiveness: {} pairs in dimension {}, max ratio {:.6}, max firm gap {:.3e}, skipped {}",
        r.pairs, r.dim, r.max_ratio, r.max_firm_gap, r.skipped
    );
    if !r.passed() {
        failures.push("nonexpansiveness".into());
    }

    let c = softmax_counterexample()?;
    println!(
        "softmax counterexample: softmax(1,0)_1 {:.4} vs averaged {:.4} (Jensen violated: {}); simplex distance {:.4} <= {:.4} (holds: {})",
        c.softmax_at_midpoint[0],
        c.averaged_softmax[0],
        c.softmax_convexity_fails,
        c.distance_at_midpoint,
        c.averaged_distance,
        c.distance_convexity_holds
    );
    if !c.passed() {
        failures.push("softmax counterexample".into());
    }

    if failures.is_empty() {
        println!("verify: all checks passed");
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "failed checks: {}",
            failures.join(", ")
        )))
    }
}

pub struct BenchArgs {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub iters: usize,
    pub max_mean_us: f64,
}

const WARMUP_RUNS: usize = 10;

pub fn bench(g: &Globals, args: BenchArgs) -> CliResult<()> {
    if args.iters == 0 {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    let (bundle, size) = load_model(&g.config.model_path(args.model.as_deref())?)?;
    let ds = load_data(&g.config.data_path(args.data.as_deref())?)?;
    let sample = |i: usize| &ds.samples[i % ds.len()].x;
    for i in 0..WARMUP_RUNS {
        predict(sample(i), &bundle)?;
    }
    let mut times = Vec::with_capacity(args.iters);
    for i in 0..args.iters {
        let x = sample(i);
        let t = Instant::now();
        std::hint::black_box(predict(std::hint::black_box(x), &bundle)?);
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let (mean, std) = mean_std(&times);

    // Drift removal and smoothing, reported for comparison only.
    let window = ms_to_frames(DRIFT_WINDOW_MS, ds.sample_rate);
    let mut pre = Vec::with_capacity(args.iters);
    for i in 0..args.iters {
        let x = sample(i);
        let t = Instant::now();
        std::hint::black_box(smooth(&remove_drift(std::hint::black_box(x), window)?)?);
        pre.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let (pre_mean, _) = mean_std(&pre);

    println!(
        "latency: mean {mean:.2} us, std {std:.2} us over {} runs",
        args.iters
    );
    println!(
        "preprocessing: mean {pre_mean:.2} us per gesture ({:.3} us per frame)",
        pre_mean / ds.frames() as f64
    );
    println!("model size: {size} bytes");
    if mean >= args.max_mean_us {
        return Err(CliError::Check(format!(
            "mean latency {mean:.2} us exceeds {} us",
            args.max_mean_us
        )));
    }
    Ok(())
}

pub struct ExportArgs {
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub precision: Precision,
    pub data: Option<PathBuf>,
}

pub fn export(g: &Globals, args: ExportArgs) -> CliResult<()> {
    let (bundle, _) = load_model(&g.config.model_path(args.model.as_deref())?)?;
    let bytes = serialize(&bundle, args.precision)?;
    write_file(&args.out, &bytes)?;
    println!(
        "exported {}-bit model to {} ({} bytes)",
        8 * args.precision.width(),
        args.out.display(),
        bytes.len()
    );
    let Some(data) = args.data.as_deref().or(g.config.data.as_deref()) else {
        return Ok(());
    };
    let ds = load_data(data)?;
    let exported = deserialize(&bytes)?;
    let mut changed = 0usize;
    for s in &ds.samples {
        if predict(&s.x, &bundle)?.label != predict(&s.x, &exported)?.label {
            changed += 1;
        }
    }
    println!(
        "label parity: {changed} of {} predictions changed",
        ds.len()
    );
    if changed > 0 {
        return Err(CliError::Check(format!(
            "{changed} labels changed by export"
        )));
    }
    Ok(())
}
