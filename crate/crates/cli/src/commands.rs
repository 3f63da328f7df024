use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use ruq_core::data::{self, stratified_subsample};
use ruq_core::{
    auroc, calibrate, classification_metrics, roc_analysis, score_all, CalibrationConfig, ClassificationReport,
    Monitor64, Rollout64, ScoreParams64, Split, SyntheticConfig, Variant,
};
use serde_json::{json, Value};

use crate::args::{deployed, load_dataset, usage, Grid, ParamArgs, SplitArg};
use crate::table::{Cell, Format, Table};

pub const DEFAULT_SEED: u64 = 42;

pub struct Context {
    pub out: PathBuf,
    pub format: Format,
    pub seed: Option<u64>,
}

impl Context {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// What a command reports back for its manifest.
pub struct Run {
    pub seed: u64,
    pub config: Value,
    pub outputs: Vec<String>,
}

fn params_json(p: &ScoreParams64) -> Value {
    json!({ "variant": p.variant.name(), "w": p.w, "alpha": p.alpha, "beta": p.beta })
}

fn labels(rollouts: &[Rollout64]) -> Vec<ruq_core::Outcome> {
    rollouts.iter().map(|r| r.label()).collect()
}

/// Accuracy, precision, recall and F1, blank where the denominator was zero.
fn rate_cells(r: &ClassificationReport) -> Vec<Cell> {
    [("accuracy", r.accuracy), ("precision", r.precision), ("recall", r.recall), ("f1", r.f1)]
        .into_iter()
        .map(|(name, v)| if r.undefined.contains(&name) { Cell::Empty } else { v.into() })
        .collect()
}

fn nonempty(rollouts: Vec<Rollout64>, split: &str) -> Result<Vec<Rollout64>> {
    if rollouts.is_empty() {
        return Err(usage(format!("split `{split}` is empty")));
    }
    Ok(rollouts)
}

pub fn gen(ctx: &Context, config: Option<&Path>, gzip: bool) -> Result<Run> {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("--config: cannot read `{}`: {e}", path.display())))?;
            SyntheticConfig::from_json(&text)?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let ds = data::generate(&cfg)?.split(cfg.seed)?;
    let name = if gzip { "dataset.jsonl.gz" } else { "dataset.jsonl" };
    data::save(&ds, ctx.out.join(name))?;
    println!(
        "wrote {} rollouts ({} train, {} test) to {}",
        ds.len(),
        ds.part(Split::Train).len(),
        ds.part(Split::Test).len(),
        ctx.out.join(name).display()
    );
    Ok(Run { seed: cfg.seed, config: serde_json::to_value(&cfg)?, outputs: vec![name.into()] })
}

pub fn score(ctx: &Context, data_path: &Path, params: &ParamArgs) -> Result<Run> {
    let params = params.params()?;
    let ds = load_dataset(data_path, ctx.seed())?;
    let scores = score_all(ds.rollouts(), &params)?;
    let mut table = Table::new(&["rollout_id", "score", "label", "split"]);
    for (r, s) in ds.rollouts().iter().zip(&scores) {
        let split = ds.split_of(r.id()).map(|s| s.to_string());
        table.push(vec![r.id().into(), (*s).into(), (r.label().label() as usize).into(), split.into()]);
    }
    let name = table.write(&ctx.out, "scores", ctx.format)?;
    println!("scored {} rollouts with {}", table.len(), params.variant);
    Ok(Run {
        seed: ctx.seed(),
        config: json!({ "data": data_path, "params": params_json(&params) }),
        outputs: vec![name],
    })
}

pub fn calibrate_cmd(
    ctx: &Context,
    data_path: &Path,
    n_init: usize,
    n_iter: usize,
    subsample: Option<usize>,
    split: SplitArg,
) -> Result<Run> {
    if n_init == 0 {
        return Err(usage("--n-init must be at least 1"));
    }
    let seed = ctx.seed();
    let ds = load_dataset(data_path, seed)?;
    let mut rollouts = nonempty(split.select(&ds), split.name())?;
    if let Some(n) = subsample {
        rollouts = stratified_subsample(&rollouts, n, seed)?;
    }
    let config = CalibrationConfig { n_init, n_iter, seed, ..CalibrationConfig::default() };
    let result = calibrate(&rollouts, &config)?;
    std::fs::write(ctx.out.join("calibration.json"), result.to_json()? + "\n").context("writing calibration.json")?;

    let p = result.params();
    let beta = p.beta.expect("weighted");
    println!("best trial {} of {}", result.best.iteration, result.budget);
    println!("w* = {}", p.w.expect("weighted"));
    println!("alpha* = {:.4}", p.alpha.expect("weighted"));
    println!("beta* = [{}]", beta.map(|b| format!("{b:.3}")).join(", "));
    println!("AUROC = {:.4}", result.best.objective);
    println!("gamma* = {:.6}", result.gamma_star);
    Ok(Run {
        seed,
        config: json!({
            "data": data_path,
            "split": split.name(),
            "subsample": subsample,
            "n_rollouts": rollouts.len(),
            "calibration": serde_json::to_value(&config)?,
        }),
        outputs: vec!["calibration.json".into()],
    })
}

pub fn eval(
    ctx: &Context,
    data_path: &Path,
    calibration: Option<&PathBuf>,
    params: &ParamArgs,
    gamma: Option<f64>,
    split: SplitArg,
) -> Result<Run> {
    let (params, gamma) = deployed(calibration, params, gamma)?;
    let ds = load_dataset(data_path, ctx.seed())?;
    let rollouts = nonempty(split.select(&ds), split.name())?;
    let scores = score_all(&rollouts, &params)?;
    let labels = labels(&rollouts);
    let area = auroc(&scores, &labels)?;
    let report = classification_metrics(&scores, &labels, gamma)?;

    let mut table = Table::new(&[
        "split", "n", "variant", "auroc", "gamma", "accuracy", "precision", "recall", "f1", "tp", "fp", "tn", "fn",
    ]);
    let mut row: Vec<Cell> =
        vec![split.name().into(), rollouts.len().into(), params.variant.name().into(), area.into(), gamma.into()];
    row.extend(rate_cells(&report));
    row.extend([report.tp, report.fp, report.tn, report.fn_].map(Cell::from));
    table.push(row);
    let name = table.write(&ctx.out, "metrics", ctx.format)?;
    println!(
        "{} ({} rollouts): AUROC {:.4}, accuracy {:.4}, precision {:.4}, recall {:.4}, F1 {:.4} at gamma {}",
        split.name(),
        rollouts.len(),
        area,
        report.accuracy,
        report.precision,
        report.recall,
        report.f1,
        gamma
    );
    Ok(Run {
        seed: ctx.seed(),
        config: json!({
            "data": data_path,
            "calibration": calibration,
            "split": split.name(),
            "params": params_json(&params),
            "gamma": gamma,
        }),
        outputs: vec![name],
    })
}

struct Fitted {
    train_auroc: f64,
    gamma: f64,
    train: ClassificationReport,
    test_auroc: f64,
    test: ClassificationReport,
}

/// Scores both splits, takes the Youden threshold on train and applies it
/// to both.
fn fit_and_test(train: &[Rollout64], test: &[Rollout64], params: &ScoreParams64) -> Result<Fitted> {
    let (train_labels, test_labels) = (labels(train), labels(test));
    let train_scores = score_all(train, params)?;
    let test_scores = score_all(test, params)?;
    let roc = roc_analysis(&train_scores, &train_labels)?;
    let gamma = roc.youden_threshold;
    Ok(Fitted {
        train_auroc: roc.auroc,
        gamma,
        train: classification_metrics(&train_scores, &train_labels, gamma)?,
        test_auroc: auroc(&test_scores, &test_labels)?,
        test: classification_metrics(&test_scores, &test_labels, gamma)?,
    })
}

pub fn sweep(ctx: &Context, data_path: &Path, grid: &[String]) -> Result<Run> {
    let grid = Grid::parse(grid)?;
    let ds = load_dataset(data_path, ctx.seed())?;
    let train = nonempty(ds.part(Split::Train), "train")?;
    let test = nonempty(ds.part(Split::Test), "test")?;

    let cells: Vec<(usize, f64)> = grid.w.iter().flat_map(|&w| grid.alpha.iter().map(move |&a| (w, a))).collect();
    let fitted = cells
        .par_iter()
        .map(|&(w, a)| fit_and_test(&train, &test, &ScoreParams64::sw_atr(w, a)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&[
        "w",
        "alpha",
        "gamma",
        "train_auroc",
        "train_accuracy",
        "train_precision",
        "train_recall",
        "train_f1",
        "test_auroc",
        "test_accuracy",
        "test_precision",
        "test_recall",
        "test_f1",
    ]);
    for (&(w, a), f) in cells.iter().zip(&fitted) {
        let mut row: Vec<Cell> = vec![w.into(), a.into(), f.gamma.into(), f.train_auroc.into()];
        row.extend(rate_cells(&f.train));
        row.push(f.test_auroc.into());
        row.extend(rate_cells(&f.test));
        table.push(row);
    }
    let grid_name = table.write(&ctx.out, "sweep", ctx.format)?;

    let axes: Vec<(&str, f64, ScoreParams64)> = grid
        .w
        .iter()
        .map(|&w| ("w", w as f64, ScoreParams64::sw(w)))
        .chain(grid.alpha.iter().map(|&a| ("alpha", a, ScoreParams64::atr(a))))
        .collect();
    let marginals = axes
        .par_iter()
        .map(|(_, _, p)| fit_and_test(&train, &test, p))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["axis", "value", "variant", "train_auroc", "test_auroc"]);
    for ((axis, value, p), f) in axes.iter().zip(&marginals) {
        table.push(vec![(*axis).into(), (*value).into(), p.variant.name().into(), f.train_auroc.into(), f.test_auroc.into()]);
    }
    let marginal_name = table.write(&ctx.out, "sweep_marginals", ctx.format)?;

    let (best, f) = cells
        .iter()
        .zip(&fitted)
        .fold(None::<(&(usize, f64), &Fitted)>, |acc, cur| match acc {
            Some(a) if a.1.test_auroc >= cur.1.test_auroc => Some(a),
            _ => Some(cur),
        })
        .expect("grid is non-empty");
    println!("{} cells; best test AUROC {:.4} at w = {}, alpha = {}", cells.len(), f.test_auroc, best.0, best.1);
    Ok(Run {
        seed: ctx.seed(),
        config: json!({ "data": data_path, "w": grid.w, "alpha": grid.alpha }),
        outputs: vec![grid_name, marginal_name],
    })
}

pub fn monitor(
    ctx: &Context,
    data_path: &Path,
    rollout_id: &str,
    calibration: Option<&PathBuf>,
    params: &ParamArgs,
    gamma: Option<f64>,
) -> Result<Run> {
    let (params, gamma) = deployed(calibration, params, gamma)?;
    let ds = load_dataset(data_path, ctx.seed())?;
    let rollout = ds.get(rollout_id).ok_or_else(|| usage(format!("--rollout-id: no rollout `{rollout_id}`")))?;
    let mut mon = Monitor64::new(params, gamma)?;
    let mut trace = Vec::with_capacity(rollout.len());
    for (e, a) in rollout.entropy().iter().zip(rollout.actions()) {
        let o = mon.push(e, a)?;
        trace.push((o.step, o.current_score, o.triggered));
    }
    let final_score = mon.finalize();
    if let Some(last) = trace.last_mut() {
        // streams shorter than the window are only scored once complete
        last.1 = final_score;
        last.2 = mon.triggered();
    }
    let mut table = Table::new(&["step", "current_score", "triggered"]);
    for (step, s, trig) in &trace {
        table.push(vec![(*step).into(), (*s).into(), (*trig).into()]);
    }
    let name = table.write(&ctx.out, "trace", ctx.format)?;
    match mon.trigger_step() {
        Some(k) => println!("{rollout_id}: triggered at step {k} of {}", rollout.len()),
        None => println!("{rollout_id}: not triggered in {} steps", rollout.len()),
    }
    if let Some(s) = final_score {
        println!("final score {s}");
    }
    Ok(Run {
        seed: ctx.seed(),
        config: json!({
            "data": data_path,
            "rollout_id": rollout_id,
            "calibration": calibration,
            "params": params_json(&params),
            "gamma": gamma,
        }),
        outputs: vec![name],
    })
}

pub fn report(ctx: &Context, data_path: &Path, calibration: Option<&PathBuf>, flags: &ParamArgs) -> Result<Run> {
    if flags.variant.is_some() {
        return Err(usage("report scores every variant; --variant is not accepted"));
    }
    let mut args = flags.clone();
    if let Some(path) = calibration {
        let p = crate::args::load_calibration(path)?.params();
        args.w = args.w.or(p.w);
        args.alpha = args.alpha.or(p.alpha);
        if args.beta.is_none() {
            args.beta = p.beta.map(|b| b.to_vec());
        }
    }
    if args.beta.is_none() {
        args.beta = Some(vec![1.0; ruq_core::DOF]);
    }
    let ds = load_dataset(data_path, ctx.seed())?;
    let train = nonempty(ds.part(Split::Train), "train")?;
    let test = nonempty(ds.part(Split::Test), "test")?;
    let params = Variant::ALL.iter().map(|&v| args.for_variant(v)).collect::<Result<Vec<_>>>()?;
    let fitted = params.par_iter().map(|p| fit_and_test(&train, &test, p)).collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(&[
        "variant",
        "w",
        "alpha",
        "gamma",
        "train_auroc",
        "test_auroc",
        "test_accuracy",
        "test_precision",
        "test_recall",
        "test_f1",
    ]);
    println!("{:<10} {:>10} {:>10} {:>10} {:>10}", "variant", "train_auc", "test_auc", "test_acc", "test_f1");
    for (p, f) in params.iter().zip(&fitted) {
        let mut row: Vec<Cell> =
            vec![p.variant.name().into(), p.w.into(), p.alpha.into(), f.gamma.into(), f.train_auroc.into(), f.test_auroc.into()];
        row.extend(rate_cells(&f.test));
        table.push(row);
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            p.variant.name(),
            f.train_auroc,
            f.test_auroc,
            f.test.accuracy,
            f.test.f1
        );
    }
    let name = table.write(&ctx.out, "report", ctx.format)?;
    Ok(Run {
        seed: ctx.seed(),
        config: json!({
            "data": data_path,
            "calibration": calibration,
            "params": params.iter().map(params_json).collect::<Vec<_>>(),
        }),
        outputs: vec![name],
    })
}
