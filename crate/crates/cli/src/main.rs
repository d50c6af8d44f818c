//! `xtalfind`: generate synthetic plates, train and score the drop finder,
//! and run or compare classification pipelines.
//!
//! Exit status is 0 on success, 1 for usage or configuration errors and 2
//! for failures while running.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xtalfind::classifier::ModelScale;
use xtalfind::finder::{build_unet, canny_baseline_mask, train_finder, SegmentationModel};
use xtalfind::harness::{
    compare_pipelines, demo_config, emit_plots, ensure_demo_dataset, finder_table_csv, finder_table_text, predict_native_mask,
    resize_seg_sample, run_and_emit, score_masks, ExperimentConfig, ExperimentResult, FinderTable, PipelineKind, RESULTS_TXT,
};
use xtalfind::imgcore::{load_manifest, SegSample, SplitSpec};
use xtalfind::synthdrop::{generate_dataset, SourceProfile, SynthConfig};
use xtalfind::Error;

#[derive(Parser, Debug)]
#[command(name = "xtalfind", version, about = "Find crystallization drops, then classify them")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML or JSON); keys left out keep the
    /// `--scale` defaults. `compare` accepts it more than once.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Base seed; overrides the configuration's `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Model and training defaults.
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

impl From<Scale> for ModelScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Desk => ModelScale::Desk,
            Scale::Full => ModelScale::Full,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic dataset with drop masks.
    Synth {
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 0.3)]
        clutter: f64,
        #[arg(long, default_value_t = 256)]
        image_size: usize,
    },
    /// Train the U-Net drop finder on a dataset's masks.
    TrainFinder {
        /// Dataset root; overrides the configuration's `dataset_root`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a finder checkpoint against a dataset's masks.
    EvalFinder {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also score the edge-detection baseline at these thresholds.
        #[arg(long, value_name = "LOW,HIGH", value_parser = parse_pair)]
        canny: Option<(f64, f64)>,
    },
    /// Run one pipeline; without `--config`, a small demo on generated data.
    Run {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        pipeline: Option<PipelineKind>,
    },
    /// Run several configurations (or all three pipelines on the demo data)
    /// and tabulate them against the full-image baseline.
    Compare,
    /// Rewrite the tables and plots of a saved result.
    Plot {
        /// `result.json` written by `run` or `compare`.
        #[arg(long)]
        result: PathBuf,
    },
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let low: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let high: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((low, high))
}

/// A failure with its exit status.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            e => Failure::Runtime(e),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(Error::Io { path: path.to_path_buf(), source: e })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("xtalfind: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("xtalfind: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    if c.config.len() > 1 && !matches!(cli.command, Command::Compare) {
        return Err(Failure::Usage("only `compare` accepts several --config files".into()));
    }
    match cli.command {
        Command::Synth { per_class, clutter, image_size } => synth(c, per_class, clutter, image_size),
        Command::TrainFinder { data } => train(c, data),
        Command::EvalFinder { model, data, canny } => eval(c, &model, &data, canny),
        Command::Run { data, pipeline } => run(c, data, pipeline),
        Command::Compare => compare(c),
        Command::Plot { result } => plot(c, &result),
    }
}

fn out_dir(c: &Common) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Configuration from `path` over the `--scale` defaults, with the seed and
/// output flags applied.
fn load_config(c: &Common, path: &Path) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_file_over(path, &ExperimentConfig::for_scale(c.scale.into()))?;
    if let Some(s) = c.seed {
        cfg.base_seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth(c: &Common, per_class: usize, clutter: f64, image_size: usize) -> Result<(), Failure> {
    let cfg = SynthConfig { image_size, background_clutter: clutter, seed: c.seed.unwrap_or(0), ..Default::default() };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let out = out_dir(c);
    let manifest = generate_dataset(&cfg, &SourceProfile::defaults(), per_class, &out)?;
    println!("wrote {} samples to {}", manifest.len(), out.display());
    Ok(())
}

fn train(c: &Common, data: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = match c.config.first() {
        Some(p) => load_config(c, p)?,
        None => {
            let mut d = ExperimentConfig::for_scale(c.scale.into());
            d.base_seed = c.seed.unwrap_or(0);
            d.output_dir = out_dir(c);
            d
        }
    };
    if let Some(d) = data {
        cfg.dataset_root = d;
    }
    let cfg = cfg.for_repeat(0);
    let size = cfg.finder_model.input_size;
    let seg: Vec<SegSample> = load_manifest(&cfg.dataset_root)?
        .seg_samples()?
        .iter()
        .map(|s| resize_seg_sample(s, size))
        .collect::<xtalfind::Result<_>>()?;
    let (order, n_fit) = SplitSpec::new(cfg.finder_train_fraction, cfg.split.seed).assign(seg.len())?;
    let fit: Vec<SegSample> = order[..n_fit].iter().map(|&i| seg[i].clone()).collect();
    let held: Vec<SegSample> = order[n_fit..].iter().map(|&i| seg[i].clone()).collect();
    let (mut model, log) = train_finder(build_unet(&cfg.finder_model)?, &fit, &held, &cfg.finder_train, &cfg.finder_augment)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io(out))?;
    let ckpt = out.join("finder.ckpt");
    model.save(&ckpt)?;
    let log_path = out.join("finder_log.csv");
    fs::write(&log_path, log.to_csv()).map_err(io(&log_path))?;
    let table = xtalfind::harness::evaluate_finder(&mut model, &held, cfg.finder_train.mask_threshold)?;
    println!("held-out masks ({} of {}):", held.len(), seg.len());
    print!("{}", finder_table_text(&table));
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn eval(c: &Common, model: &Path, data: &Path, canny: Option<(f64, f64)>) -> Result<(), Failure> {
    let mut finder = SegmentationModel::load(model)?;
    let samples = load_manifest(data)?.seg_samples()?;
    let truths: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();
    let sources: Vec<String> = samples.iter().map(|s| s.source_tag.clone()).collect();
    let preds = samples.iter().map(|s| predict_native_mask(&mut finder, &s.image, 0.5)).collect::<xtalfind::Result<Vec<_>>>()?;
    let mut tables = vec![("unet", score_masks(&preds, &truths, &sources)?)];
    if let Some((low, high)) = canny {
        let edges = samples.iter().map(|s| canny_baseline_mask(&s.image, low, high)).collect::<xtalfind::Result<Vec<_>>>()?;
        tables.push(("canny", score_masks(&edges, &truths, &sources)?));
    }
    for (name, table) in &tables {
        println!("{name}:");
        print!("{}", finder_table_text(table));
    }
    if let Some(out) = &c.out {
        write_tables(out, &tables)?;
    }
    Ok(())
}

fn write_tables(out: &Path, tables: &[(&str, FinderTable)]) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(io(out))?;
    for (name, table) in tables {
        let p = out.join(format!("finder_eval_{name}.csv"));
        fs::write(&p, finder_table_csv(table)).map_err(io(&p))?;
    }
    Ok(())
}

fn run(c: &Common, data: Option<PathBuf>, pipeline: Option<PipelineKind>) -> Result<(), Failure> {
    let mut cfg = match c.config.first() {
        Some(p) => load_config(c, p)?,
        None => demo_config(c.scale.into(), c.seed.unwrap_or(0), &out_dir(c)),
    };
    if let Some(d) = data {
        cfg.dataset_root = d;
    } else if c.config.is_empty() {
        ensure_demo_dataset(&cfg)?;
    }
    if let Some(k) = pipeline {
        cfg.pipeline = k;
    }
    run_and_emit(&cfg)?;
    let txt = cfg.output_dir.join(RESULTS_TXT);
    print!("{}", fs::read_to_string(&txt).map_err(io(&txt))?);
    Ok(())
}

fn compare(c: &Common) -> Result<(), Failure> {
    let (configs, out) = if c.config.is_empty() {
        let demo = demo_config(c.scale.into(), c.seed.unwrap_or(0), &out_dir(c));
        ensure_demo_dataset(&demo)?;
        let all = PipelineKind::ALL.into_iter().map(|k| ExperimentConfig { pipeline: k, ..demo.clone() }).collect();
        (all, demo.output_dir)
    } else {
        let all = c.config.iter().map(|p| load_config(c, p)).collect::<Result<Vec<_>, _>>()?;
        (all, out_dir(c))
    };
    if configs.len() < 2 {
        return Err(Failure::Usage("compare needs at least two --config files".into()));
    }
    let report = compare_pipelines(&configs)?;
    report.emit(&out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn plot(c: &Common, result: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(result).map_err(io(result))?;
    let parsed = ExperimentResult::from_json(&text)?;
    let out = c.out.clone().unwrap_or_else(|| result.parent().map(Path::to_path_buf).unwrap_or_default());
    for f in emit_plots(&parsed, &out)? {
        println!("{}", f.display());
    }
    Ok(())
}
