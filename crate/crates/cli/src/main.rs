//! Single command-line entry point: dataset generation, training,
//! evaluation, logit export, ensembling, and the gradient-check suite.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime numerical failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shiftfast_core::checkpoint::{load_checkpoint, model_from_checkpoint};
use shiftfast_core::config::{resolve_data_spec, resolve_run_config, FlatConfig};
use shiftfast_core::data::{generate_synthetic, read_dataset, write_dataset};
use shiftfast_core::error::Error;
use shiftfast_core::eval::{
    ensemble, evaluate, export_logits, read_logits, EnsembleSpec, EvalGeometry, TTAVariant,
    VariantKind,
};
use shiftfast_core::gradcheck;
use shiftfast_core::models::InputMode;
use shiftfast_core::train::train;

#[derive(Parser)]
#[command(name = "shiftfast", version, about = "Temporal-shift and two-pathway video classification at desk scale")]
struct Cli {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Pin the thread count determinism is defined against.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic motion-direction dataset file.
    GenData(GenDataArgs),
    /// Train a model per a run configuration.
    Train(TrainArgs),
    /// Evaluate a checkpoint under a test-time-augmentation variant.
    Eval(EvalArgs),
    /// Fuse exported logits per an ensemble spec and score them.
    Ensemble(EnsembleArgs),
    /// Run the finite-difference gradient-check suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Data spec file (`data.* = value` lines).
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run config file (model.*, data-independent train.* and augment.* keys).
    #[arg(long)]
    config: PathBuf,
    /// Dataset file produced by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, metrics, and the resolved config.
    #[arg(long)]
    out: PathBuf,
    /// Resume from a checkpoint written by an earlier run of the same plan.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Variant name: center-crop, horizontal-flip, random-crop,
    /// reverse-order, or normal-reverse-concat.
    #[arg(long)]
    variant: String,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 10)]
    clips: usize,
    /// Logit records are appended here.
    #[arg(long)]
    logits_out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    /// One or more logit files from eval runs.
    #[arg(long, required = true, num_args = 1..)]
    logits: Vec<PathBuf>,
    /// Members file: `model_id variant stride mode multiplicity` per line.
    #[arg(long)]
    spec: PathBuf,
    /// Dataset file supplying the ground-truth labels.
    #[arg(long)]
    data: PathBuf,
    /// Optional output for the fused per-video logits.
    #[arg(long)]
    fused_out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Glob over check names (`*` wildcards), e.g. `conv*`.
    #[arg(long, default_value = "*")]
    filter: String,
}

fn glob_match(pattern: &str, name: &str) -> bool {
    // Minimal `*` glob.
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == name;
    }
    let mut rest = name;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        match rest.find(part) {
            Some(pos) => {
                if i == 0 && pos != 0 {
                    return false;
                }
                rest = &rest[pos + part.len()..];
            }
            None => return false,
        }
    }
    if let Some(last) = parts.last() {
        if !last.is_empty() && !name.ends_with(last) {
            return false;
        }
    }
    true
}

fn cmd_gen_data(args: &GenDataArgs, seed: u64) -> Result<(), Error> {
    let flat = FlatConfig::from_file(&args.spec)?;
    let spec = resolve_data_spec(&flat, seed)?;
    let ds = generate_synthetic(&spec)?;
    write_dataset(&ds, &args.out)?;
    let (c, t, h, w) = ds.dims();
    let resolved = args.out.with_extension("config");
    std::fs::write(&resolved, format!("{}seed = {seed}\n", spec.canonical_text()))?;
    println!(
        "{} clips, {} classes, dims {c}x{t}x{h}x{w}, written to {}",
        ds.clips.len(),
        ds.num_classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, seed: u64) -> Result<(), Error> {
    let flat = FlatConfig::from_file(&args.config)?;
    let run = resolve_run_config(&flat, seed, args.out.clone())?;
    let dataset = read_dataset(&args.data)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("run.config"), run.resolved_text(seed))?;

    let resume = match &args.resume {
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    if let Some(ckpt) = &resume {
        let last = run.plan.stages.len() - 1;
        if ckpt.stage == last && ckpt.epoch >= run.plan.stages[last].epochs {
            println!("run already complete at stage {} epoch {}; nothing to do", ckpt.stage, ckpt.epoch);
            return Ok(());
        }
    }
    let outcome = train(&run.plan, &run.model, &dataset, resume.as_ref())?;
    let last = outcome.metrics.last().map(|m| m.val_acc.unwrap_or(f64::NAN)).unwrap_or(f64::NAN);
    println!(
        "trained {} epochs, final val_acc {last}, checkpoint {}",
        outcome.metrics.len(),
        outcome.final_checkpoint.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs, seed: u64) -> Result<(), Error> {
    let kind = VariantKind::parse(&args.variant)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let model = model_from_checkpoint(&ckpt)?;
    let dataset = read_dataset(&args.data)?;
    let stats = match model.config.input_mode {
        InputMode::Rgb => dataset.stats.clone(),
        InputMode::Diff => dataset.diff_stats(),
    };
    let clips = dataset.val_clips();
    let (_, _, h, _) = dataset.dims();
    let variant = TTAVariant { kind, stride: args.stride, input_mode: model.config.input_mode };
    let geometry = EvalGeometry { base_size: h, crop_size: h };
    let (acc, records) =
        evaluate(&model, &clips, &stats, variant, geometry, args.clips, seed, false)?;
    export_logits(&records, &args.logits_out)?;
    println!("accuracy {acc}");
    Ok(())
}

fn cmd_ensemble(args: &EnsembleArgs, _seed: u64) -> Result<(), Error> {
    let spec = EnsembleSpec::parse(&std::fs::read_to_string(&args.spec)?)?;
    let mut records = Vec::new();
    let mut classes = None;
    for path in &args.logits {
        let (c, recs) = read_logits(path)?;
        if let Some(expect) = classes {
            if c != expect {
                return Err(Error::Format(format!(
                    "logit file {} has {c} classes, expected {expect}",
                    path.display()
                )));
            }
        }
        classes = Some(c);
        records.extend(recs);
    }
    let dataset = read_dataset(&args.data)?;
    let labels: BTreeMap<String, usize> =
        dataset.clips.iter().map(|c| (c.id.clone(), c.label)).collect();
    let outcome = ensemble(&spec, &records, &labels)?;
    if let Some(path) = &args.fused_out {
        let mut text = String::new();
        for (video, logits) in &outcome.fused {
            let cols: Vec<String> = logits.iter().map(|v| format!("{v:.16e}")).collect();
            text.push_str(&format!("{video}\t{}\n", cols.join("\t")));
        }
        std::fs::write(path, text)?;
    }
    println!("accuracy {}", outcome.accuracy);
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs, seed: u64) -> Result<(), Error> {
    let cases: Vec<_> =
        gradcheck::registry().into_iter().filter(|c| glob_match(&args.filter, c.name)).collect();
    if cases.is_empty() {
        println!("0 ops matched filter `{}`", args.filter);
        return Ok(());
    }
    let mut failures = 0usize;
    for case in &cases {
        match (case.run)(seed) {
            Ok(err) => {
                let verdict = if err < case.threshold { "pass" } else { "FAIL" };
                if err >= case.threshold {
                    failures += 1;
                }
                println!("{:<28} max_rel_err {err:<12.3e} threshold {:<9.0e} {verdict}", case.name, case.threshold);
            }
            Err(e) => {
                failures += 1;
                println!("{:<28} error: {e}", case.name);
            }
        }
    }
    println!("{} ops checked, {} failed", cases.len(), failures);
    if failures > 0 {
        return Err(Error::NonFinite(format!("{failures} gradient checks failed")));
    }
    Ok(())
}

fn run() -> Result<(), Error> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return Ok(());
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match &cli.command {
        Command::GenData(args) => cmd_gen_data(args, cli.seed),
        Command::Train(args) => cmd_train(args, cli.seed),
        Command::Eval(args) => cmd_eval(args, cli.seed),
        Command::Ensemble(args) => cmd_ensemble(args, cli.seed),
        Command::Gradcheck(args) => cmd_gradcheck(args, cli.seed),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
