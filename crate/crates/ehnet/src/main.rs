use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use ehnet::checkpoint::Checkpoint;
use ehnet::config::RunConfig;
use ehnet::corpus::{generate_corpus, CorpusIndex, CorpusSummary};
use ehnet::demo::write_demo;
use ehnet::dump::{write_dump, DumpFormat};
use ehnet::manifest::DatasetManifest;
use ehnet::pipeline::{enhance, enhance_index, evaluate_corpus, report_table, report_tsv};
use ehnet::session::run_training;
use ehnet::wav::{read_wav, write_wav};
use ehnet::{Error, Result};
use ehnet_core::dsp::{stft, StftConfig, Window};
use ehnet_core::model::Architecture;
use ehnet_core::training::{grad_check, Fault, GradCheckOptions, GradCheckReport};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_UNKNOWN_FLAG: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "ehnet",
    version,
    about = "Convolutional-recurrent speech enhancement on magnitude spectrograms"
)]
struct Cli {
    /// More log output (repeatable)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a noisy/clean corpus from a manifest
    Synthesize(SynthesizeArgs),
    /// Train a model on a corpus index
    Train(TrainArgs),
    /// Enhance a WAV file, or every noisy file of a corpus index
    Enhance(EnhanceArgs),
    /// Score enhanced files against the clean references of an index
    Evaluate(EvaluateArgs),
    /// Compare backpropagated gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Write the magnitude spectrogram of a WAV file
    DumpSpectrogram(DumpArgs),
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    /// Manifest listing the mixtures
    #[arg(long, required_unless_present = "demo", conflicts_with = "demo")]
    manifest: Option<PathBuf>,
    /// Write the bundled demo assets, manifest and config into --out and synthesize them
    #[arg(long)]
    demo: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Parallel workers [default: available cores]
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for the demo assets
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Config file
    #[arg(long, env = "EHNET_CONFIG")]
    config: Option<PathBuf>,
    /// Override a config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Gradient workers per minibatch
    #[arg(long)]
    workers: Option<usize>,
    /// Continue from <out_dir>/last.ckpt
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Noisy WAV file
    #[arg(long, required_unless_present = "index", conflicts_with = "index")]
    input: Option<PathBuf>,
    /// Corpus index whose noisy files are enhanced into --output as <id>.wav
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output WAV file, or directory with --index
    #[arg(long)]
    output: PathBuf,
    /// Accept inputs whose sample rate differs from the training rate
    #[arg(long)]
    allow_any_rate: bool,
    /// Output bit depth (16 or 24)
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u16).range(16..=24))]
    bits: u16,
}

#[derive(Args, Debug)]
struct StftArgs {
    #[arg(long, default_value_t = 512)]
    fft_size: usize,
    #[arg(long, default_value_t = 256)]
    hop_size: usize,
    /// Bins kept [default: fft_size / 2]
    #[arg(long)]
    bins_kept: Option<usize>,
    #[arg(long, default_value = "sqrt-hann")]
    window: Window,
}

impl StftArgs {
    fn config(&self) -> StftConfig {
        StftConfig {
            fft_size: self.fft_size,
            hop_size: self.hop_size,
            window: self.window,
            bins_kept: self.bins_kept.unwrap_or(self.fft_size / 2),
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    index: PathBuf,
    /// Directory holding <id>.wav for every pair of the index
    #[arg(long)]
    enhanced: PathBuf,
    /// Write the per-file report as TSV here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Take the STFT settings from this config instead of the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    stft: StftArgs,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Precision {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    SignFlip,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    precision: Precision,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 6)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt the analytic gradient to check that the checker notices
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    input: PathBuf,
    /// Destination; `.csv` selects CSV, anything else the binary format
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    stft: StftArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                clap::error::ErrorKind::UnknownArgument
                | clap::error::ErrorKind::InvalidSubcommand => ExitCode::from(EXIT_UNKNOWN_FLAG),
                _ => ExitCode::from(EXIT_INPUT),
            };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Synthesize(a) => synthesize(a),
        Command::Train(a) => train(a),
        Command::Enhance(a) => enhance_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::DumpSpectrogram(a) => dump(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_INPUT
            })
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_summary(s: &CorpusSummary) {
    println!("wrote {} pairs, skipped {}", s.written, s.skipped.len());
    for (record, why) in &s.skipped {
        println!("  skipped record {record}: {why}");
    }
    println!("achieved SNR histogram:");
    for (i, count) in s.histogram().iter().enumerate() {
        let label = if i == 5 {
            ">=25 dB".to_string()
        } else {
            format!("{:>2}-{:<2} dB", 5 * i, 5 * i + 5)
        };
        println!("  {label:>9} {count:>5} {}", "#".repeat(*count.min(&60)));
    }
    println!("index: {}", s.index_path.display());
}

fn synthesize(a: SynthesizeArgs) -> Result<bool> {
    let workers = a.workers.unwrap_or_else(default_workers);
    let (manifest_path, out_dir) = if a.demo {
        let demo = write_demo(&a.out, a.seed)?;
        println!("demo manifest: {}", demo.manifest.display());
        println!("demo config: {}", demo.config.display());
        (demo.manifest, demo.corpus_dir)
    } else {
        (a.manifest.expect("clap enforces --manifest"), a.out)
    };
    let manifest = DatasetManifest::load(&manifest_path)?;
    let summary = generate_corpus(&manifest, &out_dir, workers)?;
    print_summary(&summary);
    Ok(true)
}

fn train(a: TrainArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&a.overrides)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(d) = a.out_dir {
        cfg.out_dir = d;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    println!("# effective configuration");
    print!("{}", cfg.to_text());
    let summary = run_training(&cfg, a.resume)?;
    println!(
        "trained epochs {}..{} ({} run)",
        summary.first_epoch,
        summary.first_epoch + summary.epochs_run,
        summary.epochs_run
    );
    if let (Some(first), Some(last)) = (summary.first_train_loss, summary.last_train_loss) {
        println!("train loss {first:.6e} -> {last:.6e}");
    }
    println!(
        "best validation loss {:.6e} at epoch {}",
        summary.best_val_loss, summary.best_epoch
    );
    println!("best checkpoint: {}", summary.paths.best.display());
    Ok(true)
}

fn checkpoint_rate_and_scale(ck: &Checkpoint) -> Result<(u32, f64)> {
    Ok((
        ck.meta_value("sample_rate")?.unwrap_or(16_000),
        ck.meta_value("input_scale")?.unwrap_or(1.0),
    ))
}

fn enhance_cmd(a: EnhanceArgs) -> Result<bool> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (rate, scale) = checkpoint_rate_and_scale(&ck)?;
    let check_rate = |got: u32, what: &Path| -> Result<()> {
        if got != rate && !a.allow_any_rate {
            return Err(Error::Usage(format!(
                "{} is {got} Hz but the model was trained at {rate} Hz (use --allow-any-rate to override)",
                what.display()
            )));
        }
        Ok(())
    };
    if let Some(index_path) = &a.index {
        let index = CorpusIndex::load(index_path)?;
        check_rate(index.sample_rate, index_path)?;
        let n = enhance_index(&ck.params, &index, &a.output, &ck.stft, scale, a.bits)?;
        println!("enhanced {n} files into {}", a.output.display());
    } else {
        let input = a.input.as_ref().expect("clap enforces --input");
        let noisy = read_wav(input)?;
        check_rate(noisy.sample_rate(), input)?;
        let out = enhance(&ck.params, &noisy, &ck.stft, scale)?;
        write_wav(&a.output, &out, a.bits)?;
        println!("wrote {} ({} samples)", a.output.display(), out.len());
    }
    Ok(true)
}

fn evaluate(a: EvaluateArgs) -> Result<bool> {
    let cfg = match &a.config {
        Some(path) => RunConfig::load(path)?.stft,
        None => a.stft.config(),
    };
    cfg.validate()?;
    let index = CorpusIndex::load(&a.index)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers.unwrap_or_else(default_workers))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let report = pool.install(|| evaluate_corpus(&index, &a.enhanced, &cfg));
    print!("{}", report_table(&report));
    if let Some(path) = &a.report {
        std::fs::write(path, report_tsv(&report)).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(!report.has_failures())
}

fn print_gradcheck(r: &GradCheckReport) {
    println!(
        "gradient check: {} trials, {} precision, tolerance {:e}",
        r.trials, r.precision, r.tolerance
    );
    println!(
        "{:<36} {:>12} {:>12} {:>8} {:>6}  result",
        "tensor", "max rel", "max abs", "checked", "kinks"
    );
    for t in &r.tensors {
        println!(
            "{:<36} {:>12.3e} {:>12.3e} {:>8} {:>6}  {}",
            t.name,
            t.max_rel_error,
            t.max_abs_error,
            t.checked,
            t.skipped_kinks,
            if t.passed { "ok" } else { "FAIL" }
        );
    }
    println!("{}", if r.passed() { "PASS" } else { "FAIL" });
}

fn gradcheck(a: GradcheckArgs) -> Result<bool> {
    let opts = GradCheckOptions {
        trials: a.trials,
        tolerance: a.tolerance,
        step: a.step,
        frames: a.frames,
        seed: a.seed,
        fault: a.inject_fault.map(|FaultArg::SignFlip| Fault::SignFlip),
        ..GradCheckOptions::default()
    };
    let arch = Architecture::tiny();
    let report = match a.precision {
        Precision::F64 => grad_check::<f64>(&arch, &opts)?,
        Precision::F32 => grad_check::<f32>(&arch, &opts)?,
    };
    print_gradcheck(&report);
    Ok(report.passed())
}

fn dump(a: DumpArgs) -> Result<bool> {
    let cfg = a.stft.config();
    let wave = read_wav(&a.input)?;
    let spec = stft(&wave, &cfg)?;
    write_dump(
        &a.output,
        spec.magnitudes(),
        DumpFormat::from_path(&a.output),
    )?;
    println!(
        "wrote {} x {} magnitudes to {}",
        spec.bins(),
        spec.frames(),
        a.output.display()
    );
    Ok(true)
}
