mod config;
mod features;
mod verify;
mod wav;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{Config, Padding, Variant};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "melkit", version, about = "Adaptive filter-bank features and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    padding: Option<Padding>,
}

#[derive(Subcommand)]
enum Command {
    /// Design the adaptive filter bank and write an MKFB container
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bank.mkfb")]
        out: PathBuf,
    },
    /// Extract a feature CSV from a WAV file
    Features {
        audio: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "features.csv")]
        out: PathBuf,
        /// comma-separated per-channel averaging widths (varwidth only)
        #[arg(long)]
        widths: Option<String>,
    },
    /// Check the approximation bound against empirical errors
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 25)]
        signals: usize,
        #[arg(long, default_value = "verify.csv")]
        out: PathBuf,
        /// compare mean errors across a decreasing stride sweep
        #[arg(long)]
        sweep: bool,
        /// use the exact closed-form construction instead of the design
        #[arg(long)]
        gaussian: bool,
    },
    /// Print the layer table of a stock architecture
    Arch {
        /// small_one or small_two
        variant: String,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(s) = common.stride {
        cfg.stride = s;
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.padding {
        cfg.padding = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_design(cfg: &Config, out: &Path) -> Result<()> {
    let set = features::build_filter_set(cfg)?;
    let (_, bank) = features::design_bank(cfg, &set)?;
    let file = std::fs::File::create(out)
        .with_context(|| format!("creating {}", out.display()))?;
    melkit::io::write_filter_bank(std::io::BufWriter::new(file), &bank)?;
    let csv_path = out.with_extension("csv");
    let csv = std::fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    bank.write_csv(std::io::BufWriter::new(csv))?;
    println!("channel  center_hz  support99  clipped_mass");
    for (ch, diag) in bank.channels.iter().zip(&bank.diagnostics) {
        println!(
            "{:>7}  {:>9.1}  {:>9}  {:>12.3e}",
            ch.index,
            ch.center_hz,
            ch.effective_support(0.99),
            diag.clipped_mass
        );
    }
    for w in &bank.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} ({} channels, N = {}) and {}",
        out.display(),
        bank.channel_count(),
        bank.n,
        csv_path.display()
    );
    Ok(())
}

fn cmd_features(cfg: &Config, audio: &Path, out: &Path, widths: Option<&str>) -> Result<()> {
    let loaded = wav::read_wav(audio)?;
    if loaded.sample_rate != cfg.sample_rate {
        bail!(
            "sample rate mismatch: {} has {} Hz, config wants {} Hz (no resampling)",
            audio.display(),
            loaded.sample_rate,
            cfg.sample_rate
        );
    }
    let widths: Option<Vec<usize>> = match widths {
        Some(list) => Some(
            list.split(',')
                .map(|v| v.trim().parse::<usize>().context("bad width list"))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let set = features::build_filter_set(cfg)?;
    let map = features::compute_features(&loaded.samples, cfg, &set, widths.as_deref())?;
    let file = std::fs::File::create(out)
        .with_context(|| format!("creating {}", out.display()))?;
    features::write_feature_csv(std::io::BufWriter::new(file), set.centers_hz(), &map)?;
    println!(
        "wrote {} ({} frames x {} channels)",
        out.display(),
        map.nrows(),
        map.ncols()
    );
    Ok(())
}

fn cmd_arch(variant: &str) -> Result<()> {
    let arch = match variant {
        "small_one" | "small-one" => melkit::cnn::Architecture::SmallOne,
        "small_two" | "small-two" => melkit::cnn::Architecture::SmallTwo,
        other => bail!("unknown architecture '{other}' (expected small_one or small_two)"),
    };
    let net = melkit::cnn::build_architecture(arch, 0)?;
    print!("{}", melkit::cnn::summary(&net));
    let counts = melkit::cnn::parameter_count(&net);
    println!(
        "classification stage: {} of {} parameters",
        counts.dense,
        counts.total()
    );
    Ok(())
}

/// 0 success, 1 verification failure, 2 usage error, 3 I/O error.
fn classify(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(lib) = cause.downcast_ref::<melkit::Error>() {
            return match lib {
                melkit::Error::Io(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Design { common, out } => {
            cmd_design(&load_config(&common)?, &out)?;
            Ok(0)
        }
        Command::Features {
            audio,
            common,
            out,
            widths,
        } => {
            cmd_features(&load_config(&common)?, &audio, &out, widths.as_deref())?;
            Ok(0)
        }
        Command::Verify {
            common,
            signals,
            out,
            sweep,
            gaussian,
        } => {
            let cfg = load_config(&common)?;
            let ok = verify::run(&cfg, signals, &out, sweep, gaussian)?;
            Ok(if ok { 0 } else { 1 })
        }
        Command::Arch { variant } => {
            cmd_arch(&variant)?;
            Ok(0)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify(&err));
        }
    }
}
