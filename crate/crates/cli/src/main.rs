//! Command-line frontend: train source models, mix test material, separate
//! mixtures and evaluate the results. Metrics are printed as KEY=value lines
//! so harnesses can parse them.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use unmix::audio::{read_wav, write_wav};
use unmix::metrics::{sir_db, snr_db};
use unmix::separation::{mix_at_smr, separate, train_source_model_report};
use unmix::{PriorMode, SourceModel, ToolConfig};

#[derive(Parser)]
#[command(
    name = "unmix",
    about = "Single-channel source separation: IS-NMF with MMSE-guided gains under GMM priors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand: config file and seed, applied with
/// precedence flags > config file > defaults.
#[derive(Args)]
struct CommonOpts {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for every stochastic stage.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonOpts {
    fn build_config(&self) -> anyhow::Result<ToolConfig> {
        let mut cfg = ToolConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)
                .with_context(|| format!("loading config {}", path.display()))?;
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a source model from a directory of WAV files.
    Train {
        /// Directory containing mono 16-bit PCM WAV training files.
        #[arg(long)]
        input: PathBuf,
        /// Basis vectors for this source.
        #[arg(long)]
        rank: Option<usize>,
        /// GMM components for the gains prior.
        #[arg(long = "gmm-k")]
        gmm_k: Option<usize>,
        /// Output model file (JSON).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Separate a two-source mixture with trained models.
    Separate {
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long = "model-a")]
        model_a: PathBuf,
        #[arg(long = "model-b")]
        model_b: PathBuf,
        /// Prior mode: none | sparse | mmse.
        #[arg(long)]
        prior: Option<PriorModeArg>,
        /// MMSE penalty weight for source A (and B unless --alpha-b is set).
        #[arg(long)]
        alpha: Option<f64>,
        /// MMSE penalty weight for source B.
        #[arg(long = "alpha-b")]
        alpha_b: Option<f64>,
        /// Sparsity weight for the sparse baseline.
        #[arg(long)]
        lambda: Option<f64>,
        /// Output directory (source1.wav, source2.wav, diagnostics.txt).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Mix two WAV files at a given source-to-background ratio in dB.
    Mix {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long = "smr-db", allow_hyphen_values = true)]
        smr_db: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate an estimate against its references; prints SNR_dB and SIR_dB.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        interferer: PathBuf,
    },
    /// Print a summary of a trained model file.
    InspectModel {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy)]
struct PriorModeArg(PriorMode);

impl std::str::FromStr for PriorModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<PriorMode>().map(PriorModeArg).map_err(|e| e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train { input, rank, gmm_k, out, common } => {
            if !input.is_dir() {
                eprintln!("error: input directory {} does not exist", input.display());
                return Ok(ExitCode::from(2));
            }
            let mut cfg = common.build_config()?;
            if let Some(r) = rank {
                cfg.rank = r;
            }
            if let Some(k) = gmm_k {
                cfg.gmm_k = k;
            }
            cmd_train(&input, &out, &cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Separate {
            mixture,
            model_a,
            model_b,
            prior,
            alpha,
            alpha_b,
            lambda,
            out,
            common,
        } => {
            let mut cfg = common.build_config()?;
            if let Some(PriorModeArg(mode)) = prior {
                cfg.prior_mode = mode;
            }
            if let Some(a) = alpha {
                cfg.alpha_a = a;
                cfg.alpha_b = alpha_b.unwrap_or(a);
            } else if let Some(b) = alpha_b {
                cfg.alpha_b = b;
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            cmd_separate(&mixture, &model_a, &model_b, &out, &cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Mix { a, b, smr_db, out, common } => {
            let _ = common.build_config()?; // validates the config file if given
            cmd_mix(&a, &b, smr_db, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { estimate, target, interferer } => {
            cmd_evaluate(&estimate, &target, &interferer)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::InspectModel { model } => {
            cmd_inspect(&model)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn wav_files_sorted(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "wav").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    Ok(files)
}

fn cmd_train(input: &Path, out: &Path, cfg: &ToolConfig) -> anyhow::Result<()> {
    let mut audio = Vec::new();
    for path in wav_files_sorted(input)? {
        audio.push(read_wav(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let (model, report) = train_source_model_report(&audio, cfg)?;
    model.save(out)?;
    println!("rank={}", model.rank);
    println!("gmm_k={}", model.prior.k());
    println!("training_frames={}", report.training_frames);
    println!("final_divergence={:.6}", report.final_divergence);
    println!("model={}", out.display());
    Ok(())
}

fn cmd_separate(
    mixture: &Path,
    model_a: &Path,
    model_b: &Path,
    out: &Path,
    cfg: &ToolConfig,
) -> anyhow::Result<()> {
    let mix = read_wav(mixture).with_context(|| format!("reading {}", mixture.display()))?;
    let a = SourceModel::load(model_a)
        .with_context(|| format!("loading model {}", model_a.display()))?;
    let b = SourceModel::load(model_b)
        .with_context(|| format!("loading model {}", model_b.display()))?;

    let mut cfg = cfg.clone();
    cfg.frame = a.frame;
    let result = separate(&mix, &a, &b, cfg.prior_mode, &cfg)?;

    std::fs::create_dir_all(out)?;
    write_wav(&out.join("source1.wav"), &result.source_a)?;
    write_wav(&out.join("source2.wav"), &result.source_b)?;

    let mut diag = String::new();
    diag.push_str(&format!("prior={}\n", cfg.prior_mode));
    diag.push_str(&format!("noprior_iters={}\n", result.diagnostics.noprior_iters));
    diag.push_str(&format!("regularized_iters={}\n", result.diagnostics.regularized_iters));
    if let Some(psi) = &result.psi_a {
        diag.push_str(&format!("psi_a_mean={:.9}\n", psi.mean()));
    }
    if let Some(psi) = &result.psi_b {
        diag.push_str(&format!("psi_b_mean={:.9}\n", psi.mean()));
    }
    for (i, c) in result.diagnostics.cost_trace.iter().enumerate() {
        diag.push_str(&format!("cost[{i}]={c:.9}\n"));
    }
    std::fs::write(out.join("diagnostics.txt"), diag)?;

    println!("source1={}", out.join("source1.wav").display());
    println!("source2={}", out.join("source2.wav").display());
    if let (Some(pa), Some(pb)) = (&result.psi_a, &result.psi_b) {
        println!("psi_a_mean={:.9}", pa.mean());
        println!("psi_b_mean={:.9}", pb.mean());
    }
    Ok(())
}

fn cmd_mix(a: &Path, b: &Path, smr_db: f64, out: &Path) -> anyhow::Result<()> {
    let sig_a = read_wav(a).with_context(|| format!("reading {}", a.display()))?;
    let sig_b = read_wav(b).with_context(|| format!("reading {}", b.display()))?;
    let mixed = mix_at_smr(&sig_a, &sig_b, smr_db)?;
    write_wav(out, &mixed)?;

    // realized ratio, measured on the float-domain signals
    let back: Vec<f64> = mixed
        .samples()
        .iter()
        .zip(sig_a.samples())
        .map(|(m, x)| m - x)
        .collect();
    let p_b = back.iter().map(|x| x * x).sum::<f64>() / back.len() as f64;
    println!("requested_smr_db={smr_db}");
    println!("measured_smr_db={:.9}", 10.0 * (sig_a.power() / p_b).log10());
    println!("mix={}", out.display());
    Ok(())
}

fn cmd_evaluate(estimate: &Path, target: &Path, interferer: &Path) -> anyhow::Result<()> {
    let est = read_wav(estimate).with_context(|| format!("reading {}", estimate.display()))?;
    let tgt = read_wav(target).with_context(|| format!("reading {}", target.display()))?;
    let itf =
        read_wav(interferer).with_context(|| format!("reading {}", interferer.display()))?;
    println!("SNR_dB={:.6}", snr_db(&tgt, &est)?);
    println!("SIR_dB={:.6}", sir_db(&est, &tgt, &itf)?);
    Ok(())
}

fn cmd_inspect(model: &Path) -> anyhow::Result<()> {
    let m = SourceModel::load(model)?;
    println!("rank={}", m.rank);
    println!("gmm_k={}", m.prior.k());
    println!("frame_length={}", m.frame.frame_length);
    println!("hop={}", m.frame.hop);
    println!("fft_size={}", m.frame.fft_size);
    println!("sample_rate_hz={}", m.frame.sample_rate_hz);
    println!("freq_bins={}", m.frame.freq_bins());
    println!("seed={}", m.seed);
    println!("epsilon_floor={}", m.floors.epsilon_floor);
    println!("gain_floor={}", m.floors.gain_floor);
    println!("covariance_floor={}", m.floors.covariance_floor);
    Ok(())
}
