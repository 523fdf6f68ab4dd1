//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crps::Loss;
use crate::embedding_space::{fit_gaussian, pca_fit, sample_embedding, structured_embeddings, EmbeddingGaussian};
use crate::error::{Error, Result};
use crate::io;
use crate::mdn::NetworkConfig;
use crate::model_file::{load_model, save_model};
use crate::oracle::{generate_synthetic_dataset, OracleConfig};
use crate::sweep::{predicted_pdf_average, quantile_trace, simulate_sweep, support_grid, Waveform};
use crate::trainer::{evaluate_crps, r_squared, train, DataPoint, Dataset, TrainConfig, TrainedModel};

pub const SEED_ENV: &str = "STOCHFET_SEED";

#[derive(Debug, Parser)]
#[command(name = "stochfet", version, about = "Stochastic transistor I-V modeling with mixture density networks")]
pub struct Cli {
    /// Seed for every random stream; falls back to $STOCHFET_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with [network], [training], [oracle] and [sampling] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic measurement CSV.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        devices: Option<usize>,
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        voltages: Option<usize>,
    },
    /// Train a model on a measurement CSV.
    Train {
        data: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Training-log CSV (epoch, train_loss, holdout_loss).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        loss: Option<Loss>,
        #[arg(long)]
        no_embedding: bool,
    },
    /// Print R² and mean CRPS of a model on a measurement CSV.
    Eval {
        model: PathBuf,
        data: PathBuf,
        /// Also write the metrics as CSV.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fixed-quantile traces (q = 0.05, 0.5, 0.95) over a voltage ramp.
    Quantiles {
        model: PathBuf,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
        /// Use this device's embedding instead of the mean embedding.
        #[arg(long)]
        device: Option<i64>,
        #[command(flatten)]
        ramp: RampArgs,
    },
    /// Sampled sweeps for synthetic devices.
    Devices {
        model: PathBuf,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
        /// Number of randomly sampled devices.
        #[arg(long, default_value_t = 0)]
        random: usize,
        /// Include the mean and ±2σ principal-axis devices.
        #[arg(long)]
        structured: bool,
        #[command(flatten)]
        ramp: RampArgs,
    },
    /// Sample one sweep along a waveform CSV (time, v_gate).
    Sweep {
        model: PathBuf,
        waveform: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Use this device's embedding; otherwise a sampled synthetic device.
        #[arg(long)]
        device: Option<i64>,
    },
    /// Predicted current densities averaged over synthetic devices.
    Pdf {
        model: PathBuf,
        /// Comma-separated gate voltages.
        #[arg(long, value_delimiter = ',', required = true)]
        vg: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(short, long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Project the device embeddings onto their first two principal components.
    Pca {
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RampArgs {
    #[arg(long, default_value_t = 0.0)]
    pub v_start: f64,
    #[arg(long, default_value_t = 1.8)]
    pub v_end: f64,
    #[arg(long, default_value_t = 181)]
    pub steps: usize,
}

/// Sampling parameters not tied to a subcommand flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
}

/// Contents of a `--config` file. Missing tables and keys take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub oracle: OracleConfig,
    pub sampling: SamplingConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overrides every seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.network.seed = seed;
        self.training.seed = seed;
        self.oracle.seed = seed;
        self.sampling.seed = seed;
        self
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn ramp(args: &RampArgs) -> Result<Waveform> {
    Waveform::ramp(args.v_start, args.v_end, args.steps, 1.0)
}

fn device_index(model: &TrainedModel, label: i64) -> Result<usize> {
    model
        .device_labels
        .iter()
        .position(|&l| l == label)
        .ok_or(Error::UnknownDevice { id: label.max(0) as usize, count: model.device_count() })
}

fn device_embedding(model: &TrainedModel, label: i64) -> Result<Vec<f64>> {
    let id = device_index(model, label)?;
    if !model.config().embedding_enabled {
        return Ok(Vec::new());
    }
    Ok(model.embeddings.row(id).to_vec())
}

fn gaussian(model: &TrainedModel) -> Result<EmbeddingGaussian> {
    match &model.embedding_gaussian {
        Some(g) => Ok(g.clone()),
        None => fit_gaussian(&model.embeddings),
    }
}

/// Re-indexes `data` to the model's device ids by label.
fn align(model: &TrainedModel, data: &Dataset) -> Result<Dataset> {
    let enabled = model.config().embedding_enabled;
    let points = data
        .points
        .iter()
        .map(|p| {
            let label = data.device_labels[p.device_id];
            let device_id = if enabled { device_index(model, label)? } else { 0 };
            Ok(DataPoint { device_id, ..*p })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::with_scaling(points, model.device_count().max(1), model.scaling)?;
    ds.device_labels = model.device_labels.clone();
    Ok(ds)
}

fn fmt_voltage(v: f64) -> String {
    format!("{v}")
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = resolve_seed(cli.seed)? {
        cfg = cfg.with_seed(seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sampling.seed);

    match cli.command {
        Command::Synth { output, devices, cycles, voltages } => {
            let mut oc = cfg.oracle;
            if let Some(d) = devices {
                oc.device_count = d;
            }
            if let Some(c) = cycles {
                oc.cycles = c;
            }
            if let Some(v) = voltages {
                oc.n_voltages = v;
            }
            let (ds, _) = generate_synthetic_dataset(&oc)?;
            io::save_measurements(&output, &ds)?;
            println!("wrote {} points for {} devices to {}", ds.len(), ds.device_count, output.display());
        }
        Command::Train { data, output, log, epochs, loss, no_embedding } => {
            let ds = io::load_measurements(&data)?;
            let mut nc = cfg.network;
            let mut tc = cfg.training;
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            if let Some(l) = loss {
                tc.loss = l;
            }
            if no_embedding {
                nc.embedding_enabled = false;
            }
            let mut model = train(&ds, &nc, &tc)?;
            model.device_labels = ds.device_labels.clone();
            if nc.embedding_enabled && ds.device_count >= 2 {
                model.embedding_gaussian = Some(fit_gaussian(&model.embeddings)?);
            }
            save_model(&model, &output)?;
            if let Some(path) = log {
                io::save_training_log(&path, &model.log)?;
            }
            if let Some(last) = model.log.last() {
                match last.holdout_loss {
                    Some(h) => println!("epoch {} train_loss={} holdout_loss={}", last.epoch, last.train_loss, h),
                    None => println!("epoch {} train_loss={}", last.epoch, last.train_loss),
                }
            }
        }
        Command::Eval { model, data, output } => {
            let model = load_model(&model)?;
            let ds = align(&model, &io::load_measurements(&data)?)?;
            let r2 = r_squared(&model, &ds)?;
            let crps = evaluate_crps(&model, &ds)?;
            println!("r2={r2} crps={crps}");
            if let Some(path) = output {
                io::save_metrics(&path, r2, crps)?;
            }
        }
        Command::Quantiles { model, out_dir, device, ramp: ramp_args } => {
            let model = load_model(&model)?;
            let emb = match device {
                Some(label) => device_embedding(&model, label)?,
                None => model.mean_embedding(),
            };
            let voltages = ramp(&ramp_args)?.voltages();
            std::fs::create_dir_all(&out_dir)?;
            for q in [0.05, 0.5, 0.95] {
                let trace = quantile_trace(&model, &emb, &voltages, q)?;
                let path = out_dir.join(format!("quantile_{q}.csv"));
                io::save_series(&path, &voltages, &[("i_drain", trace)])?;
            }
        }
        Command::Devices { model, out_dir, random, structured, ramp: ramp_args } => {
            let model = load_model(&model)?;
            if !model.config().embedding_enabled {
                return Err(Error::Config("model was trained without embeddings".into()));
            }
            let g = gaussian(&model)?;
            let wave = ramp(&ramp_args)?;
            let mut devices = Vec::new();
            if structured {
                let set = structured_embeddings(&g, 0, &mut rng);
                devices.extend(set.devices.into_iter().map(|d| (d.label, d.embedding)));
            }
            for j in 1..=random {
                devices.push((format!("random_{j}"), sample_embedding(&g, &mut rng)));
            }
            if devices.is_empty() {
                return Err(Error::Config("nothing to do: pass --structured and/or --random N".into()));
            }
            std::fs::create_dir_all(&out_dir)?;
            for (label, emb) in devices {
                let trace = simulate_sweep(&model, &emb, &wave, &mut rng)?;
                io::save_trace(&out_dir.join(format!("device_{label}.csv")), &trace)?;
            }
        }
        Command::Sweep { model, waveform, output, device } => {
            let model = load_model(&model)?;
            let wave = io::load_waveform(&waveform)?;
            let emb = match device {
                Some(label) => device_embedding(&model, label)?,
                None if model.config().embedding_enabled => sample_embedding(&gaussian(&model)?, &mut rng),
                None => Vec::new(),
            };
            let trace = simulate_sweep(&model, &emb, &wave, &mut rng)?;
            io::save_trace(&output, &trace)?;
        }
        Command::Pdf { model, vg, n, points, out_dir } => {
            let model = load_model(&model)?;
            if n == 0 {
                return Err(Error::Config("--n must be positive".into()));
            }
            let embeddings: Vec<Vec<f64>> = if model.config().embedding_enabled {
                let g = gaussian(&model)?;
                (0..n).map(|_| sample_embedding(&g, &mut rng)).collect()
            } else {
                vec![Vec::new()]
            };
            std::fs::create_dir_all(&out_dir)?;
            for v in vg {
                let grid = support_grid(&model, &embeddings, v, points)?;
                let density = predicted_pdf_average(&model, &embeddings, v, &grid)?;
                io::save_pdf(&out_dir.join(format!("pdf_vg_{}.csv", fmt_voltage(v))), &grid, &density)?;
            }
        }
        Command::Pca { model, output } => {
            let model = load_model(&model)?;
            if !model.config().embedding_enabled {
                return Err(Error::Config("model was trained without embeddings".into()));
            }
            let pca = pca_fit(&model.embeddings, 2.min(model.embeddings.dim()))?;
            io::save_pca_projection(&output, &model.device_labels, &model.embeddings, &pca)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs them, returning the process exit code: 0 on
/// success, 2 on a usage error, 1 on any other failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
