//! Command-line front end.
//!
//! Each subcommand is a thin layer over a library function of the same name
//! in this module, so tests and examples can drive the same code paths without
//! spawning a process. [`run`] parses arguments, dispatches, prints
//! diagnostics and returns the exit status.
//!
//! Configuration precedence, lowest first: built-in defaults (or the config
//! embedded in a checkpoint), `--config` file, each `--set KEY=VALUE` in
//! order, then `--seed` and `--out`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::config::{self, RunConfig};
use crate::data::{self, Dataset, IMAGE_PIXELS, IMAGE_SIDE};
use crate::field::ComplexField;
use crate::network::MfdNet;
use crate::pgm;
use crate::training::{self, EpochMetrics, OptimizerState};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.mfdn";
pub const CSV_HEADER: &str = "epoch,train_loss,train_acc,test_acc,seconds";
/// `gradcheck` passes when the worst relative error is below this.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const THREADS_ENV: &str = "DIFFRACTNET_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "diffractnet",
    version,
    about = "Multi-frequency diffractive network simulator and trainer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Config file with flat dotted keys (TOML syntax).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shorthand for `--set out.dir=DIR`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Common {
    /// Layers this invocation's config sources over `base`.
    pub fn resolve(&self, mut base: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            base.apply_text(&text)
                .map_err(|e| config::in_file(path, e))?;
        }
        for s in &self.set {
            base.apply_override(s)?;
        }
        if let Some(seed) = self.seed {
            base.train.seed = seed;
        }
        if let Some(out) = &self.out {
            base.out_dir = out.clone();
        }
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes metrics.csv and model.mfdn to the output directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Print test-split accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Classify one 28x28 image (8-bit P5 graymap or single-sample IDX).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
    },
    /// Compare analytic gradients with central differences on a random input.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Write per-channel and merged output maps as 16-bit graymaps.
    ExportMaps {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
    },
}

fn load_split(config: &RunConfig, images: &Path, labels: &Path, key: &str) -> Result<Dataset> {
    if images.as_os_str().is_empty() || labels.as_os_str().is_empty() {
        return Err(Error::Config(format!(
            "data.{key}_images and data.{key}_labels must be set"
        )));
    }
    data::load_dataset(
        images,
        labels,
        config.net.classes,
        config.data.orientation_fix,
    )
}

fn subset(d: Dataset, n: Option<usize>) -> Dataset {
    match n {
        Some(n) if n < d.len() => d.truncated(n),
        _ => d,
    }
}

/// Train split, truncated to `train.train_subset`.
pub fn load_train(config: &RunConfig) -> Result<Dataset> {
    let d = &config.data;
    let set = load_split(config, &d.train_images, &d.train_labels, "train")?;
    Ok(subset(set, config.train.train_subset))
}

/// Test split, truncated to `train.test_subset`.
pub fn load_test(config: &RunConfig) -> Result<Dataset> {
    let d = &config.data;
    let set = load_split(config, &d.test_images, &d.test_labels, "test")?;
    Ok(subset(set, config.train.test_subset))
}

/// One CSV row, formatted independently of locale.
pub fn csv_row(m: &EpochMetrics, wall_clock: bool) -> String {
    let test = m
        .test_accuracy
        .map(|a| format!("{a:.4}"))
        .unwrap_or_default();
    let seconds = if wall_clock { m.seconds } else { 0.0 };
    format!(
        "{},{:.6},{:.4},{},{:.3}",
        m.epoch, m.train_loss, m.train_accuracy, test, seconds
    )
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Loads data, trains for `train.epochs`, and writes the metric log and final
/// checkpoint into `out.dir`. Nothing is written until the config and both
/// dataset splits have been loaded successfully.
pub fn train(config: &RunConfig, log: &mut dyn Write) -> Result<TrainOutcome> {
    config.validate()?;
    let train_set = load_train(config)?;
    let test_set = load_test(config)?;
    let mut net = MfdNet::new(config.net_config()?, config.train.seed)?;

    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    fs::write(&metrics_path, &csv).map_err(|e| Error::io(&metrics_path, e))?;

    let mut state = OptimizerState::new(&net);
    let mut metrics = Vec::new();
    for epoch in 1..=config.train.epochs {
        let m = training::train_epoch(
            &mut net,
            &train_set,
            Some(&test_set),
            &config.train,
            &mut state,
            epoch,
        )?;
        let row = csv_row(&m, config.wall_clock);
        let _ = writeln!(log, "{row}");
        csv.push_str(&row);
        csv.push('\n');
        fs::write(&metrics_path, &csv).map_err(|e| Error::io(&metrics_path, e))?;
        metrics.push(m);
    }
    checkpoint::save(&checkpoint_path, config, &net)?;
    Ok(TrainOutcome {
        metrics,
        metrics_path,
        checkpoint_path,
    })
}

/// Checkpoint plus the effective config after applying `common` on top of
/// the embedded one. Overrides may not change the network itself.
pub fn load_checkpoint(path: &Path, common: &Common) -> Result<(RunConfig, MfdNet)> {
    let (embedded, net) = checkpoint::load(path)?;
    let config = common.resolve(embedded)?;
    if config.net_config()? != *net.config() {
        return Err(Error::Config(
            "net.* overrides conflict with the checkpoint's network".into(),
        ));
    }
    Ok((config, net))
}

/// Accuracy of `net` on the configured test split.
pub fn eval(config: &RunConfig, net: &MfdNet) -> Result<f64> {
    training::evaluate(net, &load_test(config)?)
}

/// Reads a 28×28 image from an 8-bit P5 graymap or an IDX file holding one
/// image (`[1, 28, 28]` or `[28, 28]`). `orientation_fix` transposes IDX
/// input the same way dataset loading does.
pub fn load_image(path: &Path, orientation_fix: bool) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return pgm::read_input_image(path);
    }
    let tensor =
        data::parse_idx(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let ok = matches!(tensor.dims.as_slice(), [1, h, w] | [h, w] if *h == IMAGE_SIDE && *w == IMAGE_SIDE);
    if !ok || tensor.data.len() != IMAGE_PIXELS {
        return Err(Error::Format(format!(
            "{}: expected one {IMAGE_SIDE}x{IMAGE_SIDE} image, got dims {:?}",
            path.display(),
            tensor.dims
        )));
    }
    Ok(if orientation_fix {
        data::transpose_image(&tensor.data)
    } else {
        tensor.data
    })
}

/// Predicted class and the detector scores.
pub fn predict(net: &MfdNet, image: &[u8]) -> Result<(usize, Vec<f64>)> {
    let input = data::to_input_field(image, net.geometry())?;
    let trace = net.forward(&input)?;
    let class = crate::network::argmax(&trace.logits);
    Ok((class, trace.logits))
}

/// Gradient check on a network built from `config` with a random unit-energy
/// input. Returns the worst relative error.
pub fn gradcheck(config: &RunConfig) -> Result<f64> {
    config.validate()?;
    let net_config = config.net_config()?;
    let seed = config.train.seed;
    let net = MfdNet::new(net_config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let values: Vec<Complex64> = (0..net_config.geometry.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let raw = ComplexField::from_values(net_config.geometry, values)?;
    let input = raw.scale(Complex64::new(1.0 / raw.total_energy().sqrt(), 0.0));
    let label = rng.gen_range(0..net_config.num_classes);
    let flip = config.gradcheck.flip_sign;
    let report = training::grad_check_report(
        &net,
        &input,
        label,
        config.gradcheck.probes,
        config.gradcheck.epsilon,
        seed,
        |g| {
            if flip {
                g.scale(-1.0);
            }
        },
    )?;
    Ok(report.max_rel_error())
}

/// Writes `channel_<f>.pgm` for each wavelength and `merged.pgm`. Returns the
/// paths in that order.
pub fn export_maps(net: &MfdNet, image: &[u8], dir: &Path) -> Result<Vec<PathBuf>> {
    let input = data::to_input_field(image, net.geometry())?;
    let trace = net.forward(&input)?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = trace
        .channels
        .iter()
        .enumerate()
        .map(|(f, c)| {
            (
                dir.join(format!("channel_{f}.pgm")),
                pgm::encode_pgm16(&c.readout),
            )
        })
        .collect();
    files.push((dir.join("merged.pgm"), pgm::encode_pgm16(&trace.merged)));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (path, bytes) in &files {
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    // A pool may already exist when called repeatedly in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Train { common } => {
            let config = common.resolve(RunConfig::default())?;
            let _ = writeln!(stdout, "{CSV_HEADER}");
            let outcome = train(&config, stdout)?;
            let _ = writeln!(stdout, "checkpoint: {}", outcome.checkpoint_path.display());
            Ok(0)
        }
        Command::Eval { common, checkpoint } => {
            let (config, net) = load_checkpoint(&checkpoint, &common)?;
            let acc = eval(&config, &net)?;
            let _ = writeln!(stdout, "{acc:.4}");
            Ok(0)
        }
        Command::Predict {
            common,
            checkpoint,
            image,
        } => {
            let (config, net) = load_checkpoint(&checkpoint, &common)?;
            let pixels = load_image(&image, config.data.orientation_fix)?;
            let (class, scores) = predict(&net, &pixels)?;
            let scores: Vec<String> = scores.iter().map(|s| format!("{s:.6e}")).collect();
            let _ = writeln!(stdout, "class: {class}");
            let _ = writeln!(stdout, "scores: {}", scores.join(" "));
            Ok(0)
        }
        Command::Gradcheck { common } => {
            let config = common.resolve(RunConfig::default())?;
            let err = gradcheck(&config)?;
            let _ = writeln!(stdout, "max relative error: {err:.3e}");
            Ok(if err < GRADCHECK_TOLERANCE { 0 } else { 1 })
        }
        Command::ExportMaps {
            common,
            checkpoint,
            image,
        } => {
            let (config, net) = load_checkpoint(&checkpoint, &common)?;
            let pixels = load_image(&image, config.data.orientation_fix)?;
            for path in export_maps(&net, &pixels, &config.out_dir)? {
                let _ = writeln!(stdout, "{}", path.display());
            }
            Ok(0)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command, stdout));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}
