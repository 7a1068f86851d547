//! Run configuration: a flat set of dotted keys.
//!
//! Files use TOML syntax. Keys may be written flat (`net.layers = 5`) or
//! grouped under tables (`[net]` then `layers = 5`); both flatten to the same
//! dotted key. Unknown keys are rejected. Command-line overrides use the same
//! keys (`--set train.lr=0.01`), with the value parsed as a TOML value and
//! falling back to a bare string.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `net.layers` | 5 | modulation layers L |
//! | `net.channels` | 3 | wavelengths F |
//! | `net.lambda_min`, `net.lambda_max` | 0.8, 1.2 | wavelength range (length units) |
//! | `net.spacing` | 20.0 | distance between planes |
//! | `net.nx`, `net.ny`, `net.pitch` | 56, 56, 1.0 | grid |
//! | `net.method` | `"sampled-rs"` | or `"angular-spectrum"` |
//! | `net.loss` | `"cross-entropy"` | or `"mse"` |
//! | `net.classes` | 10 | detector regions C |
//! | `net.amplitude_trainable` | false | learn `a` as well as `φ` |
//! | `net.bias` | false | per-layer complex bias |
//! | `net.dispersive` | false | scale phase by `λ_ref/λ_f` |
//! | `net.readout` | `"modulus"` | or `"intensity"` |
//! | `train.lr` | 0.001 | learning rate |
//! | `train.batch_size` | 32 | |
//! | `train.epochs` | 10 | |
//! | `train.optimizer` | `"adam"` | or `"sgd-momentum"` |
//! | `train.momentum` | 0.9 | sgd velocity decay |
//! | `train.beta1`, `train.beta2`, `train.epsilon` | 0.9, 0.999, 1e-8 | adam |
//! | `train.seed` | 0 | initialization and shuffling |
//! | `train.train_subset`, `train.test_subset` | 0 | first N samples; 0 = all |
//! | `data.train_images`, `data.train_labels` | `""` | IDX paths |
//! | `data.test_images`, `data.test_labels` | `""` | IDX paths |
//! | `data.orientation_fix` | false | transpose images (EMNIST) |
//! | `out.dir` | `"out"` | output directory |
//! | `log.wall_clock` | true | record epoch seconds; false writes 0 |
//! | `gradcheck.probes` | 20 | |
//! | `gradcheck.epsilon` | 1e-6 | |
//! | `gradcheck.flip_sign` | false | negate analytic gradients (harness self-test) |

use std::fs;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::field::GridGeometry;
use crate::network::{pick_frequencies, LossKind, MfdNetConfig, Readout};
use crate::propagation::Method;
use crate::training::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NetSection {
    pub layers: usize,
    pub channels: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    pub method: Method,
    pub loss: LossKind,
    pub classes: usize,
    pub amplitude_trainable: bool,
    pub bias: bool,
    pub dispersive: bool,
    pub readout: Readout,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            layers: 5,
            channels: 3,
            lambda_min: 0.8,
            lambda_max: 1.2,
            spacing: 20.0,
            nx: 56,
            ny: 56,
            pitch: 1.0,
            method: Method::SampledRs,
            loss: LossKind::CrossEntropy,
            classes: 10,
            amplitude_trainable: false,
            bias: false,
            dispersive: false,
            readout: Readout::Modulus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSection {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    pub orientation_fix: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSection {
    pub probes: usize,
    pub epsilon: f64,
    pub flip_sign: bool,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            probes: 20,
            epsilon: 1e-6,
            flip_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub net: NetSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub out_dir: PathBuf,
    pub wall_clock: bool,
    pub gradcheck: GradCheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            net: NetSection::default(),
            train: TrainConfig::default(),
            data: DataSection::default(),
            out_dir: PathBuf::from("out"),
            wall_clock: true,
            gradcheck: GradCheckSection::default(),
        }
    }
}

/// Every recognised key, in serialization order.
pub const KEYS: &[&str] = &[
    "net.layers",
    "net.channels",
    "net.lambda_min",
    "net.lambda_max",
    "net.spacing",
    "net.nx",
    "net.ny",
    "net.pitch",
    "net.method",
    "net.loss",
    "net.classes",
    "net.amplitude_trainable",
    "net.bias",
    "net.dispersive",
    "net.readout",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.optimizer",
    "train.momentum",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.seed",
    "train.train_subset",
    "train.test_subset",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "data.orientation_fix",
    "out.dir",
    "log.wall_clock",
    "gradcheck.probes",
    "gradcheck.epsilon",
    "gradcheck.flip_sign",
];

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!(
            "{key}: expected a nonnegative integer, got {v}"
        ))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Config(format!(
            "{key}: expected a nonnegative integer, got {v}"
        ))),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("{key}: expected a number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    match v {
        Value::Boolean(b) => Ok(*b),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {v}"
        ))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    match v {
        Value::String(s) => Ok(s),
        _ => Err(Error::Config(format!("{key}: expected a string, got {v}"))),
    }
}

/// Prefixes a config error with the file it came from.
pub(crate) fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn subset(n: usize) -> Option<usize> {
    (n > 0).then_some(n)
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| in_file(path, e))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        for (key, value) in entries {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let n = &mut self.net;
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "net.layers" => n.layers = as_usize(key, v)?,
            "net.channels" => n.channels = as_usize(key, v)?,
            "net.lambda_min" => n.lambda_min = as_f64(key, v)?,
            "net.lambda_max" => n.lambda_max = as_f64(key, v)?,
            "net.spacing" => n.spacing = as_f64(key, v)?,
            "net.nx" => n.nx = as_usize(key, v)?,
            "net.ny" => n.ny = as_usize(key, v)?,
            "net.pitch" => n.pitch = as_f64(key, v)?,
            "net.method" => n.method = as_str(key, v)?.parse()?,
            "net.loss" => n.loss = as_str(key, v)?.parse()?,
            "net.classes" => n.classes = as_usize(key, v)?,
            "net.amplitude_trainable" => n.amplitude_trainable = as_bool(key, v)?,
            "net.bias" => n.bias = as_bool(key, v)?,
            "net.dispersive" => n.dispersive = as_bool(key, v)?,
            "net.readout" => n.readout = as_str(key, v)?.parse()?,
            "train.lr" => t.learning_rate = as_f64(key, v)?,
            "train.batch_size" => t.batch_size = as_usize(key, v)?,
            "train.epochs" => t.epochs = as_usize(key, v)?,
            "train.optimizer" => t.optimizer = as_str(key, v)?.parse()?,
            "train.momentum" => t.momentum = as_f64(key, v)?,
            "train.beta1" => t.beta1 = as_f64(key, v)?,
            "train.beta2" => t.beta2 = as_f64(key, v)?,
            "train.epsilon" => t.epsilon = as_f64(key, v)?,
            "train.seed" => t.seed = as_u64(key, v)?,
            "train.train_subset" => t.train_subset = subset(as_usize(key, v)?),
            "train.test_subset" => t.test_subset = subset(as_usize(key, v)?),
            "data.train_images" => d.train_images = as_str(key, v)?.into(),
            "data.train_labels" => d.train_labels = as_str(key, v)?.into(),
            "data.test_images" => d.test_images = as_str(key, v)?.into(),
            "data.test_labels" => d.test_labels = as_str(key, v)?.into(),
            "data.orientation_fix" => d.orientation_fix = as_bool(key, v)?,
            "out.dir" => self.out_dir = as_str(key, v)?.into(),
            "log.wall_clock" => self.wall_clock = as_bool(key, v)?,
            "gradcheck.probes" => self.gradcheck.probes = as_usize(key, v)?,
            "gradcheck.epsilon" => self.gradcheck.epsilon = as_f64(key, v)?,
            "gradcheck.flip_sign" => self.gradcheck.flip_sign = as_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> Value {
        let n = &self.net;
        let t = &self.train;
        let d = &self.data;
        let int = |x: usize| Value::Integer(x as i64);
        let s = |x: String| Value::String(x);
        let path = |p: &Path| Value::String(p.to_string_lossy().into_owned());
        match key {
            "net.layers" => int(n.layers),
            "net.channels" => int(n.channels),
            "net.lambda_min" => Value::Float(n.lambda_min),
            "net.lambda_max" => Value::Float(n.lambda_max),
            "net.spacing" => Value::Float(n.spacing),
            "net.nx" => int(n.nx),
            "net.ny" => int(n.ny),
            "net.pitch" => Value::Float(n.pitch),
            "net.method" => s(n.method.to_string()),
            "net.loss" => s(n.loss.to_string()),
            "net.classes" => int(n.classes),
            "net.amplitude_trainable" => Value::Boolean(n.amplitude_trainable),
            "net.bias" => Value::Boolean(n.bias),
            "net.dispersive" => Value::Boolean(n.dispersive),
            "net.readout" => s(n.readout.to_string()),
            "train.lr" => Value::Float(t.learning_rate),
            "train.batch_size" => int(t.batch_size),
            "train.epochs" => int(t.epochs),
            "train.optimizer" => s(t.optimizer.to_string()),
            "train.momentum" => Value::Float(t.momentum),
            "train.beta1" => Value::Float(t.beta1),
            "train.beta2" => Value::Float(t.beta2),
            "train.epsilon" => Value::Float(t.epsilon),
            "train.seed" => Value::Integer(t.seed as i64),
            "train.train_subset" => int(t.train_subset.unwrap_or(0)),
            "train.test_subset" => int(t.test_subset.unwrap_or(0)),
            "data.train_images" => path(&d.train_images),
            "data.train_labels" => path(&d.train_labels),
            "data.test_images" => path(&d.test_images),
            "data.test_labels" => path(&d.test_labels),
            "data.orientation_fix" => Value::Boolean(d.orientation_fix),
            "out.dir" => path(&self.out_dir),
            "log.wall_clock" => Value::Boolean(self.wall_clock),
            "gradcheck.probes" => int(self.gradcheck.probes),
            "gradcheck.epsilon" => Value::Float(self.gradcheck.epsilon),
            "gradcheck.flip_sign" => Value::Boolean(self.gradcheck.flip_sign),
            other => unreachable!("KEYS lists {other}"),
        }
    }

    /// Flat `key = value` lines for every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.value_of(k)))
            .collect()
    }

    pub fn net_config(&self) -> Result<MfdNetConfig> {
        let n = &self.net;
        let config = MfdNetConfig {
            num_layers: n.layers,
            wavelengths: pick_frequencies(n.lambda_min, n.lambda_max, n.channels)
                .map_err(|e| Error::Config(e.to_string()))?,
            layer_spacing: n.spacing,
            geometry: GridGeometry::new(n.nx, n.ny, n.pitch)?,
            method: n.method,
            loss: n.loss,
            num_classes: n.classes,
            amplitude_trainable: n.amplitude_trainable,
            bias_enabled: n.bias,
            dispersive: n.dispersive,
            readout: n.readout,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.net_config()?;
        self.train.validate()?;
        if self.gradcheck.probes == 0 {
            return Err(Error::Config("gradcheck.probes must be at least 1".into()));
        }
        if !(self.gradcheck.epsilon > 0.0) {
            return Err(Error::Config("gradcheck.epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_build_the_default_network() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.net_config().unwrap(), MfdNetConfig::default());
    }

    #[test]
    fn flat_and_grouped_keys_agree() {
        let flat = RunConfig::from_text("net.layers = 3\ntrain.lr = 0.01\n").unwrap();
        let grouped = RunConfig::from_text("[net]\nlayers = 3\n[train]\nlr = 0.01\n").unwrap();
        assert_eq!(flat, grouped);
        assert_eq!(flat.net.layers, 3);
        assert_eq!(flat.train.learning_rate, 0.01);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_errors() {
        assert!(RunConfig::from_text("net.layer = 3").is_err());
        assert!(RunConfig::from_text("net.layers = \"three\"").is_err());
        assert!(RunConfig::from_text("net.method = \"fresnel\"").is_err());
        assert!(RunConfig::from_text("train.seed = -1").is_err());
    }

    #[test]
    fn overrides_parse_values_and_bare_strings() {
        let mut c = RunConfig::default();
        c.apply_override("train.lr=0.05").unwrap();
        c.apply_override("net.bias = true").unwrap();
        c.apply_override("data.train_images=/data/train-images.gz")
            .unwrap();
        c.apply_override("net.method=angular-spectrum").unwrap();
        assert_eq!(c.train.learning_rate, 0.05);
        assert!(c.net.bias);
        assert_eq!(c.data.train_images, PathBuf::from("/data/train-images.gz"));
        assert_eq!(c.net.method, Method::AngularSpectrum);
        assert!(c.apply_override("train.lr").is_err());
        assert!(c.apply_override("nope=1").is_err());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut c = RunConfig::default();
        for o in [
            "train.lr=0.0012345678901234567",
            "net.lambda_min=0.7000000000000001",
            "train.epsilon=1e-8",
            "train.seed=123456789012",
            "data.test_images=/tmp/we\"ird\\path",
            "train.train_subset=512",
            "net.readout=intensity",
            "train.optimizer=sgd-momentum",
        ] {
            c.apply_override(o).unwrap();
        }
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            back.train.learning_rate.to_bits(),
            c.train.learning_rate.to_bits()
        );
        assert_eq!(c.to_text().lines().count(), KEYS.len());
    }

    #[test]
    fn zero_probes_is_a_config_error() {
        let mut c = RunConfig::default();
        c.apply_override("gradcheck.probes=0").unwrap();
        assert!(c.validate().is_err());
    }
}
