//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use msf_core::data::{NormRange, PreprocessConfig};
use msf_core::model::{GnnKind, MsfCnnConfig};
use msf_core::training::{SplitSpec, TrainConfig};

/// Every knob of a run: model, schedule, split and preprocessing.
///
/// `image_size` drives both the model input and the preprocessing resize;
/// `seed` seeds initialization, shuffling and the split.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: MsfCnnConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub preprocess: PreprocessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = MsfCnnConfig::default();
        let preprocess = PreprocessConfig {
            height: model.image_size,
            width: model.image_size,
            ..PreprocessConfig::default()
        };
        Self {
            model,
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            preprocess,
        }
    }
}

/// A rejected configuration, naming the offending key when there is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn key_error(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: Some(key.to_string()),
        message: message.into(),
    }
}

pub const KEYS: [&str; 24] = [
    "in_channels",
    "image_size",
    "conv_channels",
    "kernel",
    "pool_positions",
    "scales",
    "fusion_weights",
    "ppm_levels",
    "gnn",
    "gnn_layers",
    "gnn_hidden",
    "sage_sample_size",
    "knn_k",
    "classes",
    "lr_initial",
    "lr_final",
    "decay_epoch",
    "epochs",
    "batch_size",
    "seed",
    "train_fraction",
    "folds",
    "norm_range",
    "denoise_window",
];

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| key_error(key, format!("cannot parse {value:?}: {e}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|t| scalar(key, t.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a document of `key = value` lines; `#` starts a comment.
    /// Keys not listed in [`KEYS`] and repeated keys are rejected. The result
    /// is validated.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                key: None,
                message: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(key_error(key, "given more than once"));
            }
            seen.push(key);
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let m = &mut self.model;
        match key {
            "in_channels" => m.in_channels = scalar(key, value)?,
            "image_size" => {
                m.image_size = scalar(key, value)?;
                self.preprocess.height = m.image_size;
                self.preprocess.width = m.image_size;
            }
            "conv_channels" => m.conv_channels = list(key, value)?,
            "kernel" => m.kernel = scalar(key, value)?,
            "pool_positions" => m.pool_positions = list(key, value)?,
            "scales" => m.scales = scalar(key, value)?,
            "fusion_weights" => m.fusion_weights = list(key, value)?,
            "ppm_levels" => m.ppm_levels = list(key, value)?,
            "gnn" => m.gnn_kind = GnnKind::parse(value).ok_or_else(|| key_error(key, "expected gcn or graphsage"))?,
            "gnn_layers" => m.gnn_layers = scalar(key, value)?,
            "gnn_hidden" => m.gnn_hidden = scalar(key, value)?,
            "sage_sample_size" => m.sage_sample_size = scalar(key, value)?,
            "knn_k" => m.knn_k = scalar(key, value)?,
            "classes" => m.classes = scalar(key, value)?,
            "lr_initial" => self.train.lr_initial = scalar(key, value)?,
            "lr_final" => self.train.lr_final = scalar(key, value)?,
            "decay_epoch" => self.train.decay_epoch = scalar(key, value)?,
            "epochs" => self.train.epochs = scalar(key, value)?,
            "batch_size" => self.train.batch_size = scalar(key, value)?,
            "seed" => self.set_seed(scalar(key, value)?),
            "train_fraction" => self.split.train_fraction = scalar(key, value)?,
            "folds" => self.split.folds = scalar(key, value)?,
            "norm_range" => {
                self.preprocess.range = NormRange::parse(value).ok_or_else(|| key_error(key, "expected unit or symmetric"))?
            }
            "denoise_window" => self.preprocess.denoise_window = scalar(key, value)?,
            _ => return Err(key_error(key, "unknown key")),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.split.seed = seed;
    }

    /// Checks every section, reporting the key at fault.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: msf_core::Error| match e {
            msf_core::Error::Config { key, message } => ConfigError {
                key: Some(key),
                message,
            },
            other => ConfigError {
                key: None,
                message: other.to_string(),
            },
        };
        self.model.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.split.validate().map_err(wrap)?;
        if self.split.folds < 2 {
            return Err(key_error("folds", "need at least 2 folds"));
        }
        if self.preprocess.denoise_window.is_multiple_of(2) {
            return Err(key_error("denoise_window", "must be odd"));
        }
        if self.train.batch_size < self.model.knn_k + 1 {
            return Err(key_error("batch_size", "must exceed knn_k"));
        }
        Ok(())
    }

    /// The document [`parse`](Self::parse) reads back to `self`.
    pub fn render(&self) -> String {
        let m = &self.model;
        let gnn = match m.gnn_kind {
            GnnKind::Gcn => "gcn",
            GnnKind::GraphSage => "graphsage",
        };
        let range = match self.preprocess.range {
            NormRange::Unit => "unit",
            NormRange::Symmetric => "symmetric",
        };
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        put("in_channels", m.in_channels.to_string());
        put("image_size", m.image_size.to_string());
        put("conv_channels", join(&m.conv_channels));
        put("kernel", m.kernel.to_string());
        put("pool_positions", join(&m.pool_positions));
        put("scales", m.scales.to_string());
        put("fusion_weights", join(&m.fusion_weights));
        put("ppm_levels", join(&m.ppm_levels));
        put("gnn", gnn.to_string());
        put("gnn_layers", m.gnn_layers.to_string());
        put("gnn_hidden", m.gnn_hidden.to_string());
        put("sage_sample_size", m.sage_sample_size.to_string());
        put("knn_k", m.knn_k.to_string());
        put("classes", m.classes.to_string());
        put("lr_initial", self.train.lr_initial.to_string());
        put("lr_final", self.train.lr_final.to_string());
        put("decay_epoch", self.train.decay_epoch.to_string());
        put("epochs", self.train.epochs.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("seed", self.seed().to_string());
        put("train_fraction", self.split.train_fraction.to_string());
        put("folds", self.split.folds.to_string());
        put("norm_range", range.to_string());
        put("denoise_window", self.preprocess.denoise_window.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.train.lr_initial, 0.001);
        assert_eq!(c.train.lr_final, 0.0001);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.split.train_fraction, 0.8);
        assert_eq!(c.split.folds, 5);
        assert_eq!(c.model.fusion_weights, vec![0.6, 0.4]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.set("gnn", "graphsage").unwrap();
        c.set("norm_range", "symmetric").unwrap();
        c.set("ppm_levels", "").unwrap();
        c.set("seed", "9").unwrap();
        assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn every_key_is_rendered() {
        let text = RunConfig::default().render();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nepochs = 3  # short\ndecay_epoch = 1\nimage_size=16\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!((c.preprocess.height, c.preprocess.width), (16, 16));
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("colour = red", "colour"),
            ("epochs = many", "epochs"),
            ("fusion_weights = 0.5,0.4", "fusion_weights"),
            ("gnn = gat", "gnn"),
            ("epochs = 3\nepochs = 4", "epochs"),
            ("denoise_window = 2", "denoise_window"),
            ("knn_k = 40", "batch_size"),
        ];
        for (text, key) in cases {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.key.as_deref(), Some(key), "{text}: {e}");
        }
        assert!(RunConfig::parse("just words").unwrap_err().key.is_none());
    }

    #[test]
    fn seed_reaches_every_section() {
        let c = RunConfig::parse("seed = 42").unwrap();
        assert_eq!(c.train.seed, 42);
        assert_eq!(c.split.seed, 42);
    }
}
