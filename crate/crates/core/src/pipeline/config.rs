//! Run configuration: flat `key = value` text with `[section]` headers.
//! Keys are unique across sections, so each one doubles as a command-line
//! flag of the same name.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::{ErrorKind, PipelineError};
use crate::data::SynthConfig;
use crate::ensemble::ModelKind;
use crate::features::FeatureKind;
use crate::hmm::{HmmConfig, HmmScore};
use crate::segment::LengthPolicy;

/// `(section, key, default, help)` for every recognised key.
pub const KEYS: &[(&str, &str, &str, &str)] = &[
    ("run", "seed", "0", "master seed; every random stream is derived from it"),
    ("run", "out", "out", "output directory"),
    ("data", "root", "", "dataset directory (WAV + .states.csv + labels.csv)"),
    ("data", "test_fraction", "0.3", "share of each class's recordings held out for TEST"),
    ("synth", "n_recordings", "60", "synthetic recordings per class"),
    ("synth", "beats_per_recording", "8", "complete cycles per synthetic recording"),
    ("synth", "hr_min", "60", "lowest synthetic heart rate (bpm)"),
    ("synth", "hr_max", "100", "highest synthetic heart rate (bpm)"),
    ("synth", "murmur_amplitude", "0.35", "murmur RMS in abnormal recordings"),
    ("synth", "noise_std", "0.05", "additive noise standard deviation"),
    ("synth", "sample_rate_hz", "2000", "synthetic sample rate"),
    ("synth", "recordings_per_subject", "1", "recordings sharing one subject id"),
    ("pipeline", "model", "cnn2d", "cnn1d | cnn2d | ecnn | hmm"),
    ("pipeline", "features", "mfcc", "raw | mfcc | tvar"),
    ("pipeline", "beat_policy", "norm1000", "norm1000 | zpad1200 (raw input of the 1D-CNN)"),
    ("pipeline", "include_c0", "false", "keep c0 instead of c12 in MFCC maps"),
    ("pipeline", "model_file", "", "model container (default <out>/model.pcgm)"),
    ("train", "epochs", "40", "maximum training epochs"),
    ("train", "batch_size", "128", "mini-batch size"),
    ("train", "lr_1d", "0.001031", "Adam learning rate of the 1D-CNN"),
    ("train", "lr_2d", "0.000496", "Adam learning rate of the 2D-CNN"),
    ("train", "patience", "10", "epochs without validation MAcc gain before stopping (0 = off)"),
    ("train", "val_fraction", "0.15", "share of TRAIN subjects used for early stopping"),
    ("train", "class_weight", "auto", "abnormal-class loss weight: auto (n_normal/n_abnormal), none, or a number"),
    ("train", "dense_dropout", "0.5", "dropout after the dense layer"),
    ("hmm", "hmm_states", "4", "left-to-right states"),
    ("hmm", "hmm_mixtures", "16", "Gaussians per state"),
    ("hmm", "hmm_iters", "50", "Baum-Welch iteration cap"),
    ("hmm", "hmm_tol", "1e-5", "relative log-likelihood gain that ends Baum-Welch"),
    ("hmm", "hmm_score", "forward", "forward | viterbi"),
    ("predict", "wav", "", "recording to classify"),
    ("predict", "annotations", "", "state annotations of that recording"),
];

/// `None` stands for the raw signal.
pub type FeatureChoice = Option<FeatureKind>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassWeight {
    Auto,
    Unweighted,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub root: Option<PathBuf>,
    pub test_fraction: f64,
    pub synth: SynthConfig,
    pub model: ModelKind,
    pub features: FeatureChoice,
    pub beat_policy: LengthPolicy,
    pub include_c0: bool,
    pub model_file: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_1d: f64,
    pub lr_2d: f64,
    pub patience: Option<usize>,
    pub val_fraction: f64,
    pub class_weight: ClassWeight,
    pub dense_dropout: f64,
    pub hmm: HmmConfig,
    pub hmm_score: HmmScore,
    pub wav: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    explicit: BTreeSet<String>,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::new("config", ErrorKind::Config, msg)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse().map_err(|_| config_err(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, PipelineError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn named<T>(key: &str, r: Result<T, String>) -> Result<T, PipelineError> {
    r.map_err(|m| config_err(format!("{key}: {m}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

pub fn parse_features(v: &str) -> Result<FeatureChoice, String> {
    match v.trim().to_ascii_lowercase().as_str() {
        "raw" => Ok(None),
        other => other.parse::<FeatureKind>().map(Some).map_err(|_| format!("unknown features '{other}' (raw, mfcc, tvar)")),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            seed: 0,
            out: PathBuf::new(),
            root: None,
            test_fraction: 0.0,
            synth: SynthConfig::default(),
            model: ModelKind::Cnn2d,
            features: None,
            beat_policy: LengthPolicy::Norm1000,
            include_c0: false,
            model_file: None,
            epochs: 0,
            batch_size: 0,
            lr_1d: 0.0,
            lr_2d: 0.0,
            patience: None,
            val_fraction: 0.0,
            class_weight: ClassWeight::Auto,
            dense_dropout: 0.0,
            hmm: HmmConfig::default(),
            hmm_score: HmmScore::Forward,
            wav: None,
            annotations: None,
            explicit: BTreeSet::new(),
        };
        for (_, key, default, _) in KEYS {
            c.apply(key, default).expect("defaults parse");
        }
        c
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut c = RunConfig::default();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| config_err(format!("line {}: {m}", i + 1));
            if let Some(rest) = line.strip_prefix('[') {
                section = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("unterminated section header '{line}'")))?
                    .trim()
                    .to_string();
                if !KEYS.iter().any(|(s, ..)| *s == section) {
                    return Err(at(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let key = key.trim();
            match KEYS.iter().find(|(_, k, ..)| *k == key) {
                Some((s, ..)) if !section.is_empty() && *s != section => {
                    return Err(at(format!("key {key} belongs in [{s}], not [{section}]")));
                }
                Some(_) => {}
                None => return Err(at(format!("unknown key '{key}'"))),
            }
            c.set(key, value.trim()).map_err(|e| at(e.to_string()))?;
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| config_err(format!("{}: {}", path.display(), e.message)))
    }

    /// Sets one key as if it came from the file or a flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        self.apply(key, value)?;
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Whether `key` was given in the file or on the command line.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    fn apply(&mut self, key: &str, v: &str) -> Result<(), PipelineError> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "root" => self.root = opt_path(v),
            "test_fraction" => self.test_fraction = parse_num(key, v)?,
            "n_recordings" => self.synth.n_recordings = parse_num(key, v)?,
            "beats_per_recording" => self.synth.beats_per_recording = parse_num(key, v)?,
            "hr_min" => self.synth.heart_rate_bpm_range.0 = parse_num(key, v)?,
            "hr_max" => self.synth.heart_rate_bpm_range.1 = parse_num(key, v)?,
            "murmur_amplitude" => self.synth.murmur_amplitude = parse_num(key, v)?,
            "noise_std" => self.synth.noise_std = parse_num(key, v)?,
            "sample_rate_hz" => self.synth.sample_rate_hz = parse_num(key, v)?,
            "recordings_per_subject" => self.synth.recordings_per_subject = parse_num(key, v)?,
            "model" => self.model = named(key, v.parse())?,
            "features" => self.features = named(key, parse_features(v))?,
            "beat_policy" => self.beat_policy = named(key, v.parse())?,
            "include_c0" => self.include_c0 = parse_bool(key, v)?,
            "model_file" => self.model_file = opt_path(v),
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr_1d" => self.lr_1d = parse_num(key, v)?,
            "lr_2d" => self.lr_2d = parse_num(key, v)?,
            "patience" => {
                let p: usize = parse_num(key, v)?;
                self.patience = (p > 0).then_some(p);
            }
            "val_fraction" => self.val_fraction = parse_num(key, v)?,
            "class_weight" => {
                self.class_weight = match v.to_ascii_lowercase().as_str() {
                    "auto" => ClassWeight::Auto,
                    "none" => ClassWeight::Unweighted,
                    _ => ClassWeight::Fixed(parse_num(key, v)?),
                }
            }
            "dense_dropout" => self.dense_dropout = parse_num(key, v)?,
            "hmm_states" => self.hmm.n_states = parse_num(key, v)?,
            "hmm_mixtures" => self.hmm.n_mixtures = parse_num(key, v)?,
            "hmm_iters" => self.hmm.max_iters = parse_num(key, v)?,
            "hmm_tol" => self.hmm.tol = parse_num(key, v)?,
            "hmm_score" => {
                self.hmm_score = match v.to_ascii_lowercase().as_str() {
                    "forward" => HmmScore::Forward,
                    "viterbi" => HmmScore::Viterbi,
                    _ => return Err(config_err(format!("hmm_score: expected forward or viterbi, got '{v}'"))),
                }
            }
            "wav" => self.wav = opt_path(v),
            "annotations" => self.annotations = opt_path(v),
            _ => return Err(config_err(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Checks value ranges and the model/feature pairing.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(config_err(format!("test_fraction {} must lie in (0, 1)", self.test_fraction)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(config_err(format!("val_fraction {} must lie in [0, 1)", self.val_fraction)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err("epochs and batch_size must be positive"));
        }
        for (k, lr) in [("lr_1d", self.lr_1d), ("lr_2d", self.lr_2d)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(config_err(format!("{k} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dense_dropout) {
            return Err(config_err("dense_dropout must lie in [0, 1)"));
        }
        if let ClassWeight::Fixed(w) = self.class_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(config_err("class_weight must be positive"));
            }
        }
        if self.beat_policy == LengthPolicy::Raw {
            return Err(config_err("beat_policy must be norm1000 or zpad1200"));
        }
        if self.model.needs_features() && self.features.is_none() {
            return Err(config_err(format!("model {} needs features mfcc or tvar", self.model)));
        }
        self.hmm.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    pub fn require_root(&self) -> Result<&Path, PipelineError> {
        self.root.as_deref().ok_or_else(|| config_err("no dataset: set root (in [data] or with --root)"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model_file.clone().unwrap_or_else(|| self.out.join("model.pcgm"))
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: crate::util::sub_seed(self.seed, "synth"), ..self.synth.clone() }
    }

    /// The effective configuration as a config file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for (sec, key, _, _) in KEYS {
            if *sec != section {
                let _ = writeln!(s, "{}[{sec}]", if section.is_empty() { "" } else { "\n" });
                section = sec;
            }
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "seed" => self.seed.to_string(),
            "out" => self.out.display().to_string(),
            "root" => p(&self.root),
            "test_fraction" => self.test_fraction.to_string(),
            "n_recordings" => self.synth.n_recordings.to_string(),
            "beats_per_recording" => self.synth.beats_per_recording.to_string(),
            "hr_min" => self.synth.heart_rate_bpm_range.0.to_string(),
            "hr_max" => self.synth.heart_rate_bpm_range.1.to_string(),
            "murmur_amplitude" => self.synth.murmur_amplitude.to_string(),
            "noise_std" => self.synth.noise_std.to_string(),
            "sample_rate_hz" => self.synth.sample_rate_hz.to_string(),
            "recordings_per_subject" => self.synth.recordings_per_subject.to_string(),
            "model" => self.model.to_string(),
            "features" => self.features.map(|k| k.as_str()).unwrap_or("raw").to_string(),
            "beat_policy" => self.beat_policy.to_string(),
            "include_c0" => self.include_c0.to_string(),
            "model_file" => p(&self.model_file),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr_1d" => self.lr_1d.to_string(),
            "lr_2d" => self.lr_2d.to_string(),
            "patience" => self.patience.unwrap_or(0).to_string(),
            "val_fraction" => self.val_fraction.to_string(),
            "class_weight" => match self.class_weight {
                ClassWeight::Auto => "auto".into(),
                ClassWeight::Unweighted => "none".into(),
                ClassWeight::Fixed(w) => w.to_string(),
            },
            "dense_dropout" => self.dense_dropout.to_string(),
            "hmm_states" => self.hmm.n_states.to_string(),
            "hmm_mixtures" => self.hmm.n_mixtures.to_string(),
            "hmm_iters" => self.hmm.max_iters.to_string(),
            "hmm_tol" => self.hmm.tol.to_string(),
            "hmm_score" => match self.hmm_score {
                HmmScore::Forward => "forward".into(),
                HmmScore::Viterbi => "viterbi".into(),
            },
            "wav" => p(&self.wav),
            "annotations" => p(&self.annotations),
            _ => String::new(),
        }
    }
}
