//! Run configuration: a flat `section.key = value` file.
//!
//! ```text
//! paths.fingering_table = ../tables/boehm_default.fingering
//! paths.profile         = ../profiles/reference_robot.profile
//! paths.output_dir      = out
//! scheduler.lead_in_ms  = 500
//! synth.key_click_enabled = false
//! synth.seed            = 42
//! analysis.tol_cents    = 50
//! ```
//!
//! Relative paths resolve against the config file's directory. Missing keys
//! take their defaults; missing table/profile paths use the shipped data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::analysis::AnalysisConfig;
use crate::fingering::{FingeringTable, DEFAULT_TABLE_TEXT};
use crate::kv::{KvError, KvFile};
use crate::scheduler::{ActuationProfile, SchedulerConfig, REFERENCE_PROFILE_TEXT};
use crate::synth::SynthConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: `{key}`: {message}")]
    Invalid {
        line: usize,
        key: String,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("fingering table {path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("actuation profile {path}: {message}")]
    Profile { path: PathBuf, message: String },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub table_path: Option<PathBuf>,
    pub profile_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub scheduler: SchedulerConfig,
    pub synth: SynthConfig,
    pub analysis: AnalysisConfig,
    pub table: FingeringTable,
    pub profile: ActuationProfile,
    table_text: String,
    profile_text: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            table_path: None,
            profile_path: None,
            output_dir: PathBuf::from("out"),
            scheduler: SchedulerConfig::default(),
            synth: SynthConfig::default(),
            analysis: AnalysisConfig::default(),
            table: FingeringTable::default(),
            profile: ActuationProfile::default(),
            table_text: DEFAULT_TABLE_TEXT.to_string(),
            profile_text: REFERENCE_PROFILE_TEXT.to_string(),
        }
    }
}

const KEYS: &[&str] = &[
    "paths.fingering_table",
    "paths.profile",
    "paths.output_dir",
    "scheduler.low_register_max",
    "scheduler.high_register_min",
    "scheduler.split_factor",
    "scheduler.lead_in_ms",
    "scheduler.hazard_threshold_ms",
    "scheduler.assist",
    "synth.sample_rate_hz",
    "synth.a4_hz",
    "synth.n_harmonics",
    "synth.jet_gain_db",
    "synth.key_click_enabled",
    "synth.key_click_db",
    "synth.onset_ramp_ms",
    "synth.seed",
    "analysis.frame_ms",
    "analysis.hop_ms",
    "analysis.fmin_hz",
    "analysis.fmax_hz",
    "analysis.tol_cents",
    "analysis.spectrogram_window_ms",
    "analysis.spectrogram_hop_ms",
    "analysis.trim_ms",
    "analysis.search_cents",
    "analysis.fft_size",
];

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "on" | "yes" => Some(true),
        "false" | "off" | "no" => Some(false),
        _ => None,
    }
}

struct Reader<'a> {
    kv: &'a KvFile,
}

impl Reader<'_> {
    fn value<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some((v, line)) = self.kv.get(key) {
            *slot = v.parse().map_err(|_| ConfigError::Invalid {
                line,
                key: key.into(),
                message: format!("cannot parse `{v}`"),
            })?;
        }
        Ok(())
    }

    fn flag(&self, key: &str, slot: &mut bool) -> Result<(), ConfigError> {
        if let Some((v, line)) = self.kv.get(key) {
            *slot = parse_bool(v).ok_or_else(|| ConfigError::Invalid {
                line,
                key: key.into(),
                message: format!("expected on/off, got `{v}`"),
            })?;
        }
        Ok(())
    }

    fn check(&self, key: &str, ok: bool, message: &str) -> Result<(), ConfigError> {
        if ok {
            return Ok(());
        }
        Err(ConfigError::Invalid {
            line: self.kv.get(key).map_or(0, |v| v.1),
            key: key.into(),
            message: message.into(),
        })
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text, resolving relative paths against `base_dir` and
    /// loading the referenced table and profile.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let kv = KvFile::parse(text)?;
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        let r = Reader { kv: &kv };
        let mut c = Config::default();
        let resolve = |p: &str| base_dir.join(p);
        if let Some((p, _)) = kv.get("paths.fingering_table") {
            let path = resolve(p);
            c.table_text = read(&path)?;
            c.table = FingeringTable::parse(&c.table_text).map_err(|e| ConfigError::Table {
                path: path.clone(),
                message: e.to_string(),
            })?;
            c.table_path = Some(path);
        }
        if let Some((p, _)) = kv.get("paths.profile") {
            let path = resolve(p);
            c.profile_text = read(&path)?;
            c.profile = ActuationProfile::parse(&c.profile_text).map_err(|e| ConfigError::Profile {
                path: path.clone(),
                message: e.to_string(),
            })?;
            c.profile_path = Some(path);
        }
        if let Some((p, _)) = kv.get("paths.output_dir") {
            c.output_dir = resolve(p);
        }

        let s = &mut c.scheduler;
        r.value("scheduler.low_register_max", &mut s.registers.low_max)?;
        r.value("scheduler.high_register_min", &mut s.registers.high_min)?;
        r.value("scheduler.split_factor", &mut s.split_factor)?;
        r.value("scheduler.lead_in_ms", &mut s.lead_in_ms)?;
        r.value("scheduler.hazard_threshold_ms", &mut s.hazard_threshold_ms)?;
        r.flag("scheduler.assist", &mut s.assist)?;
        let s = c.scheduler;
        let range = crate::LOWEST_NOTE..=crate::HIGHEST_NOTE;
        r.check(
            "scheduler.low_register_max",
            range.contains(&s.registers.low_max) && s.registers.low_max < s.registers.high_min,
            "must be within 60-96 and below the high-register bound",
        )?;
        r.check(
            "scheduler.high_register_min",
            range.contains(&s.registers.high_min),
            "must be within 60-96",
        )?;
        r.check(
            "scheduler.split_factor",
            (0.0..=1.0).contains(&s.split_factor),
            "must be within [0, 1]",
        )?;
        r.check(
            "scheduler.lead_in_ms",
            s.lead_in_ms >= 0.0 && s.lead_in_ms.is_finite(),
            "must be non-negative",
        )?;
        r.check(
            "scheduler.hazard_threshold_ms",
            s.hazard_threshold_ms >= 0.0 && s.hazard_threshold_ms.is_finite(),
            "must be non-negative",
        )?;

        let y = &mut c.synth;
        r.value("synth.sample_rate_hz", &mut y.sample_rate_hz)?;
        r.value("synth.a4_hz", &mut y.a4_hz)?;
        r.value("synth.n_harmonics", &mut y.n_harmonics)?;
        r.value("synth.jet_gain_db", &mut y.jet_gain_db)?;
        r.flag("synth.key_click_enabled", &mut y.key_click_enabled)?;
        r.value("synth.key_click_db", &mut y.key_click_db)?;
        r.value("synth.onset_ramp_ms", &mut y.onset_ramp_ms)?;
        r.value("synth.seed", &mut y.seed)?;
        c.synth.validate().map_err(|e| ConfigError::Invalid {
            line: 0,
            key: "synth".into(),
            message: e.to_string(),
        })?;

        let a = &mut c.analysis;
        r.value("analysis.frame_ms", &mut a.frame_ms)?;
        r.value("analysis.hop_ms", &mut a.hop_ms)?;
        r.value("analysis.fmin_hz", &mut a.fmin_hz)?;
        r.value("analysis.fmax_hz", &mut a.fmax_hz)?;
        r.value("analysis.tol_cents", &mut a.tol_cents)?;
        r.value("analysis.spectrogram_window_ms", &mut a.spectrogram_window_ms)?;
        r.value("analysis.spectrogram_hop_ms", &mut a.spectrogram_hop_ms)?;
        r.value("analysis.trim_ms", &mut a.trim_ms)?;
        r.value("analysis.search_cents", &mut a.search_cents)?;
        r.value("analysis.fft_size", &mut a.fft_size)?;
        c.analysis
            .validate(c.synth.sample_rate_hz)
            .map_err(|e| ConfigError::Invalid {
                line: 0,
                key: "analysis".into(),
                message: e.to_string(),
            })?;
        Ok(c)
    }

    /// Every effective setting, one `key = value` line each, in a fixed order.
    pub fn canonical(&self) -> String {
        let (s, y, a) = (&self.scheduler, &self.synth, &self.analysis);
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        put("scheduler.low_register_max", s.registers.low_max.to_string());
        put("scheduler.high_register_min", s.registers.high_min.to_string());
        put("scheduler.split_factor", s.split_factor.to_string());
        put("scheduler.lead_in_ms", s.lead_in_ms.to_string());
        put("scheduler.hazard_threshold_ms", s.hazard_threshold_ms.to_string());
        put("scheduler.assist", s.assist.to_string());
        put("synth.sample_rate_hz", y.sample_rate_hz.to_string());
        put("synth.a4_hz", y.a4_hz.to_string());
        put("synth.n_harmonics", y.n_harmonics.to_string());
        put("synth.jet_gain_db", y.jet_gain_db.to_string());
        put("synth.key_click_enabled", y.key_click_enabled.to_string());
        put("synth.key_click_db", y.key_click_db.to_string());
        put("synth.onset_ramp_ms", y.onset_ramp_ms.to_string());
        put("synth.seed", y.seed.to_string());
        put("analysis.frame_ms", a.frame_ms.to_string());
        put("analysis.hop_ms", a.hop_ms.to_string());
        put("analysis.fmin_hz", a.fmin_hz.to_string());
        put("analysis.fmax_hz", a.fmax_hz.to_string());
        put("analysis.tol_cents", a.tol_cents.to_string());
        put("analysis.spectrogram_window_ms", a.spectrogram_window_ms.to_string());
        put("analysis.spectrogram_hop_ms", a.spectrogram_hop_ms.to_string());
        put("analysis.trim_ms", a.trim_ms.to_string());
        put("analysis.search_cents", a.search_cents.to_string());
        put("analysis.fft_size", a.fft_size.to_string());
        out
    }

    /// SHA-256 over the canonical settings and the table and profile contents.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        h.update(b"\0table\0");
        h.update(self.table_text.as_bytes());
        h.update(b"\0profile\0");
        h.update(self.profile_text.as_bytes());
        h.finalize().iter().fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").expect("string write");
            s
        })
    }
}
