//! Flat `key = value` configuration. Every key has a default, may be set in
//! a config file, and may be overridden by `--key value` on the command line.
//! Resolution order: default, then `BURSTCAST_SEED` (seed only), then the
//! file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, Stage};
use crate::bssm::{BssmConfig, Priors};
use crate::burst::KleinbergConfig;

pub const SEED_ENV: &str = "BURSTCAST_SEED";

pub(crate) struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    pub boolean: bool,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
        boolean: false,
    }
}

const fn flag(name: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default: "false",
        help,
        boolean: true,
    }
}

pub(crate) const KEYS: &[Key] = &[
    key("input", "", "weekly count CSV with header week,count"),
    key("output_dir", "burstcast-out", "directory for all artifacts"),
    key("seed", "20190101", "top-level seed; every random stream derives from it"),
    key("models", "bssm,ar1,ar3,arma11,ma,wma,es,holtwinters", "comma-separated models to run and score"),
    flag("raw_counts", "fit classical models to raw counts instead of trend residuals"),
    key("break_min", "10", "first candidate week for the structural break"),
    key("break_max", "200", "last candidate week for the structural break"),
    key("arma_p_max", "3", "largest AR order in the ARMA selection grid"),
    key("arma_q_max", "3", "largest MA order in the ARMA selection grid"),
    key("max_lag", "20", "largest lag in the correlogram"),
    key("kleinberg_s", "2", "rate ratio between burst states"),
    key("kleinberg_gamma", "1", "burst state transition cost"),
    key("kleinberg_max_states", "25", "number of automaton states kept"),
    key("chains", "4", "MCMC chains"),
    key("iterations", "3000", "MCMC iterations per chain, warmup included"),
    key("warmup", "1000", "MCMC warmup iterations per chain"),
    key("credible_level", "0.95", "credible level of forecast intervals"),
    key("prior_alpha_mean", "0", "mean of the Normal prior on alpha"),
    key("prior_alpha_sd", "5", "sd of the Normal prior on alpha"),
    key("prior_phi_mean", "0", "mean of the Normal prior on phi"),
    key("prior_phi_sd", "2", "sd of the Normal prior on phi"),
    key("prior_sigma_w_scale", "1", "scale of the half-Normal prior on sigma_w"),
    key("prior_shape_shape", "2", "shape of the Gamma prior on r"),
    key("prior_shape_rate", "0.1", "rate of the Gamma prior on r"),
    key("wbic", "true", "also run the tempered fit and report WBIC"),
    key("ma_window", "4", "moving-average window"),
    key("wma_window", "4", "weighted moving-average window"),
    key("es_alpha", "auto", "exponential smoothing weight, or auto to fit it"),
    key("hw_alpha", "0.3", "Holt-Winters level weight"),
    key("hw_beta", "0.1", "Holt-Winters trend weight"),
    key("hw_gamma", "0.1", "Holt-Winters season weight"),
    key("hw_season", "52", "Holt-Winters season length in weeks"),
];

pub(crate) fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// `credible-level` and `credible_level` name the same key.
pub(crate) fn normalize(name: &str) -> String {
    name.trim().replace('-', "_")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Bssm,
    Ar1,
    Ar3,
    Arma11,
    Ma,
    Wma,
    Es,
    Holtwinters,
}

impl ModelName {
    pub const ALL: [ModelName; 8] = [
        ModelName::Bssm,
        ModelName::Ar1,
        ModelName::Ar3,
        ModelName::Arma11,
        ModelName::Ma,
        ModelName::Wma,
        ModelName::Es,
        ModelName::Holtwinters,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Bssm => "bssm",
            ModelName::Ar1 => "ar1",
            ModelName::Ar3 => "ar3",
            ModelName::Arma11 => "arma11",
            ModelName::Ma => "ma",
            ModelName::Wma => "wma",
            ModelName::Es => "es",
            ModelName::Holtwinters => "holtwinters",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s.trim().to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherSettings {
    pub ma_window: usize,
    pub wma_window: usize,
    /// `None` fits the weight by grid search.
    pub es_alpha: Option<f64>,
    pub hw_alpha: f64,
    pub hw_beta: f64,
    pub hw_gamma: f64,
    pub hw_season: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input_path: PathBuf,
    pub output_dir: PathBuf,
    pub kleinberg: KleinbergConfig,
    pub bssm: BssmConfig,
    pub break_search_range: (usize, usize),
    pub arma_grid: (usize, usize),
    pub models: Vec<ModelName>,
    pub seed: u64,
    pub raw_counts: bool,
    pub wbic: bool,
    pub max_lag: usize,
    pub smoothers: SmootherSettings,
    /// Every key with its resolved value, as recorded in the manifest.
    pub resolved: BTreeMap<String, String>,
}

fn config_error(message: String) -> CliError {
    CliError::validation(Stage::Config, message)
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(config_error(format!("line {}: expected `key = value`, got `{line}`", i + 1)));
        };
        let k = normalize(k);
        if lookup(&k).is_none() {
            return Err(config_error(format!("line {}: unknown key `{k}`", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

/// A config file is either `key = value` text or a run manifest, whose
/// recorded configuration is reused.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config file {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("config file {} is not valid JSON: {e}", path.display())))?;
        let map: BTreeMap<String, String> = doc
            .get("config")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| config_error(format!("manifest config block is malformed: {e}")))?
            .ok_or_else(|| config_error(format!("{} has no `config` block", path.display())))?;
        for k in map.keys() {
            if lookup(k).is_none() {
                return Err(config_error(format!("manifest has unknown key `{k}`")));
            }
        }
        return Ok(map);
    }
    parse_config_text(&text)
}

/// Layer defaults, the seed variable, the file and the flags.
pub fn resolve(
    file: Option<BTreeMap<String, String>>,
    flags: BTreeMap<String, String>,
    seed_env: Option<String>,
) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> =
        KEYS.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
    if let Some(seed) = seed_env {
        out.insert("seed".into(), seed.trim().to_string());
    }
    out.extend(file.unwrap_or_default());
    out.extend(flags);
    out
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, name: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    let raw = map.get(name).map(String::as_str).unwrap_or("");
    raw.parse()
        .map_err(|e| config_error(format!("invalid value `{raw}` for `{name}`: {e}")))
}

fn get_bool(map: &BTreeMap<String, String>, name: &str) -> Result<bool, CliError> {
    match map.get(name).map(|s| s.to_ascii_lowercase()).as_deref() {
        Some("true" | "yes" | "1") => Ok(true),
        Some("false" | "no" | "0") => Ok(false),
        other => Err(config_error(format!(
            "invalid value `{}` for `{name}`: expected true or false",
            other.unwrap_or("")
        ))),
    }
}

impl PipelineConfig {
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self, CliError> {
        let input = map.get("input").cloned().unwrap_or_default();
        if input.is_empty() {
            return Err(config_error("missing required key `input`".into()));
        }
        let output_dir: String = get(&map, "output_dir")?;
        if output_dir.is_empty() {
            return Err(config_error("`output_dir` must not be empty".into()));
        }
        let seed: u64 = get(&map, "seed")?;

        let mut models = Vec::new();
        for name in map["models"].split(',').filter(|s| !s.trim().is_empty()) {
            let m = ModelName::parse(name).ok_or_else(|| {
                config_error(format!(
                    "unknown model `{}` in `models`; choose from {}",
                    name.trim(),
                    ModelName::ALL.map(ModelName::as_str).join(", ")
                ))
            })?;
            if !models.contains(&m) {
                models.push(m);
            }
        }
        if models.is_empty() {
            return Err(config_error("`models` must name at least one model".into()));
        }

        let kleinberg = KleinbergConfig {
            s: get(&map, "kleinberg_s")?,
            gamma: get(&map, "kleinberg_gamma")?,
            max_states: get(&map, "kleinberg_max_states")?,
        };
        kleinberg
            .validate()
            .map_err(|e| config_error(format!("kleinberg settings: {e}")))?;

        let bssm = BssmConfig {
            chains: get(&map, "chains")?,
            iterations: get(&map, "iterations")?,
            warmup: get(&map, "warmup")?,
            seed,
            priors: Priors {
                alpha_mean: get(&map, "prior_alpha_mean")?,
                alpha_sd: get(&map, "prior_alpha_sd")?,
                phi_mean: get(&map, "prior_phi_mean")?,
                phi_sd: get(&map, "prior_phi_sd")?,
                sigma_w_scale: get(&map, "prior_sigma_w_scale")?,
                shape_shape: get(&map, "prior_shape_shape")?,
                shape_rate: get(&map, "prior_shape_rate")?,
            },
            credible_level: get(&map, "credible_level")?,
            fixed_phi: None,
            fixed_sigma_w: None,
        };
        bssm.validate().map_err(|e| config_error(e.to_string()))?;

        let break_search_range = (get(&map, "break_min")?, get(&map, "break_max")?);
        if break_search_range.0 > break_search_range.1 {
            return Err(config_error(format!(
                "invalid config field `break_min`: {} exceeds break_max {}",
                break_search_range.0, break_search_range.1
            )));
        }
        let arma_grid = (get(&map, "arma_p_max")?, get(&map, "arma_q_max")?);
        if arma_grid.0 > 3 || arma_grid.1 > 3 {
            return Err(config_error("`arma_p_max` and `arma_q_max` must be at most 3".into()));
        }

        let es_raw = map["es_alpha"].trim().to_ascii_lowercase();
        let es_alpha = if es_raw == "auto" { None } else { Some(get(&map, "es_alpha")?) };
        let smoothers = SmootherSettings {
            ma_window: get(&map, "ma_window")?,
            wma_window: get(&map, "wma_window")?,
            es_alpha,
            hw_alpha: get(&map, "hw_alpha")?,
            hw_beta: get(&map, "hw_beta")?,
            hw_gamma: get(&map, "hw_gamma")?,
            hw_season: get(&map, "hw_season")?,
        };

        Ok(Self {
            input_path: PathBuf::from(input),
            output_dir: PathBuf::from(output_dir),
            kleinberg,
            bssm,
            break_search_range,
            arma_grid,
            models,
            seed,
            raw_counts: get_bool(&map, "raw_counts")?,
            wbic: get_bool(&map, "wbic")?,
            max_lag: get(&map, "max_lag")?,
            smoothers,
            resolved: map,
        })
    }

    pub fn has_model(&self, m: ModelName) -> bool {
        self.models.contains(&m)
    }
}
