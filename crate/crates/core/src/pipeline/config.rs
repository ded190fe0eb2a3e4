//! Flat `key = value` run configuration. Backend keys carry the usual
//! GRPO training defaults; simulation and curriculum keys sit alongside.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::curriculum::{CurriculumConfig, CurriculumMode, GraduationPolicy};
use crate::grpo::RewardConfig;
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue { line: usize, key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // real-backend training settings, recorded in the snapshot
    pub num_train_samples: usize,
    pub max_prompt_length: usize,
    pub max_response_length: usize,
    pub lr: f64,
    pub clip_ratio_low: f64,
    pub clip_ratio_high: f64,
    pub rollout_temperature: f64,
    pub rollout_n: usize,
    pub kl_coef: f64,
    pub train_batch_size: usize,
    pub eval_temperature: f64,

    // curriculum
    pub tau: f64,
    pub curriculum_m: usize,
    pub graduation: GraduationPolicy,

    // reward
    pub correct_weight: f64,
    pub format_weight: f64,
    pub normalization_epsilon: f64,

    // simulated learner
    pub sim_lr: f64,
    pub format_bias_lr: f64,
    pub transfer: bool,
    pub pool_mcq4: usize,
    pub pool_mcq10: usize,
    pub pool_cloze: usize,
    pub pool_open: usize,

    // data and providers
    pub seed: u64,
    pub hardset_n: usize,
    pub silver_runs: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub request_timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_train_samples: 958,
            max_prompt_length: 1024,
            max_response_length: 8192,
            lr: 1e-6,
            clip_ratio_low: 0.2,
            clip_ratio_high: 0.28,
            rollout_temperature: 1.0,
            rollout_n: 8,
            kl_coef: 0.01,
            train_batch_size: 8,
            eval_temperature: 0.7,
            tau: 0.5,
            curriculum_m: 8,
            graduation: GraduationPolicy::Retire,
            correct_weight: 1.0,
            format_weight: 0.2,
            normalization_epsilon: 1e-8,
            sim_lr: 1.0,
            format_bias_lr: 0.0,
            transfer: true,
            pool_mcq4: 4,
            pool_mcq10: 10,
            pool_cloze: 10,
            pool_open: 50,
            seed: 0,
            hardset_n: 64,
            silver_runs: 3,
            endpoint: None,
            model: None,
            api_key: None,
            request_timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 1000,
            max_in_flight: 4,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn parse_graduation(s: &str) -> Option<GraduationPolicy> {
    if s == "retire" {
        return Some(GraduationPolicy::Retire);
    }
    let factor = s.strip_prefix("downweight(")?.strip_suffix(')')?;
    factor.trim().parse().ok().map(GraduationPolicy::Downweight)
}

fn graduation_text(g: GraduationPolicy) -> String {
    match g {
        GraduationPolicy::Retire => "retire".into(),
        GraduationPolicy::Downweight(f) => format!("downweight({f})"),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines on top of the current values. `#` starts a
    /// comment; blank lines are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .or_else(|| content.split_once(':'))
                .ok_or(ConfigError::Syntax { line })?;
            self.set(line, key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        macro_rules! p {
            () => {
                parse(line, key, value)?
            };
        }
        let opt = |v: &str| (!v.is_empty()).then(|| v.to_string());
        match key {
            "num_train_samples" => self.num_train_samples = p!(),
            "max_prompt_length" => self.max_prompt_length = p!(),
            "max_response_length" => self.max_response_length = p!(),
            "lr" => self.lr = p!(),
            "clip_ratio_low" => self.clip_ratio_low = p!(),
            "clip_ratio_high" => self.clip_ratio_high = p!(),
            "rollout_temperature" => self.rollout_temperature = p!(),
            "rollout_n" => self.rollout_n = p!(),
            "kl_coef" => self.kl_coef = p!(),
            "train_batch_size" => self.train_batch_size = p!(),
            "eval_temperature" => self.eval_temperature = p!(),
            "tau" => self.tau = p!(),
            "curriculum_m" => self.curriculum_m = p!(),
            "graduation" => {
                self.graduation = parse_graduation(value).ok_or_else(|| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                })?
            }
            "correct_weight" => self.correct_weight = p!(),
            "format_weight" => self.format_weight = p!(),
            "normalization_epsilon" => self.normalization_epsilon = p!(),
            "sim_lr" => self.sim_lr = p!(),
            "format_bias_lr" => self.format_bias_lr = p!(),
            "transfer" => self.transfer = p!(),
            "pool_mcq4" => self.pool_mcq4 = p!(),
            "pool_mcq10" => self.pool_mcq10 = p!(),
            "pool_cloze" => self.pool_cloze = p!(),
            "pool_open" => self.pool_open = p!(),
            "seed" => self.seed = p!(),
            "hardset_n" => self.hardset_n = p!(),
            "silver_runs" => self.silver_runs = p!(),
            "endpoint" => self.endpoint = opt(value),
            "model" => self.model = opt(value),
            "api_key" => self.api_key = opt(value),
            "request_timeout_secs" => self.request_timeout_secs = p!(),
            "max_attempts" => self.max_attempts = p!(),
            "backoff_ms" => self.backoff_ms = p!(),
            "max_in_flight" => self.max_in_flight = p!(),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// `ENDPOINT_URL` and `API_KEY` override the file.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var("ENDPOINT_URL") {
            if !url.is_empty() {
                self.endpoint = Some(url);
            }
        }
        if let Ok(key) = std::env::var("API_KEY") {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
    }

    /// The config as it would be written back to a file. The API key is
    /// never included.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("num_train_samples", self.num_train_samples.to_string());
        kv("max_prompt_length", self.max_prompt_length.to_string());
        kv("max_response_length", self.max_response_length.to_string());
        kv("lr", format!("{:e}", self.lr));
        kv("clip_ratio_low", self.clip_ratio_low.to_string());
        kv("clip_ratio_high", self.clip_ratio_high.to_string());
        kv("rollout_temperature", self.rollout_temperature.to_string());
        kv("rollout_n", self.rollout_n.to_string());
        kv("kl_coef", self.kl_coef.to_string());
        kv("train_batch_size", self.train_batch_size.to_string());
        kv("eval_temperature", self.eval_temperature.to_string());
        kv("tau", self.tau.to_string());
        kv("curriculum_m", self.curriculum_m.to_string());
        kv("graduation", graduation_text(self.graduation));
        kv("correct_weight", self.correct_weight.to_string());
        kv("format_weight", self.format_weight.to_string());
        kv("normalization_epsilon", format!("{:e}", self.normalization_epsilon));
        kv("sim_lr", self.sim_lr.to_string());
        kv("format_bias_lr", self.format_bias_lr.to_string());
        kv("transfer", self.transfer.to_string());
        kv("pool_mcq4", self.pool_mcq4.to_string());
        kv("pool_mcq10", self.pool_mcq10.to_string());
        kv("pool_cloze", self.pool_cloze.to_string());
        kv("pool_open", self.pool_open.to_string());
        kv("seed", self.seed.to_string());
        kv("hardset_n", self.hardset_n.to_string());
        kv("silver_runs", self.silver_runs.to_string());
        kv("endpoint", self.endpoint.clone().unwrap_or_default());
        kv("model", self.model.clone().unwrap_or_default());
        kv("request_timeout_secs", self.request_timeout_secs.to_string());
        kv("max_attempts", self.max_attempts.to_string());
        kv("backoff_ms", self.backoff_ms.to_string());
        kv("max_in_flight", self.max_in_flight.to_string());
        s
    }

    pub fn curriculum(&self, mode: CurriculumMode) -> CurriculumConfig {
        CurriculumConfig {
            tau: self.tau,
            m: self.curriculum_m,
            graduation_policy: self.graduation,
            mode,
        }
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            correct_weight: self.correct_weight,
            format_weight: self.format_weight,
            normalization_epsilon: self.normalization_epsilon,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            pool_sizes: [self.pool_mcq4, self.pool_mcq10, self.pool_cloze, self.pool_open],
            learning_rate: self.sim_lr,
            format_bias_lr: self.format_bias_lr,
            transfer: self.transfer,
            initial_format_bias: [0.0; 4],
        }
    }
}
