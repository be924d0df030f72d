//! Flat `key = value` run configuration.
//!
//! Every tunable lives in one namespace-prefixed flat file (`#` starts a
//! comment). Command-line `--set key=value` pairs override file values;
//! unknown keys are usage errors. The fully resolved configuration is
//! echoed into every JSON artifact for provenance.

use std::collections::BTreeMap;
use std::path::Path;

use sparsest::cell::CellKind;
use sparsest::data::{AnomalyKind, BlobConfig, CycleConfig, InjectorSpec};
use sparsest::pareto::GpFitOptions;
use sparsest::train::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataKind {
    Blobs,
    Cycles,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub jobs: usize,

    pub data_kind: DataKind,
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub num_blobs: usize,
    pub blob_size: (f64, f64),
    pub speed: (f64, f64),
    pub train_sequences: usize,
    pub val_sequences: usize,
    pub test_sequences: usize,

    pub cycle_period: usize,
    pub cycle_sample_every: usize,
    pub cycle_frames_train: usize,
    pub cycle_frames_test: usize,
    pub cycle_injectors: Vec<InjectorSpec>,

    pub cell: CellKind,
    pub hidden: Vec<usize>,
    pub kernel: usize,

    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch: usize,
    pub w_mse: f64,
    pub mu: f64,
    pub tau: f64,
    pub theta_lr_scale: f64,
    pub window: usize,
    pub stride: usize,

    pub eval_warmup: usize,
    pub eval_horizon: usize,

    pub pareto_init_weights: Vec<f64>,
    pub pareto_iterations: usize,
    pub pareto_grid: usize,
    pub pareto_independent: bool,
    pub pareto_log_mse: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out_dir: "out".to_string(),
            jobs: 1,
            data_kind: DataKind::Blobs,
            height: 16,
            width: 16,
            frames: 20,
            num_blobs: 2,
            blob_size: (3.0, 5.0),
            speed: (0.6, 1.4),
            train_sequences: 200,
            val_sequences: 50,
            test_sequences: 100,
            cycle_period: 24,
            cycle_sample_every: 1,
            cycle_frames_train: 21,
            cycle_frames_test: 61,
            cycle_injectors: CycleConfig::default().injectors,
            cell: CellKind::Sparsest,
            hidden: vec![8, 8],
            kernel: 3,
            epochs: 200,
            patience: 10,
            lr: 1e-4,
            lr_decay: 0.5,
            batch: 4,
            w_mse: 1.0,
            mu: 0.1,
            tau: 0.05,
            theta_lr_scale: 1.0,
            window: 21,
            stride: 1,
            eval_warmup: 10,
            eval_horizon: 10,
            pareto_init_weights: sparsest::pareto::DEFAULT_INIT_WEIGHTS.to_vec(),
            pareto_iterations: 4,
            pareto_grid: 101,
            pareto_independent: false,
            pareto_log_mse: false,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse::<T>()
        .map_err(|_| usage(format!("cannot parse value {value:?} for key {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_injectors(key: &str, value: &str) -> Result<Vec<InjectorSpec>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(usage(format!(
                    "injector {item:?} must look like kind:start:end for key {key}"
                )));
            }
            let kind = match parts[0] {
                "stall" => AnomalyKind::Stall,
                "skip_load" => AnomalyKind::SkipLoad,
                "off_path" => AnomalyKind::OffPath,
                other => {
                    return Err(usage(format!(
                        "unknown injector kind {other:?} (stall|skip_load|off_path)"
                    )))
                }
            };
            Ok(InjectorSpec {
                kind,
                start: parse(key, parts[1])?,
                end: parse(key, parts[2])?,
            })
        })
        .collect()
}

fn injectors_to_string(injectors: &[InjectorSpec]) -> String {
    injectors
        .iter()
        .map(|i| {
            let kind = match i.kind {
                AnomalyKind::Stall => "stall",
                AnomalyKind::SkipLoad => "skip_load",
                AnomalyKind::OffPath => "off_path",
            };
            format!("{kind}:{}:{}", i.start, i.end)
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "jobs" => self.jobs = parse(key, value)?,
            "data.kind" => {
                self.data_kind = match value {
                    "blobs" => DataKind::Blobs,
                    "cycles" => DataKind::Cycles,
                    other => return Err(usage(format!("unknown data.kind {other:?}"))),
                }
            }
            "data.height" => self.height = parse(key, value)?,
            "data.width" => self.width = parse(key, value)?,
            "data.frames" => self.frames = parse(key, value)?,
            "data.num_blobs" => self.num_blobs = parse(key, value)?,
            "data.blob_min" => self.blob_size.0 = parse(key, value)?,
            "data.blob_max" => self.blob_size.1 = parse(key, value)?,
            "data.speed_min" => self.speed.0 = parse(key, value)?,
            "data.speed_max" => self.speed.1 = parse(key, value)?,
            "data.train" => self.train_sequences = parse(key, value)?,
            "data.val" => self.val_sequences = parse(key, value)?,
            "data.test" => self.test_sequences = parse(key, value)?,
            "cycle.period" => self.cycle_period = parse(key, value)?,
            "cycle.sample_every" => self.cycle_sample_every = parse(key, value)?,
            "cycle.frames_train" => self.cycle_frames_train = parse(key, value)?,
            "cycle.frames_test" => self.cycle_frames_test = parse(key, value)?,
            "cycle.injectors" => self.cycle_injectors = parse_injectors(key, value)?,
            "model.cell" => {
                self.cell = match value {
                    "dense" => CellKind::Dense,
                    "sparsest" => CellKind::Sparsest,
                    other => return Err(usage(format!("unknown model.cell {other:?}"))),
                }
            }
            "model.hidden" => {
                self.hidden = parse_list(key, value)?;
                if self.hidden.is_empty() {
                    return Err(usage("model.hidden needs at least one layer"));
                }
            }
            "model.kernel" => self.kernel = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.patience" => self.patience = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.lr_decay" => self.lr_decay = parse(key, value)?,
            "train.batch" => self.batch = parse(key, value)?,
            "train.w_mse" => self.w_mse = parse(key, value)?,
            "train.mu" => self.mu = parse(key, value)?,
            "train.tau" => self.tau = parse(key, value)?,
            "train.theta_lr_scale" => self.theta_lr_scale = parse(key, value)?,
            "train.window" => self.window = parse(key, value)?,
            "train.stride" => self.stride = parse(key, value)?,
            "eval.warmup" => self.eval_warmup = parse(key, value)?,
            "eval.horizon" => self.eval_horizon = parse(key, value)?,
            "pareto.init_weights" => self.pareto_init_weights = parse_list(key, value)?,
            "pareto.iterations" => self.pareto_iterations = parse(key, value)?,
            "pareto.grid" => self.pareto_grid = parse(key, value)?,
            "pareto.independent" => self.pareto_independent = parse(key, value)?,
            "pareto.log_mse" => self.pareto_log_mse = parse(key, value)?,
            other => return Err(usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Lib(sparsest::Error::Io(e)))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            self.apply(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The fully resolved configuration as a flat string map (echoed into
    /// JSON artifacts).
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.clone());
        put("jobs", self.jobs.to_string());
        put(
            "data.kind",
            match self.data_kind {
                DataKind::Blobs => "blobs".to_string(),
                DataKind::Cycles => "cycles".to_string(),
            },
        );
        put("data.height", self.height.to_string());
        put("data.width", self.width.to_string());
        put("data.frames", self.frames.to_string());
        put("data.num_blobs", self.num_blobs.to_string());
        put("data.blob_min", self.blob_size.0.to_string());
        put("data.blob_max", self.blob_size.1.to_string());
        put("data.speed_min", self.speed.0.to_string());
        put("data.speed_max", self.speed.1.to_string());
        put("data.train", self.train_sequences.to_string());
        put("data.val", self.val_sequences.to_string());
        put("data.test", self.test_sequences.to_string());
        put("cycle.period", self.cycle_period.to_string());
        put("cycle.sample_every", self.cycle_sample_every.to_string());
        put("cycle.frames_train", self.cycle_frames_train.to_string());
        put("cycle.frames_test", self.cycle_frames_test.to_string());
        put("cycle.injectors", injectors_to_string(&self.cycle_injectors));
        put(
            "model.cell",
            match self.cell {
                CellKind::Dense => "dense".to_string(),
                CellKind::Sparsest => "sparsest".to_string(),
            },
        );
        put(
            "model.hidden",
            self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        put("model.kernel", self.kernel.to_string());
        put("train.epochs", self.epochs.to_string());
        put("train.patience", self.patience.to_string());
        put("train.lr", self.lr.to_string());
        put("train.lr_decay", self.lr_decay.to_string());
        put("train.batch", self.batch.to_string());
        put("train.w_mse", self.w_mse.to_string());
        put("train.mu", self.mu.to_string());
        put("train.tau", self.tau.to_string());
        put("train.theta_lr_scale", self.theta_lr_scale.to_string());
        put("train.window", self.window.to_string());
        put("train.stride", self.stride.to_string());
        put("eval.warmup", self.eval_warmup.to_string());
        put("eval.horizon", self.eval_horizon.to_string());
        put(
            "pareto.init_weights",
            self.pareto_init_weights
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("pareto.iterations", self.pareto_iterations.to_string());
        put("pareto.grid", self.pareto_grid.to_string());
        put("pareto.independent", self.pareto_independent.to_string());
        put("pareto.log_mse", self.pareto_log_mse.to_string());
        m
    }

    pub fn blob_config(&self) -> BlobConfig {
        BlobConfig {
            height: self.height,
            width: self.width,
            num_blobs: self.num_blobs,
            blob_size: self.blob_size,
            speed: self.speed,
            frames: self.frames,
            train_sequences: self.train_sequences,
            val_sequences: self.val_sequences,
            test_sequences: self.test_sequences,
            seed: self.seed,
        }
    }

    pub fn cycle_config(&self) -> CycleConfig {
        CycleConfig {
            height: self.height,
            width: self.width,
            period: self.cycle_period,
            sample_every: self.cycle_sample_every,
            frames_train: self.cycle_frames_train,
            frames_test: self.cycle_frames_test,
            train_sequences: self.train_sequences,
            val_sequences: self.val_sequences,
            test_sequences: self.test_sequences,
            injectors: self.cycle_injectors.clone(),
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            lr: self.lr,
            lr_decay: self.lr_decay,
            batch_size: self.batch,
            w_mse: self.w_mse,
            mu: self.mu,
            tau: self.tau,
            theta_lr_scale: self.theta_lr_scale,
            window: self.window,
            stride: self.stride,
            seed: self.seed,
            jobs: self.jobs,
        }
    }

    pub fn gp_options(&self) -> GpFitOptions {
        GpFitOptions {
            independent: self.pareto_independent,
            log_mse: self.pareto_log_mse,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_a_usage_error() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.apply("nope", "1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn overrides_and_lists_parse() {
        let mut cfg = RunConfig::default();
        cfg.apply("model.hidden", "4,4,2").unwrap();
        assert_eq!(cfg.hidden, vec![4, 4, 2]);
        cfg.apply("cycle.injectors", "stall:3:7,skip_load:1:2").unwrap();
        assert_eq!(cfg.cycle_injectors.len(), 2);
        cfg.apply("cycle.injectors", "").unwrap();
        assert!(cfg.cycle_injectors.is_empty());
        cfg.apply("train.w_mse", "0.25").unwrap();
        assert_eq!(cfg.w_mse, 0.25);
        assert!(cfg.apply("cycle.injectors", "bogus:1:2").is_err());
    }

    #[test]
    fn config_echo_roundtrips() {
        let cfg = RunConfig::default();
        let map = cfg.to_map();
        let mut rebuilt = RunConfig::default();
        for (k, v) in &map {
            rebuilt.apply(k, v).unwrap();
        }
        assert_eq!(map, rebuilt.to_map());
    }
}
