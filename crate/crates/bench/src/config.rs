//! TOML sweep configuration; every CLI flag overrides its TOML key.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gnncomp_core::data::make_splits;
use gnncomp_core::models::{ModelKind, ModelSpec};
use gnncomp_core::nn::OptimConfig;
use gnncomp_core::prune::PruneMethod;
use gnncomp_core::quant::{BackwardMode, ObserverKind, QuantConfig, QuantMode};
use serde::Deserialize;

use crate::datasets;
use crate::sweeps::SweepContext;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub common: CommonSection,
    pub prune: Option<PruneSection>,
    pub reg: Option<RegSection>,
    pub quant: Option<QuantSection>,
    pub ltq: Option<LtqSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonSection {
    pub dataset: Option<String>,
    pub model: Option<String>,
    pub seeds: Option<usize>,
    pub seed_base: Option<u64>,
    pub epochs: Option<usize>,
    pub lr: Option<f32>,
    pub weight_decay: Option<f32>,
    pub hidden: Option<usize>,
    pub split_seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub repeats: Option<usize>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSection {
    pub method: Option<String>,
    pub finetune: Option<bool>,
    pub finetune_epochs: Option<usize>,
    pub sparsities: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegSection {
    pub lambdas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSection {
    pub configs: Option<Vec<String>>,
    pub backward: Option<String>,
    pub observer: Option<String>,
    pub bits: Option<u8>,
    pub dq_pmin: Option<f32>,
    pub dq_pmax: Option<f32>,
    pub a2q_lambda: Option<f32>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtqSection {
    pub sparsity: Option<f64>,
    pub rounds: Option<usize>,
}

pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Key-by-key precedence: values in `flags` override the file section.
pub fn merge_common(file: &CommonSection, flags: &CommonSection) -> CommonSection {
    CommonSection {
        dataset: flags.dataset.clone().or_else(|| file.dataset.clone()),
        model: flags.model.clone().or_else(|| file.model.clone()),
        seeds: flags.seeds.or(file.seeds),
        seed_base: flags.seed_base.or(file.seed_base),
        epochs: flags.epochs.or(file.epochs),
        lr: flags.lr.or(file.lr),
        weight_decay: flags.weight_decay.or(file.weight_decay),
        hidden: flags.hidden.or(file.hidden),
        split_seed: flags.split_seed.or(file.split_seed),
        deterministic: flags.deterministic.or(file.deterministic),
        repeats: flags.repeats.or(file.repeats),
        workers: flags.workers.or(file.workers),
    }
}

pub fn parse_model(name: &str) -> Result<ModelKind> {
    Ok(match name.to_lowercase().as_str() {
        "gcn2" | "gcn" => ModelKind::Gcn2,
        "gin5" | "gin" => ModelKind::Gin5,
        "gae" => ModelKind::Gae,
        other => bail!("unknown model `{other}` (expected gcn2|gin5|gae)"),
    })
}

pub fn parse_method(name: &str) -> Result<PruneMethod> {
    Ok(match name.to_lowercase().as_str() {
        "global" => PruneMethod::Global,
        "layerwise" | "fine-grained" | "grain" => PruneMethod::LayerWise,
        other => bail!("unknown pruning method `{other}` (expected global|layerwise)"),
    })
}

pub fn parse_backward(name: &str) -> Result<BackwardMode> {
    Ok(match name.to_lowercase().as_str() {
        "ste" => BackwardMode::Ste,
        "gc" => BackwardMode::Gc,
        other => bail!("unknown backward mode `{other}` (expected ste|gc)"),
    })
}

pub fn parse_observer(name: &str) -> Result<ObserverKind> {
    Ok(match name.to_lowercase().as_str() {
        "abs" => ObserverKind::Abs,
        "mom" | "momentum" => ObserverKind::Momentum,
        "per" | "percentile" => ObserverKind::Percentile,
        other => bail!("unknown observer `{other}` (expected abs|mom|per)"),
    })
}

/// Parses a quantization config label: `fp32`, `qat-int8[-ste[-abs]]`,
/// `dq-int4-gc-mom`, `a2q` or `a2q:0.01`. Omitted parts fall back to the
/// provided defaults.
pub fn parse_quant_spec(spec: &str, defaults: &QuantSection) -> Result<QuantConfig> {
    let lower = spec.to_lowercase();
    let backward = parse_backward(defaults.backward.as_deref().unwrap_or("ste"))?;
    let observer = parse_observer(defaults.observer.as_deref().unwrap_or("abs"))?;
    let mut cfg = if lower == "fp32" {
        let mut c = QuantConfig::qat(32);
        c.backward = backward;
        c.observer = observer;
        c
    } else if let Some(rest) = lower.strip_prefix("a2q") {
        let lambda = match rest.strip_prefix(':') {
            Some(v) => v.parse::<f32>().with_context(|| format!("bad a2q λ in `{spec}`"))?,
            None => defaults.a2q_lambda.unwrap_or(0.01),
        };
        let mut c = QuantConfig::a2q(lambda);
        c.backward = backward;
        c.observer = observer;
        c
    } else {
        let parts: Vec<&str> = lower.split('-').collect();
        if parts.len() < 2 {
            bail!("bad quantization spec `{spec}`");
        }
        let mode = match parts[0] {
            "qat" => QuantMode::Qat,
            "dq" => QuantMode::Dq,
            other => bail!("unknown quantization mode `{other}`"),
        };
        let bits: u8 = parts[1]
            .strip_prefix("int")
            .unwrap_or(parts[1])
            .parse()
            .with_context(|| format!("bad bit width in `{spec}`"))?;
        let mut cfg = match mode {
            QuantMode::Qat => QuantConfig::qat(bits),
            QuantMode::Dq => QuantConfig::dq(bits),
            QuantMode::A2q => unreachable!(),
        };
        if parts.len() > 2 {
            cfg.backward = parse_backward(parts[2])?;
        } else {
            cfg.backward = backward;
        }
        if parts.len() > 3 {
            cfg.observer = parse_observer(parts[3])?;
        } else {
            cfg.observer = observer;
        }
        cfg
    };
    if let Some(p) = defaults.dq_pmin {
        cfg.dq.p_min = p;
    }
    if let Some(p) = defaults.dq_pmax {
        cfg.dq.p_max = p;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    Ok(cfg)
}

/// Everything resolved: dataset, split, model spec, optimizer, seeds.
pub struct Resolved {
    pub common: CommonSection,
    pub context: SweepContext,
}

/// Defaults follow the experiment plan: 200 epochs for node classification
/// and link prediction, 100 for graph classification; Adam at lr 0.01 with
/// weight decay 5e-4 on the node task only.
pub fn default_epochs(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Gcn2 => 200,
        ModelKind::Gin5 => 100,
        ModelKind::Gae => 200,
    }
}

pub fn default_weight_decay(kind: ModelKind) -> f32 {
    match kind {
        ModelKind::Gcn2 => 5e-4,
        _ => 0.0,
    }
}

pub fn default_split(kind: ModelKind) -> (f64, f64, f64) {
    match kind {
        ModelKind::Gae => (0.8, 0.1, 0.1),
        _ => (0.6, 0.2, 0.2),
    }
}

pub fn default_model_for(dataset: &str) -> &'static str {
    if dataset.contains("proteins") || dataset.contains("bbbp") {
        "gin5"
    } else {
        "gcn2"
    }
}

pub fn resolve(common: &CommonSection) -> Result<Resolved> {
    let dataset_name = common.dataset.clone().unwrap_or_else(|| "synth".into());
    let model_name = common
        .model
        .clone()
        .unwrap_or_else(|| default_model_for(&dataset_name).to_string());
    let kind = parse_model(&model_name)?;
    let dataset = datasets::resolve(&dataset_name, kind)?;

    let mut spec = match kind {
        ModelKind::Gcn2 => ModelSpec::gcn2(),
        ModelKind::Gin5 => ModelSpec::gin5(),
        ModelKind::Gae => ModelSpec::gae(),
    };
    if let Some(h) = common.hidden {
        spec.hidden_dim = h;
    }

    let optim = OptimConfig {
        lr: common.lr.unwrap_or(0.01),
        weight_decay: common.weight_decay.unwrap_or_else(|| default_weight_decay(kind)),
        max_epochs: common.epochs.unwrap_or_else(|| default_epochs(kind)),
        ..OptimConfig::default()
    };

    let split_seed = common.split_seed.unwrap_or(1);
    let split = make_splits(&dataset, default_split(kind), split_seed)?;

    let seed_base = common.seed_base.unwrap_or(1);
    let seeds: Vec<u64> = (0..common.seeds.unwrap_or(3) as u64)
        .map(|i| seed_base + i)
        .collect();

    let workers = common.workers.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get().saturating_sub(1).max(1))
            .unwrap_or(1)
    });

    Ok(Resolved {
        common: common.clone(),
        context: SweepContext {
            dataset,
            split,
            spec,
            optim,
            seeds,
            deterministic: common.deterministic.unwrap_or(false),
            repeats: common.repeats.unwrap_or(10),
            workers,
        },
    })
}

/// Default sparsity grid {0.0, 0.1, …, 0.9}.
pub fn default_sparsity_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}
