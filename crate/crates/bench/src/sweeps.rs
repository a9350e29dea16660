//! Experiment sweeps: sparsity grids, λ grids, and quantization
//! configurations, each producing aggregated benchmark records.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use gnncomp_core::ckpt::{compress_state, dense_checkpoint, size_ratio, to_bytes};
use gnncomp_core::data::{Dataset, Split};
use gnncomp_core::models::{
    eval_with_hooks, evaluate, GraphModel, ModelInstance, ModelSpec, NoQuant, QuantHooks, Subset,
    TaskData, Trained,
};
use gnncomp_core::nn::OptimConfig;
use gnncomp_core::prune::{
    apply_mask, fine_tune, fine_tune_config, magnitude_prune, PruneMethod,
};
use gnncomp_core::quant::{a2q_train, qat_train, QuantConfig, QuantMode};

use crate::measure::{measure_inference, RssMeter};
use crate::records::{
    emit, load_existing, mean_std, plan_resume, sort_records, BenchRecord, EmitFormat,
};

/// Shared sweep setup: everything a grid cell needs besides its knob.
pub struct SweepContext {
    pub dataset: Dataset,
    pub split: Split,
    pub spec: ModelSpec,
    pub optim: OptimConfig,
    /// Training seeds; record statistics aggregate over them.
    pub seeds: Vec<u64>,
    /// Skip wall-clock and RSS measurement for bit-reproducible output.
    pub deterministic: bool,
    /// Inference timing repeats (2 warm-ups are always added).
    pub repeats: usize,
    pub workers: usize,
}

impl SweepContext {
    pub fn worker_count(&self) -> usize {
        self.workers.max(1)
    }
}

/// Per-seed measurements collected for one grid cell.
struct CellOutcome {
    accs: Vec<f64>,
    train_secs: Vec<f64>,
    infer_means: Vec<f64>,
    payload_bytes: u64,
    total_bytes: u64,
    peak_rss: Option<u64>,
    failures: usize,
}

impl CellOutcome {
    fn new() -> Self {
        Self {
            accs: Vec::new(),
            train_secs: Vec::new(),
            infer_means: Vec::new(),
            payload_bytes: 0,
            total_bytes: 0,
            peak_rss: None,
            failures: 0,
        }
    }

    fn into_record(self, ctx: &SweepContext, method: &str, knob: &str) -> BenchRecord {
        let (acc_mean, acc_std) = mean_std(&self.accs);
        let (infer_mean, infer_std) = mean_std(&self.infer_means);
        let status = if self.failures == 0 {
            "ok".to_string()
        } else {
            format!("failed({}/{})", self.failures, self.failures + self.accs.len())
        };
        BenchRecord {
            task: ctx.dataset.task.as_str().to_string(),
            dataset: ctx.dataset.name.clone(),
            method: method.to_string(),
            knob: knob.to_string(),
            seed_count: self.accs.len(),
            acc_mean,
            acc_std,
            train_s: if self.train_secs.is_empty() {
                0.0
            } else {
                self.train_secs.iter().sum::<f64>() / self.train_secs.len() as f64
            },
            infer_mean: if infer_mean.is_nan() { 0.0 } else { infer_mean },
            infer_std,
            payload_bytes: self.payload_bytes,
            total_bytes: self.total_bytes,
            peak_rss: self.peak_rss,
            status,
        }
    }
}

/// Times a full evaluation pass over the test subset.
fn time_inference(
    ctx: &SweepContext,
    model: &mut ModelInstance,
    hooks: &mut dyn QuantHooks,
) -> f64 {
    if ctx.deterministic {
        return 0.0;
    }
    let data = TaskData::new(&ctx.dataset, &ctx.split).expect("task data");
    let (mean, _) = measure_inference(
        &mut || {
            let _ = eval_with_hooks(model, &ctx.dataset, &data, Subset::Test, hooks);
        },
        ctx.repeats,
    );
    mean
}

fn model_bytes(model: &ModelInstance) -> (u64, u64) {
    let state = model.state();
    let report = size_ratio(&state, &state).expect("state self-comparison");
    (report.payload_bytes, report.total_bytes)
}

/// Runs cells from a work queue on a bounded worker pool; results are merged
/// by cell index so completion order never matters.
fn run_cells<F>(ctx: &SweepContext, todo: &[usize], run: F) -> Vec<(usize, CellOutcome)>
where
    F: Fn(usize) -> CellOutcome + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CellOutcome)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..ctx.worker_count().min(todo.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= todo.len() {
                    break;
                }
                let cell = todo[k];
                let outcome = run(cell);
                results.lock().unwrap().push((cell, outcome));
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|(i, _)| *i);
    out
}

fn finalize(
    ctx: &SweepContext,
    method: &str,
    knobs: &[String],
    reused: Vec<BenchRecord>,
    computed: Vec<(usize, CellOutcome)>,
    out: Option<&Path>,
) -> Result<Vec<BenchRecord>> {
    let mut records = reused;
    for (cell, outcome) in computed {
        records.push(outcome.into_record(ctx, method, &knobs[cell]));
    }
    sort_records(&mut records);
    if let Some(path) = out {
        emit(&records, EmitFormat::Csv, path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(records)
}

fn wanted_keys(ctx: &SweepContext, method: &str, knobs: &[String]) -> Vec<(String, String, String, String)> {
    knobs
        .iter()
        .map(|k| {
            (
                ctx.dataset.task.as_str().to_string(),
                ctx.dataset.name.clone(),
                method.to_string(),
                k.clone(),
            )
        })
        .collect()
}

/// Sparsity-grid sweep: per cell, train base (cached per seed), prune,
/// optionally fine-tune, then measure accuracy, model size, and inference
/// time. Resumes from an existing CSV at `out`.
pub fn run_prune_sweep(
    ctx: &SweepContext,
    method: PruneMethod,
    finetune: bool,
    finetune_epochs: usize,
    sparsities: &[f64],
    out: Option<&Path>,
) -> Result<Vec<BenchRecord>> {
    let method_label = format!(
        "{}{}",
        method.as_str(),
        if finetune { "-ft" } else { "" }
    );
    let knobs: Vec<String> = sparsities.iter().map(|s| s.to_string()).collect();
    let wanted = wanted_keys(ctx, &method_label, &knobs);
    let (reused, todo) = plan_resume(
        out.map(load_existing).unwrap_or_default(),
        &wanted,
    );
    if todo.is_empty() {
        return finalize(ctx, &method_label, &knobs, reused, Vec::new(), out);
    }

    // base models are shared across grid cells: one training run per seed
    let mut base: BTreeMap<u64, Trained> = BTreeMap::new();
    for &seed in &ctx.seeds {
        let trained =
            gnncomp_core::models::train(&ctx.spec, &ctx.dataset, &ctx.split, &ctx.optim, seed)?;
        base.insert(seed, trained);
    }

    let computed = run_cells(ctx, &todo, |cell| {
        let s = sparsities[cell];
        let mut outcome = CellOutcome::new();
        let meter = (!ctx.deterministic).then(RssMeter::start);
        for (&seed, trained) in &base {
            let mut model = trained.model.clone();
            let mask = match magnitude_prune(model.params(), method, s) {
                Ok(m) => m,
                Err(_) => {
                    outcome.failures += 1;
                    continue;
                }
            };
            if apply_mask(&mut model, &mask).is_err() {
                outcome.failures += 1;
                continue;
            }
            let (acc, train_s, mut final_model) = if finetune {
                let ft_optim = fine_tune_config(&ctx.optim, finetune_epochs);
                match fine_tune(model, &ctx.spec, &ctx.dataset, &ctx.split, &ft_optim, seed) {
                    Ok(t) => (t.test_metric, trained.train_seconds + t.train_seconds, t.model),
                    Err(_) => {
                        outcome.failures += 1;
                        continue;
                    }
                }
            } else {
                let mut m = model;
                let acc = evaluate(&mut m, &ctx.dataset, &ctx.split, Subset::Test)
                    .expect("evaluation");
                (acc, trained.train_seconds, m)
            };
            outcome.accs.push(acc);
            outcome
                .train_secs
                .push(if ctx.deterministic { 0.0 } else { train_s });
            outcome
                .infer_means
                .push(time_inference(ctx, &mut final_model, &mut NoQuant));
            if outcome.payload_bytes == 0 {
                let base_state = trained.model.state();
                let pruned_state = final_model.state();
                if let Ok(report) = size_ratio(&base_state, &pruned_state) {
                    outcome.payload_bytes = report.payload_bytes;
                    outcome.total_bytes = report.total_bytes;
                }
            }
        }
        if let Some(m) = meter {
            outcome.peak_rss = m.stop().0;
        }
        outcome
    });
    finalize(ctx, &method_label, &knobs, reused, computed, out)
}

/// λ-grid sweep wrapping the regularization experiment with measurement.
pub fn run_reg_sweep(
    ctx: &SweepContext,
    lambdas: &[f64],
    out: Option<&Path>,
) -> Result<Vec<BenchRecord>> {
    let knobs: Vec<String> = lambdas.iter().map(|l| l.to_string()).collect();
    let wanted = wanted_keys(ctx, "l2reg", &knobs);
    let (reused, todo) = plan_resume(out.map(load_existing).unwrap_or_default(), &wanted);

    let computed = run_cells(ctx, &todo, |cell| {
        let lambda = lambdas[cell];
        let mut outcome = CellOutcome::new();
        let meter = (!ctx.deterministic).then(RssMeter::start);
        let optim = OptimConfig {
            weight_decay: lambda as f32,
            ..ctx.optim.clone()
        };
        for &seed in &ctx.seeds {
            match gnncomp_core::models::train(&ctx.spec, &ctx.dataset, &ctx.split, &optim, seed) {
                Ok(t) => {
                    outcome.accs.push(t.test_metric);
                    outcome
                        .train_secs
                        .push(if ctx.deterministic { 0.0 } else { t.train_seconds });
                    let mut model = t.model;
                    outcome
                        .infer_means
                        .push(time_inference(ctx, &mut model, &mut NoQuant));
                    if outcome.payload_bytes == 0 {
                        let (p, t) = model_bytes(&model);
                        outcome.payload_bytes = p;
                        outcome.total_bytes = t;
                    }
                }
                Err(_) => outcome.failures += 1, // divergent run recorded, sweep continues
            }
        }
        if let Some(m) = meter {
            outcome.peak_rss = m.stop().0;
        }
        outcome
    });
    finalize(ctx, "l2reg", &knobs, reused, computed, out)
}

/// Quantization-config sweep over {FP32, QAT, DQ} × bits × backward ×
/// observer plus A²Q. Payload bytes account b bits per quantized value.
pub fn run_quant_sweep(
    ctx: &SweepContext,
    configs: &[QuantConfig],
    out: Option<&Path>,
) -> Result<Vec<BenchRecord>> {
    let knobs: Vec<String> = configs
        .iter()
        .map(|c| if c.disabled() { "fp32".into() } else { c.label() })
        .collect();
    let wanted = wanted_keys(ctx, "quant", &knobs);
    let (reused, todo) = plan_resume(out.map(load_existing).unwrap_or_default(), &wanted);

    let computed = run_cells(ctx, &todo, |cell| {
        let cfg = &configs[cell];
        let mut outcome = CellOutcome::new();
        let meter = (!ctx.deterministic).then(RssMeter::start);
        for &seed in &ctx.seeds {
            let result = run_quant_cell(ctx, cfg, seed);
            match result {
                Ok((acc, train_s, payload, total, infer)) => {
                    outcome.accs.push(acc);
                    outcome
                        .train_secs
                        .push(if ctx.deterministic { 0.0 } else { train_s });
                    outcome.infer_means.push(infer);
                    if outcome.payload_bytes == 0 {
                        outcome.payload_bytes = payload;
                        outcome.total_bytes = total;
                    }
                }
                Err(_) => outcome.failures += 1,
            }
        }
        if let Some(m) = meter {
            outcome.peak_rss = m.stop().0;
        }
        outcome
    });
    finalize(ctx, "quant", &knobs, reused, computed, out)
}

/// Logical payload size at b bits per quantized value: weight tensors carry
/// their (possibly learned) bit width, everything else stays at 32 bits.
fn quant_payload_bytes(model: &ModelInstance, weight_bits: &dyn Fn(&str) -> u32) -> u64 {
    let mut bits_total = 0u64;
    for p in model.params() {
        let bits = if p.prunable { weight_bits(&p.name) } else { 32 };
        bits_total += p.tensor.len() as u64 * bits as u64;
    }
    bits_total.div_ceil(8)
}

fn run_quant_cell(
    ctx: &SweepContext,
    cfg: &QuantConfig,
    seed: u64,
) -> Result<(f64, f64, u64, u64, f64)> {
    if cfg.disabled() {
        let t = gnncomp_core::models::train(&ctx.spec, &ctx.dataset, &ctx.split, &ctx.optim, seed)?;
        let mut model = t.model;
        let infer = time_inference(ctx, &mut model, &mut NoQuant);
        let payload = quant_payload_bytes(&model, &|_| 32);
        let total = to_bytes(&dense_checkpoint(&model.state())).len() as u64;
        return Ok((t.test_metric, t.train_seconds, payload, total, infer));
    }
    if cfg.mode == QuantMode::A2q {
        let (t, bits, mut qctx) =
            a2q_train(&ctx.spec, &ctx.dataset, &ctx.split, cfg, &ctx.optim, seed)?;
        let bit_of = move |name: &str| -> u32 {
            bits.iter()
                .find(|(site, _)| site == name)
                .map(|&(_, b)| b as u32)
                .unwrap_or(32)
        };
        let mut model = t.model;
        let infer = time_inference(ctx, &mut model, &mut qctx);
        let payload = quant_payload_bytes(&model, &bit_of);
        let total = to_bytes(&compress_state(&model.state())).len() as u64;
        return Ok((t.test_metric, t.train_seconds, payload, total, infer));
    }
    let (t, mut qctx) = qat_train(&ctx.spec, &ctx.dataset, &ctx.split, cfg, &ctx.optim, seed)?;
    let mut model = t.model;
    let infer = time_inference(ctx, &mut model, &mut qctx);
    let payload = quant_payload_bytes(&model, &|_| cfg.bits as u32);
    let total = to_bytes(&dense_checkpoint(&model.state())).len() as u64;
    Ok((t.test_metric, t.train_seconds, payload, total, infer))
}
