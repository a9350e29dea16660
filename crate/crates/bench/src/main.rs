//! `gnncomp` — train, compress, and benchmark small graph neural networks.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gnncomp_core::ckpt;
use gnncomp_core::models::GraphModel;
use gnncomp_core::prune;
use gnncomp_core::quant::QuantConfig;

use gnncomp_bench::config::{
    self, default_sparsity_grid, load_file, parse_method, parse_quant_spec, CommonSection,
    FileConfig,
};
use gnncomp_bench::records::{self, EmitFormat};
use gnncomp_bench::sweeps;

#[derive(Parser)]
#[command(name = "gnncomp", version, about = "GNN compression toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct CommonFlags {
    /// TOML config; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// cora | proteins | bbbp | synth | synth-cora | synth-proteins | synth-bbbp
    #[arg(long)]
    dataset: Option<String>,
    /// gcn2 | gin5 | gae
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    weight_decay: Option<f32>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Zero out wall-clock and RSS columns for reproducible CSV bytes
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

impl CommonFlags {
    fn as_section(&self) -> CommonSection {
        CommonSection {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            seeds: self.seeds,
            seed_base: self.seed_base,
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            hidden: self.hidden,
            split_seed: None,
            deterministic: self.deterministic.then_some(true),
            repeats: self.repeats,
            workers: self.workers,
        }
    }

    /// Flags override TOML keys.
    fn merge_into(&self, base: &CommonSection) -> CommonSection {
        config::merge_common(base, &self.as_section())
    }

    fn file(&self) -> Result<FileConfig> {
        match &self.config {
            Some(path) => load_file(path),
            None => Ok(FileConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train baseline models and report accuracy
    Train {
        #[command(flatten)]
        common: CommonFlags,
        /// Write the trained model (first seed) as a sparse checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Magnitude-pruning sweep over a sparsity grid
    Prune {
        #[command(flatten)]
        common: CommonFlags,
        /// global | layerwise
        #[arg(long)]
        method: Option<String>,
        /// Single sparsity instead of the full grid
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        finetune: bool,
        #[arg(long)]
        finetune_epochs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a markdown table
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Quantization-aware training sweep
    Quant {
        #[command(flatten)]
        common: CommonFlags,
        /// qat | dq | a2q (single-config run; TOML [quant].configs for sweeps)
        #[arg(long)]
        quant: Option<String>,
        #[arg(long)]
        bits: Option<u8>,
        /// ste | gc
        #[arg(long)]
        backward: Option<String>,
        /// abs | mom | per
        #[arg(long)]
        observer: Option<String>,
        #[arg(long)]
        dq_pmin: Option<f32>,
        #[arg(long)]
        dq_pmax: Option<f32>,
        #[arg(long)]
        a2q_lambda: Option<f32>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// L2-regularization rate sweep
    Reg {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
    },
    /// Lottery-ticket experiment (iterative magnitude pruning + rewinding)
    Ltq {
        #[command(flatten)]
        common: CommonFlags,
        /// Final sparsity
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Re-encode a checkpoint with sparse tensor storage
    Compress { input: PathBuf, output: PathBuf },
    /// Expand a checkpoint to dense tensor storage
    Decompress { input: PathBuf, output: PathBuf },
    /// Size ratios between a base and a pruned checkpoint
    Ratio { base: PathBuf, pruned: PathBuf },
    /// Run every sweep section present in a TOML config
    Bench {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train { common, out } => cmd_train(common, out),
        Cmd::Prune {
            common,
            method,
            sparsity,
            finetune,
            finetune_epochs,
            out,
            markdown,
        } => cmd_prune(common, method, sparsity, finetune, finetune_epochs, out, markdown),
        Cmd::Quant {
            common,
            quant,
            bits,
            backward,
            observer,
            dq_pmin,
            dq_pmax,
            a2q_lambda,
            out,
            markdown,
        } => cmd_quant(
            common, quant, bits, backward, observer, dq_pmin, dq_pmax, a2q_lambda, out, markdown,
        ),
        Cmd::Reg { common, out, markdown } => cmd_reg(common, out, markdown),
        Cmd::Ltq {
            common,
            sparsity,
            rounds,
        } => cmd_ltq(common, sparsity, rounds),
        Cmd::Compress { input, output } => cmd_compress(&input, &output),
        Cmd::Decompress { input, output } => cmd_decompress(&input, &output),
        Cmd::Ratio { base, pruned } => cmd_ratio(&base, &pruned),
        Cmd::Bench { common, out_dir } => cmd_bench(common, out_dir),
    }
}

fn print_records(records: &[records::BenchRecord]) {
    print!("{}", records::to_markdown(records));
}

fn cmd_train(common: CommonFlags, out: Option<PathBuf>) -> Result<()> {
    let file = common.file()?;
    let resolved = config::resolve(&common.merge_into(&file.common))?;
    let ctx = &resolved.context;
    let mut accs = Vec::new();
    let mut first: Option<gnncomp_core::models::Trained> = None;
    for &seed in &ctx.seeds {
        let t = gnncomp_core::models::train(&ctx.spec, &ctx.dataset, &ctx.split, &ctx.optim, seed)?;
        println!(
            "seed {seed}: best val {:.4}, test {:.4} ({:.1}s)",
            t.best_val, t.test_metric, t.train_seconds
        );
        accs.push(t.test_metric);
        if first.is_none() {
            first = Some(t);
        }
    }
    let (mean, std) = records::mean_std(&accs);
    println!(
        "{} on {}: test accuracy {:.4} ± {:.4} over {} seeds",
        ctx.spec.kind.as_str(),
        ctx.dataset.name,
        mean,
        std,
        accs.len()
    );
    if let Some(path) = out {
        let trained = first.expect("at least one seed");
        let mut state = trained.model.state();
        state.metadata.insert("model".into(), ctx.spec.kind.as_str().into());
        state.metadata.insert("dataset".into(), ctx.dataset.name.clone());
        state.metadata.insert("epoch".into(), ctx.optim.max_epochs.to_string());
        state.metadata.insert("accuracy".into(), format!("{:.6}", trained.test_metric));
        ckpt::write_file(&ckpt::compress_state(&state), &path)?;
        println!("checkpoint written to {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_prune(
    common: CommonFlags,
    method: Option<String>,
    sparsity: Option<f64>,
    finetune: bool,
    finetune_epochs: Option<usize>,
    out: Option<PathBuf>,
    markdown: Option<PathBuf>,
) -> Result<()> {
    let file = common.file()?;
    let section = file.prune.clone().unwrap_or_default();
    let resolved = config::resolve(&common.merge_into(&file.common))?;
    let method = parse_method(
        method
            .or(section.method)
            .unwrap_or_else(|| "global".into())
            .as_str(),
    )?;
    let finetune = finetune || section.finetune.unwrap_or(false);
    let ft_epochs = finetune_epochs.or(section.finetune_epochs).unwrap_or(50);
    let grid = match sparsity {
        Some(s) => vec![s],
        None => section.sparsities.unwrap_or_else(default_sparsity_grid),
    };
    let out = out.or(section.out);
    let recs = sweeps::run_prune_sweep(
        &resolved.context,
        method,
        finetune,
        ft_epochs,
        &grid,
        out.as_deref(),
    )?;
    print_records(&recs);
    if let Some(md) = markdown {
        records::emit(&recs, EmitFormat::Markdown, &md)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_quant(
    common: CommonFlags,
    quant: Option<String>,
    bits: Option<u8>,
    backward: Option<String>,
    observer: Option<String>,
    dq_pmin: Option<f32>,
    dq_pmax: Option<f32>,
    a2q_lambda: Option<f32>,
    out: Option<PathBuf>,
    markdown: Option<PathBuf>,
) -> Result<()> {
    let file = common.file()?;
    let mut section = file.quant.clone().unwrap_or_default();
    // flags override TOML keys
    if backward.is_some() {
        section.backward = backward;
    }
    if observer.is_some() {
        section.observer = observer;
    }
    if dq_pmin.is_some() {
        section.dq_pmin = dq_pmin;
    }
    if dq_pmax.is_some() {
        section.dq_pmax = dq_pmax;
    }
    if a2q_lambda.is_some() {
        section.a2q_lambda = a2q_lambda;
    }
    let mut common_section = common.merge_into(&file.common);
    if common_section.dataset.is_none() {
        common_section.dataset = Some("synth-proteins".into());
    }
    if common_section.model.is_none() {
        common_section.model = Some("gin5".into());
    }
    let resolved = config::resolve(&common_section)?;

    let configs: Vec<QuantConfig> = match &quant {
        Some(mode) => {
            let label = match mode.as_str() {
                "a2q" => "a2q".to_string(),
                m => format!("{m}-int{}", bits.or(section.bits).unwrap_or(8)),
            };
            vec![parse_quant_spec(&label, &section)?]
        }
        None => {
            let labels = section.configs.clone().unwrap_or_else(|| {
                vec![
                    "fp32".into(),
                    "qat-int4".into(),
                    "qat-int8".into(),
                    "dq-int4".into(),
                    "dq-int8".into(),
                    "a2q".into(),
                ]
            });
            labels
                .iter()
                .map(|l| parse_quant_spec(l, &section))
                .collect::<Result<_>>()?
        }
    };
    let out = out.or(section.out);
    let recs = sweeps::run_quant_sweep(&resolved.context, &configs, out.as_deref())?;
    print_records(&recs);
    if let Some(md) = markdown {
        records::emit(&recs, EmitFormat::Markdown, &md)?;
    }
    Ok(())
}

fn cmd_reg(common: CommonFlags, out: Option<PathBuf>, markdown: Option<PathBuf>) -> Result<()> {
    let file = common.file()?;
    let section = file.reg.clone().unwrap_or_default();
    let resolved = config::resolve(&common.merge_into(&file.common))?;
    let lambdas = section
        .lambdas
        .unwrap_or_else(prune::default_lambda_grid);
    let out = out.or(section.out);
    let recs = sweeps::run_reg_sweep(&resolved.context, &lambdas, out.as_deref())?;
    print_records(&recs);
    if let Some(md) = markdown {
        records::emit(&recs, EmitFormat::Markdown, &md)?;
    }
    Ok(())
}

fn cmd_ltq(common: CommonFlags, sparsity: Option<f64>, rounds: Option<usize>) -> Result<()> {
    let file = common.file()?;
    let section = file.ltq.clone().unwrap_or_default();
    let resolved = config::resolve(&common.merge_into(&file.common))?;
    let ctx = &resolved.context;
    let s_final = sparsity.or(section.sparsity).unwrap_or(0.9);
    let rounds = rounds.or(section.rounds).unwrap_or(5);
    let seed = ctx.seeds.first().copied().unwrap_or(1);
    let outcome = prune::lottery_ticket_experiment(
        &ctx.spec,
        &ctx.dataset,
        &ctx.split,
        &ctx.optim,
        s_final,
        rounds,
        seed,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    println!(
        "lottery ticket on {} (s_final={s_final}, rounds={rounds}, r/round={:.4}):",
        ctx.dataset.name, outcome.per_round_rate
    );
    println!("  winning ticket accuracy: {:.4}", outcome.winning_ticket_acc);
    println!("  prune+fine-tune accuracy: {:.4}", outcome.finetune_acc);
    println!("  dense accuracy:           {:.4}", outcome.dense_acc);
    Ok(())
}

fn cmd_compress(input: &std::path::Path, output: &std::path::Path) -> Result<()> {
    let ckpt_in = ckpt::read_file(input)?;
    let state = ckpt::decompress_state(&ckpt_in)?;
    let compressed = ckpt::compress_state(&state);
    ckpt::write_file(&compressed, output)?;
    let before = std::fs::metadata(input)?.len();
    let after = std::fs::metadata(output)?.len();
    println!("{} bytes -> {} bytes", before, after);
    Ok(())
}

fn cmd_decompress(input: &std::path::Path, output: &std::path::Path) -> Result<()> {
    let ckpt_in = ckpt::read_file(input)?;
    let state = ckpt::decompress_state(&ckpt_in)?;
    ckpt::write_file(&ckpt::dense_checkpoint(&state), output)?;
    println!("expanded to {}", output.display());
    Ok(())
}

fn cmd_ratio(base: &std::path::Path, pruned: &std::path::Path) -> Result<()> {
    let base_state = ckpt::decompress_state(&ckpt::read_file(base)?)?;
    let pruned_state = ckpt::decompress_state(&ckpt::read_file(pruned)?)?;
    let report = ckpt::size_ratio(&base_state, &pruned_state)?;
    println!("dense bytes:   {}", report.dense_bytes);
    println!("payload bytes: {}", report.payload_bytes);
    println!("total bytes:   {}", report.total_bytes);
    println!("payload ratio: {:.4}", report.payload_ratio);
    println!("total ratio:   {:.4}", report.total_ratio);
    Ok(())
}

fn cmd_bench(common: CommonFlags, out_dir: Option<PathBuf>) -> Result<()> {
    let Some(path) = &common.config else {
        bail!("bench requires --config <toml>");
    };
    let file = load_file(path)?;
    let out_dir = out_dir.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let base = common.merge_into(&file.common);

    if let Some(section) = &file.prune {
        let resolved = config::resolve(&base)?;
        let method = parse_method(section.method.as_deref().unwrap_or("global"))?;
        let grid = section.sparsities.clone().unwrap_or_else(default_sparsity_grid);
        let out = section
            .out
            .clone()
            .unwrap_or_else(|| out_dir.join("prune.csv"));
        let recs = sweeps::run_prune_sweep(
            &resolved.context,
            method,
            section.finetune.unwrap_or(false),
            section.finetune_epochs.unwrap_or(50),
            &grid,
            Some(&out),
        )?;
        println!("# prune sweep -> {}", out.display());
        print_records(&recs);
    }
    if let Some(section) = &file.reg {
        let resolved = config::resolve(&base)?;
        let lambdas = section
            .lambdas
            .clone()
            .unwrap_or_else(prune::default_lambda_grid);
        let out = section.out.clone().unwrap_or_else(|| out_dir.join("reg.csv"));
        let recs = sweeps::run_reg_sweep(&resolved.context, &lambdas, Some(&out))?;
        println!("# regularization sweep -> {}", out.display());
        print_records(&recs);
    }
    if let Some(section) = &file.quant {
        let mut quant_common = base.clone();
        if quant_common.model.is_none() {
            quant_common.model = Some("gin5".into());
        }
        if quant_common.dataset.is_none() {
            quant_common.dataset = Some("synth-proteins".into());
        }
        let resolved = config::resolve(&quant_common)?;
        let labels = section.configs.clone().unwrap_or_else(|| {
            vec!["fp32".into(), "qat-int8".into(), "dq-int8".into(), "a2q".into()]
        });
        let configs: Vec<QuantConfig> = labels
            .iter()
            .map(|l| parse_quant_spec(l, section))
            .collect::<Result<_>>()?;
        let out = section
            .out
            .clone()
            .unwrap_or_else(|| out_dir.join("quant.csv"));
        let recs = sweeps::run_quant_sweep(&resolved.context, &configs, Some(&out))?;
        println!("# quantization sweep -> {}", out.display());
        print_records(&recs);
    }
    if let Some(section) = &file.ltq {
        let resolved = config::resolve(&base)?;
        let ctx = &resolved.context;
        let outcome = prune::lottery_ticket_experiment(
            &ctx.spec,
            &ctx.dataset,
            &ctx.split,
            &ctx.optim,
            section.sparsity.unwrap_or(0.9),
            section.rounds.unwrap_or(5),
            ctx.seeds.first().copied().unwrap_or(1),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        println!(
            "# lottery ticket: winning {:.4}, finetuned {:.4}, dense {:.4}",
            outcome.winning_ticket_acc, outcome.finetune_acc, outcome.dense_acc
        );
    }
    Ok(())
}
