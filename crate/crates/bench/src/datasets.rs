//! Dataset name resolution: real datasets under `GNNCOMP_DATA_DIR`, or the
//! synthetic stand-ins generated in the real file formats.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gnncomp_core::data::synth::{
    synth_bbbp, synth_cora, synth_proteins, BbbpSynthConfig, CoraSynthConfig, ProteinsSynthConfig,
};
use gnncomp_core::data::{load_bbbp, load_cora, load_tu, Dataset, Task};
use gnncomp_core::models::ModelKind;

pub const DATA_DIR_ENV: &str = "GNNCOMP_DATA_DIR";

fn data_dir() -> Result<PathBuf> {
    std::env::var(DATA_DIR_ENV)
        .map(PathBuf::from)
        .with_context(|| format!("set {DATA_DIR_ENV} to the dataset root directory"))
}

/// Default generator seed: keeps synthetic datasets identical across runs.
const SYNTH_SEED: u64 = 20240;

/// Maps a dataset name to a loaded dataset. `synth` picks the synthetic
/// family matching the model's task. GAE re-tasks single-graph datasets as
/// link prediction.
pub fn resolve(name: &str, model: ModelKind) -> Result<Dataset> {
    let name = name.to_lowercase();
    let resolved = match name.as_str() {
        "synth" => match model {
            ModelKind::Gin5 => "synth-proteins",
            _ => "synth-cora",
        },
        other => other,
    };
    let mut dataset = match resolved {
        "cora" => {
            let dir = data_dir()?;
            let content = dir.join("cora").join("cora.content");
            let cites = dir.join("cora").join("cora.cites");
            let (ds, stats) = load_cora(&content, &cites)
                .with_context(|| format!("loading cora from {}", dir.display()))?;
            if stats.skipped > 0 {
                eprintln!("cora: skipped {} citation rows", stats.skipped);
            }
            ds
        }
        "proteins" => {
            let dir = data_dir()?.join("PROTEINS");
            load_tu(&dir).with_context(|| format!("loading TU dataset from {}", dir.display()))?
        }
        "bbbp" => {
            let dir = data_dir()?;
            let path = ["BBBP.csv", "bbbp.csv"]
                .iter()
                .map(|n| dir.join(n))
                .find(|p| p.exists())
                .with_context(|| format!("no BBBP.csv under {}", dir.display()))?;
            let (ds, stats) = load_bbbp(&path)?;
            if stats.skipped > 0 {
                eprintln!("bbbp: skipped {} molecules outside the SMILES subset", stats.skipped);
            }
            ds
        }
        "synth-cora" => synth_cora(&CoraSynthConfig::default(), SYNTH_SEED)?,
        "synth-proteins" => synth_proteins(&ProteinsSynthConfig::default(), SYNTH_SEED)?,
        "synth-bbbp" => synth_bbbp(&BbbpSynthConfig::default(), SYNTH_SEED)?,
        other => bail!("unknown dataset `{other}` (expected cora|proteins|bbbp|synth[-...])"),
    };
    if model == ModelKind::Gae {
        if dataset.graphs.len() != 1 {
            bail!("link prediction needs a single-graph dataset, got {resolved}");
        }
        dataset.task = Task::LinkPrediction;
        dataset.name = format!("{}-link", dataset.name);
    }
    Ok(dataset)
}
