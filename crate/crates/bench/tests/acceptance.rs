//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Runs entirely on the synthetic datasets (generated in the real on-disk
//! formats) at desk scale; every tolerance is pinned in code. Hardware
//! findings (energy, CPU%, absolute memory and wall-clock figures) are
//! explicitly not targets — see criterion 9.

#![allow(clippy::needless_range_loop)] // f64 reference loops index on purpose

use std::sync::Arc;

use gnncomp_bench::records::BenchRecord;
use gnncomp_bench::sweeps::{run_prune_sweep, run_quant_sweep, run_reg_sweep};
use gnncomp_bench::SweepContext;
use gnncomp_core::ckpt::{compress_state, decompress_state, from_bytes, size_ratio, to_bytes};
use gnncomp_core::data::synth::{synth_cora, synth_proteins, CoraSynthConfig, ProteinsSynthConfig};
use gnncomp_core::data::{make_splits, Dataset, Split};
use gnncomp_core::models::{
    build_model, gcn_norm, GraphModel, ModelInstance, ModelSpec, NoQuant, Subset,
};
use gnncomp_core::nn::{ModelState, OptimConfig, Tape, Tensor};
use gnncomp_core::prune::{apply_mask, global_magnitude_prune, layerwise_magnitude_prune, PruneMethod};
use gnncomp_core::quant::{
    a2q_train, compute_qparams, degree_quant_protect, fake_quant_ref, sample_mask,
    BackwardMode, QuantConfig, QuantCtx,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn criterion(n: u32, desc: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {verdict} - {desc} ({detail})");
    assert!(pass, "acceptance criterion {n} failed: {desc} ({detail})");
}

fn cora_dataset() -> (Dataset, Split) {
    let ds = synth_cora(&CoraSynthConfig::default(), 20240).unwrap();
    let split = make_splits(&ds, (0.6, 0.2, 0.2), 1).unwrap();
    (ds, split)
}

fn proteins_dataset() -> (Dataset, Split) {
    let ds = synth_proteins(&ProteinsSynthConfig::default(), 20240).unwrap();
    let split = make_splits(&ds, (0.6, 0.2, 0.2), 1).unwrap();
    (ds, split)
}

fn link_dataset() -> (Dataset, Split) {
    let mut ds = synth_cora(&CoraSynthConfig::default(), 20240).unwrap();
    ds.task = gnncomp_core::data::Task::LinkPrediction;
    ds.name = "synth-cora-link".into();
    let split = make_splits(&ds, (0.8, 0.1, 0.1), 1).unwrap();
    (ds, split)
}

fn mean_test_acc(
    spec: &ModelSpec,
    ds: &Dataset,
    split: &Split,
    optim: &OptimConfig,
    seeds: &[u64],
) -> f64 {
    let accs: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            gnncomp_core::models::train(spec, ds, split, optim, s)
                .unwrap()
                .test_metric
        })
        .collect();
    accs.iter().sum::<f64>() / accs.len() as f64
}

fn context(ds: Dataset, split: Split, spec: ModelSpec, optim: OptimConfig) -> SweepContext {
    SweepContext {
        dataset: ds,
        split,
        spec,
        optim,
        seeds: vec![1, 2, 3],
        deterministic: true,
        repeats: 1,
        workers: 1,
    }
}

fn cell<'a>(records: &'a [BenchRecord], knob: &str) -> &'a BenchRecord {
    records
        .iter()
        .find(|r| r.knob == knob)
        .unwrap_or_else(|| panic!("missing cell {knob}"))
}

// ---- criterion 1: baseline accuracy ------------------------------------------

#[test]
fn acceptance_1_baseline_accuracy() {
    let seeds = [1u64, 2, 3];

    let (ds, split) = cora_dataset();
    let gcn = mean_test_acc(
        &ModelSpec::gcn2(),
        &ds,
        &split,
        &OptimConfig::default().with_weight_decay(5e-4).with_epochs(200),
        &seeds,
    );

    let (pds, psplit) = proteins_dataset();
    let gin = mean_test_acc(
        &ModelSpec::gin5(),
        &pds,
        &psplit,
        &OptimConfig::default().with_epochs(100),
        &seeds,
    );

    let (lds, lsplit) = link_dataset();
    let gae = mean_test_acc(
        &ModelSpec::gae(),
        &lds,
        &lsplit,
        &OptimConfig::default().with_epochs(200),
        &seeds,
    );

    criterion(
        1,
        "baseline accuracy: GCN >= 0.70, GIN >= 0.65, GAE link >= 0.85",
        gcn >= 0.70 && gin >= 0.65 && gae >= 0.85,
        format!("gcn {gcn:.4}, gin {gin:.4}, gae {gae:.4}"),
    );
}

// ---- criterion 2: pruning robustness ------------------------------------------

#[test]
fn acceptance_2_pruning_robustness() {
    // Wider GCN than the Table-3 default: at 90% layerwise sparsity the
    // output layer must retain a few weights per class for fine-tuning to
    // have anything to recover with (the original models are all >= 34k
    // parameters; hidden 64 restores that per-class headroom at desk scale).
    let spec = ModelSpec {
        hidden_dim: 64,
        ..ModelSpec::gcn2()
    };
    let (ds, split) = cora_dataset();
    let optim = OptimConfig::default().with_weight_decay(5e-4).with_epochs(200);
    let ctx = context(ds, split, spec, optim);

    let grid: Vec<f64> = (0..=7).map(|i| i as f64 / 10.0).collect();
    let global_ft = run_prune_sweep(&ctx, PruneMethod::Global, true, 100, &grid, None).unwrap();
    let base = cell(&global_ft, "0").acc_mean;
    let mut worst_drop: f64 = 0.0;
    for s in 1..=7 {
        let acc = cell(&global_ft, &format!("0.{s}")).acc_mean;
        worst_drop = worst_drop.max(base - acc);
    }

    let lw = run_prune_sweep(&ctx, PruneMethod::LayerWise, false, 0, &[0.0, 0.9], None).unwrap();
    let lw_base = cell(&lw, "0").acc_mean;
    let lw_raw = cell(&lw, "0.9").acc_mean;
    let raw_loss = lw_base - lw_raw;

    let lw_ft = run_prune_sweep(&ctx, PruneMethod::LayerWise, true, 100, &[0.9], None).unwrap();
    let recovered = cell(&lw_ft, "0.9").acc_mean;
    let recovery_gap = lw_base - recovered;

    criterion(
        2,
        "global+ft within 0.03 for s<=0.7; layerwise@0.9 loses >=0.05 raw, recovers to within 0.04",
        worst_drop <= 0.03 && raw_loss >= 0.05 && recovery_gap <= 0.04,
        format!(
            "worst global-ft drop {worst_drop:.4}, raw layerwise loss {raw_loss:.4}, recovery gap {recovery_gap:.4}"
        ),
    );
}

// ---- criterion 3: compression ratios -------------------------------------------

#[test]
fn acceptance_3_compression_ratios() {
    // exact identity: payload_ratio = total_params / nonzero_params
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut identity_ok = true;
    for _ in 0..50 {
        let n = rng.random_range(1..400usize);
        let data: Vec<f32> = (0..n)
            .map(|_| {
                if rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        let nonzero = data.iter().filter(|v| **v != 0.0).count();
        if nonzero == 0 {
            continue;
        }
        let mut state = ModelState::new();
        state.insert("w", Tensor::new(vec![n], data).unwrap()).unwrap();
        let r = size_ratio(&state, &state).unwrap();
        identity_ok &= r.payload_ratio == n as f64 / nonzero as f64;
    }

    // GCN2-scale model, global s=0.9: ratio lands in the reported spread
    let (ds, split) = cora_dataset();
    let optim = OptimConfig::default().with_weight_decay(5e-4).with_epochs(100);
    let trained =
        gnncomp_core::models::train(&ModelSpec::gcn2(), &ds, &split, &optim, 1).unwrap();
    let base_state = trained.model.state();
    let mut model = trained.model;
    let mask = global_magnitude_prune(model.params(), 0.9).unwrap();
    apply_mask(&mut model, &mask).unwrap();
    let report = size_ratio(&base_state, &model.state()).unwrap();
    let in_band = (7.5..=10.0).contains(&report.payload_ratio);

    criterion(
        3,
        "payload_ratio identity exact; s=0.9 GCN2 ratio in [7.5, 10.0]",
        identity_ok && in_band,
        format!("identity {identity_ok}, ratio {:.3}", report.payload_ratio),
    );
}

// ---- criterion 4: checkpoint losslessness ---------------------------------------

#[test]
fn acceptance_4_checkpoint_losslessness() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut all_ok = true;
    for case in 0..1000 {
        let mut state = ModelState::new();
        for t in 0..rng.random_range(1..=4usize) {
            let len = rng.random_range(1..=64usize);
            let zero_p = rng.random_range(0.0..1.0);
            let data: Vec<f32> = (0..len)
                .map(|_| {
                    if rng.random_bool(zero_p) {
                        0.0
                    } else {
                        match rng.random_range(0..16) {
                            0 => -0.0,
                            1 => f32::NAN,
                            _ => rng.random_range(-100.0..100.0),
                        }
                    }
                })
                .collect();
            state
                .insert(format!("t{t}"), Tensor::new(vec![len], data).unwrap())
                .unwrap();
        }
        // compress -> write -> read -> decompress
        let path = dir.path().join("fuzz.smsc");
        gnncomp_core::ckpt::write_file(&compress_state(&state), &path).unwrap();
        let back = decompress_state(&gnncomp_core::ckpt::read_file(&path).unwrap()).unwrap();
        let bitwise = state.iter().zip(back.iter()).all(|((an, at), (bn, bt))| {
            an == bn
                && at
                    .data()
                    .iter()
                    .zip(bt.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        });
        if !bitwise {
            all_ok = false;
            eprintln!("case {case} failed");
            break;
        }
    }

    // golden bytes pinned for format version 1
    let mut state = ModelState::new();
    state
        .insert("w", Tensor::new(vec![4], vec![0.0, 3.0, 0.0, 5.0]).unwrap())
        .unwrap();
    let bytes = to_bytes(&compress_state(&state));
    let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
    let golden = "534d53430100000000000100000001007701010400000000000000\
                  01000000000000000a0200000000000000000040400000a040";
    let golden_ok = hex == golden.replace(char::is_whitespace, "") && from_bytes(&bytes).is_ok();

    criterion(
        4,
        "1000-case compress/write/read/decompress fuzz bitwise identical; golden bytes stable",
        all_ok && golden_ok,
        format!("fuzz {all_ok}, golden {golden_ok}"),
    );
}

// ---- criterion 5: regularization collapse ----------------------------------------

#[test]
fn acceptance_5_regularization_collapse() {
    let (ds, split) = cora_dataset();
    let ctx = context(
        ds,
        split,
        ModelSpec::gcn2(),
        OptimConfig::default().with_epochs(200),
    );
    let lambdas = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e2];
    let recs = run_reg_sweep(&ctx, &lambdas, None).unwrap();

    let small: Vec<f64> = [0.0, 1e-6, 1e-5, 1e-4, 1e-3]
        .iter()
        .map(|l| cell(&recs, &l.to_string()).acc_mean)
        .collect();
    let band = small.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - small.iter().cloned().fold(f64::INFINITY, f64::min);
    let collapse = cell(&recs, "0.0001").acc_mean - cell(&recs, "100").acc_mean;

    criterion(
        5,
        "acc(1e-4) - acc(1e2) >= 0.30 and small-lambda band <= 0.05",
        collapse >= 0.30 && band <= 0.05,
        format!("collapse {collapse:.4}, band {band:.4}"),
    );
}

// ---- criterion 6: quantization properties ----------------------------------------

#[test]
fn acceptance_6_quantization_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);

    // idempotence, exact, over 1e5 samples across bit widths and schemes
    let mut idempotent = true;
    let mut error_bound = true;
    for _ in 0..100_000 {
        let bits = if rng.random_bool(0.5) { 4 } else { 8 };
        let sym = rng.random_bool(0.5);
        let lo = rng.random_range(-2.0..0.0f32);
        let hi = rng.random_range(0.1..2.0f32);
        let qp = compute_qparams((lo, hi), bits, sym);
        let x: f32 = rng.random_range(lo..hi);
        let (q1, sat) = fake_quant_ref(x, &qp);
        let (q2, _) = fake_quant_ref(q1, &qp);
        idempotent &= q1.to_bits() == q2.to_bits();
        if !sat {
            // scale/2 bound, with one f32 ulp of slack for the final product
            error_bound &= (q1 - x).abs() <= qp.scale * 0.5000005;
        }
    }

    // GC backward zero-pattern equals the forward saturation pattern
    let mut tape = Tape::new();
    let data: Vec<f32> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
    let qp = compute_qparams((-1.0, 1.0), 4, true);
    let x = tape.leaf(Tensor::new(vec![256], data.clone()).unwrap());
    let q = tape.fake_quant(x, qp, BackwardMode::Gc);
    let s = tape.sum(q);
    let grads = tape.backward(s).unwrap();
    let gx = grads[x.index()].as_deref().unwrap();
    let gc_pattern = data
        .iter()
        .zip(gx)
        .all(|(&v, &g)| (g == 0.0) == fake_quant_ref(v, &qp).1);

    // DQ degenerate configs against FP32 / plain QAT on one train-mode forward
    let (ds, _) = cora_dataset();
    let spec = ModelSpec {
        dropout: 0.0,
        ..ModelSpec::gcn2()
    };
    let model = build_model(&spec, &ds, 5).unwrap();
    let forward = |ctx: &mut dyn gnncomp_core::models::QuantHooks,
                   degrees_consumed: bool,
                   seed: u64|
     -> Vec<f32> {
        let ModelInstance::Gcn(gcn) = &model else { unreachable!() };
        let g = ds.single_graph();
        let adj = gcn_norm(g);
        let x = Tensor::matrix(g.num_nodes, g.feature_dim, g.node_features.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if degrees_consumed {
            // mirror the protection-sampling rng draws DQ makes
            let probs = degree_quant_protect(&g.degrees(), 1.0, 1.0).unwrap();
            let _ = sample_mask(&probs, &mut rng);
        }
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let out = gcn.forward(&mut tape, xv, &adj, true, &mut rng, ctx);
        tape.value(out).data().to_vec()
    };
    let dq_forward = |cfg: QuantConfig, seed: u64| -> Vec<f32> {
        let mut ctx = QuantCtx::new(cfg, model.quant_sites()).unwrap();
        use gnncomp_core::models::TrainExtension;
        ctx.set_train_mode(true);
        let g = ds.single_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ctx.begin_step(&g.degrees(), &mut rng);
        forward(&mut ctx, false, seed)
    };

    let mut all_protected = QuantConfig::dq(8);
    all_protected.dq.p_min = 1.0;
    all_protected.dq.p_max = 1.0;
    all_protected.quantize_weights = false;
    let dq_fp32 = dq_forward(all_protected, 9);
    let fp32 = forward(&mut NoQuant, true, 9);
    let dq_matches_fp32 = dq_fp32
        .iter()
        .zip(&fp32)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let mut never_protected = QuantConfig::dq(8);
    never_protected.dq.p_min = 0.0;
    never_protected.dq.p_max = 0.0;
    let dq_none = dq_forward(never_protected, 10);
    let qat_out = dq_forward(QuantConfig::qat(8), 10); // qat ignores protection
    let dq_matches_qat = dq_none
        .iter()
        .zip(&qat_out)
        .all(|(a, b)| a.to_bits() == b.to_bits());

    // A²Q: bits confined to [2,8]; heavy memory penalty drives to the floor
    let (ds2, split2) = {
        let cfg = CoraSynthConfig {
            num_nodes: 42,
            feature_dim: 14,
            ..Default::default()
        };
        let ds = synth_cora(&cfg, 8).unwrap();
        let split = make_splits(&ds, (0.6, 0.2, 0.2), 8).unwrap();
        (ds, split)
    };
    let spec2 = ModelSpec {
        dropout: 0.0,
        ..ModelSpec::gcn2()
    };
    let optim = OptimConfig::default().with_lr(0.1).with_epochs(100);
    let (_, bits, _) =
        a2q_train(&spec2, &ds2, &split2, &QuantConfig::a2q(1e3), &optim, 3).unwrap();
    let bits_bounded = bits.iter().all(|&(_, b)| (2..=8).contains(&b));
    let bits_floored = bits.iter().all(|&(_, b)| b == 2);

    criterion(
        6,
        "fake-quant idempotent/bounded, GC pattern matches saturation, DQ degenerate configs bit-exact, A2Q bits clamped and floored",
        idempotent && error_bound && gc_pattern && dq_matches_fp32 && dq_matches_qat
            && bits_bounded && bits_floored,
        format!(
            "idem {idempotent}, bound {error_bound}, gc {gc_pattern}, dq/fp32 {dq_matches_fp32}, dq/qat {dq_matches_qat}, a2q [2,8] {bits_bounded} floor {bits_floored}"
        ),
    );
}

// ---- criterion 7: quantization accuracy -------------------------------------------

#[test]
fn acceptance_7_quantization_accuracy() {
    let (ds, split) = proteins_dataset();
    let ctx = context(
        ds,
        split,
        ModelSpec::gin5(),
        OptimConfig::default().with_epochs(60),
    );
    let configs = [
        QuantConfig::qat(32), // fp32 baseline
        QuantConfig::qat(8),
        QuantConfig::dq(4),
        QuantConfig::dq(8),
    ];
    let recs = run_quant_sweep(&ctx, &configs, None).unwrap();
    let fp32 = cell(&recs, "fp32").acc_mean;
    let qat8 = cell(&recs, "qat-int8-ste-abs").acc_mean;
    let dq4 = cell(&recs, "dq-int4-ste-abs").acc_mean;
    let dq8 = cell(&recs, "dq-int8-ste-abs").acc_mean;

    let qat_close = (fp32 - qat8).abs() <= 0.05;
    let dq_order = dq8 >= dq4 - 0.02;
    criterion(
        7,
        "QAT-INT8 within 0.05 of own FP32; DQ-INT8 >= DQ-INT4 - 0.02 (3 seeds)",
        qat_close && dq_order,
        format!("fp32 {fp32:.4}, qat8 {qat8:.4}, dq4 {dq4:.4}, dq8 {dq8:.4}"),
    );
}

// ---- criterion 8: oracle equivalence ------------------------------------------------

#[test]
fn acceptance_8_oracle_equivalence() {
    use gnncomp_core::nn::{Csr, Parameter};
    let mut rng = ChaCha8Rng::seed_from_u64(88);

    // (a) prune masks equal full-sort brute force on 200 random small states
    let mut masks_ok = true;
    for _ in 0..200 {
        let n_layers = rng.random_range(1..=4usize);
        let params: Vec<Parameter> = (0..n_layers)
            .map(|i| {
                let len = rng.random_range(1..=30usize);
                let data: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
                Parameter::new(format!("l{i}"), Tensor::new(vec![len], data).unwrap(), true)
            })
            .collect();
        let s = rng.random_range(0.0..0.99);
        // oracle: flat sort of (|w|, layer, index)
        let mut pool: Vec<(f32, usize, usize)> = params
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| {
                p.tensor
                    .data()
                    .iter()
                    .enumerate()
                    .map(move |(fi, &w)| (w.abs(), pi, fi))
                    .collect::<Vec<_>>()
            })
            .collect();
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = (s * pool.len() as f64).floor() as usize;
        let want: std::collections::BTreeSet<(usize, usize)> =
            pool[..k].iter().map(|&(_, p, f)| (p, f)).collect();
        let mask = global_magnitude_prune(&params, s).unwrap();
        let got: std::collections::BTreeSet<(usize, usize)> = params
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| {
                mask.get(&p.name)
                    .unwrap()
                    .iter()
                    .enumerate()
                    .filter(|(_, &keep)| !keep)
                    .map(move |(fi, _)| (pi, fi))
                    .collect::<Vec<_>>()
            })
            .collect();
        masks_ok &= want == got;
        // layerwise: per-layer floor counts
        let lw = layerwise_magnitude_prune(&params, s).unwrap();
        for p in &params {
            let pruned = lw.get(&p.name).unwrap().iter().filter(|&&k| !k).count();
            masks_ok &= pruned == (s * p.tensor.len() as f64).floor() as usize;
        }
    }

    // (b) spmm equals densified matmul
    let mut spmm_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(2..=8usize);
        let d = rng.random_range(1..=4usize);
        let mut triplets = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if rng.random_bool(0.3) {
                    triplets.push((r as u32, c as u32, rng.random_range(-1.0..1.0f32)));
                }
            }
        }
        let adj = Arc::new(Csr::from_triplets(n, n, triplets));
        let x: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::matrix(n, d, x.clone()).unwrap());
        let out = tape.spmm(&adj, xv);
        // densify + triple loop in f64
        let dense = adj.to_dense();
        for i in 0..n {
            for j in 0..d {
                let mut acc = 0.0f64;
                for p in 0..n {
                    acc += dense.at(i, p) as f64 * x[p * d + j] as f64;
                }
                spmm_ok &= (tape.value(out).at(i, j) as f64 - acc).abs() < 1e-5;
            }
        }
    }

    // (c) finite differences on every differentiable op via an f64 replica
    let fd_ok = fd_all_ops(&mut rng) && fd_full_gcn(&mut rng);

    criterion(
        8,
        "masks match brute-force sort on 200 states; spmm = densified matmul; FD gradients within 1e-3",
        masks_ok && spmm_ok && fd_ok,
        format!("masks {masks_ok}, spmm {spmm_ok}, fd {fd_ok}"),
    );
}

/// Generic FD harness: builds the op on a tape, reduces with random weights,
/// and compares against central differences of an f64 reference closure.
fn fd_match(
    analytic: &[f32],
    inputs: &[Vec<f64>],
    which: usize,
    f: &dyn Fn(&[Vec<f64>]) -> f64,
) -> bool {
    let h = 1e-3;
    let mut work = inputs.to_vec();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = work[which][i];
        work[which][i] = orig + h;
        let hi = f(&work);
        work[which][i] = orig - h;
        let lo = f(&work);
        work[which][i] = orig;
        let n = (hi - lo) / (2.0 * h);
        let diff = (a as f64 - n).abs();
        if diff > 1e-6 && diff > 1e-3 * (a as f64).abs().max(n.abs()) {
            eprintln!("fd mismatch at {i}: analytic {a} numeric {n}");
            return false;
        }
    }
    true
}

fn fd_all_ops(rng: &mut ChaCha8Rng) -> bool {
    use gnncomp_core::nn::BatchNormState;
    let n = 8usize;
    let d = 3usize;
    let rv = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f32> {
        (0..k)
            .map(|_| {
                let v: f32 = rng.random_range(0.05..1.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect()
    };
    let to64 = |v: &[f32]| -> Vec<f64> { v.iter().map(|&x| x as f64).collect() };
    let mut ok = true;

    // elementwise + activations + reductions via one composite per op
    type Build = Box<dyn Fn(&mut Tape, gnncomp_core::nn::Var) -> gnncomp_core::nn::Var>;
    type Ref = Box<dyn Fn(&[f64]) -> Vec<f64>>;
    let unary_cases: Vec<(&str, Build, Ref)> = vec![
        (
            "relu",
            Box::new(|t: &mut Tape, v| t.relu(v)),
            Box::new(|x: &[f64]| x.iter().map(|&v| v.max(0.0)).collect()),
        ),
        (
            "elu",
            Box::new(|t: &mut Tape, v| t.elu(v)),
            Box::new(|x: &[f64]| {
                x.iter()
                    .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
                    .collect()
            }),
        ),
        (
            "sigmoid",
            Box::new(|t: &mut Tape, v| t.sigmoid(v)),
            Box::new(|x: &[f64]| x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect()),
        ),
        (
            "scale",
            Box::new(|t: &mut Tape, v| t.scale(v, 1.7)),
            Box::new(|x: &[f64]| x.iter().map(|&v| 1.7 * v).collect()),
        ),
    ];
    for (name, build, reference) in &unary_cases {
        let x = rv(rng, n);
        let w = rv(rng, n);
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::new(vec![n], x.clone()).unwrap());
        let out = build(&mut tape, xv);
        let wv = tape.leaf(Tensor::new(vec![n], w.clone()).unwrap());
        let prod = tape.mul(out, wv);
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        let analytic = grads[xv.index()].clone().unwrap();
        let w64 = to64(&w);
        let f = move |xs: &[Vec<f64>]| -> f64 {
            reference(&xs[0]).iter().zip(&w64).map(|(a, b)| a * b).sum()
        };
        if !fd_match(&analytic, &[to64(&x)], 0, &f) {
            eprintln!("op {name} failed FD");
            ok = false;
        }
    }

    // matmul, add, add_bias, mul, select_rows, segment_sum, edge_dot,
    // batch_norm, losses: spot FD on each
    {
        let a = rv(rng, n * d);
        let b = rv(rng, d * 2);
        let w = rv(rng, n * 2);
        let mut tape = Tape::new();
        let av = tape.leaf(Tensor::matrix(n, d, a.clone()).unwrap());
        let bv = tape.leaf(Tensor::matrix(d, 2, b.clone()).unwrap());
        let out = tape.matmul(av, bv);
        let wv = tape.leaf(Tensor::matrix(n, 2, w.clone()).unwrap());
        let prod = tape.mul(out, wv);
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        let w64 = to64(&w);
        let f = |xs: &[Vec<f64>]| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..2 {
                    let mut o = 0.0;
                    for p in 0..d {
                        o += xs[0][i * d + p] * xs[1][p * 2 + j];
                    }
                    acc += o * w64[i * 2 + j];
                }
            }
            acc
        };
        let inputs = [to64(&a), to64(&b)];
        ok &= fd_match(&grads[av.index()].clone().unwrap(), &inputs, 0, &f);
        ok &= fd_match(&grads[bv.index()].clone().unwrap(), &inputs, 1, &f);
    }
    {
        // batch_norm in train mode
        let x = rv(rng, n * d);
        let gamma = rv(rng, d);
        let beta = rv(rng, d);
        let w = rv(rng, n * d);
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::matrix(n, d, x.clone()).unwrap());
        let gv = tape.leaf(Tensor::new(vec![d], gamma.clone()).unwrap());
        let bv = tape.leaf(Tensor::new(vec![d], beta.clone()).unwrap());
        let mut st = BatchNormState::new(d);
        let out = tape.batch_norm(xv, gv, bv, &mut st, true);
        let wv = tape.leaf(Tensor::matrix(n, d, w.clone()).unwrap());
        let prod = tape.mul(out, wv);
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        let w64 = to64(&w);
        let f = move |xs: &[Vec<f64>]| -> f64 {
            let (x, g, b) = (&xs[0], &xs[1], &xs[2]);
            let mut mean = vec![0.0; d];
            for r in 0..n {
                for j in 0..d {
                    mean[j] += x[r * d + j] / n as f64;
                }
            }
            let mut var = vec![0.0; d];
            for r in 0..n {
                for j in 0..d {
                    var[j] += (x[r * d + j] - mean[j]).powi(2) / n as f64;
                }
            }
            let mut acc = 0.0;
            for r in 0..n {
                for j in 0..d {
                    let xh = (x[r * d + j] - mean[j]) / (var[j] + 1e-5).sqrt();
                    acc += (g[j] * xh + b[j]) * w64[r * d + j];
                }
            }
            acc
        };
        let inputs = [to64(&x), to64(&gamma), to64(&beta)];
        ok &= fd_match(&grads[xv.index()].clone().unwrap(), &inputs, 0, &f);
        ok &= fd_match(&grads[gv.index()].clone().unwrap(), &inputs, 1, &f);
        ok &= fd_match(&grads[bv.index()].clone().unwrap(), &inputs, 2, &f);
    }
    {
        // softmax cross-entropy and bce
        let logits = rv(rng, n * d);
        let labels: Vec<u32> = (0..n as u32).map(|i| i % d as u32).collect();
        let mut tape = Tape::new();
        let lv = tape.leaf(Tensor::matrix(n, d, logits.clone()).unwrap());
        let loss = tape.softmax_cross_entropy(lv, Arc::new(labels.clone()));
        let grads = tape.backward(loss).unwrap();
        let f = move |xs: &[Vec<f64>]| -> f64 {
            let mut total = 0.0;
            for r in 0..n {
                let row = &xs[0][r * d..(r + 1) * d];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[labels[r] as usize];
            }
            total / n as f64
        };
        ok &= fd_match(&grads[lv.index()].clone().unwrap(), &[to64(&logits)], 0, &f);

        let scores = rv(rng, n);
        let targets: Vec<f32> = (0..n).map(|i| (i % 2) as f32).collect();
        let t64 = to64(&targets);
        let mut tape = Tape::new();
        let sv = tape.leaf(Tensor::new(vec![n], scores.clone()).unwrap());
        let loss = tape.bce_with_logits(sv, Arc::new(targets));
        let grads = tape.backward(loss).unwrap();
        let f = move |xs: &[Vec<f64>]| -> f64 {
            xs[0]
                .iter()
                .zip(&t64)
                .map(|(&s, &t)| s.max(0.0) - s * t + (-s.abs()).exp().ln_1p())
                .sum::<f64>()
                / n as f64
        };
        ok &= fd_match(&grads[sv.index()].clone().unwrap(), &[to64(&scores)], 0, &f);
    }
    {
        // gather/scatter ops
        let x = rv(rng, n * d);
        let rows = Arc::new(vec![2u32, 0, 5]);
        let seg = Arc::new((0..n as u32).map(|i| i % 2).collect::<Vec<_>>());
        let pairs = Arc::new(vec![(0u32, 3u32), (1, 1), (6, 2)]);
        for case in 0..3 {
            let w_len = match case {
                0 => rows.len() * d,
                1 => 2 * d,
                _ => pairs.len(),
            };
            let w = rv(rng, w_len);
            let mut tape = Tape::new();
            let xv = tape.leaf(Tensor::matrix(n, d, x.clone()).unwrap());
            let out = match case {
                0 => tape.select_rows(xv, Arc::clone(&rows)),
                1 => tape.segment_sum(xv, Arc::clone(&seg), 2),
                _ => tape.edge_dot(xv, Arc::clone(&pairs)),
            };
            let w_shaped = tape.leaf(
                Tensor::new(tape.value(out).shape().to_vec(), w.clone()).unwrap(),
            );
            let prod = tape.mul(out, w_shaped);
            let loss = tape.sum(prod);
            let grads = tape.backward(loss).unwrap();
            let w64 = to64(&w);
            let rows2 = Arc::clone(&rows);
            let seg2 = Arc::clone(&seg);
            let pairs2 = Arc::clone(&pairs);
            let f = move |xs: &[Vec<f64>]| -> f64 {
                let out: Vec<f64> = match case {
                    0 => rows2
                        .iter()
                        .flat_map(|&r| {
                            xs[0][r as usize * d..(r as usize + 1) * d].to_vec()
                        })
                        .collect(),
                    1 => {
                        let mut o = vec![0.0; 2 * d];
                        for (i, &s) in seg2.iter().enumerate() {
                            for j in 0..d {
                                o[s as usize * d + j] += xs[0][i * d + j];
                            }
                        }
                        o
                    }
                    _ => pairs2
                        .iter()
                        .map(|&(u, v)| {
                            (0..d)
                                .map(|j| {
                                    xs[0][u as usize * d + j] * xs[0][v as usize * d + j]
                                })
                                .sum()
                        })
                        .collect(),
                };
                out.iter().zip(&w64).map(|(a, b)| a * b).sum()
            };
            ok &= fd_match(&grads[xv.index()].clone().unwrap(), &[to64(&x)], 0, &f);
        }
    }
    ok
}

fn fd_full_gcn(rng: &mut ChaCha8Rng) -> bool {
    use gnncomp_core::models::GcnModel;
    let mut graph = gnncomp_core::data::synth::random_graph(5, 6, 123);
    graph.node_features = (0..5 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    graph.feature_dim = 4;
    let labels = vec![0u32, 1, 2, 0, 1];
    let adj = gcn_norm(&graph);
    let spec = ModelSpec {
        dropout: 0.0,
        ..ModelSpec::gcn2()
    };
    let model = GcnModel::new_with_rng(&spec, &[4, 3, 3], rng);

    let mut tape = Tape::new();
    let leaves: Vec<_> = model
        .params()
        .iter()
        .map(|p| tape.leaf(p.tensor.clone()))
        .collect();
    let x = tape.leaf(Tensor::matrix(5, 4, graph.node_features.clone()).unwrap());
    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    let logits =
        model.forward_leaves(&mut tape, &leaves, x, &adj, false, &mut dummy, &mut NoQuant);
    let loss = tape.softmax_cross_entropy(logits, Arc::new(labels.clone()));
    let grads = tape.backward(loss).unwrap();

    // f64 reference network
    let nrm = {
        let n = 5;
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        for &(u, v) in &graph.edges {
            a[u as usize * n + v as usize] = 1.0;
            a[v as usize * n + u as usize] = 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j]).sum()).collect();
        let mut out = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = a[i * n + j] / (deg[i] * deg[j]).sqrt();
            }
        }
        out
    };
    let mm = |a: &[f64], b: &[f64], m: usize, k: usize, n2: usize| -> Vec<f64> {
        let mut out = vec![0.0; m * n2];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n2 {
                    out[i * n2 + j] += a[i * k + p] * b[p * n2 + j];
                }
            }
        }
        out
    };
    let x64: Vec<f64> = graph.node_features.iter().map(|&v| v as f64).collect();
    let f = move |ps: &[Vec<f64>]| -> f64 {
        let h = mm(&nrm, &mm(&x64, &ps[0], 5, 4, 3), 5, 5, 3);
        let h: Vec<f64> = h
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let v = v + ps[1][i % 3];
                if v > 0.0 {
                    v
                } else {
                    v.exp() - 1.0
                }
            })
            .collect();
        let l = mm(&nrm, &mm(&h, &ps[2], 5, 3, 3), 5, 5, 3);
        let mut total = 0.0;
        for r in 0..5 {
            let row: Vec<f64> = (0..3).map(|j| l[r * 3 + j] + ps[3][j]).collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[labels[r] as usize];
        }
        total / 5.0
    };
    let inputs: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.tensor.data().iter().map(|&v| v as f64).collect())
        .collect();
    let mut ok = true;
    for (pi, leaf) in leaves.iter().enumerate() {
        ok &= fd_match(&grads[leaf.index()].clone().unwrap(), &inputs, pi, &f);
    }
    ok
}

// ---- criterion 9: non-reproducible disclosures ---------------------------------------

#[test]
fn acceptance_9_inference_time_and_disclosures() {
    use gnncomp_bench::measure::measure_inference;
    use gnncomp_core::models::{eval_with_hooks, TaskData};

    println!(
        "DISCLOSURE: energy (J), CPU%, absolute memory (MB), and absolute \
         inference-second figures are hardware findings and are not acceptance targets."
    );

    let (ds, split) = cora_dataset();
    let optim = OptimConfig::default().with_weight_decay(5e-4).with_epochs(100);
    let trained =
        gnncomp_core::models::train(&ModelSpec::gcn2(), &ds, &split, &optim, 1).unwrap();
    let data = TaskData::new(&ds, &split).unwrap();

    let mut dense = trained.model.clone();
    let mut masked = trained.model;
    let mask = global_magnitude_prune(masked.params(), 0.5).unwrap();
    apply_mask(&mut masked, &mask).unwrap();

    // paired, interleaved timing so clock-speed drift hits both models
    // equally; each sample times several full evaluation passes
    let mut run_dense = || {
        for _ in 0..5 {
            let _ = eval_with_hooks(&mut dense, &ds, &data, Subset::Test, &mut NoQuant);
        }
    };
    let mut run_masked = || {
        for _ in 0..5 {
            let _ = eval_with_hooks(&mut masked, &ds, &data, Subset::Test, &mut NoQuant);
        }
    };
    for _ in 0..3 {
        run_dense();
        run_masked();
    }
    let mut dense_samples = Vec::new();
    let mut masked_samples = Vec::new();
    for _ in 0..40 {
        let t0 = std::time::Instant::now();
        run_dense();
        dense_samples.push(t0.elapsed().as_secs_f64());
        let t1 = std::time::Instant::now();
        run_masked();
        masked_samples.push(t1.elapsed().as_secs_f64());
    }
    let dense_mean = dense_samples.iter().sum::<f64>() / dense_samples.len() as f64;
    let masked_mean = masked_samples.iter().sum::<f64>() / masked_samples.len() as f64;
    // the 2-warmup repeated-measure helper is still the harness contract;
    // exercise it once so the criterion covers the public API too
    let (helper_mean, helper_std) = measure_inference(&mut run_dense, 5);
    assert!(helper_mean > 0.0 && helper_std >= 0.0);

    // masks do not shrink the computation, so timing should not consistently
    // improve: means within 20% of each other
    let ratio = masked_mean / dense_mean;
    criterion(
        9,
        "masked-model inference mean within 20% of dense (no consistent speedup)",
        (0.8..=1.2).contains(&ratio),
        format!("dense {dense_mean:.6}s, masked {masked_mean:.6}s, ratio {ratio:.3}"),
    );
}
