//! Finite-difference gradient checks for every differentiable op.
//!
//! Each op has an independent f64 reference implementation; central
//! differences (h = 1e-3) on the reference are compared against the f32
//! autodiff gradients at 1e-3 relative tolerance.

#![allow(clippy::needless_range_loop)] // f64 reference loops index on purpose

use std::sync::Arc;

use gnncomp_core::nn::{BatchNormState, Csr, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;
const REL_TOL: f64 = 1e-3;
const ABS_FLOOR: f64 = 1e-6;

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

fn assert_grads_match(analytic: &[f32], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(
            close(a as f64, n),
            "{what}[{i}]: analytic {a} vs numeric {n}"
        );
    }
}

/// Central finite differences of `f` in its `which`-th input tensor.
fn fd_grad(
    f: &dyn Fn(&[Vec<f64>]) -> f64,
    inputs: &[Vec<f64>],
    which: usize,
) -> Vec<f64> {
    let mut grads = vec![0.0; inputs[which].len()];
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    for i in 0..grads.len() {
        let orig = work[which][i];
        work[which][i] = orig + H;
        let hi = f(&work);
        work[which][i] = orig - H;
        let lo = f(&work);
        work[which][i] = orig;
        grads[i] = (hi - lo) / (2.0 * H);
    }
    grads
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random values kept away from relu/elu kinks so FD stays valid.
fn rand_vec_nokink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let v: f32 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn to64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn weighted_sum(out: &[f64], weights: &[f64]) -> f64 {
    out.iter().zip(weights).map(|(a, b)| a * b).sum()
}

/// Runs a tape forward producing `out`, reduces with a fixed random weight
/// vector, backprops, and returns per-input analytic grads.
fn tape_grads(
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
    inputs: &[Tensor],
    weights: &[f32],
) -> Vec<Vec<f32>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let w = tape.leaf(Tensor::new(vec![weights.len()], weights.to_vec()).unwrap());
    let out_flat = tape.value(out).clone();
    assert_eq!(out_flat.len(), weights.len(), "weight vector size");
    // reshape-free weighted reduction: mul then sum (shapes must match)
    let w_shaped = {
        let data = tape.value(w).data().to_vec();
        tape.leaf(Tensor::new(out_flat.shape().to_vec(), data).unwrap())
    };
    let prod = tape.mul(out, w_shaped);
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).unwrap();
    vars.iter()
        .map(|v| grads[v.index()].clone().unwrap_or_default())
        .collect()
}

fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            for j in 0..n {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

#[test]
fn matmul_forward_matches_triple_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_vec(&mut rng, 5 * 4);
    let b = rand_vec(&mut rng, 4 * 3);
    let mut tape = Tape::new();
    let va = tape.leaf(Tensor::matrix(5, 4, a.clone()).unwrap());
    let vb = tape.leaf(Tensor::matrix(4, 3, b.clone()).unwrap());
    let out = tape.matmul(va, vb);
    let oracle = ref_matmul(&to64(&a), &to64(&b), 5, 4, 3);
    for (got, want) in tape.value(out).data().iter().zip(&oracle) {
        assert!((*got as f64 - want).abs() < 1e-5);
    }
}

#[test]
fn matmul_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (m, k, n) = (3, 4, 2);
    let a = rand_vec(&mut rng, m * k);
    let b = rand_vec(&mut rng, k * n);
    let w = rand_vec(&mut rng, m * n);
    let analytic = tape_grads(
        &|t, vars| t.matmul(vars[0], vars[1]),
        &[
            Tensor::matrix(m, k, a.clone()).unwrap(),
            Tensor::matrix(k, n, b.clone()).unwrap(),
        ],
        &w,
    );
    let inputs = vec![to64(&a), to64(&b)];
    let w64 = to64(&w);
    let f = |xs: &[Vec<f64>]| weighted_sum(&ref_matmul(&xs[0], &xs[1], m, k, n), &w64);
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs, 0), "matmul dA");
    assert_grads_match(&analytic[1], &fd_grad(&f, &inputs, 1), "matmul dB");
}

fn random_csr(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Csr {
    let mut triplets = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if rng.random_bool(density) {
                triplets.push((r as u32, c as u32, rng.random_range(-1.0..1.0f32)));
            }
        }
    }
    Csr::from_triplets(n, n, triplets)
}

fn densify(csr: &Csr) -> Vec<f64> {
    let mut out = vec![0.0; csr.n_rows * csr.n_cols];
    for r in 0..csr.n_rows {
        for k in csr.indptr[r]..csr.indptr[r + 1] {
            out[r * csr.n_cols + csr.indices[k] as usize] += csr.values[k] as f64;
        }
    }
    out
}

#[test]
fn spmm_forward_matches_densified_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let adj = Arc::new(random_csr(&mut rng, 6, 0.3));
    let x = rand_vec(&mut rng, 6 * 2);
    let mut tape = Tape::new();
    let vx = tape.leaf(Tensor::matrix(6, 2, x.clone()).unwrap());
    let out = tape.spmm(&adj, vx);
    let oracle = ref_matmul(&densify(&adj), &to64(&x), 6, 6, 2);
    for (got, want) in tape.value(out).data().iter().zip(&oracle) {
        assert!((*got as f64 - want).abs() < 1e-5);
    }
}

#[test]
fn spmm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let adj = Arc::new(random_csr(&mut rng, 6, 0.3));
    let dense = densify(&adj);
    let x = rand_vec(&mut rng, 6 * 2);
    let w = rand_vec(&mut rng, 6 * 2);
    let adj2 = Arc::clone(&adj);
    let analytic = tape_grads(
        &move |t, vars| t.spmm(&adj2, vars[0]),
        &[Tensor::matrix(6, 2, x.clone()).unwrap()],
        &w,
    );
    let w64 = to64(&w);
    let f = |xs: &[Vec<f64>]| weighted_sum(&ref_matmul(&dense, &xs[0], 6, 6, 2), &w64);
    assert_grads_match(&analytic[0], &fd_grad(&f, &[to64(&x)], 0), "spmm dX");
}

#[test]
fn elementwise_and_reduction_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 12;
    let a = rand_vec(&mut rng, n);
    let b = rand_vec(&mut rng, n);
    let w = rand_vec(&mut rng, n);
    let w64 = to64(&w);

    // add
    let analytic = tape_grads(
        &|t, v| t.add(v[0], v[1]),
        &[
            Tensor::new(vec![n], a.clone()).unwrap(),
            Tensor::new(vec![n], b.clone()).unwrap(),
        ],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        weighted_sum(
            &xs[0].iter().zip(&xs[1]).map(|(x, y)| x + y).collect::<Vec<_>>(),
            &w64,
        )
    };
    let inputs = vec![to64(&a), to64(&b)];
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs, 0), "add dA");
    assert_grads_match(&analytic[1], &fd_grad(&f, &inputs, 1), "add dB");

    // mul
    let analytic = tape_grads(
        &|t, v| t.mul(v[0], v[1]),
        &[
            Tensor::new(vec![n], a.clone()).unwrap(),
            Tensor::new(vec![n], b.clone()).unwrap(),
        ],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        weighted_sum(
            &xs[0].iter().zip(&xs[1]).map(|(x, y)| x * y).collect::<Vec<_>>(),
            &w64,
        )
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs, 0), "mul dA");
    assert_grads_match(&analytic[1], &fd_grad(&f, &inputs, 1), "mul dB");

    // scale + mean composite
    let analytic = tape_grads(
        &|t, v| {
            let s = t.scale(v[0], 2.5);
            let m = t.mean(s);
            // broadcast the scalar into a 1-element "output"
            m
        },
        &[Tensor::new(vec![n], a.clone()).unwrap()],
        &[1.0],
    );
    let f = |xs: &[Vec<f64>]| xs[0].iter().map(|x| 2.5 * x).sum::<f64>() / n as f64;
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs[..1], 0), "scale+mean");
}

#[test]
fn bias_broadcast_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, d) = (4, 3);
    let x = rand_vec(&mut rng, n * d);
    let b = rand_vec(&mut rng, d);
    let w = rand_vec(&mut rng, n * d);
    let w64 = to64(&w);
    let analytic = tape_grads(
        &|t, v| t.add_bias(v[0], v[1]),
        &[
            Tensor::matrix(n, d, x.clone()).unwrap(),
            Tensor::new(vec![d], b.clone()).unwrap(),
        ],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        let mut out = xs[0].clone();
        for r in 0..n {
            for j in 0..d {
                out[r * d + j] += xs[1][j];
            }
        }
        weighted_sum(&out, &w64)
    };
    let inputs = vec![to64(&x), to64(&b)];
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs, 0), "add_bias dX");
    assert_grads_match(&analytic[1], &fd_grad(&f, &inputs, 1), "add_bias dB");
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 16;
    let x = rand_vec_nokink(&mut rng, n);
    let w = rand_vec(&mut rng, n);
    let w64 = to64(&w);
    let x64 = to64(&x);

    let analytic = tape_grads(
        &|t, v| t.relu(v[0]),
        &[Tensor::new(vec![n], x.clone()).unwrap()],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        weighted_sum(&xs[0].iter().map(|&v| v.max(0.0)).collect::<Vec<_>>(), &w64)
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, std::slice::from_ref(&x64), 0), "relu");

    let analytic = tape_grads(
        &|t, v| t.elu(v[0]),
        &[Tensor::new(vec![n], x.clone()).unwrap()],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        weighted_sum(
            &xs[0]
                .iter()
                .map(|&v| if v > 0.0 { v } else { v.exp() - 1.0 })
                .collect::<Vec<_>>(),
            &w64,
        )
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, std::slice::from_ref(&x64), 0), "elu");

    let analytic = tape_grads(
        &|t, v| t.sigmoid(v[0]),
        &[Tensor::new(vec![n], x.clone()).unwrap()],
        &w,
    );
    let f = |xs: &[Vec<f64>]| {
        weighted_sum(
            &xs[0]
                .iter()
                .map(|&v| 1.0 / (1.0 + (-v).exp()))
                .collect::<Vec<_>>(),
            &w64,
        )
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, &[x64], 0), "sigmoid");
}

#[test]
fn gather_scatter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, d) = (5, 3);
    let x = rand_vec(&mut rng, n * d);
    let rows = Arc::new(vec![3u32, 0, 3]);
    let w = rand_vec(&mut rng, rows.len() * d);
    let w64 = to64(&w);
    let rows2 = Arc::clone(&rows);
    let analytic = tape_grads(
        &move |t, v| t.select_rows(v[0], Arc::clone(&rows2)),
        &[Tensor::matrix(n, d, x.clone()).unwrap()],
        &w,
    );
    let rows3 = Arc::clone(&rows);
    let f = move |xs: &[Vec<f64>]| {
        let mut out = Vec::new();
        for &r in rows3.iter() {
            out.extend_from_slice(&xs[0][r as usize * d..(r as usize + 1) * d]);
        }
        weighted_sum(&out, &w64)
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, &[to64(&x)], 0), "select_rows");

    let seg = Arc::new(vec![0u32, 1, 0, 1, 0]);
    let w = rand_vec(&mut rng, 2 * d);
    let w64 = to64(&w);
    let seg2 = Arc::clone(&seg);
    let analytic = tape_grads(
        &move |t, v| t.segment_sum(v[0], Arc::clone(&seg2), 2),
        &[Tensor::matrix(n, d, x.clone()).unwrap()],
        &w,
    );
    let seg3 = Arc::clone(&seg);
    let f = move |xs: &[Vec<f64>]| {
        let mut out = vec![0.0; 2 * d];
        for (i, &s) in seg3.iter().enumerate() {
            for j in 0..d {
                out[s as usize * d + j] += xs[0][i * d + j];
            }
        }
        weighted_sum(&out, &w64)
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, &[to64(&x)], 0), "segment_sum");

    let pairs = Arc::new(vec![(0u32, 1u32), (2, 4), (1, 1)]);
    let w = rand_vec(&mut rng, pairs.len());
    let w64 = to64(&w);
    let pairs2 = Arc::clone(&pairs);
    let analytic = tape_grads(
        &move |t, v| t.edge_dot(v[0], Arc::clone(&pairs2)),
        &[Tensor::matrix(n, d, x.clone()).unwrap()],
        &w,
    );
    let pairs3 = Arc::clone(&pairs);
    let f = move |xs: &[Vec<f64>]| {
        let out: Vec<f64> = pairs3
            .iter()
            .map(|&(u, v)| {
                (0..d)
                    .map(|j| xs[0][u as usize * d + j] * xs[0][v as usize * d + j])
                    .sum()
            })
            .collect();
        weighted_sum(&out, &w64)
    };
    assert_grads_match(&analytic[0], &fd_grad(&f, &[to64(&x)], 0), "edge_dot");
}

#[test]
fn batch_norm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, d) = (6, 3);
    let x = rand_vec(&mut rng, n * d);
    let gamma = rand_vec_nokink(&mut rng, d);
    let beta = rand_vec(&mut rng, d);
    let w = rand_vec(&mut rng, n * d);
    let w64 = to64(&w);
    let eps = 1e-5f64;

    let analytic = tape_grads(
        &|t, v| {
            let mut st = BatchNormState::new(d);
            t.batch_norm(v[0], v[1], v[2], &mut st, true)
        },
        &[
            Tensor::matrix(n, d, x.clone()).unwrap(),
            Tensor::new(vec![d], gamma.clone()).unwrap(),
            Tensor::new(vec![d], beta.clone()).unwrap(),
        ],
        &w,
    );
    let f = move |xs: &[Vec<f64>]| {
        let (x, g, b) = (&xs[0], &xs[1], &xs[2]);
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for r in 0..n {
            for j in 0..d {
                mean[j] += x[r * d + j];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        for r in 0..n {
            for j in 0..d {
                var[j] += (x[r * d + j] - mean[j]).powi(2);
            }
        }
        for v in &mut var {
            *v /= n as f64;
        }
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            for j in 0..d {
                let xhat = (x[r * d + j] - mean[j]) / (var[j] + eps).sqrt();
                out[r * d + j] = g[j] * xhat + b[j];
            }
        }
        weighted_sum(&out, &w64)
    };
    let inputs = vec![to64(&x), to64(&gamma), to64(&beta)];
    assert_grads_match(&analytic[0], &fd_grad(&f, &inputs, 0), "bn dX");
    assert_grads_match(&analytic[1], &fd_grad(&f, &inputs, 1), "bn dGamma");
    assert_grads_match(&analytic[2], &fd_grad(&f, &inputs, 2), "bn dBeta");
}

fn ref_softmax_ce(logits: &[f64], labels: &[u32], n: usize, c: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..n {
        let row = &logits[r * c..(r + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[r] as usize];
    }
    total / n as f64
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, c) = (5, 4);
    let logits = rand_vec(&mut rng, n * c);
    let labels = Arc::new((0..n as u32).map(|i| i % c as u32).collect::<Vec<_>>());
    let labels2 = Arc::clone(&labels);

    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::matrix(n, c, logits.clone()).unwrap());
    let loss = tape.softmax_cross_entropy(v, Arc::clone(&labels));
    let grads = tape.backward(loss).unwrap();
    let analytic = grads[v.index()].clone().unwrap();

    let f = move |xs: &[Vec<f64>]| ref_softmax_ce(&xs[0], &labels2, n, c);
    assert_grads_match(&analytic, &fd_grad(&f, &[to64(&logits)], 0), "softmax ce");
}

#[test]
fn bce_with_logits_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10;
    let scores = rand_vec(&mut rng, n);
    let targets: Vec<f32> = (0..n).map(|i| (i % 2) as f32).collect();
    let t64 = to64(&targets);

    let mut tape = Tape::new();
    let v = tape.leaf(Tensor::new(vec![n], scores.clone()).unwrap());
    let loss = tape.bce_with_logits(v, Arc::new(targets));
    let grads = tape.backward(loss).unwrap();
    let analytic = grads[v.index()].clone().unwrap();

    let f = move |xs: &[Vec<f64>]| {
        xs[0]
            .iter()
            .zip(&t64)
            .map(|(&s, &t)| s.max(0.0) - s * t + (-s.abs()).exp().ln_1p())
            .sum::<f64>()
            / n as f64
    };
    assert_grads_match(&analytic, &fd_grad(&f, &[to64(&scores)], 0), "bce");
}

/// Full model check: 2-layer GCN cross-entropy loss on a 5-node random
/// graph, every parameter gradient against central finite differences.
#[test]
fn full_gcn_loss_gradient_matches_finite_differences() {
    use gnncomp_core::data::synth::random_graph;
    use gnncomp_core::models::{gcn_norm, GcnModel, GraphModel, ModelSpec, NoQuant};

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut graph = random_graph(5, 6, 99);
    graph.node_features = rand_vec(&mut rng, 5 * 4);
    graph.feature_dim = 4;
    let labels: Vec<u32> = vec![0, 1, 2, 0, 1];
    let adj = gcn_norm(&graph);
    let spec = ModelSpec {
        dropout: 0.0,
        ..ModelSpec::gcn2()
    };
    let model = GcnModel::new_with_rng(&spec, &[4, 3, 3], &mut rng);

    // analytic grads through the tape
    let mut tape = Tape::new();
    let leaves: Vec<Var> = model
        .params()
        .iter()
        .map(|p| tape.leaf(p.tensor.clone()))
        .collect();
    let x = tape.leaf(Tensor::matrix(5, 4, graph.node_features.clone()).unwrap());
    let logits = model.forward_leaves(
        &mut tape,
        &leaves,
        x,
        &adj,
        false,
        &mut rng,
        &mut NoQuant,
    );
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
    let x64 = to64(&graph.node_features);
    let f = move |ps: &[Vec<f64>]| {
        let (w1, b1, w2, b2) = (&ps[0], &ps[1], &ps[2], &ps[3]);
        let h = ref_matmul(&nrm, &ref_matmul(&x64, w1, 5, 4, 3), 5, 5, 3);
        let h: Vec<f64> = h
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let v = v + b1[i % 3];
                if v > 0.0 {
                    v
                } else {
                    v.exp() - 1.0
                }
            })
            .collect();
        let l = ref_matmul(&nrm, &ref_matmul(&h, w2, 5, 3, 3), 5, 5, 3);
        let l: Vec<f64> = l.iter().enumerate().map(|(i, &v)| v + b2[i % 3]).collect();
        ref_softmax_ce(&l, &labels, 5, 3)
    };

    let param_values: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| to64(p.tensor.data()))
        .collect();
    for (pi, leaf) in leaves.iter().enumerate() {
        let analytic = grads[leaf.index()].clone().unwrap();
        let numeric = fd_grad(&f, &param_values, pi);
        assert_grads_match(
            &analytic,
            &numeric,
            &format!("gcn param {}", model.params()[pi].name),
        );
    }
}
