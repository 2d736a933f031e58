use super::*;
use proptest::{prop_assert, proptest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_policy(arch: Architecture, seed: u64) -> Policy {
    let mut r = rng(seed);
    let n = arch.param_count();
    let params = (0..n).map(|_| r.random_range(-0.8..0.8)).collect();
    Policy::from_params(arch, params).unwrap()
}

fn small_cnn() -> Architecture {
    Architecture::Cnn { channels: 2, height: 5, width: 7, filters: [3, 4], kernel: 3, outputs: 3 }
}

#[test]
fn xavier_bound_and_variance() {
    let shapes = [TensorShape::new("w", vec![3, 3]), TensorShape::new("b", vec![3])];
    let p = xavier_init(&shapes, &mut rng(1));
    assert!(p[..9].iter().all(|v| v.abs() <= 1.0));
    assert!(p[9..].iter().all(|v| *v == 0.0));

    let big = [TensorShape::new("w", vec![500, 200])];
    let draws = xavier_init(&big, &mut rng(2));
    let n = draws.len() as f64;
    let bound2 = 6.0 / 700.0;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Var of x² for U(−b, b) is 4b⁴/45.
    let se = (4.0 * bound2 * bound2 / 45.0 / n).sqrt();
    assert!((var - bound2 / 3.0).abs() < 3.0 * se, "{var} vs {}", bound2 / 3.0);
}

#[test]
fn zero_output_layer_option() {
    let arch = Architecture::mlp(4, &[5, 6], 2);
    let p = Policy::xavier(arch, true, &mut rng(3)).unwrap();
    let tail = 6 * 2 + 2;
    assert!(p.params()[p.params().len() - tail..].iter().all(|v| *v == 0.0));
    assert!(p.params()[..4 * 5].iter().any(|v| *v != 0.0));
    assert_eq!(p.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn zero_parameters_give_zero_output() {
    for arch in [Architecture::mlp(6, &[8, 8], 3), small_cnn()] {
        let p = Policy::zeros(arch.clone()).unwrap();
        let x: Vec<f64> = (0..arch.input_len()).map(|i| i as f64 - 3.0).collect();
        assert!(p.forward(&x).unwrap().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn single_hidden_unit_by_hand() {
    // input 2 → hidden 1 → output 1: y = v·relu(w·x + b) + c
    let arch = Architecture::mlp(2, &[1], 1);
    let p = Policy::from_params(arch, vec![2.0, -1.0, 0.5, 3.0, 0.25]).unwrap();
    assert_eq!(p.forward(&[1.0, 1.0]).unwrap(), vec![3.0 * 1.5 + 0.25]);
    assert_eq!(p.forward(&[0.0, 2.0]).unwrap(), vec![0.25]);
}

#[test]
fn cnn_on_heat2d_grid_has_five_outputs() {
    let arch = Architecture::Cnn { channels: 1, height: 25, width: 25, filters: [8, 16], kernel: 3, outputs: 5 };
    let p = Policy::xavier(arch, false, &mut rng(4)).unwrap();
    let out = p.forward(&vec![0.3; 625]).unwrap();
    assert_eq!(out.len(), 5);
    assert!(out.iter().all(|v| v.is_finite()));
}

#[test]
fn shape_mismatch_rejected() {
    let p = Policy::zeros(Architecture::mlp(3, &[4], 2)).unwrap();
    assert!(p.forward(&[1.0, 2.0]).is_err());
    let rec = p.forward_recorded(&[1.0, 2.0, 3.0]).unwrap();
    assert!(p.backward(&rec, &[1.0]).is_err());
}

#[test]
fn stale_record_rejected() {
    let mut p = random_policy(Architecture::mlp(3, &[4], 2), 5);
    let rec = p.forward_recorded(&[1.0, 2.0, 3.0]).unwrap();
    assert!(p.backward(&rec, &[1.0, 0.0]).is_ok());
    p.update_params(|w| w[0] += 1.0);
    assert!(matches!(p.backward(&rec, &[1.0, 0.0]), Err(StsoError::StaleRecording(_))));
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let p = random_policy(small_cnn(), 6);
    let x: Vec<f64> = (0..70).map(|i| (i as f64 * 0.37).sin()).collect();
    let rec = p.forward_recorded(&x).unwrap();
    let g = p.backward(&rec, &[0.0; 3]).unwrap();
    assert!(g.params.iter().all(|v| *v == 0.0));
    assert!(g.input.iter().all(|v| *v == 0.0));
}

/// Central differences of `upstream · forward` against the analytic gradient.
/// The networks are piecewise linear in any single coordinate, so the
/// difference is exact up to rounding unless a kink is crossed; coordinates
/// whose one-sided differences disagree straddle a kink and are skipped.
fn check_gradients(p: &Policy, x: &[f64], upstream: &[f64]) -> usize {
    let objective = |pol: &Policy, inp: &[f64]| -> f64 {
        pol.forward(inp).unwrap().iter().zip(upstream).map(|(a, b)| a * b).sum()
    };
    let rec = p.forward_recorded(x).unwrap();
    let g = p.backward(&rec, upstream).unwrap();
    let h = 1e-4;
    let f0 = objective(p, x);
    let mut checked = 0;
    let mut check = |analytic: f64, fp: f64, fm: f64, what: String| {
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if (fwd - bwd).abs() > 1e-7 * (1.0 + fwd.abs()) {
            return;
        }
        let fd = (fp - fm) / (2.0 * h);
        let rel = (analytic - fd).abs() / (fd.abs() + 1e-12);
        assert!(rel < 1e-6 || (analytic - fd).abs() < 1e-10, "{what}: analytic {analytic} fd {fd}");
        checked += 1;
    };
    for i in 0..p.params().len() {
        let mut pp = p.clone();
        pp.update_params(|w| w[i] += h);
        let mut pm = p.clone();
        pm.update_params(|w| w[i] -= h);
        check(g.params[i], objective(&pp, x), objective(&pm, x), format!("param {i}"));
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let mut xm = x.to_vec();
        xm[i] -= h;
        check(g.input[i], objective(p, &xp), objective(p, &xm), format!("input {i}"));
    }
    checked
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let p = random_policy(Architecture::mlp(5, &[7, 6], 3), 7);
    let x = [0.3, -1.2, 0.8, 0.05, 2.0];
    let checked = check_gradients(&p, &x, &[0.7, -1.1, 0.4]);
    assert!(checked > p.params().len() * 9 / 10);
}

#[test]
fn cnn_gradients_match_finite_differences() {
    let p = random_policy(small_cnn(), 8);
    let x: Vec<f64> = (0..70).map(|i| ((i * 13 % 17) as f64 / 17.0 - 0.4) * 1.5).collect();
    let checked = check_gradients(&p, &x, &[1.0, -0.5, 0.25]);
    assert!(checked > p.params().len() * 8 / 10);
}

#[test]
fn accumulate_matches_backward() {
    let p = random_policy(small_cnn(), 9);
    let x: Vec<f64> = (0..70).map(|i| (i as f64).cos()).collect();
    let rec = p.forward_recorded(&x).unwrap();
    let up = [0.2, 0.1, -0.3];
    let full = p.backward(&rec, &up).unwrap();
    let mut acc = vec![0.0; p.params().len()];
    p.accumulate_param_gradient(&rec, &up, &mut acc).unwrap();
    assert_eq!(acc, full.params);
    p.accumulate_param_gradient(&rec, &up, &mut acc).unwrap();
    for (a, b) in acc.iter().zip(&full.params) {
        assert!((a - 2.0 * b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    assert_eq!(rec.output(), p.forward(&x).unwrap().as_slice());
}

fn one_hot(n: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = 1.0;
    e
}

#[test]
fn sparse_pass_equals_dense_mlp_exactly() {
    let p = random_policy(Architecture::mlp(12, &[9, 7], 4), 10);
    let table = p.sparse_forward_pass();
    assert_eq!(table.len(), 12);
    for (j, row) in table.iter().enumerate() {
        let dense = p.forward(&one_hot(12, j)).unwrap();
        assert_eq!(row.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), dense.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn sparse_pass_equals_dense_cnn() {
    let p = random_policy(small_cnn(), 11);
    let table = p.sparse_forward_pass();
    assert_eq!(table.len(), 70);
    for (j, row) in table.iter().enumerate() {
        let dense = p.forward(&one_hot(70, j)).unwrap();
        for (a, b) in row.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_policy_sparse_table_is_zero() {
    let p = Policy::zeros(Architecture::mlp(5, &[3], 2)).unwrap();
    assert!(p.sparse_forward_pass().iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn pixelwise_quadrature_matches_loop() {
    let grid = Grid::new(1, &[2.0], 12).unwrap();
    let p = random_policy(Architecture::mlp(12, &[6], 2), 12);
    let f: Vec<f64> = (0..12).map(|i| (i as f64 * 0.5).sin()).collect();
    let table = p.sparse_forward_pass();
    let got = pixelwise_quadrature(&table, &f, &grid);
    for o in 0..2 {
        let mut expect = 0.0;
        for (j, fj) in f.iter().enumerate() {
            expect += p.forward(&one_hot(12, j)).unwrap()[o] * fj * grid.cell_volume();
        }
        assert!((got[o] - expect).abs() < 1e-12);
    }
}

#[test]
fn blob_round_trip_is_bit_exact() {
    let p = random_policy(small_cnn(), 13);
    let (header, bytes) = p.to_blob();
    let json = serde_json::to_string(&header).unwrap();
    let back: BlobHeader = serde_json::from_str(&json).unwrap();
    let q = Policy::from_blob(&back, &bytes).unwrap();
    assert_eq!(p, q);
    assert!(Policy::from_blob(&back, &bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #[test]
    fn relu_stack_is_positively_homogeneous(c in 0.01f64..50.0, seed in 0u64..1000, xs in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let arch = Architecture::mlp(6, &[8, 5], 2);
        let mut p = random_policy(arch, seed);
        let shapes = p.architecture().shapes();
        let mut zero_biases = Vec::new();
        let mut off = 0;
        for s in &shapes {
            if s.shape.len() == 1 {
                zero_biases.push(off..off + s.len());
            }
            off += s.len();
        }
        p.update_params(|w| for r in &zero_biases { w[r.clone()].iter_mut().for_each(|v| *v = 0.0) });
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let a = p.forward(&scaled).unwrap();
        let b = p.forward(&xs).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - c * v).abs() <= 1e-10 * (1.0 + (c * v).abs()));
        }
    }
}
