//! Property tests for the differentiable primitives against central
//! differences and closed-form identities (64-bit).

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spt_core::numcore::{finite_diff_check, primitive_forward, Array, Graph, Primitive, Var};
use spt_core::Result;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array<f64> {
    Array::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5))
}

/// `sum(out * w)` for a fixed random `w`, so every output entry is weighed.
fn weighted(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = (g.value(out).rows(), g.value(out).cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(&mut rng, r, c));
    let p = g.mul(out, w)?;
    g.sum(p)
}

/// Checks the gradient w.r.t. input `which` of `op` applied to `inputs`.
fn check(op: Primitive, inputs: &[Array<f64>], which: usize, seed: u64) -> f64 {
    let result = finite_diff_check(
        |g, leaf| {
            let vars: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(i, a)| if i == which { leaf } else { g.constant(a.clone()) })
                .collect();
            let out = g.apply(op.clone(), &vars)?;
            weighted(g, out, seed)
        },
        &inputs[which],
        1e-6,
    )
    .unwrap();
    result.max_relative_error
}

fn case(seed: u64) -> Vec<(Primitive, Vec<Array<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(3..7));
    let a = random(&mut rng, m, n);
    let b = random(&mut rng, m, n);
    let s = rng.random_range(0..n - 1);
    let e = rng.random_range(s + 1..=n);
    let rs = rng.random_range(0..m);
    vec![
        (Primitive::MatMul, vec![random(&mut rng, m, k), random(&mut rng, k, n)]),
        (Primitive::MatMulT, vec![random(&mut rng, m, k), random(&mut rng, n, k)]),
        (Primitive::Add, vec![a.clone(), b.clone()]),
        (Primitive::AddRow, vec![a.clone(), random(&mut rng, 1, n)]),
        (Primitive::Mul, vec![a.clone(), b.clone()]),
        (Primitive::Scale(rng.random_range(-2.0..2.0)), vec![a.clone()]),
        (Primitive::ConcatRows, vec![a.clone(), random(&mut rng, k, n)]),
        (Primitive::ConcatCols, vec![a.clone(), random(&mut rng, m, k)]),
        (Primitive::SliceRows { start: rs, end: m }, vec![a.clone()]),
        (Primitive::SliceCols { start: s, end: e }, vec![a.clone()]),
        (Primitive::SoftmaxRows, vec![a.clone()]),
        (
            Primitive::LayerNormRows,
            vec![a.clone(), random(&mut rng, 1, n), random(&mut rng, 1, n)],
        ),
        (Primitive::Gelu, vec![a.clone()]),
        (Primitive::MeanRows, vec![a.clone()]),
        (Primitive::Sum, vec![a]),
    ]
}

#[test]
fn every_primitive_matches_finite_differences_over_many_seeds() {
    let mut checked = 0;
    for seed in 0..120 {
        for (op, inputs) in case(seed) {
            for which in 0..inputs.len() {
                let err = check(op.clone(), &inputs, which, seed);
                assert!(err < 1e-4, "{op:?} input {which} seed {seed}: {err}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 100 * 15);
}

#[test]
fn softmax_known_values() {
    let x: Array<f64> = Array::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
    let y = primitive_forward(&Primitive::SoftmaxRows, &[&x]).unwrap();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (j, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
        assert!((y[(0, j)] - v.exp() / z).abs() < 1e-15);
    }
    for (j, want) in [0.09003, 0.24473, 0.66524].iter().enumerate() {
        assert!((y[(0, j)] - want).abs() < 1e-5);
    }
}

#[test]
fn identity_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random(&mut rng, 3, 5);
    let i = Array::identity(3);
    assert_eq!(primitive_forward(&Primitive::MatMul, &[&i, &m]).unwrap(), m);
}

#[test]
fn adjoints_are_linear_in_paths() {
    // d/dx [f(x) + g(x)] == d/dx f(x) + d/dx g(x)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0 = random(&mut rng, 3, 4);
    let w = random(&mut rng, 4, 2);
    let grad_of = |paths: &[bool; 2]| {
        let mut g = Graph::new();
        let x = g.param(x0.clone());
        let wv = g.constant(w.clone());
        let mut terms = vec![];
        if paths[0] {
            let s = g.softmax_rows(x).unwrap();
            terms.push(weighted(&mut g, s, 1).unwrap());
        }
        if paths[1] {
            let m = g.matmul(x, wv).unwrap();
            let m = g.gelu(m).unwrap();
            terms.push(weighted(&mut g, m, 2).unwrap());
        }
        let out = if terms.len() == 2 { g.add(terms[0], terms[1]).unwrap() } else { terms[0] };
        g.backward(out).unwrap().get(x).unwrap()
    };
    let both = grad_of(&[true, true]);
    let mut sum = grad_of(&[true, false]);
    sum.add_assign(&grad_of(&[false, true]));
    assert!(both.max_abs_diff(&sum) < 1e-14);
}

#[test]
fn backward_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = random(&mut rng, 5, 6);
    let run = || {
        let mut g = Graph::new();
        let x = g.param(x0.clone());
        let t = g.matmul_t(x, x).unwrap();
        let s = g.softmax_rows(t).unwrap();
        let y = weighted(&mut g, s, 9).unwrap();
        g.backward(y).unwrap().get(x).unwrap()
    };
    let (a, b) = (run(), run());
    let bits = |m: &Array<f64>| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_are_shift_invariant(
        rows in 1usize..5,
        cols in 1usize..8,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array::from_fn(rows, cols, |_, _| rng.random_range(-20.0..20.0));
        let y = primitive_forward(&Primitive::SoftmaxRows, &[&x]).unwrap();
        for r in 0..rows {
            prop_assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let shifted = x.map(|v| v + shift);
        let ys = primitive_forward(&Primitive::SoftmaxRows, &[&shifted]).unwrap();
        prop_assert!(y.max_abs_diff(&ys) < 1e-12);
    }

    #[test]
    fn layer_norm_rows_are_standardized(
        rows in 1usize..5,
        cols in 2usize..16,
        seed in any::<u64>(),
        scale in 0.1f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0));
        let ones = Array::filled(1, cols, 1.0);
        let zeros = Array::zeros(1, cols);
        let y = primitive_forward(&Primitive::LayerNormRows, &[&x, &ones, &zeros]).unwrap();
        for r in 0..rows {
            let row = y.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            // the 1e-6 epsilon shrinks the variance slightly for tiny inputs
            let xr = x.row(r);
            let xm = xr.iter().sum::<f64>() / cols as f64;
            let xv = xr.iter().map(|v| (v - xm).powi(2)).sum::<f64>() / cols as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - xv / (xv + 1e-6)).abs() < 1e-6);
            if xv >= 1.0 {
                prop_assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_errors_name_the_op(m in 1usize..4, k in 1usize..4) {
        let a = Array::<f64>::zeros(m, k);
        let b = Array::<f64>::zeros(k + 1, 2);
        let err = primitive_forward(&Primitive::MatMul, &[&a, &b]).unwrap_err().to_string();
        prop_assert!(err.contains("matmul"), "{}", err);
        prop_assert!(err.contains(&format!("{m}x{k}")), "{}", err);
    }
}
