//! Central finite differences against the tape's analytic gradients, op by op.

use paradox_core::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use paradox_core::rng::{stream_rng, Stream};
use rand::Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, Stream::Init, 7);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces any output to a scalar through fixed random weights so that
/// every output element contributes with a distinct coefficient.
fn project(tape: &mut Tape<'_>, out: Var) -> Var {
    let n = tape.value(out).numel();
    let w = random(&[n], 999).into_values();
    let y = tape.mul_const(out, w).unwrap();
    tape.sum(y)
}

fn check<F>(inputs: Vec<Tensor>, f: F)
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Var,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.insert(&format!("x{i}"), t).unwrap())
        .collect();
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
        let out = f(&mut tape, &vars);
        let loss = project(&mut tape, out);
        tape.scalar(loss)
    };
    let grads = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(&store, id)).collect();
        let out = f(&mut tape, &vars);
        let loss = project(&mut tape, out);
        tape.backward(loss).unwrap()
    };
    store.accumulate(&grads).unwrap();
    for &id in &ids {
        let analytic = store.get(id).grad().map(<[f64]>::to_vec).unwrap_or_default();
        for k in 0..store.get(id).numel() {
            let orig = store.get(id).values()[k];
            store.get_mut(id).values_mut()[k] = orig + STEP;
            let up = eval(&store);
            store.get_mut(id).values_mut()[k] = orig - STEP;
            let down = eval(&store);
            store.get_mut(id).values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.get(k).copied().unwrap_or(0.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < TOL, "{} [{k}]: analytic {a} vs numeric {numeric}", store.name(id));
        }
    }
}

#[test]
fn matmul_and_transposed() {
    check(vec![random(&[3, 4], 1), random(&[4, 2], 2)], |t, v| t.matmul(v[0], v[1]).unwrap());
    check(vec![random(&[3, 4], 3), random(&[5, 4], 4)], |t, v| t.matmul_bt(v[0], v[1]).unwrap());
}

#[test]
fn elementwise_and_broadcast() {
    check(vec![random(&[2, 3], 5), random(&[2, 3], 6)], |t, v| t.add(v[0], v[1]).unwrap());
    check(vec![random(&[3, 4], 7), random(&[1, 4], 8)], |t, v| t.add_row(v[0], v[1]).unwrap());
    check(vec![random(&[3, 4], 9), random(&[1, 4], 10)], |t, v| t.mul_row(v[0], v[1]).unwrap());
    check(vec![random(&[2, 3], 11)], |t, v| {
        t.mul_const(v[0], vec![0.5, -2.0, 0.0, 1.0, 3.0, 1.5]).unwrap()
    });
    check(vec![random(&[2, 3], 12)], |t, v| t.scale(v[0], -1.7));
    check(vec![random(&[2, 3], 13)], |t, v| t.gelu(v[0]));
    check(vec![random(&[2, 3], 14)], |t, v| t.exp(v[0]));
}

#[test]
fn softmax_plain_and_causal() {
    check(vec![random(&[3, 5], 15)], |t, v| t.softmax(v[0], false).unwrap());
    check(vec![random(&[4, 4], 16)], |t, v| t.softmax(v[0], true).unwrap());
    check(vec![random(&[2, 4], 17)], |t, v| t.softmax(v[0], true).unwrap());
}

#[test]
fn layer_norm() {
    check(
        vec![random(&[3, 5], 18), random(&[1, 5], 19), random(&[1, 5], 20)],
        |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
    );
}

#[test]
fn gated_mix() {
    check(
        vec![random(&[2, 3], 21), random(&[2, 3], 22), random(&[1, 1], 23)],
        |t, v| t.gated_mix(v[0], v[1], v[2]).unwrap(),
    );
}

#[test]
fn gather_slice_concat() {
    check(vec![random(&[5, 3], 24)], |t, v| t.gather(v[0], &[4, 0, 4, 2]).unwrap());
    check(vec![random(&[3, 6], 25)], |t, v| t.slice_cols(v[0], 2, 3).unwrap());
    check(vec![random(&[3, 2], 26), random(&[3, 4], 27)], |t, v| t.concat_cols(&[v[0], v[1]]).unwrap());
    check(vec![random(&[1, 4], 28), random(&[3, 4], 29)], |t, v| t.concat_rows(&[v[0], v[1]]).unwrap());
}

#[test]
fn losses() {
    check(vec![random(&[4, 6], 30)], |t, v| t.cross_entropy(v[0], &[1, 0, 5, 2], Some(0)).unwrap());
    check(vec![random(&[1, 5], 31), random(&[1, 5], 32)], |t, v| {
        t.kl_standard_normal(v[0], v[1]).unwrap()
    });
    check(vec![random(&[2, 3], 33)], |t, v| t.sum(v[0]));
}

#[test]
fn shared_use_accumulates() {
    // x is used three times; gradients from every use must add up.
    check(vec![random(&[3, 3], 34)], |t, v| {
        let a = t.matmul(v[0], v[0]).unwrap();
        let b = t.softmax(v[0], false).unwrap();
        let c = t.add(a, b).unwrap();
        t.add(c, v[0]).unwrap()
    });
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut store = ParamStore::new();
    let x = store.insert("x", random(&[3, 4], 40)).unwrap();
    let grad_of = |which: u8| {
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let a = tape.softmax(v, false).unwrap();
        let a = tape_dup(&mut tape, a);
        let a = tape.sum(a);
        let g = tape.gelu(v);
        let b = tape.sum(g);
        let loss = match which {
            0 => a,
            1 => b,
            _ => tape.add(a, b).unwrap(),
        };
        let grads = tape.backward(loss).unwrap();
        let mut s = store.clone();
        s.zero_grads();
        s.accumulate(&grads).unwrap();
        s.get(x).grad().unwrap().to_vec()
    };
    let (a, b, ab) = (grad_of(0), grad_of(1), grad_of(2));
    for k in 0..a.len() {
        assert!((a[k] + b[k] - ab[k]).abs() < 1e-12);
    }
}

fn tape_dup(tape: &mut Tape<'_>, v: Var) -> Var {
    let w: Vec<f64> = (0..tape.value(v).numel()).map(|i| i as f64 - 2.0).collect();
    tape.mul_const(v, w).unwrap()
}

#[test]
fn forward_ops_leave_inputs_untouched() {
    let mut store = ParamStore::new();
    let before = random(&[3, 3], 50);
    let x = store.insert("x", before.clone()).unwrap();
    {
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let s = tape.softmax(v, true).unwrap();
        let m = tape.matmul(s, v).unwrap();
        let loss = tape.sum(m);
        tape.backward(loss).unwrap();
    }
    assert_eq!(store.get(x).values(), before.values());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let v = tape.constant(random(&[2, 2], 60));
    assert!(matches!(tape.backward(v), Err(paradox_core::Error::Contract(_))));
}

proptest::proptest! {
    #[test]
    fn softmax_rows_are_distributions(
        vals in proptest::collection::vec(-1000.0f64..1000.0, 12),
        causal in proptest::bool::ANY,
    ) {
        let x = Tensor::new(&[3, 4], vals).unwrap();
        let y = paradox_core::numerics::ops::softmax(&x, causal).unwrap();
        for r in 0..3 {
            let row = y.row(r);
            proptest::prop_assert!(row.iter().all(|&p| p >= 0.0 && p.is_finite()));
            proptest::prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
