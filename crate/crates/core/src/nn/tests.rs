use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Central-difference check of `loss` against its tape gradient.
pub(crate) fn grad_check(
    params: &mut ParameterSet<f64>,
    loss: &dyn Fn(&mut Tape<'_, f64>) -> Var,
    tol: f64,
) -> f64 {
    let grads = {
        let mut tape = Tape::new(params);
        let l = loss(&mut tape);
        tape.backward(l).unwrap()
    };
    let eval = |p: &ParameterSet<f64>| {
        let mut tape = Tape::new(p);
        let l = loss(&mut tape);
        tape.value(l).unwrap()[0]
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..params.tensors.len() {
        for i in 0..params.tensors[k].data.len() {
            let orig = params.tensors[k].data[i];
            params.tensors[k].data[i] = orig + h;
            let up = eval(params);
            params.tensors[k].data[i] = orig - h;
            let down = eval(params);
            params.tensors[k].data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.tensors[k].data[i];
            let err = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6);
            assert!(
                err <= tol,
                "{}[{i}]: analytic {an} vs fd {fd}",
                params.names[k]
            );
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn identity_layer() {
    let mut p = ParameterSet::<f64>::new();
    let w = p.add("w", 3, 3);
    for i in 0..3 {
        p.get_mut(w).data[i * 3 + i] = 1.0;
    }
    let b = p.add("b", 3, 1);
    let mut tape = Tape::new(&p);
    let x = tape.input(vec![0.5, -2.0, 3.0]);
    let y = tape.affine(w, Some(b), x).unwrap();
    assert_eq!(tape.value(y).unwrap(), &[0.5, -2.0, 3.0]);
}

#[test]
fn known_weight_column() {
    let mut p = ParameterSet::<f64>::new();
    let w = p.add("w", 2, 2);
    p.get_mut(w).data.copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    let mut tape = Tape::new(&p);
    let x = tape.input(vec![1.0, 0.0]);
    let y = tape.affine(w, None, x).unwrap();
    assert_eq!(tape.value(y).unwrap(), &[1.0, 3.0]);
    let bad = tape.input(vec![1.0]);
    assert!(matches!(tape.affine(w, None, bad), Err(NnError::Shape(_))));
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p = ParameterSet::<f64>::new();
    let mlp = Mlp::new(&mut p, "m", &[4, 6, 5, 3], 1.0, &mut rng);
    for t in &mut p.tensors {
        t.data
            .iter_mut()
            .for_each(|v| *v += rng.gen_range(-0.1..0.1));
    }
    let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = vec![0.2, 0.5, 0.3];
    {
        let mut tape = Tape::new(&p);
        let xi = tape.input(x.clone());
        let y = mlp.forward(&mut tape, xi).unwrap();
        assert!(tape.value(y).unwrap().iter().all(|v| v.is_finite()));
    }
    let loss = |tape: &mut Tape<'_, f64>| {
        let xi = tape.input(x.clone());
        let y = mlp.forward(tape, xi).unwrap();
        tape.softmax_xent(y, target.clone()).unwrap()
    };
    grad_check(&mut p, &loss, 1e-4);
}

/// Plain LSTM recurrence without the tape.
fn reference_lstm(p: &ParameterSet<f64>, l: &Lstm, seq: &[f64]) -> Vec<f64> {
    let n = l.hidden;
    let (wi, wh, b) = (
        &p.get(l.w_ih).data,
        &p.get(l.w_hh).data,
        &p.get(l.bias).data,
    );
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for &x in seq {
        let z: Vec<f64> = (0..4 * n)
            .map(|r| wi[r] * x + b[r] + (0..n).map(|k| wh[r * n + k] * h[k]).sum::<f64>())
            .collect();
        for k in 0..n {
            let (i, f, g, o) = (
                sig(z[k]),
                sig(z[n + k]),
                z[2 * n + k].tanh(),
                sig(z[3 * n + k]),
            );
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }
    h
}

#[test]
fn lstm_matches_reference_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ParameterSet::<f64>::new();
    let l = Lstm::new(&mut p, "l", 5, &mut rng);
    for v in &mut p.get_mut(l.bias).data {
        *v = rng.gen_range(-0.5..0.5);
    }
    let seq: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut tape = Tape::new(&p);
    let h = l.forward(&mut tape, &seq, 6).unwrap();
    let reference = reference_lstm(&p, &l, &seq);
    for (a, b) in tape.value(h).unwrap().iter().zip(&reference) {
        assert!((a - b).abs() < 1e-14);
    }
    let again = l.forward(&mut tape, &seq, 6).unwrap();
    assert_eq!(tape.value(h).unwrap(), tape.value(again).unwrap());
    assert!(matches!(
        l.forward(&mut tape, &seq[..5], 6),
        Err(NnError::Shape(_))
    ));
}

#[test]
fn zero_lstm_gives_zero_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ParameterSet::<f64>::new();
    let l = Lstm::new(&mut p, "l", 4, &mut rng);
    p.zero_all();
    let mut tape = Tape::new(&p);
    let h = l.forward(&mut tape, &[0.0; 6], 6).unwrap();
    assert!(tape.value(h).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut p = ParameterSet::<f64>::new();
    let l = Lstm::new(&mut p, "l", 3, &mut rng);
    let head = Mlp::new(&mut p, "h", &[3, 4], 1.0, &mut rng);
    let seq: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |tape: &mut Tape<'_, f64>| {
        let h = l.forward(tape, &seq, 6).unwrap();
        let y = head.forward(tape, h).unwrap();
        tape.softmax_xent(y, vec![0.0, 1.0, 0.0, 0.0]).unwrap()
    };
    grad_check(&mut p, &loss, 1e-4);
}

#[test]
fn scalar_product_gradient() {
    let mut p = ParameterSet::<f64>::new();
    let w = p.add("w", 1, 1);
    p.fill(w, 0.3);
    let mut tape = Tape::new(&p);
    let x = tape.input(vec![2.0]);
    let l = tape.affine(w, None, x).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(w).data[0], 2.0);
}

#[test]
fn softmax_xent_logit_gradient_sums_to_zero() {
    let p = ParameterSet::<f64>::new();
    let mut tape = Tape::new(&p);
    let logits = tape.input(vec![0.1, 2.0, -1.0]);
    let probs = softmax(&[0.1, 2.0, -1.0]);
    let l = tape.softmax_xent(logits, probs.clone()).unwrap();
    // gradient w.r.t. logits seen through a product node
    let loss_val = tape.value(l).unwrap()[0];
    let entropy: f64 = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
    assert!((loss_val - entropy).abs() < 1e-12);
    let mut q = ParameterSet::<f64>::new();
    let w = q.add("w", 3, 3);
    for i in 0..3 {
        q.get_mut(w).data[i * 3 + i] = 1.0;
    }
    let mut tape = Tape::new(&q);
    let x = tape.input(vec![0.1, 2.0, -1.0]);
    let y = tape.affine(w, None, x).unwrap();
    let l = tape.softmax_xent(y, probs).unwrap();
    let g = tape.backward(l).unwrap();
    // dL/dW[i][j] = dL/dy_i x_j; with x = (1, 1, 1) columns would sum the logits gradient
    let gy: Vec<f64> = (0..3).map(|i| g.get(w).data[i * 3 + 1] / 2.0).collect();
    assert!(gy.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn foreign_variable_is_detached() {
    let p = ParameterSet::<f64>::new();
    let mut a = Tape::new(&p);
    let mut b = Tape::new(&p);
    let x = a.input(vec![1.0]);
    let _ = b.input(vec![1.0]);
    assert_eq!(b.backward(x), Err(NnError::Detached));
    let v = a.input(vec![1.0, 2.0]);
    assert!(matches!(a.backward(v), Err(NnError::Shape(_))));
}

#[test]
fn squared_norm_and_grad_scale() {
    let mut p = ParameterSet::<f64>::new();
    let w = p.add("w", 2, 1);
    p.get_mut(w).data.copy_from_slice(&[3.0, -1.0]);
    let mut tape = Tape::new(&p);
    let n = tape.squared_norm(&[w]);
    assert_eq!(tape.value(n).unwrap(), &[10.0]);
    let s = tape.grad_scale(n, 0.5).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(w).data, vec![3.0, -1.0]);
}

#[test]
fn f32_forward_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = ParameterSet::<f32>::new();
    let mlp = Mlp::new(&mut p, "m", &[2, 3, 2], 1.0, &mut rng);
    let mut tape = Tape::new(&p);
    let x = tape.input(vec![0.5f32, -0.5]);
    let y = mlp.forward(&mut tape, x).unwrap();
    let l = tape.softmax_xent(y, vec![1.0, 0.0]).unwrap();
    assert!(tape.backward(l).unwrap().is_finite());
}
