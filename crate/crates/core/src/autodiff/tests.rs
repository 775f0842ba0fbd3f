use super::*;
use proptest::prelude::*;

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::from_segments([("x", Tensor::vector(v))])
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    num / den
}

type Prog = fn(&mut Tape, Var) -> Result<Var, AutodiffError>;

// Each primitive reduced to a scalar through a fixed weighted sum so the
// backward pass exercises a non-trivial upstream gradient.
fn reduce(t: &mut Tape, y: Var) -> Result<Var, AutodiffError> {
    let n = t.value(y).len();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * i as f64).collect();
    let (r, c) = t.value(y).shape();
    let wv = t.leaf(Tensor::new(r, c, w));
    t.dot(y, wv)
}

fn primitive_programs() -> Vec<(&'static str, Prog)> {
    vec![
        ("affine", |t, x| {
            let n = t.value(x).len();
            let w = t.leaf(Tensor::new(3, n, (0..3 * n).map(|i| (i as f64 * 0.37).sin()).collect()));
            let b = t.leaf(Tensor::vector(vec![0.1, -0.2, 0.3]));
            let y = t.affine(w, x, Some(b))?;
            reduce(t, y)
        }),
        ("relu", |t, x| {
            let y = t.relu(x);
            reduce(t, y)
        }),
        ("softmax", |t, x| {
            let y = t.softmax(x, 1.7)?;
            reduce(t, y)
        }),
        ("log_softmax", |t, x| {
            let y = t.log_softmax(x, 0.6)?;
            reduce(t, y)
        }),
        ("log", |t, x| {
            let sq = t.square(x);
            let p = t.add_scalar(sq, 0.5);
            let y = t.log(p);
            reduce(t, y)
        }),
        ("exp", |t, x| {
            let y = t.exp(x);
            reduce(t, y)
        }),
        ("sum", |t, x| {
            let s = t.sum(x);
            let y = t.square(s);
            Ok(y)
        }),
        ("mul", |t, x| {
            let y = t.mul(x, x)?;
            reduce(t, y)
        }),
        ("mul_scalar", |t, x| {
            let s = t.index(x, 0)?;
            let y = t.mul(x, s)?;
            reduce(t, y)
        }),
        ("square", |t, x| {
            let y = t.square(x);
            reduce(t, y)
        }),
        ("div", |t, x| {
            let sq = t.square(x);
            let d = t.add_scalar(sq, 1.0);
            let y = t.div(x, d)?;
            reduce(t, y)
        }),
        ("div_scalar", |t, x| {
            let s = t.sum(x);
            let sq = t.square(s);
            let d = t.add_scalar(sq, 2.0);
            let y = t.div(x, d)?;
            reduce(t, y)
        }),
        ("sigmoid", |t, x| {
            let y = t.sigmoid(x);
            reduce(t, y)
        }),
        ("clip", |t, x| {
            let y = t.clip(x, -0.8, 0.9);
            reduce(t, y)
        }),
        ("sub_sqrt_transpose_row", |t, x| {
            let sq = t.square(x);
            let p = t.add_scalar(sq, 1.0);
            let r = t.sqrt(p);
            let d = t.sub(r, x)?;
            let tr = t.transpose(d);
            let row = t.row(tr, 0)?;
            reduce(t, row)
        }),
    ]
}

fn check_primitive(name: &str, prog: Prog, x: &[f64]) {
    let input = pv(x.to_vec());
    let (_, g) = backward_grad(&input, |t, p| prog(t, p.vars[0])).unwrap();
    let f = |p: &ParamVector| {
        let rec = record_and_eval(&[p], |t, v| prog(t, v[0].vars[0])).unwrap();
        rec.value().data[0]
    };
    let fd = finite_diff_grad(f, &input, 1e-5).unwrap();
    let err = rel_err(g.values(), &fd);
    assert!(err < 1e-4, "{name}: rel err {err}, ad {:?} fd {fd:?}", g.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_primitive_matches_finite_differences(x in proptest::collection::vec(-2.0f64..2.0, 4..7)) {
        // keep clip and relu away from their kinks
        let x: Vec<f64> = x.iter().map(|v| {
            let mut v = *v;
            for k in [0.0, -0.8, 0.9] {
                if (v - k).abs() < 1e-3 { v += 0.01; }
            }
            v
        }).collect();
        for (name, prog) in primitive_programs() {
            check_primitive(name, prog, &x);
        }
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(x in proptest::collection::vec(-1.5f64..1.5, 3..6)) {
        let input = pv(x);
        let (_, g1) = backward_grad(&input, |t, p| { let y = t.exp(p.vars[0]); Ok(t.sum(y)) }).unwrap();
        let (_, g2) = backward_grad(&input, |t, p| { let y = t.log_softmax(p.vars[0], 2.0)?; t.index(y, 0) }).unwrap();
        let (_, g12) = backward_grad(&input, |t, p| {
            let y = t.exp(p.vars[0]);
            let a = t.sum(y);
            let z = t.log_softmax(p.vars[0], 2.0)?;
            let b = t.index(z, 0)?;
            t.add(a, b)
        }).unwrap();
        for i in 0..g12.len() {
            prop_assert!((g12.values()[i] - g1.values()[i] - g2.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn re_evaluation_is_bit_identical(x in proptest::collection::vec(-3.0f64..3.0, 2..8), beta in 0.1f64..5.0) {
        let input = pv(x);
        let run = || record_and_eval(&[&input], |t, p| {
            let s = t.softmax(p[0].vars[0], beta)?;
            let l = t.log(s);
            Ok(t.sum(l))
        }).unwrap().value().data[0].to_bits();
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn spec_examples() {
    let mut t = Tape::new();
    let q = t.vector(vec![3.3, 3.3]);
    let s = t.softmax(q, 7.0).unwrap();
    assert_eq!(t.value(s).data, vec![0.5, 0.5]);

    let w = t.leaf(Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
    let b = t.leaf(Tensor::vector(vec![0.0, 0.0]));
    let x = t.vector(vec![-4.0, 9.0]);
    let y = t.affine(w, x, Some(b)).unwrap();
    assert_eq!(t.value(y).data, vec![-4.0, 9.0]);

    let r = t.vector(vec![-1.0, 2.0]);
    let r = t.relu(r);
    assert_eq!(t.value(r).data, vec![0.0, 2.0]);

    let (_, g) = backward_grad(&pv(vec![1.0, 2.0]), |t, p| {
        let sq = t.square(p.vars[0]);
        Ok(t.sum(sq))
    })
    .unwrap();
    assert_eq!(g.values(), &[2.0, 4.0]);

    let (_, g) = backward_grad(&pv(vec![0.0, 0.0]), |t, p| {
        let l = t.log_softmax(p.vars[0], 1.0)?;
        t.index(l, 0)
    })
    .unwrap();
    assert!((g.values()[0] - 0.5).abs() < 1e-15 && (g.values()[1] + 0.5).abs() < 1e-15);
}

#[test]
fn shape_errors_name_the_primitive() {
    let mut t = Tape::new();
    let w = t.leaf(Tensor::zeros(2, 3));
    let x = t.vector(vec![1.0, 2.0]);
    let err = t.affine(w, x, None).unwrap_err();
    assert!(matches!(err, AutodiffError::Shape { op: "affine", .. }));
    let a = t.vector(vec![1.0, 2.0, 3.0]);
    let err = t.mul(a, x).unwrap_err();
    assert!(err.to_string().contains("`mul`"));
    let err = t.softmax(w, 1.0).unwrap_err();
    assert!(matches!(err, AutodiffError::Shape { op: "softmax", .. }));
}

#[test]
fn non_scalar_output_is_rejected() {
    let mut t = Tape::new();
    let x = t.vector(vec![1.0, 2.0]);
    let y = t.exp(x);
    assert!(matches!(t.backward(y), Err(AutodiffError::NonScalarOutput { shape: (2, 1) })));
}

#[test]
fn finite_diff_examples() {
    let x = pv(vec![1.0, 2.0]);
    assert_eq!(finite_diff_grad(|_| 4.2, &x, 1e-3).unwrap(), vec![0.0, 0.0]);
    let a = [0.25, -3.0];
    let g = finite_diff_grad(|p| p.values()[0] * a[0] + p.values()[1] * a[1], &x, 1e-3).unwrap();
    assert!(rel_err(&g, &a) < 1e-12);
    let g = finite_diff_grad(|p| p.values().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
    assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    assert!(matches!(finite_diff_grad(|_| 0.0, &x, 0.0), Err(AutodiffError::InvalidStep(_))));
    let err = finite_diff_grad(|p| if p.values()[1] > 2.0 { f64::NAN } else { 0.0 }, &x, 1e-3).unwrap_err();
    assert_eq!(err, AutodiffError::NonFinite { coordinate: 1 });
}

#[test]
fn batched_affine_matches_columnwise() {
    let mut t = Tape::new();
    let w = t.leaf(Tensor::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]));
    let b = t.leaf(Tensor::vector(vec![0.1, 0.2]));
    let x = t.leaf(Tensor::new(3, 2, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]));
    let y = t.affine(w, x, Some(b)).unwrap();
    assert_eq!(t.value(y).data, vec![14.1, 32.1, 0.2, -1.3]);
}
