use std::collections::BTreeMap;

use condext::autodiff::{Dual, Scalar};
use condext::expr::{BinOp, Compiled, Expr, Func};
use proptest::prelude::*;

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000, 0u32..4).prop_map(|(m, e)| Expr::Num(m as f64 / 10f64.powi(e as i32))),
        prop_oneof![Just("x1"), Just("x2"), Just("u1")].prop_map(|s| Expr::Var(s.to_string())),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone(), 0usize..5).prop_map(|(a, b, k)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][k];
                Expr::Binary(op, Box::new(a), Box::new(b))
            }),
            (inner, 0usize..6).prop_map(|(e, k)| Expr::Call(Func::ALL[k], Box::new(e))),
        ]
    })
}

/// Smooth expressions that stay finite on the sampling box.
fn arb_smooth() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (1u32..9).prop_map(|k| format!("{}", k as f64 / 4.0)),
        prop_oneof![Just("x1"), Just("x2"), Just("x3")].prop_map(str::to_string),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (1 + ({b})^2)")),
            (inner.clone(), 1i32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("exp(-({a})^2)")),
            inner.prop_map(|a| format!("sqrt(1 + ({a})^2)")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_form_reparses_to_the_same_tree(e in arb_expr()) {
        let printed = e.to_string();
        let back = Expr::parse(&printed).unwrap();
        prop_assert_eq!(back, e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dual_partials_match_central_differences(
        src in arb_smooth(),
        x in proptest::collection::vec(-1.5f64..1.5, 3),
    ) {
        let c = Compiled::new(&src, &["x1", "x2", "x3"], &BTreeMap::new()).unwrap();
        let y = c.eval(&Dual::variables(&x)).unwrap();
        prop_assert_eq!(y.value, c.eval(&x).unwrap());
        for i in 0..3 {
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (c.eval(&xp).unwrap() - c.eval(&xm).unwrap()) / (2.0 * h);
            let ad = y.partial(i);
            prop_assert!((ad - fd).abs() <= 1e-6 * (1.0 + ad.abs()), "{src}: d{i} ad={ad} fd={fd}");
        }
    }

    #[test]
    fn second_partials_are_symmetric(
        src in arb_smooth(),
        x in proptest::collection::vec(-1.5f64..1.5, 3),
    ) {
        let c = Compiled::new(&src, &["x1", "x2", "x3"], &BTreeMap::new()).unwrap();
        let inner = Dual::variables(&x);
        let y = c.eval(&Dual::variables(&inner)).unwrap();
        for i in 0..3 {
            for j in 0..i {
                let a = y.partial(i).partial(j);
                let b = y.partial(j).partial(i);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{src}: {a} vs {b}");
            }
            prop_assert_eq!(y.partial(i).re(), y.value.partial(i));
        }
    }
}
