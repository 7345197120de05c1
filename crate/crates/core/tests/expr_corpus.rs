use ddlaws::expr::{parse, BinOp, BinaryFn, ExprAst, UnaryFn};
use ddlaws::Error;
use proptest::prelude::*;

const CORPUS: &str = include_str!("fixtures/expressions.txt");
const MALFORMED: &str = include_str!("fixtures/malformed.txt");

fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#'))
}

/// Straight tree walk; `None` marks a domain fault (log or sqrt out of
/// range, division by zero).
fn reference(ast: &ExprAst, y: f64) -> Option<f64> {
    match ast {
        ExprAst::Num(v) => Some(*v),
        ExprAst::Var => Some(y),
        ExprAst::Neg(a) => reference(a, y).map(|v| -v),
        ExprAst::Bin(op, a, b) => {
            let (l, r) = (reference(a, y)?, reference(b, y)?);
            Some(match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div if r == 0.0 => return None,
                BinOp::Div => l / r,
                BinOp::Pow => l.powf(r),
            })
        }
        ExprAst::Call1(f, a) => {
            let v = reference(a, y)?;
            Some(match f {
                UnaryFn::Exp => v.exp(),
                UnaryFn::Log if v <= 0.0 => return None,
                UnaryFn::Log => v.ln(),
                UnaryFn::Sqrt if v < 0.0 => return None,
                UnaryFn::Sqrt => v.sqrt(),
                UnaryFn::Abs => v.abs(),
            })
        }
        ExprAst::Call2(f, a, b) => {
            let (l, r) = (reference(a, y)?, reference(b, y)?);
            Some(match f {
                BinaryFn::Min => l.min(r),
                BinaryFn::Max => l.max(r),
                BinaryFn::Pow => l.powf(r),
                BinaryFn::Indicator => f64::from(u8::from(l < y && y <= r)),
            })
        }
    }
}

pub fn corpus_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for text in lines(CORPUS) {
        let e = match parse(text) {
            Ok(e) => e,
            Err(err) => {
                failures.push(format!("{text:?}: {err}"));
                continue;
            }
        };
        let printed = e.to_string();
        match parse(&printed) {
            Ok(again) if again.ast == e.ast => {}
            other => failures.push(format!("{text:?} printed as {printed:?} reparsed to {other:?}")),
        }
        for y in [-2.5, -1.0, 0.0, 0.3, 1.0, 1.5, 2.0, 7.25] {
            let r = reference(&e.ast, y).filter(|v| v.is_finite());
            match e.eval(y) {
                Ok(v) if Some(v.to_bits()) == r.map(f64::to_bits) => {}
                Err(Error::NonFinite(_)) if r.is_none() => {}
                other => failures.push(format!("{text:?} at {y}: {other:?} vs reference {r:?}")),
            }
        }
    }
    failures
}

pub fn malformed_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for line in lines(MALFORMED) {
        let (offset, text) = line.split_once('\t').expect("offset<TAB>input");
        let want: usize = offset.parse().expect("numeric offset");
        match parse(text) {
            Err(Error::Syntax { offset, .. }) if offset == want => {}
            other => failures.push(format!("{text:?}: expected offset {want}, got {other:?}")),
        }
    }
    failures
}

#[test]
fn corpus_has_fifty_expressions() {
    assert_eq!(lines(CORPUS).count(), 50);
}

#[test]
fn corpus_round_trips_and_matches_reference() {
    let f = corpus_failures();
    assert!(f.is_empty(), "{f:#?}");
}

#[test]
fn malformed_inputs_report_offsets() {
    let f = malformed_failures();
    assert!(f.is_empty(), "{f:#?}");
}

fn arb_ast() -> impl Strategy<Value = ExprAst> {
    let leaf = prop_oneof![(0.0f64..100.0).prop_map(ExprAst::Num), Just(ExprAst::Var),];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| ExprAst::Neg(Box::new(a))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| ExprAst::Bin(op, Box::new(a), Box::new(b))),
            (
                prop_oneof![
                    Just(UnaryFn::Exp),
                    Just(UnaryFn::Log),
                    Just(UnaryFn::Sqrt),
                    Just(UnaryFn::Abs)
                ],
                inner.clone()
            )
                .prop_map(|(f, a)| ExprAst::Call1(f, Box::new(a))),
            (
                prop_oneof![Just(BinaryFn::Min), Just(BinaryFn::Max), Just(BinaryFn::Pow)],
                inner.clone(),
                inner
            )
                .prop_map(|(f, a, b)| ExprAst::Call2(f, Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #[test]
    fn printed_trees_reparse_identically(ast in arb_ast(), y in -10.0f64..10.0) {
        let e = ddlaws::expr::Expr { ast, var: Some("y".into()) };
        let again = parse(&e.to_string()).unwrap();
        prop_assert_eq!(&again.ast, &e.ast);
        let r = reference(&e.ast, y).filter(|v| v.is_finite());
        prop_assert_eq!(e.eval(y).ok().map(f64::to_bits), r.map(f64::to_bits));
    }
}
