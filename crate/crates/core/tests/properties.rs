use std::sync::Arc;

use proptest::prelude::*;

use selpde::barriers::{build_bracket, BracketMode};
use selpde::expr::{parse_expression, Point};
use selpde::global::RadialBarrier;
use selpde::grid::{DiscreteField, Grid, RadialGrid, RectGrid};
use selpde::linsolve::solve_linear;
use selpde::operator::build_laplacian;
use selpde::problem::{DomainSpec, Problem};
use selpde::transforms::{forward_map, inverse_map, TransformSpec};
use selpde::truncated::Discretization;

/// Test-side expression tree with its own evaluator.
#[derive(Debug, Clone)]
enum T {
    Num(f64),
    R,
    X(usize),
    Neg(Box<T>),
    Bin(char, Box<T>, Box<T>),
    Call(&'static str, Vec<T>),
}

impl T {
    fn text(&self) -> String {
        match self {
            T::Num(v) => format!("{v}"),
            T::R => "r".into(),
            T::X(i) => format!("x{i}"),
            T::Neg(a) => format!("(-{})", a.text()),
            T::Bin(op, a, b) => format!("({} {op} {})", a.text(), b.text()),
            T::Call(f, args) => {
                let inner: Vec<String> = args.iter().map(T::text).collect();
                format!("{f}({})", inner.join(", "))
            }
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            T::Num(v) => *v,
            T::R => r,
            T::X(i) => x[i - 1],
            T::Neg(a) => -a.eval(x),
            T::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            T::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(x)).collect();
                match *f {
                    "exp" => v[0].exp(),
                    "sin" => v[0].sin(),
                    "cos" => v[0].cos(),
                    "abs" => v[0].abs(),
                    "sqrt" => v[0].sqrt(),
                    "min" => v[0].min(v[1]),
                    _ => v[0].max(v[1]),
                }
            }
        }
    }
}

fn tree() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(|v| T::Num((v * 100.0).round() / 100.0)),
        Just(T::R),
        (1usize..=3).prop_map(T::X),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| T::Neg(Box::new(a))),
            (prop::sample::select(vec!['+', '-', '*', '/']), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| T::Bin(op, Box::new(a), Box::new(b))),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| T::Bin('^', Box::new(a), Box::new(T::Num(k as f64)))),
            (prop::sample::select(vec!["exp", "sin", "cos", "abs"]), inner.clone())
                .prop_map(|(f, a)| T::Call(f, vec![T::Call("min", vec![a, T::Num(3.0)])])),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner)
                .prop_map(|(f, a, b)| T::Call(f, vec![a, b])),
        ]
    })
}

fn close(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a.is_infinite() || b.is_infinite() {
        return a == b || (a.abs() > 1e300 && b.abs() > 1e300);
    }
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expression_parse_and_display_round_trip(t in tree(), seed in any::<u64>()) {
        let src = t.text();
        let parsed = parse_expression(&src).unwrap();
        let again = parse_expression(&parsed.to_string()).unwrap();
        let mut s = seed;
        for _ in 0..100 {
            let x: Vec<f64> = (0..3)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
                })
                .collect();
            let want = t.eval(&x);
            let got = parsed.eval(Point::cartesian(&x));
            prop_assert!(close(want, got), "{src}: {want} vs {got} at {x:?}");
            prop_assert!(close(got, again.eval(Point::cartesian(&x))), "{src} -> {parsed}");
        }
    }

    #[test]
    fn max_principle_radial(
        f in prop::collection::vec(0.0f64..10.0, 65),
        bc in 0.0f64..5.0,
        dim in 2usize..6,
    ) {
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 65).unwrap()));
        let op = build_laplacian(&grid, dim).unwrap();
        prop_assert!(op.is_m_matrix());
        let rhs = DiscreteField::new(grid.clone(), f).unwrap();
        let mut b = vec![0.0; 65];
        b[64] = bc;
        let u = solve_linear(&op, &rhs, &b).unwrap();
        prop_assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn max_principle_rect(f in prop::collection::vec(0.0f64..10.0, 17 * 13), bc in prop::collection::vec(0.0f64..3.0, 17 * 13)) {
        let grid = Arc::new(Grid::Rect(RectGrid::uniform((0.0, 2.0), (0.0, 1.0), 17, 13).unwrap()));
        let op = build_laplacian(&grid, 2).unwrap();
        let rhs = DiscreteField::new(grid.clone(), f).unwrap();
        let u = solve_linear(&op, &rhs, &bc).unwrap();
        prop_assert!(u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn transform_round_trip_reverses_order(
        u in prop::collection::vec(0.01f64..50.0, 33),
        bump in prop::collection::vec(0.0f64..5.0, 33),
        delta in 1.05f64..6.0,
    ) {
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 33).unwrap()));
        let lo = DiscreteField::new(grid.clone(), u.clone()).unwrap();
        let hi = DiscreteField::new(grid, u.iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        for spec in [TransformSpec::Exponential, TransformSpec::power(delta).unwrap()] {
            let (wl, wh) = (forward_map(&spec, &lo).unwrap(), forward_map(&spec, &hi).unwrap());
            for k in 0..33 {
                prop_assert!(wh.values()[k] <= wl.values()[k]);
            }
            let back = inverse_map(&spec, &wl).unwrap();
            for (x, y) in back.values().iter().zip(lo.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * y.max(1.0), "{spec}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn jacobian_matches_directional_difference(
        amp in 0.1f64..3.0,
        dir in prop::collection::vec(-1.0f64..1.0, 49),
        cval in 0.0f64..4.0,
        eps in 0.01f64..0.5,
    ) {
        let p = Problem::from_exprs(3, "2 + r^2", &format!("{cval}"), DomainSpec::Ball { radius: 1.0 }).unwrap();
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 49).unwrap()));
        let disc = Discretization::new(&p, &grid).unwrap();
        let u: Vec<f64> = (0..49).map(|k| amp * (1.0 - grid.radius_of(k).powi(2)) + 0.01).collect();
        let mut d = dir.clone();
        d[48] = 0.0;
        let jac = disc.jacobian(&u, eps).unwrap();
        let jd = jac.apply(&d);
        let h = 1e-6;
        let shift = |s: f64| -> Vec<f64> { u.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
        let (rp, rm) = (disc.residual(&shift(h), eps).unwrap(), disc.residual(&shift(-h), eps).unwrap());
        for k in 0..48 {
            let fd = (rp[k] - rm[k]) / (2.0 * h);
            prop_assert!((fd - jd[k]).abs() <= 1e-4 * (1.0 + fd.abs()), "node {k}: {fd} vs {}", jd[k]);
        }
    }

    #[test]
    fn bracket_is_ordered(a0 in 0.1f64..10.0, a1 in 0.0f64..5.0, c0 in 0.0f64..5.0, eps in 0.0f64..1.0) {
        let p = Problem::from_exprs(
            3,
            &format!("{a0} + {a1}*r^2"),
            &format!("{c0} + 0.5*r"),
            DomainSpec::Ball { radius: 1.0 },
        )
        .unwrap();
        let grid = Arc::new(Grid::Radial(RadialGrid::uniform(1.0, 65).unwrap()));
        for mode in [BracketMode::Eigen, BracketMode::Poisson, BracketMode::Combined] {
            let b = build_bracket(&p, &grid, eps, mode).unwrap();
            prop_assert!(b.check_order().is_ok());
            prop_assert!(b.sigma1 > 0.0 && b.sigma1 <= 1.0);
        }
    }

    #[test]
    fn barrier_bounded_and_decreasing(scale in 0.01f64..10.0, q in 3.5f64..8.0) {
        let phi: selpde::global::Envelope = Arc::new(move |r: f64| scale * (1.0 + r).powf(-q));
        let b = RadialBarrier::new(phi, 5).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..12 {
            let r = 0.05 * 2f64.powi(i);
            let w = b.w(r).unwrap();
            prop_assert!(w > 0.0 && w <= b.k() * (1.0 + 1e-9));
            prop_assert!(w < prev);
            prev = w;
        }
    }
}
