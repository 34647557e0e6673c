mod common;

use common::*;
use powerjsr::jsr::{brute_force_bounds, gripenberg_estimate, DEFAULT_PRODUCT_BUDGET};
use powerjsr::power::{build_a, build_update_set, dba_step, dpc_step, dpc_step_from_sinr, sinr};
use powerjsr::{CSchedule, GainMatrix, Matrix, NormKind, PowerVector, Scheme, Sinr};
use proptest::prelude::*;

fn sparse_gain(m: usize) -> impl Strategy<Value = GainMatrix> {
    (
        prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0..1.0f64], m * m),
        prop::collection::vec(0.1..10.0f64, m),
    )
        .prop_map(move |(mut v, d)| {
            for i in 0..m {
                v[i * m + i] = d[i];
            }
            GainMatrix::new(Matrix::from_row_major(m, v).unwrap()).unwrap()
        })
}

fn power(m: usize, lo: f64) -> impl Strategy<Value = PowerVector> {
    prop::collection::vec(lo..10.0f64, m).prop_map(|v| PowerVector::new(v).unwrap())
}

fn gain_and_power(positive: bool) -> impl Strategy<Value = (GainMatrix, PowerVector)> {
    (1usize..=6).prop_flat_map(move |m| {
        if positive {
            (gain(m, 0.01..1.0).boxed(), power(m, 0.01))
        } else {
            (sparse_gain(m).boxed(), power(m, 0.0))
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sinr_ignores_uniform_scaling((g, p) in gain_and_power(false), alpha in 1e-3..1e3f64) {
        prop_assume!(!p.is_zero());
        let scaled = PowerVector::new(p.values().iter().map(|x| alpha * x).collect()).unwrap();
        match (sinr(&p, &g), sinr(&scaled, &g)) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.0.iter().zip(&b.0) {
                    match (x, y) {
                        (Sinr::Finite(x), Sinr::Finite(y)) => prop_assert!(rel_close(*x, *y, 1e-12), "{x} vs {y}"),
                        (Sinr::Unbounded, Sinr::Unbounded) => {}
                        _ => prop_assert!(false, "marker changed: {x} vs {y}"),
                    }
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn row_scaling_leaves_a_unchanged((g, _) in gain_and_power(false), lambda in prop::collection::vec(1e-3..1e3f64, 6)) {
        let m = g.dim();
        let mut rows = g.matrix().to_rows();
        for (i, row) in rows.iter_mut().enumerate() {
            row.iter_mut().for_each(|x| *x *= lambda[i]);
        }
        let a = build_a(&g);
        let b = build_a(&GainMatrix::from_rows(&rows).unwrap());
        for i in 0..m {
            prop_assert_eq!(a.get(i, i), 0.0);
            for j in 0..m {
                prop_assert!(rel_close(a.get(i, j), b.get(i, j), 1e-15) || a.get(i, j) == b.get(i, j));
            }
        }
    }

    #[test]
    fn matrix_and_component_forms_agree((g, p) in gain_and_power(true), c in 0.1..3.0f64) {
        let matrix_form = dpc_step(&p, &build_a(&g), c).unwrap();
        let component_form = dpc_step_from_sinr(&p, &sinr(&p, &g).unwrap(), c);
        for (x, y) in matrix_form.values().iter().zip(component_form.values()) {
            prop_assert!(rel_close(*x, *y, 1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn steps_are_linear_and_nonnegative((g, p) in gain_and_power(false), q in power(6, 0.0), c in 0.01..3.0f64) {
        let m = g.dim();
        let q = PowerVector::new(q.values()[..m].to_vec()).unwrap();
        let sum = PowerVector::new(p.values().iter().zip(q.values()).map(|(a, b)| a + b).collect()).unwrap();
        let a = build_a(&g);
        for step in [dpc_step, dba_step] {
            let (sp, sq, ss) = (step(&p, &a, c).unwrap(), step(&q, &a, c).unwrap(), step(&sum, &a, c).unwrap());
            for i in 0..m {
                prop_assert!(ss.values()[i] >= 0.0);
                let lin = sp.values()[i] + sq.values()[i];
                prop_assert!((ss.values()[i] - lin).abs() <= 1e-12 * lin.max(1e-300), "{} vs {lin}", ss.values()[i]);
            }
        }
        let (d, z) = (dpc_step(&p, &a, c).unwrap(), dba_step(&p, &a, c).unwrap());
        for i in 0..m {
            let expect = d.values()[i] + c * p.values()[i];
            prop_assert!((z.values()[i] - expect).abs() <= 1e-12 * expect.max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dba_sets_never_drop_below_one(gs in (1usize..=4).prop_flat_map(|m| prop::collection::vec(sparse_gain(m), 1..=3)), c in 1.0..2.0f64) {
        let set = build_update_set(&gs, &CSchedule::Constant { c0: c }, Scheme::Dba).unwrap();
        let bf = brute_force_bounds(&set, 3, NormKind::Infinity, DEFAULT_PRODUCT_BUDGET).unwrap();
        prop_assert!(bf.lower >= 1.0, "{}", bf.lower);
        let g = gripenberg_estimate(&set, 1e-3, NormKind::Infinity, 5_000).unwrap();
        prop_assert!(g.lower >= 1.0, "{}", g.lower);
    }
}
