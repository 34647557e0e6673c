#![allow(dead_code)]

use powerjsr::{GainMatrix, Matrix, UpdateSet};
use proptest::prelude::*;

pub fn square(dims: std::ops::RangeInclusive<usize>, entries: std::ops::Range<f64>) -> impl Strategy<Value = Matrix> {
    dims.prop_flat_map(move |m| prop::collection::vec(entries.clone(), m * m).prop_map(move |v| Matrix::from_row_major(m, v).unwrap()))
}

pub fn pair_of(dims: std::ops::RangeInclusive<usize>, entries: std::ops::Range<f64>) -> impl Strategy<Value = (Matrix, Matrix)> {
    dims.prop_flat_map(move |m| {
        let one = prop::collection::vec(entries.clone(), m * m);
        (one.clone(), one).prop_map(move |(a, b)| (Matrix::from_row_major(m, a).unwrap(), Matrix::from_row_major(m, b).unwrap()))
    })
}

/// Nonnegative set of `1..=members` matrices sharing one dimension.
pub fn nonneg_set(dims: std::ops::RangeInclusive<usize>, members: usize) -> impl Strategy<Value = UpdateSet> {
    (dims, 1..=members).prop_flat_map(|(m, n)| {
        prop::collection::vec(prop::collection::vec(0.0..1.0f64, m * m), n).prop_map(move |ms| {
            UpdateSet::new(ms.into_iter().map(|v| Matrix::from_row_major(m, v).unwrap()).collect()).unwrap()
        })
    })
}

pub fn gain(m: usize, off: std::ops::Range<f64>) -> impl Strategy<Value = GainMatrix> {
    (prop::collection::vec(off, m * m), prop::collection::vec(0.1..10.0f64, m)).prop_map(move |(mut v, d)| {
        for i in 0..m {
            v[i * m + i] = d[i];
        }
        GainMatrix::new(Matrix::from_row_major(m, v).unwrap()).unwrap()
    })
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}
