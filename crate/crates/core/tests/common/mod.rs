#![allow(dead_code)]

use sd4x::blackbox::{ConditionEntry, ConditionOp};
use sd4x::data::synth::{RegimeSpec, SynthSpec};

pub fn cond(column: &str, op: ConditionOp, value: f64) -> ConditionEntry {
    ConditionEntry {
        column: column.into(),
        op,
        value,
    }
}

/// Three regimes cut on `x1` at 0.35 and 0.7 over 6 numeric and 4 Boolean
/// attributes. `weights(r)` gives regime `r`'s 3 × 10 logit weights.
pub fn three_regimes(n: usize, weights: impl Fn(usize) -> Vec<Vec<f64>>) -> SynthSpec {
    let bias = |r: usize| Some((0..3).map(|c| if c == r { 1.0 } else { 0.0 }).collect());
    let conditions = [
        vec![cond("x1", ConditionOp::Le, 0.35)],
        vec![cond("x1", ConditionOp::Gt, 0.35), cond("x1", ConditionOp::Le, 0.7)],
        vec![cond("x1", ConditionOp::Gt, 0.7)],
    ];
    SynthSpec {
        n,
        numeric: 6,
        boolean: 4,
        numeric_range: [0.0, 1.0],
        boolean_probability: 0.5,
        classes: vec!["a".into(), "b".into(), "c".into()],
        regimes: conditions
            .into_iter()
            .enumerate()
            .map(|(r, conditions)| RegimeSpec {
                name: Some(format!("r{r}")),
                conditions,
                weights: Some(weights(r)),
                biases: bias(r),
            })
            .collect(),
        noise: 0.0,
    }
}

/// Each class leans on a different attribute in each regime.
pub fn rotating_weights(scale: f64) -> impl Fn(usize) -> Vec<Vec<f64>> {
    move |r| {
        let mut w = vec![vec![0.0; 10]; 3];
        for (c, row) in w.iter_mut().enumerate() {
            row[1 + (r + c) % 5] = scale * if c == r { 1.0 } else { -0.5 };
        }
        w
    }
}
