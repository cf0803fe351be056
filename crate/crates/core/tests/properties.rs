mod common;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

use sd4x::data::synth::generate_synthetic;
use sd4x::data::{
    columns_for, decode_row, encode, parse_dataset, write_dataset_csv, Attribute, AttributeKind,
    ColumnKind, Dataset, EncodedColumn, Schema, Value,
};
use sd4x::evaluation::{cosine, curve_csv, diversity, elbow, parse_curve_csv, weighted_f1};
use sd4x::neighborhood::{generate_neighbors, Covariance, NeighborhoodConfig};
use sd4x::pattern::{most_restrictive, parse_pattern, Pattern, Side};
use sd4x::splitter::{explain, SplitConfig};
use sd4x::whitebox::{fit_ridge, WhiteBoxModel};

fn attributes() -> Vec<Attribute> {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    vec![
        Attribute::new("load", AttributeKind::Numeric, 0),
        Attribute::new("sev", AttributeKind::Ordinal(names(&["Low", "Mid", "High"])), 1),
        Attribute::new("kind", AttributeKind::Nominal(names(&["A", "B", "C"])), 2),
        Attribute::new("flag", AttributeKind::Boolean, 3),
    ]
}

fn row() -> impl Strategy<Value = Vec<Value>> {
    (
        (-20i32..20).prop_map(|v| v as f64 / 4.0),
        0usize..3,
        0usize..3,
        any::<bool>(),
    )
        .prop_map(|(l, s, k, f)| {
            vec![Value::Number(l), Value::Category(s), Value::Category(k), Value::Bool(f)]
        })
}

fn rows(max: usize) -> impl Strategy<Value = Vec<Vec<Value>>> {
    prop::collection::vec(row(), 1..max)
}

/// A random chain of refinements from ⊤.
fn pattern_from(cuts: &[(usize, bool, f64)]) -> Pattern {
    let attrs = attributes();
    let columns = columns_for(&attrs);
    let mut p = Pattern::top(attrs.len());
    for &(c, le, t) in cuts {
        let col = &columns[c % columns.len()];
        let side = if le { Side::Le } else { Side::Gt };
        if let Ok(next) = p.refine(col, side, t, &attrs) {
            p = next;
        }
    }
    p
}

fn cuts() -> impl Strategy<Value = Vec<(usize, bool, f64)>> {
    prop::collection::vec((0usize..8, any::<bool>(), (-12i32..12).prop_map(|v| v as f64 / 4.0 + 0.125)), 0..5)
}

fn matrix(n: usize, m: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * m)
        .prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap())
}

fn ridge_problem() -> impl Strategy<Value = (Array2<f64>, Array2<f64>, f64)> {
    (2usize..30, 1usize..6, 1usize..3).prop_flat_map(|(n, m, p)| {
        (matrix(n, m), matrix(n, p), 0.01f64..20.0)
    })
}

fn coefficient_norm(model: &WhiteBoxModel) -> f64 {
    model.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_matches_normal_equations((x, y, lambda) in ridge_problem()) {
        let (n, m) = x.dim();
        let model = fit_ridge(x.view(), y.view(), lambda).unwrap();
        let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
        for r in 0..n {
            for i in 0..=m {
                for j in 0..=m {
                    let xi = if i < m { x[[r, i]] } else { 1.0 };
                    let xj = if j < m { x[[r, j]] } else { 1.0 };
                    a[(i, j)] += xi * xj;
                }
            }
        }
        for i in 0..m {
            a[(i, i)] += lambda;
        }
        for c in 0..y.ncols() {
            let b = DVector::from_fn(m + 1, |i, _| {
                (0..n).map(|r| if i < m { x[[r, i]] } else { 1.0 } * y[[r, c]]).sum()
            });
            let sol = a.clone().lu().solve(&b).unwrap();
            let scale = sol.norm().max(1.0);
            for i in 0..m {
                prop_assert!((model.coefficients[[c, i]] - sol[i]).abs() <= 1e-8 * scale);
            }
            prop_assert!((model.intercepts[c] - sol[m]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn ridge_gradient_vanishes((x, y, lambda) in ridge_problem()) {
        let model = fit_ridge(x.view(), y.view(), lambda).unwrap();
        let residual = &y - &model.predict(x.view()).unwrap();
        // ∂/∂B = -2 Rᵀ X + 2 λ B, ∂/∂b = -2 Σ R
        let grad_b = residual.t().dot(&x) * -2.0 + &model.coefficients * (2.0 * lambda);
        let grad_c = residual.sum_axis(ndarray::Axis(0)) * -2.0;
        let scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!(grad_b.iter().chain(grad_c.iter()).all(|g| g.abs() <= 1e-8 * scale));
    }

    #[test]
    fn shrinkage_is_monotone((x, y, lambda) in ridge_problem(), factor in 1.01f64..10.0) {
        let loose = fit_ridge(x.view(), y.view(), lambda).unwrap();
        let tight = fit_ridge(x.view(), y.view(), lambda * factor).unwrap();
        prop_assert!(coefficient_norm(&tight) <= coefficient_norm(&loose) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn extent_and_intent_form_a_galois_pair(data in rows(25), pick in prop::collection::vec(any::<bool>(), 25), cut in cuts()) {
        let attrs = attributes();
        let all: Vec<usize> = (0..data.len()).collect();
        let subset: Vec<usize> = all.iter().copied().filter(|&i| pick[i]).collect();
        if !subset.is_empty() {
            let d = most_restrictive(subset.iter().map(|&i| data[i].as_slice()), &attrs).unwrap();
            let ext = d.extent(&data, &all);
            prop_assert!(subset.iter().all(|i| ext.contains(i)));
            // δ(ext(δ(S))) = δ(S)
            let again = most_restrictive(ext.iter().map(|&i| data[i].as_slice()), &attrs).unwrap();
            prop_assert_eq!(&again, &d);
        }
        let p = pattern_from(&cut);
        let ext = p.extent(&data, &all);
        if !ext.is_empty() {
            let closed = most_restrictive(ext.iter().map(|&i| data[i].as_slice()), &attrs).unwrap();
            prop_assert!(p.is_more_general(&closed));
            prop_assert_eq!(closed.extent(&data, &all), ext);
        }
    }

    #[test]
    fn generality_is_a_preorder(a in cuts(), b in cuts(), c in cuts()) {
        let (pa, pb, pc) = (pattern_from(&a), pattern_from(&b), pattern_from(&c));
        let top = Pattern::top(attributes().len());
        prop_assert!(pa.is_more_general(&pa));
        prop_assert!(top.is_more_general(&pa));
        if pa.is_more_general(&pb) && pb.is_more_general(&pc) {
            prop_assert!(pa.is_more_general(&pc));
        }
        // refining only specializes
        let longer: Vec<_> = a.iter().chain(&b).copied().collect();
        prop_assert!(pa.is_more_general(&pattern_from(&longer)));
    }

    #[test]
    fn refinement_matches_the_condition(data in rows(30), cut in cuts(), c in 0usize..6, le in any::<bool>(), t in -3.0f64..3.0) {
        let attrs = attributes();
        let columns = columns_for(&attrs);
        let col = &columns[c];
        let side = if le { Side::Le } else { Side::Gt };
        let p = pattern_from(&cut);
        let all: Vec<usize> = (0..data.len()).collect();
        let encoded = encode(&Dataset::new(attrs.clone(), data.clone(), None, vec![]).unwrap());
        let expected: Vec<usize> = p
            .extent(&data, &all)
            .into_iter()
            .filter(|&i| side.holds(encoded.values[[i, c]], t))
            .collect();
        match p.refine(col, side, t, &attrs) {
            Ok(q) => prop_assert_eq!(q.extent(&data, &all), expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn pattern_entries_round_trip(cut in cuts()) {
        let attrs = attributes();
        let p = pattern_from(&cut);
        let text = serde_json::to_string(&p.to_entries(&attrs)).unwrap();
        prop_assert_eq!(parse_pattern(&text, &attrs).unwrap(), p);
    }

    #[test]
    fn encoding_round_trips(data in rows(20)) {
        let attrs = attributes();
        let ds = Dataset::new(attrs.clone(), data.clone(), None, vec![]).unwrap();
        let enc = encode(&ds);
        for (i, r) in data.iter().enumerate() {
            prop_assert_eq!(&decode_row(enc.values.row(i), &enc.columns, &attrs).unwrap(), r);
        }
    }

    #[test]
    fn csv_round_trips(data in rows(20), labels in prop::collection::vec(0usize..2, 20)) {
        let attrs = attributes();
        let classes = vec!["ok".to_string(), "bad".to_string()];
        let labels = labels[..data.len()].to_vec();
        let ds = Dataset::new(attrs.clone(), data, Some(labels), classes.clone()).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let schema = Schema::from_attributes(&attrs, &classes);
        let back = parse_dataset(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(back.rows(), ds.rows());
        prop_assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn weighted_f1_matches_per_class_precision_recall(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let n = truth.len() as f64;
        let mut expected = 0.0;
        for c in 0..4 {
            let tp = pairs.iter().filter(|p| p.0 == c && p.1 == c).count() as f64;
            let support = truth.iter().filter(|&&t| t == c).count() as f64;
            let predicted = pred.iter().filter(|&&q| q == c).count() as f64;
            let prec = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let rec = if support > 0.0 { tp / support } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            expected += f1 * support / n;
        }
        let got = weighted_f1(&truth, &pred, 4);
        prop_assert!((got - expected).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((weighted_f1(&truth, &truth, 4) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn diversity_is_symmetric(rows in prop::collection::vec(prop::collection::vec(-2i32..3, 6), 2..6)) {
        let models: Vec<WhiteBoxModel> = rows
            .iter()
            .map(|r| WhiteBoxModel {
                coefficients: Array2::from_shape_vec((2, 3), r.iter().map(|&v| v as f64).collect()).unwrap(),
                intercepts: Array1::zeros(2),
                lambda: 1.0,
                samples: 1,
            })
            .collect();
        let refs: Vec<&WhiteBoxModel> = models.iter().collect();
        let d = diversity(&refs, None, 0.4);
        for i in 0..refs.len() {
            for j in 0..refs.len() {
                prop_assert_eq!(d.cosine[i][j], d.cosine[j][i]);
                if let Some(c) = d.cosine[i][j] {
                    prop_assert!(c.abs() <= 1.0 + 1e-12);
                }
            }
            let v: Vec<f64> = models[i].coefficients.iter().copied().collect();
            if v.iter().any(|&x| x != 0.0) {
                prop_assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
            }
        }
        let n = refs.len();
        prop_assert_eq!(d.pairs, n * (n - 1) / 2);
    }

    #[test]
    fn elbow_is_scale_free_and_in_range(
        steps in prop::collection::vec(0.01f64..10.0, 2..12),
        scale in 0.1f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        // a decreasing curve with shrinking drops is convex
        let mut sorted = steps.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut y = 100.0;
        let mut curve = vec![(1usize, y)];
        for (i, d) in sorted.iter().enumerate() {
            y -= d;
            curve.push((i + 2, y));
        }
        let k = elbow(&curve).unwrap();
        if let Some(k) = k {
            prop_assert!(k >= 1 && k <= curve.len());
        }
        let moved: Vec<(usize, f64)> = curve.iter().map(|&(k, l)| (k, l * scale + shift)).collect();
        prop_assert_eq!(elbow(&moved).unwrap(), k);
        prop_assert_eq!(parse_curve_csv(&curve_csv(&curve)).unwrap(), curve);
    }

    #[test]
    fn tighter_neighborhoods_stay_closer(seed in 0u64..1000) {
        let sigma = ndarray::array![[1.0, 0.3, 0.0], [0.3, 2.0, 0.1], [0.0, 0.1, 0.5]];
        let cov = Covariance::from_matrix(sigma).unwrap();
        let columns: Vec<EncodedColumn> = (0..3)
            .map(|i| EncodedColumn { name: format!("c{i}"), attribute: i, kind: ColumnKind::Numeric })
            .collect();
        let o = ndarray::array![0.5, -1.0, 2.0];
        let spread = |z: f64| {
            let s = generate_neighbors(o.view(), &cov, z, 200, seed, 0, &columns).unwrap();
            s.rows()
                .into_iter()
                .skip(1)
                .map(|r| r.iter().zip(o.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .sum::<f64>()
                / 200.0
        };
        prop_assert!(spread(40.0) <= spread(10.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splits_never_raise_the_loss(seed in 0u64..10_000, scale in 0.5f64..3.0, k in 1usize..7, lambda in prop_oneof![Just(0.0), 0.1f64..3.0]) {
        let spec = common::three_regimes(80, common::rotating_weights(scale));
        let data = generate_synthetic(&spec, seed).unwrap();
        let objects: Vec<usize> = (0..80).collect();
        let nc = NeighborhoodConfig { shrink: 50.0, n_synthetic: 10, seed };
        let config = SplitConfig { k, lambda, ..SplitConfig::default() };
        let ex = explain(&data.dataset, &objects, &data.oracle, nc, &config).unwrap();
        let ctx = ex.context(&data.dataset);
        prop_assert!(ex.partition.validate(&ctx).is_ok());
        prop_assert!(ex.partition.len() <= k);
        let mut prev = ex.partition.root_loss;
        for t in &ex.partition.trace {
            prop_assert!(t.loss_after <= prev);
            prev = t.loss_after;
        }
        // each split's children fit no worse than their parent at λ = 0
        if lambda == 0.0 {
            for t in &ex.partition.trace {
                prop_assert!(t.gain >= -1e-9 * ex.partition.root_loss);
            }
        }
        let curve = ex.partition.loss_curve(k);
        prop_assert_eq!(curve.len(), k);
        prop_assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}
