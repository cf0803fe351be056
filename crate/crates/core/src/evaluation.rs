//! Fidelity and diversity metrics: MSE against the black box, rank-k
//! weighted F1, the global and local surrogate baselines, elbow detection on
//! the loss curve, cosine diversity of subgroup models, and reports.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::neighborhood::NeighborhoodSet;
use crate::splitter::{ClassFeatures, Partition, PartitionDump};
use crate::whitebox::{
    fit_from_stats, neighborhood_stats, pooled_stats, RidgeError, RidgeOptions, WhiteBoxModel,
};

pub const DEFAULT_RANKS: [usize; 3] = [1, 2, 3];
pub const DEFAULT_SIMILARITY: f64 = 0.4;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no objects to evaluate")]
    Empty,
    #[error("elbow needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve abscissae must be strictly increasing")]
    Unordered,
    #[error("rank {rank} exceeds the {classes} classes")]
    Rank { rank: usize, classes: usize },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
}

/// Sum of squared errors of each object's surrogate over its neighborhood.
pub fn sse_per_object(
    ns: &NeighborhoodSet,
    models: &[&WhiteBoxModel],
) -> Result<Vec<f64>, EvalError> {
    if models.len() != ns.len() {
        return Err(EvalError::Shape(format!(
            "{} models for {} objects",
            models.len(),
            ns.len()
        )));
    }
    (0..ns.len())
        .into_par_iter()
        .map(|i| Ok(models[i].sse(ns.samples(i).view(), ns.outputs(i).map_err(RidgeError::from)?.view())?))
        .collect()
}

/// `L / |O_E|` and the per-sample, per-class mean squared error.
pub fn mse(ns: &NeighborhoodSet, models: &[&WhiteBoxModel]) -> Result<(f64, f64), EvalError> {
    if ns.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: f64 = sse_per_object(ns, models)?.iter().sum();
    let cells: usize = (0..ns.len())
        .map(|i| ns.samples(i).nrows() * models[i].outputs())
        .sum();
    Ok((total / ns.len() as f64, total / cells.max(1) as f64))
}

/// The model serving each object under a partition.
pub fn partition_models(partition: &Partition, n_objects: usize) -> Result<Vec<&WhiteBoxModel>, EvalError> {
    partition
        .assignment(n_objects)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.map(|s| &partition.subgroups[s].model)
                .ok_or_else(|| EvalError::Shape(format!("object {i} is in no subgroup")))
        })
        .collect()
}

/// Index of the `k`-th largest entry (1-based); ties go to the lower index.
pub fn rank_k(row: &[f64], k: usize) -> usize {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // adding 0.0 maps -0.0 to 0.0 so signed zeros tie
    idx.sort_by(|&a, &b| (row[b] + 0.0).total_cmp(&(row[a] + 0.0)).then(a.cmp(&b)));
    idx[k - 1]
}

/// Support-weighted mean of per-class F1, `truth` providing the supports.
pub fn weighted_f1(truth: &[usize], predicted: &[usize], classes: usize) -> f64 {
    let n = truth.len();
    if n == 0 {
        return 0.0;
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let mut score = 0.0;
    for c in 0..classes {
        let support = tp[c] + fn_[c];
        if support == 0 {
            continue;
        }
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        };
        score += f1 * support as f64 / n as f64;
    }
    score
}

/// Weighted F1 of the surrogate's rank-`k` class against the black box's.
pub fn topk_f1(black_box: &Array2<f64>, surrogate: &Array2<f64>, k: usize) -> Result<f64, EvalError> {
    let p = black_box.ncols();
    if k == 0 || k > p {
        return Err(EvalError::Rank { rank: k, classes: p });
    }
    if black_box.dim() != surrogate.dim() {
        return Err(EvalError::Shape("output shapes differ".into()));
    }
    let labels = |a: &Array2<f64>| -> Vec<usize> {
        a.rows()
            .into_iter()
            .map(|r| rank_k(&r.to_vec(), k))
            .collect()
    };
    Ok(weighted_f1(&labels(black_box), &labels(surrogate), p))
}

/// Black-box outputs at the explained objects themselves.
pub fn object_outputs(ns: &NeighborhoodSet) -> Result<Array2<f64>, EvalError> {
    let p = ns.n_classes().ok_or(RidgeError::Neighborhood(
        crate::neighborhood::NeighborhoodError::Unlabelled,
    ))?;
    let mut out = Array2::zeros((ns.len(), p));
    for i in 0..ns.len() {
        out.row_mut(i)
            .assign(&ns.outputs(i).map_err(RidgeError::from)?.row(0));
    }
    Ok(out)
}

/// Surrogate outputs at the explained objects.
pub fn surrogate_outputs(ns: &NeighborhoodSet, models: &[&WhiteBoxModel]) -> Result<Array2<f64>, EvalError> {
    let p = models.first().map_or(0, |m| m.outputs());
    let mut out = Array2::zeros((ns.len(), p));
    for i in 0..ns.len() {
        let x = ns.samples(i).slice(ndarray::s![0..1, ..]).to_owned();
        out.row_mut(i).assign(&models[i].predict(x.view())?.row(0));
    }
    Ok(out)
}

/// One surrogate for all objects; identical to the root of a split run
/// with the same options.
pub fn fit_global_wb(ns: &NeighborhoodSet, options: &RidgeOptions) -> Result<WhiteBoxModel, EvalError> {
    if ns.is_empty() {
        return Err(EvalError::Empty);
    }
    let stats = neighborhood_stats(ns)?;
    let all: Vec<usize> = (0..ns.len()).collect();
    Ok(fit_from_stats(&pooled_stats(&stats, &all), options)?)
}

/// One surrogate per object, fitted on its own neighborhood.
pub fn fit_local_wb(ns: &NeighborhoodSet, options: &RidgeOptions) -> Result<Vec<WhiteBoxModel>, EvalError> {
    let stats = neighborhood_stats(ns)?;
    stats
        .par_iter()
        .map(|s| Ok(fit_from_stats(s, options)?))
        .collect()
}

/// Fidelity of one explanation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub mse: f64,
    pub mse_per_cell: f64,
    pub f1: Vec<RankF1>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankF1 {
    pub rank: usize,
    pub f1: f64,
}

pub fn fidelity(
    method: &str,
    k: Option<usize>,
    ns: &NeighborhoodSet,
    models: &[&WhiteBoxModel],
    ranks: &[usize],
) -> Result<FidelityEntry, EvalError> {
    let (mse, per_cell) = mse(ns, models)?;
    let bb = object_outputs(ns)?;
    let sur = surrogate_outputs(ns, models)?;
    let f1 = ranks
        .iter()
        .filter(|&&r| r <= bb.ncols())
        .map(|&rank| Ok(RankF1 { rank, f1: topk_f1(&bb, &sur, rank)? }))
        .collect::<Result<_, EvalError>>()?;
    Ok(FidelityEntry {
        method: method.to_string(),
        k,
        mse,
        mse_per_cell: per_cell,
        f1,
    })
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Local extrema with neighbours clipped at the ends, as in the reference
/// kneedle implementation.
fn extrema(d: &[f64], cmp: impl Fn(f64, f64) -> bool) -> Vec<usize> {
    let n = d.len();
    (0..n)
        .filter(|&i| {
            let prev = d[i.saturating_sub(1)];
            let next = d[(i + 1).min(n - 1)];
            cmp(d[i], prev) && cmp(d[i], next)
        })
        .collect()
}

/// Kneedle knee of a decreasing convex curve with sensitivity 1. Returns
/// the first knee, or `None` when the difference curve has none.
pub fn elbow(points: &[(usize, f64)]) -> Result<Option<usize>, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints(points.len()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(EvalError::Unordered);
    }
    let x: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let xn = normalize(&x);
    let yn = normalize(&y);
    if yn.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let ymax = yn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let diff: Vec<f64> = yn.iter().zip(&xn).map(|(y, x)| (ymax - y) - x).collect();
    let maxima = extrema(&diff, |a, b| a >= b);
    let minima = extrema(&diff, |a, b| a <= b);
    if maxima.is_empty() {
        return Ok(None);
    }
    let step = xn.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (xn.len() - 1) as f64;
    let tmx: Vec<f64> = maxima.iter().map(|&i| diff[i] - step.abs()).collect();
    let mut threshold = 0.0;
    let mut threshold_index = 0;
    let mut seen_maxima = 0;
    let mut active = true;
    for i in maxima[0]..xn.len() - 1 {
        if maxima.contains(&i) {
            threshold = tmx[seen_maxima];
            threshold_index = i;
            seen_maxima += 1;
            active = true;
        }
        if minima.contains(&i) {
            threshold = 0.0;
            active = false;
        }
        if active && diff[i + 1] < threshold {
            return Ok(Some(points[threshold_index].0));
        }
    }
    Ok(None)
}

/// Pairwise cosine similarity of subgroup models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// `None` for the class row of all classes concatenated.
    pub class: Option<usize>,
    pub threshold: f64,
    /// `None` where a vector is zero.
    pub cosine: Vec<Vec<Option<f64>>>,
    /// Share of defined unordered pairs with `|cos| ≤ threshold`.
    pub fraction_below: Option<f64>,
    pub pairs: usize,
    pub undefined_pairs: usize,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn diversity(models: &[&WhiteBoxModel], class: Option<usize>, threshold: f64) -> DiversityReport {
    let vectors: Vec<Vec<f64>> = models
        .iter()
        .map(|m| match class {
            Some(c) => m.coefficients.row(c).to_vec(),
            None => m.coefficients.iter().copied().collect(),
        })
        .collect();
    let n = vectors.len();
    let mut matrix = vec![vec![None; n]; n];
    let (mut below, mut defined, mut undefined) = (0usize, 0usize, 0usize);
    for i in 0..n {
        matrix[i][i] = cosine(&vectors[i], &vectors[i]).map(|_| 1.0);
        for j in i + 1..n {
            let c = cosine(&vectors[i], &vectors[j]);
            matrix[i][j] = c;
            matrix[j][i] = c;
            match c {
                Some(v) => {
                    defined += 1;
                    if v.abs() <= threshold {
                        below += 1;
                    }
                }
                None => undefined += 1,
            }
        }
    }
    DiversityReport {
        class,
        threshold,
        cosine: matrix,
        fraction_below: (defined > 0).then(|| below as f64 / defined as f64),
        pairs: defined + undefined,
        undefined_pairs: undefined,
    }
}

/// `(size, number of subgroups)` in ascending size order.
pub fn size_histogram(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    for s in sorted {
        match out.last_mut() {
            Some((v, c)) if *v == s => *c += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

/// Most frequent black-box rank-1 class among `objects` and its share.
pub fn dominant_class(bb: &Array2<f64>, objects: &[usize]) -> Option<(usize, f64)> {
    if objects.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; bb.ncols()];
    for &i in objects {
        counts[rank_k(&bb.row(i).to_vec(), 1)] += 1;
    }
    let best = (0..counts.len()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))?;
    Some((best, counts[best] as f64 / objects.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    pub id: usize,
    pub size: usize,
    pub pattern: String,
    pub pattern_closed: String,
    pub dominant_class: String,
    pub dominant_share: f64,
    pub top_features: ClassFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub loss: f64,
}

/// Everything a report shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub fidelity: Vec<FidelityEntry>,
    pub curve: Vec<CurvePoint>,
    pub elbow: Option<usize>,
    pub diversity: Option<DiversityReport>,
    pub sizes: Vec<(usize, usize)>,
    pub subgroups: Vec<SubgroupSummary>,
}

impl Report {
    /// Per-subgroup summaries from a dump; `bb` holds black-box outputs at
    /// the explained objects, `position` maps dataset rows to its rows.
    pub fn summaries(
        dump: &PartitionDump,
        bb: &Array2<f64>,
        position: impl Fn(usize) -> Option<usize>,
    ) -> Vec<SubgroupSummary> {
        dump.subgroups
            .iter()
            .map(|g| {
                let rows: Vec<usize> = g.objects.iter().filter_map(|&o| position(o)).collect();
                let (class, share) = dominant_class(bb, &rows).unwrap_or((0, 0.0));
                let top_features = g
                    .top_features
                    .get(class)
                    .cloned()
                    .unwrap_or_else(|| ClassFeatures {
                        class: String::new(),
                        features: Vec::new(),
                        note: None,
                    });
                SubgroupSummary {
                    id: g.id,
                    size: g.size,
                    pattern: g.pattern_text.clone(),
                    pattern_closed: g.pattern_closed.clone(),
                    dominant_class: dump.classes.get(class).cloned().unwrap_or_default(),
                    dominant_share: share,
                    top_features,
                }
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Explanation summary\n");
        if !self.fidelity.is_empty() {
            let ranks: Vec<usize> = self.fidelity[0].f1.iter().map(|r| r.rank).collect();
            let _ = writeln!(md, "## Fidelity\n");
            let mut header = "| method | K | MSE | MSE per cell |".to_string();
            let mut rule = "|---|---|---|---|".to_string();
            for r in &ranks {
                let _ = write!(header, " TOP{r} F1 |");
                rule.push_str("---|");
            }
            let _ = writeln!(md, "{header}\n{rule}");
            for f in &self.fidelity {
                let k = f.k.map_or("-".to_string(), |k| k.to_string());
                let _ = write!(md, "| {} | {} | {:.6} | {:.6e} |", f.method, k, f.mse, f.mse_per_cell);
                for r in &f.f1 {
                    let _ = write!(md, " {:.4} |", r.f1);
                }
                md.push('\n');
            }
            md.push('\n');
        }
        if !self.curve.is_empty() {
            let _ = writeln!(md, "## Loss curve\n\n| K | loss |\n|---|---|");
            for p in &self.curve {
                let mark = if Some(p.k) == self.elbow { " (elbow)" } else { "" };
                let _ = writeln!(md, "| {}{} | {:.6} |", p.k, mark, p.loss);
            }
            let elbow = self.elbow.map_or("none".to_string(), |k| k.to_string());
            let _ = writeln!(md, "\nElbow: {elbow}\n");
        }
        if let Some(d) = &self.diversity {
            let share = d
                .fraction_below
                .map_or("undefined".to_string(), |f| format!("{:.1}%", 100.0 * f));
            let _ = writeln!(
                md,
                "## Diversity\n\n{share} of {} subgroup pairs have |cos| ≤ {} ({} undefined).\n",
                d.pairs - d.undefined_pairs,
                d.threshold,
                d.undefined_pairs
            );
        }
        if !self.sizes.is_empty() {
            let _ = writeln!(md, "## Subgroup sizes\n\n| size | subgroups |\n|---|---|");
            for (s, c) in &self.sizes {
                let _ = writeln!(md, "| {s} | {c} |");
            }
            md.push('\n');
        }
        for g in &self.subgroups {
            let _ = writeln!(md, "## Subgroup {}\n", g.id);
            let _ = writeln!(md, "- pattern: `{}`", g.pattern);
            let _ = writeln!(md, "- closed pattern: `{}`", g.pattern_closed);
            let _ = writeln!(md, "- size: {}", g.size);
            let _ = writeln!(
                md,
                "- dominant class: {} ({:.0}%)",
                g.dominant_class,
                100.0 * g.dominant_share
            );
            if let Some(note) = &g.top_features.note {
                let _ = writeln!(md, "- features: {note}");
            }
            for f in &g.top_features.features {
                let _ = writeln!(md, "  - {} {:+.4} ({:.1}%)", f.column, f.coefficient, 100.0 * f.ratio);
            }
            md.push('\n');
        }
        md
    }
}

/// `K,loss` lines with a header.
pub fn curve_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("k,loss\n");
    for (k, l) in curve {
        let _ = writeln!(out, "{k},{l:?}");
    }
    out
}

/// Parses the output of `curve_csv`.
pub fn parse_curve_csv(text: &str) -> Result<Vec<(usize, f64)>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EvalError::Shape(e.to_string()))?;
        let bad = || EvalError::Shape(format!("curve row {i} is malformed"));
        if rec.len() != 2 {
            return Err(bad());
        }
        let k: usize = rec[0].trim().parse().map_err(|_| bad())?;
        let l: f64 = rec[1].trim().parse().map_err(|_| bad())?;
        if !l.is_finite() {
            return Err(bad());
        }
        out.push((k, l));
    }
    Ok(out)
}

/// Zero-coefficient model, used as a neutral surrogate in examples.
pub fn zero_model(outputs: usize, width: usize) -> WhiteBoxModel {
    WhiteBoxModel {
        coefficients: Array2::zeros((outputs, width)),
        intercepts: Array1::zeros(outputs),
        lambda: 0.0,
        samples: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::{Covariance, NeighborhoodConfig};
    use ndarray::array;

    fn curve(y: &[f64]) -> Vec<(usize, f64)> {
        y.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect()
    }

    #[test]
    fn f1_hand_examples() {
        assert!((weighted_f1(&[0, 0, 1], &[0, 1, 1], 2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((weighted_f1(&[0, 1], &[0, 0], 2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(weighted_f1(&[2, 1, 0], &[2, 1, 0], 3), 1.0);
        let p = array![[0.2, 0.5, 0.3], [0.4, 0.4, 0.2]];
        assert_eq!(rank_k(&p.row(0).to_vec(), 1), 1);
        assert_eq!(rank_k(&p.row(0).to_vec(), 3), 0);
        // tie: lower index first
        assert_eq!(rank_k(&p.row(1).to_vec(), 1), 0);
        assert_eq!(rank_k(&p.row(1).to_vec(), 2), 1);
        assert_eq!(rank_k(&[-0.0, 0.0], 1), 0);
        for k in 1..=3 {
            assert_eq!(topk_f1(&p, &p, k).unwrap(), 1.0);
        }
        assert!(topk_f1(&p, &p, 4).is_err());
    }

    #[test]
    fn elbow_matches_reference_kneedle() {
        let k: Vec<f64> = (1..=10).map(|k| 100.0 / k as f64).collect();
        assert_eq!(elbow(&curve(&k)).unwrap(), Some(3));
        let line: Vec<f64> = (1..=10).map(|k| 10.0 - k as f64).collect();
        assert_eq!(elbow(&curve(&line)).unwrap(), None);
        let steep = [100.0, 40.0, 5.0, 4.0, 3.5, 3.2, 3.0, 2.9, 2.8, 2.7];
        assert_eq!(elbow(&curve(&steep)).unwrap(), Some(3));
        assert!(matches!(elbow(&curve(&[1.0, 0.5])), Err(EvalError::TooFewPoints(2))));
        assert!(matches!(elbow(&[(1, 3.0), (3, 2.0), (2, 1.0)]), Err(EvalError::Unordered)));
        assert_eq!(elbow(&curve(&[2.0, 2.0, 2.0])).unwrap(), None);
    }

    #[test]
    fn elbow_frozen_cases() {
        // knees computed with the kneed package (convex, decreasing, S = 1)
        let cases: [(&[f64], Option<usize>); 12] = [
            (&[444.7977, 344.8801, 264.086, 198.8491, 147.3166, 106.4692, 68.1324, 39.5522, 16.1012, 10.7081, 5.8324], Some(5)),
            (&[338.1496, 248.3819, 163.9588, 96.2898, 46.9875, 7.7471], None),
            (&[7.3334, 6.438, 5.5583, 4.6861, 3.816, 3.1085, 2.4294, 1.926, 1.4893, 1.262, 1.0588, 0.9945, 0.976], Some(7)),
            (&[299.0784, 219.1844, 149.3332, 104.4788, 72.5004, 40.8551, 17.3035], Some(3)),
            (&[46.2035, 36.6933, 27.3611, 18.9118, 13.8479, 9.8537, 6.1749, 3.8129, 2.9547], Some(4)),
            (&[32.1815, 24.7673, 17.9252, 11.1813, 6.5431, 4.1417], None),
            (&[9.5073, 8.5663, 7.7678, 6.9699, 6.2566, 5.5644, 4.929, 4.3165, 3.926, 3.5456, 3.1691], Some(7)),
            (&[563.41, 467.5577, 382.7953, 301.9109, 230.6219, 175.2968, 127.3481, 87.1396, 47.017, 15.2893], Some(5)),
            (&[71.8182, 61.9296, 52.5799, 43.3432, 34.7628, 26.4748, 18.2423, 11.9279, 7.8769, 4.6034, 2.7267, 1.1541], Some(7)),
            (&[30.1676, 21.5238, 15.9918, 11.074, 6.6028, 3.8158, 1.2344], None),
            (&[9.1521, 8.224, 7.3342, 6.4755, 5.6818, 5.0148, 4.4208, 3.9403, 3.4855, 3.0865, 2.7449, 2.4076], Some(6)),
            (&[31.317, 24.3439, 17.4361, 11.4267, 9.2545, 7.1182, 5.086, 3.5957, 3.106, 2.7154], Some(4)),
        ];
        for (y, expected) in cases {
            assert_eq!(elbow(&curve(y)).unwrap(), expected, "curve {y:?}");
        }
    }

    #[test]
    fn cosine_cases() {
        let m = |c: Array2<f64>| WhiteBoxModel {
            intercepts: Array1::zeros(c.nrows()),
            coefficients: c,
            lambda: 0.0,
            samples: 0,
        };
        let a = m(array![[1.0, 0.0]]);
        let b = m(array![[0.0, 1.0]]);
        let c = m(array![[2.0, 0.0]]);
        let z = m(array![[0.0, 0.0]]);
        let d = diversity(&[&a, &b, &c, &z], Some(0), 0.4);
        assert_eq!(d.cosine[0][1], Some(0.0));
        assert_eq!(d.cosine[0][2], Some(1.0));
        assert_eq!(d.cosine[3][3], None);
        assert_eq!(d.undefined_pairs, 3);
        assert_eq!(d.fraction_below, Some(2.0 / 3.0));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.cosine[i][j], d.cosine[j][i]);
            }
        }
    }

    #[test]
    fn zero_model_against_uniform_outputs() {
        // k + 1 = 4 samples, p = 2 classes: loss 4 · 2 · 1/4 = 2 per object
        let samples = vec![Array2::zeros((4, 1)), Array2::ones((4, 1))];
        let outputs = vec![Array2::from_elem((4, 2), 0.5); 2];
        let ns = NeighborhoodSet::from_parts(
            vec![0, 1],
            samples,
            Some(outputs),
            Covariance::from_matrix(Array2::eye(1)).unwrap(),
            NeighborhoodConfig::default(),
        )
        .unwrap();
        let z = zero_model(2, 1);
        let (mse, per_cell) = mse(&ns, &[&z, &z]).unwrap();
        assert!((mse - 2.0).abs() < 1e-15);
        assert!((per_cell - 0.25).abs() < 1e-15);
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = vec![(1, 3.5), (2, 0.1 + 0.2), (3, 0.0)];
        assert_eq!(parse_curve_csv(&curve_csv(&c)).unwrap(), c);
        assert!(parse_curve_csv("k,loss\n1,x\n").is_err());
    }

    #[test]
    fn histogram_and_dominant() {
        assert_eq!(size_histogram(&[3, 1, 3, 2]), vec![(1, 1), (2, 1), (3, 2)]);
        let bb = array![[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]];
        assert_eq!(dominant_class(&bb, &[0, 1, 2]), Some((0, 2.0 / 3.0)));
        assert_eq!(dominant_class(&bb, &[0, 1]), Some((0, 0.5)));
    }
}
