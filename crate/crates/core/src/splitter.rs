//! Greedy partition refinement: every subgroup keeps its best split, the
//! split with the largest loss reduction is applied, and the loop stops at
//! `K` subgroups or when no split improves the global loss.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Attribute, EncodedColumn, Value};
use crate::neighborhood::{NeighborhoodError, NeighborhoodSet};
use crate::pattern::{Pattern, PatternEntry, PatternError, Side};
use crate::whitebox::{
    feature_importance, fit_from_stats, neighborhood_stats, pooled_stats, subgroup_loss,
    RidgeError, RidgeOptions, SingularPolicy, SufficientStats, WhiteBoxModel,
};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MIN_SUPPORT: usize = 2;

/// A split must reduce the parent loss by more than this fraction.
pub const GAIN_TOLERANCE: f64 = 1e-12;

/// Candidates rescored by direct summation after the screening pass.
const RESCORE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("K must be at least 1")]
    Budget,
    #[error("no objects to explain")]
    Empty,
    #[error("min_support must be at least 1")]
    Support,
    #[error("split column {0} out of range")]
    Column(usize),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
    #[error(transparent)]
    Neighborhood(#[from] NeighborhoodError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub k: usize,
    pub lambda: f64,
    pub min_support: usize,
    #[serde(default)]
    pub standardize: bool,
    /// Encoded columns eligible for splits; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_columns: Option<Vec<usize>>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            lambda: crate::whitebox::DEFAULT_LAMBDA,
            min_support: DEFAULT_MIN_SUPPORT,
            standardize: false,
            split_columns: None,
        }
    }
}

impl SplitConfig {
    /// Ridge settings for subgroup fits. Rank-deficient unpenalized systems
    /// (e.g. a Boolean column constant inside a subgroup) take the
    /// minimum-norm solution.
    pub fn ridge_options(&self) -> RidgeOptions {
        RidgeOptions {
            lambda: self.lambda,
            fit_intercept: true,
            standardize: self.standardize,
            singular: SingularPolicy::MinimumNorm,
        }
    }
}

/// Inputs shared by every split evaluation.
#[derive(Clone, Copy)]
pub struct SplitContext<'a> {
    /// Labelled neighborhoods; positions in it identify objects.
    pub ns: &'a NeighborhoodSet,
    pub columns: &'a [EncodedColumn],
    pub attributes: &'a [Attribute],
    /// Raw rows of the whole dataset, indexed by `ns.objects()`.
    pub rows: &'a [Vec<Value>],
}

impl SplitContext<'_> {
    /// Encoded value of `column` for the object at `position`.
    fn value(&self, position: usize, column: usize) -> f64 {
        self.ns.samples(position)[[0, column]]
    }

    fn raw_row(&self, position: usize) -> &[Value] {
        &self.rows[self.ns.objects()[position]]
    }
}

#[derive(Debug, Clone)]
pub struct Subgroup {
    pub id: usize,
    /// Positions in the neighborhood set, ascending.
    pub members: Vec<usize>,
    pub pattern: Pattern,
    pub model: WhiteBoxModel,
    pub loss: f64,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateSplit {
    pub subgroup: usize,
    pub column: usize,
    pub threshold: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub left_model: WhiteBoxModel,
    pub right_model: WhiteBoxModel,
    pub left_loss: f64,
    pub right_loss: f64,
    pub gain: f64,
}

impl CandidateSplit {
    pub fn total(&self) -> f64 {
        self.left_loss + self.right_loss
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub subgroup: usize,
    pub column: String,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub gain: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    NoImprovement,
}

#[derive(Debug, Clone)]
pub struct Partition {
    /// Ordered by id.
    pub subgroups: Vec<Subgroup>,
    pub config: SplitConfig,
    pub root_loss: f64,
    pub global_loss: f64,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
}

/// Midpoints of consecutive distinct sorted values.
pub fn candidate_thresholds(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).filter_map(|w| midpoint(w[0], w[1])).collect()
}

/// A threshold separating `a < b`, if representable.
fn midpoint(a: f64, b: f64) -> Option<f64> {
    let t = a + (b - a) / 2.0;
    (a <= t && t < b).then_some(t)
}

/// Fits the subgroup model and its exact loss.
pub fn fit_members(
    ctx: &SplitContext<'_>,
    stats: &[SufficientStats],
    members: &[usize],
    options: &RidgeOptions,
) -> Result<(WhiteBoxModel, f64), SplitError> {
    let model = fit_from_stats(&pooled_stats(stats, members), options)?;
    let loss = subgroup_loss(members, ctx.ns, &model)?;
    Ok((model, loss))
}

struct Screened {
    column: usize,
    threshold: f64,
    approx: f64,
    left_model: WhiteBoxModel,
    right_model: WhiteBoxModel,
}

fn screen_column(
    ctx: &SplitContext<'_>,
    stats: &[SufficientStats],
    members: &[usize],
    column: usize,
    config: &SplitConfig,
) -> Result<Vec<Screened>, SplitError> {
    let options = config.ridge_options();
    let mut order: Vec<(f64, usize)> = members.iter().map(|&p| (ctx.value(p, column), p)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = order.len();
    let admissible = |k: usize| {
        // split after sorted position k
        k + 1 >= config.min_support
            && n - k - 1 >= config.min_support
            && midpoint(order[k].0, order[k + 1].0).is_some()
    };
    let cuts: Vec<usize> = (0..n.saturating_sub(1)).filter(|&k| admissible(k)).collect();
    if cuts.is_empty() {
        return Ok(Vec::new());
    }
    let (m, p) = (stats[0].width(), stats[0].outputs());
    let mut left = Vec::with_capacity(cuts.len());
    let mut acc = SufficientStats::zeros(m, p);
    let mut next = 0;
    for (k, &(_, pos)) in order.iter().enumerate() {
        acc += &stats[pos];
        if next < cuts.len() && cuts[next] == k {
            left.push(acc.clone());
            next += 1;
        }
    }
    let mut right = vec![None; cuts.len()];
    let mut acc = SufficientStats::zeros(m, p);
    let mut next = cuts.len();
    for k in (0..n).rev() {
        if next > 0 && cuts[next - 1] == k {
            right[next - 1] = Some(acc.clone());
            next -= 1;
        }
        acc += &stats[order[k].1];
    }
    let mut out = Vec::with_capacity(cuts.len());
    for ((&k, l), r) in cuts.iter().zip(&left).zip(right) {
        let r = r.expect("every cut has a right side");
        let left_model = fit_from_stats(l, &options)?;
        let right_model = fit_from_stats(&r, &options)?;
        out.push(Screened {
            column,
            threshold: midpoint(order[k].0, order[k + 1].0).expect("admissible"),
            approx: l.sse(&left_model) + r.sse(&right_model),
            left_model,
            right_model,
        });
    }
    Ok(out)
}

/// `a` precedes `b` in the declared tie order.
fn tie_order(a: (usize, f64), b: (usize, f64)) -> std::cmp::Ordering {
    a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// The admissible split of `subgroup` with the smallest summed child loss.
pub fn best_split(
    ctx: &SplitContext<'_>,
    stats: &[SufficientStats],
    subgroup: &Subgroup,
    config: &SplitConfig,
) -> Result<Option<CandidateSplit>, SplitError> {
    if subgroup.members.len() < 2 * config.min_support {
        return Ok(None);
    }
    let columns: Vec<usize> = match &config.split_columns {
        Some(c) => c.clone(),
        None => (0..ctx.columns.len()).collect(),
    };
    let screened: Vec<Vec<Screened>> = columns
        .par_iter()
        .map(|&c| screen_column(ctx, stats, &subgroup.members, c, config))
        .collect::<Result<_, _>>()?;
    let mut screened: Vec<Screened> = screened.into_iter().flatten().collect();
    if screened.is_empty() {
        return Ok(None);
    }
    screened.sort_by(|a, b| {
        a.approx
            .total_cmp(&b.approx)
            .then(tie_order((a.column, a.threshold), (b.column, b.threshold)))
    });
    screened.truncate(RESCORE);
    let exact: Vec<CandidateSplit> = screened
        .into_par_iter()
        .map(|s| {
            let (left, right): (Vec<usize>, Vec<usize>) = subgroup
                .members
                .iter()
                .partition(|&&p| ctx.value(p, s.column) <= s.threshold);
            let left_loss = subgroup_loss(&left, ctx.ns, &s.left_model)?;
            let right_loss = subgroup_loss(&right, ctx.ns, &s.right_model)?;
            Ok(CandidateSplit {
                subgroup: subgroup.id,
                column: s.column,
                threshold: s.threshold,
                left,
                right,
                left_model: s.left_model,
                right_model: s.right_model,
                left_loss,
                right_loss,
                gain: subgroup.loss - (left_loss + right_loss),
            })
        })
        .collect::<Result<_, SplitError>>()?;
    let tol = GAIN_TOLERANCE * subgroup.loss;
    let mut best: Option<CandidateSplit> = None;
    for c in exact {
        best = match best {
            None => Some(c),
            Some(b) => {
                let (ct, bt) = (c.total(), b.total());
                let better = ct < bt - tol
                    || (ct <= bt + tol
                        && tie_order((c.column, c.threshold), (b.column, b.threshold)).is_lt());
                Some(if better { c } else { b })
            }
        };
    }
    Ok(best)
}

/// Grows the partition of every object in `ctx.ns`.
pub fn run(ctx: &SplitContext<'_>, config: &SplitConfig) -> Result<Partition, SplitError> {
    if config.k < 1 {
        return Err(SplitError::Budget);
    }
    if config.min_support < 1 {
        return Err(SplitError::Support);
    }
    if ctx.ns.is_empty() {
        return Err(SplitError::Empty);
    }
    if let Some(&c) = config
        .split_columns
        .iter()
        .flatten()
        .find(|&&c| c >= ctx.columns.len())
    {
        return Err(SplitError::Column(c));
    }
    let stats = neighborhood_stats(ctx.ns)?;
    let options = config.ridge_options();
    let all: Vec<usize> = (0..ctx.ns.len()).collect();
    let (model, loss) = fit_members(ctx, &stats, &all, &options)?;
    let mut active: BTreeMap<usize, Subgroup> = BTreeMap::new();
    active.insert(
        0,
        Subgroup {
            id: 0,
            members: all,
            pattern: Pattern::top(ctx.attributes.len()),
            model,
            loss,
            depth: 0,
        },
    );
    let root_loss = loss;
    let mut splits: BTreeMap<usize, Option<CandidateSplit>> = BTreeMap::new();
    let mut fresh = vec![0usize];
    let mut next_id = 1;
    let mut trace = Vec::new();
    let mut global = root_loss;
    let mut stop = StopReason::Budget;
    while active.len() < config.k {
        let found: Vec<(usize, Option<CandidateSplit>)> = fresh
            .par_iter()
            .map(|id| Ok((*id, best_split(ctx, &stats, &active[id], config)?)))
            .collect::<Result<_, SplitError>>()?;
        splits.extend(found);
        let mut chosen: Option<&CandidateSplit> = None;
        for c in splits.values().flatten() {
            chosen = match chosen {
                None => Some(c),
                Some(b) => {
                    let tol = GAIN_TOLERANCE * global;
                    let better = c.gain > b.gain + tol
                        || (c.gain >= b.gain - tol
                            && tie_order((c.column, c.threshold), (b.column, b.threshold))
                                .then(c.subgroup.cmp(&b.subgroup))
                                .is_lt());
                    Some(if better { c } else { b })
                }
            };
        }
        let parent_id = match chosen {
            Some(c) if c.gain > GAIN_TOLERANCE * active[&c.subgroup].loss => c.subgroup,
            _ => {
                stop = StopReason::NoImprovement;
                break;
            }
        };
        let split = splits.remove(&parent_id).flatten().expect("chosen split");
        let parent = active.remove(&parent_id).expect("active parent");
        let column = &ctx.columns[split.column];
        let (l, r) = (next_id, next_id + 1);
        next_id += 2;
        let children = [
            (l, Side::Le, split.left, split.left_model, split.left_loss),
            (r, Side::Gt, split.right, split.right_model, split.right_loss),
        ];
        for (id, side, members, model, loss) in children {
            let pattern = parent
                .pattern
                .refine(column, side, split.threshold, ctx.attributes)?;
            active.insert(
                id,
                Subgroup {
                    id,
                    members,
                    pattern,
                    model,
                    loss,
                    depth: parent.depth + 1,
                },
            );
        }
        global = active.values().map(|s| s.loss).sum();
        trace.push(TraceEntry {
            iter: trace.len() + 1,
            subgroup: parent_id,
            column: column.name.clone(),
            threshold: split.threshold,
            left: l,
            right: r,
            gain: split.gain,
            loss_after: global,
        });
        fresh = vec![l, r];
    }
    let partition = Partition {
        subgroups: active.into_values().collect(),
        config: config.clone(),
        root_loss,
        global_loss: global,
        trace,
        stop,
    };
    #[cfg(debug_assertions)]
    if let Err(e) = partition.validate(ctx) {
        panic!("partition invariant violated: {e}");
    }
    Ok(partition)
}

impl Partition {
    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }

    /// Subgroup index (into `subgroups`) of every neighborhood position.
    pub fn assignment(&self, n_objects: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_objects];
        for (s, g) in self.subgroups.iter().enumerate() {
            for &p in &g.members {
                if p < n_objects {
                    out[p] = Some(s);
                }
            }
        }
        out
    }

    /// `(K, global loss when K subgroups were first reached)` for
    /// `K = 1..=k_max`; flat after the run stopped.
    pub fn loss_curve(&self, k_max: usize) -> Vec<(usize, f64)> {
        let mut out = vec![(1, self.root_loss)];
        for t in &self.trace {
            out.push((t.iter + 1, t.loss_after));
        }
        let last = out.last().expect("root").1;
        while out.len() < k_max {
            out.push((out.len() + 1, last));
        }
        out.truncate(k_max.max(1));
        out
    }

    /// Checks disjoint cover, the budget, pattern exactness and a
    /// non-increasing trace. Returns the first violation found.
    pub fn validate(&self, ctx: &SplitContext<'_>) -> Result<(), String> {
        let n = ctx.ns.len();
        if self.subgroups.len() > self.config.k {
            return Err(format!("{} subgroups exceed K = {}", self.subgroups.len(), self.config.k));
        }
        let mut owner = vec![None; n];
        for g in &self.subgroups {
            for &p in &g.members {
                if p >= n {
                    return Err(format!("subgroup {} lists unknown object {p}", g.id));
                }
                if let Some(other) = owner[p] {
                    return Err(format!("object {p} in subgroups {other} and {}", g.id));
                }
                owner[p] = Some(g.id);
            }
            let covered: Vec<usize> = (0..n).filter(|&p| g.pattern.covers(ctx.raw_row(p))).collect();
            if covered != g.members {
                return Err(format!("pattern of subgroup {} does not match its members", g.id));
            }
        }
        if let Some(p) = owner.iter().position(Option::is_none) {
            return Err(format!("object {p} belongs to no subgroup"));
        }
        let mut prev = self.root_loss;
        for t in &self.trace {
            if t.loss_after > prev {
                return Err(format!("global loss rose at iteration {}", t.iter));
            }
            prev = t.loss_after;
        }
        Ok(())
    }

    pub fn to_dump(&self, ctx: &SplitContext<'_>, classes: &[String], top_m: usize) -> PartitionDump {
        let subgroups = self
            .subgroups
            .iter()
            .map(|g| {
                let closed = g
                    .pattern
                    .render_closed(g.members.iter().map(|&p| ctx.raw_row(p)), ctx.attributes)
                    .unwrap_or_else(|_| "⊤".into());
                let top_features = (0..g.model.outputs())
                    .map(|class| {
                        let imp = feature_importance(&g.model, class);
                        ClassFeatures {
                            class: classes.get(class).cloned().unwrap_or_else(|| class.to_string()),
                            features: imp
                                .entries
                                .iter()
                                .take(top_m)
                                .map(|e| FeatureEntry {
                                    column: ctx.columns[e.column].name.clone(),
                                    coefficient: e.coefficient,
                                    ratio: e.ratio,
                                })
                                .collect(),
                            note: imp.note,
                        }
                    })
                    .collect();
                SubgroupDump {
                    id: g.id,
                    size: g.members.len(),
                    objects: g.members.iter().map(|&p| ctx.ns.objects()[p]).collect(),
                    pattern: g.pattern.to_entries(ctx.attributes),
                    pattern_text: g.pattern.render(ctx.attributes),
                    pattern_closed: closed,
                    model: ModelDump::from_model(&g.model),
                    loss: g.loss,
                    top_features,
                }
            })
            .collect();
        PartitionDump {
            config: self.config.clone(),
            columns: ctx.columns.iter().map(|c| c.name.clone()).collect(),
            classes: classes.to_vec(),
            root_loss: self.root_loss,
            global_loss: self.global_loss,
            stop: self.stop,
            subgroups,
            trace: self.trace.clone(),
        }
    }
}

/// Serialized partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDump {
    pub config: SplitConfig,
    pub columns: Vec<String>,
    pub classes: Vec<String>,
    pub root_loss: f64,
    pub global_loss: f64,
    pub stop: StopReason,
    pub subgroups: Vec<SubgroupDump>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupDump {
    pub id: usize,
    pub size: usize,
    /// Dataset row indices.
    pub objects: Vec<usize>,
    pub pattern: Vec<PatternEntry>,
    pub pattern_text: String,
    pub pattern_closed: String,
    pub model: ModelDump,
    pub loss: f64,
    pub top_features: Vec<ClassFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
}

impl ModelDump {
    pub fn from_model(m: &WhiteBoxModel) -> Self {
        Self {
            coefficients: m.coefficients.rows().into_iter().map(|r| r.to_vec()).collect(),
            intercepts: m.intercepts.to_vec(),
            lambda: m.lambda,
        }
    }

    pub fn to_model(&self) -> Result<WhiteBoxModel, String> {
        let p = self.coefficients.len();
        let m = self.coefficients.first().map_or(0, Vec::len);
        if self.intercepts.len() != p || self.coefficients.iter().any(|r| r.len() != m) {
            return Err("model coefficient shapes disagree".into());
        }
        Ok(WhiteBoxModel {
            coefficients: ndarray::Array2::from_shape_vec(
                (p, m),
                self.coefficients.iter().flatten().copied().collect(),
            )
            .map_err(|e| e.to_string())?,
            intercepts: ndarray::Array1::from(self.intercepts.clone()),
            lambda: self.lambda,
            samples: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFeatures {
    pub class: String,
    pub features: Vec<FeatureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub column: String,
    pub coefficient: f64,
    pub ratio: f64,
}

impl PartitionDump {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Neighborhoods, labels and partition of one end-to-end run.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub encoded: crate::data::EncodedMatrix,
    pub ns: NeighborhoodSet,
    pub partition: Partition,
}

impl Explanation {
    pub fn context<'a>(&'a self, dataset: &'a crate::data::Dataset) -> SplitContext<'a> {
        SplitContext {
            ns: &self.ns,
            columns: &self.encoded.columns,
            attributes: dataset.attributes(),
            rows: dataset.rows(),
        }
    }
}

/// Generates and labels the neighborhoods of `objects`, then grows the
/// partition.
pub fn explain<B: crate::blackbox::BlackBox + ?Sized>(
    dataset: &crate::data::Dataset,
    objects: &[usize],
    black_box: &B,
    neighborhoods: crate::neighborhood::NeighborhoodConfig,
    config: &SplitConfig,
) -> Result<Explanation, SplitError> {
    let encoded = crate::data::encode(dataset);
    let ns = NeighborhoodSet::generate(encoded.values.view(), &encoded.columns, objects, neighborhoods)?
        .label(black_box, crate::neighborhood::DEFAULT_CHUNK)?;
    let partition = run(
        &SplitContext {
            ns: &ns,
            columns: &encoded.columns,
            attributes: dataset.attributes(),
            rows: dataset.rows(),
        },
        config,
    )?;
    Ok(Explanation {
        encoded,
        ns,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::BlackBox;
    use crate::data::{columns_for, AttributeKind};
    use crate::neighborhood::{Covariance, NeighborhoodConfig};
    use ndarray::{array, Array2};

    #[test]
    fn thresholds_are_midpoints() {
        assert_eq!(candidate_thresholds(&[96.0, 50.0, 97.0, 60.0]), vec![55.0, 78.0, 96.5]);
        assert_eq!(candidate_thresholds(&[0.0, 1.0, 1.0]), vec![0.5]);
        assert!(candidate_thresholds(&[3.0, 3.0]).is_empty());
        assert!(candidate_thresholds(&[]).is_empty());
    }

    /// One numeric attribute, degenerate neighborhoods, fixed outputs.
    fn step_problem(xs: &[f64], ys: &[f64]) -> (NeighborhoodSet, Vec<EncodedColumn>, Vec<Attribute>, Vec<Vec<Value>>) {
        let attrs = vec![Attribute::new("x", AttributeKind::Numeric, 0)];
        let cols = columns_for(&attrs);
        let rows: Vec<Vec<Value>> = xs.iter().map(|&x| vec![Value::Number(x)]).collect();
        let samples: Vec<Array2<f64>> = xs.iter().map(|&x| array![[x]]).collect();
        let outputs: Vec<Array2<f64>> = ys.iter().map(|&y| array![[y, 1.0 - y]]).collect();
        let ns = NeighborhoodSet::from_parts(
            (0..xs.len()).collect(),
            samples,
            Some(outputs),
            Covariance::from_matrix(Array2::eye(1)).unwrap(),
            NeighborhoodConfig {
                shrink: 1.0,
                n_synthetic: 0,
                seed: 0,
            },
        )
        .unwrap();
        (ns, cols, attrs, rows)
    }

    #[test]
    fn step_function_splits_at_one_and_a_half() {
        let (ns, cols, attrs, rows) = step_problem(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 1.0, 1.0]);
        let ctx = SplitContext {
            ns: &ns,
            columns: &cols,
            attributes: &attrs,
            rows: &rows,
        };
        let config = SplitConfig {
            k: 2,
            lambda: 0.0,
            min_support: 1,
            ..SplitConfig::default()
        };
        let part = run(&ctx, &config).unwrap();
        assert_eq!(part.len(), 2);
        assert_eq!(part.trace[0].threshold, 1.5);
        assert!(part.subgroups.iter().all(|g| g.loss < 1e-20));
        part.validate(&ctx).unwrap();
        assert_eq!(part.subgroups[0].pattern.render(&attrs), "x ≤ 1.5");
    }

    #[test]
    fn affine_black_box_never_splits() {
        let attrs = vec![
            Attribute::new("a", AttributeKind::Numeric, 0),
            Attribute::new("b", AttributeKind::Numeric, 1),
        ];
        let cols = columns_for(&attrs);
        let xs = [[0.1, 0.3], [0.5, 0.2], [0.9, 0.8], [0.4, 0.6], [0.2, 0.9], [0.7, 0.1]];
        let rows: Vec<Vec<Value>> = xs.iter().map(|r| r.iter().map(|&v| Value::Number(v)).collect()).collect();
        let enc = Array2::from_shape_vec((6, 2), xs.iter().flatten().copied().collect()).unwrap();
        let ns = NeighborhoodSet::generate(
            enc.view(),
            &cols,
            &(0..6).collect::<Vec<_>>(),
            NeighborhoodConfig {
                shrink: 10.0,
                n_synthetic: 20,
                seed: 3,
            },
        )
        .unwrap();
        // p = (0.2 + 0.1a, 0.8 - 0.1a) is affine in the inputs
        struct Affine;
        impl BlackBox for Affine {
            fn classes(&self) -> &[String] {
                static C: std::sync::OnceLock<Vec<String>> = std::sync::OnceLock::new();
                C.get_or_init(|| vec!["u".into(), "v".into()])
            }
            fn input_width(&self) -> usize {
                2
            }
            fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, crate::blackbox::BlackBoxError> {
                Ok(Array2::from_shape_fn((x.nrows(), 2), |(i, c)| {
                    let u = 0.2 + 0.1 * x[[i, 0]];
                    if c == 0 {
                        u
                    } else {
                        1.0 - u
                    }
                }))
            }
        }
        let ns = ns.label(&Affine, 100).unwrap();
        let ctx = SplitContext {
            ns: &ns,
            columns: &cols,
            attributes: &attrs,
            rows: &rows,
        };
        let config = SplitConfig {
            k: 4,
            lambda: 0.0,
            ..SplitConfig::default()
        };
        let part = run(&ctx, &config).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.stop, StopReason::NoImprovement);
        assert!(part.root_loss < 1e-20);
    }

    #[test]
    fn k_one_keeps_root() {
        let (ns, cols, attrs, rows) = step_problem(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 1.0, 1.0]);
        let ctx = SplitContext {
            ns: &ns,
            columns: &cols,
            attributes: &attrs,
            rows: &rows,
        };
        let config = SplitConfig {
            k: 1,
            ..SplitConfig::default()
        };
        let part = run(&ctx, &config).unwrap();
        assert_eq!(part.len(), 1);
        assert!(part.subgroups[0].pattern.is_top());
        assert_eq!(part.loss_curve(3), vec![(1, part.root_loss), (2, part.root_loss), (3, part.root_loss)]);
        assert!(matches!(
            run(&ctx, &SplitConfig { k: 0, ..config }),
            Err(SplitError::Budget)
        ));
    }

    #[test]
    fn dump_round_trips() {
        let (ns, cols, attrs, rows) = step_problem(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 0.1, 1.0, 0.9, 1.0]);
        let ctx = SplitContext {
            ns: &ns,
            columns: &cols,
            attributes: &attrs,
            rows: &rows,
        };
        let config = SplitConfig {
            k: 3,
            lambda: 0.1,
            min_support: 1,
            ..SplitConfig::default()
        };
        let part = run(&ctx, &config).unwrap();
        let dump = part.to_dump(&ctx, &["a".into(), "b".into()], 3);
        let text = serde_json::to_string_pretty(&dump).unwrap();
        assert_eq!(PartitionDump::from_json(&text).unwrap(), dump);
        for (g, d) in part.subgroups.iter().zip(&dump.subgroups) {
            assert_eq!(d.model.to_model().unwrap().coefficients, g.model.coefficients);
        }
    }
}
