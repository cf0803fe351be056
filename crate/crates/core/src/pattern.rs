//! Subgroup descriptions: one restriction per attribute, the specialization
//! order, cover, closure, extent, refinement by split conditions, and
//! rendering.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::data::{format_number, Attribute, AttributeKind, ColumnKind, EncodedColumn, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("closure of an empty object set is undefined")]
    EmptySet,
    #[error("refinement of '{0}' leaves an empty restriction")]
    EmptyRestriction(String),
    #[error("pattern has {actual} restrictions, expected {expected}")]
    Arity { expected: usize, actual: usize },
    #[error("invalid pattern entry: {0}")]
    Entry(String),
}

/// A real interval with optional open ends; infinite ends are always open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn new(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Self {
        Self {
            lo,
            hi,
            lo_open: lo_open || lo == f64::NEG_INFINITY,
            hi_open: hi_open || hi == f64::INFINITY,
        }
    }

    pub fn at_most(v: f64) -> Self {
        Self::new(f64::NEG_INFINITY, v, true, false)
    }

    pub fn above(v: f64) -> Self {
        Self::new(v, f64::INFINITY, true, true)
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = x > self.lo || (x == self.lo && !self.lo_open);
        let hi_ok = x < self.hi || (x == self.hi && !self.hi_open);
        lo_ok && hi_ok
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi && !self.lo_open && !self.hi_open
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        Interval {
            lo,
            hi,
            lo_open,
            hi_open,
        }
    }

    /// `self ⊇ other`.
    pub fn includes(&self, other: &Interval) -> bool {
        if other.is_empty() {
            return true;
        }
        let lo_ok = self.lo < other.lo || (self.lo == other.lo && (!self.lo_open || other.lo_open));
        let hi_ok = self.hi > other.hi || (self.hi == other.hi && (!self.hi_open || other.hi_open));
        lo_ok && hi_ok
    }

    /// Integer levels `0..levels` lying inside the interval.
    fn levels(&self, levels: usize) -> Option<(usize, usize)> {
        let inside: Vec<usize> = (0..levels).filter(|&l| self.contains(l as f64)).collect();
        Some((*inside.first()?, *inside.last()?))
    }
}

/// The admissible values of one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Restriction {
    Unrestricted,
    /// Numeric values, or ordinal level codes.
    Interval(Interval),
    /// Nominal category indices. An empty set covers nothing.
    Categories(BTreeSet<usize>),
    /// Allowed Boolean values.
    Bools(BTreeSet<bool>),
}

impl Restriction {
    pub fn admits(&self, value: &Value) -> bool {
        match (self, value) {
            (Restriction::Unrestricted, _) => true,
            (Restriction::Interval(iv), Value::Number(v)) => iv.contains(*v),
            (Restriction::Interval(iv), Value::Category(c)) => iv.contains(*c as f64),
            (Restriction::Categories(set), Value::Category(c)) => set.contains(c),
            (Restriction::Bools(set), Value::Bool(b)) => set.contains(b),
            _ => false,
        }
    }

    /// `self ⊇ other`, for canonical restrictions.
    pub fn includes(&self, other: &Restriction) -> bool {
        match (self, other) {
            (Restriction::Unrestricted, _) => true,
            (_, Restriction::Unrestricted) => false,
            (Restriction::Interval(a), Restriction::Interval(b)) => a.includes(b),
            (Restriction::Categories(a), Restriction::Categories(b)) => a.is_superset(b),
            (Restriction::Bools(a), Restriction::Bools(b)) => a.is_superset(b),
            (_, Restriction::Categories(b)) => b.is_empty(),
            (_, Restriction::Bools(b)) => b.is_empty(),
            (_, Restriction::Interval(b)) => b.is_empty(),
        }
    }

    fn is_empty_for(&self, kind: &AttributeKind) -> bool {
        match self {
            Restriction::Unrestricted => false,
            Restriction::Interval(iv) => match kind {
                AttributeKind::Ordinal(levels) => iv.levels(levels.len()).is_none(),
                _ => iv.is_empty(),
            },
            Restriction::Categories(s) => s.is_empty(),
            Restriction::Bools(s) => s.is_empty(),
        }
    }

    /// Maps full-domain restrictions to `Unrestricted`.
    fn canonical(self, kind: &AttributeKind) -> Self {
        let full = match (&self, kind) {
            (Restriction::Interval(iv), AttributeKind::Numeric) => {
                iv.lo == f64::NEG_INFINITY && iv.hi == f64::INFINITY
            }
            (Restriction::Interval(iv), AttributeKind::Ordinal(levels)) => {
                iv.levels(levels.len()) == Some((0, levels.len() - 1))
            }
            (Restriction::Categories(s), AttributeKind::Nominal(c)) => s.len() == c.len(),
            (Restriction::Bools(s), AttributeKind::Boolean) => s.len() == 2,
            _ => false,
        };
        if full {
            Restriction::Unrestricted
        } else {
            self
        }
    }

    fn intersect(&self, other: &Restriction) -> Restriction {
        match (self, other) {
            (Restriction::Unrestricted, r) | (r, Restriction::Unrestricted) => r.clone(),
            (Restriction::Interval(a), Restriction::Interval(b)) => {
                Restriction::Interval(a.intersect(b))
            }
            (Restriction::Categories(a), Restriction::Categories(b)) => {
                Restriction::Categories(a.intersection(b).copied().collect())
            }
            (Restriction::Bools(a), Restriction::Bools(b)) => {
                Restriction::Bools(a.intersection(b).copied().collect())
            }
            _ => Restriction::Categories(BTreeSet::new()),
        }
    }
}

/// Side of a split condition on an encoded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Le,
    Gt,
}

impl Side {
    pub fn holds(self, x: f64, threshold: f64) -> bool {
        match self {
            Side::Le => x <= threshold,
            Side::Gt => x > threshold,
        }
    }
}

/// A restriction per attribute. Attributes are remembered in the order they
/// were first restricted, which drives rendering; equality ignores it.
#[derive(Debug, Clone)]
pub struct Pattern {
    restrictions: Vec<Restriction>,
    order: Vec<usize>,
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.restrictions == other.restrictions
    }
}

impl Pattern {
    /// The pattern covering everything.
    pub fn top(arity: usize) -> Self {
        Self {
            restrictions: vec![Restriction::Unrestricted; arity],
            order: Vec::new(),
        }
    }

    pub fn from_restrictions(
        restrictions: Vec<Restriction>,
        attributes: &[Attribute],
    ) -> Result<Self, PatternError> {
        if restrictions.len() != attributes.len() {
            return Err(PatternError::Arity {
                expected: attributes.len(),
                actual: restrictions.len(),
            });
        }
        let restrictions: Vec<Restriction> = restrictions
            .into_iter()
            .zip(attributes)
            .map(|(r, a)| r.canonical(&a.kind))
            .collect();
        let order = restricted(&restrictions);
        Ok(Self {
            restrictions,
            order,
        })
    }

    pub fn arity(&self) -> usize {
        self.restrictions.len()
    }

    pub fn restrictions(&self) -> &[Restriction] {
        &self.restrictions
    }

    pub fn restriction(&self, attribute: usize) -> &Restriction {
        &self.restrictions[attribute]
    }

    /// Restricted attributes in refinement order.
    pub fn restricted_attributes(&self) -> &[usize] {
        &self.order
    }

    pub fn is_top(&self) -> bool {
        self.order.is_empty()
    }

    pub fn covers(&self, row: &[Value]) -> bool {
        row.len() == self.arity() && self.restrictions.iter().zip(row).all(|(r, v)| r.admits(v))
    }

    /// `self ⊑ other`: every restriction of `self` contains the one of `other`.
    pub fn is_more_general(&self, other: &Pattern) -> bool {
        self.arity() == other.arity()
            && self
                .restrictions
                .iter()
                .zip(&other.restrictions)
                .all(|(a, b)| a.includes(b))
    }

    /// Covered objects among `candidates` (indices into `rows`), in order.
    pub fn extent(&self, rows: &[Vec<Value>], candidates: &[usize]) -> Vec<usize> {
        candidates
            .iter()
            .copied()
            .filter(|&i| self.covers(&rows[i]))
            .collect()
    }

    /// Intersects the pattern with the condition `column ◁ threshold` on an
    /// encoded column, mapped back to its source attribute.
    pub fn refine(
        &self,
        column: &EncodedColumn,
        side: Side,
        threshold: f64,
        attributes: &[Attribute],
    ) -> Result<Pattern, PatternError> {
        let attr = &attributes[column.attribute];
        let cond = match column.kind {
            ColumnKind::Numeric | ColumnKind::Ordinal { .. } => match side {
                Side::Le => Restriction::Interval(Interval::at_most(threshold)),
                Side::Gt => Restriction::Interval(Interval::above(threshold)),
            },
            ColumnKind::Boolean => Restriction::Bools(
                [false, true]
                    .into_iter()
                    .filter(|&b| side.holds(if b { 1.0 } else { 0.0 }, threshold))
                    .collect(),
            ),
            ColumnKind::OneHot { category } => {
                let n = attr.kind.categories().map_or(0, <[String]>::len);
                Restriction::Categories(
                    (0..n)
                        .filter(|&c| side.holds(if c == category { 1.0 } else { 0.0 }, threshold))
                        .collect(),
                )
            }
        };
        let current = &self.restrictions[column.attribute];
        let next = current.intersect(&cond);
        if next.is_empty_for(&attr.kind) {
            return Err(PatternError::EmptyRestriction(attr.name.clone()));
        }
        let mut out = self.clone();
        out.restrictions[column.attribute] = next.canonical(&attr.kind);
        if !matches!(out.restrictions[column.attribute], Restriction::Unrestricted)
            && !out.order.contains(&column.attribute)
        {
            out.order.push(column.attribute);
        }
        Ok(out)
    }

    /// Human-readable conjunction, `⊤` when nothing is restricted.
    pub fn render(&self, attributes: &[Attribute]) -> String {
        let parts: Vec<String> = self
            .order
            .iter()
            .filter_map(|&a| render_restriction(&attributes[a], &self.restrictions[a]))
            .collect();
        if parts.is_empty() {
            "⊤".to_string()
        } else {
            parts.join(" ∧ ")
        }
    }

    /// Renders the closure of `rows` on the attributes this pattern restricts.
    pub fn render_closed<'a, I>(&self, rows: I, attributes: &[Attribute]) -> Result<String, PatternError>
    where
        I: IntoIterator<Item = &'a [Value]>,
    {
        let closure = most_restrictive(rows, attributes)?;
        let parts: Vec<String> = self
            .order
            .iter()
            .filter_map(|&a| render_restriction(&attributes[a], &closure.restrictions[a]))
            .collect();
        Ok(if parts.is_empty() {
            "⊤".to_string()
        } else {
            parts.join(" ∧ ")
        })
    }

    /// Serialized entries for restricted attributes, in refinement order.
    pub fn to_entries(&self, attributes: &[Attribute]) -> Vec<PatternEntry> {
        self.order
            .iter()
            .flat_map(|&a| entries_for(&attributes[a], &self.restrictions[a]))
            .collect()
    }

    /// Rebuilds a pattern from its entries; repeated attributes intersect.
    pub fn from_entries(
        entries: &[PatternEntry],
        attributes: &[Attribute],
    ) -> Result<Pattern, PatternError> {
        let mut out = Pattern::top(attributes.len());
        for e in entries {
            let idx = attributes
                .iter()
                .position(|a| a.name == e.attribute)
                .ok_or_else(|| PatternError::Entry(format!("unknown attribute '{}'", e.attribute)))?;
            let attr = &attributes[idx];
            let r = entry_restriction(attr, e)?;
            let next = out.restrictions[idx].intersect(&r);
            if next.is_empty_for(&attr.kind) {
                return Err(PatternError::EmptyRestriction(attr.name.clone()));
            }
            out.restrictions[idx] = next;
            if !out.order.contains(&idx) {
                out.order.push(idx);
            }
        }
        // canonicalize only once all entries of an attribute are intersected,
        // so a bound that alone covers every level is not lost
        for (r, a) in out.restrictions.iter_mut().zip(attributes) {
            *r = r.clone().canonical(&a.kind);
        }
        let restrictions = &out.restrictions;
        out.order.retain(|&i| !matches!(restrictions[i], Restriction::Unrestricted));
        Ok(out)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.restrictions)
    }
}

fn restricted(restrictions: &[Restriction]) -> Vec<usize> {
    restrictions
        .iter()
        .enumerate()
        .filter(|(_, r)| !matches!(r, Restriction::Unrestricted))
        .map(|(i, _)| i)
        .collect()
}

/// `δ(O′)`: closed `[min, max]` per numeric and ordinal attribute, occurring
/// categories per nominal, occurring values per Boolean.
pub fn most_restrictive<'a, I>(rows: I, attributes: &[Attribute]) -> Result<Pattern, PatternError>
where
    I: IntoIterator<Item = &'a [Value]>,
{
    let m = attributes.len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    let mut cats: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    let mut bools: Vec<BTreeSet<bool>> = vec![BTreeSet::new(); m];
    let mut count = 0usize;
    for row in rows {
        if row.len() != m {
            return Err(PatternError::Arity {
                expected: m,
                actual: row.len(),
            });
        }
        count += 1;
        for (j, v) in row.iter().enumerate() {
            match v {
                Value::Number(x) => {
                    lo[j] = lo[j].min(*x);
                    hi[j] = hi[j].max(*x);
                }
                Value::Category(c) => {
                    cats[j].insert(*c);
                    lo[j] = lo[j].min(*c as f64);
                    hi[j] = hi[j].max(*c as f64);
                }
                Value::Bool(b) => {
                    bools[j].insert(*b);
                }
            }
        }
    }
    if count == 0 {
        return Err(PatternError::EmptySet);
    }
    let restrictions = attributes
        .iter()
        .enumerate()
        .map(|(j, a)| match a.kind {
            AttributeKind::Numeric | AttributeKind::Ordinal(_) => {
                Restriction::Interval(Interval::closed(lo[j], hi[j]))
            }
            AttributeKind::Nominal(_) => Restriction::Categories(std::mem::take(&mut cats[j])),
            AttributeKind::Boolean => Restriction::Bools(std::mem::take(&mut bools[j])),
        })
        .collect();
    Pattern::from_restrictions(restrictions, attributes)
}

fn render_restriction(attr: &Attribute, r: &Restriction) -> Option<String> {
    let name = &attr.name;
    match (r, &attr.kind) {
        (Restriction::Unrestricted, _) => None,
        (Restriction::Interval(iv), AttributeKind::Ordinal(levels)) => {
            let (a, b) = iv.levels(levels.len())?;
            let last = levels.len() - 1;
            Some(if a == b {
                format!("{name} = {}", levels[a])
            } else if a == 0 {
                format!("{name} ≤ {}", levels[b])
            } else if b == last {
                format!("{name} ≥ {}", levels[a])
            } else {
                format!("{name} ∈ [{}, {}]", levels[a], levels[b])
            })
        }
        (Restriction::Interval(iv), _) => Some(render_interval(name, iv)),
        (Restriction::Categories(set), kind) => {
            let all = kind.categories().unwrap_or(&[]);
            let label = |c: &usize| all.get(*c).cloned().unwrap_or_else(|| format!("#{c}"));
            Some(match set.len() {
                0 => format!("{name} ∈ ∅"),
                1 => format!("{name} = {}", label(set.iter().next().expect("one"))),
                n if n + 1 == all.len() => {
                    let missing = (0..all.len()).find(|c| !set.contains(c)).expect("one missing");
                    format!("{name} ≠ {}", all[missing])
                }
                _ => format!(
                    "{name} ∈ {{{}}}",
                    set.iter().map(label).collect::<Vec<_>>().join(", ")
                ),
            })
        }
        (Restriction::Bools(set), _) => Some(match set.iter().next() {
            None => format!("{name} ∈ ∅"),
            Some(b) if set.len() == 1 => format!("{name} = {}", if *b { "True" } else { "False" }),
            Some(_) => return None,
        }),
    }
}

fn render_interval(name: &str, iv: &Interval) -> String {
    let lo = format_number(iv.lo);
    let hi = format_number(iv.hi);
    if iv.is_degenerate() {
        return format!("{name} = {lo}");
    }
    match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (false, true) => format!("{name} {} {hi}", if iv.hi_open { "<" } else { "≤" }),
        (true, false) => format!("{name} {} {lo}", if iv.lo_open { ">" } else { "≥" }),
        (false, false) => format!("{name} ∈ ℝ"),
        (true, true) => format!(
            "{name} ∈ {}{lo}, {hi}{}",
            if iv.lo_open { "(" } else { "[" },
            if iv.hi_open { ")" } else { "]" }
        ),
    }
}

/// One serialized restriction term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub attribute: String,
    pub op: PatternOp,
    pub value: Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternOp {
    /// Closed interval `[lo, hi]`, or a set of categories / Booleans.
    In,
    Le,
    Lt,
    Gt,
    Ge,
    Eq,
}

fn entries_for(attr: &Attribute, r: &Restriction) -> Vec<PatternEntry> {
    let entry = |op, value| PatternEntry {
        attribute: attr.name.clone(),
        op,
        value,
    };
    match r {
        Restriction::Unrestricted => Vec::new(),
        Restriction::Interval(iv) => {
            if iv.is_degenerate() {
                return vec![entry(PatternOp::Eq, Json::from(iv.lo))];
            }
            if !iv.lo_open && !iv.hi_open {
                return vec![entry(PatternOp::In, Json::from(vec![iv.lo, iv.hi]))];
            }
            let mut out = Vec::new();
            if iv.lo.is_finite() {
                let op = if iv.lo_open { PatternOp::Gt } else { PatternOp::Ge };
                out.push(entry(op, Json::from(iv.lo)));
            }
            if iv.hi.is_finite() {
                let op = if iv.hi_open { PatternOp::Lt } else { PatternOp::Le };
                out.push(entry(op, Json::from(iv.hi)));
            }
            out
        }
        Restriction::Categories(set) => {
            let names = attr.kind.categories().unwrap_or(&[]);
            let values: Vec<Json> = set
                .iter()
                .map(|&c| Json::from(names.get(c).cloned().unwrap_or_default()))
                .collect();
            if values.len() == 1 {
                vec![entry(PatternOp::Eq, values[0].clone())]
            } else {
                vec![entry(PatternOp::In, Json::from(values))]
            }
        }
        Restriction::Bools(set) => {
            let values: Vec<Json> = set.iter().map(|&b| Json::from(b)).collect();
            if values.len() == 1 {
                vec![entry(PatternOp::Eq, values[0].clone())]
            } else {
                vec![entry(PatternOp::In, Json::from(values))]
            }
        }
    }
}

fn entry_restriction(attr: &Attribute, e: &PatternEntry) -> Result<Restriction, PatternError> {
    let bad = || PatternError::Entry(format!("bad value for '{}' with op {:?}", attr.name, e.op));
    let number = |v: &Json| v.as_f64().filter(|x| x.is_finite()).ok_or_else(bad);
    match &attr.kind {
        AttributeKind::Numeric | AttributeKind::Ordinal(_) => {
            let iv = match e.op {
                PatternOp::Le => Interval::at_most(number(&e.value)?),
                PatternOp::Lt => Interval::new(f64::NEG_INFINITY, number(&e.value)?, true, true),
                PatternOp::Gt => Interval::above(number(&e.value)?),
                PatternOp::Ge => Interval::new(number(&e.value)?, f64::INFINITY, false, true),
                PatternOp::Eq => {
                    let v = number(&e.value)?;
                    Interval::closed(v, v)
                }
                PatternOp::In => match e.value.as_array().map(Vec::as_slice) {
                    Some([lo, hi]) => Interval::closed(number(lo)?, number(hi)?),
                    _ => return Err(bad()),
                },
            };
            Ok(Restriction::Interval(iv))
        }
        AttributeKind::Nominal(names) => {
            let lookup = |v: &Json| {
                v.as_str()
                    .and_then(|s| names.iter().position(|n| n == s))
                    .ok_or_else(|| PatternError::Entry(format!("unknown category {v} of '{}'", attr.name)))
            };
            let set = match e.op {
                PatternOp::Eq => [lookup(&e.value)?].into_iter().collect(),
                PatternOp::In => e
                    .value
                    .as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(lookup)
                    .collect::<Result<BTreeSet<_>, _>>()?,
                _ => return Err(bad()),
            };
            Ok(Restriction::Categories(set))
        }
        AttributeKind::Boolean => {
            let flag = |v: &Json| v.as_bool().ok_or_else(bad);
            let set = match e.op {
                PatternOp::Eq => [flag(&e.value)?].into_iter().collect(),
                PatternOp::In => e
                    .value
                    .as_array()
                    .ok_or_else(bad)?
                    .iter()
                    .map(flag)
                    .collect::<Result<BTreeSet<_>, _>>()?,
                _ => return Err(bad()),
            };
            Ok(Restriction::Bools(set))
        }
    }
}

/// Parses a JSON array of pattern entries.
pub fn parse_pattern(text: &str, attributes: &[Attribute]) -> Result<Pattern, PatternError> {
    let entries: Vec<PatternEntry> =
        serde_json::from_str(text).map_err(|e| PatternError::Entry(e.to_string()))?;
    Pattern::from_entries(&entries, attributes)
}
