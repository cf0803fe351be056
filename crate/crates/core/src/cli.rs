//! The `sd4x` command line: synthetic data, text featurization, explanation
//! runs and their evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blackbox::{
    write_response, BlackBox, BlackBoxError, ExternalAdapter, LinearBlackBox, RegimeBlackBox,
};
use crate::data::synth::{generate_synthetic, SynthSpec};
use crate::data::text::{default_stopwords, featurize_text};
use crate::data::{
    encode, parse_dataset, write_dataset_csv, DataError, Dataset, EncodedMatrix, Schema,
    CLASS_COLUMN,
};
use crate::evaluation::{
    self, curve_csv, diversity, elbow, fidelity, fit_global_wb, fit_local_wb, object_outputs,
    parse_curve_csv, size_histogram, CurvePoint, EvalError, FidelityEntry, Report,
    DEFAULT_RANKS, DEFAULT_SIMILARITY,
};
use crate::neighborhood::{
    CacheKey, NeighborhoodConfig, NeighborhoodError, NeighborhoodSet, DEFAULT_CHUNK,
    DEFAULT_SHRINK, DEFAULT_SYNTHETIC,
};
use crate::splitter::{self, PartitionDump, SplitConfig, SplitContext, SplitError};
use crate::whitebox::{RidgeOptions, WhiteBoxModel, DEFAULT_LAMBDA};

pub const PARTITION_FILE: &str = "partition.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";
const DEFAULT_TOP_FEATURES: usize = 5;
const DEFAULT_TIMEOUT_SECS: u64 = 300;

/// Failure of a command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, config or arguments.
    #[error("{0}")]
    Input(String),
    /// A result failed a runtime consistency check.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// The external black box failed or misbehaved.
    #[error("external black box: {0}")]
    External(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Input(_) => 2,
            CliError::External(_) => 3,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        input(e)
    }
}

impl From<BlackBoxError> for CliError {
    fn from(e: BlackBoxError) -> Self {
        match e {
            BlackBoxError::Process(_)
            | BlackBoxError::Timeout(_)
            | BlackBoxError::Malformed(_)
            | BlackBoxError::RowCount { .. }
            | BlackBoxError::RowSum { .. } => CliError::External(e.to_string()),
            other => input(other),
        }
    }
}

impl From<NeighborhoodError> for CliError {
    fn from(e: NeighborhoodError) -> Self {
        match e {
            NeighborhoodError::BlackBox(b) => b.into(),
            other => input(other),
        }
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        match e {
            SplitError::Neighborhood(n) => n.into(),
            SplitError::Ridge(_) | SplitError::Pattern(_) => CliError::Invariant(e.to_string()),
            other => input(other),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Ridge(_) => CliError::Invariant(e.to_string()),
            other => input(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sd4x", version, about = "Pattern-described subgroup summaries of black-box explanations")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SD4X_THREADS")]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-regime dataset and its oracle.
    Synth(SynthArgs),
    /// Append tf-idf columns computed from free-text fields.
    Featurize(FeaturizeArgs),
    /// Partition the objects to explain and fit their surrogates.
    Explain(ExplainArgs),
    /// Fidelity, diversity and elbow report for an explanation run.
    Eval(EvalArgs),
    /// Answer one external black-box request with a model file.
    #[command(hide = true)]
    Respond(RespondArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Schema of the non-text columns.
    #[arg(long)]
    pub schema: PathBuf,
    /// Free-text column to featurize; repeat for several.
    #[arg(long = "text-column", required = true)]
    pub text_columns: Vec<String>,
    /// Terms kept per text column.
    #[arg(long, default_value_t = 50)]
    pub top_n: usize,
    #[arg(long, default_value_t = 2)]
    pub min_token_len: usize,
    /// File with one stopword per line; a short English list otherwise.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags shared by `explain` and `eval`; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// `linear:<model.json>`, `external:<command>` or `synthetic:<spec.json>`.
    #[arg(long)]
    pub blackbox: Option<String>,
    /// `all`, `label:<class>` or `sample:<n>`.
    #[arg(long)]
    pub objects: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Neighborhood shrink factor z.
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long)]
    pub n_synth: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub min_support: Option<usize>,
    /// Columns eligible for splits: names, `prefix*`, or `-name` to exclude.
    #[arg(long, value_delimiter = ',')]
    pub split_columns: Option<Vec<String>>,
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub top_features: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Neighborhood cache file, reused when its key matches.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub partition: PathBuf,
    /// Loss curve; `curve.csv` next to the partition by default.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RANKS)]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SIMILARITY)]
    pub similarity: f64,
    /// Class whose coefficient rows are compared; all rows concatenated when absent.
    #[arg(long)]
    pub cosine_class: Option<String>,
    #[command(flatten)]
    pub run: RunFlags,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory holding the request; the response is written next to it.
    pub dir: PathBuf,
}

/// Config file contents; every field is optional and overridable by flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub blackbox: Option<String>,
    pub objects: Option<String>,
    pub k: Option<usize>,
    pub z: Option<f64>,
    pub n_synth: Option<usize>,
    pub lambda: Option<f64>,
    pub min_support: Option<usize>,
    pub split_columns: Option<Vec<String>>,
    pub standardize: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub top_features: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub cache: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.data);
        rebase(&mut cfg.schema);
        rebase(&mut cfg.out);
        rebase(&mut cfg.cache);
        if let Some(bb) = &cfg.blackbox {
            if let Some((kind, rest)) = bb.split_once(':') {
                if kind != "external" && Path::new(rest).is_relative() {
                    cfg.blackbox = Some(format!("{kind}:{}", base.join(rest).display()));
                }
            }
        }
        Ok(cfg)
    }

    /// Layers `flags` over `self`.
    pub fn overridden(mut self, f: &RunFlags) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $( if f.$field.is_some() { self.$field = f.$field.clone(); } )*
            };
        }
        take!(data, schema, blackbox, objects, k, z, n_synth, lambda, min_support,
              split_columns, standardize, seed, out, top_features, timeout_secs, cache);
        self
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let need = |v: Option<PathBuf>, name: &str| {
            v.ok_or_else(|| CliError::Input(format!("missing '{name}' (config or --{name})")))
        };
        let r = Resolved {
            data: need(self.data, "data")?,
            schema: need(self.schema, "schema")?,
            blackbox: self
                .blackbox
                .ok_or_else(|| CliError::Input("missing 'blackbox' (config or --blackbox)".into()))?,
            objects: self.objects.unwrap_or_else(|| "all".into()),
            k: self.k.unwrap_or(splitter::DEFAULT_K),
            z: self.z.unwrap_or(DEFAULT_SHRINK),
            n_synth: self.n_synth.unwrap_or(DEFAULT_SYNTHETIC),
            lambda: self.lambda.unwrap_or(DEFAULT_LAMBDA),
            min_support: self.min_support.unwrap_or(splitter::DEFAULT_MIN_SUPPORT),
            split_columns: self.split_columns,
            standardize: self.standardize.unwrap_or(false),
            seed: self.seed.unwrap_or(0),
            out: self.out.unwrap_or_else(|| PathBuf::from("sd4x-out")),
            top_features: self.top_features.unwrap_or(DEFAULT_TOP_FEATURES),
            timeout_secs: self.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            cache: self.cache,
        };
        r.validate()?;
        Ok(r)
    }
}

/// Fully resolved run parameters, echoed into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub blackbox: String,
    pub objects: String,
    pub k: usize,
    pub z: f64,
    pub n_synth: usize,
    pub lambda: f64,
    pub min_support: usize,
    pub split_columns: Option<Vec<String>>,
    pub standardize: bool,
    pub seed: u64,
    /// Not echoed: outputs must not depend on where they are written.
    #[serde(skip)]
    pub out: PathBuf,
    pub top_features: usize,
    pub timeout_secs: u64,
    pub cache: Option<PathBuf>,
}

impl Resolved {
    fn validate(&self) -> Result<(), CliError> {
        if self.k < 1 {
            return Err(input("k must be at least 1"));
        }
        if !(self.z >= 1.0) || !self.z.is_finite() {
            return Err(input(format!("z must be a finite number >= 1, got {}", self.z)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(input(format!("lambda must be a finite number >= 0, got {}", self.lambda)));
        }
        if self.min_support < 1 {
            return Err(input("min_support must be at least 1"));
        }
        ObjectSelector::parse(&self.objects)?;
        BlackBoxSpec::parse(&self.blackbox)?;
        Ok(())
    }

    fn neighborhood_config(&self) -> NeighborhoodConfig {
        NeighborhoodConfig {
            shrink: self.z,
            n_synthetic: self.n_synth,
            seed: self.seed,
        }
    }

    /// Ridge settings of the baselines, matching the subgroup fits.
    fn ridge_options(&self) -> RidgeOptions {
        RidgeOptions {
            standardize: self.standardize,
            ..RidgeOptions::lenient(self.lambda)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectSelector {
    All,
    Label(String),
    Sample(usize),
}

impl ObjectSelector {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.split_once(':') {
            None if text == "all" => Ok(Self::All),
            Some(("label", class)) if !class.is_empty() => Ok(Self::Label(class.to_string())),
            Some(("sample", n)) => n
                .parse()
                .map(Self::Sample)
                .map_err(|_| input(format!("invalid sample size '{n}'"))),
            _ => Err(input(format!(
                "object selector '{text}' must be all, label:<class> or sample:<n>"
            ))),
        }
    }

    /// Dataset rows selected, in ascending order.
    pub fn select(&self, dataset: &Dataset, seed: u64) -> Result<Vec<usize>, CliError> {
        let rows = match self {
            Self::All => (0..dataset.len()).collect(),
            Self::Label(class) => {
                let c = dataset
                    .class_names()
                    .iter()
                    .position(|n| n == class)
                    .ok_or_else(|| input(format!("unknown class '{class}'")))?;
                let labels = dataset
                    .labels()
                    .ok_or_else(|| input("label filter needs a labelled dataset"))?;
                (0..dataset.len()).filter(|&i| labels[i] == c).collect()
            }
            Self::Sample(n) => {
                if *n > dataset.len() {
                    return Err(input(format!(
                        "cannot sample {n} of {} objects",
                        dataset.len()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v = sample(&mut rng, dataset.len(), *n).into_vec();
                v.sort_unstable();
                v
            }
        };
        if rows.is_empty() {
            return Err(input("no objects selected"));
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlackBoxSpec {
    /// Model file: linear softmax or regime oracle, detected from its contents.
    Model(PathBuf),
    External(Vec<String>),
    Synthetic(PathBuf),
}

impl BlackBoxSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.split_once(':') {
            Some(("linear", p)) | Some(("model", p)) if !p.is_empty() => Ok(Self::Model(p.into())),
            Some(("synthetic", p)) if !p.is_empty() => Ok(Self::Synthetic(p.into())),
            Some(("external", cmd)) => {
                let words: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                if words.is_empty() {
                    return Err(input("external black box needs a command"));
                }
                Ok(Self::External(words))
            }
            _ => Err(input(format!(
                "black box '{text}' must be linear:<path>, external:<command> or synthetic:<spec>"
            ))),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// A model file: the regime format when it declares `"kind": "regimes"`,
/// a linear softmax model otherwise.
pub fn load_model_file(path: &Path, columns: &[String]) -> Result<Box<dyn BlackBox>, CliError> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if value.get("kind").and_then(|k| k.as_str()) == Some("regimes") {
        let bb = RegimeBlackBox::from_json(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if bb.columns() != columns {
            return Err(CliError::Input(format!(
                "{}: regime model columns {:?} differ from the data columns {:?}",
                path.display(),
                bb.columns(),
                columns
            )));
        }
        Ok(Box::new(bb))
    } else {
        let bb = LinearBlackBox::from_json(&text)
            .and_then(|m| m.aligned_to(columns))
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(Box::new(bb))
    }
}

/// The black box plus a hash identifying it for caching.
fn open_blackbox(
    spec: &BlackBoxSpec,
    columns: &[String],
    classes: &[String],
    timeout: Duration,
) -> Result<(Box<dyn BlackBox>, String), CliError> {
    match spec {
        BlackBoxSpec::Model(path) => {
            let bytes = read_file(path)?;
            Ok((load_model_file(path, columns)?, sha256_hex(&[b"model", &bytes])))
        }
        BlackBoxSpec::Synthetic(path) => {
            let bytes = read_file(path)?;
            let spec = SynthSpec::from_json(&String::from_utf8_lossy(&bytes))?;
            let oracle = spec.oracle()?;
            if oracle.columns() != columns {
                return Err(CliError::Input(format!(
                    "synthetic spec columns {:?} differ from the data columns {columns:?}",
                    oracle.columns()
                )));
            }
            Ok((Box::new(oracle), sha256_hex(&[b"synthetic", &bytes])))
        }
        BlackBoxSpec::External(cmd) => {
            if classes.is_empty() {
                return Err(input("an external black box needs the schema to list the classes"));
            }
            let adapter =
                ExternalAdapter::new(cmd.clone(), None, timeout, classes.to_vec(), columns.to_vec())?;
            let id = cmd.join("\u{1f}");
            Ok((Box::new(adapter), sha256_hex(&[b"external", id.as_bytes()])))
        }
    }
}

/// Encoded column indices admitted by a split-column filter.
pub fn split_column_indices(filter: &[String], names: &[String]) -> Result<Vec<usize>, CliError> {
    let matches = |pat: &str, name: &str| match pat.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => pat == name,
    };
    let (exclude, include): (Vec<&String>, Vec<&String>) =
        filter.iter().partition(|p| p.starts_with('-'));
    for pat in filter {
        let pat = pat.trim_start_matches('-');
        if !names.iter().any(|n| matches(pat, n)) {
            return Err(input(format!("split column '{pat}' matches no column")));
        }
    }
    let picked: Vec<usize> = (0..names.len())
        .filter(|&i| include.is_empty() || include.iter().any(|p| matches(p, &names[i])))
        .filter(|&i| !exclude.iter().any(|p| matches(&p[1..], &names[i])))
        .collect();
    if picked.is_empty() {
        return Err(input("split column filter excludes every column"));
    }
    Ok(picked)
}

/// Everything a run needs before splitting.
struct Prepared {
    dataset: Dataset,
    encoded: EncodedMatrix,
    black_box: Box<dyn BlackBox>,
    ns: NeighborhoodSet,
    data_hash: String,
}

fn prepare(cfg: &Resolved) -> Result<Prepared, CliError> {
    let data_bytes = read_file(&cfg.data)?;
    let schema_bytes = read_file(&cfg.schema)?;
    let schema = Schema::from_json(&String::from_utf8_lossy(&schema_bytes))?;
    let dataset = parse_dataset(data_bytes.as_slice(), &schema)?;
    if dataset.is_empty() {
        return Err(input("dataset has no rows"));
    }
    let data_hash = sha256_hex(&[&data_bytes, &schema_bytes]);
    let encoded = encode(&dataset);
    let names = encoded.column_names();
    let classes = schema.classes.clone();
    let (black_box, bb_hash) = open_blackbox(
        &BlackBoxSpec::parse(&cfg.blackbox)?,
        &names,
        &classes,
        Duration::from_secs(cfg.timeout_secs),
    )?;
    let objects = ObjectSelector::parse(&cfg.objects)?.select(&dataset, cfg.seed)?;
    let nc = cfg.neighborhood_config();
    let key = CacheKey {
        data_hash: data_hash.clone(),
        blackbox: bb_hash,
        seed: cfg.seed,
        shrink: cfg.z,
        n_synthetic: cfg.n_synth,
    };
    let cached = match &cfg.cache {
        Some(path) if path.exists() => match NeighborhoodSet::load_cache(path, &key) {
            Ok(Some(ns)) if ns.objects() == objects.as_slice() => Some(ns),
            Ok(_) => None,
            Err(e) => {
                log::warn!("ignoring neighborhood cache {}: {e}", path.display());
                None
            }
        },
        _ => None,
    };
    let ns = match cached {
        Some(ns) => {
            log::info!("reusing cached neighborhoods");
            ns
        }
        None => {
            log::info!(
                "generating {} neighborhoods of {} samples",
                objects.len(),
                cfg.n_synth + 1
            );
            let ns = NeighborhoodSet::generate(encoded.values.view(), &encoded.columns, &objects, nc)?
                .label(black_box.as_ref(), DEFAULT_CHUNK)?;
            if let Some(path) = &cfg.cache {
                ns.save_cache(path, &key)?;
            }
            ns
        }
    };
    Ok(Prepared {
        dataset,
        encoded,
        black_box,
        ns,
        data_hash,
    })
}

/// Contents of `partition.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutput {
    pub config: Resolved,
    pub data_hash: String,
    pub partition: PartitionDump,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub config: Resolved,
    pub data_hash: String,
    pub report: Report,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(input("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(input)?;
    Ok(pool.install(f))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let text = String::from_utf8(read_file(&args.spec)?).map_err(input)?;
    let spec = SynthSpec::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.spec.display())))?;
    let synth = generate_synthetic(&spec, args.seed)?;
    create_dir(&args.out)?;
    let mut csv = Vec::new();
    write_dataset_csv(&synth.dataset, &mut csv)?;
    write_file(&args.out.join("data.csv"), csv)?;
    let schema = Schema::from_attributes(synth.dataset.attributes(), synth.dataset.class_names());
    write_file(&args.out.join("schema.json"), schema.to_json())?;
    write_file(&args.out.join("blackbox.json"), synth.oracle.to_json())?;

    #[derive(Serialize)]
    struct RegimeTruth<'a> {
        index: usize,
        name: String,
        conditions: &'a [crate::blackbox::ConditionEntry],
        count: usize,
    }
    #[derive(Serialize)]
    struct GroundTruth<'a> {
        seed: u64,
        regimes: Vec<RegimeTruth<'a>>,
        assignments: &'a [usize],
    }
    let truth = GroundTruth {
        seed: args.seed,
        regimes: spec
            .regimes
            .iter()
            .enumerate()
            .map(|(i, r)| RegimeTruth {
                index: i,
                name: r.name.clone().unwrap_or_else(|| format!("regime{i}")),
                conditions: &r.conditions,
                count: synth.regimes.iter().filter(|&&g| g == i).count(),
            })
            .collect(),
        assignments: &synth.regimes,
    };
    let json = serde_json::to_string_pretty(&truth).map_err(input)?;
    write_file(&args.out.join("ground_truth.json"), json)?;
    Ok(())
}

pub fn cmd_featurize(args: &FeaturizeArgs) -> Result<(), CliError> {
    if args.top_n == 0 {
        return Err(input("--top-n must be at least 1"));
    }
    let schema_text = String::from_utf8(read_file(&args.schema)?).map_err(input)?;
    let schema = Schema::from_json(&schema_text)?;
    let raw = read_file(&args.data)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw.as_slice());
    let header: Vec<String> = rdr
        .headers()
        .map_err(input)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let text_idx = args
        .text_columns
        .iter()
        .map(|t| {
            header
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| input(format!("text column '{t}' not in the data header")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let keep: Vec<usize> = (0..header.len()).filter(|i| !text_idx.contains(i)).collect();

    let mut rest = csv::Writer::from_writer(Vec::new());
    rest.write_record(keep.iter().map(|&i| &header[i])).map_err(input)?;
    let mut documents: Vec<Vec<String>> = vec![Vec::new(); text_idx.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(input)?;
        if rec.len() != header.len() {
            return Err(input(format!(
                "row {r}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        rest.write_record(keep.iter().map(|&i| &rec[i])).map_err(input)?;
        for (d, &i) in documents.iter_mut().zip(&text_idx) {
            d.push(rec[i].to_string());
        }
    }
    let rest = rest.into_inner().map_err(input)?;
    let mut dataset = parse_dataset(rest.as_slice(), &schema)?;

    let stopwords = match &args.stopwords {
        Some(p) => String::from_utf8_lossy(&read_file(p)?)
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect(),
        None => default_stopwords(),
    };
    let mut vocabulary = BTreeMap::new();
    for (field, docs) in args.text_columns.iter().zip(&documents) {
        let (matrix, terms) = featurize_text(docs, args.top_n, &stopwords, args.min_token_len)?;
        let names: Vec<String> = terms.iter().map(|t| format!("{field}_{t}")).collect();
        for n in &names {
            if dataset.attribute(n).is_some() || n == CLASS_COLUMN {
                return Err(input(format!("feature column '{n}' collides with an existing column")));
            }
        }
        dataset = dataset.with_numeric_columns(&names, &matrix.values)?;
        vocabulary.insert(field.clone(), terms);
    }

    create_dir(&args.out)?;
    let mut csv = Vec::new();
    write_dataset_csv(&dataset, &mut csv)?;
    write_file(&args.out.join("data.csv"), csv)?;
    let schema = Schema::from_attributes(dataset.attributes(), dataset.class_names());
    write_file(&args.out.join("schema.json"), schema.to_json())?;
    let vocab = serde_json::to_string_pretty(&vocabulary).map_err(input)?;
    write_file(&args.out.join("vocabulary.json"), vocab)?;
    Ok(())
}

fn resolve_flags(flags: &RunFlags, base: RunConfig) -> Result<Resolved, CliError> {
    let file = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => base,
    };
    file.overridden(flags).resolve()
}

pub fn cmd_explain(args: &ExplainArgs, threads: Option<usize>) -> Result<ExplainOutput, CliError> {
    let cfg = resolve_flags(&args.run, RunConfig::default())?;
    with_pool(threads, || explain_inner(&cfg))?
}

fn explain_inner(cfg: &Resolved) -> Result<ExplainOutput, CliError> {
    let prep = prepare(cfg)?;
    let names = prep.encoded.column_names();
    let split_columns = cfg
        .split_columns
        .as_ref()
        .map(|f| split_column_indices(f, &names))
        .transpose()?;
    let config = SplitConfig {
        k: cfg.k,
        lambda: cfg.lambda,
        min_support: cfg.min_support,
        standardize: cfg.standardize,
        split_columns,
    };
    let ctx = SplitContext {
        ns: &prep.ns,
        columns: &prep.encoded.columns,
        attributes: prep.dataset.attributes(),
        rows: prep.dataset.rows(),
    };
    let partition = splitter::run(&ctx, &config)?;
    partition.validate(&ctx).map_err(CliError::Invariant)?;
    log::info!(
        "{} subgroups, loss {} -> {}",
        partition.len(),
        partition.root_loss,
        partition.global_loss
    );
    let dump = partition.to_dump(&ctx, prep.black_box.classes(), cfg.top_features);
    let output = ExplainOutput {
        config: cfg.clone(),
        data_hash: prep.data_hash.clone(),
        partition: dump,
    };

    let curve = partition.loss_curve(cfg.k);
    let models: Vec<&WhiteBoxModel> = evaluation::partition_models(&partition, prep.ns.len())?;
    let ranks: Vec<usize> = DEFAULT_RANKS
        .iter()
        .copied()
        .filter(|&r| r <= prep.black_box.n_classes())
        .collect();
    let entry = fidelity("splitsd4x", Some(partition.len()), &prep.ns, &models, &ranks)?;
    let report = build_report(&output.partition, &prep, vec![entry], &curve, None, DEFAULT_SIMILARITY)?;

    create_dir(&cfg.out)?;
    let json = serde_json::to_string_pretty(&output).map_err(input)?;
    write_file(&cfg.out.join(PARTITION_FILE), json + "\n")?;
    write_file(&cfg.out.join(CURVE_FILE), curve_csv(&curve))?;
    write_file(&cfg.out.join(REPORT_MD), report.to_markdown())?;
    Ok(output)
}

fn build_report(
    dump: &PartitionDump,
    prep: &Prepared,
    fidelity: Vec<FidelityEntry>,
    curve: &[(usize, f64)],
    cosine_class: Option<usize>,
    similarity: f64,
) -> Result<Report, CliError> {
    let knee = if curve.len() >= 3 { elbow(curve)? } else { None };
    let models = dump
        .subgroups
        .iter()
        .map(|g| g.model.to_model().map_err(CliError::Invariant))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&WhiteBoxModel> = models.iter().collect();
    let div = (refs.len() >= 2).then(|| diversity(&refs, cosine_class, similarity));
    let bb = object_outputs(&prep.ns)?;
    let position: BTreeMap<usize, usize> = prep
        .ns
        .objects()
        .iter()
        .enumerate()
        .map(|(p, &o)| (o, p))
        .collect();
    let sizes: Vec<usize> = dump.subgroups.iter().map(|g| g.size).collect();
    Ok(Report {
        fidelity,
        curve: curve.iter().map(|&(k, loss)| CurvePoint { k, loss }).collect(),
        elbow: knee,
        diversity: div,
        sizes: size_histogram(&sizes),
        subgroups: Report::summaries(dump, &bb, |o| position.get(&o).copied()),
    })
}

pub fn cmd_eval(args: &EvalArgs, threads: Option<usize>) -> Result<EvalOutput, CliError> {
    let text = String::from_utf8(read_file(&args.partition)?).map_err(input)?;
    let saved: ExplainOutput = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.partition.display())))?;
    let echoed = RunConfig {
        data: Some(saved.config.data.clone()),
        schema: Some(saved.config.schema.clone()),
        blackbox: Some(saved.config.blackbox.clone()),
        objects: Some(saved.config.objects.clone()),
        k: Some(saved.config.k),
        z: Some(saved.config.z),
        n_synth: Some(saved.config.n_synth),
        lambda: Some(saved.config.lambda),
        min_support: Some(saved.config.min_support),
        split_columns: saved.config.split_columns.clone(),
        standardize: Some(saved.config.standardize),
        seed: Some(saved.config.seed),
        out: args.partition.parent().map(Path::to_path_buf),
        top_features: Some(saved.config.top_features),
        timeout_secs: Some(saved.config.timeout_secs),
        cache: saved.config.cache.clone(),
    };
    let cfg = resolve_flags(&args.run, echoed)?;
    let curve_path = args
        .curve
        .clone()
        .unwrap_or_else(|| args.partition.with_file_name(CURVE_FILE));
    let curve = match std::fs::read_to_string(&curve_path) {
        Ok(t) => parse_curve_csv(&t)?,
        Err(_) => {
            log::warn!("no curve at {}; using the split trace", curve_path.display());
            std::iter::once((1, saved.partition.root_loss))
                .chain(saved.partition.trace.iter().map(|t| (t.iter + 1, t.loss_after)))
                .collect()
        }
    };
    with_pool(threads, || eval_inner(args, &cfg, &saved, &curve))?
}

fn eval_inner(
    args: &EvalArgs,
    cfg: &Resolved,
    saved: &ExplainOutput,
    curve: &[(usize, f64)],
) -> Result<EvalOutput, CliError> {
    let prep = prepare(cfg)?;
    if prep.data_hash != saved.data_hash {
        return Err(input("data or schema changed since the partition was computed"));
    }
    let dump = &saved.partition;
    let n = prep.ns.len();
    let position: BTreeMap<usize, usize> = prep
        .ns
        .objects()
        .iter()
        .enumerate()
        .map(|(p, &o)| (o, p))
        .collect();
    let models = dump
        .subgroups
        .iter()
        .map(|g| g.model.to_model().map_err(CliError::Invariant))
        .collect::<Result<Vec<_>, _>>()?;
    let mut assigned: Vec<Option<&WhiteBoxModel>> = vec![None; n];
    for (g, model) in dump.subgroups.iter().zip(&models) {
        if model.width() != prep.ns.width() {
            return Err(input("partition models do not match the data width"));
        }
        for o in &g.objects {
            let p = *position
                .get(o)
                .ok_or_else(|| input(format!("object {o} of the partition is not selected")))?;
            if assigned[p].replace(model).is_some() {
                return Err(CliError::Invariant(format!("object {o} is in two subgroups")));
            }
        }
    }
    let per_object = assigned
        .into_iter()
        .enumerate()
        .map(|(p, m)| {
            m.ok_or_else(|| {
                input(format!("object {} is in no subgroup", prep.ns.objects()[p]))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let classes = prep.black_box.n_classes();
    if let Some(&r) = args.ranks.iter().find(|&&r| r == 0 || r > classes) {
        return Err(input(format!("rank {r} outside 1..={classes}")));
    }
    let opts = cfg.ridge_options();
    let global = fit_global_wb(&prep.ns, &opts)?;
    let local = fit_local_wb(&prep.ns, &opts)?;
    let global_refs = vec![&global; n];
    let local_refs: Vec<&WhiteBoxModel> = local.iter().collect();
    let entries = vec![
        fidelity("splitsd4x", Some(dump.subgroups.len()), &prep.ns, &per_object, &args.ranks)?,
        fidelity("global-wb", Some(1), &prep.ns, &global_refs, &args.ranks)?,
        fidelity("local-wb", Some(n), &prep.ns, &local_refs, &args.ranks)?,
    ];
    let cosine_class = args
        .cosine_class
        .as_ref()
        .map(|c| {
            prep.black_box
                .classes()
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| input(format!("unknown class '{c}'")))
        })
        .transpose()?;
    let report = build_report(dump, &prep, entries, curve, cosine_class, args.similarity)?;
    let output = EvalOutput {
        config: cfg.clone(),
        data_hash: prep.data_hash.clone(),
        report,
    };
    create_dir(&cfg.out)?;
    let json = serde_json::to_string_pretty(&output).map_err(input)?;
    write_file(&cfg.out.join(REPORT_JSON), json + "\n")?;
    write_file(&cfg.out.join(REPORT_MD), output.report.to_markdown())?;
    Ok(output)
}

/// Serves one request of the external protocol from a model file.
pub fn cmd_respond(args: &RespondArgs) -> Result<(), CliError> {
    let request = read_file(&args.dir.join(crate::blackbox::REQUEST_FILE))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(request.as_slice());
    let columns: Vec<String> = rdr.headers().map_err(input)?.iter().map(String::from).collect();
    let bb = load_model_file(&args.model, &columns)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(input)?;
        for f in rec.iter() {
            values.push(f.trim().parse::<f64>().map_err(|_| input(format!("bad number '{f}'")))?);
        }
        rows += 1;
    }
    let x = ndarray::Array2::from_shape_vec((rows, columns.len()), values).map_err(input)?;
    let probs = bb.predict_batch(&x)?;
    let file = std::fs::File::create(args.dir.join(crate::blackbox::RESPONSE_FILE)).map_err(input)?;
    write_response(file, bb.classes(), &probs)?;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Explain(a) => cmd_explain(a, cli.threads).map(|o| {
            println!(
                "{} subgroups written to {}",
                o.partition.subgroups.len(),
                o.config.out.display()
            );
        }),
        Command::Eval(a) => cmd_eval(a, cli.threads).map(|o| {
            for f in &o.report.fidelity {
                println!("{}: mse {:.6}", f.method, f.mse);
            }
        }),
        Command::Respond(a) => cmd_respond(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sd4x: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn selectors_parse() {
        assert_eq!(ObjectSelector::parse("all").unwrap(), ObjectSelector::All);
        assert_eq!(ObjectSelector::parse("label:db").unwrap(), ObjectSelector::Label("db".into()));
        assert_eq!(ObjectSelector::parse("sample:5").unwrap(), ObjectSelector::Sample(5));
        assert!(ObjectSelector::parse("sample:x").is_err());
        assert!(ObjectSelector::parse("some").is_err());
        assert!(matches!(
            BlackBoxSpec::parse("external:python3 m.py").unwrap(),
            BlackBoxSpec::External(w) if w == names(&["python3", "m.py"])
        ));
        assert!(BlackBoxSpec::parse("tree:x").is_err());
    }

    #[test]
    fn split_filter() {
        let cols = names(&["heap", "weekend", "summary_disk", "summary_swap"]);
        assert_eq!(split_column_indices(&names(&["-summary_*"]), &cols).unwrap(), vec![0, 1]);
        assert_eq!(split_column_indices(&names(&["summary_*"]), &cols).unwrap(), vec![2, 3]);
        assert_eq!(split_column_indices(&names(&["heap", "-heap"]), &cols).is_err(), true);
        assert!(split_column_indices(&names(&["nope"]), &cols).is_err());
    }

    #[test]
    fn flags_override_config() {
        let file = RunConfig {
            data: Some("d.csv".into()),
            schema: Some("s.json".into()),
            blackbox: Some("linear:m.json".into()),
            k: Some(4),
            ..RunConfig::default()
        };
        let flags = RunFlags {
            k: Some(7),
            ..RunFlags::default()
        };
        let r = file.overridden(&flags).resolve().unwrap();
        assert_eq!(r.k, 7);
        assert_eq!(r.z, DEFAULT_SHRINK);
        let bad = RunConfig {
            z: Some(0.5),
            ..r_config()
        };
        assert!(bad.resolve().is_err());
    }

    fn r_config() -> RunConfig {
        RunConfig {
            data: Some("d.csv".into()),
            schema: Some("s.json".into()),
            blackbox: Some("linear:m.json".into()),
            ..RunConfig::default()
        }
    }

    #[test]
    fn missing_required_is_input_error() {
        let e = RunConfig::default().resolve().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn external_failures_map_to_exit_3() {
        let e: CliError = NeighborhoodError::BlackBox(BlackBoxError::Process("boom".into())).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = BlackBoxError::UnknownColumn("x".into()).into();
        assert_eq!(e.exit_code(), 2);
    }
}
