use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ndarray::Array2;

use super::{BlackBox, BlackBoxError};

/// Rows of an external response may miss a unit sum by at most this much;
/// they are renormalized, anything further off is rejected.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

/// Negative entries above `-NEGATIVE_CLIP` are clipped to zero.
const NEGATIVE_CLIP: f64 = 1e-12;

/// Deviations above this are reported as warnings when renormalizing.
const WARN_DEVIATION: f64 = 1e-9;

pub const REQUEST_FILE: &str = "request.csv";
pub const RESPONSE_FILE: &str = "response.csv";

/// Runs a prediction command over a file-based batch protocol.
///
/// The adapter writes `request.csv` (encoded column names, then one row per
/// object) into a fresh temporary directory, runs the command with that
/// directory appended as last argument and reads `response.csv` (one column
/// per class, one row per object). Calls are serialized.
#[derive(Debug)]
pub struct ExternalAdapter {
    command: Vec<String>,
    working_dir: Option<PathBuf>,
    timeout: Duration,
    classes: Vec<String>,
    columns: Vec<String>,
    lock: Mutex<()>,
    warnings: Mutex<Vec<String>>,
}

impl ExternalAdapter {
    pub fn new(
        command: Vec<String>,
        working_dir: Option<PathBuf>,
        timeout: Duration,
        classes: Vec<String>,
        columns: Vec<String>,
    ) -> Result<Self, BlackBoxError> {
        if command.is_empty() {
            return Err(BlackBoxError::Process("empty command line".into()));
        }
        if classes.is_empty() {
            return Err(BlackBoxError::Model("no classes".into()));
        }
        Ok(Self {
            command,
            working_dir,
            timeout,
            classes,
            columns,
            lock: Mutex::new(()),
            warnings: Mutex::new(Vec::new()),
        })
    }

    /// Warnings recorded while validating responses.
    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warnings lock").clone()
    }

    fn write_request(&self, path: &std::path::Path, x: &Array2<f64>) -> Result<(), BlackBoxError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| BlackBoxError::Io(e.into()))?;
        w.write_record(&self.columns)
            .map_err(|e| BlackBoxError::Io(e.into()))?;
        for row in x.rows() {
            w.write_record(row.iter().map(|v| format!("{v:?}")))
                .map_err(|e| BlackBoxError::Io(e.into()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn run(&self, dir: &std::path::Path) -> Result<(), BlackBoxError> {
        let stderr_path = dir.join("stderr.log");
        let stderr = File::create(&stderr_path)?;
        let mut cmd = Command::new(&self.command[0]);
        cmd.args(&self.command[1..])
            .arg(dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(stderr);
        if let Some(wd) = &self.working_dir {
            cmd.current_dir(wd);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| BlackBoxError::Process(format!("cannot start '{}': {e}", self.command[0])))?;
        let start = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() > self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(BlackBoxError::Timeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        if !status.success() {
            let tail = std::fs::read_to_string(&stderr_path).unwrap_or_default();
            return Err(BlackBoxError::Process(format!(
                "{status}: {}",
                tail.trim()
            )));
        }
        Ok(())
    }
}

/// Parses and validates a response body for `rows` objects.
/// Returns the probabilities and any renormalization warnings.
pub fn parse_response(
    text: &str,
    rows: usize,
    classes: &[String],
) -> Result<(Array2<f64>, Vec<String>), BlackBoxError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| BlackBoxError::Malformed(e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() != classes.len() || names.iter().zip(classes).any(|(a, b)| a != b) {
        return Err(BlackBoxError::Malformed(format!(
            "response header {names:?} does not list classes {classes:?}"
        )));
    }
    let p = classes.len();
    let mut values = Vec::with_capacity(rows * p);
    let mut count = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| BlackBoxError::Malformed(e.to_string()))?;
        if record.len() != p {
            return Err(BlackBoxError::Malformed(format!(
                "response row {count} has {} fields",
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| BlackBoxError::Malformed(format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(BlackBoxError::Malformed(format!("non-finite value '{field}'")));
            }
            values.push(v);
        }
        count += 1;
    }
    if count != rows {
        return Err(BlackBoxError::RowCount {
            expected: rows,
            actual: count,
        });
    }
    let mut out = Array2::from_shape_vec((rows, p), values)
        .map_err(|e| BlackBoxError::Malformed(e.to_string()))?;
    let mut warnings = Vec::new();
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            if *v < 0.0 {
                if *v >= -NEGATIVE_CLIP {
                    *v = 0.0;
                } else {
                    return Err(BlackBoxError::Malformed(format!(
                        "row {r} has negative probability {v}"
                    )));
                }
            }
        }
        let sum = row.sum();
        let deviation = (sum - 1.0).abs();
        if deviation > PROBABILITY_TOLERANCE || sum <= 0.0 {
            return Err(BlackBoxError::RowSum { row: r, sum });
        }
        if deviation > 0.0 {
            row.mapv_inplace(|v| v / sum);
            if deviation > WARN_DEVIATION {
                warnings.push(format!("row {r} summed to {sum}; renormalized"));
            }
        }
    }
    Ok((out, warnings))
}

impl BlackBox for ExternalAdapter {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn input_width(&self) -> usize {
        self.columns.len()
    }

    fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, BlackBoxError> {
        self.check_width(x)?;
        let _guard = self.lock.lock().expect("adapter lock");
        let dir = tempfile::tempdir()?;
        self.write_request(&dir.path().join(REQUEST_FILE), x)?;
        self.run(dir.path())?;
        let response_path = dir.path().join(RESPONSE_FILE);
        let text = std::fs::read_to_string(&response_path).map_err(|e| {
            BlackBoxError::Malformed(format!("cannot read {}: {e}", RESPONSE_FILE))
        })?;
        let (out, warnings) = parse_response(&text, x.nrows(), &self.classes)?;
        if !warnings.is_empty() {
            for w in &warnings {
                log::warn!("external black box: {w}");
            }
            self.warnings
                .lock()
                .expect("warnings lock")
                .extend(warnings);
        }
        Ok(out)
    }
}

/// Writes a response file in the format `parse_response` reads.
pub fn write_response<W: Write>(
    writer: W,
    classes: &[String],
    probabilities: &Array2<f64>,
) -> Result<(), BlackBoxError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(classes).map_err(|e| BlackBoxError::Io(e.into()))?;
    for row in probabilities.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| BlackBoxError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
