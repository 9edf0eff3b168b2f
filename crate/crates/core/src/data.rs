//! Per-experiment velocimetry records: types, CSV ingestion, validation.
//!
//! An experiment file is UTF-8 text. Metadata lines start with `#` and hold
//! `key=value` pairs (`thickness_in` and `dt_ns` are required, `id` and
//! `t0_ns` optional). Data rows are `time_ns,velocity_mps`; an optional
//! column-name line may precede them. The time column must agree with
//! `dt_ns` to 1e-9 relative.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const TIME_TOLERANCE: f64 = 1e-9;

/// One measurement in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPoint<T> {
    pub time_s: T,
    pub thickness_in: T,
    pub velocity_mps: T,
}

/// One experiment: a uniformly sampled velocity record for one coupon thickness.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSeries<T> {
    pub id: String,
    pub thickness_in: T,
    pub dt_ns: T,
    /// Clock time of sample 0.
    pub time_origin_ns: T,
    /// Detonation-relative onset, when known.
    pub t0_ns: Option<T>,
    pub velocities: Vec<T>,
}

impl<T: Scalar> ExperimentSeries<T> {
    pub fn new(
        id: impl Into<String>,
        thickness_in: T,
        dt_ns: T,
        velocities: Vec<T>,
    ) -> Result<Self> {
        let id = id.into();
        if !(dt_ns > T::zero()) || !dt_ns.is_finite() {
            return Err(Error::Dataset(format!(
                "series '{id}': dt must be positive"
            )));
        }
        if !(thickness_in > T::zero()) || !thickness_in.is_finite() {
            return Err(Error::Dataset(format!(
                "series '{id}': thickness must be positive"
            )));
        }
        if velocities.is_empty() {
            return Err(Error::Dataset(format!("series '{id}': no velocities")));
        }
        Ok(Self {
            id,
            thickness_in,
            dt_ns,
            time_origin_ns: T::zero(),
            t0_ns: None,
            velocities,
        })
    }

    pub fn with_origin(mut self, time_origin_ns: T) -> Self {
        self.time_origin_ns = time_origin_ns;
        self
    }

    pub fn with_onset(mut self, t0_ns: T) -> Self {
        self.t0_ns = Some(t0_ns);
        self
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn time_ns(&self, index: usize) -> T {
        self.time_origin_ns + self.dt_ns * T::from_usize_lossy(index)
    }

    pub fn points(&self) -> impl Iterator<Item = DataPoint<T>> + '_ {
        let ns = T::lit(1e-9);
        self.velocities
            .iter()
            .enumerate()
            .map(move |(i, &v)| DataPoint {
                time_s: self.time_ns(i) * ns,
                thickness_in: self.thickness_in,
                velocity_mps: v,
            })
    }
}

/// A set of experiments with distinct ids and thicknesses.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset<T> {
    pub experiments: Vec<ExperimentSeries<T>>,
}

impl<T: Scalar> RawDataset<T> {
    pub fn new(experiments: Vec<ExperimentSeries<T>>) -> Result<Self> {
        if experiments.is_empty() {
            return Err(Error::Dataset("no experiments".into()));
        }
        let mut ids = HashSet::new();
        for e in &experiments {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate id '{}'", e.id)));
            }
        }
        for (i, a) in experiments.iter().enumerate() {
            if let Some(b) = experiments[..i]
                .iter()
                .find(|b| b.thickness_in == a.thickness_in)
            {
                return Err(Error::Dataset(format!(
                    "duplicate thickness {} in '{}' and '{}'",
                    a.thickness_in, b.id, a.id
                )));
            }
        }
        Ok(Self { experiments })
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ExperimentSeries<T>> {
        self.experiments.iter().find(|e| e.id == id)
    }
}

fn parse_number(line: usize, what: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("non-numeric {what} '{}'", s.trim())))
}

/// Parse one experiment file. The id comes from the `id` key, or is left
/// empty for the caller to fill in.
pub fn parse_experiment<T: Scalar>(text: &str) -> Result<ExperimentSeries<T>> {
    let mut thickness: Option<(usize, f64)> = None;
    let mut dt: Option<(usize, f64)> = None;
    let mut t0: Option<f64> = None;
    let mut id: Option<String> = None;
    let mut seen_keys = HashSet::new();
    let mut seen_columns = false;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let Some((key, value)) = comment.split_once('=') else {
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            if !rows.is_empty() {
                return Err(Error::parse(
                    lineno,
                    "malformed header: metadata after data rows",
                ));
            }
            if !seen_keys.insert(key.to_string()) {
                return Err(Error::parse(
                    lineno,
                    format!("malformed header: duplicate key '{key}'"),
                ));
            }
            match key {
                "thickness_in" => {
                    thickness = Some((lineno, parse_number(lineno, "thickness_in", value)?))
                }
                "dt_ns" => dt = Some((lineno, parse_number(lineno, "dt_ns", value)?)),
                "t0_ns" => t0 = Some(parse_number(lineno, "t0_ns", value)?),
                "id" => {
                    if value.is_empty() {
                        return Err(Error::parse(lineno, "malformed header: empty id"));
                    }
                    id = Some(value.to_string())
                }
                _ => {}
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 2 {
            return Err(Error::parse(
                lineno,
                format!("expected 2 columns, found {}", cells.len()),
            ));
        }
        if rows.is_empty() && !seen_columns && cells[0].trim().parse::<f64>().is_err() {
            if cells[0].trim() == "time_ns" && cells[1].trim() == "velocity_mps" {
                seen_columns = true;
                continue;
            }
            return Err(Error::parse(lineno, format!("malformed header '{line}'")));
        }
        let t = parse_number(lineno, "time cell", cells[0])?;
        let v = parse_number(lineno, "velocity cell", cells[1])?;
        rows.push((lineno, t, v));
    }

    let (thick_line, thickness) = thickness.ok_or_else(|| {
        Error::parse(
            rows.first().map_or(1, |r| r.0),
            "missing required metadata key 'thickness_in'",
        )
    })?;
    let (dt_line, dt) = dt.ok_or_else(|| {
        Error::parse(
            rows.first().map_or(1, |r| r.0),
            "missing required metadata key 'dt_ns'",
        )
    })?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::parse(dt_line, "dt must be positive"));
    }
    if !(thickness > 0.0) || !thickness.is_finite() {
        return Err(Error::parse(thick_line, "thickness must be positive"));
    }
    if rows.is_empty() {
        return Err(Error::parse(last_line.max(1), "empty body"));
    }

    let origin = rows[0].1;
    for (k, &(lineno, t, _)) in rows.iter().enumerate() {
        let expected = origin + dt * k as f64;
        if (t - expected).abs() > TIME_TOLERANCE * expected.abs().max(dt) {
            return Err(Error::parse(
                lineno,
                format!("time {t} inconsistent with dt_ns={dt} (expected {expected})"),
            ));
        }
    }

    Ok(ExperimentSeries {
        id: id.unwrap_or_default(),
        thickness_in: T::lit(thickness),
        dt_ns: T::lit(dt),
        time_origin_ns: T::lit(origin),
        t0_ns: t0.map(T::lit),
        velocities: rows.iter().map(|r| T::lit(r.2)).collect(),
    })
}

/// Render a series in the experiment CSV format. Numbers use the shortest
/// representation that round-trips the stored `f64` value.
pub fn serialize_experiment<T: Scalar>(s: &ExperimentSeries<T>) -> String {
    let mut out = String::with_capacity(32 * s.len() + 128);
    if !s.id.is_empty() {
        out.push_str(&format!("# id={}\n", s.id));
    }
    out.push_str(&format!(
        "# thickness_in={}\n",
        s.thickness_in.to_f64_lossy()
    ));
    out.push_str(&format!("# dt_ns={}\n", s.dt_ns.to_f64_lossy()));
    if let Some(t0) = s.t0_ns {
        out.push_str(&format!("# t0_ns={}\n", t0.to_f64_lossy()));
    }
    out.push_str("time_ns,velocity_mps\n");
    let origin = s.time_origin_ns.to_f64_lossy();
    let dt = s.dt_ns.to_f64_lossy();
    for (k, v) in s.velocities.iter().enumerate() {
        out.push_str(&format!(
            "{},{}\n",
            origin + dt * k as f64,
            v.to_f64_lossy()
        ));
    }
    out
}

pub fn read_experiment<T: Scalar>(path: &Path) -> Result<ExperimentSeries<T>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut s = parse_experiment::<T>(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    if s.id.is_empty() {
        s.id = path
            .file_stem()
            .map(|x| x.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
    }
    Ok(s)
}

/// Load one experiment per file, preserving input order.
pub fn load_dataset<T: Scalar, P: AsRef<Path> + Sync>(paths: &[P]) -> Result<RawDataset<T>> {
    if paths.is_empty() {
        return Err(Error::Dataset("no experiments".into()));
    }
    let experiments = paths
        .par_iter()
        .map(|p| read_experiment::<T>(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    RawDataset::new(experiments)
}

/// Write a series to `dir/<id>.csv` and return the path.
pub fn write_experiment<T: Scalar>(dir: &Path, s: &ExperimentSeries<T>) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", s.id));
    crate::io_util::write_atomic(&path, serialize_experiment(s).as_bytes())?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub severity: Severity,
    pub experiment: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == severity)
            .count()
    }

    /// CSV rendering: `severity,experiment,message`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("severity,experiment,message\n");
        for i in &self.issues {
            out.push_str(&format!(
                "{},{},\"{}\"\n",
                i.severity,
                i.experiment,
                i.message.replace('"', "'")
            ));
        }
        out
    }

    fn push(&mut self, severity: Severity, experiment: &str, message: String) {
        self.issues.push(Issue {
            severity,
            experiment: experiment.to_string(),
            message,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationConfig {
    /// Series shorter than this produce a warning.
    pub min_length: usize,
    /// Inclusive physical thickness range, inches.
    pub thickness_range: (f64, f64),
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            min_length: 100,
            thickness_range: (0.001, 10.0),
        }
    }
}

/// Structural checks. Never fails and never modifies the dataset.
pub fn validate_dataset<T: Scalar>(d: &RawDataset<T>, cfg: &ValidationConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if d.experiments.len() < 2 {
        report.push(
            Severity::Warning,
            "",
            format!(
                "{} experiment(s); surface reconstruction needs at least 2",
                d.experiments.len()
            ),
        );
    }
    let mut ids = HashSet::new();
    for (i, e) in d.experiments.iter().enumerate() {
        if !ids.insert(e.id.as_str()) {
            report.push(Severity::Error, &e.id, "duplicate id".into());
        }
        if d.experiments[..i]
            .iter()
            .any(|o| o.thickness_in == e.thickness_in)
        {
            report.push(
                Severity::Error,
                &e.id,
                format!("duplicate thickness {}", e.thickness_in),
            );
        }
        let w = e.thickness_in.to_f64_lossy();
        let (lo, hi) = cfg.thickness_range;
        if !w.is_finite() || w < lo || w > hi {
            report.push(
                Severity::Error,
                &e.id,
                format!("thickness {w} outside physical range [{lo}, {hi}]"),
            );
        }
        if !e.dt_ns.is_finite() || e.dt_ns <= T::zero() || !e.time_origin_ns.is_finite() {
            report.push(
                Severity::Error,
                &e.id,
                format!(
                    "implied time axis is not strictly increasing (origin {}, dt {})",
                    e.time_origin_ns, e.dt_ns
                ),
            );
        }
        if e.velocities.is_empty() {
            report.push(Severity::Error, &e.id, "no velocities".into());
        }
        for (k, v) in e.velocities.iter().enumerate() {
            if !v.is_finite() {
                report.push(
                    Severity::Error,
                    &e.id,
                    format!("non-finite velocity {v} at index {k}"),
                );
            }
        }
        if e.velocities.len() < cfg.min_length {
            report.push(
                Severity::Warning,
                &e.id,
                format!(
                    "series has {} points, minimum is {}",
                    e.velocities.len(),
                    cfg.min_length
                ),
            );
        }
        if let Some(t0) = e.t0_ns {
            let end = e.time_ns(e.len().saturating_sub(1));
            if !t0.is_finite() || t0 < e.time_origin_ns || t0 > end {
                report.push(
                    Severity::Error,
                    &e.id,
                    format!("t0_ns {t0} outside the recorded time span"),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(id: &str, w: f64, n: usize) -> ExperimentSeries<f64> {
        ExperimentSeries::new(id, w, 2.0, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn parses_minimal_file() {
        let text = "# thickness_in=0.25\n# dt_ns=2\n0,0\n2,13.5\n";
        let s = parse_experiment::<f64>(text).unwrap();
        assert_eq!(s.thickness_in, 0.25);
        assert_eq!(s.dt_ns, 2.0);
        assert_eq!(s.velocities, vec![0.0, 13.5]);
        assert_eq!(s.t0_ns, None);
    }

    #[test]
    fn parses_optional_keys_and_column_line() {
        let text = "# free text comment\n# id=shot7\n# thickness_in=0.5\n# dt_ns=2\n# t0_ns=104\ntime_ns,velocity_mps\n100,1\n102,2\n104,3\n";
        let s = parse_experiment::<f64>(text).unwrap();
        assert_eq!(s.id, "shot7");
        assert_eq!(s.time_origin_ns, 100.0);
        assert_eq!(s.t0_ns, Some(104.0));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn empty_body_is_an_error() {
        let err = parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=2\n").unwrap_err();
        assert!(err.to_string().contains("empty body"), "{err}");
    }

    #[test]
    fn zero_dt_is_rejected_with_line() {
        let err = parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=0\n0,0\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("dt must be positive"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let err =
            parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=2\n0,0\n2,abc\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_thickness_is_reported() {
        let err = parse_experiment::<f64>("# dt_ns=2\n0,0\n").unwrap_err();
        assert!(err.to_string().contains("thickness_in"));
    }

    #[test]
    fn garbage_header_line_is_malformed() {
        let err =
            parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=2\nfoo,bar\n0,1\n").unwrap_err();
        assert!(err.to_string().contains("malformed header"), "{err}");
    }

    #[test]
    fn duplicate_key_is_malformed() {
        let err =
            parse_experiment::<f64>("# dt_ns=2\n# dt_ns=2\n# thickness_in=1\n0,1\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"));
    }

    #[test]
    fn time_column_must_match_dt() {
        let err =
            parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=2\n0,0\n2,1\n5,2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other}"),
        }
        // within 1e-9 relative is accepted
        parse_experiment::<f64>("# thickness_in=0.25\n# dt_ns=2\n0,0\n2.000000000001,1\n").unwrap();
    }

    #[test]
    fn nan_literal_parses_and_is_caught_by_validation() {
        let s = parse_experiment::<f64>("# id=a\n# thickness_in=0.25\n# dt_ns=2\n0,1\n2,NaN\n")
            .unwrap();
        let d = RawDataset::new(vec![s, series("b", 0.5, 200)]).unwrap();
        let cfg = ValidationConfig {
            min_length: 1,
            ..Default::default()
        };
        let r = validate_dataset(&d, &cfg);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].severity, Severity::Error);
        assert_eq!(r.issues[0].experiment, "a");
        assert!(r.issues[0].message.contains("index 1"));
    }

    #[test]
    fn clean_dataset_has_empty_report() {
        let ws = [0.25, 0.3125, 0.375, 0.4375, 0.5];
        let exps = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| series(&format!("e{i}"), w, 200))
            .collect();
        let d = RawDataset::new(exps).unwrap();
        let before = d.clone();
        let r = validate_dataset(&d, &ValidationConfig::default());
        assert!(r.is_empty(), "{r:?}");
        assert_eq!(d, before);
    }

    #[test]
    fn short_series_warns() {
        let d = RawDataset::new(vec![series("a", 0.25, 200), series("b", 0.5, 10)]).unwrap();
        let r = validate_dataset(&d, &ValidationConfig::default());
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].severity, Severity::Warning);
        assert_eq!(r.issues[0].experiment, "b");
        assert!(!r.has_errors());
    }

    #[test]
    fn thickness_out_of_range_is_error() {
        let d = RawDataset::new(vec![series("a", 0.25, 200), series("b", 50.0, 200)]).unwrap();
        let r = validate_dataset(&d, &ValidationConfig::default());
        assert_eq!(r.count(Severity::Error), 1);
    }

    #[test]
    fn dataset_rejects_duplicates_and_empty() {
        let dup_w = RawDataset::new(vec![series("a", 0.25, 5), series("b", 0.25, 5)]);
        assert!(dup_w
            .unwrap_err()
            .to_string()
            .contains("duplicate thickness"));
        let dup_id = RawDataset::new(vec![series("a", 0.25, 5), series("a", 0.5, 5)]);
        assert!(dup_id.unwrap_err().to_string().contains("duplicate id"));
        let empty = RawDataset::<f64>::new(vec![]);
        assert!(empty.unwrap_err().to_string().contains("no experiments"));
    }

    #[test]
    fn points_carry_seconds() {
        let s = series("a", 0.25, 3).with_origin(10.0);
        let p: Vec<_> = s.points().collect();
        assert!((p[2].time_s - 14e-9).abs() < 1e-20);
        assert_eq!(p[2].thickness_in, 0.25);
    }
}
