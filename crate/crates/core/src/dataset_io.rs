//! Versioned text format for preprocessed (scaled) training sets.
//!
//! ```text
//! velosurf-dataset v1
//! [preprocess]
//! smoothing_half_width=<int|none>
//! onset_threshold=<num>
//! common_length=<int>
//! dt_ns=<num>
//! [scaler]
//! time=<offset>,<step>
//! thickness=<offset>,<step>
//! velocity=<offset>,<step>
//! [experiments]
//! count=<int>
//! <thickness_in>,<id>          (count lines)
//! [points]
//! count=<int>
//! <experiment>,<sample>,<time>,<thickness>,<velocity>   (scaled units)
//! checksum=sha256:<hex of every preceding byte>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::io_util::write_atomic;
use crate::model_io::{num, parse_int, parse_num, parse_pair, seal, verify_envelope, Body};
use crate::preprocess::{AxisScaler, PreprocessInfo, ScaledDataset};
use crate::scalar::Scalar;

pub const DATASET_MAGIC: &str = "velosurf-dataset";
pub const DATASET_VERSION: &str = "v1";

pub fn dataset_to_string<T: Scalar>(d: &ScaledDataset<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{DATASET_MAGIC} {DATASET_VERSION}");
    s.push_str("[preprocess]\n");
    let p = &d.info;
    match p.smoothing_half_width {
        Some(h) => {
            let _ = writeln!(s, "smoothing_half_width={h}");
        }
        None => s.push_str("smoothing_half_width=none\n"),
    }
    let _ = writeln!(s, "onset_threshold={}", num(p.onset_threshold));
    let _ = writeln!(s, "common_length={}", p.common_length);
    let _ = writeln!(s, "dt_ns={}", num(p.dt_ns));

    s.push_str("[scaler]\n");
    for (name, a) in [
        ("time", d.scaler.time),
        ("thickness", d.scaler.thickness),
        ("velocity", d.scaler.velocity),
    ] {
        let _ = writeln!(s, "{name}={},{}", num(a.offset), num(a.step));
    }

    s.push_str("[experiments]\n");
    let _ = writeln!(s, "count={}", d.experiment_ids.len());
    for (id, w) in d.experiment_ids.iter().zip(&d.experiment_thickness) {
        let _ = writeln!(s, "{},{id}", num(*w));
    }

    s.push_str("[points]\n");
    let _ = writeln!(s, "count={}", d.len());
    for ((x, &y), &(e, k)) in d.features.rows().zip(&d.targets).zip(&d.provenance) {
        let _ = writeln!(s, "{e},{k},{},{},{}", num(x[0]), num(x[1]), num(y));
    }
    seal(&mut s);
    s
}

pub fn save_dataset<T: Scalar>(path: &Path, d: &ScaledDataset<T>) -> Result<()> {
    for id in &d.experiment_ids {
        if id.contains(['\n', '\r']) {
            return Err(Error::Dataset(format!(
                "experiment id {id:?} contains a line break"
            )));
        }
    }
    write_atomic(path, dataset_to_string(d).as_bytes())
}

pub fn load_scaled_dataset<T: Scalar>(path: &Path) -> Result<ScaledDataset<T>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    dataset_from_str(&text)
}

pub fn dataset_from_str<T: Scalar>(text: &str) -> Result<ScaledDataset<T>> {
    let body = verify_envelope(text, DATASET_MAGIC, DATASET_VERSION)?;
    let mut b = Body {
        lines: body
            .lines()
            .enumerate()
            .skip(1)
            .map(|(i, l)| (i + 1, l))
            .collect(),
        pos: 0,
    };

    b.section("preprocess")?;
    let pp = b.pairs()?;
    let smoothing_half_width = match pp.raw("smoothing_half_width")? {
        (_, "none") => None,
        (ln, v) => Some(parse_int(ln, v)?),
    };
    let info = PreprocessInfo {
        smoothing_half_width,
        onset_threshold: pp.num("onset_threshold")?,
        common_length: pp.int("common_length")?,
        dt_ns: pp.num("dt_ns")?,
    };

    b.section("scaler")?;
    let sp = b.pairs()?;
    let axis = |key: &str| {
        let (ln, v) = sp.raw(key)?;
        parse_pair(ln, v)
    };
    let scaler = AxisScaler {
        time: axis("time")?,
        thickness: axis("thickness")?,
        velocity: axis("velocity")?,
    };

    b.section("experiments")?;
    let (ln, v) = b.keyed_line("count")?;
    let n_exp = parse_int(ln, v)?;
    let mut experiment_ids = Vec::with_capacity(n_exp);
    let mut experiment_thickness = Vec::with_capacity(n_exp);
    for _ in 0..n_exp {
        let (ln, l) = b.next("experiment line")?;
        let (w, id) = l
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("line {ln}: expected thickness,id")))?;
        experiment_thickness.push(parse_num::<T>(ln, w)?);
        experiment_ids.push(id.to_string());
    }

    b.section("points")?;
    let (ln, v) = b.keyed_line("count")?;
    let n = parse_int(ln, v)?;
    let mut features = Features::empty(2);
    let mut targets = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = b.next("point line")?;
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::Format(format!(
                "line {ln}: expected 5 fields, found {}",
                cells.len()
            )));
        }
        let e = parse_int(ln, cells[0])?;
        if e >= n_exp {
            return Err(Error::Format(format!(
                "line {ln}: experiment index {e} out of range"
            )));
        }
        provenance.push((e, parse_int(ln, cells[1])?));
        features.push(&[parse_num(ln, cells[2])?, parse_num(ln, cells[3])?])?;
        targets.push(parse_num(ln, cells[4])?);
    }
    if let Some(&(ln, l)) = b.lines.get(b.pos) {
        return Err(Error::Format(format!(
            "line {ln}: unexpected trailing content '{l}'"
        )));
    }
    Ok(ScaledDataset {
        features,
        targets,
        scaler,
        provenance,
        experiment_ids,
        experiment_thickness,
        info,
    })
}
