//! Versioned text format for trained models.
//!
//! ```text
//! velosurf-model v1
//! [meta]
//! n_train=<int>
//! converged=<true|false>
//! objective=<num>
//! iterations=<int>
//! violation=<num>
//! C=<num>
//! epsilon=<num>
//! tolerance=<num>
//! max_iterations=<int>
//! fingerprint=<hex>
//! smoothing_half_width=<int|none>
//! onset_threshold=<num>
//! common_length=<int>
//! dt_ns=<num>
//! [kernel]
//! type=rbf            gamma=<num>
//! type=arbf           gammas=<num>;<num>;...
//! type=poly           degree=<int> scale=<num> offset=<num>   (one key per line)
//! [scaler]
//! time=<offset>,<step>
//! thickness=<offset>,<step>
//! velocity=<offset>,<step>
//! [coefficients]
//! bias=<num>
//! count=<int>
//! <num>               (count lines)
//! [support_vectors]
//! dim=<int>
//! <num>,<num>,...     (count lines)
//! checksum=sha256:<hex of every preceding byte>
//! ```
//!
//! Numbers are written with 17 significant digits, so `f64` values survive a
//! round trip exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::io_util::{sha256_hex, write_atomic};
use crate::kernel::Kernel;
use crate::preprocess::{AxisMap, AxisScaler, PreprocessInfo};
use crate::scalar::Scalar;
use crate::svr::{SvrModel, TrainingMeta};

pub const MAGIC: &str = "velosurf-model";
pub const FORMAT_VERSION: &str = "v1";
const CHECKSUM_PREFIX: &str = "checksum=sha256:";

pub(crate) fn num<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

pub fn model_to_string<T: Scalar>(m: &SvrModel<T>) -> String {
    let mut s = String::new();
    let meta = &m.meta;
    let _ = writeln!(s, "{MAGIC} {FORMAT_VERSION}");
    s.push_str("[meta]\n");
    let _ = writeln!(s, "n_train={}", meta.n_train);
    let _ = writeln!(s, "converged={}", meta.converged);
    let _ = writeln!(s, "objective={}", num(meta.objective));
    let _ = writeln!(s, "iterations={}", meta.iterations);
    let _ = writeln!(s, "violation={}", num(meta.violation));
    let _ = writeln!(s, "C={}", num(meta.c));
    let _ = writeln!(s, "epsilon={}", num(meta.epsilon));
    let _ = writeln!(s, "tolerance={}", num(meta.tolerance));
    let _ = writeln!(s, "max_iterations={}", meta.max_iterations);
    let _ = writeln!(s, "fingerprint={}", meta.fingerprint);
    let p = &meta.preprocess;
    match p.smoothing_half_width {
        Some(h) => {
            let _ = writeln!(s, "smoothing_half_width={h}");
        }
        None => s.push_str("smoothing_half_width=none\n"),
    }
    let _ = writeln!(s, "onset_threshold={}", num(p.onset_threshold));
    let _ = writeln!(s, "common_length={}", p.common_length);
    let _ = writeln!(s, "dt_ns={}", num(p.dt_ns));

    s.push_str("[kernel]\n");
    match &m.kernel {
        Kernel::Rbf { gamma } => {
            let _ = writeln!(s, "type=rbf\ngamma={}", num(*gamma));
        }
        Kernel::AnisotropicRbf { gammas } => {
            let g: Vec<String> = gammas.iter().map(|g| num(*g)).collect();
            let _ = writeln!(s, "type=arbf\ngammas={}", g.join(";"));
        }
        Kernel::Polynomial {
            degree,
            scale,
            offset,
        } => {
            let _ = writeln!(
                s,
                "type=poly\ndegree={degree}\nscale={}\noffset={}",
                num(*scale),
                num(*offset)
            );
        }
    }

    s.push_str("[scaler]\n");
    for (name, a) in [
        ("time", m.scaler.time),
        ("thickness", m.scaler.thickness),
        ("velocity", m.scaler.velocity),
    ] {
        let _ = writeln!(s, "{name}={},{}", num(a.offset), num(a.step));
    }

    s.push_str("[coefficients]\n");
    let _ = writeln!(s, "bias={}", num(m.bias));
    let _ = writeln!(s, "count={}", m.coefficients.len());
    for b in &m.coefficients {
        let _ = writeln!(s, "{}", num(*b));
    }

    s.push_str("[support_vectors]\n");
    let _ = writeln!(s, "dim={}", m.support_vectors.dim());
    for row in m.support_vectors.rows() {
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }

    seal(&mut s);
    s
}

pub fn save_model<T: Scalar>(path: &Path, m: &SvrModel<T>) -> Result<()> {
    write_atomic(path, model_to_string(m).as_bytes())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<SvrModel<T>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    model_from_str(&text)
}

/// Line-oriented reader over the checksummed body.
pub(crate) struct Body<'a> {
    pub(crate) lines: Vec<(usize, &'a str)>,
    pub(crate) pos: usize,
}

impl<'a> Body<'a> {
    pub(crate) fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::Format(format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(item)
    }

    pub(crate) fn section(&mut self, name: &str) -> Result<()> {
        let (ln, l) = self.next(&format!("[{name}]"))?;
        if l != format!("[{name}]") {
            return Err(Error::Format(format!(
                "line {ln}: expected [{name}], found '{l}'"
            )));
        }
        Ok(())
    }

    /// Read `key=value` lines until the next section header.
    pub(crate) fn pairs(&mut self) -> Result<Keyed<'a>> {
        let mut map = HashMap::new();
        while let Some(&(ln, l)) = self.lines.get(self.pos) {
            if l.starts_with('[') {
                break;
            }
            self.pos += 1;
            let (k, v) = l.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {ln}: expected key=value, found '{l}'"))
            })?;
            if map.insert(k, (ln, v)).is_some() {
                return Err(Error::Format(format!("line {ln}: duplicate key '{k}'")));
            }
        }
        Ok(Keyed { map })
    }

    pub(crate) fn keyed_line(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (ln, l) = self.next(key)?;
        match l.split_once('=') {
            Some((k, v)) if k == key => Ok((ln, v)),
            _ => Err(Error::Format(format!(
                "line {ln}: expected {key}=..., found '{l}'"
            ))),
        }
    }
}

pub(crate) struct Keyed<'a> {
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl Keyed<'_> {
    pub(crate) fn raw(&self, key: &str) -> Result<(usize, &str)> {
        self.map
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing key '{key}'")))
    }

    pub(crate) fn num<T: Scalar>(&self, key: &str) -> Result<T> {
        let (ln, v) = self.raw(key)?;
        parse_num(ln, v)
    }

    pub(crate) fn int(&self, key: &str) -> Result<usize> {
        let (ln, v) = self.raw(key)?;
        parse_int(ln, v)
    }
}

pub(crate) fn parse_num<T: Scalar>(ln: usize, v: &str) -> Result<T> {
    v.trim()
        .parse::<f64>()
        .ok()
        .and_then(T::from_f64)
        .ok_or_else(|| Error::Format(format!("line {ln}: bad number '{v}'")))
}

pub(crate) fn parse_int(ln: usize, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {ln}: bad integer '{v}'")))
}

pub(crate) fn parse_pair<T: Scalar>(ln: usize, v: &str) -> Result<AxisMap<T>> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::Format(format!("line {ln}: expected offset,step")))?;
    AxisMap::new(parse_num(ln, a)?, parse_num(ln, b)?)
        .map_err(|e| Error::Format(format!("line {ln}: {e}")))
}

/// Check the `<magic> <version>` first line, then the trailing checksum over
/// everything before it. Returns the checksummed body.
pub(crate) fn verify_envelope<'a>(text: &'a str, magic: &str, version: &str) -> Result<&'a str> {
    let first = text.lines().next().unwrap_or("");
    match first.split_once(' ') {
        Some((m, v)) if m == magic => {
            if v != version {
                return Err(Error::Version(v.to_string()));
            }
        }
        _ => {
            return Err(Error::Format(format!(
                "not a {magic} file (bad first line)"
            )))
        }
    }

    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body, last) = match trimmed.rfind('\n') {
        Some(i) => (&text[..=i], &trimmed[i + 1..]),
        None => return Err(Error::Format("truncated file".into())),
    };
    let expected = last
        .strip_prefix(CHECKSUM_PREFIX)
        .ok_or_else(|| Error::Format("truncated file: no trailing checksum line".into()))?;
    let computed = sha256_hex(body.as_bytes());
    if expected != computed {
        return Err(Error::Checksum {
            expected: expected.to_string(),
            computed,
        });
    }
    Ok(body)
}

/// Append the checksum line covering everything written so far.
pub(crate) fn seal(s: &mut String) {
    let digest = sha256_hex(s.as_bytes());
    let _ = writeln!(s, "{CHECKSUM_PREFIX}{digest}");
}

/// Parse a model, checking version first and then the checksum before
/// interpreting any numbers.
pub fn model_from_str<T: Scalar>(text: &str) -> Result<SvrModel<T>> {
    let body = verify_envelope(text, MAGIC, FORMAT_VERSION)?;
    let mut b = Body {
        lines: body
            .lines()
            .enumerate()
            .skip(1)
            .map(|(i, l)| (i + 1, l))
            .collect(),
        pos: 0,
    };

    b.section("meta")?;
    let meta = b.pairs()?;
    let converged = match meta.raw("converged")? {
        (_, "true") => true,
        (_, "false") => false,
        (ln, v) => return Err(Error::Format(format!("line {ln}: bad boolean '{v}'"))),
    };
    let smoothing_half_width = match meta.raw("smoothing_half_width")? {
        (_, "none") => None,
        (ln, v) => Some(parse_int(ln, v)?),
    };

    b.section("kernel")?;
    let kp = b.pairs()?;
    let kernel = match kp.raw("type")? {
        (_, "rbf") => Kernel::Rbf {
            gamma: kp.num("gamma")?,
        },
        (_, "arbf") => {
            let (ln, v) = kp.raw("gammas")?;
            Kernel::AnisotropicRbf {
                gammas: v
                    .split(';')
                    .map(|g| parse_num(ln, g))
                    .collect::<Result<_>>()?,
            }
        }
        (_, "poly") => Kernel::Polynomial {
            degree: u32::try_from(kp.int("degree")?)
                .map_err(|_| Error::Format("polynomial degree out of range".into()))?,
            scale: kp.num("scale")?,
            offset: kp.num("offset")?,
        },
        (ln, v) => {
            return Err(Error::Format(format!(
                "line {ln}: unknown kernel type '{v}'"
            )))
        }
    };
    kernel
        .validate()
        .map_err(|e| Error::Format(e.to_string()))?;

    b.section("scaler")?;
    let sp = b.pairs()?;
    let axis = |key: &str| -> Result<AxisMap<T>> {
        let (ln, v) = sp.raw(key)?;
        parse_pair(ln, v)
    };
    let scaler = AxisScaler {
        time: axis("time")?,
        thickness: axis("thickness")?,
        velocity: axis("velocity")?,
    };

    b.section("coefficients")?;
    let (ln, v) = b.keyed_line("bias")?;
    let bias: T = parse_num(ln, v)?;
    let (ln, v) = b.keyed_line("count")?;
    let count = parse_int(ln, v)?;
    let mut coefficients = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, v) = b.next("coefficient")?;
        let x: T = parse_num(ln, v)?;
        if x == T::zero() {
            return Err(Error::Format(format!("line {ln}: zero coefficient")));
        }
        coefficients.push(x);
    }

    b.section("support_vectors")?;
    let (ln, v) = b.keyed_line("dim")?;
    let dim = parse_int(ln, v)?;
    if dim == 0 {
        return Err(Error::Format(format!(
            "line {ln}: dimension must be positive"
        )));
    }
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let (ln, l) = b.next("support vector")?;
        let cells: Vec<&str> = l.split(',').collect();
        if cells.len() != dim {
            return Err(Error::Format(format!(
                "line {ln}: expected {dim} values, found {}",
                cells.len()
            )));
        }
        for c in cells {
            data.push(parse_num(ln, c)?);
        }
    }
    if let Some(&(ln, l)) = b.lines.get(b.pos) {
        return Err(Error::Format(format!(
            "line {ln}: unexpected content '{l}'"
        )));
    }
    let support_vectors = Features::new(dim, data)?;

    let meta = TrainingMeta {
        n_train: meta.int("n_train")?,
        converged,
        objective: meta.num("objective")?,
        iterations: meta.int("iterations")?,
        violation: meta.num("violation")?,
        c: meta.num("C")?,
        epsilon: meta.num("epsilon")?,
        tolerance: meta.num("tolerance")?,
        max_iterations: meta.int("max_iterations")?,
        fingerprint: meta.raw("fingerprint")?.1.to_string(),
        preprocess: PreprocessInfo {
            smoothing_half_width,
            onset_threshold: meta.num("onset_threshold")?,
            common_length: meta.int("common_length")?,
            dt_ns: meta.num("dt_ns")?,
        },
    };
    if count > meta.n_train {
        return Err(Error::Format(format!(
            "{count} support vectors but only {} training points",
            meta.n_train
        )));
    }

    Ok(SvrModel {
        support_vectors,
        coefficients,
        bias,
        kernel,
        scaler,
        meta,
    })
}
