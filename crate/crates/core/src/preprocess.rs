//! Smoothing, onset alignment, truncation, and unit-grid scaling.
//!
//! The two feature axes (time, thickness) are rescaled so neighbouring
//! samples sit one unit apart; the raw axes differ by orders of magnitude
//! and an isotropic kernel overfits along the dense time axis otherwise.
//! Velocity, the regression target, is mapped onto `[0, 1]`.

use crate::data::{ExperimentSeries, RawDataset};
use crate::error::{Error, Result};
use crate::features::Features;
use crate::io_util::sha256_hex;
use crate::scalar::Scalar;

/// Triangular moving average with weights `h + 1 - |j|` for `j` in `[-h, h]`.
///
/// At the edges only in-bounds samples contribute and the weights are
/// renormalized, so constant input stays constant. `half_width == 0` is the
/// identity.
pub fn smooth_triangular<T: Scalar>(v: &[T], half_width: usize) -> Vec<T> {
    if half_width == 0 || v.len() < 2 {
        return v.to_vec();
    }
    let n = v.len();
    let h = half_width as isize;
    (0..n)
        .map(|i| {
            // average deviations from the centre sample so constants are
            // reproduced bit for bit, then clamp away rounding past the window
            let mut acc = T::zero();
            let mut norm = T::zero();
            let (mut min, mut max) = (v[i], v[i]);
            let lo = (i as isize - h).max(0) as usize;
            let hi = ((i as isize + h) as usize).min(n - 1);
            for (k, &x) in v.iter().enumerate().take(hi + 1).skip(lo) {
                let w = T::from_usize_lossy((half_width + 1) - k.abs_diff(i));
                acc += w * (x - v[i]);
                norm += w;
                min = min.min(x);
                max = max.max(x);
            }
            (v[i] + acc / norm).max(min).min(max)
        })
        .collect()
}

/// Index of the detonation onset.
///
/// `t0_ns` metadata wins when present. Otherwise this is the first sample
/// reaching `threshold_frac` of the series peak.
pub fn detect_start_time<T: Scalar>(s: &ExperimentSeries<T>, threshold_frac: T) -> Result<usize> {
    if !(threshold_frac > T::zero() && threshold_frac < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "onset threshold must lie in (0, 1), got {threshold_frac}"
        )));
    }
    if let Some(t0) = s.t0_ns {
        let idx = ((t0 - s.time_origin_ns) / s.dt_ns).round();
        if !idx.is_finite() || idx < T::zero() || idx >= T::from_usize_lossy(s.len()) {
            return Err(Error::Dataset(format!(
                "series '{}': t0_ns={t0} outside the recorded span",
                s.id
            )));
        }
        return Ok(idx.to_usize().unwrap_or(0));
    }
    let mut peak = T::neg_infinity();
    for &v in &s.velocities {
        if !v.is_finite() {
            return Err(Error::Dataset(format!(
                "series '{}': non-finite velocity",
                s.id
            )));
        }
        peak = peak.max(v);
    }
    if !(peak > T::zero()) {
        return Err(Error::NoOnset(s.id.clone()));
    }
    let level = threshold_frac * peak;
    s.velocities
        .iter()
        .position(|&v| v >= level)
        .ok_or_else(|| Error::NoOnset(s.id.clone()))
}

/// Experiments shifted to their onsets and cut to a common length.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedDataset<T> {
    /// Each series starts at its onset (`t0_ns` equals its new origin).
    pub experiments: Vec<ExperimentSeries<T>>,
    pub common_length: usize,
    /// Clock time of each onset, in input order.
    pub start_times_ns: Vec<T>,
    /// Samples dropped ahead of each onset.
    pub shifts: Vec<usize>,
    /// Smoothing applied before alignment, if any.
    pub smoothing_half_width: Option<usize>,
    pub onset_threshold: T,
}

impl<T: Scalar> AlignedDataset<T> {
    pub fn dt_ns(&self) -> T {
        self.experiments[0].dt_ns
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    /// Keep only the experiments whose index is in `keep`, re-truncating.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Dataset("no experiments selected".into()));
        }
        Ok(Self {
            experiments: keep.iter().map(|&i| self.experiments[i].clone()).collect(),
            common_length: self.common_length,
            start_times_ns: keep.iter().map(|&i| self.start_times_ns[i]).collect(),
            shifts: keep.iter().map(|&i| self.shifts[i]).collect(),
            smoothing_half_width: self.smoothing_half_width,
            onset_threshold: self.onset_threshold,
        })
    }

    pub fn to_raw(&self) -> Result<RawDataset<T>> {
        RawDataset::new(self.experiments.clone())
    }
}

fn check_same_dt<T: Scalar>(exps: &[ExperimentSeries<T>]) -> Result<T> {
    let dt = exps
        .first()
        .ok_or_else(|| Error::Dataset("no experiments".into()))?
        .dt_ns;
    for e in exps {
        if (e.dt_ns - dt).abs() > T::lit(1e-9) * dt {
            return Err(Error::Dataset(format!(
                "mixed dt: '{}' has {} ns, '{}' has {} ns",
                exps[0].id, dt, e.id, e.dt_ns
            )));
        }
    }
    Ok(dt)
}

fn shift_to_onset<T: Scalar>(s: &ExperimentSeries<T>, onset: usize) -> ExperimentSeries<T> {
    let origin = s.time_ns(onset);
    ExperimentSeries {
        id: s.id.clone(),
        thickness_in: s.thickness_in,
        dt_ns: s.dt_ns,
        time_origin_ns: origin,
        t0_ns: Some(origin),
        velocities: s.velocities[onset..].to_vec(),
    }
}

/// Shift every series to its onset, then truncate all to the shortest
/// post-onset length. Applying it twice changes nothing.
pub fn align_and_truncate<T: Scalar>(
    d: &RawDataset<T>,
    threshold_frac: T,
) -> Result<AlignedDataset<T>> {
    check_same_dt(&d.experiments)?;
    let mut shifts = Vec::with_capacity(d.len());
    let mut experiments = Vec::with_capacity(d.len());
    for e in &d.experiments {
        let onset = detect_start_time(e, threshold_frac)?;
        log::info!(
            "series '{}': onset at index {onset} (t = {} ns)",
            e.id,
            e.time_ns(onset)
        );
        shifts.push(onset);
        experiments.push(shift_to_onset(e, onset));
    }
    let common_length = experiments.iter().map(|e| e.len()).min().unwrap_or(0);
    if common_length == 0 {
        return Err(Error::Dataset("aligned series are empty".into()));
    }
    for e in &mut experiments {
        e.velocities.truncate(common_length);
    }
    Ok(AlignedDataset {
        start_times_ns: experiments.iter().map(|e| e.time_origin_ns).collect(),
        experiments,
        common_length,
        shifts,
        smoothing_half_width: None,
        onset_threshold: threshold_frac,
    })
}

/// Smoothing and alignment settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// `None` skips smoothing.
    pub half_width: Option<usize>,
    pub onset_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            half_width: Some(5),
            onset_threshold: 0.05,
        }
    }
}

pub fn smooth_series<T: Scalar>(
    s: &ExperimentSeries<T>,
    half_width: Option<usize>,
) -> ExperimentSeries<T> {
    match half_width {
        Some(h) if h > 0 => ExperimentSeries {
            velocities: smooth_triangular(&s.velocities, h),
            ..s.clone()
        },
        _ => s.clone(),
    }
}

/// Smooth every series, then align and truncate.
pub fn prepare<T: Scalar>(d: &RawDataset<T>, cfg: &PreprocessConfig) -> Result<AlignedDataset<T>> {
    let smoothed = RawDataset {
        experiments: d
            .experiments
            .iter()
            .map(|e| smooth_series(e, cfg.half_width))
            .collect(),
    };
    let mut aligned = align_and_truncate(&smoothed, T::lit(cfg.onset_threshold))?;
    aligned.smoothing_half_width = cfg.half_width.filter(|&h| h > 0);
    Ok(aligned)
}

/// Preprocess a single series the same way a training set was, cutting it
/// to `length` samples after onset.
pub fn prepare_series<T: Scalar>(
    s: &ExperimentSeries<T>,
    half_width: Option<usize>,
    onset_threshold: T,
    length: usize,
) -> Result<ExperimentSeries<T>> {
    let smoothed = smooth_series(s, half_width);
    let onset = detect_start_time(&smoothed, onset_threshold)?;
    let mut out = shift_to_onset(&smoothed, onset);
    if out.len() < length {
        return Err(Error::Dataset(format!(
            "series '{}' has {} samples after onset, {} required",
            s.id,
            out.len(),
            length
        )));
    }
    out.velocities.truncate(length);
    Ok(out)
}

/// Affine map `scaled = (raw - offset) / step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisMap<T> {
    pub offset: T,
    pub step: T,
}

impl<T: Scalar> AxisMap<T> {
    pub fn new(offset: T, step: T) -> Result<Self> {
        if !(step > T::zero()) || !step.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "axis map needs finite offset and positive step (offset {offset}, step {step})"
            )));
        }
        Ok(Self { offset, step })
    }

    #[inline]
    pub fn forward(&self, raw: T) -> T {
        (raw - self.offset) / self.step
    }

    #[inline]
    pub fn inverse(&self, scaled: T) -> T {
        scaled * self.step + self.offset
    }
}

/// Per-axis maps between physical units (ns, in, m/s) and the unit grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisScaler<T> {
    pub time: AxisMap<T>,
    pub thickness: AxisMap<T>,
    pub velocity: AxisMap<T>,
}

fn median<T: Scalar>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

impl<T: Scalar> AxisScaler<T> {
    /// Fit the unit-grid scaler to an aligned dataset.
    ///
    /// Time: one sample step maps to 1, onset to 0. Thickness: the median gap
    /// between sorted distinct thicknesses maps to 1, the thinnest coupon to
    /// 0. Velocity: the observed range maps onto `[0, 1]` (a constant
    /// dataset keeps unit step).
    pub fn fit(d: &AlignedDataset<T>) -> Result<Self> {
        let mut ws: Vec<T> = d.experiments.iter().map(|e| e.thickness_in).collect();
        ws.sort_by(|a, b| a.partial_cmp(b).expect("finite thickness"));
        ws.dedup();
        if ws.len() < 2 {
            return Err(Error::Dataset(format!(
                "unit-grid scaling needs at least 2 distinct thicknesses, got {}",
                ws.len()
            )));
        }
        let gaps: Vec<T> = ws.windows(2).map(|p| p[1] - p[0]).collect();
        let thickness = AxisMap::new(ws[0], median(gaps))?;
        let time = AxisMap::new(T::zero(), d.dt_ns())?;

        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for e in &d.experiments {
            for &v in &e.velocities[..d.common_length] {
                if !v.is_finite() {
                    return Err(Error::Dataset(format!(
                        "series '{}': non-finite velocity",
                        e.id
                    )));
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = if hi > lo { hi - lo } else { T::one() };
        let velocity = AxisMap::new(lo, span)?;
        Ok(Self {
            time,
            thickness,
            velocity,
        })
    }

    #[inline]
    pub fn scale_point(&self, time_ns: T, thickness_in: T) -> [T; 2] {
        [
            self.time.forward(time_ns),
            self.thickness.forward(thickness_in),
        ]
    }

    #[inline]
    pub fn unscale_point(&self, p: &[T]) -> [T; 2] {
        [self.time.inverse(p[0]), self.thickness.inverse(p[1])]
    }

    #[inline]
    pub fn scale_velocity(&self, v: T) -> T {
        self.velocity.forward(v)
    }

    #[inline]
    pub fn unscale_velocity(&self, s: T) -> T {
        self.velocity.inverse(s)
    }
}

/// Settings that produced a scaled dataset; models carry them so new
/// experiments can be preprocessed identically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessInfo<T> {
    pub smoothing_half_width: Option<usize>,
    pub onset_threshold: T,
    pub common_length: usize,
    pub dt_ns: T,
}

/// SVR-ready training points on the unit grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledDataset<T> {
    /// Rows are `(scaled time, scaled thickness)`.
    pub features: Features<T>,
    /// Scaled velocities.
    pub targets: Vec<T>,
    pub scaler: AxisScaler<T>,
    /// Experiment index (into `experiment_ids`) and sample index per point.
    pub provenance: Vec<(usize, usize)>,
    pub experiment_ids: Vec<String>,
    pub experiment_thickness: Vec<T>,
    pub info: PreprocessInfo<T>,
}

impl<T: Scalar> ScaledDataset<T> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_experiments(&self) -> usize {
        self.experiment_ids.len()
    }

    pub fn provenance(&self, i: usize) -> (&str, usize) {
        let (e, k) = self.provenance[i];
        (&self.experiment_ids[e], k)
    }

    /// Points (in order) belonging to experiment `e`.
    pub fn indices_of_experiment(&self, e: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.provenance[i].0 == e)
            .collect()
    }

    /// A dataset restricted to the given points; experiment bookkeeping is kept.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            scaler: self.scaler,
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            experiment_ids: self.experiment_ids.clone(),
            experiment_thickness: self.experiment_thickness.clone(),
            info: self.info,
        }
    }

    /// Content hash of the scaled points.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * 24);
        for (x, &y) in self.features.rows().zip(&self.targets) {
            for &c in x {
                bytes.extend_from_slice(&c.to_f64_lossy().to_le_bytes());
            }
            bytes.extend_from_slice(&y.to_f64_lossy().to_le_bytes());
        }
        sha256_hex(&bytes)
    }
}

/// Map an aligned dataset through a given scaler.
pub fn scale_with<T: Scalar>(
    d: &AlignedDataset<T>,
    scaler: AxisScaler<T>,
) -> Result<ScaledDataset<T>> {
    let n = d.common_length * d.len();
    let mut features = Features::empty(2);
    let mut targets = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    let dt = d.dt_ns();
    for (ei, e) in d.experiments.iter().enumerate() {
        for (k, &v) in e.velocities.iter().take(d.common_length).enumerate() {
            let p = scaler.scale_point(dt * T::from_usize_lossy(k), e.thickness_in);
            let y = scaler.scale_velocity(v);
            if !(p[0].is_finite() && p[1].is_finite() && y.is_finite()) {
                return Err(Error::Dataset(format!(
                    "series '{}': non-finite scaled value at index {k}",
                    e.id
                )));
            }
            features.push(&p)?;
            targets.push(y);
            provenance.push((ei, k));
        }
    }
    Ok(ScaledDataset {
        features,
        targets,
        scaler,
        provenance,
        experiment_ids: d.experiments.iter().map(|e| e.id.clone()).collect(),
        experiment_thickness: d.experiments.iter().map(|e| e.thickness_in).collect(),
        info: PreprocessInfo {
            smoothing_half_width: d.smoothing_half_width,
            onset_threshold: d.onset_threshold,
            common_length: d.common_length,
            dt_ns: dt,
        },
    })
}

/// Fit the unit-grid scaler and apply it.
pub fn scale_to_unit_grid<T: Scalar>(d: &AlignedDataset<T>) -> Result<ScaledDataset<T>> {
    let scaler = AxisScaler::fit(d)?;
    scale_with(d, scaler)
}

/// Full chain: smooth, align, truncate, scale.
pub fn preprocess<T: Scalar>(
    d: &RawDataset<T>,
    cfg: &PreprocessConfig,
) -> Result<ScaledDataset<T>> {
    scale_to_unit_grid(&prepare(d, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct evaluation of the triangular filter, written independently of
    /// the implementation above.
    fn smooth_oracle(v: &[f64], h: usize) -> Vec<f64> {
        let n = v.len() as i64;
        (0..n)
            .map(|i| {
                let (mut num, mut den) = (0.0, 0.0);
                for j in -(h as i64)..=(h as i64) {
                    let k = i + j;
                    if k >= 0 && k < n {
                        let w = (h as i64 + 1 - j.abs()) as f64;
                        num += w * v[k as usize];
                        den += w;
                    }
                }
                num / den
            })
            .collect()
    }

    fn series(id: &str, w: f64, v: Vec<f64>) -> ExperimentSeries<f64> {
        ExperimentSeries::new(id, w, 2.0, v).unwrap()
    }

    #[test]
    fn smoothing_constant_is_exact() {
        assert_eq!(smooth_triangular(&[5.0, 5.0, 5.0, 5.0], 1), vec![5.0; 4]);
    }

    #[test]
    fn smoothing_impulse_response() {
        let out = smooth_triangular(&[0.0, 0.0, 1.0, 0.0, 0.0], 1);
        assert_eq!(out, vec![0.0, 0.25, 0.5, 0.25, 0.0]);
        assert_eq!(out, smooth_oracle(&[0.0, 0.0, 1.0, 0.0, 0.0], 1));
    }

    #[test]
    fn smoothing_half_width_zero_is_identity() {
        let v = vec![1.0, -3.0, 2.5];
        assert_eq!(smooth_triangular(&v, 0), v);
    }

    proptest! {
        #[test]
        fn smoothing_matches_oracle_and_bounds(
            v in proptest::collection::vec(-1e3f64..1e3, 1..60),
            h in 0usize..8,
        ) {
            let out = smooth_triangular(&v, h);
            prop_assert_eq!(out.len(), v.len());
            let want = smooth_oracle(&v, h);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (a, b) in out.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                prop_assert!(*a <= hi + 1e-9 && *a >= lo - 1e-9);
            }
        }

        #[test]
        fn smoothing_conserves_interior_mass(
            core in proptest::collection::vec(-10.0f64..10.0, 1..20),
            h in 1usize..5,
        ) {
            // Pad with zeros so every window touching nonzero mass is interior.
            let mut v = vec![0.0; 2 * h];
            v.extend(&core);
            v.extend(vec![0.0; 2 * h]);
            let out = smooth_triangular(&v, h);
            let s_in: f64 = v.iter().sum();
            let s_out: f64 = out.iter().sum();
            prop_assert!((s_in - s_out).abs() < 1e-9);
        }
    }

    #[test]
    fn onset_is_first_sample_over_threshold() {
        let s = series("a", 0.25, vec![0.0, 0.0, 10.0, 100.0, 100.0]);
        assert_eq!(detect_start_time(&s, 0.05).unwrap(), 2);
    }

    #[test]
    fn onset_metadata_takes_precedence() {
        let s = series("a", 0.25, vec![0.0, 0.0, 10.0, 100.0, 100.0])
            .with_origin(100.0)
            .with_onset(106.0);
        assert_eq!(detect_start_time(&s, 0.05).unwrap(), 3);
    }

    #[test]
    fn flat_zero_series_has_no_onset() {
        let s = series("a", 0.25, vec![0.0, 0.0, 0.0]);
        assert!(matches!(
            detect_start_time(&s, 0.05),
            Err(Error::NoOnset(_))
        ));
        assert!(detect_start_time(&s, 1.5).is_err());
    }

    fn ramp_after(onset: usize, total: usize) -> Vec<f64> {
        (0..total)
            .map(|i| if i < onset { 0.0 } else { 100.0 })
            .collect()
    }

    #[test]
    fn align_cuts_to_shortest_post_onset_length() {
        let post = [2000, 1656, 1900, 1700, 1800];
        let ws = [0.25, 0.3125, 0.375, 0.4375, 0.5];
        let exps = post
            .iter()
            .zip(ws)
            .enumerate()
            .map(|(i, (&len, w))| series(&format!("e{i}"), w, ramp_after(10 + i, 10 + i + len)))
            .collect();
        let d = RawDataset::new(exps).unwrap();
        let a = align_and_truncate(&d, 0.05).unwrap();
        assert_eq!(a.common_length, 1656);
        assert!(a.experiments.iter().all(|e| e.len() == 1656));
        assert_eq!(a.shifts, vec![10, 11, 12, 13, 14]);
        assert_eq!(a.start_times_ns[2], 24.0);

        let again = align_and_truncate(&a.to_raw().unwrap(), 0.05).unwrap();
        assert_eq!(again.experiments, a.experiments);
        assert_eq!(again.common_length, a.common_length);
    }

    #[test]
    fn align_single_series_only_shifts() {
        let d = RawDataset::new(vec![series("a", 0.25, vec![0.0, 0.0, 50.0, 100.0])]).unwrap();
        let a = align_and_truncate(&d, 0.05).unwrap();
        assert_eq!(a.experiments[0].velocities, vec![50.0, 100.0]);
        assert_eq!(a.experiments[0].time_origin_ns, 4.0);
    }

    #[test]
    fn align_rejects_mixed_dt() {
        let a = series("a", 0.25, vec![1.0, 2.0]);
        let b = ExperimentSeries::new("b", 0.5, 4.0, vec![1.0, 2.0]).unwrap();
        let err = align_and_truncate(&RawDataset::new(vec![a, b]).unwrap(), 0.05).unwrap_err();
        assert!(err.to_string().contains("mixed dt"));
    }

    fn reference_geometry() -> AlignedDataset<f64> {
        let ws = [0.25, 0.3125, 0.375, 0.4375, 0.5];
        let exps: Vec<_> = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let v: Vec<f64> = (0..20).map(|k| (k as f64) * 90.0 + i as f64).collect();
                series(&format!("e{i}"), w, v).with_onset(0.0)
            })
            .collect();
        let mut v0 = exps[0].velocities.clone();
        v0[0] = 0.0;
        v0[19] = 1800.0;
        let mut exps = exps;
        exps[0].velocities = v0;
        align_and_truncate(&RawDataset::new(exps).unwrap(), 0.05).unwrap()
    }

    #[test]
    fn unit_grid_spacing() {
        let a = reference_geometry();
        let s = scale_to_unit_grid(&a).unwrap();
        let thick: Vec<f64> = s
            .experiment_thickness
            .iter()
            .map(|&w| s.scaler.thickness.forward(w))
            .collect();
        assert_eq!(thick, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        for k in 1..a.common_length {
            assert_eq!(s.features.row(k)[0] - s.features.row(k - 1)[0], 1.0);
        }
        assert_eq!(s.scaler.velocity.offset, 0.0);
        assert_eq!(s.scaler.scale_velocity(1800.0), 1.0);
        assert_eq!(s.scaler.scale_velocity(0.0), 0.0);
        assert_eq!(s.len(), a.common_length * 5);
        assert_eq!(s.provenance(21), ("e1", 1));
    }

    #[test]
    fn unscale_examples() {
        let sc = AxisScaler {
            time: AxisMap::new(0.0, 2.0).unwrap(),
            thickness: AxisMap::new(0.25, 0.0625).unwrap(),
            velocity: AxisMap::new(0.0, 1800.0).unwrap(),
        };
        assert_eq!(sc.thickness.inverse(2.0), 0.375);
        assert_eq!(sc.unscale_velocity(0.5), 900.0);
        assert_eq!(sc.unscale_point(&[3.0, 2.0]), [6.0, 0.375]);
    }

    #[test]
    fn median_gap_tolerates_missing_experiment() {
        let ws = [0.25, 0.3125, 0.4375, 0.5];
        let exps = ws
            .iter()
            .enumerate()
            .map(|(i, &w)| series(&format!("e{i}"), w, vec![1.0, 2.0, 3.0]))
            .collect();
        let a = align_and_truncate(&RawDataset::new(exps).unwrap(), 0.05).unwrap();
        let sc = AxisScaler::fit(&a).unwrap();
        assert_eq!(sc.thickness.step, 0.0625);
        assert_eq!(sc.thickness.forward(0.4375), 3.0);
    }

    #[test]
    fn scaling_needs_two_thicknesses() {
        let d = RawDataset::new(vec![series("a", 0.25, vec![1.0, 2.0])]).unwrap();
        let a = align_and_truncate(&d, 0.05).unwrap();
        assert!(scale_to_unit_grid(&a).is_err());
    }

    #[test]
    fn constant_velocity_keeps_unit_step() {
        let d = RawDataset::new(vec![
            series("a", 0.25, vec![3.0; 4]),
            series("b", 0.5, vec![3.0; 4]),
        ])
        .unwrap();
        let s = scale_to_unit_grid(&align_and_truncate(&d, 0.05).unwrap()).unwrap();
        assert!(s.targets.iter().all(|&y| y == 0.0));
        assert_eq!(s.scaler.unscale_velocity(0.0), 3.0);
    }

    #[test]
    fn prepare_series_matches_training_alignment() {
        let s = series("a", 0.25, ramp_after(7, 40));
        let p = prepare_series(&s, None, 0.05, 30).unwrap();
        assert_eq!(p.len(), 30);
        assert_eq!(p.time_origin_ns, 14.0);
        assert!(prepare_series(&s, None, 0.05, 34).is_err());
    }
}
