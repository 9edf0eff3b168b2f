//! Dense surface evaluation, export, and outlier-experiment scoring.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{ExperimentSeries, RawDataset};
use crate::error::{Error, Result};
use crate::io_util::sha256_hex;
use crate::model_io::model_to_string;
use crate::preprocess::{
    prepare, prepare_series, scale_with, AlignedDataset, AxisScaler, PreprocessConfig,
};
use crate::scalar::Scalar;
use crate::solver::SolverConfig;
use crate::svr::{train, HyperParams, SvrModel};

/// Largest number of surface cells evaluated without an explicit override.
pub const DEFAULT_CELL_BUDGET: usize = 10_000_000;

/// Relative-deviation threshold above which an experiment is flagged.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.10;

/// Velocities below this magnitude (m/s) are compared absolutely.
pub const RELATIVE_FLOOR_MPS: f64 = 1.0;

/// Nodes `start + i·step` for `i = 0, 1, …` up to `stop`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisRange<T> {
    pub start: T,
    pub stop: T,
    pub step: T,
}

impl<T: Scalar> AxisRange<T> {
    pub fn new(start: T, stop: T, step: T) -> Self {
        Self { start, stop, step }
    }

    pub fn len(&self) -> Result<usize> {
        if !(self.step > T::zero()) || !self.step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "range [{}, {}] is empty",
                self.start, self.stop
            )));
        }
        // a hair of slack so stop is included despite rounding
        let span = (self.stop - self.start) / self.step;
        let n = (span + T::lit(1e-9))
            .floor()
            .to_usize()
            .unwrap_or(usize::MAX);
        Ok(n.saturating_add(1))
    }

    pub fn nodes(&self) -> Result<Vec<T>> {
        let n = self.len()?;
        Ok((0..n)
            .map(|i| self.start + T::from_usize_lossy(i) * self.step)
            .collect())
    }
}

/// Velocities on a (time × thickness) lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid<T> {
    pub times_ns: Vec<T>,
    pub thicknesses_in: Vec<T>,
    /// Row-major, `velocities[i * thicknesses.len() + j]` at `(times[i], thicknesses[j])`.
    pub velocities: Vec<T>,
    /// Hash of the serialized model that produced the surface.
    pub model_fingerprint: String,
}

impl<T: Scalar> SurfaceGrid<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.velocities[i * self.thicknesses_in.len() + j]
    }

    /// Matrix layout: the first row holds the time axis, the first column the
    /// thickness axis, cell `(j, i)` the velocity at `(times[i], thicknesses[j])`.
    pub fn to_matrix_csv(&self) -> String {
        let mut s = String::from("thickness_in\\time_ns");
        for t in &self.times_ns {
            let _ = write!(s, ",{}", t.to_f64_lossy());
        }
        s.push('\n');
        for (j, w) in self.thicknesses_in.iter().enumerate() {
            let _ = write!(s, "{}", w.to_f64_lossy());
            for i in 0..self.times_ns.len() {
                let _ = write!(s, ",{}", self.get(i, j).to_f64_lossy());
            }
            s.push('\n');
        }
        s
    }

    /// Long form, one `time_ns,thickness_in,velocity_mps` row per cell,
    /// grouped by thickness.
    pub fn to_xyz_csv(&self) -> String {
        let mut s = String::from("time_ns,thickness_in,velocity_mps\n");
        for (j, w) in self.thicknesses_in.iter().enumerate() {
            for (i, t) in self.times_ns.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    t.to_f64_lossy(),
                    w.to_f64_lossy(),
                    self.get(i, j).to_f64_lossy()
                );
            }
        }
        s
    }
}

pub fn model_fingerprint<T: Scalar>(m: &SvrModel<T>) -> String {
    sha256_hex(model_to_string(m).as_bytes())
}

/// Evaluate `predict_physical` on every lattice node, in parallel over time rows.
pub fn reconstruct_surface<T: Scalar>(
    m: &SvrModel<T>,
    time: &AxisRange<T>,
    thickness: &AxisRange<T>,
    cell_budget: usize,
) -> Result<SurfaceGrid<T>> {
    let (nt, nw) = (time.len()?, thickness.len()?);
    let cells = nt.saturating_mul(nw);
    if cells > cell_budget {
        return Err(Error::Budget {
            cells,
            budget: cell_budget,
        });
    }
    let times = time.nodes()?;
    let thicknesses = thickness.nodes()?;
    let mut velocities = vec![T::zero(); cells];
    velocities
        .par_chunks_mut(nw)
        .zip(times.par_iter())
        .for_each(|(row, &t)| {
            for (v, &w) in row.iter_mut().zip(&thicknesses) {
                let x = m.scaler.scale_point(t, w);
                *v = m.scaler.unscale_velocity(m.predict_scaled_unchecked(&x));
            }
        });
    if let Some(k) = velocities.iter().position(|v| !v.is_finite()) {
        return Err(Error::Dataset(format!(
            "non-finite surface value at time {} ns, thickness {} in",
            times[k / nw],
            thicknesses[k % nw]
        )));
    }
    Ok(SurfaceGrid {
        times_ns: times,
        thicknesses_in: thicknesses,
        velocities,
        model_fingerprint: model_fingerprint(m),
    })
}

/// RMS over the series of `|prediction − measurement| / max(|measurement|, 1 m/s)`
/// for a series already aligned like the model's training data.
pub fn outlier_score<T: Scalar>(m: &SvrModel<T>, aligned: &ExperimentSeries<T>) -> Result<T> {
    score_against(
        m,
        &m.scaler,
        aligned,
        m.meta.preprocess.common_length,
        m.meta.preprocess.dt_ns,
    )
}

fn score_against<T: Scalar>(
    m: &SvrModel<T>,
    scaler: &AxisScaler<T>,
    e: &ExperimentSeries<T>,
    length: usize,
    dt_ns: T,
) -> Result<T> {
    if e.len() != length || length == 0 {
        return Err(Error::DimensionMismatch {
            expected: length,
            got: e.len(),
        });
    }
    if (e.dt_ns - dt_ns).abs() > T::lit(1e-9) * dt_ns.abs() {
        return Err(Error::Dataset(format!(
            "series '{}' has dt {} ns, the model was trained at {} ns",
            e.id, e.dt_ns, dt_ns
        )));
    }
    let floor = T::lit(RELATIVE_FLOOR_MPS);
    let mut sum = T::zero();
    for (k, &meas) in e.velocities.iter().enumerate() {
        let x = scaler.scale_point(dt_ns * T::from_usize_lossy(k), e.thickness_in);
        let pred = scaler.unscale_velocity(m.predict_scaled_unchecked(&x));
        let r = (pred - meas).abs() / meas.abs().max(floor);
        sum += r * r;
    }
    Ok((sum / T::from_usize_lossy(length)).sqrt())
}

/// Preprocess raw experiments with the model's settings and score each.
pub fn score_experiments<T: Scalar>(
    m: &SvrModel<T>,
    d: &RawDataset<T>,
) -> Result<Vec<(String, T)>> {
    let p = &m.meta.preprocess;
    d.experiments
        .par_iter()
        .map(|e| {
            let a = prepare_series(
                e,
                p.smoothing_half_width,
                p.onset_threshold,
                p.common_length,
            )?;
            Ok((e.id.clone(), outlier_score(m, &a)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierEntry<T> {
    pub id: String,
    pub score: T,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierReport<T> {
    pub threshold: T,
    /// Sorted by descending score, ties by id.
    pub entries: Vec<OutlierEntry<T>>,
}

impl<T: Scalar> OutlierReport<T> {
    pub fn flagged(&self) -> impl Iterator<Item = &OutlierEntry<T>> {
        self.entries.iter().filter(|e| e.flagged)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,score,flagged\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.id, e.score.to_f64_lossy(), e.flagged);
        }
        s
    }
}

/// Flag every score strictly above `threshold`.
pub fn flag_outliers<T: Scalar>(scores: &[(String, T)], threshold: T) -> Result<OutlierReport<T>> {
    if !(threshold > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    let mut entries: Vec<OutlierEntry<T>> = scores
        .iter()
        .map(|(id, s)| OutlierEntry {
            id: id.clone(),
            score: *s,
            flagged: *s > threshold,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(OutlierReport { threshold, entries })
}

/// Leave-one-out scoring with successive rejection.
///
/// Each remaining experiment is scored against a model trained on the other
/// remaining ones. While some score exceeds `threshold`, one experiment is set
/// aside: the one whose absence leaves the others most consistent, measured
/// as the worst leave-one-out score among them with it removed. Its own score
/// is kept, the rest are rescored without it, so a single bad experiment
/// cannot drag its neighbours over the threshold. Stops when every score is
/// within the threshold or fewer than four experiments remain. The scaler is
/// fitted once on all experiments.
pub fn loo_outlier_report<T: Scalar>(
    d: &RawDataset<T>,
    prep: &PreprocessConfig,
    hp: &HyperParams<T>,
    cfg: &SolverConfig<T>,
    threshold: T,
) -> Result<OutlierReport<T>> {
    if !(threshold > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    let aligned = prepare(d, prep)?;
    let scaler = AxisScaler::fit(&aligned)?;
    let ctx = LooContext {
        aligned: &aligned,
        scaler: &scaler,
        hp,
        cfg,
    };
    let mut remaining: Vec<usize> = (0..aligned.len()).collect();
    let mut scores: Vec<(String, T)> = Vec::new();
    let id = |e: usize| aligned.experiments[e].id.clone();
    loop {
        let plain: Vec<T> = remaining
            .iter()
            .map(|&e| ctx.score_without(e, &remaining, &[e]))
            .collect::<Result<_>>()?;
        let worst = plain.iter().copied().fold(T::neg_infinity(), T::max);
        if !(worst > threshold) || remaining.len() < 4 {
            scores.extend(remaining.iter().zip(plain).map(|(&e, s)| (id(e), s)));
            break;
        }
        let pos = ctx.most_disruptive(&remaining)?;
        if !(plain[pos] > threshold) {
            scores.extend(remaining.iter().zip(plain).map(|(&e, s)| (id(e), s)));
            break;
        }
        let e = remaining.remove(pos);
        log::info!(
            "leave-one-out: '{}' scores {}, set aside",
            id(e),
            plain[pos]
        );
        scores.push((id(e), plain[pos]));
    }
    flag_outliers(&scores, threshold)
}

struct LooContext<'a, T> {
    aligned: &'a AlignedDataset<T>,
    scaler: &'a AxisScaler<T>,
    hp: &'a HyperParams<T>,
    cfg: &'a SolverConfig<T>,
}

impl<T: Scalar> LooContext<'_, T> {
    fn model_without(&self, members: &[usize], excluded: &[usize]) -> Result<SvrModel<T>> {
        let keep: Vec<usize> = members
            .iter()
            .copied()
            .filter(|e| !excluded.contains(e))
            .collect();
        train(
            &scale_with(&self.aligned.select(&keep)?, *self.scaler)?,
            self.hp,
            self.cfg,
        )
    }

    fn score(&self, m: &SvrModel<T>, e: usize) -> Result<T> {
        score_against(
            m,
            self.scaler,
            &self.aligned.experiments[e],
            self.aligned.common_length,
            self.aligned.dt_ns(),
        )
    }

    /// Score of `e` under a model trained on `members` minus `excluded`.
    fn score_without(&self, e: usize, members: &[usize], excluded: &[usize]) -> Result<T> {
        self.score(&self.model_without(members, excluded)?, e)
    }

    /// Position in `members` of the experiment whose removal minimizes the
    /// worst leave-one-out score of the others. One model per pair `{a, b}`,
    /// trained without both, scores `a` for candidate `b` and vice versa.
    fn most_disruptive(&self, members: &[usize]) -> Result<usize> {
        let m = members.len();
        let mut worst_without = vec![T::neg_infinity(); m];
        for a in 0..m {
            for b in a + 1..m {
                let model = self.model_without(members, &[members[a], members[b]])?;
                let sa = self.score(&model, members[a])?;
                let sb = self.score(&model, members[b])?;
                worst_without[b] = worst_without[b].max(sa);
                worst_without[a] = worst_without[a].max(sb);
            }
        }
        let mut best = 0;
        for c in 1..m {
            if worst_without[c] < worst_without[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Features;
    use crate::kernel::Kernel;
    use crate::preprocess::{AxisMap, PreprocessInfo};
    use crate::svr::TrainingMeta;

    fn flat_model(bias: f64) -> SvrModel<f64> {
        SvrModel {
            support_vectors: Features::from_rows(&[[0.0, 0.0], [4.0, 1.0]]).unwrap(),
            coefficients: vec![0.3, -0.2],
            bias,
            kernel: Kernel::rbf(0.1),
            scaler: AxisScaler {
                time: AxisMap::new(0.0, 2.0).unwrap(),
                thickness: AxisMap::new(0.25, 0.0625).unwrap(),
                velocity: AxisMap::new(0.0, 1000.0).unwrap(),
            },
            meta: TrainingMeta {
                n_train: 10,
                converged: true,
                objective: 0.0,
                iterations: 0,
                violation: 0.0,
                c: 1.0,
                epsilon: 0.001,
                tolerance: 1e-3,
                max_iterations: 10,
                fingerprint: String::new(),
                preprocess: PreprocessInfo {
                    smoothing_half_width: None,
                    onset_threshold: 0.05,
                    common_length: 6,
                    dt_ns: 2.0,
                },
            },
        }
    }

    #[test]
    fn axis_nodes() {
        assert_eq!(
            AxisRange::new(0.0, 1.0, 0.25).nodes().unwrap(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(AxisRange::new(0.3, 0.3, 1.0).nodes().unwrap(), vec![0.3]);
        assert_eq!(AxisRange::new(0.25, 0.5, 0.0625).len().unwrap(), 5);
        assert!(AxisRange::new(1.0, 0.0, 0.1).len().is_err());
        assert!(AxisRange::new(0.0, 1.0, 0.0).len().is_err());
    }

    #[test]
    fn single_cell_surface_is_one_prediction() {
        let m = flat_model(0.4);
        let g = reconstruct_surface(
            &m,
            &AxisRange::new(6.0, 6.0, 1.0),
            &AxisRange::new(0.3, 0.3, 0.1),
            DEFAULT_CELL_BUDGET,
        )
        .unwrap();
        assert_eq!(g.velocities, vec![m.predict_physical(6.0, 0.3).unwrap()]);
    }

    #[test]
    fn refinement_keeps_coincident_nodes() {
        let m = flat_model(0.4);
        let coarse = reconstruct_surface(
            &m,
            &AxisRange::new(0.0, 40.0, 4.0),
            &AxisRange::new(0.25, 0.5, 0.125),
            1000,
        )
        .unwrap();
        let fine = reconstruct_surface(
            &m,
            &AxisRange::new(0.0, 40.0, 2.0),
            &AxisRange::new(0.25, 0.5, 0.0625),
            1000,
        )
        .unwrap();
        for i in 0..coarse.times_ns.len() {
            for j in 0..coarse.thicknesses_in.len() {
                assert_eq!(coarse.times_ns[i], fine.times_ns[2 * i]);
                assert_eq!(coarse.get(i, j), fine.get(2 * i, 2 * j));
                assert_eq!(
                    coarse.get(i, j),
                    m.predict_physical(coarse.times_ns[i], coarse.thicknesses_in[j])
                        .unwrap()
                );
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let m = flat_model(0.4);
        let r = reconstruct_surface(
            &m,
            &AxisRange::new(0.0, 99.0, 1.0),
            &AxisRange::new(0.0, 9.0, 1.0),
            999,
        );
        assert!(matches!(
            r,
            Err(Error::Budget {
                cells: 1000,
                budget: 999
            })
        ));
    }

    #[test]
    fn export_layouts() {
        let g = SurfaceGrid {
            times_ns: vec![0.0, 2.0],
            thicknesses_in: vec![0.25, 0.5],
            velocities: vec![1.0, 2.0, 3.0, 4.0],
            model_fingerprint: String::new(),
        };
        assert_eq!(
            g.to_matrix_csv(),
            "thickness_in\\time_ns,0,2\n0.25,1,3\n0.5,2,4\n"
        );
        assert_eq!(
            g.to_xyz_csv(),
            "time_ns,thickness_in,velocity_mps\n0,0.25,1\n2,0.25,3\n0,0.5,2\n2,0.5,4\n"
        );
    }

    #[test]
    fn scoring_rules() {
        let m = flat_model(0.4);
        let pred: Vec<f64> = (0..6)
            .map(|k| m.predict_physical(2.0 * k as f64, 0.3).unwrap())
            .collect();
        let same = ExperimentSeries::new("a", 0.3, 2.0, pred.clone()).unwrap();
        assert_eq!(outlier_score(&m, &same).unwrap(), 0.0);
        // measured at half the prediction: |p − p/2| / (p/2) = 1
        let halved =
            ExperimentSeries::new("b", 0.3, 2.0, pred.iter().map(|v| v / 2.0).collect()).unwrap();
        assert!((outlier_score(&m, &halved).unwrap() - 1.0).abs() < 1e-12);
        // doubled: |p − 2p| / 2p = 0.5
        let doubled =
            ExperimentSeries::new("c", 0.3, 2.0, pred.iter().map(|v| v * 2.0).collect()).unwrap();
        assert!((outlier_score(&m, &doubled).unwrap() - 0.5).abs() < 1e-12);
        let short = ExperimentSeries::new("d", 0.3, 2.0, pred[..5].to_vec()).unwrap();
        assert!(outlier_score(&m, &short).is_err());
        let other_dt = ExperimentSeries::new("e", 0.3, 4.0, pred).unwrap();
        assert!(outlier_score(&m, &other_dt).is_err());
    }

    #[test]
    fn near_zero_measurements_use_the_floor() {
        let m = flat_model(0.0005); // 0.5 m/s after unscaling
        let m = SvrModel {
            coefficients: vec![],
            support_vectors: Features::empty(2),
            ..m
        };
        let e = ExperimentSeries::new("z", 0.3, 2.0, vec![0.0; 6]).unwrap();
        assert!((outlier_score(&m, &e).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flagging() {
        let s = |v: &[f64]| -> Vec<(String, f64)> {
            v.iter()
                .enumerate()
                .map(|(i, &x)| (format!("e{i}"), x))
                .collect()
        };
        assert_eq!(
            flag_outliers(&s(&[0.0, 0.0]), 0.1)
                .unwrap()
                .flagged()
                .count(),
            0
        );
        let r = flag_outliers(&s(&[0.02, 0.03, 0.5]), 0.1).unwrap();
        assert_eq!(r.flagged().count(), 1);
        assert_eq!(r.entries[0].id, "e2");
        assert_eq!(r.entries[2].score, 0.02);
        assert_eq!(flag_outliers(&s(&[0.1]), 0.1).unwrap().flagged().count(), 0);
        assert!(flag_outliers(&s(&[0.1]), 0.0).is_err());
        assert_eq!(
            r.to_csv(),
            "id,score,flagged\ne2,0.5,true\ne1,0.03,false\ne0,0.02,false\n"
        );
    }

    fn short_synthetic(seed: u64) -> RawDataset<f64> {
        let cfg = crate::synth::SynthConfig {
            n_steps: 240,
            seed,
            ..Default::default()
        };
        crate::synth::generate_dataset(&cfg).unwrap().0
    }

    #[test]
    fn leave_one_out_sets_aside_the_corrupted_coupon() {
        let mut raw = short_synthetic(21);
        // interior coupon: on series this short, a clean edge coupon two
        // steps from its nearest neighbour extrapolates too poorly to score clean
        raw.experiments[2]
            .velocities
            .iter_mut()
            .for_each(|v| *v *= 2.0);
        let hp = HyperParams::rbf(0.005, 1.0, 0.001);
        let r = loo_outlier_report(
            &raw,
            &PreprocessConfig::default(),
            &hp,
            &SolverConfig::default(),
            0.10,
        )
        .unwrap();
        assert_eq!(r.entries.len(), 5);
        let flagged: Vec<&str> = r
            .entries
            .iter()
            .filter(|e| e.flagged)
            .map(|e| e.id.as_str())
            .collect();
        assert_eq!(flagged, vec![raw.experiments[2].id.as_str()], "{r:?}");
    }

    #[test]
    fn leave_one_out_on_clean_data_flags_nothing() {
        let raw = short_synthetic(22);
        let hp = HyperParams::rbf(0.005, 1.0, 0.001);
        let r = loo_outlier_report(
            &raw,
            &PreprocessConfig::default(),
            &hp,
            &SolverConfig::default(),
            0.10,
        )
        .unwrap();
        assert_eq!(r.entries.len(), 5);
        assert!(r.entries.iter().all(|e| !e.flagged), "{r:?}");
        assert!(loo_outlier_report(
            &raw,
            &PreprocessConfig::default(),
            &hp,
            &SolverConfig::default(),
            0.0
        )
        .is_err());
    }
}
