//! Deterministic synthetic velocimetry with a known noiseless surface.
//!
//! Each profile is a smooth step up to a thickness-dependent peak, modulated
//! by a decaying ringing term:
//!
//! ```text
//! v(t, w) = peak(w) · S((t − t0(w)) / rise(w)) · [1 + a · sin(2πt / period) · exp(−decay(w) · t)]
//! ```
//!
//! with `S` the logistic function. The shape resembles free-surface velocity
//! records; it makes no claim to shock-physics fidelity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{ExperimentSeries, RawDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `intercept + slope · w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineLaw<T> {
    pub intercept: T,
    pub slope: T,
}

impl<T: Scalar> AffineLaw<T> {
    pub fn new(intercept: T, slope: T) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn at(&self, w: T) -> T {
        self.intercept + self.slope * w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig<T> {
    /// Coupon thicknesses in inches, one series each.
    pub thicknesses: Vec<T>,
    pub n_steps: usize,
    pub dt_ns: T,
    /// Plateau velocity in m/s.
    pub peak_mps: AffineLaw<T>,
    /// Logistic rise time in ns.
    pub rise_ns: AffineLaw<T>,
    /// Midpoint of the rise in ns.
    pub onset_ns: AffineLaw<T>,
    /// Ringing envelope decay rate in 1/ns.
    pub decay_per_ns: AffineLaw<T>,
    /// Relative ringing amplitude.
    pub ringing_amplitude: T,
    pub ringing_period_ns: T,
    /// Standard deviation of the multiplicative Gaussian noise.
    pub noise_rel: T,
    pub seed: u64,
}

impl<T: Scalar> Default for SynthConfig<T> {
    fn default() -> Self {
        Self {
            thicknesses: [0.25, 0.3125, 0.375, 0.4375, 0.5].map(T::lit).to_vec(),
            n_steps: 1656,
            dt_ns: T::lit(2.0),
            // 1800 m/s at 0.25 in, slowing by 1200 m/s per inch
            peak_mps: AffineLaw::new(T::lit(2100.0), T::lit(-1200.0)),
            rise_ns: AffineLaw::new(T::lit(4.0), T::lit(16.0)),
            onset_ns: AffineLaw::new(T::lit(50.0), T::lit(400.0)),
            decay_per_ns: AffineLaw::new(T::lit(0.001), T::lit(0.004)),
            ringing_amplitude: T::lit(0.08),
            ringing_period_ns: T::lit(300.0),
            noise_rel: T::lit(0.04),
            seed: 0x5eed,
        }
    }
}

impl<T: Scalar> SynthConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.thicknesses.is_empty() {
            return bad("synthetic config needs at least one thickness".into());
        }
        if self.n_steps == 0 {
            return bad("n_steps must be positive".into());
        }
        if !(self.dt_ns > T::zero()) {
            return bad(format!("dt must be positive, got {}", self.dt_ns));
        }
        if !(self.noise_rel >= T::zero() && self.noise_rel < T::one()) {
            return bad(format!(
                "noise_rel must lie in [0, 1), got {}",
                self.noise_rel
            ));
        }
        if !(self.ringing_period_ns > T::zero()) || !self.ringing_amplitude.is_finite() {
            return bad("ringing period must be positive and amplitude finite".into());
        }
        let mut sorted = self.thicknesses.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return bad("duplicate thickness".into());
        }
        for &w in &self.thicknesses {
            if !(w > T::zero()) || !w.is_finite() {
                return bad(format!("thickness must be positive, got {w}"));
            }
            for (name, v) in [
                ("peak velocity", self.peak_mps.at(w)),
                ("rise time", self.rise_ns.at(w)),
                ("decay rate", self.decay_per_ns.at(w)),
            ] {
                if !(v > T::zero()) || !v.is_finite() {
                    return bad(format!("{name} must be positive at w = {w}, got {v}"));
                }
            }
            if !self.onset_ns.at(w).is_finite() {
                return bad(format!("onset time not finite at w = {w}"));
            }
        }
        Ok(())
    }

    /// Noiseless evaluator with the same shape parameters.
    pub fn ground_truth(&self) -> GroundTruth<T> {
        GroundTruth { cfg: self.clone() }
    }
}

/// The noiseless surface `v(t, w)`, defined for any thickness.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T> {
    cfg: SynthConfig<T>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn velocity(&self, time_ns: T, thickness_in: T) -> T {
        let c = &self.cfg;
        let w = thickness_in;
        let x = (time_ns - c.onset_ns.at(w)) / c.rise_ns.at(w);
        let step = T::one() / (T::one() + (-x).exp());
        let phase = T::lit(std::f64::consts::TAU) * time_ns / c.ringing_period_ns;
        let ring = c.ringing_amplitude * phase.sin() * (-c.decay_per_ns.at(w) * time_ns).exp();
        c.peak_mps.at(w) * step * (T::one() + ring)
    }

    /// Sampled noiseless series at the generator's time grid.
    pub fn series(&self, thickness_in: T) -> Vec<T> {
        (0..self.cfg.n_steps)
            .map(|k| self.velocity(self.cfg.dt_ns * T::from_usize_lossy(k), thickness_in))
            .collect()
    }
}

/// Series id used for a generated thickness.
pub fn series_id<T: Scalar>(thickness_in: T) -> String {
    format!("synth_w{:.4}", thickness_in.to_f64_lossy())
}

/// One experiment at thickness `w`. The noise stream depends only on
/// `(cfg.seed, w)`, so adding or removing other thicknesses leaves it unchanged.
pub fn generate_profile<T: Scalar>(
    w: T,
    cfg: &SynthConfig<T>,
    noiseless: bool,
) -> Result<ExperimentSeries<T>> {
    cfg.validate()?;
    let truth = cfg.ground_truth();
    let mut v = truth.series(w);
    if !noiseless && cfg.noise_rel > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(w.to_f64_lossy().to_bits());
        for x in &mut v {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x *= T::one() + cfg.noise_rel * T::lit(z);
        }
    }
    ExperimentSeries::new(series_id(w), w, cfg.dt_ns, v)
}

/// One series per configured thickness, plus the noiseless surface.
pub fn generate_dataset<T: Scalar>(
    cfg: &SynthConfig<T>,
) -> Result<(RawDataset<T>, GroundTruth<T>)> {
    cfg.validate()?;
    let series = cfg
        .thicknesses
        .par_iter()
        .map(|&w| generate_profile(w, cfg, false))
        .collect::<Result<Vec<_>>>()?;
    Ok((RawDataset::new(series)?, cfg.ground_truth()))
}
