//! Training and prediction with a persistent, self-contained model.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::kernel::Kernel;
use crate::preprocess::{AxisScaler, PreprocessInfo, ScaledDataset};
use crate::scalar::Scalar;
use crate::solver::{solve_epsilon_svr, SolverConfig};

/// The three tunable quantities: kernel (with its width), `C` and `ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams<T> {
    pub kernel: Kernel<T>,
    pub c: T,
    pub epsilon: T,
}

impl<T: Scalar> HyperParams<T> {
    pub fn rbf(gamma: T, c: T, epsilon: T) -> Self {
        Self {
            kernel: Kernel::rbf(gamma),
            c,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.solver_config(&SolverConfig::default()).validate()
    }

    /// `base` with `C` and `ε` taken from these parameters.
    pub fn solver_config(&self, base: &SolverConfig<T>) -> SolverConfig<T> {
        SolverConfig {
            c: self.c,
            epsilon: self.epsilon,
            ..base.clone()
        }
    }
}

/// How a model was obtained.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta<T> {
    pub n_train: usize,
    pub converged: bool,
    pub objective: T,
    pub iterations: usize,
    pub violation: T,
    pub c: T,
    pub epsilon: T,
    pub tolerance: T,
    pub max_iterations: usize,
    /// Content hash of the scaled training set.
    pub fingerprint: String,
    pub preprocess: PreprocessInfo<T>,
}

/// A trained regressor. Immutable; safe to share between threads.
#[derive(Clone, Debug, PartialEq)]
pub struct SvrModel<T> {
    /// Scaled feature vectors with nonzero coefficient.
    pub support_vectors: Features<T>,
    pub coefficients: Vec<T>,
    pub bias: T,
    pub kernel: Kernel<T>,
    pub scaler: AxisScaler<T>,
    pub meta: TrainingMeta<T>,
}

/// Fit an ε-SVR to a scaled dataset. `C` and `ε` come from `hp`; the rest of
/// `cfg` controls the solver. A model that did not converge is still returned,
/// with `meta.converged == false`.
pub fn train<T: Scalar>(
    d: &ScaledDataset<T>,
    hp: &HyperParams<T>,
    cfg: &SolverConfig<T>,
) -> Result<SvrModel<T>> {
    if d.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    hp.validate()?;
    let scfg = hp.solver_config(cfg);
    let sol = solve_epsilon_svr(&d.features, &d.targets, &hp.kernel, &scfg)?;
    if !sol.converged {
        log::warn!(
            "training with {} did not converge (violation {})",
            describe(hp),
            sol.violation
        );
    }
    let keep: Vec<usize> = (0..d.len()).filter(|&i| sol.beta[i] != T::zero()).collect();
    Ok(SvrModel {
        support_vectors: d.features.select(&keep),
        coefficients: keep.iter().map(|&i| sol.beta[i]).collect(),
        bias: sol.bias,
        kernel: hp.kernel.clone(),
        scaler: d.scaler,
        meta: TrainingMeta {
            n_train: d.len(),
            converged: sol.converged,
            objective: sol.objective,
            iterations: sol.iterations,
            violation: sol.violation,
            c: scfg.c,
            epsilon: scfg.epsilon,
            tolerance: scfg.tolerance,
            max_iterations: scfg.max_iterations,
            fingerprint: d.fingerprint(),
            preprocess: d.info,
        },
    })
}

pub(crate) fn describe<T: Scalar>(hp: &HyperParams<T>) -> String {
    format!("{} C={} epsilon={}", hp.kernel, hp.c, hp.epsilon)
}

impl<T: Scalar> SvrModel<T> {
    pub fn n_support(&self) -> usize {
        self.coefficients.len()
    }

    pub fn hyper_params(&self) -> HyperParams<T> {
        HyperParams {
            kernel: self.kernel.clone(),
            c: self.meta.c,
            epsilon: self.meta.epsilon,
        }
    }

    /// `Σ β_i K(s_i, x) + b` in scaled units.
    pub fn predict_scaled(&self, x: &[T]) -> Result<T> {
        if x.len() != self.support_vectors.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_scaled_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_scaled_unchecked(&self, x: &[T]) -> T {
        let mut s = self.bias;
        for (sv, &b) in self.support_vectors.rows().zip(&self.coefficients) {
            s += b * self.kernel.eval_unchecked(sv, x);
        }
        s
    }

    /// Velocity in m/s at an aligned time (ns after onset) and thickness (in).
    pub fn predict_physical(&self, time_ns: T, thickness_in: T) -> Result<T> {
        let x = self.scaler.scale_point(time_ns, thickness_in);
        Ok(self.scaler.unscale_velocity(self.predict_scaled(&x)?))
    }

    /// Scaled predictions for many points, evaluated in parallel.
    pub fn predict_batch_scaled(&self, xs: &Features<T>) -> Result<Vec<T>> {
        if xs.dim() != self.support_vectors.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.dim(),
                got: xs.dim(),
            });
        }
        let rows: Vec<&[T]> = xs.rows().collect();
        Ok(rows
            .par_iter()
            .map(|x| self.predict_scaled_unchecked(x))
            .collect())
    }

    /// Physical-unit predictions for `(time_ns, thickness_in)` pairs.
    pub fn predict_batch_physical(&self, queries: &[(T, T)]) -> Vec<T> {
        queries
            .par_iter()
            .map(|&(t, w)| {
                let x = self.scaler.scale_point(t, w);
                self.scaler
                    .unscale_velocity(self.predict_scaled_unchecked(&x))
            })
            .collect()
    }
}
