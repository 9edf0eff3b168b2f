//! k-fold cross-validation and the ⟨γ, C, ε⟩ grid search.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::preprocess::ScaledDataset;
use crate::scalar::Scalar;
use crate::solver::SolverConfig;
use crate::svr::{describe, train, HyperParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FoldStrategy {
    /// Whole experiments are held out together (leave-one-thickness-out when
    /// k equals the number of experiments).
    #[default]
    ByExperiment,
    /// Individual points are shuffled into folds.
    ByPoint,
}

impl fmt::Display for FoldStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldStrategy::ByExperiment => "by_experiment",
            FoldStrategy::ByPoint => "by_point",
        })
    }
}

impl FromStr for FoldStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "by_experiment" | "by-experiment" => Ok(FoldStrategy::ByExperiment),
            "by_point" | "by-point" => Ok(FoldStrategy::ByPoint),
            _ => Err(Error::InvalidParameter(format!(
                "unknown fold strategy '{s}' (expected by_experiment or by_point)"
            ))),
        }
    }
}

/// Fold index for every point of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub strategy: FoldStrategy,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// `(training indices, validation indices)` for fold `f`, both ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Partition a dataset into `k` folds. Units (experiments or points) are
/// shuffled with a seeded ChaCha8 stream and dealt round-robin, so fold sizes
/// differ by at most one unit.
pub fn make_folds<T: Scalar>(
    d: &ScaledDataset<T>,
    k: usize,
    strategy: FoldStrategy,
    seed: u64,
) -> Result<FoldPlan> {
    let unit_of: Vec<usize> = match strategy {
        FoldStrategy::ByPoint => (0..d.len()).collect(),
        FoldStrategy::ByExperiment => d.provenance.iter().map(|p| p.0).collect(),
    };
    let mut units: Vec<usize> = unit_of.clone();
    units.sort_unstable();
    units.dedup();
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if k > units.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the {} {} available",
            units.len(),
            match strategy {
                FoldStrategy::ByPoint => "points",
                FoldStrategy::ByExperiment => "experiments",
            }
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let max_unit = units.iter().copied().max().unwrap_or(0);
    let mut fold_of_unit = vec![0; max_unit + 1];
    for (pos, &u) in units.iter().enumerate() {
        fold_of_unit[u] = pos % k;
    }
    Ok(FoldPlan {
        k,
        strategy,
        seed,
        assignments: unit_of.iter().map(|&u| fold_of_unit[u]).collect(),
    })
}

/// Euclidean norm of the residual vector.
pub fn l2_error<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidParameter(
            "l2 error of an empty vector".into(),
        ));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (*p - *t) * (*p - *t))
        .sum::<T>()
        .sqrt())
}

/// Outcome of one cross-validation run.
#[derive(Clone, Debug, PartialEq)]
pub struct CvResult<T> {
    pub params: HyperParams<T>,
    /// Scaled-unit l² error per fold; `None` where training failed or did not converge.
    pub fold_errors: Vec<Option<T>>,
    /// Mean over the successful folds.
    pub mean_error: Option<T>,
    /// `mean_error` expressed in m/s.
    pub mean_error_physical: Option<T>,
    pub n_support_mean: T,
    pub converged_folds: usize,
    pub wall_time_s: f64,
}

impl<T: Scalar> CvResult<T> {
    /// Every fold trained and converged.
    pub fn is_complete(&self) -> bool {
        self.fold_errors.iter().all(Option::is_some)
    }
}

/// Train on `k − 1` folds and score the held-out one, for each fold in turn.
pub fn cross_validate<T: Scalar>(
    d: &ScaledDataset<T>,
    hp: &HyperParams<T>,
    plan: &FoldPlan,
    cfg: &SolverConfig<T>,
) -> Result<CvResult<T>> {
    if plan.assignments.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: plan.assignments.len(),
        });
    }
    hp.validate()?;
    let start = Instant::now();
    let mut fold_errors = Vec::with_capacity(plan.k);
    let mut n_sv = Vec::with_capacity(plan.k);
    for f in 0..plan.k {
        let (tr, va) = plan.split(f);
        if tr.is_empty() || va.is_empty() {
            log::warn!("fold {f} of {} is empty; recorded as failed", plan.k);
            fold_errors.push(None);
            continue;
        }
        let model = match train(&d.subset(&tr), hp, cfg) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("fold {f} with {}: {e}", describe(hp));
                fold_errors.push(None);
                continue;
            }
        };
        n_sv.push(model.n_support());
        if !model.meta.converged {
            fold_errors.push(None);
            continue;
        }
        let valid = d.subset(&va);
        let pred = model.predict_batch_scaled(&valid.features)?;
        fold_errors.push(Some(l2_error(&pred, &valid.targets)?));
    }
    let ok: Vec<T> = fold_errors.iter().flatten().copied().collect();
    let mean_error = if ok.is_empty() {
        None
    } else {
        Some(ok.iter().copied().sum::<T>() / T::from_usize_lossy(ok.len()))
    };
    let n_support_mean = if n_sv.is_empty() {
        T::zero()
    } else {
        T::from_usize_lossy(n_sv.iter().sum::<usize>()) / T::from_usize_lossy(n_sv.len())
    };
    Ok(CvResult {
        params: hp.clone(),
        mean_error_physical: mean_error.map(|e| e * d.scaler.velocity.step),
        mean_error,
        converged_folds: ok.len(),
        fold_errors,
        n_support_mean,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Axis values of an RBF grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub gammas: Vec<T>,
    pub cs: Vec<T>,
    pub epsilons: Vec<T>,
}

impl<T: Scalar> Default for Grid<T> {
    fn default() -> Self {
        Self {
            gammas: [0.05, 0.1, 0.2, 0.3, 0.5].map(T::lit).to_vec(),
            cs: [0.25, 0.5, 0.75, 1.0, 2.0].map(T::lit).to_vec(),
            epsilons: [0.001, 0.005, 0.01, 0.05].map(T::lit).to_vec(),
        }
    }
}

impl<T: Scalar> Grid<T> {
    /// 3×3×2 subset of the default axes around its low-γ, low-ε corner,
    /// for single-core runs where the full grid is too slow.
    pub fn reduced() -> Self {
        Self {
            gammas: [0.05, 0.1, 0.2].map(T::lit).to_vec(),
            cs: [0.5, 1.0, 2.0].map(T::lit).to_vec(),
            epsilons: [0.001, 0.01].map(T::lit).to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("gamma", &self.gammas),
            ("C", &self.cs),
            ("epsilon", &self.epsilons),
        ] {
            if axis.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} axis is empty")));
            }
        }
        for hp in self.cells() {
            hp.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gammas.len() * self.cs.len() * self.epsilons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every tuple, γ slowest and ε fastest.
    pub fn cells(&self) -> Vec<HyperParams<T>> {
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.gammas {
            for &c in &self.cs {
                for &e in &self.epsilons {
                    out.push(HyperParams::rbf(g, c, e));
                }
            }
        }
        out
    }
}

/// Full result of a grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable<T> {
    pub grid: Grid<T>,
    pub plan: FoldPlan,
    /// One entry per grid cell, in [`Grid::cells`] order.
    pub results: Vec<CvResult<T>>,
    /// Index of the best cell, if any cell produced an error.
    pub best: Option<usize>,
}

fn gamma_of<T: Scalar>(hp: &HyperParams<T>) -> T {
    match &hp.kernel {
        crate::kernel::Kernel::Rbf { gamma } => *gamma,
        _ => T::nan(),
    }
}

/// Argmin of the mean error with ties to smaller γ, then C, then ε. Cells
/// with failed folds only compete if no cell is complete.
pub fn best_index<T: Scalar>(results: &[CvResult<T>]) -> Option<usize> {
    let key = |r: &CvResult<T>| {
        (
            r.mean_error.unwrap_or(T::nan()),
            gamma_of(&r.params),
            r.params.c,
            r.params.epsilon,
        )
    };
    let pick = |complete_only: bool| {
        let mut best: Option<usize> = None;
        for (i, r) in results.iter().enumerate() {
            if r.mean_error.is_none() || (complete_only && !r.is_complete()) {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (a, o) = (key(r), key(&results[b]));
                    a.partial_cmp(&o) == Some(std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    };
    pick(true).or_else(|| pick(false))
}

/// Tuning knobs of a grid search that do not affect its result.
pub struct SearchOptions<'a> {
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    /// Called with `(finished cells, total cells)` after each cell.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

impl Default for SearchOptions<'_> {
    fn default() -> Self {
        Self {
            jobs: None,
            progress: None,
        }
    }
}

/// Cross-validate every grid cell on a bounded worker pool. The table order
/// and contents do not depend on the number of workers.
pub fn grid_search<T: Scalar>(
    d: &ScaledDataset<T>,
    grid: &Grid<T>,
    k: usize,
    strategy: FoldStrategy,
    seed: u64,
    cfg: &SolverConfig<T>,
    opts: &SearchOptions<'_>,
) -> Result<ErrorTable<T>> {
    grid.validate()?;
    let plan = make_folds(d, k, strategy, seed)?;
    let cells = grid.cells();
    let total = cells.len();
    let done = AtomicUsize::new(0);
    let run = || {
        cells
            .par_iter()
            .map(|hp| {
                let r = cross_validate(d, hp, &plan, cfg);
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                if let Some(p) = opts.progress {
                    p(n, total);
                }
                r
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = match opts.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {j} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let best = best_index(&results);
    Ok(ErrorTable {
        grid: grid.clone(),
        plan,
        results,
        best,
    })
}

fn fmt_num<T: Scalar>(x: T) -> String {
    format!("{}", x.to_f64_lossy())
}

impl<T: Scalar> ErrorTable<T> {
    pub fn best_result(&self) -> Option<&CvResult<T>> {
        self.best.map(|i| &self.results[i])
    }

    /// CSV with one row per cell. Failed folds appear as `failed`, a cell
    /// with no successful fold has `nan` mean. With `timing = false` the
    /// wall-time column holds `NA`, making the output reproducible byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = String::from("gamma,C,epsilon,fold_errors,mean_error,mean_error_mps,n_sv_mean,converged_folds,wall_time_s\n");
        for r in &self.results {
            let folds: Vec<String> = r
                .fold_errors
                .iter()
                .map(|e| e.map(fmt_num).unwrap_or_else(|| "failed".into()))
                .collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                fmt_num(gamma_of(&r.params)),
                fmt_num(r.params.c),
                fmt_num(r.params.epsilon),
                folds.join(";"),
                r.mean_error.map(fmt_num).unwrap_or_else(|| "nan".into()),
                r.mean_error_physical
                    .map(fmt_num)
                    .unwrap_or_else(|| "nan".into()),
                fmt_num(r.n_support_mean),
                r.converged_folds,
                if timing {
                    format!("{:.3}", r.wall_time_s)
                } else {
                    "NA".into()
                }
            );
        }
        s
    }
}
