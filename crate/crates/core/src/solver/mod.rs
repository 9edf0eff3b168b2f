//! ε-SVR dual quadratic program.
//!
//! With one net coefficient `β_i = α_i − α_i*` per training point the dual is
//!
//! ```text
//! maximize   −½ Σ_ij β_i β_j K_ij − ε Σ_i |β_i| + Σ_i y_i β_i
//! subject to Σ_i β_i = 0,  −C ≤ β_i ≤ C
//! ```
//!
//! and the regressor is `f(x) = Σ_i β_i K(x_i, x) + b`. `C` plays the role of
//! the inverse of the regularization weight on `‖w‖²` in the primal risk.

mod reference;
mod smo;

pub use reference::{solve_qp_reference, REFERENCE_LIMIT};
pub use smo::solve_epsilon_svr;

use crate::error::{Error, Result};
use crate::features::Features;
use crate::kernel::Kernel;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T> {
    /// Box bound on each |β_i|.
    pub c: T,
    /// Half-width of the insensitive tube, in target units.
    pub epsilon: T,
    /// Stop once the maximal KKT violation drops to this.
    pub tolerance: T,
    /// Pair updates before giving up with `converged = false`.
    pub max_iterations: usize,
    /// Kernel row cache budget.
    pub cache_bytes: usize,
    /// Record the dual objective after every update (costs O(n) per step).
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            c: T::one(),
            epsilon: T::lit(0.001),
            tolerance: T::lit(1e-3),
            max_iterations: 10_000_000,
            cache_bytes: 256 << 20,
            record_trace: false,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<T> {
    /// Net dual coefficient per training point.
    pub beta: Vec<T>,
    pub bias: T,
    /// Dual objective at `beta`.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    /// Maximal KKT violation when the solver stopped.
    pub violation: T,
    /// Objective after each update, starting from β = 0; empty unless requested.
    pub trace: Vec<T>,
}

impl<T: Scalar> DualSolution<T> {
    pub fn n_support(&self) -> usize {
        self.beta.iter().filter(|b| **b != T::zero()).count()
    }

    /// Decision function on an arbitrary point.
    pub fn predict(&self, pts: &Features<T>, k: &Kernel<T>, x: &[T]) -> T {
        let mut s = self.bias;
        for (b, xi) in self.beta.iter().zip(pts.rows()) {
            if *b != T::zero() {
                s += *b * k.eval_unchecked(xi, x);
            }
        }
        s
    }
}

pub(crate) fn check_problem<T: Scalar>(
    pts: &Features<T>,
    y: &[T],
    k: &Kernel<T>,
    cfg: &SolverConfig<T>,
) -> Result<()> {
    if pts.is_empty() || y.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if pts.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: pts.len(),
            got: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Dataset(format!("non-finite target at index {i}")));
    }
    if let Some(d) = k.required_dim() {
        if d != pts.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: pts.dim(),
            });
        }
    }
    k.validate()?;
    cfg.validate()
}

/// Offsets turning the gradient into the two directional rates:
/// `up = G − up_off`, `down = G + down_off`. A coefficient at `+C` cannot
/// grow and one at `−C` cannot shrink, which the infinite offsets encode.
#[inline]
pub(crate) fn rate_offsets<T: Scalar>(beta: T, c: T, eps: T) -> (T, T) {
    let up = if beta >= c {
        T::infinity()
    } else if beta >= T::zero() {
        eps
    } else {
        -eps
    };
    let down = if beta <= -c {
        T::infinity()
    } else if beta > T::zero() {
        -eps
    } else {
        eps
    };
    (up, down)
}

/// `(max up-rate over β_i < C, min down-rate over β_i > −C)`, with the
/// attaining indices; ties go to the lowest index.
pub(crate) fn extreme_rates<T: Scalar>(
    beta: &[T],
    grad: &[T],
    c: T,
    eps: T,
) -> (T, usize, T, usize) {
    let (up_off, down_off): (Vec<T>, Vec<T>) =
        beta.iter().map(|&b| rate_offsets(b, c, eps)).unzip();
    extreme_rates_from_offsets(grad, &up_off, &down_off)
}

/// Hot loop of the pair selection. Independent lanes break the compare
/// dependency chain; lane `k % LANES` sees indices in increasing order, so
/// merging by (value, index) equals a single sequential scan.
#[inline]
pub(crate) fn extreme_rates_from_offsets<T: Scalar>(
    grad: &[T],
    up_off: &[T],
    down_off: &[T],
) -> (T, usize, T, usize) {
    const LANES: usize = 8;
    let mut up = [T::neg_infinity(); LANES];
    let mut up_at = [usize::MAX; LANES];
    let mut down = [T::infinity(); LANES];
    let mut down_at = [usize::MAX; LANES];
    let n = grad.len();
    let whole = n / LANES * LANES;
    let chunks = grad[..whole]
        .chunks_exact(LANES)
        .zip(up_off[..whole].chunks_exact(LANES))
        .zip(down_off[..whole].chunks_exact(LANES));
    for (ci, ((gs, us), ds)) in chunks.enumerate() {
        for l in 0..LANES {
            let ru = gs[l] - us[l];
            let rd = gs[l] + ds[l];
            if ru > up[l] {
                up[l] = ru;
                up_at[l] = ci * LANES + l;
            }
            if rd < down[l] {
                down[l] = rd;
                down_at[l] = ci * LANES + l;
            }
        }
    }
    for k in whole..n {
        let l = k - whole;
        let ru = grad[k] - up_off[k];
        let rd = grad[k] + down_off[k];
        if ru > up[l] {
            up[l] = ru;
            up_at[l] = k;
        }
        if rd < down[l] {
            down[l] = rd;
            down_at[l] = k;
        }
    }
    let (mut u, mut ui, mut d, mut di) = (T::neg_infinity(), usize::MAX, T::infinity(), usize::MAX);
    for l in 0..LANES {
        if up_at[l] != usize::MAX && (up[l] > u || (up[l] == u && up_at[l] < ui)) {
            u = up[l];
            ui = up_at[l];
        }
        if down_at[l] != usize::MAX && (down[l] < d || (down[l] == d && down_at[l] < di)) {
            d = down[l];
            di = down_at[l];
        }
    }
    (u, ui, d, di)
}

/// Bias from the gradient `G = y − Kβ`: the mean of `G_i − ε·sign(β_i)` over
/// free points, else the midpoint of the feasible interval.
pub(crate) fn bias_from_gradient<T: Scalar>(beta: &[T], grad: &[T], c: T, eps: T) -> T {
    let mut sum = T::zero();
    let mut n_free = 0usize;
    for (&b, &g) in beta.iter().zip(grad) {
        if b != T::zero() && b.abs() < c {
            sum += if b > T::zero() { g - eps } else { g + eps };
            n_free += 1;
        }
    }
    if n_free > 0 {
        return sum / T::from_usize_lossy(n_free);
    }
    let (up, _, down, _) = extreme_rates(beta, grad, c, eps);
    match (up.is_finite(), down.is_finite()) {
        (true, true) => (up + down) / T::lit(2.0),
        (true, false) => up,
        (false, true) => down,
        (false, false) => T::zero(),
    }
}

/// `½ Σ β_i (y_i + G_i) − ε Σ |β_i|`, which equals the dual objective when `G = y − Kβ`.
pub(crate) fn objective_from_gradient<T: Scalar>(beta: &[T], y: &[T], grad: &[T], eps: T) -> T {
    let mut quad = T::zero();
    let mut l1 = T::zero();
    for ((&b, &yi), &g) in beta.iter().zip(y).zip(grad) {
        quad += b * (yi + g);
        l1 += b.abs();
    }
    quad / T::lit(2.0) - eps * l1
}

/// Maximal violation of the ε-SVR optimality conditions at `sol.beta`;
/// zero at an exact optimum.
pub fn kkt_violation<T: Scalar>(
    sol: &DualSolution<T>,
    pts: &Features<T>,
    y: &[T],
    k: &Kernel<T>,
    cfg: &SolverConfig<T>,
) -> T {
    let n = pts.len();
    let grad: Vec<T> = (0..n)
        .map(|i| {
            let mut s = y[i];
            for (j, &b) in sol.beta.iter().enumerate() {
                if b != T::zero() {
                    s -= b * k.eval_unchecked(pts.row(i), pts.row(j));
                }
            }
            s
        })
        .collect();
    let (up, _, down, _) = extreme_rates(&sol.beta, &grad, cfg.c, cfg.epsilon);
    if up.is_finite() && down.is_finite() {
        (up - down).max(T::zero())
    } else {
        T::zero()
    }
}
