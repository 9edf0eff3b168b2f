//! Sequential minimal optimization on the β-form dual.
//!
//! Each step moves one pair `(β_i, β_j)` along `e_i − e_j`, which keeps
//! `Σβ = 0`. The pair is the maximal KKT violator: `i` maximizes the rate of
//! increase of the objective when `β_i` grows, `j` minimizes it when `β_j`
//! shrinks (ties to the lowest index). Along the chosen line the objective is
//! a concave piecewise quadratic with kinks where either coefficient crosses
//! zero, and it is maximized exactly.

use super::{
    bias_from_gradient, check_problem, extreme_rates_from_offsets, objective_from_gradient,
    rate_offsets, DualSolution, SolverConfig,
};
use crate::cache::KernelCache;
use crate::error::Result;
use crate::features::Features;
use crate::kernel::Kernel;
use crate::scalar::Scalar;

/// Exact maximizer over `t ∈ [0, hi]` of
/// `t·Δ − ½ η t² − ε (|b_i + t| + |b_j − t|)`.
fn step_length<T: Scalar>(delta: T, eta: T, bi: T, bj: T, hi: T, eps: T) -> T {
    let mut breaks = [hi; 3];
    let mut nb = 0;
    if bi < T::zero() && -bi < hi {
        breaks[nb] = -bi;
        nb += 1;
    }
    if bj > T::zero() && bj < hi {
        breaks[nb] = bj;
        nb += 1;
    }
    if nb == 2 && breaks[1] < breaks[0] {
        breaks.swap(0, 1);
    }
    breaks[nb] = hi;
    let curved = eta > T::lit(1e-12);
    let two = T::lit(2.0);
    let mut start = T::zero();
    for &end in &breaks[..=nb] {
        if end <= start {
            continue;
        }
        let mid = (start + end) / two;
        let si = if bi + mid > T::zero() {
            T::one()
        } else {
            -T::one()
        };
        let sj = if bj - mid > T::zero() {
            T::one()
        } else {
            -T::one()
        };
        let slope = delta - eps * (si - sj);
        if curved {
            let t = slope / eta;
            if t <= start {
                return start;
            }
            if t < end {
                return t;
            }
        } else if slope <= T::zero() {
            return start;
        }
        start = end;
    }
    hi
}

/// Solve the ε-SVR dual by SMO with maximal-violating-pair selection.
///
/// Stops when the violation is within `cfg.tolerance` or after
/// `cfg.max_iterations` pair updates; the result is bit-for-bit reproducible.
pub fn solve_epsilon_svr<T: Scalar>(
    pts: &Features<T>,
    y: &[T],
    k: &Kernel<T>,
    cfg: &SolverConfig<T>,
) -> Result<DualSolution<T>> {
    check_problem(pts, y, k, cfg)?;
    let n = pts.len();
    let c = cfg.c;
    let eps = cfg.epsilon;
    let cache = KernelCache::new(pts, k, cfg.cache_bytes);

    let mut beta = vec![T::zero(); n];
    let mut grad = y.to_vec();
    let (start_up, start_down) = rate_offsets(T::zero(), c, eps);
    let mut up_off = vec![start_up; n];
    let mut down_off = vec![start_down; n];
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(T::zero());
    }

    let mut iterations = 0usize;
    let mut converged = false;
    let violation = loop {
        let (up, i, down, j) = extreme_rates_from_offsets(&grad, &up_off, &down_off);
        let gap = if i == usize::MAX || j == usize::MAX {
            T::zero()
        } else {
            up - down
        };
        if gap <= cfg.tolerance {
            converged = true;
            break gap.max(T::zero());
        }
        if iterations >= cfg.max_iterations {
            break gap;
        }

        let (bi, bj) = (beta[i], beta[j]);
        let row_i = cache.row(i);
        let row_j = cache.row(j);
        let eta = (cache.diag(i) + cache.diag(j) - row_i[j] - row_i[j]).max(T::zero());
        let to_upper = c - bi;
        let to_lower = bj + c;
        let hi = to_upper.min(to_lower);
        let t = step_length(grad[i] - grad[j], eta, bi, bj, hi, eps);

        let new_bi = if t == to_upper {
            c
        } else if t == -bi {
            T::zero()
        } else {
            (bi + t).min(c)
        };
        let new_bj = if t == to_lower {
            -c
        } else if t == bj {
            T::zero()
        } else {
            (bj - t).max(-c)
        };
        let di = new_bi - bi;
        let dj = new_bj - bj;
        beta[i] = new_bi;
        beta[j] = new_bj;
        (up_off[i], down_off[i]) = rate_offsets(new_bi, c, eps);
        (up_off[j], down_off[j]) = rate_offsets(new_bj, c, eps);
        for ((g, &ki), &kj) in grad.iter_mut().zip(row_i.iter()).zip(row_j.iter()) {
            *g -= di * ki + dj * kj;
        }
        iterations += 1;

        debug_assert!(beta[i].abs() <= c && beta[j].abs() <= c);
        debug_assert!(
            iterations % 4096 != 0 || {
                let s: T = beta.iter().copied().sum();
                // snapping to the box rounds each pair update by about one ulp
                s.abs()
                    <= T::lit(1e-9).max(T::epsilon() * T::lit(16.0)) * T::from_usize_lossy(n) * c
            },
            "equality constraint drifted"
        );
        if cfg.record_trace {
            trace.push(objective_from_gradient(&beta, y, &grad, eps));
        }
    };

    if !converged {
        log::warn!(
            "SMO stopped after {iterations} updates with KKT violation {violation} (tolerance {})",
            cfg.tolerance
        );
    }
    let (hits, misses) = cache.stats();
    log::debug!("SMO: n={n} iterations={iterations} cache hits={hits} misses={misses}");

    Ok(DualSolution {
        bias: bias_from_gradient(&beta, &grad, c, eps),
        objective: objective_from_gradient(&beta, y, &grad, eps),
        beta,
        iterations,
        converged,
        violation,
        trace,
    })
}
