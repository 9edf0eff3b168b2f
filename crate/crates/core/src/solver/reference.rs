//! Dense projected-gradient solver for small instances, used as an oracle.
//!
//! Works on the split form with `α, α* ∈ [0, C]^n` and `Σα − Σα* = 0`, which
//! is smooth, so plain projected gradient applies. Accelerated steps with
//! function-value restarts; the projection onto the box-plus-hyperplane set
//! is found by bisection on the hyperplane multiplier.

use super::{check_problem, DualSolution, SolverConfig};
use crate::error::{Error, Result};
use crate::features::Features;
use crate::kernel::{gram_matrix, GramMatrix, Kernel};
use crate::scalar::Scalar;

/// Largest instance accepted by [`solve_qp_reference`].
pub const REFERENCE_LIMIT: usize = 200;

const MAX_STEPS: usize = 2_000_000;

struct Split<'a, T> {
    gram: &'a GramMatrix<T>,
    y: &'a [T],
    c: T,
    eps: T,
}

impl<T: Scalar> Split<'_, T> {
    fn n(&self) -> usize {
        self.y.len()
    }

    /// `y − K(α − α*)`
    fn residual(&self, z: &[T]) -> Vec<T> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let row = self.gram.row(i);
                let mut s = self.y[i];
                for j in 0..n {
                    s -= row[j] * (z[j] - z[n + j]);
                }
                s
            })
            .collect()
    }

    fn value(&self, z: &[T]) -> T {
        let n = self.n();
        let r = self.residual(z);
        let mut v = T::zero();
        for i in 0..n {
            let b = z[i] - z[n + i];
            // −½βKβ + yβ = ½ β·(y + r)
            v += b * (self.y[i] + r[i]) / T::lit(2.0) - self.eps * (z[i] + z[n + i]);
        }
        v
    }

    fn gradient(&self, z: &[T]) -> Vec<T> {
        let n = self.n();
        let r = self.residual(z);
        let mut g = vec![T::zero(); 2 * n];
        for i in 0..n {
            g[i] = r[i] - self.eps;
            g[n + i] = -r[i] - self.eps;
        }
        g
    }

    fn clip(&self, v: T) -> T {
        v.max(T::zero()).min(self.c)
    }

    fn imbalance(&self, v: &[T], mu: T) -> T {
        let n = self.n();
        let mut h = T::zero();
        for i in 0..n {
            h += self.clip(v[i] - mu) - self.clip(v[n + i] + mu);
        }
        h
    }

    /// Euclidean projection onto `{0 ≤ z ≤ C, Σα = Σα*}`.
    fn project(&self, v: &[T]) -> Vec<T> {
        let n = self.n();
        let span = v.iter().fold(T::zero(), |m, x| m.max(x.abs())) + self.c + T::one();
        let (mut lo, mut hi) = (-span, span);
        let (mut h_lo, mut h_hi) = (self.imbalance(v, lo), self.imbalance(v, hi));
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            let h = self.imbalance(v, mid);
            if h > T::zero() {
                lo = mid;
                h_lo = h;
            } else {
                hi = mid;
                h_hi = h;
            }
        }
        // h is linear between the bracket ends once they are this close
        let mu = if h_lo > h_hi {
            lo + (hi - lo) * h_lo / (h_lo - h_hi)
        } else {
            lo
        };
        let mut z = vec![T::zero(); 2 * n];
        for i in 0..n {
            z[i] = self.clip(v[i] - mu);
            z[n + i] = self.clip(v[n + i] + mu);
        }
        z
    }

    fn ascend(&self, z: &[T], step: T) -> Vec<T> {
        let g = self.gradient(z);
        let moved: Vec<T> = z.iter().zip(&g).map(|(a, b)| *a + step * *b).collect();
        self.project(&moved)
    }

    /// Bias from the split-form conditions: free `α_i` give `r_i − ε`, free
    /// `α*_i` give `r_i + ε`; without free variables, the midpoint of the
    /// interval the bound variables allow.
    fn bias(&self, z: &[T]) -> T {
        let n = self.n();
        let r = self.residual(z);
        let (mut sum, mut cnt) = (T::zero(), 0usize);
        let mut lower = T::neg_infinity();
        let mut upper = T::infinity();
        for i in 0..n {
            let (a, s) = (z[i], z[n + i]);
            if a > T::zero() && a < self.c {
                sum += r[i] - self.eps;
                cnt += 1;
            }
            if s > T::zero() && s < self.c {
                sum += r[i] + self.eps;
                cnt += 1;
            }
            if a == T::zero() {
                lower = lower.max(r[i] - self.eps);
            } else if a == self.c {
                upper = upper.min(r[i] - self.eps);
            }
            if s == T::zero() {
                upper = upper.min(r[i] + self.eps);
            } else if s == self.c {
                lower = lower.max(r[i] + self.eps);
            }
        }
        if cnt > 0 {
            return sum / T::from_usize_lossy(cnt);
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => (lower + upper) / T::lit(2.0),
            (true, false) => lower,
            (false, true) => upper,
            _ => T::zero(),
        }
    }
}

/// Solve the same dual as [`super::solve_epsilon_svr`] with a dense,
/// unrelated method. Limited to [`REFERENCE_LIMIT`] points.
pub fn solve_qp_reference<T: Scalar>(
    pts: &Features<T>,
    y: &[T],
    k: &Kernel<T>,
    cfg: &SolverConfig<T>,
) -> Result<DualSolution<T>> {
    if pts.len() > REFERENCE_LIMIT {
        return Err(Error::TooLarge {
            n: pts.len(),
            limit: REFERENCE_LIMIT,
        });
    }
    check_problem(pts, y, k, cfg)?;
    let gram = gram_matrix(k, pts)?;
    let n = pts.len();
    let prob = Split {
        gram: &gram,
        y,
        c: cfg.c,
        eps: cfg.epsilon,
    };

    // Lipschitz constant of the split-form gradient: 2·λmax(K) ≤ 2·max row sum.
    let row_sum = (0..n)
        .map(|i| gram.row(i).iter().fold(T::zero(), |s, v| s + v.abs()))
        .fold(T::zero(), T::max);
    let lip = (T::lit(2.0) * row_sum).max(T::epsilon());
    let step = T::one() / lip;
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));

    let mut z = vec![T::zero(); 2 * n];
    let mut z_val = prob.value(&z);
    let mut look = z.clone();
    let mut momentum = T::one();
    let mut converged = false;
    let mut steps = 0;
    let mut trace = Vec::new();

    while steps < MAX_STEPS {
        steps += 1;
        let next = prob.ascend(&look, step);
        let next_val = prob.value(&next);
        if next_val < z_val && momentum > T::one() {
            // restart: drop momentum and retry from the current iterate
            momentum = T::one();
            look = z.clone();
            continue;
        }
        let m_next =
            (T::one() + (T::one() + T::lit(4.0) * momentum * momentum).sqrt()) / T::lit(2.0);
        let w = (momentum - T::one()) / m_next;
        look = next
            .iter()
            .zip(&z)
            .map(|(a, b)| *a + w * (*a - *b))
            .collect();
        z = next;
        z_val = next_val;
        momentum = m_next;
        if cfg.record_trace {
            trace.push(z_val);
        }

        // stationarity: gradient mapping at z
        let probe = prob.ascend(&z, step);
        let gm = probe
            .iter()
            .zip(&z)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
            * lip;
        if gm <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("reference solver hit {MAX_STEPS} steps without reaching {tol}");
    }

    let beta: Vec<T> = (0..n).map(|i| z[i] - z[n + i]).collect();
    let mut sol = DualSolution {
        bias: prob.bias(&z),
        objective: prob.value(&z),
        beta,
        iterations: steps,
        converged,
        violation: T::zero(),
        trace,
    };
    sol.violation = super::kkt_violation(&sol, pts, y, k, cfg);
    Ok(sol)
}
