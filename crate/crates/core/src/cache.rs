//! Least-recently-used cache of kernel rows.

use std::sync::{Arc, Mutex};

use crate::features::Features;
use crate::kernel::Kernel;
use crate::scalar::Scalar;

const NIL: usize = usize::MAX;

struct Lru<T> {
    rows: Vec<Option<Arc<[T]>>>,
    prev: Vec<usize>,
    next: Vec<usize>,
    head: usize,
    tail: usize,
    len: usize,
    capacity: usize,
    hits: u64,
    misses: u64,
}

impl<T> Lru<T> {
    fn unlink(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p] = n;
        }
        if n == NIL {
            self.tail = p;
        } else {
            self.prev[n] = p;
        }
        self.prev[i] = NIL;
        self.next[i] = NIL;
    }

    fn push_front(&mut self, i: usize) {
        self.prev[i] = NIL;
        self.next[i] = self.head;
        if self.head != NIL {
            self.prev[self.head] = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }
}

/// Kernel rows over a fixed point set, computed on demand and kept up to a
/// byte budget. Safe to share between threads: lookups and insertions take a
/// short lock, row computation happens outside it.
pub struct KernelCache<'a, T> {
    points: &'a Features<T>,
    kernel: &'a Kernel<T>,
    diag: Vec<T>,
    state: Mutex<Lru<T>>,
}

impl<'a, T: Scalar> KernelCache<'a, T> {
    pub fn new(points: &'a Features<T>, kernel: &'a Kernel<T>, budget_bytes: usize) -> Self {
        let n = points.len();
        let row_bytes = (n * std::mem::size_of::<T>()).max(1);
        let capacity = (budget_bytes / row_bytes).clamp(2, n.max(2));
        let diag = (0..n)
            .map(|i| kernel.eval_unchecked(points.row(i), points.row(i)))
            .collect();
        Self {
            points,
            kernel,
            diag,
            state: Mutex::new(Lru {
                rows: vec![None; n],
                prev: vec![NIL; n],
                next: vec![NIL; n],
                head: NIL,
                tail: NIL,
                len: 0,
                capacity,
                hits: 0,
                misses: 0,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn diag(&self, i: usize) -> T {
        self.diag[i]
    }

    /// Maximum number of rows held at once.
    pub fn capacity(&self) -> usize {
        self.state.lock().expect("cache lock").capacity
    }

    /// (hits, misses) since construction.
    pub fn stats(&self) -> (u64, u64) {
        let s = self.state.lock().expect("cache lock");
        (s.hits, s.misses)
    }

    fn compute(&self, i: usize) -> Arc<[T]> {
        let xi = self.points.row(i);
        self.points
            .rows()
            .map(|xj| self.kernel.eval_unchecked(xi, xj))
            .collect()
    }

    pub fn row(&self, i: usize) -> Arc<[T]> {
        {
            let mut s = self.state.lock().expect("cache lock");
            if let Some(r) = s.rows[i].clone() {
                s.hits += 1;
                s.unlink(i);
                s.push_front(i);
                return r;
            }
            s.misses += 1;
        }
        let row = self.compute(i);
        let mut s = self.state.lock().expect("cache lock");
        if s.rows[i].is_none() {
            if s.len >= s.capacity {
                let victim = s.tail;
                s.unlink(victim);
                s.rows[victim] = None;
                s.len -= 1;
            }
            s.rows[i] = Some(row.clone());
            s.push_front(i);
            s.len += 1;
        }
        row
    }
}
