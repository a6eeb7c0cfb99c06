//! Geometric budget ladder for threshold-style dynamic programming.
//!
//! Instead of minimizing cost directly, the DP asks "is there a structured
//! tour of cost at most s?" for s drawn from a short geometric ladder.
//! Every partial cost is rounded up onto the ladder, so table keys stay
//! small while each rounding loses at most a factor of the ladder base.

use crate::error::{Error, Result};

/// The value ladder `{0, 1, base, base^2, ...}` up to a cap that dominates
/// every feasible tour cost on the grid.
#[derive(Debug, Clone)]
pub struct BudgetLadder {
    pub base: f64,
    pub cap: f64,
    pub values: Vec<f64>,
}

impl BudgetLadder {
    /// Build the ladder for an instance with `n` original points, target
    /// `k`, dimension `d` and grid bound `l`. The base is
    /// `1 + epsilon / log2(n)`; the top value is the first power at least
    /// `(1 + epsilon) * d * k^(1 - 1/d) * l`.
    pub fn new(epsilon: f64, n: usize, d: usize, k: usize, l: i64) -> Result<Self> {
        if n < 2 || k < 1 || d < 2 || l < 1 {
            return Err(Error::InvalidArgument(format!(
                "ladder needs n >= 2, k >= 1, d >= 2, l >= 1; got n={n} k={k} d={d} l={l}"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let base = 1.0 + epsilon / (n as f64).log2();
        let df = d as f64;
        let cap = (1.0 + epsilon) * df * (k as f64).powf(1.0 - 1.0 / df) * l as f64;
        let mut values = vec![0.0, 1.0];
        while *values.last().unwrap() < cap {
            let next = values.last().unwrap() * base;
            values.push(next);
        }
        Ok(BudgetLadder { base, cap, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the smallest ladder value at least `x`, or `None` when `x`
    /// exceeds the top of the ladder (such a cost can never be part of a
    /// feasible answer, so callers prune it).
    pub fn round_up_index(&self, x: f64) -> Option<usize> {
        if x <= 0.0 {
            return Some(0);
        }
        let i = self.values.partition_point(|&v| v < x);
        (i < self.values.len()).then_some(i)
    }

    /// Smallest ladder value at least `x`, or infinity past the top.
    pub fn round_up(&self, x: f64) -> f64 {
        match self.round_up_index(x) {
            Some(i) => self.values[i],
            None => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_ladder() {
        let lad = BudgetLadder::new(1.0, 4, 2, 2, 8).unwrap();
        assert!((lad.base - 1.5).abs() < 1e-12);
        assert!((lad.cap - 32.0 * 2f64.sqrt()).abs() < 1e-9); // 45.25...
        assert_eq!(lad.values[0], 0.0);
        assert_eq!(lad.values[1], 1.0);
        assert!((lad.values[2] - 1.5).abs() < 1e-12);
        assert!((lad.values[3] - 2.25).abs() < 1e-12);
        let top = *lad.values.last().unwrap();
        assert!(top >= lad.cap && top / lad.base < lad.cap);
    }

    #[test]
    fn round_up_semantics() {
        let lad = BudgetLadder::new(1.0, 4, 2, 2, 8).unwrap();
        assert_eq!(lad.round_up(0.0), 0.0);
        assert_eq!(lad.round_up(-3.0), 0.0);
        assert_eq!(lad.round_up(0.2), 1.0);
        assert_eq!(lad.round_up(1.0), 1.0);
        assert!((lad.round_up(1.01) - 1.5).abs() < 1e-12);
        assert!((lad.round_up(2.25) - 2.25).abs() < 1e-12);
        assert_eq!(lad.round_up(1e9), f64::INFINITY);
        assert_eq!(lad.round_up_index(1e9), None);
    }

    #[test]
    fn round_up_monotone_and_idempotent() {
        let lad = BudgetLadder::new(0.5, 16, 2, 8, 512).unwrap();
        let mut prev = 0.0;
        let mut x = 0.01;
        while x < lad.cap {
            let r = lad.round_up(x);
            assert!(r >= x && r >= prev, "round-up must be monotone");
            assert_eq!(lad.round_up(r), r, "round-up must be idempotent");
            prev = r;
            x *= 1.37;
        }
    }

    /// Ladder length stays within `8 log2(n)^2 / epsilon` across the
    /// parameter ranges the solver actually uses.
    #[test]
    fn ladder_length_bound() {
        for &epsilon in &[0.25, 0.5, 1.0, 2.0] {
            for &n in &[4usize, 9, 16, 64, 256] {
                for &k in &[2usize, 4, 9] {
                    if k > n {
                        continue;
                    }
                    let l = crate::geometry::next_pow2(
                        2.0 * n as f64 * 2f64.sqrt() / epsilon,
                    );
                    let lad = BudgetLadder::new(epsilon, n, 2, k, l).unwrap();
                    let log2n = (n as f64).log2();
                    let bound = 8.0 * log2n * log2n / epsilon;
                    assert!(
                        (lad.len() as f64) <= bound,
                        "n={n} k={k} eps={epsilon}: {} > {bound}",
                        lad.len()
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(BudgetLadder::new(1.0, 1, 2, 1, 8).is_err());
        assert!(BudgetLadder::new(0.0, 4, 2, 2, 8).is_err());
    }
}
