//! Calibrated localized CP.
//!
//! With `H_ji = H(X_j, X_i)`, `R_i = sum_j H_ji`, `A_i = sum_{j: s_j < s_i} H_ji`
//! and `k_i = H(x, X_i)`, the rank statistic of calibration point `i` at a
//! candidate test score `s` is
//!
//! ```text
//! T_i(s) = (A_i + k_i 1{s < s_i}) / (R_i + k_i)
//! T_t(s) = sum_{j: s_j < s} k_j / (sum_j k_j + H(x, x))
//! ```
//!
//! `A` and `R` depend only on the calibration set and are computed once.
//! Per test point each `T_i` takes one of two values, switching once as the
//! sweep passes `s_i`, and `T_t` never decreases along the sweep, so all
//! `2m + 1` candidates are scored with two sorted counters in `O(n log n)`.
//!
//! Only the kernel's shape enters: every ratio above is invariant to the
//! normalizing constant.

use rand::Rng;

use super::{check_alpha, draw_u, Calibration, MethodOutput};
use crate::error::{LcpError, Result};
use crate::kernel::Kernel;

/// Two rank statistics closer than this are treated as tied.
pub const T_TOL: f64 = 1e-12;

/// Per-calibration-set sums `R_i` and `A_i` for one kernel.
#[derive(Debug, Clone)]
pub struct CalLcpCache {
    kernel: Kernel,
    row_sum: Vec<f64>,
    below_sum: Vec<f64>,
    /// Calibration indices ordered by score rank, with `group[r]..group[r+1]`
    /// holding the points of rank `r`.
    by_rank: Vec<usize>,
    group: Vec<usize>,
}

impl CalLcpCache {
    pub fn new(cal: &Calibration, kernel: &Kernel) -> Result<Self> {
        let data = cal.data();
        if kernel.dim() != data.dim() {
            return Err(LcpError::DimensionMismatch {
                expected: data.dim(),
                got: kernel.dim(),
            });
        }
        let n = cal.len();
        let s = cal.scores();
        let mut row_sum = vec![0.0; n];
        let mut below_sum = vec![0.0; n];
        for i in 0..n {
            let xi = data.row(i);
            let (mut r, mut a) = (0.0, 0.0);
            for j in 0..n {
                let h = kernel.shape(data.row(j), xi);
                r += h;
                if s[j] < s[i] {
                    a += h;
                }
            }
            row_sum[i] = r;
            below_sum[i] = a;
        }
        let grid = cal.grid();
        let mut by_rank: Vec<usize> = (0..n).collect();
        by_rank.sort_by_key(|&i| grid.rank(i));
        let mut group = vec![0; grid.unique() + 1];
        for i in 0..n {
            group[grid.rank(i) + 1] += 1;
        }
        for r in 0..grid.unique() {
            group[r + 1] += group[r];
        }
        Ok(Self {
            kernel: kernel.clone(),
            row_sum,
            below_sum,
            by_rank,
            group,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// The calLCP p-value at every candidate position for test point `x`.
    pub fn profile(&self, cal: &Calibration, x: &[f64], u: f64) -> Result<Vec<f64>> {
        let data = cal.data();
        if x.len() != data.dim() {
            return Err(LcpError::DimensionMismatch {
                expected: data.dim(),
                got: x.len(),
            });
        }
        let n = cal.len();
        let grid = cal.grid();
        let m = grid.unique();

        let k: Vec<f64> = data.rows().map(|xi| self.kernel.shape(x, xi)).collect();
        let self_weight = self.kernel.shape(x, x);
        let k_total: f64 = k.iter().sum();
        let t_denom = k_total + self_weight;

        let mut above_val = Vec::with_capacity(n);
        let mut below_val = Vec::with_capacity(n);
        for i in 0..n {
            let d = self.row_sum[i] + k[i];
            above_val.push((self.below_sum[i] + k[i]) / d);
            below_val.push(self.below_sum[i] / d);
        }
        let mut above = SweepCounter::new(&above_val, true);
        let mut below = SweepCounter::new(&below_val, false);

        // the sweep visits nondecreasing `t`
        let denom = (n + 1) as f64;
        let pvalue = |above: &mut SweepCounter, below: &mut SweepCounter, t: f64| {
            above.advance(t);
            below.advance(t);
            let greater = above.greater + below.greater;
            let tied = above.tied + below.tied;
            (greater as f64 + u * (tied + 1) as f64) / denom
        };

        let mut out = Vec::with_capacity(2 * m + 1);
        let mut k_below = 0.0;
        for r in 0..m {
            let group = &self.by_rank[self.group[r]..self.group[r + 1]];
            let t = k_below / t_denom;
            // gap below this score: these points still sit above s
            out.push(pvalue(&mut above, &mut below, t));
            for &i in group {
                above.set(i, false);
                below.set(i, true);
            }
            // s equal to this score
            out.push(pvalue(&mut above, &mut below, t));
            k_below += group.iter().map(|&i| k[i]).sum::<f64>();
        }
        out.push(pvalue(&mut above, &mut below, k_below / t_denom));
        Ok(out)
    }

    pub fn predict<R: Rng + ?Sized>(
        &self,
        cal: &Calibration,
        x: &[f64],
        alpha: f64,
        smoothed: bool,
        rng: &mut R,
    ) -> Result<MethodOutput> {
        check_alpha(alpha)?;
        let center = cal.score_function().center(x)?;
        let u = draw_u(smoothed, rng);
        let pvalues = self.profile(cal, x, u)?;
        let mut out = MethodOutput::from_profile(cal, center, alpha, pvalues);
        out.u = smoothed.then_some(u);
        Ok(out)
    }
}

/// calLCP at one test point. Rebuilds the `O(n^2)` calibration sums; use
/// [`CalLcpCache`] (or [`super::Conformal`]) across many test points.
pub fn cal_lcp<R: Rng + ?Sized>(
    cal: &Calibration,
    x: &[f64],
    kernel: &Kernel,
    alpha: f64,
    smoothed: bool,
    rng: &mut R,
) -> Result<MethodOutput> {
    CalLcpCache::new(cal, kernel)?.predict(cal, x, alpha, smoothed, rng)
}

/// Active items of a fixed value set, counted against a tie window
/// `[t - T_TOL, t + T_TOL]` that only moves right: items above the window
/// and items inside it.
struct SweepCounter {
    sorted: Vec<f64>,
    slot: Vec<usize>,
    active: Vec<bool>,
    lo: usize,
    hi: usize,
    greater: usize,
    tied: usize,
}

impl SweepCounter {
    fn new(values: &[f64], active: bool) -> Self {
        let mut pairs: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut slot = vec![0; values.len()];
        for (pos, &(_, i)) in pairs.iter().enumerate() {
            slot[i] = pos;
        }
        Self {
            sorted: pairs.iter().map(|p| p.0).collect(),
            slot,
            active: vec![active; values.len()],
            lo: 0,
            hi: 0,
            greater: if active { values.len() } else { 0 },
            tied: 0,
        }
    }

    /// Moves the window to `t`, which must not decrease between calls.
    fn advance(&mut self, t: f64) {
        let n = self.sorted.len();
        while self.hi < n && self.sorted[self.hi] <= t + T_TOL {
            if self.active[self.hi] {
                self.greater -= 1;
                self.tied += 1;
            }
            self.hi += 1;
        }
        while self.lo < self.hi && self.sorted[self.lo] < t - T_TOL {
            if self.active[self.lo] {
                self.tied -= 1;
            }
            self.lo += 1;
        }
    }

    fn set(&mut self, item: usize, on: bool) {
        let p = self.slot[item];
        if self.active[p] == on {
            return;
        }
        self.active[p] = on;
        let count = if p >= self.hi {
            &mut self.greater
        } else if p >= self.lo {
            &mut self.tied
        } else {
            return;
        };
        if on {
            *count += 1;
        } else {
            *count -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::predset::Threshold;
    use crate::rng::{Purpose, RngStream};
    use crate::score::{Predictor, ScoreFunction};
    use rand::Rng;

    fn cal_with_scores(xs: &[f64], scores: &[f64]) -> Calibration {
        let data = Dataset::new(xs.to_vec(), 1, scores.to_vec()).unwrap();
        Calibration::new(data, ScoreFunction::absolute_residual(Predictor::Constant(0.0))).unwrap()
    }

    /// Direct evaluation of the rank-statistic p-value at score `s`, with
    /// an explicit `(n+1) x (n+1)` weight matrix.
    fn direct_pvalue(cal: &Calibration, k: &Kernel, x: &[f64], s: f64, u: f64) -> f64 {
        let n = cal.len();
        let pts: Vec<&[f64]> = cal.data().rows().chain(std::iter::once(x)).collect();
        let sc: Vec<f64> = cal.scores().iter().copied().chain(std::iter::once(s)).collect();
        let t: Vec<f64> = (0..=n)
            .map(|i| {
                let col: Vec<f64> = (0..=n).map(|j| k.eval(pts[j], pts[i]).unwrap()).collect();
                let tot: f64 = col.iter().sum();
                (0..=n).filter(|&j| sc[j] < sc[i]).map(|j| col[j] / tot).sum()
            })
            .collect();
        let gt = (0..n).filter(|&i| t[i] > t[n] + T_TOL).count();
        let eq = (0..n).filter(|&i| (t[i] - t[n]).abs() <= T_TOL).count();
        (gt as f64 + u * (eq + 1) as f64) / (n + 1) as f64
    }

    #[test]
    fn sweep_counts() {
        let mut c = SweepCounter::new(&[0.5, 0.1, 0.9, 0.5], true);
        c.advance(0.1);
        assert_eq!((c.greater, c.tied), (3, 1));
        c.advance(0.5);
        assert_eq!((c.greater, c.tied), (1, 2));
        c.set(0, false);
        assert_eq!((c.greater, c.tied), (1, 1));
        c.set(2, false);
        c.set(2, true);
        assert_eq!((c.greater, c.tied), (1, 1));
        c.advance(0.95);
        assert_eq!((c.greater, c.tied), (0, 0));
        let mut b = SweepCounter::new(&[0.2, 0.4], false);
        b.set(1, true);
        b.advance(0.3);
        assert_eq!((b.greater, b.tied), (1, 0));
        b.set(0, true);
        assert_eq!((b.greater, b.tied), (1, 0));
    }

    #[test]
    fn profile_matches_direct_evaluation() {
        let mut r = RngStream::from_seed(11, Purpose::Custom(1));
        for _ in 0..50 {
            let n = r.random_range(1..9);
            let xs: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let sc: Vec<f64> = (0..n).map(|_| r.random_range(0..4) as f64).collect();
            let cal = cal_with_scores(&xs, &sc);
            let k = Kernel::gaussian(r.random_range(0.2..2.0), 1).unwrap();
            let x = [r.random_range(-2.0..2.0)];
            let u: f64 = r.random();
            let profile = CalLcpCache::new(&cal, &k).unwrap().profile(&cal, &x, u).unwrap();
            for (c, p) in profile.iter().enumerate() {
                let s = cal.grid().representative(c);
                let d = direct_pvalue(&cal, &k, &x, s, u);
                assert!((p - d).abs() < 1e-12, "c={c}: {p} vs {d}");
            }
        }
    }

    #[test]
    fn flat_kernel_matches_split() {
        let xs = [0.1, -1.0, 2.0, 0.4, 1.1];
        let sc = [0.3, 1.2, 0.7, 2.2, 1.9];
        let cal = cal_with_scores(&xs, &sc);
        let k = Kernel::flat(-3.0, 3.0, 1).unwrap();
        let mut r = RngStream::from_seed(1, Purpose::Custom(2));
        for a in [0.1, 0.2, 0.3, 0.5, 0.8] {
            let c = cal_lcp(&cal, &[0.0], &k, a, false, &mut r).unwrap();
            let s = super::super::split_cp(&cal, &[0.0], a, false, &mut r).unwrap();
            assert_eq!(c.threshold(), s.threshold(), "alpha {a}");
        }
    }

    #[test]
    fn single_point_boundary() {
        let cal = cal_with_scores(&[0.0], &[1.0]);
        let k = Kernel::gaussian(1.0, 1).unwrap();
        let cache = CalLcpCache::new(&cal, &k).unwrap();
        // below s_1 the p-value is (1 + u) / 2, its maximum
        let p1 = cache.profile(&cal, &[0.3], 1.0).unwrap();
        assert!(p1.iter().any(|p| *p > 0.9));
        let p0 = cache.profile(&cal, &[0.3], 0.0).unwrap();
        assert!(p0.iter().all(|p| *p <= 0.9));
        let mut r = RngStream::from_seed(2, Purpose::Custom(3));
        let out = cache.predict(&cal, &[0.3], 0.9, false, &mut r).unwrap();
        assert_ne!(out.threshold(), Threshold::Empty);
    }
}
