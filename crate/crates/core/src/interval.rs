//! Finite unions of disjoint closed subintervals of `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is reversed");
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Sorted, disjoint closed intervals. Gaps narrower than the merge
/// tolerance are closed up on construction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion::default()
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        IntervalUnion {
            intervals: vec![Interval::new(lo, hi)],
        }
    }

    pub fn from_intervals(items: impl IntoIterator<Item = Interval>) -> Self {
        Self::with_tolerance(items, DEFAULT_MERGE_TOL)
    }

    pub fn with_tolerance(items: impl IntoIterator<Item = Interval>, merge_tol: f64) -> Self {
        let mut v: Vec<Interval> = items.into_iter().filter(|i| i.hi >= i.lo).collect();
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.lo - last.hi < merge_tol => last.hi = last.hi.max(iv.hi),
                _ => out.push(iv),
            }
        }
        IntervalUnion { intervals: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// All interval endpoints in increasing order (the boundary set).
    pub fn endpoints(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|i| [i.lo, i.hi]).collect()
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        IntervalUnion::from_intervals(self.intervals.iter().chain(other.intervals.iter()).copied())
    }

    pub fn intersection(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut out = Vec::new();
        for a in &self.intervals {
            for b in &other.intervals {
                if let Some(c) = a.intersect(b) {
                    out.push(c);
                }
            }
        }
        IntervalUnion::from_intervals(out)
    }

    pub fn contains_point(&self, x: f64, tol: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(x, tol))
    }

    /// Index of the interval containing `x` (with slack `tol`).
    pub fn locate(&self, x: f64, tol: f64) -> Option<usize> {
        self.intervals.iter().position(|i| i.contains(x, tol))
    }

    /// True if `x` lies in some interval at distance more than `margin`
    /// from both of its endpoints.
    pub fn in_interior(&self, x: f64, margin: f64) -> bool {
        self.intervals.iter().any(|i| x > i.lo + margin && x < i.hi - margin)
    }

    pub fn fatten(&self, r: f64) -> IntervalUnion {
        IntervalUnion::from_intervals(
            self.intervals
                .iter()
                .map(|i| Interval::new((i.lo - r).max(0.0), (i.hi + r).min(1.0))),
        )
    }

    /// `self ⊆ other` up to slack `tol` on every endpoint.
    pub fn is_subset_of(&self, other: &IntervalUnion, tol: f64) -> bool {
        self.intervals
            .iter()
            .all(|a| other.intervals.iter().any(|b| a.lo >= b.lo - tol && a.hi <= b.hi + tol))
    }

    /// Same interval count and every endpoint within `tol`.
    pub fn approx_eq(&self, other: &IntervalUnion, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .intervals
                .iter()
                .zip(&other.intervals)
                .all(|(a, b)| (a.lo - b.lo).abs() <= tol && (a.hi - b.hi).abs() <= tol)
    }

    pub fn distance_to_point(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|i| {
                if x < i.lo {
                    i.lo - x
                } else if x > i.hi {
                    x - i.hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from a point of `self` to the set `other`.
    fn directed_hausdorff(&self, other: &IntervalUnion) -> f64 {
        // The distance to `other` is piecewise linear, so its maximum over
        // an interval is attained at an endpoint or at a gap midpoint.
        let mut probes: Vec<f64> = other.intervals.windows(2).map(|w| 0.5 * (w[0].hi + w[1].lo)).collect();
        probes.sort_by(f64::total_cmp);
        let mut worst: f64 = 0.0;
        for a in &self.intervals {
            worst = worst.max(other.distance_to_point(a.lo));
            worst = worst.max(other.distance_to_point(a.hi));
            for &p in probes.iter().filter(|&&p| p > a.lo && p < a.hi) {
                worst = worst.max(other.distance_to_point(p));
            }
        }
        worst
    }
}

pub fn hausdorff_distance(a: &IntervalUnion, b: &IntervalUnion) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(a.directed_hausdorff(b).max(b.directed_hausdorff(a)))
}
