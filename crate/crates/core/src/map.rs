//! Piecewise expanding maps of `[0, 1]`: exact one-sided evaluation,
//! orbit segments, the discontinuity sets of iterates, composition and the
//! metric on map space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::interval::{Interval, IntervalUnion};

/// Tolerance for "lands in D", orbit-point identity and periodicity.
pub const DEFAULT_POINT_TOL: f64 = 1e-9;
pub const DEFAULT_BRANCH_CAP: usize = 1_000_000;
pub const DEFAULT_DISTANCE_GRID: usize = 10_000;

/// Samples per branch used to validate expression branches.
const VALIDATION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Minus, Side::Plus];
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Affine { slope: f64, intercept: f64 },
    Expr { expr: Expr, derivative: Expr },
}

impl Formula {
    pub fn affine(slope: f64, intercept: f64) -> Formula {
        Formula::Affine { slope, intercept }
    }

    /// Wraps an expression, collapsing it to the affine form when possible.
    pub fn expr(expr: Expr) -> Formula {
        match expr.as_affine() {
            Some((slope, intercept)) => Formula::Affine { slope, intercept },
            None => {
                let derivative = expr.derivative();
                Formula::Expr { expr, derivative }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Formula::Affine { slope, intercept } => slope * x + intercept,
            Formula::Expr { expr, .. } => expr.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Formula::Affine { slope, .. } => *slope,
            Formula::Expr { derivative, .. } => derivative.eval(x),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Formula::Affine { .. })
    }

    fn to_expr(&self) -> Expr {
        match self {
            Formula::Affine { slope, intercept } => Expr::Add(
                Box::new(Expr::Mul(Box::new(Expr::Const(*slope)), Box::new(Expr::X))),
                Box::new(Expr::Const(*intercept)),
            ),
            Formula::Expr { expr, .. } => expr.clone(),
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Formula) -> Formula {
        match (self, inner) {
            (
                Formula::Affine {
                    slope: s1,
                    intercept: b1,
                },
                Formula::Affine {
                    slope: s2,
                    intercept: b2,
                },
            ) => Formula::affine(s1 * s2, s1 * b2 + b1),
            _ => Formula::expr(self.to_expr().substitute(&inner.to_expr())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub formula: Formula,
    /// Infimum of `|f'|` on the branch (exact for affine, sampled otherwise).
    pub expansion: f64,
    /// Lipschitz bound of `f'` (zero for affine branches).
    pub lipschitz: f64,
}

impl Branch {
    pub fn eval(&self, x: f64) -> f64 {
        self.formula.eval(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.formula.deriv(x)
    }

    pub fn increasing(&self) -> bool {
        self.deriv(self.mid()) > 0.0
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Closed image `[min, max]` of the branch domain.
    pub fn image(&self) -> (f64, f64) {
        let (a, b) = (self.eval(self.lo), self.eval(self.hi));
        (a.min(b), a.max(b))
    }

    /// Preimage of `y` inside the closed domain, or `None` if `y` is farther
    /// than `tol` outside the image.
    pub fn inverse(&self, y: f64, tol: f64) -> Option<f64> {
        let (a, b) = self.image();
        if y < a - tol || y > b + tol {
            return None;
        }
        Some(self.inverse_unclamped(y.clamp(a, b)).clamp(self.lo, self.hi))
    }

    /// Inverse of the branch formula; affine branches extend linearly past
    /// the image, expression branches are clamped to the domain.
    pub fn inverse_unclamped(&self, y: f64) -> f64 {
        match &self.formula {
            Formula::Affine { slope, intercept } => (y - intercept) / slope,
            Formula::Expr { .. } => {
                let inc = self.increasing();
                let (mut lo, mut hi) = (self.lo, self.hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (self.eval(mid) < y) == inc {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeMap {
    partition: Vec<f64>,
    branches: Vec<Branch>,
    sigma: f64,
    point_tol: f64,
}

impl PeMap {
    /// Builds and validates a map from its partition `0 = a_0 < … < a_m = 1`
    /// and one formula per partition interval.
    pub fn new(partition: Vec<f64>, formulas: Vec<Formula>) -> Result<PeMap> {
        let m = formulas.len();
        if m == 0 || partition.len() != m + 1 {
            return Err(Error::InvariantViolation {
                reason: format!("{} partition points for {} branches", partition.len(), m),
                witness: f64::NAN,
            });
        }
        if partition[0] != 0.0 || partition[m] != 1.0 {
            return Err(Error::InvariantViolation {
                reason: "partition must start at 0 and end at 1".into(),
                witness: if partition[0] != 0.0 {
                    partition[0]
                } else {
                    partition[m]
                },
            });
        }
        if let Some(w) = partition.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvariantViolation {
                reason: "partition must be strictly increasing".into(),
                witness: w[1],
            });
        }
        let branches = partition
            .windows(2)
            .zip(formulas)
            .map(|(w, formula)| validate_branch(w[0], w[1], formula))
            .collect::<Result<Vec<_>>>()?;
        let sigma = branches.iter().map(|b| b.expansion).fold(f64::INFINITY, f64::min);
        if sigma <= 1.0 {
            return Err(Error::InvariantViolation {
                reason: format!("expansion constant {sigma} is not > 1"),
                witness: f64::NAN,
            });
        }
        Ok(PeMap {
            partition,
            branches,
            sigma,
            point_tol: DEFAULT_POINT_TOL,
        })
    }

    pub fn with_point_tol(mut self, tol: f64) -> Self {
        self.point_tol = tol;
        self
    }

    pub fn doubling() -> PeMap {
        PeMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Formula::affine(2.0, 0.0), Formula::affine(2.0, -1.0)],
        )
        .expect("doubling map is valid")
    }

    pub fn tent() -> PeMap {
        PeMap::new(
            vec![0.0, 0.5, 1.0],
            vec![Formula::affine(2.0, 0.0), Formula::affine(-2.0, 2.0)],
        )
        .expect("tent map is valid")
    }

    /// `x ↦ a(x − ½) mod 1`, materialized as explicit affine branches.
    pub fn lorenz(a: f64) -> Result<PeMap> {
        mod_one_family(a, false)
    }

    /// `x ↦ 1 − a(x − ½) mod 1`.
    pub fn lorenz_reversed(a: f64) -> Result<PeMap> {
        mod_one_family(a, true)
    }

    pub fn partition(&self) -> &[f64] {
        &self.partition
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn point_tol(&self) -> f64 {
        self.point_tol
    }

    /// The interior partition points `D = {a_1, …, a_{m−1}}`.
    pub fn discontinuities(&self) -> &[f64] {
        &self.partition[1..self.partition.len() - 1]
    }

    /// Index of the interior partition point within `point_tol` of `x`.
    pub fn near_discontinuity(&self, x: f64) -> Option<usize> {
        self.discontinuities()
            .iter()
            .position(|&d| (d - x).abs() <= self.point_tol)
    }

    /// Branch used to evaluate `f(x^side)`.
    pub fn branch_index(&self, x: f64, side: Side) -> usize {
        let m = self.branches.len();
        if let Some(k) = self.near_discontinuity(x) {
            // D[k] = a_{k+1}: left branch k, right branch k+1
            return match side {
                Side::Minus => k,
                Side::Plus => k + 1,
            };
        }
        // first i with a_{i+1} > x
        let i = self.partition[1..].partition_point(|&a| a <= x);
        i.min(m - 1)
    }

    pub fn eval_one_sided(&self, x: f64, side: Side) -> f64 {
        let b = &self.branches[self.branch_index(x, side)];
        b.eval(x).clamp(0.0, 1.0)
    }

    pub fn derivative_one_sided(&self, x: f64, side: Side) -> f64 {
        self.branches[self.branch_index(x, side)].deriv(x)
    }

    /// Right-continuous evaluation (the plus side), used for points off D.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_one_sided(x, Side::Plus)
    }

    /// One step of one-sided orbit arithmetic: the value `f(x^side)` and the
    /// side from which the image is approached.
    pub fn step(&self, x: f64, side: Side) -> (f64, Side) {
        let b = &self.branches[self.branch_index(x, side)];
        let y = b.eval(x).clamp(0.0, 1.0);
        let next = if b.deriv(x) > 0.0 { side } else { side.flip() };
        (y, next)
    }

    pub fn orbit_segment(&self, x: f64, side: Side, n: usize) -> OrbitSegment {
        let mut points = Vec::with_capacity(n + 1);
        let mut sides = Vec::with_capacity(n + 1);
        let (mut cur, mut s) = (x, side);
        points.push(cur);
        sides.push(s);
        for _ in 0..n {
            (cur, s) = self.step(cur, s);
            points.push(cur);
            sides.push(s);
        }
        OrbitSegment {
            start: x,
            side,
            points,
            sides,
        }
    }

    /// Sorted `D_{f^n}`: all `x ∈ (0,1)` with `f^k(x) ∈ D` for some `k < n`.
    pub fn discontinuity_set(&self, n: usize) -> Vec<f64> {
        self.discontinuity_set_capped(n, usize::MAX).unwrap_or_default()
    }

    fn discontinuity_set_capped(&self, n: usize, cap: usize) -> Result<Vec<f64>> {
        let tol = self.point_tol;
        let mut all: Vec<f64> = self.discontinuities().to_vec();
        let mut frontier = all.clone();
        for _ in 1..n {
            let mut next = Vec::new();
            for &y in &frontier {
                for b in &self.branches {
                    if let Some(x) = b.inverse(y, tol * 1e-3) {
                        if x > tol && x < 1.0 - tol {
                            next.push(x);
                        }
                    }
                }
            }
            dedup_sorted(&mut next, tol);
            all.extend_from_slice(&next);
            dedup_sorted(&mut all, tol);
            if all.len() + 1 > cap {
                return Err(Error::BranchExplosion {
                    count: all.len() + 1,
                    cap,
                });
            }
            frontier = next;
        }
        dedup_sorted(&mut all, tol);
        Ok(all)
    }

    pub fn iterate_map(&self, k: usize) -> Result<PeMap> {
        self.iterate_map_capped(k, DEFAULT_BRANCH_CAP)
    }

    /// `f^k` as a piecewise map on the partition `D_{f^k} ∪ {0, 1}`.
    pub fn iterate_map_capped(&self, k: usize, cap: usize) -> Result<PeMap> {
        assert!(k >= 1, "iterate_map needs k >= 1");
        if k == 1 {
            return Ok(self.clone());
        }
        let cuts = self.discontinuity_set_capped(k, cap)?;
        let mut partition = Vec::with_capacity(cuts.len() + 2);
        partition.push(0.0);
        partition.extend(cuts);
        partition.push(1.0);
        let formulas = partition
            .windows(2)
            .map(|w| {
                let mut y = 0.5 * (w[0] + w[1]);
                let mut f = Formula::affine(1.0, 0.0);
                for _ in 0..k {
                    let b = &self.branches[self.branch_index(y, Side::Plus)];
                    f = b.formula.compose(&f);
                    y = b.eval(y);
                }
                f
            })
            .collect();
        Ok(PeMap::new(partition, formulas)?.with_point_tol(self.point_tol))
    }
}

impl PeMap {
    /// `f(U ∖ D)` for a union of intervals: every piece is cut at the
    /// partition points and pushed through its branch with one-sided limits.
    pub fn image_of(&self, u: &IntervalUnion) -> IntervalUnion {
        let mut pieces = Vec::new();
        for iv in u.intervals() {
            for b in &self.branches {
                let lo = iv.lo.max(b.lo);
                let hi = iv.hi.min(b.hi);
                if hi - lo <= 0.0 {
                    continue;
                }
                let (y0, y1) = (b.eval(lo).clamp(0.0, 1.0), b.eval(hi).clamp(0.0, 1.0));
                pieces.push(Interval::new(y0.min(y1), y0.max(y1)));
            }
        }
        IntervalUnion::from_intervals(pieces)
    }
}

fn dedup_sorted(v: &mut Vec<f64>, tol: f64) {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
}

fn mod_one_family(a: f64, reversed: bool) -> Result<PeMap> {
    if a.is_nan() || a <= 1.0 || !a.is_finite() {
        return Err(Error::InvariantViolation {
            reason: format!("family parameter a = {a} must be > 1"),
            witness: f64::NAN,
        });
    }
    let sign = if reversed { -1.0 } else { 1.0 };
    // the affine part is an integer at x = 1/2 + k/a
    let kmax = (a / 2.0).ceil() as i64 + 1;
    let mut partition = vec![0.0];
    for k in -kmax..=kmax {
        let x = 0.5 + k as f64 / a;
        if x > 1e-12 && x < 1.0 - 1e-12 {
            partition.push(x);
        }
    }
    partition.push(1.0);
    let formulas = partition
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let shift = (sign * a * (mid - 0.5)).floor();
            // sign·a·(x − ½) − shift
            Formula::affine(sign * a, -sign * a * 0.5 - shift)
        })
        .collect();
    PeMap::new(partition, formulas)
}

fn validate_branch(lo: f64, hi: f64, formula: Formula) -> Result<Branch> {
    let slack = 1e-9;
    let check_range = |x: f64, y: f64| -> Result<()> {
        if !(y >= -slack && y <= 1.0 + slack) {
            return Err(Error::InvariantViolation {
                reason: format!("branch on [{lo}, {hi}] leaves [0,1]: f({x}) = {y}"),
                witness: x,
            });
        }
        Ok(())
    };
    match &formula {
        Formula::Affine { slope, .. } => {
            check_range(lo, formula.eval(lo))?;
            check_range(hi, formula.eval(hi))?;
            if slope.abs() <= 1.0 || !slope.is_finite() {
                return Err(Error::InvariantViolation {
                    reason: format!("|f'| = {} is not > 1 on [{lo}, {hi}]", slope.abs()),
                    witness: 0.5 * (lo + hi),
                });
            }
            Ok(Branch {
                lo,
                hi,
                expansion: slope.abs(),
                lipschitz: 0.0,
                formula,
            })
        }
        Formula::Expr { derivative, .. } => {
            let second = derivative.derivative();
            let xs: Vec<f64> = (0..=VALIDATION_SAMPLES)
                .map(|j| lo + (hi - lo) * j as f64 / VALIDATION_SAMPLES as f64)
                .collect();
            let mut expansion = f64::INFINITY;
            let mut lipschitz: f64 = 0.0;
            let sign0 = formula.deriv(xs[0]).signum();
            for &x in &xs {
                check_range(x, formula.eval(x))?;
                let d = formula.deriv(x);
                if !d.is_finite() || d.signum() != sign0 {
                    return Err(Error::InvariantViolation {
                        reason: format!("branch on [{lo}, {hi}] is not monotone with finite f'"),
                        witness: x,
                    });
                }
                expansion = expansion.min(d.abs());
                let dd = second.eval(x).abs();
                if !dd.is_finite() {
                    return Err(Error::InvariantViolation {
                        reason: "f' is not Lipschitz".into(),
                        witness: x,
                    });
                }
                lipschitz = lipschitz.max(dd);
            }
            if expansion <= 1.0 {
                let witness = xs
                    .iter()
                    .copied()
                    .min_by(|a, b| formula.deriv(*a).abs().total_cmp(&formula.deriv(*b).abs()))
                    .unwrap_or(lo);
                return Err(Error::InvariantViolation {
                    reason: format!("|f'| = {expansion} is not > 1"),
                    witness,
                });
            }
            // difference quotients of f' against the sampled bound
            let bound = lipschitz * (1.0 + 1e-3) + 1e-9;
            for w in xs.windows(2) {
                let q = (formula.deriv(w[1]) - formula.deriv(w[0])).abs() / (w[1] - w[0]);
                if q > bound {
                    return Err(Error::InvariantViolation {
                        reason: format!("f' difference quotient {q} exceeds Lipschitz bound {bound}"),
                        witness: w[0],
                    });
                }
            }
            Ok(Branch {
                lo,
                hi,
                expansion,
                lipschitz,
                formula,
            })
        }
    }
}

/// `x_k = f^k(x_0^side)` for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub start: f64,
    pub side: Side,
    pub points: Vec<f64>,
    /// Side from which each point is approached along the limit orbit.
    pub sides: Vec<Side>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.points.len() <= 1
    }

    pub fn end(&self) -> f64 {
        *self.points.last().expect("orbit segment has a start point")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub partition: f64,
    pub c0: f64,
    pub lip: f64,
    pub total: f64,
    pub grid: usize,
}

pub fn distance(f: &PeMap, g: &PeMap) -> Result<Distance> {
    distance_with_grid(f, g, DEFAULT_DISTANCE_GRID)
}

/// `d(f,g) = ρ(P_f,P_g) + ρ_0(f,g) + ρ_Lip(f',g')`, where branch `i` of `g`
/// is compared through the affine rescaling of `I_i(f)` onto `I_i(g)`.
/// Affine branch pairs use closed forms; everything else is sampled on
/// `grid` points per branch plus the endpoints.
pub fn distance_with_grid(f: &PeMap, g: &PeMap, grid: usize) -> Result<Distance> {
    if f.branch_count() != g.branch_count() {
        return Err(Error::BranchCountMismatch(f.branch_count(), g.branch_count()));
    }
    let partition = f
        .discontinuities()
        .iter()
        .zip(g.discontinuities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut c0: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for (bf, bg) in f.branches().iter().zip(g.branches()) {
        match (&bf.formula, &bg.formula) {
            (Formula::Affine { slope: sf, .. }, Formula::Affine { slope: sg, .. }) => {
                let eta = |x: f64| bg.lo + (x - bf.lo) * (bg.hi - bg.lo) / (bf.hi - bf.lo);
                let d0 = (bf.eval(bf.lo) - bg.eval(eta(bf.lo))).abs();
                let d1 = (bf.eval(bf.hi) - bg.eval(eta(bf.hi))).abs();
                c0 = c0.max(d0).max(d1);
                // constant derivative difference: sup norm only, seminorm 0
                lip = lip.max(2.0 * (sf - sg).abs());
            }
            _ => {
                let (sup, l1) = sampled_branch_terms(bf, bg, grid);
                let (_, l2) = sampled_branch_terms(bg, bf, grid);
                c0 = c0.max(sup);
                lip = lip.max(l1 + l2);
            }
        }
    }
    Ok(Distance {
        partition,
        c0,
        lip,
        total: partition + c0 + lip,
        grid,
    })
}

/// Returns `(sup |a − b∘η|, ‖a' − b'∘η‖_Lip)` on the domain of `a`.
fn sampled_branch_terms(a: &Branch, b: &Branch, grid: usize) -> (f64, f64) {
    let n = grid.max(2);
    let eta = |x: f64| b.lo + (x - a.lo) * (b.hi - b.lo) / (a.hi - a.lo);
    let xs: Vec<f64> = (0..=n).map(|j| a.lo + (a.hi - a.lo) * j as f64 / n as f64).collect();
    let h: Vec<f64> = xs.iter().map(|&x| a.deriv(x) - b.deriv(eta(x))).collect();
    let sup0 = xs
        .iter()
        .map(|&x| (a.eval(x) - b.eval(eta(x))).abs())
        .fold(0.0, f64::max);
    let sup1 = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let seminorm = xs
        .windows(2)
        .zip(h.windows(2))
        .map(|(x, v)| (v[1] - v[0]).abs() / (x[1] - x[0]))
        .fold(0.0, f64::max);
    (sup0, sup1 + seminorm)
}
