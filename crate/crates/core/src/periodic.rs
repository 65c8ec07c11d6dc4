//! Periodic orbits from admissible itineraries, heteroclinic relations,
//! continuation to perturbed maps and the coprime-period exactness test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::attractor::{saturate, saturate_iterate, DEFAULT_SATURATION_STEPS};
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalUnion};
use crate::map::PeMap;

pub const DEFAULT_ITINERARY_CAP: usize = 1_000_000;
pub const CONTRACTION_TOL: f64 = 1e-13;
pub const CONTRACTION_MAX_ITER: usize = 200;
pub const DEFAULT_LEAD_RADIUS: f64 = 1e-4;
pub const DEFAULT_WINDOW: f64 = 0.05;
pub const DEFAULT_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub point: f64,
    /// Minimal period.
    pub period: usize,
    /// Branch indices visited by `point`, one per step.
    pub itinerary: Vec<usize>,
    /// Whether the orbit stays farther than the point tolerance from `D`.
    pub regular: bool,
    /// `point, f(point), …, f^{period-1}(point)`.
    pub orbit: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodicSearch {
    pub orbits: Vec<PeriodicOrbit>,
    /// Itineraries whose contraction fixed point does not realize them.
    pub inadmissible: usize,
}

impl PeriodicSearch {
    /// Distinct points of minimal period `p`.
    pub fn points_of_period(&self, p: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .orbits
            .iter()
            .filter(|o| o.period == p)
            .flat_map(|o| o.orbit.iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Fixed point of `f_{w_0}^{-1} ∘ … ∘ f_{w_{p-1}}^{-1}`, each inverse
/// clamped to its branch domain so the composition stays a contraction.
fn contract(map: &PeMap, word: &[usize]) -> f64 {
    let br = map.branches();
    let mut x = br[word[0]].mid();
    for _ in 0..CONTRACTION_MAX_ITER {
        let mut y = x;
        for &w in word.iter().rev() {
            let b = &br[w];
            y = b.inverse_unclamped(y).clamp(b.lo, b.hi);
        }
        let done = (y - x).abs() <= CONTRACTION_TOL;
        x = y;
        if done {
            break;
        }
    }
    x
}

/// Forward orbit along `word` if every point lies in its branch domain and
/// the orbit closes up.
fn realize(map: &PeMap, word: &[usize], x: f64) -> Option<Vec<f64>> {
    let tol = map.point_tol();
    let br = map.branches();
    let mut orbit = Vec::with_capacity(word.len());
    let mut cur = x;
    for &w in word {
        let b = &br[w];
        if cur < b.lo - tol || cur > b.hi + tol {
            return None;
        }
        orbit.push(cur);
        cur = b.eval(cur.clamp(b.lo, b.hi));
    }
    ((cur - x).abs() <= tol).then_some(orbit)
}

fn is_lyndon(word: &[usize]) -> bool {
    (1..word.len()).all(|r| word[..] < [&word[r..], &word[..r]].concat()[..])
}

fn decode(mut idx: usize, m: usize, p: usize) -> Vec<usize> {
    let mut w = vec![0; p];
    for slot in w.iter_mut().rev() {
        *slot = idx % m;
        idx /= m;
    }
    w
}

fn orbit_from(map: &PeMap, word: &[usize], orbit: Vec<f64>) -> PeriodicOrbit {
    let tol = map.point_tol();
    let x = orbit[0];
    let period = (1..orbit.len())
        .find(|&j| (orbit[j] - x).abs() <= tol)
        .unwrap_or(orbit.len());
    let orbit: Vec<f64> = orbit[..period].to_vec();
    let regular = orbit.iter().all(|&y| map.near_discontinuity(y).is_none());
    PeriodicOrbit {
        point: x,
        period,
        itinerary: word[..period].to_vec(),
        regular,
        orbit,
    }
}

/// Periodic orbits of period at most `max_period`, one per orbit. With a
/// window, only orbits meeting it are kept and `point` is their smallest
/// point inside it.
pub fn find_periodic(map: &PeMap, max_period: usize, window: Option<Interval>) -> Result<PeriodicSearch> {
    find_periodic_capped(map, max_period, window, DEFAULT_ITINERARY_CAP)
}

pub fn find_periodic_capped(
    map: &PeMap,
    max_period: usize,
    window: Option<Interval>,
    cap: usize,
) -> Result<PeriodicSearch> {
    let m = map.branch_count();
    let total = (1..=max_period).try_fold(0usize, |acc, p| {
        m.checked_pow(p as u32).and_then(|c| acc.checked_add(c))
    });
    match total {
        Some(count) if count <= cap => {}
        _ => {
            return Err(Error::BranchExplosion {
                count: total.unwrap_or(usize::MAX),
                cap,
            })
        }
    }
    let tol = map.point_tol();
    let mut found: Vec<PeriodicOrbit> = Vec::new();
    let mut inadmissible = 0;
    for p in 1..=max_period {
        let count = m.pow(p as u32);
        let results: Vec<Option<PeriodicOrbit>> = (0..count)
            .into_par_iter()
            .filter_map(|idx| {
                let word = decode(idx, m, p);
                if !is_lyndon(&word) {
                    return None;
                }
                let x = contract(map, &word);
                Some(realize(map, &word, x).map(|orbit| orbit_from(map, &word, orbit)))
            })
            .collect();
        for r in results {
            match r {
                Some(o) => found.push(o),
                None => inadmissible += 1,
            }
        }
    }

    // one entry per orbit, keyed by its smallest point
    let key = |o: &PeriodicOrbit| o.orbit.iter().copied().fold(f64::INFINITY, f64::min);
    found.sort_by(|a, b| a.period.cmp(&b.period).then(key(a).total_cmp(&key(b))));
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for o in found {
        let dup = orbits
            .iter()
            .rev()
            .take_while(|u| u.period == o.period)
            .any(|u| (key(u) - key(&o)).abs() <= tol);
        if !dup {
            orbits.push(o);
        }
    }

    let mut out = Vec::new();
    for o in orbits {
        let start = match window {
            None => (0..o.period).min_by(|&a, &b| o.orbit[a].total_cmp(&o.orbit[b])),
            Some(w) => (0..o.period)
                .filter(|&j| o.orbit[j] > w.lo && o.orbit[j] < w.hi)
                .min_by(|&a, &b| o.orbit[a].total_cmp(&o.orbit[b])),
        };
        if let Some(j) = start {
            out.push(rotate(o, j));
        }
    }
    out.sort_by(|a, b| a.point.total_cmp(&b.point).then(a.period.cmp(&b.period)));
    Ok(PeriodicSearch {
        orbits: out,
        inadmissible,
    })
}

fn rotate(mut o: PeriodicOrbit, j: usize) -> PeriodicOrbit {
    o.orbit.rotate_left(j);
    o.itinerary.rotate_left(j);
    o.point = o.orbit[0];
    o
}

fn neighbourhood(x: f64, radius: f64) -> Interval {
    Interval::new((x - radius).max(0.0), (x + radius).min(1.0))
}

/// `x ⤳ y` for one neighbourhood radius: `y ∈ Ω_n((x − r, x + r))` for some
/// `n ≤ n_max`. A false result only means "not reached within budget".
pub fn leads_to(map: &PeMap, x: f64, y: f64, radius: f64, n_max: usize) -> bool {
    saturate(map, neighbourhood(x, radius), n_max)
        .union
        .contains_point(y, map.point_tol())
}

/// Like [`leads_to`] with `f^q` in place of `f`.
pub fn leads_to_under_iterate(map: &PeMap, x: f64, y: f64, radius: f64, n_max: usize, q: usize) -> bool {
    saturate_iterate(map, neighbourhood(x, radius), q, n_max)
        .union
        .contains_point(y, map.point_tol())
}

pub fn heteroclinically_related(map: &PeMap, x: f64, y: f64, radius: f64, n_max: usize) -> bool {
    leads_to(map, x, y, radius, n_max) && leads_to(map, y, x, radius, n_max)
}

/// The periodic point of `g` with the itinerary of `orbit`.
pub fn continuation(orbit: &PeriodicOrbit, f: &PeMap, g: &PeMap) -> Result<PeriodicOrbit> {
    if f.branch_count() != g.branch_count() {
        return Err(Error::BranchCountMismatch(f.branch_count(), g.branch_count()));
    }
    let word = &orbit.itinerary;
    let x = contract(g, word);
    let points = realize(g, word, x).ok_or_else(|| Error::ItineraryBroken(word.clone()))?;
    let cont = orbit_from(g, word, points);
    if cont.period != orbit.period {
        return Err(Error::ItineraryBroken(word.clone()));
    }
    Ok(cont)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "period", rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    NotExact(usize),
    Indeterminate,
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowTrial {
    pub window: Interval,
    pub periods: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactnessReport {
    pub verdict: Exactness,
    pub trials: Vec<WindowTrial>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Samples windows of length `DEFAULT_WINDOW` inside the support intervals
/// and looks for two periodic points of coprime periods in each. `period`
/// is the mixing period of the component.
pub fn exactness_check(
    map: &PeMap,
    support: &IntervalUnion,
    period: usize,
    max_period: usize,
    trials: usize,
    seed: u64,
) -> Result<ExactnessReport> {
    if support.is_empty() {
        return Err(Error::EmptyInput);
    }
    let search = find_periodic(map, max_period, None)?;
    let points: Vec<(f64, usize)> = search
        .orbits
        .iter()
        .flat_map(|o| o.orbit.iter().map(move |&x| (x, o.period)))
        .collect();

    let total = support.measure();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(trials);
    let (mut all_coprime, mut shared) = (true, false);
    for _ in 0..trials {
        // pick an interval by length, then a window inside it
        let mut t = rng.gen::<f64>() * total;
        let iv = support
            .intervals()
            .iter()
            .find(|iv| {
                t -= iv.len();
                t <= 0.0
            })
            .unwrap_or_else(|| support.intervals().last().expect("non-empty"));
        let len = DEFAULT_WINDOW.min(iv.len());
        let lo = iv.lo + rng.gen::<f64>() * (iv.len() - len);
        let window = Interval::new(lo, lo + len);
        let mut periods: Vec<usize> = points
            .iter()
            .filter(|(x, _)| *x > window.lo && *x < window.hi)
            .map(|&(_, p)| p)
            .collect();
        periods.sort_unstable();
        periods.dedup();
        let coprime = periods.iter().any(|&a| periods.iter().any(|&b| gcd(a, b) == 1));
        all_coprime &= coprime;
        shared |= period > 1 && !periods.is_empty() && periods.iter().all(|p| p % period == 0);
        results.push(WindowTrial { window, periods });
    }
    let verdict = if shared {
        Exactness::NotExact(period)
    } else if all_coprime {
        Exactness::Exact
    } else {
        Exactness::Indeterminate
    };
    Ok(ExactnessReport {
        verdict,
        trials: results,
    })
}

/// Default saturation budget for [`leads_to`].
pub const DEFAULT_LEAD_STEPS: usize = DEFAULT_SATURATION_STEPS;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::exact_mixing_parts;
    use crate::map::Formula;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn doubling_up_to_period_two() {
        let s = find_periodic(&PeMap::doubling(), 2, None).unwrap();
        let fixed = s.points_of_period(1);
        assert_eq!(fixed.len(), 2);
        assert!(close(fixed[0], 0.0) && close(fixed[1], 1.0));
        let two = s.points_of_period(2);
        assert_eq!(two.len(), 2);
        assert!(close(two[0], 1.0 / 3.0) && close(two[1], 2.0 / 3.0));
        assert_eq!(s.orbits.len(), 3);
    }

    #[test]
    fn tent_fixed_points() {
        let s = find_periodic(&PeMap::tent(), 1, None).unwrap();
        let fixed = s.points_of_period(1);
        assert_eq!(fixed.len(), 2);
        assert!(close(fixed[0], 0.0) && close(fixed[1], 2.0 / 3.0));
    }

    #[test]
    fn tent_window_is_hit() {
        let w = Interval::new(0.6, 0.7);
        let s = find_periodic(&PeMap::tent(), 8, Some(w)).unwrap();
        assert!(!s.orbits.is_empty());
        assert!(s.orbits.iter().all(|o| o.point > 0.6 && o.point < 0.7));
    }

    // Brute-force oracle: solutions of 2^p x ≡ x (mod 1) in [0, 1) are j/(2^p − 1).
    fn doubling_oracle_minimal(p: usize) -> usize {
        let n = (1u64 << p) - 1;
        (0..n)
            .filter(|&j| (1..p).all(|d| !p.is_multiple_of(d) || !(j * ((1u64 << d) - 1)).is_multiple_of(n)))
            .count()
    }

    #[test]
    fn doubling_counts_match_oracle() {
        let s = find_periodic(&PeMap::doubling(), 10, None).unwrap();
        for p in 1..=10 {
            // 1 and 0 are the same point mod 1
            let pts: Vec<f64> = s.points_of_period(p).into_iter().filter(|&x| x < 1.0 - 1e-9).collect();
            assert_eq!(pts.len(), doubling_oracle_minimal(p), "p = {p}");
            let total: usize = (1..=p)
                .filter(|d| p % d == 0)
                .map(|d| s.points_of_period(d).into_iter().filter(|&x| x < 1.0 - 1e-9).count())
                .sum();
            assert_eq!(total, (1 << p) - 1);
        }
    }

    #[test]
    fn orbits_are_verified() {
        for m in [PeMap::doubling(), PeMap::tent(), PeMap::lorenz(1.3).unwrap()] {
            let s = find_periodic(&m, 6, None).unwrap();
            for o in &s.orbits {
                let mut x = o.point;
                for (j, &w) in o.itinerary.iter().enumerate() {
                    let b = &m.branches()[w];
                    assert!(x >= b.lo - 1e-9 && x <= b.hi + 1e-9);
                    assert!((x - o.orbit[j]).abs() <= 1e-9);
                    x = b.eval(x);
                }
                assert!((x - o.point).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn leads_to_examples() {
        let d = PeMap::doubling();
        assert!(leads_to(&d, 1.0 / 3.0, 2.0 / 3.0, 1e-4, 200));
        for (x, y) in [(0.1, 0.9), (0.77, 0.01), (0.0, 1.0 / 3.0)] {
            assert!(leads_to(&d, x, y, 1e-4, 200));
        }
        assert!(heteroclinically_related(&d, 0.0, 1.0 / 3.0, 1e-4, 200));
        assert!(heteroclinically_related(&d, 1.0 / 3.0, 2.0 / 3.0, 1e-4, 200));
        let l = PeMap::lorenz(1.3).unwrap();
        assert!(leads_to(&l, 0.45, 0.1, 1e-4, 200));
        assert!(!leads_to_under_iterate(&l, 0.45, 0.1, 1e-4, 200, 2));
        assert!(leads_to_under_iterate(&l, 0.45, 0.6, 1e-4, 200, 2));
    }

    #[test]
    fn heteroclinic_relation_is_reflexive_and_symmetric() {
        let l = PeMap::lorenz(1.3).unwrap();
        let xs = [0.05, 0.4, 0.5, 0.62, 0.9];
        for &x in &xs {
            assert!(heteroclinically_related(&l, x, x, 1e-4, 200));
            for &y in &xs {
                assert_eq!(
                    heteroclinically_related(&l, x, y, 1e-4, 200),
                    heteroclinically_related(&l, y, x, 1e-4, 200)
                );
            }
        }
    }

    // slopes 2 + e and 2 − e through (0,0) and (1,1), split where the left
    // branch reaches 1
    fn skewed_doubling(e: f64) -> PeMap {
        let (s0, s1) = (2.0 + e, 2.0 - e);
        PeMap::new(
            vec![0.0, 1.0 / s0, 1.0],
            vec![Formula::affine(s0, 0.0), Formula::affine(s1, 1.0 - s1)],
        )
        .unwrap()
    }

    #[test]
    fn continuation_of_one_third() {
        let f = PeMap::doubling();
        let s = find_periodic(&f, 2, None).unwrap();
        let third = s.orbits.iter().find(|o| o.period == 2).unwrap();
        assert_eq!(continuation(third, &f, &f).unwrap().point, third.point);
        let g = skewed_doubling(0.02);
        let xg = continuation(third, &f, &g).unwrap();
        assert_eq!(xg.period, 2);
        assert_eq!(xg.itinerary, vec![0, 1]);
        // root-solve oracle: bisection on g²(x) − x over the itinerary cell
        let h = |x: f64| g.eval(g.eval(x)) - x;
        let (mut lo, mut hi) = (0.3, 0.36);
        assert!(h(lo) * h(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(lo) * h(mid) <= 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((xg.point - lo).abs() <= 1e-10);
        assert!(h(xg.point).abs() <= 1e-10);
    }

    #[test]
    fn continuation_shrinks_with_perturbation() {
        let f = PeMap::doubling();
        let s = find_periodic(&f, 4, None).unwrap();
        for o in s.orbits.iter().filter(|o| o.period >= 2) {
            let far = continuation(o, &f, &skewed_doubling(0.02)).unwrap();
            let near = continuation(o, &f, &skewed_doubling(0.01)).unwrap();
            let (df, dn) = ((far.point - o.point).abs(), (near.point - o.point).abs());
            // linear to first order in the perturbation
            assert!(dn <= 0.5 * df * 1.05 + 1e-12, "{o:?}: {dn} vs {df}");
            assert!(dn >= 0.5 * df * 0.95 - 1e-12, "{o:?}: {dn} vs {df}");
        }
    }

    #[test]
    fn continuation_in_lorenz_family() {
        let f = PeMap::lorenz(1.3).unwrap();
        let g = PeMap::lorenz(1.31).unwrap();
        let s = find_periodic(&f, 2, None).unwrap();
        let two: Vec<_> = s.orbits.iter().filter(|o| o.period == 2).collect();
        assert!(!two.is_empty());
        for o in two {
            let c = continuation(o, &f, &g).unwrap();
            assert!((c.point - o.point).abs() <= 0.05);
        }
    }

    #[test]
    fn exactness_of_named_maps() {
        let d = PeMap::doubling();
        let r = exactness_check(&d, &IntervalUnion::single(0.0, 1.0), 1, 8, 50, 1).unwrap();
        assert_eq!(r.verdict, Exactness::Exact);
        let l = PeMap::lorenz(1.3).unwrap();
        let sup = saturate(&l, Interval::new(0.45, 0.46), 200).union;
        let r = exactness_check(&l, &sup, 2, 10, 50, 1).unwrap();
        assert_eq!(r.verdict, Exactness::NotExact(2));
        let rev = PeMap::lorenz_reversed(2f64.sqrt()).unwrap();
        let sup = saturate(&rev, Interval::new(0.45, 0.46), 200).union;
        let k = exact_mixing_parts(&rev, &sup, 8).unwrap().len();
        assert_eq!(k, 2);
        let fixed = find_periodic(&rev, 1, None).unwrap();
        assert!(fixed.orbits.iter().any(|o| sup.in_interior(o.point, 1e-6)));
        let r = exactness_check(&rev, &sup, k, 10, 50, 1).unwrap();
        assert_eq!(r.verdict, Exactness::NotExact(2));
    }
}
