//! Topology of the attractor: saturations `Ω(I)`, exact supports, boundary
//! segments, the separation condition and trapping regions for perturbed
//! maps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{hausdorff_distance, Interval, IntervalUnion, DEFAULT_MERGE_TOL};
use crate::map::{OrbitSegment, PeMap, Side};
use crate::transfer::ErgodicComponent;

pub const DEFAULT_SATURATION_STEPS: usize = 200;
pub const DEFAULT_SEGMENT_LEN: usize = 64;
pub const DEFAULT_DEPTH: usize = 64;
pub const DEFAULT_TRAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct Saturation {
    pub union: IntervalUnion,
    pub steps: usize,
    pub stabilized: bool,
}

/// `Ω_n(I)` for `n = 0..=n_max`, stopping after the first repeat.
pub fn saturation_sequence(map: &PeMap, seed: Interval, n_max: usize, merge_tol: f64) -> Vec<IntervalUnion> {
    let base = IntervalUnion::with_tolerance([seed], merge_tol);
    let mut seq = vec![base.clone()];
    for _ in 0..n_max {
        let prev = seq.last().expect("non-empty");
        let next = IntervalUnion::with_tolerance(
            base.intervals().iter().chain(map.image_of(prev).intervals()).copied(),
            merge_tol,
        );
        let done = next.approx_eq(prev, merge_tol);
        seq.push(next);
        if done {
            break;
        }
    }
    seq
}

pub fn saturate(map: &PeMap, seed: Interval, n_max: usize) -> Saturation {
    saturate_with(map, seed, n_max, DEFAULT_MERGE_TOL)
}

pub fn saturate_with(map: &PeMap, seed: Interval, n_max: usize, merge_tol: f64) -> Saturation {
    let mut seq = saturation_sequence(map, seed, n_max, merge_tol);
    let steps = seq.len() - 1;
    let stabilized = steps >= 1 && seq[steps].approx_eq(&seq[steps - 1], merge_tol);
    Saturation {
        union: seq.pop().expect("non-empty"),
        steps: if stabilized { steps - 1 } else { steps },
        stabilized,
    }
}

/// Exact support of a component: the saturation of a small interval around
/// its densest cell, shrunk by `f` until stable so that any part of the seed
/// outside the support is shed. Endpoints come out as one-sided images of
/// partition points, so they are exact up to round-off.
pub fn support_from_saturation(map: &PeMap, comp: &ErgodicComponent) -> Result<IntervalUnion> {
    let (k, _) = comp
        .density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::EmptyInput)?;
    let w = comp.cell_width();
    let c = (k as f64 + 0.5) * w;
    let seed = Interval::new(c - w / 4.0, c + w / 4.0);
    let sat = saturate(map, seed, DEFAULT_SATURATION_STEPS);
    if !sat.stabilized {
        return Err(Error::SaturationUnstable(DEFAULT_SATURATION_STEPS));
    }
    let mut cur = sat.union;
    for _ in 0..DEFAULT_SATURATION_STEPS {
        let next = map.image_of(&cur);
        if next.approx_eq(&cur, DEFAULT_MERGE_TOL) {
            return Ok(next);
        }
        cur = next;
    }
    Err(Error::SaturationUnstable(DEFAULT_SATURATION_STEPS))
}

/// Largest Hausdorff distance, in cells, between a grid support and the
/// exact support that replaces it.
pub const SUPPORT_UPGRADE_CELLS: f64 = 16.0;

/// Largest grid mass outside an exact support that still counts as
/// discretization smear.
pub const SUPPORT_UPGRADE_MASS: f64 = 5e-2;

/// Replaces grid supports by exact ones where the saturation stabilizes
/// close to the grid support. Grid endpoints overshoot by up to about `σ`
/// cells, since a cell's image spreads mass over that many cells; with
/// slopes near 1 the smear reaches further but carries little mass. Returns
/// which components were upgraded.
pub fn upgrade_supports(map: &PeMap, comps: &mut [ErgodicComponent]) -> Vec<bool> {
    comps
        .iter_mut()
        .map(|c| match support_from_saturation(map, c) {
            Ok(exact) if close_to_grid(&exact, c) => {
                c.support = exact;
                true
            }
            _ => false,
        })
        .collect()
}

fn close_to_grid(exact: &IntervalUnion, c: &ErgodicComponent) -> bool {
    let w = c.cell_width();
    if hausdorff_or_inf(exact, &c.support) <= SUPPORT_UPGRADE_CELLS * w {
        return true;
    }
    let outside: f64 = c
        .density
        .iter()
        .enumerate()
        .filter(|(k, _)| !exact.contains_point((*k as f64 + 0.5) * w, w))
        .map(|(_, d)| d * w)
        .sum();
    exact.is_subset_of(&c.support, 2.0 * w) && outside <= SUPPORT_UPGRADE_MASS
}

pub const DEFAULT_MAX_MIXING_PERIOD: usize = 8;

/// `Ω(I)` under `f^q`: `Ω_{n+1} = I ∪ f^q(Ω_n ∖ D_{f^q})`.
pub fn saturate_iterate(map: &PeMap, seed: Interval, q: usize, n_max: usize) -> Saturation {
    let base = IntervalUnion::from_intervals([seed]);
    let mut cur = base.clone();
    for step in 0..n_max {
        let mut img = cur.clone();
        for _ in 0..q {
            img = map.image_of(&img);
        }
        let next = base.union(&img);
        if next.approx_eq(&cur, DEFAULT_MERGE_TOL) {
            return Saturation {
                union: next,
                steps: step,
                stabilized: true,
            };
        }
        cur = next;
    }
    Saturation {
        union: cur,
        steps: n_max,
        stabilized: false,
    }
}

/// Exact mixing parts of a support `A`. For the true period `k`, the
/// saturation `S` of a small seed under `f^q` is a union of `k / gcd(q, k)`
/// interleaved parts, and the images of `S` under `f` cycle with that
/// length. The longest cycle of pairwise almost disjoint images gives the
/// parts.
pub fn exact_mixing_parts(map: &PeMap, support: &IntervalUnion, max_q: usize) -> Result<Vec<IntervalUnion>> {
    let longest = support
        .intervals()
        .iter()
        .max_by(|a, b| a.len().total_cmp(&b.len()))
        .ok_or(Error::EmptyInput)?;
    // off-centre seed, away from symmetric special points
    let c = longest.lo + 0.382 * longest.len();
    let r = 5e-4 * longest.len();
    let seed = Interval::new(c - r, c + r);
    let mut best: Vec<IntervalUnion> = vec![support.clone()];
    for q in 2..=max_q {
        let sat = saturate_iterate(map, seed, q, DEFAULT_SATURATION_STEPS);
        if !sat.stabilized {
            return Err(Error::SaturationUnstable(DEFAULT_SATURATION_STEPS));
        }
        let mut cycle = vec![sat.union];
        loop {
            let next = map.image_of(cycle.last().expect("non-empty"));
            if next.approx_eq(&cycle[0], DEFAULT_MERGE_TOL) {
                break;
            }
            if cycle.len() > q {
                cycle.clear();
                break;
            }
            cycle.push(next);
        }
        let disjoint = (0..cycle.len())
            .all(|i| (i + 1..cycle.len()).all(|j| cycle[i].intersection(&cycle[j]).measure() <= DEFAULT_MERGE_TOL));
        if disjoint && cycle.len() > best.len() {
            best = cycle;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    /// The last point is back in the interior of the support.
    Interior,
    /// The last point repeats the point with this index.
    Repeats(usize),
    /// The last point is a fixed endpoint 0 or 1.
    EndpointFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundarySegment {
    pub segment: OrbitSegment,
    pub terminal: Terminal,
}

impl BoundarySegment {
    pub fn points(&self) -> &[f64] {
        &self.segment.points
    }
}

fn nearest(points: &[f64], x: f64, tol: f64) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - x).abs() <= tol)
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
}

fn is_fixed_endpoint(map: &PeMap, x: f64, tol: f64) -> bool {
    (x.abs() <= tol || (x - 1.0).abs() <= tol) && (map.eval(x) - x).abs() <= tol
}

/// Boundary segments from every `d ∈ D ∩ int(A)` on both sides, followed
/// while the orbit stays on `∂A` (matched within `snap`). Segments with the
/// same point set are reported once.
pub fn boundary_segments(
    map: &PeMap,
    support: &IntervalUnion,
    max_len: usize,
    snap: f64,
) -> Result<Vec<BoundarySegment>> {
    let tol = map.point_tol();
    let ends = support.endpoints();
    let mut out: Vec<BoundarySegment> = Vec::new();
    for &d in map.discontinuities() {
        if !support.in_interior(d, tol) {
            continue;
        }
        for side in Side::BOTH {
            let seg = follow_boundary(map, support, &ends, d, side, max_len, snap, tol)?;
            let dup = out.iter().any(|o| {
                o.segment.points.len() == seg.segment.points.len()
                    && o.segment
                        .points
                        .iter()
                        .zip(&seg.segment.points)
                        .all(|(a, b)| (a - b).abs() <= tol)
            });
            if !dup {
                out.push(seg);
            }
        }
    }
    for &e in &ends {
        let covered = out
            .iter()
            .any(|s| s.points()[1..].iter().any(|p| (p - e).abs() <= snap));
        if !covered {
            return Err(Error::BoundaryNotCovered(e));
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn follow_boundary(
    map: &PeMap,
    support: &IntervalUnion,
    ends: &[f64],
    d: f64,
    side: Side,
    max_len: usize,
    snap: f64,
    tol: f64,
) -> Result<BoundarySegment> {
    let (mut points, mut sides) = (vec![d], vec![side]);
    let (mut cur, mut s) = (d, side);
    for k in 1..=max_len {
        (cur, s) = map.step(cur, s);
        points.push(cur);
        sides.push(s);
        let on_boundary = nearest(ends, cur, snap).is_some();
        let terminal = if k >= 2 && on_boundary && is_fixed_endpoint(map, cur, tol) {
            Some(Terminal::EndpointFixed)
        } else if let Some(j) = (1..k).find(|&j| (points[j] - cur).abs() <= tol) {
            Some(Terminal::Repeats(j))
        } else if on_boundary {
            None
        } else if support.contains_point(cur, tol) {
            Some(Terminal::Interior)
        } else {
            return Err(Error::HypothesisViolated(format!(
                "orbit of {d} leaves the support at {cur} after {k} steps"
            )));
        };
        if let Some(terminal) = terminal {
            return Ok(BoundarySegment {
                segment: OrbitSegment {
                    start: d,
                    side,
                    points,
                    sides,
                },
                terminal,
            });
        }
    }
    Err(Error::SegmentTooLong { start: d, max_len })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

impl Status {
    fn and(self, other: Status) -> Status {
        match (self, other) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Indeterminate, _) | (_, Status::Indeterminate) => Status::Indeterminate,
            _ => Status::Pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub status: Status,
    pub witnesses: Vec<String>,
}

impl Clause {
    fn pass() -> Clause {
        Clause {
            status: Status::Pass,
            witnesses: Vec::new(),
        }
    }

    fn note(&mut self, status: Status, witness: String) {
        self.status = self.status.and(status);
        self.witnesses.push(witness);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrecheckHit {
    /// `x_k` lands on the partition point `d`.
    ReachesDiscontinuity { d: f64 },
    /// `x_k` revisits `x_j`, so `x_j` is periodic with period `k − j`.
    ReachesPeriodic { point: f64, index: usize, period: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct PrecheckWitness {
    pub segment: OrbitSegment,
    pub hit: PrecheckHit,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub depth: usize,
    /// Whether no orbit segment from `D` ends in `D` or at a periodic point
    /// (checked to `depth`).
    pub sufficient_precheck: bool,
    pub precheck_witnesses: Vec<PrecheckWitness>,
    pub disjoint_supports: Clause,
    pub separated_mixing_parts: Clause,
    pub boundary_avoids_discontinuities: Clause,
    pub no_periodic_boundary: Clause,
    pub verdict: Status,
    /// Supports recomputed by saturation, one per component.
    pub supports: Vec<IntervalUnion>,
    /// Exact mixing parts per component (grid parts where saturation failed).
    pub mixing_parts: Vec<Vec<IntervalUnion>>,
}

impl SeparationReport {
    pub fn passes(&self) -> bool {
        self.verdict == Status::Pass
    }
}

/// Follows both one-sided orbits of every partition point for `depth` steps
/// and records the first hit of `D` or of an earlier orbit point.
pub fn precheck(map: &PeMap, depth: usize) -> Vec<PrecheckWitness> {
    let tol = map.point_tol();
    let mut out = Vec::new();
    for &d in map.discontinuities() {
        for side in Side::BOTH {
            let (mut points, mut sides) = (vec![d], vec![side]);
            let (mut cur, mut s) = (d, side);
            for k in 1..=depth {
                (cur, s) = map.step(cur, s);
                points.push(cur);
                sides.push(s);
                let hit = if let Some(i) = map.near_discontinuity(cur) {
                    Some(PrecheckHit::ReachesDiscontinuity {
                        d: map.discontinuities()[i],
                    })
                } else {
                    (1..k)
                        .find(|&j| (points[j] - cur).abs() <= tol)
                        .map(|j| PrecheckHit::ReachesPeriodic {
                            point: points[j],
                            index: j,
                            period: k - j,
                        })
                };
                if let Some(hit) = hit {
                    out.push(PrecheckWitness {
                        segment: OrbitSegment {
                            start: d,
                            side,
                            points: points.clone(),
                            sides: sides.clone(),
                        },
                        hit,
                    });
                    break;
                }
            }
        }
    }
    out
}

/// Smallest `p ≤ depth` with `f^p(x) = x` within the point tolerance.
pub fn periodic_period(map: &PeMap, x: f64, side: Side, depth: usize) -> Option<usize> {
    let tol = map.point_tol();
    let (mut cur, mut s) = (x, side);
    for p in 1..=depth {
        (cur, s) = map.step(cur, s);
        if (cur - x).abs() <= tol {
            return Some(p);
        }
    }
    None
}

/// Side of `x` on which the support lies (plus for left endpoints).
fn inner_side(support: &IntervalUnion, x: f64, tol: f64) -> Side {
    if support.intervals().iter().any(|i| (i.lo - x).abs() <= tol) {
        Side::Plus
    } else {
        Side::Minus
    }
}

pub fn check_separation(map: &PeMap, comps: &[ErgodicComponent], depth: usize) -> SeparationReport {
    let tol = map.point_tol();
    let witnesses = precheck(map, depth);
    let sufficient_precheck = witnesses.is_empty();

    let mut disjoint = Clause::pass();
    let mut mixing = Clause::pass();
    let mut avoid_d = Clause::pass();
    let mut no_periodic = Clause::pass();

    let supports: Vec<IntervalUnion> = comps
        .iter()
        .enumerate()
        .map(|(i, c)| {
            support_from_saturation(map, c).unwrap_or_else(|e| {
                disjoint.note(
                    Status::Indeterminate,
                    format!("component {i}: {e}; using the grid support"),
                );
                c.support.clone()
            })
        })
        .collect();

    for i in 0..comps.len() {
        for j in i + 1..comps.len() {
            let common = supports[i].intersection(&supports[j]);
            if !common.is_empty() {
                let cell = comps[i].cell_width();
                let status = if common.measure() > cell {
                    Status::Fail
                } else {
                    Status::Indeterminate
                };
                disjoint.note(
                    status,
                    format!("supports of components {i} and {j} meet in {:?}", common.intervals()),
                );
            }
        }
    }

    let mut exact = vec![true; comps.len()];
    let mixing_parts: Vec<Vec<IntervalUnion>> = comps
        .iter()
        .zip(&supports)
        .enumerate()
        .map(|(i, (c, sup))| {
            exact_mixing_parts(map, sup, DEFAULT_MAX_MIXING_PERIOD.max(c.period)).unwrap_or_else(|e| {
                mixing.note(
                    Status::Indeterminate,
                    format!("component {i}: {e}; using the grid mixing parts"),
                );
                exact[i] = false;
                c.mixing_parts.clone()
            })
        })
        .collect();
    let parts: Vec<(usize, usize, &IntervalUnion)> = mixing_parts
        .iter()
        .enumerate()
        .flat_map(|(i, ps)| ps.iter().enumerate().map(move |(j, p)| (i, j, p)))
        .collect();
    for a in 0..parts.len() {
        for b in a + 1..parts.len() {
            let (ia, ja, pa) = parts[a];
            let (ib, jb, pb) = parts[b];
            if exact[ia] && exact[ib] {
                let common = pa.intersection(pb);
                if !common.is_empty() {
                    mixing.note(
                        Status::Fail,
                        format!(
                            "mixing parts ({ia},{ja}) and ({ib},{jb}) meet in {:?}",
                            common.intervals()
                        ),
                    );
                }
            } else {
                // grid parts closer than a cell cannot be told from touching ones
                let cell = comps[ia].cell_width().max(comps[ib].cell_width());
                let common = pa.fatten(0.5 * cell).intersection(&pb.fatten(0.5 * cell));
                if !common.is_empty() {
                    let status = if common.measure() > 2.0 * cell {
                        Status::Fail
                    } else {
                        Status::Indeterminate
                    };
                    mixing.note(
                        status,
                        format!(
                            "mixing parts ({ia},{ja}) and ({ib},{jb}) touch near {:?}",
                            common.intervals()
                        ),
                    );
                }
            }
        }
    }

    for (i, (sup, parts)) in supports.iter().zip(&mixing_parts).enumerate() {
        let period = parts.len();
        let dk = map.discontinuity_set(period);
        for b in sup.endpoints() {
            if let Some(d) = dk.iter().find(|&&d| (d - b).abs() <= tol) {
                avoid_d.note(
                    Status::Fail,
                    format!("boundary point {b} of component {i} lies in D_f^{period} at {d}"),
                );
            }
            if b > tol && b < 1.0 - tol {
                if let Some(p) = periodic_period(map, b, inner_side(sup, b, tol), depth) {
                    no_periodic.note(
                        Status::Fail,
                        format!("boundary point {b} of component {i} is periodic with period {p}"),
                    );
                }
            }
        }
    }

    let verdict = disjoint
        .status
        .and(mixing.status)
        .and(avoid_d.status)
        .and(no_periodic.status);
    SeparationReport {
        depth,
        sufficient_precheck,
        precheck_witnesses: witnesses,
        disjoint_supports: disjoint,
        separated_mixing_parts: mixing,
        boundary_avoids_discontinuities: avoid_d,
        no_periodic_boundary: no_periodic,
        verdict,
        supports,
        mixing_parts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Discontinuity,
    PeriodicEndpoint,
    LeftBoundary,
    RightBoundary,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiEntry {
    pub x: f64,
    pub value: f64,
    pub order: usize,
    pub kind: PointKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrappingRegion {
    /// `[φ(α_i), φ(β_i)]` for the partition of `A` by the points of `E`.
    pub pieces: Vec<Interval>,
    pub region: IntervalUnion,
    pub phi: Vec<PhiEntry>,
    /// The exact support `A` the region was transported from.
    pub support: IntervalUnion,
    /// Worst amount by which `g(region)` leaves `region`.
    pub invariance_excess: f64,
}

impl TrappingRegion {
    pub fn phi(&self, x: f64, tol: f64) -> Option<f64> {
        self.phi.iter().find(|e| (e.x - x).abs() <= tol).map(|e| e.value)
    }
}

/// Snaps grid support endpoints to the exact boundary-orbit points within
/// `snap`.
pub fn snap_support(support: &IntervalUnion, segs: &[BoundarySegment], snap: f64) -> Result<IntervalUnion> {
    let candidates: Vec<f64> = segs.iter().flat_map(|s| s.points()[1..].iter().copied()).collect();
    let fix = |x: f64| -> Result<f64> {
        nearest(&candidates, x, snap)
            .map(|i| candidates[i])
            .ok_or(Error::BoundaryNotCovered(x))
    };
    let ivs = support
        .intervals()
        .iter()
        .map(|iv| Ok(Interval::new(fix(iv.lo)?, fix(iv.hi)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalUnion::from_intervals(ivs))
}

/// Builds `U_μ(g)`: the boundary points of `A_μ` are transported to `g` by
/// induction on their order along boundary segments, and the region is the
/// union of the transported partition intervals of `A_μ`.
pub fn trapping_region(
    f: &PeMap,
    comp: &ErgodicComponent,
    segs: &[BoundarySegment],
    g: &PeMap,
) -> Result<TrappingRegion> {
    trapping_region_with(f, comp, segs, g, DEFAULT_TRAP_TOL)
}

pub fn trapping_region_with(
    f: &PeMap,
    comp: &ErgodicComponent,
    segs: &[BoundarySegment],
    g: &PeMap,
    trap_tol: f64,
) -> Result<TrappingRegion> {
    if f.branch_count() != g.branch_count() {
        return Err(Error::BranchCountMismatch(f.branch_count(), g.branch_count()));
    }
    let tol = f.point_tol();
    let support = match support_from_saturation(f, comp) {
        Ok(exact) => exact,
        Err(_) => snap_support(&comp.support, segs, 2.0 * comp.cell_width())?,
    };
    let boundary = support.endpoints();

    for &b in &boundary {
        if let Some(i) = f.near_discontinuity(b) {
            return Err(Error::HypothesisViolated(format!(
                "boundary point {b} is the partition point {}",
                f.discontinuities()[i]
            )));
        }
    }

    let mut entries: Vec<PhiEntry> = Vec::new();
    let mut pending: Vec<(f64, PointKind)> = Vec::new();
    for (i, &d) in f.discontinuities().iter().enumerate() {
        if support.in_interior(d, tol) {
            entries.push(PhiEntry {
                x: d,
                value: g.discontinuities()[i],
                order: 0,
                kind: PointKind::Discontinuity,
            });
        }
    }
    for &b in &boundary {
        let side = inner_side(&support, b, tol);
        let periodic = periodic_period(f, b, side, DEFAULT_DEPTH).is_some();
        if periodic {
            if b > tol && b < 1.0 - tol {
                return Err(Error::HypothesisViolated(format!("boundary point {b} is periodic")));
            }
            let order = order_of(segs, b, tol);
            entries.push(PhiEntry {
                x: b,
                value: b,
                order,
                kind: PointKind::PeriodicEndpoint,
            });
        } else {
            let kind = if side == Side::Plus {
                PointKind::LeftBoundary
            } else {
                PointKind::RightBoundary
            };
            pending.push((b, kind));
        }
    }
    pending.sort_by(|a, b| {
        order_of(segs, a.0, tol)
            .cmp(&order_of(segs, b.0, tol))
            .then(a.0.total_cmp(&b.0))
    });

    // E as known before the induction; preimages are searched inside E only
    let e_points: Vec<f64> = entries.iter().map(|e| e.x).chain(pending.iter().map(|p| p.0)).collect();
    while !pending.is_empty() {
        let mut progressed = false;
        let mut rest = Vec::new();
        for (x, kind) in pending {
            let mut preimages = Vec::new();
            for &z in &e_points {
                for s in Side::BOTH {
                    if (f.eval_one_sided(z, s) - x).abs() <= tol {
                        preimages.push((z, s));
                    }
                }
            }
            if preimages.is_empty() {
                return Err(Error::HypothesisViolated(format!(
                    "boundary point {x} is not the image of any boundary or partition point"
                )));
            }
            let known: Option<Vec<f64>> = preimages
                .iter()
                .map(|&(z, s)| {
                    entries
                        .iter()
                        .find(|e| (e.x - z).abs() <= tol)
                        .map(|e| g.eval_one_sided(e.value, s))
                })
                .collect();
            match known {
                Some(images) => {
                    let value = if kind == PointKind::LeftBoundary {
                        images.iter().copied().fold(f64::INFINITY, f64::min)
                    } else {
                        images.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    };
                    entries.push(PhiEntry {
                        x,
                        value,
                        order: order_of(segs, x, tol),
                        kind,
                    });
                    progressed = true;
                }
                None => rest.push((x, kind)),
            }
        }
        if !progressed {
            return Err(Error::OrderCycle(rest.iter().map(|p| p.0).collect()));
        }
        pending = rest;
    }
    entries.sort_by(|a, b| a.order.cmp(&b.order).then(a.x.total_cmp(&b.x)));

    let phi_of = |x: f64| -> f64 {
        entries
            .iter()
            .find(|e| (e.x - x).abs() <= tol)
            .map(|e| e.value)
            .expect("φ is defined on E")
    };
    let mut pieces = Vec::new();
    for iv in support.intervals() {
        let mut cuts: Vec<f64> = vec![iv.lo];
        cuts.extend(
            entries
                .iter()
                .filter(|e| e.kind == PointKind::Discontinuity && e.x > iv.lo && e.x < iv.hi)
                .map(|e| e.x),
        );
        cuts.push(iv.hi);
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let (a, b) = (phi_of(w[0]), phi_of(w[1]));
            if a > b {
                return Err(Error::HypothesisViolated(format!(
                    "transported interval [{a}, {b}] from [{}, {}] is reversed; perturbation too large",
                    w[0], w[1]
                )));
            }
            pieces.push(Interval::new(a, b));
        }
    }
    let region = IntervalUnion::from_intervals(pieces.iter().copied());

    let mut excess: f64 = 0.0;
    for p in &pieces {
        for img in g.image_of(&IntervalUnion::from_intervals([*p])).intervals() {
            let e = region
                .intervals()
                .iter()
                .filter(|r| r.lo <= img.hi && r.hi >= img.lo)
                .map(|r| (r.lo - img.lo).max(img.hi - r.hi).max(0.0))
                .fold(f64::INFINITY, f64::min);
            let e = if e.is_finite() {
                e
            } else {
                region.distance_to_point(img.mid()) + 0.5 * img.len()
            };
            if e > trap_tol {
                return Err(Error::InvarianceFailed {
                    image: (img.lo, img.hi),
                    excess: e,
                });
            }
            excess = excess.max(e);
        }
    }
    Ok(TrappingRegion {
        pieces,
        region,
        phi: entries,
        support,
        invariance_excess: excess,
    })
}

/// `ord(x)`: largest index at which `x` occurs on a boundary segment.
fn order_of(segs: &[BoundarySegment], x: f64, tol: f64) -> usize {
    segs.iter()
        .flat_map(|s| s.points().iter().enumerate().skip(1))
        .filter(|(_, p)| (*p - x).abs() <= tol)
        .map(|(k, _)| k)
        .max()
        .unwrap_or(0)
}

/// Hausdorff distance helper that treats empty input as infinitely far.
pub fn hausdorff_or_inf(a: &IntervalUnion, b: &IntervalUnion) -> f64 {
    hausdorff_distance(a, b).unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Formula;
    use crate::transfer::ergodic_components;

    fn pts(s: &BoundarySegment) -> Vec<f64> {
        s.points().to_vec()
    }

    #[test]
    fn saturation_of_doubling_fills_interval() {
        let sat = saturate(&PeMap::doubling(), Interval::new(0.4, 0.45), 200);
        assert!(sat.stabilized);
        assert_eq!(sat.union, IntervalUnion::single(0.0, 1.0));
        assert!(sat.steps <= 8, "{} steps", sat.steps);
        let sat = saturate(&PeMap::tent(), Interval::new(0.1, 0.2), 200);
        assert_eq!(sat.union, IntervalUnion::single(0.0, 1.0));
    }

    #[test]
    fn saturation_is_monotone_and_invariant() {
        let m = PeMap::lorenz(1.3).unwrap();
        let seq = saturation_sequence(&m, Interval::new(0.45, 0.46), 200, DEFAULT_MERGE_TOL);
        for w in seq.windows(2) {
            assert!(w[0].is_subset_of(&w[1], 1e-12));
        }
        let last = seq.last().unwrap();
        assert!(m.image_of(last).is_subset_of(last, DEFAULT_MERGE_TOL));
    }

    #[test]
    fn lorenz_support_has_three_intervals() {
        let m = PeMap::lorenz(1.3).unwrap();
        let comps = ergodic_components(&m, 4096).unwrap();
        let exact = support_from_saturation(&m, &comps[0]).unwrap();
        let a = 1.3;
        let c = a * (a - 1.0) / 2.0;
        let expect = IntervalUnion::from_intervals([
            Interval::new(0.0, c),
            Interval::new(1.0 - a / 2.0, a / 2.0),
            Interval::new(1.0 - c, 1.0),
        ]);
        assert!(exact.approx_eq(&expect, 1e-12), "{exact:?}");
        assert!(hausdorff_distance(&exact, &comps[0].support).unwrap() <= 2.0 / 4096.0);
        // seeded inside one mixing part, the saturation still covers both
        let sat = saturate(&m, Interval::new(0.1, 0.12), 200);
        assert!(sat.union.approx_eq(&expect, 1e-12));
    }

    #[test]
    fn exact_mixing_parts_of_lorenz() {
        let m = PeMap::lorenz(1.3).unwrap();
        let sup = saturate(&m, Interval::new(0.45, 0.46), 200).union;
        let parts = exact_mixing_parts(&m, &sup, 8).unwrap();
        assert_eq!(parts.len(), 2);
        let inner = IntervalUnion::single(0.35, 0.65);
        let outer = IntervalUnion::from_intervals([Interval::new(0.0, 0.195), Interval::new(0.805, 1.0)]);
        let found_inner = parts.iter().any(|p| p.approx_eq(&inner, 1e-12));
        let found_outer = parts.iter().any(|p| p.approx_eq(&outer, 1e-12));
        assert!(found_inner && found_outer, "{parts:?}");
        for (a, k) in [(1.9, 1), (1.15, 4)] {
            let m = PeMap::lorenz(a).unwrap();
            let sup = saturate(&m, Interval::new(0.45, 0.46), 200).union;
            assert_eq!(exact_mixing_parts(&m, &sup, 8).unwrap().len(), k, "a = {a}");
        }
    }

    #[test]
    fn tent_has_a_single_boundary_segment() {
        let segs = boundary_segments(&PeMap::tent(), &IntervalUnion::single(0.0, 1.0), 64, 1e-3).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(pts(&segs[0]), vec![0.5, 1.0, 0.0]);
        assert_eq!(segs[0].terminal, Terminal::EndpointFixed);
    }

    #[test]
    fn doubling_boundary_segments() {
        let segs = boundary_segments(&PeMap::doubling(), &IntervalUnion::single(0.0, 1.0), 64, 1e-3).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(pts(&segs[0]), vec![0.5, 1.0, 1.0]);
        assert_eq!(pts(&segs[1]), vec![0.5, 0.0, 0.0]);
        assert!(segs.iter().all(|s| s.terminal == Terminal::EndpointFixed));
    }

    #[test]
    fn lorenz_segments_cover_all_boundary_points() {
        let m = PeMap::lorenz(1.3).unwrap();
        let comps = ergodic_components(&m, 4096).unwrap();
        let exact = support_from_saturation(&m, &comps[0]).unwrap();
        let segs = boundary_segments(&m, &exact, 64, 2.0 / 4096.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs
            .iter()
            .all(|s| s.terminal == Terminal::Interior && s.segment.len() == 4));
        assert_eq!(exact.endpoints().len(), 6);
    }

    #[test]
    fn coverage_failure_is_reported() {
        // [0, 0.9] is not the support; its endpoint 0.9 is on no segment
        let err = boundary_segments(&PeMap::tent(), &IntervalUnion::single(0.0, 0.9), 64, 1e-3).unwrap_err();
        assert!(matches!(err, Error::BoundaryNotCovered(_)) || matches!(err, Error::HypothesisViolated(_)));
    }

    #[test]
    fn separation_of_named_maps() {
        for m in [PeMap::doubling(), PeMap::tent()] {
            let comps = ergodic_components(&m, 4096).unwrap();
            let rep = check_separation(&m, &comps, 64);
            assert!(rep.passes(), "{rep:#?}");
            assert!(!rep.sufficient_precheck);
        }
        let m = PeMap::lorenz(1.3).unwrap();
        let comps = ergodic_components(&m, 4096).unwrap();
        let rep = check_separation(&m, &comps, 64);
        assert!(rep.passes(), "{rep:#?}");
        assert!(rep.sufficient_precheck);
    }

    #[test]
    fn lorenz_sqrt2_is_not_separated() {
        let m = PeMap::lorenz(2f64.sqrt()).unwrap();
        let comps = ergodic_components(&m, 4096).unwrap();
        let rep = check_separation(&m, &comps, 64);
        assert_eq!(rep.verdict, Status::Fail, "{rep:#?}");
        assert_eq!(rep.separated_mixing_parts.status, Status::Fail);
        assert_eq!(rep.mixing_parts[0].len(), 2);
        let w = rep
            .precheck_witnesses
            .iter()
            .find(|w| matches!(w.hit, PrecheckHit::ReachesPeriodic { .. }))
            .expect("periodic witness");
        assert!(w.segment.len() <= 5);
        if let PrecheckHit::ReachesPeriodic { point, period, .. } = w.hit {
            assert_eq!(period, 2);
            let p = 0.5 * 2f64.sqrt();
            assert!((point - p).abs() < 1e-9 || (point - (1.0 - p)).abs() < 1e-9);
        }
    }

    #[test]
    fn verdict_is_monotone_in_depth() {
        let m = PeMap::lorenz(2f64.sqrt()).unwrap();
        let comps = ergodic_components(&m, 1024).unwrap();
        let mut failed = false;
        for depth in [1, 2, 4, 8, 16, 32] {
            let rep = check_separation(&m, &comps, depth);
            let bad = rep.verdict != Status::Pass;
            assert!(!failed || bad, "verdict recovered at depth {depth}");
            failed |= bad;
        }
    }

    #[test]
    fn trapping_region_for_identity_perturbation() {
        for m in [PeMap::doubling(), PeMap::tent(), PeMap::lorenz(1.3).unwrap()] {
            let comps = ergodic_components(&m, 4096).unwrap();
            let exact = support_from_saturation(&m, &comps[0]).unwrap();
            let segs = boundary_segments(&m, &exact, 64, 2.0 / 4096.0).unwrap();
            let tr = trapping_region(&m, &comps[0], &segs, &m).unwrap();
            assert!(tr.region.approx_eq(&exact, 1e-9), "{:?} vs {:?}", tr.region, exact);
            for e in &tr.phi {
                assert!((e.value - e.x).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn trapping_region_for_lorenz_perturbation() {
        let f = PeMap::lorenz(1.3).unwrap();
        let g = PeMap::lorenz(1.32).unwrap();
        let comps = ergodic_components(&f, 4096).unwrap();
        let exact = support_from_saturation(&f, &comps[0]).unwrap();
        let segs = boundary_segments(&f, &exact, 64, 2.0 / 4096.0).unwrap();
        let tr = trapping_region(&f, &comps[0], &segs, &g).unwrap();
        // hand-computed φ table
        let expect = IntervalUnion::from_intervals([
            Interval::new(0.0, 1.32 * 0.16),
            Interval::new(0.34, 0.66),
            Interval::new(1.0 - 1.32 * 0.16, 1.0),
        ]);
        assert!(tr.region.approx_eq(&expect, 1e-12), "{:?}", tr.region);
        assert_eq!(tr.pieces.len(), 4);
        assert!(tr.invariance_excess <= 1e-6);
        assert!(hausdorff_distance(&tr.region, &exact).unwrap() <= 5.0 * 0.02);
    }

    #[test]
    fn trapping_region_rejects_boundary_in_d() {
        // support [0.25, 1] with the fixed partition point 0.25 on its boundary
        let f = PeMap::new(
            vec![0.0, 0.25, 0.5, 1.0],
            vec![
                Formula::affine(2.0, 0.25),
                Formula::affine(3.0, -0.5),
                Formula::affine(1.5, -0.5),
            ],
        )
        .unwrap();
        let comps = ergodic_components(&f, 4096).unwrap();
        let exact = support_from_saturation(&f, &comps[0]).unwrap();
        assert!(exact.approx_eq(&IntervalUnion::single(0.25, 1.0), 1e-12), "{exact:?}");
        let rep = check_separation(&f, &comps, 64);
        assert_eq!(rep.boundary_avoids_discontinuities.status, Status::Fail);
        let segs: Vec<BoundarySegment> = Side::BOTH
            .into_iter()
            .map(|s| BoundarySegment {
                segment: f.orbit_segment(0.5, s, 2),
                terminal: Terminal::Interior,
            })
            .collect();
        let err = trapping_region(&f, &comps[0], &segs, &f).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(_)), "{err:?}");
    }
}
