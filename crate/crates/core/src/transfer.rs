//! Ulam discretization of the transfer operator and the ergodic
//! decomposition read off its transition graph.
//!
//! Each closed communicating class of the graph is one ergodic component.
//! Its period (gcd of cycle lengths) is the mixing period, its cyclic
//! classes are the mixing parts, and the stationary vector of the class is
//! the discretized density.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalUnion};
use crate::map::{Formula, PeMap};

pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const STAY_STEPS: usize = 100;

/// Overlaps shorter than this (in `[0,1]` units) are dropped as round-off.
const MIN_OVERLAP: f64 = 1e-13;

/// Row-stochastic sparse matrix on a uniform grid of `n` cells; entry
/// `(i, j)` is `|C_i ∩ f^{-1}(C_j)| / |C_i|`.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl UlamOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n).map(|i| i as f64 / self.n as f64).collect()
    }

    pub fn cell(&self, i: usize) -> Interval {
        Interval::new(i as f64 / self.n as f64, (i + 1) as f64 / self.n as f64)
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.iter().position(|&k| k == j).map_or(0.0, |p| v[p])
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// `v ↦ v P` (row vector times matrix).
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (c, w) = self.row(i);
            for (&j, &p) in c.iter().zip(w) {
                out[j] += vi * p;
            }
        }
        out
    }
}

pub fn build_ulam(map: &PeMap, n: usize) -> UlamOperator {
    assert!(n >= 1, "Ulam grid needs at least one cell");
    let h = 1.0 / n as f64;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        row.clear();
        let (x0, x1) = (i as f64 * h, (i + 1) as f64 * h);
        for b in map.branches() {
            let lo = x0.max(b.lo);
            let hi = x1.min(b.hi);
            if hi - lo <= 0.0 {
                continue;
            }
            let (u0, u1) = (b.eval(lo).clamp(0.0, 1.0), b.eval(hi).clamp(0.0, 1.0));
            let (ylo, yhi) = (u0.min(u1), u0.max(u1));
            let span = yhi - ylo;
            let j0 = ((ylo * n as f64).floor() as usize).min(n - 1);
            let j1 = ((yhi * n as f64).ceil() as usize).clamp(j0 + 1, n);
            for j in j0..j1 {
                let a = ylo.max(j as f64 * h);
                let c = yhi.min((j + 1) as f64 * h);
                if c - a <= MIN_OVERLAP {
                    continue;
                }
                let mass = match &b.formula {
                    Formula::Affine { .. } => (hi - lo) * (c - a) / span,
                    Formula::Expr { .. } => {
                        let (pa, pc) = (b.inverse_unclamped(a), b.inverse_unclamped(c));
                        (pc - pa).abs().min(hi - lo)
                    }
                };
                row.push((j, mass / h));
            }
        }
        row.sort_by_key(|e| e.0);
        let total: f64 = row.iter().map(|e| e.1).sum();
        let mut last: Option<usize> = None;
        for &(j, v) in &row {
            if last == Some(j) {
                *vals.last_mut().expect("merged entry") += v / total;
            } else {
                cols.push(j);
                vals.push(v / total);
                last = Some(j);
            }
        }
        row_ptr.push(cols.len());
    }
    UlamOperator { n, row_ptr, cols, vals }
}

/// Strongly connected components, iterative Tarjan. Returns the component
/// id of every node and the number of components.
fn strongly_connected(op: &UlamOperator) -> (Vec<usize>, usize) {
    let n = op.n;
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let (mut next_index, mut ncomp) = (0usize, 0usize);
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let (succ, _) = op.row(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    (comp, ncomp)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of a closed class and the cyclic level of each of its cells,
/// from BFS depths: the period is the gcd of `depth(u) + 1 − depth(v)` over
/// all edges `u → v` inside the class.
fn class_period(op: &UlamOperator, cells: &[usize], member: &[bool]) -> (usize, Vec<usize>) {
    let mut depth = vec![usize::MAX; op.n];
    let mut queue = std::collections::VecDeque::new();
    depth[cells[0]] = 0;
    queue.push_back(cells[0]);
    while let Some(u) = queue.pop_front() {
        for &v in op.row(u).0 {
            if member[v] && depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for &u in cells {
        for &v in op.row(u).0 {
            if member[v] {
                let diff = (depth[u] as isize + 1 - depth[v] as isize).unsigned_abs();
                period = gcd(period, diff);
            }
        }
    }
    let period = period.max(1);
    let levels = cells.iter().map(|&c| depth[c] % period).collect();
    (period, levels)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicComponent {
    /// Grid size the component was computed on.
    pub n: usize,
    /// Cells of the closed class, increasing.
    pub cells: Vec<usize>,
    pub support: IntervalUnion,
    /// Density on the full grid; zero off the support, integral 1.
    pub density: Vec<f64>,
    pub period: usize,
    /// Cyclic classes; `f` maps part `j` into part `j + 1 mod period`.
    pub mixing_parts: Vec<IntervalUnion>,
    /// Final stationarity residual `‖ρP − ρ‖_∞` in density units.
    pub residual: f64,
    pub iterations: usize,
    pub basin_mass: Option<f64>,
}

impl ErgodicComponent {
    pub fn cell_width(&self) -> f64 {
        1.0 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_SOLVE_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn ergodic_components(map: &PeMap, n: usize) -> Result<Vec<ErgodicComponent>> {
    let op = build_ulam(map, n);
    components_of(&op, SolveOptions::default())
}

pub fn components_of(op: &UlamOperator, opts: SolveOptions) -> Result<Vec<ErgodicComponent>> {
    let n = op.n;
    let (comp, ncomp) = strongly_connected(op);
    let mut closed = vec![true; ncomp];
    for u in 0..n {
        if op.row(u).0.iter().any(|&v| comp[v] != comp[u]) {
            closed[comp[u]] = false;
        }
    }
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for u in 0..n {
        if closed[comp[u]] {
            classes[comp[u]].push(u);
        }
    }
    let mut classes: Vec<Vec<usize>> = classes.into_iter().filter(|c| !c.is_empty()).collect();
    classes.sort_by_key(|c| c[0]);

    let mut out = Vec::with_capacity(classes.len());
    for cells in classes {
        let mut member = vec![false; n];
        for &c in &cells {
            member[c] = true;
        }
        let (period, levels) = class_period(op, &cells, &member);
        let (density, residual, iterations) = stationary_density(op, &cells, opts)?;
        let h = op.cell_width();
        let support = cells_to_union(cells.iter().copied(), h);
        let mixing_parts = (0..period)
            .map(|r| cells_to_union(cells.iter().zip(&levels).filter(|(_, &l)| l == r).map(|(&c, _)| c), h))
            .collect();
        out.push(ErgodicComponent {
            n,
            cells,
            support,
            density,
            period,
            mixing_parts,
            residual,
            iterations,
            basin_mass: None,
        });
    }
    Ok(out)
}

fn cells_to_union(cells: impl Iterator<Item = usize>, h: f64) -> IntervalUnion {
    let mut ivs: Vec<Interval> = Vec::new();
    for c in cells {
        let (a, b) = (c as f64 * h, (c + 1) as f64 * h);
        match ivs.last_mut() {
            Some(last) if (last.hi - a).abs() < 0.5 * h => last.hi = b,
            _ => ivs.push(Interval::new(a, b)),
        }
    }
    IntervalUnion::from_intervals(ivs)
}

/// Stationary density of a closed class by power iteration on the lazy
/// chain `(I + P)/2`, which shares the stationary vector of `P` and is
/// aperiodic whatever the period of the class.
fn stationary_density(op: &UlamOperator, cells: &[usize], opts: SolveOptions) -> Result<(Vec<f64>, f64, usize)> {
    let n = op.n;
    let scale = n as f64; // probability -> density
    let mut pi = vec![0.0; n];
    for &c in cells {
        pi[c] = 1.0 / cells.len() as f64;
    }
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        for &c in cells {
            next[c] = 0.0;
        }
        for &u in cells {
            let pu = pi[u];
            let (cs, ws) = op.row(u);
            for (&v, &w) in cs.iter().zip(ws) {
                next[v] += pu * w;
            }
        }
        residual = cells.iter().map(|&c| (next[c] - pi[c]).abs()).fold(0.0, f64::max) * scale;
        if residual <= opts.tol {
            let total: f64 = cells.iter().map(|&c| next[c]).sum();
            let density = (0..n).map(|i| next[i] / total * scale).collect();
            return Ok((density, residual, it));
        }
        for &c in cells {
            pi[c] = 0.5 * (pi[c] + next[c]);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Grid L¹ distance `Σ |d_i − r_i| / n`.
pub fn density_l1_error(density: &[f64], reference: &[f64]) -> Result<f64> {
    if density.len() != reference.len() {
        return Err(Error::GridMismatch(density.len(), reference.len()));
    }
    let n = density.len() as f64;
    Ok(density.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinEstimate {
    pub masses: Vec<f64>,
    pub unassigned: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Monte Carlo basin fractions: a sample is assigned to a component when its
/// orbit, after `burn_in` steps, stays in that component's support
/// (fattened by two cells) for the next `STAY_STEPS` steps.
pub fn estimate_basins(
    map: &PeMap,
    comps: &[ErgodicComponent],
    samples: usize,
    burn_in: usize,
    seed: u64,
) -> BasinEstimate {
    assert!(samples >= 1, "need at least one sample");
    let fat: Vec<IntervalUnion> = comps.iter().map(|c| c.support.fatten(2.0 * c.cell_width())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; comps.len()];
    for _ in 0..samples {
        let mut x: f64 = rng.gen();
        for _ in 0..burn_in {
            x = map.eval(x);
        }
        let mut inside: Vec<bool> = fat.iter().map(|u| u.contains_point(x, 0.0)).collect();
        for _ in 0..STAY_STEPS {
            x = map.eval(x);
            for (k, u) in fat.iter().enumerate() {
                inside[k] &= u.contains_point(x, 0.0);
            }
        }
        if let Some(k) = inside.iter().position(|&b| b) {
            hits[k] += 1;
        }
    }
    let masses: Vec<f64> = hits.iter().map(|&h| h as f64 / samples as f64).collect();
    let unassigned = 1.0 - masses.iter().sum::<f64>();
    BasinEstimate {
        masses,
        unassigned,
        samples,
        seed,
    }
}

/// Worst excess of `f(Λ_j ∖ D)` over `Λ_{j+1}`.
pub fn pushforward_excess(map: &PeMap, comp: &ErgodicComponent) -> f64 {
    let k = comp.period;
    (0..k)
        .map(|j| {
            let image = map.image_of(&comp.mixing_parts[j]);
            let target = &comp.mixing_parts[(j + 1) % k];
            image
                .intervals()
                .iter()
                .flat_map(|iv| [iv.lo, iv.hi])
                .map(|y| target.distance_to_point(y))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
