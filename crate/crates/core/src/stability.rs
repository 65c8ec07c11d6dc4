//! Combinatorial stability: the correspondence `Θ_g` between ergodic
//! components of `f` and of a nearby `g`, perturbation experiments and
//! parameter sweeps over map families.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attractor::{
    boundary_segments, check_separation, trapping_region, upgrade_supports, DEFAULT_DEPTH, DEFAULT_SEGMENT_LEN,
};
use crate::error::{Error, Result};
use crate::interval::{hausdorff_distance, IntervalUnion};
use crate::map::{distance, Formula, PeMap};
use crate::transfer::{ergodic_components, ErgodicComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Doubling,
    Tent,
    Lorenz,
    LorenzReversed,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Doubling, Family::Tent, Family::Lorenz, Family::LorenzReversed];

    pub fn name(self) -> &'static str {
        match self {
            Family::Doubling => "doubling",
            Family::Tent => "tent",
            Family::Lorenz => "lorenz",
            Family::LorenzReversed => "lorenz_reversed",
        }
    }

    pub fn takes_parameter(self) -> bool {
        matches!(self, Family::Lorenz | Family::LorenzReversed)
    }

    /// The map at parameter `a`; parameter-free families ignore it.
    pub fn build(self, a: f64) -> Result<PeMap> {
        match self {
            Family::Doubling => Ok(PeMap::doubling()),
            Family::Tent => Ok(PeMap::tent()),
            Family::Lorenz => PeMap::lorenz(a),
            Family::LorenzReversed => PeMap::lorenz_reversed(a),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Family, String> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
            format!("unknown family '{s}'; valid families: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThetaOptions {
    pub depth: usize,
    /// Warn when a matched pair has supports with different interval counts.
    pub warn_topology_change: bool,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            depth: DEFAULT_DEPTH,
            warn_topology_change: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub n: usize,
    pub f_components: Vec<ErgodicComponent>,
    pub g_components: Vec<ErgodicComponent>,
    /// Trapping region of each `f` component for `g`.
    pub trapping_regions: Vec<IntervalUnion>,
    /// Pairs `(i, j)`: the support of `g_j` lies in the region of `f_i`.
    /// Supports are the exact ones wherever the saturation resolves them.
    pub matching: Vec<(usize, usize)>,
    pub unmatched_f: Vec<usize>,
    pub unmatched_g: Vec<usize>,
    /// `g` components whose support lies in more than one region.
    pub ambiguous_g: Vec<usize>,
    pub bijective: bool,
    pub period_preserved: bool,
    /// Hausdorff distance between matched supports, one per pair.
    pub hausdorff: Vec<f64>,
    pub d_fg: f64,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn max_hausdorff(&self) -> f64 {
        self.hausdorff.iter().copied().fold(0.0, f64::max)
    }
}

/// Builds `Θ_g`: every `g` component is matched to the unique trapping
/// region (fattened by two cells) that contains its support.
pub fn theta_map(f: &PeMap, g: &PeMap, n: usize) -> Result<StabilityReport> {
    theta_map_with(f, g, n, ThetaOptions::default())
}

pub fn theta_map_with(f: &PeMap, g: &PeMap, n: usize, opts: ThetaOptions) -> Result<StabilityReport> {
    if f.branch_count() != g.branch_count() {
        return Err(Error::BranchCountMismatch(f.branch_count(), g.branch_count()));
    }
    let d_fg = distance(f, g)?.total;
    let mut f_components = ergodic_components(f, n)?;
    upgrade_supports(f, &mut f_components);
    let sep = check_separation(f, &f_components, opts.depth);
    if !sep.passes() {
        return Err(Error::SeparationFailed);
    }
    let slack = 2.0 / n as f64;
    let mut trapping_regions = Vec::with_capacity(f_components.len());
    for (comp, sup) in f_components.iter().zip(&sep.supports) {
        let region = boundary_segments(f, sup, DEFAULT_SEGMENT_LEN, slack)
            .and_then(|segs| trapping_region(f, comp, &segs, g))
            .map_err(|e| Error::TrappingFailed(Box::new(e)))?;
        trapping_regions.push(region.region);
    }
    let mut g_components = ergodic_components(g, n)?;
    upgrade_supports(g, &mut g_components);

    let fattened: Vec<IntervalUnion> = trapping_regions.iter().map(|r| r.fatten(slack)).collect();
    let mut matching = Vec::new();
    let mut ambiguous_g = Vec::new();
    let mut unmatched_g = Vec::new();
    for (j, gc) in g_components.iter().enumerate() {
        let hits: Vec<usize> = (0..fattened.len())
            .filter(|&i| gc.support.is_subset_of(&fattened[i], 1e-12))
            .collect();
        match hits.as_slice() {
            [i] => matching.push((*i, j)),
            [] => unmatched_g.push(j),
            _ => ambiguous_g.push(j),
        }
    }
    let unmatched_f: Vec<usize> = (0..f_components.len())
        .filter(|i| !matching.iter().any(|(k, _)| k == i))
        .collect();
    let injective = (0..f_components.len()).all(|i| matching.iter().filter(|(k, _)| *k == i).count() <= 1);
    let bijective = injective && unmatched_f.is_empty() && unmatched_g.is_empty() && ambiguous_g.is_empty();
    let period_preserved = matching
        .iter()
        .all(|&(i, j)| f_components[i].period == g_components[j].period);

    let mut warnings = Vec::new();
    let mut hausdorff = Vec::with_capacity(matching.len());
    for &(i, j) in &matching {
        let (fs, gs) = (&f_components[i].support, &g_components[j].support);
        hausdorff.push(hausdorff_distance(fs, gs)?);
        if opts.warn_topology_change && fs.len() != gs.len() {
            warnings.push(format!(
                "support of component {i} has {} intervals for f and {} for g",
                fs.len(),
                gs.len()
            ));
        }
    }
    if !injective {
        warnings.push("two g components match the same f component".into());
    }
    Ok(StabilityReport {
        n,
        f_components,
        g_components,
        trapping_regions,
        matching,
        unmatched_f,
        unmatched_g,
        ambiguous_g,
        bijective,
        period_preserved,
        hausdorff,
        d_fg,
        warnings,
    })
}

/// How `g` is obtained from `f` at size `ε`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `g = family(base + ε)`.
    FamilyShift { family: Family, base: f64 },
    /// Every branch is contracted towards the end of its image nearest to
    /// `{0, 1}` by the factor `1 − ε/σ_i`, so affine slopes `s` become
    /// `s − ε·sign(s)·|s|/σ_i`; images stay inside `[0, 1]`.
    Slope,
    /// Seeded per-branch slope jitter, pivot choice and partition jitter.
    Random { seed: u64 },
}

fn pivot_contract(formula: &Formula, lambda: f64, pivot: f64) -> Formula {
    Formula::affine(lambda, pivot * (1.0 - lambda)).compose(formula)
}

fn nearest_image_end(image: (f64, f64)) -> f64 {
    if image.0 <= 1.0 - image.1 {
        image.0
    } else {
        image.1
    }
}

impl Perturbation {
    pub fn apply(&self, f: &PeMap, eps: f64) -> Result<PeMap> {
        match *self {
            Perturbation::FamilyShift { family, base } => family.build(base + eps),
            Perturbation::Slope => {
                let formulas = f
                    .branches()
                    .iter()
                    .map(|b| {
                        let lambda = 1.0 - eps / b.expansion;
                        pivot_contract(&b.formula, lambda, nearest_image_end(b.image()))
                    })
                    .collect();
                PeMap::new(f.partition().to_vec(), formulas)
            }
            Perturbation::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = f.partition();
                let min_gap = p.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let mut q = p.to_vec();
                let last = q.len() - 1;
                for x in &mut q[1..last] {
                    *x += (rng.gen::<f64>() - 0.5) * 0.5 * eps.min(min_gap / 4.0);
                }
                let formulas = f
                    .branches()
                    .iter()
                    .zip(q.windows(2))
                    .map(|(b, w)| {
                        // affine map from the new domain onto the old one
                        let s = (b.hi - b.lo) / (w[1] - w[0]);
                        let back = Formula::affine(s, b.lo - s * w[0]);
                        let moved = b.formula.compose(&back);
                        let lambda = 1.0 - rng.gen::<f64>() * eps / b.expansion;
                        let (lo, hi) = b.image();
                        let pivot = if rng.gen::<bool>() { lo } else { hi };
                        pivot_contract(&moved, lambda, pivot)
                    })
                    .collect();
                PeMap::new(q, formulas)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub eps: f64,
    pub d_fg: Option<f64>,
    pub report: Option<StabilityReport>,
    pub error: Option<String>,
}

/// One `Θ_g` report per `ε`; failures are recorded and the run continues.
pub fn stability_experiment(f: &PeMap, perturb: &Perturbation, eps_list: &[f64], n: usize) -> Vec<ExperimentRow> {
    eps_list
        .par_iter()
        .map(|&eps| {
            let run = perturb.apply(f, eps).and_then(|g| {
                let d = distance(f, &g)?.total;
                Ok((d, theta_map(f, &g, n)))
            });
            match run {
                Ok((d, Ok(report))) => ExperimentRow {
                    eps,
                    d_fg: Some(d),
                    report: Some(report),
                    error: None,
                },
                Ok((d, Err(e))) => ExperimentRow {
                    eps,
                    d_fg: Some(d),
                    report: None,
                    error: Some(e.to_string()),
                },
                Err(e) => ExperimentRow {
                    eps,
                    d_fg: None,
                    report: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Continuity along a list of `ε` values sorted in decreasing order: each
/// Hausdorff value is at most twice the next one plus two cells.
pub fn continuity_holds(rows: &[ExperimentRow], n: usize) -> bool {
    let h: Option<Vec<f64>> = rows
        .iter()
        .map(|r| r.report.as_ref().map(|r| r.max_hausdorff()))
        .collect();
    match h {
        Some(h) => h.windows(2).all(|w| w[0] <= 2.0 * w[1] + 2.0 / n as f64),
        None => false,
    }
}

/// Largest `ε` in the run for which `Θ_g` is a bijection.
pub fn largest_accepted_eps(rows: &[ExperimentRow]) -> Option<f64> {
    rows.iter()
        .filter(|r| r.report.as_ref().is_some_and(|r| r.bijective))
        .map(|r| r.eps)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub n_components: usize,
    pub periods: Vec<usize>,
    pub supports: Vec<IntervalUnion>,
    pub separation: bool,
    /// Set when `(n_components, periods)` differs from the previous row.
    pub transition: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn signature(&self) -> (usize, Vec<usize>) {
        let mut p = self.periods.clone();
        p.sort_unstable();
        (self.n_components, p)
    }
}

pub fn sweep_family<F>(build: F, params: &[f64], n: usize, depth: usize) -> Vec<SweepRow>
where
    F: Fn(f64) -> Result<PeMap> + Sync,
{
    let mut rows: Vec<SweepRow> = params
        .par_iter()
        .map(|&param| {
            let run = build(param).and_then(|m| {
                let comps = ergodic_components(&m, n)?;
                let sep = check_separation(&m, &comps, depth);
                Ok((comps, sep.passes()))
            });
            match run {
                Ok((comps, separation)) => SweepRow {
                    param,
                    n_components: comps.len(),
                    periods: comps.iter().map(|c| c.period).collect(),
                    supports: comps.into_iter().map(|c| c.support).collect(),
                    separation,
                    transition: false,
                    error: None,
                },
                Err(e) => SweepRow {
                    param,
                    n_components: 0,
                    periods: Vec::new(),
                    supports: Vec::new(),
                    separation: false,
                    transition: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    for i in 1..rows.len() {
        rows[i].transition = rows[i].signature() != rows[i - 1].signature();
    }
    rows
}

/// `(previous param, param)` for every flagged transition.
pub fn transitions(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    rows.windows(2)
        .filter(|w| w[1].transition)
        .map(|w| (w[0].param, w[1].param))
        .collect()
}

/// `count` evenly spaced values from `from` to `to` inclusive.
pub fn param_grid(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..count)
            .map(|i| from + (to - from) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
