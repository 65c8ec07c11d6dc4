//! One-shot analysis of a map: ergodic components with grid refinement,
//! exact supports, boundary segments and the separation check.

use serde::Serialize;

use crate::attractor::{
    boundary_segments, check_separation, support_from_saturation, BoundarySegment, SeparationReport, DEFAULT_DEPTH,
    DEFAULT_SEGMENT_LEN,
};
use crate::error::Result;
use crate::map::PeMap;
use crate::transfer::{ergodic_components, ErgodicComponent};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnalysisOptions {
    pub n: usize,
    /// Largest grid the refinement may reach.
    pub max_n: usize,
    pub depth: usize,
    pub segment_len: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            n: 4096,
            max_n: 16384,
            depth: DEFAULT_DEPTH,
            segment_len: DEFAULT_SEGMENT_LEN,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentBoundary {
    pub segments: Vec<BoundarySegment>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    /// Grid size actually used after refinement.
    pub n: usize,
    pub components: Vec<ErgodicComponent>,
    pub boundaries: Vec<ComponentBoundary>,
    pub separation: SeparationReport,
}

/// Ergodic components, doubling `n` while some support interval (grid or
/// exact) is shorter than three cells.
pub fn components_refined(map: &PeMap, n: usize, max_n: usize) -> Result<(usize, Vec<ErgodicComponent>)> {
    let mut n = n;
    loop {
        let comps = ergodic_components(map, n)?;
        let cell = 1.0 / n as f64;
        // grid supports are blurred at coarse n, so the exact ones decide too
        let thin = comps.iter().any(|c| {
            let exact = support_from_saturation(map, c).unwrap_or_else(|_| c.support.clone());
            [&c.support, &exact]
                .iter()
                .any(|s| s.intervals().iter().any(|i| i.len() < 3.0 * cell))
        });
        if !thin || 2 * n > max_n {
            return Ok((n, comps));
        }
        n *= 2;
    }
}

pub fn analyze(map: &PeMap, opts: AnalysisOptions) -> Result<Analysis> {
    let (n, components) = components_refined(map, opts.n, opts.max_n.max(opts.n))?;
    let separation = check_separation(map, &components, opts.depth);
    let snap = 2.0 / n as f64;
    let boundaries = separation
        .supports
        .iter()
        .map(|sup| match boundary_segments(map, sup, opts.segment_len, snap) {
            Ok(segments) => ComponentBoundary { segments, error: None },
            Err(e) => ComponentBoundary {
                segments: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(Analysis {
        n,
        components,
        boundaries,
        separation,
    })
}
