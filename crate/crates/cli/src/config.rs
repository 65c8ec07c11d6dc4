//! Map definition files and the resolved run configuration.

use serde::{Deserialize, Serialize};

use pemap::map::{Formula, DEFAULT_POINT_TOL};
use pemap::stability::Family;
use pemap::{Expr, PeMap};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchSpec {
    Affine { slope: f64, intercept: f64 },
    Expr { formula: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MapSpec {
    Family {
        family: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<f64>,
    },
    Explicit {
        partition: Vec<f64>,
        branches: Vec<BranchSpec>,
    },
}

impl MapSpec {
    pub fn build(&self, point_tol: f64) -> Result<PeMap, CliError> {
        let map = match self {
            MapSpec::Family { family, a } => {
                let fam: Family = family.parse().map_err(CliError::Config)?;
                let a = match (fam.takes_parameter(), a) {
                    (true, Some(a)) => *a,
                    (true, None) => return Err(CliError::Config(format!("family '{fam}' needs a parameter a"))),
                    (false, _) => 0.0,
                };
                fam.build(a).map_err(|e| CliError::Config(e.to_string()))?
            }
            MapSpec::Explicit { partition, branches } => {
                let formulas = branches
                    .iter()
                    .enumerate()
                    .map(|(i, b)| match b {
                        BranchSpec::Affine { slope, intercept } => Ok(Formula::affine(*slope, *intercept)),
                        BranchSpec::Expr { formula } => Expr::parse(formula)
                            .map(Formula::expr)
                            .map_err(|e| CliError::Config(format!("branch {i}: {e}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                PeMap::new(partition.clone(), formulas).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        Ok(map.with_point_tol(point_tol))
    }
}

/// Parses a map definition (JSON) into a validated map.
pub fn parse_map_config(text: &str) -> Result<PeMap, CliError> {
    let spec: MapSpec = serde_json::from_str(text).map_err(|e| CliError::Config(format!("map definition: {e}")))?;
    spec.build(DEFAULT_POINT_TOL)
}

/// Explicit definition of `map`, readable by [`parse_map_config`].
pub fn map_to_spec(map: &PeMap) -> MapSpec {
    let branches = map
        .branches()
        .iter()
        .map(|b| match &b.formula {
            Formula::Affine { slope, intercept } => BranchSpec::Affine {
                slope: *slope,
                intercept: *intercept,
            },
            Formula::Expr { expr, .. } => BranchSpec::Expr {
                formula: expr.to_string(),
            },
        })
        .collect();
    MapSpec::Explicit {
        partition: map.partition().to_vec(),
        branches,
    }
}

pub fn serialize_map(map: &PeMap) -> String {
    serde_json::to_string_pretty(&map_to_spec(map)).expect("map specs serialize")
}

/// Everything a run depends on; embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Config {
    pub command: String,
    pub map: Option<MapSpec>,
    pub ulam_n: usize,
    pub max_n: usize,
    pub point_tol: f64,
    pub merge_tol: f64,
    pub trap_tol: f64,
    pub depth: usize,
    pub max_period: usize,
    pub n_max: usize,
    pub seed: u64,
    pub eps: Vec<f64>,
    pub params: Vec<f64>,
    pub out: String,
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.ulam_n < 64 {
            return Err(CliError::Config(format!(
                "--ulam-n must be at least 64, got {}",
                self.ulam_n
            )));
        }
        for (name, v) in [
            ("point-tol", self.point_tol),
            ("trap-tol", self.trap_tol),
            ("merge-tol", self.merge_tol),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(CliError::Config(format!("--{name} must be positive, got {v}")));
            }
        }
        if self.max_period == 0 || self.depth == 0 {
            return Err(CliError::Config("--depth and --max-period must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build_map(&self) -> Result<PeMap, CliError> {
        self.map
            .as_ref()
            .ok_or_else(|| CliError::Config("no map given; use --map or --family".into()))?
            .build(self.point_tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pemap::distance;

    #[test]
    fn families_parse() {
        let m = parse_map_config(r#"{"family":"doubling"}"#).unwrap();
        assert_eq!(m.branch_count(), 2);
        assert_eq!(m.sigma(), 2.0);
        let l = parse_map_config(r#"{"family":"lorenz","a":1.3}"#).unwrap();
        assert_eq!(l.partition(), &[0.0, 0.5, 1.0]);
        assert!(l.branches().iter().all(|b| (b.expansion - 1.3).abs() < 1e-12));
        assert!(parse_map_config(r#"{"family":"lorenz_reversed","a":1.5}"#).is_ok());
    }

    #[test]
    fn bad_definitions_are_config_errors() {
        let e = parse_map_config(r#"{"family":"henon","a":1.4}"#).unwrap_err();
        assert!(matches!(&e, CliError::Config(m) if m.contains("lorenz") && m.contains("tent")));
        assert!(matches!(
            parse_map_config(r#"{"family":"lorenz"}"#),
            Err(CliError::Config(_))
        ));
        let slow = r#"{"partition":[0,1],"branches":[{"kind":"affine","slope":0.5,"intercept":0}]}"#;
        assert!(matches!(parse_map_config(slow), Err(CliError::Config(m)) if m.contains("at x =")));
        let bad = r#"{"partition":[0,0.5,1],"branches":[{"kind":"expr","formula":"2*x +"},{"kind":"affine","slope":2,"intercept":-1}]}"#;
        let e = parse_map_config(bad).unwrap_err();
        assert!(matches!(&e, CliError::Config(m) if m.contains("1:")), "{e:?}");
    }

    #[test]
    fn expression_branch() {
        let text = r#"{"partition":[0,0.5,1],"branches":[
            {"kind":"expr","formula":"3*x/2"},
            {"kind":"expr","formula":"2*x - 1"}]}"#;
        let m = parse_map_config(text).unwrap();
        assert_eq!(m.branches()[0].formula, Formula::affine(1.5, 0.0));
        assert_eq!(m.sigma(), 1.5);
    }

    #[test]
    fn round_trip_is_exact() {
        let quad = r#"{"partition":[0,0.5,1],"branches":[
            {"kind":"expr","formula":"2.5*x - x*x"},
            {"kind":"affine","slope":2,"intercept":-1}]}"#;
        for m in [
            PeMap::doubling(),
            PeMap::lorenz(1.37).unwrap(),
            parse_map_config(quad).unwrap(),
        ] {
            let back = parse_map_config(&serialize_map(&m)).unwrap();
            assert_eq!(distance(&m, &back).unwrap().total, 0.0);
        }
    }
}
