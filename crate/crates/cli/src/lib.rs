//! Command-line front end: map definitions, orchestration of the analyses
//! and report files.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pemap::analysis::{analyze, AnalysisOptions};
use pemap::attractor::{
    check_separation, exact_mixing_parts, DEFAULT_DEPTH, DEFAULT_SATURATION_STEPS, DEFAULT_TRAP_TOL,
};
use pemap::interval::DEFAULT_MERGE_TOL;
use pemap::map::DEFAULT_POINT_TOL;
use pemap::periodic::{exactness_check, find_periodic, DEFAULT_TRIALS};
use pemap::stability::{
    continuity_holds, largest_accepted_eps, param_grid, stability_experiment, sweep_family, transitions, Family,
    Perturbation,
};
use pemap::transfer::{estimate_basins, DEFAULT_BURN_IN};
use pemap::PeMap;

pub use config::{map_to_spec, parse_map_config, serialize_map, BranchSpec, Config, MapSpec};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or map definition (exit code 2).
    Config(String),
    /// The analysis itself failed (exit code 1).
    Analysis(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Analysis(m) => write!(f, "analysis failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Analysis(_) | CliError::Io(_) => 1,
        }
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

fn analysis(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "pemap",
    version,
    about = "Attractors and stability of piecewise expanding interval maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ergodic components, supports, boundary segments and separation.
    Analyze(CommonArgs),
    /// Periodic orbits and the coprime-period exactness test.
    Periodic(CommonArgs),
    /// Correspondence of ergodic components under perturbations.
    Stability(CommonArgs),
    /// Parameter sweep over a map family.
    Sweep(CommonArgs),
    /// The separation condition with witnesses.
    CheckSeparation(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbationKind {
    /// Shift the family parameter by eps.
    Family,
    /// Contract every branch slope by eps.
    Slope,
    /// Seeded random slope, pivot and partition jitter of size eps.
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Map definition file (JSON).
    #[arg(long, conflicts_with = "family")]
    pub map: Option<PathBuf>,
    /// Built-in family: doubling, tent, lorenz, lorenz_reversed.
    #[arg(long)]
    pub family: Option<String>,
    /// Family parameter.
    #[arg(long)]
    pub a: Option<f64>,
    /// Ulam grid size.
    #[arg(long, default_value_t = 4096)]
    pub ulam_n: usize,
    /// Largest grid reached by refinement.
    #[arg(long, default_value_t = 16384)]
    pub max_n: usize,
    /// Orbit depth for separation and periodicity checks.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    /// Largest period enumerated.
    #[arg(long, default_value_t = 10)]
    pub max_period: usize,
    /// Saturation step budget.
    #[arg(long, default_value_t = DEFAULT_SATURATION_STEPS)]
    pub n_max: usize,
    /// Point-equality tolerance.
    #[arg(long, default_value_t = DEFAULT_POINT_TOL)]
    pub point_tol: f64,
    /// Trapping-region invariance slack.
    #[arg(long, default_value_t = DEFAULT_TRAP_TOL)]
    pub trap_tol: f64,
    /// Perturbation sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.04, 0.02, 0.01])]
    pub eps: Vec<f64>,
    /// How perturbations are built (default: family shift for families
    /// with a parameter, slope otherwise).
    #[arg(long, value_enum)]
    pub perturbation: Option<PerturbationKind>,
    #[arg(long)]
    pub param_from: Option<f64>,
    #[arg(long)]
    pub param_to: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub param_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "pemap-out")]
    pub out: PathBuf,
}

fn resolve(name: &str, args: &CommonArgs) -> Result<Config, CliError> {
    let map = match (&args.map, &args.family) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let spec: MapSpec =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(spec)
        }
        (None, Some(family)) => {
            let fam: Family = family.parse().map_err(CliError::Config)?;
            Some(MapSpec::Family {
                family: fam.name().to_string(),
                a: args.a,
            })
        }
        (None, None) => None,
    };
    let params = match (args.param_from, args.param_to) {
        (Some(from), Some(to)) => param_grid(from, to, args.param_steps),
        (None, None) if args.param_steps == 0 => Vec::new(),
        _ => return Err(CliError::Config("--param-from and --param-to go together".into())),
    };
    let cfg = Config {
        command: name.to_string(),
        map,
        ulam_n: args.ulam_n,
        max_n: args.max_n.max(args.ulam_n),
        point_tol: args.point_tol,
        merge_tol: DEFAULT_MERGE_TOL,
        trap_tol: args.trap_tol,
        depth: args.depth,
        max_period: args.max_period,
        n_max: args.n_max,
        seed: args.seed,
        eps: args.eps.clone(),
        params,
        out: args.out.display().to_string(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(io)?;
    text.push('\n');
    fs::write(&path, text).map_err(io)?;
    Ok(path)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config: &'a Config,
    #[serde(flatten)]
    body: T,
}

/// Result of one command: files written and a short summary for stdout.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub fn cmd_analyze(cfg: &Config) -> Result<Outcome, CliError> {
    let map = cfg.build_map()?;
    let dir = PathBuf::from(&cfg.out);
    let opts = AnalysisOptions {
        n: cfg.ulam_n,
        max_n: cfg.max_n,
        depth: cfg.depth,
        ..AnalysisOptions::default()
    };
    let mut result = match analyze(&map, opts) {
        Ok(r) => r,
        Err(e) => {
            #[derive(Serialize)]
            struct Failure {
                error: String,
            }
            write_json(
                &dir,
                "analysis.json",
                &Envelope {
                    config: cfg,
                    body: Failure { error: e.to_string() },
                },
            )?;
            return Err(analysis(e));
        }
    };
    let basins = estimate_basins(&map, &result.components, 10_000, DEFAULT_BURN_IN, cfg.seed);
    for (c, m) in result.components.iter_mut().zip(&basins.masses) {
        c.basin_mass = Some(*m);
    }

    let mut files = Vec::new();
    let mut summary = vec![format!(
        "grid n = {}, {} ergodic component(s)",
        result.n,
        result.components.len()
    )];
    for (i, c) in result.components.iter().enumerate() {
        let path = dir.join(format!("density_{i}.txt"));
        let mut text = String::new();
        let w = 1.0 / c.n as f64;
        for (k, d) in c.density.iter().enumerate() {
            text.push_str(&format!("{} {}\n", (k as f64 + 0.5) * w, d));
        }
        fs::create_dir_all(&dir).map_err(io)?;
        fs::write(&path, text).map_err(io)?;
        files.push(path);
        summary.push(format!(
            "component {i}: period {}, support {:?}, basin mass {:.3}",
            c.period,
            result.separation.supports[i]
                .intervals()
                .iter()
                .map(|iv| (iv.lo, iv.hi))
                .collect::<Vec<_>>(),
            c.basin_mass.unwrap_or(f64::NAN)
        ));
    }
    summary.push(format!("separation verdict: {:?}", result.separation.verdict));

    #[derive(Serialize)]
    struct Body<'a> {
        analysis: &'a pemap::analysis::Analysis,
        basins: &'a pemap::transfer::BasinEstimate,
    }
    files.insert(
        0,
        write_json(
            &dir,
            "analysis.json",
            &Envelope {
                config: cfg,
                body: Body {
                    analysis: &result,
                    basins: &basins,
                },
            },
        )?,
    );
    Ok(Outcome { files, summary })
}

pub fn cmd_check_separation(cfg: &Config) -> Result<Outcome, CliError> {
    let map = cfg.build_map()?;
    let (_, comps) = pemap::analysis::components_refined(&map, cfg.ulam_n, cfg.max_n).map_err(analysis)?;
    let report = check_separation(&map, &comps, cfg.depth);
    let mut summary = vec![
        format!("verdict: {:?}", report.verdict),
        format!("sufficient pre-check: {}", report.sufficient_precheck),
    ];
    for (name, clause) in [
        ("disjoint supports", &report.disjoint_supports),
        ("separated mixing parts", &report.separated_mixing_parts),
        ("boundary avoids D", &report.boundary_avoids_discontinuities),
        ("no periodic boundary points", &report.no_periodic_boundary),
    ] {
        summary.push(format!("{name}: {:?}", clause.status));
        summary.extend(clause.witnesses.iter().map(|w| format!("  {w}")));
    }
    #[derive(Serialize)]
    struct Body<'a> {
        separation: &'a pemap::attractor::SeparationReport,
    }
    let path = write_json(
        Path::new(&cfg.out),
        "separation.json",
        &Envelope {
            config: cfg,
            body: Body { separation: &report },
        },
    )?;
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}

pub fn cmd_periodic(cfg: &Config) -> Result<Outcome, CliError> {
    let map = cfg.build_map()?;
    let dir = PathBuf::from(&cfg.out);
    let search = find_periodic(&map, cfg.max_period, None).map_err(analysis)?;

    fs::create_dir_all(&dir).map_err(io)?;
    let csv_path = dir.join("periodic.csv");
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(io)?;
    wtr.write_record(["point", "period", "itinerary", "regular"])
        .map_err(io)?;
    for o in &search.orbits {
        let itinerary: Vec<String> = o.itinerary.iter().map(|b| b.to_string()).collect();
        wtr.write_record([
            o.point.to_string(),
            o.period.to_string(),
            itinerary.join("-"),
            o.regular.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(io)?;

    let (_, comps) = pemap::analysis::components_refined(&map, cfg.ulam_n, cfg.max_n).map_err(analysis)?;
    let sep = check_separation(&map, &comps, cfg.depth);
    let mut exactness = Vec::new();
    for (i, sup) in sep.supports.iter().enumerate() {
        let period = exact_mixing_parts(&map, sup, 8)
            .map(|p| p.len())
            .unwrap_or(comps[i].period);
        let rep = exactness_check(&map, sup, period, cfg.max_period, DEFAULT_TRIALS, cfg.seed).map_err(analysis)?;
        exactness.push(rep);
    }
    let mut summary = vec![format!(
        "{} periodic orbit(s) up to period {}, {} inadmissible itineraries",
        search.orbits.len(),
        cfg.max_period,
        search.inadmissible
    )];
    for (i, e) in exactness.iter().enumerate() {
        summary.push(format!("component {i}: {:?}", e.verdict));
    }
    #[derive(Serialize)]
    struct Body<'a> {
        periodic: &'a pemap::periodic::PeriodicSearch,
        exactness: &'a [pemap::periodic::ExactnessReport],
    }
    let json = write_json(
        &dir,
        "periodic.json",
        &Envelope {
            config: cfg,
            body: Body {
                periodic: &search,
                exactness: &exactness,
            },
        },
    )?;
    Ok(Outcome {
        files: vec![csv_path, json],
        summary,
    })
}

fn family_of(cfg: &Config) -> Option<(Family, f64)> {
    match &cfg.map {
        Some(MapSpec::Family { family, a }) => family.parse::<Family>().ok().map(|f| (f, a.unwrap_or(0.0))),
        _ => None,
    }
}

pub fn cmd_stability(cfg: &Config, kind: Option<PerturbationKind>) -> Result<Outcome, CliError> {
    let f = cfg.build_map()?;
    let family = family_of(cfg);
    let kind = kind.unwrap_or(match family {
        Some((fam, _)) if fam.takes_parameter() => PerturbationKind::Family,
        _ => PerturbationKind::Slope,
    });
    let perturb = match kind {
        PerturbationKind::Family => match family {
            Some((family, base)) if family.takes_parameter() => Perturbation::FamilyShift { family, base },
            _ => {
                return Err(CliError::Config(
                    "family perturbation needs --family with a parameter".into(),
                ))
            }
        },
        PerturbationKind::Slope => Perturbation::Slope,
        PerturbationKind::Random => Perturbation::Random { seed: cfg.seed },
    };
    let rows = stability_experiment(&f, &perturb, &cfg.eps, cfg.ulam_n);
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let continuity = continuity_holds(&sorted, cfg.ulam_n);
    let accepted = largest_accepted_eps(&rows);

    let mut summary = Vec::new();
    for r in &rows {
        summary.push(match (&r.report, &r.error) {
            (Some(rep), _) => format!(
                "eps {}: d(f,g) {:.3e}, bijective {}, periods preserved {}, max Hausdorff {:.3e}",
                r.eps,
                rep.d_fg,
                rep.bijective,
                rep.period_preserved,
                rep.max_hausdorff()
            ),
            (None, Some(e)) => format!("eps {}: {e}", r.eps),
            (None, None) => format!("eps {}: no result", r.eps),
        });
    }
    summary.push(format!(
        "continuity holds: {continuity}; largest accepted eps: {accepted:?}"
    ));
    #[derive(Serialize)]
    struct Body<'a> {
        perturbation: &'a Perturbation,
        rows: &'a [pemap::stability::ExperimentRow],
        continuity: bool,
        largest_accepted_eps: Option<f64>,
    }
    let path = write_json(
        Path::new(&cfg.out),
        "stability.json",
        &Envelope {
            config: cfg,
            body: Body {
                perturbation: &perturb,
                rows: &rows,
                continuity,
                largest_accepted_eps: accepted,
            },
        },
    )?;
    if rows.iter().all(|r| r.report.is_none()) && !rows.is_empty() {
        return Err(CliError::Analysis(format!(
            "no perturbation could be analysed; see {}",
            path.display()
        )));
    }
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}

pub const SWEEP_HEADER: [&str; 5] = ["param", "n_components", "periods", "separation", "transitions"];

pub fn cmd_sweep(cfg: &Config) -> Result<Outcome, CliError> {
    let family = match &cfg.map {
        Some(MapSpec::Family { family, .. }) => family.parse::<Family>().map_err(CliError::Config)?,
        _ => return Err(CliError::Config("sweep needs --family".into())),
    };
    let rows = sweep_family(|a| family.build(a), &cfg.params, cfg.ulam_n, cfg.depth);
    let dir = PathBuf::from(&cfg.out);
    fs::create_dir_all(&dir).map_err(io)?;
    let csv_path = dir.join("sweep.csv");
    let mut wtr = csv::Writer::from_path(&csv_path).map_err(io)?;
    wtr.write_record(SWEEP_HEADER).map_err(io)?;
    for r in &rows {
        let periods: Vec<String> = r.periods.iter().map(|p| p.to_string()).collect();
        wtr.write_record([
            r.param.to_string(),
            r.n_components.to_string(),
            periods.join(";"),
            r.separation.to_string(),
            r.transition.to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(io)?;

    let trans = transitions(&rows);
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = vec![
        format!("{} row(s), {failures} failed", rows.len()),
        format!("transitions: {trans:?}"),
    ];
    #[derive(Serialize)]
    struct Body<'a> {
        family: Family,
        rows: &'a [pemap::stability::SweepRow],
        transitions: &'a [(f64, f64)],
    }
    let json = write_json(
        &dir,
        "sweep.json",
        &Envelope {
            config: cfg,
            body: Body {
                family,
                rows: &rows,
                transitions: &trans,
            },
        },
    )?;
    Ok(Outcome {
        files: vec![csv_path, json],
        summary,
    })
}

pub fn run_command(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Analyze(a) => cmd_analyze(&resolve("analyze", a)?),
        Command::Periodic(a) => cmd_periodic(&resolve("periodic", a)?),
        Command::Stability(a) => cmd_stability(&resolve("stability", a)?, a.perturbation),
        Command::Sweep(a) => cmd_sweep(&resolve("sweep", a)?),
        Command::CheckSeparation(a) => cmd_check_separation(&resolve("check-separation", a)?),
    }
}

/// Runs the parsed command line, printing a summary, and maps errors to
/// exit codes (2 for configuration errors, 1 for failed analyses).
pub fn run(cli: Cli) -> ExitCode {
    match run_command(&cli.command) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            for line in &out.summary {
                let _ = writeln!(stdout, "{line}");
            }
            for f in &out.files {
                let _ = writeln!(stdout, "wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pemap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Builds a map from the flags alone; used by tests and embedding code.
pub fn map_from_args(args: &CommonArgs) -> Result<PeMap, CliError> {
    resolve("map", args)?.build_map()
}
