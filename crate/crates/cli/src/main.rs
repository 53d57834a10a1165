//! `lsa-gauss` command line.
//!
//! Every subcommand reads one JSON experiment config (unknown keys rejected):
//!
//! ```json
//! {
//!   "instance": {
//!     "dim": 2,
//!     "feature_dist": {"kind": "scaled_rademacher", "params": {"c_phi": 1.0}},
//!     "response_noise": {"kind": "discrete", "params": {"values": [-1.0, 1.0], "probs": [0.5, 0.5]}},
//!     "theta_star": [0.0, 0.0]
//!   },
//!   "grid": {"kind": "alphas", "alphas": [0.1, 0.05, 0.025, 0.0125], "n_factor": 3.0},
//!   "replicas": 20000,
//!   "ladder_depth": 1,
//!   "distance": {"directions": 64, "delta": 0.01, "bootstrap": 100, "target": "lyapunov"},
//!   "master_seed": 20241016,
//!   "output": {"path": "rows.csv", "format": "csv"},
//!   "theta0": [1.0, 0.0]
//! }
//! ```
//!
//! Feature kinds: `scaled_rademacher`, `sphere_uniform` (params `{c_phi}`) and
//! `finite_support` (`{points, probs, c_phi?}`). Noise kinds: `gaussian` (`{sigma}`),
//! `uniform` (`{half_width}`), `discrete` (`{values, probs}`) and `none`.
//! Grid kinds: `pairs` (`{points: [[alpha, n], ...]}`), `schedule` (`{c?, n: [...]}`,
//! `alpha = c log(n)/n`) and `alphas` (`{alphas, n_factor?}`).
//! `ladder_depth`, `distance`, `output` and `theta0` are optional.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 invalid config, 3 inconclusive only.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lsa_gauss::bounds::compute_constants;
use lsa_gauss::covariance::{covariance_lower_bound, prop1_gap, prop2_gap, CovarianceTriple};
use lsa_gauss::distance::{convex_surrogate_adaptive, convex_surrogate_with_directions, draw_directions};
use lsa_gauss::experiments::config::DistanceTarget;
use lsa_gauss::experiments::emit::{self, fmt_f64};
use lsa_gauss::experiments::{rate_sweep, run_replicas, verify_suite, ExperimentConfig, VerifyOptions};
use lsa_gauss::linalg::{to_rows, Mat};
use lsa_gauss::rng::{stream, Purpose};
use lsa_gauss::trajectory::{run_sgd, write_trajectory_csv};
use lsa_gauss::{ProblemInstance, StepConfig};
use serde_json::json;

mod plot;

#[derive(Parser)]
#[command(name = "lsa-gauss", version, about = "Constant-step SGD for linear regression: Gaussian approximation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    n: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Rescaled final errors (θ_n - θ*)/√α for every grid point and replica, as CSV.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the error path of replica 0 at the first grid point.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Finite-horizon, stationary and Lyapunov covariances with the proposition gaps.
    Covariance {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Explicit bound constants at one point, or one CSV row per grid point with `--csv`.
    Bounds {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, required_unless_present = "csv")]
        alpha: Option<f64>,
        #[arg(long, required_unless_present = "csv")]
        n: Option<usize>,
        #[arg(long)]
        csv: bool,
    },
    /// Distance-vs-α sweep with fitted log-log slope.
    RateSweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Row output; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted slope range.
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["LO", "HI"], default_values_t = [0.35, 0.65])]
        slope_range: Vec<f64>,
    },
    /// Runs the verification suite and prints a JSON report.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// Caps replicas at 1000.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Self-test: whiten with the noise covariance scaled by this factor.
        #[arg(long, hide = true)]
        tamper_noise: Option<f64>,
    },
    /// Convex-class distance surrogate between samples and the Gaussian target.
    Distance {
        #[command(flatten)]
        config: ConfigArg,
        /// CSV of R rows × d columns (one header line allowed). Generated in-process when absent.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        /// Double directions until the estimate grows by less than 10%.
        #[arg(long)]
        adaptive: bool,
    },
    /// Log-log scatter of distance against α with the fitted slope line.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct InvalidConfig(String);

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidConfig {}

fn invalid(e: impl std::fmt::Display) -> anyhow::Error {
    InvalidConfig(e.to_string()).into()
}

fn load(arg: &ConfigArg) -> anyhow::Result<(ExperimentConfig, ProblemInstance)> {
    let cfg = ExperimentConfig::load(&arg.config).and_then(|c| c.with_env_seed()).map_err(invalid)?;
    let inst = cfg.validate().map_err(invalid)?;
    Ok((cfg, inst))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &impl serde::Serialize, path: Option<&Path>) -> anyhow::Result<()> {
    let text = emit::to_json_string(value)?;
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn simulate(arg: &ConfigArg, out: Option<&Path>, trajectory: Option<&Path>) -> anyhow::Result<u8> {
    let (cfg, inst) = load(arg)?;
    let points = cfg.grid_points(&inst).map_err(invalid)?;
    let theta0 = cfg.theta0(&inst).map_err(invalid)?;
    let mut w = sink(out)?;
    let cols: Vec<String> = (1..=inst.dim).map(|i| format!("z_{i}")).collect();
    writeln!(w, "point,alpha,n,replica,{}", cols.join(","))?;
    for (i, p) in points.iter().enumerate() {
        let step = StepConfig::new(p.alpha, p.n, theta0.clone());
        let z = run_replicas(&inst, &step, cfg.replicas, cfg.master_seed, i)?;
        for (r, row) in z.row_iter().enumerate() {
            write!(w, "{i},{},{},{r}", fmt_f64(p.alpha), p.n)?;
            for v in row.iter() {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    if let Some(path) = trajectory {
        let p = points[0];
        let step = StepConfig::new(p.alpha, p.n, theta0);
        let errors = run_sgd(&inst, &step, &mut stream(cfg.master_seed, 0, 0, Purpose::Trajectory))?;
        let mut tw = sink(Some(path))?;
        write_trajectory_csv(&errors, &mut tw)?;
        tw.flush()?;
    }
    Ok(0)
}

fn covariance(arg: &ConfigArg, pt: &PointArgs) -> anyhow::Result<u8> {
    let (_, inst) = load(arg)?;
    inst.check_step(pt.alpha).map_err(invalid)?;
    if pt.n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let m = &inst.moments;
    let t = CovarianceTriple::compute(m, pt.alpha, pt.n)?;
    let p1 = prop1_gap(m, pt.alpha, pt.n)?;
    let p2 = prop2_gap(m, pt.alpha)?;
    let lb = match covariance_lower_bound(m, pt.alpha, pt.n) {
        Ok(lb) => json!({
            "measured": lb.measured_min_eig,
            "paper_bound": lb.paper_const,
            "corrected_bound": lb.corrected_const,
        }),
        Err(lsa_gauss::Error::Precondition(msg)) => json!({ "skipped": msg }),
        Err(e) => return Err(e.into()),
    };
    let doc = json!({
        "alpha": pt.alpha,
        "n": pt.n,
        "sigma_alpha_n": to_rows(&t.sigma_alpha_n),
        "sigma_alpha": to_rows(&t.sigma_alpha),
        "sigma_lyap": to_rows(&t.sigma_lyap),
        "residuals": {"riccati": t.residual_riccati, "lyapunov": t.residual_lyapunov},
        "prop1": {"measured": p1.measured, "paper_bound": p1.paper_bound, "corrected_bound": p1.corrected_bound},
        "prop2": {"measured": p2.measured, "bound": p2.bound},
        "lower_bound": lb,
    });
    print_json(&doc, None)?;
    Ok(0)
}

const BOUNDS_HEADER: &str = "alpha,n,c_delta_0,c_delta_1,c_delta_2,c_delta_3,c_delta_4,c_delta_5,c_delta_6,c1,c2,c_d,c_d2,theorem1_rhs";

fn bounds(arg: &ConfigArg, alpha: Option<f64>, n: Option<usize>, csv: bool) -> anyhow::Result<u8> {
    let (cfg, inst) = load(arg)?;
    let gap = (cfg.theta0(&inst).map_err(invalid)? - &inst.theta_star).norm();
    let points: Vec<(f64, usize)> = match (alpha, n) {
        (Some(a), Some(n)) => vec![(a, n)],
        (None, None) => cfg.grid_points(&inst).map_err(invalid)?.iter().map(|p| (p.alpha, p.n)).collect(),
        _ => return Err(invalid("--alpha and --n go together")),
    };
    let reports = points
        .iter()
        .map(|&(a, n)| compute_constants(&inst, a, n, gap).map_err(invalid))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if csv {
        let mut w = sink(None)?;
        writeln!(w, "{BOUNDS_HEADER}")?;
        for (r, (a, n)) in reports.iter().zip(&points) {
            let mut fields = vec![fmt_f64(*a), n.to_string()];
            fields.extend(r.c_delta.iter().map(|v| fmt_f64(*v)));
            fields.extend([r.c1, r.c2, r.c_d, r.c_d2, r.theorem1_rhs].map(fmt_f64));
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()?;
    } else {
        print_json(&reports[0], None)?;
    }
    Ok(0)
}

fn sweep(arg: &ConfigArg, out: Option<&Path>, range: &[f64]) -> anyhow::Result<u8> {
    let (cfg, _) = load(arg)?;
    let res = rate_sweep(&cfg).map_err(|e| match e {
        lsa_gauss::Error::Config(_) => invalid(e),
        e => e.into(),
    })?;
    match (out, &cfg.output) {
        (Some(p), _) => emit::emit(&res.rows, emit::format_for_path(p), p)?,
        (None, Some(o)) => emit::emit(&res.rows, o.format, &o.path)?,
        (None, None) => {
            let mut w = sink(None)?;
            emit::write_csv(&res.rows, &mut w)?;
            w.flush()?;
        }
    }
    let in_range = res.slope >= range[0] && res.slope <= range[1];
    let summary = json!({
        "slope": res.slope,
        "slope_ci": [res.slope_ci.0, res.slope_ci.1],
        "slope_range": range,
        "bootstrap_samples": res.bootstrap_samples,
        "any_inconclusive": res.any_inconclusive,
        "all_n_sufficient": res.all_n_sufficient,
    });
    eprintln!("{}", emit::to_json_string(&summary)?);
    Ok(if !in_range {
        1
    } else if res.any_inconclusive {
        3
    } else {
        0
    })
}

fn verify(arg: &ConfigArg, quick: bool, out: Option<&Path>, tamper_noise: Option<f64>) -> anyhow::Result<u8> {
    let (cfg, _) = load(arg)?;
    let report = verify_suite(&cfg, &VerifyOptions { quick, tamper_noise })?;
    print_json(&report, out)?;
    for c in report.failures() {
        eprintln!("FAIL {}: measured {:e} vs bound {:e} {}", c.name, c.measured, c.bound, c.detail);
    }
    let s = &report.summary;
    eprintln!("{} pass, {} fail, {} inconclusive", s.pass, s.fail, s.inconclusive);
    Ok(report.exit_code() as u8)
}

fn read_samples(path: &Path, d: usize) -> anyhow::Result<Mat> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => bail!(invalid(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(invalid(format!("{}: row {} has {} columns, dimension is {d}", path.display(), bad + 1, rows[bad].len())));
    }
    Ok(Mat::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

fn distance(arg: &ConfigArg, samples: Option<&Path>, alpha: Option<f64>, n: Option<usize>, adaptive: bool) -> anyhow::Result<u8> {
    let (cfg, inst) = load(arg)?;
    let first = cfg.grid_points(&inst).map_err(invalid)?[0];
    let (alpha, n) = (alpha.unwrap_or(first.alpha), n.unwrap_or(first.n));
    inst.check_step(alpha).map_err(invalid)?;
    let z = match samples {
        Some(p) => read_samples(p, inst.dim)?,
        None => {
            let step = StepConfig::new(alpha, n, cfg.theta0(&inst).map_err(invalid)?);
            run_replicas(&inst, &step, cfg.replicas, cfg.master_seed, 0)?
        }
    };
    let m = &inst.moments;
    let target = match cfg.distance.target {
        DistanceTarget::Lyapunov => lsa_gauss::covariance::solve_lyapunov(&m.phi, &m.sigma_eps),
        DistanceTarget::FiniteHorizon => lsa_gauss::covariance::sigma_alpha_n(m, alpha, n),
    }
    .map_err(invalid)?;
    let mut rng = stream(cfg.master_seed, 0, 0, Purpose::Directions);
    let mut est = if adaptive {
        convex_surrogate_adaptive(&z, &target, cfg.distance.delta, &mut rng)
    } else {
        let dirs = draw_directions(inst.dim, cfg.distance.directions, &mut rng);
        convex_surrogate_with_directions(&z, &target, &dirs, cfg.distance.delta)
    }
    .map_err(invalid)?;
    est.seed = Some(cfg.master_seed);
    print_json(&est, None)?;
    Ok(if est.is_inconclusive() { 3 } else { 0 })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Simulate { config, out, trajectory } => simulate(config, out.as_deref(), trajectory.as_deref()),
        Command::Covariance { config, point } => covariance(config, point),
        Command::Bounds { config, alpha, n, csv } => bounds(config, *alpha, *n, *csv),
        Command::RateSweep { config, out, slope_range } => sweep(config, out.as_deref(), slope_range),
        Command::Verify { config, quick, out, tamper_noise } => verify(config, *quick, out.as_deref(), *tamper_noise),
        Command::Distance { config, samples, alpha, n, adaptive } => {
            distance(config, samples.as_deref(), *alpha, *n, *adaptive)
        }
        Command::Plot { input, out } => plot::plot(input, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvalidConfig>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
