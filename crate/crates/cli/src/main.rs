//! `carnot-kit`: command-line front end for the carnot-core experiments.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use carnot_core::algebra::{validate_algebra, CarnotAlgebra};
use carnot_core::barycenter::com;
use carnot_core::exterior::{binomial, form_ideal_basis, weight_spectrum};
use carnot_core::harness::config::ExperimentConfig;
use carnot_core::harness::io::{load_algebra, load_measure};
use carnot_core::harness::maps::build_map;
use carnot_core::harness::report::{fmt_f64, write_csv, write_table, Report};
use carnot_core::harness::{approx, dcheck, run_rigidity_demo, HarnessError};
use carnot_core::mollifier::{mollify_at, MollKernel};
use carnot_core::pansu::{pansu_convergence_probe, pansu_differential_analytic, DEFAULT_STEP};
use carnot_core::GroupPoint;
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CONFIG_HELP: &str = "\
Config keys (TOML):
  [experiment] id, seed, out
  [algebra]    source, target          built-in name (H1, H2, H1C, R3, free(2,3), H1xH1) or algebra file
  [map]        name, eps, lambda, value, matrix, block, coeffs, file
               names: identity constant dilation translation hom horizontal random_hom random_auto
                      contact_shear contact_scaling vertical_square quadratic tabulated
  [forms]      omega, coefficient (one|bump), gamma     forms: vol, 1, or 1-based indices like 2,3
  [grid]       lo, hi, n                                cell-centred tensor grid
  [approx]     rho, p, m, kernel_nodes, omega_continuous, map_sobolev
  [dcheck]     base, levels, centers, half_width
  [rigidity]   count, points
  [pansu]      point, r, p, h
  [mollify]    rho, points, kernel_nodes
  [com]        measure, exact

Exit codes: 0 all checks passed, 1 hypothesis or precondition failure, 2 I/O or input error.";

#[derive(Parser, Debug)]
#[command(name = "carnot-kit", version, about = "Carnot-group experiments", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fill the runtime column (output is then not reproducible byte for byte).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Check the algebra axioms of the configured algebras.
    Validate,
    /// Center of mass of a measure file.
    Com,
    /// Mollified map at points and radii.
    Mollify,
    /// Dimensions of the I/J ideals and weight spectra per degree.
    Forms,
    /// Pansu differential and rescaled-map convergence probe.
    Pansu,
    /// Approximation experiment for Pansu pullbacks.
    Approx,
    /// Distributional exterior-derivative check.
    Dcheck,
    /// Factor-permutation detection on a product algebra.
    Rigidity,
}

struct Output {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    report: Option<Report>,
    passed: bool,
}

impl Output {
    fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Output {
            header,
            rows,
            report: None,
            passed: true,
        }
    }

    fn report(report: Report) -> Self {
        let passed = report.all_passed();
        Output {
            header: Vec::new(),
            rows: Vec::new(),
            report: Some(report),
            passed,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| HarnessError::Config("--config <file> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.experiment.seed = Some(s);
    }
    let out = cmd(cli.command, &cfg, cli.timings)?;
    if let Some(r) = &out.report {
        for n in &r.notes {
            log::info!("{n}");
        }
        for c in &r.checks {
            eprintln!(
                "check [{}]: {} {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
        }
    }
    let mut buf = Vec::new();
    match &out.report {
        Some(r) => write_csv(&r.rows, &mut buf)?,
        None => write_table(&out.header, &out.rows, &mut buf)?,
    }
    let target = cli
        .out
        .clone()
        .or_else(|| cfg.experiment.out.as_ref().map(|p| cfg.resolve(p)));
    match target {
        Some(p) => {
            std::fs::write(&p, &buf).map_err(|source| HarnessError::Io { path: p, source })?
        }
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|source| HarnessError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?,
    }
    Ok(out.passed)
}

fn algebras(
    cfg: &ExperimentConfig,
) -> Result<(Arc<CarnotAlgebra>, Arc<CarnotAlgebra>), HarnessError> {
    let src = load_algebra(&cfg.algebra.source, &cfg.base_dir)?;
    let tgt = match &cfg.algebra.target {
        Some(t) => load_algebra(t, &cfg.base_dir)?,
        None => src.clone(),
    };
    Ok((src, tgt))
}

fn cmd(command: Command, cfg: &ExperimentConfig, timings: bool) -> Result<Output, HarnessError> {
    match command {
        Command::Validate => validate(cfg),
        Command::Com => center_of_mass(cfg),
        Command::Mollify => mollify(cfg),
        Command::Forms => forms(cfg),
        Command::Pansu => pansu(cfg),
        Command::Approx => {
            let setup = approx::setup_from_config(cfg, timings)?;
            Ok(Output::report(
                approx::run_approximation_experiment(&setup)?.to_report(),
            ))
        }
        Command::Dcheck => {
            let setup = dcheck::setup_from_config(cfg, timings)?;
            Ok(Output::report(
                dcheck::run_exterior_derivative_check(&setup)?.to_report(),
            ))
        }
        Command::Rigidity => {
            let (src, _) = algebras(cfg)?;
            let r = cfg.section(&cfg.rigidity, "rigidity")?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
            let rep = run_rigidity_demo(&cfg.experiment.id, src, r.count, r.points, &mut rng)?;
            Ok(Output::report(rep.to_report()))
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<Output, HarnessError> {
    let mut names = vec![cfg.algebra.source.clone()];
    names.extend(cfg.algebra.target.clone());
    let mut rows = Vec::new();
    for name in names {
        let alg = load_algebra(&name, &cfg.base_dir)?;
        let report = validate_algebra(&alg.definition());
        let dims = alg
            .layer_dims()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        rows.push(vec![
            name,
            dims,
            alg.homogeneous_dim().to_string(),
            report.to_string(),
        ]);
    }
    Ok(Output::table(
        strings(&["algebra", "layers", "homogeneous_dim", "result"]),
        rows,
    ))
}

fn center_of_mass(cfg: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (alg, _) = algebras(cfg)?;
    let c = cfg.section(&cfg.com, "com")?;
    let measure = load_measure(&cfg.resolve(&c.measure), alg.dim())?;
    let coords: Vec<String> = if c.exact {
        com(&alg, &measure)?
            .coords()
            .iter()
            .map(ToString::to_string)
            .collect()
    } else {
        com(&alg, &measure.to_f64())?
            .coords()
            .iter()
            .map(|v| fmt_f64(*v))
            .collect()
    };
    let rows = coords
        .into_iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), v])
        .collect();
    Ok(Output::table(strings(&["coordinate", "value"]), rows))
}

fn mollify(cfg: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (src, tgt) = algebras(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let f = build_map(
        cfg.section(&cfg.map, "map")?,
        src.clone(),
        tgt.clone(),
        cfg,
        &mut rng,
    )?;
    let m = cfg.section(&cfg.mollify, "mollify")?;
    let points = match &m.points {
        Some(p) => p.clone(),
        None => approx::grid_points(cfg.section(&cfg.grid, "grid")?)?.0,
    };
    let per_axis = m
        .kernel_nodes
        .unwrap_or_else(|| carnot_core::mollifier::default_nodes_per_axis(src.dim()));
    let kernel = MollKernel::new(src.clone(), per_axis)?;
    let mut header: Vec<String> = (1..=src.dim()).map(|i| format!("x{i}")).collect();
    header.push("rho".into());
    header.extend((1..=tgt.dim()).map(|i| format!("y{i}")));
    header.push("distance".into());
    let mut rows = Vec::new();
    for x in &points {
        let xp = GroupPoint::from_coords(x.clone());
        let fx = f.eval(&xp)?;
        for &rho in &m.rho {
            let y = mollify_at(&f, &kernel, &xp, rho)?;
            let d = tgt.quasi_distance(&fx, &y)?;
            let mut row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            row.push(fmt_f64(rho));
            row.extend(y.coords().iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(d));
            rows.push(row);
        }
    }
    Ok(Output::table(header, rows))
}

fn forms(cfg: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (alg, _) = algebras(cfg)?;
    let n = alg.dim();
    let mut rows = Vec::new();
    for k in 0..=n {
        let b = form_ideal_basis(&alg, k)?;
        let spectrum = weight_spectrum(&alg, k)
            .iter()
            .map(|(w, c)| format!("{w}:{c}"))
            .collect::<Vec<_>>()
            .join(" ");
        rows.push(vec![
            k.to_string(),
            binomial(n, k).to_string(),
            b.ideal.len().to_string(),
            b.annihilator.len().to_string(),
            b.quotient_dim().to_string(),
            spectrum,
        ]);
    }
    Ok(Output::table(
        strings(&[
            "degree",
            "dim_lambda",
            "dim_i",
            "dim_j",
            "dim_quotient",
            "weights",
        ]),
        rows,
    ))
}

fn pansu(cfg: &ExperimentConfig) -> Result<Output, HarnessError> {
    let (src, tgt) = algebras(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let f = build_map(cfg.section(&cfg.map, "map")?, src, tgt, cfg, &mut rng)?;
    let p = cfg.section(&cfg.pansu, "pansu")?;
    let x = GroupPoint::from_coords(p.point.clone());
    let dp = pansu_differential_analytic(&f, &x, p.h.unwrap_or(DEFAULT_STEP))?;
    let probe = pansu_convergence_probe(&f, &x, &p.r, p.p)?;
    let mut rows: Vec<Vec<String>> = probe
        .rows
        .iter()
        .map(|(r, d)| vec!["probe".into(), fmt_f64(*r), fmt_f64(*d)])
        .collect();
    rows.push(vec![
        "exponent".into(),
        String::new(),
        fmt_f64(probe.exponent),
    ]);
    rows.push(vec!["residual".into(), String::new(), fmt_f64(dp.residual)]);
    let m = dp.matrix();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            rows.push(vec![
                "differential".into(),
                format!("{} {}", r + 1, c + 1),
                fmt_f64(m[(r, c)]),
            ]);
        }
    }
    Ok(Output::table(strings(&["section", "key", "value"]), rows))
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}
