use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::Args;
use panelpower_core::oracle::{oracle_run, OracleReport, SimConfig};
use panelpower_core::reference::{design_effect_grid, reproduce_table, DesignEffectPoint, GRID_RHOS, GRID_STARTS};
use panelpower_core::{Error, PowerResult, Scenario};
use panelpower_service::ServiceConfig;
use serde::Serialize;
use serde_json::json;

use crate::args::ScenarioArgs;
use crate::manifest::{write_csv, write_json, RunManifest};
use crate::{CliError, OutputArgs};

pub const DEFAULT_SEED: u64 = 20_240_601;

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Environment(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct PowerRow {
    family: &'static str,
    estimand: String,
    mde: f64,
    #[serde(rename = "M")]
    clusters: f64,
    #[serde(rename = "M_continuous")]
    continuous: Option<f64>,
    #[serde(rename = "M_nearest")]
    nearest: Option<f64>,
    #[serde(rename = "M_T_k")]
    treatment: String,
    #[serde(rename = "M_C_k")]
    comparison: String,
    df: f64,
    factor: f64,
    variance: f64,
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn emit_power(command: &str, s: &Scenario, r: &PowerResult, output: &OutputArgs) -> Result<(), CliError> {
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = RunManifest::new(command, json!({ "scenario": s }), None);
    let mut out = sink(&output.output)?;
    if output.json {
        write_json(&mut out, &manifest, r)?;
    } else if output.csv {
        let row = PowerRow {
            family: s.estimator.family.name(),
            estimand: s.estimator.estimand.to_string(),
            mde: r.mde,
            clusters: r.clusters,
            continuous: r.clusters_continuous,
            nearest: r.clusters_nearest,
            treatment: join(&r.treatment_clusters),
            comparison: join(&r.comparison_clusters),
            df: r.df,
            factor: r.factor,
            variance: r.variance.total,
        };
        write_csv(&mut out, &manifest, &[row])?;
    } else {
        writeln!(out, "family      {}", s.estimator.family.name())?;
        writeln!(out, "estimand    {}", s.estimator.estimand)?;
        writeln!(out, "MDE         {:.4}", r.mde)?;
        match (r.clusters_continuous, r.clusters_nearest) {
            (Some(c), Some(n)) => writeln!(out, "M           {} (continuous {c:.2}, nearest {n})", r.clusters)?,
            _ => writeln!(out, "M           {}", r.clusters)?,
        }
        writeln!(out, "M_T_k       {}", join(&r.treatment_clusters))?;
        writeln!(out, "M_C_k       {}", join(&r.comparison_clusters))?;
        writeln!(out, "df          {}", r.df)?;
        writeln!(out, "factor      {:.4}", r.factor)?;
        writeln!(out, "variance    {:.6e}", r.variance.total)?;
    }
    out.flush()?;
    Ok(())
}

pub fn mde(args: &ScenarioArgs, output: &OutputArgs) -> Result<(), CliError> {
    let s = args.resolve()?;
    let r = s.mde()?;
    emit_power("mde", &s, &r, output)
}

pub fn clusters(args: &ScenarioArgs, output: &OutputArgs) -> Result<(), CliError> {
    let s = args.resolve()?;
    let target = s
        .mde_target
        .ok_or_else(|| Error::InvalidParameter("a target MDE is required (--mde)".into()))?;
    let r = s.required_clusters(target)?;
    emit_power("clusters", &s, &r, output)
}

#[derive(Debug, Serialize)]
struct TableRow {
    panel: &'static str,
    #[serde(rename = "P")]
    periods: usize,
    #[serde(rename = "S")]
    starts: String,
    family: &'static str,
    expected: Option<u32>,
    computed: Option<f64>,
    continuous: Option<f64>,
    nearest: Option<f64>,
    error: Option<&'static str>,
    status: &'static str,
}

#[derive(Debug, Serialize)]
struct TableSummary {
    numeric_cells: usize,
    numeric_pass: usize,
    na_cells: usize,
    na_rejected: usize,
    tolerance: f64,
}

pub fn table3(output: &OutputArgs) -> Result<(), CliError> {
    let cells = reproduce_table();
    let rows: Vec<TableRow> = cells
        .iter()
        .map(|c| TableRow {
            panel: c.panel.label(),
            periods: c.periods,
            starts: format!("{},{}", c.starts[0], c.starts[1]),
            family: c.family.name(),
            expected: c.expected,
            computed: c.computed,
            continuous: c.continuous,
            nearest: c.continuous.map(f64::round),
            error: c.error,
            status: if c.pass { "PASS" } else { "FAIL" },
        })
        .collect();
    let numeric: Vec<_> = cells.iter().filter(|c| c.expected.is_some()).collect();
    let na: Vec<_> = cells.iter().filter(|c| c.expected.is_none()).collect();
    let summary = TableSummary {
        numeric_cells: numeric.len(),
        numeric_pass: numeric.iter().filter(|c| c.pass).count(),
        na_cells: na.len(),
        na_rejected: na.iter().filter(|c| c.pass).count(),
        tolerance: panelpower_core::reference::CELL_TOLERANCE,
    };
    let manifest = RunManifest::new("table3", json!({ "target_mde": panelpower_core::reference::TARGET_MDE }), None);
    let mut out = sink(&output.output)?;
    if output.json {
        write_json(&mut out, &manifest, &json!({ "rows": rows, "summary": summary }))?;
    } else if output.csv {
        write_csv(&mut out, &manifest, &rows)?;
    } else {
        writeln!(out, "<!-- manifest: {} -->", manifest.json_line())?;
        writeln!(out, "| panel | P | S | family | expected | M | M continuous | status |")?;
        writeln!(out, "|---|---|---|---|---|---|---|---|")?;
        for r in &rows {
            let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
            let computed = r.computed.map(|m| m.to_string()).or(r.error.map(String::from));
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.panel,
                r.periods,
                r.starts,
                r.family,
                opt(r.expected.map(|v| v.to_string())),
                opt(computed),
                opt(r.continuous.map(|c| format!("{c:.2}"))),
                r.status,
            )?;
        }
        writeln!(
            out,
            "\n{}/{} numeric cells within ±{}; {}/{} NA cells rejected",
            summary.numeric_pass, summary.numeric_cells, summary.tolerance, summary.na_rejected, summary.na_cells
        )?;
    }
    out.flush()?;
    let failed = cells.len() - summary.numeric_pass - summary.na_rejected;
    if failed > 0 {
        return Err(CliError::Breach(format!("{failed} reference cells outside tolerance")));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct Figure1Args {
    #[arg(long, default_value_t = 8)]
    pub periods: usize,
    /// Comma-separated autocorrelations (default 0, 0.1, ..., 0.9)
    #[arg(long, value_delimiter = ',')]
    pub rho: Vec<f64>,
    /// Start pair "S1,S2"; repeatable (default 2,4 4,6 2,6 3,5)
    #[arg(long, value_name = "S1,S2")]
    pub pair: Vec<String>,
    /// Emit JSON instead of CSV
    #[arg(long)]
    pub json: bool,
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FigureSummary {
    points: usize,
    mean: f64,
    min: f64,
    max: f64,
}

fn parse_pair(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || Error::InvalidParameter(format!("start pair '{s}' is not of the form S1,S2"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn figure1(args: &Figure1Args) -> Result<(), CliError> {
    let rhos = if args.rho.is_empty() { GRID_RHOS.to_vec() } else { args.rho.clone() };
    let pairs = if args.pair.is_empty() {
        GRID_STARTS.to_vec()
    } else {
        args.pair.iter().map(|p| parse_pair(p)).collect::<Result<_, _>>()?
    };
    let points: Vec<DesignEffectPoint> = design_effect_grid(args.periods, &rhos, &pairs)?;
    let effects: Vec<f64> = points.iter().map(|p| p.staggered_ar1).collect();
    let summary = FigureSummary {
        points: effects.len(),
        mean: effects.iter().sum::<f64>() / effects.len() as f64,
        min: effects.iter().copied().fold(f64::INFINITY, f64::min),
        max: effects.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let manifest = RunManifest::new("figure1", json!({ "periods": args.periods, "rho": rhos, "pairs": pairs }), None);
    let mut out = sink(&args.output)?;
    if args.json {
        write_json(&mut out, &manifest, &json!({ "points": points, "summary": summary }))?;
    } else {
        write_csv(&mut out, &manifest, &points)?;
        eprintln!(
            "design effect mean {:.3} (min {:.3}, max {:.3}) over {} points",
            summary.mean, summary.min, summary.max, summary.points
        );
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 10_000)]
    pub replications: usize,
    #[arg(long, env = "PANELPOWER_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Largest accepted relative variance error
    #[arg(long, default_value_t = 0.05)]
    pub rel_tol: f64,
    /// Largest accepted gap in Monte Carlo standard errors
    #[arg(long, default_value_t = 4.0)]
    pub se_tol: f64,
    /// Simulate individual outcomes instead of cell means
    #[arg(long)]
    pub individual_level: bool,
    /// Directory for per-replication estimate CSVs
    #[arg(long, value_name = "DIR")]
    pub dump_csv: Option<PathBuf>,
    /// Check a single scenario instead of the default set
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Serialize)]
struct ValidationRow {
    label: String,
    #[serde(flatten)]
    report: OracleReport,
    /// Mean estimate within `se_tol` standard errors of zero.
    unbiased: bool,
    pass: bool,
}

fn default_cases() -> Result<Vec<(String, Scenario)>, CliError> {
    let base = ScenarioArgs::default();
    let cits = ScenarioArgs { family: Some("cits-full".into()), ..Default::default() };
    let pure = ScenarioArgs { icc: Some(0.0), ..Default::default() };
    Ok(vec![
        ("did-pooled".into(), base.resolve()?),
        ("cits-full-pooled".into(), cits.resolve()?),
        ("did-pooled-icc0".into(), pure.resolve()?),
    ])
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let cases = if args.scenario == ScenarioArgs::default() {
        default_cases()?
    } else {
        let s = args.scenario.resolve()?;
        vec![(format!("{}-{}", s.estimator.family.name(), s.estimator.estimand), s)]
    };
    if let Some(dir) = &args.dump_csv {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Environment(format!("{}: {e}", dir.display())))?;
    }
    let mut rows = Vec::new();
    for (label, s) in &cases {
        if s.estimator.covariates.is_some() {
            return Err(Error::InvalidParameter("the simulator does not model covariates".into()).into());
        }
        s.validated()?;
        let mut cfg = SimConfig::new(s.design.clone(), s.error, args.replications, args.seed);
        if args.individual_level {
            cfg = cfg.individual_level();
        }
        let run = oracle_run(&cfg, s.estimator.family, &[s.estimator.estimand])?;
        if let Some(dir) = &args.dump_csv {
            let path = dir.join(format!("{}.csv", label.replace(':', "-")));
            let file = File::create(&path).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
            run.write_csv(BufWriter::new(file))?;
        }
        let report = run.reports.into_iter().next().expect("one estimand requested");
        let unbiased = report.mean_estimate.abs() < args.se_tol * report.mean_se;
        let pass = unbiased && report.within(args.rel_tol, args.se_tol);
        rows.push(ValidationRow { label: label.clone(), report, unbiased, pass });
    }
    let params = json!({
        "cases": cases.iter().map(|(l, s)| json!({ "label": l, "scenario": s })).collect::<Vec<_>>(),
        "replications": args.replications,
        "rel_tol": args.rel_tol,
        "se_tol": args.se_tol,
        "individual_level": args.individual_level,
    });
    let manifest = RunManifest::new("validate", params, Some(args.seed));
    let mut out = io::stdout().lock();
    if args.json {
        write_json(&mut out, &manifest, &rows)?;
    } else {
        for r in &rows {
            writeln!(
                out,
                "{} {:<22} empirical {:.6e} closed {:.6e} rel {:.4} z {:+.2} mean {:+.2e}",
                if r.pass { "PASS" } else { "FAIL" },
                r.label,
                r.report.empirical_variance,
                r.report.closed_form,
                r.report.relative_error,
                r.report.z_score,
                r.report.mean_estimate,
            )?;
        }
    }
    out.flush()?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.label.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Breach(failed.join(", ")))
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Allowed CORS origin; repeatable (default any)
    #[arg(long)]
    pub cors: Vec<String>,
    /// Directory served for non-API paths
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        cors_origins: (!args.cors.is_empty()).then(|| args.cors.clone()),
        static_dir: args.static_dir.clone(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = panelpower_service::bind(addr)
            .await
            .map_err(|e| CliError::Environment(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr()?;
        eprintln!("listening on http://{local}");
        panelpower_service::serve(listener, &config).await?;
        eprintln!("shut down");
        Ok(())
    })
}
