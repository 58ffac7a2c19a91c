//! Command-line front end: JSON config in, tables on stdout, CSV/JSON/P5
//! reports on disk. Exit codes: 0 success, 1 config or usage error, 2
//! compute failure (including failed verification rows and strict-mode
//! violations).

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use bpe_atlas::bpe::{
    adjoint_eigenbasis, adjoint_eigenbasis_checked, evaluation_data, gram_test, kernel_gram,
    scan_region, Classification, GridKind,
};
use bpe_atlas::config::{load_config, RunConfig};
use bpe_atlas::operator::{cauchy_dual, wandering_basis};
use bpe_atlas::report::{
    describe_text, emit_csv, emit_heatmap, emit_json, report_json, scan_summary_json,
    verify_example1, verify_example2,
};
use bpe_atlas::spectral::disc_radii;
use bpe_atlas::{Error, Result, C64};

#[derive(Parser)]
#[command(
    name = "bpe-atlas",
    version,
    about = "Bounded point evaluations of weighted shifts on directed graphs",
    arg_required_else_help = true
)]
struct Cli {
    /// JSON config file; omitted means the built-in loop-chain defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for report files (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Horizon override: scan/kernel N, radii and verification orbits.
    #[arg(long, global = true, value_name = "N")]
    nmax: Option<usize>,
    /// Materialized graph depth override.
    #[arg(long, global = true, value_name = "D")]
    depth: Option<usize>,
    /// Grid kind override for scans: polar or cartesian.
    #[arg(long, global = true, value_name = "KIND")]
    grid: Option<String>,
    /// Classification slope threshold override.
    #[arg(long, global = true, value_name = "T")]
    threshold: Option<f64>,
    /// Seed override for sphere sampling.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// Fail (exit 2) on uncertified series tails and INCONCLUSIVE points.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the operator's structure, dual weights and kernel dimension.
    Describe,
    /// Estimate the dual spectral radius and the two disc radii.
    Radii,
    /// Classify a grid of points and write CSV, heatmap and JSON reports.
    Scan,
    /// Evaluation-map and reproducing-kernel diagnostics at one point.
    Kernel,
    /// Verification table for the loop-chain family.
    #[command(name = "verify-example1")]
    VerifyExample1,
    /// Verification table for the tree family.
    #[command(name = "verify-example2")]
    VerifyExample2,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap renders help/version on stdout and usage errors on stderr;
            // fold the latter into the config exit code instead of clap's own.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::builtin_default(),
    };
    if let Some(n) = cli.nmax {
        cfg.scan.n = n;
        cfg.kernel.n = n;
    }
    if let Some(d) = cli.depth {
        cfg.operator.depth = d;
    }
    if let Some(kind) = &cli.grid {
        cfg.scan.grid.kind = match kind.as_str() {
            "polar" => GridKind::Polar,
            "cartesian" => GridKind::Cartesian,
            other => {
                return Err(Error::Config(format!(
                    "unknown grid kind {other:?}; expected polar or cartesian"
                )))
            }
        };
    }
    if let Some(t) = cli.threshold {
        cfg.scan.slope_threshold = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = Some(dir.clone());
    }

    match cli.command {
        Cmd::Describe => describe(&cfg),
        Cmd::Radii => radii(&cfg, &cli),
        Cmd::Scan => scan(&cfg, &cli),
        Cmd::Kernel => kernel(&cfg, &cli),
        Cmd::VerifyExample1 => verify1(&cfg, &cli),
        Cmd::VerifyExample2 => verify2(&cfg, &cli),
    }
}

fn out_path(cfg: &RunConfig, suffix: &str) -> PathBuf {
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{}-{suffix}", cfg.output.prefix))
}

fn operator_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(&cfg.operator).expect("operator spec serialization")
}

fn describe(cfg: &RunConfig) -> Result<()> {
    let (graph, weights) = cfg.operator.build()?;
    print!("{}", describe_text(&graph, &weights)?);
    Ok(())
}

fn radii(cfg: &RunConfig, cli: &Cli) -> Result<()> {
    let (graph, weights) = cfg.operator.build()?;
    let basis = wandering_basis(&graph, &weights)?;
    // Default horizon 2048, clamped into the materialized depth; an
    // explicit --nmax is taken literally and may fail on a shallow graph.
    let n = cli.nmax.unwrap_or_else(|| 2048.min(graph.depth().saturating_sub(3)));
    let report = disc_radii(&graph, &weights, &basis, n, 64, cfg.seed)?;
    println!("orbit horizon N = {n}, depth = {}", graph.depth());
    println!("r_dual estimate:  {:.12}", report.r_dual_estimate);
    println!("r_dual upper:     {:.12}", report.r_dual_upper);
    println!("r_inner:          {:.12}", report.r_inner);
    println!("r_disc:           {:.12}", report.r_disc);
    for (i, r) in report.r_local.iter().enumerate() {
        println!("r_local[{i}]:       {r:.12}");
    }
    if cfg.output.json {
        let v = report_json(
            operator_json(cfg),
            Some(&report),
            json!({"radii_N": n, "depth": graph.depth()}),
            cfg.seed,
            json!([]),
        );
        let path = out_path(cfg, "radii.json");
        emit_json(&v, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn scan(cfg: &RunConfig, cli: &Cli) -> Result<()> {
    cfg.validate()?;
    let (graph, weights) = cfg.operator.build()?;
    let scan = scan_region(
        &graph,
        &weights,
        &cfg.scan.grid,
        cfg.scan.n,
        cfg.scan.tail_fraction,
        cfg.scan.slope_threshold,
    )?;
    let mut counts = [0usize; 3];
    for s in &scan.samples {
        match s.classification {
            Classification::Bounded => counts[0] += 1,
            Classification::Unbounded => counts[1] += 1,
            Classification::Inconclusive => counts[2] += 1,
        }
    }
    println!(
        "scanned {} points ({} x {}), N = {}",
        scan.samples.len(),
        scan.width,
        scan.height,
        scan.n_max
    );
    println!(
        "bounded {}, unbounded {}, inconclusive {}",
        counts[0], counts[1], counts[2]
    );
    if let Some(r) = &scan.radii {
        println!("r_inner {:.6}, r_disc {:.6}, r_dual {:.6}", r.r_inner, r.r_disc, r.r_dual_estimate);
    }
    if cfg.output.csv {
        let path = out_path(cfg, "scan.csv");
        emit_csv(&scan, &path)?;
        println!("wrote {}", path.display());
    }
    if cfg.output.heatmap {
        let path = out_path(cfg, "scan.pgm");
        emit_heatmap(&scan, &path)?;
        println!("wrote {}", path.display());
    }
    if cfg.output.json {
        let v = report_json(
            operator_json(cfg),
            scan.radii.as_ref(),
            json!({"scan_N": scan.n_max, "depth": graph.depth()}),
            cfg.seed,
            scan_summary_json(&scan),
        );
        let path = out_path(cfg, "scan.json");
        emit_json(&v, &path)?;
        println!("wrote {}", path.display());
    }
    if cli.strict && counts[2] > 0 {
        return Err(Error::CheckFailed(format!(
            "{} of {} grid points are INCONCLUSIVE under --strict",
            counts[2],
            scan.samples.len()
        )));
    }
    Ok(())
}

fn kernel(cfg: &RunConfig, cli: &Cli) -> Result<()> {
    cfg.validate()?;
    let (graph, weights) = cfg.operator.build()?;
    let dual = cauchy_dual(&graph, &weights)?;
    let basis = wandering_basis(&graph, &weights)?;
    let radii_n = 2048.min(graph.depth().saturating_sub(3));
    let radii = disc_radii(&graph, &weights, &basis, radii_n, 64, cfg.seed)?;
    let w = C64::new(cfg.kernel.w[0], cfg.kernel.w[1]);
    let z = cfg.kernel.z.map(|p| C64::new(p[0], p[1])).unwrap_or(w);

    let data = evaluation_data(&graph, &dual, &basis, w, cfg.kernel.n, radii.r_dual_estimate, cli.strict)?;
    println!("w = {:.6} + {:.6}i, series order N = {}", w.re, w.im, cfg.kernel.n);
    println!(
        "tail bound {:.6e} ({})",
        data.tail_bound,
        if data.tail_certified { "certified geometric bound" } else { "heuristic radius estimate" }
    );
    let d = basis.dim();
    println!("gram of E_w* on the kernel basis ({d} x {d}):");
    for i in 0..d {
        let row: Vec<String> = (0..d)
            .map(|j| format!("{:+.9}{:+.9}i", data.gram[(i, j)].re, data.gram[(i, j)].im))
            .collect();
        println!("  [{}]", row.join(", "));
    }
    let kappa = kernel_gram(&graph, &dual, &basis, z, w, cfg.kernel.n, radii.r_dual_estimate, cli.strict)?;
    println!("kappa(z, w) at z = {:.6} + {:.6}i:", z.re, z.im);
    for i in 0..d {
        let row: Vec<String> = (0..d)
            .map(|j| format!("{:+.9}{:+.9}i", kappa[(i, j)].re, kappa[(i, j)].im))
            .collect();
        println!("  [{}]", row.join(", "));
    }

    let (eigen, protocol_ok) = if cfg.kernel.levels >= 12 {
        adjoint_eigenbasis_checked(&graph, &weights, w, cfg.kernel.levels)?
    } else {
        (adjoint_eigenbasis(&graph, &weights, w, cfg.kernel.levels)?, false)
    };
    println!(
        "adjoint eigenvectors at conj(w): {} found, tail mass {:.3e}, refinement {}",
        eigen.vectors.len(),
        eigen.tail_mass,
        if protocol_ok { "stable" } else { "not confirmed" }
    );
    let mut sigma_min = f64::NAN;
    match gram_test(&basis, &eigen) {
        Ok(gt) => {
            sigma_min = gt.sigma_min;
            println!(
                "cross-gram sigma_min = {:.9} ({})",
                gt.sigma_min,
                if gt.dual_family.is_some() { "dual family computed" } else { "too singular for a dual family" }
            );
        }
        Err(e) => println!("cross-gram test skipped: {e}"),
    }

    if cfg.output.json {
        let gram_rows: Vec<Vec<[f64; 2]>> = (0..d)
            .map(|i| (0..d).map(|j| [data.gram[(i, j)].re, data.gram[(i, j)].im]).collect())
            .collect();
        let kappa_rows: Vec<Vec<[f64; 2]>> = (0..d)
            .map(|i| (0..d).map(|j| [kappa[(i, j)].re, kappa[(i, j)].im]).collect())
            .collect();
        let v = report_json(
            operator_json(cfg),
            Some(&radii),
            json!({"kernel_N": cfg.kernel.n, "levels": cfg.kernel.levels, "depth": graph.depth()}),
            cfg.seed,
            json!([
                {"name": "w", "computed": [w.re, w.im]},
                {"name": "z", "computed": [z.re, z.im]},
                {"name": "tail_bound", "computed": data.tail_bound, "certified": data.tail_certified},
                {"name": "gram", "computed": gram_rows},
                {"name": "kappa", "computed": kappa_rows},
                {"name": "eigenvectors", "computed": eigen.vectors.len(), "tail_mass": eigen.tail_mass, "stable": protocol_ok},
                {"name": "sigma_min", "computed": if sigma_min.is_nan() { serde_json::Value::Null } else { json!(sigma_min) }},
            ]),
        );
        let path = out_path(cfg, "kernel.json");
        emit_json(&v, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn verify1(cfg: &RunConfig, cli: &Cli) -> Result<()> {
    let n = cli.nmax.unwrap_or(2048);
    let table = verify_example1(cfg.operator.depth, n, cfg.seed)?;
    println!("{table}");
    if cfg.output.json {
        let v = report_json(
            operator_json(cfg),
            None,
            json!({"orbit_N": n, "depth": cfg.operator.depth}),
            cfg.seed,
            table.to_json(),
        );
        let path = out_path(cfg, "verify-example1.json");
        emit_json(&v, &path)?;
        println!("wrote {}", path.display());
    }
    if !table.all_pass() {
        return Err(Error::CheckFailed(format!(
            "{} of {} verification rows failed",
            table.failed_count(),
            table.rows.len()
        )));
    }
    Ok(())
}

fn verify2(cfg: &RunConfig, cli: &Cli) -> Result<()> {
    let _ = cli;
    let table = verify_example2(cfg.operator.k, cfg.operator.depth, cfg.seed)?;
    println!("{table}");
    if cfg.output.json {
        let v = report_json(
            operator_json(cfg),
            None,
            json!({"depth": cfg.operator.depth, "k": cfg.operator.k}),
            cfg.seed,
            table.to_json(),
        );
        let path = out_path(cfg, "verify-example2.json");
        emit_json(&v, &path)?;
        println!("wrote {}", path.display());
    }
    if !table.all_pass() {
        return Err(Error::CheckFailed(format!(
            "{} of {} verification rows failed",
            table.failed_count(),
            table.rows.len()
        )));
    }
    Ok(())
}
