//! The four subcommands. Each reads its inputs, runs the pipeline stage
//! point by point, prints a table and writes JSON and CSV artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use serrin_core::cheeger::{
    one_laplacian_check, subset_oracle, tv_relaxed_minimize, verify_calibration, CalibrationTolerances,
    CheegerCalibrationReport, Slab, TvOptions,
};
use serrin_core::cmc::{
    field_rows, limit_rows, shift_periodicity_check, solve_cmc_limit, CmcOptions, CmcSolution, ContactStats,
};
use serrin_core::geometry::generate_grid;
use serrin_core::serrin::{
    continue_branch, cylinder_point, detect_bifurcation_period_with, polish, BifurcationOptions, BranchPoint,
    NewtonOptions,
};
use serrin_core::torsion::{solve_torsion, TorsionSolution};

use crate::config::{Grid, RunConfig};
use crate::error::CliError;
use crate::output::{artifact, ensure_dir, read_json, write_csv, write_json, Meta};

pub const BRANCH_FILE: &str = "branch.json";
pub const CERTIFY_FILE: &str = "certify.json";
pub const CMC_FILE: &str = "cmc.json";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchFile {
    pub meta: Meta,
    pub n: usize,
    pub radius: f64,
    pub lambda_star: f64,
    pub points: Vec<BranchPoint>,
    /// Amplitude and message of the first failed continuation step.
    pub failure: Option<(f64, String)>,
}

#[derive(Debug, Clone, Serialize)]
struct BranchRow {
    s: f64,
    lambda: f64,
    beta: f64,
    residual_norm: f64,
    newton_iterations: usize,
}

fn branch_rows(points: &[BranchPoint]) -> Vec<BranchRow> {
    points
        .iter()
        .map(|p| BranchRow {
            s: p.s,
            lambda: p.lambda(),
            beta: p.beta,
            residual_norm: p.residual_norm,
            newton_iterations: p.newton_iterations,
        })
        .collect()
}

/// Runs `f` on every item, spread over `workers` threads; output order
/// follows the input.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn find_serrin(config: &RunConfig) -> Result<(), CliError> {
    let c = &config.serrin;
    let solver = |stage: &'static str| move |source| CliError::Solver { stage, source };
    let bif = BifurcationOptions {
        grid: c.grid.spec(),
        ..Default::default()
    };
    let lambda_star = detect_bifurcation_period_with(c.n, c.radius, &bif).map_err(solver("bifurcation scan"))?;
    let opts = NewtonOptions {
        modes: c.modes,
        grid: c.grid.spec(),
        tolerance: c.tolerance,
        ..Default::default()
    };
    let base = cylinder_point(c.n, c.radius, lambda_star, &opts).map_err(solver("cylinder point"))?;
    let (points, failure) = if c.s_max < c.ds {
        (vec![base], None)
    } else {
        let run = continue_branch(&base, c.s_max, c.ds, &opts).map_err(solver("continuation"))?;
        (run.points, run.failure)
    };
    println!("λ* = {lambda_star:.10}  (n = {}, R = {})", c.n, c.radius);
    println!("{:>8} {:>14} {:>14} {:>10} {:>4}", "s", "lambda", "beta", "residual", "it");
    for p in &points {
        println!(
            "{:>8.4} {:>14.10} {:>14.10} {:>10.2e} {:>4}",
            p.s,
            p.lambda(),
            p.beta,
            p.residual_norm,
            p.newton_iterations
        );
    }
    ensure_dir(&config.out)?;
    let file = BranchFile {
        meta: Meta::new(config),
        n: c.n,
        radius: c.radius,
        lambda_star,
        points,
        failure: failure.as_ref().map(|(s, e)| (*s, e.to_string())),
    };
    write_json(&artifact(&config.out, BRANCH_FILE), &file)?;
    write_csv(&artifact(&config.out, "branch.csv"), &branch_rows(&file.points))?;
    match failure {
        Some((s, source)) => {
            eprintln!("continuation stopped at s = {s}");
            Err(CliError::Solver {
                stage: "continuation",
                source,
            })
        }
        None => Ok(()),
    }
}

/// Branch points from a branch file, or from a bare JSON array of points.
pub fn read_branch(path: &Path) -> Result<Vec<BranchPoint>, CliError> {
    let value: Value = read_json(path)?;
    let points = match value {
        Value::Array(_) => serde_json::from_value(value),
        Value::Object(mut map) => match map.remove("points") {
            Some(points) => serde_json::from_value(points),
            None => return Err(CliError::Config(format!("{}: no \"points\" array", path.display()))),
        },
        _ => return Err(CliError::Config(format!("{}: expected a branch file", path.display()))),
    };
    let points: Vec<BranchPoint> = points.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if points.is_empty() {
        return Err(CliError::Config(format!("{}: no branch points", path.display())));
    }
    Ok(points)
}

fn branch_path(config: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .unwrap_or_else(|| artifact(&config.out, BRANCH_FILE))
}

/// The point re-solved on `grid` (chord Newton from its own grid) together
/// with its torsion solution there.
fn on_grid(point: &BranchPoint, grid: Grid, config: &RunConfig) -> serrin_core::Result<(BranchPoint, TorsionSolution)> {
    let point = if point.grid == grid.spec() {
        point.clone()
    } else {
        let modes = point.domain.coeffs().len().saturating_sub(1).max(2);
        let opts = NewtonOptions {
            modes,
            grid: grid.spec(),
            tolerance: config.serrin.tolerance,
            ..Default::default()
        };
        polish(point, &opts)?
    };
    let sol = solve_torsion(&generate_grid(&point.domain, grid.n_rho, grid.n_t)?)?;
    Ok((point, sol))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyEntry {
    pub s: f64,
    pub lambda: f64,
    /// Serrin defect after re-solving on the certificate grid.
    pub defect: Option<f64>,
    pub report: Option<CheegerCalibrationReport>,
    pub identity_pass: bool,
    pub calibration_pass: bool,
    pub verdict: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyFile {
    pub meta: Meta,
    pub tol_identity: f64,
    pub tolerances: CalibrationTolerances,
    pub entries: Vec<CertifyEntry>,
}

#[derive(Debug, Clone, Serialize)]
struct CertifyRow {
    s: f64,
    identity_gap: Option<f64>,
    calib_sup: Option<f64>,
    calib_div_residual: Option<f64>,
    calib_boundary_gap: Option<f64>,
    calib_wall_gap: Option<f64>,
    tv_min_value: Option<f64>,
    subset_oracle_min: Option<f64>,
    verdict: bool,
}

fn certify_point(point: &BranchPoint, config: &RunConfig, tol: &CalibrationTolerances) -> CertifyEntry {
    let c = &config.certify;
    let run = || -> serrin_core::Result<(f64, CheegerCalibrationReport)> {
        let (point, sol) = on_grid(point, c.grid, config)?;
        let d = &point.domain;
        let slab = Slab::half_periods(d, c.slab_half_periods)?;
        let mut report = verify_calibration(&sol, &slab)?;
        if c.tv {
            let opts = TvOptions {
                n_r: c.tv_grid.n_rho,
                n_t: c.tv_grid.n_t,
                ..Default::default()
            };
            report.tv_min_value = Some(tv_relaxed_minimize(d, &slab, report.beta, &opts)?.value);
        }
        if c.oracle_cells > 0 {
            report.subset_oracle_min = Some(subset_oracle(d, &slab, c.oracle_cells)?);
        }
        Ok((point.residual_norm, report))
    };
    match run() {
        Ok((defect, report)) => {
            let identity_pass = report.identity_gap <= c.tol_identity;
            let calibration_pass = one_laplacian_check(&report, tol);
            CertifyEntry {
                s: point.s,
                lambda: point.lambda(),
                defect: Some(defect),
                report: Some(report),
                identity_pass,
                calibration_pass,
                verdict: identity_pass && calibration_pass,
                error: None,
            }
        }
        Err(e) => CertifyEntry {
            s: point.s,
            lambda: point.lambda(),
            defect: None,
            report: None,
            identity_pass: false,
            calibration_pass: false,
            verdict: false,
            error: Some(e.to_string()),
        },
    }
}

pub fn certify(config: &RunConfig, branch: Option<&Path>) -> Result<(), CliError> {
    let points = read_branch(&branch_path(config, branch))?;
    let c = &config.certify;
    let tol = CalibrationTolerances {
        sup: c.tol_sup,
        div: c.tol_calib,
        boundary: c.tol_calib,
        wall: c.tol_calib,
    };
    let entries = parallel_map(&points, config.workers, |p| certify_point(p, config, &tol));
    println!(
        "{:>8} {:>10} {:>14} {:>10} {:>10} {:>10} {:>8}",
        "s", "gap", "sup", "div", "boundary", "wall", "verdict"
    );
    for e in &entries {
        match (&e.report, &e.error) {
            (Some(r), _) => println!(
                "{:>8.4} {:>10.2e} {:>14.10} {:>10.2e} {:>10.2e} {:>10.2e} {:>8}",
                e.s, r.identity_gap, r.calib_sup, r.calib_div_residual, r.calib_boundary_gap, r.calib_wall_gap, e.verdict
            ),
            (None, Some(msg)) => println!("{:>8.4} error: {msg}", e.s),
            (None, None) => unreachable!("entry without report or error"),
        }
    }
    let rows: Vec<CertifyRow> = entries
        .iter()
        .map(|e| {
            let r = e.report.as_ref();
            CertifyRow {
                s: e.s,
                identity_gap: r.map(|r| r.identity_gap),
                calib_sup: r.map(|r| r.calib_sup),
                calib_div_residual: r.map(|r| r.calib_div_residual),
                calib_boundary_gap: r.map(|r| r.calib_boundary_gap),
                calib_wall_gap: r.map(|r| r.calib_wall_gap),
                tv_min_value: r.and_then(|r| r.tv_min_value),
                subset_oracle_min: r.and_then(|r| r.subset_oracle_min),
                verdict: e.verdict,
            }
        })
        .collect();
    ensure_dir(&config.out)?;
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    let total = entries.len();
    write_json(
        &artifact(&config.out, CERTIFY_FILE),
        &CertifyFile {
            meta: Meta::new(config),
            tol_identity: c.tol_identity,
            tolerances: tol,
            entries,
        },
    )?;
    write_csv(&artifact(&config.out, "certify.csv"), &rows)?;
    partial("certify", failed, total)
}

fn partial(stage: &'static str, failed: usize, total: usize) -> Result<(), CliError> {
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Partial { stage, failed, total })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsLog {
    pub eps: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    pub contact: ContactStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmcEntry {
    pub s: f64,
    pub beta: Option<f64>,
    /// `1/β`, the mean curvature of the graph.
    pub mean_curvature: Option<f64>,
    pub eps: Vec<EpsLog>,
    pub differences: Vec<f64>,
    pub richardson_order: Option<f64>,
    pub curvature_residual: Option<f64>,
    pub periodicity_residual: Option<f64>,
    pub bounded: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmcFile {
    pub meta: Meta,
    pub eps_list: Vec<f64>,
    pub entries: Vec<CmcEntry>,
}

fn cmc_entry(s: f64, c: &CmcSolution) -> CmcEntry {
    CmcEntry {
        s,
        beta: Some(c.beta),
        mean_curvature: Some(1.0 / c.beta),
        eps: c
            .w_fields
            .iter()
            .map(|f| EpsLog {
                eps: f.eps,
                newton_iterations: f.newton_iterations,
                residual: f.residual,
                contact: f.contact_stats(),
            })
            .collect(),
        differences: c.differences.clone(),
        richardson_order: Some(c.richardson_order),
        curvature_residual: Some(c.curvature_residual),
        periodicity_residual: c.periodicity_residual,
        bounded: Some(c.bounded),
        error: None,
    }
}

fn cmc_point(index: usize, point: &BranchPoint, config: &RunConfig, dir: &Path) -> Result<CmcEntry, String> {
    let c = &config.cmc;
    let (_, sol) = on_grid(point, c.torsion_grid, config).map_err(|e| e.to_string())?;
    let opts = CmcOptions {
        n_rho: c.grid.n_rho,
        n_t: c.grid.n_t,
        tolerance: c.tolerance,
        ..Default::default()
    };
    let mut solution = solve_cmc_limit(&sol, &c.eps_list, &opts).map_err(|e| e.to_string())?;
    shift_periodicity_check(&mut solution).map_err(|e| e.to_string())?;
    for (k, f) in solution.w_fields.iter().enumerate() {
        write_csv(&dir.join(format!("point{index:02}_eps{k}.csv")), &field_rows(f)).map_err(|e| e.to_string())?;
    }
    write_csv(&dir.join(format!("point{index:02}_limit.csv")), &limit_rows(&solution)).map_err(|e| e.to_string())?;
    Ok(cmc_entry(point.s, &solution))
}

pub fn solve_cmc(config: &RunConfig, branch: Option<&Path>) -> Result<(), CliError> {
    let points = read_branch(&branch_path(config, branch))?;
    let dir = config.out.join("cmc");
    ensure_dir(&dir)?;
    let indexed: Vec<(usize, &BranchPoint)> = points.iter().enumerate().collect();
    let entries: Vec<CmcEntry> = parallel_map(&indexed, config.workers, |(k, p)| {
        cmc_point(*k, p, config, &dir).unwrap_or_else(|error| CmcEntry {
            s: p.s,
            beta: None,
            mean_curvature: None,
            eps: Vec::new(),
            differences: Vec::new(),
            richardson_order: None,
            curvature_residual: None,
            periodicity_residual: None,
            bounded: None,
            error: Some(error),
        })
    });
    println!(
        "{:>8} {:>12} {:>10} {:>10} {:>10} {:>8}",
        "s", "H = 1/beta", "curvature", "periodic", "min q", "bounded"
    );
    for e in &entries {
        match &e.error {
            None => println!(
                "{:>8.4} {:>12.8} {:>10.2e} {:>10.2e} {:>10.6} {:>8}",
                e.s,
                e.mean_curvature.unwrap_or(f64::NAN),
                e.curvature_residual.unwrap_or(f64::NAN),
                e.periodicity_residual.unwrap_or(f64::NAN),
                e.eps.last().map(|l| l.contact.min).unwrap_or(f64::NAN),
                e.bounded.unwrap_or(false)
            ),
            Some(msg) => println!("{:>8.4} error: {msg}", e.s),
        }
    }
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    let total = entries.len();
    write_json(
        &artifact(&config.out, CMC_FILE),
        &CmcFile {
            meta: Meta::new(config),
            eps_list: config.cmc.eps_list.clone(),
            entries,
        },
    )?;
    partial("solve-cmc", failed, total)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub s: f64,
    pub lambda: f64,
    pub beta: f64,
    pub residual_norm: f64,
    pub identity_gap: Option<f64>,
    pub certified: Option<bool>,
    pub curvature_residual: Option<f64>,
    pub periodicity_residual: Option<f64>,
    pub min_contact: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile {
    meta: Meta,
    rows: Vec<ReportRow>,
}

fn same_point(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs())
}

/// Joins the artifacts present in the output directory into one table.
pub fn report(config: &RunConfig) -> Result<(), CliError> {
    let points = read_branch(&artifact(&config.out, BRANCH_FILE))?;
    let certify_path = artifact(&config.out, CERTIFY_FILE);
    let certified: Option<CertifyFile> = certify_path.exists().then(|| read_json(&certify_path)).transpose()?;
    let cmc_path = artifact(&config.out, CMC_FILE);
    let cmc: Option<CmcFile> = cmc_path.exists().then(|| read_json(&cmc_path)).transpose()?;
    let rows: Vec<ReportRow> = points
        .iter()
        .map(|p| {
            let cert = certified
                .as_ref()
                .and_then(|f| f.entries.iter().find(|e| same_point(e.s, p.s)));
            let cm = cmc.as_ref().and_then(|f| f.entries.iter().find(|e| same_point(e.s, p.s)));
            ReportRow {
                s: p.s,
                lambda: p.lambda(),
                beta: p.beta,
                residual_norm: p.residual_norm,
                identity_gap: cert.and_then(|e| e.report.as_ref()).map(|r| r.identity_gap),
                certified: cert.map(|e| e.verdict),
                curvature_residual: cm.and_then(|e| e.curvature_residual),
                periodicity_residual: cm.and_then(|e| e.periodicity_residual),
                min_contact: cm.and_then(|e| e.eps.last()).map(|l| l.contact.min),
            }
        })
        .collect();
    let show = |v: Option<f64>| v.map(|x| format!("{x:.2e}")).unwrap_or_else(|| "-".into());
    println!(
        "{:>8} {:>14} {:>14} {:>10} {:>10} {:>9} {:>10} {:>10} {:>10}",
        "s", "lambda", "beta", "residual", "gap", "certified", "curvature", "periodic", "min q"
    );
    for r in &rows {
        println!(
            "{:>8.4} {:>14.10} {:>14.10} {:>10.2e} {:>10} {:>9} {:>10} {:>10} {:>10}",
            r.s,
            r.lambda,
            r.beta,
            r.residual_norm,
            show(r.identity_gap),
            r.certified.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            show(r.curvature_residual),
            show(r.periodicity_residual),
            r.min_contact.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into()),
        );
    }
    write_csv(&artifact(&config.out, "report.csv"), &rows)?;
    write_json(
        &artifact(&config.out, REPORT_FILE),
        &ReportFile {
            meta: Meta::new(config),
            rows,
        },
    )
}
