//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the report is always printed; the
//! process fails if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use serrin_core::cheeger::{
    calibration_residuals, cheeger_quotient, one_laplacian_check, subset_oracle, tv_relaxed_minimize,
    verify_calibration, CalibrationField, CalibrationTolerances, Slab, TvOptions,
};
use serrin_core::cmc::{shift_periodicity_check, solve_cmc_eps, solve_cmc_limit, CmcOptions, CmcSolution};
use serrin_core::geometry::{build_profile, generate_grid, ProfileDomain};
use serrin_core::serrin::{
    continue_branch, cylinder_point, detect_bifurcation_period, newton_solve_profile, polish, BranchPoint, GridSpec,
    NewtonOptions,
};
use serrin_core::torsion::{gradient_bound_margin, solve_torsion, TorsionSolution};

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        println!("criterion {id}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((id, ok, detail));
    }
}

fn torsion(d: &ProfileDomain, size: usize) -> TorsionSolution {
    solve_torsion(&generate_grid(d, size, size).expect("grid")).expect("torsion")
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Shared fixture: the n = 1 branch from the bifurcation point.
struct Branch {
    lambda_star: f64,
    positive: Vec<BranchPoint>,
    negative: Vec<BranchPoint>,
    /// `s > 0` points re-solved on 256².
    fine: Vec<BranchPoint>,
    /// The `s = 0.05` point on 256².
    mid: BranchPoint,
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 1..=3usize {
        let radius = 1.0;
        let d = build_profile(n, PI, &[radius]).unwrap();
        let sol = torsion(&d, 256);
        let g = &sol.grid;
        let err = max_abs((0..g.num_nodes()).map(|k| {
            let (i, j) = (k % (g.n_rho() + 1), k / (g.n_rho() + 1));
            let r = g.radius(i, j);
            sol.u[k] - (radius * radius - r * r) / (2.0 * n as f64)
        }));
        let beta_err = (sol.beta_mean - radius / n as f64).abs();
        // the scheme reproduces the quadratic exactly, so the order is
        // measured by self-convergence on a wavy profile
        let wavy = build_profile(n, PI, &[1.0, 0.1]).unwrap();
        let sols: Vec<_> = [32, 64, 128, 256, 512].iter().map(|&m| torsion(&wavy, m)).collect();
        let diffs: Vec<f64> = sols
            .windows(2)
            .map(|w| {
                let (c, f) = (&w[0].grid, &w[1].grid);
                max_abs(
                    (0..=c.n_t())
                        .flat_map(|j| (0..=c.n_rho()).map(move |i| (i, j)))
                        .map(|(i, j)| w[0].u[c.idx(i, j)] - w[1].u[f.idx(2 * i, 2 * j)]),
                )
            })
            .collect();
        let order = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
        ok &= err <= 1e-4 && beta_err <= 1e-6 && order >= 1.9;
        parts.push(format!("n={n}: L∞ {err:.1e}, |β−R/n| {beta_err:.1e}, order {order:.3}"));
    }
    parts.push(format!("{:.1?}", start.elapsed()));
    report.record(1, ok, parts.join("; "));
}

fn criterion_2(report: &mut Report, branch: &Branch) {
    let mut worst: f64 = 0.0;
    for n in 1..=3usize {
        let sol = torsion(&build_profile(n, PI, &[1.0]).unwrap(), 64);
        for eps in [0.05, 0.1, 0.25] {
            worst = worst.max((gradient_bound_margin(&sol, eps).unwrap() - eps).abs());
        }
    }
    let mut min_margin = f64::INFINITY;
    for p in &branch.fine {
        let sol = torsion(&p.domain, 256);
        for eps in [0.01, 0.02, 0.05, 0.1] {
            min_margin = min_margin.min(gradient_bound_margin(&sol, eps).unwrap());
        }
    }
    report.record(
        2,
        worst <= 2e-3 && min_margin > 0.0,
        format!("constant profiles |c_ε − ε/R| ≤ {worst:.1e}; min c_ε on branch (ε ≥ 0.01) {min_margin:.4}"),
    );
}

fn build_branch() -> (Branch, String) {
    let start = Instant::now();
    let lambda_star = detect_bifurcation_period(1, 1.0).expect("bifurcation");
    let opts = NewtonOptions::default();
    let base = cylinder_point(1, 1.0, lambda_star, &opts).expect("cylinder");
    let up = continue_branch(&base, 0.1, 0.02, &opts).expect("continuation");
    let down = continue_branch(&base, -0.1, -0.02, &opts).expect("continuation");
    let fine_opts = NewtonOptions {
        grid: GridSpec::new(256, 256),
        ..opts
    };
    let fine: Vec<BranchPoint> = up.points[1..].iter().map(|p| polish(p, &fine_opts).expect("polish")).collect();
    let near = &up.points[2];
    let mid = newton_solve_profile(&near.domain, 0.05, &opts).expect("s = 0.05");
    let mid = polish(&mid, &fine_opts).expect("polish s = 0.05");
    let msg = format!(
        "branch: {} + {} points, failures {:?}/{:?}, {:.1?}",
        up.points.len(),
        down.points.len(),
        up.failure.as_ref().map(|f| f.0),
        down.failure.as_ref().map(|f| f.0),
        start.elapsed()
    );
    (
        Branch {
            lambda_star,
            positive: up.points,
            negative: down.points,
            fine,
            mid,
        },
        msg,
    )
}

fn criterion_3(report: &mut Report, branch: &Branch, timing: &str) {
    let start = Instant::now();
    let lambda2 = detect_bifurcation_period(1, 2.0).unwrap();
    let scale_gap = (lambda2 - 2.0 * branch.lambda_star).abs();
    let complete = branch.positive.len() == 6 && branch.negative.len() == 6;
    let worst_res = max_abs(branch.positive.iter().chain(&branch.negative).map(|p| p.residual_norm));
    let sym = max_abs(
        branch
            .positive
            .iter()
            .zip(&branch.negative)
            .map(|(p, q)| p.beta - q.beta),
    );
    let reached = branch.positive.last().map(|p| p.s).unwrap_or(0.0);
    report.record(
        3,
        complete && scale_gap <= 1e-5 && worst_res <= 1e-8 && sym <= 1e-8,
        format!(
            "λ*(1) = {:.7} (bracket 1e-6), |λ*(2) − 2λ*(1)| {scale_gap:.1e}; reached s = {reached}, max residual {worst_res:.1e}, \
             max |β(s) − β(−s)| {sym:.1e}; {timing}, scale check {:.1?}",
            branch.lambda_star,
            start.elapsed()
        ),
    );
}

fn criterion_4_5(report: &mut Report, branch: &Branch) {
    let mut gap: f64 = 0.0;
    let mut calib_ok = true;
    let mut worst = [0.0f64; 4];
    let tol = CalibrationTolerances::default();
    for p in branch.fine.iter().chain(std::iter::once(&branch.mid)) {
        let sol = torsion(&p.domain, 256);
        let r = verify_calibration(&sol, &Slab::half_periods(&p.domain, 2).unwrap()).expect("calibration");
        gap = gap.max(r.identity_gap);
        calib_ok &= one_laplacian_check(&r, &tol);
        worst[0] = worst[0].max(r.calib_sup);
        worst[1] = worst[1].max(r.calib_div_residual);
        worst[2] = worst[2].max(r.calib_boundary_gap);
        worst[3] = worst[3].max(r.calib_wall_gap);
    }
    // constant profiles: closed-form β = R/n, and slab doubling
    let mut exact: f64 = 0.0;
    let mut doubling: f64 = 0.0;
    for n in 1..=3usize {
        for radius in [0.5, 1.0, 2.0] {
            let d = build_profile(n, 1.3, &[radius]).unwrap();
            let q = cheeger_quotient(&d, &Slab::half_periods(&d, 2).unwrap()).unwrap();
            exact = exact.max((q - n as f64 / radius).abs());
        }
    }
    for p in &branch.fine {
        let one = cheeger_quotient(&p.domain, &Slab::half_periods(&p.domain, 2).unwrap()).unwrap();
        let two = cheeger_quotient(&p.domain, &Slab::half_periods(&p.domain, 4).unwrap()).unwrap();
        doubling = doubling.max((one - two).abs());
    }
    report.record(
        4,
        gap <= 1e-6 && exact <= 1e-12 && doubling <= 1e-12,
        format!("branch max |h − 1/β| {gap:.1e}; constant profiles {exact:.1e}; slab doubling {doubling:.1e}"),
    );

    // exact fields on constant profiles
    let mut exact_field: f64 = 0.0;
    for n in 1..=3usize {
        let sol = torsion(&build_profile(n, PI, &[1.0]).unwrap(), 64);
        let r = calibration_residuals(&CalibrationField::from_torsion(&sol, sol.beta_mean), 1.0 / sol.beta_mean);
        exact_field = exact_field.max((r.sup - 1.0).abs()).max(r.div).max(r.boundary).max(r.wall);
    }
    report.record(
        5,
        calib_ok && exact_field <= 1e-8,
        format!(
            "branch at 256²: sup {:.10}, div {:.1e}, boundary {:.1e}, wall {:.1e}; constant profiles {exact_field:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

fn criterion_6(report: &mut Report, branch: &Branch) {
    let start = Instant::now();
    let cases = [
        ("strip", build_profile(1, PI, &[1.0]).unwrap(), 1.0),
        ("cylinder n=2", build_profile(2, PI, &[1.0]).unwrap(), 0.5),
        ("s=0.05", branch.mid.domain.clone(), branch.mid.beta),
    ];
    let opts = TvOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, d, beta) in &cases {
        let slab = Slab::half_periods(d, 2).unwrap();
        let critical = tv_relaxed_minimize(d, &slab, *beta, &opts).expect("tv");
        // load raised by 1.25, i.e. β replaced by β/1.25
        let inflated = tv_relaxed_minimize(d, &slab, *beta / 1.25, &opts).expect("tv");
        let q = cheeger_quotient(d, &slab).unwrap();
        let oracle = subset_oracle(d, &slab, 32).unwrap();
        ok &= critical.value.abs() <= 2e-3 && inflated.value <= -1e-2 && oracle >= q - 1e-3;
        parts.push(format!(
            "{name}: critical {:.1e} (bound {:.1e}), inflated {:.3}, oracle − h {:.1e}",
            critical.value,
            critical.lower_bound,
            inflated.value,
            oracle - q
        ));
    }
    parts.push(format!("{:.1?}", start.elapsed()));
    report.record(6, ok, parts.join("; "));
}

fn criterion_7(report: &mut Report) {
    let start = Instant::now();
    let cap = |r: f64, eps: f64| (1.0 - r * r).sqrt() - (1.0 - (1.0 - eps) * (1.0 - eps)).sqrt();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [1usize, 2] {
        let radius = 1.0;
        let d = build_profile(n, PI, &[radius]).unwrap();
        let sol = torsion(&d, 64);
        let opts = CmcOptions {
            n_rho: 256,
            n_t: 16,
            ..Default::default()
        };
        let f = solve_cmc_eps(&sol, 0.1, &opts).expect("cap");
        let g = &f.grid;
        let err = max_abs((0..g.num_nodes()).map(|k| f.w[k] - cap(g.radius(k % (g.n_rho() + 1), k / (g.n_rho() + 1)), 0.1)));
        let limit = solve_cmc_limit(&sol, &[0.1, 0.05, 0.025], &opts).expect("limit");
        let flux = max_abs(
            limit
                .w_fields
                .iter()
                .flat_map(|f| f.contact.iter().map(move |q| q - (1.0 - f.eps / radius))),
        );
        ok &= err <= 5e-4 && limit.curvature_residual <= 5e-4 && flux <= 2e-3;
        parts.push(format!(
            "n={n}: cap L∞ {err:.1e}, curvature {:.1e}, |q − (1 − ε/R)| {flux:.1e}",
            limit.curvature_residual
        ));
    }
    parts.push(format!("{:.1?}", start.elapsed()));
    report.record(7, ok, parts.join("; "));
}

/// ε sequence for non-constant profiles: the successive differences first
/// rise for ε ≳ 0.02 before the asymptotic decay sets in.
const BRANCH_EPS: [f64; 4] = [0.025, 0.0125, 0.00625, 0.003125];

fn branch_cmc_options(perturbation: f64) -> CmcOptions {
    CmcOptions {
        n_rho: 256,
        n_t: 32,
        perturbation,
        ..Default::default()
    }
}

fn criterion_8(report: &mut Report, branch: &Branch) -> Option<CmcSolution> {
    let start = Instant::now();
    let d = &branch.mid.domain;
    let sol = torsion(d, 256);
    let mut c = match solve_cmc_limit(&sol, &BRANCH_EPS, &branch_cmc_options(0.0)) {
        Ok(c) => c,
        Err(e) => {
            report.record(8, false, format!("solve_cmc_limit failed: {e}"));
            return None;
        }
    };
    let min_phi = d.phi_range().0;
    let contact_ok = c.w_fields.iter().all(|f| f.contact_stats().min >= 1.0 - 2.0 * f.eps / min_phi);
    let shift = shift_periodicity_check(&mut c).expect("shift check");
    let contacts: Vec<String> = c.w_fields.iter().map(|f| format!("{:.5}", f.contact_stats().min)).collect();
    report.record(
        8,
        c.bounded && c.curvature_residual <= 1e-3 && contact_ok && shift <= 5e-4,
        format!(
            "differences {:?}, curvature {:.1e}, min q per ε [{}], shift {shift:.1e}; {:.1?}",
            c.differences.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            c.curvature_residual,
            contacts.join(", "),
            start.elapsed()
        ),
    );
    Some(c)
}

fn matched_gap(a: &[f64], b: &[f64]) -> f64 {
    let shift = (a.iter().sum::<f64>() - b.iter().sum::<f64>()) / a.len() as f64;
    max_abs(a.iter().zip(b).map(|(x, y)| x - y - shift))
}

fn criterion_9(report: &mut Report, branch: &Branch, first: Option<&CmcSolution>) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    // cylinder cap
    let cyl = torsion(&build_profile(2, PI, &[1.0]).unwrap(), 64);
    let cyl_opts = CmcOptions {
        n_t: 16,
        ..Default::default()
    };
    let eps = [0.1, 0.05, 0.025];
    let a = solve_cmc_limit(&cyl, &eps, &cyl_opts).expect("cap");
    let b = solve_cmc_limit(&cyl, &eps, &CmcOptions { perturbation: 0.3, ..cyl_opts }).expect("cap");
    let mut pairs = vec![(a, b)];
    if let Some(first) = first {
        let sol = torsion(&branch.mid.domain, 256);
        match solve_cmc_limit(&sol, &BRANCH_EPS, &branch_cmc_options(0.2)) {
            Ok(second) => pairs.push((first.clone(), second)),
            Err(_) => ok = false,
        }
    } else {
        ok = false;
    }
    for (a, b) in &pairs {
        worst = worst.max(matched_gap(&a.w_limit, &b.w_limit));
        for (f, g) in a.w_fields.iter().zip(&b.w_fields) {
            worst = worst.max(matched_gap(&f.w, &g.w));
        }
    }
    report.record(
        9,
        ok && worst <= 1e-8,
        format!("{} instances, max difference after matching {worst:.1e}; {:.1?}", pairs.len(), start.elapsed()),
    );
}

fn main() -> ExitCode {
    let mut report = Report { lines: Vec::new() };
    criterion_1(&mut report);
    let (branch, timing) = build_branch();
    criterion_2(&mut report, &branch);
    criterion_3(&mut report, &branch, &timing);
    criterion_4_5(&mut report, &branch);
    criterion_6(&mut report, &branch);
    criterion_7(&mut report);
    let cmc = criterion_8(&mut report, &branch);
    criterion_9(&mut report, &branch, cmc.as_ref());
    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        report.lines.len() - failed.len(),
        report.lines.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
