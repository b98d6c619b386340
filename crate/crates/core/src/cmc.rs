//! Constant mean curvature graphs over periodic Serrin domains by the
//! shrinking-domain scheme.
//!
//! For each `ε > 0` the graph equation
//! `−div(∇w/√(1+|∇w|²)) = 1/β` is solved on `F_ε = {dist(·, ∂Ω) > ε}`
//! (one symmetry cell) with `w = 0` on the shrunk lateral boundary and zero
//! flux on the walls `t ∈ {0, λ}`. It is the Euler–Lagrange equation of
//! `𝒢(w) = ∫√(1+|∇w|²) − (1/β)∫w`, which is strictly convex, so damped
//! Newton with a line search on `𝒢` converges from any admissible start.
//! Letting `ε → 0` the solutions converge, after matching constants, to a
//! graph meeting `∂Ω` vertically.

use serde::{Deserialize, Serialize};

use crate::energy::{Area, Assembler};
use crate::error::{Error, Result};
use crate::fields::{cubic_interpolate, physical_gradient, weighted_divergence, VectorField};
use crate::geometry::{MappedGrid, Profile, ProfileDomain};
use crate::linalg::{pcg, ROUNDOFF_SLACK};
use crate::torsion::{gradient_bound_margin, TorsionSolution};

/// Interior compact subset `{ρ ≤ 0.9}` of the largest-ε domain.
pub const INTERIOR_RHO: f64 = 0.9;

const LINEAR_TOLERANCE: f64 = 1e-11;
const MAX_CG_ITERATIONS: usize = 50_000;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmcOptions {
    pub n_rho: usize,
    pub n_t: usize,
    /// Bound on `max_i |∂𝒢/∂w_i| / S_i` with `S_i` the nodal load weight.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Amplitude of the perturbation `a(1−ρ²)cos(πt/λ)` added to the
    /// initial guess of the first ε problem. Zero gives the linearized start.
    pub perturbation: f64,
}

impl Default for CmcOptions {
    fn default() -> Self {
        Self {
            n_rho: 256,
            n_t: 64,
            tolerance: 1e-10,
            max_iterations: 100,
            perturbation: 0.0,
        }
    }
}

/// Solution of one shrunk problem.
#[derive(Debug, Clone)]
pub struct CmcField {
    pub eps: f64,
    /// Grid of `F_ε`; its line `ρ = 1` is the parallel curve at distance ε.
    pub grid: MappedGrid,
    /// Nodal values, minimum 0.
    pub w: Vec<f64>,
    /// `q = −∂_η w/√(1+|∇w|²)` at the boundary nodes `(n_rho, j)`.
    pub contact: Vec<f64>,
    pub newton_iterations: usize,
    pub residual: f64,
    /// `𝒢` at the start and after every accepted step.
    pub energy_history: Vec<f64>,
}

impl CmcField {
    pub fn contact_stats(&self) -> ContactStats {
        ContactStats::of(&self.contact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl ContactStats {
    fn of(q: &[f64]) -> Self {
        let min = q.iter().copied().fold(f64::INFINITY, f64::min);
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        Self { min, max, mean }
    }
}

/// Points of the fixed interior subgrid: the nodes of the largest-ε grid
/// with `ρ ≤ 0.9`, stored by physical position.
#[derive(Debug, Clone, Serialize)]
pub struct ReferencePoint {
    pub r: f64,
    pub t: f64,
    /// Grid line the point lies on; all ε grids share the `t` nodes.
    #[serde(skip)]
    pub j: usize,
}

#[derive(Debug, Clone)]
pub struct CmcSolution {
    pub domain: ProfileDomain,
    pub beta: f64,
    pub options: CmcOptions,
    pub eps_sequence: Vec<f64>,
    pub w_fields: Vec<CmcField>,
    pub reference: Vec<ReferencePoint>,
    /// Each `w_ε` on the reference points, mean removed.
    pub restricted: Vec<Vec<f64>>,
    /// `max |W_{k+1} − W_k|` on the reference points.
    pub differences: Vec<f64>,
    pub richardson_order: f64,
    /// Extrapolated limit on the reference points, minimum 0.
    pub w_limit: Vec<f64>,
    /// `max |−div(∇w/√(1+|∇w|²)) − 1/β|` for the finest ε over the nodes
    /// inside the reference subset.
    pub curvature_residual: f64,
    pub periodicity_residual: Option<f64>,
    pub bounded: bool,
}

impl CmcSolution {
    pub fn finest(&self) -> &CmcField {
        self.w_fields.last().expect("at least one ε")
    }

    /// Contact flux of the `k`-th field at `t`, even and `2λ`-periodic.
    pub fn contact_profile(&self, k: usize, t: f64) -> f64 {
        let f = &self.w_fields[k];
        let lambda = f.grid.t_max();
        let mut s = t.rem_euclid(2.0 * lambda);
        if s > lambda {
            s = 2.0 * lambda - s;
        }
        cubic_interpolate(&f.contact, f.grid.h_t(), s)
    }
}

/// `−div(∇w/√(1+|∇w|²)) − 1/β` at every node by centered differences.
pub fn curvature_residual_field(grid: &MappedGrid, w: &[f64], beta: f64) -> Vec<f64> {
    let g = physical_gradient(grid, w);
    let xi = VectorField {
        r: (0..w.len()).map(|k| g.r[k] / (1.0 + g.r[k] * g.r[k] + g.t[k] * g.t[k]).sqrt()).collect(),
        t: (0..w.len()).map(|k| g.t[k] / (1.0 + g.r[k] * g.r[k] + g.t[k] * g.t[k]).sqrt()).collect(),
    };
    weighted_divergence(grid, &xi).into_iter().map(|d| -d - 1.0 / beta).collect()
}

/// Grid of `F_ε` on `t ∈ [0, t_max]`.
pub fn shrunk_grid(d: &ProfileDomain, eps: f64, n_rho: usize, n_t: usize, t_max: f64) -> Result<MappedGrid> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    MappedGrid::new(
        Profile::Parallel {
            base: d.clone(),
            offset: eps,
        },
        n_rho,
        n_t,
        t_max,
    )
}

/// One shrunk problem with the existence precondition `c_ε > 0` checked
/// against the torsion solution.
pub fn solve_cmc_eps(sol: &TorsionSolution, eps: f64, opts: &CmcOptions) -> Result<CmcField> {
    check_margin(sol, eps)?;
    let d = sol.grid.profile().base();
    let grid = shrunk_grid(d, eps, opts.n_rho, opts.n_t, d.half_period())?;
    let start = perturbation(&grid, opts.perturbation);
    solve_on_grid(grid, eps, sol.beta_mean, opts, Some(&start))
}

fn check_margin(sol: &TorsionSolution, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {eps}")));
    }
    let margin = gradient_bound_margin(sol, eps)?;
    if !(margin > 0.0) {
        return Err(Error::CEpsNonPositive { eps, margin });
    }
    Ok(())
}

fn perturbation(grid: &MappedGrid, amplitude: f64) -> Vec<f64> {
    let lambda = grid.t_max();
    let mut w = vec![0.0; grid.num_nodes()];
    if amplitude != 0.0 {
        for j in 0..=grid.n_t() {
            let c = (std::f64::consts::PI * grid.t(j) / lambda).cos();
            for i in 0..=grid.n_rho() {
                let rho = grid.rho(i);
                w[grid.idx(i, j)] = amplitude * (1.0 - rho * rho) * c;
            }
        }
    }
    w
}

/// Damped Newton for the discrete `𝒢` on `grid` from `initial` (zero when
/// absent; the first step from zero is the linearized, torsion-like
/// solution).
pub fn solve_on_grid(
    grid: MappedGrid,
    eps: f64,
    beta: f64,
    opts: &CmcOptions,
    initial: Option<&[f64]>,
) -> Result<CmcField> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("β must be positive, got {beta}")));
    }
    let asm = Assembler::new(&grid);
    let load_free = asm.restrict(asm.load());
    let mut x = match initial {
        Some(w0) if w0.len() == grid.num_nodes() => asm.restrict(w0),
        Some(w0) => {
            return Err(Error::InvalidArgument(format!(
                "initial guess has {} values for {} nodes",
                w0.len(),
                grid.num_nodes()
            )))
        }
        None => vec![0.0; asm.num_free()],
    };
    let functional = |x: &[f64]| {
        let w = asm.expand(x, 0.0);
        asm.energy(&Area, &w) - x.iter().zip(&load_free).map(|(a, s)| a * s).sum::<f64>() / beta
    };
    let gradient = |x: &[f64]| {
        let w = asm.expand(x, 0.0);
        let g = asm.restrict(&asm.gradient(&Area, &w));
        g.iter().zip(&load_free).map(|(g, s)| g - s / beta).collect::<Vec<_>>()
    };
    let scaled = |g: &[f64]| g.iter().zip(&load_free).map(|(g, s)| (g / s).abs()).fold(0.0, f64::max);

    let mut h = asm.hessian_pattern();
    let mut value = functional(&x);
    let mut history = vec![value];
    let mut g = gradient(&x);
    let mut residual = scaled(&g);
    let mut iterations = 0;
    let mut last_step = 1.0;
    let mut previous = f64::INFINITY;
    // a residual that stops contracting within the round-off slack is the
    // floor of the discrete gradient, not a failure
    while residual > opts.tolerance && !(residual <= ROUNDOFF_SLACK * opts.tolerance && residual > 0.5 * previous) {
        if iterations == opts.max_iterations {
            return Err(Error::NewtonStagnation {
                iterations,
                residual,
                step: last_step,
            });
        }
        asm.hessian(&Area, &asm.expand(&x, 0.0), &mut h);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut dx = vec![0.0; x.len()];
        pcg(&h, &rhs, &mut dx, LINEAR_TOLERANCE, MAX_CG_ITERATIONS)?;
        let slope: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
        // 𝒢 is convex, so the Newton direction descends; the slack absorbs
        // round-off once the decrease is below the resolution of 𝒢
        let slack = 1e-14 * value.abs();
        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let v = functional(&trial);
            if v <= value + ARMIJO * alpha * slope + slack {
                break Some((trial, v));
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                break None;
            }
        };
        let Some((trial, v)) = accepted else {
            return Err(Error::NewtonStagnation {
                iterations,
                residual,
                step: alpha,
            });
        };
        x = trial;
        value = v;
        history.push(v);
        g = gradient(&x);
        previous = residual;
        residual = scaled(&g);
        last_step = alpha;
        iterations += 1;
    }
    let mut w = asm.expand(&x, 0.0);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    w.iter_mut().for_each(|v| *v -= min);
    let contact = contact_flux(&grid, &w);
    Ok(CmcField {
        eps,
        grid,
        w,
        contact,
        newton_iterations: iterations,
        residual,
        energy_history: history,
    })
}

/// `−∂_η w/√(1+|∇w|²)` on the line `ρ = 1`, where `w` vanishes so that
/// `|∇w| = |∂_η w|`; one-sided second-order difference in ρ.
fn contact_flux(grid: &MappedGrid, w: &[f64]) -> Vec<f64> {
    let nr = grid.n_rho();
    let h = grid.h_rho();
    (0..=grid.n_t())
        .map(|j| {
            let at = |i: usize| w[grid.idx(i, j)];
            let w_rho = (3.0 * at(nr) - 4.0 * at(nr - 1) + at(nr - 2)) / (2.0 * h);
            let s = grid.dphi(j);
            let d_eta = w_rho * (1.0 + s * s).sqrt() / grid.phi(j);
            -d_eta / (1.0 + d_eta * d_eta).sqrt()
        })
        .collect()
}

/// Values of `field` at the reference points by cubic interpolation along
/// the grid lines.
fn restrict_to(field: &CmcField, reference: &[ReferencePoint]) -> Vec<f64> {
    let g = &field.grid;
    let nr = g.n_rho();
    let mut line = vec![0.0; nr + 1];
    let mut current = usize::MAX;
    reference
        .iter()
        .map(|p| {
            if p.j != current {
                current = p.j;
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = field.w[g.idx(i, p.j)];
                }
            }
            cubic_interpolate(&line, g.h_rho(), p.r / g.phi(p.j))
        })
        .collect()
}

fn remove_mean(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

fn max_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Boundedness surrogate: successive differences must not grow, up to a
/// noise floor relative to the size of the fields.
pub fn cauchy_decrease(differences: &[f64], scale: f64) -> bool {
    let floor = 1e-6 * (1.0 + scale);
    differences.iter().all(|d| d.is_finite())
        && differences.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor)
}

/// Observed order from the last two differences, clamped to `[0.5, 2]`;
/// 1 when the differences are at noise level.
fn observed_order(differences: &[f64], eps: &[f64], floor: f64) -> f64 {
    let k = differences.len();
    if k < 2 {
        return 1.0;
    }
    let (d0, d1) = (differences[k - 2], differences[k - 1]);
    if d0 <= floor || d1 <= floor {
        return 1.0;
    }
    let ratio = eps[k - 1] / eps[k];
    ((d0 / d1).ln() / ratio.ln()).clamp(0.5, 2.0)
}

/// Solves the ε problems in order, each started from the previous
/// solution, and extrapolates to `ε = 0` on the interior subgrid.
pub fn solve_cmc_limit(sol: &TorsionSolution, eps_list: &[f64], opts: &CmcOptions) -> Result<CmcSolution> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty ε list".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(format!("ε list must be strictly decreasing: {eps_list:?}")));
    }
    for &eps in eps_list {
        check_margin(sol, eps)?;
    }
    let d = sol.grid.profile().base().clone();
    let beta = sol.beta_mean;
    let mut fields: Vec<CmcField> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let grid = shrunk_grid(&d, eps, opts.n_rho, opts.n_t, d.half_period())?;
        // identical grid shapes, so nodal values transfer index by index
        let start = match fields.last() {
            Some(prev) => prev.w.clone(),
            None => perturbation(&grid, opts.perturbation),
        };
        fields.push(solve_on_grid(grid, eps, beta, opts, Some(&start))?);
    }

    let g0 = &fields[0].grid;
    let mut reference = Vec::new();
    for j in 0..=g0.n_t() {
        for i in 0..=g0.n_rho() {
            if g0.rho(i) <= INTERIOR_RHO + 1e-12 {
                reference.push(ReferencePoint {
                    r: g0.radius(i, j),
                    t: g0.t(j),
                    j,
                });
            }
        }
    }
    let restricted: Vec<Vec<f64>> = fields.iter().map(|f| remove_mean(restrict_to(f, &reference))).collect();
    let differences: Vec<f64> = restricted.windows(2).map(|w| max_difference(&w[0], &w[1])).collect();
    let scale = restricted.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let bounded = cauchy_decrease(&differences, scale);
    if !bounded {
        return Err(Error::UnboundedSuspected { differences });
    }
    let floor = 1e-6 * (1.0 + scale);
    let order = observed_order(&differences, eps_list, floor);
    let w_limit = match restricted.len() {
        1 => restricted[0].clone(),
        k => {
            let ratio = eps_list[k - 2] / eps_list[k - 1];
            let factor = 1.0 / (ratio.powf(order) - 1.0);
            restricted[k - 1]
                .iter()
                .zip(&restricted[k - 2])
                .map(|(a, b)| a + (a - b) * factor)
                .collect()
        }
    };
    let min = w_limit.iter().copied().fold(f64::INFINITY, f64::min);
    let w_limit = w_limit.into_iter().map(|v| v - min).collect();

    let finest = fields.last().expect("non-empty");
    let res = curvature_residual_field(&finest.grid, &finest.w, beta);
    let fg = &finest.grid;
    let mut curvature_residual: f64 = 0.0;
    for j in 0..=fg.n_t() {
        let limit = INTERIOR_RHO * g0.phi(j) + 1e-12;
        for i in 0..=fg.n_rho() {
            if fg.radius(i, j) <= limit {
                curvature_residual = curvature_residual.max(res[fg.idx(i, j)].abs());
            }
        }
    }

    Ok(CmcSolution {
        domain: d,
        beta,
        options: *opts,
        eps_sequence: eps_list.to_vec(),
        w_fields: fields,
        reference,
        restricted,
        differences,
        richardson_order: order,
        w_limit,
        curvature_residual,
        periodicity_residual: None,
        bounded,
    })
}

/// Solves the finest ε problem directly on two adjacent cells `[0, 2λ]`
/// from an asymmetric start and compares it with the reflected one-cell
/// solution, after matching constants at `(ρ, t) = (0, λ)`. Stores and
/// returns the maximal difference.
pub fn shift_periodicity_check(c: &mut CmcSolution) -> Result<f64> {
    let cell = c.finest();
    let g1 = &cell.grid;
    let (nr, nt) = (g1.n_rho(), g1.n_t());
    let lambda = g1.t_max();
    let grid = shrunk_grid(&c.domain, cell.eps, nr, 2 * nt, 2.0 * lambda)?;
    let amp = cell.w.iter().copied().fold(0.0, f64::max);
    let mut start = vec![0.0; grid.num_nodes()];
    for j in 0..=2 * nt {
        let tilt = 1.0 + 0.5 * (std::f64::consts::PI * grid.t(j) / (2.0 * lambda)).cos();
        for i in 0..=nr {
            let rho = grid.rho(i);
            start[grid.idx(i, j)] = amp * (1.0 - rho * rho) * tilt;
        }
    }
    let two = solve_on_grid(grid, cell.eps, c.beta, &c.options, Some(&start))?;
    let reflected = |i: usize, j: usize| {
        let jj = if j <= nt { j } else { 2 * nt - j };
        cell.w[g1.idx(i, jj)]
    };
    let g2 = &two.grid;
    let shift = two.w[g2.idx(0, nt)] - reflected(0, nt);
    let mut diff: f64 = 0.0;
    for j in 0..=2 * nt {
        for i in 0..=nr {
            diff = diff.max((two.w[g2.idx(i, j)] - shift - reflected(i, j)).abs());
        }
    }
    c.periodicity_residual = Some(diff);
    Ok(diff)
}

/// Row of the solution export.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolutionRow {
    pub rho: f64,
    pub t: f64,
    pub r: f64,
    pub w: f64,
}

pub fn field_rows(field: &CmcField) -> Vec<SolutionRow> {
    let g = &field.grid;
    let mut rows = Vec::with_capacity(g.num_nodes());
    for j in 0..=g.n_t() {
        for i in 0..=g.n_rho() {
            rows.push(SolutionRow {
                rho: g.rho(i),
                t: g.t(j),
                r: g.radius(i, j),
                w: field.w[g.idx(i, j)],
            });
        }
    }
    rows
}

/// Rows of the extrapolated limit on the reference points; `ρ` is relative
/// to the largest-ε domain.
pub fn limit_rows(c: &CmcSolution) -> Vec<SolutionRow> {
    let g0 = &c.w_fields[0].grid;
    c.reference
        .iter()
        .zip(&c.w_limit)
        .map(|(p, &w)| SolutionRow {
            rho: p.r / g0.phi(p.j),
            t: p.t,
            r: p.r,
            w,
        })
        .collect()
}
