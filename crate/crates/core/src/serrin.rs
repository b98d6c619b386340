//! Numerical construction of periodic Serrin profiles.
//!
//! The unknown profile `φ = R + s cos(πt/λ) + Σ_{k≥2} a_k cos(kπt/λ)` is
//! driven to a Serrin domain by Newton's method on `(a_2, …, a_K, λ)`. The
//! equations are the cosine projections, modes `1..K`, of the boundary
//! defect `g = −∂_ν u − β`. Mode 0 is absorbed by `β` itself, and `a_0 = R`
//! is pinned because the dilations `φ ↦ cφ(·/c)` would otherwise leave a
//! one-parameter family of solutions for every amplitude.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_profile, generate_grid, ProfileDomain};
use crate::torsion::{serrin_residual, solve_torsion, TorsionSolution};

/// Grid used for every torsion solve inside the shape solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_rho: usize,
    pub n_t: usize,
}

impl GridSpec {
    pub const fn new(n_rho: usize, n_t: usize) -> Self {
        Self { n_rho, n_t }
    }

    pub fn refined(self, factor: usize) -> Self {
        Self::new(self.n_rho * factor, self.n_t * factor)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(64, 64)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Highest cosine mode `K` of the profile.
    pub modes: usize,
    pub grid: GridSpec,
    /// Convergence threshold on `max |g|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative forward-difference step of the Jacobian.
    pub fd_step: f64,
    /// Threads used for the Jacobian columns; results do not depend on it.
    pub workers: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            modes: 8,
            grid: GridSpec::default(),
            tolerance: 1e-8,
            max_iterations: 25,
            fd_step: 1e-6,
            workers: 1,
        }
    }
}

/// A converged point of the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub s: f64,
    #[serde(flatten)]
    pub domain: ProfileDomain,
    pub beta: f64,
    pub residual_norm: f64,
    #[serde(default)]
    pub newton_iterations: usize,
    pub grid: GridSpec,
}

impl BranchPoint {
    pub fn lambda(&self) -> f64 {
        self.domain.half_period()
    }

    /// Base radius `a_0`.
    pub fn radius(&self) -> f64 {
        self.domain.coeffs()[0]
    }
}

/// `c_k = 2∫_0^1 g(τ) cos(kπτ) dτ` for `k = 0..=k_max`, trapezoid rule on
/// the uniform boundary nodes.
pub fn cosine_projections(g: &[f64], k_max: usize) -> Vec<f64> {
    let m = g.len() - 1;
    (0..=k_max)
        .map(|k| {
            let mut acc = 0.0;
            for (j, v) in g.iter().enumerate() {
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                acc += w * v * (std::f64::consts::PI * (k * j) as f64 / m as f64).cos();
            }
            2.0 * acc / m as f64
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Torsion solve and Serrin defect of one profile.
#[derive(Debug, Clone)]
pub struct ProfileEvaluation {
    pub solution: TorsionSolution,
    pub defect: Vec<f64>,
    /// Cosine projections of the defect, modes `1..=K`.
    pub projections: Vec<f64>,
    pub residual_norm: f64,
}

pub fn evaluate_profile(domain: &ProfileDomain, modes: usize, grid: GridSpec) -> Result<ProfileEvaluation> {
    let solution = solve_torsion(&generate_grid(domain, grid.n_rho, grid.n_t)?)?;
    let defect = serrin_residual(&solution);
    let projections = cosine_projections(&defect, modes)[1..].to_vec();
    let residual_norm = max_abs(&defect);
    Ok(ProfileEvaluation {
        solution,
        defect,
        projections,
        residual_norm,
    })
}

/// Unknown vector `(a_2, …, a_K, λ)` ↔ profile with pinned `a_0, a_1`.
#[derive(Debug, Clone, Copy)]
struct Unknowns {
    n: usize,
    radius: f64,
    s: f64,
    modes: usize,
}

impl Unknowns {
    fn pack(&self, d: &ProfileDomain) -> Vec<f64> {
        let mut x: Vec<f64> = (2..=self.modes).map(|k| d.coeffs().get(k).copied().unwrap_or(0.0)).collect();
        x.push(d.half_period());
        x
    }

    fn unpack(&self, x: &[f64]) -> Result<ProfileDomain> {
        let mut coeffs = vec![self.radius, self.s];
        coeffs.extend_from_slice(&x[..x.len() - 1]);
        build_profile(self.n, x[x.len() - 1], &coeffs)
    }

    /// Natural size of each unknown, for relative finite-difference steps.
    fn scale(&self, x: &[f64], k: usize) -> f64 {
        if k + 1 == x.len() {
            x[k].abs()
        } else {
            x[k].abs().max(self.radius)
        }
    }
}

fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, workers: usize, f: F) -> Vec<T> {
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = count.div_ceil(workers);
        for (w, slots) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(f(w * chunk + k));
                }
            });
        }
    });
    out.into_iter().map(|v| v.expect("worker filled every slot")).collect()
}

fn jacobian(
    unknowns: &Unknowns,
    x: &[f64],
    base: &[f64],
    opts: &NewtonOptions,
    grid: GridSpec,
) -> Result<DMatrix<f64>> {
    let dim = x.len();
    let columns = parallel_map(dim, opts.workers, |k| -> Result<Vec<f64>> {
        let h = opts.fd_step * unknowns.scale(x, k);
        let mut xp = x.to_vec();
        xp[k] += h;
        let eval = evaluate_profile(&unknowns.unpack(&xp)?, opts.modes, grid)?;
        Ok(eval.projections.iter().zip(base).map(|(a, b)| (a - b) / h).collect())
    });
    let mut j = DMatrix::zeros(dim, dim);
    for (k, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (i, v) in col.into_iter().enumerate() {
            j[(i, k)] = v;
        }
    }
    Ok(j)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton iteration shared by the full and the chord variants.
/// `fixed_jacobian` freezes the Jacobian (chord method).
fn newton_core(
    unknowns: Unknowns,
    mut x: Vec<f64>,
    opts: &NewtonOptions,
    fixed_jacobian: Option<&DMatrix<f64>>,
) -> Result<(ProfileDomain, ProfileEvaluation, usize)> {
    let mut domain = unknowns.unpack(&x)?;
    let mut eval = evaluate_profile(&domain, opts.modes, opts.grid)?;
    let mut last_step = f64::INFINITY;
    for iteration in 0..opts.max_iterations {
        if eval.residual_norm <= opts.tolerance {
            return Ok((domain, eval, iteration));
        }
        let j = match fixed_jacobian {
            Some(j) => j.clone(),
            None => jacobian(&unknowns, &x, &eval.projections, opts, opts.grid)?,
        };
        let rhs = DVector::from_iterator(x.len(), eval.projections.iter().map(|v| -v));
        let delta = j.lu().solve(&rhs).ok_or(Error::NewtonStagnation {
            iterations: iteration,
            residual: eval.residual_norm,
            step: 0.0,
        })?;
        let current = norm2(&eval.projections);
        let mut t = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
            let outcome = unknowns
                .unpack(&trial)
                .and_then(|d| evaluate_profile(&d, opts.modes, opts.grid).map(|e| (d, e)));
            match outcome {
                Ok((d, e)) if norm2(&e.projections) < current || e.residual_norm <= opts.tolerance => {
                    break Some((trial, d, e));
                }
                Ok(_) | Err(Error::NonPositiveProfile { .. }) | Err(Error::SingularGrid { .. }) => {}
                Err(other) => return Err(other),
            }
            t *= 0.5;
            if t < 1e-6 {
                break None;
            }
        };
        let step = t * delta.norm();
        match accepted {
            Some((trial, d, e)) => {
                x = trial;
                domain = d;
                eval = e;
                last_step = step;
            }
            None => {
                return Err(Error::NewtonStagnation {
                    iterations: iteration + 1,
                    residual: eval.residual_norm,
                    step,
                })
            }
        }
        if last_step < 1e-14 * (1.0 + norm2(&x)) && eval.residual_norm > opts.tolerance {
            return Err(Error::NewtonStagnation {
                iterations: iteration + 1,
                residual: eval.residual_norm,
                step: last_step,
            });
        }
    }
    if eval.residual_norm <= opts.tolerance {
        return Ok((domain, eval, opts.max_iterations));
    }
    Err(Error::NewtonStagnation {
        iterations: opts.max_iterations,
        residual: eval.residual_norm,
        step: last_step,
    })
}

/// Solves for a Serrin profile with `a_0 = init.a_0` and `a_1 = s`, starting
/// from the remaining coefficients and half period of `init`.
pub fn newton_solve_profile(init: &ProfileDomain, s: f64, opts: &NewtonOptions) -> Result<BranchPoint> {
    let radius = init.coeffs()[0];
    if !(s.abs() <= 0.3 * radius) {
        return Err(Error::InvalidArgument(format!("amplitude |s| = {} exceeds 0.3·a_0", s.abs())));
    }
    if opts.modes < 2 {
        return Err(Error::InvalidArgument("at least two cosine modes are needed".into()));
    }
    let unknowns = Unknowns {
        n: init.n(),
        radius,
        s,
        modes: opts.modes,
    };
    let x = unknowns.pack(init);
    let (domain, eval, iterations) = newton_core(unknowns, x, opts, None)?;
    Ok(BranchPoint {
        s,
        beta: eval.solution.beta_mean,
        residual_norm: eval.residual_norm,
        newton_iterations: iterations,
        grid: opts.grid,
        domain,
    })
}

/// Re-solves a converged point on a finer grid by the chord method: the
/// Jacobian comes from the point's own (coarse) grid, residuals from
/// `opts.grid`.
pub fn polish(point: &BranchPoint, opts: &NewtonOptions) -> Result<BranchPoint> {
    let unknowns = Unknowns {
        n: point.domain.n(),
        radius: point.radius(),
        s: point.s,
        modes: opts.modes,
    };
    let x = unknowns.pack(&point.domain);
    let eval = evaluate_profile(&point.domain, opts.modes, opts.grid)?;
    if eval.residual_norm <= opts.tolerance {
        return Ok(BranchPoint {
            beta: eval.solution.beta_mean,
            residual_norm: eval.residual_norm,
            newton_iterations: 0,
            grid: opts.grid,
            ..point.clone()
        });
    }
    let coarse = evaluate_profile(&point.domain, opts.modes, point.grid)?;
    let j = jacobian(&unknowns, &x, &coarse.projections, opts, point.grid)?;
    let (domain, eval, iterations) = newton_core(unknowns, x, opts, Some(&j))?;
    Ok(BranchPoint {
        s: point.s,
        beta: eval.solution.beta_mean,
        residual_norm: eval.residual_norm,
        newton_iterations: iterations,
        grid: opts.grid,
        domain,
    })
}

/// Serrin defect of a stored point on a grid refined by `factor`, without
/// any Newton correction.
pub fn reverify(point: &BranchPoint, factor: usize, modes: usize) -> Result<f64> {
    Ok(evaluate_profile(&point.domain, modes, point.grid.refined(factor))?.residual_norm)
}

/// Result of a continuation run: every converged point, and the first
/// failure (with its amplitude) if the run stopped early.
#[derive(Debug, Clone)]
pub struct BranchContinuation {
    pub points: Vec<BranchPoint>,
    pub failure: Option<(f64, Error)>,
}

/// Natural-parameter continuation `s_k = start.s + k·ds` up to `s_max`,
/// each solve predicted by the previous point.
pub fn continue_branch(start: &BranchPoint, s_max: f64, ds: f64, opts: &NewtonOptions) -> Result<BranchContinuation> {
    if ds == 0.0 || !ds.is_finite() || (s_max - start.s) * ds < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step {ds} does not move from s = {} toward {s_max}",
            start.s
        )));
    }
    let steps = ((s_max - start.s) / ds + 1e-9).floor() as usize;
    let mut points = vec![start.clone()];
    for k in 1..=steps {
        let s = start.s + k as f64 * ds;
        let previous = &points[points.len() - 1].domain;
        match newton_solve_profile(previous, s, opts) {
            Ok(p) => points.push(p),
            Err(e) => {
                return Ok(BranchContinuation {
                    points,
                    failure: Some((s, e)),
                })
            }
        }
    }
    Ok(BranchContinuation { points, failure: None })
}

/// The point `s = 0`: the straight cylinder, exact for every `λ`.
pub fn cylinder_point(n: usize, radius: f64, lambda: f64, opts: &NewtonOptions) -> Result<BranchPoint> {
    let domain = build_profile(n, lambda, &[radius])?;
    newton_solve_profile(&domain, 0.0, opts)
}

#[derive(Debug, Clone, Copy)]
pub struct BifurcationOptions {
    pub grid: GridSpec,
    /// Scan window and step, in units of the base radius.
    pub window: (f64, f64),
    pub scan_step: f64,
    /// Width of the final bracket.
    pub bracket: f64,
    /// Relative amplitude of the probing mode.
    pub probe: f64,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            window: (0.5, 8.0),
            scan_step: 0.25,
            bracket: 1e-6,
            probe: 1e-4,
        }
    }
}

/// Linear response of the first defect mode to the first profile mode of
/// the cylinder, `∂c_1/∂a_1` at half period `λ`.
///
/// The cylinder is Serrin for every `λ`, and the Jacobian of the defect
/// map is diagonal in the cosine modes there; the branch can only leave
/// the cylinder where this entry vanishes.
pub fn first_mode_response(n: usize, radius: f64, lambda: f64, opts: &BifurcationOptions) -> Result<f64> {
    let delta = opts.probe * radius;
    let d = build_profile(n, lambda, &[radius, delta])?;
    let eval = evaluate_profile(&d, 1, opts.grid)?;
    Ok(eval.projections[0] / delta)
}

/// Sign change of [`first_mode_response`] in `λ`, bracketed to
/// `opts.bracket` by bisection. Returns the bracket midpoint.
pub fn detect_bifurcation_period_with(n: usize, radius: f64, opts: &BifurcationOptions) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("base radius must be positive, got {radius}")));
    }
    let (lo, hi) = (opts.window.0 * radius, opts.window.1 * radius);
    let steps = ((opts.window.1 - opts.window.0) / opts.scan_step).round() as usize;
    let at = |k: usize| (opts.window.0 + k as f64 * opts.scan_step) * radius;
    let mut a = at(0);
    let mut fa = first_mode_response(n, radius, a, opts)?;
    for k in 1..=steps {
        let b = at(k);
        let fb = first_mode_response(n, radius, b, opts)?;
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            let (mut a, mut b) = (a, b);
            while b - a > opts.bracket {
                let m = 0.5 * (a + b);
                let fm = first_mode_response(n, radius, m, opts)?;
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        a = b;
        fa = fb;
    }
    Err(Error::NoBifurcationInRange { lo, hi })
}

pub fn detect_bifurcation_period(n: usize, base_radius: f64) -> Result<f64> {
    detect_bifurcation_period_with(n, base_radius, &BifurcationOptions::default())
}
