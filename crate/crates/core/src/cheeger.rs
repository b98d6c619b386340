//! Relative Cheeger quotient, calibration certificate and minimality
//! checks for `Ω ∩ S` with `S = ℝⁿ × (a, b)` a slab whose walls do not
//! count as perimeter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{weighted_divergence, VectorField};
use crate::geometry::{lateral_perimeter_between, volume_between, MappedGrid, ProfileDomain};
use crate::quadrature::{simpson, unit_ball_volume, unit_sphere_area};
use crate::torsion::{serrin_residual, TorsionSolution};

/// Largest Serrin defect accepted by [`verify_calibration`].
pub const SERRIN_PRECONDITION: f64 = 1e-6;

/// Slab `ℝⁿ × (a, b)` with endpoints in `λℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub a: f64,
    pub b: f64,
}

impl Slab {
    pub fn new(d: &ProfileDomain, a: f64, b: f64) -> Result<Self> {
        let lambda = d.half_period();
        let on_lattice = |x: f64| {
            let k = (x / lambda).round();
            (x - k * lambda).abs() <= 1e-9 * lambda.max(x.abs())
        };
        if !(a < b) || !on_lattice(a) || !on_lattice(b) {
            return Err(Error::BadSlab { a, b, lambda });
        }
        Ok(Self { a, b })
    }

    /// `(0, periods·λ)`.
    pub fn half_periods(d: &ProfileDomain, periods: usize) -> Result<Self> {
        Self::new(d, 0.0, periods as f64 * d.half_period())
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

/// `P(Ω, S) / |Ω ∩ S|`.
pub fn cheeger_quotient(d: &ProfileDomain, slab: &Slab) -> Result<f64> {
    let checked = Slab::new(d, slab.a, slab.b)?;
    Ok(lateral_perimeter_between(d, checked.a, checked.b) / volume_between(d, checked.a, checked.b))
}

/// Candidate calibration `ξ` on the nodes of a torsion grid.
#[derive(Debug, Clone)]
pub struct CalibrationField {
    pub grid: MappedGrid,
    pub xi: VectorField,
}

impl CalibrationField {
    /// `ξ = ∇u / β`.
    pub fn from_torsion(sol: &TorsionSolution, beta: f64) -> Self {
        Self {
            grid: sol.grid.clone(),
            xi: sol.grad_u.scaled(1.0 / beta),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            xi: self.xi.scaled(c),
        }
    }
}

/// Defects of the calibration conditions `|ξ| ≤ 1`, `−div ξ = λ_E`,
/// `ξ·ν = −1` on the lateral boundary and `ξ·e_t = 0` on the walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationResiduals {
    pub sup: f64,
    pub div: f64,
    pub boundary: f64,
    pub wall: f64,
}

pub fn calibration_residuals(field: &CalibrationField, lambda_e: f64) -> CalibrationResiduals {
    let g = &field.grid;
    let xi = &field.xi;
    let (nr, nt) = (g.n_rho(), g.n_t());
    let sup = (0..g.num_nodes()).map(|k| xi.norm(k)).fold(0.0, f64::max);
    let div = weighted_divergence(g, xi);
    let mut div_res: f64 = 0.0;
    for j in 0..=nt {
        for i in 0..nr {
            div_res = div_res.max((div[g.idx(i, j)] + lambda_e).abs());
        }
    }
    let boundary = (0..=nt)
        .map(|j| {
            let [nu_r, nu_t] = g.boundary_normal(j);
            let k = g.idx(nr, j);
            (xi.r[k] * nu_r + xi.t[k] * nu_t + 1.0).abs()
        })
        .fold(0.0, f64::max);
    let wall = (0..=nr)
        .map(|i| xi.t[g.idx(i, 0)].abs().max(xi.t[g.idx(i, nt)].abs()))
        .fold(0.0, f64::max);
    CalibrationResiduals {
        sup,
        div: div_res,
        boundary,
        wall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheegerCalibrationReport {
    pub slab: Slab,
    pub volume: f64,
    pub perimeter: f64,
    pub quotient: f64,
    pub beta: f64,
    pub identity_gap: f64,
    pub serrin_residual: f64,
    pub calib_sup: f64,
    pub calib_div_residual: f64,
    pub calib_boundary_gap: f64,
    pub calib_wall_gap: f64,
    pub tv_min_value: Option<f64>,
    pub subset_oracle_min: Option<f64>,
}

impl CheegerCalibrationReport {
    fn with_residuals(mut self, r: CalibrationResiduals) -> Self {
        self.calib_sup = r.sup;
        self.calib_div_residual = r.div;
        self.calib_boundary_gap = r.boundary;
        self.calib_wall_gap = r.wall;
        self
    }
}

/// Certifies `h(Ω, S) = 1/β` and the calibration `ξ = ∇u/β` on a solved
/// torsion problem. The geometric quantities are exact quadratures of the
/// profile; the calibration defects are evaluated on the torsion grid,
/// which covers one symmetry cell (the slab is a union of reflected cells).
pub fn verify_calibration(sol: &TorsionSolution, slab: &Slab) -> Result<CheegerCalibrationReport> {
    let d = sol.grid.profile().base();
    let slab = Slab::new(d, slab.a, slab.b)?;
    let defect = serrin_residual(sol).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if defect > SERRIN_PRECONDITION {
        return Err(Error::NotSerrin {
            residual: defect,
            tolerance: SERRIN_PRECONDITION,
        });
    }
    let beta = sol.beta_mean;
    let volume = volume_between(d, slab.a, slab.b);
    let perimeter = lateral_perimeter_between(d, slab.a, slab.b);
    let quotient = perimeter / volume;
    let field = CalibrationField::from_torsion(sol, beta);
    let report = CheegerCalibrationReport {
        slab,
        volume,
        perimeter,
        quotient,
        beta,
        identity_gap: (quotient - 1.0 / beta).abs(),
        serrin_residual: defect,
        calib_sup: 0.0,
        calib_div_residual: 0.0,
        calib_boundary_gap: 0.0,
        calib_wall_gap: 0.0,
        tv_min_value: None,
        subset_oracle_min: None,
    };
    Ok(report.with_residuals(calibration_residuals(&field, 1.0 / beta)))
}

/// Acceptance thresholds of the calibration certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTolerances {
    pub sup: f64,
    pub div: f64,
    pub boundary: f64,
    pub wall: f64,
}

impl Default for CalibrationTolerances {
    fn default() -> Self {
        Self {
            sup: 1e-3,
            div: 5e-4,
            boundary: 5e-4,
            wall: 5e-4,
        }
    }
}

impl CalibrationTolerances {
    pub fn uniform(tol: f64) -> Self {
        Self {
            sup: 2.0 * tol,
            div: tol,
            boundary: tol,
            wall: tol,
        }
    }
}

pub fn residuals_pass(r: &CalibrationResiduals, tol: &CalibrationTolerances) -> bool {
    r.sup <= 1.0 + tol.sup && r.div <= tol.div && r.boundary <= tol.boundary && r.wall <= tol.wall
}

/// The 1-Laplacian identity `−div(∇1_Ω/|∇1_Ω|) = (1/β)1_Ω` holds in the
/// calibrated sense when `ξ` is sub-unit, has constant divergence `−1/β`
/// and meets the boundary as the inner normal.
pub fn one_laplacian_check(report: &CheegerCalibrationReport, tol: &CalibrationTolerances) -> bool {
    let r = CalibrationResiduals {
        sup: report.calib_sup,
        div: report.calib_div_residual,
        boundary: report.calib_boundary_gap,
        wall: report.calib_wall_gap,
    };
    residuals_pass(&r, tol)
}

#[derive(Debug, Clone, Copy)]
pub struct TvOptions {
    /// Cells in `r` and in `t`.
    pub n_r: usize,
    pub n_t: usize,
    /// Bound on the primal-dual gap, relative to the perimeter scale.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Primal steps are multiplied and dual steps divided by this factor;
    /// 30 is the fastest setting found on cylinders and branch profiles.
    pub balance: f64,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            n_r: 128,
            n_t: 128,
            tolerance: 2e-5,
            max_iterations: 100_000,
            balance: 30.0,
        }
    }
}

/// Output of the relaxed minimization.
#[derive(Debug, Clone)]
pub struct TvResult {
    /// Objective of the best primal point: an iterate, or `v ≡ 0`.
    pub value: f64,
    /// Best dual bound: the discrete minimum lies in `[lower_bound, value]`.
    pub lower_bound: f64,
    /// Cell values `v`, row-major in `t`.
    pub minimizer: Vec<f64>,
    /// Upper bounds `θ`: the weighted fraction of each cell inside `Ω`;
    /// `v = θ` is the discrete `1_Ω`.
    pub indicator: Vec<f64>,
    pub n_r: usize,
    pub n_t: usize,
    pub r_max: f64,
    pub iterations: usize,
    pub gap: f64,
}

impl TvResult {
    /// `Σ vol·|v − θ| / Σ vol·θ`, the distance of the minimizer from `1_Ω`
    /// as a volume fraction.
    pub fn l1_distance_to_indicator(&self, n: usize) -> f64 {
        let h_r = self.r_max / self.n_r as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..self.n_t {
            for i in 0..self.n_r {
                let w = radial_moment(i as f64 * h_r, (i + 1) as f64 * h_r, n);
                let c = j * self.n_r + i;
                num += w * (self.minimizer[c] - self.indicator[c]).abs();
                den += w * self.indicator[c];
            }
        }
        num / den
    }

    /// Cell center `(r, t − a)` of cell `c`.
    pub fn cell_center(&self, c: usize, width: f64) -> (f64, f64) {
        let (i, j) = (c % self.n_r, c / self.n_r);
        (
            (i as f64 + 0.5) * self.r_max / self.n_r as f64,
            (j as f64 + 0.5) * width / self.n_t as f64,
        )
    }
}

/// `∫_lo^hi r^{n−1} dr`.
fn radial_moment(lo: f64, hi: f64, n: usize) -> f64 {
    (hi.powi(n as i32) - lo.powi(n as i32)) / n as f64
}

/// Minimizes `TV_S(v) − (1/β)∫v` over `0 ≤ v ≤ 1_Ω` by the diagonally
/// preconditioned Chambolle–Pock iteration, started from `v = 1_Ω`.
///
/// Cells are Cartesian in `(r, t)` with the rotational weight
/// `σ_{n−1} r^{n−1}`; no jump is counted across the slab walls.
pub fn tv_relaxed_minimize(d: &ProfileDomain, slab: &Slab, beta: f64, opts: &TvOptions) -> Result<TvResult> {
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("β must be positive, got {beta}")));
    }
    let slab = Slab::new(d, slab.a, slab.b)?;
    let (nr, nt) = (opts.n_r, opts.n_t);
    if nr < 8 || nt < 2 {
        return Err(Error::InvalidArgument(format!("TV grid {nr}×{nt} is too coarse")));
    }
    let n = d.n();
    let sigma_n = unit_sphere_area(n);
    // two empty cells beyond the widest point of the profile
    let r_max = d.phi_range().1 * nr as f64 / (nr - 2) as f64;
    let h_r = r_max / nr as f64;
    let h_t = slab.width() / nt as f64;

    let moment: Vec<f64> = (0..nr).map(|i| radial_moment(i as f64 * h_r, (i + 1) as f64 * h_r, n)).collect();
    let a_r: Vec<f64> = (0..nr)
        .map(|i| sigma_n * ((i + 1) as f64 * h_r).powi(n as i32 - 1) * h_t)
        .collect();
    let a_t: Vec<f64> = moment.iter().map(|m| sigma_n * m).collect();

    // weighted inside fraction, four-point Gauss in t
    let gauss = [
        (0.5 - 0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
        (0.5 - 0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
        (0.5 + 0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
        (0.5 + 0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
    ];
    let mut theta = vec![0.0; nr * nt];
    let mut load = vec![0.0; nr * nt];
    for j in 0..nt {
        let radii: Vec<(f64, f64)> = gauss
            .iter()
            .map(|(x, w)| (d.phi(slab.a + (j as f64 + x) * h_t), *w))
            .collect();
        for i in 0..nr {
            let (lo, hi) = (i as f64 * h_r, (i + 1) as f64 * h_r);
            let frac: f64 = radii
                .iter()
                .map(|(phi, w)| w * radial_moment(lo, phi.clamp(lo, hi), n) / moment[i])
                .sum();
            theta[j * nr + i] = frac;
            load[j * nr + i] = sigma_n * moment[i] * h_t / beta;
        }
    }

    let cells = nr * nt;
    let apply_k = |v: &[f64], out: &mut [(f64, f64)]| {
        for j in 0..nt {
            for i in 0..nr {
                let c = j * nr + i;
                let right = if i + 1 < nr { v[c + 1] } else { 0.0 };
                let gr = a_r[i] * (right - v[c]);
                let gt = if j + 1 < nt { a_t[i] * (v[c + nr] - v[c]) } else { 0.0 };
                out[c] = (gr, gt);
            }
        }
    };
    let apply_kt = |y: &[(f64, f64)], out: &mut [f64]| {
        for j in 0..nt {
            for i in 0..nr {
                let c = j * nr + i;
                let mut acc = -a_r[i] * y[c].0;
                if i > 0 {
                    acc += a_r[i - 1] * y[c - 1].0;
                }
                if j + 1 < nt {
                    acc -= a_t[i] * y[c].1;
                }
                if j > 0 {
                    acc += a_t[i] * y[c - nr].1;
                }
                out[c] = acc;
            }
        }
    };
    let mut tau = vec![0.0; cells];
    let mut sig = vec![0.0; cells];
    for j in 0..nt {
        for i in 0..nr {
            let c = j * nr + i;
            let mut col = a_r[i];
            if i > 0 {
                col += a_r[i - 1];
            }
            if j + 1 < nt {
                col += a_t[i];
            }
            if j > 0 {
                col += a_t[i];
            }
            tau[c] = opts.balance / col;
            let row_r = if i + 1 < nr { 2.0 * a_r[i] } else { a_r[i] };
            let row_t = if j + 1 < nt { 2.0 * a_t[i] } else { 0.0 };
            sig[c] = 1.0 / (opts.balance * row_r.max(row_t));
        }
    }

    let objective = |kv: &[(f64, f64)], v: &[f64]| -> f64 {
        let tv: f64 = kv.iter().map(|(a, b)| (a * a + b * b).sqrt()).sum();
        tv - load.iter().zip(v).map(|(b, x)| b * x).sum::<f64>()
    };

    let mut v = theta.clone();
    let mut v_bar = v.clone();
    let mut y = vec![(0.0, 0.0); cells];
    let mut kv = vec![(0.0, 0.0); cells];
    let mut kty = vec![0.0; cells];
    apply_k(&theta, &mut kv);
    let scale = kv.iter().map(|(a, b)| a.hypot(*b)).sum::<f64>().max(1e-12);
    let tolerance = opts.tolerance * scale;
    // best primal point and best dual bound seen so far; v ≡ 0 is feasible
    // with objective exactly 0 and replaces an iterate that is worse by
    // more than round-off
    let roundoff = 1e-9 * scale;
    let mut best_value = objective(&kv, &v);
    let mut best = v.clone();
    let consider_zero = |value: &mut f64, point: &mut Vec<f64>| {
        if *value > roundoff {
            *value = 0.0;
            point.iter_mut().for_each(|x| *x = 0.0);
        }
    };
    consider_zero(&mut best_value, &mut best);
    let mut lower_bound = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations && best_value - lower_bound > tolerance {
        apply_k(&v_bar, &mut kv);
        for c in 0..cells {
            let (mut p, mut q) = (y[c].0 + sig[c] * kv[c].0, y[c].1 + sig[c] * kv[c].1);
            let norm = (p * p + q * q).sqrt();
            if norm > 1.0 {
                p /= norm;
                q /= norm;
            }
            y[c] = (p, q);
        }
        apply_kt(&y, &mut kty);
        for c in 0..cells {
            let old = v[c];
            let new = (old - tau[c] * (kty[c] - load[c])).clamp(0.0, theta[c]);
            v[c] = new;
            v_bar[c] = 2.0 * new - old;
        }
        iterations += 1;
        if iterations % 25 == 0 {
            apply_k(&v, &mut kv);
            let primal = objective(&kv, &v);
            if primal < best_value {
                best_value = primal;
                best.copy_from_slice(&v);
                consider_zero(&mut best_value, &mut best);
            }
            let dual: f64 = (0..cells).map(|c| theta[c] * (kty[c] - load[c]).min(0.0)).sum();
            lower_bound = lower_bound.max(dual);
        }
    }
    let gap = best_value - lower_bound;
    if gap > tolerance {
        return Err(Error::NonConvergence {
            gap,
            tolerance,
            iterations,
        });
    }
    Ok(TvResult {
        value: best_value,
        lower_bound,
        minimizer: best,
        indicator: theta,
        n_r: nr,
        n_t: nt,
        r_max,
        iterations,
        gap,
    })
}

/// Radial levels per column of the enumerated family.
pub const ORACLE_LEVELS: usize = 4;

/// `5^10 ≈ 10⁷` members at most.
const MAX_ORACLE_COLUMNS: usize = 10;

const ORACLE_PANELS: usize = 256;

/// Radially monotone cell unions `A = {ρ < k_c/L in column c}` of a coarse
/// mapped grid on the slab, with exact quotients: lateral surfaces
/// `r = (k/L)φ(t)`, plus the annular cuts between neighbouring columns.
/// The slab walls are free. Every sub-rectangle `{ρ < k/L} × (t_p, t_q)`
/// belongs to the family.
#[derive(Debug, Clone)]
pub struct SubsetFamily {
    levels: usize,
    volume: Vec<Vec<f64>>,
    lateral: Vec<Vec<f64>>,
    cut: Vec<Vec<Vec<f64>>>,
}

impl SubsetFamily {
    pub fn new(d: &ProfileDomain, slab: &Slab, levels: usize, columns: usize) -> Result<Self> {
        let slab = Slab::new(d, slab.a, slab.b)?;
        if levels == 0 || columns == 0 {
            return Err(Error::InvalidArgument("subset family needs at least one cell".into()));
        }
        let n = d.n() as i32;
        let (omega, sigma) = (unit_ball_volume(d.n()), unit_sphere_area(d.n()));
        let width = slab.width() / columns as f64;
        let edge = |c: usize| slab.a + c as f64 * width;
        let mut volume = vec![vec![0.0; levels + 1]; columns];
        let mut lateral = vec![vec![0.0; levels + 1]; columns];
        for c in 0..columns {
            let base = simpson(|t| d.phi(t).powi(n), edge(c), edge(c + 1), ORACLE_PANELS);
            for k in 1..=levels {
                let x = k as f64 / levels as f64;
                volume[c][k] = omega * x.powi(n) * base;
                let area = |t: f64| {
                    let s = x * d.phi_derivative(t);
                    d.phi(t).powi(n - 1) * (1.0 + s * s).sqrt()
                };
                lateral[c][k] = sigma * x.powi(n - 1) * simpson(area, edge(c), edge(c + 1), ORACLE_PANELS);
            }
        }
        let cut = (0..columns - 1)
            .map(|c| {
                let phi = d.phi(edge(c + 1));
                (0..=levels)
                    .map(|k1| {
                        (0..=levels)
                            .map(|k2| {
                                let r1 = k1 as f64 / levels as f64 * phi;
                                let r2 = k2 as f64 / levels as f64 * phi;
                                omega * (r1.powi(n) - r2.powi(n)).abs()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            levels,
            volume,
            lateral,
            cut,
        })
    }

    pub fn columns(&self) -> usize {
        self.volume.len()
    }

    /// `P(A, S)/|A|` for the levels `ks` (one per column); `None` for the
    /// empty set.
    pub fn quotient(&self, ks: &[usize]) -> Option<f64> {
        let columns = self.columns();
        assert_eq!(ks.len(), columns);
        let (mut vol, mut per) = (0.0, 0.0);
        for c in 0..columns {
            vol += self.volume[c][ks[c]];
            per += self.lateral[c][ks[c]];
            if c + 1 < columns {
                per += self.cut[c][ks[c]][ks[c + 1]];
            }
        }
        (vol > 0.0).then(|| per / vol)
    }

    /// Minimum over all `(L+1)^C − 1` non-empty members.
    pub fn minimum(&self) -> f64 {
        let columns = self.columns();
        let mut ks = vec![0usize; columns];
        let mut best = f64::INFINITY;
        loop {
            let mut c = 0;
            while c < columns && ks[c] == self.levels {
                ks[c] = 0;
                c += 1;
            }
            if c == columns {
                return best;
            }
            ks[c] += 1;
            if let Some(q) = self.quotient(&ks) {
                best = best.min(q);
            }
        }
    }
}

/// Minimum of [`SubsetFamily`] with `L = 4` levels and `max_cells / 4`
/// columns.
pub fn subset_oracle(d: &ProfileDomain, slab: &Slab, max_cells: usize) -> Result<f64> {
    let columns = max_cells / ORACLE_LEVELS;
    if columns == 0 || columns > MAX_ORACLE_COLUMNS {
        return Err(Error::InvalidArgument(format!(
            "max_cells must lie in [{}, {}], got {max_cells}",
            ORACLE_LEVELS,
            ORACLE_LEVELS * MAX_ORACLE_COLUMNS
        )));
    }
    Ok(SubsetFamily::new(d, slab, ORACLE_LEVELS, columns)?.minimum())
}
