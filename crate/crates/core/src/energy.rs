//! Conservative discretization of integral functionals
//! `∫ f(∇u) r^{n−1} dr dt` on a mapped grid.
//!
//! Each cell is split into four corner triangles. Corner `(α, β)` uses the
//! ρ-difference on row `j+β` and the t-difference on column `i+α`; the
//! metric and `φ^n` are frozen at the cell center, the radial weight
//! `ρ^{n−1}` is split between the two columns (see [`Assembler::new`]).
//! For quadratic integrands this reproduces the classical five-point
//! stencil on constant profiles and stays symmetric on curved ones.
//!
//! Nodes on `ρ = 1` are Dirichlet nodes; all other nodes are unknowns,
//! numbered `j·n_rho + i`.

use crate::geometry::{MappedGrid, Metric};
use crate::linalg::CsrMatrix;

/// Cell-frozen coefficients of the integrand.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellCoeffs {
    pub weight: f64,
    pub metric: Metric,
}

/// Integrand `f(a, b)` of the mapped derivatives `a = u_ρ`, `b = u_t`.
pub(crate) trait Integrand {
    fn value(&self, c: &CellCoeffs, a: f64, b: f64) -> f64;
    fn gradient(&self, c: &CellCoeffs, a: f64, b: f64) -> (f64, f64);
    /// `(f_aa, f_ab, f_bb)`.
    fn hessian(&self, c: &CellCoeffs, a: f64, b: f64) -> (f64, f64, f64);
}

/// Dirichlet energy density `½|∇u|²`.
pub(crate) struct Dirichlet;

impl Integrand for Dirichlet {
    fn value(&self, c: &CellCoeffs, a: f64, b: f64) -> f64 {
        0.5 * c.weight * c.metric.norm_sq(a, b)
    }

    fn gradient(&self, c: &CellCoeffs, a: f64, b: f64) -> (f64, f64) {
        let m = &c.metric;
        (c.weight * (m.g_rr * a + m.g_rt * b), c.weight * (m.g_rt * a + m.g_tt * b))
    }

    fn hessian(&self, c: &CellCoeffs, _a: f64, _b: f64) -> (f64, f64, f64) {
        let m = &c.metric;
        (c.weight * m.g_rr, c.weight * m.g_rt, c.weight * m.g_tt)
    }
}

/// Graph area density `√(1+|∇w|²)`.
pub(crate) struct Area;

impl Integrand for Area {
    fn value(&self, c: &CellCoeffs, a: f64, b: f64) -> f64 {
        c.weight * (1.0 + c.metric.norm_sq(a, b)).sqrt()
    }

    fn gradient(&self, c: &CellCoeffs, a: f64, b: f64) -> (f64, f64) {
        let m = &c.metric;
        let s = (1.0 + m.norm_sq(a, b)).sqrt();
        let k = c.weight / s;
        (k * (m.g_rr * a + m.g_rt * b), k * (m.g_rt * a + m.g_tt * b))
    }

    fn hessian(&self, c: &CellCoeffs, a: f64, b: f64) -> (f64, f64, f64) {
        let m = &c.metric;
        let s = (1.0 + m.norm_sq(a, b)).sqrt();
        let pa = m.g_rr * a + m.g_rt * b;
        let pb = m.g_rt * a + m.g_tt * b;
        let k = c.weight / s;
        let k3 = k / (s * s);
        (k * m.g_rr - k3 * pa * pa, k * m.g_rt - k3 * pa * pb, k * m.g_tt - k3 * pb * pb)
    }
}

/// Per-grid data shared by all functionals: cell coefficients, nodal
/// load weights and the sparsity pattern of the reduced Hessian.
#[derive(Debug, Clone)]
pub(crate) struct Assembler {
    n_rho: usize,
    n_t: usize,
    h_rho: f64,
    h_t: f64,
    cells: Vec<[CellCoeffs; 2]>,
    load: Vec<f64>,
}

/// One difference stencil entry: node index and the derivatives
/// `(∂a/∂u, ∂b/∂u)`.
type StencilEntry = (usize, f64, f64);

impl Assembler {
    pub fn new(grid: &MappedGrid) -> Self {
        let (nr, nt) = (grid.n_rho(), grid.n_t());
        let n = grid.n() as i32;
        let (h_rho, h_t) = (grid.h_rho(), grid.h_t());
        // corner α of cell i carries a radial weight w_α(i) with
        // (w_0 + w_1)/2 = ρ_c^{n−1}, so that radial fluxes are exact for
        // quadratics, and w_1(i−1) + w_0(i) = (2/h)∫ρ^{n−1} over the dual
        // cell of node i, so that the t-couplings of every node, the axis
        // included, add up to its volume; for n ≤ 2 these are the half-cell
        // means
        let dual = |i: usize| {
            let lo = (i as f64 - 0.5).max(0.0) * h_rho;
            let hi = (i as f64 + 0.5) * h_rho;
            (hi.powi(n) - lo.powi(n)) / n as f64 * 2.0 / h_rho
        };
        let mut radial = Vec::with_capacity(nr);
        let mut carry = 0.0;
        for i in 0..nr {
            let w0 = dual(i) - carry;
            let w1 = 2.0 * ((i as f64 + 0.5) * h_rho).powi(n - 1) - w0;
            radial.push((w0, w1));
            carry = w1;
        }
        let mut cells = Vec::with_capacity(nr * nt);
        for j in 0..nt {
            let (phi, dphi) = (grid.phi_mid(j), grid.dphi_mid(j));
            let phi_n = phi.powi(n);
            for (i, &(w0, w1)) in radial.iter().enumerate() {
                let metric = Metric::at((i as f64 + 0.5) * h_rho, phi, dphi);
                cells.push([
                    CellCoeffs {
                        weight: w0 * phi_n,
                        metric,
                    },
                    CellCoeffs {
                        weight: w1 * phi_n,
                        metric,
                    },
                ]);
            }
        }
        // ∫ρ^{n−1}dρ over the dual cell, exact, times φ(t_j)^n and the dual
        // width in t
        let mut load = vec![0.0; grid.num_nodes()];
        for j in 0..=nt {
            let width = if j == 0 || j == nt { 0.5 * h_t } else { h_t };
            let phi_n = grid.phi(j).powi(n);
            for i in 0..=nr {
                let lo = (i as f64 - 0.5).max(0.0) * h_rho;
                let hi = (i as f64 + 0.5).min(nr as f64) * h_rho;
                let radial = (hi.powi(n) - lo.powi(n)) / n as f64;
                load[grid.idx(i, j)] = radial * phi_n * width;
            }
        }
        Self {
            n_rho: nr,
            n_t: nt,
            h_rho,
            h_t,
            cells,
            load,
        }
    }

    pub fn num_nodes(&self) -> usize {
        (self.n_rho + 1) * (self.n_t + 1)
    }

    pub fn num_free(&self) -> usize {
        self.n_rho * (self.n_t + 1)
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.n_rho + 1) + i
    }

    /// Free index of node `(i, j)`, `None` on the Dirichlet line.
    pub fn free_index(&self, i: usize, j: usize) -> Option<usize> {
        (i < self.n_rho).then(|| j * self.n_rho + i)
    }

    /// Full node index of free unknown `f`.
    pub fn node_of_free(&self, f: usize) -> usize {
        self.node(f % self.n_rho, f / self.n_rho)
    }

    /// Nodal load `∫ ψ_k r^{n−1} dr dt` (dual-cell volume weights).
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Scatters free values into a full nodal vector with `boundary` on
    /// the Dirichlet line.
    pub fn expand(&self, free: &[f64], boundary: f64) -> Vec<f64> {
        let mut u = vec![boundary; self.num_nodes()];
        for (f, v) in free.iter().enumerate() {
            u[self.node_of_free(f)] = *v;
        }
        u
    }

    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        (0..self.num_free()).map(|f| u[self.node_of_free(f)]).collect()
    }

    /// Calls `visit(cell, a, b, stencil)` for each corner of every cell.
    fn for_each_corner<F>(&self, u: &[f64], mut visit: F)
    where
        F: FnMut(&CellCoeffs, f64, f64, &[StencilEntry; 4]),
    {
        let (ir, it) = (1.0 / self.h_rho, 1.0 / self.h_t);
        for j in 0..self.n_t {
            for i in 0..self.n_rho {
                let cells = &self.cells[j * self.n_rho + i];
                for beta in 0..2 {
                    for (alpha, cell) in cells.iter().enumerate() {
                        let a_hi = self.node(i + 1, j + beta);
                        let a_lo = self.node(i, j + beta);
                        let b_hi = self.node(i + alpha, j + 1);
                        let b_lo = self.node(i + alpha, j);
                        let a = (u[a_hi] - u[a_lo]) * ir;
                        let b = (u[b_hi] - u[b_lo]) * it;
                        let stencil = [(a_hi, ir, 0.0), (a_lo, -ir, 0.0), (b_hi, 0.0, it), (b_lo, 0.0, -it)];
                        visit(cell, a, b, &stencil);
                    }
                }
            }
        }
    }

    fn corner_weight(&self) -> f64 {
        0.25 * self.h_rho * self.h_t
    }

    pub fn energy<I: Integrand>(&self, f: &I, u: &[f64]) -> f64 {
        let mut e = 0.0;
        self.for_each_corner(u, |c, a, b, _| e += f.value(c, a, b));
        e * self.corner_weight()
    }

    /// Gradient with respect to every node, Dirichlet nodes included.
    pub fn gradient<I: Integrand>(&self, f: &I, u: &[f64]) -> Vec<f64> {
        let w = self.corner_weight();
        let mut g = vec![0.0; self.num_nodes()];
        self.for_each_corner(u, |c, a, b, st| {
            let (fa, fb) = f.gradient(c, a, b);
            for &(k, da, db) in st {
                g[k] += w * (fa * da + fb * db);
            }
        });
        g
    }

    /// Nine-point pattern on the free nodes.
    pub fn hessian_pattern(&self) -> CsrMatrix {
        let mut rows = Vec::with_capacity(self.num_free());
        for j in 0..=self.n_t {
            for i in 0..self.n_rho {
                let mut cols = Vec::with_capacity(9);
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii < 0 || jj < 0 || jj > self.n_t as i64 {
                            continue;
                        }
                        if let Some(f) = self.free_index(ii as usize, jj as usize) {
                            cols.push(f);
                        }
                    }
                }
                rows.push(cols);
            }
        }
        CsrMatrix::from_pattern(rows)
    }

    /// Hessian restricted to the free nodes, written into `h` (which must
    /// carry [`Self::hessian_pattern`]).
    pub fn hessian<I: Integrand>(&self, f: &I, u: &[f64], h: &mut CsrMatrix) {
        h.clear();
        let w = self.corner_weight();
        let free = |k: usize| {
            let i = k % (self.n_rho + 1);
            (i < self.n_rho).then(|| (k / (self.n_rho + 1)) * self.n_rho + i)
        };
        self.for_each_corner(u, |c, a, b, st| {
            let (faa, fab, fbb) = f.hessian(c, a, b);
            for &(p, dap, dbp) in st {
                let Some(fp) = free(p) else { continue };
                for &(q, daq, dbq) in st {
                    let Some(fq) = free(q) else { continue };
                    let v = faa * dap * daq + fab * (dap * dbq + dbp * daq) + fbb * dbp * dbq;
                    if v != 0.0 {
                        h.add(fp, fq, w * v);
                    }
                }
            }
        });
    }
}
