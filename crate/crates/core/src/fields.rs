//! Nodal fields on a [`MappedGrid`]: grid-line derivatives, physical
//! gradients and the weighted divergence of axially symmetric vector fields.

use crate::geometry::MappedGrid;

/// Second-order difference at position `k` of a uniformly sampled line:
/// centered in the interior, one-sided at both ends.
pub fn line_derivative(values: &[f64], k: usize, h: f64) -> f64 {
    let last = values.len() - 1;
    if k == 0 {
        (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    } else if k == last {
        (3.0 * values[last] - 4.0 * values[last - 1] + values[last - 2]) / (2.0 * h)
    } else {
        (values[k + 1] - values[k - 1]) / (2.0 * h)
    }
}

/// Derivatives of a nodal field along the two grid directions.
#[derive(Debug, Clone)]
pub struct MappedDerivatives {
    pub d_rho: Vec<f64>,
    pub d_t: Vec<f64>,
}

pub fn mapped_derivatives(grid: &MappedGrid, u: &[f64]) -> MappedDerivatives {
    let (nr, nt) = (grid.n_rho(), grid.n_t());
    let mut d_rho = vec![0.0; grid.num_nodes()];
    let mut d_t = vec![0.0; grid.num_nodes()];
    let mut line = vec![0.0; nr.max(nt) + 1];
    for j in 0..=nt {
        for i in 0..=nr {
            line[i] = u[grid.idx(i, j)];
        }
        for i in 0..=nr {
            d_rho[grid.idx(i, j)] = line_derivative(&line[..=nr], i, grid.h_rho());
        }
    }
    for i in 0..=nr {
        for j in 0..=nt {
            line[j] = u[grid.idx(i, j)];
        }
        for j in 0..=nt {
            d_t[grid.idx(i, j)] = line_derivative(&line[..=nt], j, grid.h_t());
        }
    }
    MappedDerivatives { d_rho, d_t }
}

/// Physical components `(∂_r, ∂_t)` of a vector field on the nodes.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub r: Vec<f64>,
    pub t: Vec<f64>,
}

impl VectorField {
    pub fn norm(&self, k: usize) -> f64 {
        self.r[k].hypot(self.t[k])
    }

    pub fn scaled(&self, c: f64) -> Self {
        VectorField {
            r: self.r.iter().map(|v| v * c).collect(),
            t: self.t.iter().map(|v| v * c).collect(),
        }
    }
}

/// Physical gradient: `u_r = u_ρ/φ`, `u_t = ∂_t u − (ρφ'/φ) u_ρ`.
pub fn physical_gradient(grid: &MappedGrid, u: &[f64]) -> VectorField {
    let d = mapped_derivatives(grid, u);
    let mut r = vec![0.0; grid.num_nodes()];
    let mut t = vec![0.0; grid.num_nodes()];
    for j in 0..=grid.n_t() {
        let (phi, dphi) = (grid.phi(j), grid.dphi(j));
        for i in 0..=grid.n_rho() {
            let k = grid.idx(i, j);
            r[k] = d.d_rho[k] / phi;
            t[k] = d.d_t[k] - grid.rho(i) * dphi / phi * d.d_rho[k];
        }
    }
    VectorField { r, t }
}

/// Divergence of an axially symmetric field in `ℝⁿ × ℝ`,
/// `r^{1−n} ∂_r(r^{n−1} ξ_r) + ∂_t ξ_t`, evaluated at every node.
///
/// In mapped coordinates this is `φ^{−n}[∂_ρP + (n−1)P/ρ + ∂_tT]` with
/// `P = φ^{n−1}(ξ_r − ρφ'ξ_t)` and `T = φ^n ξ_t`; on the axis the radial part
/// is `n ∂_ρP`.
pub fn weighted_divergence(grid: &MappedGrid, xi: &VectorField) -> Vec<f64> {
    let n = grid.n() as i32;
    let mut p = vec![0.0; grid.num_nodes()];
    let mut q = vec![0.0; grid.num_nodes()];
    for j in 0..=grid.n_t() {
        let (phi, dphi) = (grid.phi(j), grid.dphi(j));
        for i in 0..=grid.n_rho() {
            let k = grid.idx(i, j);
            p[k] = phi.powi(n - 1) * (xi.r[k] - grid.rho(i) * dphi * xi.t[k]);
            q[k] = phi.powi(n) * xi.t[k];
        }
    }
    let dp = mapped_derivatives(grid, &p);
    let dq = mapped_derivatives(grid, &q);
    let mut div = vec![0.0; grid.num_nodes()];
    for j in 0..=grid.n_t() {
        let phi_n = grid.phi(j).powi(n);
        for i in 0..=grid.n_rho() {
            let k = grid.idx(i, j);
            let radial = if i == 0 {
                n as f64 * dp.d_rho[k]
            } else {
                dp.d_rho[k] + (n - 1) as f64 * p[k] / grid.rho(i)
            };
            div[k] = (radial + dq.d_t[k]) / phi_n;
        }
    }
    div
}

/// Four-point Lagrange interpolation of uniformly spaced samples `values`
/// (spacing `h`, first sample at 0) at position `x`.
pub fn cubic_interpolate(values: &[f64], h: f64, x: f64) -> f64 {
    let m = values.len();
    debug_assert!(m >= 4);
    let s = x / h;
    let base = (s.floor() as isize - 1).clamp(0, m as isize - 4) as usize;
    let mut acc = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (s - (base + b) as f64) / (a as f64 - b as f64);
            }
        }
        acc += l * values[base + a];
    }
    acc
}
