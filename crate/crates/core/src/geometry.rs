//! Periodic axially symmetric domains `{(z, t) ∈ ℝⁿ × ℝ : |z| < φ(t)}` and
//! boundary-fitted grids on their symmetry cell.
//!
//! The profile is an even cosine series
//!
//! ```text
//! φ(t) = a_0 + Σ_{k≥1} a_k cos(kπt/λ),
//! ```
//!
//! so it is even and `2λ`-periodic by construction and `φ'(0) = φ'(λ) = 0`.
//! All PDEs are solved on the cell `0 ≤ r ≤ φ(t), 0 ≤ t ≤ λ`, which the
//! mapping `(ρ, t) ↦ (ρ·φ(t), t)` turns into the rectangle `[0, 1] × [0, λ]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{simpson, unit_ball_volume, unit_sphere_area, DEFAULT_PANELS};

/// Number of sample points used by the positivity check.
const POSITIVITY_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainFile", into = "DomainFile")]
pub struct ProfileDomain {
    n: usize,
    half_period: f64,
    coeffs: Vec<f64>,
}

/// On-disk form of a domain: `{"n": .., "lambda": .., "coeffs": [..]}` with
/// an optional `"m"` that must equal 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DomainFile {
    n: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    m: usize,
    lambda: f64,
    coeffs: Vec<f64>,
}

fn one() -> usize {
    1
}

fn is_one(m: &usize) -> bool {
    *m == 1
}

impl TryFrom<DomainFile> for ProfileDomain {
    type Error = Error;

    fn try_from(file: DomainFile) -> Result<Self> {
        build_profile_with_dim(file.n, file.m, file.lambda, &file.coeffs)
    }
}

impl From<ProfileDomain> for DomainFile {
    fn from(d: ProfileDomain) -> Self {
        DomainFile {
            n: d.n,
            m: 1,
            lambda: d.half_period,
            coeffs: d.coeffs,
        }
    }
}

/// Validates and builds a profile domain with one periodic variable.
pub fn build_profile(n: usize, lambda: f64, coeffs: &[f64]) -> Result<ProfileDomain> {
    build_profile_with_dim(n, 1, lambda, coeffs)
}

pub fn build_profile_with_dim(n: usize, m: usize, lambda: f64, coeffs: &[f64]) -> Result<ProfileDomain> {
    if m != 1 {
        return Err(Error::UnsupportedDimension { m });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("radial dimension n must be at least 1".into()));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("half period must be positive, got {lambda}")));
    }
    if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("cosine coefficients must be finite and non-empty".into()));
    }
    let domain = ProfileDomain {
        n,
        half_period: lambda,
        coeffs: coeffs.to_vec(),
    };
    let tail: f64 = coeffs[1..].iter().map(|c| c.abs()).sum();
    if coeffs[0] > tail {
        return Ok(domain);
    }
    for k in 0..=POSITIVITY_SAMPLES {
        let t = lambda * k as f64 / POSITIVITY_SAMPLES as f64;
        let value = domain.phi(t);
        if value <= 0.0 {
            return Err(Error::NonPositiveProfile { t, value });
        }
    }
    Ok(domain)
}

impl ProfileDomain {
    /// Straight cylinder `|z| < radius`.
    pub fn cylinder(n: usize, radius: f64, lambda: f64) -> Result<Self> {
        build_profile(n, lambda, &[radius])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Reduces `t` to `[0, λ]`; returns the reduced value and the sign that
    /// odd quantities (slopes) pick up.
    fn reduce(&self, t: f64) -> (f64, f64) {
        let period = 2.0 * self.half_period;
        let mut s = t.rem_euclid(period);
        let mut sign = 1.0;
        if s > self.half_period {
            s = period - s;
            sign = -1.0;
        }
        (s, sign)
    }

    pub fn phi(&self, t: f64) -> f64 {
        let (s, _) = self.reduce(t);
        let w = std::f64::consts::PI / self.half_period;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * (k as f64 * w * s).cos())
            .sum()
    }

    pub fn phi_derivative(&self, t: f64) -> f64 {
        let (s, sign) = self.reduce(t);
        let w = std::f64::consts::PI / self.half_period;
        let d: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| -a * k as f64 * w * (k as f64 * w * s).sin())
            .sum();
        sign * d
    }

    pub fn phi_second_derivative(&self, t: f64) -> f64 {
        let (s, _) = self.reduce(t);
        let w = std::f64::consts::PI / self.half_period;
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| {
                let kw = k as f64 * w;
                -a * kw * kw * (kw * s).cos()
            })
            .sum()
    }

    /// Dilation by `c`: coefficients and half period both scale.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let coeffs: Vec<f64> = self.coeffs.iter().map(|a| a * c).collect();
        build_profile(self.n, self.half_period * c, &coeffs)
    }

    /// Same coefficients on a different half period.
    pub fn with_half_period(&self, lambda: f64) -> Result<Self> {
        build_profile(self.n, lambda, &self.coeffs)
    }

    /// Minimum and maximum of φ over a dense sample of `[0, λ]`.
    pub fn phi_range(&self) -> (f64, f64) {
        (0..=POSITIVITY_SAMPLES)
            .map(|k| self.phi(self.half_period * k as f64 / POSITIVITY_SAMPLES as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Free functions mirroring the methods, for callers that prefer them.
pub fn phi_eval(d: &ProfileDomain, t: f64) -> f64 {
    d.phi(t)
}

pub fn phi_derivative(d: &ProfileDomain, t: f64) -> f64 {
    d.phi_derivative(t)
}

/// `∫_a^b φ^p dt` and friends, with the panel count scaled by the number of
/// half periods in `[a, b]`.
fn profile_integral<F: Fn(f64) -> f64>(d: &ProfileDomain, a: f64, b: f64, f: F) -> f64 {
    let half_periods = ((b - a) / d.half_period).round().max(1.0) as usize;
    simpson(f, a, b, DEFAULT_PANELS * half_periods)
}

/// `|Ω ∩ S|` for the slab `ℝⁿ × (a, b)`.
pub fn volume_between(d: &ProfileDomain, a: f64, b: f64) -> f64 {
    let n = d.n as i32;
    unit_ball_volume(d.n) * profile_integral(d, a, b, |t| d.phi(t).powi(n))
}

/// Relative perimeter `P(Ω, S)` for the slab `ℝⁿ × (a, b)`: only the lateral
/// boundary `|z| = φ(t)` counts.
pub fn lateral_perimeter_between(d: &ProfileDomain, a: f64, b: f64) -> f64 {
    let n = d.n as i32;
    unit_sphere_area(d.n)
        * profile_integral(d, a, b, |t| {
            let s = d.phi_derivative(t);
            d.phi(t).powi(n - 1) * (1.0 + s * s).sqrt()
        })
}

/// Volume of `Ω` in a slab of `periods` half periods starting at `t = 0`.
pub fn volume_in_slab(d: &ProfileDomain, periods: usize) -> f64 {
    volume_between(d, 0.0, periods.max(1) as f64 * d.half_period)
}

/// Lateral perimeter of `Ω` in a slab of `periods` half periods.
pub fn lateral_perimeter_in_slab(d: &ProfileDomain, periods: usize) -> f64 {
    lateral_perimeter_between(d, 0.0, periods.max(1) as f64 * d.half_period)
}

/// Boundary curve of a grid in the `(r, t)` half plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// The cosine profile itself.
    Cosine(ProfileDomain),
    /// Inner parallel curve at distance `offset`: the boundary of
    /// `{dist(·, ∂Ω) > offset}`, still a graph `r = φ_ε(t)` for small offsets.
    Parallel { base: ProfileDomain, offset: f64 },
}

impl Profile {
    pub fn base(&self) -> &ProfileDomain {
        match self {
            Profile::Cosine(d) => d,
            Profile::Parallel { base, .. } => base,
        }
    }

    pub fn n(&self) -> usize {
        self.base().n
    }

    pub fn half_period(&self) -> f64 {
        self.base().half_period
    }

    /// Foot parameter τ of the parallel curve point above `t`:
    /// `τ + ε φ'(τ)/√(1+φ'(τ)²) = t`.
    fn parallel_foot(base: &ProfileDomain, offset: f64, t: f64) -> f64 {
        let mut tau = t;
        for _ in 0..50 {
            let s = base.phi_derivative(tau);
            let q = (1.0 + s * s).sqrt();
            let f = tau + offset * s / q - t;
            let df = 1.0 + offset * base.phi_second_derivative(tau) / (q * q * q);
            let step = f / df;
            tau -= step;
            if step.abs() <= 1e-15 * (1.0 + tau.abs()) {
                break;
            }
        }
        tau
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Profile::Cosine(d) => d.phi(t),
            Profile::Parallel { base, offset } => {
                let tau = Self::parallel_foot(base, *offset, t);
                let s = base.phi_derivative(tau);
                base.phi(tau) - offset / (1.0 + s * s).sqrt()
            }
        }
    }

    /// `dφ/dt`; a parallel curve has the same tangent direction as its
    /// base at the foot point.
    pub fn slope(&self, t: f64) -> f64 {
        match self {
            Profile::Cosine(d) => d.phi_derivative(t),
            Profile::Parallel { base, offset } => base.phi_derivative(Self::parallel_foot(base, *offset, t)),
        }
    }
}

/// Inverse metric `J⁻¹J⁻ᵀ` of the map `(ρ, t) ↦ (ρφ(t), t)` together with
/// its Jacobian determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub det: f64,
    pub g_rr: f64,
    pub g_rt: f64,
    pub g_tt: f64,
}

impl Metric {
    pub fn at(rho: f64, phi: f64, dphi: f64) -> Self {
        let tilt = rho * dphi / phi;
        Metric {
            det: phi,
            g_rr: 1.0 / (phi * phi) + tilt * tilt,
            g_rt: -tilt,
            g_tt: 1.0,
        }
    }

    /// `|∇u|²` from the mapped derivatives `(u_ρ, u_t)`.
    pub fn norm_sq(&self, a: f64, b: f64) -> f64 {
        self.g_rr * a * a + 2.0 * self.g_rt * a * b + self.g_tt * b * b
    }
}

/// Tensor-product grid, uniform in `ρ ∈ [0, 1]` and `t ∈ [0, t_max]`.
///
/// Nodes are numbered `j·(n_rho + 1) + i`; the line `i = n_rho` is the
/// physical boundary `r = φ(t)`.
#[derive(Debug, Clone)]
pub struct MappedGrid {
    profile: Profile,
    n_rho: usize,
    n_t: usize,
    t_max: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    phi_mid: Vec<f64>,
    dphi_mid: Vec<f64>,
}

impl MappedGrid {
    pub fn new(profile: Profile, n_rho: usize, n_t: usize, t_max: f64) -> Result<Self> {
        if n_rho < 2 || n_t < 2 || !(t_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2×2 cells and positive extent (got {n_rho}×{n_t}, t_max = {t_max})"
            )));
        }
        let h_t = t_max / n_t as f64;
        let sample = |t: f64| -> Result<(f64, f64)> {
            let v = profile.value(t);
            let s = profile.slope(t);
            if !(v > 0.0) || !v.is_finite() || !s.is_finite() {
                return Err(Error::SingularGrid { t });
            }
            Ok((v, s))
        };
        let mut phi = Vec::with_capacity(n_t + 1);
        let mut dphi = Vec::with_capacity(n_t + 1);
        for j in 0..=n_t {
            let (v, s) = sample(j as f64 * h_t)?;
            phi.push(v);
            dphi.push(s);
        }
        let mut phi_mid = Vec::with_capacity(n_t);
        let mut dphi_mid = Vec::with_capacity(n_t);
        for j in 0..n_t {
            let (v, s) = sample((j as f64 + 0.5) * h_t)?;
            phi_mid.push(v);
            dphi_mid.push(s);
        }
        Ok(Self {
            profile,
            n_rho,
            n_t,
            t_max,
            phi,
            dphi,
            phi_mid,
            dphi_mid,
        })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Radial dimension `n`.
    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn h_rho(&self) -> f64 {
        1.0 / self.n_rho as f64
    }

    pub fn h_t(&self) -> f64 {
        self.t_max / self.n_t as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        i as f64 / self.n_rho as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.h_t()
    }

    pub fn phi(&self, j: usize) -> f64 {
        self.phi[j]
    }

    pub fn dphi(&self, j: usize) -> f64 {
        self.dphi[j]
    }

    pub fn phi_mid(&self, j: usize) -> f64 {
        self.phi_mid[j]
    }

    pub fn dphi_mid(&self, j: usize) -> f64 {
        self.dphi_mid[j]
    }

    /// Physical radius `r = ρ_i φ(t_j)`.
    pub fn radius(&self, i: usize, j: usize) -> f64 {
        self.rho(i) * self.phi[j]
    }

    pub fn num_nodes(&self) -> usize {
        (self.n_rho + 1) * (self.n_t + 1)
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.n_rho + 1) + i
    }

    pub fn metric(&self, i: usize, j: usize) -> Metric {
        Metric::at(self.rho(i), self.phi[j], self.dphi[j])
    }

    /// Outward unit normal `(ν_r, ν_t)` of the boundary `r = φ(t)` at `t_j`.
    pub fn boundary_normal(&self, j: usize) -> [f64; 2] {
        let s = self.dphi[j];
        let q = (1.0 + s * s).sqrt();
        [1.0 / q, -s / q]
    }

    /// Boundary area element per unit `t`: `σ_{n−1} φ^{n−1} √(1+φ'²)`.
    pub fn boundary_area_density(&self, j: usize) -> f64 {
        let s = self.dphi[j];
        unit_sphere_area(self.n()) * self.phi[j].powi(self.n() as i32 - 1) * (1.0 + s * s).sqrt()
    }
}

/// Boundary-fitted grid on the symmetry cell `[0, 1] × [0, λ]`.
pub fn generate_grid(d: &ProfileDomain, n_rho: usize, n_t: usize) -> Result<MappedGrid> {
    if n_rho < 8 || n_t < 8 {
        return Err(Error::InvalidArgument(format!("grid must be at least 8×8, got {n_rho}×{n_t}")));
    }
    MappedGrid::new(Profile::Cosine(d.clone()), n_rho, n_t, d.half_period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn wavy(n: usize) -> ProfileDomain {
        build_profile(n, PI, &[1.0, 0.1]).unwrap()
    }

    #[test]
    fn constant_profile_is_a_strip() {
        let d = build_profile(1, PI, &[1.0]).unwrap();
        assert_eq!(d.phi(0.37), 1.0);
        assert_eq!(d.phi_derivative(0.37), 0.0);
    }

    #[test]
    fn cosine_profile_values() {
        let d = build_profile(2, PI, &[1.0, 0.1]).unwrap();
        assert!((d.phi(0.0) - 1.1).abs() < 1e-15);
        // d/dt (1 + 0.1 cos t) = −0.1 sin t
        assert!((d.phi_derivative(PI / 2.0) + 0.1).abs() < 1e-15);
        assert!((d.phi_second_derivative(0.0) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn negative_profile_is_rejected() {
        let err = build_profile(1, PI, &[0.05, 0.1]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveProfile { .. }));
    }

    #[test]
    fn profile_that_fails_the_coefficient_test_can_still_be_positive() {
        // a_0 = Σ|a_k| but the modes never align with the same sign.
        let d = build_profile(1, PI, &[1.0, 0.5, 0.5]).unwrap();
        assert!(d.phi_range().0 > 0.0);
    }

    #[test]
    fn other_periodic_dimensions_are_rejected() {
        assert_eq!(
            build_profile_with_dim(1, 2, PI, &[1.0]).unwrap_err(),
            Error::UnsupportedDimension { m: 2 }
        );
        assert!(build_profile(0, PI, &[1.0]).is_err());
        assert!(build_profile(1, -1.0, &[1.0]).is_err());
    }

    #[test]
    fn domain_file_round_trip_and_validation() {
        let d: ProfileDomain = serde_json::from_str(r#"{"n": 2, "lambda": 2.5, "coeffs": [1.0, 0.05]}"#).unwrap();
        assert_eq!((d.n(), d.half_period(), d.coeffs()), (2, 2.5, &[1.0, 0.05][..]));
        let back: ProfileDomain = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<ProfileDomain>(r#"{"n": 1, "lambda": 1.0, "coeffs": [0.05, 0.1]}"#).is_err());
        assert!(serde_json::from_str::<ProfileDomain>(r#"{"n": 1, "m": 2, "lambda": 1.0, "coeffs": [1.0]}"#).is_err());
    }

    #[test]
    fn volumes_of_constant_profiles() {
        let strip = build_profile(1, PI, &[1.0]).unwrap();
        assert!((volume_in_slab(&strip, 1) - 2.0 * PI).abs() < 1e-12);
        let cyl = build_profile(2, PI, &[1.0]).unwrap();
        assert!((volume_in_slab(&cyl, 1) - PI * PI).abs() < 1e-12);
        // the cosine mode integrates to zero over a half period
        assert!((volume_in_slab(&wavy(1), 1) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn perimeters_of_constant_profiles() {
        let strip = build_profile(1, PI, &[1.0]).unwrap();
        assert!((lateral_perimeter_in_slab(&strip, 1) - 2.0 * PI).abs() < 1e-12);
        let cyl = build_profile(2, PI, &[1.0]).unwrap();
        assert!((lateral_perimeter_in_slab(&cyl, 1) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn wavy_perimeter_matches_polyline_arclength() {
        // independent route: length of a fine inscribed polyline of the
        // two boundary curves z = ±φ(t)
        let d = wavy(1);
        let m = 200_000;
        let mut len = 0.0;
        let mut prev = (0.0, d.phi(0.0));
        for k in 1..=m {
            let t = PI * k as f64 / m as f64;
            let p = (t, 1.0 + 0.1 * t.cos());
            len += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt();
            prev = p;
        }
        let quad = lateral_perimeter_in_slab(&d, 1);
        assert!((quad - 2.0 * len).abs() < 1e-9, "{quad} vs {}", 2.0 * len);
    }

    #[test]
    fn quadrature_is_converged() {
        for d in [wavy(1), wavy(2), build_profile(3, 2.0, &[1.0, 0.2, -0.05]).unwrap()] {
            let lam = d.half_period();
            let n = d.n() as i32;
            let coarse = simpson(|t| d.phi(t).powi(n), 0.0, lam, 1 << 12);
            let fine = simpson(|t| d.phi(t).powi(n), 0.0, lam, 1 << 13);
            assert!((coarse - fine).abs() < 1e-12);
            let per = |t: f64| {
                let s = d.phi_derivative(t);
                d.phi(t).powi(n - 1) * (1.0 + s * s).sqrt()
            };
            let coarse = simpson(per, 0.0, lam, 1 << 12);
            let fine = simpson(per, 0.0, lam, 1 << 13);
            assert!((coarse - fine).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_profile_ratio_is_n_over_r() {
        for n in 1..=4 {
            let r = 1.7;
            let d = build_profile(n, 2.0, &[r]).unwrap();
            let ratio = lateral_perimeter_in_slab(&d, 1) / volume_in_slab(&d, 1);
            assert!((ratio - n as f64 / r).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_boundary_traces_profile() {
        let d = wavy(2);
        let g = generate_grid(&d, 16, 16).unwrap();
        for j in 0..=16 {
            assert_eq!(g.radius(16, j), d.phi(g.t(j)));
            assert_eq!(g.metric(3, j).det, d.phi(g.t(j)));
        }
        assert!(generate_grid(&d, 4, 16).is_err());
    }

    #[test]
    fn constant_grid_is_a_rectangle() {
        let d = build_profile(1, PI, &[1.0]).unwrap();
        let g = generate_grid(&d, 16, 16).unwrap();
        for j in 0..=16 {
            for i in 0..=16 {
                assert_eq!(g.radius(i, j), i as f64 / 16.0);
                let m = g.metric(i, j);
                assert_eq!((m.g_rr, m.g_rt, m.g_tt), (1.0, 0.0, 1.0));
            }
        }
    }

    #[test]
    fn metric_matches_symbolic_jacobian() {
        // J = [[φ, ρφ'], [0, 1]]; check J⁻¹J⁻ᵀ and det J directly
        let (rho, phi, dphi) = (0.6, 1.3, -0.4);
        let m = Metric::at(rho, phi, dphi);
        let jinv = [[1.0 / phi, -rho * dphi / phi], [0.0, 1.0]];
        let g = |a: usize, b: usize| jinv[a][0] * jinv[b][0] + jinv[a][1] * jinv[b][1];
        assert!((m.g_rr - g(0, 0)).abs() < 1e-15);
        assert!((m.g_rt - g(0, 1)).abs() < 1e-15);
        assert!((m.g_tt - g(1, 1)).abs() < 1e-15);
        assert_eq!(m.det, phi * 1.0 - rho * dphi * 0.0);
    }

    #[test]
    fn refinement_nests_nodes() {
        let d = wavy(1);
        let coarse = generate_grid(&d, 16, 16).unwrap();
        let fine = generate_grid(&d, 32, 32).unwrap();
        for j in 0..=16 {
            for i in 0..=16 {
                assert_eq!(coarse.rho(i), fine.rho(2 * i));
                assert_eq!(coarse.t(j), fine.t(2 * j));
                assert_eq!(coarse.radius(i, j), fine.radius(2 * i, 2 * j));
            }
        }
    }

    /// Brute-force distance from `(r, t)` to the curve `r = φ(τ)`.
    fn brute_distance(d: &ProfileDomain, r: f64, t: f64) -> f64 {
        let m = 20_000;
        let span = 1.0;
        (0..=m)
            .map(|k| {
                let tau = t - span + 2.0 * span * k as f64 / m as f64;
                (r - d.phi(tau)).hypot(t - tau)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn parallel_profile_is_at_constant_distance() {
        let d = build_profile(1, 2.6, &[1.0, 0.15, 0.03]).unwrap();
        let eps = 0.1;
        let p = Profile::Parallel { base: d.clone(), offset: eps };
        for k in 0..=10 {
            let t = 2.6 * k as f64 / 10.0;
            let dist = brute_distance(&d, p.value(t), t);
            assert!((dist - eps).abs() < 1e-6, "t = {t}: {dist}");
        }
        // walls stay flat
        assert!(p.slope(0.0).abs() < 1e-14);
        assert!((p.value(0.0) - (d.phi(0.0) - eps)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn profile_is_even_and_periodic(t in -20.0f64..20.0) {
            let d = build_profile(2, 2.3, &[1.0, 0.2, -0.05, 0.01]).unwrap();
            let v = d.phi(t);
            prop_assert!((v - d.phi(-t)).abs() < 1e-14);
            prop_assert!((v - d.phi(t + 4.6)).abs() < 1e-13);
            prop_assert!((v - d.phi(4.6 - t)).abs() < 1e-13);
            prop_assert!((d.phi_derivative(t) + d.phi_derivative(-t)).abs() < 1e-13);
        }
    }
}
