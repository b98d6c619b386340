//! Composite Simpson quadrature and ball/sphere constants.

/// Panel count used for all profile integrals.
pub const DEFAULT_PANELS: usize = 1 << 12;

/// Composite Simpson rule on `[a, b]` with `panels` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(2) + panels % 2;
    let h = (b - a) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..panels {
        let v = f(a + k as f64 * h);
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Volume of the unit ball in ℝⁿ (`ω_0 = 1`).
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Area of the unit sphere `S^{n−1}` ⊂ ℝⁿ, i.e. `n·ω_n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}
