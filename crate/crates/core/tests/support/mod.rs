//! Independent reference values for the demag checks, computed by
//! Gauss-Legendre quadrature of the cell-pair Coulomb integrals instead of
//! the closed-form Newell functions used by the library.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Nodes and weights on `[-1, 1]`, roots found by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn integrate(rule: &[(f64, f64)], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

const NODES: usize = 48;

/// `∫∫ dA dA' / |r - r'|` for two unit squares in the same plane and
/// position, reduced to `4 ∫∫_[0,1]² (1-u)(1-v) / √(u²+v²)` and taken in
/// polar form so the singularity cancels against the Jacobian.
pub fn coincident_faces() -> f64 {
    let rule = gauss_legendre(NODES);
    let radial = |theta: f64, r_max: f64| {
        let (s, c) = theta.sin_cos();
        integrate(&rule, 0.0, r_max, |r| (1.0 - r * c) * (1.0 - r * s))
    };
    let lower = integrate(&rule, 0.0, FRAC_PI_4, |t| radial(t, 1.0 / t.cos()));
    let upper = integrate(&rule, FRAC_PI_4, FRAC_PI_2, |t| radial(t, 1.0 / t.sin()));
    4.0 * (lower + upper)
}

/// The same integral for two aligned unit squares a distance `s > 0` apart
/// along their normal.
pub fn parallel_faces(s: f64) -> f64 {
    let rule = gauss_legendre(NODES);
    4.0 * integrate(&rule, 0.0, 1.0, |u| {
        integrate(&rule, 0.0, 1.0, |v| (1.0 - u) * (1.0 - v) / (s * s + u * u + v * v).sqrt())
    })
}

/// Diagonal demag factor of a unit cube on itself (1/3 by symmetry).
pub fn cube_self_factor() -> f64 {
    2.0 * (coincident_faces() - parallel_faces(1.0)) / (4.0 * PI)
}

/// Axial demag factor between unit cubes `d >= 2` cells apart along the
/// axis. Each cube is two charged faces; the four face pairs sit at
/// separations `d - 1`, `d`, `d`, `d + 1`.
pub fn cube_axial_factor(d: f64) -> f64 {
    (2.0 * parallel_faces(d) - parallel_faces(d - 1.0) - parallel_faces(d + 1.0)) / (4.0 * PI)
}
