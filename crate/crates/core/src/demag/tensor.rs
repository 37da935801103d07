//! Cell-averaged magnetostatic interaction tensor between two uniformly
//! magnetized cubes, in cell units (edge = 1).
//!
//! Components are ordered `[xx, yy, zz, xy, xz, yz]`. The tensor carries the
//! demagnetizing sign, `Ω = -4π N`, so the field is `H = Ms Σ Ω m` and the
//! trace of the self term is `-4π`.

use std::f64::consts::PI;

pub const XX: usize = 0;
pub const YY: usize = 1;
pub const ZZ: usize = 2;
pub const XY: usize = 3;
pub const XZ: usize = 4;
pub const YZ: usize = 5;

pub type Tensor6 = [f64; 6];

/// Newell's f, even in every argument.
fn newell_f(x: f64, y: f64, z: f64) -> f64 {
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut acc = (2.0 * x2 - y2 - z2) * r / 6.0;
    if x2 + z2 > 0.0 {
        acc += 0.5 * y * (z2 - x2) * (y / (x2 + z2).sqrt()).asinh();
    }
    if x2 + y2 > 0.0 {
        acc += 0.5 * z * (y2 - x2) * (z / (x2 + y2).sqrt()).asinh();
    }
    if x > 0.0 {
        acc -= x * y * z * (y * z / (x * r)).atan();
    }
    acc
}

/// Newell's g, odd in x and y and even in z.
fn newell_g(x: f64, y: f64, z: f64) -> f64 {
    let sign = x.signum() * y.signum();
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    let mut acc = -x * y * r / 3.0;
    acc += x * y * z * (z / (x2 + y2).sqrt()).asinh();
    acc += y / 6.0 * (3.0 * z2 - y2) * (x / (y2 + z2).sqrt()).asinh();
    acc += x / 6.0 * (3.0 * z2 - x2) * (y / (x2 + z2).sqrt()).asinh();
    if z > 0.0 {
        acc -= z * z2 / 6.0 * (x * y / (z * r)).atan();
        acc -= 0.5 * z * y2 * (x * z / (y * r)).atan();
        acc -= 0.5 * z * x2 * (y * z / (x * r)).atan();
    }
    sign * acc
}

/// 27-point second difference in each axis: weights (-1, 2, -1).
fn stencil(func: impl Fn(f64, f64, f64) -> f64, x: f64, y: f64, z: f64) -> f64 {
    const W: [f64; 3] = [-1.0, 2.0, -1.0];
    let mut acc = 0.0;
    for (a, wa) in W.iter().enumerate() {
        for (b, wb) in W.iter().enumerate() {
            for (c, wc) in W.iter().enumerate() {
                acc += wa
                    * wb
                    * wc
                    * func(x + a as f64 - 1.0, y + b as f64 - 1.0, z + c as f64 - 1.0);
            }
        }
    }
    acc
}

/// Exact cell-averaged tensor at integer displacement `(dx, dy, dz)` cells.
pub fn newell(dx: i64, dy: i64, dz: i64) -> Tensor6 {
    // The stencil is most accurate on non-negative arguments; signs are
    // restored from the reflection parity of each component.
    let (x, y, z) = ((dx.abs()) as f64, (dy.abs()) as f64, (dz.abs()) as f64);
    let scale = -1.0; // -4π N, with N = stencil / (4π)
    let t = [
        scale * stencil(newell_f, x, y, z),
        scale * stencil(|a, b, c| newell_f(b, a, c), x, y, z),
        scale * stencil(|a, b, c| newell_f(c, b, a), x, y, z),
        scale * stencil(newell_g, x, y, z),
        scale * stencil(|a, b, c| newell_g(a, c, b), x, y, z),
        scale * stencil(|a, b, c| newell_g(b, c, a), x, y, z),
    ];
    apply_parity(t, dx, dy, dz)
}

/// Point-dipole tensor for unit-volume cells: `(3 r_a r_b / r^2 - δ_ab) / r^3`.
pub fn point_dipole(dx: i64, dy: i64, dz: i64) -> Tensor6 {
    let (x, y, z) = (dx as f64, dy as f64, dz as f64);
    let r2 = x * x + y * y + z * z;
    if r2 == 0.0 {
        return [0.0; 6];
    }
    let r = r2.sqrt();
    let inv3 = 1.0 / (r2 * r);
    let inv5 = 3.0 * inv3 / r2;
    [
        x * x * inv5 - inv3,
        y * y * inv5 - inv3,
        z * z * inv5 - inv3,
        x * y * inv5,
        x * z * inv5,
        y * z * inv5,
    ]
}

/// Sign of each component under reflecting the displacement axes with
/// negative coordinates. Off-diagonal `ab` flips once for each of its axes
/// that is reflected.
pub fn apply_parity(mut t: Tensor6, dx: i64, dy: i64, dz: i64) -> Tensor6 {
    let (sx, sy, sz) = (dx < 0, dy < 0, dz < 0);
    if sx ^ sy {
        t[XY] = -t[XY];
    }
    if sx ^ sz {
        t[XZ] = -t[XZ];
    }
    if sy ^ sz {
        t[YZ] = -t[YZ];
    }
    t
}

pub fn trace(t: &Tensor6) -> f64 {
    t[XX] + t[YY] + t[ZZ]
}

/// Self-term demagnetizing factor of a cube, `-4π/3` per diagonal component.
pub const CUBE_SELF_DIAGONAL: f64 = -4.0 * PI / 3.0;
