//! Analytic spin textures and lattice symmetry maps, for tests and demos.

use std::f64::consts::FRAC_PI_2;

use crate::lattice::{Dims, SpinField, Vec3};

/// Out-of-plane core of a texture: `m_z = polarity * exp(-r²/radius²)`.
/// A zero radius gives a purely in-plane texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreProfile {
    pub polarity: f64,
    pub radius: f64,
}

impl CoreProfile {
    pub const FLAT: CoreProfile = CoreProfile {
        polarity: 1.0,
        radius: 0.0,
    };

    pub fn up(radius: f64) -> Self {
        Self { polarity: 1.0, radius }
    }

    pub fn down(radius: f64) -> Self {
        Self {
            polarity: -1.0,
            radius,
        }
    }

    fn mz(&self, r: f64) -> f64 {
        if self.radius > 0.0 {
            self.polarity * (-(r * r) / (self.radius * self.radius)).exp()
        } else {
            0.0
        }
    }
}

/// Builds a unit field from an in-plane angle function of the cell offset
/// `(x - cx, y - cy)`, with a core profile centered on `center`. Every
/// layer gets the same texture.
pub fn from_angle(dims: Dims, center: [f64; 2], core: CoreProfile, angle: impl Fn(f64, f64) -> f64) -> SpinField {
    let mut f = SpinField::zeros(dims);
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                let (x, y) = (i as f64 - center[0], j as f64 - center[1]);
                let r = x.hypot(y);
                let v = if r == 0.0 {
                    Vec3::new(0.0, 0.0, if core.polarity < 0.0 { -1.0 } else { 1.0 })
                } else {
                    let mz = core.mz(r);
                    let s = (1.0 - mz * mz).max(0.0).sqrt();
                    let a = angle(x, y);
                    Vec3::new(s * a.cos(), s * a.sin(), mz)
                };
                f.set(i, j, k, v);
            }
        }
    }
    f
}

/// Vortex curling counterclockwise (`ccw = true`) or clockwise about `center`.
pub fn vortex(dims: Dims, center: [f64; 2], ccw: bool, core: CoreProfile) -> SpinField {
    let turn = if ccw { FRAC_PI_2 } else { -FRAC_PI_2 };
    from_angle(dims, center, core, |x, y| y.atan2(x) + turn)
}

/// Antivortex `m ∝ (cos φ, -sin φ)`.
pub fn antivortex(dims: Dims, center: [f64; 2], core: CoreProfile) -> SpinField {
    from_angle(dims, center, core, |x, y| -y.atan2(x))
}

/// A counterclockwise vortex at `v` and an antivortex at `a`, superposed
/// through their phase fields.
pub fn vortex_antivortex_pair(dims: Dims, v: [f64; 2], a: [f64; 2]) -> SpinField {
    let d = [a[0] - v[0], a[1] - v[1]];
    from_angle(dims, v, CoreProfile::FLAT, |x, y| {
        y.atan2(x) + FRAC_PI_2 - (y - d[1]).atan2(x - d[0])
    })
}

/// Reflection `x -> -x`: positions and the `m_x` component both flip.
pub fn mirror_x(field: &SpinField) -> SpinField {
    let d = field.dims();
    let mut out = SpinField::zeros(d);
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let m = field.get(i, j, k);
                out.set(d.nx - 1 - i, j, k, Vec3::new(-m.x, m.y, m.z));
            }
        }
    }
    out
}

/// Rotation by +90° about z. The output has transposed in-plane dimensions.
pub fn rotate_quarter(field: &SpinField) -> SpinField {
    let d = field.dims();
    let mut out = SpinField::zeros(Dims::new(d.ny, d.nx, d.nz));
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let m = field.get(i, j, k);
                out.set(d.ny - 1 - j, i, k, Vec3::new(-m.y, m.x, m.z));
            }
        }
    }
    out
}

/// Time reversal of the out-of-plane component only.
pub fn flip_mz(field: &SpinField) -> SpinField {
    let mut out = field.clone();
    for m in out.as_mut_slice() {
        m.z = -m.z;
    }
    out
}
