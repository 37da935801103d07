//! Binary PPM/PGM snapshots of one layer. Row 0 of the image is `j = 0`.

use std::f64::consts::TAU;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{Mask, SpinField};
use crate::vortex::WindingMap;

/// HSV with full saturation to 8-bit RGB; `hue` in turns.
fn hsv_rgb(hue: f64, value: f64) -> [u8; 3] {
    let h = hue.rem_euclid(1.0) * 6.0;
    let sector = h.floor() as usize % 6;
    let f = h - h.floor();
    let v = value.clamp(0.0, 1.0);
    let (p, q, t) = (0.0, v * (1.0 - f), v * f);
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// P6 image: hue is the in-plane angle, value the in-plane magnitude;
/// masked cells are black.
pub fn magnetization_ppm(field: &SpinField, mask: &Mask, layer: usize) -> Result<Vec<u8>> {
    let d = field.dims();
    if layer >= d.nz {
        return Err(Error::InvalidParameter(format!("layer {layer} outside {d}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", d.nx, d.ny).into_bytes();
    for j in 0..d.ny {
        for i in 0..d.nx {
            let idx = d.index(i, j, layer);
            let px = if mask.is_occupied(idx) {
                let m = field.as_slice()[idx];
                hsv_rgb(m.y.atan2(m.x) / TAU, m.x.hypot(m.y))
            } else {
                [0, 0, 0]
            };
            out.extend_from_slice(&px);
        }
    }
    Ok(out)
}

/// P5 image: mid gray is zero winding, black and white are `∓max|WD|`.
pub fn winding_pgm(wd: &WindingMap) -> Vec<u8> {
    let scale = wd.max_abs();
    let mut out = format!("P5\n{} {}\n255\n", wd.nx(), wd.ny()).into_bytes();
    out.extend(wd.as_slice().iter().map(|&v| {
        let x = if scale > 0.0 { v / scale } else { 0.0 };
        (127.5 + 127.5 * x).round().clamp(0.0, 255.0) as u8
    }));
    out
}

pub fn write_magnetization(field: &SpinField, mask: &Mask, layer: usize, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, magnetization_ppm(field, mask, layer)?)?)
}

pub fn write_winding(wd: &WindingMap, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, winding_pgm(wd))?)
}
