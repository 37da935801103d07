//! Channel-major packing of per-cell vectors.
//!
//! A field on an `nx x ny x nz` grid becomes `3 nz` planes ordered
//! `[layer0 x, y, z, layer1 x, y, z, ...]`; each plane is row-major with
//! `i` fastest (`plane[j * nx + i]`).

use crate::error::{Error, Result};
use crate::lattice::{Dims, Vec3};

pub fn channel_count(dims: Dims) -> usize {
    3 * dims.nz
}

pub fn pack(values: &[Vec3], dims: Dims) -> Vec<f64> {
    let plane = dims.nx * dims.ny;
    let mut out = vec![0.0; plane * channel_count(dims)];
    for (idx, v) in values.iter().enumerate() {
        let (i, j, k) = dims.coords(idx);
        for c in 0..3 {
            out[(3 * k + c) * plane + j * dims.nx + i] = v[c];
        }
    }
    out
}

pub fn unpack(data: &[f64], dims: Dims) -> Result<Vec<Vec3>> {
    let plane = dims.nx * dims.ny;
    if data.len() != plane * channel_count(dims) {
        return Err(Error::InvalidParameter(format!(
            "{} channel values do not fit {dims}",
            data.len()
        )));
    }
    Ok((0..dims.len())
        .map(|idx| {
            let (i, j, k) = dims.coords(idx);
            let at = |c: usize| data[(3 * k + c) * plane + j * dims.nx + i];
            Vec3::new(at(0), at(1), at(2))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let d = Dims::new(2, 1, 2);
        let v: Vec<Vec3> = (0..4).map(|n| Vec3::new(n as f64, 10.0 + n as f64, 20.0 + n as f64)).collect();
        let p = pack(&v, d);
        assert_eq!(p, vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0, 2.0, 3.0, 12.0, 13.0, 22.0, 23.0]);
        assert_eq!(unpack(&p, d).unwrap(), v);
        assert!(unpack(&p[1..], d).is_err());
    }
}
