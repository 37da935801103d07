//! Finite-difference grid, material parameters, shape masks and spin storage.
//!
//! Cells are indexed `(i, j, k)` along `(x, y, z)` with x fastest:
//! `index = (k * ny + j) * nx + i`. All quantities are CGS.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub type Vec3 = Vector3<f64>;

/// Default cell edge, 3 nm.
pub const DEFAULT_CELL_SIZE_CM: f64 = 3.0e-7;

/// Lattice extents in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub(crate) fn check(&self, other: Dims) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: *self,
                actual: other,
            })
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// A cubic-cell finite-difference grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dims: Dims,
    cell_size_cm: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, cell_size_cm: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid extents must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        if !(cell_size_cm.is_finite() && cell_size_cm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cell size must be positive, got {cell_size_cm}"
            )));
        }
        Ok(Self {
            dims: Dims::new(nx, ny, nz),
            cell_size_cm,
        })
    }

    /// Rejects non-cubic cells; only a single edge length is supported.
    pub fn with_cell_edges(nx: usize, ny: usize, nz: usize, edges_cm: [f64; 3]) -> Result<Self> {
        let [dx, dy, dz] = edges_cm;
        if dx != dy || dy != dz {
            return Err(Error::InvalidParameter(format!(
                "cells must be cubic, got {dx} x {dy} x {dz} cm"
            )));
        }
        Self::new(nx, ny, nz, dx)
    }

    /// `w x w` bilayer film with 3 nm cells.
    pub fn film(w: usize) -> Self {
        Self::new(w, w, 2, DEFAULT_CELL_SIZE_CM).expect("film width must be positive")
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.dims.nx
    }

    pub fn ny(&self) -> usize {
        self.dims.ny
    }

    pub fn nz(&self) -> usize {
        self.dims.nz
    }

    pub fn cell_size_cm(&self) -> f64 {
        self.cell_size_cm
    }

    pub fn cell_volume_cm3(&self) -> f64 {
        self.cell_size_cm.powi(3)
    }
}

/// Magnetic material constants (CGS).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// Saturation magnetization, emu/cc.
    pub ms: f64,
    /// Exchange stiffness, erg/cm.
    pub ax: f64,
    /// Uniaxial anisotropy energy density, erg/cc.
    pub ku: f64,
    pub easy_axis: Vec3,
    pub damping: f64,
    /// Gyromagnetic ratio, rad/(s·Oe).
    pub gyromagnetic: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            ms: 1000.0,
            ax: 0.5e-6,
            ku: 0.0,
            easy_axis: Vec3::x(),
            damping: 0.1,
            gyromagnetic: 1.76e7,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.ms.is_finite() && self.ms > 0.0) {
            return bad("ms must be positive");
        }
        if !(self.ax.is_finite() && self.ax >= 0.0) {
            return bad("ax must be non-negative");
        }
        if !(self.ku.is_finite() && self.ku >= 0.0) {
            return bad("ku must be non-negative");
        }
        if (self.easy_axis.norm() - 1.0).abs() > 1e-12 {
            return bad("easy axis must be a unit vector");
        }
        if !(self.damping.is_finite() && self.damping > 0.0) {
            return bad("damping must be positive");
        }
        if !(self.gyromagnetic.is_finite() && self.gyromagnetic > 0.0) {
            return bad("gyromagnetic ratio must be positive");
        }
        Ok(())
    }
}

/// Exchange and anisotropy field constants, Oe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub h_a: f64,
    pub h_k: f64,
}

/// `H_A = 2 Ax / (Ms D^2)`, `H_K = 2 Ku / Ms`.
pub fn derived_constants(params: &MaterialParams, spec: &GridSpec) -> DerivedConstants {
    let d = spec.cell_size_cm();
    DerivedConstants {
        h_a: 2.0 * params.ax / (params.ms * d * d),
        h_k: 2.0 * params.ku / params.ms,
    }
}

/// Cell occupancy; `true` means magnetic material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    occupied: Vec<bool>,
}

impl Mask {
    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            occupied: vec![true; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != dims.len() {
            return Err(Error::InvalidParameter(format!(
                "mask has {} cells, grid {dims} has {}",
                occupied.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, occupied })
    }

    /// Extrudes an in-plane `nx * ny` pattern (x fastest) through all layers.
    pub fn from_plane(dims: Dims, plane: &[bool]) -> Result<Self> {
        if plane.len() != dims.nx * dims.ny {
            return Err(Error::InvalidParameter(format!(
                "plane mask has {} cells, expected {}",
                plane.len(),
                dims.nx * dims.ny
            )));
        }
        let occupied = (0..dims.nz).flat_map(|_| plane.iter().copied()).collect();
        Ok(Self { dims, occupied })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn is_occupied(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.occupied
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.dims.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.occupied.iter().all(|&o| o)
    }
}

/// Per-cell magnetization direction. Intermediate Runge-Kutta stages store
/// non-unit vectors here too; [`SpinField::check_invariants`] tests the unit
/// constraint explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinField {
    dims: Dims,
    m: Vec<Vec3>,
}

impl SpinField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            m: vec![Vec3::zeros(); dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, m: Vec<Vec3>) -> Result<Self> {
        if m.len() != dims.len() {
            return Err(Error::InvalidParameter(format!(
                "spin field has {} cells, grid {dims} has {}",
                m.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, m })
    }

    /// Every occupied cell set to `direction` (normalized), masked cells zero.
    pub fn uniform(mask: &Mask, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter("uniform direction must be nonzero".into()));
        }
        let dir = direction / n;
        let m = mask
            .as_slice()
            .iter()
            .map(|&occ| if occ { dir } else { Vec3::zeros() })
            .collect();
        Ok(Self {
            dims: mask.dims(),
            m,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.m
    }

    pub fn as_mut_slice(&mut self) -> &mut [Vec3] {
        &mut self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.m[self.dims.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Vec3) {
        let idx = self.dims.index(i, j, k);
        self.m[idx] = v;
    }

    /// Checks `||m| - 1| <= tol` on occupied cells and `m == 0` exactly elsewhere.
    pub fn check_invariants(&self, mask: &Mask, tol: f64) -> Result<()> {
        self.dims.check(mask.dims())?;
        for (idx, (v, &occ)) in self.m.iter().zip(mask.as_slice()).enumerate() {
            if occ {
                if !((v.norm() - 1.0).abs() <= tol) {
                    return Err(Error::InvalidParameter(format!(
                        "cell {idx}: |m| = {} deviates from 1",
                        v.norm()
                    )));
                }
            } else if *v != Vec3::zeros() {
                return Err(Error::InvalidParameter(format!("masked cell {idx} is nonzero")));
            }
        }
        Ok(())
    }

    /// Largest `||m| - 1|` over occupied cells.
    pub fn max_norm_deviation(&self, mask: &Mask) -> f64 {
        self.m
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, &occ)| occ)
            .map(|(v, _)| (v.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Mean of `m` over occupied cells.
    pub fn average(&self, mask: &Mask) -> Vec3 {
        let mut sum = Vec3::zeros();
        let mut n = 0usize;
        for (v, &occ) in self.m.iter().zip(mask.as_slice()) {
            if occ {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            sum
        } else {
            sum / n as f64
        }
    }

    /// Largest per-cell Euclidean distance to `other`.
    pub fn max_difference(&self, other: &SpinField) -> f64 {
        self.m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Scales every occupied cell to unit length and zeroes masked cells.
pub fn normalize(field: &SpinField, mask: &Mask) -> Result<SpinField> {
    let mut out = field.clone();
    normalize_in_place(&mut out, mask)?;
    Ok(out)
}

pub fn normalize_in_place(field: &mut SpinField, mask: &Mask) -> Result<()> {
    field.dims.check(mask.dims())?;
    for (idx, (v, &occ)) in field.m.iter_mut().zip(mask.as_slice()).enumerate() {
        if occ {
            // Vectors already unit to rounding are left untouched, which
            // makes normalization exactly idempotent.
            if (v.norm_squared() - 1.0).abs() <= 8.0 * f64::EPSILON {
                continue;
            }
            let n = v.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::DegenerateSpin { cell: idx });
            }
            *v /= n;
        } else {
            *v = Vec3::zeros();
        }
    }
    Ok(())
}

/// Block-random in-plane initial state. The grid is tiled by
/// `block x block x block` regions (the last region along an axis may be
/// partial); each region gets one direction with angle uniform in `[0, 2π)`
/// and `m_z = 0`. Regions are drawn in `(z, y, x)` block order.
pub fn randomize_spins(spec: &GridSpec, mask: &Mask, block: usize, seed: u64) -> Result<SpinField> {
    let dims = spec.dims();
    dims.check(mask.dims())?;
    if block == 0 {
        return Err(Error::InvalidParameter("block size must be at least 1".into()));
    }
    let bx = dims.nx.div_ceil(block);
    let by = dims.ny.div_ceil(block);
    let bz = dims.nz.div_ceil(block);
    let mut rng = rng::rng(seed, &[0x5157_494e]);
    let dirs: Vec<Vec3> = (0..bx * by * bz)
        .map(|_| {
            let phi = rng.random::<f64>() * TAU;
            Vec3::new(phi.cos(), phi.sin(), 0.0)
        })
        .collect();
    let mut field = SpinField::zeros(dims);
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                let idx = dims.index(i, j, k);
                if mask.is_occupied(idx) {
                    let b = ((k / block) * by + j / block) * bx + i / block;
                    field.m[idx] = dirs[b];
                }
            }
        }
    }
    Ok(field)
}
