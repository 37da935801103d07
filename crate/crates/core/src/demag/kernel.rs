use std::sync::Arc;

use num_traits::{Float, FromPrimitive};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};

use super::tensor::{self, Tensor6, XZ, YZ};
use crate::error::{Error, Result};
use crate::lattice::{Dims, GridSpec};

/// Floating-point width of the spectral convolution path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Double,
    Single,
}

#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    pub precision: Precision,
    /// Displacements at or beyond this many cells use the point-dipole
    /// tensor; the exact formula loses digits to cancellation far away.
    pub far_field_cells: f64,
    pub memory_limit_bytes: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            precision: Precision::Double,
            far_field_cells: 32.0,
            memory_limit_bytes: 4 << 30,
        }
    }
}

/// Precomputed interaction tensor for one grid, plus its spectral form over
/// the zero-padded in-plane domain.
pub struct DemagKernel {
    dims: Dims,
    /// Non-negative displacements only, `(dz * ny + dy) * nx + dx`.
    octant: Vec<Tensor6>,
    spectral: SpectralForm,
}

pub(crate) enum SpectralForm {
    Double(SpectralKernel<f64>),
    Single(SpectralKernel<f32>),
}

/// Spectral kernels per layer offset `dz >= 0`. Every padded kernel
/// component is even or odd in each in-plane axis, so its transform is purely
/// real (xx, yy, zz, xy) or purely imaginary (xz, yz); only that part is kept.
pub(crate) struct SpectralKernel<T: FftNum> {
    pub px: usize,
    pub py: usize,
    /// `[dz][component]`, each `px * py` long in `[kx][ky]` layout.
    pub parts: Vec<[Vec<T>; 6]>,
    pub plans: FftPlans<T>,
}

#[derive(Clone)]
pub(crate) struct FftPlans<T: FftNum> {
    pub fwd_x: Arc<dyn Fft<T>>,
    pub fwd_y: Arc<dyn Fft<T>>,
    pub inv_x: Arc<dyn Fft<T>>,
    pub inv_y: Arc<dyn Fft<T>>,
}

impl<T: FftNum> FftPlans<T> {
    fn new(px: usize, py: usize) -> Self {
        let mut planner = FftPlanner::<T>::new();
        Self {
            fwd_x: planner.plan_fft_forward(px),
            fwd_y: planner.plan_fft_forward(py),
            inv_x: planner.plan_fft_inverse(px),
            inv_y: planner.plan_fft_inverse(py),
        }
    }

    pub fn scratch_len(&self) -> usize {
        [
            self.fwd_x.get_inplace_scratch_len(),
            self.fwd_y.get_inplace_scratch_len(),
            self.inv_x.get_inplace_scratch_len(),
            self.inv_y.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    /// Spatial `[y][x]` buffer to spectrum in `[kx][ky]` layout. Rows at or
    /// beyond `rows` must be zero; their x transforms are skipped.
    pub fn forward(
        &self,
        buf: &mut [Complex<T>],
        tmp: &mut [Complex<T>],
        scratch: &mut [Complex<T>],
        px: usize,
        py: usize,
        rows: usize,
    ) {
        self.fwd_x.process_with_scratch(&mut buf[..rows * px], scratch);
        transpose::transpose(buf, tmp, px, py);
        self.fwd_y.process_with_scratch(tmp, scratch);
        buf.copy_from_slice(tmp);
    }

    /// Spectrum in `[kx][ky]` layout back to spatial `[y][x]`, unnormalized.
    /// Only the first `rows` rows of the result are transformed in x.
    pub fn inverse(
        &self,
        buf: &mut [Complex<T>],
        tmp: &mut [Complex<T>],
        scratch: &mut [Complex<T>],
        px: usize,
        py: usize,
        rows: usize,
    ) {
        self.inv_y.process_with_scratch(buf, scratch);
        transpose::transpose(buf, tmp, py, px);
        self.inv_x.process_with_scratch(&mut tmp[..rows * px], scratch);
        buf[..rows * px].copy_from_slice(&tmp[..rows * px]);
    }
}

/// Smallest 5-smooth integer `>= n`.
pub fn fft_friendly_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Padded in-plane FFT extents for a grid: at least `2n - 1` per axis.
pub fn padded_extents(dims: Dims) -> (usize, usize) {
    (
        fft_friendly_len(2 * dims.nx - 1),
        fft_friendly_len(2 * dims.ny - 1),
    )
}

/// Rough resident size of a kernel for `dims`: octant tensor, spectral parts
/// and the convolution work buffers.
pub fn estimate_kernel_bytes(dims: Dims, precision: Precision) -> u64 {
    let (px, py) = padded_extents(dims);
    let p = (px * py) as u64;
    let real = match precision {
        Precision::Double => 8u64,
        Precision::Single => 4u64,
    };
    let octant = dims.len() as u64 * 48;
    let spectral = dims.nz as u64 * 6 * p * real;
    let packed = (3 * dims.nz as u64).div_ceil(2);
    let work = (2 * packed + 1) * p * 2 * real;
    octant + spectral + work
}

impl DemagKernel {
    /// Builds the kernel with double-precision spectra.
    pub fn build(spec: &GridSpec) -> Result<Self> {
        Self::build_with(spec, KernelOptions::default())
    }

    pub fn build_with(spec: &GridSpec, opts: KernelOptions) -> Result<Self> {
        let dims = spec.dims();
        let required = estimate_kernel_bytes(dims, opts.precision);
        if required > opts.memory_limit_bytes {
            return Err(Error::GridTooLarge {
                dims,
                required_bytes: required,
                limit_bytes: opts.memory_limit_bytes,
            });
        }
        let far2 = opts.far_field_cells * opts.far_field_cells;
        let mut octant = Vec::with_capacity(dims.len());
        for dz in 0..dims.nz as i64 {
            for dy in 0..dims.ny as i64 {
                for dx in 0..dims.nx as i64 {
                    let r2 = (dx * dx + dy * dy + dz * dz) as f64;
                    octant.push(if r2 >= far2 {
                        tensor::point_dipole(dx, dy, dz)
                    } else {
                        tensor::newell(dx, dy, dz)
                    });
                }
            }
        }
        let spectral = match opts.precision {
            Precision::Double => SpectralForm::Double(spectral_kernel(dims, &octant)),
            Precision::Single => SpectralForm::Single(spectral_kernel(dims, &octant)),
        };
        Ok(Self {
            dims,
            octant,
            spectral,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn precision(&self) -> Precision {
        match self.spectral {
            SpectralForm::Double(_) => Precision::Double,
            SpectralForm::Single(_) => Precision::Single,
        }
    }

    /// Tensor at displacement `(dx, dy, dz)` cells (source minus target).
    pub fn omega(&self, dx: i64, dy: i64, dz: i64) -> Tensor6 {
        let d = self.dims;
        assert!(
            dx.unsigned_abs() < d.nx as u64
                && dy.unsigned_abs() < d.ny as u64
                && dz.unsigned_abs() < d.nz as u64,
            "displacement ({dx},{dy},{dz}) outside kernel support {d}"
        );
        let idx = d.index(dx.unsigned_abs() as usize, dy.unsigned_abs() as usize, dz.unsigned_abs() as usize);
        tensor::apply_parity(self.octant[idx], dx, dy, dz)
    }

    pub(crate) fn spectral(&self) -> &SpectralForm {
        &self.spectral
    }
}

fn spectral_kernel<T: FftNum + Float + FromPrimitive>(
    dims: Dims,
    octant: &[Tensor6],
) -> SpectralKernel<T> {
    let (px, py) = padded_extents(dims);
    let plans = FftPlans::<T>::new(px, py);
    let n = px * py;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut tmp = buf.clone();
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); plans.scratch_len()];
    let (nx, ny) = (dims.nx as i64, dims.ny as i64);
    let mut parts = Vec::with_capacity(dims.nz);
    for dz in 0..dims.nz {
        let comps: [Vec<T>; 6] = std::array::from_fn(|c| {
            buf.iter_mut().for_each(|v| *v = Complex::new(T::zero(), T::zero()));
            for dy in -(ny - 1)..ny {
                for dx in -(nx - 1)..nx {
                    let o = octant[(dz * dims.ny + dy.unsigned_abs() as usize) * dims.nx
                        + dx.unsigned_abs() as usize];
                    let t = tensor::apply_parity(o, dx, dy, 0);
                    let col = dx.rem_euclid(px as i64) as usize;
                    let row = dy.rem_euclid(py as i64) as usize;
                    buf[row * px + col] = Complex::new(T::from_f64(t[c]).unwrap(), T::zero());
                }
            }
            plans.forward(&mut buf, &mut tmp, &mut scratch, px, py, py);
            if c == XZ || c == YZ {
                buf.iter().map(|v| v.im).collect()
            } else {
                buf.iter().map(|v| v.re).collect()
            }
        });
        parts.push(comps);
    }
    SpectralKernel {
        px,
        py,
        parts,
        plans,
    }
}
