//! Demagnetizing field: interaction tensor, direct O(N²) summation and the
//! zero-padded FFT convolution.
//!
//! `H(i) = Ms Σ_l Ω(l - i) m(l)`, self term included. The FFT path pads each
//! in-plane axis to at least `2n - 1` so the cyclic convolution equals the
//! aperiodic one; layers couple through explicit layer-offset kernels.

mod kernel;
pub mod tensor;

use std::sync::Arc;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::num_complex::Complex;
use rustfft::FftNum;

pub use kernel::{
    estimate_kernel_bytes, fft_friendly_len, padded_extents, DemagKernel, KernelOptions,
    Precision,
};

use kernel::{SpectralForm, SpectralKernel};
use tensor::{Tensor6, XX, XY, XZ, YY, YZ, ZZ};

use crate::error::Result;
use crate::fields::FieldMap;
use crate::lattice::{SpinField, Vec3};

/// Builds the demag kernel for `spec` with default options.
pub fn build_demag_tensor(spec: &crate::lattice::GridSpec) -> Result<DemagKernel> {
    DemagKernel::build(spec)
}

/// Direct summation over every source/target pair.
pub fn demag_direct(field: &SpinField, kernel: &DemagKernel, ms: f64) -> Result<FieldMap> {
    let d = kernel.dims();
    d.check(field.dims())?;
    let (wx, wy, wz) = (2 * d.nx - 1, 2 * d.ny - 1, 2 * d.nz - 1);
    let mut table: Vec<Tensor6> = Vec::with_capacity(wx * wy * wz);
    for dz in -(d.nz as i64 - 1)..d.nz as i64 {
        for dy in -(d.ny as i64 - 1)..d.ny as i64 {
            for dx in -(d.nx as i64 - 1)..d.nx as i64 {
                table.push(kernel.omega(dx, dy, dz));
            }
        }
    }
    let m = field.as_slice();
    let mut out = FieldMap::zeros(d);
    let h = out.as_mut_slice();
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let mut acc = [0.0f64; 3];
                for n in 0..d.nz {
                    for l2 in 0..d.ny {
                        let row = ((n + d.nz - 1 - k) * wy + (l2 + d.ny - 1 - j)) * wx;
                        let src = d.index(0, l2, n);
                        for l1 in 0..d.nx {
                            let t = &table[row + l1 + d.nx - 1 - i];
                            let v = &m[src + l1];
                            acc[0] += t[XX] * v.x + t[XY] * v.y + t[XZ] * v.z;
                            acc[1] += t[XY] * v.x + t[YY] * v.y + t[YZ] * v.z;
                            acc[2] += t[XZ] * v.x + t[YZ] * v.y + t[ZZ] * v.z;
                        }
                    }
                }
                h[d.index(i, j, k)] = Vec3::new(ms * acc[0], ms * acc[1], ms * acc[2]);
            }
        }
    }
    Ok(out)
}

/// One-shot FFT convolution. Use [`FftConvolver`] to reuse work buffers.
pub fn demag_fft(field: &SpinField, kernel: &Arc<DemagKernel>, ms: f64) -> Result<FieldMap> {
    let mut conv = FftConvolver::new(kernel.clone());
    let mut out = FieldMap::zeros(kernel.dims());
    conv.convolve(field, ms, &mut out)?;
    Ok(out)
}

/// FFT convolution engine owning its scratch space. The kernel is shared;
/// each engine is single-owner.
pub struct FftConvolver {
    kernel: Arc<DemagKernel>,
    work: Work,
}

enum Work {
    Double(Workspace<f64>),
    Single(Workspace<f32>),
}

struct Workspace<T: FftNum> {
    inputs: Vec<Vec<Complex<T>>>,
    outputs: Vec<Vec<Complex<T>>>,
    tmp: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    m_hat: Vec<Complex<T>>,
    h_hat: Vec<Complex<T>>,
}

impl<T: FftNum + Float> Workspace<T> {
    fn new(sk: &SpectralKernel<T>, nz: usize) -> Self {
        let n = sk.px * sk.py;
        let packs = (3 * nz).div_ceil(2);
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            inputs: vec![vec![zero; n]; packs],
            outputs: vec![vec![zero; n]; packs],
            tmp: vec![zero; n],
            scratch: vec![zero; sk.plans.scratch_len()],
            m_hat: vec![zero; 3 * nz],
            h_hat: vec![zero; 3 * nz],
        }
    }
}

impl FftConvolver {
    pub fn new(kernel: Arc<DemagKernel>) -> Self {
        let nz = kernel.dims().nz;
        let work = match kernel.spectral() {
            SpectralForm::Double(sk) => Work::Double(Workspace::new(sk, nz)),
            SpectralForm::Single(sk) => Work::Single(Workspace::new(sk, nz)),
        };
        Self { kernel, work }
    }

    pub fn kernel(&self) -> &Arc<DemagKernel> {
        &self.kernel
    }

    pub fn convolve(&mut self, field: &SpinField, ms: f64, out: &mut FieldMap) -> Result<()> {
        let dims = self.kernel.dims();
        dims.check(field.dims())?;
        dims.check(out.dims())?;
        match (self.kernel.spectral(), &mut self.work) {
            (SpectralForm::Double(sk), Work::Double(ws)) => convolve(sk, ws, field, ms, out),
            (SpectralForm::Single(sk), Work::Single(ws)) => convolve(sk, ws, field, ms, out),
            _ => unreachable!("workspace precision follows the kernel"),
        }
        Ok(())
    }
}

fn convolve<T: FftNum + Float + FromPrimitive + ToPrimitive>(
    sk: &SpectralKernel<T>,
    ws: &mut Workspace<T>,
    field: &SpinField,
    ms: f64,
    out: &mut FieldMap,
) {
    let dims = field.dims();
    let (px, py) = (sk.px, sk.py);
    let n_real = 3 * dims.nz;
    let zero = Complex::new(T::zero(), T::zero());
    let m = field.as_slice();

    // Pack two real inputs per complex transform: z = u + i v.
    for buf in ws.inputs.iter_mut() {
        buf.iter_mut().for_each(|v| *v = zero);
    }
    for r in 0..n_real {
        let (layer, comp) = (r / 3, r % 3);
        let buf = &mut ws.inputs[r / 2];
        for j in 0..dims.ny {
            let src = dims.index(0, j, layer);
            for i in 0..dims.nx {
                let v = T::from_f64(m[src + i][comp]).unwrap();
                let cell = &mut buf[j * px + i];
                if r % 2 == 0 {
                    cell.re = v;
                } else {
                    cell.im = v;
                }
            }
        }
    }
    for buf in ws.inputs.iter_mut() {
        sk.plans.forward(buf, &mut ws.tmp, &mut ws.scratch, px, py, dims.ny);
    }

    // Real fields have Hermitian spectra, so only one of each pair
    // `(q, -q)` is computed and the partner is filled by conjugation.
    let half = T::from_f64(0.5).unwrap();
    let nz = dims.nz;
    let i_mul = |k: T, v: Complex<T>| Complex::new(-k * v.im, k * v.re);
    for kx in 0..px {
        let nkx = (px - kx) % px;
        for ky in 0..py {
            let q = kx * py + ky;
            let qn = nkx * py + (py - ky) % py;
            if qn < q {
                continue;
            }
            for (p, buf) in ws.inputs.iter().enumerate() {
                let (z, zn) = (buf[q], buf[qn].conj());
                ws.m_hat[2 * p] = (z + zn) * half;
                if 2 * p + 1 < n_real {
                    // (z - zn) / 2i
                    let d = (z - zn) * half;
                    ws.m_hat[2 * p + 1] = Complex::new(d.im, -d.re);
                }
            }
            for t in 0..nz {
                let mut h = [zero; 3];
                for s in 0..nz {
                    // The odd components change sign with the offset direction.
                    let (d, sign) = if t >= s { (t - s, T::one()) } else { (s - t, -T::one()) };
                    let k = &sk.parts[d];
                    let (kxx, kyy, kzz, kxy) = (k[XX][q], k[YY][q], k[ZZ][q], k[XY][q]);
                    let (kxz, kyz) = (k[XZ][q] * sign, k[YZ][q] * sign);
                    let (mx, my, mz) = (ws.m_hat[3 * s], ws.m_hat[3 * s + 1], ws.m_hat[3 * s + 2]);
                    h[0] = h[0] + mx * kxx + my * kxy + i_mul(kxz, mz);
                    h[1] = h[1] + mx * kxy + my * kyy + i_mul(kyz, mz);
                    h[2] = h[2] + i_mul(kxz, mx) + i_mul(kyz, my) + mz * kzz;
                }
                ws.h_hat[3 * t..3 * t + 3].copy_from_slice(&h);
            }
            for (p, buf) in ws.outputs.iter_mut().enumerate() {
                let u = ws.h_hat[2 * p];
                let v = ws.h_hat.get(2 * p + 1).copied().unwrap_or(zero);
                // u + i v at q, conj(u) + i conj(v) at -q.
                buf[q] = Complex::new(u.re - v.im, u.im + v.re);
                buf[qn] = Complex::new(u.re + v.im, v.re - u.im);
            }
        }
    }

    for buf in ws.outputs.iter_mut() {
        sk.plans.inverse(buf, &mut ws.tmp, &mut ws.scratch, px, py, dims.ny);
    }
    let scale = ms / (px * py) as f64;
    let h = out.as_mut_slice();
    for r in 0..n_real {
        let (layer, comp) = (r / 3, r % 3);
        let buf = &ws.outputs[r / 2];
        for j in 0..dims.ny {
            let dst = dims.index(0, j, layer);
            for i in 0..dims.nx {
                let cell = buf[j * px + i];
                let v = if r % 2 == 0 { cell.re } else { cell.im };
                h[dst + i][comp] = v.to_f64().unwrap() * scale;
            }
        }
    }
}

/// `max |a - b| / max |b|` over all cells and components.
pub fn max_relative_error(a: &FieldMap, b: &FieldMap) -> f64 {
    let num = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max);
    let den = b.as_slice().iter().map(|y| y.amax()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
