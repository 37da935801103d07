//! External, exchange and anisotropy fields, the demag provider interface and
//! effective-field assembly.

use std::sync::Arc;

use crate::demag::{self, DemagKernel, FftConvolver};
use crate::error::{Error, Result};
use crate::lattice::{derived_constants, DerivedConstants, Dims, GridSpec, Mask, MaterialParams, SpinField, Vec3};

/// A per-cell vector field in Oe.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    dims: Dims,
    h: Vec<Vec3>,
}

impl FieldMap {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            h: vec![Vec3::zeros(); dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, h: Vec<Vec3>) -> Result<Self> {
        if h.len() != dims.len() {
            return Err(Error::InvalidParameter(format!(
                "field map has {} cells, grid {dims} has {}",
                h.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, h })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[Vec3] {
        &self.h
    }

    pub fn as_mut_slice(&mut self) -> &mut [Vec3] {
        &mut self.h
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.h[self.dims.index(i, j, k)]
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }

    pub fn fill(&mut self, v: Vec3) {
        self.h.iter_mut().for_each(|h| *h = v);
    }
}

/// Applied field, uniform or per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalField {
    Uniform(Vec3),
    PerCell(FieldMap),
}

impl Default for ExternalField {
    fn default() -> Self {
        ExternalField::Uniform(Vec3::zeros())
    }
}

impl ExternalField {
    pub fn at(&self, idx: usize) -> Vec3 {
        match self {
            ExternalField::Uniform(h) => *h,
            ExternalField::PerCell(map) => map.as_slice()[idx],
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let finite = match self {
            ExternalField::Uniform(h) => h.iter().all(|c| c.is_finite()),
            ExternalField::PerCell(map) => {
                dims.check(map.dims())?;
                map.is_finite()
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter("external field must be finite".into()))
        }
    }
}

/// Anything that maps a spin configuration to its demagnetizing field.
/// Implementations must be deterministic for a fixed input.
pub trait DemagProvider {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()>;

    fn demag(&mut self, spins: &SpinField) -> Result<FieldMap> {
        let mut out = FieldMap::zeros(spins.dims());
        self.demag_into(spins, &mut out)?;
        Ok(out)
    }

    fn label(&self) -> &str;
}

impl<P: DemagProvider + ?Sized> DemagProvider for Box<P> {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()> {
        (**self).demag_into(spins, out)
    }

    fn label(&self) -> &str {
        (**self).label()
    }
}

/// In-process zero-padded FFT convolution.
pub struct FftProvider {
    conv: FftConvolver,
    ms: f64,
}

impl FftProvider {
    pub fn new(kernel: Arc<DemagKernel>, ms: f64) -> Self {
        Self {
            conv: FftConvolver::new(kernel),
            ms,
        }
    }

    pub fn for_grid(grid: &GridSpec, ms: f64) -> Result<Self> {
        Ok(Self::new(Arc::new(DemagKernel::build(grid)?), ms))
    }
}

impl DemagProvider for FftProvider {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()> {
        self.conv.convolve(spins, self.ms, out)
    }

    fn label(&self) -> &str {
        "fft"
    }
}

/// O(N²) reference summation.
pub struct DirectProvider {
    kernel: Arc<DemagKernel>,
    ms: f64,
}

impl DirectProvider {
    pub fn new(kernel: Arc<DemagKernel>, ms: f64) -> Self {
        Self { kernel, ms }
    }
}

impl DemagProvider for DirectProvider {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()> {
        *out = demag::demag_direct(spins, &self.kernel, self.ms)?;
        Ok(())
    }

    fn label(&self) -> &str {
        "direct"
    }
}

/// Ignores magnetostatics entirely.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroProvider;

impl DemagProvider for ZeroProvider {
    fn demag_into(&mut self, spins: &SpinField, out: &mut FieldMap) -> Result<()> {
        spins.dims().check(out.dims())?;
        out.fill(Vec3::zeros());
        Ok(())
    }

    fn label(&self) -> &str {
        "zero"
    }
}

/// Six-neighbour exchange, `H_A Σ (m_n - m)`. Neighbours outside the grid or
/// masked out are skipped; masked cells get zero.
pub fn exchange_field(field: &SpinField, mask: &Mask, h_a: f64) -> Result<FieldMap> {
    let mut out = FieldMap::zeros(field.dims());
    exchange_into(field, mask, h_a, &mut out)?;
    Ok(out)
}

fn exchange_into(field: &SpinField, mask: &Mask, h_a: f64, out: &mut FieldMap) -> Result<()> {
    let d = field.dims();
    d.check(mask.dims())?;
    d.check(out.dims())?;
    let m = field.as_slice();
    let occ = mask.as_slice();
    let h = out.as_mut_slice();
    let (sx, sy, sz) = (1, d.nx, d.nx * d.ny);
    for k in 0..d.nz {
        for j in 0..d.ny {
            for i in 0..d.nx {
                let idx = d.index(i, j, k);
                if !occ[idx] {
                    h[idx] = Vec3::zeros();
                    continue;
                }
                let c = m[idx];
                let mut acc = Vec3::zeros();
                let mut visit = |n: usize| {
                    if occ[n] {
                        acc += m[n] - c;
                    }
                };
                if i > 0 {
                    visit(idx - sx);
                }
                if i + 1 < d.nx {
                    visit(idx + sx);
                }
                if j > 0 {
                    visit(idx - sy);
                }
                if j + 1 < d.ny {
                    visit(idx + sy);
                }
                if k > 0 {
                    visit(idx - sz);
                }
                if k + 1 < d.nz {
                    visit(idx + sz);
                }
                h[idx] = acc * h_a;
            }
        }
    }
    Ok(())
}

/// Uniaxial anisotropy, `H_K (m·k) k`.
pub fn anisotropy_field(field: &SpinField, h_k: f64, easy_axis: Vec3) -> FieldMap {
    let mut out = FieldMap::zeros(field.dims());
    anisotropy_into(field, h_k, easy_axis, &mut out);
    out
}

fn anisotropy_into(field: &SpinField, h_k: f64, k: Vec3, out: &mut FieldMap) {
    for (h, m) in out.as_mut_slice().iter_mut().zip(field.as_slice()) {
        *h = k * (h_k * m.dot(&k));
    }
}

/// A magnetic sample: geometry, material and applied field.
#[derive(Debug, Clone)]
pub struct System {
    pub grid: GridSpec,
    pub mask: Mask,
    pub params: MaterialParams,
    pub ext: ExternalField,
}

impl System {
    pub fn new(grid: GridSpec, mask: Mask, params: MaterialParams, ext: ExternalField) -> Result<Self> {
        grid.dims().check(mask.dims())?;
        params.validate()?;
        ext.validate(grid.dims())?;
        if mask.occupied_count() == 0 {
            return Err(Error::InvalidParameter("mask has no occupied cells".into()));
        }
        Ok(Self {
            grid,
            mask,
            params,
            ext,
        })
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims()
    }

    pub fn constants(&self) -> DerivedConstants {
        derived_constants(&self.params, &self.grid)
    }
}

/// The four effective-field contributions and their sum.
#[derive(Debug, Clone)]
pub struct FieldTerms {
    pub external: FieldMap,
    pub exchange: FieldMap,
    pub anisotropy: FieldMap,
    pub demag: FieldMap,
    pub total: FieldMap,
}

impl FieldTerms {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            external: FieldMap::zeros(dims),
            exchange: FieldMap::zeros(dims),
            anisotropy: FieldMap::zeros(dims),
            demag: FieldMap::zeros(dims),
            total: FieldMap::zeros(dims),
        }
    }
}

/// `H_eff = H_ext + H_exch + H_aniso + H_demag`.
pub fn effective_field(system: &System, field: &SpinField, provider: &mut dyn DemagProvider) -> Result<FieldTerms> {
    let mut terms = FieldTerms::zeros(system.dims());
    effective_field_into(system, field, provider, &mut terms)?;
    Ok(terms)
}

pub fn effective_field_into(
    system: &System,
    field: &SpinField,
    provider: &mut dyn DemagProvider,
    terms: &mut FieldTerms,
) -> Result<()> {
    let d = system.dims();
    d.check(field.dims())?;
    let c = system.constants();
    for (idx, h) in terms.external.as_mut_slice().iter_mut().enumerate() {
        *h = system.ext.at(idx);
    }
    exchange_into(field, &system.mask, c.h_a, &mut terms.exchange)?;
    anisotropy_into(field, c.h_k, system.params.easy_axis, &mut terms.anisotropy);
    provider.demag_into(field, &mut terms.demag)?;
    if terms.demag.dims() != d {
        return Err(crate::error::ProviderError::OutputDims.into());
    }
    for idx in 0..d.len() {
        terms.total.as_mut_slice()[idx] = terms.external.as_slice()[idx]
            + terms.exchange.as_slice()[idx]
            + terms.anisotropy.as_slice()[idx]
            + terms.demag.as_slice()[idx];
    }
    Ok(())
}

/// Total energy in erg from already-evaluated field terms:
/// `Σ [-Ms m·H_ext - ½ Ms m·H_demag - ½ Ms m·H_exch - Ku (m·k)²] V`.
pub fn energy_from_terms(system: &System, field: &SpinField, terms: &FieldTerms) -> f64 {
    let ms = system.params.ms;
    let ku = system.params.ku;
    let k = system.params.easy_axis;
    let mut e = 0.0;
    for (idx, m) in field.as_slice().iter().enumerate() {
        if !system.mask.is_occupied(idx) {
            continue;
        }
        let mk = m.dot(&k);
        e += -ms * m.dot(&terms.external.as_slice()[idx])
            - 0.5 * ms * m.dot(&terms.demag.as_slice()[idx])
            - 0.5 * ms * m.dot(&terms.exchange.as_slice()[idx])
            - ku * mk * mk;
    }
    e * system.grid.cell_volume_cm3()
}

pub fn total_energy(system: &System, field: &SpinField, provider: &mut dyn DemagProvider) -> Result<f64> {
    let terms = effective_field(system, field, provider)?;
    Ok(energy_from_terms(system, field, &terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demag::{demag_direct, max_relative_error};
    use crate::lattice::randomize_spins;
    use std::f64::consts::PI;

    fn grid(nx: usize, ny: usize, nz: usize) -> GridSpec {
        GridSpec::new(nx, ny, nz, 3e-7).unwrap()
    }

    #[test]
    fn uniform_state_has_no_exchange() {
        let g = grid(5, 4, 2);
        let mask = Mask::full(g.dims());
        let f = SpinField::uniform(&mask, Vec3::new(1.0, 2.0, 0.5)).unwrap();
        let h = exchange_field(&f, &mask, 1.0e4).unwrap();
        assert!(h.as_slice().iter().all(|v| v.norm() < 1e-10));
    }

    #[test]
    fn exchange_six_neighbour_sum() {
        let g = grid(3, 3, 3);
        let mask = Mask::full(g.dims());
        let mut f = SpinField::uniform(&mask, Vec3::x()).unwrap();
        f.set(1, 2, 1, Vec3::y());
        let h = exchange_field(&f, &mask, 2.0).unwrap();
        assert!((h.get(1, 1, 1) - Vec3::new(-2.0, 2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn isolated_cell_has_no_exchange() {
        let g = grid(3, 3, 1);
        let mut plane = vec![false; 9];
        plane[4] = true;
        let mask = Mask::from_plane(g.dims(), &plane).unwrap();
        let f = SpinField::uniform(&mask, Vec3::y()).unwrap();
        let h = exchange_field(&f, &mask, 5.0).unwrap();
        assert!(h.as_slice().iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn exchange_sums_to_zero() {
        let g = grid(7, 6, 2);
        let mask = Mask::full(g.dims());
        let f = randomize_spins(&g, &mask, 1, 4).unwrap();
        let h = exchange_field(&f, &mask, 1.0).unwrap();
        let total: Vec3 = h.as_slice().iter().sum();
        assert!(total.norm() < 1e-9);
    }

    #[test]
    fn anisotropy_examples() {
        let dims = Dims::new(3, 1, 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let f = SpinField::from_vec(dims, vec![Vec3::y(), Vec3::z(), Vec3::new(s, 0.0, s)]).unwrap();
        let h = anisotropy_field(&f, 12.5, Vec3::z());
        assert_eq!(h.as_slice()[0], Vec3::zeros());
        assert_eq!(h.as_slice()[1], Vec3::new(0.0, 0.0, 12.5));
        assert!((h.as_slice()[2] - Vec3::new(0.0, 0.0, 12.5 * s)).norm() < 1e-14);
        let neg = SpinField::from_vec(dims, f.as_slice().iter().map(|v| -v).collect()).unwrap();
        let hn = anisotropy_field(&neg, 12.5, Vec3::z());
        for (a, b) in h.as_slice().iter().zip(hn.as_slice()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn without_internal_terms_heff_is_external() {
        let g = grid(4, 4, 2);
        let mask = Mask::full(g.dims());
        let params = MaterialParams {
            ax: 0.0,
            ..Default::default()
        };
        let ext = Vec3::new(100.0, -20.0, 3.0);
        let sys = System::new(g, mask.clone(), params, ExternalField::Uniform(ext)).unwrap();
        let f = randomize_spins(&g, &mask, 1, 1).unwrap();
        let t = effective_field(&sys, &f, &mut ZeroProvider).unwrap();
        assert!(t.total.as_slice().iter().all(|v| *v == ext));

        let sys0 = System::new(g, mask, params, ExternalField::default()).unwrap();
        let t0 = effective_field(&sys0, &f, &mut ZeroProvider).unwrap();
        assert!(t0.total.as_slice().iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn effective_field_parts_are_additive_and_demag_matches_direct() {
        let g = grid(8, 8, 2);
        let mask = Mask::full(g.dims());
        let params = MaterialParams {
            ku: 2.0e4,
            easy_axis: Vec3::y(),
            ..Default::default()
        };
        let sys = System::new(g, mask.clone(), params, ExternalField::Uniform(Vec3::new(50.0, 0.0, 10.0))).unwrap();
        let f = randomize_spins(&g, &mask, 1, 21).unwrap();
        let kernel = Arc::new(DemagKernel::build(&g).unwrap());
        let mut fft = FftProvider::new(kernel.clone(), params.ms);
        let t = effective_field(&sys, &f, &mut fft).unwrap();
        let mut residual = FieldMap::zeros(g.dims());
        for idx in 0..g.dims().len() {
            let parts = t.external.as_slice()[idx] + t.exchange.as_slice()[idx] + t.anisotropy.as_slice()[idx];
            assert_eq!(parts + t.demag.as_slice()[idx], t.total.as_slice()[idx]);
            residual.as_mut_slice()[idx] = t.total.as_slice()[idx] - parts;
        }
        let direct = demag_direct(&f, &kernel, params.ms).unwrap();
        assert!(max_relative_error(&residual, &direct) < 1e-10);
    }

    #[test]
    fn single_cell_energy_closed_form() {
        let g = grid(1, 1, 1);
        let mask = Mask::full(g.dims());
        let params = MaterialParams::default();
        let sys = System::new(g, mask.clone(), params, ExternalField::default()).unwrap();
        let f = SpinField::uniform(&mask, Vec3::x()).unwrap();
        let mut fft = FftProvider::for_grid(&g, params.ms).unwrap();
        let e = total_energy(&sys, &f, &mut fft).unwrap();
        // -½ Ms m·(Ms Ω(0) m) V = ½ Ms² (4π/3) V
        let expected = 0.5 * params.ms * params.ms * 4.0 * PI / 3.0 * g.cell_volume_cm3();
        assert!(((e - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn perpendicular_zeeman_energy_vanishes() {
        let g = grid(3, 3, 1);
        let mask = Mask::full(g.dims());
        let params = MaterialParams {
            ax: 0.0,
            ..Default::default()
        };
        let sys = System::new(g, mask.clone(), params, ExternalField::Uniform(Vec3::new(0.0, 500.0, 0.0))).unwrap();
        let f = SpinField::uniform(&mask, Vec3::x()).unwrap();
        assert_eq!(total_energy(&sys, &f, &mut ZeroProvider).unwrap(), 0.0);
    }

    #[test]
    fn system_rejects_empty_mask() {
        let g = grid(2, 2, 1);
        let mask = Mask::from_vec(g.dims(), vec![false; 4]).unwrap();
        assert!(System::new(g, mask, MaterialParams::default(), ExternalField::default()).is_err());
    }
}
