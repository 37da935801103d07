//! Topological analysis of in-plane spin textures.
//!
//! The winding density is the discrete Jacobian of the in-plane map
//! `(i, j) -> (m_x, m_y)` built from centered differences. With the
//! `1/(4π)` prefactor used here a vortex contributes `+1` and an antivortex
//! `-1` to the sum over the layer, so
//! `N_vortex = (Σ|WD| + ΣWD) / 2` and `N_antiv = (Σ|WD| − ΣWD) / 2`.

mod phase;
pub mod texture;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fields::DemagProvider;
use crate::integrator::{SimConfig, Simulation};
use crate::lattice::{Mask, SpinField};

pub use phase::{fft_factory, phase_diagram, write_phase_csv, InitMode, PhaseDiagramConfig, PhaseRow, ProviderFactory};

/// Winding density of one layer, `nx * ny` values with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WindingMap {
    nx: usize,
    ny: usize,
    layer: usize,
    wd: Vec<f64>,
}

impl WindingMap {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.wd[j * self.nx + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.wd
    }

    pub fn sum(&self) -> f64 {
        self.wd.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.wd.iter().map(|w| w.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.wd.iter().fold(0.0, |a, w| a.max(w.abs()))
    }
}

/// Winding density on `layer`. Cells on the grid edge, masked cells and
/// cells with a masked neighbour are zero; grids narrower than 3 cells
/// yield an all-zero map.
pub fn winding_density(field: &SpinField, mask: &Mask, layer: usize) -> Result<WindingMap> {
    let d = field.dims();
    d.check(mask.dims())?;
    if layer >= d.nz {
        return Err(Error::InvalidParameter(format!("layer {layer} outside {d}")));
    }
    let mut wd = vec![0.0; d.nx * d.ny];
    let occ = |i: usize, j: usize| mask.is_occupied(d.index(i, j, layer));
    for j in 1..d.ny.saturating_sub(1) {
        for i in 1..d.nx.saturating_sub(1) {
            if !(occ(i, j) && occ(i + 1, j) && occ(i - 1, j) && occ(i, j + 1) && occ(i, j - 1)) {
                continue;
            }
            let dx = field.get(i + 1, j, layer) - field.get(i - 1, j, layer);
            let dy = field.get(i, j + 1, layer) - field.get(i, j - 1, layer);
            wd[j * d.nx + i] = (dx.x * dy.y - dx.y * dy.x) / (4.0 * PI);
        }
    }
    Ok(WindingMap {
        nx: d.nx,
        ny: d.ny,
        layer,
        wd,
    })
}

/// Defect counts from a winding map, with the raw sums behind them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexCount {
    pub n_vortex: usize,
    pub n_antiv: usize,
    pub wd_sum: f64,
    pub wd_abs: f64,
}

impl VortexCount {
    pub fn total(&self) -> usize {
        self.n_vortex + self.n_antiv
    }

    pub fn raw_vortex(&self) -> f64 {
        (self.wd_abs + self.wd_sum) / 2.0
    }

    pub fn raw_antiv(&self) -> f64 {
        (self.wd_abs - self.wd_sum) / 2.0
    }
}

pub fn count_vortices(wd: &WindingMap) -> VortexCount {
    let (wd_sum, wd_abs) = (wd.sum(), wd.abs_sum());
    let round = |x: f64| x.round().max(0.0) as usize;
    VortexCount {
        n_vortex: round((wd_abs + wd_sum) / 2.0),
        n_antiv: round((wd_abs - wd_sum) / 2.0),
        wd_sum,
        wd_abs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoreKind {
    Vortex,
    AntiVortex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orientation {
    Clockwise,
    CounterClockwise,
    /// Antivortices have no circulation sense.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Core {
    pub i: usize,
    pub j: usize,
    pub kind: CoreKind,
    pub orientation: Orientation,
    pub polarization: Polarization,
}

impl Core {
    fn signature(&self) -> (CoreKind, Orientation, Polarization) {
        (self.kind, self.orientation, self.polarization)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexReport {
    pub count: VortexCount,
    pub cores: Vec<Core>,
}

impl VortexReport {
    pub fn n_vortex(&self) -> usize {
        self.count.n_vortex
    }

    pub fn n_antiv(&self) -> usize {
        self.count.n_antiv
    }
}

/// Core detection knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreDetection {
    /// Candidates need `|WD| >= max(threshold_fraction * max|WD|, threshold_floor)`.
    pub threshold_fraction: f64,
    pub threshold_floor: f64,
    /// Non-maximum suppression radius, also the half-width of the curl patch.
    pub radius: usize,
}

impl Default for CoreDetection {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.1,
            threshold_floor: 1e-3,
            radius: 3,
        }
    }
}

/// Locates cores as thresholded local maxima of `|WD|`, thinned by
/// non-maximum suppression, and classifies each by winding sign,
/// circulation sense and core polarity.
pub fn vortex_properties(field: &SpinField, mask: &Mask, wd: &WindingMap, opts: &CoreDetection) -> Result<VortexReport> {
    let d = field.dims();
    d.check(mask.dims())?;
    if wd.nx != d.nx || wd.ny != d.ny || wd.layer >= d.nz {
        return Err(Error::InvalidParameter("winding map does not match field".into()));
    }
    let k = wd.layer;
    let threshold = (opts.threshold_fraction * wd.max_abs()).max(opts.threshold_floor);
    let mut candidates: Vec<(usize, usize, f64)> = (0..d.ny)
        .flat_map(|j| (0..d.nx).map(move |i| (i, j)))
        .map(|(i, j)| (i, j, wd.get(i, j)))
        .filter(|&(_, _, w)| w.abs() >= threshold)
        .filter(|&(i, j, w)| is_local_max(wd, i, j, w.abs()))
        .collect();
    candidates.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));

    let r = opts.radius;
    let r2 = (r * r) as f64;
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    for &(i, j, _) in &candidates {
        let far = accepted.iter().all(|&(ai, aj)| {
            let (dx, dy) = (ai as f64 - i as f64, aj as f64 - j as f64);
            dx * dx + dy * dy > r2
        });
        if far {
            accepted.push((i, j));
        }
    }

    let patch = |i: usize, j: usize| {
        let (i0, i1) = (i.saturating_sub(r), (i + r).min(d.nx - 1));
        let (j0, j1) = (j.saturating_sub(r), (j + r).min(d.ny - 1));
        (j0..=j1).flat_map(move |y| (i0..=i1).map(move |x| (x, y)))
    };
    let occupied = |i: usize, j: usize| mask.is_occupied(d.index(i, j, k));

    let cores = accepted
        .into_iter()
        .map(|(i, j)| {
            let winding: f64 = patch(i, j).map(|(x, y)| wd.get(x, y)).sum();
            let kind = if winding >= 0.0 {
                CoreKind::Vortex
            } else {
                CoreKind::AntiVortex
            };
            let orientation = match kind {
                CoreKind::AntiVortex => Orientation::None,
                CoreKind::Vortex => {
                    let curl: f64 = patch(i, j)
                        .filter(|&(x, y)| x > 0 && y > 0 && x + 1 < d.nx && y + 1 < d.ny)
                        .filter(|&(x, y)| {
                            occupied(x + 1, y) && occupied(x - 1, y) && occupied(x, y + 1) && occupied(x, y - 1)
                        })
                        .map(|(x, y)| {
                            let dmy_dx = field.get(x + 1, y, k).y - field.get(x - 1, y, k).y;
                            let dmx_dy = field.get(x, y + 1, k).x - field.get(x, y - 1, k).x;
                            dmy_dx - dmx_dy
                        })
                        .sum();
                    if curl >= 0.0 {
                        Orientation::CounterClockwise
                    } else {
                        Orientation::Clockwise
                    }
                }
            };
            let neighbours = [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)];
            let mz: f64 = neighbours
                .iter()
                .filter_map(|&(di, dj)| {
                    let (x, y) = (i as i64 + di, j as i64 + dj);
                    let inside = x >= 0 && y >= 0 && (x as usize) < d.nx && (y as usize) < d.ny;
                    (inside && occupied(x as usize, y as usize)).then(|| field.get(x as usize, y as usize, k).z)
                })
                .sum();
            let polarization = if mz >= 0.0 {
                Polarization::Up
            } else {
                Polarization::Down
            };
            Core {
                i,
                j,
                kind,
                orientation,
                polarization,
            }
        })
        .collect();

    Ok(VortexReport {
        count: count_vortices(wd),
        cores,
    })
}

fn is_local_max(wd: &WindingMap, i: usize, j: usize, a: f64) -> bool {
    let (i0, i1) = (i.saturating_sub(1), (i + 1).min(wd.nx - 1));
    let (j0, j1) = (j.saturating_sub(1), (j + 1).min(wd.ny - 1));
    (j0..=j1).all(|y| (i0..=i1).all(|x| wd.get(x, y).abs() <= a))
}

/// Winding map, counts and cores of `layer` with default detection settings.
pub fn analyze(field: &SpinField, mask: &Mask, layer: usize) -> Result<VortexReport> {
    let wd = winding_density(field, mask, layer)?;
    vortex_properties(field, mask, &wd, &CoreDetection::default())
}

/// Whether two ground states agree on defect counts, and additionally on
/// the multiset of core signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundStateMatch {
    pub number_match: bool,
    pub property_match: bool,
}

pub fn compare_ground_states(a: &VortexReport, b: &VortexReport) -> GroundStateMatch {
    let number_match = a.n_vortex() == b.n_vortex() && a.n_antiv() == b.n_antiv();
    let signatures = |r: &VortexReport| {
        let mut s: Vec<_> = r.cores.iter().map(Core::signature).collect();
        s.sort();
        s
    };
    GroundStateMatch {
        number_match,
        property_match: number_match && signatures(a) == signatures(b),
    }
}

/// Stopping rule for [`cooling_run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoolingOptions {
    /// Stop once `n_vortex + n_antiv <= init_core`.
    pub init_core: usize,
    pub check_every: usize,
    pub layer: usize,
}

impl CoolingOptions {
    pub fn new(init_core: usize) -> Self {
        Self {
            init_core,
            check_every: 50,
            layer: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoolingResult {
    pub state: SpinField,
    pub iterations: usize,
    pub count: VortexCount,
    /// The run converged before the defect count reached the target.
    pub converged: bool,
}

/// Relaxes with the given provider until the defect count drops to
/// `init_core` (checked every `check_every` steps) or the run converges.
/// Running out of iterations first is an error carrying the final counts.
pub fn cooling_run(
    system: &crate::fields::System,
    provider: &mut dyn DemagProvider,
    config: SimConfig,
    initial: SpinField,
    opts: CoolingOptions,
) -> Result<CoolingResult> {
    if opts.check_every == 0 {
        return Err(Error::InvalidParameter("check_every must be at least 1".into()));
    }
    let mut sim = Simulation::new(system, provider, config, initial)?;
    let mut last: Option<VortexCount> = None;
    let mut failure = None;
    let outcome = sim.run_observed(|s, report| {
        if report.iter % opts.check_every != 0 {
            return false;
        }
        match winding_density(s.state(), &s.system().mask, opts.layer) {
            Ok(wd) => {
                let c = count_vortices(&wd);
                last = Some(c);
                c.total() <= opts.init_core
            }
            Err(e) => {
                failure = Some(e);
                true
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let iterations = sim.iterations();
    let state = sim.into_state();
    let count = count_vortices(&winding_density(&state, &system.mask, opts.layer)?);
    let reached = last.is_some_and(|c| c.total() <= opts.init_core);
    if !outcome.converged && !reached {
        return Err(Error::CoolingIncomplete {
            iterations,
            n_vortex: count.n_vortex,
            n_antiv: count.n_antiv,
        });
    }
    Ok(CoolingResult {
        state,
        iterations,
        count,
        converged: outcome.converged,
    })
}
