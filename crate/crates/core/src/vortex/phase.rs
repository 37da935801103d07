//! Ground-state statistics over many randomly initialized squares.

use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::demag::DemagKernel;
use crate::error::{Error, Result};
use crate::fields::{DemagProvider, ExternalField, FftProvider, System};
use crate::integrator::{run_to_convergence, SimConfig};
use crate::lattice::{randomize_spins, GridSpec, Mask, MaterialParams, SpinField, Vec3};
use crate::rng::derive_seed;

use super::{count_vortices, winding_density};

/// Creates one demag provider per run; called from worker threads.
pub type ProviderFactory = dyn Fn(&GridSpec, &MaterialParams) -> Result<Box<dyn DemagProvider + Send>> + Sync;

/// FFT providers sharing one kernel per grid size.
pub fn fft_factory() -> impl Fn(&GridSpec, &MaterialParams) -> Result<Box<dyn DemagProvider + Send>> + Sync {
    let cache: Mutex<HashMap<(usize, usize, usize), Arc<DemagKernel>>> = Mutex::new(HashMap::new());
    move |grid, params| {
        let key = (grid.nx(), grid.ny(), grid.nz());
        let kernel = {
            let mut cache = cache.lock().expect("kernel cache poisoned");
            match cache.get(&key) {
                Some(k) => Arc::clone(k),
                None => {
                    let k = Arc::new(DemagKernel::build(grid)?);
                    cache.insert(key, Arc::clone(&k));
                    k
                }
            }
        };
        Ok(Box::new(FftProvider::new(kernel, params.ms)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Random in-plane direction per `n x n x n` block.
    Blocks(usize),
    Uniform(Vec3),
}

#[derive(Debug, Clone)]
pub struct PhaseDiagramConfig {
    pub sizes: Vec<usize>,
    pub runs_per_size: usize,
    pub seed: u64,
    pub sim: SimConfig,
    pub params: MaterialParams,
    pub init: InitMode,
    pub jobs: usize,
    pub layer: usize,
}

impl PhaseDiagramConfig {
    pub fn new(sizes: Vec<usize>, runs_per_size: usize, seed: u64) -> Self {
        Self {
            sizes,
            runs_per_size,
            seed,
            sim: SimConfig::default(),
            params: MaterialParams::default(),
            init: InitMode::Blocks(2),
            jobs: 1,
            layer: 0,
        }
    }
}

/// Tally for one size. Probabilities are over `runs`, the converged runs;
/// they are all zero when no run converged.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub size: usize,
    pub p_zero: f64,
    pub p_single: f64,
    pub p_multi: f64,
    pub runs: usize,
    pub not_converged: usize,
    pub failed: usize,
}

enum RunResult {
    Defects(usize),
    NotConverged,
    Failed(Error),
}

fn one_run(cfg: &PhaseDiagramConfig, factory: &ProviderFactory, size: usize, run: usize) -> RunResult {
    let attempt = || -> Result<Option<usize>> {
        let grid = GridSpec::film(size);
        let mask = Mask::full(grid.dims());
        let system = System::new(grid, mask, cfg.params, ExternalField::default())?;
        let init = match cfg.init {
            InitMode::Blocks(b) => randomize_spins(&grid, &system.mask, b, derive_seed(cfg.seed, &[size as u64, run as u64]))?,
            InitMode::Uniform(dir) => SpinField::uniform(&system.mask, dir)?,
        };
        let mut provider = factory(&grid, &cfg.params)?;
        let (state, outcome) = run_to_convergence(&init, &cfg.sim, &system, &mut *provider)?;
        if !outcome.converged {
            return Ok(None);
        }
        let count = count_vortices(&winding_density(&state, &system.mask, cfg.layer)?);
        Ok(Some(count.total()))
    };
    match attempt() {
        Ok(Some(n)) => RunResult::Defects(n),
        Ok(None) => RunResult::NotConverged,
        Err(e) => RunResult::Failed(e),
    }
}

/// Runs `runs_per_size` relaxations per square size across `jobs` worker
/// threads and tallies the zero / single / multiple defect categories.
pub fn phase_diagram(cfg: &PhaseDiagramConfig, factory: &ProviderFactory) -> Result<Vec<PhaseRow>> {
    if cfg.runs_per_size == 0 {
        return Err(Error::InvalidParameter("runs_per_size must be at least 1".into()));
    }
    if cfg.sizes.is_empty() {
        return Err(Error::InvalidParameter("no sizes given".into()));
    }
    cfg.sim.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.sizes.len())
        .flat_map(|s| (0..cfg.runs_per_size).map(move |r| (s, r)))
        .collect();
    let next = AtomicUsize::new(0);
    let jobs = cfg.jobs.clamp(1, tasks.len());
    let results: Vec<(usize, RunResult)> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..jobs)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let t = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(s, r)) = tasks.get(t) else { break };
                        let size = cfg.sizes[s];
                        let res = one_run(cfg, factory, size, r);
                        if let RunResult::Failed(e) = &res {
                            log::warn!("size {size} run {r} failed: {e}");
                        }
                        done.push((s, res));
                    }
                    done
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("phase-diagram worker panicked"))
            .collect()
    });

    let mut rows: Vec<PhaseRow> = cfg
        .sizes
        .iter()
        .map(|&size| PhaseRow {
            size,
            p_zero: 0.0,
            p_single: 0.0,
            p_multi: 0.0,
            runs: 0,
            not_converged: 0,
            failed: 0,
        })
        .collect();
    let mut tallies = vec![[0usize; 3]; cfg.sizes.len()];
    for (s, res) in results {
        match res {
            RunResult::Defects(n) => tallies[s][n.min(2)] += 1,
            RunResult::NotConverged => rows[s].not_converged += 1,
            RunResult::Failed(_) => rows[s].failed += 1,
        }
    }
    for (row, t) in rows.iter_mut().zip(&tallies) {
        row.runs = t.iter().sum();
        if row.runs > 0 {
            let n = row.runs as f64;
            row.p_zero = t[0] as f64 / n;
            row.p_single = t[1] as f64 / n;
            row.p_multi = t[2] as f64 / n;
        }
        if row.not_converged + row.failed > 0 {
            log::warn!(
                "size {}: {} runs not converged, {} failed; excluded from tallies",
                row.size,
                row.not_converged,
                row.failed
            );
        }
    }
    Ok(rows)
}

pub fn write_phase_csv(rows: &[PhaseRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "size,p_zero,p_single,p_multi,runs")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.size, r.p_zero, r.p_single, r.p_multi, r.runs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_start_has_no_defects() {
        let mut cfg = PhaseDiagramConfig::new(vec![8], 1, 0);
        cfg.init = InitMode::Uniform(Vec3::x());
        let rows = phase_diagram(&cfg, &fft_factory()).unwrap();
        assert_eq!(rows[0].runs, 1);
        assert_eq!(rows[0].p_zero, 1.0);
    }

    #[test]
    fn probabilities_sum_to_one_and_are_thread_independent() {
        let mut cfg = PhaseDiagramConfig::new(vec![6, 8], 2, 5);
        cfg.sim.conv_threshold = 1e-4;
        cfg.sim.max_iters = 50_000;
        let serial = phase_diagram(&cfg, &fft_factory()).unwrap();
        cfg.jobs = 2;
        let parallel = phase_diagram(&cfg, &fft_factory()).unwrap();
        assert_eq!(serial, parallel);
        for r in &serial {
            assert!(r.runs > 0);
            assert!((r.p_zero + r.p_single + r.p_multi - 1.0).abs() < 1e-12);
        }
        let mut csv = Vec::new();
        write_phase_csv(&serial, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("size,p_zero,p_single,p_multi,runs\n6,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn non_converged_runs_are_excluded() {
        let mut cfg = PhaseDiagramConfig::new(vec![8], 2, 1);
        cfg.sim.max_iters = 3;
        let rows = phase_diagram(&cfg, &fft_factory()).unwrap();
        assert_eq!((rows[0].runs, rows[0].not_converged), (0, 2));
        assert_eq!(rows[0].p_zero + rows[0].p_single + rows[0].p_multi, 0.0);
    }

    #[test]
    fn rejects_zero_runs() {
        let cfg = PhaseDiagramConfig::new(vec![8], 0, 1);
        assert!(phase_diagram(&cfg, &fft_factory()).is_err());
    }
}
