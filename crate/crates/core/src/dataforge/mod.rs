//! Training-corpus generation: random shapes, fields and spin states are
//! relaxed with the FFT provider and `(m, H_demag)` pairs are sampled from
//! each trajectory into NMAG frame files.

mod frames;
mod masks;

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::demag::DemagKernel;
use crate::error::{Error, Result};
use crate::fields::{ExternalField, FftProvider, System};
use crate::integrator::{SimConfig, Simulation};
use crate::lattice::{randomize_spins, GridSpec, MaterialParams, Vec3};
use crate::rng;

pub use frames::{decode_frames, encode_frames, read_frames, write_frames, FrameMeta, FramePair, Split, CHANNELS};
pub use masks::{convex_hull, point_in_polygon, random_shape_mask, MaskStyle};

/// Every fifteenth simulation goes to validation (14:1).
const SPLIT_PERIOD: usize = 15;

/// Uniform in-plane field with magnitude in [100, 1000] Oe.
pub fn random_external_field(seed: u64) -> ExternalField {
    let mut rng = rng::rng(seed, &[0x4845_5854]);
    let magnitude = rng.random_range(100.0..=1000.0);
    let angle = rng.random::<f64>() * TAU;
    ExternalField::Uniform(Vec3::new(magnitude * angle.cos(), magnitude * angle.sin(), 0.0))
}

pub fn split_for_sim(global_sim: usize) -> Split {
    if global_sim % SPLIT_PERIOD == SPLIT_PERIOD - 1 {
        Split::Validation
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub sizes: Vec<usize>,
    pub sims_per_size: usize,
    pub pairs_per_sim: usize,
    /// Probability that a simulation uses a random non-full shape.
    pub mask_fraction: f64,
    pub seed: u64,
    pub sim: SimConfig,
    pub params: MaterialParams,
    pub jobs: usize,
}

impl DatasetConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            sizes: vec![32, 64, 96],
            sims_per_size: 100,
            pairs_per_sim: 500,
            mask_fraction: 2.0 / 3.0,
            seed,
            sim: SimConfig::default(),
            params: MaterialParams::default(),
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidParameter("sizes must be non-empty and positive".into()));
        }
        if self.pairs_per_sim == 0 {
            return Err(Error::InvalidParameter("pairs_per_sim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::InvalidParameter("mask_fraction must lie in [0, 1]".into()));
        }
        self.sim.validate()?;
        self.params.validate()
    }
}

/// Per-size bookkeeping in a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeEntry {
    pub size: usize,
    pub file: String,
    pub frames: usize,
    pub train: usize,
    pub val: usize,
    pub masked_sims: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub sims_per_size: usize,
    pub pairs_per_sim: usize,
    pub mask_fraction: f64,
    pub entries: Vec<SizeEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

impl DatasetManifest {
    pub fn total_frames(&self) -> usize {
        self.entries.iter().map(|e| e.frames).sum()
    }

    pub fn train_frames(&self) -> usize {
        self.entries.iter().map(|e| e.train).sum()
    }

    pub fn val_frames(&self) -> usize {
        self.entries.iter().map(|e| e.val).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.entries.iter().map(|e| e.size.to_string()).collect();
        let _ = writeln!(s, "format_version = {}", self.version);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "sizes = {}", sizes.join(","));
        let _ = writeln!(s, "sims_per_size = {}", self.sims_per_size);
        let _ = writeln!(s, "pairs_per_sim = {}", self.pairs_per_sim);
        let _ = writeln!(s, "mask_fraction = {}", self.mask_fraction);
        for e in &self.entries {
            let w = e.size;
            let _ = writeln!(s, "file_w{w} = {}", e.file);
            let _ = writeln!(s, "frames_w{w} = {}", e.frames);
            let _ = writeln!(s, "train_w{w} = {}", e.train);
            let _ = writeln!(s, "val_w{w} = {}", e.val);
            let _ = writeln!(s, "masked_sims_w{w} = {}", e.masked_sims);
        }
        let _ = writeln!(s, "train_frames = {}", self.train_frames());
        let _ = writeln!(s, "val_frames = {}", self.val_frames());
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Manifest(m);
        let mut kv = HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line `{line}` is not key = value")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(format!("missing `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Manifest(format!("bad value for `{k}`: {v}")))
        }
        let sizes: Vec<usize> = get("sizes")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| num("sizes", s.trim().to_string()))
            .collect::<Result<_>>()?;
        let entries = sizes
            .into_iter()
            .map(|w| {
                Ok(SizeEntry {
                    size: w,
                    file: get(&format!("file_w{w}"))?,
                    frames: num("frames", get(&format!("frames_w{w}"))?)?,
                    train: num("train", get(&format!("train_w{w}"))?)?,
                    val: num("val", get(&format!("val_w{w}"))?)?,
                    masked_sims: num("masked_sims", get(&format!("masked_sims_w{w}"))?)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Self {
            version: num("format_version", get("format_version")?)?,
            seed: num("seed", get("seed")?)?,
            sims_per_size: num("sims_per_size", get("sims_per_size")?)?,
            pairs_per_sim: num("pairs_per_sim", get("pairs_per_sim")?)?,
            mask_fraction: num("mask_fraction", get("mask_fraction")?)?,
            entries,
        };
        let (train, val): (usize, usize) = (num("train_frames", get("train_frames")?)?, num("val_frames", get("val_frames")?)?);
        if train != m.train_frames() || val != m.val_frames() {
            return Err(bad("split totals disagree with per-size counts".into()));
        }
        Ok(m)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?)
    }

    /// Re-reads every frame file and checks the declared counts.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<()> {
        for e in &self.entries {
            let frames = read_frames(dir.as_ref().join(&e.file))?;
            let val = frames.iter().filter(|f| f.meta.split == Split::Validation).count();
            if frames.len() != e.frames || val != e.val || frames.len() - val != e.train {
                return Err(Error::Manifest(format!(
                    "{}: manifest declares {} frames ({} val), file holds {} ({} val)",
                    e.file,
                    e.frames,
                    e.val,
                    frames.len(),
                    val
                )));
            }
            if let Some(f) = frames.iter().find(|f| f.w() != e.size) {
                return Err(Error::Manifest(format!("{}: frame of size {} in the w={} file", e.file, f.w(), e.size)));
            }
        }
        Ok(())
    }
}

struct SimFrames {
    frames: Vec<FramePair>,
    masked: bool,
}

/// The sample of one simulation: its outline, field and initial state.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub style: MaskStyle,
    pub system: System,
    pub initial: crate::lattice::SpinField,
    pub seed: u64,
}

/// Deterministic per-simulation sample draw.
pub fn sim_setup(cfg: &DatasetConfig, size: usize, sim: usize) -> Result<SimSetup> {
    let seed = rng::derive_seed(cfg.seed, &[size as u64, sim as u64]);
    let mut r = rng::rng(seed, &[0x5349_4d55]);
    let grid = GridSpec::film(size);
    let style = if r.random::<f64>() < cfg.mask_fraction {
        [MaskStyle::Polygon30, MaskStyle::ConvexHull, MaskStyle::SquareHole][r.random_range(0..3)]
    } else {
        MaskStyle::Full
    };
    let mask = random_shape_mask(&grid, style, r.random())?;
    let ext = random_external_field(r.random());
    let initial = randomize_spins(&grid, &mask, 1, r.random())?;
    let system = System::new(grid, mask, cfg.params, ext)?;
    Ok(SimSetup {
        style,
        system,
        initial,
        seed,
    })
}

fn run_sim(cfg: &DatasetConfig, kernel: &Arc<DemagKernel>, size: usize, sim: usize, global_sim: usize) -> Result<SimFrames> {
    let setup = sim_setup(cfg, size, sim)?;
    let mut provider = FftProvider::new(Arc::clone(kernel), cfg.params.ms);
    let mut pick = rng::rng(setup.seed, &[0x5245_5356]);
    let k = cfg.pairs_per_sim;
    let h_ext = match &setup.system.ext {
        ExternalField::Uniform(h) => [h.x, h.y, h.z],
        ExternalField::PerCell(_) => unreachable!("datagen fields are uniform"),
    };
    let meta = |iteration: usize| FrameMeta {
        size,
        sim,
        iteration,
        seed: setup.seed,
        mask: setup.style.to_string(),
        h_ext,
        ms: cfg.params.ms,
        cell_size_cm: setup.system.grid.cell_size_cm(),
        split: split_for_sim(global_sim),
    };

    // Reservoir sampling over the pre-step states of the trajectory.
    let mut reservoir: Vec<FramePair> = Vec::with_capacity(k);
    let mut simulation = Simulation::new(&setup.system, &mut provider, cfg.sim, setup.initial.clone())?;
    let mut converged = false;
    for t in 0..cfg.sim.max_iters {
        let slot = if t < k {
            Some(t)
        } else {
            let j = pick.random_range(0..=t);
            (j < k).then_some(j)
        };
        let before = slot.map(|_| simulation.state().clone());
        let report = simulation.step()?;
        if let (Some(slot), Some(spins)) = (slot, before) {
            let pair = FramePair::new(&spins, simulation.start_demag(), meta(t))?;
            if slot == reservoir.len() {
                reservoir.push(pair);
            } else {
                reservoir[slot] = pair;
            }
        }
        if report.delta_m_max <= cfg.sim.conv_threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("w={size} sim {sim}: not converged after {} steps", cfg.sim.max_iters);
    }
    if reservoir.len() < k {
        log::warn!("w={size} sim {sim}: trajectory has {} states, fewer than {k} pairs", reservoir.len());
    }
    reservoir.sort_by_key(|f| f.meta.iteration);
    Ok(SimFrames {
        frames: reservoir,
        masked: setup.style != MaskStyle::Full,
    })
}

fn file_name(size: usize) -> String {
    format!("frames_w{size}.nmag")
}

/// Runs the corpus simulations across `jobs` workers and writes one NMAG file
/// per size plus `manifest.txt` into `out_dir`.
pub fn generate_dataset(cfg: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    cfg.validate()?;
    let out_dir: PathBuf = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let mut entries = Vec::with_capacity(cfg.sizes.len());
    for (si, &size) in cfg.sizes.iter().enumerate() {
        let kernel = Arc::new(DemagKernel::build(&GridSpec::film(size))?);
        let next = AtomicUsize::new(0);
        let jobs = cfg.jobs.clamp(1, cfg.sims_per_size.max(1));
        let mut results: Vec<(usize, Result<SimFrames>)> = std::thread::scope(|scope| {
            let workers: Vec<_> = (0..jobs)
                .map(|_| {
                    scope.spawn(|| {
                        let mut done = Vec::new();
                        loop {
                            let sim = next.fetch_add(1, Ordering::Relaxed);
                            if sim >= cfg.sims_per_size {
                                break;
                            }
                            let global = si * cfg.sims_per_size + sim;
                            done.push((sim, run_sim(cfg, &kernel, size, sim, global)));
                        }
                        done
                    })
                })
                .collect();
            workers
                .into_iter()
                .flat_map(|w| w.join().expect("dataset worker panicked"))
                .collect()
        });
        results.sort_by_key(|(sim, _)| *sim);
        let mut frames = Vec::new();
        let mut masked_sims = 0;
        for (_, r) in results {
            let r = r?;
            masked_sims += usize::from(r.masked);
            frames.extend(r.frames);
        }
        let val = frames.iter().filter(|f| f.meta.split == Split::Validation).count();
        let file = file_name(size);
        write_frames(&frames, out_dir.join(&file))?;
        log::info!("w={size}: wrote {} frames to {file}", frames.len());
        entries.push(SizeEntry {
            size,
            file,
            frames: frames.len(),
            train: frames.len() - val,
            val,
            masked_sims,
        });
    }
    let manifest = DatasetManifest {
        version: frames::VERSION,
        seed: cfg.seed,
        sims_per_size: cfg.sims_per_size,
        pairs_per_sim: cfg.pairs_per_sim,
        mask_fraction: cfg.mask_fraction,
        entries,
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_text())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demag::{demag_direct, max_relative_error};

    fn tiny(seed: u64) -> DatasetConfig {
        DatasetConfig {
            sizes: vec![8],
            sims_per_size: 3,
            pairs_per_sim: 5,
            sim: SimConfig {
                max_iters: 400,
                ..Default::default()
            },
            ..DatasetConfig::new(seed)
        }
    }

    #[test]
    fn field_draws_stay_in_range() {
        for seed in 0..1000 {
            let ExternalField::Uniform(h) = random_external_field(seed) else { panic!() };
            let m = h.norm();
            assert!((100.0 - 1e-9..=1000.0 + 1e-9).contains(&m));
            assert_eq!(h.z, 0.0);
        }
        assert!(matches!(
            (random_external_field(5), random_external_field(5)),
            (ExternalField::Uniform(a), ExternalField::Uniform(b)) if a == b
        ));
    }

    #[test]
    fn field_angles_are_uniform() {
        let n = 10_000;
        let mut bins = [0usize; 16];
        for seed in 0..n {
            let ExternalField::Uniform(h) = random_external_field(seed) else { panic!() };
            let a = h.y.atan2(h.x).rem_euclid(TAU);
            bins[((a / TAU * 16.0) as usize).min(15)] += 1;
        }
        let expect = n as f64 / 16.0;
        let sigma = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for b in bins {
            assert!((b as f64 - expect).abs() <= 3.0 * sigma, "{bins:?}");
        }
    }

    #[test]
    fn paper_scale_split_bookkeeping() {
        let (sims, pairs) = (300usize, 500usize);
        let val_sims = (0..sims).filter(|&s| split_for_sim(s) == Split::Validation).count();
        assert_eq!(val_sims * pairs, 10_000);
        assert_eq!((sims - val_sims) * pairs, 140_000);
    }

    #[test]
    fn three_sims_five_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(21);
        let m = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(m.total_frames(), 15);
        m.verify(dir.path()).unwrap();
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);

        let frames = read_frames(dir.path().join("frames_w8.nmag")).unwrap();
        let kernel = DemagKernel::build(&GridSpec::film(8)).unwrap();
        for f in &frames {
            let spins = f.spins();
            let norm_ok = spins.as_slice().iter().all(|v| v.norm() == 0.0 || (v.norm() - 1.0).abs() < 1e-6);
            assert!(norm_ok);
            let h = f.hdemag();
            assert!(h.is_finite());
            let direct = demag_direct(&spins, &kernel, f.meta.ms).unwrap();
            assert!(max_relative_error(&h, &direct) < 1e-6);
        }
        let mut iters: Vec<_> = frames.iter().map(|f| (f.meta.sim, f.meta.iteration)).collect();
        iters.dedup();
        assert_eq!(iters.len(), 15);
    }

    #[test]
    fn pipeline_is_deterministic_across_worker_counts() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = tiny(4);
        generate_dataset(&cfg, a.path()).unwrap();
        generate_dataset(&DatasetConfig { jobs: 3, ..cfg }, b.path()).unwrap();
        for name in ["frames_w8.nmag", MANIFEST_FILE] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
    }

    #[test]
    fn short_trajectories_keep_every_state() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            sims_per_size: 1,
            pairs_per_sim: 50,
            sim: SimConfig {
                max_iters: 20,
                ..Default::default()
            },
            ..tiny(2)
        };
        let m = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(m.total_frames(), 20);
    }

    #[test]
    fn mask_fraction_matches_binomial_expectation() {
        let cfg = DatasetConfig {
            mask_fraction: 2.0 / 3.0,
            ..DatasetConfig::new(77)
        };
        let n = 300;
        let masked = (0..n)
            .filter(|&s| sim_setup(&cfg, 16, s).unwrap().style != MaskStyle::Full)
            .count();
        let p = cfg.mask_fraction;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((masked as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{masked}");
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&tiny(9), dir.path()).unwrap();
        let mut wrong = m.clone();
        wrong.entries[0].frames += 1;
        wrong.entries[0].train += 1;
        assert!(wrong.verify(dir.path()).is_err());
        assert!(DatasetManifest::parse("seed = 1\n").is_err());
    }
}
