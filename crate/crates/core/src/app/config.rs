//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::bridge::{DType, ProviderEndpoint, DEFAULT_TIMEOUT_MS};
use crate::dataforge::{DatasetConfig, MaskStyle};
use crate::error::{Error, Result};
use crate::fields::ExternalField;
use crate::hysteresis::Sweep;
use crate::integrator::SimConfig;
use crate::lattice::{GridSpec, MaterialParams, Vec3};
use crate::vortex::{InitMode, PhaseDiagramConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProviderKind {
    #[default]
    Fft,
    External,
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fft" => Ok(ProviderKind::Fft),
            "external" => Ok(ProviderKind::External),
            _ => Err(Error::Config(format!("provider must be fft or external, got `{s}`"))),
        }
    }
}

impl ProviderKind {
    fn name(self) -> &'static str {
        match self {
            ProviderKind::Fft => "fft",
            ProviderKind::External => "external",
        }
    }
}

/// Starting state for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// Random in-plane direction per block of this many cells.
    Random(usize),
    Uniform(Vec3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub size: usize,
    pub nz: usize,
    pub cell_size_cm: f64,
    pub params: MaterialParams,
    pub sim: SimConfig,
    pub h_ext: Vec3,
    pub init: InitKind,
    pub mask: MaskStyle,
    pub seed: Option<u64>,
    pub provider: ProviderKind,
    pub provider_addr: Option<String>,
    pub provider_timeout_ms: u64,
    pub provider_dtype: DType,
    /// Cool with FFT/LLG down to this many defects before the main run.
    pub init_core: Option<usize>,
    pub layer: usize,
    pub sweep: Sweep,
    pub mh_loop: bool,
    pub phase_sizes: Vec<usize>,
    pub runs_per_size: usize,
    pub data_sizes: Vec<usize>,
    pub sims_per_size: usize,
    pub pairs_per_sim: usize,
    pub mask_fraction: f64,
    pub bench_sizes: Vec<usize>,
    pub bench_reps: usize,
    /// Largest size timed with the O(N²) direct sum.
    pub bench_direct_max: usize,
    pub jobs: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridSpec::film(1);
        Self {
            size: 32,
            nz: 2,
            cell_size_cm: grid.cell_size_cm(),
            params: MaterialParams::default(),
            sim: SimConfig::default(),
            h_ext: Vec3::zeros(),
            init: InitKind::Random(2),
            mask: MaskStyle::Full,
            seed: None,
            provider: ProviderKind::Fft,
            provider_addr: None,
            provider_timeout_ms: DEFAULT_TIMEOUT_MS,
            provider_dtype: DType::F32,
            init_core: None,
            layer: 0,
            sweep: Sweep::default(),
            mh_loop: false,
            phase_sizes: vec![16, 32, 64],
            runs_per_size: 20,
            data_sizes: vec![32, 64, 96],
            sims_per_size: 100,
            pairs_per_sim: 500,
            mask_fraction: 2.0 / 3.0,
            bench_sizes: vec![16, 32, 64, 128, 256, 512, 1024],
            bench_reps: 5,
            bench_direct_max: 64,
            jobs: 1,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_vec3(key: &str, v: &str) -> Result<Vec3> {
    let parts: Vec<f64> = v.split(',').map(|p| parse_num(key, p.trim())).collect::<Result<_>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(Error::Config(format!("`{key}` needs three comma-separated numbers"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_num(key, p))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` must be true or false"))),
    }
}

fn vec3_text(v: Vec3) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

fn list_text(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file body; keys absent from the text keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting without validating the whole.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "size" => self.size = parse_num(key, v)?,
            "nz" => self.nz = parse_num(key, v)?,
            "cell_size_cm" => self.cell_size_cm = parse_num(key, v)?,
            "ms" => self.params.ms = parse_num(key, v)?,
            "ax" => self.params.ax = parse_num(key, v)?,
            "ku" => self.params.ku = parse_num(key, v)?,
            "easy_axis" => self.params.easy_axis = parse_vec3(key, v)?,
            "damping" => self.params.damping = parse_num(key, v)?,
            "gyromagnetic" => self.params.gyromagnetic = parse_num(key, v)?,
            "dt" => self.sim.dt = parse_num(key, v)?,
            "conv_threshold" => self.sim.conv_threshold = parse_num(key, v)?,
            "max_iters" => self.sim.max_iters = parse_num(key, v)?,
            "h_ext" => self.h_ext = parse_vec3(key, v)?,
            "init" => {
                self.init = match v {
                    "random" => InitKind::Random(match self.init {
                        InitKind::Random(b) => b,
                        InitKind::Uniform(_) => 2,
                    }),
                    "uniform" => InitKind::Uniform(match self.init {
                        InitKind::Uniform(d) => d,
                        InitKind::Random(_) => Vec3::x(),
                    }),
                    _ => return Err(Error::Config(format!("init must be random or uniform, got `{v}`"))),
                }
            }
            "init_block" => {
                let b = parse_num(key, v)?;
                if let InitKind::Random(block) = &mut self.init {
                    *block = b;
                } else {
                    return Err(Error::Config("init_block needs init = random".into()));
                }
            }
            "init_dir" => {
                let d = parse_vec3(key, v)?;
                if let InitKind::Uniform(dir) = &mut self.init {
                    *dir = d;
                } else {
                    return Err(Error::Config("init_dir needs init = uniform".into()));
                }
            }
            "mask" => self.mask = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "seed" => self.seed = Some(parse_num(key, v)?),
            "provider" => self.provider = v.parse()?,
            "provider_addr" => self.provider_addr = Some(v.to_string()),
            "provider_timeout_ms" => self.provider_timeout_ms = parse_num(key, v)?,
            "provider_dtype" => {
                self.provider_dtype = match v {
                    "f32" => DType::F32,
                    "f64" => DType::F64,
                    _ => return Err(Error::Config(format!("provider_dtype must be f32 or f64, got `{v}`"))),
                }
            }
            "init_core" => self.init_core = Some(parse_num(key, v)?),
            "layer" => self.layer = parse_num(key, v)?,
            "h_start" => self.sweep.h_start = parse_num(key, v)?,
            "h_end" => self.sweep.h_end = parse_num(key, v)?,
            "h_step" => self.sweep.h_step = parse_num(key, v)?,
            "sweep_axis" => self.sweep.axis = parse_vec3(key, v)?,
            "mh_loop" => self.mh_loop = parse_bool(key, v)?,
            "phase_sizes" => self.phase_sizes = parse_list(key, v)?,
            "runs_per_size" => self.runs_per_size = parse_num(key, v)?,
            "data_sizes" => self.data_sizes = parse_list(key, v)?,
            "sims_per_size" => self.sims_per_size = parse_num(key, v)?,
            "pairs_per_sim" => self.pairs_per_sim = parse_num(key, v)?,
            "mask_fraction" => self.mask_fraction = parse_num(key, v)?,
            "bench_sizes" => self.bench_sizes = parse_list(key, v)?,
            "bench_reps" => self.bench_reps = parse_num(key, v)?,
            "bench_direct_max" => self.bench_direct_max = parse_num(key, v)?,
            "jobs" => self.jobs = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Range checks on every physical and workflow value.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.grid().map_err(cfg_err)?;
        self.params.validate().map_err(cfg_err)?;
        self.sim.validate().map_err(cfg_err)?;
        self.sweep.validate().map_err(cfg_err)?;
        if !self.h_ext.iter().all(|c| c.is_finite()) {
            return bad("h_ext must be finite");
        }
        match self.init {
            InitKind::Random(0) => return bad("init_block must be at least 1"),
            InitKind::Uniform(d) if !(d.norm() > 0.0 && d.norm().is_finite()) => {
                return bad("init_dir must be a non-zero vector")
            }
            _ => {}
        }
        if self.layer >= self.nz {
            return bad("layer must be below nz");
        }
        if self.provider_timeout_ms == 0 {
            return bad("provider_timeout_ms must be positive");
        }
        for (name, list) in [
            ("phase_sizes", &self.phase_sizes),
            ("data_sizes", &self.data_sizes),
            ("bench_sizes", &self.bench_sizes),
        ] {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::Config(format!("{name} must list positive sizes")));
            }
        }
        if self.runs_per_size == 0 || self.pairs_per_sim == 0 || self.bench_reps == 0 || self.jobs == 0 {
            return bad("runs_per_size, pairs_per_sim, bench_reps and jobs must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return bad("mask_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("size", self.size.to_string());
        kv("nz", self.nz.to_string());
        kv("cell_size_cm", self.cell_size_cm.to_string());
        kv("ms", self.params.ms.to_string());
        kv("ax", self.params.ax.to_string());
        kv("ku", self.params.ku.to_string());
        kv("easy_axis", vec3_text(self.params.easy_axis));
        kv("damping", self.params.damping.to_string());
        kv("gyromagnetic", self.params.gyromagnetic.to_string());
        kv("dt", self.sim.dt.to_string());
        kv("conv_threshold", self.sim.conv_threshold.to_string());
        kv("max_iters", self.sim.max_iters.to_string());
        kv("h_ext", vec3_text(self.h_ext));
        match self.init {
            InitKind::Random(b) => {
                kv("init", "random".into());
                kv("init_block", b.to_string());
            }
            InitKind::Uniform(d) => {
                kv("init", "uniform".into());
                kv("init_dir", vec3_text(d));
            }
        }
        kv("mask", self.mask.to_string());
        if let Some(seed) = self.seed {
            kv("seed", seed.to_string());
        }
        kv("provider", self.provider.name().into());
        if let Some(addr) = &self.provider_addr {
            kv("provider_addr", addr.clone());
        }
        kv("provider_timeout_ms", self.provider_timeout_ms.to_string());
        kv(
            "provider_dtype",
            match self.provider_dtype {
                DType::F32 => "f32".into(),
                DType::F64 => "f64".into(),
            },
        );
        if let Some(n) = self.init_core {
            kv("init_core", n.to_string());
        }
        kv("layer", self.layer.to_string());
        kv("h_start", self.sweep.h_start.to_string());
        kv("h_end", self.sweep.h_end.to_string());
        kv("h_step", self.sweep.h_step.to_string());
        kv("sweep_axis", vec3_text(self.sweep.axis));
        kv("mh_loop", self.mh_loop.to_string());
        kv("phase_sizes", list_text(&self.phase_sizes));
        kv("runs_per_size", self.runs_per_size.to_string());
        kv("data_sizes", list_text(&self.data_sizes));
        kv("sims_per_size", self.sims_per_size.to_string());
        kv("pairs_per_sim", self.pairs_per_sim.to_string());
        kv("mask_fraction", self.mask_fraction.to_string());
        kv("bench_sizes", list_text(&self.bench_sizes));
        kv("bench_reps", self.bench_reps.to_string());
        kv("bench_direct_max", self.bench_direct_max.to_string());
        kv("jobs", self.jobs.to_string());
        kv("out", self.out.display().to_string());
        s
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.size, self.size, self.nz, self.cell_size_cm)
    }

    pub fn external_field(&self) -> ExternalField {
        ExternalField::Uniform(self.h_ext)
    }

    /// The external provider endpoint, if an address is configured.
    pub fn endpoint(&self) -> Option<ProviderEndpoint> {
        self.provider_addr.as_ref().map(|addr| ProviderEndpoint {
            addr: addr.clone(),
            timeout_ms: self.provider_timeout_ms,
            dtype: self.provider_dtype,
        })
    }

    pub fn phase_config(&self, seed: u64) -> PhaseDiagramConfig {
        PhaseDiagramConfig {
            sim: self.sim,
            params: self.params,
            init: match self.init {
                InitKind::Random(b) => InitMode::Blocks(b),
                InitKind::Uniform(d) => InitMode::Uniform(d),
            },
            jobs: self.jobs,
            layer: self.layer,
            ..PhaseDiagramConfig::new(self.phase_sizes.clone(), self.runs_per_size, seed)
        }
    }

    pub fn dataset_config(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            sizes: self.data_sizes.clone(),
            sims_per_size: self.sims_per_size,
            pairs_per_sim: self.pairs_per_sim,
            mask_fraction: self.mask_fraction,
            sim: self.sim,
            params: self.params,
            jobs: self.jobs,
            ..DatasetConfig::new(seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn comments_blank_lines_and_overrides() {
        let cfg = RunConfig::parse("# film\n\nsize = 48   # cells\nms = 800\nh_ext = 10, 0, 0\nphase_sizes = 8,16\n").unwrap();
        assert_eq!(cfg.size, 48);
        assert_eq!(cfg.params.ms, 800.0);
        assert_eq!(cfg.h_ext, Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(cfg.phase_sizes, vec![8, 16]);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        for text in [
            "sizee = 3",
            "ms = -1",
            "damping = 0",
            "dt = abc",
            "h_step = 0",
            "layer = 2",
            "mask_fraction = 1.5",
            "easy_axis = 1,1,0",
            "init = spiral",
            "provider = gpu",
            "no equals sign",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err:?}");
        }
    }

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            1usize..200,
            1e1f64..1e4,
            1e-7f64..1e-5,
            prop::option::of(any::<u64>()),
            prop::option::of(0usize..20),
            (-1e3f64..1e3, -1e3f64..1e3),
            any::<bool>(),
            prop::collection::vec(1usize..300, 1..5),
            0.0f64..=1.0,
            prop_oneof![
                (1usize..5).prop_map(InitKind::Random),
                (0.1f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| InitKind::Uniform(Vec3::new(x, y, 0.0)))
            ],
        )
            .prop_map(|(size, ms, ax, seed, init_core, (hx, hy), ext, sizes, frac, init)| RunConfig {
                size,
                params: MaterialParams {
                    ms,
                    ax,
                    ..Default::default()
                },
                seed,
                init_core,
                h_ext: Vec3::new(hx, hy, 0.0),
                provider: if ext { ProviderKind::External } else { ProviderKind::Fft },
                provider_addr: ext.then(|| "127.0.0.1:9000".to_string()),
                phase_sizes: sizes.clone(),
                data_sizes: sizes,
                mask_fraction: frac,
                init,
                ..Default::default()
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_is_a_fixed_point(cfg in arb_config()) {
            let text = cfg.to_text();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
