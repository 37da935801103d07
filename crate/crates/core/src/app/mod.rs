//! The `neuralmag` command line: config loading, the workflows and their
//! file outputs. The binary is a thin wrapper around [`run`].
//!
//! Exit codes: 0 success, 2 not converged, 3 configuration error,
//! 4 provider error, 1 anything else.

pub mod bench;
pub mod config;
pub mod images;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::bridge::{film_width, ExternalProvider, FftHandler, Server, ADDR_ENV};
use crate::dataforge::{generate_dataset, random_shape_mask};
use crate::error::{Error, Result};
use crate::fields::{DemagProvider, FftProvider, System};
use crate::hysteresis::{mh_loop, mh_sweep, summary_line, write_mh_csv, MhCurve};
use crate::integrator::{SimConfig, Simulation};
use crate::lattice::{randomize_spins, GridSpec, MaterialParams, SpinField};
use crate::rng::derive_seed;
use crate::vortex::{
    analyze, count_vortices, fft_factory, phase_diagram, winding_density, write_phase_csv, ProviderFactory, VortexReport,
};

pub use config::{InitKind, ProviderKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_PROVIDER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "neuralmag", version, about = "Finite-difference micromagnetics with a pluggable demag provider")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["fft", "external"])]
    pub provider: Option<String>,
    #[arg(long, global = true, env = ADDR_ENV, value_name = "HOST:PORT")]
    pub provider_addr: Option<String>,
    /// Cool with the FFT provider to at most N defects first.
    #[arg(long, global = true, value_name = "N")]
    pub init_core: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relax one sample; writes steps.csv, images and the vortex report.
    Simulate,
    /// Hysteresis sweep; writes mh.csv and the m_r/h_c summary.
    Mh,
    /// Defect statistics over random starts; writes phase.csv.
    PhaseDiagram,
    /// Training frames; writes NMAG files and manifest.txt.
    Datagen,
    /// Demag timing across sizes; writes bench.csv and bench_slopes.csv.
    Bench,
    /// Serve the FFT demag field over the provider protocol until shut down.
    ServeFft {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Provider(_) => EXIT_PROVIDER,
        Error::CoolingIncomplete { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_FAILURE,
    }
}

/// Parses arguments, runs the chosen workflow and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = ["warn", "info", "debug"][usize::from(cli.common.verbose.min(2))];
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = load_config(&cli.common).and_then(|cfg| dispatch(&cli.command, &cfg));
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(p) = &args.provider {
        cfg.provider = p.parse()?;
    }
    if let Some(a) = &args.provider_addr {
        cfg.provider_addr = Some(a.clone());
    }
    if args.init_core.is_some() {
        cfg.init_core = args.init_core;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<bool> {
    match cmd {
        Command::Simulate => cmd_simulate(cfg),
        Command::Mh => cmd_mh(cfg),
        Command::PhaseDiagram => cmd_phase_diagram(cfg),
        Command::Datagen => cmd_datagen(cfg),
        Command::Bench => cmd_bench(cfg),
        Command::ServeFft { listen } => cmd_serve_fft(cfg, listen),
    }
}

fn resolve_seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or_else(|| {
        let seed = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        log::warn!("no seed given, using {seed}");
        seed
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// The configured provider for `grid`. An external provider is connected
/// here, so an unreachable server fails before any work starts.
pub fn make_provider(cfg: &RunConfig, grid: &GridSpec) -> Result<Box<dyn DemagProvider + Send>> {
    match cfg.provider {
        ProviderKind::Fft => Ok(Box::new(FftProvider::for_grid(grid, cfg.params.ms)?)),
        ProviderKind::External => {
            let ep = cfg.endpoint().ok_or_else(|| {
                Error::Config(format!("--provider external needs --provider-addr or {ADDR_ENV}"))
            })?;
            film_width(grid.dims())?;
            Ok(Box::new(ExternalProvider::connect(ep)?))
        }
    }
}

fn build_system(cfg: &RunConfig, seed: u64) -> Result<System> {
    let grid = cfg.grid()?;
    let mask = random_shape_mask(&grid, cfg.mask, derive_seed(seed, &[1]))?;
    System::new(grid, mask, cfg.params, cfg.external_field())
}

fn initial_state(cfg: &RunConfig, system: &System, seed: u64) -> Result<SpinField> {
    match cfg.init {
        InitKind::Random(block) => randomize_spins(&system.grid, &system.mask, block, derive_seed(seed, &[2])),
        InitKind::Uniform(dir) => SpinField::uniform(&system.mask, dir),
    }
}

/// Runs one phase of `simulate`, appending a CSV row per step. Returns the
/// final state, the step count and whether the run converged.
fn logged_run(
    system: &System,
    provider: &mut dyn DemagProvider,
    config: SimConfig,
    state: SpinField,
    layer: usize,
    offset: usize,
    csv: &mut impl Write,
    mut stop: impl FnMut(usize, usize) -> bool,
) -> Result<(SpinField, usize, bool)> {
    let mut sim = Simulation::new(system, provider, config, state)?;
    let mut failure: Option<Error> = None;
    let outcome = sim.run_observed(|s, r| {
        let count = match winding_density(s.state(), &system.mask, layer) {
            Ok(wd) => count_vortices(&wd),
            Err(e) => {
                failure = Some(e);
                return true;
            }
        };
        let energy = r.energy.map(|e| e.to_string()).unwrap_or_default();
        if let Err(e) = writeln!(csv, "{},{},{},{},{energy}", offset + r.iter, r.delta_m_max, count.n_vortex, count.n_antiv) {
            failure = Some(e.into());
            return true;
        }
        stop(r.iter, count.total())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let steps = sim.iterations();
    Ok((sim.into_state(), steps, outcome.converged))
}

pub fn format_report(report: &VortexReport) -> String {
    let mut s = format!(
        "n_vortex = {}\nn_antiv = {}\nwd_sum = {}\nwd_abs = {}\n",
        report.count.n_vortex, report.count.n_antiv, report.count.wd_sum, report.count.wd_abs
    );
    for c in &report.cores {
        s += &format!("core = {},{},{:?},{:?},{:?}\n", c.i, c.j, c.kind, c.orientation, c.polarization);
    }
    s
}

fn write_state_csv(field: &SpinField, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "i,j,k,mx,my,mz")?;
    let d = field.dims();
    for (idx, m) in field.as_slice().iter().enumerate() {
        let (i, j, k) = d.coords(idx);
        writeln!(out, "{i},{j},{k},{},{},{}", m.x, m.y, m.z)?;
    }
    out.flush()?;
    Ok(())
}

const COOLING_CHECK_EVERY: usize = 50;

fn cmd_simulate(cfg: &RunConfig) -> Result<bool> {
    let seed = resolve_seed(cfg);
    let system = build_system(cfg, seed)?;
    let mut state = initial_state(cfg, &system, seed)?;
    let mut provider = make_provider(cfg, &system.grid)?;
    let sim_cfg = SimConfig {
        record_energy: true,
        ..cfg.sim
    };
    let mut csv = create(&cfg.out, "steps.csv")?;
    writeln!(csv, "iter,delta_m_max,n_vortex,n_antiv,energy")?;

    let mut offset = 0;
    if let Some(target) = cfg.init_core {
        let mut fft = FftProvider::for_grid(&system.grid, cfg.params.ms)?;
        let (cooled, steps, converged) = logged_run(&system, &mut fft, sim_cfg, state, cfg.layer, 0, &mut csv, |iter, n| {
            iter % COOLING_CHECK_EVERY == 0 && n <= target
        })?;
        let count = count_vortices(&winding_density(&cooled, &system.mask, cfg.layer)?);
        if !converged && count.total() > target {
            return Err(Error::CoolingIncomplete {
                iterations: steps,
                n_vortex: count.n_vortex,
                n_antiv: count.n_antiv,
            });
        }
        log::info!("cooled to {} defects in {steps} steps", count.total());
        offset = steps;
        state = cooled;
    }
    let (state, steps, converged) = logged_run(&system, &mut provider, sim_cfg, state, cfg.layer, offset, &mut csv, |_, _| false)?;
    csv.flush()?;
    if !converged {
        log::warn!("not converged after {steps} steps");
    }

    let report = analyze(&state, &system.mask, cfg.layer)?;
    images::write_magnetization(&state, &system.mask, cfg.layer, cfg.out.join("final_m.ppm"))?;
    images::write_winding(&winding_density(&state, &system.mask, cfg.layer)?, cfg.out.join("final_wd.pgm"))?;
    write_state_csv(&state, &cfg.out.join("final_state.csv"))?;
    let text = format_report(&report);
    std::fs::write(cfg.out.join("vortex_report.txt"), &text)?;
    print!("{text}");
    println!("steps = {}\nconverged = {converged}", offset + steps);
    Ok(converged)
}

fn write_curve(curve: &MhCurve, dir: &Path, name: &str) -> Result<()> {
    let mut out = create(dir, name)?;
    write_mh_csv(curve, &mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_mh(cfg: &RunConfig) -> Result<bool> {
    let seed = resolve_seed(cfg);
    let system = build_system(cfg, seed)?;
    let mut provider = make_provider(cfg, &system.grid)?;
    let (down, up) = if cfg.mh_loop {
        let (d, u) = mh_loop(&system, &mut *provider, &cfg.sim, &cfg.sweep)?;
        (d, Some(u))
    } else {
        (mh_sweep(&system, &mut *provider, &cfg.sim, &cfg.sweep)?, None)
    };
    write_curve(&down, &cfg.out, "mh.csv")?;
    let mut converged = down.points.iter().all(|p| p.converged);
    if let Some(up) = &up {
        write_curve(up, &cfg.out, "mh_up.csv")?;
        converged &= up.points.iter().all(|p| p.converged);
    }
    let summary = summary_line(&down);
    std::fs::write(cfg.out.join("mh_summary.txt"), format!("{summary}\n"))?;
    println!("{summary}");
    Ok(converged)
}

fn cmd_phase_diagram(cfg: &RunConfig) -> Result<bool> {
    let seed = resolve_seed(cfg);
    let pcfg = cfg.phase_config(seed);
    let rows = match cfg.provider {
        ProviderKind::Fft => phase_diagram(&pcfg, &fft_factory())?,
        ProviderKind::External => {
            let ep = cfg
                .endpoint()
                .ok_or_else(|| Error::Config(format!("--provider external needs --provider-addr or {ADDR_ENV}")))?;
            drop(ExternalProvider::connect(ep.clone())?);
            let factory = move |grid: &GridSpec, _: &MaterialParams| -> Result<Box<dyn DemagProvider + Send>> {
                film_width(grid.dims())?;
                Ok(Box::new(ExternalProvider::connect(ep.clone())?))
            };
            phase_diagram(&pcfg, &factory as &ProviderFactory)?
        }
    };
    let mut out = create(&cfg.out, "phase.csv")?;
    write_phase_csv(&rows, &mut out)?;
    out.flush()?;
    for r in &rows {
        println!(
            "size {}: p0 = {:.3}, p1 = {:.3}, p2+ = {:.3} over {} runs",
            r.size, r.p_zero, r.p_single, r.p_multi, r.runs
        );
    }
    Ok(rows.iter().all(|r| r.not_converged == 0 && r.failed == 0))
}

fn cmd_datagen(cfg: &RunConfig) -> Result<bool> {
    let seed = resolve_seed(cfg);
    let manifest = generate_dataset(&cfg.dataset_config(seed), &cfg.out)?;
    manifest.verify(&cfg.out)?;
    for e in &manifest.entries {
        println!("{}: {} frames ({} train, {} val)", e.file, e.frames, e.train, e.val);
    }
    Ok(true)
}

fn cmd_bench(cfg: &RunConfig) -> Result<bool> {
    let plan = bench::BenchPlan {
        sizes: cfg.bench_sizes.clone(),
        reps: cfg.bench_reps,
        direct_max: cfg.bench_direct_max,
        external: cfg.endpoint(),
        seed: resolve_seed(cfg),
    };
    let rows = bench::run_bench(&plan)?;
    let mut out = create(&cfg.out, "bench.csv")?;
    bench::write_bench_csv(&rows, &mut out)?;
    out.flush()?;
    let mut slopes = create(&cfg.out, "bench_slopes.csv")?;
    writeln!(slopes, "method,min_size,max_size,slope")?;
    for (method, min, max) in [("direct", 0, cfg.bench_direct_max), ("fft", 128, usize::MAX), ("external", 128, usize::MAX)] {
        let fitted = bench::loglog_slope(&rows, method, min, max)
            .map(|s| (s, min, max))
            .or_else(|| bench::loglog_slope(&rows, method, 0, usize::MAX).map(|s| (s, 0, usize::MAX)));
        if let Some((s, lo, hi)) = fitted {
            let sizes: Vec<usize> = rows
                .iter()
                .filter(|r| r.method == method && (lo..=hi).contains(&r.size))
                .map(|r| r.size)
                .collect();
            let (a, b) = (sizes[0], sizes[sizes.len() - 1]);
            writeln!(slopes, "{method},{a},{b},{s}")?;
            println!("{method}: log-log slope {s:.3} over sizes {a}..{b}");
        }
    }
    slopes.flush()?;
    Ok(true)
}

fn cmd_serve_fft(cfg: &RunConfig, listen: &str) -> Result<bool> {
    let server = Server::bind(listen)?;
    println!("listening on {}", server.local_addr());
    std::io::stdout().flush()?;
    server.run(Arc::new(FftHandler::new(cfg.cell_size_cm, cfg.params.ms)))?;
    Ok(true)
}
