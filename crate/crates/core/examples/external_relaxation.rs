//! Relaxes the same sample twice, once with the in-process FFT provider and
//! once through a local provider server, and compares the trajectories.

use std::sync::Arc;

use neuralmag::bridge::{DType, ExternalProvider, FftHandler, ProviderEndpoint, Server};
use neuralmag::fields::{DemagProvider, ExternalField, FftProvider, System};
use neuralmag::integrator::{SimConfig, Simulation};
use neuralmag::lattice::{randomize_spins, GridSpec, Mask, MaterialParams};

fn trajectory(system: &System, provider: &mut dyn DemagProvider, seed: u64) -> neuralmag::Result<Vec<f64>> {
    let init = randomize_spins(&system.grid, &system.mask, 1, seed)?;
    let cfg = SimConfig {
        max_iters: 3000,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(system, provider, cfg, init)?;
    Ok(sim.run()?.reports.iter().map(|r| r.delta_m_max).collect())
}

fn main() -> neuralmag::Result<()> {
    let grid = GridSpec::film(32);
    let params = MaterialParams::default();
    let system = System::new(grid, Mask::full(grid.dims()), params, ExternalField::default())?;

    let server = Server::bind("127.0.0.1:0")?.spawn(Arc::new(FftHandler::new(grid.cell_size_cm(), params.ms)));
    let mut remote = ExternalProvider::connect(ProviderEndpoint {
        dtype: DType::F32,
        ..ProviderEndpoint::new(server.addr().to_string())
    })?;
    let mut local = FftProvider::for_grid(&grid, params.ms)?;

    let a = trajectory(&system, &mut local, 3)?;
    let b = trajectory(&system, &mut remote, 3)?;
    drop(remote);
    server.shutdown()?;

    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("steps: fft {}, external {}; max |delta_m_max difference| = {worst:.2e}", a.len(), b.len());
    Ok(())
}
