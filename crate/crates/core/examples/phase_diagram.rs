//! Defect statistics of randomly initialized squares at a few sizes,
//! written as CSV to stdout.

use neuralmag::integrator::SimConfig;
use neuralmag::vortex::{fft_factory, phase_diagram, write_phase_csv, PhaseDiagramConfig};

fn main() -> neuralmag::Result<()> {
    let cfg = PhaseDiagramConfig {
        sim: SimConfig {
            conv_threshold: 1e-4,
            ..SimConfig::default()
        },
        jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..PhaseDiagramConfig::new(vec![8, 16, 24], 6, 2024)
    };
    let rows = phase_diagram(&cfg, &fft_factory())?;
    write_phase_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
