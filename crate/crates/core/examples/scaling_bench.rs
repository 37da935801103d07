//! Times direct and FFT demag evaluations and fits log-log slopes against
//! the cell count.

use neuralmag::app::bench::{loglog_slope, run_bench, write_bench_csv, BenchPlan};

fn main() -> neuralmag::Result<()> {
    let plan = BenchPlan {
        sizes: vec![16, 32, 64, 128, 256],
        reps: 3,
        direct_max: 64,
        external: None,
        seed: 1,
    };
    let rows = run_bench(&plan)?;
    write_bench_csv(&rows, std::io::stdout().lock())?;
    if let Some(s) = loglog_slope(&rows, "direct", 16, 64) {
        println!("direct slope {s:.2}");
    }
    if let Some(s) = loglog_slope(&rows, "fft", 64, 256) {
        println!("fft slope {s:.2}");
    }
    Ok(())
}
