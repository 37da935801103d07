//! Compares the zero-padded FFT convolution with the O(N²) direct sum on a
//! random two-layer film and prints the worst relative deviation.

use std::sync::Arc;
use std::time::Instant;

use neuralmag::demag::{demag_direct, demag_fft, max_relative_error, DemagKernel};
use neuralmag::lattice::{randomize_spins, GridSpec, Mask, MaterialParams};

fn main() -> neuralmag::Result<()> {
    let ms = MaterialParams::default().ms;
    for w in [8, 16, 32] {
        let grid = GridSpec::film(w);
        let spins = randomize_spins(&grid, &Mask::full(grid.dims()), 1, w as u64)?;
        let kernel = Arc::new(DemagKernel::build(&grid)?);
        let t = Instant::now();
        let fft = demag_fft(&spins, &kernel, ms)?;
        let t_fft = t.elapsed();
        let t = Instant::now();
        let direct = demag_direct(&spins, &kernel, ms)?;
        let t_direct = t.elapsed();
        println!(
            "w = {w:>3}: max rel err {:.2e}, fft {t_fft:?}, direct {t_direct:?}",
            max_relative_error(&fft, &direct)
        );
    }
    Ok(())
}
