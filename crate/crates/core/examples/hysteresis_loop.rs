//! Full hysteresis loop of a 12×12×2 square and the extracted remanence and
//! coercivity. The sweep axis is tilted a few degrees off x so the
//! symmetric saturated state can tip over at reversal.

use neuralmag::fields::{ExternalField, FftProvider, System};
use neuralmag::hysteresis::{extract_coercivity, extract_remanence, mh_loop, Sweep};
use neuralmag::integrator::SimConfig;
use neuralmag::lattice::{GridSpec, Mask, MaterialParams, Vec3};

fn main() -> neuralmag::Result<()> {
    let grid = GridSpec::film(12);
    let params = MaterialParams::default();
    let system = System::new(grid, Mask::full(grid.dims()), params, ExternalField::default())?;
    let tilt = 3f64.to_radians();
    let sweep = Sweep {
        h_step: 50.0,
        axis: Vec3::new(tilt.cos(), tilt.sin(), 0.0),
        ..Sweep::default()
    };
    let mut fft = FftProvider::for_grid(&grid, params.ms)?;
    let (down, up) = mh_loop(&system, &mut fft, &SimConfig::default(), &sweep)?;
    for p in down.points.iter().chain(&up.points).step_by(4) {
        println!("{:>7.1} Oe  <m_x> = {:+.4}", p.h_ext, p.mx_avg);
    }
    match (extract_remanence(&down), extract_coercivity(&down)) {
        (Ok(mr), Ok(hc)) => println!("descending branch: m_r = {mr:.4}, h_c = {hc:.1} Oe"),
        (mr, hc) => println!("descending branch: m_r {mr:?}, h_c {hc:?}"),
    }
    Ok(())
}
