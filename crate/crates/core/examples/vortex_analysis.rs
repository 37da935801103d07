//! Builds synthetic vortex and antivortex textures and runs the winding
//! density, counting and core classification on them.

use neuralmag::lattice::{Dims, Mask};
use neuralmag::vortex::texture::{antivortex, mirror_x, vortex, vortex_antivortex_pair, CoreProfile};
use neuralmag::vortex::{analyze, winding_density};

fn main() -> neuralmag::Result<()> {
    let dims = Dims::new(64, 64, 2);
    let mask = Mask::full(dims);
    let ccw = vortex(dims, [31.5, 31.5], true, CoreProfile::up(2.0));
    let cases = [
        ("vortex ccw up", ccw.clone()),
        ("mirrored", mirror_x(&ccw)),
        ("antivortex", antivortex(dims, [31.5, 31.5], CoreProfile::down(2.0))),
        ("pair", vortex_antivortex_pair(dims, [20.0, 31.5], [44.0, 31.5])),
    ];
    for (name, field) in cases {
        let wd = winding_density(&field, &mask, 0)?;
        let report = analyze(&field, &mask, 0)?;
        println!("{name:>14}: sum WD = {:+.3}, (N_v, N_av) = ({}, {})", wd.sum(), report.n_vortex(), report.n_antiv());
        for c in &report.cores {
            println!("{:>16}core at ({}, {}): {:?} {:?} {:?}", "", c.i, c.j, c.kind, c.orientation, c.polarization);
        }
    }
    Ok(())
}
