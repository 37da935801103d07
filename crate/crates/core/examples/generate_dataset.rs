//! Generates a small training corpus into a temporary directory, then reads
//! the NMAG file back and checks the manifest.

use neuralmag::dataforge::{generate_dataset, read_frames, DatasetConfig, DatasetManifest};
use neuralmag::integrator::SimConfig;

fn main() -> neuralmag::Result<()> {
    let dir = std::env::temp_dir().join("neuralmag-dataset-example");
    let cfg = DatasetConfig {
        sizes: vec![16],
        sims_per_size: 4,
        pairs_per_sim: 10,
        sim: SimConfig {
            max_iters: 2000,
            ..SimConfig::default()
        },
        ..DatasetConfig::new(42)
    };
    let manifest = generate_dataset(&cfg, &dir)?;
    DatasetManifest::load(&dir)?.verify(&dir)?;
    let frames = read_frames(dir.join(&manifest.entries[0].file))?;
    println!("{} frames in {}", frames.len(), dir.display());
    for f in frames.iter().step_by(10) {
        println!(
            "  sim {} iter {:>4} mask {:<11} |H| = {:.0} Oe  split {}",
            f.meta.sim,
            f.meta.iteration,
            f.meta.mask,
            f.meta.h_ext[0].hypot(f.meta.h_ext[1]),
            f.meta.split
        );
    }
    Ok(())
}
