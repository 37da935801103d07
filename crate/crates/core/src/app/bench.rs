//! Wall-clock scaling of the demag providers.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use crate::bridge::{ExternalProvider, ProviderEndpoint};
use crate::demag::{demag_direct, DemagKernel};
use crate::error::Result;
use crate::fields::{DemagProvider, FftProvider, FieldMap};
use crate::lattice::{randomize_spins, GridSpec, Mask, MaterialParams, SpinField};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub method: &'static str,
    pub median_s: f64,
    pub p10: f64,
    pub p90: f64,
}

/// Linear-interpolated quantile of sorted samples.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn time_reps(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<[f64; 3]> {
    f()?;
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f().map(|_| start.elapsed().as_secs_f64())
        })
        .collect::<Result<_>>()?;
    t.sort_by(f64::total_cmp);
    Ok([quantile(&t, 0.5), quantile(&t, 0.1), quantile(&t, 0.9)])
}

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub direct_max: usize,
    pub external: Option<ProviderEndpoint>,
    pub seed: u64,
}

/// Times one field evaluation per method and size. Direct runs only up to
/// `direct_max`; the external column is skipped with a warning when no
/// provider answers.
pub fn run_bench(plan: &BenchPlan) -> Result<Vec<BenchRow>> {
    let ms = MaterialParams::default().ms;
    let mut external = match &plan.external {
        Some(ep) => match ExternalProvider::connect(ep.clone()) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("external column skipped: {e}");
                None
            }
        },
        None => None,
    };
    let mut rows = Vec::new();
    for &size in &plan.sizes {
        let grid = GridSpec::film(size);
        let spins: SpinField = randomize_spins(&grid, &Mask::full(grid.dims()), 1, plan.seed)?;
        let kernel = Arc::new(DemagKernel::build(&grid)?);
        let mut push = |method, [median_s, p10, p90]: [f64; 3]| {
            log::info!("{method:>8} w={size:<5} median {median_s:.3e} s");
            rows.push(BenchRow {
                size,
                method,
                median_s,
                p10,
                p90,
            })
        };
        if size <= plan.direct_max {
            push("direct", time_reps(plan.reps, || demag_direct(&spins, &kernel, ms).map(drop))?);
        }
        let mut fft = FftProvider::new(Arc::clone(&kernel), ms);
        let mut out = FieldMap::zeros(grid.dims());
        push("fft", time_reps(plan.reps, || fft.demag_into(&spins, &mut out))?);
        if let Some(p) = external.as_mut() {
            match time_reps(plan.reps, || p.demag_into(&spins, &mut out)) {
                Ok(t) => push("external", t),
                Err(e) => {
                    log::warn!("external provider failed at w={size}, column dropped: {e}");
                    external = None;
                }
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln t` against `ln N` (`N` = cell count) over
/// rows of `method` with size in `[min, max]`. Needs two distinct sizes.
pub fn loglog_slope(rows: &[BenchRow], method: &str, min: usize, max: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method && (min..=max).contains(&r.size))
        .map(|r| (((r.size * r.size * 2) as f64).ln(), r.median_s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn write_bench_csv(rows: &[BenchRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "size,method,median_s,p10,p90")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.size, r.method, r.median_s, r.p10, r.p90)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&s, 0.5), 3.0);
        assert!((quantile(&s, 0.1) - 1.4).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn slope_of_a_power_law() {
        let rows: Vec<BenchRow> = [8usize, 16, 32]
            .iter()
            .map(|&size| BenchRow {
                size,
                method: "direct",
                median_s: 1e-9 * ((size * size * 2) as f64).powi(2),
                p10: 0.0,
                p90: 0.0,
            })
            .collect();
        assert!((loglog_slope(&rows, "direct", 0, 100).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&rows, "fft", 0, 100).is_none());
    }

    #[test]
    fn small_bench_runs() {
        let plan = BenchPlan {
            sizes: vec![4, 8],
            reps: 3,
            direct_max: 4,
            external: None,
            seed: 1,
        };
        let rows = run_bench(&plan).unwrap();
        let methods: Vec<_> = rows.iter().map(|r| (r.size, r.method)).collect();
        assert_eq!(methods, vec![(4, "direct"), (4, "fft"), (8, "fft")]);
        assert!(rows.iter().all(|r| r.p10 <= r.median_s && r.median_s <= r.p90));
    }
}
