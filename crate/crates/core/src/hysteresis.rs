//! Quasi-static MH sweeps and loop metrics.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fields::{DemagProvider, ExternalField, System};
use crate::integrator::{run_to_convergence, SimConfig};
use crate::lattice::{SpinField, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhPoint {
    pub h_ext: f64,
    pub mx_avg: f64,
    pub my_avg: f64,
    pub mz_avg: f64,
    pub converged: bool,
    pub iters: usize,
    /// Largest per-cell change from the previous point's state.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhCurve {
    pub points: Vec<MhPoint>,
}

impl MhCurve {
    pub fn fields(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.h_ext)
    }

    pub fn remanence(&self) -> Result<f64> {
        extract_remanence(self)
    }

    pub fn coercivity(&self) -> Result<f64> {
        extract_coercivity(self)
    }
}

/// Field schedule `h_start, h_start - step, ...` down to `h_end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub h_start: f64,
    pub h_end: f64,
    pub h_step: f64,
    pub axis: Vec3,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            h_start: 1000.0,
            h_end: -1000.0,
            h_step: 10.0,
            axis: Vec3::x(),
        }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_step > 0.0 && self.h_step.is_finite()) {
            return Err(Error::InvalidParameter("h_step must be positive".into()));
        }
        if !(self.h_start > self.h_end) {
            return Err(Error::InvalidParameter("h_start must exceed h_end".into()));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("sweep axis must be a unit vector".into()));
        }
        Ok(())
    }

    /// Field values; computed as `h_start - n * h_step` so no error
    /// accumulates across the sweep.
    pub fn schedule(&self) -> Vec<f64> {
        let n = ((self.h_start - self.h_end) / self.h_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.h_start - i as f64 * self.h_step).collect()
    }
}

/// Descending-branch sweep. The state starts saturated along the sweep
/// axis; each point warm-starts from the previous relaxed state, relaxes
/// and records occupied-cell averages. Non-converged points are kept,
/// flagged and logged.
pub fn mh_sweep(
    system: &System,
    provider: &mut dyn DemagProvider,
    config: &SimConfig,
    sweep: &Sweep,
) -> Result<MhCurve> {
    sweep.validate()?;
    let initial = SpinField::uniform(&system.mask, sweep.axis)?;
    Ok(mh_branch(system, provider, config, sweep.axis, &sweep.schedule(), initial)?.0)
}

/// Full loop: the descending sweep followed by the mirrored ascending
/// branch, which continues from the last descending state.
pub fn mh_loop(
    system: &System,
    provider: &mut dyn DemagProvider,
    config: &SimConfig,
    sweep: &Sweep,
) -> Result<(MhCurve, MhCurve)> {
    sweep.validate()?;
    let mut fields = sweep.schedule();
    let initial = SpinField::uniform(&system.mask, sweep.axis)?;
    let (down, state) = mh_branch(system, provider, config, sweep.axis, &fields, initial)?;
    fields.reverse();
    fields.remove(0);
    let (up, _) = mh_branch(system, provider, config, sweep.axis, &fields, state)?;
    Ok((down, up))
}

fn mh_branch(
    system: &System,
    provider: &mut dyn DemagProvider,
    config: &SimConfig,
    axis: Vec3,
    fields: &[f64],
    mut state: SpinField,
) -> Result<(MhCurve, SpinField)> {
    let mut sys = system.clone();
    let mut points = Vec::with_capacity(fields.len());
    for &h in fields {
        sys.ext = ExternalField::Uniform(axis * h);
        let (next, outcome) = run_to_convergence(&state, config, &sys, provider)?;
        if !outcome.converged {
            log::warn!("H = {h} Oe: not converged after {} steps", outcome.iterations());
        }
        let m = next.average(&sys.mask);
        points.push(MhPoint {
            h_ext: h,
            mx_avg: m.x,
            my_avg: m.y,
            mz_avg: m.z,
            converged: outcome.converged,
            iters: outcome.iterations(),
            jump: next.max_difference(&state),
        });
        log::debug!("H = {h} Oe: <m> = ({:.4}, {:.4}, {:.4})", m.x, m.y, m.z);
        state = next;
    }
    Ok((MhCurve { points }, state))
}

/// `⟨m_x⟩` at `H = 0`, read directly or linearly interpolated between the
/// bracketing points.
pub fn extract_remanence(curve: &MhCurve) -> Result<f64> {
    if let Some(p) = curve.points.iter().find(|p| p.h_ext == 0.0) {
        return Ok(p.mx_avg);
    }
    curve
        .points
        .windows(2)
        .find(|w| (w[0].h_ext > 0.0) != (w[1].h_ext > 0.0))
        .map(|w| lerp_at(w[0].h_ext, w[0].mx_avg, w[1].h_ext, w[1].mx_avg, 0.0))
        .ok_or(Error::NoZeroCrossing)
}

/// `|H|` at the first sign change of `⟨m_x⟩` along the curve.
pub fn extract_coercivity(curve: &MhCurve) -> Result<f64> {
    if let Some(first) = curve.points.first() {
        if first.mx_avg == 0.0 {
            return Ok(first.h_ext.abs());
        }
    }
    for w in curve.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.mx_avg == 0.0 {
            return Ok(b.h_ext.abs());
        }
        if (a.mx_avg > 0.0) != (b.mx_avg > 0.0) {
            // Solve for the field where the chord through the two points
            // crosses zero magnetization.
            let h = lerp_at(a.mx_avg, a.h_ext, b.mx_avg, b.h_ext, 0.0);
            return Ok(h.abs());
        }
    }
    Err(Error::NoReversal)
}

fn lerp_at(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhComparison {
    pub delta_hc: f64,
    pub delta_mr_rel: f64,
    pub significant: bool,
}

/// Coercivity difference at or above this many Oe is significant.
pub const HC_THRESHOLD_OE: f64 = 25.0;
/// Remanence difference at or above this fraction of Ms is significant.
pub const MR_THRESHOLD: f64 = 0.03;

/// Remanences are dimensionless `⟨m_x⟩`, so the difference is already a
/// fraction of Ms.
pub fn compare_mh(a: &MhCurve, b: &MhCurve) -> Result<MhComparison> {
    if a.points.len() != b.points.len() || a.fields().zip(b.fields()).any(|(x, y)| x != y) {
        return Err(Error::ScheduleMismatch);
    }
    let delta_hc = (extract_coercivity(a)? - extract_coercivity(b)?).abs();
    let delta_mr_rel = (extract_remanence(a)? - extract_remanence(b)?).abs();
    Ok(MhComparison {
        delta_hc,
        delta_mr_rel,
        significant: is_significant(delta_hc, delta_mr_rel),
    })
}

pub fn is_significant(delta_hc: f64, delta_mr_rel: f64) -> bool {
    delta_hc >= HC_THRESHOLD_OE || delta_mr_rel >= MR_THRESHOLD
}

pub fn write_mh_csv(curve: &MhCurve, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "h_ext_oe,mx_avg,my_avg,mz_avg,converged,iters")?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.h_ext, p.mx_avg, p.my_avg, p.mz_avg, p.converged, p.iters
        )?;
    }
    Ok(())
}

/// One-line `m_r = ..., h_c = ...` summary; unavailable metrics are `nan`.
pub fn summary_line(curve: &MhCurve) -> String {
    let mr = extract_remanence(curve).unwrap_or(f64::NAN);
    let hc = extract_coercivity(curve).unwrap_or(f64::NAN);
    format!("m_r = {mr}, h_c = {hc}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FftProvider, ZeroProvider};
    use crate::lattice::{GridSpec, Mask, MaterialParams};
    use proptest::prelude::*;

    fn curve(pts: &[(f64, f64)]) -> MhCurve {
        MhCurve {
            points: pts
                .iter()
                .map(|&(h, mx)| MhPoint {
                    h_ext: h,
                    mx_avg: mx,
                    my_avg: 0.0,
                    mz_avg: 0.0,
                    converged: true,
                    iters: 1,
                    jump: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn default_schedule_has_201_points() {
        let s = Sweep::default().schedule();
        assert_eq!(s.len(), 201);
        assert_eq!(s[0], 1000.0);
        assert_eq!(s[100], 0.0);
        assert_eq!(*s.last().unwrap(), -1000.0);
        assert!(s.windows(2).all(|w| (w[0] - w[1] - 10.0).abs() < 1e-12));
    }

    #[test]
    fn sweep_validation() {
        assert!(Sweep { h_step: 0.0, ..Default::default() }.validate().is_err());
        assert!(Sweep { h_start: -1000.0, ..Default::default() }.validate().is_err());
        assert!(Sweep { axis: Vec3::new(1.0, 1.0, 0.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn remanence_examples() {
        assert_eq!(extract_remanence(&curve(&[(10.0, 0.9), (0.0, 0.82), (-10.0, 0.7)])).unwrap(), 0.82);
        assert!((extract_remanence(&curve(&[(10.0, 0.9), (-10.0, 0.7)])).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(extract_remanence(&curve(&[(20.0, 1.0), (10.0, 1.0), (0.0, 1.0)])).unwrap(), 1.0);
        assert!(matches!(extract_remanence(&curve(&[(20.0, 1.0), (10.0, 1.0)])), Err(Error::NoZeroCrossing)));
    }

    #[test]
    fn coercivity_examples() {
        let c = curve(&[(0.0, 0.5), (-40.0, 0.1), (-50.0, -0.3)]);
        assert_eq!(extract_coercivity(&c).unwrap(), 42.5);
        let c = curve(&[(0.0, 0.5), (-30.0, 0.0), (-40.0, -0.2)]);
        assert_eq!(extract_coercivity(&c).unwrap(), 30.0);
        let c = curve(&[(0.0, 0.5), (-30.0, 0.4), (-40.0, 0.2)]);
        assert!(matches!(extract_coercivity(&c), Err(Error::NoReversal)));
    }

    #[test]
    fn comparison_thresholds() {
        let base = curve(&[(10.0, 0.9), (0.0, 0.8), (-40.0, 0.1), (-50.0, -0.3)]);
        let same = compare_mh(&base, &base).unwrap();
        assert_eq!((same.delta_hc, same.delta_mr_rel, same.significant), (0.0, 0.0, false));
        assert!(is_significant(30.0, 0.01));
        assert!(!is_significant(10.0, 0.02));
        assert!(is_significant(0.0, 0.03));
        assert!(is_significant(25.0, 0.0));

        let a = curve(&[(0.0, 0.8), (-40.0, 0.1), (-50.0, -0.3), (-60.0, -0.5), (-70.0, -0.6), (-80.0, -0.7)]);
        let b = curve(&[(0.0, 0.81), (-40.0, 0.5), (-50.0, 0.4), (-60.0, 0.3), (-70.0, 0.1), (-80.0, -0.3)]);
        let c = compare_mh(&a, &b).unwrap();
        assert!((c.delta_hc - 30.0).abs() < 1e-9 && (c.delta_mr_rel - 0.01).abs() < 1e-12);
        assert!(c.significant);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_mh_csv(&curve(&[(10.0, 0.5)]), &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "h_ext_oe,mx_avg,my_avg,mz_avg,converged,iters\n10,0.5,0,0,true,1\n"
        );
    }

    #[test]
    fn aligned_state_responds_rigidly() {
        // A field antiparallel to a perfectly aligned spin exerts no torque.
        let g = GridSpec::new(2, 2, 1, 3e-7).unwrap();
        let sys = System::new(g, Mask::full(g.dims()), MaterialParams::default(), ExternalField::default()).unwrap();
        let sweep = Sweep {
            h_start: 100.0,
            h_end: -100.0,
            h_step: 50.0,
            axis: Vec3::x(),
        };
        let c = mh_sweep(&sys, &mut ZeroProvider, &SimConfig::default(), &sweep).unwrap();
        assert_eq!(c.points.len(), 5);
        assert!(c.points[0].mx_avg >= 0.999);
        assert!(c.points.iter().all(|p| p.mx_avg == 1.0 && p.converged));
        assert_eq!(extract_remanence(&c).unwrap(), 1.0);
    }

    #[test]
    fn film_sweep_warm_starts_and_saturates() {
        let g = GridSpec::film(8);
        let params = MaterialParams::default();
        let sys = System::new(g, Mask::full(g.dims()), params, ExternalField::default()).unwrap();
        let mut fft = FftProvider::for_grid(&g, params.ms).unwrap();
        let sweep = Sweep {
            h_start: 1000.0,
            h_end: -1000.0,
            h_step: 250.0,
            // A slight tilt breaks the symmetry of the metastable
            // antiparallel flower state.
            axis: Vec3::new(3f64.to_radians().cos(), 3f64.to_radians().sin(), 0.0),
        };
        let cfg = SimConfig {
            max_iters: 100_000,
            ..Default::default()
        };
        let along = |p: &MhPoint| p.mx_avg * sweep.axis.x + p.my_avg * sweep.axis.y;
        let c = mh_sweep(&sys, &mut fft, &cfg, &sweep).unwrap();
        assert_eq!(c.points.len(), 9);
        assert!(along(&c.points[0]) >= 0.99);
        assert!(along(c.points.last().unwrap()) <= -0.99, "{:?}", c.points);
        let hc = extract_coercivity(&c).unwrap();
        assert!(hc > 0.0 && hc < 1000.0);

        let (down, up) = mh_loop(&sys, &mut fft, &cfg, &sweep).unwrap();
        assert_eq!(down, c);
        assert_eq!(up.points.len(), 8);
        assert_eq!(up.points[0].h_ext, -750.0);
        assert!(along(up.points.last().unwrap()) >= 0.99, "{:?}", up.points);
    }

    proptest! {
        #[test]
        fn coercivity_lies_inside_its_bracket(h0 in -500.0f64..0.0, step in 1.0f64..50.0, a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let c = curve(&[(h0 + step, 1.0), (h0, a), (h0 - step, -b)]);
            let hc = extract_coercivity(&c).unwrap();
            prop_assert!(hc >= h0.abs() - 1e-9 && hc <= (h0 - step).abs() + 1e-9);
        }

        #[test]
        fn schedules_are_strictly_monotone(start in -500.0f64..500.0, span in 1.0f64..2000.0, step in 0.5f64..100.0) {
            let s = Sweep { h_start: start, h_end: start - span, h_step: step, axis: Vec3::x() };
            let sched = s.schedule();
            prop_assert!(sched.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(*sched.last().unwrap() >= start - span - 1e-6);
            prop_assert!(*sched.last().unwrap() - step < start - span + 1e-6);
        }
    }
}
