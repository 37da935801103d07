//! Random sample outlines rasterized onto the cell grid.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{GridSpec, Mask};
use crate::rng;

const MAX_ATTEMPTS: usize = 10;
const MIN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskStyle {
    /// Star-shaped 30-vertex polygon around a random center.
    Polygon30,
    /// Convex hull of random points in a random box.
    ConvexHull,
    /// Full square minus a centered square hole.
    SquareHole,
    Full,
}

impl MaskStyle {
    pub const ALL: [MaskStyle; 4] = [
        MaskStyle::Polygon30,
        MaskStyle::ConvexHull,
        MaskStyle::SquareHole,
        MaskStyle::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskStyle::Polygon30 => "polygon30",
            MaskStyle::ConvexHull => "convex_hull",
            MaskStyle::SquareHole => "square_hole",
            MaskStyle::Full => "full",
        }
    }
}

impl fmt::Display for MaskStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskStyle::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mask style `{s}`")))
    }
}

type Pt = (f64, f64);

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Pt, poly: &[Pt]) -> bool {
    let mut inside = false;
    let mut j = poly.len().wrapping_sub(1);
    for (i, &(xi, yi)) in poly.iter().enumerate() {
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Convex hull by Andrew's monotone chain, counterclockwise.
pub fn convex_hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Pt, a: Pt, b: Pt| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<Pt> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Pt>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn rasterize(spec: &GridSpec, inside: impl Fn(Pt) -> bool) -> Result<Mask> {
    let dims = spec.dims();
    let plane: Vec<bool> = (0..dims.ny)
        .flat_map(|j| (0..dims.nx).map(move |i| (i as f64 + 0.5, j as f64 + 0.5)))
        .map(inside)
        .collect();
    Mask::from_plane(dims, &plane)
}

fn polygon30(spec: &GridSpec, rng: &mut impl Rng) -> Vec<Pt> {
    let (w, h) = (spec.nx() as f64, spec.ny() as f64);
    let scale = rng.random_range(0.3..0.5) * w.min(h);
    let cx = rng.random_range(scale..=(w - scale).max(scale));
    let cy = rng.random_range(scale..=(h - scale).max(scale));
    let mut angles: Vec<f64> = (0..30).map(|_| rng.random::<f64>() * TAU).collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let r = scale * rng.random_range(0.6..1.0);
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn hull_points(spec: &GridSpec, rng: &mut impl Rng) -> Vec<Pt> {
    let (w, h) = (spec.nx() as f64, spec.ny() as f64);
    let side = rng.random_range(0.4..=1.0);
    let (bw, bh) = (side * w, side * h);
    let (x0, y0) = (rng.random_range(0.0..=w - bw), rng.random_range(0.0..=h - bh));
    let pts = (0..12)
        .map(|_| (x0 + rng.random::<f64>() * bw, y0 + rng.random::<f64>() * bh))
        .collect();
    convex_hull(pts)
}

/// Draws a mask of the given style. Outlines covering less than 10% of the
/// plane are redrawn, at most 10 times.
pub fn random_shape_mask(spec: &GridSpec, style: MaskStyle, seed: u64) -> Result<Mask> {
    if style == MaskStyle::Full {
        return Ok(Mask::full(spec.dims()));
    }
    let mut rng = rng::rng(seed, &[0x4d41_534b, style as u64]);
    for _ in 0..MAX_ATTEMPTS {
        let mask = match style {
            MaskStyle::Polygon30 => {
                let poly = polygon30(spec, &mut rng);
                rasterize(spec, |p| point_in_polygon(p, &poly))?
            }
            MaskStyle::ConvexHull => {
                let hull = hull_points(spec, &mut rng);
                rasterize(spec, |p| hull.len() >= 3 && point_in_polygon(p, &hull))?
            }
            MaskStyle::SquareHole => {
                let (w, h) = (spec.nx() as f64, spec.ny() as f64);
                let side = rng.random_range(0.2..0.6);
                let (hw, hh) = (side * w / 2.0, side * h / 2.0);
                rasterize(spec, |(x, y)| (x - w / 2.0).abs() > hw || (y - h / 2.0).abs() > hh)?
            }
            MaskStyle::Full => unreachable!(),
        };
        if mask.occupied_fraction() >= MIN_FRACTION {
            return Ok(mask);
        }
    }
    Err(Error::MaskGeneration {
        attempts: MAX_ATTEMPTS,
    })
}
