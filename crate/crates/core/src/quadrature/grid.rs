//! Composite tensor grids on the truncation box, graded toward declared
//! nodes, in Cartesian or (about the origin) polar/spherical coordinates.

use std::f64::consts::PI;

use serde::Serialize;

use super::gauss::Rule;
use crate::states::{NodalHint, WaveFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinates {
    Cartesian,
    /// `(r, φ)` in two dimensions
    Polar,
    /// `(r, cos θ, φ)` in three dimensions
    Spherical,
}

#[derive(Clone, Debug)]
pub(crate) struct Axis {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub panels: usize,
}

impl Axis {
    /// Composite rule over consecutive breakpoints.
    pub fn from_breaks(breaks: &[f64], rule: Rule, points: usize) -> Axis {
        let (t, tw) = rule.nodes(points);
        let mut x = Vec::with_capacity(points * breaks.len());
        let mut w = Vec::with_capacity(points * breaks.len());
        let mut panels = 0;
        for p in breaks.windows(2) {
            let (a, b) = (p[0], p[1]);
            if b <= a {
                continue;
            }
            panels += 1;
            let h = 0.5 * (b - a);
            for (ti, wi) in t.iter().zip(&tw) {
                x.push(a + h * (ti + 1.0));
                w.push(h * wi);
            }
        }
        Axis { x, w, panels }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub(crate) coordinates: Coordinates,
    pub(crate) axes: Vec<Axis>,
    len: usize,
}

/// Shape of a grid, for report metadata.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub coordinates: Coordinates,
    pub points_per_axis: Vec<usize>,
    pub panels_per_axis: Vec<usize>,
    pub total_points: usize,
    pub bounds: Vec<[f64; 2]>,
}

impl Grid {
    pub(crate) fn new(coordinates: Coordinates, axes: Vec<Axis>) -> Grid {
        let len = axes.iter().map(|a| a.x.len()).product();
        Grid {
            coordinates,
            axes,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn coordinates(&self) -> Coordinates {
        self.coordinates
    }

    /// Writes the Cartesian position of point `idx` and returns its weight,
    /// Jacobian included.
    pub fn point(&self, mut idx: usize, x: &mut [f64]) -> f64 {
        let mut u = [0.0; 3];
        let mut w = 1.0;
        for (k, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.x.len();
            let i = idx % n;
            idx /= n;
            u[k] = axis.x[i];
            w *= axis.w[i];
        }
        match self.coordinates {
            Coordinates::Cartesian => {
                x.copy_from_slice(&u[..x.len()]);
                w
            }
            Coordinates::Polar => {
                let (r, phi) = (u[0], u[1]);
                x[0] = r * phi.cos();
                x[1] = r * phi.sin();
                w * r
            }
            Coordinates::Spherical => {
                let (r, c, phi) = (u[0], u[1], u[2]);
                let s = (1.0 - c * c).max(0.0).sqrt();
                x[0] = r * s * phi.cos();
                x[1] = r * s * phi.sin();
                x[2] = r * c;
                w * r * r
            }
        }
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            coordinates: self.coordinates,
            points_per_axis: self.axes.iter().map(|a| a.x.len()).collect(),
            panels_per_axis: self.axes.iter().map(|a| a.panels).collect(),
            total_points: self.len,
            bounds: self
                .axes
                .iter()
                .map(|a| {
                    let first = a.x.first().copied().unwrap_or(0.0);
                    let last = a.x.last().copied().unwrap_or(0.0);
                    [first, last]
                })
                .collect(),
        }
    }
}

/// Radius of the neighbourhood around declared nodes inside which the
/// ε-exclusion applies.
pub fn exclusion_radius(psi: &WaveFunction) -> f64 {
    let length = 3.0 / psi.decay_rate();
    let mut rho = 0.25 * length;
    let coords: Vec<Vec<f64>> = match psi.nodal_hint() {
        NodalHint::Empty => return rho,
        NodalHint::Points(p) => p.clone(),
        NodalHint::Hyperplanes(_) => {
            for axis in 0..psi.dim() {
                let c = psi.nodal_hint().axis_coordinates(axis);
                for w in c.windows(2) {
                    rho = rho.min(0.45 * (w[1] - w[0]));
                }
            }
            return rho;
        }
    };
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let d: f64 = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            rho = rho.min(0.45 * d);
        }
    }
    rho
}

/// Offsets `t > 0` from `origin` along `dir` at which `|ψ| = ε_j·max|ψ|`,
/// plus a factor-two grading from the largest of them out to `rho`.
pub(crate) fn node_offsets(
    psi: &WaveFunction,
    origin: &[f64],
    dir: &[f64],
    rho: f64,
    eps: &[f64],
) -> Vec<f64> {
    let at = |t: f64| {
        let x: Vec<f64> = origin.iter().zip(dir).map(|(o, d)| o + t * d).collect();
        psi.amplitude(&x)
    };
    let peak = psi.peak();
    let edge = at(rho);
    let mut out = Vec::new();
    for e in eps {
        let target = e * peak;
        if edge <= target {
            continue;
        }
        let (mut lo, mut hi) = (0.0, rho);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid) > target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    let top = out.iter().copied().fold(0.0, f64::max);
    let floor = if top > 0.0 { top } else { rho * 1e-7 };
    let mut t = rho;
    while t > floor * 1.5 {
        out.push(t);
        t *= 0.5;
    }
    out.push(rho);
    out
}

/// Geometric grading toward a node when exact level offsets are unavailable.
pub(crate) fn geometric_offsets(rho: f64) -> Vec<f64> {
    (0..=8).map(|i| rho * 0.5f64.powi(i)).collect()
}

/// Sorts, clips to `[lo, hi]` and removes near-duplicates.
pub(crate) fn clean_breaks(mut b: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    b.retain(|v| v.is_finite() && *v >= lo && *v <= hi);
    b.push(lo);
    b.push(hi);
    b.sort_by(f64::total_cmp);
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(b.len());
    for v in b {
        if out.last().is_none_or(|l| v - l > 1e-15 * scale) {
            out.push(v);
        }
    }
    out
}

pub(crate) fn uniform_breaks(lo: f64, hi: f64, panels: usize) -> Vec<f64> {
    (0..=panels)
        .map(|i| lo + (hi - lo) * i as f64 / panels as f64)
        .collect()
}

pub(crate) fn angular_axes(dim: usize, rule: Rule, points: usize) -> Vec<Axis> {
    match dim {
        2 => vec![Axis::from_breaks(&[0.0, 2.0 * PI], rule, points)],
        3 => vec![
            Axis::from_breaks(&[-1.0, 1.0], rule, points),
            Axis::from_breaks(&[0.0, 2.0 * PI], rule, points),
        ],
        _ => vec![],
    }
}
