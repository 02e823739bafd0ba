//! Integration over configuration space: composite Gauss–Legendre (or
//! midpoint) tensor grids on a decay-truncated box, ε-exclusion around
//! declared nodes, and Metropolis sampling of `|ψ|²`.

pub mod gauss;
pub mod grid;
pub mod reduce;
pub mod sampler;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::states::{NodalHint, WaveFunction};

pub use gauss::Rule;
pub use grid::{exclusion_radius, Coordinates, Grid, GridSummary};
pub use sampler::{sample_equilibrium, EquilibriumSampler};

use grid::{angular_axes, clean_breaks, geometric_offsets, node_offsets, uniform_breaks, Axis};

/// Points summed sequentially before the pairwise tree takes over.
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateChoice {
    /// Polar/spherical for rotationally symmetric states, Cartesian otherwise.
    Auto,
    Cartesian,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegrationScheme {
    pub rule: Rule,
    /// Points per panel along each axis.
    pub points: usize,
    /// Uniform panels per axis before node grading.
    pub panels: usize,
    /// Tail mass bound `δ_tail` used to size the box.
    pub tail: f64,
    /// Overrides the decay-derived half-width (before adding the state's reach).
    pub half_width: Option<f64>,
    /// Explicit Cartesian bounds per axis; replaces the box entirely.
    pub bounds: Option<Vec<[f64; 2]>>,
    pub eps0: f64,
    pub eps_ratio: f64,
    pub eps_count: usize,
    pub tol_conv: f64,
    pub coordinates: CoordinateChoice,
    /// Repeat at `2·points` to estimate the error.
    pub error_estimate: bool,
    /// Worker threads; 0 uses the global pool. Never affects results.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for IntegrationScheme {
    fn default() -> Self {
        IntegrationScheme {
            rule: Rule::GaussLegendre,
            points: 32,
            panels: 4,
            tail: 1e-12,
            half_width: None,
            bounds: None,
            eps0: 1e-3,
            eps_ratio: 0.5,
            eps_count: 13,
            tol_conv: 1e-6,
            coordinates: CoordinateChoice::Auto,
            error_estimate: true,
            workers: 0,
        }
    }
}

impl IntegrationScheme {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.points < 16 {
            return bad(format!("quad.points must be at least 16, got {}", self.points));
        }
        if self.panels == 0 {
            return bad("quad.panels must be positive".into());
        }
        if !(self.tail > 0.0 && self.tail <= 1e-10) {
            return bad(format!("quad.tail must lie in (0, 1e-10], got {}", self.tail));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) || !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0) {
            return bad("ε schedule needs 0 < eps0 < 1 and 0 < ratio < 1".into());
        }
        if self.eps_count < 2 {
            return bad("quad.eps_count must be at least 2".into());
        }
        if !(self.tol_conv > 0.0) {
            return bad("quad.tol_conv must be positive".into());
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0 && h.is_finite()) {
                return bad("quad.half_width must be positive".into());
            }
        }
        if let Some(b) = &self.bounds {
            if b.iter().any(|[lo, hi]| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
                return bad("bounds must be finite with lo < hi".into());
            }
        }
        Ok(())
    }

    /// `ε_j = eps0 · ratio^j`, relative to `max|ψ|`.
    pub fn eps_levels(&self) -> Vec<f64> {
        (0..self.eps_count)
            .map(|j| self.eps0 * self.eps_ratio.powi(j as i32))
            .collect()
    }

    /// Box half-width `max(8, ln(1/δ_tail)/α) + reach`.
    pub fn half_width_for(&self, psi: &WaveFunction) -> f64 {
        let base = self
            .half_width
            .unwrap_or_else(|| f64::max(8.0, (1.0 / self.tail).ln() / psi.decay_rate()));
        base + psi.reach()
    }

    pub fn coordinates_for(&self, psi: &WaveFunction) -> Coordinates {
        let radial = self.coordinates == CoordinateChoice::Auto && self.bounds.is_none() && psi.is_radial();
        match (radial, psi.dim()) {
            (true, 2) => Coordinates::Polar,
            (true, 3) => Coordinates::Spherical,
            _ => Coordinates::Cartesian,
        }
    }

    /// Grid for `psi` with `points` nodes per panel.
    pub fn grid(&self, psi: &WaveFunction, points: usize) -> Result<Grid> {
        self.validate()?;
        let dim = psi.dim();
        if let Some(b) = &self.bounds {
            if b.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: b.len(),
                });
            }
        }
        let eps = self.eps_levels();
        let rho = exclusion_radius(psi);
        let half = self.half_width_for(psi);
        let coordinates = self.coordinates_for(psi);
        let hint = psi.nodal_hint();
        let axes = match coordinates {
            Coordinates::Cartesian => (0..dim)
                .map(|axis| {
                    let [lo, hi] = self.bounds.as_ref().map_or([-half, half], |b| b[axis]);
                    let mut breaks = uniform_breaks(lo, hi, self.panels);
                    match hint {
                        NodalHint::Points(nodes) if dim == 1 => {
                            for c in nodes {
                                for sign in [1.0, -1.0] {
                                    for t in node_offsets(psi, c, &[sign], rho, &eps) {
                                        breaks.push(c[0] + sign * t);
                                    }
                                }
                                breaks.push(c[0]);
                            }
                        }
                        _ => {
                            for c in hint.axis_coordinates(axis) {
                                for t in geometric_offsets(rho) {
                                    breaks.push(c - t);
                                    breaks.push(c + t);
                                }
                                breaks.push(c);
                            }
                        }
                    }
                    Axis::from_breaks(&clean_breaks(breaks, lo, hi), self.rule, points)
                })
                .collect(),
            Coordinates::Polar | Coordinates::Spherical => {
                let mut breaks = uniform_breaks(0.0, half, self.panels);
                let origin = vec![0.0; dim];
                let mut dir = vec![0.0; dim];
                dir[0] = 1.0;
                if hint.distance(&origin) < 1e-12 {
                    breaks.extend(node_offsets(psi, &origin, &dir, rho, &eps));
                }
                let mut axes = vec![Axis::from_breaks(&clean_breaks(breaks, 0.0, half), self.rule, points)];
                axes.extend(angular_axes(dim, self.rule, points));
                axes
            }
        };
        Ok(Grid::new(coordinates, axes))
    }
}

/// Behaviour of the ε-excluded sequence `I(ε_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    /// Last two relative increments below `tol_conv`.
    Converged,
    /// Increments still shrinking geometrically but above `tol_conv`.
    Settling,
    /// Increments not shrinking: the integral grows without bound.
    Diverging,
}

impl Convergence {
    pub fn classify(values: &[f64], tol: f64) -> Convergence {
        let n = values.len();
        if n < 2 {
            return Convergence::Converged;
        }
        let inc: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let m = inc.len();
        let ok = |k: usize| inc[k] <= tol * values[k + 1].abs();
        if ok(m - 1) && (m < 2 || ok(m - 2)) {
            return Convergence::Converged;
        }
        let back = m.min(4) - 1;
        if back == 0 {
            return Convergence::Settling;
        }
        let (first, last) = (inc[m - 1 - back], inc[m - 1]);
        if first == 0.0 {
            return Convergence::Diverging;
        }
        let rate = (last / first).powf(1.0 / back as f64);
        if rate < 0.9 {
            Convergence::Settling
        } else {
            Convergence::Diverging
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsSequence {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub status: Convergence,
    /// True when the final two relative increments are below `tol_conv`.
    pub converged: bool,
}

/// Results of integrating several fields over one grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldIntegrals {
    /// Full integral for regular fields, `I(ε_last)` for singular ones.
    pub values: Vec<f64>,
    /// `|I(2·points) − I(points)|`, or `None` when not requested.
    pub errors: Option<Vec<f64>>,
    pub sequences: Vec<Option<EpsSequence>>,
    pub grid: GridSummary,
    pub exclusion_radius: f64,
}

/// Integrates `f` over the grid of `psi`.
///
/// `f(x, out)` fills one value per field and returns `|ψ(x)|²`. Fields
/// flagged `singular` are integrated over `{|ψ| > ε_j·max|ψ|}` near
/// declared nodes for every level of the schedule.
pub fn integrate_fields<F>(
    psi: &WaveFunction,
    scheme: &IntegrationScheme,
    singular: &[bool],
    f: F,
) -> Result<FieldIntegrals>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64> + Sync,
{
    let run = |points: usize| -> Result<(Vec<Vec<f64>>, GridSummary)> {
        let grid = scheme.grid(psi, points)?;
        let sums = with_workers(scheme.workers, || accumulate(psi, scheme, &grid, singular, &f))?;
        Ok((sums, grid.summary()))
    };
    let (buckets, summary) = run(scheme.points)?;
    let (values, sequences) = finish(scheme, singular, &buckets);
    let errors = if scheme.error_estimate {
        let (fine, _) = run(2 * scheme.points)?;
        let (fine_values, _) = finish(scheme, singular, &fine);
        Some(values.iter().zip(&fine_values).map(|(a, b)| (a - b).abs()).collect())
    } else {
        None
    };
    Ok(FieldIntegrals {
        values,
        errors,
        sequences,
        grid: summary,
        exclusion_radius: exclusion_radius(psi),
    })
}

pub(crate) fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

/// Per-field bucket sums: bucket `b` holds points excluded at exactly the
/// first `b` levels.
fn accumulate<F>(
    psi: &WaveFunction,
    scheme: &IntegrationScheme,
    grid: &Grid,
    singular: &[bool],
    f: &F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<f64> + Sync,
{
    let nf = singular.len();
    let levels = scheme.eps_levels();
    let nb = levels.len() + 1;
    let peak = psi.peak();
    let thresholds: Vec<f64> = levels.iter().map(|e| e * peak).collect();
    let rho = exclusion_radius(psi);
    let hint = psi.nodal_hint();
    let has_nodes = !hint.is_empty();
    let dim = psi.dim();
    let chunks = grid.len().div_ceil(CHUNK);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; nf * nb];
            let mut x = vec![0.0; dim];
            let mut out = vec![0.0; nf];
            let end = ((c + 1) * CHUNK).min(grid.len());
            for idx in c * CHUNK..end {
                let w = grid.point(idx, &mut x);
                let density = f(&x, &mut out)?;
                let level = if has_nodes && hint.distance(&x) < rho {
                    let amp = density.sqrt();
                    thresholds.iter().take_while(|t| **t >= amp).count()
                } else {
                    0
                };
                for (k, v) in out.iter().enumerate() {
                    let excluded_everywhere = singular[k] && level == nb - 1;
                    if excluded_everywhere {
                        continue;
                    }
                    if !v.is_finite() {
                        return Err(Error::NonFinite(x.clone()));
                    }
                    acc[k * nb + level] += w * v;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = reduce::pairwise(partials, reduce::add_vec).unwrap_or_else(|| vec![0.0; nf * nb]);
    Ok(total.chunks(nb).map(<[f64]>::to_vec).collect())
}

fn finish(
    scheme: &IntegrationScheme,
    singular: &[bool],
    buckets: &[Vec<f64>],
) -> (Vec<f64>, Vec<Option<EpsSequence>>) {
    let eps = scheme.eps_levels();
    let mut values = Vec::with_capacity(buckets.len());
    let mut sequences = Vec::with_capacity(buckets.len());
    for (b, &sing) in buckets.iter().zip(singular) {
        if sing {
            let seq: Vec<f64> = b[..eps.len()]
                .iter()
                .scan(0.0, |s, v| {
                    *s += v;
                    Some(*s)
                })
                .collect();
            let status = Convergence::classify(&seq, scheme.tol_conv);
            values.push(*seq.last().unwrap());
            sequences.push(Some(EpsSequence {
                eps: eps.clone(),
                values: seq,
                status,
                converged: status == Convergence::Converged,
            }));
        } else {
            values.push(b.iter().sum());
            sequences.push(None);
        }
    }
    (values, sequences)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: Option<f64>,
}

/// `∫ f dx` over the box of `psi`.
pub fn integrate<F>(f: F, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<Integral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let r = integrate_fields(psi, scheme, &[false], |x, out| {
        out[0] = f(x);
        Ok(psi.density(x))
    })?;
    Ok(Integral {
        value: r.values[0],
        error_estimate: r.errors.map(|e| e[0]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsIntegral {
    pub value: f64,
    pub error_estimate: Option<f64>,
    pub sequence: EpsSequence,
}

/// `I(ε_j) = ∫_{|ψ| > ε_j} f dx` over the schedule for a field singular at
/// the declared nodes.
pub fn eps_excluded_integrate<F>(f: F, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<EpsIntegral>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let r = integrate_fields(psi, scheme, &[true], |x, out| {
        let density = psi.density(x);
        out[0] = if psi.at_node(x, density.sqrt()) { f64::NAN } else { f(x) };
        Ok(density)
    })?;
    Ok(EpsIntegral {
        value: r.values[0],
        error_estimate: r.errors.map(|e| e[0]),
        sequence: r.sequences.into_iter().next().flatten().expect("singular field"),
    })
}
