//! Guidance-equation trajectories for stationary states: RK4 paths,
//! equilibrium ensembles, the equivariance statistic and weak-value
//! time series.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{csv_err, guiding_velocity, weak_field};
use crate::operators::DiffOperator;
use crate::quadrature::gauss::gauss_legendre;
use crate::quadrature::{sample_equilibrium, EquilibriumSampler};
use crate::states::WaveFunction;

/// `2π m ℓ²/ħ` with `ℓ` the state's length scale; `2π/ω` for oscillators.
pub fn characteristic_period(psi: &WaveFunction) -> f64 {
    let l = 3.0 / psi.decay_rate();
    2.0 * std::f64::consts::PI * psi.mass() * l * l / psi.hbar()
}

/// Default step: `1e-3` of the characteristic period.
pub fn default_dt(psi: &WaveFunction) -> f64 {
    1e-3 * characteristic_period(psi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Halt {
    pub t: f64,
    pub x: Vec<f64>,
    pub amplitude: f64,
}

/// Positions on a uniform time grid `t_j = j·dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub dt: f64,
    pub points: Vec<Vec<f64>>,
    /// Set when the path came within the node threshold and stopped.
    pub halted: Option<Halt>,
}

impl Path {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points.len()).map(move |j| j as f64 * self.dt)
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("paths hold their start point")
    }
}

fn check_propagatable(psi: &WaveFunction) -> Result<()> {
    if psi.components() != 1 {
        return Err(Error::Unsupported("trajectories of a multi-component state".into()));
    }
    if !psi.is_stationary() {
        return Err(Error::Unsupported(format!(
            "trajectories need a stationary state; {} is not",
            psi.label()
        )));
    }
    Ok(())
}

/// Steps of size at most `dt` that land exactly on `horizon`.
fn step_grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if horizon == 0.0 {
        return Ok((0, dt));
    }
    let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / n as f64;
    if h <= f64::EPSILON * horizon {
        return Err(Error::StepUnderflow(0.0));
    }
    Ok((n, h))
}

enum Step {
    Moved(Vec<f64>),
    Halted(Halt),
}

fn velocity(psi: &WaveFunction, x: &[f64], t: f64) -> std::result::Result<Vec<f64>, Halt> {
    guiding_velocity(psi, x).map_err(|_| Halt {
        t,
        x: x.to_vec(),
        amplitude: psi.amplitude(x),
    })
}

fn rk4(psi: &WaveFunction, x: &[f64], t: f64, h: f64) -> Step {
    let add = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + s * k).collect() };
    let run = || -> std::result::Result<Vec<f64>, Halt> {
        let k1 = velocity(psi, x, t)?;
        let k2 = velocity(psi, &add(x, &k1, 0.5 * h), t + 0.5 * h)?;
        let k3 = velocity(psi, &add(x, &k2, 0.5 * h), t + 0.5 * h)?;
        let k4 = velocity(psi, &add(x, &k3, h), t + h)?;
        let y: Vec<f64> = (0..x.len())
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let a = psi.amplitude(&y);
        if psi.at_node(&y, a) {
            return Err(Halt { t: t + h, x: y, amplitude: a });
        }
        Ok(y)
    };
    match run() {
        Ok(y) => Step::Moved(y),
        Err(h) => Step::Halted(h),
    }
}

/// Classic RK4 path of `dQ/dt = v(Q)` from `x0` over `[0, horizon]`.
///
/// Every step is recorded when `record_every` is 1.
pub fn integrate_trajectory(psi: &WaveFunction, x0: &[f64], horizon: f64, dt: f64) -> Result<Path> {
    integrate_recorded(psi, x0, horizon, dt, 1)
}

fn integrate_recorded(psi: &WaveFunction, x0: &[f64], horizon: f64, dt: f64, record_every: usize) -> Result<Path> {
    check_propagatable(psi)?;
    psi.check_dim(x0)?;
    let a = psi.amplitude(x0);
    if psi.at_node(x0, a) {
        return Err(psi.at_node_error(x0, a));
    }
    let (n, h) = step_grid(horizon, dt)?;
    let mut x = x0.to_vec();
    let mut points = vec![x.clone()];
    let mut halted = None;
    for j in 0..n {
        let t = j as f64 * h;
        match rk4(psi, &x, t, h) {
            Step::Moved(y) => x = y,
            Step::Halted(stop) => {
                halted = Some(stop);
                break;
            }
        }
        if (j + 1) % record_every == 0 {
            points.push(x.clone());
        }
    }
    Ok(Path {
        dt: h * record_every as f64,
        points,
        halted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryEnsemble {
    pub state: String,
    pub paths: Vec<Path>,
    pub seed: u64,
    pub initial: &'static str,
    pub horizon: f64,
    /// Integration step.
    pub dt: f64,
    /// Spacing of the recorded positions.
    pub record_dt: f64,
    pub order: usize,
    pub halted: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleOptions {
    pub horizon: f64,
    pub dt: Option<f64>,
    /// Number of recorded intervals over the horizon.
    pub records: usize,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            horizon: 10.0,
            dt: None,
            records: 10,
            workers: 0,
        }
    }
}

/// `n` equilibrium-sampled trajectories recorded at `records + 1` equally
/// spaced times.
pub fn propagate_ensemble(
    psi: &WaveFunction,
    n: usize,
    sampler: &EquilibriumSampler,
    opts: &EnsembleOptions,
) -> Result<TrajectoryEnsemble> {
    check_propagatable(psi)?;
    if opts.records == 0 {
        return Err(Error::InvalidParameter("records must be at least 1".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(psi));
    let (steps, _) = step_grid(opts.horizon, dt)?;
    // round the step count up to a multiple of the record count
    let per = steps.div_ceil(opts.records).max(1);
    let h = opts.horizon / (per * opts.records) as f64;
    let starts = sample_equilibrium(psi, n, sampler)?;
    let paths = crate::quadrature::with_workers(opts.workers, || {
        starts
            .par_iter()
            .map(|x0| integrate_recorded(psi, x0, opts.horizon, h, per))
            .collect::<Result<Vec<_>>>()
    })?;
    let halted = paths.iter().filter(|p| p.halted.is_some()).count();
    Ok(TrajectoryEnsemble {
        state: psi.label().to_string(),
        paths,
        seed: sampler.seed,
        initial: "equilibrium |ψ|² (random-walk Metropolis)",
        horizon: opts.horizon,
        dt: h,
        record_dt: h * per as f64,
        order: 4,
        halted,
    })
}

/// Edges of `bins` equal-probability bins of the `|ψ|²` marginal along
/// `axis` (interior edges only).
pub fn equal_probability_edges(psi: &WaveFunction, axis: usize, bins: usize) -> Result<Vec<f64>> {
    if axis >= psi.dim() {
        return Err(Error::Dimension {
            expected: psi.dim(),
            got: axis + 1,
        });
    }
    if bins < 2 {
        return Err(Error::InvalidParameter("need at least two bins".into()));
    }
    let half = f64::max(8.0, (1e12f64).ln() / psi.decay_rate()) + psi.reach();
    let dim = psi.dim();
    let (rest_panels, rest_points) = if dim == 3 { (4, 16) } else { (8, 24) };
    let (t, tw) = gauss_legendre(rest_points);
    let mut rest_x = Vec::new();
    let mut rest_w = Vec::new();
    let pw = 2.0 * half / rest_panels as f64;
    for p in 0..rest_panels {
        let a = -half + p as f64 * pw;
        for (ti, wi) in t.iter().zip(&tw) {
            rest_x.push(a + 0.5 * pw * (ti + 1.0));
            rest_w.push(0.5 * pw * wi);
        }
    }
    let marginal = |s: f64| -> f64 {
        let mut x = vec![0.0; dim];
        x[axis] = s;
        let others: Vec<usize> = (0..dim).filter(|k| *k != axis).collect();
        match others.len() {
            0 => psi.density(&x),
            1 => rest_x
                .iter()
                .zip(&rest_w)
                .map(|(y, w)| {
                    x[others[0]] = *y;
                    w * psi.density(&x)
                })
                .sum(),
            _ => {
                let mut acc = 0.0;
                for (y, wy) in rest_x.iter().zip(&rest_w) {
                    x[others[0]] = *y;
                    for (z, wz) in rest_x.iter().zip(&rest_w) {
                        x[others[1]] = *z;
                        acc += wy * wz * psi.density(&x);
                    }
                }
                acc
            }
        }
    };
    let (g, gw) = gauss_legendre(8);
    let piece = |a: f64, b: f64| -> f64 {
        let h = 0.5 * (b - a);
        g.iter().zip(&gw).map(|(ti, wi)| h * wi * marginal(a + h * (ti + 1.0))).sum()
    };
    let cells = 400;
    let cw = 2.0 * half / cells as f64;
    let mut cum = vec![0.0];
    for c in 0..cells {
        let a = -half + c as f64 * cw;
        let v = cum[c] + piece(a, a + cw);
        cum.push(v);
    }
    let total = cum[cells];
    let mut edges = Vec::with_capacity(bins - 1);
    for b in 1..bins {
        let target = total * b as f64 / bins as f64;
        let c = cum.partition_point(|v| *v < target).clamp(1, cells) - 1;
        let a = -half + c as f64 * cw;
        let need = target - cum[c];
        let (mut lo, mut hi) = (a, a + cw);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if piece(a, mid) < need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        edges.push(0.5 * (lo + hi));
    }
    Ok(edges)
}

pub const EQUIVARIANCE_BINS: usize = 20;

/// `3·√(bins/n)`
pub fn equivariance_threshold(n: usize) -> f64 {
    3.0 * (EQUIVARIANCE_BINS as f64 / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivarianceSample {
    pub t: f64,
    pub distance: f64,
    pub counted: usize,
}

/// Total-variation distance between the axis-1 histogram of the
/// ensemble at record `index` and the uniform law over equal-probability
/// bins. Halted paths are left out.
pub fn equivariance_stat(ens: &TrajectoryEnsemble, psi: &WaveFunction, index: usize) -> Result<f64> {
    let edges = equal_probability_edges(psi, 0, EQUIVARIANCE_BINS)?;
    Ok(tv_distance(ens, &edges, index).0)
}

fn tv_distance(ens: &TrajectoryEnsemble, edges: &[f64], index: usize) -> (f64, usize) {
    let bins = edges.len() + 1;
    let mut counts = vec![0usize; bins];
    let mut n = 0;
    for p in &ens.paths {
        if let Some(x) = p.points.get(index) {
            if p.halted.is_some() {
                continue;
            }
            counts[edges.partition_point(|e| *e <= x[0])] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return (f64::NAN, 0);
    }
    let d = 0.5
        * counts
            .iter()
            .map(|c| (*c as f64 / n as f64 - 1.0 / bins as f64).abs())
            .sum::<f64>();
    (d, n)
}

/// The statistic at every recorded time.
pub fn equivariance_series(ens: &TrajectoryEnsemble, psi: &WaveFunction) -> Result<Vec<EquivarianceSample>> {
    let edges = equal_probability_edges(psi, 0, EQUIVARIANCE_BINS)?;
    let records = ens.paths.iter().map(|p| p.points.len()).max().unwrap_or(0);
    Ok((0..records)
        .map(|j| {
            let (distance, counted) = tv_distance(ens, &edges, j);
            EquivarianceSample {
                t: j as f64 * ens.record_dt,
                distance,
                counted,
            }
        })
        .collect())
}

/// `a_w(Q(t_j))` along a path.
pub fn weak_value_series(op: &DiffOperator, psi: &WaveFunction, path: &Path) -> Result<Vec<f64>> {
    path.points.iter().map(|x| weak_field(op, psi, x)).collect()
}

/// CSV with columns `t, x1..xd, id`.
pub fn write_paths_csv<W: Write>(out: W, paths: &[Path], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.push("id".into());
    w.write_record(&header).map_err(csv_err)?;
    for (id, p) in paths.iter().enumerate() {
        for (t, x) in p.times().zip(&p.points) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(x.iter().map(|v| format!("{v:.17e}")));
            row.push(id.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
