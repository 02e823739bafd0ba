//! Empirical nodal diagnostics: node location, local vanishing order,
//! neighbourhood volume growth and the integrability verdict
//! `k − m + d/2 > 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{eps_excluded_integrate, EpsIntegral, IntegrationScheme};
use crate::states::{NodalHint, WaveFunction};

/// Radii spanned by the vanishing-order fit.
pub const FIT_RADII: (f64, f64) = (1e-4, 1e-2);
const FIT_POINTS: usize = 21;
/// Largest RMS residual (and distance from an integer) for a conclusive fit.
pub const FIT_TOLERANCE: f64 = 0.05;
pub const DEFAULT_RADII: [f64; 3] = [0.1, 0.05, 0.025];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeCell {
    pub center: Vec<f64>,
    /// Edge length of the cell.
    pub width: f64,
    /// A point of the cell at which `ψ` vanishes to working precision.
    pub point: Vec<f64>,
}

/// Default scan resolution (cells per axis) by dimension.
pub fn default_resolution(dim: usize) -> usize {
    match dim {
        1 => 400,
        2 => 200,
        _ => 60,
    }
}

/// Half-width of the node scan box: half the integration box.
pub fn scan_half_width(psi: &WaveFunction) -> f64 {
    0.5 * f64::max(8.0, (1e12f64).ln() / psi.decay_rate()) + psi.reach()
}

fn scalar_only(psi: &WaveFunction) -> Result<()> {
    if psi.components() != 1 {
        return Err(Error::Unsupported("nodal diagnostics of a multi-component state".into()));
    }
    Ok(())
}

/// Grid cells containing a sign change (real states) or a refined minimum
/// of `|ψ|` below the node threshold (complex states).
pub fn locate_nodes(psi: &WaveFunction, resolution: usize) -> Result<Vec<NodeCell>> {
    scalar_only(psi)?;
    if resolution < 4 {
        return Err(Error::Resolution(format!("{resolution} cells per axis")));
    }
    let dim = psi.dim();
    let half = scan_half_width(psi);
    let h = 2.0 * half / resolution as f64;
    if let NodalHint::Points(p) = psi.nodal_hint() {
        let mut min_sep = f64::INFINITY;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let d: f64 = p[i].iter().zip(&p[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                min_sep = min_sep.min(d);
            }
        }
        if 2.0 * h > min_sep {
            return Err(Error::Resolution(format!(
                "cell width {h:.3e} cannot separate nodes {min_sep:.3e} apart"
            )));
        }
    }
    let n = resolution + 1;
    let total = n.pow(dim as u32);
    let coord = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; dim];
        for k in (0..dim).rev() {
            x[k] = -half + (idx % n) as f64 * h;
            idx /= n;
        }
        x
    };
    let values: Vec<num_complex::Complex64> = (0..total).map(|i| psi.value(&coord(i))[0]).collect();
    let corners: Vec<usize> = (0..1usize << dim)
        .map(|mask| (0..dim).map(|k| if mask >> (dim - 1 - k) & 1 == 1 { n.pow(k as u32) } else { 0 }).sum())
        .collect();
    let mut cells = Vec::new();
    let peak = psi.peak();
    for base in 0..total {
        let x0 = coord(base);
        if (0..dim).any(|k| {
            let i = ((base / n.pow((dim - 1 - k) as u32)) % n) as isize;
            i == resolution as isize
        }) {
            continue;
        }
        let center: Vec<f64> = x0.iter().map(|v| v + 0.5 * h).collect();
        if psi.is_real() {
            let vs: Vec<f64> = corners.iter().map(|c| values[base + reorder(*c, dim, n)].re).collect();
            let pos = vs.iter().any(|v| *v > 0.0);
            let neg = vs.iter().any(|v| *v < 0.0);
            let zero = vs.iter().position(|v| *v == 0.0);
            if let Some(z) = zero {
                // a vertex sits exactly on the node: count it once, in the
                // cell for which it is the lower corner
                if z == 0 {
                    cells.push(NodeCell {
                        center,
                        width: h,
                        point: x0.clone(),
                    });
                }
                continue;
            }
            if pos && neg {
                let point = refine_sign_change(psi, &x0, h, &vs);
                cells.push(NodeCell { center, width: h, point });
            }
        } else {
            let a = values[base].norm();
            if a > 1e-2 * peak {
                continue;
            }
            let is_min = neighbours(base, dim, n).into_iter().all(|j| values[j].norm() >= a);
            if !is_min {
                continue;
            }
            let on_edge = (0..dim).any(|k| (base / n.pow((dim - 1 - k) as u32)).is_multiple_of(n));
            if on_edge {
                continue;
            }
            let point = compass_minimize(psi, &x0, h);
            let moved = point.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved <= 2.0 * h && psi.amplitude(&point) < psi.node_threshold() {
                let cell_lo: Vec<f64> = point.iter().map(|p| ((p + half) / h).floor() * h - half).collect();
                let center: Vec<f64> = cell_lo.iter().map(|v| v + 0.5 * h).collect();
                let dup = cells.iter().any(|c: &NodeCell| {
                    c.point.iter().zip(&point).all(|(a, b)| (a - b).abs() < h)
                });
                if !dup {
                    cells.push(NodeCell { center, width: h, point });
                }
            }
        }
    }
    Ok(cells)
}

/// Maps a corner offset expressed with axis-0-fastest strides onto the
/// row-major index layout.
fn reorder(offset: usize, dim: usize, n: usize) -> usize {
    let mut out = 0;
    for k in 0..dim {
        if offset / n.pow(k as u32) % n == 1 {
            out += n.pow((dim - 1 - k) as u32);
        }
    }
    out
}

fn neighbours(idx: usize, dim: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0..dim {
        let stride = n.pow((dim - 1 - k) as u32);
        let i = idx / stride % n;
        if i > 0 {
            out.push(idx - stride);
        }
        if i + 1 < n {
            out.push(idx + stride);
        }
    }
    out
}

fn refine_sign_change(psi: &WaveFunction, x0: &[f64], h: f64, vs: &[f64]) -> Vec<f64> {
    let dim = x0.len();
    let corner = |mask: usize| -> Vec<f64> {
        (0..dim)
            .map(|k| x0[k] + if mask >> (dim - 1 - k) & 1 == 1 { h } else { 0.0 })
            .collect()
    };
    // reorder() maps corner masks with bit (dim-1-k) for axis k
    let s0 = vs[0].signum();
    let other = (1..vs.len()).find(|&m| vs[m].signum() != s0).unwrap_or(0);
    let mut a = corner(0);
    let mut b = corner(other);
    let f = |x: &[f64]| psi.value(x)[0].re;
    let fa = f(&a);
    for _ in 0..200 {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let fm = f(&mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == fa.signum() {
            a = mid;
        } else {
            b = mid;
        }
        let gap: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        if gap <= 1e-16 * (1.0 + a.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            break;
        }
    }
    a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect()
}

fn compass_minimize(psi: &WaveFunction, start: &[f64], h: f64) -> Vec<f64> {
    let mut x = start.to_vec();
    let mut fx = psi.amplitude(&x);
    let mut step = h;
    while step > 1e-16 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        let mut improved = false;
        for k in 0..x.len() {
            for s in [step, -step] {
                let mut y = x.clone();
                y[k] += s;
                let fy = psi.amplitude(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}

/// Fraction of declared nodes found among `cells`.
pub fn recall(psi: &WaveFunction, cells: &[NodeCell]) -> f64 {
    match psi.nodal_hint() {
        NodalHint::Empty => 1.0,
        NodalHint::Points(p) => {
            let found = p
                .iter()
                .filter(|node| {
                    cells.iter().any(|c| {
                        c.center
                            .iter()
                            .zip(node.iter())
                            .all(|(a, b)| (a - b).abs() <= 0.5 * c.width * (1.0 + 1e-9))
                    })
                })
                .count();
            found as f64 / p.len() as f64
        }
        NodalHint::Hyperplanes(hs) => {
            let found = hs
                .iter()
                .filter(|hp| cells.iter().any(|c| (c.point[hp.axis] - hp.offset).abs() <= c.width))
                .count();
            found as f64 / hs.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroOrderFit {
    pub node: Vec<f64>,
    /// Largest fitted slope of `log|ψ(x₀ + r·u)|` against `log r`.
    pub k_fit: f64,
    /// Largest RMS deviation from the fitted lines.
    pub residual: f64,
    pub slopes: Vec<f64>,
    /// Integer order when the fit is a clean power law.
    pub k: Option<u32>,
    pub inconclusive: bool,
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..8)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_4;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let s = 1.0 / 3f64.sqrt();
            (0..8)
                .map(|m| (0..3).map(|k| if m >> k & 1 == 1 { -s } else { s }).collect())
                .collect()
        }
    }
}

/// Least-squares slope and RMS residual.
pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Fits `|ψ(x₀ + r·u)| ~ r^k` over two decades of `r` along fixed rays.
pub fn estimate_zero_order(psi: &WaveFunction, node: &[f64]) -> Result<ZeroOrderFit> {
    scalar_only(psi)?;
    psi.check_dim(node)?;
    let (r0, r1) = FIT_RADII;
    let logs: Vec<f64> = (0..FIT_POINTS)
        .map(|i| r0.ln() + (r1 / r0).ln() * i as f64 / (FIT_POINTS - 1) as f64)
        .collect();
    let mut slopes = Vec::new();
    let mut residual: f64 = 0.0;
    for u in directions(psi.dim()) {
        let ys: Vec<f64> = logs
            .iter()
            .map(|lr| {
                let r = lr.exp();
                let x: Vec<f64> = node.iter().zip(&u).map(|(a, b)| a + r * b).collect();
                psi.amplitude(&x).ln()
            })
            .collect();
        if ys.iter().any(|y| !y.is_finite()) {
            // ray runs inside the nodal set
            continue;
        }
        let (slope, _, rms) = fit_line(&logs, &ys);
        slopes.push(slope);
        residual = residual.max(rms);
    }
    if slopes.is_empty() {
        return Err(Error::Resolution(format!("|ψ| vanishes along every ray from {node:?}")));
    }
    let k_fit = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nearest = k_fit.round();
    let inconclusive = residual > FIT_TOLERANCE || (k_fit - nearest).abs() > FIT_TOLERANCE || nearest < 1.0;
    Ok(ZeroOrderFit {
        node: node.to_vec(),
        k_fit,
        residual,
        slopes,
        k: if inconclusive { None } else { Some(nearest as u32) },
        inconclusive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeGrowth {
    /// `(r, Vol(N_r))`
    pub pairs: Vec<(f64, f64)>,
    /// Fitted growth exponent of `Vol(N_r)` in `r`.
    pub exponent: Option<f64>,
    /// `max_r Vol(N_r)/r`
    pub c_v: f64,
    pub samples: usize,
    /// Relative Monte Carlo error of the smallest neighbourhood.
    pub smallest_relative_error: f64,
}

/// Monte Carlo volume of `{x : dist(x, cells) < r}` over the cells'
/// bounding box enlarged by `max r`. Distances are to cell centres.
pub fn volume_growth(cells: &[NodeCell], dim: usize, radii: &[f64], samples: usize, seed: u64) -> Result<VolumeGrowth> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("radii must be positive".into()));
    }
    if cells.is_empty() {
        return Ok(VolumeGrowth {
            pairs: radii.iter().map(|r| (*r, 0.0)).collect(),
            exponent: None,
            c_v: 0.0,
            samples,
            smallest_relative_error: 0.0,
        });
    }
    if samples == 0 {
        return Err(Error::InsufficientSamples("no samples requested".into()));
    }
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let lo: Vec<f64> = (0..dim)
        .map(|k| cells.iter().map(|c| c.center[k]).fold(f64::INFINITY, f64::min) - r_max)
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|k| cells.iter().map(|c| c.center[k]).fold(f64::NEG_INFINITY, f64::max) + r_max)
        .collect();
    let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; radii.len()];
    let mut x = vec![0.0; dim];
    for _ in 0..samples {
        for k in 0..dim {
            x[k] = rng.gen_range(lo[k]..hi[k]);
        }
        let d = cells
            .iter()
            .map(|c| c.center.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        for (cnt, r) in counts.iter_mut().zip(radii) {
            if d < *r {
                *cnt += 1;
            }
        }
    }
    let pairs: Vec<(f64, f64)> = radii
        .iter()
        .zip(&counts)
        .map(|(r, c)| (*r, box_volume * *c as f64 / samples as f64))
        .collect();
    let (i_min, _) = radii
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc });
    let p = counts[i_min] as f64 / samples as f64;
    let rel = if p > 0.0 { ((1.0 - p) / (samples as f64 * p)).sqrt() } else { f64::INFINITY };
    if rel > 0.2 {
        return Err(Error::InsufficientSamples(format!(
            "relative error {rel:.3} of the smallest neighbourhood exceeds 0.2"
        )));
    }
    let usable: Vec<(f64, f64)> = pairs.iter().copied().filter(|(_, v)| *v > 0.0).collect();
    let exponent = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|(r, _)| r.ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
        Some(fit_line(&xs, &ys).0)
    } else {
        None
    };
    let c_v = pairs.iter().map(|(r, v)| v / r).fold(0.0, f64::max);
    Ok(VolumeGrowth {
        pairs,
        exponent,
        c_v,
        samples,
        smallest_relative_error: rel,
    })
}

/// `k − m + d/2 > 0`
pub fn h6_verdict(k: u32, m: usize, d: usize) -> bool {
    2 * k as i64 - 2 * m as i64 + d as i64 > 0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H6Summary {
    /// Vanishing order used: the largest over the nodes checked.
    pub k: Option<u32>,
    pub m: usize,
    pub d: usize,
    /// `None` for nodeless states (nothing to check) or inconclusive fits.
    pub satisfied: Option<bool>,
    pub nodeless: bool,
}

/// Representative points on the declared nodal set.
pub fn declared_node_points(psi: &WaveFunction) -> Vec<Vec<f64>> {
    match psi.nodal_hint() {
        NodalHint::Empty => vec![],
        NodalHint::Points(p) => p.clone(),
        NodalHint::Hyperplanes(hs) => hs
            .iter()
            .map(|hp| {
                // a point on the plane away from every other plane
                let mut x = vec![0.0; psi.dim()];
                for (k, xk) in x.iter_mut().enumerate() {
                    if k == hp.axis {
                        *xk = hp.offset;
                    } else {
                        let planes = psi.nodal_hint().axis_coordinates(k);
                        let mut t = 0.1234;
                        while planes.iter().any(|p| (p - t).abs() < 0.05) {
                            t += 0.0771;
                        }
                        *xk = t;
                    }
                }
                x
            })
            .collect(),
    }
}

/// Integrability verdict for operator order `m` from fits at the declared nodes.
pub fn h6_for(psi: &WaveFunction, m: usize) -> Result<H6Summary> {
    let nodes = declared_node_points(psi);
    let d = psi.dim();
    if nodes.is_empty() || psi.components() != 1 {
        return Ok(H6Summary {
            k: None,
            m,
            d,
            satisfied: None,
            nodeless: true,
        });
    }
    let mut k = Some(0u32);
    for node in &nodes {
        let fit = estimate_zero_order(psi, node)?;
        k = match (k, fit.k) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
    }
    Ok(H6Summary {
        k,
        m,
        d,
        satisfied: k.map(|k| h6_verdict(k, m, d)),
        nodeless: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H6Entry {
    pub m: usize,
    pub satisfied: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalDiagnostics {
    pub state: String,
    pub resolution: usize,
    pub nodes: Vec<NodeCell>,
    pub recall: f64,
    pub k_fit: Vec<ZeroOrderFit>,
    pub k: Option<u32>,
    pub volume: VolumeGrowth,
    pub cv: f64,
    pub h6: Vec<H6Entry>,
    /// Distances for the volume estimate are measured to cell centres,
    /// accurate to this half cell diagonal.
    pub distance_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalOptions {
    pub resolution: Option<usize>,
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// At most this many nodes get a vanishing-order fit.
    pub max_fits: usize,
}

impl Default for NodalOptions {
    fn default() -> Self {
        NodalOptions {
            resolution: None,
            radii: DEFAULT_RADII.to_vec(),
            samples: 100_000,
            seed: 20240601,
            max_fits: 16,
        }
    }
}

pub fn diagnose(psi: &WaveFunction, orders: &[usize], opts: &NodalOptions) -> Result<NodalDiagnostics> {
    let resolution = opts.resolution.unwrap_or_else(|| default_resolution(psi.dim()));
    let nodes = locate_nodes(psi, resolution)?;
    let stride = nodes.len().div_ceil(opts.max_fits.max(1)).max(1);
    let k_fit = nodes
        .iter()
        .step_by(stride)
        .map(|c| estimate_zero_order(psi, &c.point))
        .collect::<Result<Vec<_>>>()?;
    let k = if k_fit.is_empty() {
        None
    } else {
        k_fit.iter().try_fold(0u32, |acc, f| f.k.map(|k| acc.max(k)))
    };
    let volume = volume_growth(&nodes, psi.dim(), &opts.radii, opts.samples, opts.seed)?;
    let h6 = orders
        .iter()
        .map(|&m| H6Entry {
            m,
            satisfied: k.map(|k| h6_verdict(k, m, psi.dim())),
        })
        .collect();
    let width = nodes.first().map_or(2.0 * scan_half_width(psi) / resolution as f64, |c| c.width);
    Ok(NodalDiagnostics {
        state: psi.label().to_string(),
        resolution,
        recall: recall(psi, &nodes),
        cv: volume.c_v,
        nodes,
        k_fit,
        k,
        volume,
        h6,
        distance_accuracy: 0.5 * width * (psi.dim() as f64).sqrt(),
    })
}

/// ε-excluded integral of `|x − x₀|^p` over the box of `psi`: the model
/// integrand `s^{2(k−m)}` near a node of order `k`.
pub fn synthetic_sequence(psi: &WaveFunction, node: &[f64], power: f64, scheme: &IntegrationScheme) -> Result<EpsIntegral> {
    psi.check_dim(node)?;
    let node = node.to_vec();
    eps_excluded_integrate(
        move |x| {
            let s = x.iter().zip(&node).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            s.powf(power)
        },
        psi,
        scheme,
    )
}
