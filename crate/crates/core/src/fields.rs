//! Pointwise Bohmian fields: weak actual values, the imaginary-part
//! density, quantum potential, guiding velocity, local energy and the
//! pointwise variance identity.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jet::MultiIndex;
use crate::operators::{check_compatible, DiffOperator};
use crate::potential::Potential;
use crate::states::{Derivatives, WaveFunction};

/// Everything the decomposition needs from `ψ` and `Âψ` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTerms {
    /// `|ψ|²`
    pub density: f64,
    /// `ψ†(Âψ)`
    pub inner: Complex64,
    /// `|Âψ|²`
    pub apsi_norm2: f64,
    /// `|ψ|²|Âψ|² − |ψ†Âψ|²`, accumulated as a Lagrange sum so that it is
    /// exactly zero for one component.
    pub gap: f64,
}

impl LocalTerms {
    /// `Re[ψ†Âψ]² / |ψ|²`, taken as zero where `|ψ|²` underflows.
    pub fn real_ratio(&self) -> f64 {
        ratio(self.inner.re * self.inner.re, self.density)
    }

    /// `Im[ψ†Âψ]² / |ψ|²`
    pub fn imag_ratio(&self) -> f64 {
        ratio(self.inner.im * self.inner.im, self.density)
    }

    /// `(|ψ|²|Âψ|² − |ψ†Âψ|²) / |ψ|²`
    pub fn deficit_density(&self) -> f64 {
        ratio(self.gap, self.density)
    }
}

fn ratio(num: f64, density: f64) -> f64 {
    // Cauchy–Schwarz bounds each ratio by |Âψ|², so a vanishing density
    // contributes nothing.
    if density == 0.0 {
        0.0
    } else {
        num / density
    }
}

/// Hermitian form `u†Mv` with `M` optional (identity when absent).
fn form(u: &[Complex64], m: Option<&crate::operators::Matrix2>, v: &[Complex64]) -> Complex64 {
    match m {
        None => u.iter().zip(v).map(|(a, b)| a.conj() * b).sum(),
        Some(m) => {
            let mv0 = m[0][0] * v[0] + m[0][1] * v[1];
            let mv1 = m[1][0] * v[0] + m[1][1] * v[1];
            u[0].conj() * mv0 + u[1].conj() * mv1
        }
    }
}

/// `u†Mu`, real by construction.
fn real_form(u: &[Complex64], m: Option<&crate::operators::Matrix2>) -> f64 {
    match m {
        None => u.iter().map(|c| c.norm_sqr()).sum(),
        Some(m) => {
            m[0][0].re * u[0].norm_sqr()
                + m[1][1].re * u[1].norm_sqr()
                + 2.0 * (u[0].conj() * m[0][1] * u[1]).re
        }
    }
}

/// Local products from precomputed partials.
pub fn local_terms(op: &DiffOperator, d: &Derivatives, x: &[f64]) -> Result<LocalTerms> {
    let apsi = op.apply_to(d, x)?;
    let psi = d.value();
    let density: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    let hbar = op.units().hbar;
    let m = op.matrix();
    let mut inner = Complex64::new(0.0, 0.0);
    for t in op.terms() {
        if t.alpha == MultiIndex::ZERO {
            // multiplication terms contribute a real number exactly
            inner.re += t.coefficient_at(x) * real_form(&psi, m);
        } else {
            let partial: Vec<Complex64> = (0..psi.len())
                .map(|c| d.partial(c, t.alpha).expect("order checked"))
                .collect();
            inner += t.derivative_coefficient(x, hbar) * form(&psi, m, &partial);
        }
    }
    let apsi_norm2 = apsi.iter().map(|c| c.norm_sqr()).sum();
    let mut gap = 0.0;
    for i in 0..psi.len() {
        for j in i + 1..psi.len() {
            gap += (psi[i] * apsi[j] - psi[j] * apsi[i]).norm_sqr();
        }
    }
    Ok(LocalTerms {
        density,
        inner,
        apsi_norm2,
        gap,
    })
}

fn terms_at(op: &DiffOperator, psi: &WaveFunction, x: &[f64]) -> Result<LocalTerms> {
    check_compatible(op, psi)?;
    let d = psi.derivatives(x, op.order())?;
    local_terms(op, &d, x)
}

fn require_off_node(psi: &WaveFunction, x: &[f64], density: f64) -> Result<()> {
    let amplitude = density.sqrt();
    if psi.at_node(x, amplitude) {
        Err(psi.at_node_error(x, amplitude))
    } else {
        Ok(())
    }
}

fn require_scalar(psi: &WaveFunction, what: &str) -> Result<()> {
    if psi.components() != 1 {
        Err(Error::Unsupported(format!("{what} of a multi-component state")))
    } else {
        Ok(())
    }
}

/// `a_w(x) = Re[ψ†Âψ] / |ψ|²`
pub fn weak_field(op: &DiffOperator, psi: &WaveFunction, x: &[f64]) -> Result<f64> {
    let t = terms_at(op, psi, x)?;
    require_off_node(psi, x, t.density)?;
    Ok(t.inner.re / t.density)
}

/// `Im[ψ†Âψ]`, defined everywhere.
pub fn imag_density(op: &DiffOperator, psi: &WaveFunction, x: &[f64]) -> Result<f64> {
    Ok(terms_at(op, psi, x)?.inner.im)
}

/// `R²`, `∇(R²)` and `∇²(R²)` from partials up to order two.
fn density_derivatives(d: &Derivatives) -> (f64, Vec<f64>, f64) {
    let dim = d.dim();
    let mut r2 = 0.0;
    let mut grad = vec![0.0; dim];
    let mut lap = 0.0;
    for c in 0..d.components() {
        let v = d.partial(c, MultiIndex::ZERO).unwrap();
        r2 += v.norm_sqr();
        for (j, g) in grad.iter_mut().enumerate() {
            let dj = d.partial(c, MultiIndex::unit(j)).unwrap();
            let djj = d.partial(c, MultiIndex::pure(j, 2)).unwrap();
            *g += 2.0 * (v.conj() * dj).re;
            lap += 2.0 * (v.conj() * djj).re + 2.0 * dj.norm_sqr();
        }
    }
    (r2, grad, lap)
}

/// `Q = −(ħ²/2m) ∇²R / R` via `R² = ψ*ψ`.
pub fn quantum_potential(psi: &WaveFunction, x: &[f64]) -> Result<f64> {
    require_scalar(psi, "quantum potential")?;
    let d = psi.derivatives(x, 2)?;
    let (r2, grad, lap) = density_derivatives(&d);
    require_off_node(psi, x, r2)?;
    Ok(quantum_potential_from(psi, r2, &grad, lap))
}

fn quantum_potential_from(psi: &WaveFunction, r2: f64, grad: &[f64], lap: f64) -> f64 {
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let lap_r_over_r = (lap - g2 / (2.0 * r2)) / (2.0 * r2);
    -psi.hbar() * psi.hbar() / (2.0 * psi.mass()) * lap_r_over_r
}

/// `R²·Q` and `(∇R)²` at `x`; both stay finite through simple nodes.
pub(crate) fn qp_densities(psi: &WaveFunction, d: &Derivatives) -> (f64, f64, f64) {
    let (r2, grad, lap) = density_derivatives(d);
    let g2: f64 = grad.iter().map(|g| g * g).sum();
    let k = psi.hbar() * psi.hbar() / (2.0 * psi.mass());
    // R²Q = −k(∇²(R²) − |∇R²|²/2R²)/2,  (∇R)² = |∇R²|²/4R²
    let r2q = -k * (lap - ratio(g2, r2) / 2.0) / 2.0;
    (r2, r2q, ratio(g2, r2) / 4.0)
}

/// `v = (ħ/m) Im[∇ψ/ψ] = ∇S/m`
pub fn guiding_velocity(psi: &WaveFunction, x: &[f64]) -> Result<Vec<f64>> {
    require_scalar(psi, "guiding velocity")?;
    psi.check_dim(x)?;
    let g = psi.gradient(x)[0];
    require_off_node(psi, x, g.v.norm_sqr())?;
    let k = psi.hbar() / psi.mass();
    Ok((0..psi.dim()).map(|j| k * (g.d[j] / g.v).im).collect())
}

/// `E_w = |∇S|²/2m + V + Q`
pub fn local_energy(psi: &WaveFunction, potential: &Potential, x: &[f64]) -> Result<f64> {
    require_scalar(psi, "local energy")?;
    let d = psi.derivatives(x, 2)?;
    let (r2, grad, lap) = density_derivatives(&d);
    require_off_node(psi, x, r2)?;
    let v = d.partial(0, MultiIndex::ZERO).unwrap();
    let grad_s2: f64 = (0..psi.dim())
        .map(|j| (psi.hbar() * (d.partial(0, MultiIndex::unit(j)).unwrap() / v).im).powi(2))
        .sum();
    Ok(grad_s2 / (2.0 * psi.mass()) + potential.eval(x) + quantum_potential_from(psi, r2, &grad, lap))
}

/// `∇·(R²∇S) = ħ Im[ψ*∇²ψ]`, zero for stationary states.
pub fn current_divergence(psi: &WaveFunction, x: &[f64]) -> Result<f64> {
    require_scalar(psi, "current divergence")?;
    let d = psi.derivatives(x, 2)?;
    let v = d.partial(0, MultiIndex::ZERO).unwrap();
    let lap: Complex64 = (0..psi.dim())
        .map(|j| d.partial(0, MultiIndex::pure(j, 2)).unwrap())
        .sum();
    Ok(psi.hbar() * (v.conj() * lap).im)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointwiseIdentity {
    /// `|Âψ|²`
    pub lhs: f64,
    /// `|ψ|² a_w² + Im[ψ†Âψ]² / |ψ|²`
    pub scalar_rhs: f64,
    /// `lhs − scalar_rhs`
    pub deficit: f64,
}

pub fn pointwise_identity(op: &DiffOperator, psi: &WaveFunction, x: &[f64]) -> Result<PointwiseIdentity> {
    let t = terms_at(op, psi, x)?;
    require_off_node(psi, x, t.density)?;
    let aw = t.inner.re / t.density;
    let lhs = t.apsi_norm2;
    let scalar_rhs = t.density * aw * aw + t.inner.im * t.inner.im / t.density;
    Ok(PointwiseIdentity {
        lhs,
        scalar_rhs,
        deficit: lhs - scalar_rhs,
    })
}

/// One point of a field scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSample {
    pub x: Vec<f64>,
    pub value: Vec<f64>,
    pub at_node: bool,
}

/// Evaluates `field` at every point, marking at-node failures instead of
/// aborting the scan.
pub fn scan<F>(points: &[Vec<f64>], field: F) -> Result<Vec<FieldSample>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    points
        .iter()
        .map(|x| match field(x) {
            Ok(value) => Ok(FieldSample {
                x: x.clone(),
                value,
                at_node: false,
            }),
            Err(Error::AtNode { .. }) => Ok(FieldSample {
                x: x.clone(),
                value: vec![],
                at_node: true,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// CSV with columns `x1..xd, value[..], at_node`; node rows leave values empty.
pub fn write_scan_csv<W: Write>(out: W, samples: &[FieldSample], dim: usize, width: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    if width == 1 {
        header.push("value".into());
    } else {
        header.extend((1..=width).map(|j| format!("value{j}")));
    }
    header.push("at_node".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let mut row: Vec<String> = s.x.iter().map(|v| format!("{v:.17e}")).collect();
        if s.at_node {
            row.extend(std::iter::repeat_n(String::new(), width));
        } else {
            row.extend(s.value.iter().map(|v| format!("{v:.17e}")));
        }
        row.push(s.at_node.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_operator, OperatorSpec};
    use crate::states::{make_state, StateSpec, Units};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn op(spec: OperatorSpec, dim: usize) -> DiffOperator {
        build_operator(&spec, dim, Units::default()).unwrap()
    }

    fn ho() -> Potential {
        Potential::Harmonic { mass: 1.0, omega: 1.0 }
    }

    #[test]
    fn weak_values() {
        let psi = make_state(&StateSpec::ho1d(3)).unwrap();
        let x = op(OperatorSpec::Position { axis: 0 }, 1);
        assert!((weak_field(&x, &psi, &[0.3]).unwrap() - 0.3).abs() < 1e-15);
        let p = op(OperatorSpec::Momentum { axis: 0 }, 1);
        let g = make_state(&StateSpec::ho1d(0)).unwrap();
        assert_eq!(weak_field(&p, &g, &[0.8]).unwrap(), 0.0);
        let s = make_state(&StateSpec::spinor(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            StateSpec::ho1d(0),
        ))
        .unwrap();
        let sz = op(OperatorSpec::SpinZ, 1);
        assert!(weak_field(&sz, &s, &[0.4]).unwrap().abs() < 1e-16);
        assert!(matches!(weak_field(&x, &make_state(&StateSpec::ho1d(1)).unwrap(), &[0.0]), Err(Error::AtNode { .. })));
    }

    #[test]
    fn imaginary_part() {
        let g = make_state(&StateSpec::ho1d(0)).unwrap();
        let p = op(OperatorSpec::Momentum { axis: 0 }, 1);
        let want = PI.powf(-0.5) * (-1.0f64).exp();
        assert!((imag_density(&p, &g, &[1.0]).unwrap() - want).abs() < 1e-16);
        let h = op(OperatorSpec::Hamiltonian { potential: Some(ho()) }, 1);
        let psi = make_state(&StateSpec::ho1d(2)).unwrap();
        assert!(imag_density(&h, &psi, &[0.9]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn quantum_potential_examples() {
        let g = make_state(&StateSpec::ho1d(0)).unwrap();
        assert!((quantum_potential(&g, &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((quantum_potential(&g, &[10.0]).unwrap() + 49.5).abs() < 1e-11);
        let h = make_state(&StateSpec::Hydrogen1s).unwrap();
        assert!((quantum_potential(&h, &[0.0, 1.0, 0.0]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn velocity_and_energy() {
        let a = make_state(&StateSpec::ho2d_angular(1)).unwrap();
        let v = guiding_velocity(&a, &[1.0, 0.0]).unwrap();
        assert!(v[0].abs() < 1e-16 && (v[1] - 1.0).abs() < 1e-15);
        let v = guiding_velocity(&a, &[2.0, 0.0]).unwrap();
        assert!((v[1] - 0.5).abs() < 1e-15);
        assert!((local_energy(&a, &ho(), &[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-14);
        let e1 = make_state(&StateSpec::ho1d(1)).unwrap();
        assert!((local_energy(&e1, &ho(), &[2.0]).unwrap() - 1.5).abs() < 1e-14);
        let g = make_state(&StateSpec::ho1d(0)).unwrap();
        for x in [-2.0, 0.1, 3.0] {
            assert!((local_energy(&g, &ho(), &[x]).unwrap() - 0.5).abs() < 1e-13);
        }
    }

    #[test]
    fn pointwise_examples() {
        let g = make_state(&StateSpec::ho1d(0)).unwrap();
        let p = op(OperatorSpec::Momentum { axis: 0 }, 1);
        let r = pointwise_identity(&p, &g, &[1.0]).unwrap();
        let psi2 = g.density(&[1.0]);
        assert!((r.lhs - psi2).abs() < 1e-16);
        assert!(r.deficit.abs() < 1e-16);
        let s = make_state(&StateSpec::spinor(
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            StateSpec::ho1d(0),
        ))
        .unwrap();
        let sz = op(OperatorSpec::SpinZ, 1);
        let r = pointwise_identity(&sz, &s, &[0.0]).unwrap();
        let phi0 = PI.powf(-0.5);
        assert!((r.lhs - 0.25 * phi0).abs() < 1e-16);
        assert!(r.scalar_rhs.abs() < 1e-16);
        assert!((r.deficit - 0.25 * phi0).abs() < 1e-16);
    }

    #[test]
    fn stationary_current_is_divergence_free() {
        let a = make_state(&StateSpec::ho2d_angular(-1)).unwrap();
        for x in [[0.3, -0.8], [1.5, 0.2]] {
            assert!(current_divergence(&a, &x).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn scan_marks_nodes() {
        let e1 = make_state(&StateSpec::ho1d(1)).unwrap();
        let pts = vec![vec![0.0], vec![0.5]];
        let s = scan(&pts, |x| quantum_potential(&e1, x).map(|q| vec![q])).unwrap();
        assert!(s[0].at_node && !s[1].at_node);
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &s, 1, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,value,at_node\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
