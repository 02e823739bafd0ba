//! Variance accounting `Var_Q = Var_B + Q_A + D_A`, the momentum /
//! quantum-potential relation and the uncertainty rewrite.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{local_terms, qp_densities};
use crate::nodal::{h6_for, H6Summary};
use crate::operators::{build_operator, check_compatible, DiffOperator, OperatorKind, OperatorSpec};
use crate::quadrature::sampler::{batch_mean, sample_detailed};
use crate::quadrature::{integrate_fields, Convergence, EpsSequence, EquilibriumSampler, GridSummary, IntegrationScheme};
use crate::states::WaveFunction;

/// Relative tolerance of the identity check.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;
const BATCHES: usize = 50;

pub fn tol_identity(var_q: f64) -> f64 {
    IDENTITY_TOLERANCE * var_q.abs().max(1.0)
}

/// The five integrals behind one decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermIntegrals {
    /// `∫Re[ψ†Âψ]`
    pub mean: f64,
    /// `∫|Âψ|²`
    pub second_moment: f64,
    /// `∫Re²/|ψ|²`
    pub real_ratio: f64,
    /// `∫Im²/|ψ|²`
    pub q_term: f64,
    /// `∫gap/|ψ|²`
    pub deficit: f64,
    pub errors: Option<TermErrors>,
    pub sequences: TermSequences,
    pub grid: GridSummary,
    pub exclusion_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermErrors {
    pub mean: f64,
    pub second_moment: f64,
    pub real_ratio: f64,
    pub q_term: f64,
    pub deficit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermSequences {
    pub var_b: EpsSequence,
    pub q_term: EpsSequence,
    pub deficit: EpsSequence,
}

impl TermSequences {
    fn all(&self) -> [(&'static str, &EpsSequence); 3] {
        [("var_b", &self.var_b), ("q_term", &self.q_term), ("deficit", &self.deficit)]
    }

    pub fn divergent(&self) -> bool {
        self.all().iter().any(|(_, s)| s.status == Convergence::Diverging)
    }

    pub fn converged(&self) -> bool {
        self.all().iter().all(|(_, s)| s.converged)
    }
}

impl TermIntegrals {
    pub fn var_q(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    pub fn var_b(&self) -> f64 {
        self.real_ratio - self.mean * self.mean
    }
}

/// One quadrature pass over all five fields.
pub fn term_integrals(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<TermIntegrals> {
    check_compatible(op, psi)?;
    scheme.validate()?;
    let order = op.order();
    let r = integrate_fields(psi, scheme, &[false, false, true, true, true], |x, out| {
        let d = psi.derivatives(x, order)?;
        let t = local_terms(op, &d, x)?;
        out[0] = t.inner.re;
        out[1] = t.apsi_norm2;
        out[2] = t.real_ratio();
        out[3] = t.imag_ratio();
        out[4] = t.deficit_density();
        Ok(t.density)
    })?;
    let v = &r.values;
    let mut seqs = r.sequences.into_iter().skip(2).map(|s| s.expect("singular field"));
    let sequences = TermSequences {
        var_b: seqs.next().unwrap(),
        q_term: seqs.next().unwrap(),
        deficit: seqs.next().unwrap(),
    };
    Ok(TermIntegrals {
        mean: v[0],
        second_moment: v[1],
        real_ratio: v[2],
        q_term: v[3],
        deficit: v[4],
        errors: r.errors.map(|e| TermErrors {
            mean: e[0],
            second_moment: e[1],
            real_ratio: e[2],
            q_term: e[3],
            deficit: e[4],
        }),
        sequences,
        grid: r.grid,
        exclusion_radius: r.exclusion_radius,
    })
}

fn require_converging(name: &str, s: &EpsSequence) -> Result<()> {
    if s.status == Convergence::Diverging {
        let k = s.values.len().saturating_sub(3);
        return Err(Error::Divergence {
            quantity: name.to_string(),
            tail: s.values[k..].to_vec(),
        });
    }
    Ok(())
}

/// `⟨Â⟩ = ∫Re[ψ†Âψ] dx`
pub fn expectation(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<f64> {
    Ok(term_integrals(op, psi, scheme)?.mean)
}

/// `∫|Âψ|² dx − ⟨Â⟩²`
pub fn var_q(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<f64> {
    Ok(term_integrals(op, psi, scheme)?.var_q())
}

/// `∫Re[ψ†Âψ]²/|ψ|² dx − ⟨Â⟩²` with ε-exclusion.
pub fn var_b(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<f64> {
    let t = term_integrals(op, psi, scheme)?;
    require_converging("var_b", &t.sequences.var_b)?;
    Ok(t.var_b())
}

/// `Q_A = ∫Im[ψ†Âψ]²/|ψ|² dx` with ε-exclusion.
pub fn q_term(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<f64> {
    let t = term_integrals(op, psi, scheme)?;
    require_converging("q_term", &t.sequences.q_term)?;
    Ok(t.q_term)
}

/// `D_A = ∫(|ψ|²|Âψ|² − |ψ†Âψ|²)/|ψ|² dx`, zero for one component.
pub fn deficit_term(op: &DiffOperator, psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<f64> {
    let t = term_integrals(op, psi, scheme)?;
    require_converging("deficit", &t.sequences.deficit)?;
    Ok(t.deficit)
}

/// Monte Carlo estimate of `Var_B` from equilibrium samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub n: usize,
    pub seed: u64,
    pub mean: f64,
    pub var_b: f64,
    pub standard_error: f64,
    pub acceptance: Vec<f64>,
}

pub fn var_b_mc(op: &DiffOperator, psi: &WaveFunction, n: usize, sampler: &EquilibriumSampler) -> Result<McEstimate> {
    check_compatible(op, psi)?;
    let set = sample_detailed(psi, n, sampler)?;
    let order = op.order();
    let aw = set
        .positions
        .iter()
        .map(|x| {
            let d = psi.derivatives(x, order)?;
            let t = local_terms(op, &d, x)?;
            Ok(t.inner.re / t.density)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, _) = batch_mean(&aw, BATCHES);
    let dev: Vec<f64> = aw.iter().map(|a| (a - mean) * (a - mean)).collect();
    let (var, se) = batch_mean(&dev, BATCHES);
    Ok(McEstimate {
        n,
        seed: sampler.seed,
        mean,
        var_b: var,
        standard_error: se,
        acceptance: set.acceptance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McCrossCheck {
    #[serde(flatten)]
    pub estimate: McEstimate,
    /// `|var_b(quadrature) − var_b(MC)|`
    pub difference: f64,
    /// `sqrt(se_mc² + err_quad²)`
    pub combined_error: f64,
    /// Difference within three combined standard errors.
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub gap: f64,
}

/// Spin bookkeeping: the two-term claim as stated and the deficit ledger.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpinLedger {
    /// `Var_Q = Var_B`
    pub as_stated: Verdict,
    /// `Var_Q = Var_B + Q_A + D_A`
    pub with_deficit: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodInfo {
    pub route: &'static str,
    pub scheme: IntegrationScheme,
    pub grid: GridSummary,
    pub exclusion_radius: f64,
    pub errors: Option<TermErrors>,
    pub eps: TermSequences,
    pub converged: bool,
    pub divergent: bool,
    pub mc: Option<McCrossCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub state: String,
    pub operator: String,
    pub mean: f64,
    pub var_q: f64,
    pub var_b: f64,
    pub q_term: f64,
    pub deficit: f64,
    pub residual: f64,
    pub second_moment: f64,
    pub tol_identity: f64,
    pub identity_holds: bool,
    pub h6: H6Summary,
    pub method: MethodInfo,
    pub spin: Option<SpinLedger>,
    pub warnings: Vec<String>,
}

/// Optional sampling route for `Var_B`.
#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub n: usize,
    pub sampler: EquilibriumSampler,
}

pub fn decompose(
    op: &DiffOperator,
    psi: &WaveFunction,
    scheme: &IntegrationScheme,
    mc: Option<&McOptions>,
) -> Result<DecompositionReport> {
    let t = term_integrals(op, psi, scheme)?;
    let h6 = h6_for(psi, op.order())?;
    let var_q = t.var_q();
    let var_b = t.var_b();
    let residual = var_q - var_b - t.q_term - t.deficit;
    let tol = tol_identity(var_q);
    let mut warnings = Vec::new();
    for term in op.unbounded_terms() {
        warnings.push(format!("coefficient `{term}` is unbounded; the identity is checked on the truncation box"));
    }
    let divergent = t.sequences.divergent();
    for (name, s) in t.sequences.all() {
        match s.status {
            Convergence::Diverging => warnings.push(format!("ε-exclusion sequence for {name} diverges")),
            Convergence::Settling => warnings.push(format!("ε-exclusion sequence for {name} has not settled to tolerance")),
            Convergence::Converged => {}
        }
    }
    if h6.satisfied == Some(false) && !divergent {
        warnings.push(format!(
            "integrability condition fails (k = {}, m = {}, d = {}) yet every ε-sequence converges",
            h6.k.unwrap_or(0),
            h6.m,
            h6.d
        ));
    }
    let spin = (op.kind() == OperatorKind::SpinZ).then(|| SpinLedger {
        as_stated: Verdict {
            holds: (var_q - var_b).abs() <= tol,
            gap: var_q - var_b,
        },
        with_deficit: Verdict {
            holds: residual.abs() <= tol,
            gap: residual,
        },
    });
    if let Some(s) = &spin {
        if !s.as_stated.holds {
            warnings.push(format!(
                "Var_Q = Var_B violated for spin (gap {:.6e}); the deficit term closes the ledger: {}",
                s.as_stated.gap,
                if s.with_deficit.holds { "holds" } else { "violated" }
            ));
        }
    }
    let mc = match mc {
        None => None,
        Some(o) => {
            let est = var_b_mc(op, psi, o.n, &o.sampler)?;
            let quad_err = t.errors.as_ref().map_or(0.0, |e| e.real_ratio + 2.0 * t.mean.abs() * e.mean);
            let combined_error = (est.standard_error.powi(2) + quad_err.powi(2)).sqrt();
            let difference = (var_b - est.var_b).abs();
            Some(McCrossCheck {
                agrees: difference <= 3.0 * combined_error,
                estimate: est,
                difference,
                combined_error,
            })
        }
    };
    Ok(DecompositionReport {
        state: psi.label().to_string(),
        operator: op.label().to_string(),
        mean: t.mean,
        var_q,
        var_b,
        q_term: t.q_term,
        deficit: t.deficit,
        residual,
        second_moment: t.second_moment,
        tol_identity: tol,
        identity_holds: residual.abs() <= tol,
        h6,
        method: MethodInfo {
            route: "quadrature",
            scheme: scheme.clone(),
            grid: t.grid,
            exclusion_radius: t.exclusion_radius,
            errors: t.errors,
            converged: t.sequences.converged(),
            divergent,
            eps: t.sequences,
            mc,
        },
        spin,
        warnings,
    })
}

/// `⟨Q⟩` by both routes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantumPotentialMean {
    /// `∫R²Q dx`, ε-excluded
    pub via_density: f64,
    /// `(ħ²/2m)∫(∇R)² dx`
    pub via_gradient: f64,
    pub sequence: EpsSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QpRelation {
    pub state: String,
    /// `Q_p` summed over axes
    pub q_p: f64,
    pub q_p_axes: Vec<f64>,
    pub mean_q: QuantumPotentialMean,
    /// `2m⟨Q⟩` from `∫R²Q`
    pub two_m_q_density: f64,
    /// `2m⟨Q⟩` from `∫(∇R)²`
    pub two_m_q_gradient: f64,
    /// `Q_p − 2m⟨Q⟩` (gradient route)
    pub gap: f64,
    /// Difference of the two `⟨Q⟩` routes.
    pub route_gap: f64,
}

fn momentum_ops(psi: &WaveFunction) -> Result<Vec<DiffOperator>> {
    (0..psi.dim())
        .map(|axis| build_operator(&OperatorSpec::Momentum { axis }, psi.dim(), psi.units()))
        .collect()
}

pub fn check_qp_relation(psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<QpRelation> {
    if psi.components() != 1 {
        return Err(Error::Unsupported("quantum potential of a multi-component state".into()));
    }
    scheme.validate()?;
    let p = momentum_ops(psi)?;
    let dim = psi.dim();
    let singular = vec![true; 2 + dim];
    let r = integrate_fields(psi, scheme, &singular, |x, out| {
        let d = psi.derivatives(x, 2)?;
        let (r2, r2q, grad_r2) = qp_densities(psi, &d);
        out[0] = r2q;
        out[1] = grad_r2;
        for (j, op) in p.iter().enumerate() {
            out[2 + j] = local_terms(op, &d, x)?.imag_ratio();
        }
        Ok(r2)
    })?;
    let k = psi.hbar() * psi.hbar() / (2.0 * psi.mass());
    let mut seqs = r.sequences.into_iter().map(|s| s.expect("singular field"));
    let sequence = seqs.next().unwrap();
    require_converging("⟨Q⟩", &sequence)?;
    for (j, s) in seqs.enumerate() {
        require_converging(&format!("Q_p axis {}", j + 1), &s)?;
    }
    let mean_q = QuantumPotentialMean {
        via_density: r.values[0],
        via_gradient: k * r.values[1],
        sequence,
    };
    let q_p_axes = r.values[2..].to_vec();
    let q_p: f64 = q_p_axes.iter().sum();
    let two_m = 2.0 * psi.mass();
    Ok(QpRelation {
        state: psi.label().to_string(),
        q_p,
        q_p_axes,
        two_m_q_density: two_m * mean_q.via_density,
        two_m_q_gradient: two_m * mean_q.via_gradient,
        gap: q_p - two_m * mean_q.via_gradient,
        route_gap: mean_q.via_density - mean_q.via_gradient,
        mean_q,
    })
}

pub fn quantum_potential_mean(psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<QuantumPotentialMean> {
    Ok(check_qp_relation(psi, scheme)?.mean_q)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UncertaintyAxis {
    pub axis: usize,
    /// `Δx_B²`
    pub dx2: f64,
    /// `Δp_B²`
    pub dp2: f64,
    pub q_p: f64,
    /// `Δx_B²(Δp_B² + Q_p)`
    pub product: f64,
    /// `ħ²/4`
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub state: String,
    pub axes: Vec<UncertaintyAxis>,
    pub holds: bool,
}

/// Slack below `ħ²/4` tolerated in the product.
pub const UNCERTAINTY_SLACK: f64 = 1e-9;

pub fn uncertainty_check(psi: &WaveFunction, scheme: &IntegrationScheme) -> Result<UncertaintyReport> {
    if psi.components() != 1 {
        return Err(Error::Unsupported("uncertainty check of a multi-component state".into()));
    }
    let bound = psi.hbar() * psi.hbar() / 4.0;
    let mut axes = Vec::new();
    for axis in 0..psi.dim() {
        let x = build_operator(&OperatorSpec::Position { axis }, psi.dim(), psi.units())?;
        let p = build_operator(&OperatorSpec::Momentum { axis }, psi.dim(), psi.units())?;
        let tx = term_integrals(&x, psi, scheme)?;
        let tp = term_integrals(&p, psi, scheme)?;
        require_converging("Δx_B²", &tx.sequences.var_b)?;
        require_converging("Δp_B²", &tp.sequences.var_b)?;
        require_converging("Q_p", &tp.sequences.q_term)?;
        let dx2 = tx.var_b();
        let dp2 = tp.var_b();
        let product = dx2 * (dp2 + tp.q_term);
        axes.push(UncertaintyAxis {
            axis: axis + 1,
            dx2,
            dp2,
            q_p: tp.q_term,
            product,
            bound,
            holds: product >= bound - UNCERTAINTY_SLACK,
        });
    }
    Ok(UncertaintyReport {
        state: psi.label().to_string(),
        holds: axes.iter().all(|a| a.holds),
        axes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::OperatorRequest;
    use crate::states::{make_state, parse_state, StateSpec, Units};
    use num_complex::Complex64;

    fn quick() -> IntegrationScheme {
        IntegrationScheme {
            error_estimate: false,
            ..Default::default()
        }
    }

    fn op(text: &str, psi: &WaveFunction) -> DiffOperator {
        OperatorRequest::parse(text, psi.units()).unwrap().build_for(psi).unwrap()
    }

    #[test]
    fn ground_state_momentum() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let r = decompose(&op("momentum", &psi), &psi, &quick(), None).unwrap();
        assert!(r.mean.abs() < 1e-14);
        assert!((r.var_q - 0.5).abs() < 1e-12);
        assert!(r.var_b.abs() < 1e-14);
        assert!((r.q_term - 0.5).abs() < 1e-12);
        assert_eq!(r.deficit, 0.0);
        assert!(r.identity_holds);
        assert!(r.method.converged);
    }

    #[test]
    fn expectations() {
        let e1 = make_state(&StateSpec::ho1d(1)).unwrap();
        assert!((expectation(&op("hamiltonian", &e1), &e1, &quick()).unwrap() - 1.5).abs() < 1e-12);
        let g = make_state(&StateSpec::Gaussian { x0: 0.7, p0: 0.0, sigma: 1.0 }).unwrap();
        assert!((expectation(&op("position", &g), &g, &quick()).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn angular_momentum_split() {
        let psi = make_state(&StateSpec::ho2d_angular(1)).unwrap();
        let r = decompose(&op("momentum_1", &psi), &psi, &quick(), None).unwrap();
        assert!((r.var_q - 1.0).abs() < 1e-10, "{}", r.var_q);
        assert!((r.var_b - 0.5).abs() < 1e-6, "{}", r.var_b);
        assert!((r.q_term - 0.5).abs() < 1e-6, "{}", r.q_term);
        assert!(r.identity_holds, "{}", r.residual);
    }

    #[test]
    fn spin_ledger() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = make_state(&StateSpec::spinor(Complex64::new(s, 0.0), Complex64::new(s, 0.0), StateSpec::ho1d(0))).unwrap();
        let r = decompose(&op("spin_z", &psi), &psi, &quick(), None).unwrap();
        assert!((r.var_q - 0.25).abs() < 1e-12);
        assert!(r.var_b.abs() < 1e-12);
        assert_eq!(r.q_term, 0.0);
        assert!((r.deficit - 0.25).abs() < 1e-12);
        let ledger = r.spin.unwrap();
        assert!(!ledger.as_stated.holds);
        assert!(ledger.with_deficit.holds);
    }

    #[test]
    fn scale_covariance() {
        let psi = make_state(&StateSpec::ho1d(2)).unwrap();
        let a = decompose(&op("momentum", &psi), &psi, &quick(), None).unwrap();
        let b = decompose(&op("momentum:scale=3", &psi), &psi, &quick(), None).unwrap();
        assert!((b.mean - 3.0 * a.mean).abs() < 1e-12);
        assert!((b.var_q - 9.0 * a.var_q).abs() < 1e-10);
        assert!((b.q_term - 9.0 * a.q_term).abs() < 1e-10);
    }

    #[test]
    fn qp_relation_ground_state() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let r = check_qp_relation(&psi, &quick()).unwrap();
        assert!((r.mean_q.via_density - 0.25).abs() < 1e-10);
        assert!((r.mean_q.via_gradient - 0.25).abs() < 1e-10);
        assert!((r.q_p - 0.5).abs() < 1e-10);
        assert!(r.gap.abs() < 1e-10);
    }

    #[test]
    fn uncertainty_minimum() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let u = uncertainty_check(&psi, &quick()).unwrap();
        assert!((u.axes[0].product - 0.25).abs() < 1e-10);
        assert!(u.holds);
        let e1 = make_state(&StateSpec::ho1d(1)).unwrap();
        let u = uncertainty_check(&e1, &quick()).unwrap();
        // the excluded ε-neighbourhood of the node costs O(ε) of Q_p
        assert!((u.axes[0].product - 2.25).abs() < 2.25e-6, "{:?}", u.axes[0]);
    }

    #[test]
    fn units_enter_through_hbar() {
        let psi = parse_state("ho1d:n=0,hbar=2").unwrap();
        assert_eq!(psi.units(), Units { hbar: 2.0, mass: 1.0 });
        let r = decompose(&op("spin_z", &psi), &psi, &quick(), None);
        assert!(r.is_err());
    }
}
