//! Self-adjoint differential operators `Â = Σ_α a_α(x) D^α` with
//! `D^α = (−iħ)^{|α|} ∂^α`, plus an optional constant 2×2 Hermitian
//! matrix acting on spinor components.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::jet::{MultiIndex, MAX_DIM, MAX_ORDER};
use crate::potential::Potential;
use crate::states::{Derivatives, Units, WaveFunction};

pub type Matrix2 = [[Complex64; 2]; 2];

/// Real coefficient function `a_α(x)`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `x_j`, zero-based axis.
    Coordinate(usize),
    Potential(Potential),
    Custom {
        name: String,
        bounded: bool,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl Coefficient {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Coordinate(j) => x[*j],
            Coefficient::Potential(p) => p.eval(x),
            Coefficient::Custom { f, .. } => f(x),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            Coefficient::Constant(_) => true,
            Coefficient::Coordinate(_) => false,
            Coefficient::Potential(p) => p.is_bounded(),
            Coefficient::Custom { bounded, .. } => *bounded,
        }
    }

    fn parse(token: &str, units: Units, omega: f64) -> Result<Self> {
        if let Ok(c) = token.parse::<f64>() {
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "custom coefficient `{token}` is not finite"
                )));
            }
            return Ok(Coefficient::Constant(c));
        }
        if let Some(axis) = token.strip_prefix('x') {
            let j: usize = axis
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad coordinate `{token}`")))?;
            if !(1..=MAX_DIM).contains(&j) {
                return Err(Error::InvalidParameter(format!("bad coordinate `{token}`")));
            }
            return Ok(Coefficient::Coordinate(j - 1));
        }
        Ok(Coefficient::Potential(Potential::from_name(token, units.mass, omega)?))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "{c}"),
            Coefficient::Coordinate(j) => write!(f, "x{}", j + 1),
            Coefficient::Potential(p) => write!(f, "{p:?}"),
            Coefficient::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Term {
    pub alpha: MultiIndex,
    pub scale: f64,
    pub coefficient: Coefficient,
}

impl Term {
    pub fn new(alpha: MultiIndex, scale: f64, coefficient: Coefficient) -> Self {
        Term {
            alpha,
            scale,
            coefficient,
        }
    }

    /// `a_α(x)` including the term's scale.
    pub fn coefficient_at(&self, x: &[f64]) -> f64 {
        self.scale * self.coefficient.eval(x)
    }

    /// Coefficient of the plain partial `∂^α`, i.e. `a_α(x)·(−iħ)^{|α|}`.
    pub fn derivative_coefficient(&self, x: &[f64], hbar: f64) -> Complex64 {
        minus_i_hbar_pow(hbar, self.alpha.order()) * self.coefficient_at(x)
    }
}

fn minus_i_hbar_pow(hbar: f64, k: usize) -> Complex64 {
    let h = hbar.powi(k as i32);
    match k % 4 {
        0 => Complex64::new(h, 0.0),
        1 => Complex64::new(0.0, -h),
        2 => Complex64::new(-h, 0.0),
        _ => Complex64::new(0.0, h),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Position(usize),
    Momentum(usize),
    Kinetic,
    Hamiltonian,
    SpinZ,
    Custom,
}

/// What to build; axes are zero-based.
#[derive(Clone, Debug)]
pub enum OperatorSpec {
    Position { axis: usize },
    Momentum { axis: usize },
    Kinetic,
    /// `None` means "the potential the state is an eigenstate of".
    Hamiltonian { potential: Option<Potential> },
    SpinZ,
    Custom {
        terms: Vec<Term>,
        matrix: Option<Matrix2>,
    },
}

#[derive(Clone, Debug)]
pub struct DiffOperator {
    kind: OperatorKind,
    label: String,
    dim: usize,
    units: Units,
    terms: Vec<Term>,
    order: usize,
    matrix: Option<Matrix2>,
}

impl DiffOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// `m = max |α|`
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn matrix(&self) -> Option<&Matrix2> {
        self.matrix.as_ref()
    }

    /// Descriptions of terms whose coefficients are unbounded on ℝ^d.
    pub fn unbounded_terms(&self) -> Vec<String> {
        self.terms
            .iter()
            .filter(|t| !t.coefficient.is_bounded())
            .map(|t| format!("{}·{:?}", t.alpha, t.coefficient))
            .collect()
    }

    /// `c·Â`
    pub fn scaled(&self, c: f64) -> DiffOperator {
        let mut op = self.clone();
        for t in &mut op.terms {
            t.scale *= c;
        }
        op.label = format!("{c}*{}", self.label);
        op
    }

    /// Checks that every coefficient is finite at the given points.
    pub fn check_finite<'a>(&self, points: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        for x in points {
            for t in &self.terms {
                let v = t.coefficient_at(x);
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "coefficient {:?} of term {} is not finite at {x:?}",
                        t.coefficient, t.alpha
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(Âψ)(x)` from precomputed partials.
    pub fn apply_to(&self, d: &Derivatives, x: &[f64]) -> Result<Vec<Complex64>> {
        if d.order() < self.order {
            return Err(Error::DerivativeOrder {
                requested: self.order,
                available: d.order(),
            });
        }
        if self.matrix.is_some() && d.components() != 2 {
            return Err(Error::Unsupported(format!(
                "operator `{}` acts on two-component spinors only",
                self.label
            )));
        }
        let hbar = self.units.hbar;
        let coeffs: Vec<Complex64> = self
            .terms
            .iter()
            .map(|t| t.derivative_coefficient(x, hbar))
            .collect();
        let mut out: Vec<Complex64> = d
            .jets()
            .iter()
            .map(|jet| {
                self.terms
                    .iter()
                    .zip(&coeffs)
                    .map(|(t, c)| c * jet.partial(t.alpha).expect("order checked"))
                    .sum()
            })
            .collect();
        if let Some(m) = &self.matrix {
            let (a, b) = (out[0], out[1]);
            out[0] = m[0][0] * a + m[0][1] * b;
            out[1] = m[1][0] * a + m[1][1] * b;
        }
        Ok(out)
    }
}

/// Builds an operator for configuration dimension `dim` in the given units.
pub fn build_operator(spec: &OperatorSpec, dim: usize, units: Units) -> Result<DiffOperator> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dimension {dim} not in 1..=3")));
    }
    let check_axis = |axis: usize| {
        if axis < dim {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "axis {} out of range for d = {dim}",
                axis + 1
            )))
        }
    };
    let kinetic_terms = || {
        (0..dim)
            .map(|j| {
                Term::new(
                    MultiIndex::pure(j, 2),
                    1.0,
                    Coefficient::Constant(1.0 / (2.0 * units.mass)),
                )
            })
            .collect::<Vec<_>>()
    };
    let (kind, label, terms, matrix) = match spec {
        OperatorSpec::Position { axis } => {
            check_axis(*axis)?;
            (
                OperatorKind::Position(*axis),
                format!("position_{}", axis + 1),
                vec![Term::new(MultiIndex::ZERO, 1.0, Coefficient::Coordinate(*axis))],
                None,
            )
        }
        OperatorSpec::Momentum { axis } => {
            check_axis(*axis)?;
            (
                OperatorKind::Momentum(*axis),
                format!("momentum_{}", axis + 1),
                vec![Term::new(MultiIndex::unit(*axis), 1.0, Coefficient::Constant(1.0))],
                None,
            )
        }
        OperatorSpec::Kinetic => (OperatorKind::Kinetic, "kinetic".into(), kinetic_terms(), None),
        OperatorSpec::Hamiltonian { potential } => {
            let v = potential.clone().ok_or_else(|| {
                Error::InvalidParameter("hamiltonian requires a potential V(x)".into())
            })?;
            let mut terms = kinetic_terms();
            let label = format!("hamiltonian({})", v.name());
            terms.push(Term::new(MultiIndex::ZERO, 1.0, Coefficient::Potential(v)));
            (OperatorKind::Hamiltonian, label, terms, None)
        }
        OperatorSpec::SpinZ => {
            let h = 0.5 * units.hbar;
            let z = Complex64::new(0.0, 0.0);
            (
                OperatorKind::SpinZ,
                "spin_z".into(),
                vec![Term::new(MultiIndex::ZERO, 1.0, Coefficient::Constant(1.0))],
                Some([[Complex64::new(h, 0.0), z], [z, Complex64::new(-h, 0.0)]]),
            )
        }
        OperatorSpec::Custom { terms, matrix } => {
            if terms.is_empty() {
                return Err(Error::InvalidParameter("custom operator needs at least one term".into()));
            }
            for t in terms {
                if t.alpha.min_dim() > dim {
                    return Err(Error::InvalidParameter(format!(
                        "term {} exceeds dimension {dim}",
                        t.alpha
                    )));
                }
                if !t.scale.is_finite() {
                    return Err(Error::InvalidParameter("non-finite term scale".into()));
                }
                if let Coefficient::Constant(c) = t.coefficient {
                    if !c.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "custom coefficient {c} is not finite"
                        )));
                    }
                }
                if let Coefficient::Coordinate(j) = t.coefficient {
                    check_axis(j)?;
                }
            }
            if let Some(m) = matrix {
                let hermitian = (0..2).all(|i| (0..2).all(|j| (m[i][j] - m[j][i].conj()).norm() <= 1e-14));
                let finite = m.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite());
                if !hermitian || !finite {
                    return Err(Error::InvalidParameter("matrix part must be finite and Hermitian".into()));
                }
            }
            let label = terms
                .iter()
                .map(|t| format!("{}*{:?}", t.alpha, t.coefficient))
                .collect::<Vec<_>>()
                .join("+");
            (OperatorKind::Custom, format!("custom[{label}]"), terms.clone(), *matrix)
        }
    };
    let order = terms.iter().map(|t| t.alpha.order()).max().unwrap_or(0);
    if order > MAX_ORDER {
        return Err(Error::DerivativeOrder {
            requested: order,
            available: MAX_ORDER,
        });
    }
    Ok(DiffOperator {
        kind,
        label,
        dim,
        units,
        terms,
        order,
        matrix,
    })
}

/// `(Âψ)(x)` for every component.
pub fn apply_operator(op: &DiffOperator, psi: &WaveFunction, x: &[f64]) -> Result<Vec<Complex64>> {
    check_compatible(op, psi)?;
    let d = psi.derivatives(x, op.order())?;
    op.apply_to(&d, x)
}

pub(crate) fn check_compatible(op: &DiffOperator, psi: &WaveFunction) -> Result<()> {
    if op.dim() != psi.dim() {
        return Err(Error::Dimension {
            expected: psi.dim(),
            got: op.dim(),
        });
    }
    if op.matrix().is_some() && psi.components() != 2 {
        return Err(Error::Unsupported(format!(
            "operator `{}` needs a two-component state",
            op.label()
        )));
    }
    Ok(())
}

/// Parsed operator descriptor plus an overall scale factor.
#[derive(Clone, Debug)]
pub struct OperatorRequest {
    pub spec: OperatorSpec,
    pub scale: f64,
    pub source: String,
}

impl OperatorRequest {
    /// Parses `momentum:axis=1`, `hamiltonian:potential=ho`, `spin_z`,
    /// `custom:terms=(2)*0.5;(0)*ho`, … Axis numbers are one-based.
    /// Every descriptor accepts `scale=<c>`.
    pub fn parse(text: &str, units: Units) -> Result<Self> {
        let d = Descriptor::parse(text)?;
        let scale: f64 = d.get_or("scale", 1.0)?;
        if !scale.is_finite() {
            return Err(Error::InvalidParameter("scale must be finite".into()));
        }
        let axis = |d: &Descriptor| -> Result<usize> {
            let a: usize = d.get_or("axis", 1)?;
            if a == 0 {
                return Err(Error::InvalidParameter("axes are numbered from 1".into()));
            }
            Ok(a - 1)
        };
        let spec = match d.name.as_str() {
            "position" | "position_1" | "position_2" | "position_3" | "x" => {
                d.expect_keys(&["axis", "scale"])?;
                OperatorSpec::Position {
                    axis: suffix_axis(&d.name).map_or_else(|| axis(&d), Ok)?,
                }
            }
            "momentum" | "momentum_1" | "momentum_2" | "momentum_3" | "p" => {
                d.expect_keys(&["axis", "scale"])?;
                OperatorSpec::Momentum {
                    axis: suffix_axis(&d.name).map_or_else(|| axis(&d), Ok)?,
                }
            }
            "kinetic" => {
                d.expect_keys(&["scale"])?;
                OperatorSpec::Kinetic
            }
            "hamiltonian" => {
                d.expect_keys(&["potential", "omega", "scale"])?;
                let potential = match d.raw("potential") {
                    None => None,
                    Some(name) => Some(Potential::from_name(name, units.mass, d.get_or::<f64>("omega", 1.0)?)?),
                };
                OperatorSpec::Hamiltonian { potential }
            }
            "spin_z" => {
                d.expect_keys(&["scale"])?;
                OperatorSpec::SpinZ
            }
            "custom" => {
                d.expect_keys(&["terms", "omega", "scale"])?;
                let omega: f64 = d.get_or("omega", 1.0)?;
                let text = d.raw("terms").ok_or_else(|| {
                    Error::InvalidParameter("custom operator requires explicit terms".into())
                })?;
                OperatorSpec::Custom {
                    terms: parse_terms(text, units, omega)?,
                    matrix: None,
                }
            }
            other => {
                return Err(Error::Unknown {
                    what: "operator",
                    name: other.to_string(),
                })
            }
        };
        Ok(OperatorRequest {
            spec,
            scale,
            source: d.to_string(),
        })
    }

    /// Builds the operator for `psi`, filling a missing Hamiltonian
    /// potential from the state.
    pub fn build_for(&self, psi: &WaveFunction) -> Result<DiffOperator> {
        let spec = match &self.spec {
            OperatorSpec::Hamiltonian { potential: None } => OperatorSpec::Hamiltonian {
                potential: Some(psi.potential().cloned().ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "hamiltonian requires a potential V(x); state {} declares none",
                        psi.label()
                    ))
                })?),
            },
            s => s.clone(),
        };
        let op = build_operator(&spec, psi.dim(), psi.units())?;
        Ok(if self.scale == 1.0 { op } else { op.scaled(self.scale) })
    }
}

fn suffix_axis(name: &str) -> Option<usize> {
    name.rsplit_once('_')
        .and_then(|(_, s)| s.parse::<usize>().ok())
        .map(|a| a - 1)
}

/// `(a1/a2/a3)*coef;(…)*coef`
fn parse_terms(text: &str, units: Units, omega: f64) -> Result<Vec<Term>> {
    let bad = |t: &str| Error::InvalidParameter(format!("bad custom term `{t}`, expected (a1/a2)*coef"));
    text.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (alpha, coef) = t.split_once('*').ok_or_else(|| bad(t))?;
            let alpha = alpha
                .trim()
                .strip_prefix('(')
                .and_then(|a| a.strip_suffix(')'))
                .ok_or_else(|| bad(t))?;
            let powers = alpha
                .split('/')
                .map(|p| p.trim().parse::<u8>().map_err(|_| bad(t)))
                .collect::<Result<Vec<_>>>()?;
            let alpha = MultiIndex::from_slice(&powers).ok_or_else(|| bad(t))?;
            Ok(Term::new(alpha, 1.0, Coefficient::parse(coef.trim(), units, omega)?))
        })
        .collect()
}
