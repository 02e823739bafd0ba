//! Catalog of analytic stationary bound states and spinors.
//!
//! Every state evaluates its value and all partial derivatives up to order
//! four through [`Jet`] arithmetic on closed-form expressions (Hermite
//! recurrences, exponentials), so derivatives are exact to rounding.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::jet::{Grad, Jet, Layout, MultiIndex, Scalar, MAX_ORDER};
use crate::potential::Potential;

/// A point counts as "at-node" when `|ψ(x)| < NODE_THRESHOLD · max|ψ|`.
pub const NODE_THRESHOLD: f64 = 1e-10;

/// Separation used for `spinor_split` when none is given.
pub const DEFAULT_SPLIT_SEPARATION: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hyperplane {
    /// Zero-based axis normal to the plane.
    pub axis: usize,
    pub offset: f64,
}

/// Declared description of the nodal set `{x : ψ(x) = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodalHint {
    Empty,
    Points(Vec<Vec<f64>>),
    Hyperplanes(Vec<Hyperplane>),
}

impl NodalHint {
    pub fn is_empty(&self) -> bool {
        match self {
            NodalHint::Empty => true,
            NodalHint::Points(p) => p.is_empty(),
            NodalHint::Hyperplanes(h) => h.is_empty(),
        }
    }

    /// Coordinates along `axis` at which the nodal set sits (planes normal
    /// to the axis, or point nodes projected onto it).
    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        let mut v: Vec<f64> = match self {
            NodalHint::Empty => vec![],
            NodalHint::Points(ps) => ps.iter().map(|p| p[axis]).collect(),
            NodalHint::Hyperplanes(hs) => hs
                .iter()
                .filter(|h| h.axis == axis)
                .map(|h| h.offset)
                .collect(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Euclidean distance from `x` to the declared nodal set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            NodalHint::Empty => f64::INFINITY,
            NodalHint::Points(ps) => ps
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min),
            NodalHint::Hyperplanes(hs) => hs
                .iter()
                .map(|h| (x[h.axis] - h.offset).abs())
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            NodalHint::Empty => 0,
            NodalHint::Points(p) => p.len(),
            NodalHint::Hyperplanes(h) => h.len(),
        }
    }
}

/// State descriptor: which catalog state to build.
#[derive(Clone, Debug, PartialEq)]
pub enum StateSpec {
    Ho1d { n: u32, omega: f64 },
    Ho2d { nx: u32, ny: u32, omega: f64 },
    /// `(x ± iy) e^{−r²/2}` with `l = ±1`.
    Ho2dAngular { l: i32, omega: f64 },
    Hydrogen1s,
    /// Non-stationary Gaussian packet with mean momentum `p0`.
    Gaussian { x0: f64, p0: f64, sigma: f64 },
    /// `χ ⊗ φ` for a scalar spatial state `φ`.
    Spinor {
        chi: [Complex64; 2],
        spatial: Box<StateSpec>,
    },
    /// Up and down components on displaced, effectively disjoint ground states.
    SpinorSplit { separation: f64 },
}

impl StateSpec {
    pub fn ho1d(n: u32) -> Self {
        StateSpec::Ho1d { n, omega: 1.0 }
    }

    pub fn ho2d(nx: u32, ny: u32) -> Self {
        StateSpec::Ho2d { nx, ny, omega: 1.0 }
    }

    pub fn ho2d_angular(l: i32) -> Self {
        StateSpec::Ho2dAngular { l, omega: 1.0 }
    }

    pub fn spinor(a: Complex64, b: Complex64, spatial: StateSpec) -> Self {
        StateSpec::Spinor {
            chi: [a, b],
            spatial: Box::new(spatial),
        }
    }

    /// Parses a descriptor string; returns the `StateSpec` plus its units.
    pub fn parse(text: &str) -> Result<(StateSpec, Units)> {
        Self::from_descriptor(&Descriptor::parse(text)?)
    }

    pub fn from_descriptor(d: &Descriptor) -> Result<(StateSpec, Units)> {
        let units = Units {
            hbar: d.get_or("hbar", 1.0)?,
            mass: d.get_or("m", 1.0)?,
        };
        let with_units = |extra: &[&str]| {
            let mut keys = vec!["hbar", "m"];
            keys.extend_from_slice(extra);
            d.expect_keys(&keys)
        };
        let spec = match d.name.as_str() {
            "ho1d" => {
                with_units(&["n", "omega"])?;
                StateSpec::Ho1d {
                    n: d.get_or("n", 0)?,
                    omega: d.get_or("omega", 1.0)?,
                }
            }
            "ho2d" => {
                with_units(&["nx", "ny", "omega"])?;
                StateSpec::Ho2d {
                    nx: d.get_or("nx", 0)?,
                    ny: d.get_or("ny", 0)?,
                    omega: d.get_or("omega", 1.0)?,
                }
            }
            "ho2d_angular" => {
                with_units(&["l", "omega"])?;
                StateSpec::Ho2dAngular {
                    l: d.get_or("l", 1)?,
                    omega: d.get_or("omega", 1.0)?,
                }
            }
            "hydrogen_1s" => {
                with_units(&[])?;
                StateSpec::Hydrogen1s
            }
            "gaussian" => {
                with_units(&["x0", "p0", "sigma"])?;
                StateSpec::Gaussian {
                    x0: d.get_or("x0", 0.0)?,
                    p0: d.get_or("p0", 0.0)?,
                    sigma: d.get_or("sigma", 1.0)?,
                }
            }
            "spinor" | "spinor_uniform" => {
                with_units(&["a", "b", "a_im", "b_im", "theta", "n", "omega"])?;
                let (a, b) = match d.get::<f64>("theta")? {
                    Some(theta) => {
                        if d.has("a") || d.has("b") {
                            return Err(Error::Descriptor {
                                descriptor: d.source().into(),
                                reason: "give either theta or a/b".into(),
                            });
                        }
                        (
                            Complex64::new(theta.cos(), 0.0),
                            Complex64::new(theta.sin(), 0.0),
                        )
                    }
                    None => {
                        // spinor_uniform defaults to equal weights
                        let b0 = if d.name == "spinor_uniform" { 1.0 } else { 0.0 };
                        (
                            Complex64::new(d.get_or("a", 1.0)?, d.get_or("a_im", 0.0)?),
                            Complex64::new(d.get_or("b", b0)?, d.get_or("b_im", 0.0)?),
                        )
                    }
                };
                StateSpec::Spinor {
                    chi: [a, b],
                    spatial: Box::new(StateSpec::Ho1d {
                        n: d.get_or("n", 0)?,
                        omega: d.get_or("omega", 1.0)?,
                    }),
                }
            }
            "spinor_split" => {
                with_units(&["s"])?;
                StateSpec::SpinorSplit {
                    separation: d.get_or("s", DEFAULT_SPLIT_SEPARATION)?,
                }
            }
            other => {
                return Err(Error::Unknown {
                    what: "state",
                    name: other.to_string(),
                })
            }
        };
        Ok((spec, units))
    }
}

#[derive(Clone, Debug)]
enum Kind {
    /// `scale = √(mω/ħ)`
    Ho1d { n: u32, scale: f64 },
    Ho2d { nx: u32, ny: u32, scale: f64 },
    Ho2dAngular { l: f64, scale: f64 },
    Hydrogen1s { radius: f64 },
    Gaussian { x0: f64, k0: f64, sigma: f64 },
    Spinor { chi: [Complex64; 2], spatial: Box<WaveFunction> },
    Split { half: f64, scale: f64 },
}

/// A normalized d-dimensional, possibly two-component, wave function.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    kind: Kind,
    label: String,
    dim: usize,
    components: usize,
    units: Units,
    decay_rate: f64,
    reach: f64,
    nodal_hint: NodalHint,
    peak: f64,
    stationary: bool,
    energy: Option<f64>,
    potential: Option<Potential>,
    real_valued: bool,
    radial: bool,
}

/// Builds a catalog state with natural units.
pub fn make_state(spec: &StateSpec) -> Result<WaveFunction> {
    WaveFunction::new(spec, Units::default())
}

/// Parses and builds a state from a descriptor such as `ho1d:n=2`.
pub fn parse_state(text: &str) -> Result<WaveFunction> {
    let (spec, units) = StateSpec::parse(text)?;
    WaveFunction::new(&spec, units)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl WaveFunction {
    pub fn new(spec: &StateSpec, units: Units) -> Result<Self> {
        positive("hbar", units.hbar)?;
        positive("mass", units.mass)?;
        let hbar = units.hbar;
        let mass = units.mass;
        let wf = match spec {
            StateSpec::Ho1d { n, omega } => {
                let omega = positive("omega", *omega)?;
                let scale = (mass * omega / hbar).sqrt();
                let (roots, peak) = hermite_roots_and_peak(*n);
                WaveFunction {
                    kind: Kind::Ho1d { n: *n, scale },
                    label: format!("ho1d(n={n})"),
                    dim: 1,
                    components: 1,
                    units,
                    decay_rate: 3.0 * scale,
                    reach: 0.0,
                    nodal_hint: points_or_empty(roots.iter().map(|r| vec![r / scale]).collect()),
                    peak: peak * scale.sqrt(),
                    stationary: true,
                    energy: Some(hbar * omega * (*n as f64 + 0.5)),
                    potential: Some(Potential::Harmonic { mass, omega }),
                    real_valued: true,
                    radial: false,
                }
            }
            StateSpec::Ho2d { nx, ny, omega } => {
                let omega = positive("omega", *omega)?;
                let scale = (mass * omega / hbar).sqrt();
                let (rx, px) = hermite_roots_and_peak(*nx);
                let (ry, py) = hermite_roots_and_peak(*ny);
                let planes: Vec<Hyperplane> = rx
                    .iter()
                    .map(|r| Hyperplane { axis: 0, offset: r / scale })
                    .chain(ry.iter().map(|r| Hyperplane { axis: 1, offset: r / scale }))
                    .collect();
                WaveFunction {
                    kind: Kind::Ho2d { nx: *nx, ny: *ny, scale },
                    label: format!("ho2d(nx={nx},ny={ny})"),
                    dim: 2,
                    components: 1,
                    units,
                    decay_rate: 3.0 * scale,
                    reach: 0.0,
                    nodal_hint: if planes.is_empty() {
                        NodalHint::Empty
                    } else {
                        NodalHint::Hyperplanes(planes)
                    },
                    peak: px * py * scale,
                    stationary: true,
                    energy: Some(hbar * omega * (*nx as f64 + *ny as f64 + 1.0)),
                    potential: Some(Potential::Harmonic { mass, omega }),
                    real_valued: true,
                    radial: false,
                }
            }
            StateSpec::Ho2dAngular { l, omega } => {
                if l.abs() != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "ho2d_angular supports l = ±1, got {l}"
                    )));
                }
                let omega = positive("omega", *omega)?;
                let scale = (mass * omega / hbar).sqrt();
                WaveFunction {
                    kind: Kind::Ho2dAngular { l: *l as f64, scale },
                    label: format!("ho2d_angular(l={l:+})"),
                    dim: 2,
                    components: 1,
                    units,
                    decay_rate: 3.0 * scale,
                    reach: 0.0,
                    nodal_hint: NodalHint::Points(vec![vec![0.0, 0.0]]),
                    peak: scale * (-0.5f64).exp() / PI.sqrt(),
                    stationary: true,
                    energy: Some(2.0 * hbar * omega),
                    potential: Some(Potential::Harmonic { mass, omega }),
                    real_valued: false,
                    radial: true,
                }
            }
            StateSpec::Hydrogen1s => {
                let radius = hbar * hbar / mass;
                WaveFunction {
                    kind: Kind::Hydrogen1s { radius },
                    label: "hydrogen_1s".into(),
                    dim: 3,
                    components: 1,
                    units,
                    decay_rate: 1.0 / radius,
                    reach: 0.0,
                    nodal_hint: NodalHint::Empty,
                    peak: 1.0 / (PI * radius.powi(3)).sqrt(),
                    stationary: true,
                    energy: Some(-hbar * hbar / (2.0 * mass * radius * radius)),
                    potential: Some(Potential::Coulomb { strength: 1.0 }),
                    real_valued: true,
                    radial: true,
                }
            }
            StateSpec::Gaussian { x0, p0, sigma } => {
                let sigma = positive("sigma", *sigma)?;
                if !x0.is_finite() || !p0.is_finite() {
                    return Err(Error::InvalidParameter("x0 and p0 must be finite".into()));
                }
                WaveFunction {
                    kind: Kind::Gaussian {
                        x0: *x0,
                        k0: p0 / hbar,
                        sigma,
                    },
                    label: format!("gaussian(x0={x0},p0={p0},sigma={sigma})"),
                    dim: 1,
                    components: 1,
                    units,
                    decay_rate: 3.0 / (SQRT_2 * sigma),
                    reach: x0.abs(),
                    nodal_hint: NodalHint::Empty,
                    peak: (2.0 * PI * sigma * sigma).powf(-0.25),
                    stationary: false,
                    energy: None,
                    potential: None,
                    real_valued: *p0 == 0.0,
                    radial: false,
                }
            }
            StateSpec::Spinor { chi, spatial } => {
                let inner = WaveFunction::new(spatial, units)?;
                if inner.components != 1 {
                    return Err(Error::InvalidParameter("spinor spatial part must be scalar".into()));
                }
                let norm = (chi[0].norm_sqr() + chi[1].norm_sqr()).sqrt();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(Error::InvalidParameter("spinor amplitudes must not both vanish".into()));
                }
                let chi = [chi[0] / norm, chi[1] / norm];
                WaveFunction {
                    label: format!(
                        "spinor(a={},b={};{})",
                        fmt_c(chi[0]),
                        fmt_c(chi[1]),
                        inner.label
                    ),
                    dim: inner.dim,
                    components: 2,
                    units,
                    decay_rate: inner.decay_rate,
                    reach: inner.reach,
                    nodal_hint: inner.nodal_hint.clone(),
                    peak: inner.peak,
                    stationary: inner.stationary,
                    energy: inner.energy,
                    potential: inner.potential.clone(),
                    real_valued: inner.real_valued && chi.iter().all(|c| c.im == 0.0),
                    radial: inner.radial,
                    kind: Kind::Spinor {
                        chi,
                        spatial: Box::new(inner),
                    },
                }
            }
            StateSpec::SpinorSplit { separation } => {
                let separation = positive("separation", *separation)?;
                let scale = 1.0;
                WaveFunction {
                    kind: Kind::Split {
                        half: 0.5 * separation,
                        scale,
                    },
                    label: format!("spinor_split(s={separation})"),
                    dim: 1,
                    components: 2,
                    units,
                    decay_rate: 3.0 * scale,
                    reach: 0.5 * separation,
                    nodal_hint: NodalHint::Empty,
                    peak: PI.powf(-0.25) / SQRT_2,
                    stationary: false,
                    energy: None,
                    potential: None,
                    real_valued: true,
                    radial: false,
                }
            }
        };
        Ok(wf)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn hbar(&self) -> f64 {
        self.units.hbar
    }

    pub fn mass(&self) -> f64 {
        self.units.mass
    }

    /// `α` in `|ψ(x)| ≤ C e^{−α|x|}`.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    /// Extra half-width needed beyond the decay-derived box (displaced packets).
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn nodal_hint(&self) -> &NodalHint {
        &self.nodal_hint
    }

    /// `max |ψ|` over configuration space.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn node_threshold(&self) -> f64 {
        NODE_THRESHOLD * self.peak
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn energy(&self) -> Option<f64> {
        self.energy
    }

    /// Potential for which this state is an eigenstate, when there is one.
    pub fn potential(&self) -> Option<&Potential> {
        self.potential.as_ref()
    }

    /// True when every component is real-valued everywhere.
    pub fn is_real(&self) -> bool {
        self.real_valued
    }

    /// True when `|ψ|` is rotationally symmetric about the origin in d ≥ 2.
    pub fn is_radial(&self) -> bool {
        self.radial
    }

    /// Taylor jets of every component at `x` up to `order`.
    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        assert_eq!(x.len(), self.dim, "position dimension mismatch");
        let layout = Layout::get(self.dim, order);
        let vars = Jet::variables(layout, x);
        self.eval(&vars)
    }

    /// Values and gradients of every component.
    pub fn gradient(&self, x: &[f64]) -> Vec<Grad> {
        assert_eq!(x.len(), self.dim, "position dimension mismatch");
        self.eval(&Grad::variables(x))
    }

    fn eval<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        match &self.kind {
            Kind::Ho1d { n, scale } => {
                vec![hermite_function(*n, v[0] * *scale) * scale.sqrt()]
            }
            Kind::Ho2d { nx, ny, scale } => {
                vec![hermite_function(*nx, v[0] * *scale) * hermite_function(*ny, v[1] * *scale) * *scale]
            }
            Kind::Ho2dAngular { l, scale } => {
                let x = v[0] * *scale;
                let y = v[1] * *scale;
                let envelope = ((x * x + y * y) * -0.5).exp();
                let poly = x + y * Complex64::new(0.0, *l);
                vec![poly * envelope * (*scale / PI.sqrt())]
            }
            Kind::Hydrogen1s { radius } => {
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                vec![(r * (-1.0 / radius)).exp() * (1.0 / (PI * radius.powi(3)).sqrt())]
            }
            Kind::Gaussian { x0, k0, sigma } => {
                let dx = v[0] + (-x0);
                let arg = dx * dx * (-1.0 / (4.0 * sigma * sigma)) + v[0] * Complex64::new(0.0, *k0);
                vec![arg.exp() * (2.0 * PI * sigma * sigma).powf(-0.25)]
            }
            Kind::Spinor { chi, spatial } => {
                let phi = spatial.eval(v)[0];
                vec![phi * chi[0], phi * chi[1]]
            }
            Kind::Split { half, scale } => {
                let up = hermite_function(0, (v[0] + (-half)) * *scale);
                let down = hermite_function(0, (v[0] + *half) * *scale);
                let c = scale.sqrt() / SQRT_2;
                vec![up * c, down * c]
            }
        }
    }

    /// `ψ(x)` for every component.
    pub fn value(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim, "position dimension mismatch");
        let vars: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.eval(&vars)
    }

    /// `|ψ(x)|² = ψ†ψ`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.value(x).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `|ψ(x)|`
    pub fn amplitude(&self, x: &[f64]) -> f64 {
        self.density(x).sqrt()
    }

    pub fn is_at_node(&self, x: &[f64]) -> bool {
        self.at_node(x, self.amplitude(x))
    }

    /// Node test given `|ψ(x)|`: below threshold and either within one
    /// length scale of a declared node or underflowed to zero. Exponentially
    /// small far-field values are not nodes.
    pub fn at_node(&self, x: &[f64], amplitude: f64) -> bool {
        amplitude < self.node_threshold()
            && (amplitude == 0.0 || self.nodal_hint.distance(x) < 3.0 / self.decay_rate)
    }

    /// `∂^α ψ(x)` for every component; `|α| ≤ 4`.
    pub fn partial(&self, x: &[f64], alpha: MultiIndex) -> Result<Vec<Complex64>> {
        let order = alpha.order();
        if order > MAX_ORDER {
            return Err(Error::DerivativeOrder {
                requested: order,
                available: MAX_ORDER,
            });
        }
        if alpha.min_dim() > self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: alpha.min_dim(),
            });
        }
        Ok(self
            .jets(x, order)
            .iter()
            .map(|j| j.partial(alpha).expect("alpha within layout"))
            .collect())
    }

    /// All partials up to `order` at `x`.
    pub fn derivatives(&self, x: &[f64], order: usize) -> Result<Derivatives> {
        if order > MAX_ORDER {
            return Err(Error::DerivativeOrder {
                requested: order,
                available: MAX_ORDER,
            });
        }
        self.check_dim(x)?;
        Ok(Derivatives {
            jets: self.jets(x, order),
        })
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn at_node_error(&self, x: &[f64], amplitude: f64) -> Error {
        Error::AtNode {
            x: x.to_vec(),
            amplitude,
            threshold: self.node_threshold(),
        }
    }
}

/// Partial derivatives of every component at one point.
#[derive(Clone, Debug)]
pub struct Derivatives {
    jets: Vec<Jet>,
}

impl Derivatives {
    pub fn from_jets(jets: Vec<Jet>) -> Self {
        Derivatives { jets }
    }

    pub fn components(&self) -> usize {
        self.jets.len()
    }

    pub fn order(&self) -> usize {
        self.jets[0].layout().order()
    }

    pub fn dim(&self) -> usize {
        self.jets[0].layout().dim()
    }

    pub fn jets(&self) -> &[Jet] {
        &self.jets
    }

    pub fn value(&self) -> Vec<Complex64> {
        self.jets.iter().map(Jet::value).collect()
    }

    pub fn partial(&self, component: usize, alpha: MultiIndex) -> Option<Complex64> {
        self.jets[component].partial(alpha)
    }

    /// `a·self + b·other`, componentwise.
    pub fn combine(&self, a: Complex64, other: &Derivatives, b: Complex64) -> Derivatives {
        Derivatives {
            jets: self
                .jets
                .iter()
                .zip(&other.jets)
                .map(|(p, q)| p.scale(a) + q.scale(b))
                .collect(),
        }
    }
}

/// Sample of the polar representation `ψ = R e^{iS/ħ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolarSample {
    pub amplitude: f64,
    pub phase_gradient: Vec<f64>,
}

/// `R = |ψ|` and `∇S = ħ Im[∇ψ/ψ]` for a scalar state away from nodes.
pub fn polar(psi: &WaveFunction, x: &[f64]) -> Result<PolarSample> {
    if psi.components() != 1 {
        return Err(Error::Unsupported("polar form of a multi-component state".into()));
    }
    psi.check_dim(x)?;
    let jets = psi.jets(x, 1);
    let j = &jets[0];
    let v = j.value();
    let amplitude = v.norm();
    if psi.at_node(x, amplitude) {
        return Err(psi.at_node_error(x, amplitude));
    }
    let phase_gradient = (0..psi.dim())
        .map(|axis| psi.hbar() * (j.partial(MultiIndex::unit(axis)).unwrap() / v).im)
        .collect();
    Ok(PolarSample {
        amplitude,
        phase_gradient,
    })
}

fn points_or_empty(points: Vec<Vec<f64>>) -> NodalHint {
    if points.is_empty() {
        NodalHint::Empty
    } else {
        NodalHint::Points(points)
    }
}

fn fmt_c(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{}{:+}i", c.re, c.im)
    }
}

/// Normalized Hermite function `φ_n(ξ) = (2ⁿ n! √π)^{-1/2} H_n(ξ) e^{−ξ²/2}`
/// via the three-term recurrence, propagated through jets.
pub(crate) fn hermite_function<T: Scalar>(n: u32, xi: T) -> T {
    let g = ((xi * xi) * -0.5).exp() * PI.powf(-0.25);
    if n == 0 {
        return g;
    }
    let mut prev = g;
    let mut cur = xi * g * SQRT_2;
    for k in 1..n {
        let k = k as f64;
        let next = xi * cur * (2.0 / (k + 1.0)).sqrt() - prev * (k / (k + 1.0)).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Scalar `φ_n(ξ)`.
pub(crate) fn hermite_function_value(n: u32, xi: f64) -> f64 {
    let g = (-0.5 * xi * xi).exp() * PI.powf(-0.25);
    if n == 0 {
        return g;
    }
    let mut prev = g;
    let mut cur = SQRT_2 * xi * g;
    for k in 1..n {
        let k = k as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * xi * cur - (k / (k + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Roots of `φ_n` (ascending, in ξ units) and `max |φ_n|`.
fn hermite_roots_and_peak(n: u32) -> (Vec<f64>, f64) {
    let bound = (2.0 * n as f64 + 1.0).sqrt() + 4.0;
    let steps = 4000 * (n as usize + 1);
    let h = 2.0 * bound / steps as f64;
    let mut roots = Vec::new();
    let mut best = (0.0f64, 0.0f64);
    let mut prev_x = -bound;
    let mut prev_f = hermite_function_value(n, prev_x);
    for i in 1..=steps {
        let x = -bound + i as f64 * h;
        let f = hermite_function_value(n, x);
        if f.abs() > best.1 {
            best = (x, f.abs());
        }
        if f == 0.0 {
            roots.push(x);
        } else if prev_f != 0.0 && f.signum() != prev_f.signum() {
            let (mut a, mut b, mut fa) = (prev_x, x, prev_f);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = hermite_function_value(n, m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_f = f;
    }
    // Golden-section refinement of the peak.
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if hermite_function_value(n, c).abs() > hermite_function_value(n, d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    let peak = hermite_function_value(n, 0.5 * (a + b)).abs().max(best.1);
    // Symmetric polynomials: snap the central root.
    for r in &mut roots {
        if r.abs() < 1e-12 {
            *r = 0.0;
        }
    }
    (roots, peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_value() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let v = psi.value(&[0.7])[0];
        let want = PI.powf(-0.25) * (-0.245f64).exp();
        assert!((v.re - want).abs() < 1e-15);
        assert_eq!(v.im, 0.0);
        assert!(psi.nodal_hint().is_empty());
    }

    #[test]
    fn first_excited_node_at_origin() {
        let psi = make_state(&StateSpec::ho1d(1)).unwrap();
        assert_eq!(psi.nodal_hint(), &NodalHint::Points(vec![vec![0.0]]));
        assert_eq!(psi.value(&[0.0])[0].norm(), 0.0);
    }

    #[test]
    fn second_excited_nodes() {
        let psi = make_state(&StateSpec::ho1d(2)).unwrap();
        let c = psi.nodal_hint().axis_coordinates(0);
        assert_eq!(c.len(), 2);
        assert!((c[1] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((c[0] + 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn spinor_up_has_empty_lower_component() {
        let spec = StateSpec::spinor(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), StateSpec::ho1d(0));
        let psi = make_state(&spec).unwrap();
        assert_eq!(psi.components(), 2);
        for x in [-2.0, 0.0, 1.3] {
            assert_eq!(psi.value(&[x])[1].norm(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_state(&StateSpec::Gaussian { x0: 0.0, p0: 0.0, sigma: 0.0 }).is_err());
        assert!(make_state(&StateSpec::Gaussian { x0: 0.0, p0: 0.0, sigma: -1.0 }).is_err());
        assert!(make_state(&StateSpec::ho2d_angular(2)).is_err());
        assert!(matches!(parse_state("ho3d:n=1"), Err(Error::Unknown { .. })));
        assert!(parse_state("ho1d:n=-1").is_err());
        assert!(parse_state("ho1d:k=1").is_err());
    }

    #[test]
    fn polar_examples() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        let p = polar(&psi, &[0.7]).unwrap();
        assert!((p.amplitude - PI.powf(-0.25) * (-0.245f64).exp()).abs() < 1e-15);
        assert_eq!(p.phase_gradient, vec![0.0]);

        let psi = make_state(&StateSpec::ho2d_angular(1)).unwrap();
        let p = polar(&psi, &[1.0, 0.0]).unwrap();
        assert!(p.phase_gradient[0].abs() < 1e-14);
        assert!((p.phase_gradient[1] - 1.0).abs() < 1e-14);

        let psi = make_state(&StateSpec::Gaussian { x0: 0.0, p0: 2.0, sigma: 1.0 }).unwrap();
        for x in [-1.5, 0.0, 0.4, 2.0] {
            let p = polar(&psi, &[x]).unwrap();
            assert!((p.phase_gradient[0] - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn polar_errors() {
        let psi = make_state(&StateSpec::ho1d(1)).unwrap();
        assert!(matches!(polar(&psi, &[0.0]), Err(Error::AtNode { .. })));
        let spinor = parse_state("spinor:a=1,b=1").unwrap();
        assert!(matches!(polar(&spinor, &[0.0]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn value_and_gradient_paths_match_jets() {
        for spec in [
            StateSpec::ho1d(3),
            StateSpec::ho2d(1, 2),
            StateSpec::ho2d_angular(-1),
            StateSpec::Hydrogen1s,
            StateSpec::Gaussian { x0: 0.3, p0: 1.5, sigma: 0.7 },
            StateSpec::SpinorSplit { separation: 4.0 },
        ] {
            let psi = make_state(&spec).unwrap();
            let x = [0.31, -0.72, 0.45];
            let x = &x[..psi.dim()];
            let jets = psi.jets(x, 1);
            let grads = psi.gradient(x);
            for (j, g) in jets.iter().zip(&grads) {
                assert!((j.value() - g.v).norm() <= 1e-15 * g.v.norm().max(1e-300));
                assert_eq!(psi.value(x)[0], psi.jets(x, 0)[0].value());
                for k in 0..psi.dim() {
                    let d = j.partial(MultiIndex::unit(k)).unwrap();
                    assert!((d - g.d[k]).norm() <= 1e-14 * (1.0 + d.norm()), "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn derivative_order_limit() {
        let psi = make_state(&StateSpec::ho1d(0)).unwrap();
        assert!(psi.partial(&[0.1], MultiIndex::pure(0, 4)).is_ok());
        assert!(matches!(
            psi.partial(&[0.1], MultiIndex::pure(0, 5)),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn descriptor_units_and_spinor_angle() {
        let (spec, units) = StateSpec::parse("ho1d:n=3,hbar=0.5,m=2").unwrap();
        assert_eq!(spec, StateSpec::Ho1d { n: 3, omega: 1.0 });
        assert_eq!(units, Units { hbar: 0.5, mass: 2.0 });
        let psi = parse_state("spinor_uniform:theta=0.3").unwrap();
        let v = psi.value(&[0.0]);
        assert!((v[1].re / v[0].re - 0.3f64.tan()).abs() < 1e-14);
    }
}
