use std::fmt;
use std::sync::Arc;

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};

/// Real scalar potential `V(x)`.
#[derive(Clone)]
pub enum Potential {
    Zero,
    /// `½ m ω² |x|²`
    Harmonic { mass: f64, omega: f64 },
    /// `−strength / |x|`
    Coulomb { strength: f64 },
    Custom {
        name: String,
        bounded: bool,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl Potential {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Harmonic { mass, omega } => {
                0.5 * mass * omega * omega * x.iter().map(|v| v * v).sum::<f64>()
            }
            Potential::Coulomb { strength } => {
                -strength / x.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            Potential::Custom { f, .. } => f(x),
        }
    }

    /// Whether the potential is bounded on all of ℝ^d.
    pub fn is_bounded(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::Harmonic { .. } | Potential::Coulomb { .. } => false,
            Potential::Custom { bounded, .. } => *bounded,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Potential::Zero => "zero".into(),
            Potential::Harmonic { .. } => "ho".into(),
            Potential::Coulomb { .. } => "coulomb".into(),
            Potential::Custom { name, .. } => name.clone(),
        }
    }

    /// Parses `ho`, `coulomb` or `zero`, taking units from the caller.
    pub fn from_name(name: &str, mass: f64, omega: f64) -> Result<Self> {
        match name {
            "ho" | "harmonic" => Ok(Potential::Harmonic { mass, omega }),
            "coulomb" => Ok(Potential::Coulomb { strength: 1.0 }),
            "zero" | "none" | "free" => Ok(Potential::Zero),
            other => Err(Error::Unknown {
                what: "potential",
                name: other.to_string(),
            }),
        }
    }

    pub fn from_descriptor(d: &Descriptor, mass: f64) -> Result<Self> {
        let omega = d.get_or("omega", 1.0)?;
        Self::from_name(&d.name, mass, omega)
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Harmonic { mass, omega } => write!(f, "Harmonic(m={mass}, ω={omega})"),
            Potential::Coulomb { strength } => write!(f, "Coulomb({strength})"),
            Potential::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}
