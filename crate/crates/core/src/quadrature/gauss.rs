//! One-dimensional rules on `[-1, 1]`.

use std::f64::consts::PI;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    GaussLegendre,
    Midpoint,
}

impl Rule {
    pub fn parse(s: &str) -> Option<Rule> {
        match s {
            "gauss" | "gauss_legendre" | "gl" => Some(Rule::GaussLegendre),
            "midpoint" => Some(Rule::Midpoint),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rule::GaussLegendre => "gauss_legendre",
            Rule::Midpoint => "midpoint",
        }
    }

    /// Nodes and weights on `[-1, 1]`.
    pub fn nodes(self, n: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Rule::GaussLegendre => gauss_legendre(n),
            Rule::Midpoint => midpoint(n),
        }
    }
}

pub fn midpoint(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / n as f64;
    ((0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).collect(), vec![h; n])
}

/// Gauss–Legendre nodes (ascending) and weights by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `P_n(z)` and `P_n'(z)`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
