//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(x) / α!` of a complex
//! function at a point for every multi-index with `|α| ≤ order`. Arithmetic
//! on jets propagates derivatives exactly (up to rounding), which is how the
//! state catalog produces analytic partial derivatives without finite
//! differences.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

/// Largest spatial dimension supported.
pub const MAX_DIM: usize = 3;
/// Largest derivative order supported.
pub const MAX_ORDER: usize = 4;
/// Number of multi-indices with `|α| ≤ 4` in three dimensions.
pub const MAX_TERMS: usize = 35;

/// Multi-index `α = (α₁, …, α_d)`; unused trailing axes are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub [u8; MAX_DIM]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0; MAX_DIM]);

    /// `e_axis`, zero-based.
    pub fn unit(axis: usize) -> Self {
        let mut p = [0; MAX_DIM];
        p[axis] = 1;
        MultiIndex(p)
    }

    /// `k·e_axis`, zero-based.
    pub fn pure(axis: usize, k: u8) -> Self {
        let mut p = [0; MAX_DIM];
        p[axis] = k;
        MultiIndex(p)
    }

    pub fn from_slice(powers: &[u8]) -> Option<Self> {
        if powers.len() > MAX_DIM {
            return None;
        }
        let mut p = [0; MAX_DIM];
        p[..powers.len()].copy_from_slice(powers);
        Some(MultiIndex(p))
    }

    /// `|α|`
    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// `α!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&a| (1..=a as u32).map(f64::from).product::<f64>())
            .product()
    }

    /// Highest axis (one-based count) with a non-zero power.
    pub fn min_dim(&self) -> usize {
        self.0.iter().rposition(|&a| a != 0).map_or(0, |i| i + 1)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}/{}/{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Index tables shared by every jet of a given dimension and order.
pub struct Layout {
    dim: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    /// `(i, j, k)` with `indices[i] + indices[j] == indices[k]`.
    products: Vec<(u8, u8, u8)>,
    /// Offset of the first index of each total degree, plus the length.
    degree_start: Vec<usize>,
}

impl Layout {
    fn build(dim: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        let mut degree_start = Vec::new();
        for deg in 0..=order {
            degree_start.push(indices.len());
            // Lexicographically descending in the first axis.
            let mut level = Vec::new();
            enumerate(dim, deg, &mut [0; MAX_DIM], 0, &mut level);
            level.sort_by(|a: &MultiIndex, b| b.cmp(a));
            indices.extend(level);
        }
        degree_start.push(indices.len());
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                let mut s = [0u8; MAX_DIM];
                for t in 0..MAX_DIM {
                    s[t] = a.0[t] + b.0[t];
                }
                let sum = MultiIndex(s);
                if sum.order() <= order {
                    let k = indices.iter().position(|m| *m == sum).unwrap();
                    products.push((i as u8, j as u8, k as u8));
                }
            }
        }
        Layout {
            dim,
            order,
            indices,
            products,
            degree_start,
        }
    }

    /// Shared layout for `dim ∈ 1..=3`, `order ∈ 0..=4`.
    pub fn get(dim: usize, order: usize) -> &'static Layout {
        static LAYOUTS: OnceLock<Vec<Layout>> = OnceLock::new();
        assert!((1..=MAX_DIM).contains(&dim), "jet dimension {dim} out of range");
        assert!(order <= MAX_ORDER, "jet order {order} out of range");
        let all = LAYOUTS.get_or_init(|| {
            let mut v = Vec::new();
            for d in 1..=MAX_DIM {
                for o in 0..=MAX_ORDER {
                    v.push(Layout::build(d, o));
                }
            }
            v
        });
        &all[(dim - 1) * (MAX_ORDER + 1) + order]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, alpha: MultiIndex) -> Option<usize> {
        if alpha.order() > self.order || alpha.min_dim() > self.dim {
            return None;
        }
        let deg = alpha.order();
        let range = self.degree_start[deg]..self.degree_start[deg + 1];
        self.indices[range.clone()]
            .iter()
            .position(|m| *m == alpha)
            .map(|p| p + range.start)
    }
}

fn enumerate(dim: usize, remaining: usize, cur: &mut [u8; MAX_DIM], axis: usize, out: &mut Vec<MultiIndex>) {
    if axis + 1 == dim {
        cur[axis] = remaining as u8;
        out.push(MultiIndex(*cur));
        cur[axis] = 0;
        return;
    }
    for k in 0..=remaining {
        cur[axis] = k as u8;
        enumerate(dim, remaining - k, cur, axis + 1, out);
    }
    cur[axis] = 0;
}

/// Truncated Taylor expansion of a complex function of `d` real variables.
#[derive(Clone, Copy)]
pub struct Jet {
    layout: &'static Layout,
    c: [Complex64; MAX_TERMS],
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.layout.dim)
            .field("order", &self.layout.order)
            .field("coeffs", &&self.c[..self.layout.len()])
            .finish()
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl Jet {
    pub fn constant(layout: &'static Layout, value: Complex64) -> Self {
        let mut c = [ZERO; MAX_TERMS];
        c[0] = value;
        Jet { layout, c }
    }

    pub fn real(layout: &'static Layout, value: f64) -> Self {
        Self::constant(layout, Complex64::new(value, 0.0))
    }

    /// The coordinate function `x_axis` expanded about `value`.
    pub fn variable(layout: &'static Layout, axis: usize, value: f64) -> Self {
        let mut j = Self::real(layout, value);
        if layout.order >= 1 {
            let k = layout.position(MultiIndex::unit(axis)).expect("axis within layout");
            j.c[k] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// Coordinate jets for every axis of the point `x`.
    pub fn variables(layout: &'static Layout, x: &[f64]) -> Vec<Jet> {
        x.iter()
            .enumerate()
            .map(|(axis, &v)| Self::variable(layout, axis, v))
            .collect()
    }

    pub fn layout(&self) -> &'static Layout {
        self.layout
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.c[..self.layout.len()]
    }

    /// Taylor coefficient `∂^α f / α!`, zero when α lies beyond the layout.
    pub fn coeff(&self, alpha: MultiIndex) -> Complex64 {
        self.layout.position(alpha).map_or(ZERO, |k| self.c[k])
    }

    /// `∂^α f`; `None` when α exceeds the jet's order or dimension.
    pub fn partial(&self, alpha: MultiIndex) -> Option<Complex64> {
        self.layout.position(alpha).map(|k| self.c[k] * alpha.factorial())
    }

    pub fn scale(mut self, s: Complex64) -> Self {
        for v in &mut self.c[..self.layout.len()] {
            *v *= s;
        }
        self
    }

    pub fn conj(mut self) -> Self {
        for v in &mut self.c[..self.layout.len()] {
            *v = v.conj();
        }
        self
    }

    /// `Σ_k series[k]·(f − f(x))^k`, i.e. `F ∘ f` when `series[k] = F^{(k)}(f(x))/k!`.
    pub fn compose(&self, series: &[Complex64]) -> Jet {
        let n = series.len().min(self.layout.order + 1);
        let mut g = *self;
        g.c[0] = ZERO;
        let mut acc = Jet::constant(self.layout, series[n - 1]);
        for k in (0..n - 1).rev() {
            acc = acc * g;
            acc.c[0] += series[k];
        }
        acc
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.c[0].exp();
        let mut series = [ZERO; MAX_ORDER + 1];
        let mut fact = 1.0;
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *s = e0 / fact;
        }
        self.compose(&series)
    }

    /// Principal square root; the base value must be non-zero.
    pub fn sqrt(&self) -> Jet {
        let v = self.c[0];
        let mut series = [ZERO; MAX_ORDER + 1];
        let mut binom = 1.0;
        let mut pow = v.sqrt();
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
                pow /= v;
            }
            *s = pow * binom;
        }
        self.compose(&series)
    }

    pub fn recip(&self) -> Jet {
        let v = self.c[0];
        let mut series = [ZERO; MAX_ORDER + 1];
        let mut pow = 1.0 / v;
        for (k, s) in series.iter_mut().enumerate() {
            if k > 0 {
                pow /= -v;
            }
            *s = pow;
        }
        self.compose(&series)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        debug_assert!(std::ptr::eq(self.layout, rhs.layout));
        for k in 0..self.layout.len() {
            self.c[k] += rhs.c[k];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for k in 0..self.layout.len() {
            self.c[k] -= rhs.c[k];
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        debug_assert!(std::ptr::eq(self.layout, rhs.layout));
        let mut out = [ZERO; MAX_TERMS];
        for &(i, j, k) in &self.layout.products {
            out[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Jet {
            layout: self.layout,
            c: out,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

impl Mul<Complex64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: Complex64) -> Jet {
        self.scale(rhs)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

/// Arithmetic shared by [`Jet`], [`Grad`] and plain complex values, so a
/// closed form written once evaluates at any derivative depth.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Mul<Complex64, Output = Self>
    + Add<f64, Output = Self>
    + Neg<Output = Self>
{
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
}

impl Scalar for Jet {
    fn exp(self) -> Self {
        Jet::exp(&self)
    }
    fn sqrt(self) -> Self {
        Jet::sqrt(&self)
    }
}

impl Scalar for Complex64 {
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
}

/// Value and gradient: a first-order jet without the fixed 35-slot storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grad {
    pub v: Complex64,
    pub d: [Complex64; MAX_DIM],
}

impl Grad {
    pub fn variables(x: &[f64]) -> Vec<Grad> {
        (0..x.len())
            .map(|axis| {
                let mut d = [ZERO; MAX_DIM];
                d[axis] = Complex64::new(1.0, 0.0);
                Grad {
                    v: Complex64::new(x[axis], 0.0),
                    d,
                }
            })
            .collect()
    }

    fn chain(self, v: Complex64, dv: Complex64) -> Grad {
        Grad {
            v,
            d: self.d.map(|g| g * dv),
        }
    }
}

impl Add for Grad {
    type Output = Grad;
    fn add(self, r: Grad) -> Grad {
        Grad {
            v: self.v + r.v,
            d: [self.d[0] + r.d[0], self.d[1] + r.d[1], self.d[2] + r.d[2]],
        }
    }
}

impl Sub for Grad {
    type Output = Grad;
    fn sub(self, r: Grad) -> Grad {
        Grad {
            v: self.v - r.v,
            d: [self.d[0] - r.d[0], self.d[1] - r.d[1], self.d[2] - r.d[2]],
        }
    }
}

impl Mul for Grad {
    type Output = Grad;
    fn mul(self, r: Grad) -> Grad {
        let d = |k: usize| self.d[k] * r.v + self.v * r.d[k];
        Grad {
            v: self.v * r.v,
            d: [d(0), d(1), d(2)],
        }
    }
}

impl Mul<f64> for Grad {
    type Output = Grad;
    fn mul(self, r: f64) -> Grad {
        Grad {
            v: self.v * r,
            d: self.d.map(|g| g * r),
        }
    }
}

impl Mul<Complex64> for Grad {
    type Output = Grad;
    fn mul(self, r: Complex64) -> Grad {
        Grad {
            v: self.v * r,
            d: self.d.map(|g| g * r),
        }
    }
}

impl Add<f64> for Grad {
    type Output = Grad;
    fn add(mut self, r: f64) -> Grad {
        self.v += r;
        self
    }
}

impl Neg for Grad {
    type Output = Grad;
    fn neg(self) -> Grad {
        self * -1.0
    }
}

impl Scalar for Grad {
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        assert_eq!(Layout::get(1, 4).len(), 5);
        assert_eq!(Layout::get(2, 2).len(), 6);
        assert_eq!(Layout::get(3, 4).len(), MAX_TERMS);
        assert_eq!(Layout::get(3, 0).len(), 1);
    }

    #[test]
    fn polynomial_derivatives() {
        // f(x, y) = x²y at (2, 3): f_x = 12, f_xx = 6, f_xy = 4, f_xxy = 2
        let l = Layout::get(2, 4);
        let x = Jet::variable(l, 0, 2.0);
        let y = Jet::variable(l, 1, 3.0);
        let f = x * x * y;
        assert_eq!(f.value().re, 12.0);
        assert_eq!(f.partial(MultiIndex([1, 0, 0])).unwrap().re, 12.0);
        assert_eq!(f.partial(MultiIndex([2, 0, 0])).unwrap().re, 6.0);
        assert_eq!(f.partial(MultiIndex([1, 1, 0])).unwrap().re, 4.0);
        assert_eq!(f.partial(MultiIndex([2, 1, 0])).unwrap().re, 2.0);
        assert_eq!(f.partial(MultiIndex([0, 2, 0])).unwrap().re, 0.0);
        assert!(f.partial(MultiIndex([0, 0, 1])).is_none());
    }

    #[test]
    fn exp_sqrt_recip() {
        let l = Layout::get(1, 4);
        let x = Jet::variable(l, 0, 0.7);
        let e = (x * 2.0).exp();
        for k in 0..=4u8 {
            let want = 2f64.powi(k as i32) * (1.4f64).exp();
            let got = e.partial(MultiIndex::pure(0, k)).unwrap().re;
            assert!((got - want).abs() < 1e-12 * want, "k={k}");
        }
        let s = x.sqrt();
        // d⁴/dx⁴ √x = −15/16 x^{-7/2}
        let want = -15.0 / 16.0 * 0.7f64.powf(-3.5);
        assert!((s.partial(MultiIndex::pure(0, 4)).unwrap().re - want).abs() < 1e-10 * want.abs());
        let r = x.recip();
        // d³/dx³ 1/x = −6/x⁴
        let want = -6.0 / 0.7f64.powi(4);
        assert!((r.partial(MultiIndex::pure(0, 3)).unwrap().re - want).abs() < 1e-10 * want.abs());
    }
}
