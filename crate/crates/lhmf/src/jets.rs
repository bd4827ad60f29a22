//! Bivariate Wirtinger-Taylor jets and the differential operator calculus.
//!
//! A `Jet` stores the mixed Taylor coefficients
//! coeffs[i][j] = (∂_τ^i ∂_τ̄^j f)(base) / (i! j!) for i + j ≤ order, with
//! ∂_τ = (∂_u − i∂_v)/2 and ∂_τ̄ = (∂_u + i∂_v)/2. All operators of the
//! calculus act on jets:
//!
//!   raising      R_w = 2i ∂_τ + w/v          (weight w → w+2)
//!   Bol          𝒟^r = ((1/2πi) ∂_τ)^r
//!!  shadow       ξ_w = 2i v^w conj(∂_τ̄ ·)
//!   Laplacian    Δ_w = −4v² ∂_τ∂_τ̄ + 2iwv ∂_τ̄
//!   flipping     𝔉_w = −(v^{−w}/(−w)!) conj(R_w^{−w} ·)
//!
//! 1/v enters as the rational jet of 2i/(τ−τ̄), so everything stays in
//! (τ, τ̄) coordinates.

use std::fmt;

use num_complex::Complex64;

use crate::qforms::Point;
use crate::specfun::{binomial, rising_factorial};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Even integer weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Weight(i32);

impl Weight {
    pub fn new(w: i32) -> Result<Weight, JetError> {
        if w % 2 != 0 {
            return Err(JetError::OddWeight(w));
        }
        Ok(Weight(w))
    }

    pub fn get(&self) -> i32 {
        self.0
    }

    /// 2 − 2k.
    pub fn from_k(k: i64) -> Weight {
        Weight(2 - 2 * k as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JetError {
    BaseMismatch,
    InsufficientOrder { needed: usize, have: usize },
    ZeroConstantTerm,
    OddWeight(i32),
}

impl fmt::Display for JetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JetError::BaseMismatch => write!(f, "jets have different base points or orders"),
            JetError::InsufficientOrder { needed, have } => {
                write!(f, "jet order {have} too low (operator needs ≥ {needed})")
            }
            JetError::ZeroConstantTerm => write!(f, "division by a jet with zero constant term"),
            JetError::OddWeight(w) => write!(f, "weight {w} is odd"),
        }
    }
}

impl std::error::Error for JetError {}

/// Truncated bivariate Wirtinger-Taylor expansion at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    base: Point,
    order: usize,
    coeffs: Vec<Complex64>, // triangular, row-major in i
}

#[inline]
fn tri_len(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

impl Jet {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= self.order);
        // row i starts after rows 0..i, row p has (order+1-p) entries
        i * (self.order + 1) - i * (i.wrapping_sub(1)) / 2 + j
    }

    pub fn zero(base: Point, order: usize) -> Jet {
        Jet { base, order, coeffs: vec![Complex64::default(); tri_len(order)] }
    }

    pub fn constant(base: Point, order: usize, value: Complex64) -> Jet {
        let mut j = Jet::zero(base, order);
        j.coeffs[0] = value;
        j
    }

    /// Jet of the identity function τ.
    pub fn var_tau(base: Point, order: usize) -> Jet {
        let mut j = Jet::zero(base, order);
        j.coeffs[0] = base.tau();
        if order >= 1 {
            let k = j.idx(1, 0);
            j.coeffs[k] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// Jet of τ̄.
    pub fn var_taubar(base: Point, order: usize) -> Jet {
        let mut j = Jet::zero(base, order);
        j.coeffs[0] = base.tau().conj();
        if order >= 1 {
            let k = j.idx(0, 1);
            j.coeffs[k] = Complex64::new(1.0, 0.0);
        }
        j
    }

    /// Jet of v = Im τ = (τ − τ̄)/(2i).
    pub fn height(base: Point, order: usize) -> Jet {
        let mut j = Jet::zero(base, order);
        j.coeffs[0] = Complex64::new(base.v, 0.0);
        if order >= 1 {
            let a = j.idx(1, 0);
            j.coeffs[a] = Complex64::new(0.0, -0.5); // ∂_τ v = 1/(2i)
            let b = j.idx(0, 1);
            j.coeffs[b] = Complex64::new(0.0, 0.5);
        }
        j
    }

    /// Jet of the holomorphic exponential e^{μτ}.
    pub fn holomorphic_exp(base: Point, order: usize, mu: Complex64) -> Jet {
        let mut j = Jet::zero(base, order);
        let e0 = (mu * base.tau()).exp();
        let mut term = e0;
        for i in 0..=order {
            let k = j.idx(i, 0);
            j.coeffs[k] = term;
            term = term * mu / (i + 1) as f64;
        }
        j
    }

    pub fn base(&self) -> Point {
        self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The function value at the base point.
    pub fn value(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Taylor-normalized coefficient (∂_τ^i ∂_τ̄^j f)/(i! j!).
    pub fn coeff(&self, i: usize, j: usize) -> Complex64 {
        if i + j > self.order {
            Complex64::default()
        } else {
            self.coeffs[self.idx(i, j)]
        }
    }

    pub(crate) fn set_coeff(&mut self, i: usize, j: usize, v: Complex64) {
        let k = self.idx(i, j);
        self.coeffs[k] = v;
    }

    fn same_shape(&self, other: &Jet) -> Result<(), JetError> {
        if self.base != other.base || self.order != other.order {
            return Err(JetError::BaseMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c -= o;
        }
        Ok(out)
    }

    pub fn neg(&self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn scale(&self, z: Complex64) -> Jet {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= z;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Jet) {
        debug_assert!(self.base == other.base && self.order == other.order);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o;
        }
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.same_shape(other)?;
        let n = self.order;
        let mut out = Jet::zero(self.base, n);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let x = self.coeffs[self.idx(i, j)];
                if x.re == 0.0 && x.im == 0.0 {
                    continue;
                }
                for p in 0..=(n - i - j) {
                    for q in 0..=(n - i - j - p) {
                        let y = other.coeffs[other.idx(p, q)];
                        if y.re != 0.0 || y.im != 0.0 {
                            let k = out.idx(i + p, j + q);
                            out.coeffs[k] += x * y;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Integer power by repeated multiplication (exponents here are small).
    pub fn powi(&self, e: u32) -> Jet {
        let mut out = Jet::constant(self.base, self.order, Complex64::new(1.0, 0.0));
        for _ in 0..e {
            out = out.mul(self).expect("same shape");
        }
        out
    }

    /// 1/f via the triangular recurrence; needs a nonzero constant term.
    pub fn recip(&self) -> Result<Jet, JetError> {
        let a0 = self.coeffs[0];
        if a0.norm_sqr() == 0.0 {
            return Err(JetError::ZeroConstantTerm);
        }
        let n = self.order;
        let mut out = Jet::zero(self.base, n);
        out.coeffs[0] = a0.finv();
        for d in 1..=n {
            for i in 0..=d {
                let j = d - i;
                let mut s = Complex64::default();
                for p in 0..=i {
                    for q in 0..=j {
                        if p == i && q == j {
                            continue;
                        }
                        s += out.coeffs[out.idx(p, q)] * self.coeffs[self.idx(i - p, j - q)];
                    }
                }
                let k = out.idx(i, j);
                out.coeffs[k] = -s / a0;
            }
        }
        Ok(out)
    }

    /// Jet of conj(f): coeffs'[i][j] = conj(coeffs[j][i]).
    pub fn conjugate(&self) -> Jet {
        let n = self.order;
        let mut out = Jet::zero(self.base, n);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = out.idx(i, j);
                out.coeffs[k] = self.coeffs[self.idx(j, i)].conj();
            }
        }
        out
    }

    /// Jet of ∂_τ f, order − 1.
    pub fn dtau(&self) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::InsufficientOrder { needed: 1, have: 0 });
        }
        let n = self.order - 1;
        let mut out = Jet::zero(self.base, n);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = out.idx(i, j);
                out.coeffs[k] = (i + 1) as f64 * self.coeffs[self.idx(i + 1, j)];
            }
        }
        Ok(out)
    }

    /// Jet of ∂_τ̄ f, order − 1.
    pub fn dtaubar(&self) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::InsufficientOrder { needed: 1, have: 0 });
        }
        let n = self.order - 1;
        let mut out = Jet::zero(self.base, n);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = out.idx(i, j);
                out.coeffs[k] = (j + 1) as f64 * self.coeffs[self.idx(i, j + 1)];
            }
        }
        Ok(out)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.order);
        let mut out = Jet::zero(self.base, order);
        for i in 0..=order {
            for j in 0..=(order - i) {
                let k = out.idx(i, j);
                out.coeffs[k] = self.coeffs[self.idx(i, j)];
            }
        }
        out
    }

    /// h ∘ x for a scalar h with Taylor coefficients `taylor` at x.value():
    /// h(x₀ + δ) = Σ taylor[m] δ^m, evaluated by Horner on the jet δ = x − x₀.
    pub fn compose_real(&self, taylor: &[f64]) -> Jet {
        let mut delta = self.clone();
        delta.coeffs[0] = Complex64::default();
        let last = *taylor.last().expect("nonempty taylor");
        let mut out = Jet::constant(self.base, self.order, Complex64::new(last, 0.0));
        for m in (0..taylor.len() - 1).rev() {
            out = out.mul(&delta).expect("same shape");
            out.coeffs[0] += Complex64::new(taylor[m], 0.0);
        }
        out
    }

    /// Maximum coefficient magnitude (used for stagnation tests on jets).
    pub fn max_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// R_w f = 2i ∂_τ f + (w/v) f; output order drops by one.
pub fn raise(f: &Jet, w: Weight) -> Result<Jet, JetError> {
    let n = f.order();
    if n == 0 {
        return Err(JetError::InsufficientOrder { needed: 1, have: 0 });
    }
    let two_i = Complex64::new(0.0, 2.0);
    let mut out = f.dtau()?.scale(two_i);
    if w.get() != 0 {
        let recip_v = Jet::height(f.base(), n - 1).recip()?;
        let term = recip_v.mul(&f.truncate(n - 1))?.scale(Complex64::new(w.get() as f64, 0.0));
        out = out.add(&term)?;
    }
    Ok(out)
}

/// R_w^n = R_{w+2(n−1)} ∘ … ∘ R_w; output order drops by n.
pub fn iterate_raise(f: &Jet, w: Weight, n: usize) -> Result<Jet, JetError> {
    if f.order() < n {
        return Err(JetError::InsufficientOrder { needed: n, have: f.order() });
    }
    let mut out = f.clone();
    for step in 0..n {
        out = raise(&out, Weight(w.get() + 2 * step as i32))?;
    }
    Ok(out)
}

/// 𝒟^r f = ((1/2πi) ∂_τ)^r f at the base point.
pub fn bol_order(f: &Jet, r: usize) -> Result<Complex64, JetError> {
    if f.order() < r {
        return Err(JetError::InsufficientOrder { needed: r, have: f.order() });
    }
    let mut fact = 1.0;
    for m in 1..=r {
        fact *= m as f64;
    }
    let denom = Complex64::new(0.0, TWO_PI).powi(r as i32);
    Ok(f.coeff(r, 0) * fact / denom)
}

/// The Bol operator 𝒟^{2k−1} at the base point.
pub fn bol(f: &Jet, k: i64) -> Result<Complex64, JetError> {
    bol_order(f, (2 * k - 1) as usize)
}

/// ξ_w f = 2i v^w conj(∂_τ̄ f) at the base point.
pub fn xi(f: &Jet, w: Weight) -> Result<Complex64, JetError> {
    if f.order() < 1 {
        return Err(JetError::InsufficientOrder { needed: 1, have: 0 });
    }
    let v = f.base().v;
    Ok(Complex64::new(0.0, 2.0) * v.powi(w.get()) * f.coeff(0, 1).conj())
}

/// Δ_w f = −4v² ∂_τ∂_τ̄ f + 2iwv ∂_τ̄ f at the base point.
pub fn laplacian(f: &Jet, w: Weight) -> Result<Complex64, JetError> {
    if f.order() < 2 {
        return Err(JetError::InsufficientOrder { needed: 2, have: f.order() });
    }
    let v = f.base().v;
    Ok(-4.0 * v * v * f.coeff(1, 1) + Complex64::new(0.0, 2.0 * w.get() as f64 * v) * f.coeff(0, 1))
}

/// 𝔉_w f = −(v^{−w}/(−w)!) conj(R_w^{−w} f); consumes −w orders.
pub fn flip(f: &Jet, w: Weight) -> Result<Jet, JetError> {
    let n = (-w.get()) as usize;
    assert!(w.get() < 0, "flip requires negative weight");
    let raised = iterate_raise(f, w, n)?;
    let conj = raised.conjugate();
    let vpow = Jet::height(f.base(), conj.order()).powi(n as u32);
    let mut fact = 1.0;
    for m in 1..=n {
        fact *= m as f64;
    }
    Ok(vpow.mul(&conj)?.scale(Complex64::new(-1.0 / fact, 0.0)))
}

/// The closed form of the iterated raising operator,
/// R_w^n f = Σ_{r=0}^n (−1)^r C(n,r) (w+r)_{n−r} v^{r−n} (4π)^r 𝒟^r f,
/// read off pure-τ jet coefficients. Cross-checks `iterate_raise`.
pub fn rd_closed_form(f: &Jet, w: Weight, n: usize) -> Result<Complex64, JetError> {
    if f.order() < n {
        return Err(JetError::InsufficientOrder { needed: n, have: f.order() });
    }
    let v = f.base().v;
    let mut acc = Complex64::default();
    for r in 0..=n {
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        let choose = binomial(n as i64, r as i64).expect("0<=r<=n") as f64;
        let rising = rising_factorial(w.get() as f64 + r as f64, (n - r) as i64);
        let coef = sign * choose * rising * v.powi(r as i32 - n as i32) * (4.0 * std::f64::consts::PI).powi(r as i32);
        acc += coef * bol_order(f, r)?;
    }
    Ok(acc)
}

/// A real 2×2 matrix acting on ℍ by Möbius transformation.
pub type Matrix2 = [[f64; 2]; 2];

pub fn mobius_point(g: Matrix2, p: Point) -> Point {
    let tau = p.tau();
    let den = Complex64::new(g[1][0], 0.0) * tau + g[1][1];
    let img = (Complex64::new(g[0][0], 0.0) * tau + g[0][1]) / den;
    Point::new(img.re, img.im).expect("Möbius maps ℍ to ℍ for det 1")
}

/// Jet at `base` of the holomorphic map τ ↦ γτ.
pub fn mobius_jet(g: Matrix2, base: Point, order: usize) -> Jet {
    let num = Jet::var_tau(base, order)
        .scale(Complex64::new(g[0][0], 0.0))
        .add(&Jet::constant(base, order, Complex64::new(g[0][1], 0.0)))
        .expect("same shape");
    let den = Jet::var_tau(base, order)
        .scale(Complex64::new(g[1][0], 0.0))
        .add(&Jet::constant(base, order, Complex64::new(g[1][1], 0.0)))
        .expect("same shape");
    num.mul(&den.recip().expect("cτ+d ≠ 0 on ℍ")).expect("same shape")
}

/// Substitute a holomorphic inner jet (and its conjugate) into an outer jet:
/// given f's jet at g(base) and the jet of g at base, produce the jet of
/// τ ↦ f(g(τ), conj(g(τ))) at base.
pub fn compose_mobius(outer: &Jet, inner: &Jet) -> Jet {
    let n = inner.order();
    debug_assert_eq!(outer.order(), n);
    let mut dg = inner.clone();
    dg.coeffs[0] = Complex64::default();
    let mut dgbar = inner.conjugate();
    dgbar.coeffs[0] = Complex64::default();
    // powers up to n
    let one = Jet::constant(inner.base(), n, Complex64::new(1.0, 0.0));
    let mut gp = vec![one.clone()];
    let mut gbp = vec![one];
    for m in 1..=n {
        gp.push(gp[m - 1].mul(&dg).expect("same shape"));
        gbp.push(gbp[m - 1].mul(&dgbar).expect("same shape"));
    }
    let mut out = Jet::zero(inner.base(), n);
    for p in 0..=n {
        for q in 0..=(n - p) {
            let c = outer.coeff(p, q);
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            out.add_assign(&gp[p].mul(&gbp[q]).expect("same shape").scale(c));
        }
    }
    out
}

/// The Petersson slash: (f|_w γ)(τ) = (cτ+d)^{−w} f(γτ), as a jet-evaluable
/// wrapper around a jet-evaluable f. Requires det γ = 1.
pub fn slash<F>(f: F, gamma: Matrix2, w: Weight) -> impl Fn(Point, usize) -> Result<Jet, JetError>
where
    F: Fn(Point, usize) -> Result<Jet, JetError>,
{
    move |base: Point, order: usize| {
        let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
        debug_assert!((det - 1.0).abs() < 1e-9, "slash needs det γ = 1");
        let image = mobius_point(gamma, base);
        let fj = f(image, order)?;
        let composed = compose_mobius(&fj, &mobius_jet(gamma, base, order));
        // (cτ+d)^{−w} as a jet
        let den = Jet::var_tau(base, order)
            .scale(Complex64::new(gamma[1][0], 0.0))
            .add(&Jet::constant(base, order, Complex64::new(gamma[1][1], 0.0)))?;
        let aut = if w.get() >= 0 {
            den.recip()?.powi(w.get() as u32)
        } else {
            den.powi((-w.get()) as u32)
        };
        composed.mul(&aut)
    }
}
