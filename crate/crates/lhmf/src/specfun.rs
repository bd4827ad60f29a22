//! Special functions for the series: the incomplete beta function at
//! half-integer parameters via Wallis reduction, the incomplete Gamma
//! function at positive integer first argument, rising factorials and
//! binomials. Everything here is an exact finite closed form, so accuracy is
//! machine precision except at the β endpoint x → 1 (which belongs to E_D
//! handling and is rejected).

use std::fmt;

/// β(x; r, 1/2) is rejected this close to the singular endpoint x = 1.
pub const BETA_ENDPOINT_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SpecFunError {
    /// x outside [0, 1 − guard) for the incomplete beta.
    BetaDomain { x: f64 },
    /// binomial called with m outside 0..=n.
    BinomialRange { n: i64, m: i64 },
}

impl fmt::Display for SpecFunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecFunError::BetaDomain { x } => write!(f, "beta argument x = {x} outside [0, 1)"),
            SpecFunError::BinomialRange { n, m } => write!(f, "binomial({n},{m}) out of range"),
        }
    }
}

impl std::error::Error for SpecFunError {}

/// Which half-integer first parameter the β takes: r = k − 1/2 or k + 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaVariant {
    KMinusHalf,
    KPlusHalf,
}

impl BetaVariant {
    /// The even sine power 2r − 1 in the trigonometric form.
    pub fn sine_power(self, k: i64) -> i64 {
        match self {
            BetaVariant::KMinusHalf => 2 * k - 2,
            BetaVariant::KPlusHalf => 2 * k,
        }
    }

    pub fn r(self, k: i64) -> f64 {
        match self {
            BetaVariant::KMinusHalf => k as f64 - 0.5,
            BetaVariant::KPlusHalf => k as f64 + 0.5,
        }
    }
}

/// ∫₀^φ sinⁿθ dθ by the Wallis reduction
/// Iₙ = (−cos φ sin^{n−1} φ + (n−1) I_{n−2}) / n, I₀ = φ, I₁ = 1 − cos φ.
pub fn wallis_sine_integral(phi: f64, n: i64) -> f64 {
    assert!(n >= 0);
    let (s, c) = phi.sin_cos();
    let mut even = phi; // I_0
    let mut odd = 1.0 - c; // I_1
    if n == 0 {
        return even;
    }
    if n == 1 {
        return odd;
    }
    let mut spow_even = s; // sin^{m-1} for the m being updated
    let mut spow_odd = s * s;
    let mut m = 2;
    while m <= n {
        even = (-c * spow_even + (m - 1) as f64 * even) / m as f64;
        spow_even *= s * s;
        m += 2;
    }
    if n % 2 == 0 {
        return even;
    }
    let mut m = 3;
    while m <= n {
        odd = (-c * spow_odd + (m - 1) as f64 * odd) / m as f64;
        spow_odd *= s * s;
        m += 2;
    }
    odd
}

/// β(x; k ∓ 1/2, 1/2): the power series Σ_m ((2m−1)!!/(2m)!!) x^{r+m}/(r+m)
/// for x ≤ 1/2 (the Wallis recursion cancels catastrophically for small x),
/// otherwise the closed trigonometric (Wallis) form
/// 2·∫₀^{arcsin √x} sin^{2r−1}θ dθ.
///
/// Rejects x < 0 and x ≥ 1 − 1e−9 (the endpoint corresponds to E_D).
pub fn incomplete_beta_half(x: f64, k: i64, variant: BetaVariant) -> Result<f64, SpecFunError> {
    assert!(k >= 1);
    if !(0.0..1.0 - BETA_ENDPOINT_GUARD).contains(&x) {
        return Err(SpecFunError::BetaDomain { x });
    }
    if x <= 0.5 {
        let r = variant.r(k);
        let mut coef = 1.0; // (2m−1)!!/(2m)!!
        let mut xpow = x.powf(r);
        let mut acc = coef * xpow / r;
        let mut m = 1.0;
        loop {
            coef *= (2.0 * m - 1.0) / (2.0 * m);
            xpow *= x;
            let term = coef * xpow / (r + m);
            acc += term;
            if term < 1e-18 * acc.max(f64::MIN_POSITIVE) {
                break;
            }
            m += 1.0;
        }
        return Ok(acc);
    }
    let phi = x.sqrt().asin();
    Ok(2.0 * wallis_sine_integral(phi, variant.sine_power(k)))
}

/// The complete B(r, 1/2) for half-integer r (the x → 1 limit), φ = π/2.
pub fn complete_beta_half(k: i64, variant: BetaVariant) -> f64 {
    2.0 * wallis_sine_integral(std::f64::consts::FRAC_PI_2, variant.sine_power(k))
}

/// Γ(n, x) = (n−1)! e^{−x} Σ_{m<n} x^m/m!, valid for every real x.
pub fn incomplete_gamma_int(n: i64, x: f64) -> f64 {
    assert!(n >= 1);
    // (n-1)! * Σ x^m/m! = Σ x^m (n-1)!/m!; accumulate from m = n−1 down so the
    // partial products stay integral-ish.
    let mut term = 1.0; // x^{n-1} coefficient scale
    let mut sum = 1.0; // m = 0 term of Σ x^m/m!
    for m in 1..n {
        term *= x / m as f64;
        sum += term;
    }
    let mut fact = 1.0;
    for m in 1..n {
        fact *= m as f64;
    }
    fact * (-x).exp() * sum
}

/// Rising factorial (a)ₙ = a(a+1)⋯(a+n−1); empty product is 1.
pub fn rising_factorial(a: f64, n: i64) -> f64 {
    assert!(n >= 0);
    let mut out = 1.0;
    for j in 0..n {
        out *= a + j as f64;
    }
    out
}

/// Exact integer binomial, 0 ≤ m ≤ n.
pub fn binomial(n: i64, m: i64) -> Result<i64, SpecFunError> {
    if m < 0 || n < 0 || m > n {
        return Err(SpecFunError::BinomialRange { n, m });
    }
    let m = m.min(n - m);
    let mut num: i128 = 1;
    for j in 0..m {
        num = num * (n - j) as i128 / (j + 1) as i128;
    }
    Ok(num as i64)
}

/// Generalized binomial C(r, m) for real r (used by the β Taylor chains).
pub fn binomial_real(r: f64, m: usize) -> f64 {
    let mut out = 1.0;
    for j in 0..m {
        out *= (r - j as f64) / (j + 1) as f64;
    }
    out
}

/// Taylor coefficients at x0 of β(x; r, 1/2): [b0, b1, …, b_{order}] with
/// β(x0+δ) = Σ b_m δ^m. The derivative chain is
/// dβ/dx = x^{r−1}(1−x)^{−1/2}, expanded as a product of binomial series.
/// Accurate for x0 ≤ 1/2; for x0 near 1 use the √-extracted route instead.
pub fn beta_taylor(x0: f64, k: i64, variant: BetaVariant, order: usize) -> Result<Vec<f64>, SpecFunError> {
    let b0 = incomplete_beta_half(x0, k, variant)?;
    let mut out = vec![b0];
    if order == 0 {
        return Ok(out);
    }
    let r = variant.r(k);
    let m = order;
    // x^{r-1} series around x0 and (1-x)^{-1/2} series around x0
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    a[0] = x0.powf(r - 1.0);
    for j in 1..m {
        a[j] = a[j - 1] * (r - j as f64) / (j as f64 * x0);
    }
    b[0] = (1.0 - x0).powf(-0.5);
    for j in 1..m {
        b[j] = b[j - 1] * (0.5 + (j - 1) as f64) / (j as f64 * (1.0 - x0));
    }
    for p in 0..m {
        let mut w = 0.0;
        for j in 0..=p {
            w += a[j] * b[p - j];
        }
        out.push(w / (p + 1) as f64);
    }
    Ok(out)
}

/// Taylor coefficients at y0 ∈ [0, 1) of
/// h(y) = Σ_m C(r−1, m)(−1)^m y^m/(2m+1), the analytic factor in
/// β(x; r, 1/2) = B(r, 1/2) − 2√(1−x)·h(1−x).
pub fn h_taylor(y0: f64, k: i64, variant: BetaVariant, order: usize) -> Vec<f64> {
    let r = variant.r(k);
    const MAXTERMS: usize = 600;
    let mut c = Vec::with_capacity(MAXTERMS);
    let mut binom = 1.0;
    for m in 0..MAXTERMS {
        c.push(binom / (2 * m + 1) as f64);
        binom *= -(r - 1.0 - m as f64) / (m + 1) as f64; // C(r-1,m+1)(-1)^{m+1}
    }
    let mut out = Vec::with_capacity(order + 1);
    for p in 0..=order {
        let mut s = 0.0;
        let mut ch = 1.0; // C(m, p) running value starting at m = p
        let mut ypow = 1.0;
        for m in p..MAXTERMS {
            let term = c[m] * ch * ypow;
            s += term;
            if m > p + 12 && term.abs() < 1e-18 * (s.abs() + 1e-300) {
                break;
            }
            ch = ch * (m + 1) as f64 / (m + 1 - p) as f64;
            ypow *= y0;
        }
        out.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature: the independent oracle for the closed forms.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn simp<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, fa: f64, b: f64, fb: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                simp(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                    + simp(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        simp(f, a, fa, b, fb, fm, whole, tol, 40)
    }

    #[test]
    fn beta_endpoint_limit_is_pi() {
        // x → 1⁻ with r = 1/2: the φ = π/2 limit of the Wallis form
        assert!((2.0 * wallis_sine_integral(std::f64::consts::FRAC_PI_2, 0) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn beta_at_zero_is_zero() {
        for (k, var) in [(2, BetaVariant::KMinusHalf), (3, BetaVariant::KPlusHalf), (6, BetaVariant::KMinusHalf)] {
            assert_eq!(incomplete_beta_half(0.0, k, var).unwrap(), 0.0);
        }
    }

    #[test]
    fn beta_matches_quadrature_oracle() {
        // x=0.5, r=3/2 pinned value plus a grid of 100 (x, parameter) pairs
        let quad = simpson(|t| t.sqrt() * (1.0 - t).powf(-0.5), 0.0, 0.5, 1e-13);
        let direct = incomplete_beta_half(0.5, 2, BetaVariant::KMinusHalf).unwrap();
        assert!((direct - quad).abs() < 1e-12, "{direct} vs {quad}");

        let mut checked = 0;
        for k in 2..=6i64 {
            for var in [BetaVariant::KMinusHalf, BetaVariant::KPlusHalf] {
                for i in 1..=10 {
                    let x = i as f64 / 10.5;
                    let r = var.r(k);
                    let got = incomplete_beta_half(x, k, var).unwrap();
                    let want = simpson(move |t| t.powf(r - 1.0) * (1.0 - t).powf(-0.5), 0.0, x, 1e-14);
                    assert!((got - want).abs() < 1e-12, "k={k} {var:?} x={x}: {got} vs {want}");
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn beta_strictly_increasing_in_x() {
        for (k, var) in [(2, BetaVariant::KMinusHalf), (2, BetaVariant::KPlusHalf), (5, BetaVariant::KMinusHalf)] {
            let mut prev = -1.0;
            for i in 0..40 {
                let x = i as f64 / 40.5;
                let b = incomplete_beta_half(x, k, var).unwrap();
                assert!(b > prev, "not increasing at x={x}");
                prev = b;
            }
        }
    }

    #[test]
    fn beta_domain_errors() {
        assert!(incomplete_beta_half(-0.1, 2, BetaVariant::KMinusHalf).is_err());
        assert!(incomplete_beta_half(1.0, 2, BetaVariant::KMinusHalf).is_err());
        assert!(incomplete_beta_half(1.0 - 1e-10, 2, BetaVariant::KMinusHalf).is_err());
        assert!(incomplete_beta_half(1.0 - 1e-8, 2, BetaVariant::KMinusHalf).is_ok());
    }

    #[test]
    fn gamma_int_examples() {
        assert!((incomplete_gamma_int(1, 0.7) - (-0.7f64).exp()).abs() < 1e-15);
        assert_eq!(incomplete_gamma_int(3, 0.0), 2.0);
        let got = incomplete_gamma_int(3, 1.0);
        assert!((got - 5.0 * (-1.0f64).exp()).abs() < 1e-14);
        // quadrature cross-check of Γ(3,1) = ∫₁^∞ t² e^{−t} dt (truncated far out)
        let quad = simpson(|t| t * t * (-t).exp(), 1.0, 60.0, 1e-14);
        assert!((got - quad).abs() < 1e-12);
    }

    #[test]
    fn gamma_int_limits() {
        for n in 1..=8 {
            let mut fact = 1.0;
            for m in 1..n {
                fact *= m as f64;
            }
            assert_eq!(incomplete_gamma_int(n, 0.0), fact);
            assert!(incomplete_gamma_int(n, 500.0) < 1e-180);
        }
        // valid for negative x too: Γ(1, x) = e^{−x}
        assert!((incomplete_gamma_int(1, -2.0) - 2f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn rising_factorial_examples() {
        assert_eq!(rising_factorial(2.0, 3), 24.0);
        assert_eq!(rising_factorial(-7.0, 0), 1.0);
        // (2−2k+r)_{2k−2−r} = (−1)^r (2k−r−2)! at k=3, r=1: (−3)₃ = −6
        assert_eq!(rising_factorial(-3.0, 3), -6.0);
        for k in 2..=6i64 {
            for r in 0..=(2 * k - 2) {
                let lhs = rising_factorial((2 - 2 * k + r) as f64, 2 * k - 2 - r);
                let mut fact = 1.0;
                for m in 1..=(2 * k - r - 2) {
                    fact *= m as f64;
                }
                let rhs = if r % 2 == 0 { fact } else { -fact };
                assert_eq!(lhs, rhs, "k={k} r={r}");
            }
        }
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial(4, 2).unwrap(), 6);
        assert_eq!(binomial(10, 5).unwrap(), 252);
        assert_eq!(binomial(7, 0).unwrap(), 1);
        assert!(binomial(3, 5).is_err());
        assert!(binomial(3, -1).is_err());
    }

    #[test]
    fn beta_taylor_matches_finite_differences() {
        let k = 2;
        let var = BetaVariant::KMinusHalf;
        let x0 = 0.3;
        let t = beta_taylor(x0, k, var, 4).unwrap();
        let h = 1e-3;
        let at = |x: f64| incomplete_beta_half(x, k, var).unwrap();
        let d1 = (at(x0 + h) - at(x0 - h)) / (2.0 * h);
        assert!((t[1] - d1).abs() < 1e-5);
        let d2 = (at(x0 + h) - 2.0 * at(x0) + at(x0 - h)) / (h * h) / 2.0;
        assert!((t[2] - d2).abs() < 1e-4);
    }

    #[test]
    fn sqrt_extracted_form_agrees_with_direct() {
        // β(x; r, 1/2) = B(r,1/2) − 2√(1−x) h(1−x) across the working range
        for k in 2..=6i64 {
            for var in [BetaVariant::KMinusHalf, BetaVariant::KPlusHalf] {
                for i in 1..20 {
                    let x = 0.5 + i as f64 / 42.0;
                    let y = 1.0 - x;
                    let h0 = h_taylor(y, k, var, 0)[0];
                    let full = complete_beta_half(k, var);
                    let reconstructed = full - 2.0 * y.sqrt() * h0;
                    let direct = incomplete_beta_half(x, k, var).unwrap();
                    assert!(
                        (reconstructed - direct).abs() < 1e-13,
                        "k={k} {var:?} x={x}: {reconstructed} vs {direct}"
                    );
                }
            }
        }
    }
}
