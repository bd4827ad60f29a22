//! Truncated-series evaluators for the quadratic-form series
//!
//!   f_{k,D}   = (D^{k−1/2}/(C(2k−2,k−1)π)) Σ_Q Q(τ,1)^{−k}
//!   g_{k+1,D} = Σ_Q sgn(Q_τ) Q(τ,1)^{−(k+1)}
//!   F_{1−k,D} = (D^{1/2−k}/(2C(2k−2,k−1)π)) Σ_Q sgn(Q_τ) Q(τ,1)^{k−1} β(Dv²/|Q|²; k−1/2, 1/2)
//!   G_{−k,D}  = (1/2) Σ_Q Q(τ,1)^{k} β(Dv²/|Q|²; k+1/2, 1/2)
//!
//! in plain-value and jet-valued modes, plus the constant c_∞(k) and the
//! local polynomial P_C.
//!
//! Truncation works on the leading coefficient: the a-bound doubles until
//! two successive partial sums stagnate. For each a the b-sum is extended
//! adaptively past the enumeration box until its tail majorant drops below
//! a per-class budget (the fixed |b| ≤ 2B+√D box leaves a b-cutoff error
//! that would otherwise dominate). Summation order is fixed and compensated,
//! and parallel chunks are merged in index order, so results are bit-stable
//! regardless of worker count.
//!
//! 𝒬_D is closed under Q ↦ −Q and every summand satisfies t_{−Q} = (−1)^k t_Q,
//! so only a > 0 representatives are evaluated, doubled for even k; for odd k
//! all four series vanish identically and the evaluators return exact zeros.

use std::collections::HashMap;
use std::fmt;
use std::sync::RwLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::jets::{Jet, JetError};
use crate::kahan::{KahanComplex, KahanSum};
use crate::qforms::{e_d_proximity, Discriminant, Point, QFormError, NEAR_SINGULAR_THRESHOLD};
use crate::specfun::{
    beta_taylor, binomial, binomial_real, complete_beta_half, h_taylor, incomplete_beta_half,
    BetaVariant, SpecFunError,
};

const PI: f64 = std::f64::consts::PI;

/// Controls for the adaptive truncation.
#[derive(Debug, Clone, Copy)]
pub struct TruncationParams {
    /// First a-bound tried.
    pub initial_bound: i64,
    /// Stagnation tolerance ε: stop once successive doublings differ by less.
    pub stagnation_tol: f64,
    /// Doubling stops (with an error) past this bound.
    pub max_bound: i64,
    /// The adaptive b-extension budget is `stagnation_tol * b_tail_factor`.
    pub b_tail_factor: f64,
    /// One 1/B Richardson step on the doubling sequence (value mode only);
    /// cancels the slowly decaying a-tail at k = 2.
    pub extrapolate: bool,
}

impl TruncationParams {
    /// Defaults tuned per weight: the k = 2 series stagnate like C/B, so the
    /// tolerance there is necessarily looser than at higher weights.
    pub fn for_k(k: i64) -> TruncationParams {
        TruncationParams {
            initial_bound: 64,
            stagnation_tol: match k {
                2 => 1e-6,
                3 => 1e-10,
                _ => 1e-8,
            },
            max_bound: 1 << 14,
            b_tail_factor: 1e-2,
            extrapolate: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.stagnation_tol = tol;
        self
    }

    pub fn with_bounds(mut self, initial: i64, max: i64) -> Self {
        self.initial_bound = initial;
        self.max_bound = max;
        self
    }
}

/// A truncated-series result with its convergence metadata.
#[derive(Debug, Clone)]
pub struct SeriesValue<T> {
    pub value: T,
    pub bound_used: i64,
    pub tail_estimate: f64,
    /// e_d_proximity at the evaluation point (+∞ above the geodesic apex).
    pub proximity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeriesError {
    NearExceptional { proximity: f64 },
    NonConvergence { bound: i64, tail: f64 },
    Jet(JetError),
    Domain(String),
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::NearExceptional { proximity } => {
                write!(f, "evaluation point too close to E_D (proximity {proximity:.3e})")
            }
            SeriesError::NonConvergence { bound, tail } => {
                write!(f, "series failed to stagnate by bound {bound} (tail {tail:.3e})")
            }
            SeriesError::Jet(e) => write!(f, "jet error: {e}"),
            SeriesError::Domain(s) => write!(f, "{s}"),
        }
    }
}

impl std::error::Error for SeriesError {}

impl From<JetError> for SeriesError {
    fn from(e: JetError) -> Self {
        SeriesError::Jet(e)
    }
}

impl From<QFormError> for SeriesError {
    fn from(e: QFormError) -> Self {
        match e {
            QFormError::NearExceptionalSet { proximity } => SeriesError::NearExceptional { proximity },
            other => SeriesError::Domain(other.to_string()),
        }
    }
}

impl From<SpecFunError> for SeriesError {
    fn from(e: SpecFunError) -> Self {
        SeriesError::Domain(e.to_string())
    }
}

/// Which of the four series families a term evaluator computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    CuspF,
    LocalG,
    MaassF,
    MaassG,
}

/// Square-root classes b² ≡ D (mod 4a), cached per discriminant.
///
/// Row a holds the roots r ∈ [0, 4a); the forms with leading coefficient a
/// are exactly [a, r + 4aj, ((r+4aj)²−D)/4a] over classes r and j ∈ ℤ.
struct FormTable {
    a_max: i64,
    offsets: Vec<usize>, // roots of row a live at offsets[a]..offsets[a+1]
    roots: Vec<i64>,
}

impl FormTable {
    fn scan_row(d: i64, a: i64) -> Vec<i64> {
        let m = 4 * a;
        (0..m).filter(|r| (r * r - d) % m == 0).collect()
    }

    fn build(d: Discriminant, a_max: i64) -> FormTable {
        let rows: Vec<Vec<i64>> = (1..=a_max)
            .into_par_iter()
            .map(|a| Self::scan_row(d.get(), a))
            .collect();
        let mut offsets = Vec::with_capacity(a_max as usize + 2);
        offsets.push(0);
        offsets.push(0); // a = 0 unused
        let mut roots = Vec::new();
        for row in rows {
            roots.extend_from_slice(&row);
            offsets.push(roots.len());
        }
        FormTable { a_max, offsets, roots }
    }

    fn extend(&mut self, d: Discriminant, a_max: i64) {
        if a_max <= self.a_max {
            return;
        }
        let rows: Vec<Vec<i64>> = (self.a_max + 1..=a_max)
            .into_par_iter()
            .map(|a| Self::scan_row(d.get(), a))
            .collect();
        for row in rows {
            self.roots.extend_from_slice(&row);
            self.offsets.push(self.roots.len());
        }
        self.a_max = a_max;
    }

    fn row(&self, a: i64) -> &[i64] {
        &self.roots[self.offsets[a as usize]..self.offsets[a as usize + 1]]
    }

    /// Number of classes with leading coefficient ≤ bound.
    fn classes_upto(&self, bound: i64) -> usize {
        self.offsets[bound as usize + 1]
    }
}

/// Series evaluator for one discriminant; caches the root table and the
/// refined c_∞ values across calls.
pub struct Evaluator {
    d: Discriminant,
    table: RwLock<FormTable>,
    cinf: RwLock<HashMap<i64, (f64, f64)>>,
}

/// Per-evaluation jet context: the variable jets every term shares.
struct JetCtx {
    order: usize,
    tau: Jet,
    tau2: Jet,
    tau_taubar: Jet,
    tau_plus_taubar: Jet,
    height2: Jet,
}

impl JetCtx {
    fn new(p: Point, order: usize) -> JetCtx {
        let tau = Jet::var_tau(p, order);
        let taubar = Jet::var_taubar(p, order);
        let h = Jet::height(p, order);
        JetCtx {
            order,
            tau2: tau.powi(2),
            tau_taubar: tau.mul(&taubar).expect("same shape"),
            tau_plus_taubar: tau.add(&taubar).expect("same shape"),
            height2: h.powi(2),
            tau,
        }
    }

    /// Jet of Q(τ,1) = aτ² + bτ + c.
    fn q_jet(&self, a: i64, b: i64, c: i64) -> Jet {
        let base = self.tau.base();
        self.tau2
            .scale(Complex64::new(a as f64, 0.0))
            .add(&self.tau.scale(Complex64::new(b as f64, 0.0)))
            .expect("same shape")
            .add(&Jet::constant(base, self.order, Complex64::new(c as f64, 0.0)))
            .expect("same shape")
    }

    /// Jet of v·Q_τ = a ττ̄ + (b/2)(τ + τ̄) + c (real-valued polynomial).
    fn p_jet(&self, a: i64, b: i64, c: i64) -> Jet {
        let base = self.tau.base();
        self.tau_taubar
            .scale(Complex64::new(a as f64, 0.0))
            .add(&self.tau_plus_taubar.scale(Complex64::new(b as f64 / 2.0, 0.0)))
            .expect("same shape")
            .add(&Jet::constant(base, self.order, Complex64::new(c as f64, 0.0)))
            .expect("same shape")
    }
}

/// Compensated jet accumulator (one compensated sum per coefficient).
struct JetKahan {
    base: Point,
    order: usize,
    acc: Vec<KahanComplex>,
}

impl JetKahan {
    fn new(p: Point, order: usize) -> JetKahan {
        let len = (order + 1) * (order + 2) / 2;
        JetKahan { base: p, order, acc: vec![KahanComplex::new(); len] }
    }

    fn add(&mut self, j: &Jet) {
        debug_assert_eq!(j.order(), self.order);
        let mut idx = 0;
        for i in 0..=self.order {
            for q in 0..=(self.order - i) {
                self.acc[idx].add(j.coeff(i, q));
                idx += 1;
            }
        }
    }

    fn merge(&mut self, other: &JetKahan) {
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            a.merge(b);
        }
    }

    fn into_jet(self) -> Jet {
        let mut out = Jet::zero(self.base, self.order);
        let mut idx = 0;
        for i in 0..=self.order {
            for q in 0..=(self.order - i) {
                out.set_coeff(i, q, self.acc[idx].value());
                idx += 1;
            }
        }
        out
    }
}

impl Evaluator {
    pub fn new(d: Discriminant) -> Evaluator {
        Evaluator {
            d,
            table: RwLock::new(FormTable::build(d, 64)),
            cinf: RwLock::new(HashMap::new()),
        }
    }

    pub fn discriminant(&self) -> Discriminant {
        self.d
    }

    fn ensure_table(&self, a_max: i64) {
        if self.table.read().expect("lock").a_max < a_max {
            self.table.write().expect("lock").extend(self.d, a_max);
        }
    }

    // ----- term evaluators (forms with a > 0; ±Q parity folds in later) -----

    fn term_value(&self, fam: Family, k: i64, p: Point, a: i64, b: i64, c: i64) -> Complex64 {
        let af = a as f64;
        let bf = b as f64;
        let cf = c as f64;
        let tau = p.tau();
        let q = (Complex64::new(af, 0.0) * tau + bf) * tau + cf;
        let qt = (af * (p.u * p.u + p.v * p.v) + bf * p.u + cf) / p.v;
        let sgn = if qt > 0.0 { 1.0 } else { -1.0 };
        match fam {
            Family::CuspF => q.powi(-(k as i32)),
            Family::LocalG => sgn * q.powi(-(k as i32 + 1)),
            Family::MaassF => {
                let x = self.d.get() as f64 * p.v * p.v / q.norm_sqr();
                let beta = incomplete_beta_half(x.min(1.0 - 2e-9), k, BetaVariant::KMinusHalf)
                    .expect("x < 1 after clamp");
                sgn * q.powi(k as i32 - 1) * beta
            }
            Family::MaassG => {
                let x = self.d.get() as f64 * p.v * p.v / q.norm_sqr();
                let beta = incomplete_beta_half(x.min(1.0 - 2e-9), k, BetaVariant::KPlusHalf)
                    .expect("x < 1 after clamp");
                q.powi(k as i32) * beta
            }
        }
    }

    fn term_jet(&self, fam: Family, k: i64, ctx: &JetCtx, a: i64, b: i64, c: i64) -> Jet {
        let p = ctx.tau.base();
        let af = a as f64;
        let bf = b as f64;
        let cf = c as f64;
        let qt = (af * (p.u * p.u + p.v * p.v) + bf * p.u + cf) / p.v;
        let sgn = if qt > 0.0 { 1.0 } else { -1.0 };
        let qj = ctx.q_jet(a, b, c);
        let qbar = qj.conjugate();
        let qq = qj.mul(&qbar).expect("same shape");
        let (variant, qpow, signed) = match fam {
            Family::MaassF => (BetaVariant::KMinusHalf, (k - 1) as u32, true),
            Family::MaassG => (BetaVariant::KPlusHalf, k as u32, false),
            _ => unreachable!("jet mode exists only for the Maass lifts"),
        };
        let dv = self.d.get() as f64;
        let x0 = (dv * p.v * p.v / qq.value().re).clamp(0.0, 1.0 - 2e-9);
        let order = ctx.order;
        let beta_signed = if x0 <= 0.5 {
            // direct β Taylor chain at x0
            let xjet = qq
                .recip()
                .expect("|Q|² > 0 on ℍ")
                .mul(&ctx.height2)
                .expect("same shape")
                .scale(Complex64::new(dv, 0.0));
            let taylor = beta_taylor(xjet.value().re, k, variant, order).expect("x in domain");
            let bjet = xjet.compose_real(&taylor);
            if signed {
                bjet.scale(Complex64::new(sgn, 0.0))
            } else {
                bjet
            }
        } else {
            // √-extracted form: β = B(r,1/2) − 2 sgn(Q_τ)(vQ_τ/|Q|) h(1−x),
            // with vQ_τ a polynomial jet; the h-composition has bounded
            // derivatives however close τ is to E_D
            let pj = ctx.p_jet(a, b, c);
            let yjet = pj.powi(2).mul(&qq.recip().expect("|Q|² > 0")).expect("same shape");
            let htay = h_taylor(yjet.value().re.max(0.0), k, variant, order);
            let hjet = yjet.compose_real(&htay);
            let z0 = qq.value().re;
            let mut rs = Vec::with_capacity(order + 1);
            for m in 0..=order {
                rs.push(binomial_real(-0.5, m) * z0.powf(-0.5 - m as f64));
            }
            let rsjet = qq.compose_real(&rs);
            let tail = pj.mul(&rsjet).expect("same shape").mul(&hjet).expect("same shape");
            let full = complete_beta_half(k, variant);
            let lead = if signed { sgn * full } else { full };
            let scale = if signed { -2.0 } else { -2.0 * sgn };
            Jet::constant(p, order, Complex64::new(lead, 0.0))
                .add(&tail.scale(Complex64::new(scale, 0.0)))
                .expect("same shape")
        };
        qj.powi(qpow).mul(&beta_signed).expect("same shape")
    }

    // ----- drivers -----------------------------------------------------------

    /// Sum the family over the adaptive box with leading coefficient ≤ bound.
    /// Only a > 0 classes are walked; the caller doubles for the ±Q pairing.
    fn sum_values(&self, fam: Family, k: i64, p: Point, bound: i64, eps_b: f64) -> Complex64 {
        self.ensure_table(bound);
        let table = self.table.read().expect("lock");
        let n_classes = table.classes_upto(bound).max(1);
        let eps_class = eps_b / (2.0 * n_classes as f64);
        let sqrt_d = self.d.sqrt();
        const CHUNK: i64 = 64;
        let nchunk = (bound + CHUNK - 1) / CHUNK;
        let partials: Vec<KahanComplex> = (0..nchunk)
            .into_par_iter()
            .map(|ci| {
                let mut acc = KahanComplex::new();
                let a_lo = ci * CHUNK + 1;
                let a_hi = ((ci + 1) * CHUNK).min(bound);
                for a in a_lo..=a_hi {
                    for &r in table.row(a) {
                        self.class_walk_values(fam, k, p, a, r, sqrt_d, eps_class, &mut acc);
                    }
                }
                acc
            })
            .collect();
        let mut total = KahanComplex::new();
        for part in &partials {
            total.merge(part);
        }
        total.value() * 2.0
    }

    fn class_walk_values(
        &self,
        fam: Family,
        k: i64,
        p: Point,
        a: i64,
        r: i64,
        sqrt_d: f64,
        eps_class: f64,
        acc: &mut KahanComplex,
    ) {
        let m = 4 * a;
        let center = -2.0 * a as f64 * p.u;
        let window = sqrt_d + m as f64 + 2.0 * a as f64 * p.v;
        let jc = ((center - r as f64) / m as f64).round() as i64;
        for dir in [1i64, -1] {
            let mut j = if dir == 1 { jc } else { jc - 1 };
            let mut quiet = 0;
            loop {
                let b = r + m * j;
                let c = (b * b - self.d.get()) / m;
                let t = self.term_value(fam, k, p, a, b, c);
                acc.add(t);
                let dist = (b as f64 - center).abs();
                if dist > window {
                    // geometric-tail majorant for the dropped stretch
                    if t.norm() * (1.0 + dist / m as f64) < eps_class {
                        quiet += 1;
                        if quiet >= 2 {
                            break;
                        }
                    } else {
                        quiet = 0;
                    }
                }
                j += dir;
            }
        }
    }

    fn sum_jets(&self, fam: Family, k: i64, p: Point, order: usize, bound: i64, eps_b: f64) -> Jet {
        self.ensure_table(bound);
        let table = self.table.read().expect("lock");
        let n_classes = table.classes_upto(bound).max(1);
        let eps_class = eps_b / (2.0 * n_classes as f64);
        let sqrt_d = self.d.sqrt();
        const CHUNK: i64 = 16;
        let nchunk = (bound + CHUNK - 1) / CHUNK;
        let partials: Vec<JetKahan> = (0..nchunk)
            .into_par_iter()
            .map(|ci| {
                let ctx = JetCtx::new(p, order);
                let mut acc = JetKahan::new(p, order);
                let a_lo = ci * CHUNK + 1;
                let a_hi = ((ci + 1) * CHUNK).min(bound);
                for a in a_lo..=a_hi {
                    for &r in table.row(a) {
                        self.class_walk_jets(fam, k, &ctx, a, r, sqrt_d, eps_class, &mut acc);
                    }
                }
                acc
            })
            .collect();
        let mut total = JetKahan::new(p, order);
        for part in &partials {
            total.merge(part);
        }
        total.into_jet().scale(Complex64::new(2.0, 0.0))
    }

    fn class_walk_jets(
        &self,
        fam: Family,
        k: i64,
        ctx: &JetCtx,
        a: i64,
        r: i64,
        sqrt_d: f64,
        eps_class: f64,
        acc: &mut JetKahan,
    ) {
        let p = ctx.tau.base();
        let m = 4 * a;
        let center = -2.0 * a as f64 * p.u;
        let window = sqrt_d + m as f64 + 2.0 * a as f64 * p.v;
        let jc = ((center - r as f64) / m as f64).round() as i64;
        for dir in [1i64, -1] {
            let mut j = if dir == 1 { jc } else { jc - 1 };
            let mut quiet = 0;
            loop {
                let b = r + m * j;
                let c = (b * b - self.d.get()) / m;
                let t = self.term_jet(fam, k, ctx, a, b, c);
                acc.add(&t);
                let dist = (b as f64 - center).abs();
                if dist > window {
                    if t.value().norm() * (1.0 + dist / m as f64) < eps_class {
                        quiet += 1;
                        if quiet >= 2 {
                            break;
                        }
                    } else {
                        quiet = 0;
                    }
                }
                j += dir;
            }
        }
    }

    /// Sum over exactly the spec enumeration box |a| ≤ bound, |b| ≤ 2·bound+√D
    /// (no b-extension). Used for matched-box identity checks, where both
    /// sides of a termwise identity must range over the same finite set.
    fn sum_values_specbox(&self, fam: Family, k: i64, p: Point, bound: i64) -> Complex64 {
        self.ensure_table(bound);
        let table = self.table.read().expect("lock");
        let bmax = (2.0 * bound as f64 + self.d.sqrt()).floor() as i64;
        let mut acc = KahanComplex::new();
        for a in 1..=bound {
            let m = 4 * a;
            for &r in table.row(a) {
                let jlo = (-bmax - r).div_euclid(m)
                    + if (-bmax - r).rem_euclid(m) == 0 { 0 } else { 1 };
                let jhi = (bmax - r).div_euclid(m);
                for j in jlo..=jhi {
                    let b = r + m * j;
                    let c = (b * b - self.d.get()) / m;
                    acc.add(self.term_value(fam, k, p, a, b, c));
                }
            }
        }
        acc.value() * 2.0
    }

    fn sum_jets_specbox(&self, fam: Family, k: i64, p: Point, order: usize, bound: i64) -> Jet {
        self.ensure_table(bound);
        let table = self.table.read().expect("lock");
        let bmax = (2.0 * bound as f64 + self.d.sqrt()).floor() as i64;
        let ctx = JetCtx::new(p, order);
        let mut acc = JetKahan::new(p, order);
        for a in 1..=bound {
            let m = 4 * a;
            for &r in table.row(a) {
                let jlo = (-bmax - r).div_euclid(m)
                    + if (-bmax - r).rem_euclid(m) == 0 { 0 } else { 1 };
                let jhi = (bmax - r).div_euclid(m);
                for j in jlo..=jhi {
                    let b = r + m * j;
                    let c = (b * b - self.d.get()) / m;
                    acc.add(&self.term_jet(fam, k, &ctx, a, b, c));
                }
            }
        }
        acc.into_jet().scale(Complex64::new(2.0, 0.0))
    }

    // ----- adaptive doubling --------------------------------------------------

    fn adaptive_value(
        &self,
        fam: Family,
        k: i64,
        p: Point,
        t: &TruncationParams,
        prefactor: Complex64,
        proximity: f64,
    ) -> Result<SeriesValue<Complex64>, SeriesError> {
        if k % 2 == 1 {
            // exact ±Q cancellation
            return Ok(SeriesValue {
                value: Complex64::default(),
                bound_used: t.initial_bound,
                tail_estimate: 0.0,
                proximity,
            });
        }
        let eps_b = t.stagnation_tol * t.b_tail_factor / prefactor.norm().max(1e-300);
        let mut bound = t.initial_bound.max(1);
        let mut partials: Vec<Complex64> = vec![self.sum_values(fam, k, p, bound, eps_b)];
        let mut classes_prev = self.table.read().expect("lock").classes_upto(bound);
        loop {
            if 2 * bound > t.max_bound {
                let tail = if partials.len() >= 2 {
                    (partials[partials.len() - 1] - partials[partials.len() - 2]).norm()
                        * prefactor.norm()
                } else {
                    f64::INFINITY
                };
                return Err(SeriesError::NonConvergence { bound, tail });
            }
            bound *= 2;
            partials.push(self.sum_values(fam, k, p, bound, eps_b));
            // a doubling that added no root classes is vacuous; keep going
            let classes_now = self.table.read().expect("lock").classes_upto(bound);
            if classes_now == classes_prev {
                partials.pop();
                continue;
            }
            classes_prev = classes_now;
            let n = partials.len();
            let (value, tail) = if t.extrapolate {
                let ex_now = 2.0 * partials[n - 1] - partials[n - 2];
                let tail = if n >= 3 {
                    (ex_now - (2.0 * partials[n - 2] - partials[n - 3])).norm()
                } else {
                    f64::INFINITY
                };
                (ex_now, tail)
            } else {
                (partials[n - 1], (partials[n - 1] - partials[n - 2]).norm())
            };
            let scaled_tail = tail * prefactor.norm();
            if scaled_tail < t.stagnation_tol {
                return Ok(SeriesValue {
                    value: value * prefactor,
                    bound_used: bound,
                    tail_estimate: scaled_tail,
                    proximity,
                });
            }
        }
    }

    fn adaptive_jet(
        &self,
        fam: Family,
        k: i64,
        p: Point,
        t: &TruncationParams,
        order: usize,
        prefactor: Complex64,
        proximity: f64,
    ) -> Result<SeriesValue<Jet>, SeriesError> {
        if k % 2 == 1 {
            return Ok(SeriesValue {
                value: Jet::zero(p, order),
                bound_used: t.initial_bound,
                tail_estimate: 0.0,
                proximity,
            });
        }
        let eps_b = t.stagnation_tol * t.b_tail_factor / prefactor.norm().max(1e-300);
        let mut bound = t.initial_bound.max(1);
        let mut prev = self.sum_jets(fam, k, p, order, bound, eps_b);
        let mut classes_prev = self.table.read().expect("lock").classes_upto(bound);
        loop {
            if 2 * bound > t.max_bound {
                return Err(SeriesError::NonConvergence { bound, tail: f64::INFINITY });
            }
            bound *= 2;
            let classes_now = {
                self.ensure_table(bound);
                self.table.read().expect("lock").classes_upto(bound)
            };
            if classes_now == classes_prev {
                continue;
            }
            classes_prev = classes_now;
            let cur = self.sum_jets(fam, k, p, order, bound, eps_b);
            let tail = cur.sub(&prev).expect("same shape").max_norm() * prefactor.norm();
            if tail < t.stagnation_tol {
                return Ok(SeriesValue {
                    value: cur.scale(prefactor),
                    bound_used: bound,
                    tail_estimate: tail,
                    proximity,
                });
            }
            prev = cur;
        }
    }

    fn proximity_gate(&self, p: Point) -> Result<f64, SeriesError> {
        let prox = e_d_proximity(p, self.d);
        if prox < NEAR_SINGULAR_THRESHOLD {
            return Err(SeriesError::NearExceptional { proximity: prox });
        }
        Ok(prox)
    }

    // ----- public evaluators ----------------------------------------------------

    /// Prefactor of f_{k,D}: D^{k−1/2}/(C(2k−2,k−1)π).
    pub fn f_prefactor(&self, k: i64) -> f64 {
        let ch = binomial(2 * k - 2, k - 1).expect("k ≥ 2") as f64;
        (self.d.get() as f64).powf(k as f64 - 0.5) / (ch * PI)
    }

    /// Prefactor of F_{1−k,D}: D^{1/2−k}/(2·C(2k−2,k−1)π).
    pub fn big_f_prefactor(&self, k: i64) -> f64 {
        let ch = binomial(2 * k - 2, k - 1).expect("k ≥ 2") as f64;
        (self.d.get() as f64).powf(0.5 - k as f64) / (2.0 * ch * PI)
    }

    /// The cusp form f_{k,D}(τ).
    pub fn f_kd(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
    ) -> Result<SeriesValue<Complex64>, SeriesError> {
        assert!(k >= 2);
        let prox = e_d_proximity(p, self.d);
        self.adaptive_value(Family::CuspF, k, p, t, Complex64::new(self.f_prefactor(k), 0.0), prox)
    }

    /// g_{k+1,D}(τ) = Σ sgn(Q_τ)/Q(τ,1)^{k+1}.
    pub fn g_kd(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
    ) -> Result<SeriesValue<Complex64>, SeriesError> {
        assert!(k >= 2);
        let prox = self.proximity_gate(p)?;
        self.adaptive_value(Family::LocalG, k, p, t, Complex64::new(1.0, 0.0), prox)
    }

    /// The locally harmonic Maass form F_{1−k,D}(τ).
    pub fn big_f(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
    ) -> Result<SeriesValue<Complex64>, SeriesError> {
        assert!(k >= 2);
        let prox = self.proximity_gate(p)?;
        self.adaptive_value(Family::MaassF, k, p, t, Complex64::new(self.big_f_prefactor(k), 0.0), prox)
    }

    /// Jet of F_{1−k,D} at τ.
    pub fn big_f_jet(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
        order: usize,
    ) -> Result<SeriesValue<Jet>, SeriesError> {
        assert!(k >= 2);
        let prox = self.proximity_gate(p)?;
        self.adaptive_jet(Family::MaassF, k, p, t, order, Complex64::new(self.big_f_prefactor(k), 0.0), prox)
    }

    /// The weight −2k lift G_{−k,D}(τ).
    pub fn big_g(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
    ) -> Result<SeriesValue<Complex64>, SeriesError> {
        assert!(k >= 2);
        let prox = self.proximity_gate(p)?;
        self.adaptive_value(Family::MaassG, k, p, t, Complex64::new(0.5, 0.0), prox)
    }

    /// Jet of G_{−k,D} at τ.
    pub fn big_g_jet(
        &self,
        k: i64,
        p: Point,
        t: &TruncationParams,
        order: usize,
    ) -> Result<SeriesValue<Jet>, SeriesError> {
        assert!(k >= 2);
        let prox = self.proximity_gate(p)?;
        self.adaptive_jet(Family::MaassG, k, p, t, order, Complex64::new(0.5, 0.0), prox)
    }

    // Matched-box variants for termwise identity checks.

    pub fn f_at_specbox(&self, k: i64, p: Point, bound: i64) -> Complex64 {
        if k % 2 == 1 {
            return Complex64::default();
        }
        self.sum_values_specbox(Family::CuspF, k, p, bound) * self.f_prefactor(k)
    }

    pub fn g_at_specbox(&self, k: i64, p: Point, bound: i64) -> Complex64 {
        if k % 2 == 1 {
            return Complex64::default();
        }
        self.sum_values_specbox(Family::LocalG, k, p, bound)
    }

    pub fn big_f_jet_at_specbox(&self, k: i64, p: Point, order: usize, bound: i64) -> Jet {
        if k % 2 == 1 {
            return Jet::zero(p, order);
        }
        self.sum_jets_specbox(Family::MaassF, k, p, order, bound)
            .scale(Complex64::new(self.big_f_prefactor(k), 0.0))
    }

    pub fn big_g_jet_at_specbox(&self, k: i64, p: Point, order: usize, bound: i64) -> Jet {
        if k % 2 == 1 {
            return Jet::zero(p, order);
        }
        self.sum_jets_specbox(Family::MaassG, k, p, order, bound)
            .scale(Complex64::new(0.5, 0.0))
    }

    // ----- c_∞ and the local polynomial ------------------------------------------

    /// Partial sum of c_∞(k) over a ≤ a_limit plus tail information.
    ///
    /// The reported bound is the #{b} ≤ 2a majorant for k ≥ 3. That majorant
    /// diverges at k = 2, where the Richardson gap is reported instead.
    pub fn c_infinity(&self, k: i64, a_limit: i64) -> CInfinity {
        assert!(k >= 2 && a_limit >= 1);
        let rho = rho_sieve(self.d.get(), a_limit as usize);
        let pref = 1.0 / (2f64.powi(2 * k as i32 - 2) * (2 * k - 1) as f64);
        let mut acc = KahanSum::new();
        let mut half = 0.0;
        for a in 1..=a_limit as usize {
            acc.add(rho[a] as f64 / (a as f64).powi(k as i32));
            if a == a_limit as usize / 2 {
                half = acc.value();
            }
        }
        let partial = pref * acc.value();
        let half = pref * half;
        let extrapolated = 2.0 * partial - half;
        let tail_bound = if k >= 3 {
            // Σ_{a>A} 2a·a^{−k} ≤ 2A^{2−k}/(k−2)
            pref * 2.0 * (a_limit as f64).powi(2 - k as i32) / (k - 2) as f64
        } else {
            2.0 * (partial - half).abs()
        };
        CInfinity { partial, tail_bound, extrapolated }
    }

    /// Cached high-accuracy c_∞(k): Richardson-extrapolated sieve sum.
    /// Returns (value, error estimate).
    pub fn c_infinity_refined(&self, k: i64) -> (f64, f64) {
        if let Some(&hit) = self.cinf.read().expect("lock").get(&k) {
            return hit;
        }
        let a_limit: i64 = if k == 2 { 3_000_000 } else { 200_000 };
        let c = self.c_infinity(k, a_limit);
        let c_prev = self.c_infinity(k, a_limit / 2);
        let (value, est) = if k == 2 {
            (c.extrapolated, (c.extrapolated - c_prev.extrapolated).abs())
        } else {
            (c.extrapolated, c.tail_bound.min((c.extrapolated - c_prev.extrapolated).abs() * 4.0))
        };
        self.cinf.write().expect("lock").insert(k, (value, est));
        (value, est)
    }

    /// The local polynomial on the connected component of τ:
    /// P_C(τ) = −2c_∞(k)/C(2k−2,k−1) + (−1)^k 2^{3−2k} D^{1/2−k} Σ_{a<0<Q_τ} Q(τ,1)^{k−1}.
    ///
    /// The constant carries the full b mod 4a root count, i.e. twice the
    /// 0 ≤ b < 2a sum that `c_infinity` reports.
    pub fn local_polynomial(&self, k: i64, p: Point) -> Result<Complex64, SeriesError> {
        assert!(k >= 2);
        let support = crate::qforms::support_set(p, self.d)?;
        let (cinf, _) = self.c_infinity_refined(k);
        let ch = binomial(2 * k - 2, k - 1).expect("k ≥ 2") as f64;
        let mut acc = KahanComplex::new();
        for q in &support {
            acc.add(q.q_value(p).powi(k as i32 - 1));
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let poly = sign
            * 2f64.powi(3 - 2 * k as i32)
            * (self.d.get() as f64).powf(0.5 - k as f64)
            * acc.value();
        Ok(Complex64::new(-2.0 * cinf / ch, 0.0) + poly)
    }
}

/// c_∞ partial sum with tail information.
#[derive(Debug, Clone, Copy)]
pub struct CInfinity {
    pub partial: f64,
    pub tail_bound: f64,
    /// 2S(A) − S(A/2), one Richardson step against the ~C/A tail shape.
    pub extrapolated: f64,
}

// -----------------------------------------------------------------------------
// ρ(a) = #{0 ≤ b < 2a : b² ≡ D (mod 4a)}. Writing b = 2β + (D mod 2) turns
// this into the root count of a monic quadratic mod a, which is multiplicative
// and sieves in near-linear time.
// -----------------------------------------------------------------------------

fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let m = modulus as u128;
    let mut acc: u128 = 1;
    let mut b = (base % modulus) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

fn legendre(n: i64, p: u64) -> i64 {
    let r = n.rem_euclid(p as i64) as u64;
    if r == 0 {
        return 0;
    }
    if mod_pow(r, (p - 1) / 2, p) == 1 {
        1
    } else {
        -1
    }
}

/// Root count of the quadratic mod q by direct scan (prime powers dividing
/// 2D, and the test oracle).
fn rho_direct_scan(d: i64, q: u64) -> u32 {
    let qi = q as i64;
    let mut count = 0u32;
    if d.rem_euclid(4) == 1 {
        let c1 = (1 - d) / 4;
        for beta in 0..qi {
            if (beta * beta + beta + c1).rem_euclid(qi) == 0 {
                count += 1;
            }
        }
    } else {
        let c0 = d / 4;
        for beta in 0..qi {
            if (beta * beta - c0).rem_euclid(qi) == 0 {
                count += 1;
            }
        }
    }
    count
}

/// ρ(a) for a = 1..=a_max (index 0 unused).
pub(crate) fn rho_sieve(d: i64, a_max: usize) -> Vec<u32> {
    let mut spf = vec![0u32; a_max + 1];
    for i in 2..=a_max {
        if spf[i] == 0 {
            let mut j = i;
            while j <= a_max {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    let mut ppow_cache: HashMap<(u32, u32), u32> = HashMap::new();
    let mut rho = vec![0u32; a_max + 1];
    if a_max >= 1 {
        rho[1] = 1;
    }
    for a in 2..=a_max {
        let p = spf[a];
        let mut rest = a;
        let mut e = 0u32;
        let mut pe: u64 = 1;
        while rest % p as usize == 0 {
            rest /= p as usize;
            e += 1;
            pe *= p as u64;
        }
        let local = if (2 * d).rem_euclid(p as i64) != 0 {
            // nonsingular quadratic mod p: the root count 1 + (D|p) lifts
            // unchanged to every power
            (1 + legendre(d, p as u64)) as u32
        } else {
            *ppow_cache
                .entry((p, e))
                .or_insert_with(|| rho_direct_scan(d, pe))
        };
        rho[a] = rho[rest] * local;
    }
    rho
}

// -----------------------------------------------------------------------------
// Free functions mirroring the per-operation signatures; for repeated work
// construct an `Evaluator` once (these rebuild the root cache every call).
// -----------------------------------------------------------------------------

pub fn eval_f(
    k: i64,
    d: Discriminant,
    p: Point,
    t: &TruncationParams,
) -> Result<SeriesValue<Complex64>, SeriesError> {
    Evaluator::new(d).f_kd(k, p, t)
}

pub fn eval_g(
    k: i64,
    d: Discriminant,
    p: Point,
    t: &TruncationParams,
) -> Result<SeriesValue<Complex64>, SeriesError> {
    Evaluator::new(d).g_kd(k, p, t)
}

pub fn eval_big_f(
    k: i64,
    d: Discriminant,
    p: Point,
    t: &TruncationParams,
) -> Result<SeriesValue<Complex64>, SeriesError> {
    Evaluator::new(d).big_f(k, p, t)
}

pub fn eval_big_g(
    k: i64,
    d: Discriminant,
    p: Point,
    t: &TruncationParams,
) -> Result<SeriesValue<Complex64>, SeriesError> {
    Evaluator::new(d).big_g(k, p, t)
}
