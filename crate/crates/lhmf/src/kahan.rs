//! Compensated (Kahan–Babuška–Neumaier) accumulators.
//!
//! Every infinite-series reduction in this crate runs through these, in a
//! fixed term order, so results are bit-identical across runs and across
//! worker counts.

use num_complex::Complex64;

/// Neumaier-compensated scalar sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Fold another partial sum into this one (used when combining
    /// fixed-order parallel chunks).
    #[inline]
    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated complex sum (independent real/imaginary accumulators).
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn merge(&mut self, other: &KahanComplex) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation_naive_sum_loses() {
        let big = 1e16;
        let mut k = KahanSum::new();
        for x in [1.0, big, 1.0, -big] {
            k.add(x);
        }
        assert_eq!(k.value(), 2.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 2654435761_u64 as usize) as f64).sin()).collect();
        let mut whole = KahanSum::new();
        for &x in &xs {
            whole.add(x);
        }
        let mut merged = KahanSum::new();
        for chunk in xs.chunks(64) {
            let mut part = KahanSum::new();
            for &x in chunk {
                part.add(x);
            }
            merged.merge(&part);
        }
        assert!((whole.value() - merged.value()).abs() <= 1e-12 * whole.value().abs().max(1.0));
    }
}
