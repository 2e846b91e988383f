//! Compensated (Kahan-Babuska-Neumaier) summation.
//!
//! Calibrated measures on heavy-tailed data span many orders of magnitude;
//! naive accumulation loses the small terms.

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
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        // 1 + 2^-60 repeated: naive summation drops every small term.
        let mut acc = KahanSum::new();
        acc.add(1.0);
        let tiny = (2.0f64).powi(-60);
        for _ in 0..1_000_000 {
            acc.add(tiny);
        }
        let expect = 1.0 + 1_000_000.0 * tiny;
        assert!((acc.total() - expect).abs() < 1e-18);
    }

    #[test]
    fn sum_helper_matches_loop() {
        let xs = [1.5, -2.25, 3.125, 1e10, -1e10];
        assert_eq!(sum(xs.iter().copied()), 2.375);
    }
}
