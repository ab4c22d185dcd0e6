//! Compensated and log-space accumulators for partition sums.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
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
    pub fn scale(&mut self, factor: f64) {
        self.sum *= factor;
        self.comp *= factor;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Streaming `log Σ exp(xᵢ)`.
///
/// Keeps a running maximum and a compensated sum of `exp(xᵢ − max)`,
/// rescaling whenever a new maximum arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    acc: CompensatedSum,
    count: u64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            acc: CompensatedSum::new(),
            count: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        self.count += 1;
        if x <= self.max {
            self.acc.add((x - self.max).exp());
        } else {
            if self.max > f64::NEG_INFINITY {
                self.acc.scale((self.max - x).exp());
            }
            self.max = x;
            self.acc.add(1.0);
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.count == 0 {
            return;
        }
        let lo = other.value();
        if self.count == 0 {
            *self = *other;
            return;
        }
        self.add(lo);
        // `add` counted the merged block as one term
        self.count += other.count - 1;
    }

    /// Number of finite terms added.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// `log Σ exp(xᵢ)`, or `-∞` for an empty sum.
    pub fn value(&self) -> f64 {
        if self.count == 0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.value().ln()
        }
    }
}

impl FromIterator<f64> for LogSumExp {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = LogSumExp::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Numerically stable `log cosh x`.
#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-13).abs() < 1e-20);
    }

    #[test]
    fn lse_matches_direct_sum_when_representable() {
        let xs = [0.3, -1.2, 4.0, 2.5, -7.0, 0.0];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        let lse: LogSumExp = xs.iter().copied().collect();
        assert!((lse.value() - direct).abs() < 1e-14);
        assert_eq!(lse.count(), 6);
    }

    #[test]
    fn lse_handles_overflowing_exponents() {
        let lse: LogSumExp = [1000.0, 1000.0].into_iter().collect();
        assert!((lse.value() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
        let mut a: LogSumExp = [1.0, 2.0].into_iter().collect();
        let b: LogSumExp = [3.0].into_iter().collect();
        a.merge(&b);
        let direct = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((a.value() - direct).abs() < 1e-14);
        assert_eq!(a.count(), 3);
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.7) - 0.7f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(-800.0) - (800.0 - 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_cosh(0.0), 0.0);
    }
}
