//! Small sample-statistics helpers shared by tests and experiments.

/// Compensated (Neumaier) summation; order-dependent only at the level of
/// the final rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator.
pub fn sum_compensated<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = CompensatedSum::default();
    iter.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_decimal_masses() {
        // 700 * fl(0.001) rounds to the double just above 0.7 (math.fsum agrees)
        let exact = 0.7000000000000001;
        assert_eq!(sum_compensated(std::iter::repeat_n(0.001, 700)), exact);
        assert_ne!(std::iter::repeat_n(0.001, 700).sum::<f64>(), exact);
        assert_eq!(sum_compensated([1e16, 1.0, -1e16]), 1.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.5, -3.0, 4.25, 0.5];
        let s: RunningStats = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((s.mean() - mean).abs() < 1e-15);
        assert!((s.variance() - var).abs() < 1e-14);
        assert!((s.std_error() - (var / 5.0).sqrt()).abs() < 1e-14);
    }
}
