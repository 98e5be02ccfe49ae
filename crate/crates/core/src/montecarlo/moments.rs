use serde::{Deserialize, Serialize};

/// Streaming central moments up to fourth order.
///
/// Updates and merges use the pairwise formulas of Pébay (2008), so
/// partial accumulators can be combined in any grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        *self = Moments {
            n: self.n + other.n,
            mean,
            m2,
            m3,
            m4,
        };
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
            (self.m2 / (self.n as f64 - 1.0)).max(0.0)
        }
    }

    /// Population central moment of order 2, 3 or 4.
    pub fn central(&self, order: u32) -> f64 {
        let n = self.n as f64;
        match order {
            2 => self.m2 / n,
            3 => self.m3 / n,
            4 => self.m4 / n,
            _ => panic!("central moments are tracked up to order 4"),
        }
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        let variance = self.variance();
        let (se, var_se) = if self.n < 2 {
            (0.0, 0.0)
        } else {
            let mu2 = self.central(2);
            // delta method: Var(s^2) ~ (mu4 - mu2^2) / n
            (
                (variance / n).sqrt(),
                ((self.central(4) - mu2 * mu2).max(0.0) / n).sqrt(),
            )
        };
        McEstimate {
            mean: self.mean,
            variance,
            standard_error: se,
            variance_standard_error: var_se,
            count: self.n,
        }
    }
}

impl Extend<f64> for Moments {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        m.extend(iter);
        m
    }
}

/// Sample mean and variance with their standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    /// `sqrt(variance / count)`.
    pub standard_error: f64,
    pub variance_standard_error: f64,
    pub count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
        (mean, c(2), c(3), c(4))
    }

    #[test]
    fn known_values() {
        let m: Moments = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]
            .into_iter()
            .collect();
        assert_eq!(m.mean(), 5.0);
        assert!((m.central(2) - 4.0).abs() < 1e-12);
        assert!((m.variance() - 32.0 / 7.0).abs() < 1e-12);
        let e = m.estimate();
        assert!((e.standard_error - (e.variance / 8.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_and_single() {
        let e = Moments::new().estimate();
        assert_eq!((e.count, e.variance), (0, 0.0));
        let one: Moments = [3.0].into_iter().collect();
        assert_eq!(one.estimate().variance, 0.0);
    }

    proptest! {
        #[test]
        fn matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let m: Moments = xs.iter().copied().collect();
            let (mean, c2, c3, c4) = naive(&xs);
            // Central moment k is compared on the scale sd^k, so exact zeros do not break it.
            let sd = c2.sqrt();
            let tol = |v: f64, s: f64, k: i32| (v - s).abs() <= 1e-8 * (1.0 + s.abs() + sd.powi(k));
            prop_assert!(tol(m.mean(), mean, 1));
            prop_assert!(tol(m.central(2), c2, 2));
            prop_assert!(tol(m.central(3), c3, 3));
            prop_assert!(tol(m.central(4), c4, 4));
        }

        #[test]
        fn merge_is_grouping_independent(xs in prop::collection::vec(-50f64..50.0, 3..150), cut in 0usize..150) {
            let cut = cut % xs.len();
            let whole: Moments = xs.iter().copied().collect();
            let mut a: Moments = xs[..cut].iter().copied().collect();
            let b: Moments = xs[cut..].iter().copied().collect();
            a.merge(&b);
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + y.abs());
            prop_assert_eq!(a.count(), whole.count());
            prop_assert!(close(a.mean(), whole.mean()));
            prop_assert!(close(a.central(2), whole.central(2)));
            prop_assert!(close(a.central(3), whole.central(3)));
            prop_assert!(close(a.central(4), whole.central(4)));
        }
    }
}
