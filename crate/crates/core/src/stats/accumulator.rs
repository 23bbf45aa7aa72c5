use serde::{Deserialize, Serialize};

/// Streaming count, mean and central moment sums up to fourth order.
/// Two accumulators over disjoint data merge exactly (up to rounding) into
/// the accumulator of the union.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub const fn new() -> Self {
        Moments {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.mean += delta_n;
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
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.n += other.n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
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
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    /// Second central moment `m2 / n`.
    pub fn central2(&self) -> f64 {
        self.m2 / self.n as f64
    }

    /// Fourth central moment `m4 / n`.
    pub fn central4(&self) -> f64 {
        self.m4 / self.n as f64
    }

    pub fn skewness(&self) -> f64 {
        (self.n as f64).sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// `m4 n / m2² - 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        self.n as f64 * self.m4 / (self.m2 * self.m2) - 3.0
    }

    /// Standard error of the mean for independent data.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Per-component moments of a vector-valued stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    components: Vec<Moments>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            components: vec![Moments::new(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn push(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.components.len(), "dimension mismatch");
        for (m, &v) in self.components.iter_mut().zip(values) {
            m.push(v);
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(other.dim(), self.dim(), "dimension mismatch");
        for (m, o) in self.components.iter_mut().zip(&other.components) {
            m.merge(o);
        }
    }

    pub fn component(&self, i: usize) -> &Moments {
        &self.components[i]
    }

    pub fn components(&self) -> &[Moments] {
        &self.components
    }

    pub fn count(&self) -> u64 {
        self.components.first().map_or(0, Moments::count)
    }
}
