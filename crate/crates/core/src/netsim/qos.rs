use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid QoS: {0}")]
pub struct QosError(pub String);

/// Link quality model: uniform latency, loss recovered by retransmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosConfig {
    pub latency_min: f64,
    pub latency_max: f64,
    pub loss_prob: f64,
    pub retransmit_timeout: f64,
    pub seed: u64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self { latency_min: 0.002, latency_max: 0.010, loss_prob: 0.0, retransmit_timeout: 0.05, seed: 1 }
    }
}

impl QosConfig {
    pub fn validate(&self) -> Result<(), QosError> {
        if !(self.latency_min > 0.0 && self.latency_min <= self.latency_max && self.latency_max.is_finite()) {
            return Err(QosError(format!(
                "need 0 < latency_min <= latency_max, got [{}, {}]",
                self.latency_min, self.latency_max
            )));
        }
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(QosError(format!("loss_prob must lie in [0, 1), got {}", self.loss_prob)));
        }
        if !(self.retransmit_timeout > self.latency_max && self.retransmit_timeout.is_finite()) {
            return Err(QosError(format!(
                "retransmit_timeout ({}) must exceed latency_max ({})",
                self.retransmit_timeout, self.latency_max
            )));
        }
        Ok(())
    }
}

/// One latency draw, uniform on `[latency_min, latency_max]`.
pub fn sample_latency<R: Rng + ?Sized>(qos: &QosConfig, rng: &mut R) -> f64 {
    if qos.latency_min == qos.latency_max {
        qos.latency_min
    } else {
        rng.random_range(qos.latency_min..=qos.latency_max)
    }
}

/// Retransmissions needed before a send gets through.
pub fn sample_retransmissions<R: Rng + ?Sized>(qos: &QosConfig, rng: &mut R) -> u32 {
    let mut k = 0;
    while qos.loss_prob > 0.0 && rng.random::<f64>() < qos.loss_prob {
        k += 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_interval() {
        let qos = QosConfig { latency_min: 0.005, latency_max: 0.005, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| sample_latency(&qos, &mut rng) == 0.005));
    }

    #[test]
    fn same_seed_same_draws() {
        let qos = QosConfig::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_latency(&qos, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn validation() {
        assert!(QosConfig::default().validate().is_ok());
        let bad = [
            QosConfig { latency_min: 0.0, ..Default::default() },
            QosConfig { latency_min: 0.02, ..Default::default() },
            QosConfig { loss_prob: 1.0, ..Default::default() },
            QosConfig { retransmit_timeout: 0.01, ..Default::default() },
        ];
        for q in bad {
            assert!(q.validate().is_err(), "{q:?}");
        }
    }
}
