use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EnvError;

/// Probability tolerance when checking that the attack vector sums to one.
const SUM_TOLERANCE: f64 = 1e-9;

/// Reactive jammer: discrete power levels and the probability of answering
/// detected activity with each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerConfig {
    /// Attack power levels in watts; level 0 is silence.
    pub power_levels: Vec<f64>,
    /// Probability of each level once activity is detected.
    pub attack_probs: Vec<f64>,
    /// Average power constraint.
    pub avg_power: f64,
    /// Maximum average power the jammer's hardware and budget allow.
    pub max_avg_power: f64,
    pub peak_power: f64,
    /// Attenuation of the jamming signal at the receiver.
    pub attenuation: f64,
    pub noise_var: f64,
}

impl Default for JammerConfig {
    fn default() -> Self {
        Self::from_budget(8.0)
    }
}

impl JammerConfig {
    pub const DEFAULT_LEVELS: [f64; 4] = [0.0, 4.0, 10.0, 15.0];
    /// How an attack is split over the nonzero levels.
    pub const DEFAULT_SPLIT: [f64; 3] = [0.5, 0.3, 0.2];
    pub const DEFAULT_MAX_AVG_POWER: f64 = 10.0;
    pub const DEFAULT_PEAK_POWER: f64 = 15.0;

    /// The default four-level jammer with average power budget `avg_power`.
    pub fn from_budget(avg_power: f64) -> Self {
        Self::with_split(
            Self::DEFAULT_LEVELS.to_vec(),
            &Self::DEFAULT_SPLIT,
            avg_power,
            Self::DEFAULT_MAX_AVG_POWER,
            Self::DEFAULT_PEAK_POWER,
        )
    }

    /// Attack probabilities `{1 - p, s_1 p, ..., s_N p}` with
    /// `p = avg_power / max_avg_power`.
    pub fn with_split(
        power_levels: Vec<f64>,
        split: &[f64],
        avg_power: f64,
        max_avg_power: f64,
        peak_power: f64,
    ) -> Self {
        let p = avg_power / max_avg_power;
        let attack_probs = std::iter::once(1.0 - p).chain(split.iter().map(|s| s * p)).collect();
        Self {
            power_levels,
            attack_probs,
            avg_power,
            max_avg_power,
            peak_power,
            attenuation: 1.0,
            noise_var: 1.0,
        }
    }

    pub fn level_count(&self) -> usize {
        self.power_levels.len()
    }

    /// Expected attack power once activity is detected, `x . P_J`.
    pub fn expected_power(&self) -> f64 {
        self.attack_probs.iter().zip(&self.power_levels).map(|(x, p)| x * p).sum()
    }

    /// Probability that detected activity is answered by an attack.
    pub fn attack_prob(&self) -> f64 {
        self.attack_probs.iter().skip(1).sum()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |field: &'static str, reason: &str| EnvError::InvalidParam { field, reason: reason.to_string() };
        if self.power_levels.len() < 2 {
            return Err(bad("P_J", "need the silent level and at least one attack level"));
        }
        if self.power_levels[0] != 0.0 {
            return Err(bad("P_J", "level 0 must be 0 W"));
        }
        if self.power_levels.iter().any(|&p| !(0.0..=self.peak_power).contains(&p)) {
            return Err(bad("P_J", "every level must lie in [0, P_max]"));
        }
        if self.attack_probs.len() != self.power_levels.len() {
            return Err(bad("x", "need one probability per power level"));
        }
        if self.attack_probs.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(bad("x", "attack probabilities must lie in [0, 1]"));
        }
        if (self.attack_probs.iter().sum::<f64>() - 1.0).abs() > SUM_TOLERANCE {
            return Err(bad("x", "attack probabilities must sum to 1"));
        }
        if !(self.avg_power >= 0.0 && self.avg_power <= self.peak_power) {
            return Err(bad("P_avg", "average power must lie in [0, P_max]"));
        }
        if self.expected_power() > self.avg_power + SUM_TOLERANCE {
            return Err(bad("P_avg", "attack strategy exceeds the average power constraint"));
        }
        if !(0.0..=1.0).contains(&self.attenuation) {
            return Err(bad("phi", "attenuation must lie in [0, 1]"));
        }
        if self.noise_var < 0.0 {
            return Err(bad("rho_sq", "noise variance must be nonnegative"));
        }
        Ok(())
    }

    /// Power level the jammer answers with. An idle channel is never attacked.
    pub fn sample<R: Rng + ?Sized>(&self, detected_activity: bool, rng: &mut R) -> usize {
        if !detected_activity {
            return 0;
        }
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        for (level, &x) in self.attack_probs.iter().enumerate() {
            cumulative += x;
            if u < cumulative {
                return level;
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        self.attack_probs.iter().rposition(|&x| x > 0.0).unwrap_or(0)
    }
}

/// SINR at the receiver when the jammer attacks at `level`.
pub fn sinr(received_power: f64, level: usize, cfg: &JammerConfig) -> Result<f64, EnvError> {
    let interference = cfg.attenuation * cfg.power_levels[level] + cfg.noise_var;
    if interference == 0.0 {
        return Err(EnvError::DegenerateSinr);
    }
    Ok(received_power / interference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn default_budget_gives_published_strategy() {
        let cfg = JammerConfig::from_budget(8.0);
        let expected = [0.2, 0.4, 0.24, 0.16];
        for (x, e) in cfg.attack_probs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15, "{x} vs {e}");
        }
        assert!((cfg.expected_power() - 6.4).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn idle_channel_is_never_attacked() {
        let cfg = JammerConfig::default();
        let mut rng = seeded_rng(1, 0);
        assert!((0..1000).all(|_| cfg.sample(false, &mut rng) == 0));
    }

    #[test]
    fn zero_budget_never_attacks() {
        let cfg = JammerConfig::from_budget(0.0);
        let mut rng = seeded_rng(2, 0);
        assert!((0..10_000).all(|_| cfg.sample(true, &mut rng) == 0));
    }

    #[test]
    fn full_budget_always_attacks() {
        let cfg = JammerConfig::from_budget(10.0);
        let mut rng = seeded_rng(2, 0);
        assert!((0..10_000).all(|_| cfg.sample(true, &mut rng) > 0));
    }

    #[test]
    fn empirical_frequencies_match_strategy() {
        let cfg = JammerConfig::from_budget(8.0);
        let mut rng = seeded_rng(7, 0);
        let n = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[cfg.sample(true, &mut rng)] += 1;
        }
        for (count, &x) in counts.iter().zip(&cfg.attack_probs) {
            let freq = *count as f64 / n as f64;
            let sigma = (x * (1.0 - x) / n as f64).sqrt();
            assert!((freq - x).abs() < 3.0 * sigma, "freq {freq} vs {x}");
        }
    }

    #[test]
    fn sinr_arithmetic() {
        let mut cfg = JammerConfig::from_budget(8.0);
        cfg.power_levels = vec![0.0, 4.0, 10.0, 15.0];
        cfg.attenuation = 0.5;
        cfg.noise_var = 0.0;
        assert_eq!(sinr(2.0, 1, &cfg).unwrap(), 1.0);
        cfg.noise_var = 1.0;
        assert_eq!(sinr(1.0, 0, &cfg).unwrap(), 1.0);
        cfg.attenuation = 1.0;
        assert_eq!(sinr(1.0, 3, &cfg).unwrap(), 0.0625);
    }

    #[test]
    fn sinr_rejects_zero_denominator() {
        let mut cfg = JammerConfig::default();
        cfg.noise_var = 0.0;
        assert_eq!(sinr(1.0, 0, &cfg), Err(EnvError::DegenerateSinr));
    }

    #[test]
    fn over_budget_strategy_is_rejected() {
        let mut cfg = JammerConfig::from_budget(8.0);
        cfg.attack_probs = vec![0.0, 0.0, 0.0, 1.0];
        assert!(matches!(cfg.validate(), Err(EnvError::InvalidParam { field: "P_avg", .. })));
        cfg.attack_probs = vec![0.5, 0.0, 0.0, 0.6];
        assert!(matches!(cfg.validate(), Err(EnvError::InvalidParam { field: "x", .. })));
    }
}
