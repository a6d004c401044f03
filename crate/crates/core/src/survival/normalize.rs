//! Density-based supervised normalization of death probabilities.
//!
//! One Gaussian KDE per outcome class is fit over the training death
//! probabilities; a query maps to the count-weighted share of the death
//! density, `w_D·f_D(p) / (w_D·f_D(p) + w_S·f_S(p))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_BANDWIDTH: f64 = 1e-3;

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9·min(σ, IQR/1.34)·n^(-1/5)`, floored.
pub fn silverman_bandwidth(points: &[f64]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return MIN_BANDWIDTH;
    }
    let mean = points.iter().sum::<f64>() / n;
    let sd = (points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    (0.9 * spread * n.powf(-0.2)).max(MIN_BANDWIDTH)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKde {
    pub points: Vec<f64>,
    pub bandwidth: f64,
}

impl GaussianKde {
    pub fn fit(points: Vec<f64>) -> Self {
        let bandwidth = silverman_bandwidth(&points);
        GaussianKde { points, bandwidth }
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.points.len() as f64 * h * (2.0 * PI).sqrt());
        norm * self
            .points
            .iter()
            .map(|p| (-0.5 * ((x - p) / h).powi(2)).exp())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathProbabilityNormalizer {
    pub death: GaussianKde,
    pub survival: GaussianKde,
    /// Share of training points in the death class.
    pub death_weight: f64,
}

impl DeathProbabilityNormalizer {
    /// `samples`: (probability of death, died-by-target) pairs.
    pub fn fit(samples: &[(f64, bool)]) -> Result<Self> {
        let death: Vec<f64> = samples.iter().filter(|s| s.1).map(|s| s.0).collect();
        let survival: Vec<f64> = samples.iter().filter(|s| !s.1).map(|s| s.0).collect();
        if death.len() < 2 || survival.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "density normalization needs >= 2 points per class, got {} death / {} survival",
                death.len(),
                survival.len()
            )));
        }
        let death_weight = death.len() as f64 / samples.len() as f64;
        Ok(DeathProbabilityNormalizer {
            death: GaussianKde::fit(death),
            survival: GaussianKde::fit(survival),
            death_weight,
        })
    }

    pub fn normalize(&self, p: f64) -> f64 {
        let d = self.death_weight * self.death.density(p);
        let s = (1.0 - self.death_weight) * self.survival.density(p);
        if d + s == 0.0 {
            log::warn!("both class densities vanish at {p}; using the class prior");
            return self.death_weight;
        }
        d / (d + s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_classes_give_one_half_at_the_midpoint() {
        let survival: Vec<f64> = (0..50).map(|i| 0.1 + 0.004 * i as f64).collect();
        let mut samples: Vec<(f64, bool)> = survival.iter().map(|&p| (p, false)).collect();
        samples.extend(survival.iter().map(|&p| (1.0 - p, true)));
        let norm = DeathProbabilityNormalizer::fit(&samples).unwrap();
        assert!((norm.normalize(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_gaussians_at_zero_and_one() {
        // Mirror-image draws from N(0,1) and N(1,1): closed form at 0.5 is 0.5.
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let z: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut samples: Vec<(f64, bool)> = z.iter().map(|&v| (v, false)).collect();
        samples.extend(z.iter().map(|&v| (1.0 - v, true)));
        let norm = DeathProbabilityNormalizer::fit(&samples).unwrap();
        assert!((norm.normalize(0.5) - 0.5).abs() < 1e-12);
        // Dense numerical check of the KDE itself: it integrates to one.
        let h = 1e-3;
        let mass: f64 = (-8000..9000).map(|k| norm.death.density(k as f64 * h) * h).sum();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn death_only_region_goes_to_one() {
        let mut samples: Vec<(f64, bool)> = (0..20).map(|i| (0.01 + 0.001 * i as f64, false)).collect();
        samples.extend((0..20).map(|i| (0.8 + 0.001 * i as f64, true)));
        let norm = DeathProbabilityNormalizer::fit(&samples).unwrap();
        assert!((norm.normalize(0.81) - 1.0).abs() < 1e-6);
        assert!(norm.normalize(0.015) < 1e-6);
    }

    #[test]
    fn vanishing_densities_fall_back_to_prior() {
        let samples = vec![(0.1, false), (0.1, false), (0.1, false), (0.2, true), (0.2, true)];
        let norm = DeathProbabilityNormalizer::fit(&samples).unwrap();
        assert_eq!(norm.normalize(100.0), 0.4);
    }

    #[test]
    fn requires_two_points_per_class() {
        let samples = vec![(0.1, false), (0.2, false), (0.3, true)];
        assert!(DeathProbabilityNormalizer::fit(&samples).is_err());
    }

    #[test]
    fn bandwidth_floor() {
        assert_eq!(silverman_bandwidth(&[0.2, 0.2, 0.2]), 1e-3);
        let h = silverman_bandwidth(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        // sd = 1.5811, IQR/1.34 = 1.4925 -> 0.9 * 1.4925 * 5^-0.2.
        assert!((h - 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2)).abs() < 1e-12);
    }
}
