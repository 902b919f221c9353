use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{population_std, Dataset};
use crate::error::{Error, Result};
use crate::rng;

/// Largest supported noise level, as a fraction of the target's standard deviation.
pub const MAX_NOISE_LEVEL: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
    /// Also perturb the feature columns (each by `level` times its own std).
    #[serde(default)]
    pub features: bool,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Self {
        Self {
            level,
            seed,
            features: false,
        }
    }

    /// Levels must lie on the 1% grid between 0 and 10%.
    pub fn validate(&self) -> Result<()> {
        let steps = self.level * 100.0;
        if !(0.0..=MAX_NOISE_LEVEL + 1e-12).contains(&self.level) || (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "noise level {} is not one of 0.00, 0.01, ..., 0.10",
                self.level
            )));
        }
        Ok(())
    }
}

/// Adds zero-mean Gaussian noise with std `level·σ_y` to every target value.
/// The previous target is kept as the clean copy.
pub fn add_noise(data: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut out = data.clone();
    out.meta.noise_level = spec.level;
    out.meta.noise_seed = Some(spec.seed);
    if spec.level == 0.0 {
        return Ok(out);
    }
    let clean = data.clean_target().to_vec();
    let sigma = spec.level * population_std(&clean);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut r = rng::stream(spec.seed, "noise-target", 0);
    let noisy = clean.iter().map(|y| y + normal.sample(&mut r)).collect();
    out.set_target(noisy, Some(clean));
    if spec.features {
        for (j, col) in out.columns_mut().iter_mut().enumerate() {
            let s = spec.level * population_std(col);
            let normal = Normal::new(0.0, s).map_err(|e| Error::config(e.to_string()))?;
            let mut r = rng::stream(spec.seed, "noise-feature", j as u64);
            for v in col.iter_mut() {
                *v += normal.sample(&mut r);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_dataset, GenerateConfig};

    #[test]
    fn zero_level_is_identity() {
        let ds = generate_dataset(&GenerateConfig::default()).unwrap();
        let n = add_noise(&ds, &NoiseSpec::new(0.0, 1)).unwrap();
        assert_eq!(n.target(), ds.target());
        assert_eq!(n.columns(), ds.columns());
    }

    #[test]
    fn noise_scale_and_reproducibility() {
        let ds = generate_dataset(&GenerateConfig::default()).unwrap();
        let a = add_noise(&ds, &NoiseSpec::new(0.05, 9)).unwrap();
        let b = add_noise(&ds, &NoiseSpec::new(0.05, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clean_target(), ds.target());
        let diff: Vec<f64> = a.target().iter().zip(ds.target()).map(|(x, y)| x - y).collect();
        let ratio = population_std(&diff) / (0.05 * ds.target_std());
        assert!((0.9..1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn off_grid_levels_rejected() {
        assert!(NoiseSpec::new(0.015, 0).validate().is_err());
        assert!(NoiseSpec::new(0.2, 0).validate().is_err());
        assert!(NoiseSpec::new(0.07, 0).validate().is_ok());
    }
}
