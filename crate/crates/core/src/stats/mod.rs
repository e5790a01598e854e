//! Error distributions estimated from paired forecast/observation archives.

mod growth;
mod logistic;
mod normal;
mod pairing;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use growth::{fit_growth_scale, BucketScale, GrowthFit, GrowthFitOptions, GrowthModel};
pub use logistic::{fit_logistic_mle, LogisticModel, MLE_GRADIENT_TOL};
pub use normal::{bic, fit_normal_mle, NormalFit};
pub use pairing::{pair_errors, ForecastErrorSample, GrowthSample, PairedErrors};

/// Fitted stochastic storm-cell error model.
///
/// `center_x[τ-1]`, `center_y[τ-1]` describe the center forecast error at
/// horizon `τ`; the growth models give the per-10-minute change in width and
/// height as a function of cell size.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModelSet {
    pub center_x: Vec<LogisticModel>,
    pub center_y: Vec<LogisticModel>,
    pub width_growth: GrowthModel,
    pub height_growth: GrowthModel,
}

impl ErrorModelSet {
    /// Zero-noise model over `horizons` horizons: forecasts are exact and
    /// cells keep their size.
    pub fn deterministic(horizons: usize) -> Self {
        Self {
            center_x: vec![LogisticModel::ZERO; horizons],
            center_y: vec![LogisticModel::ZERO; horizons],
            width_growth: GrowthModel::STATIC,
            height_growth: GrowthModel::STATIC,
        }
    }

    pub fn horizons(&self) -> usize {
        self.center_x.len()
    }

    /// Center error models at horizon `tau` (1-based).
    pub fn center(&self, tau: usize) -> Result<(LogisticModel, LogisticModel)> {
        if tau == 0 || tau > self.horizons() {
            return Err(Error::Range(format!(
                "horizon {tau} outside the fitted range 1..={}",
                self.horizons()
            )));
        }
        Ok((self.center_x[tau - 1], self.center_y[tau - 1]))
    }

    pub fn to_toml(&self) -> String {
        let file = ModelFile {
            horizons: self.horizons(),
            horizon: self
                .center_x
                .iter()
                .zip(&self.center_y)
                .enumerate()
                .map(|(i, (x, y))| HorizonEntry {
                    tau: i + 1,
                    minutes: 10 * (i + 1),
                    x: *x,
                    y: *y,
                })
                .collect(),
            width_growth: self.width_growth,
            height_growth: self.height_growth,
        };
        toml::to_string(&file).expect("model set serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))?;
        if file.horizon.len() != file.horizons {
            return Err(Error::Schema(format!(
                "model file declares {} horizons but lists {}",
                file.horizons,
                file.horizon.len()
            )));
        }
        for (i, h) in file.horizon.iter().enumerate() {
            if h.tau != i + 1 {
                return Err(Error::Schema(format!(
                    "horizon entries must be ordered 1..{}, found tau={} at position {}",
                    file.horizons,
                    h.tau,
                    i + 1
                )));
            }
            LogisticModel::new(h.x.m, h.x.s)?;
            LogisticModel::new(h.y.m, h.y.s)?;
        }
        Ok(Self {
            center_x: file.horizon.iter().map(|h| h.x).collect(),
            center_y: file.horizon.iter().map(|h| h.y).collect(),
            width_growth: file.width_growth,
            height_growth: file.height_growth,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    horizons: usize,
    horizon: Vec<HorizonEntry>,
    width_growth: GrowthModel,
    height_growth: GrowthModel,
}

#[derive(Serialize, Deserialize)]
struct HorizonEntry {
    tau: usize,
    minutes: usize,
    x: LogisticModel,
    y: LogisticModel,
}

/// Logistic vs normal fit of one sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitComparison {
    pub n: usize,
    pub logistic: LogisticModel,
    pub normal: NormalFit,
    pub bic_logistic: f64,
    pub bic_normal: f64,
}

impl FitComparison {
    pub fn prefers_logistic(&self) -> bool {
        self.bic_logistic < self.bic_normal
    }
}

pub fn compare_fits(samples: &[f64]) -> Result<FitComparison> {
    let logistic = fit_logistic_mle(samples)?;
    let normal = fit_normal_mle(samples)?;
    Ok(FitComparison {
        n: samples.len(),
        logistic,
        normal,
        bic_logistic: bic(logistic.log_likelihood(samples), 2, samples.len())?,
        bic_normal: bic(normal.log_likelihood(samples), 2, samples.len())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReport {
    pub tau: usize,
    pub x: FitComparison,
    pub y: FitComparison,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub horizons: Vec<HorizonReport>,
    pub width: GrowthFit,
    pub height: GrowthFit,
}

/// Fits center-error models for horizons `1..=horizons` and the growth
/// models from paired samples.
pub fn fit_error_models(
    paired: &PairedErrors,
    horizons: usize,
    growth_opts: GrowthFitOptions,
) -> Result<(ErrorModelSet, FitReport)> {
    if horizons == 0 {
        return Err(Error::Range("at least one horizon is required".into()));
    }
    let mut reports = Vec::with_capacity(horizons);
    for tau in 1..=horizons {
        let (xs, ys): (Vec<f64>, Vec<f64>) = paired.at_horizon(tau).map(|s| (s.dx, s.dy)).unzip();
        let fit = |v: &[f64], axis: &str| {
            compare_fits(v).map_err(|e| match e {
                Error::Degenerate(m) => Error::Degenerate(format!(
                    "horizon {tau} ({} min) {axis}-error: {m}",
                    10 * tau
                )),
                other => other,
            })
        };
        reports.push(HorizonReport {
            tau,
            x: fit(&xs, "x")?,
            y: fit(&ys, "y")?,
        });
    }
    let widths: Vec<(u32, f64)> = paired.growth.iter().map(|g| (g.pixels, g.dw)).collect();
    let heights: Vec<(u32, f64)> = paired.growth.iter().map(|g| (g.pixels, g.dh)).collect();
    let width = fit_growth_scale(&widths, growth_opts)?;
    let height = fit_growth_scale(&heights, growth_opts)?;

    let models = ErrorModelSet {
        center_x: reports.iter().map(|r| r.x.logistic).collect(),
        center_y: reports.iter().map(|r| r.y.logistic).collect(),
        width_growth: width.model,
        height_growth: height.model,
    };
    Ok((
        models,
        FitReport {
            horizons: reports,
            width,
            height,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_file_round_trips() {
        let models = ErrorModelSet {
            center_x: vec![LogisticModel { m: 0.1, s: 1.25 }, LogisticModel { m: -0.3, s: 2.0 / 3.0 }],
            center_y: vec![LogisticModel { m: 0.0, s: 0.9 }, LogisticModel { m: 1e-7, s: 3.5 }],
            width_growth: GrowthModel {
                location: 0.2,
                intercept: 0.1,
                slope: 0.05,
                min_scale: 0.01,
                size_independent: false,
            },
            height_growth: GrowthModel::STATIC,
        };
        let back = ErrorModelSet::from_toml(&models.to_toml()).unwrap();
        assert_eq!(models, back);
    }

    #[test]
    fn out_of_range_horizon_is_rejected() {
        let models = ErrorModelSet::deterministic(4);
        assert!(models.center(4).is_ok());
        assert!(matches!(models.center(5), Err(Error::Range(_))));
        assert!(matches!(models.center(0), Err(Error::Range(_))));
    }

    #[test]
    fn negative_scale_in_file_is_rejected() {
        let text = ErrorModelSet::deterministic(1).to_toml().replace("s = 0.0", "s = -1.0");
        assert!(ErrorModelSet::from_toml(&text).is_err());
    }

    #[test]
    fn logistic_data_prefers_logistic_by_bic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = LogisticModel { m: 0.0, s: 1.0 };
        let xs: Vec<f64> = (0..5000).map(|_| model.sample(&mut rng)).collect();
        assert!(compare_fits(&xs).unwrap().prefers_logistic());
    }
}
