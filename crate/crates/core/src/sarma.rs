//! Seasonal ARMA(1,1)x(1,1)_s simulation and sample ACF/PACF estimation.
//!
//! The simulated process is
//!
//! ```text
//! (1 - phi B)(1 - Phi B^s) z_t = (1 + theta B)(1 + Theta B^s) w_t,   w_t ~ N(0, sigma^2)
//! ```
//!
//! expanded into the explicit recursion over past values and innovations,
//! started from zero history and run for `burn_in` extra steps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{self, layer_stride, overlap_zero_mask, ContourError};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SarmaError {
    #[error("non-stationary parameters: |phi| = {phi}, |Phi| = {seasonal_phi} (both must be < 1)")]
    NonStationaryParams { phi: f64, seasonal_phi: f64 },
    #[error("non-invertible MA parameters: |theta| and |Theta| must be <= 1")]
    NonInvertibleParams,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error("series is constant")]
    ConstantSeries,
    #[error("series of length {len} too short for lag {max_lag}")]
    SeriesTooShort { len: usize, max_lag: usize },
    #[error(transparent)]
    Contour(#[from] ContourError),
}

pub type Result<T, E = SarmaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarmaParams {
    pub phi: f64,
    pub theta: f64,
    pub seasonal_phi: f64,
    pub seasonal_theta: f64,
    pub season: usize,
    pub sigma: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    200
}

impl SarmaParams {
    pub fn new(
        phi: f64,
        theta: f64,
        seasonal_phi: f64,
        seasonal_theta: f64,
        season: usize,
        sigma: f64,
        burn_in: usize,
    ) -> Result<Self> {
        let params = SarmaParams {
            phi,
            theta,
            seasonal_phi,
            seasonal_theta,
            season,
            sigma,
            burn_in,
        };
        params.validate()?;
        Ok(params)
    }

    /// Pure white noise with standard deviation `sigma` and no burn-in.
    pub fn white_noise(sigma: f64) -> Self {
        SarmaParams {
            phi: 0.0,
            theta: 0.0,
            seasonal_phi: 0.0,
            seasonal_theta: 0.0,
            season: 1,
            sigma,
            burn_in: 0,
        }
    }

    /// AR(1) with the given coefficient.
    pub fn ar1(phi: f64, sigma: f64) -> Result<Self> {
        Self::new(phi, 0.0, 0.0, 0.0, 1, sigma, default_burn_in())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.phi,
            self.theta,
            self.seasonal_phi,
            self.seasonal_theta,
            self.sigma,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(SarmaError::InvalidParams("non-finite coefficient"));
        }
        if self.phi.abs() >= 1.0 || self.seasonal_phi.abs() >= 1.0 {
            return Err(SarmaError::NonStationaryParams {
                phi: self.phi.abs(),
                seasonal_phi: self.seasonal_phi.abs(),
            });
        }
        if self.theta.abs() > 1.0 || self.seasonal_theta.abs() > 1.0 {
            return Err(SarmaError::NonInvertibleParams);
        }
        if self.season == 0 {
            return Err(SarmaError::InvalidParams("season must be >= 1"));
        }
        if self.sigma < 0.0 {
            return Err(SarmaError::InvalidParams("sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Draws `length` values of the seasonal ARMA process.
pub fn simulate(params: &SarmaParams, length: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let total = params.burn_in + length;
    let s = params.season;
    let mut rng = seed::rng(seed);
    let mut z = vec![0.0; total];
    let mut w = vec![0.0; total];
    let lag = |v: &[f64], t: usize, h: usize| if t >= h { v[t - h] } else { 0.0 };
    for t in 0..total {
        let draw: f64 = rng.sample(StandardNormal);
        w[t] = params.sigma * draw;
        z[t] = params.phi * lag(&z, t, 1) + params.seasonal_phi * lag(&z, t, s)
            - params.phi * params.seasonal_phi * lag(&z, t, s + 1)
            + w[t]
            + params.theta * lag(&w, t, 1)
            + params.seasonal_theta * lag(&w, t, s)
            + params.theta * params.seasonal_theta * lag(&w, t, s + 1);
    }
    Ok(z.split_off(params.burn_in))
}

/// i.i.d. normal draws; identical to [`simulate`] with all coefficients zero.
pub fn white_noise(sigma: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    simulate(&SarmaParams::white_noise(sigma), length, seed)
}

fn centered(series: &[f64], max_lag: usize) -> Result<(Vec<f64>, f64)> {
    if series.len() <= max_lag {
        return Err(SarmaError::SeriesTooShort {
            len: series.len(),
            max_lag,
        });
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom <= f64::EPSILON * series.len() as f64 * mean.abs().max(1.0) {
        return Err(SarmaError::ConstantSeries);
    }
    Ok((dev, denom))
}

/// Sample autocorrelation at lags `0..=max_lag`.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let (dev, denom) = centered(series, max_lag)?;
    let n = dev.len();
    Ok((0..=max_lag)
        .map(|h| {
            if h == 0 {
                1.0
            } else {
                (0..n - h).map(|t| dev[t] * dev[t + h]).sum::<f64>() / denom
            }
        })
        .collect())
}

/// Partial autocorrelation at lags `0..=max_lag` via Durbin-Levinson on the
/// sample ACF. Index 0 holds 1.0 so that `pacf[h]` is the lag-`h` value.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    Ok(durbin_levinson(&rho))
}

/// Partial autocorrelations from an autocorrelation sequence `rho[0..=L]`.
pub fn durbin_levinson(rho: &[f64]) -> Vec<f64> {
    let max_lag = rho.len().saturating_sub(1);
    let mut out = vec![1.0; max_lag + 1];
    if max_lag == 0 {
        return out;
    }
    let mut phi = vec![0.0; max_lag + 1];
    phi[1] = rho[1];
    out[1] = rho[1];
    let mut v = 1.0 - rho[1] * rho[1];
    for k in 2..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi[j] * rho[k - j]).sum::<f64>();
        let kk = if v.abs() < 1e-300 { 0.0 } else { num / v };
        let prev = phi.clone();
        for j in 1..k {
            phi[j] = prev[j] - kk * prev[k - j];
        }
        phi[k] = kk;
        out[k] = kk;
        v *= 1.0 - kk * kk;
    }
    out
}

/// ACF and PACF of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub acf: Vec<f64>,
    pub pacf: Vec<f64>,
}

impl SeriesStats {
    pub fn of(series: &[f64], max_lag: usize) -> Result<Self> {
        let acf = acf(series, max_lag)?;
        let pacf = durbin_levinson(&acf);
        Ok(SeriesStats { acf, pacf })
    }
}

/// Full-length layer `k` of a `p`-layer phrase of `n` steps.
///
/// One SARMA value is drawn per layer-`k` grid point, points shared with the
/// layer-`(k-1)` grid are zeroed, and the result is held between grid points.
pub fn generate_layer(params: &SarmaParams, p: u32, n: usize, k: u32, seed: u64) -> Result<Vec<f64>> {
    let mask = overlap_zero_mask(p, n, k)?;
    let stride = layer_stride(p, n, k);
    let draws = simulate(params, n / stride, seed)?;
    Ok(layer_from_grid(&draws, &mask, stride))
}

fn layer_from_grid(draws: &[f64], mask: &[bool], stride: usize) -> Vec<f64> {
    (0..mask.len())
        .map(|i| {
            let g = (i / stride) * stride;
            if mask[g] {
                0.0
            } else {
                draws[g / stride]
            }
        })
        .collect()
}

/// Values of a full-length layer at its own grid points, for ACF inspection.
pub fn layer_grid_samples(layer: &[f64], p: u32, k: u32) -> Result<Vec<f64>> {
    let n = layer.len();
    let stride = if k == 0 { n } else { layer_stride(p, n, k) };
    contour::overlap_zero_mask(p, n, k.max(1))?;
    Ok(layer.iter().step_by(stride).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{reconstruct, LayeredSignals};

    #[test]
    fn zero_sigma_gives_zeros() {
        let p = SarmaParams::new(0.5, 0.3, 0.4, 0.2, 4, 0.0, 50).unwrap();
        assert!(simulate(&p, 100, 1).unwrap().iter().all(|&v| v == 0.0));
        assert!(white_noise(0.0, 10, 3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stationarity_guard() {
        assert!(matches!(
            SarmaParams::new(1.0, 0.0, 0.0, 0.0, 4, 1.0, 0),
            Err(SarmaError::NonStationaryParams { .. })
        ));
        assert!(matches!(
            SarmaParams::new(0.0, 0.0, -1.2, 0.0, 4, 1.0, 0),
            Err(SarmaError::NonStationaryParams { .. })
        ));
        assert_eq!(
            SarmaParams::new(0.0, 1.5, 0.0, 0.0, 4, 1.0, 0),
            Err(SarmaError::NonInvertibleParams)
        );
        assert!(SarmaParams::new(0.0, 0.0, 0.0, 0.0, 0, 1.0, 0).is_err());
        assert!(SarmaParams::new(0.0, 0.0, 0.0, 0.0, 1, -1.0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SarmaParams::new(0.5, 0.3, 0.4, 0.2, 4, 1.0, 20).unwrap();
        assert_eq!(simulate(&p, 64, 9).unwrap(), simulate(&p, 64, 9).unwrap());
        assert_ne!(simulate(&p, 64, 9).unwrap(), simulate(&p, 64, 10).unwrap());
        assert_eq!(white_noise(1.0, 32, 5).unwrap(), white_noise(1.0, 32, 5).unwrap());
    }

    #[test]
    fn zero_coefficients_match_white_noise() {
        let p = SarmaParams::new(0.0, 0.0, 0.0, 0.0, 4, 1.5, 0).unwrap();
        assert_eq!(simulate(&p, 500, 77).unwrap(), white_noise(1.5, 500, 77).unwrap());
    }

    #[test]
    fn recursion_against_hand_expansion() {
        // season 2, no burn-in: compare with the explicit difference equation
        // evaluated from the same innovations.
        let p = SarmaParams::new(0.3, 0.2, -0.4, 0.5, 2, 1.0, 0).unwrap();
        let w = white_noise(1.0, 12, 4).unwrap();
        let z = simulate(&p, 12, 4).unwrap();
        let at = |v: &[f64], t: isize| if t >= 0 { v[t as usize] } else { 0.0 };
        let mut expect = vec![0.0; 12];
        for t in 0..12isize {
            let val = 0.3 * at(&expect, t - 1) - 0.4 * at(&expect, t - 2) + 0.3 * 0.4 * at(&expect, t - 3)
                + at(&w, t)
                + 0.2 * at(&w, t - 1)
                + 0.5 * at(&w, t - 2)
                + 0.2 * 0.5 * at(&w, t - 3);
            expect[t as usize] = val;
        }
        for (a, b) in z.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_moments() {
        let x = white_noise(1.0, 100_000, 11).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        let r = acf(&x, 5).unwrap();
        for h in 1..=5 {
            assert!(r[h].abs() < 0.02, "acf({h}) = {}", r[h]);
        }
        let y = white_noise(2.0, 100_000, 12).unwrap();
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 4.0).abs() < 0.08, "variance {var}");
    }

    #[test]
    fn ar1_acf_and_pacf() {
        let p = SarmaParams::ar1(0.5, 1.0).unwrap();
        let x = simulate(&p, 100_000, 3).unwrap();
        let r = acf(&x, 3).unwrap();
        assert!((r[1] - 0.5).abs() < 0.02);
        assert!((r[2] - 0.25).abs() < 0.02);
        let q = pacf(&x, 3).unwrap();
        assert_eq!(q[1], r[1]);
        assert!((q[1] - 0.5).abs() < 0.02);
        assert!(q[2].abs() < 0.02 && q[3].abs() < 0.02);
    }

    #[test]
    fn alternating_series_acf() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = acf(&x, 2).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] + 1.0).abs() < 0.05);
    }

    #[test]
    fn acf_errors() {
        assert_eq!(acf(&[3.0; 10], 2), Err(SarmaError::ConstantSeries));
        assert_eq!(
            acf(&[1.0, 2.0], 2),
            Err(SarmaError::SeriesTooShort { len: 2, max_lag: 2 })
        );
    }

    #[test]
    fn durbin_levinson_on_exact_ar2() {
        // AR(2) with phi1 = 0.5, phi2 = 0.3: Yule-Walker gives
        // rho1 = phi1 / (1 - phi2), rho2 = phi1 rho1 + phi2, rho3 = phi1 rho2 + phi2 rho1
        let rho1 = 0.5 / 0.7;
        let rho2 = 0.5 * rho1 + 0.3;
        let rho3 = 0.5 * rho2 + 0.3 * rho1;
        let q = durbin_levinson(&[1.0, rho1, rho2, rho3]);
        assert!((q[2] - 0.3).abs() < 1e-12);
        assert!(q[3].abs() < 1e-12);
    }

    #[test]
    fn layer_mask_and_hold() {
        let draws = [1.0, 2.0, 3.0, 4.0];
        let mask = overlap_zero_mask(2, 4, 2).unwrap();
        assert_eq!(layer_from_grid(&draws, &mask, 1), vec![0.0, 2.0, 0.0, 4.0]);
        // layer 1 of n = 8, p = 3: stride 4, grid points 0 and 4, point 0 masked
        let mask = overlap_zero_mask(3, 8, 1).unwrap();
        assert_eq!(
            layer_from_grid(&[5.0, 6.0], &mask, 4),
            vec![0.0, 0.0, 0.0, 0.0, 6.0, 6.0, 6.0, 6.0]
        );
    }

    #[test]
    fn generated_layers_satisfy_invariants() {
        let params = SarmaParams::new(0.5, 0.3, 0.4, 0.2, 4, 1.0, 20).unwrap();
        for seed in 0..1000u64 {
            let (n, p) = [(16, 4), (32, 3), (64, 6)][seed as usize % 3];
            let mut layers = vec![vec![60.0; n]];
            for k in 1..=p {
                let layer = generate_layer(&params, p, n, k, seed * 31 + k as u64).unwrap();
                let mask = overlap_zero_mask(p, n, k).unwrap();
                for i in 0..n {
                    if mask[i] {
                        assert_eq!(layer[i], 0.0);
                    }
                }
                layers.push(layer);
            }
            let ls = LayeredSignals::new(p, layers).unwrap();
            assert_eq!(reconstruct(&ls).unwrap().len(), n);
        }
    }

    #[test]
    fn grid_samples_of_layer() {
        let layer = vec![0.0, 2.0, 0.0, 4.0];
        assert_eq!(layer_grid_samples(&layer, 2, 2).unwrap(), vec![0.0, 2.0, 0.0, 4.0]);
        assert_eq!(layer_grid_samples(&layer, 2, 1).unwrap(), vec![0.0, 0.0]);
    }
}
