//! Convergence-rate evidence: log-log slope fits with bootstrap intervals,
//! the rate exponent for rough coefficients, and noise-draw accounting.

use std::fmt;

use rand::Rng;

use crate::error::{PolexError, Result};
use crate::rng::{substream, StreamTag};
use crate::stats::quantile;

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 1000;
/// Smallest accepted number of bootstrap resamples.
pub const MIN_RESAMPLES: usize = 100;
/// Smallest sweep that can be fitted.
pub const MIN_FIT_POINTS: usize = 3;

/// One estimate per grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub label: String,
    pub points: Vec<SweepPoint>,
}

impl SweepSeries {
    pub fn new(label: impl Into<String>, points: Vec<SweepPoint>) -> Result<Self> {
        let series = SweepSeries {
            label: label.into(),
            points,
        };
        series.validate()?;
        Ok(series)
    }

    /// Series from `(n, value)` pairs with zero standard errors.
    pub fn from_values(label: impl Into<String>, values: &[(usize, f64)]) -> Result<Self> {
        let points = values
            .iter()
            .map(|&(n, value)| SweepPoint {
                n,
                value,
                std_error: 0.0,
            })
            .collect();
        Self::new(label, points)
    }

    fn validate(&self) -> Result<()> {
        for pair in self.points.windows(2) {
            if pair[1].n <= pair[0].n {
                return Err(PolexError::config(format!(
                    "grid sizes must increase strictly ({} then {})",
                    pair[0].n, pair[1].n
                )));
            }
        }
        if let Some(p) = self.points.iter().find(|p| !p.value.is_finite()) {
            return Err(PolexError::Domain(format!("non-finite value at n={}", p.n)));
        }
        Ok(())
    }
}

/// Ordinary least squares fit of `ln value` against `ln n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
    pub resamples: usize,
}

impl SlopeFit {
    pub const CSV_HEADER: &'static str = "slope,ci_low,ci_high,r_squared,resamples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.slope, self.ci_low, self.ci_high, self.r_squared, self.resamples
        )
    }

    /// `label slope=… ci=[…,…] r2=…`.
    pub fn summary(&self, label: &str) -> String {
        format!(
            "{label} slope={:.4} ci=[{:.4},{:.4}] r2={:.4} (OLS on log-log)",
            self.slope, self.ci_low, self.ci_high, self.r_squared
        )
    }
}

impl fmt::Display for SlopeFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary("fit"))
    }
}

/// `(slope, intercept)` of the least-squares line through the selected points.
fn ols(x: &[f64], y: &[f64], idx: impl Iterator<Item = usize> + Clone) -> Option<(f64, f64)> {
    let count = idx.clone().count() as f64;
    let (sx, sy) = idx
        .clone()
        .fold((0.0, 0.0), |(a, b), i| (a + x[i], b + y[i]));
    let (mx, my) = (sx / count, sy / count);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in idx {
        let dx = x[i] - mx;
        sxx += dx * dx;
        sxy += dx * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Log-log slope with a bootstrap interval from resampling sweep points.
pub fn fit_loglog(series: &SweepSeries, resamples: usize, seed: u64) -> Result<SlopeFit> {
    series.validate()?;
    let points = &series.points;
    if points.len() < MIN_FIT_POINTS {
        return Err(PolexError::config(format!(
            "need >= {MIN_FIT_POINTS} points for a slope fit, got {}",
            points.len()
        )));
    }
    if resamples < MIN_RESAMPLES {
        return Err(PolexError::config(format!(
            "need >= {MIN_RESAMPLES} bootstrap resamples, got {resamples}"
        )));
    }
    if let Some(p) = points.iter().find(|p| p.value <= 0.0) {
        return Err(PolexError::Domain(format!(
            "log-log fit needs positive values; n={} has {}",
            p.n, p.value
        )));
    }

    // Logs of ratios to the first point: an exact rescaling of every value
    // leaves the responses, and hence slope and interval, unchanged.
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| (p.value / points[0].value).ln()).collect();
    let k = points.len();
    let (slope, offset) = ols(&x, &y, 0..k).expect("distinct grid sizes");
    let intercept = offset + points[0].value.ln();

    let my = y.iter().sum::<f64>() / k as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = (0..k)
        .map(|i| {
            let r = y[i] - (offset + slope * x[i]);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    let mut rng = substream(seed, StreamTag::Bootstrap, k as u64, 0);
    let mut slopes = Vec::with_capacity(resamples);
    let mut pick = vec![0usize; k];
    while slopes.len() < resamples {
        for p in pick.iter_mut() {
            *p = rng.random_range(0..k);
        }
        // Resamples that hit a single grid size carry no slope information.
        if let Some((s, _)) = ols(&x, &y, pick.iter().copied()) {
            slopes.push(s);
        }
    }
    let ci_low = quantile(&slopes, 0.025).min(slope);
    let ci_high = quantile(&slopes, 0.975).max(slope);
    Ok(SlopeFit {
        slope,
        intercept,
        ci_low,
        ci_high,
        r_squared,
        resamples,
    })
}

/// Weak-convergence exponent for coefficients of Hölder smoothness `l`.
pub fn rate_exponent(l: f64) -> Result<f64> {
    if l > 0.0 && l < 1.0 {
        Ok(l / 2.0)
    } else if l > 1.0 && l < 2.0 {
        Ok(1.0 / (3.0 - l))
    } else if l > 2.0 && l < 3.0 {
        Ok(1.0)
    } else {
        Err(PolexError::Domain(format!(
            "smoothness {l} must lie in (0,1), (1,2) or (2,3)"
        )))
    }
}

/// How the terminal-mean estimator draws sampling noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// One sampling-noise realization reused by every path.
    Shared,
    /// Fresh sampling noise on every path.
    Naive,
}

/// Noise-stream count of an estimator run.
///
/// One Brownian path counts as one draw and so does one sampling-noise
/// vector; individual increments are not counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Complexity {
    pub noise_draws: u64,
    pub paths: u64,
}

pub fn complexity_report(mode: NoiseMode, m: usize, n: usize) -> Result<Complexity> {
    if m == 0 || n == 0 {
        return Err(PolexError::config("m and n must be at least 1"));
    }
    let (m, n) = (m as u64, n as u64);
    let noise_draws = match mode {
        NoiseMode::Shared => m + n,
        NoiseMode::Naive => m + m * n,
    };
    Ok(Complexity {
        noise_draws,
        paths: m,
    })
}

/// Sample size `ceil(eps^-2 (1 + ln(2 / eps)))` that puts the shared-noise
/// estimator within `eps` of the target.
pub fn shared_noise_budget(eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(PolexError::config(format!("accuracy {eps} outside (0, 1)")));
    }
    Ok(((1.0 + (2.0 / eps).ln()) / (eps * eps)).ceil() as usize)
}
