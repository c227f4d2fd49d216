//! Multivariate polynomial regression baseline: degree-2 features over
//! (CAV count, channel quality, partition one-hot), ridge-regularized
//! normal equations, and argmin partition selection.

use crate::error::{CoreError, Result};

/// One harvested observation.
#[derive(Debug, Clone, Copy)]
pub struct RmSample {
    pub cav_count: f64,
    pub channel_quality: f64,
    pub partition: usize,
    pub latency_s: f64,
}

/// Fitted latency predictor.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub partition_count: usize,
    pub ridge: f64,
    coeffs: Vec<f64>,
}

/// Degree-2 expansion. One-hot squares and cross-products between one-hot
/// slots are dropped (they duplicate or vanish), and partition 0 is the
/// baseline, keeping the design matrix full rank so coefficients are
/// identifiable.
fn features(cav: f64, chan: f64, partition: usize, partition_count: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(feature_count(partition_count));
    f.push(1.0);
    f.push(cav);
    f.push(chan);
    f.push(cav * cav);
    f.push(cav * chan);
    f.push(chan * chan);
    for k in 1..partition_count {
        f.push(if partition == k { 1.0 } else { 0.0 });
    }
    for k in 1..partition_count {
        let o = if partition == k { 1.0 } else { 0.0 };
        f.push(cav * o);
        f.push(chan * o);
    }
    f
}

pub fn feature_count(partition_count: usize) -> usize {
    6 + 3 * (partition_count - 1)
}

/// Solve A·x = b for symmetric positive-definite A (in place).
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    // Lower-triangular factor overwrites A.
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 {
            return Err(CoreError::Fit(format!(
                "normal equations not positive definite at pivot {j}"
            )));
        }
        let l_jj = diag.sqrt();
        a[j * n + j] = l_jj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / l_jj;
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * y[k];
        }
        y[i] = v / a[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= a[k * n + i] * x[k];
        }
        x[i] = v / a[i * n + i];
    }
    Ok(x)
}

/// Least squares with a ridge term over the degree-2 feature expansion.
pub fn rm_fit(samples: &[RmSample], partition_count: usize, ridge: f64) -> Result<RegressionModel> {
    let n_coef = feature_count(partition_count);
    if samples.len() < 10 * n_coef {
        return Err(CoreError::invalid(format!(
            "need at least {} samples for {} coefficients, got {}",
            10 * n_coef,
            n_coef,
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.partition >= partition_count) {
        return Err(CoreError::invalid("sample partition out of range"));
    }
    let mut a = vec![0.0; n_coef * n_coef];
    let mut b = vec![0.0; n_coef];
    for s in samples {
        let f = features(s.cav_count, s.channel_quality, s.partition, partition_count);
        for i in 0..n_coef {
            b[i] += f[i] * s.latency_s;
            for j in 0..=i {
                a[i * n_coef + j] += f[i] * f[j];
            }
        }
    }
    for i in 0..n_coef {
        for j in (i + 1)..n_coef {
            a[i * n_coef + j] = a[j * n_coef + i];
        }
        a[i * n_coef + i] += ridge;
    }
    let coeffs = cholesky_solve(&mut a, &b, n_coef)?;
    Ok(RegressionModel {
        partition_count,
        ridge,
        coeffs,
    })
}

impl RegressionModel {
    /// Build directly from coefficients (tests and synthetic oracles).
    pub fn from_coeffs(partition_count: usize, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != feature_count(partition_count) {
            return Err(CoreError::invalid("coefficient count mismatch"));
        }
        Ok(Self {
            partition_count,
            ridge: 0.0,
            coeffs,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn predict(&self, cav_count: f64, channel_quality: f64, partition: usize) -> f64 {
        let f = features(cav_count, channel_quality, partition, self.partition_count);
        f.iter().zip(&self.coeffs).map(|(x, c)| x * c).sum()
    }

    /// Partition with the minimum predicted latency, ties to the lowest.
    pub fn decide(&self, cav_count: f64, channel_quality: f64) -> usize {
        let mut best = 0;
        let mut best_v = self.predict(cav_count, channel_quality, 0);
        for y in 1..self.partition_count {
            let v = self.predict(cav_count, channel_quality, y);
            if v < best_v {
                best_v = v;
                best = y;
            }
        }
        best
    }
}
