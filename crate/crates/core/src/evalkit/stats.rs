//! Inter-rater agreement and least-squares regression.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub accuracy: f64,
    /// `None` when chance agreement is 1 and kappa is undefined.
    pub kappa: Option<f64>,
    pub n: usize,
}

/// Exact-match accuracy and Cohen's kappa for two raters on the 0-2 scale.
pub fn agreement(a: &[u8], b: &[u8]) -> Result<AgreementStats> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("no ratings"));
    }
    if let Some(bad) = a.iter().chain(b).find(|&&r| r > 2) {
        return Err(Error::Rubric(format!("rating {bad} is outside 0..=2")));
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let (mut ma, mut mb) = ([0.0; 3], [0.0; 3]);
    for (&x, &y) in a.iter().zip(b) {
        ma[x as usize] += 1.0 / n;
        mb[y as usize] += 1.0 / n;
    }
    let p_e: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
    let kappa = if (1.0 - p_e).abs() < 1e-12 {
        None
    } else {
        Some((p_o - p_e) / (1.0 - p_e))
    };
    Ok(AgreementStats {
        accuracy: p_o,
        kappa,
        n: a.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value of the slope t-test with n-2 degrees of freedom.
    pub p_value: f64,
    pub std_err: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn ols_fit(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Eval(format!("regression needs at least 3 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Eval("all x values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let std_err = (sse / (nf - 2.0) / sxx).sqrt();
    let p_value = if std_err == 0.0 {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::Eval(e.to_string()))?;
        (2.0 * (1.0 - t.cdf((slope / std_err).abs()))).clamp(0.0, 1.0)
    };
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(RegressionFit {
        slope,
        intercept,
        p_value,
        std_err,
        r_squared,
        n,
    })
}
