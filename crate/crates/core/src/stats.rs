//! Paired t-test with a Jarque–Bera normality statistic on the differences.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: Real,
    /// Two-sided p-value with `n − 1` degrees of freedom.
    pub p: Real,
    /// Jarque–Bera statistic of the differences; informational only.
    pub normality: Real,
}

/// Paired test on `d = a − b`.
pub fn paired_ttest(a: &[Real], b: &[Real]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InvalidInput(
            "paired t-test needs at least 3 pairs".into(),
        ));
    }
    let d: Vec<Real> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as Real;
    let mean = d.iter().sum::<Real>() / n;
    let ss: Real = d.iter().map(|x| (x - mean).powi(2)).sum();
    // a constant shift leaves only rounding noise in the spread
    let scale: Real = d.iter().map(|x| x * x).sum();
    if ss <= (64.0 * Real::EPSILON).powi(2) * scale {
        let what = if mean == 0.0 {
            "all differences are zero"
        } else {
            "differences have zero variance"
        };
        return Err(Error::DegenerateTTest(what.into()));
    }
    let df = n - 1.0;
    let sd = (ss / df).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest {
        t,
        p,
        normality: jarque_bera(&d, mean),
    })
}

fn jarque_bera(d: &[Real], mean: Real) -> Real {
    let n = d.len() as Real;
    let m2 = d.iter().map(|x| (x - mean).powi(2)).sum::<Real>() / n;
    let m3 = d.iter().map(|x| (x - mean).powi(3)).sum::<Real>() / n;
    let m4 = d.iter().map(|x| (x - mean).powi(4)).sum::<Real>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let r = paired_ttest(&[1.0, 1.0, 1.0, 2.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 5.0);
        assert!((r.p - 0.015392).abs() < 1e-5, "{}", r.p);

        let r = paired_ttest(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        // symmetric two-point sample: skew 0, kurtosis 1 → JB = 4/6 · 1 = 2/3
        assert!((r.normality - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let a = [0.3, 0.4, 0.5];
        let shifted: Vec<Real> = a.iter().map(|x| x + 1.0).collect();
        let err = paired_ttest(&shifted, &a).unwrap_err().to_string();
        assert!(err.starts_with("degenerate t-test"), "{err}");
        assert!(err.contains("zero variance"));
        let err = paired_ttest(&a, &a).unwrap_err().to_string();
        assert!(err.starts_with("degenerate t-test"));
        assert!(paired_ttest(&a[..2], &a[..2]).is_err());
        assert!(paired_ttest(&a, &a[..2]).is_err());
    }

    #[test]
    fn sign_of_t_follows_order() {
        let a = [0.1, 0.4, 0.2, 0.3];
        let b = [0.2, 0.6, 0.25, 0.5];
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
    }
}
