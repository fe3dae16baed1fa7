use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Least-squares slope of `log e` against `log h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

pub fn fit_rate(hs: &[f64], errors: &[f64]) -> Result<Rate> {
    if hs.len() != errors.len() {
        return invalid("h and error series differ in length");
    }
    if hs.len() < 3 {
        return invalid(format!("rate fit needs at least 3 points, got {}", hs.len()));
    }
    if hs.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return invalid("rate fit needs positive finite data");
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return invalid("rate fit needs at least two distinct h");
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = (ssr / (m - 2.0) / sxx).sqrt();
    Ok(Rate { slope, stderr, points: hs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HS: [f64; 3] = [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];

    #[test]
    fn examples() {
        let r = fit_rate(&HS, &HS.map(|h| 3.0 * h)).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12 && r.stderr < 1e-12);
        let r = fit_rate(&HS, &HS.map(|h| 2.0 * h.sqrt())).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        let r = fit_rate(&HS, &[0.7; 3]).unwrap();
        assert!(r.slope.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_rate(&HS[..2], &[1.0, 2.0]).is_err());
        assert!(fit_rate(&HS, &[1.0, 0.0, 2.0]).is_err());
        assert!(fit_rate(&HS, &[1.0, -1.0, 2.0]).is_err());
        assert!(fit_rate(&[0.1; 3], &[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_power_laws(c in 0.01f64..100.0, p in -2.0f64..3.0) {
            let hs = [0.5, 0.1, 0.03, 0.002];
            let r = fit_rate(&hs, &hs.map(|h| c * h.powf(p))).unwrap();
            prop_assert!((r.slope - p).abs() < 1e-9);
        }
    }
}
