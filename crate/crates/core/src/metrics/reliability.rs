use serde::{Deserialize, Serialize};

use super::MetricsError;

/// `R(t) = exp(-lambda * t)` for a constant failure intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    /// Failures per hour.
    pub lambda: f64,
    /// Hours.
    pub t: f64,
    pub r: f64,
}

impl ReliabilityEstimate {
    pub fn percent(&self) -> f64 {
        self.r * 100.0
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, MetricsError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(MetricsError::NegativeInput { name, value })
    }
}

pub fn reliability(lambda: f64, t: f64) -> Result<ReliabilityEstimate, MetricsError> {
    let lambda = non_negative("lambda", lambda)?;
    let t = non_negative("t", t)?;
    Ok(ReliabilityEstimate { lambda, t, r: (-(lambda * t)).exp() })
}

/// Failures per hour of exposure.
pub fn estimate_failure_intensity(failure_count: u64, exposure_hours: f64) -> Result<f64, MetricsError> {
    if !(exposure_hours.is_finite() && exposure_hours > 0.0) {
        return Err(MetricsError::NonPositiveExposure(exposure_hours));
    }
    Ok(failure_count as f64 / exposure_hours)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_is_certain() {
        assert_eq!(reliability(0.0, 100.0).unwrap().r, 1.0);
    }

    #[test]
    fn known_values() {
        assert!((reliability(0.001, 100.0).unwrap().r - 0.904837).abs() < 1e-6);
        let e = reliability(0.01, 100.0).unwrap();
        assert!((e.r - 0.367879).abs() < 1e-6);
        assert!((e.percent() - 36.7879).abs() < 1e-4);
    }

    #[test]
    fn negative_inputs_rejected() {
        assert!(reliability(-0.1, 1.0).is_err());
        assert!(reliability(0.1, -1.0).is_err());
        assert!(reliability(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn intensity_ratio() {
        assert_eq!(estimate_failure_intensity(0, 1000.0).unwrap(), 0.0);
        assert!((estimate_failure_intensity(3, 1500.0).unwrap() - 0.002).abs() < 1e-15);
        assert!((estimate_failure_intensity(5, 250.0).unwrap() - 0.02).abs() < 1e-15);
        assert!(matches!(
            estimate_failure_intensity(1, 0.0),
            Err(MetricsError::NonPositiveExposure(_))
        ));
    }
}
