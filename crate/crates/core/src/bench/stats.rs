//! Summary statistics for experiment tables.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("confidence interval requires at least one sample")]
    Empty,
}

/// Two-sided Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl ConfidenceInterval {
    /// Clamps the lower bound at zero, as used for unbalance tables where
    /// negative bounds are physically meaningless.
    pub fn floored_at_zero(self) -> Self {
        Self {
            lower: self.lower.max(0.0),
            ..self
        }
    }
}

/// 95% two-sided Student-t interval with n-1 degrees of freedom. A single
/// sample (or zero variance) degenerates to (mean, mean, mean).
pub fn confidence_interval(samples: &[f64]) -> Result<ConfidenceInterval, StatsError> {
    confidence_interval_level(samples, 0.95)
}

pub fn confidence_interval_level(
    samples: &[f64],
    level: f64,
) -> Result<ConfidenceInterval, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(ConfidenceInterval {
            mean,
            lower: mean,
            upper: mean,
            n,
        });
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(ConfidenceInterval {
            mean,
            lower: mean,
            upper: mean,
            n,
        });
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid Student-t parameters")
        .inverse_cdf(0.5 + level / 2.0);
    let half_width = t * (var / n as f64).sqrt();
    Ok(ConfidenceInterval {
        mean,
        lower: mean - half_width,
        upper: mean + half_width,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_sample_interval() {
        let ci = confidence_interval(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((ci.mean - 3.0).abs() < 1e-12);
        assert!((ci.lower - 1.0367).abs() < 0.01, "lower {}", ci.lower);
        assert!((ci.upper - 4.9633).abs() < 0.01, "upper {}", ci.upper);
    }

    #[test]
    fn degenerate_cases() {
        let one = confidence_interval(&[7.5]).unwrap();
        assert_eq!((one.mean, one.lower, one.upper), (7.5, 7.5, 7.5));
        let flat = confidence_interval(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((flat.mean, flat.lower, flat.upper), (2.0, 2.0, 2.0));
        assert!(confidence_interval(&[]).is_err());
    }

    #[test]
    fn flooring_clamps_only_lower() {
        let ci = ConfidenceInterval {
            mean: 5.0,
            lower: -3.0,
            upper: 13.0,
            n: 5,
        };
        let f = ci.floored_at_zero();
        assert_eq!(f.lower, 0.0);
        assert_eq!(f.mean, 5.0);
        assert_eq!(f.upper, 13.0);
    }

    #[test]
    fn interval_ordering_invariant() {
        let samples = [[3.1, 2.9, 3.0], [0.0, 10.0, 5.0], [-4.0, -6.0, -5.0]];
        for s in samples {
            let ci = confidence_interval(&s).unwrap();
            assert!(ci.lower <= ci.mean && ci.mean <= ci.upper);
        }
    }
}
