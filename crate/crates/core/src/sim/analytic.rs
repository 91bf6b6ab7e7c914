//! Closed-form M/M/1 results and Little's Law.

use thiserror::Error;

use super::QueueStats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("unstable queue: lambda {lambda} >= mu {mu}")]
    Unstable { lambda: f64, mu: f64 },
    #[error("invalid rates: lambda {lambda}, mu {mu}")]
    InvalidRates { lambda: f64, mu: f64 },
    #[error("target sojourn time must be positive, got {0}")]
    NonpositiveTarget(f64),
}

/// Steady-state M/M/1 figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mm1 {
    /// Mean sojourn time (queueing plus service), seconds.
    pub w: f64,
    /// Mean number in system.
    pub l: f64,
    pub rho: f64,
}

pub fn mm1_analytic(lambda: f64, mu: f64) -> Result<Mm1, AnalyticError> {
    if !(mu.is_finite() && mu > 0.0 && lambda.is_finite() && lambda >= 0.0) {
        return Err(AnalyticError::InvalidRates { lambda, mu });
    }
    if lambda >= mu {
        return Err(AnalyticError::Unstable { lambda, mu });
    }
    let w = 1.0 / (mu - lambda);
    Ok(Mm1 {
        w,
        l: lambda * w,
        rho: lambda / mu,
    })
}

/// The service rate giving mean sojourn `target_wait_s` under arrival rate
/// `lambda`.
pub fn calibrate_service_rate(target_wait_s: f64, lambda: f64) -> Result<f64, AnalyticError> {
    if !(target_wait_s.is_finite() && target_wait_s > 0.0) {
        return Err(AnalyticError::NonpositiveTarget(target_wait_s));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(AnalyticError::InvalidRates {
            lambda,
            mu: f64::NAN,
        });
    }
    Ok(1.0 / target_wait_s + lambda)
}

const RESIDUAL_EPS: f64 = 1e-12;

/// `|L - lambda_hat * W| / max(L, 1e-12)`.
pub fn littles_law_residual(s: &QueueStats) -> f64 {
    (s.mean_in_system - s.lambda_hat * s.mean_wait_s).abs() / s.mean_in_system.max(RESIDUAL_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;

    #[test]
    fn fog_example() {
        let r = mm1_analytic(1.0 / 60.0, 1.0 / 35.0).unwrap();
        // 1 / (1/35 - 1/60) = 420 / 5.
        assert!((r.w - 84.0).abs() < 1e-10, "{}", r.w);
        assert!((r.l - 84.0 / 60.0).abs() < 1e-12);
        assert!((r.rho - 35.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn zero_arrivals() {
        let r = mm1_analytic(0.0, 1.0 / 35.0).unwrap();
        assert!((r.w - 35.0).abs() < 1e-12);
        assert_eq!(r.l, 0.0);
        assert_eq!(r.rho, 0.0);
    }

    #[test]
    fn unstable() {
        assert!(matches!(
            mm1_analytic(1.0 / 30.0, 1.0 / 60.0),
            Err(AnalyticError::Unstable { .. })
        ));
        assert!(matches!(
            mm1_analytic(1.0, 1.0),
            Err(AnalyticError::Unstable { .. })
        ));
        assert!(matches!(
            mm1_analytic(0.5, 0.0),
            Err(AnalyticError::InvalidRates { .. })
        ));
    }

    #[test]
    fn calibration_examples() {
        let mu = calibrate_service_rate(84.0, 1.0 / 60.0).unwrap();
        assert!((mu - 1.0 / 35.0).abs() < 1e-15);
        assert!((mm1_analytic(1.0 / 60.0, mu).unwrap().w - 84.0).abs() < 1e-10);

        let mu = calibrate_service_rate(188.0, 1.0 / 60.0).unwrap();
        assert!((mu - 0.021_985_815_602_836_88).abs() < 1e-15);
        assert!((mm1_analytic(1.0 / 60.0, mu).unwrap().w - 188.0).abs() < 1e-9);

        assert_eq!(calibrate_service_rate(10.0, 0.0).unwrap(), 0.1);
        assert_eq!(
            calibrate_service_rate(0.0, 0.1),
            Err(AnalyticError::NonpositiveTarget(0.0))
        );
    }

    fn stats(lambda_hat: f64, w: f64, l: f64) -> QueueStats {
        QueueStats {
            node: NodeId(0),
            lambda_hat,
            mean_wait_s: w,
            mean_in_system: l,
            utilization: 0.0,
            samples: 1,
        }
    }

    #[test]
    fn residuals() {
        assert_eq!(littles_law_residual(&stats(0.0, 0.0, 0.0)), 0.0);
        assert_eq!(littles_law_residual(&stats(0.5, 4.0, 2.0)), 0.0);
        assert!((littles_law_residual(&stats(0.5, 4.0, 2.2)) - 0.2 / 2.2).abs() < 1e-15);
    }
}
