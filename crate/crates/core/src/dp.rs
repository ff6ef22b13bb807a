//! Laplace distribution primitives and analytic differential-privacy audits.
//!
//! The survey mechanism privatizes counts and sums by adding noise drawn from
//! the Laplace distribution with mean 0 and scale `b`, whose density is
//! `(1/2b)·exp(-|x|/b)`. For a sensitivity-1 quantity, scale `1/ε` yields an
//! ε-differential-privacy guarantee: shifting the center by at most 1 changes
//! the density at any point by a factor of at most `e^ε`. [`dp_ratio_audit`]
//! checks that inequality pointwise over a probe grid and is used by the
//! experiment harness to audit recorded transcripts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

/// Relative slack applied to the `e^ε` bound in ratio audits.
pub const AUDIT_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Number of points in the default audit probe grid.
pub const DEFAULT_PROBE_POINTS: usize = 512;

/// How many noise scales beyond the centers the default probe grid spans.
pub const DEFAULT_PROBE_SPAN_SCALES: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// Audit centers further than 1 apart are not neighboring counts.
    #[error(
        "centers {center_a} and {center_b} are not neighbors (|difference| = {separation} > 1)"
    )]
    NeighborViolation {
        center_a: f64,
        center_b: f64,
        separation: f64,
    },
}

/// Scale parameter of a mean-zero Laplace distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParam {
    scale: f64,
}

impl LaplaceParam {
    /// Requires a finite, strictly positive scale.
    pub fn new(scale: f64) -> Result<Self, DpError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DpError::InvalidParameter(format!(
                "laplace scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    /// Scale `1/ε` used to privatize a sensitivity-1 quantity.
    pub fn for_sensitivity_one(level: PrivacyLevel) -> Result<Self, DpError> {
        if level.epsilon() == 0.0 {
            return Err(DpError::InvalidParameter(
                "epsilon must be positive to derive a noise scale".into(),
            ));
        }
        Self::new(1.0 / level.epsilon())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Differential-privacy parameter ε.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PrivacyLevel {
    epsilon: f64,
}

impl PrivacyLevel {
    /// Requires a finite, non-negative ε.
    pub fn new(epsilon: f64) -> Result<Self, DpError> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(DpError::InvalidParameter(format!(
                "epsilon must be non-negative and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// One draw from `Lap(scale)` via the inverse CDF of a single uniform.
///
/// A single uniform per sample keeps replay exact: the k-th draw of a stream
/// depends only on the k-th uniform.
pub fn sample_laplace(param: &LaplaceParam, rng: &mut SimRng) -> f64 {
    let u = rng.open_unit();
    let b = param.scale();
    if u < 0.5 {
        b * (2.0 * u).ln()
    } else {
        -b * (2.0 * (1.0 - u)).ln()
    }
}

/// Density `(1/2b)·exp(-|x|/b)` at `x`.
pub fn laplace_density(param: &LaplaceParam, x: f64) -> f64 {
    let b = param.scale();
    (-x.abs() / b).exp() / (2.0 * b)
}

/// Two-sided tail mass `Pr[|Y| >= threshold] = exp(-threshold/b)`.
pub fn laplace_tail(param: &LaplaceParam, threshold: f64) -> f64 {
    assert!(
        threshold >= 0.0,
        "tail threshold must be non-negative, got {threshold}"
    );
    (-threshold / param.scale()).exp()
}

/// Cumulative distribution `Pr[Y <= x]`.
pub fn laplace_cdf(param: &LaplaceParam, x: f64) -> f64 {
    let b = param.scale();
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// Outcome of a pointwise density-ratio audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioAuditOutcome {
    /// Largest density ratio observed over the probe grid.
    pub max_ratio: f64,
    /// Whether `max_ratio <= exp(ε)·(1 + AUDIT_RELATIVE_TOLERANCE)`.
    pub passes: bool,
}

/// Evenly spaced probes spanning both centers ± [`DEFAULT_PROBE_SPAN_SCALES`]
/// noise scales.
pub fn default_probe_grid(level: PrivacyLevel, center_a: f64, center_b: f64) -> Vec<f64> {
    let scale = if level.epsilon() > 0.0 {
        1.0 / level.epsilon()
    } else {
        1.0
    };
    let lo = center_a.min(center_b) - DEFAULT_PROBE_SPAN_SCALES * scale;
    let hi = center_a.max(center_b) + DEFAULT_PROBE_SPAN_SCALES * scale;
    let step = (hi - lo) / (DEFAULT_PROBE_POINTS - 1) as f64;
    (0..DEFAULT_PROBE_POINTS)
        .map(|i| lo + step * i as f64)
        .collect()
}

/// Pointwise ε-DP check for the Laplace mechanism on neighboring counts.
///
/// For every probe `y`, evaluates the ratio of the `Lap(1/ε)` density
/// centered at `center_a` to the one centered at `center_b` and reports the
/// maximum. The analytic supremum is `exp(ε·|center_a - center_b|)`, so for
/// neighboring centers the audit passes whenever the implementation honors
/// the Laplace mechanism's guarantee. The ratio is evaluated in log space so
/// that probes deep in the tails cannot underflow.
pub fn dp_ratio_audit(
    level: PrivacyLevel,
    center_a: f64,
    center_b: f64,
    probe_points: &[f64],
) -> Result<RatioAuditOutcome, DpError> {
    let separation = (center_a - center_b).abs();
    if separation > 1.0 || separation.is_nan() {
        return Err(DpError::NeighborViolation {
            center_a,
            center_b,
            separation,
        });
    }
    if probe_points.iter().any(|p| !p.is_finite()) {
        return Err(DpError::InvalidParameter(
            "probe points must all be finite".into(),
        ));
    }
    let eps = level.epsilon();
    let mut max_log_ratio = f64::NEG_INFINITY;
    for &y in probe_points {
        // log of laplace_density(y - a) / laplace_density(y - b); the 1/(2b)
        // normalizations cancel.
        let log_ratio = eps * ((y - center_b).abs() - (y - center_a).abs());
        if log_ratio > max_log_ratio {
            max_log_ratio = log_ratio;
        }
    }
    let max_ratio = if probe_points.is_empty() {
        1.0
    } else {
        max_log_ratio.exp()
    };
    let passes = max_ratio <= eps.exp() * (1.0 + AUDIT_RELATIVE_TOLERANCE);
    Ok(RatioAuditOutcome { max_ratio, passes })
}

/// [`dp_ratio_audit`] over the default probe grid.
pub fn dp_ratio_audit_default(
    level: PrivacyLevel,
    center_a: f64,
    center_b: f64,
) -> Result<RatioAuditOutcome, DpError> {
    let grid = default_probe_grid(level, center_a, center_b);
    dp_ratio_audit(level, center_a, center_b, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn param(scale: f64) -> LaplaceParam {
        LaplaceParam::new(scale).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(LaplaceParam::new(0.0).is_err());
        assert!(LaplaceParam::new(-1.0).is_err());
        assert!(LaplaceParam::new(f64::INFINITY).is_err());
        assert!(PrivacyLevel::new(-0.1).is_err());
        assert!(PrivacyLevel::new(f64::NAN).is_err());
        assert!(PrivacyLevel::new(0.0).is_ok());
    }

    #[test]
    fn density_at_origin() {
        assert_eq!(laplace_density(&param(1.0), 0.0), 0.5);
    }

    #[test]
    fn density_direct_evaluation() {
        // (1/4)·e^{-1}
        let expected = 0.25 * (-1.0f64).exp();
        assert!((laplace_density(&param(2.0), 2.0) - expected).abs() < 1e-15);
        assert!((expected - 0.091_970).abs() < 1e-6);
    }

    #[test]
    fn density_is_symmetric() {
        let p = param(1.0);
        assert_eq!(laplace_density(&p, -3.0), laplace_density(&p, 3.0));
    }

    #[test]
    fn tail_at_zero_is_one() {
        assert_eq!(laplace_tail(&param(1.0), 0.0), 1.0);
    }

    #[test]
    fn tail_direct_evaluation() {
        // scale 1/ε with ε = 0.5, threshold 25 → exp(-12.5)
        let got = laplace_tail(&param(2.0), 25.0);
        assert!((got - (-12.5f64).exp()).abs() < 1e-18);
        assert!((got - 3.73e-6).abs() < 1e-8);
    }

    #[test]
    fn tail_inversion() {
        let got = laplace_tail(&param(8.0), 8.0 * 12.0f64.ln());
        assert!((got - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_median_is_near_zero() {
        let mut rng = SimRng::seeded(11);
        let p = param(1.0);
        let mut draws: Vec<f64> = (0..100_001).map(|_| sample_laplace(&p, &mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        assert!(median.abs() < 0.02, "median {median}");
    }

    #[test]
    fn sampler_matches_two_sided_tail() {
        // Pr[|Y| >= 2] for scale 2 is exp(-1); 10^6 seeded draws, ±0.002.
        let mut rng = SimRng::seeded(12);
        let p = param(2.0);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_laplace(&p, &mut rng).abs() >= 2.0)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - (-1.0f64).exp()).abs() < 0.002, "freq {freq}");
    }

    #[test]
    fn sampler_is_deterministic_given_state() {
        let p = param(3.0);
        let mut a = SimRng::seeded(5);
        let mut b = SimRng::seeded(5);
        for _ in 0..32 {
            assert_eq!(sample_laplace(&p, &mut a), sample_laplace(&p, &mut b));
        }
    }

    #[test]
    fn sampler_empirical_cdf_matches_analytic() {
        // Kolmogorov–Smirnov statistic at n = 10^6 against the closed-form
        // CDF; pre-registered threshold 0.0015 (~95% critical value 1.36/√n).
        let mut rng = SimRng::seeded(13);
        let p = param(1.5);
        let n = 1_000_000usize;
        let mut draws: Vec<f64> = (0..n).map(|_| sample_laplace(&p, &mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let mut ks: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let analytic = laplace_cdf(&p, x);
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((analytic - lo).abs()).max((analytic - hi).abs());
        }
        assert!(ks < 0.0015, "KS statistic {ks}");
    }

    #[test]
    fn ratio_audit_attains_closed_form_supremum() {
        let outcome = dp_ratio_audit_default(PrivacyLevel::new(0.1).unwrap(), 5.0, 6.0).unwrap();
        assert!((outcome.max_ratio - 0.1f64.exp()).abs() < 1e-12);
        assert!((outcome.max_ratio - 1.105_17).abs() < 1e-5);
        assert!(outcome.passes);
    }

    #[test]
    fn ratio_audit_identical_centers() {
        let outcome = dp_ratio_audit_default(PrivacyLevel::new(0.1).unwrap(), 5.0, 5.0).unwrap();
        assert_eq!(outcome.max_ratio, 1.0);
        assert!(outcome.passes);
    }

    #[test]
    fn ratio_audit_matches_pointwise_density_quotient() {
        // Independent oracle: evaluate both densities from the formula written
        // out here and take the quotient at each probe.
        let eps = 0.3;
        let (a, b) = (10.0, 11.0);
        let probes = [9.5, 10.5, 11.5, 50.0];
        let scale = 1.0 / eps;
        let density = |x: f64| (-x.abs() / scale).exp() / (2.0 * scale);
        let expected = probes
            .iter()
            .map(|&y| density(y - a) / density(y - b))
            .fold(f64::MIN, f64::max);
        let outcome = dp_ratio_audit(PrivacyLevel::new(eps).unwrap(), a, b, &probes).unwrap();
        assert!((outcome.max_ratio - expected).abs() / expected < 1e-12);
        assert!(outcome.passes);
    }

    #[test]
    fn ratio_audit_rejects_non_neighbors() {
        let err = dp_ratio_audit_default(PrivacyLevel::new(0.1).unwrap(), 5.0, 6.5).unwrap_err();
        assert!(matches!(err, DpError::NeighborViolation { .. }));
    }

    // Simpson quadrature on each side of the kink at 0.
    fn integrate_density(p: &LaplaceParam) -> f64 {
        let b = p.scale();
        let simpson = |lo: f64, hi: f64, n: usize| {
            let h = (hi - lo) / n as f64;
            let mut acc = laplace_density(p, lo) + laplace_density(p, hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * laplace_density(p, lo + h * i as f64);
            }
            acc * h / 3.0
        };
        simpson(-40.0 * b, 0.0, 20_000) + simpson(0.0, 40.0 * b, 20_000)
    }

    proptest! {
        #[test]
        fn density_integrates_to_one(scale in 0.01f64..100.0) {
            let p = param(scale);
            let total = integrate_density(&p);
            prop_assert!((total - 1.0).abs() < 1e-6, "integral {total}");
        }

        #[test]
        fn tail_matches_closed_form(scale in 0.01f64..100.0, t in 0.0f64..50.0) {
            let p = param(scale);
            let expected = (-t / scale).exp();
            prop_assert!((laplace_tail(&p, t) - expected).abs() < 1e-12);
        }

        #[test]
        fn neighboring_ratio_bounded_everywhere(
            eps in 0.01f64..2.0,
            center in -50.0f64..50.0,
            delta in -1.0f64..1.0,
        ) {
            let level = PrivacyLevel::new(eps).unwrap();
            let outcome = dp_ratio_audit_default(level, center, center + delta).unwrap();
            prop_assert!(outcome.passes, "max ratio {}", outcome.max_ratio);
            let analytic = (eps * delta.abs()).exp();
            prop_assert!(outcome.max_ratio <= analytic * (1.0 + 1e-9));
        }
    }
}
