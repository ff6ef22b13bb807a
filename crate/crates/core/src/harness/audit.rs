//! Empirical differential-privacy audit of the offer stage's observable
//! output.
//!
//! The audited channel is exactly what an outside observer of the offer
//! stage sees: the halting epoch (which determines every price and epoch
//! size) and the final noisy acceptance count. Two scripted participation
//! vectors differing in at most one individual's decision drive the stage
//! many times each; the per-bin output frequencies of the two arms must stay
//! within a factor `e^{ε₀}` of each other, which the audit checks with
//! Clopper–Pearson confidence intervals so sampling error cannot produce
//! false alarms.
//!
//! Binning is fixed before any sampling: one bin per
//! `(halting epoch <= audit_max_epochs, unit-width noisy-count offset within
//! ±audit_offset_window of that epoch's halting threshold)`, with clamped
//! edge bins and one bin for runs that never halt. Nothing about the bins
//! depends on observed data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::config::SuiteParams;
use super::suites::HarnessError;
use crate::mechanism::{
    epoch_size, run_scripted_observable, scripted_epoch_counts, MechanismConfig,
};
use crate::rng::{SimRng, StreamKind};

/// Confidence level of the per-bin Clopper–Pearson intervals.
pub const AUDIT_CONFIDENCE: f64 = 0.99;

/// One audit bin with counts from both arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditBin {
    /// Halting epoch, or `None` for runs that hit the audit horizon.
    pub epoch: Option<u32>,
    /// `floor(noisy_count - halting threshold)` clamped into the window.
    pub offset: i64,
    pub count_a: u64,
    pub count_b: u64,
    /// Point estimate of the A/B frequency ratio, when both are non-zero.
    pub ratio_point: Option<f64>,
    /// Conservative lower confidence bound on `max(p_a/p_b, p_b/p_a)`.
    pub lower_ratio: f64,
}

/// Result of a two-arm empirical audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpAuditReport {
    pub epsilon: f64,
    pub runs_per_arm: u64,
    pub confidence: f64,
    pub offset_window: i64,
    pub audit_max_epochs: u32,
    /// Scripted participation decisions for each arm, in approach order.
    pub script_a: Vec<bool>,
    pub script_b: Vec<bool>,
    /// Position where the scripts differ, if they do.
    pub flipped_index: Option<usize>,
    /// Bins observed by at least one arm, in key order.
    pub bins: Vec<AuditBin>,
    /// Largest lower confidence bound on any bin's frequency ratio, across
    /// both directions.
    pub max_lower_ratio: f64,
    /// `ln(max_lower_ratio)`; absent when no bin certifies a ratio above 0.
    pub max_lower_log_ratio: Option<f64>,
    /// `e^{ε₀}`.
    pub threshold: f64,
    pub passes: bool,
}

/// Exact binomial (Clopper–Pearson) interval at the given two-sided
/// confidence.
pub fn clopper_pearson(successes: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0, "interval needs at least one observation");
    assert!(successes <= n);
    let tail = (1.0 - confidence) / 2.0;
    let k = successes as f64;
    let n_f = n as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n_f - k + 1.0)
            .expect("valid beta shape")
            .inverse_cdf(tail)
    };
    let upper = if successes == n {
        1.0
    } else {
        Beta::new(k + 1.0, n_f - k)
            .expect("valid beta shape")
            .inverse_cdf(1.0 - tail)
    };
    (lower, upper)
}

/// Arm A: everyone approached in the first epoch accepts. Arm B: the same
/// vector with the first individual's decision flipped to reject.
pub fn default_audit_scripts(config: &MechanismConfig) -> (Vec<bool>, Vec<bool>) {
    let size = epoch_size(1, config) as usize;
    let script_a = vec![true; size];
    let mut script_b = script_a.clone();
    script_b[0] = false;
    (script_a, script_b)
}

fn bin_key(
    config: &MechanismConfig,
    params: &SuiteParams,
    halting_epoch: Option<u32>,
    noisy_count: f64,
) -> (Option<u32>, i64) {
    match halting_epoch {
        None => (None, 0),
        Some(epoch) => {
            let threshold = config.halting_threshold(epoch_size(epoch, config));
            let offset = (noisy_count - threshold).floor() as i64;
            (
                Some(epoch),
                offset.clamp(-params.audit_offset_window, params.audit_offset_window),
            )
        }
    }
}

fn collect_arm(
    config: &MechanismConfig,
    params: &SuiteParams,
    counts: &[(u64, u64)],
    runs: u64,
    master_seed: u64,
    kind: StreamKind,
) -> std::collections::BTreeMap<(Option<u32>, i64), u64> {
    let keys: Vec<(Option<u32>, i64)> = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = SimRng::for_stream(master_seed, kind, run);
            let observable = run_scripted_observable(config, counts, &mut rng);
            bin_key(
                config,
                params,
                observable.halting_epoch,
                observable.final_noisy_count,
            )
        })
        .collect();
    let mut histogram = std::collections::BTreeMap::new();
    for key in keys {
        *histogram.entry(key).or_insert(0u64) += 1;
    }
    histogram
}

/// Runs the two-arm audit.
///
/// The scripts must have equal length and differ in at most one position
/// (identical scripts are the natural distance-0 control).
pub fn empirical_dp_audit(
    config: &MechanismConfig,
    script_a: &[bool],
    script_b: &[bool],
    runs_per_arm: u64,
    master_seed: u64,
    params: &SuiteParams,
) -> Result<DpAuditReport, HarnessError> {
    if script_a.len() != script_b.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "decision vectors must have equal length, got {} and {}",
            script_a.len(),
            script_b.len()
        )));
    }
    if runs_per_arm == 0 {
        return Err(HarnessError::InvalidArgument(
            "audit needs at least one run per arm".into(),
        ));
    }
    let differing: Vec<usize> = script_a
        .iter()
        .zip(script_b)
        .enumerate()
        .filter_map(|(i, (a, b))| (a != b).then_some(i))
        .collect();
    if differing.len() > 1 {
        return Err(HarnessError::NeighborViolation {
            differing: differing.len(),
        });
    }

    // Scripted decisions fix the per-epoch acceptance counts outright; only
    // the noise draws remain random, so each run replays the halting channel
    // over the precomputed counts.
    let horizon = params.audit_max_epochs.min(config.max_epochs()).max(1);
    let capped = (*config).with_max_epochs(horizon).expect("horizon >= 1");
    let counts_a = scripted_epoch_counts(&capped, script_a);
    let counts_b = scripted_epoch_counts(&capped, script_b);

    let hist_a = collect_arm(
        &capped,
        params,
        &counts_a,
        runs_per_arm,
        master_seed,
        StreamKind::AuditArmA,
    );
    let hist_b = collect_arm(
        &capped,
        params,
        &counts_b,
        runs_per_arm,
        master_seed,
        StreamKind::AuditArmB,
    );

    let mut keys: Vec<(Option<u32>, i64)> = hist_a.keys().chain(hist_b.keys()).copied().collect();
    keys.sort_by_key(|&(epoch, offset)| (epoch.is_none(), epoch, offset));
    keys.dedup();

    let n = runs_per_arm;
    let mut bins = Vec::with_capacity(keys.len());
    let mut max_lower_ratio: f64 = 0.0;
    for key in keys {
        let count_a = hist_a.get(&key).copied().unwrap_or(0);
        let count_b = hist_b.get(&key).copied().unwrap_or(0);
        let (lo_a, hi_a) = clopper_pearson(count_a, n, AUDIT_CONFIDENCE);
        let (lo_b, hi_b) = clopper_pearson(count_b, n, AUDIT_CONFIDENCE);
        let lower_ab = if lo_a > 0.0 { lo_a / hi_b } else { 0.0 };
        let lower_ba = if lo_b > 0.0 { lo_b / hi_a } else { 0.0 };
        let lower_ratio = lower_ab.max(lower_ba);
        max_lower_ratio = max_lower_ratio.max(lower_ratio);
        let ratio_point = (count_a > 0 && count_b > 0).then(|| count_a as f64 / count_b as f64);
        bins.push(AuditBin {
            epoch: key.0,
            offset: key.1,
            count_a,
            count_b,
            ratio_point,
            lower_ratio,
        });
    }

    let threshold = config.eps0().exp();
    Ok(DpAuditReport {
        epsilon: config.eps0(),
        runs_per_arm,
        confidence: AUDIT_CONFIDENCE,
        offset_window: params.audit_offset_window,
        audit_max_epochs: horizon,
        script_a: script_a.to_vec(),
        script_b: script_b.to_vec(),
        flipped_index: differing.first().copied(),
        bins,
        max_lower_ratio,
        max_lower_log_ratio: (max_lower_ratio > 0.0).then(|| max_lower_ratio.ln()),
        threshold,
        passes: max_lower_ratio <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> MechanismConfig {
        MechanismConfig::new(0.5, 0.1).unwrap()
    }

    fn params(runs: u64) -> SuiteParams {
        SuiteParams {
            audit_runs_per_arm: runs,
            ..SuiteParams::default()
        }
    }

    #[test]
    fn clopper_pearson_brackets_the_truth() {
        let (lo, hi) = clopper_pearson(50, 100, 0.99);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(lo > 0.3 && hi < 0.7);
        let (lo, hi) = clopper_pearson(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = clopper_pearson(100, 100, 0.99);
        assert!(lo > 0.9);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn identical_scripts_pass_as_distance_zero_control() {
        let cfg = config();
        let (script, _) = default_audit_scripts(&cfg);
        let report =
            empirical_dp_audit(&cfg, &script, &script, 20_000, 5, &params(20_000)).unwrap();
        assert_eq!(report.flipped_index, None);
        assert!(report.passes, "max lower ratio {}", report.max_lower_ratio);
        // With identical distributions the certified ratio should sit well
        // below the e^ε bound.
        assert!(report.max_lower_ratio < report.threshold * 0.9);
    }

    #[test]
    fn single_flip_stays_within_the_privacy_bound() {
        let cfg = config();
        let (script_a, script_b) = default_audit_scripts(&cfg);
        let report =
            empirical_dp_audit(&cfg, &script_a, &script_b, 30_000, 7, &params(30_000)).unwrap();
        assert_eq!(report.flipped_index, Some(0));
        assert!(report.passes, "max lower ratio {}", report.max_lower_ratio);
        assert!((report.threshold - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn two_flips_are_rejected() {
        let cfg = config();
        let (script_a, mut script_b) = default_audit_scripts(&cfg);
        script_b[1] = false;
        let err = empirical_dp_audit(&cfg, &script_a, &script_b, 100, 7, &params(100)).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::NeighborViolation { differing: 2 }
        ));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let cfg = config();
        let (script_a, _) = default_audit_scripts(&cfg);
        let err =
            empirical_dp_audit(&cfg, &script_a, &script_a[1..], 100, 7, &params(100)).unwrap_err();
        assert!(matches!(err, HarnessError::InvalidArgument(_)));
    }

    #[test]
    fn audit_is_deterministic_in_the_seed() {
        let cfg = config();
        let (script_a, script_b) = default_audit_scripts(&cfg);
        let a = empirical_dp_audit(&cfg, &script_a, &script_b, 5_000, 11, &params(5_000)).unwrap();
        let b = empirical_dp_audit(&cfg, &script_a, &script_b, 5_000, 11, &params(5_000)).unwrap();
        assert_eq!(a, b);
    }
}
