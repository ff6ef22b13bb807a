//! Verification suites: empirical checks of the mechanism's guarantees.
//!
//! Each suite runs a batch of surveys and compares a measured frequency
//! against its theoretical bound plus pre-registered statistical slack
//! (3σ binomial, with σ computed at the bound itself). All suites are
//! deterministic given the spec's master seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ExperimentSpec, Suite};
use super::trials::{run_trials, LemmaViolationRates};
use crate::benchmark::{critical_epoch, report_from_mean_cost, BenchmarkReport};
use crate::dp::{dp_ratio_audit_default, PrivacyLevel};
use crate::mechanism::epoch_size;

/// Per-epoch halting probability bound: every epoch at or past the critical
/// one halts with probability at least 3/20, so the chance of surviving `k`
/// further epochs decays at least geometrically with ratio 17/20.
pub const HALTING_TAIL_RATIO: f64 = 17.0 / 20.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// A suite's preconditions exclude this configuration.
    #[error("config out of range: {0}")]
    ConfigOutOfRange(String),
    /// Audit decision vectors must be neighbors (differ in at most one
    /// position).
    #[error("decision vectors differ in {differing} positions; at most 1 allowed")]
    NeighborViolation { differing: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn binomial_slack(p: f64, n: u64) -> f64 {
    3.0 * (p * (1.0 - p) / n.max(1) as f64).sqrt()
}

/// One pass/fail line of a verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    pub fn render(&self) -> String {
        format!(
            "{} {:<9} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.detail
        )
    }
}

/// Accuracy check: the failure frequency of `|estimate - a| > alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub trials: u64,
    pub failure_rate: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn accuracy_suite(spec: &ExperimentSpec) -> AccuracyReport {
    let out = run_trials(spec);
    let failure_rate = out.summary.failure_rate;
    let threshold = spec.params.failure_threshold;
    AccuracyReport {
        trials: spec.trials,
        failure_rate,
        threshold,
        passed: failure_rate < threshold,
    }
}

/// Frequencies of the three accuracy-decomposition events, each bounded by
/// 1/12, plus closed-form Laplace cross-checks for the two noise events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaTailReport {
    pub rates: LemmaViolationRates,
    pub bound: f64,
    pub slack: f64,
    /// Union of the three events; bounded by 3·(1/12) = 1/4.
    pub joint_bound: f64,
    pub first_epoch_noise_rate: f64,
    /// `exp(-ε₀·(α/8)·EpochSize(1))`.
    pub first_epoch_noise_closed_form: f64,
    pub estimator_noise_rate: f64,
    /// Mean over trials of `exp(-ε₀·(α/4)·EpochSize(ĵ))`.
    pub estimator_noise_closed_form: f64,
    pub passed: bool,
}

pub fn lemma_tail_suite(spec: &ExperimentSpec) -> LemmaTailReport {
    let out = run_trials(spec);
    let rates = out.summary.lemma_violation_rates;
    let bound = spec.params.lemma_bound;
    let slack = binomial_slack(bound, spec.trials);
    let alpha = spec.mechanism.alpha();
    let eps0 = spec.mechanism.eps0();

    let size1 = epoch_size(1, &spec.mechanism) as f64;
    let first_epoch_noise_closed_form = (-eps0 * alpha / 8.0 * size1).exp();

    // Per-trial closed form depends on the halting epoch; average it.
    let mut est_form_sum = 0.0;
    let mut est_form_n = 0u64;
    for record in &out.summary.per_trial {
        if let Some(final_epoch) = record.final_epoch {
            let size = epoch_size(final_epoch, &spec.mechanism) as f64;
            est_form_sum += (-eps0 * alpha / 4.0 * size).exp();
            est_form_n += 1;
        }
    }
    let estimator_noise_closed_form = if est_form_n > 0 {
        est_form_sum / est_form_n as f64
    } else {
        0.0
    };

    let within = |rate: f64, form: f64| {
        let sigma = binomial_slack(form.max(1e-12), spec.trials);
        (rate - form).abs() <= sigma.max(1e-9)
    };
    let joint_bound = 3.0 * bound;
    let passed = rates.sample_deviation < bound + slack
        && rates.epoch_noise < bound + slack
        && rates.estimator_noise < bound + slack
        && rates.joint < joint_bound + binomial_slack(joint_bound, spec.trials)
        && within(rates.first_epoch_noise, first_epoch_noise_closed_form)
        && within(rates.estimator_noise, estimator_noise_closed_form);

    LemmaTailReport {
        rates,
        bound,
        slack,
        joint_bound,
        first_epoch_noise_rate: rates.first_epoch_noise,
        first_epoch_noise_closed_form,
        estimator_noise_rate: rates.estimator_noise,
        estimator_noise_closed_form,
        passed,
    }
}

/// One point of the halting-tail curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HaltingTailPoint {
    pub k: u32,
    /// Fraction of trials that ran at least `critical_epoch + k` epochs.
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Empirical tail of the halting epoch beyond the critical epoch, compared
/// against the geometric bound `(17/20)^k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HaltingTailReport {
    pub critical_epoch: u32,
    pub trials: u64,
    pub points: Vec<HaltingTailPoint>,
    pub passed: bool,
}

/// Requires `alpha <= 0.5`: the per-epoch halting bound `½·e^{-ε₀} >= 3/10`
/// needs `ε₀ = α <= ln(5/3)`, and 0.5 keeps a margin below that.
pub fn halting_tail_suite(spec: &ExperimentSpec) -> Result<HaltingTailReport, HarnessError> {
    if spec.mechanism.alpha() > 0.5 {
        return Err(HarnessError::ConfigOutOfRange(format!(
            "halting tail suite requires alpha <= 0.5, got {}",
            spec.mechanism.alpha()
        )));
    }
    let v = spec.population.value_quantile(spec.mechanism.alpha() / 8.0);
    if !v.is_finite() {
        return Err(HarnessError::ConfigOutOfRange(
            "halting tail suite requires a finite cost quantile".into(),
        ));
    }
    let out = run_trials(spec);
    let j_star = critical_epoch(&spec.population, &spec.mechanism);
    let trials = spec.trials;
    let mut points = Vec::new();
    let mut passed = true;
    for k in 0..=spec.params.halting_max_k {
        let target = j_star + k;
        let reached = out
            .summary
            .per_trial
            .iter()
            .filter(|r| r.epochs_run >= target)
            .count();
        let empirical = reached as f64 / trials as f64;
        let bound = HALTING_TAIL_RATIO.powi(k as i32);
        let slack = binomial_slack(bound, trials);
        if k > 0 && empirical > bound + slack {
            passed = false;
        }
        points.push(HaltingTailPoint {
            k,
            empirical,
            bound,
            slack,
        });
    }
    Ok(HaltingTailReport {
        critical_epoch: j_star,
        trials,
        points,
        passed,
    })
}

/// Cost-ratio check against the benchmark bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub benchmark: BenchmarkReport,
    pub max_ratio: f64,
    pub passed: bool,
}

pub fn cost_suite(spec: &ExperimentSpec) -> CostReport {
    let out = run_trials(spec);
    let report = report_from_mean_cost(
        &spec.population,
        &spec.mechanism,
        out.summary.mean_cost,
        spec.trials as usize,
    );
    let passed = report.ratio <= spec.params.cost_max_ratio;
    CostReport {
        benchmark: report,
        max_ratio: spec.params.cost_max_ratio,
        passed,
    }
}

/// Analytic privacy audit over recorded transcripts: every acceptance count
/// is checked against both adjacent counts (one flipped decision) with the
/// closed-form density-ratio audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptAuditReport {
    pub transcripts: u64,
    pub pairs_checked: u64,
    pub max_ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn transcript_ratio_audit(spec: &ExperimentSpec, transcripts: u64) -> TranscriptAuditReport {
    use crate::population::PopulationOracle;
    use crate::rng::SimRng;

    let level = PrivacyLevel::new(spec.mechanism.eps0()).expect("validated config");
    let mut max_ratio: f64 = 0.0;
    let mut pairs = 0u64;
    let mut all_pass = true;
    for trial in 0..transcripts {
        let mut rng = SimRng::for_trial(spec.master_seed, trial);
        let mut oracle = PopulationOracle::new(&spec.population, &mut rng);
        let Ok(run) = crate::mechanism::run_harassment(&spec.mechanism, &mut oracle, &mut rng)
        else {
            continue;
        };
        for epoch in &run.transcript.epochs {
            let n = epoch.number_accepted as f64;
            let mut neighbors = vec![n + 1.0];
            if epoch.number_accepted > 0 {
                neighbors.push(n - 1.0);
            }
            for neighbor in neighbors {
                let outcome = dp_ratio_audit_default(level, n, neighbor)
                    .expect("adjacent counts are neighbors");
                max_ratio = max_ratio.max(outcome.max_ratio);
                all_pass &= outcome.passes;
                pairs += 1;
            }
        }
    }
    let threshold = spec.mechanism.eps0().exp() * (1.0 + crate::dp::AUDIT_RELATIVE_TOLERANCE);
    TranscriptAuditReport {
        transcripts,
        pairs_checked: pairs,
        max_ratio,
        threshold,
        passed: all_pass && max_ratio <= threshold,
    }
}

/// Runs every suite selected in the spec and collects pass/fail lines.
pub fn run_selected_suites(spec: &ExperimentSpec) -> Vec<SuiteReport> {
    let mut reports = Vec::new();
    for suite in &spec.suites {
        let report = match suite {
            Suite::Accuracy => {
                let r = accuracy_suite(spec);
                SuiteReport {
                    suite: suite.name().into(),
                    passed: r.passed,
                    detail: format!(
                        "failure rate {:.4} over {} trials (threshold {:.4})",
                        r.failure_rate, r.trials, r.threshold
                    ),
                }
            }
            Suite::Tails => {
                let r = lemma_tail_suite(spec);
                SuiteReport {
                    suite: suite.name().into(),
                    passed: r.passed,
                    detail: format!(
                        "rates dev {:.4} noise {:.4} est {:.4} joint {:.4} (bound {:.4} + {:.4})",
                        r.rates.sample_deviation,
                        r.rates.epoch_noise,
                        r.rates.estimator_noise,
                        r.rates.joint,
                        r.bound,
                        r.slack
                    ),
                }
            }
            Suite::Halting => match halting_tail_suite(spec) {
                Ok(r) => {
                    let worst = r
                        .points
                        .iter()
                        .skip(1)
                        .map(|p| p.empirical - p.bound)
                        .fold(f64::MIN, f64::max);
                    SuiteReport {
                        suite: suite.name().into(),
                        passed: r.passed,
                        detail: format!(
                            "critical epoch {}, worst tail excess {:.4}",
                            r.critical_epoch, worst
                        ),
                    }
                }
                Err(e) => SuiteReport {
                    suite: suite.name().into(),
                    passed: false,
                    detail: e.to_string(),
                },
            },
            Suite::Cost => {
                let r = cost_suite(spec);
                SuiteReport {
                    suite: suite.name().into(),
                    passed: r.passed,
                    detail: format!(
                        "cost ratio {:.4} (max {:.4}), mean cost {:.2}",
                        r.benchmark.ratio, r.max_ratio, r.benchmark.mechanism_mean_cost
                    ),
                }
            }
            Suite::DpAudit => {
                let analytic = transcript_ratio_audit(spec, 100.min(spec.trials));
                let (script_a, script_b) = super::audit::default_audit_scripts(&spec.mechanism);
                match super::audit::empirical_dp_audit(
                    &spec.mechanism,
                    &script_a,
                    &script_b,
                    spec.params.audit_runs_per_arm,
                    spec.master_seed,
                    &spec.params,
                ) {
                    Ok(r) => SuiteReport {
                        suite: suite.name().into(),
                        passed: r.passes && analytic.passed,
                        detail: format!(
                            "max lower-CI ratio {:.4} (bound {:.4}); analytic max {:.6}",
                            r.max_lower_ratio, r.threshold, analytic.max_ratio
                        ),
                    },
                    Err(e) => SuiteReport {
                        suite: suite.name().into(),
                        passed: false,
                        detail: e.to_string(),
                    },
                }
            }
        };
        reports.push(report);
    }
    reports
}
