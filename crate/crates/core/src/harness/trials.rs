//! Monte Carlo trial execution and aggregation.
//!
//! `run_trials` executes independent surveys with per-trial streams derived
//! from `(master_seed, trial index)`, so results are identical no matter how
//! the trials are scheduled. Trials that fail (price overflow, epoch cap,
//! pool exhaustion) are recorded, not fatal. Aggregation is an
//! order-insensitive fold over per-trial records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentSpec;
use crate::mechanism::{epoch_size, run_survey, SurveyRun};
use crate::population::PopulationOracle;
use crate::rng::SimRng;

/// Outcome of a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// Released estimate; absent when the trial errored.
    pub estimate: Option<f64>,
    pub true_statistic: f64,
    pub abs_error: Option<f64>,
    pub total_payments: Option<f64>,
    /// Halting epoch; absent when the trial errored.
    pub final_epoch: Option<u32>,
    /// Epochs actually executed, including runs that hit the cap.
    pub epochs_run: u32,
    pub error: Option<String>,
}

/// Flat per-epoch row for CSV emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub trial: u64,
    pub index: u32,
    pub price: f64,
    pub epoch_size: u64,
    pub number_accepted: u64,
    pub noise: f64,
    pub noisy_count: f64,
    pub halted: bool,
}

/// Per-trial indicator events for the three accuracy-decomposition terms.
///
/// The released estimate is within `α` of the truth whenever all three stay
/// quiet: per-epoch sample means within `α/4` of the population statistic,
/// per-epoch count noise within `(α/8)·EpochSize(j)`, and estimator noise
/// within `(α/4)·EpochSize(ĵ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaEvents {
    pub sample_deviation: bool,
    pub epoch_noise: bool,
    pub estimator_noise: bool,
    /// Epoch-1 restriction of the count-noise event; its probability has the
    /// closed form `exp(-ε₀·(α/8)·EpochSize(1))`.
    pub first_epoch_noise: bool,
}

/// Violation frequencies across a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaViolationRates {
    pub trials: u64,
    pub sample_deviation: f64,
    pub epoch_noise: f64,
    pub estimator_noise: f64,
    /// Frequency of any of the three firing in the same trial.
    pub joint: f64,
    pub first_epoch_noise: f64,
}

/// One bucket of the halting-epoch histogram. `epoch = None` collects trials
/// that never halted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltingBucket {
    pub epoch: Option<u32>,
    pub count: u64,
}

/// Aggregated view of an experiment batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub master_seed: u64,
    pub alpha: f64,
    pub eta: f64,
    pub eps0: f64,
    pub trials: u64,
    pub true_statistic: f64,
    /// Fraction of trials with `|estimate - a| > alpha`; trials that
    /// produced no estimate count as failures.
    pub failure_rate: f64,
    /// Mean total payments over trials that completed.
    pub mean_cost: f64,
    pub errored_trials: u64,
    pub halting_histogram: Vec<HaltingBucket>,
    pub lemma_violation_rates: LemmaViolationRates,
    pub per_trial: Vec<TrialRecord>,
}

/// Everything `run_trials` produces: the summary plus flat epoch rows.
#[derive(Debug, Clone)]
pub struct TrialsOutput {
    pub summary: ExperimentSummary,
    pub epoch_rows: Vec<EpochRow>,
}

pub(crate) struct TrialOutput {
    pub record: TrialRecord,
    pub rows: Vec<EpochRow>,
    pub events: Option<LemmaEvents>,
}

fn lemma_events(spec: &ExperimentSpec, run: &SurveyRun, true_statistic: f64) -> LemmaEvents {
    let alpha = spec.mechanism.alpha();
    let transcript = &run.outcome.transcript;
    let sample_deviation = run
        .epoch_query_means
        .iter()
        .any(|mean| (mean - true_statistic).abs() > alpha / 4.0);
    let epoch_noise = transcript
        .epochs
        .iter()
        .any(|e| e.noise.abs() > alpha / 8.0 * e.epoch_size as f64);
    let first_epoch_noise = transcript
        .epochs
        .first()
        .map(|e| e.noise.abs() > alpha / 8.0 * e.epoch_size as f64)
        .unwrap_or(false);
    let final_size = epoch_size(transcript.final_epoch, &spec.mechanism);
    let estimator_noise = run.estimator_noise.abs() > alpha / 4.0 * final_size as f64;
    LemmaEvents {
        sample_deviation,
        epoch_noise,
        estimator_noise,
        first_epoch_noise,
    }
}

pub(crate) fn execute_trial(spec: &ExperimentSpec, trial: u64) -> TrialOutput {
    let mut rng = SimRng::for_trial(spec.master_seed, trial);
    let mut oracle = PopulationOracle::new(&spec.population, &mut rng);
    let true_statistic = spec.population.true_statistic();
    match run_survey(&spec.mechanism, &mut oracle, &mut rng) {
        Ok(run) => {
            let transcript = &run.outcome.transcript;
            let rows = transcript
                .epochs
                .iter()
                .map(|e| EpochRow {
                    trial,
                    index: e.index,
                    price: e.price,
                    epoch_size: e.epoch_size,
                    number_accepted: e.number_accepted,
                    noise: e.noise,
                    noisy_count: e.noisy_count,
                    halted: e.halted,
                })
                .collect();
            let events = lemma_events(spec, &run, true_statistic);
            TrialOutput {
                record: TrialRecord {
                    trial,
                    estimate: Some(run.outcome.estimate),
                    true_statistic,
                    abs_error: Some((run.outcome.estimate - true_statistic).abs()),
                    total_payments: Some(transcript.total_payments),
                    final_epoch: Some(transcript.final_epoch),
                    epochs_run: transcript.final_epoch,
                    error: None,
                },
                rows,
                events: Some(events),
            }
        }
        Err(err) => {
            let epochs_run = match err {
                crate::mechanism::MechanismError::MaxEpochsExceeded { max_epochs } => max_epochs,
                _ => 0,
            };
            TrialOutput {
                record: TrialRecord {
                    trial,
                    estimate: None,
                    true_statistic,
                    abs_error: None,
                    total_payments: None,
                    final_epoch: None,
                    epochs_run,
                    error: Some(err.to_string()),
                },
                rows: Vec::new(),
                events: None,
            }
        }
    }
}

fn aggregate(spec: &ExperimentSpec, outputs: Vec<TrialOutput>) -> TrialsOutput {
    let alpha = spec.mechanism.alpha();
    let trials = outputs.len() as u64;
    let mut records = Vec::with_capacity(outputs.len());
    let mut rows = Vec::new();
    let mut failures = 0u64;
    let mut errored = 0u64;
    let mut cost_sum = 0.0;
    let mut completed = 0u64;
    let mut histogram: std::collections::BTreeMap<Option<u32>, u64> = Default::default();
    let mut dev = 0u64;
    let mut noise = 0u64;
    let mut est = 0u64;
    let mut joint = 0u64;
    let mut first = 0u64;

    for output in outputs {
        let record = &output.record;
        match record.abs_error {
            Some(err) if err > alpha => failures += 1,
            Some(_) => {}
            None => failures += 1,
        }
        if record.error.is_some() {
            errored += 1;
        }
        if let Some(cost) = record.total_payments {
            cost_sum += cost;
            completed += 1;
        }
        *histogram.entry(record.final_epoch).or_insert(0) += 1;
        if let Some(events) = output.events {
            dev += events.sample_deviation as u64;
            noise += events.epoch_noise as u64;
            est += events.estimator_noise as u64;
            first += events.first_epoch_noise as u64;
            joint +=
                (events.sample_deviation || events.epoch_noise || events.estimator_noise) as u64;
        }
        rows.extend(output.rows);
        records.push(output.record);
    }

    // Some(epoch) buckets in ascending epoch order, the no-halt bucket last.
    let mut buckets: Vec<HaltingBucket> = histogram
        .iter()
        .filter_map(|(epoch, count)| {
            epoch.map(|e| HaltingBucket {
                epoch: Some(e),
                count: *count,
            })
        })
        .collect();
    if let Some(count) = histogram.get(&None) {
        buckets.push(HaltingBucket {
            epoch: None,
            count: *count,
        });
    }

    let rate = |n: u64| n as f64 / trials.max(1) as f64;
    let summary = ExperimentSummary {
        schema_version: super::config::SUPPORTED_SCHEMA_VERSION,
        master_seed: spec.master_seed,
        alpha,
        eta: spec.mechanism.eta(),
        eps0: spec.mechanism.eps0(),
        trials,
        true_statistic: spec.population.true_statistic(),
        failure_rate: rate(failures),
        mean_cost: if completed > 0 {
            cost_sum / completed as f64
        } else {
            0.0
        },
        errored_trials: errored,
        halting_histogram: buckets,
        lemma_violation_rates: LemmaViolationRates {
            trials,
            sample_deviation: rate(dev),
            epoch_noise: rate(noise),
            estimator_noise: rate(est),
            joint: rate(joint),
            first_epoch_noise: rate(first),
        },
        per_trial: records,
    };
    TrialsOutput {
        summary,
        epoch_rows: rows,
    }
}

/// Executes `spec.trials` independent surveys and aggregates them.
///
/// Deterministic given `spec.master_seed`; trials run on the rayon pool.
pub fn run_trials(spec: &ExperimentSpec) -> TrialsOutput {
    let outputs: Vec<TrialOutput> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| execute_trial(spec, trial))
        .collect();
    aggregate(spec, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::MechanismConfig;
    use crate::population::{PopulationModel, TypeId, TypeUniverse};

    fn spec(alpha: f64, value: f64, trials: u64, seed: u64) -> ExperimentSpec {
        let mechanism = MechanismConfig::new(alpha, 0.1).unwrap();
        let population = PopulationModel::single_value(
            TypeUniverse::binary(),
            &[(TypeId(0), 0.3), (TypeId(1), 0.7)],
            value,
            0.0,
        )
        .unwrap();
        ExperimentSpec::new(mechanism, population, trials, seed).unwrap()
    }

    #[test]
    fn identical_seeds_give_identical_summaries() {
        let s = spec(0.5, 0.0, 1, 42);
        let a = run_trials(&s);
        let b = run_trials(&s);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.epoch_rows, b.epoch_rows);
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn failure_rate_is_recomputable_from_records() {
        let s = spec(0.5, 0.0, 64, 9);
        let out = run_trials(&s);
        let alpha = s.mechanism.alpha();
        let recomputed = out
            .summary
            .per_trial
            .iter()
            .filter(|r| r.abs_error.map(|e| e > alpha).unwrap_or(true))
            .count() as f64
            / out.summary.trials as f64;
        assert_eq!(out.summary.failure_rate, recomputed);
    }

    #[test]
    fn histogram_masses_sum_to_trials() {
        let s = spec(0.5, 0.0, 50, 3);
        let out = run_trials(&s);
        let total: u64 = out.summary.halting_histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, 50);
    }

    #[test]
    fn all_reject_population_records_cap_errors() {
        let mechanism = MechanismConfig::new(0.5, 0.1)
            .unwrap()
            .with_max_epochs(50)
            .unwrap();
        let population = PopulationModel::single_value(
            TypeUniverse::binary(),
            &[(TypeId(0), 0.3), (TypeId(1), 0.7)],
            1e300,
            0.0,
        )
        .unwrap();
        let s = ExperimentSpec::new(mechanism, population, 20, 5).unwrap();
        let out = run_trials(&s);
        assert_eq!(out.summary.errored_trials, 20);
        assert_eq!(out.summary.failure_rate, 1.0);
        assert!(out
            .summary
            .per_trial
            .iter()
            .all(|r| r.error.as_deref() == Some("no halt within 50 epochs") && r.epochs_run == 50));
        assert_eq!(
            out.summary.halting_histogram,
            vec![HaltingBucket {
                epoch: None,
                count: 20
            }]
        );
    }

    #[test]
    fn aggregates_are_order_insensitive() {
        let s = spec(0.5, 0.0, 32, 13);
        let forward: Vec<TrialOutput> = (0..s.trials).map(|t| execute_trial(&s, t)).collect();
        let reversed: Vec<TrialOutput> =
            (0..s.trials).rev().map(|t| execute_trial(&s, t)).collect();
        let a = aggregate(&s, forward).summary;
        let b = aggregate(&s, reversed).summary;
        assert_eq!(a.failure_rate, b.failure_rate);
        assert_eq!(a.mean_cost, b.mean_cost);
        assert_eq!(a.halting_histogram, b.halting_histogram);
        assert_eq!(a.lemma_violation_rates, b.lemma_violation_rates);
    }

    #[test]
    fn accurate_on_trivial_population() {
        // All-accepting population, so the estimate is the epoch-1 sample
        // mean plus O(1/ε₀·size) noise; far inside |err| <= α.
        let s = spec(0.5, 0.0, 30, 77);
        let out = run_trials(&s);
        assert_eq!(out.summary.failure_rate, 0.0);
        assert_eq!(out.summary.errored_trials, 0);
    }
}
