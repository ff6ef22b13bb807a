//! The epoch-based survey mechanism and the noisy estimator.
//!
//! Stage one repeatedly approaches fresh individuals in epochs. Epoch `j`
//! offers each of `EpochSize(j) = ⌈C·(ln j + 1)/α²⌉` individuals the same
//! take-it-or-leave-it offer `(p_j, ε₀, ε₀)` with geometrically rising price
//! `p_j = base·(1+η)^j`, counts acceptances, perturbs the count with
//! `Lap(1/ε₀)` noise, and halts as soon as the noisy count reaches the
//! participation target `(1 - α/8)·EpochSize(j)`. Every accepter in every
//! epoch is paid the epoch's price. Stage two sums the query values of the
//! final epoch's accepters, adds one more `Lap(1/ε₀)` draw, and divides by
//! the epoch size.
//!
//! The released information from stage one is the number of epochs run (which
//! fixes every price and epoch size) plus the final noisy count, so the whole
//! stage is ε₀-differentially private with respect to each participation
//! decision: the per-epoch acceptance counts form a sensitivity-1 vector and
//! only the noisy threshold comparison touches them. The estimator's sum has
//! sensitivity 1 in any single reported type because `Q ∈ [0, 1]`.
//!
//! Every Laplace draw can be redirected through a [`NoiseSource`] so tests
//! can freeze noise and check accuracy decompositions term by term; the
//! production entry points always use [`LaplaceNoise`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{decide, Agent, Decision, Offer};
use crate::dp::{sample_laplace, LaplaceParam, PrivacyLevel};
use crate::population::{PopulationError, PopulationOracle};
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("invalid mechanism config: {0}")]
    InvalidConfig(String),
    /// The geometric price schedule left the representable range.
    #[error("offer price overflowed at epoch {epoch}")]
    PriceOverflow { epoch: u32 },
    /// The halting condition never fired within the configured cap.
    #[error("no halt within {max_epochs} epochs")]
    MaxEpochsExceeded { max_epochs: u32 },
    #[error(transparent)]
    Population(#[from] PopulationError),
}

/// Parameters of one survey run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    alpha: f64,
    eta: f64,
    eps0: f64,
    epoch_constant: f64,
    participation_target: f64,
    base_price: f64,
    max_epochs: u32,
}

impl MechanismConfig {
    /// Defaults derived from `alpha`: `ε₀ = α`, epoch constant 100,
    /// participation target `1 - α/8`, unit base price, 10 000-epoch cap.
    pub fn new(alpha: f64, eta: f64) -> Result<Self, MechanismError> {
        let config = Self {
            alpha,
            eta,
            eps0: alpha,
            epoch_constant: 100.0,
            participation_target: 1.0 - alpha / 8.0,
            base_price: 1.0,
            max_epochs: 10_000,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), MechanismError> {
        let fail = |msg: String| Err(MechanismError::InvalidConfig(msg));
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            return fail(format!("eps0 must be positive, got {}", self.eps0));
        }
        if !(self.epoch_constant.is_finite() && self.epoch_constant > 0.0) {
            return fail(format!(
                "epoch_constant must be positive, got {}",
                self.epoch_constant
            ));
        }
        if !(self.participation_target.is_finite()
            && self.participation_target > 0.0
            && self.participation_target < 1.0)
        {
            return fail(format!(
                "participation_target must lie in (0, 1), got {}",
                self.participation_target
            ));
        }
        if !(self.base_price.is_finite() && self.base_price > 0.0) {
            return fail(format!(
                "base_price must be positive, got {}",
                self.base_price
            ));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Override the privacy parameter (defaults to `alpha`).
    pub fn with_eps0(mut self, eps0: f64) -> Result<Self, MechanismError> {
        self.eps0 = eps0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epoch_constant(mut self, c: f64) -> Result<Self, MechanismError> {
        self.epoch_constant = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_participation_target(mut self, target: f64) -> Result<Self, MechanismError> {
        self.participation_target = target;
        self.validate()?;
        Ok(self)
    }

    pub fn with_base_price(mut self, base: f64) -> Result<Self, MechanismError> {
        self.base_price = base;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_epochs(mut self, max_epochs: u32) -> Result<Self, MechanismError> {
        self.max_epochs = max_epochs;
        self.validate()?;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn privacy_level(&self) -> PrivacyLevel {
        PrivacyLevel::new(self.eps0).expect("validated at construction")
    }

    pub fn epoch_constant(&self) -> f64 {
        self.epoch_constant
    }

    pub fn participation_target(&self) -> f64 {
        self.participation_target
    }

    pub fn base_price(&self) -> f64 {
        self.base_price
    }

    pub fn max_epochs(&self) -> u32 {
        self.max_epochs
    }

    /// Halting threshold for an epoch of `size` individuals.
    pub fn halting_threshold(&self, size: u64) -> f64 {
        self.participation_target * size as f64
    }
}

/// `EpochSize(j) = ⌈C·(ln j + 1)/α²⌉`.
///
/// Natural log, with the `ln j + 1` reading: it dominates `ln(j + 1)` for
/// every `j >= 1`, so the tail bounds that sum `(j+1)^{-C/8α²·…}` terms only
/// tighten. The ceiling makes sizes integral.
pub fn epoch_size(j: u32, config: &MechanismConfig) -> u64 {
    assert!(j >= 1, "epochs are 1-indexed");
    let raw = config.epoch_constant * ((j as f64).ln() + 1.0) / (config.alpha * config.alpha);
    raw.ceil() as u64
}

/// `p_j = base·(1+η)^j`, failing once the value stops being representable.
pub fn offer_price(j: u32, config: &MechanismConfig) -> Result<f64, MechanismError> {
    assert!(j >= 1, "epochs are 1-indexed");
    let price = config.base_price * (1.0 + config.eta).powi(j as i32);
    if price.is_finite() {
        Ok(price)
    } else {
        Err(MechanismError::PriceOverflow { epoch: j })
    }
}

/// Source of the mechanism's Laplace draws.
pub trait NoiseSource {
    fn draw(&mut self, scale: f64, rng: &mut SimRng) -> f64;
}

/// Production noise: one `Lap(scale)` draw per call.
pub struct LaplaceNoise;

impl NoiseSource for LaplaceNoise {
    fn draw(&mut self, scale: f64, rng: &mut SimRng) -> f64 {
        let param = LaplaceParam::new(scale).expect("scale validated by config");
        sample_laplace(&param, rng)
    }
}

/// Test hook: every draw returns the same fixed value.
pub struct FixedNoise(pub f64);

impl NoiseSource for FixedNoise {
    fn draw(&mut self, _scale: f64, _rng: &mut SimRng) -> f64 {
        self.0
    }
}

/// Per-epoch record of one survey run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub index: u32,
    pub price: f64,
    pub epoch_size: u64,
    /// Oracle identifiers of everyone approached this epoch.
    pub approached: Vec<u64>,
    pub number_accepted: u64,
    /// The Laplace draw added to the acceptance count.
    pub noise: f64,
    pub noisy_count: f64,
    pub halted: bool,
    pub payments_this_epoch: f64,
}

impl EpochRecord {
    /// Internal-consistency check used by tests.
    pub fn validate(&self) -> Result<(), String> {
        if self.number_accepted > self.epoch_size {
            return Err(format!(
                "epoch {}: accepted {} exceeds size {}",
                self.index, self.number_accepted, self.epoch_size
            ));
        }
        if (self.noisy_count - (self.number_accepted as f64 + self.noise)).abs() > 1e-9 {
            return Err(format!("epoch {}: noisy count mismatch", self.index));
        }
        if (self.payments_this_epoch - self.price * self.number_accepted as f64).abs() > 1e-9 {
            return Err(format!("epoch {}: payment mismatch", self.index));
        }
        Ok(())
    }
}

/// Full history of one survey run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub epochs: Vec<EpochRecord>,
    /// Index of the epoch whose noisy count cleared the target.
    pub final_epoch: u32,
    /// Sum of payments across every epoch, not just the final one.
    pub total_payments: f64,
}

impl Transcript {
    pub fn recomputed_total_payments(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.price * e.number_accepted as f64)
            .sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.epochs.is_empty() {
            return Err("transcript has no epochs".into());
        }
        for epoch in &self.epochs {
            epoch.validate()?;
        }
        let halted: Vec<u32> = self
            .epochs
            .iter()
            .filter(|e| e.halted)
            .map(|e| e.index)
            .collect();
        if halted != [self.final_epoch]
            || self.epochs.last().map(|e| e.index) != Some(self.final_epoch)
        {
            return Err("exactly the last epoch must be the halting epoch".into());
        }
        if (self.total_payments - self.recomputed_total_payments()).abs() > 1e-6 {
            return Err("total payments do not match epoch payments".into());
        }
        Ok(())
    }
}

/// Result of the offer stage: the transcript, the final epoch's accepters
/// (whose types feed the estimator), and per-epoch diagnostics.
#[derive(Debug, Clone)]
pub struct HarassmentRun {
    pub transcript: Transcript,
    pub final_accepted: Vec<Agent>,
    /// Mean query value over everyone approached in each epoch, recorded for
    /// the accuracy-decomposition suites. Diagnostics only — never part of
    /// the mechanism's released output.
    pub epoch_query_means: Vec<f64>,
}

/// Runs the offer stage against a population oracle.
pub fn run_harassment(
    config: &MechanismConfig,
    oracle: &mut PopulationOracle<'_>,
    rng: &mut SimRng,
) -> Result<HarassmentRun, MechanismError> {
    run_harassment_with(config, oracle, rng, &mut LaplaceNoise)
}

/// [`run_harassment`] with an explicit noise source.
pub fn run_harassment_with(
    config: &MechanismConfig,
    oracle: &mut PopulationOracle<'_>,
    rng: &mut SimRng,
    noise_source: &mut dyn NoiseSource,
) -> Result<HarassmentRun, MechanismError> {
    let level = config.privacy_level();
    let noise_scale = 1.0 / config.eps0();
    let mut epochs = Vec::new();
    let mut query_means = Vec::new();
    let mut total_payments = 0.0;

    for j in 1..=config.max_epochs() {
        let size = epoch_size(j, config);
        let price = offer_price(j, config)?;
        let offer = Offer::new(price, level, level)
            .map_err(|e| MechanismError::InvalidConfig(e.to_string()))?;

        let mut approached = Vec::with_capacity(size as usize);
        let mut accepted_agents = Vec::new();
        let mut query_sum = 0.0;
        for _ in 0..size {
            let draw = oracle.sample(rng)?;
            approached.push(draw.id);
            query_sum += oracle.model().universe().query_value(draw.agent.type_id);
            if decide(&draw.agent, &offer, rng) == Decision::Accept {
                accepted_agents.push(draw.agent);
            }
        }
        let number_accepted = accepted_agents.len() as u64;
        let noise = noise_source.draw(noise_scale, rng);
        let noisy_count = number_accepted as f64 + noise;
        let halted = noisy_count >= config.halting_threshold(size);
        let payments_this_epoch = price * number_accepted as f64;
        total_payments += payments_this_epoch;

        epochs.push(EpochRecord {
            index: j,
            price,
            epoch_size: size,
            approached,
            number_accepted,
            noise,
            noisy_count,
            halted,
            payments_this_epoch,
        });
        query_means.push(query_sum / size as f64);

        if halted {
            return Ok(HarassmentRun {
                transcript: Transcript {
                    epochs,
                    final_epoch: j,
                    total_payments,
                },
                final_accepted: accepted_agents,
                epoch_query_means: query_means,
            });
        }
    }
    Err(MechanismError::MaxEpochsExceeded {
        max_epochs: config.max_epochs(),
    })
}

/// Output of the estimation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    /// `Σ values + Lap(1/ε)`.
    pub raw_noisy_sum: f64,
    /// `raw_noisy_sum / epoch_size`.
    pub estimate: f64,
    /// The Laplace draw that was added.
    pub noise: f64,
}

/// Noisy-average release over the accepted individuals' query values.
pub fn estimate(
    values: &[f64],
    epoch_size: u64,
    eps: PrivacyLevel,
    rng: &mut SimRng,
) -> EstimateOutput {
    estimate_with(values, epoch_size, eps, rng, &mut LaplaceNoise)
}

/// [`estimate`] with an explicit noise source.
pub fn estimate_with(
    values: &[f64],
    epoch_size: u64,
    eps: PrivacyLevel,
    rng: &mut SimRng,
    noise_source: &mut dyn NoiseSource,
) -> EstimateOutput {
    assert!(epoch_size >= 1, "epoch size must be positive");
    assert!(
        values.len() as u64 <= epoch_size,
        "cannot have more accepted values than approached individuals"
    );
    assert!(eps.epsilon() > 0.0, "estimator epsilon must be positive");
    let noise = noise_source.draw(1.0 / eps.epsilon(), rng);
    let raw_noisy_sum = values.iter().sum::<f64>() + noise;
    EstimateOutput {
        raw_noisy_sum,
        estimate: raw_noisy_sum / epoch_size as f64,
        noise,
    }
}

/// The released outcome of a full survey run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyOutcome {
    pub transcript: Transcript,
    /// Final normalized estimate `â / EpochSize(ĵ)`.
    pub estimate: f64,
    /// The noisy sum `â` before normalization.
    pub raw_noisy_sum: f64,
}

/// Outcome plus run diagnostics consumed by the verification suites.
#[derive(Debug, Clone)]
pub struct SurveyRun {
    pub outcome: SurveyOutcome,
    pub epoch_query_means: Vec<f64>,
    /// Noise added by the estimator (recoverable as `â - Σ accepted Q`).
    pub estimator_noise: f64,
    pub accepted_query_sum: f64,
}

/// Offer stage followed by estimation on the final epoch's accepters, both at
/// privacy level ε₀.
pub fn run_survey(
    config: &MechanismConfig,
    oracle: &mut PopulationOracle<'_>,
    rng: &mut SimRng,
) -> Result<SurveyRun, MechanismError> {
    run_survey_with(config, oracle, rng, &mut LaplaceNoise)
}

/// [`run_survey`] with an explicit noise source.
pub fn run_survey_with(
    config: &MechanismConfig,
    oracle: &mut PopulationOracle<'_>,
    rng: &mut SimRng,
    noise_source: &mut dyn NoiseSource,
) -> Result<SurveyRun, MechanismError> {
    let run = run_harassment_with(config, oracle, rng, noise_source)?;
    let universe = oracle.model().universe();
    let values: Vec<f64> = run
        .final_accepted
        .iter()
        .map(|a| universe.query_value(a.type_id))
        .collect();
    let size = epoch_size(run.transcript.final_epoch, config);
    let output = estimate_with(&values, size, config.privacy_level(), rng, noise_source);
    Ok(SurveyRun {
        outcome: SurveyOutcome {
            transcript: run.transcript,
            estimate: output.estimate,
            raw_noisy_sum: output.raw_noisy_sum,
        },
        epoch_query_means: run.epoch_query_means,
        estimator_noise: output.noise,
        accepted_query_sum: values.iter().sum(),
    })
}

/// Per-epoch `(size, accepted)` counts induced by a scripted decision vector.
///
/// The script fixes the participation decision of the i-th individual
/// approached, in approach order; epochs consume it front to back and any
/// decisions past its end count as rejections. With decisions scripted the
/// acceptance counts are fully determined, which is exactly the setting of
/// the participation-privacy audit: only the noise draws remain random.
pub fn scripted_epoch_counts(config: &MechanismConfig, script: &[bool]) -> Vec<(u64, u64)> {
    let mut counts = Vec::with_capacity(config.max_epochs() as usize);
    let mut cursor = 0usize;
    for j in 1..=config.max_epochs() {
        let size = epoch_size(j, config);
        let end = cursor.saturating_add(size as usize).min(script.len());
        let accepted = if cursor < script.len() {
            script[cursor..end].iter().filter(|&&d| d).count() as u64
        } else {
            0
        };
        cursor = cursor.saturating_add(size as usize);
        counts.push((size, accepted));
    }
    counts
}

/// Observable output of one scripted offer-stage run: the halting epoch (if
/// any within the cap) and the final noisy count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObservable {
    pub halting_epoch: Option<u32>,
    pub final_noisy_count: f64,
    pub epochs_run: u32,
}

/// Replays the offer stage's halting channel over precomputed counts.
pub fn run_scripted_observable(
    config: &MechanismConfig,
    counts: &[(u64, u64)],
    rng: &mut SimRng,
) -> ScriptedObservable {
    let noise_scale = 1.0 / config.eps0();
    let param = LaplaceParam::new(noise_scale).expect("scale validated by config");
    let mut last_noisy = 0.0;
    let mut epochs_run = 0;
    for (i, &(size, accepted)) in counts.iter().enumerate() {
        let nu = sample_laplace(&param, rng);
        let noisy = accepted as f64 + nu;
        last_noisy = noisy;
        epochs_run = (i + 1) as u32;
        if noisy >= config.halting_threshold(size) {
            return ScriptedObservable {
                halting_epoch: Some(epochs_run),
                final_noisy_count: noisy,
                epochs_run,
            };
        }
    }
    ScriptedObservable {
        halting_epoch: None,
        final_noisy_count: last_noisy,
        epochs_run,
    }
}
