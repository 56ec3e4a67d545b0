//! Concrete uniformity testers and the erasure histogram learner.
//!
//! All testers take a target total-variation distance `eps`: they must
//! accept the uniform distribution and reject anything at TV distance at
//! least `eps` from it, both with error probability below the caller's
//! target. The far case enters through the L2 lower bound
//! `|p|^2 >= (1 + 4 eps^2) / (2k)`, which the sign-perturbation family
//! attains with equality at perturbation magnitude `eps / 2`.

use crate::channel::{ChannelKind, Label};
use crate::dist::{Distribution, DistributionSpec, PerturbationSign};
use crate::protocol::{Decision, Mode, Outcome, Strategy, Transcript, Verdict};
use crate::rng::{domain, Substream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Stage-1 rejection rule of the interactive tester: declare "far" when some
/// leaked symbol appears at least this many times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage1Trigger {
    /// A fixed count. The proof-faithful value is 3 ("more than twice").
    Fixed { count: u32 },
    /// Smallest count ≥ 3 whose expected number of triggering symbols under
    /// the uniform distribution stays below the budget (Poisson tail). Keeps
    /// the false-positive rate controlled at any n, where a fixed count of 3
    /// would eventually reject uniform almost surely.
    FpBudget { budget: f64 },
}

/// Constants of the interactive leaky-query tester. The `paper` preset keeps
/// the proof constants, which are not practical at desk scale (they assume
/// enormous domains); the `calibrated` preset carries harness-fitted values.
/// Both are explicit in decision output metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TesterConstants {
    /// Coefficient of the heavy-element threshold `heavy_coeff * sqrt(k) / n`
    /// that stage 1 effectively tests; recorded in statistics.
    pub heavy_coeff: f64,
    /// Users-per-repetition coefficient: suggested n is
    /// `sample_constant * k^(3/4) / eps^2` per repetition.
    pub sample_constant: f64,
    /// Majority vote over this many independent repetitions; odd.
    pub repeats: u32,
    /// Stage-3 decision threshold `(1 + stage3_margin * eps^2) * E_u[u(S)]`.
    pub stage3_margin: f64,
    pub stage1_trigger: Stage1Trigger,
    pub calibrated: bool,
}

impl TesterConstants {
    /// Proof constants as stated: threshold midway between the separated
    /// events at `(1 + eps^2/2)` and `(1 + eps^2)`, 43 repetitions, fixed
    /// stage-1 count of 3.
    pub fn paper() -> Self {
        TesterConstants {
            heavy_coeff: 22.0,
            sample_constant: 4840.0,
            repeats: 43,
            stage3_margin: 0.75,
            stage1_trigger: Stage1Trigger::Fixed { count: 3 },
            calibrated: false,
        }
    }

    /// Harness-fitted constants (grid search at k = 256, eps = 0.3, target
    /// error 1/3; see the experiment module). The trigger budget reduces to
    /// the fixed count 3 at the operating sample sizes and only rises where
    /// the fixed count would break down.
    pub fn calibrated() -> Self {
        TesterConstants {
            heavy_coeff: 22.0,
            sample_constant: 2.0,
            repeats: 1,
            stage3_margin: 1.5,
            stage1_trigger: Stage1Trigger::FpBudget { budget: 0.05 },
            calibrated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 || self.repeats % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "repeats must be odd and positive, got {}",
                self.repeats
            )));
        }
        if !(self.stage3_margin > 0.0) {
            return Err(Error::InvalidParameter("stage3_margin must be positive".into()));
        }
        match self.stage1_trigger {
            Stage1Trigger::Fixed { count } if count < 3 => Err(Error::InvalidParameter(
                "stage-1 trigger count must be at least 3".into(),
            )),
            Stage1Trigger::FpBudget { budget } if !(0.0 < budget && budget < 1.0) => Err(
                Error::InvalidParameter("stage-1 trigger budget must lie in (0,1)".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Suggested user count for one run at the preset's constants.
    pub fn suggested_n(&self, k: usize, eps: f64) -> usize {
        let per_rep = self.sample_constant * (k as f64).powf(0.75) / (eps * eps);
        (per_rep.ceil() as usize).max(3) * self.repeats as usize
    }

    /// Resolved stage-1 trigger count for a stage of `stage_users` users.
    pub fn stage1_trigger_count(&self, k: usize, stage_users: usize, eta: f64) -> u32 {
        match self.stage1_trigger {
            Stage1Trigger::Fixed { count } => count,
            Stage1Trigger::FpBudget { budget } => {
                // Leak counts per symbol are Poisson-like with rate
                // M / (2k) for M expected leaks; pick the smallest count
                // whose expected number of triggering symbols is below the
                // budget.
                let lambda = stage_users as f64 * eta / (2 * k) as f64;
                let domain_size = (2 * k) as f64;
                let mut term = (-lambda).exp();
                let mut below = term; // P(X < 1)
                let mut j = 1u32;
                for t in 3u32..=64 {
                    while j < t {
                        term *= lambda / f64::from(j);
                        below += term;
                        j += 1;
                    }
                    // below = P(X < t)
                    if domain_size * (1.0 - below).max(0.0) <= budget {
                        return t;
                    }
                }
                64
            }
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0 < eps && eps <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "test distance must lie in (0, 1/2], got {eps}"
        )));
    }
    Ok(())
}

/// Collision-count uniformity test on raw samples from `[2k]`.
///
/// Counts pairwise collisions `T` and rejects when `T` exceeds
/// `binom(m,2) (1 + 2 eps^2) / (2k)`, the midpoint between the uniform mean
/// `binom(m,2) / (2k)` and the far-case mean lower bound
/// `binom(m,2) (1 + 4 eps^2) / (2k)`.
pub fn centralized_collision_tester(samples: &[usize], k: usize, eps: f64) -> Result<Decision> {
    check_eps(eps)?;
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { got: samples.len(), need: 2 });
    }
    let mut counts = vec![0u32; 2 * k];
    for &x in samples {
        if x >= 2 * k {
            return Err(Error::InvalidParameter(format!(
                "sample {x} outside domain of size {}",
                2 * k
            )));
        }
        counts[x] += 1;
    }
    Ok(collision_decision(&counts, samples.len(), k, eps))
}

fn collision_decision(counts: &[u32], m: usize, k: usize, eps: f64) -> Decision {
    let collisions: u64 =
        counts.iter().map(|&c| u64::from(c) * u64::from(c.saturating_sub(1)) / 2).sum();
    let pairs = m as f64 * (m as f64 - 1.0) / 2.0;
    let threshold = pairs * (1.0 + 2.0 * eps * eps) / (2 * k) as f64;
    let verdict = if (collisions as f64) > threshold { Verdict::Far } else { Verdict::Uniform };
    Decision::new(verdict)
        .stat("samples", m as f64)
        .stat("collisions", collisions as f64)
        .stat("collision_threshold", threshold)
}

/// Shared finalizer of the two noninteractive testers: extract surviving raw
/// samples from the transcript and run the collision test. Fewer than two
/// survivors cannot be tested; the declared fallback is "uniform" with a
/// low-confidence flag.
fn survivor_collision_finalize(
    tr: &Transcript,
    k: usize,
    eps: f64,
    reerase_passthrough: Option<(usize, f64)>,
) -> Outcome {
    let mut counts = vec![0u32; 2 * k];
    let mut m = 0usize;
    for (t, label) in tr.messages() {
        if let Label::Sym(x) = label {
            let x = *x as usize;
            if let Some((x_star, eta)) = reerase_passthrough {
                // convert the passthrough symbol into an erased one so the
                // survivors are i.i.d. draws from the input distribution
                if x == x_star
                    && Substream::derive(tr.public_seed(), domain::REERASE, t as u64).next_f64()
                        >= eta
                {
                    continue;
                }
            }
            counts[x] += 1;
            m += 1;
        }
    }
    if m < 2 {
        return Outcome::Decision(
            Decision::new(Verdict::Uniform)
                .stat("survivors", m as f64)
                .stat("low_confidence", 1.0),
        );
    }
    let mut d = collision_decision(&counts, m, k, eps);
    d.statistics.insert("survivors".into(), m as f64);
    d.statistics.insert("low_confidence".into(), 0.0);
    Outcome::Decision(d)
}

/// Noninteractive private-coin tester for partial-erasure constraints at
/// `eta = 1/sqrt(k)`: every user applies the channel that passes symbol 0
/// exactly, the finalizer re-erases received 0s with probability `1 - eta`
/// so survivors are i.i.d. draws from `p`, and the survivors feed the
/// collision test.
pub fn erasure_simulation_tester(k: usize, eps: f64) -> Result<Strategy> {
    check_eps(eps)?;
    let eta = 1.0 / (k as f64).sqrt();
    let kind = ChannelKind::partial_erasure(k, eta, 0)?;
    Ok(Strategy::noninteractive(
        Mode::PrivateCoin,
        move |_seed, _t| kind.clone(),
        move |tr| survivor_collision_finalize(tr, k, eps, Some((0, eta))),
    ))
}

/// Noninteractive tester for leaky-query constraints at `eta = 1/sqrt(k)`:
/// every user applies the leaky-query channel with an arbitrary fixed query
/// and the binary responses are discarded, leaving i.i.d. leaked samples for
/// the collision test. Shares the survivor path with the erasure tester.
pub fn noninteractive_leaky_tester(k: usize, eps: f64) -> Result<Strategy> {
    check_eps(eps)?;
    let eta = 1.0 / (k as f64).sqrt();
    let kind = ChannelKind::leaky_query(k, eta, vec![0.0; 2 * k])?;
    Ok(Strategy::noninteractive(
        Mode::PrivateCoin,
        move |_seed, _t| kind.clone(),
        move |tr| survivor_collision_finalize(tr, k, eps, None),
    ))
}

/// Per-repetition stage boundaries: thirds, remainder to stage 3.
#[derive(Clone, Copy)]
struct Stages {
    block: usize,
    q: usize,
}

impl Stages {
    fn new(n: usize, repeats: u32) -> Self {
        let block = n / repeats as usize;
        Stages { block, q: block / 3 }
    }
}

/// Three-stage interactive uniformity tester under leaky-query constraints
/// at `eta = 1/sqrt(k)`.
///
/// Per repetition of `block = n / repeats` users, split into thirds (the
/// remainder joins stage 3):
///
/// 1. users apply the zero-query channel; if any leaked symbol appears at
///    least `trigger` times, the repetition votes "far" and skips the rest;
/// 2. users apply the zero-query channel; the leaked samples form the set
///    `S` (duplicates collapse) with leak count `N`;
/// 3. users apply the leaky-query channel whose query is the indicator of
///    `S`; the fraction of `1*` responses divided by `1 - eta` estimates
///    `p(S)`, and the repetition votes "far" iff the estimate exceeds
///    `(1 + stage3_margin * eps^2) * E_u[u(S)]`, where
///    `E_u[u(S)] = 1 - (1 - 1/(2k))^N` exactly.
///
/// The overall verdict is the majority vote. An empty `S` (no stage-2
/// leaks) yields a "uniform" vote flagged low-confidence.
pub fn interactive_leaky_tester(
    k: usize,
    eps: f64,
    n: usize,
    constants: &TesterConstants,
) -> Result<Strategy> {
    check_eps(eps)?;
    constants.validate()?;
    if n < 3 * constants.repeats as usize {
        return Err(Error::TooFewSamples { got: n, need: 3 * constants.repeats as usize });
    }
    let eta = 1.0 / (k as f64).sqrt();
    let stages = Stages::new(n, constants.repeats);
    let trigger = constants.stage1_trigger_count(k, stages.q, eta);
    let zero_query = ChannelKind::leaky_query(k, eta, vec![0.0; 2 * k])?;

    // The stage-3 query of a repetition is a pure function of the stage-2
    // slice of the prefix; cache it per (seed, repetition) so each stage-3
    // user does not rescan the prefix.
    let cache: Mutex<HashMap<(u64, usize), Arc<Vec<f64>>>> = Mutex::new(HashMap::new());
    let repeats = constants.repeats as usize;
    let select = move |seed: u64, t: usize, prefix: &[Label]| -> ChannelKind {
        let rep = t / stages.block;
        if rep >= repeats {
            return zero_query.clone(); // remainder users, unused by the finalizer
        }
        let tb = t % stages.block;
        if tb < 2 * stages.q {
            return zero_query.clone();
        }
        let mut cache = cache.lock().unwrap();
        if cache.len() > 128 {
            cache.clear(); // trials never revisit old seeds
        }
        let u = cache
            .entry((seed, rep))
            .or_insert_with(|| {
                let mut u = vec![0.0; 2 * k];
                let start = rep * stages.block + stages.q;
                for label in &prefix[start..rep * stages.block + 2 * stages.q] {
                    if let Label::Sym(x) = label {
                        u[*x as usize] = 1.0;
                    }
                }
                Arc::new(u)
            })
            .clone();
        ChannelKind::LeakyQuery { k, eta, u }
    };

    let consts = constants.clone();
    let finalize = move |tr: &Transcript| -> Outcome {
        let repeats = consts.repeats as usize;
        let mut far_votes = 0usize;
        let mut stage1_hits = 0usize;
        let mut stage1_max = 0u32;
        let mut leaked_total = 0usize;
        let mut set_total = 0usize;
        let mut low_confidence = 0.0;
        let mut last_est = f64::NAN;
        let mut last_thr = f64::NAN;
        let mut last_eu = f64::NAN;
        let mut counts = vec![0u32; 2 * k];
        for rep in 0..repeats {
            let base = rep * stages.block;
            // stage 1: heavy-element screen
            counts.iter_mut().for_each(|c| *c = 0);
            let mut max_count = 0u32;
            for t in base..base + stages.q {
                if let Label::Sym(x) = tr.message(t) {
                    let c = &mut counts[*x as usize];
                    *c += 1;
                    max_count = max_count.max(*c);
                }
            }
            stage1_max = stage1_max.max(max_count);
            if max_count >= trigger {
                stage1_hits += 1;
                far_votes += 1;
                continue; // stages 2-3 skipped for this repetition
            }
            // stage 2: gather the leaked set
            counts.iter_mut().for_each(|c| *c = 0);
            let mut leaks = 0usize;
            let mut set_size = 0usize;
            for t in base + stages.q..base + 2 * stages.q {
                if let Label::Sym(x) = tr.message(t) {
                    leaks += 1;
                    if counts[*x as usize] == 0 {
                        set_size += 1;
                    }
                    counts[*x as usize] += 1;
                }
            }
            leaked_total += leaks;
            set_total += set_size;
            if leaks == 0 {
                low_confidence = 1.0;
                continue; // vote uniform: nothing to query
            }
            // stage 3: estimate p(S) from the membership responses
            let stage3 = base + 2 * stages.q..base + stages.block;
            let n3 = stage3.len();
            let ones = stage3.filter(|&t| *tr.message(t) == Label::One).count();
            let est = ones as f64 / (n3 as f64 * (1.0 - eta));
            let eu = 1.0 - (1.0 - 1.0 / (2 * k) as f64).powi(leaks as i32);
            let thr = (1.0 + consts.stage3_margin * eps * eps) * eu;
            last_est = est;
            last_thr = thr;
            last_eu = eu;
            if est > thr {
                far_votes += 1;
            }
        }
        let verdict = if 2 * far_votes > repeats { Verdict::Far } else { Verdict::Uniform };
        Outcome::Decision(
            Decision::new(verdict)
                .stat("repeats", repeats as f64)
                .stat("far_votes", far_votes as f64)
                .stat("stage1_trigger", f64::from(trigger))
                .stat("stage1_hits", stage1_hits as f64)
                .stat("stage1_max_count", f64::from(stage1_max))
                .stat("heavy_threshold", consts.heavy_coeff * (k as f64).sqrt() / tr.n() as f64)
                .stat("stage2_leaked", leaked_total as f64)
                .stat("stage2_set_size", set_total as f64)
                .stat("stage3_estimate", last_est)
                .stat("stage3_threshold", last_thr)
                .stat("expected_uniform_mass", last_eu)
                .stat("stage3_margin", consts.stage3_margin)
                .stat("calibrated", if consts.calibrated { 1.0 } else { 0.0 })
                .stat("low_confidence", low_confidence),
        )
    };

    Ok(Strategy::new(Mode::Interactive, select, finalize))
}

/// Estimate variant for erasure constraints: every user applies the
/// passthrough channel converted to a pure erasure channel, and the
/// finalizer returns the empirical distribution of the survivors (uniform
/// when there are none).
pub fn erasure_histogram_learner(k: usize, eta: f64) -> Result<Strategy> {
    let kind = ChannelKind::partial_erasure(k, eta, 0)?;
    Ok(Strategy::noninteractive(
        Mode::PrivateCoin,
        move |_seed, _t| kind.clone(),
        move |tr| {
            let mut counts = vec![0u64; 2 * k];
            let mut m = 0u64;
            for (t, label) in tr.messages() {
                if let Label::Sym(x) = label {
                    let x = *x as usize;
                    if x == 0
                        && Substream::derive(tr.public_seed(), domain::REERASE, t as u64)
                            .next_f64()
                            >= eta
                    {
                        continue;
                    }
                    counts[x] += 1;
                    m += 1;
                }
            }
            if m == 0 {
                return Outcome::Estimate(Distribution::uniform(k).expect("k validated"));
            }
            let mut probs: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            let head: f64 = probs[..2 * k - 1].iter().sum();
            probs[2 * k - 1] = (1.0 - head).max(0.0);
            Outcome::Estimate(Distribution::new(probs).expect("empirical masses are valid"))
        },
    ))
}

/// Coordinatewise sign decoder: `z_hat_i = sign(est(2i) - est(2i+1))` with
/// ties resolved to +1. Equivalent to minimizing `TV(p_z, est)` over the
/// sign family. Returns the decoded vector and its Hamming distance to the
/// reference sign.
pub fn decode_to_hamming(
    estimate: &Distribution,
    sign: &PerturbationSign,
) -> Result<(Vec<i8>, usize)> {
    if estimate.k() != sign.k() {
        return Err(Error::DomainMismatch { left: estimate.k(), right: sign.k() });
    }
    let z_hat: Vec<i8> = (0..estimate.k())
        .map(|i| if estimate.get(2 * i) >= estimate.get(2 * i + 1) { 1 } else { -1 })
        .collect();
    let dist = z_hat.iter().zip(sign.z()).filter(|(a, b)| a != b).count();
    Ok((z_hat, dist))
}

/// Constants preset selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Paper,
    Calibrated,
}

impl Preset {
    pub fn constants(self) -> TesterConstants {
        match self {
            Preset::Paper => TesterConstants::paper(),
            Preset::Calibrated => TesterConstants::calibrated(),
        }
    }
}

fn default_preset() -> Preset {
    Preset::Calibrated
}

/// JSON protocol spec accepted by the CLI and the experiment harness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub protocol: ProtocolName,
    pub k: usize,
    #[serde(default)]
    pub eps: f64,
    pub n: usize,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    pub seed: u64,
    /// Erasure rate for the learner; defaults to `1/sqrt(k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Input distribution for single simulations; defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<DistributionSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    InteractiveLeaky,
    NoninteractiveLeaky,
    ErasureSim,
    ErasureLearner,
}

impl ProtocolSpec {
    pub fn constants(&self) -> TesterConstants {
        self.preset.constants()
    }

    /// Builds the strategy for a given user count (the spec's own `n` is the
    /// default; experiments vary it).
    pub fn build_with_n(&self, n: usize) -> Result<Strategy> {
        match self.protocol {
            ProtocolName::InteractiveLeaky => {
                interactive_leaky_tester(self.k, self.eps, n, &self.constants())
            }
            ProtocolName::NoninteractiveLeaky => noninteractive_leaky_tester(self.k, self.eps),
            ProtocolName::ErasureSim => erasure_simulation_tester(self.k, self.eps),
            ProtocolName::ErasureLearner => erasure_histogram_learner(
                self.k,
                self.eta.unwrap_or(1.0 / (self.k as f64).sqrt()),
            ),
        }
    }

    pub fn build(&self) -> Result<Strategy> {
        self.build_with_n(self.n)
    }

    pub fn input_dist(&self) -> Result<Distribution> {
        match &self.p {
            Some(spec) => spec.build(),
            None => Distribution::uniform(self.k),
        }
    }
}
