//! Sequentially interactive protocol runtime.
//!
//! `n` users act in order. User `t` draws a private sample `X_t ~ p`, the
//! strategy picks a channel from the public seed, the user index, and the
//! messages of users `0..t` (the prefix is all the selector receives, so a
//! selector cannot peek at the future by construction), and the message is
//! the channel output on `X_t`. Sample draws and channel draws consume
//! disjoint counter-based substreams of the seed, so protocol-logic changes
//! never perturb the sample sequence and a run replays bit-for-bit.

use crate::channel::{ChannelKind, Label};
use crate::dist::Distribution;
use crate::rng::{domain, Substream};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How channel choices may depend on shared state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Channel of user t depends only on per-user independent randomness.
    PrivateCoin,
    /// Channel of user t depends on the public seed, never on the prefix.
    PublicCoin,
    /// Channel of user t may depend on the public seed and all prior messages.
    Interactive,
}

/// The ordered message sequence together with the public seed that produced
/// it. The user index of a message is its position.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    public_seed: u64,
    messages: Vec<Label>,
}

impl Transcript {
    pub fn new(public_seed: u64, messages: Vec<Label>) -> Self {
        Transcript { public_seed, messages }
    }

    pub fn n(&self) -> usize {
        self.messages.len()
    }

    pub fn public_seed(&self) -> u64 {
        self.public_seed
    }

    pub fn message(&self, t: usize) -> &Label {
        &self.messages[t]
    }

    pub fn labels(&self) -> &[Label] {
        &self.messages
    }

    /// Messages as (user index, label) pairs.
    pub fn messages(&self) -> impl Iterator<Item = (usize, &Label)> {
        self.messages.iter().enumerate()
    }
}

/// Test verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Uniform,
    Far,
}

/// A test decision with named per-stage statistics for diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Verdict,
    pub statistics: BTreeMap<String, f64>,
}

impl Decision {
    pub fn new(verdict: Verdict) -> Self {
        Decision { verdict, statistics: BTreeMap::new() }
    }

    pub fn stat(mut self, key: &str, value: f64) -> Self {
        self.statistics.insert(key.to_string(), value);
        self
    }
}

/// What a finalizer produces: a test decision or a distribution estimate.
#[derive(Clone, Debug)]
pub enum Outcome {
    Decision(Decision),
    Estimate(Distribution),
}

impl Outcome {
    pub fn decision(&self) -> Option<&Decision> {
        match self {
            Outcome::Decision(d) => Some(d),
            Outcome::Estimate(_) => None,
        }
    }

    pub fn estimate(&self) -> Option<&Distribution> {
        match self {
            Outcome::Estimate(e) => Some(e),
            Outcome::Decision(_) => None,
        }
    }
}

type Selector = dyn Fn(u64, usize, &[Label]) -> ChannelKind + Send + Sync;
type Finalizer = dyn Fn(&Transcript) -> Outcome + Send + Sync;

/// A channel selector plus a finalizer. The selector for user `t` receives
/// only the length-`t` message prefix; public-coin and private-coin
/// strategies ignore it.
pub struct Strategy {
    mode: Mode,
    select: Box<Selector>,
    finalize: Box<Finalizer>,
}

impl Strategy {
    pub fn new(
        mode: Mode,
        select: impl Fn(u64, usize, &[Label]) -> ChannelKind + Send + Sync + 'static,
        finalize: impl Fn(&Transcript) -> Outcome + Send + Sync + 'static,
    ) -> Self {
        Strategy { mode, select: Box::new(select), finalize: Box::new(finalize) }
    }

    /// A noninteractive strategy; the selector sees the seed and user index.
    pub fn noninteractive(
        mode: Mode,
        select: impl Fn(u64, usize) -> ChannelKind + Send + Sync + 'static,
        finalize: impl Fn(&Transcript) -> Outcome + Send + Sync + 'static,
    ) -> Self {
        debug_assert!(mode != Mode::Interactive);
        Strategy {
            mode,
            select: Box::new(move |seed, t, _prefix| select(seed, t)),
            finalize: Box::new(finalize),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn select_channel(&self, public_seed: u64, t: usize, prefix: &[Label]) -> ChannelKind {
        debug_assert!(prefix.len() == t);
        (self.select)(public_seed, t, prefix)
    }

    pub fn finalize(&self, transcript: &Transcript) -> Outcome {
        (self.finalize)(transcript)
    }

    /// The same selector re-declared as interactive. Transcript
    /// distributions are unchanged; only the mode tag widens.
    pub fn into_interactive(self) -> Strategy {
        Strategy { mode: Mode::Interactive, select: self.select, finalize: self.finalize }
    }
}

/// Runs the protocol: user `t` samples `X_t ~ p` i.i.d. and sends the output
/// of the selected channel, in order. Deterministic given `(p, n, seed)`.
pub fn run_transcript(strategy: &Strategy, p: &Distribution, n: usize, seed: u64) -> Transcript {
    let mut messages: Vec<Label> = Vec::with_capacity(n);
    for t in 0..n {
        let x = p.sample(&mut Substream::derive(seed, domain::SAMPLE, t as u64));
        let ch = strategy.select_channel(seed, t, &messages);
        debug_assert_eq!(ch.k(), p.k());
        let y = ch.emit(x, &mut Substream::derive(seed, domain::CHANNEL, t as u64));
        messages.push(y);
    }
    Transcript::new(seed, messages)
}

/// Convenience: run and finalize.
pub fn run(strategy: &Strategy, p: &Distribution, n: usize, seed: u64) -> (Transcript, Outcome) {
    let tr = run_transcript(strategy, p, n, seed);
    let out = strategy.finalize(&tr);
    (tr, out)
}
