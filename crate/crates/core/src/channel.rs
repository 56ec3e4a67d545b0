//! Channels from `[2k]` to a finite message alphabet.
//!
//! A [`Channel`] stores the full row-stochastic matrix and is what the
//! information-matrix machinery consumes. [`ChannelKind`] is the runtime
//! companion used by protocols: the structured families (randomized
//! response, partial erasure, leaky query) sample in O(1) without ever
//! materializing a `2k x |Y|` matrix, which matters for domains with
//! thousands of elements.

use crate::dist::{check_permutation, Distribution};
use crate::rng::Substream;
use crate::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::sync::Arc;

const ROW_TOL: f64 = 1e-12;
const ALPHABET_CAP: usize = 1 << 16;

/// A message label. Symbols mirror domain elements; `Bot` is the erasure
/// mark, `One`/`Zero` the binary query responses. `Named` covers ad-hoc
/// alphabets loaded from JSON.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Sym(u32),
    Bot,
    One,
    Zero,
    Named(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Sym(x) => write!(f, "{x}"),
            Label::Bot => write!(f, "⊥"),
            Label::One => write!(f, "1*"),
            Label::Zero => write!(f, "0*"),
            Label::Named(s) => write!(f, "{s}"),
        }
    }
}

impl Label {
    pub fn parse(s: &str) -> Label {
        match s {
            "⊥" | "bot" => Label::Bot,
            "1*" => Label::One,
            "0*" => Label::Zero,
            _ => match s.parse::<u32>() {
                Ok(x) => Label::Sym(x),
                Err(_) => Label::Named(s.to_string()),
            },
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Err(D::Error::custom("empty label"));
        }
        Ok(Label::parse(&s))
    }
}

/// A channel as an explicit `2k x |Y|` row-stochastic matrix with labeled
/// columns. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    k: usize,
    labels: Vec<Label>,
    data: Vec<f64>, // row-major, rows = 2k, cols = labels.len()
}

impl Channel {
    /// Validates rows (each sums to 1 within 1e-12, entries in `[0,1]`) and
    /// labels (unique, at most 2^16).
    pub fn from_rows(k: usize, labels: Vec<Label>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be ≥ 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidParameter("alphabet must be nonempty".into()));
        }
        if labels.len() > ALPHABET_CAP {
            return Err(Error::AlphabetTooLarge { size: labels.len() });
        }
        {
            let mut sorted = labels.clone();
            sorted.sort();
            for w in sorted.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateLabel(w[0].to_string()));
                }
            }
        }
        if rows.len() != 2 * k {
            return Err(Error::DomainMismatch { left: rows.len(), right: 2 * k });
        }
        let cols = labels.len();
        let mut data = Vec::with_capacity(2 * k * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DomainMismatch { left: row.len(), right: cols });
            }
            let mut sum = 0.0;
            for &v in row {
                if !(0.0..=1.0).contains(&v) || v.is_nan() {
                    return Err(Error::InvalidProbability { index: r, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::RowNotStochastic { row: r, sum });
            }
            data.extend_from_slice(row);
        }
        Ok(Channel { k, labels, data })
    }

    /// The identity channel: input `x` is forwarded as `Sym(x)`.
    pub fn identity(k: usize) -> Result<Self> {
        ChannelKind::Identity { k }.to_dense()
    }

    /// The constant channel emitting one fixed label regardless of input.
    pub fn constant(k: usize, label: Label) -> Result<Self> {
        ChannelKind::Constant { k, label }.to_dense()
    }

    /// Randomized response over `[2k]`: keeps the input with probability
    /// `e^rho / (e^rho + 2k - 1)` and emits any other symbol with
    /// probability `1 / (e^rho + 2k - 1)`.
    pub fn randomized_response(k: usize, rho: f64) -> Result<Self> {
        ChannelKind::randomized_response(k, rho)?.to_dense()
    }

    /// Partial erasure channel: passes `x_star` exactly; any other symbol is
    /// passed with probability `eta` and erased to `⊥` otherwise.
    pub fn partial_erasure(k: usize, eta: f64, x_star: usize) -> Result<Self> {
        ChannelKind::partial_erasure(k, eta, x_star)?.to_dense()
    }

    /// Leaky-query channel: leaks the raw input with probability `eta`,
    /// otherwise answers the query `u` with `1*` (probability `u_x`) or `0*`.
    pub fn leaky_query(k: usize, eta: f64, u: &[f64]) -> Result<Self> {
        ChannelKind::leaky_query(k, eta, u.to_vec())?.to_dense()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn domain_size(&self) -> usize {
        2 * self.k
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn cols(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.cols()..(x + 1) * self.cols()]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.cols() + y]
    }

    /// Samples one output label for input `x`.
    pub fn apply(&self, x: usize, stream: &mut Substream) -> &Label {
        let u = stream.next_f64();
        let row = self.row(x);
        let mut acc = 0.0;
        for (y, &w) in row.iter().enumerate() {
            acc += w;
            if u < acc {
                return &self.labels[y];
            }
        }
        &self.labels[self.cols() - 1]
    }

    /// Push-forward of `p` through the channel; co-indexed with `labels()`.
    pub fn output_dist(&self, p: &Distribution) -> Result<Vec<f64>> {
        if p.domain_size() != self.domain_size() {
            return Err(Error::DomainMismatch {
                left: p.domain_size(),
                right: self.domain_size(),
            });
        }
        let mut out = vec![0.0; self.cols()];
        for x in 0..self.domain_size() {
            let px = p.get(x);
            if px == 0.0 {
                continue;
            }
            for (y, &w) in self.row(x).iter().enumerate() {
                out[y] += px * w;
            }
        }
        Ok(out)
    }

    /// Domain relabeling before pairing: row `x` of the result is row
    /// `perm[x]` of `self`. The element order inside `[2k]` is a convention;
    /// this reindexes it so the information matrix can be taken with respect
    /// to any pairing of the domain into consecutive pairs.
    pub fn permute_domain(&self, perm: &[usize]) -> Result<Channel> {
        check_permutation(perm, self.domain_size())?;
        let rows = perm.iter().map(|&x| self.row(x).to_vec()).collect();
        Channel::from_rows(self.k, self.labels.clone(), rows)
    }

    /// Whether the channel satisfies the `rho`-LDP ratio bound
    /// `W(y|x1) <= e^rho W(y|x2)` for all `x1, x2, y`.
    pub fn is_ldp(&self, rho: f64) -> bool {
        if rho <= 0.0 {
            return false;
        }
        let bound = rho.exp();
        for y in 0..self.cols() {
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for x in 0..self.domain_size() {
                let w = self.entry(x, y);
                lo = lo.min(w);
                hi = hi.max(w);
            }
            if hi == 0.0 {
                continue; // unreachable label constrains nothing
            }
            if lo == 0.0 || hi > bound * lo * (1.0 + 1e-12) {
                return false;
            }
        }
        true
    }

    /// Whether the output alphabet fits in `bits` bits.
    pub fn is_b_bit(&self, bits: u32) -> bool {
        if bits >= usize::BITS {
            return true;
        }
        self.cols() <= 1usize << bits
    }
}

/// Structured channel families the protocol runtime can sample in O(1),
/// plus a dense fallback. `to_dense` materializes the matrix form.
#[derive(Clone, Debug)]
pub enum ChannelKind {
    Identity { k: usize },
    Constant { k: usize, label: Label },
    RandomizedResponse { k: usize, rho: f64 },
    PartialErasure { k: usize, eta: f64, x_star: usize },
    LeakyQuery { k: usize, eta: f64, u: Arc<Vec<f64>> },
    Dense(Arc<Channel>),
}

impl ChannelKind {
    pub fn randomized_response(k: usize, rho: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be ≥ 1".into()));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }
        Ok(ChannelKind::RandomizedResponse { k, rho })
    }

    pub fn partial_erasure(k: usize, eta: f64, x_star: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be ≥ 1".into()));
        }
        if !(0.0 < eta && eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
        }
        if x_star >= 2 * k {
            return Err(Error::InvalidParameter(format!(
                "x_star {x_star} outside domain of size {}",
                2 * k
            )));
        }
        Ok(ChannelKind::PartialErasure { k, eta, x_star })
    }

    pub fn leaky_query(k: usize, eta: f64, u: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
        }
        if u.len() != 2 * k {
            return Err(Error::DomainMismatch { left: u.len(), right: 2 * k });
        }
        if let Some((i, &v)) = u.iter().enumerate().find(|&(_, &v)| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidProbability { index: i, value: v });
        }
        Ok(ChannelKind::LeakyQuery { k, eta, u: Arc::new(u) })
    }

    pub fn k(&self) -> usize {
        match self {
            ChannelKind::Identity { k }
            | ChannelKind::Constant { k, .. }
            | ChannelKind::RandomizedResponse { k, .. }
            | ChannelKind::PartialErasure { k, .. }
            | ChannelKind::LeakyQuery { k, .. } => *k,
            ChannelKind::Dense(ch) => ch.k(),
        }
    }

    /// Samples the output for input `x`.
    pub fn emit(&self, x: usize, stream: &mut Substream) -> Label {
        debug_assert!(x < 2 * self.k());
        match self {
            ChannelKind::Identity { .. } => Label::Sym(x as u32),
            ChannelKind::Constant { label, .. } => label.clone(),
            ChannelKind::RandomizedResponse { k, rho } => {
                let d = rho.exp() + (2 * k - 1) as f64;
                let keep = rho.exp() / d;
                let u = stream.next_f64();
                if u < keep {
                    Label::Sym(x as u32)
                } else {
                    let other = (1.0 - keep) / (2 * k - 1) as f64;
                    let mut j = ((u - keep) / other) as usize;
                    j = j.min(2 * k - 2);
                    let y = if j >= x { j + 1 } else { j };
                    Label::Sym(y as u32)
                }
            }
            ChannelKind::PartialErasure { eta, x_star, .. } => {
                if x == *x_star || stream.next_f64() < *eta {
                    Label::Sym(x as u32)
                } else {
                    Label::Bot
                }
            }
            ChannelKind::LeakyQuery { eta, u, .. } => {
                if stream.next_f64() < *eta {
                    Label::Sym(x as u32)
                } else if stream.next_f64() < u[x] {
                    Label::One
                } else {
                    Label::Zero
                }
            }
            ChannelKind::Dense(ch) => ch.apply(x, stream).clone(),
        }
    }

    /// The explicit matrix form.
    pub fn to_dense(&self) -> Result<Channel> {
        let k = self.k();
        let n = 2 * k;
        let syms: Vec<Label> = (0..n as u32).map(Label::Sym).collect();
        match self {
            ChannelKind::Identity { .. } => {
                let rows = (0..n)
                    .map(|x| {
                        let mut r = vec![0.0; n];
                        r[x] = 1.0;
                        r
                    })
                    .collect();
                Channel::from_rows(k, syms, rows)
            }
            ChannelKind::Constant { label, .. } => {
                Channel::from_rows(k, vec![label.clone()], vec![vec![1.0]; n])
            }
            ChannelKind::RandomizedResponse { rho, .. } => {
                let d = rho.exp() + (n - 1) as f64;
                let keep = rho.exp() / d;
                let other = 1.0 / d;
                let rows = (0..n)
                    .map(|x| {
                        let mut r = vec![other; n];
                        r[x] = keep;
                        r
                    })
                    .collect();
                Channel::from_rows(k, syms, rows)
            }
            ChannelKind::PartialErasure { eta, x_star, .. } => {
                let mut labels = syms;
                labels.push(Label::Bot);
                let rows = (0..n)
                    .map(|x| {
                        let mut r = vec![0.0; n + 1];
                        if x == *x_star {
                            r[x] = 1.0;
                        } else {
                            r[x] = *eta;
                            r[n] = 1.0 - *eta;
                        }
                        r
                    })
                    .collect();
                Channel::from_rows(k, labels, rows)
            }
            ChannelKind::LeakyQuery { eta, u, .. } => {
                let mut labels = syms;
                labels.push(Label::One);
                labels.push(Label::Zero);
                let rows = (0..n)
                    .map(|x| {
                        let mut r = vec![0.0; n + 2];
                        r[x] = *eta;
                        r[n] = (1.0 - *eta) * u[x];
                        r[n + 1] = (1.0 - *eta) * (1.0 - u[x]);
                        r
                    })
                    .collect();
                Channel::from_rows(k, labels, rows)
            }
            ChannelKind::Dense(ch) => Ok(ch.as_ref().clone()),
        }
    }
}

/// JSON form of a channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelSpec {
    Rr { k: usize, rho: f64 },
    PartialErasure { k: usize, eta: f64, x_star: usize },
    LeakyQuery { k: usize, eta: f64, u: Vec<f64> },
    Matrix { k: usize, labels: Vec<Label>, rows: Vec<Vec<f64>> },
}

impl ChannelSpec {
    pub fn build(&self) -> Result<Channel> {
        match self {
            ChannelSpec::Rr { k, rho } => Channel::randomized_response(*k, *rho),
            ChannelSpec::PartialErasure { k, eta, x_star } => {
                Channel::partial_erasure(*k, *eta, *x_star)
            }
            ChannelSpec::LeakyQuery { k, eta, u } => Channel::leaky_query(*k, *eta, u),
            ChannelSpec::Matrix { k, labels, rows } => {
                Channel::from_rows(*k, labels.clone(), rows.clone())
            }
        }
    }
}

/// A random channel whose rows are independent flat-Dirichlet draws; used by
/// the verification suites.
pub fn random_channel(k: usize, alphabet: usize, rng: &mut impl rand::Rng) -> Result<Channel> {
    let labels: Vec<Label> = (0..alphabet as u32).map(Label::Sym).collect();
    let rows = (0..2 * k)
        .map(|_| {
            let mut row: Vec<f64> = (0..alphabet)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            // pin the exact sum to 1 so construction never trips the tolerance
            let head: f64 = row[..alphabet - 1].iter().sum();
            row[alphabet - 1] = (1.0 - head).max(0.0);
            row
        })
        .collect();
    Channel::from_rows(k, labels, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, Substream};

    #[test]
    fn identity_apply_is_deterministic() {
        let ch = Channel::identity(2).unwrap();
        let mut s = Substream::derive(0, domain::CHANNEL, 0);
        for x in 0..4 {
            assert_eq!(*ch.apply(x, &mut s), Label::Sym(x as u32));
        }
    }

    #[test]
    fn constant_channel_always_emits_its_label() {
        let ch = Channel::constant(3, Label::Named("c".into())).unwrap();
        let mut s = Substream::derive(0, domain::CHANNEL, 1);
        for x in 0..6 {
            assert_eq!(*ch.apply(x, &mut s), Label::Named("c".into()));
        }
    }

    #[test]
    fn apply_frequencies_match_matrix() {
        let ch = Channel::randomized_response(2, 1.0).unwrap();
        let x = 3;
        let n = 100_000;
        let mut s = Substream::derive(7, domain::CHANNEL, 0);
        let mut counts = vec![0usize; ch.cols()];
        for _ in 0..n {
            let lab = ch.apply(x, &mut s).clone();
            let y = ch.labels().iter().position(|l| *l == lab).unwrap();
            counts[y] += 1;
        }
        for y in 0..ch.cols() {
            let p = ch.entry(x, y);
            let phat = counts[y] as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((phat - p).abs() <= 3.0 * sigma, "y={y}: {phat} vs {p}");
        }
    }

    #[test]
    fn kind_emit_matches_dense_law() {
        let kinds = [
            ChannelKind::randomized_response(2, 0.7).unwrap(),
            ChannelKind::partial_erasure(2, 0.4, 1).unwrap(),
            ChannelKind::leaky_query(2, 0.3, vec![1.0, 0.0, 0.5, 0.25]).unwrap(),
        ];
        for (ki, kind) in kinds.iter().enumerate() {
            let dense = kind.to_dense().unwrap();
            for x in 0..4 {
                let n = 60_000;
                let mut s = Substream::derive(100 + ki as u64, domain::CHANNEL, x as u64);
                let mut counts = vec![0usize; dense.cols()];
                for _ in 0..n {
                    let lab = kind.emit(x, &mut s);
                    let y = dense.labels().iter().position(|l| *l == lab).unwrap();
                    counts[y] += 1;
                }
                for y in 0..dense.cols() {
                    let p = dense.entry(x, y);
                    let phat = counts[y] as f64 / n as f64;
                    let sigma = (p * (1.0 - p) / n as f64).sqrt() + 1e-9;
                    assert!(
                        (phat - p).abs() <= 4.0 * sigma,
                        "kind {ki} x={x} y={y}: {phat} vs {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn output_dist_cases() {
        let u = Distribution::uniform(2).unwrap();
        let id = Channel::identity(2).unwrap();
        assert_eq!(id.output_dist(&u).unwrap(), u.probs());

        let c = Channel::constant(2, Label::One).unwrap();
        assert_eq!(c.output_dist(&u).unwrap(), vec![1.0]);

        // partial erasure under uniform puts (1-eta)(2k-1)/(2k) on ⊥
        let k = 3;
        let eta = 0.25;
        let pe = Channel::partial_erasure(k, eta, 2).unwrap();
        let out = pe.output_dist(&Distribution::uniform(k).unwrap()).unwrap();
        let bot = pe.labels().iter().position(|l| *l == Label::Bot).unwrap();
        let want = (1.0 - eta) * (2 * k - 1) as f64 / (2 * k) as f64;
        assert!((out[bot] - want).abs() < 1e-12);
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn randomized_response_rows() {
        let ch = Channel::randomized_response(1, 3f64.ln()).unwrap();
        assert!((ch.entry(0, 0) - 0.75).abs() < 1e-12);
        assert!((ch.entry(0, 1) - 0.25).abs() < 1e-12);
        assert!((ch.entry(1, 1) - 0.75).abs() < 1e-12);
        // rho -> 0 limit: rows become uniform
        let flat = Channel::randomized_response(2, 1e-12).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert!((flat.entry(x, y) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ldp_predicate() {
        let rho = 0.8;
        let rr = Channel::randomized_response(3, rho).unwrap();
        assert!(rr.is_ldp(rho));
        assert!(!rr.is_ldp(rho - 0.01));
        assert!(!Channel::identity(2).unwrap().is_ldp(50.0));
        assert!(Channel::constant(2, Label::Zero).unwrap().is_ldp(0.01));
    }

    #[test]
    fn b_bit_predicate() {
        let id = Channel::identity(4).unwrap(); // 8 outputs
        assert!(id.is_b_bit(3));
        assert!(!id.is_b_bit(2));
        assert!(Channel::constant(4, Label::Bot).unwrap().is_b_bit(1));
    }

    #[test]
    fn partial_erasure_structure() {
        let ch = Channel::partial_erasure(2, 0.6, 1).unwrap();
        // the designated symbol is passed exactly
        assert_eq!(ch.entry(1, 1), 1.0);
        // eta = 1 reduces to the identity on symbols (⊥ column all zero)
        let full = Channel::partial_erasure(2, 1.0, 0).unwrap();
        for x in 0..4 {
            assert_eq!(full.entry(x, x), 1.0);
            assert_eq!(full.entry(x, 4), 0.0);
        }
    }

    #[test]
    fn leaky_query_structure() {
        // u as a set indicator makes 1* a membership response
        let ch = Channel::leaky_query(2, 0.5, &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let one = ch.labels().iter().position(|l| *l == Label::One).unwrap();
        assert_eq!(ch.entry(0, one), 0.5);
        assert_eq!(ch.entry(1, one), 0.0);
        // eta = 0 with all-ones query collapses to a constant channel on 1*
        let c = Channel::leaky_query(1, 0.0, &[1.0, 1.0]).unwrap();
        let one = c.labels().iter().position(|l| *l == Label::One).unwrap();
        for x in 0..2 {
            assert_eq!(c.entry(x, one), 1.0);
        }
    }

    #[test]
    fn construction_rejects_bad_matrices() {
        let labels = vec![Label::Sym(0), Label::Sym(1)];
        assert!(Channel::from_rows(1, labels.clone(), vec![vec![0.7, 0.2], vec![0.5, 0.5]])
            .is_err());
        assert!(Channel::from_rows(
            1,
            vec![Label::Sym(0), Label::Sym(0)],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]]
        )
        .is_err());
        assert!(Channel::from_rows(1, labels, vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn channel_spec_json_round_trip() {
        let spec: ChannelSpec =
            serde_json::from_str(r#"{"type":"partial_erasure","k":2,"eta":0.5,"x_star":3}"#)
                .unwrap();
        let ch = spec.build().unwrap();
        assert_eq!(ch.cols(), 5);
        let text = serde_json::to_string(&spec).unwrap();
        let again: ChannelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(again.build().unwrap(), ch);

        let m: ChannelSpec = serde_json::from_str(
            r#"{"type":"matrix","k":1,"labels":["a","⊥"],"rows":[[0.5,0.5],[0.25,0.75]]}"#,
        )
        .unwrap();
        let ch = m.build().unwrap();
        assert_eq!(ch.labels()[1], Label::Bot);
        assert_eq!(ch.labels()[0], Label::Named("a".into()));
    }
}
