//! NOMA rate algebra: SINRs under a SIC decoding order, achievable rates,
//! feasibility checks, and the tight slack point of the rate epigraph.
//!
//! Users are indexed from zero. `order.rank(k)` is the position of user `k` in
//! the decoding sequence; a user decodes (and cancels) the signals of every
//! user ranked before it, and sees every user ranked after it as interference.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Channel = DVector<Complex64>;

/// A SIC decoding order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DecodingOrder {
    /// Users listed in the order their signals are decoded.
    sequence: Vec<usize>,
    rank: Vec<usize>,
}

impl TryFrom<Vec<usize>> for DecodingOrder {
    type Error = Error;

    fn try_from(sequence: Vec<usize>) -> Result<Self> {
        Self::new(sequence)
    }
}

impl From<DecodingOrder> for Vec<usize> {
    fn from(order: DecodingOrder) -> Self {
        order.sequence
    }
}

impl DecodingOrder {
    /// Build from a decoding sequence; must be a permutation of `0..K`.
    pub fn new(sequence: Vec<usize>) -> Result<Self> {
        let k = sequence.len();
        let mut rank = vec![usize::MAX; k];
        for (pos, &user) in sequence.iter().enumerate() {
            if user >= k || rank[user] != usize::MAX {
                return Err(Error::InvalidInput(format!(
                    "{sequence:?} is not a permutation of 0..{k}"
                )));
            }
            rank[user] = pos;
        }
        Ok(Self { sequence, rank })
    }

    pub fn identity(k: usize) -> Self {
        Self::new((0..k).collect()).expect("identity is a permutation")
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    /// Position `s(k)` of user `k` in the decoding sequence.
    pub fn rank(&self, k: usize) -> usize {
        self.rank[k]
    }

    pub fn num_users(&self) -> usize {
        self.sequence.len()
    }

    /// Users decoded after `k`, i.e. the interferers in `k`'s own SINR.
    pub fn later(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.sequence[self.rank[k] + 1..].iter().copied()
    }

    /// Whether the pair `(k, i)` carries a rate variable: `s(k) <= s(i)`.
    pub fn needs_pair(&self, k: usize, i: usize) -> bool {
        self.rank[k] <= self.rank[i]
    }

    /// All `(k, i)` with `s(k) <= s(i)`, in user-index order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.num_users();
        (0..n)
            .flat_map(|k| (0..n).map(move |i| (k, i)))
            .filter(|&(k, i)| self.needs_pair(k, i))
            .collect()
    }
}

/// Beamforming vectors `w_k`, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub vectors: Vec<DVector<Complex64>>,
}

impl BeamformerSet {
    pub fn new(vectors: Vec<DVector<Complex64>>) -> Self {
        Self { vectors }
    }

    pub fn total_power(&self) -> f64 {
        self.vectors.iter().map(|w| w.norm_squared()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            vectors: self
                .vectors
                .iter()
                .map(|w| w * Complex64::new(c, 0.0))
                .collect(),
        }
    }
}

/// Own-signal and cross-decoding rates in bps/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NomaRates {
    /// `R_{k->k}` for every user.
    pub own: Vec<f64>,
    /// `cross[k][i] = R_{k->i}` whenever `s(k) < s(i)`.
    pub cross: Vec<Vec<Option<f64>>>,
}

impl NomaRates {
    pub fn sum_rate(&self) -> f64 {
        self.own.iter().sum()
    }
}

/// Slack variables of the rate epigraph: `1/alpha_{k,i} <= |h_i^H w_k|^2`,
/// `beta_{k,i} >= interference + noise`. Entries for pairs with
/// `s(k) > s(i)` are unused and set to `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackPoint {
    #[serde(with = "unused_as_null")]
    pub alpha: Vec<Vec<f64>>,
    #[serde(with = "unused_as_null")]
    pub beta: Vec<Vec<f64>>,
}

/// Writes unused `+inf` entries as `null` and reads them back.
mod unused_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = m
            .iter()
            .map(|r| r.iter().map(|&v| v.is_finite().then_some(v)).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect())
            .collect())
    }
}

/// `log2(1 + 1/(alpha beta))`.
pub fn slack_rate(alpha: f64, beta: f64) -> f64 {
    (1.0 / (alpha * beta)).ln_1p() / std::f64::consts::LN_2
}

pub fn rate_from_sinr(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

/// `|h^H w|^2`.
pub fn received_power(h: &Channel, w: &DVector<Complex64>) -> f64 {
    h.dotc(w).norm_sqr()
}

/// Interference at user `i` while decoding user `k`'s signal.
pub fn interference(
    i: usize,
    k: usize,
    channels: &[Channel],
    bf: &BeamformerSet,
    order: &DecodingOrder,
) -> f64 {
    order
        .later(k)
        .map(|j| received_power(&channels[i], &bf.vectors[j]))
        .sum()
}

fn check_dims(channels: &[Channel], bf: &BeamformerSet, order: &DecodingOrder, sigma2: &[f64]) {
    debug_assert_eq!(channels.len(), bf.vectors.len());
    debug_assert_eq!(channels.len(), order.num_users());
    debug_assert_eq!(channels.len(), sigma2.len());
}

/// SINR of user `k` decoding its own signal.
pub fn sinr_own(
    k: usize,
    channels: &[Channel],
    bf: &BeamformerSet,
    order: &DecodingOrder,
    sigma2: &[f64],
) -> f64 {
    check_dims(channels, bf, order, sigma2);
    let signal = received_power(&channels[k], &bf.vectors[k]);
    signal / (interference(k, k, channels, bf, order) + sigma2[k])
}

/// SINR of user `kbar` decoding user `k`'s signal; requires `s(k) < s(kbar)`.
pub fn sinr_cross(
    k: usize,
    kbar: usize,
    channels: &[Channel],
    bf: &BeamformerSet,
    order: &DecodingOrder,
    sigma2: &[f64],
) -> Result<f64> {
    if order.rank(k) >= order.rank(kbar) {
        return Err(Error::Contract(format!(
            "cross SINR needs user {k} decoded before user {kbar}"
        )));
    }
    check_dims(channels, bf, order, sigma2);
    let signal = received_power(&channels[kbar], &bf.vectors[k]);
    Ok(signal / (interference(kbar, k, channels, bf, order) + sigma2[kbar]))
}

pub fn rates(
    channels: &[Channel],
    bf: &BeamformerSet,
    order: &DecodingOrder,
    sigma2: &[f64],
) -> NomaRates {
    let n = channels.len();
    let own = (0..n)
        .map(|k| rate_from_sinr(sinr_own(k, channels, bf, order, sigma2)))
        .collect();
    let cross = (0..n)
        .map(|k| {
            (0..n)
                .map(|i| {
                    (order.rank(k) < order.rank(i)).then(|| {
                        rate_from_sinr(
                            sinr_cross(k, i, channels, bf, order, sigma2).expect("ordered pair"),
                        )
                    })
                })
                .collect()
        })
        .collect();
    NomaRates { own, cross }
}

/// Constraint violations found by [`sic_feasible`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `(k, kbar, R_{k->k} - R_{k->kbar})` for violated SIC inequalities.
    pub sic_violations: Vec<(usize, usize, f64)>,
    /// `(k, R_min - R_{k->k})` for violated QoS constraints.
    pub qos_violations: Vec<(usize, f64)>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.sic_violations.is_empty() && self.qos_violations.is_empty()
    }
}

/// Check `R_{k->k} <= R_{k->kbar}` for `s(k) < s(kbar)` and `R_{k->k} >= rmin`.
pub fn sic_feasible(
    r: &NomaRates,
    order: &DecodingOrder,
    rmin: f64,
    tol: f64,
) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    for k in 0..r.own.len() {
        for kbar in order.later(k) {
            let cross = r.cross[k][kbar].expect("rates computed under this order");
            let gap = r.own[k] - cross;
            if gap > tol {
                report.sic_violations.push((k, kbar, gap));
            }
        }
        if rmin - r.own[k] > tol {
            report.qos_violations.push((k, rmin - r.own[k]));
        }
    }
    report
}

/// Tight slack point at the given primal state.
pub fn slack_from_primal(
    channels: &[Channel],
    bf: &BeamformerSet,
    order: &DecodingOrder,
    sigma2: &[f64],
) -> Result<SlackPoint> {
    let n = channels.len();
    let mut alpha = vec![vec![f64::INFINITY; n]; n];
    let mut beta = vec![vec![f64::INFINITY; n]; n];
    for (k, i) in order.pairs() {
        let power = received_power(&channels[i], &bf.vectors[k]);
        if !(power > 0.0) {
            return Err(Error::DegenerateChannel {
                beamformer: k,
                user: i,
            });
        }
        alpha[k][i] = 1.0 / power;
        beta[k][i] = interference(i, k, channels, bf, order) + sigma2[i];
    }
    Ok(SlackPoint { alpha, beta })
}

/// All `K!` decoding orders in lexicographic order of their sequences.
pub fn enumerate_orders(k: usize, cap: usize) -> Result<Vec<DecodingOrder>> {
    if k > cap {
        return Err(Error::Config(format!(
            "enumerating orders for K = {k} exceeds the cap of {cap}"
        )));
    }
    fn permute(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for u in 0..used.len() {
            if !used[u] {
                used[u] = true;
                prefix.push(u);
                permute(prefix, used, out);
                prefix.pop();
                used[u] = false;
            }
        }
    }
    let mut out = Vec::new();
    permute(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    Ok(out
        .into_iter()
        .map(|s| DecodingOrder::new(s).expect("permutation"))
        .collect())
}

/// Weaker users (smaller `||h_k||`) are decoded first; ties keep index order.
pub fn heuristic_order(channels: &[Channel]) -> DecodingOrder {
    let mut seq: Vec<usize> = (0..channels.len()).collect();
    seq.sort_by(|&a, &b| {
        channels[a]
            .norm()
            .total_cmp(&channels[b].norm())
            .then(a.cmp(&b))
    });
    DecodingOrder::new(seq).expect("sorted indices form a permutation")
}
