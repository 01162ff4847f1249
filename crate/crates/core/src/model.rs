//! Feedback matrix, per-receiver packet sets and session configuration.
//!
//! Receivers and packets are numbered from 1, as `R_1..R_M` and `P_1..P_N`.
//! Each matrix row is stored as a packed bitset, with bit `j - 1` set when
//! packet `P_j` is still missing at that receiver.

use std::fmt;
use std::str::FromStr;

use crate::error::{IdncError, Result};

/// Whether the sender starts with an uncoded pass over all packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TransmissionSetting {
    /// Coded transmissions from the first slot.
    #[default]
    SinglePhase,
    /// `N` uncoded transmissions in index order, then coded recovery.
    TwoPhase,
}

impl fmt::Display for TransmissionSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransmissionSetting::SinglePhase => f.write_str("single"),
            TransmissionSetting::TwoPhase => f.write_str("two"),
        }
    }
}

impl FromStr for TransmissionSetting {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "single" | "single-phase" => Ok(TransmissionSetting::SinglePhase),
            "two" | "two-phase" => Ok(TransmissionSetting::TwoPhase),
            other => Err(IdncError::Parse(format!("unknown transmission setting `{other}`"))),
        }
    }
}

/// Parameters of one broadcast session and its Monte Carlo batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub num_receivers: usize,
    pub num_packets: usize,
    /// Per-receiver erasure probability, each in `[0, 1)`.
    pub erasure_probs: Vec<f64>,
    /// Exponent applied to the delivery rate in vertex priorities.
    pub alpha: u32,
    pub setting: TransmissionSetting,
    pub master_seed: u64,
    pub num_runs: usize,
    /// Starting feedback matrix; `None` means every packet is missing everywhere.
    pub initial: Option<FeedbackMatrix>,
}

impl SessionConfig {
    pub const DEFAULT_ALPHA: u32 = 2;

    pub fn new(num_receivers: usize, num_packets: usize, erasure_probs: Vec<f64>) -> Self {
        SessionConfig {
            num_receivers,
            num_packets,
            erasure_probs,
            alpha: Self::DEFAULT_ALPHA,
            setting: TransmissionSetting::SinglePhase,
            master_seed: 0,
            num_runs: 2000,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_receivers == 0 || self.num_packets == 0 {
            return Err(IdncError::InvalidConfig(
                "receiver and packet counts must be positive".into(),
            ));
        }
        if self.num_runs == 0 {
            return Err(IdncError::InvalidConfig("num_runs must be positive".into()));
        }
        if self.erasure_probs.len() != self.num_receivers {
            return Err(IdncError::InvalidConfig(format!(
                "{} erasure probabilities for {} receivers",
                self.erasure_probs.len(),
                self.num_receivers
            )));
        }
        validate_erasures(&self.erasure_probs)?;
        if let Some(f) = &self.initial {
            if f.num_receivers() != self.num_receivers || f.num_packets() != self.num_packets {
                return Err(IdncError::InvalidConfig(format!(
                    "initial matrix is {}x{}, config says {}x{}",
                    f.num_receivers(),
                    f.num_packets(),
                    self.num_receivers,
                    self.num_packets
                )));
            }
        }
        Ok(())
    }

    /// The matrix the first slot starts from.
    pub fn initial_matrix(&self) -> FeedbackMatrix {
        self.initial
            .clone()
            .unwrap_or_else(|| FeedbackMatrix::all_missing(self.num_receivers, self.num_packets))
    }

    pub fn mean_erasure(&self) -> f64 {
        if self.erasure_probs.is_empty() {
            return 0.0;
        }
        self.erasure_probs.iter().sum::<f64>() / self.erasure_probs.len() as f64
    }
}

/// Checks that every erasure probability lies in `[0, 1)`.
pub fn validate_erasures(eps: &[f64]) -> Result<()> {
    for (i, &e) in eps.iter().enumerate() {
        if !(0.0..1.0).contains(&e) {
            return Err(IdncError::BadErasure { receiver: i + 1, eps: e });
        }
    }
    Ok(())
}

/// The `M x N` state feedback matrix: entry `(i, j)` is 1 iff `P_j` is missing at `R_i`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FeedbackMatrix {
    m: usize,
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl FeedbackMatrix {
    /// Matrix with every packet received everywhere.
    pub fn all_received(m: usize, n: usize) -> Self {
        let words_per_row = n.div_ceil(64).max(1);
        FeedbackMatrix { m, n, words_per_row, bits: vec![0; m * words_per_row] }
    }

    /// Matrix with every packet missing everywhere.
    pub fn all_missing(m: usize, n: usize) -> Self {
        let mut f = Self::all_received(m, n);
        for i in 0..m {
            for j in 0..n {
                f.set_bit(i, j);
            }
        }
        f
    }

    /// Builds a matrix from rows of 0/1 entries.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(IdncError::InvalidMatrix("no rows".into()));
        }
        let n = rows[0].as_ref().len();
        if n == 0 {
            return Err(IdncError::InvalidMatrix("no columns".into()));
        }
        let mut f = Self::all_received(m, n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(IdncError::InvalidMatrix(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => f.set_bit(i, j),
                    other => {
                        return Err(IdncError::InvalidMatrix(format!(
                            "entry ({}, {}) is {other}, expected 0 or 1",
                            i + 1,
                            j + 1
                        )))
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn num_receivers(&self) -> usize {
        self.m
    }

    pub fn num_packets(&self) -> usize {
        self.n
    }

    pub(crate) fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    /// Packed missing-set of receiver `i` (0-based), bit `j` for packet `j + 1`.
    pub(crate) fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    #[inline]
    pub(crate) fn bit(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub(crate) fn set_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    pub(crate) fn clear_bit(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] &= !(1 << (j % 64));
    }

    fn check_receiver(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.m {
            return Err(IdncError::ReceiverOutOfRange { index: i, max: self.m });
        }
        Ok(())
    }

    fn check_packet(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.n {
            return Err(IdncError::PacketOutOfRange { index: j, max: self.n });
        }
        Ok(())
    }

    /// Entry `f_{i,j}` with 1-based indices.
    pub fn is_missing(&self, receiver: usize, packet: usize) -> bool {
        receiver >= 1
            && receiver <= self.m
            && packet >= 1
            && packet <= self.n
            && self.bit(receiver - 1, packet - 1)
    }

    /// 1-based indices of the packets missing at receiver `i` (0-based), ascending.
    pub(crate) fn missing_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(i).iter().enumerate().flat_map(|(w, &word)| {
            BitIter(word).map(move |b| w * 64 + b + 1)
        })
    }

    /// `W_i` for 0-based receiver `i`.
    #[inline]
    pub(crate) fn wants_len(&self, i: usize) -> usize {
        self.row_words(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    /// First and second missing packet (1-based) of 0-based receiver `i`.
    pub(crate) fn first_two_missing(&self, i: usize) -> (Option<usize>, Option<usize>) {
        let mut it = self.missing_iter(i);
        (it.next(), it.next())
    }

    /// `U_i` for 0-based receiver `i`.
    pub(crate) fn undelivered_len(&self, i: usize) -> usize {
        match self.first_two_missing(i).0 {
            Some(first) => self.n - first + 1,
            None => 0,
        }
    }

    /// `L_i` for 0-based receiver `i`.
    pub(crate) fn potential_len(&self, i: usize) -> usize {
        match self.first_two_missing(i) {
            (Some(first), Some(second)) => second - first,
            (Some(first), None) => self.n + 1 - first,
            _ => 0,
        }
    }

    /// The four packet sets of receiver `receiver` (1-based).
    pub fn receiver_view(&self, receiver: usize) -> Result<ReceiverView> {
        self.check_receiver(receiver)?;
        let i = receiver - 1;
        let wants: Vec<usize> = self.missing_iter(i).collect();
        let has: Vec<usize> = (1..=self.n).filter(|&j| !self.bit(i, j - 1)).collect();
        let (undelivered, potential) = match (wants.first(), wants.get(1)) {
            (Some(&first), second) => {
                let stop = second.copied().unwrap_or(self.n + 1);
                ((first..=self.n).collect(), (first..stop).collect())
            }
            (None, _) => (Vec::new(), Vec::new()),
        };
        Ok(ReceiverView { receiver, has, wants, undelivered, potential })
    }

    /// Receivers (1-based) that still miss at least one packet.
    pub fn wanting_receivers(&self) -> Vec<usize> {
        (0..self.m).filter(|&i| self.wants_len(i) > 0).map(|i| i + 1).collect()
    }

    /// Returns the matrix after one slot: each targeted receiver whose outcome
    /// is `true` decodes its targeted packet. `targets` holds 1-based
    /// `(receiver, packet)` pairs; `received[i - 1]` is the outcome at `R_i`.
    pub fn apply_reception(&self, targets: &[(usize, usize)], received: &[bool]) -> Result<Self> {
        if received.len() != self.m {
            return Err(IdncError::OutcomeLength { got: received.len(), expected: self.m });
        }
        let mut next = self.clone();
        for &(i, j) in targets {
            self.check_receiver(i)?;
            self.check_packet(j)?;
            if !self.bit(i - 1, j - 1) {
                return Err(IdncError::AlreadyHas { receiver: i, packet: j });
            }
            if received[i - 1] {
                next.clear_bit(i - 1, j - 1);
            }
        }
        Ok(next)
    }

    /// True once every receiver holds every packet.
    pub fn is_complete(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Total number of missing entries.
    pub fn count_missing(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Row-major bit encoding with `f_{1,1}` as the most significant of `M*N` bits.
    pub fn state_id(&self) -> Result<u64> {
        let total = self.m * self.n;
        if total > 64 {
            return Err(IdncError::StateIdOverflow { m: self.m, n: self.n });
        }
        let mut id = 0u64;
        for i in 0..self.m {
            for j in 0..self.n {
                id = (id << 1) | u64::from(self.bit(i, j));
            }
        }
        Ok(id)
    }

    /// Inverse of [`FeedbackMatrix::state_id`].
    pub fn from_state_id(m: usize, n: usize, id: u64) -> Result<Self> {
        let total = m * n;
        if total > 64 {
            return Err(IdncError::StateIdOverflow { m, n });
        }
        if total < 64 && id >> total != 0 {
            return Err(IdncError::InvalidMatrix(format!("state id {id} exceeds {total} bits")));
        }
        let mut f = Self::all_received(m, n);
        for i in 0..m {
            for j in 0..n {
                let shift = total - 1 - (i * n + j);
                if id >> shift & 1 == 1 {
                    f.set_bit(i, j);
                }
            }
        }
        Ok(f)
    }

    /// Vector `u(s)` of undelivered counts.
    pub fn undelivered_vector(&self) -> Vec<usize> {
        (0..self.m).map(|i| self.undelivered_len(i)).collect()
    }

    /// Vector `w(s)` of wants counts.
    pub fn wants_vector(&self) -> Vec<usize> {
        (0..self.m).map(|i| self.wants_len(i)).collect()
    }
}

impl fmt::Debug for FeedbackMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeedbackMatrix[")?;
        for i in 0..self.m {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                write!(f, "{}", u8::from(self.bit(i, j)))?;
            }
        }
        write!(f, "]")
    }
}

/// Text form: `M` lines of `N` space-separated 0/1 digits.
impl fmt::Display for FeedbackMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.m {
            for j in 0..self.n {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{}", u8::from(self.bit(i, j)))?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

impl FromStr for FeedbackMatrix {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(IdncError::Parse(format!(
                        "line {}: expected 0 or 1, got `{other}`",
                        lineno + 1
                    ))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        FeedbackMatrix::from_rows(&rows)
    }
}

/// Has, Wants, Undelivered and Potential sets of one receiver (1-based packet indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverView {
    pub receiver: usize,
    pub has: Vec<usize>,
    /// Missing packets in ascending order; the first is the next needed packet.
    pub wants: Vec<usize>,
    /// From the next needed packet through `P_N`.
    pub undelivered: Vec<usize>,
    /// Released to the application once the next needed packet decodes.
    pub potential: Vec<usize>,
}

impl ReceiverView {
    pub fn has_len(&self) -> usize {
        self.has.len()
    }

    pub fn wants_len(&self) -> usize {
        self.wants.len()
    }

    pub fn undelivered_len(&self) -> usize {
        self.undelivered.len()
    }

    pub fn potential_len(&self) -> usize {
        self.potential.len()
    }

    pub fn next_needed(&self) -> Option<usize> {
        self.wants.first().copied()
    }
}

/// Iterates set bit positions of a word, lowest first.
pub(crate) struct BitIter(pub u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> FeedbackMatrix {
        FeedbackMatrix::from_rows(&[[1, 0, 1, 0, 0, 0], [0, 0, 1, 1, 0, 1]]).unwrap()
    }

    #[test]
    fn example1_receiver_sets() {
        let f = example1();
        let r1 = f.receiver_view(1).unwrap();
        assert_eq!(r1.wants, vec![1, 3]);
        assert_eq!(r1.undelivered, (1..=6).collect::<Vec<_>>());
        assert_eq!(r1.potential, vec![1, 2]);
        assert_eq!((r1.undelivered_len(), r1.potential_len()), (6, 2));

        let r2 = f.receiver_view(2).unwrap();
        assert_eq!(r2.wants, vec![3, 4, 6]);
        assert_eq!(r2.undelivered, vec![3, 4, 5, 6]);
        assert_eq!(r2.potential, vec![3]);
        assert_eq!(r2.has, vec![1, 2, 5]);
    }

    #[test]
    fn completed_receiver_has_empty_sets() {
        let f = FeedbackMatrix::from_rows(&[[0, 0, 0], [1, 0, 1]]).unwrap();
        let v = f.receiver_view(1).unwrap();
        assert!(v.wants.is_empty() && v.undelivered.is_empty() && v.potential.is_empty());
        assert_eq!(v.has_len(), 3);
        assert_eq!(f.undelivered_len(0), 0);
        assert_eq!(f.potential_len(0), 0);
    }

    #[test]
    fn receiver_index_out_of_range() {
        let f = example1();
        assert!(matches!(f.receiver_view(0), Err(IdncError::ReceiverOutOfRange { .. })));
        assert!(matches!(f.receiver_view(3), Err(IdncError::ReceiverOutOfRange { .. })));
    }

    #[test]
    fn wanting_receivers_examples() {
        assert_eq!(example1().wanting_receivers(), vec![1, 2]);
        assert!(FeedbackMatrix::all_received(3, 4).wanting_receivers().is_empty());
        assert_eq!(FeedbackMatrix::all_missing(3, 4).wanting_receivers(), vec![1, 2, 3]);
    }

    #[test]
    fn apply_reception_example_matrix() {
        let f = FeedbackMatrix::from_rows(&[[1, 0, 1, 0], [0, 0, 1, 1]]).unwrap();
        let targets = [(1, 1), (2, 4)];
        let both = f.apply_reception(&targets, &[true, true]).unwrap();
        assert_eq!(both, FeedbackMatrix::from_rows(&[[0, 0, 1, 0], [0, 0, 1, 0]]).unwrap());
        let lost = f.apply_reception(&targets, &[false, false]).unwrap();
        assert_eq!(lost, f);
        let none = f.apply_reception(&[], &[true, true]).unwrap();
        assert_eq!(none, f);
    }

    #[test]
    fn apply_reception_rejects_held_packet() {
        let f = FeedbackMatrix::from_rows(&[[1, 0, 1, 0], [0, 0, 1, 1]]).unwrap();
        let err = f.apply_reception(&[(1, 2)], &[true, true]).unwrap_err();
        assert!(matches!(err, IdncError::AlreadyHas { receiver: 1, packet: 2 }));
    }

    #[test]
    fn completion() {
        assert!(FeedbackMatrix::all_received(2, 2).is_complete());
        assert!(!example1().is_complete());
        let single = FeedbackMatrix::from_rows(&[[1, 0], [0, 0]]).unwrap();
        assert!(!single.is_complete());
    }

    #[test]
    fn text_round_trip() {
        let f = example1();
        let text = f.to_string();
        assert_eq!(text, "1 0 1 0 0 0\n0 0 1 1 0 1\n");
        assert_eq!(text.parse::<FeedbackMatrix>().unwrap(), f);
        assert!("1 0\n1".parse::<FeedbackMatrix>().is_err());
        assert!("1 2".parse::<FeedbackMatrix>().is_err());
    }

    #[test]
    fn state_id_is_row_major_msb_first() {
        let f = FeedbackMatrix::from_rows(&[[1, 0], [0, 1]]).unwrap();
        assert_eq!(f.state_id().unwrap(), 0b1001);
        assert_eq!(FeedbackMatrix::from_state_id(2, 2, 0b1001).unwrap(), f);
        assert!(FeedbackMatrix::all_missing(9, 8).state_id().is_err());
    }

    #[test]
    fn wide_rows_span_words() {
        let mut rows = vec![vec![0u8; 130]];
        rows[0][64] = 1;
        rows[0][129] = 1;
        let f = FeedbackMatrix::from_rows(&rows).unwrap();
        let v = f.receiver_view(1).unwrap();
        assert_eq!(v.wants, vec![65, 130]);
        assert_eq!(v.undelivered_len(), 66);
        assert_eq!(v.potential_len(), 65);
    }

    #[test]
    fn config_validation() {
        let mut c = SessionConfig::new(2, 3, vec![0.1, 0.2]);
        assert!(c.validate().is_ok());
        c.erasure_probs = vec![0.1, 1.0];
        assert!(matches!(c.validate(), Err(IdncError::BadErasure { receiver: 2, .. })));
        c.erasure_probs = vec![0.1];
        assert!(c.validate().is_err());
    }
}
