//! Small pure-state qubit engine for the EPR measurement scenario, plus the
//! relation event log that tracks which subsystems are related at each tick.
//!
//! Conventions: qubit 0 is the least significant bit of a basis index. Spin up
//! is `|0>`, spin down is `|1>`. The apparatus pointer states are
//! `|+> = (|0> + |1>) / sqrt 2` and `|-> = (|0> - |1>) / sqrt 2`.
//!
//! Two subsystems count as related when their quantum mutual information
//! exceeds a threshold. Negativity is reported alongside but not used as the
//! predicate: after the measurement interaction the three-party state has zero
//! pairwise negativity everywhere while every pair still shares `ln 2` of
//! mutual information.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub const MAX_QUBITS: usize = 12;

/// Default relation threshold on mutual information, in nats.
pub const DEFAULT_EPSILON: f64 = 1e-9;

const NORM_TOL: f64 = 1e-12;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Subsystem indices of the EPR scenario.
pub const ELECTRON_1: usize = 0;
pub const ELECTRON_2: usize = 1;
pub const APPARATUS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntangleError {
    #[error("at most {MAX_QUBITS} qubits are supported, got {0}")]
    TooManyQubits(usize),
    #[error("expected {expected} amplitudes, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("qubit {qubit} out of range for {n} qubits")]
    InvalidQubit { qubit: usize, n: usize },
    #[error("qubits must be distinct, got {0} twice")]
    SameQubit(usize),
    #[error("apparatus qubit not in |0> (weight {0:e} on |1>)")]
    ApparatusNotInitialized(f64),
    #[error("subset must be non-empty with distinct valid qubits")]
    InvalidSubset,
    #[error("after-state tick {after} does not follow before-state tick {before}")]
    TickMismatch { before: u64, after: u64 },
    #[error("states have different qubit counts")]
    QubitCountMismatch,
    #[error("relation ({a}, {c}) appeared at tick {tick} with no related witness")]
    LocalityViolation { a: usize, c: usize, tick: u64 },
}

pub type Result<T> = std::result::Result<T, EntangleError>;

/// Unit-norm state of up to [`MAX_QUBITS`] qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
    tick: u64,
}

impl PureState {
    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(EntangleError::TooManyQubits(n_qubits));
        }
        let expected = 1 << n_qubits;
        if amplitudes.len() != expected {
            return Err(EntangleError::WrongLength {
                expected,
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(EntangleError::NotNormalized(norm));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
            tick: 0,
        })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits > MAX_QUBITS {
            return Err(EntangleError::TooManyQubits(n_qubits));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        *amplitudes
            .get_mut(index)
            .ok_or(EntangleError::InvalidSubset)? = Complex64::new(1.0, 0.0);
        Ok(Self {
            n_qubits,
            amplitudes,
            tick: 0,
        })
    }

    pub fn with_tick(mut self, tick: u64) -> Self {
        self.tick = tick;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q < self.n_qubits {
            Ok(())
        } else {
            Err(EntangleError::InvalidQubit {
                qubit: q,
                n: self.n_qubits,
            })
        }
    }

    /// Applies a single-qubit gate `[[a, b], [c, d]]` to qubit `q`.
    fn apply_single(&mut self, q: usize, gate: [[Complex64; 2]; 2]) {
        let bit = 1 << q;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let (lo, hi) = (self.amplitudes[i], self.amplitudes[i | bit]);
                self.amplitudes[i] = gate[0][0] * lo + gate[0][1] * hi;
                self.amplitudes[i | bit] = gate[1][0] * lo + gate[1][1] * hi;
            }
        }
    }

    /// Phase flip on basis states where both qubits are 1.
    fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = (1 << a) | (1 << b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }
}

fn hadamard() -> [[Complex64; 2]; 2] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// Two electrons in the singlet with the apparatus ready:
/// `(|up down> - |down up>) |0> / sqrt 2`.
pub fn make_epr_with_apparatus() -> PureState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amplitudes = vec![ZERO; 8];
    // e1 up, e2 down: bits (0, 1, 0)
    amplitudes[0b010] = Complex64::new(h, 0.0);
    // e1 down, e2 up: bits (1, 0, 0)
    amplitudes[0b001] = Complex64::new(-h, 0.0);
    PureState {
        n_qubits: 3,
        amplitudes,
        tick: 0,
    }
}

/// Local interaction between an electron and a ready apparatus:
/// `|up>|0> -> |up>|+>`, `|down>|0> -> |down>|->`.
///
/// Realized as a Hadamard on the apparatus followed by a controlled phase
/// flip, which is unitary on the whole space. Advances the tick by one.
pub fn apply_measurement_interaction(
    s: &PureState,
    electron: usize,
    apparatus: usize,
) -> Result<PureState> {
    s.check_qubit(electron)?;
    s.check_qubit(apparatus)?;
    if electron == apparatus {
        return Err(EntangleError::SameQubit(electron));
    }
    let bit = 1 << apparatus;
    let excited: f64 = s
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| i & bit != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    if excited.sqrt() > NORM_TOL {
        return Err(EntangleError::ApparatusNotInitialized(excited));
    }
    let mut next = s.clone();
    next.apply_single(apparatus, hadamard());
    next.apply_cz(electron, apparatus);
    next.tick += 1;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Plus => "+",
            Outcome::Minus => "-",
        })
    }
}

/// Born probabilities of reading `+` and `-` on qubit `q`.
pub fn pointer_probabilities(s: &PureState, q: usize) -> Result<(f64, f64)> {
    s.check_qubit(q)?;
    let mut rotated = s.clone();
    rotated.apply_single(q, hadamard());
    let bit = 1 << q;
    let (mut plus, mut minus) = (0.0, 0.0);
    for (i, a) in rotated.amplitudes.iter().enumerate() {
        if i & bit == 0 {
            plus += a.norm_sqr();
        } else {
            minus += a.norm_sqr();
        }
    }
    Ok((plus, minus))
}

/// Projective measurement of qubit `q` in the `+/-` basis. The outcome is
/// drawn by inverse-CDF sampling of one uniform variate, so a zero-weight
/// branch is never selected. Advances the tick by one.
pub fn collapse<R: Rng + ?Sized>(
    s: &PureState,
    q: usize,
    rng: &mut R,
) -> Result<(Outcome, PureState)> {
    let (plus, minus) = pointer_probabilities(s, q)?;
    let u: f64 = rng.random::<f64>() * (plus + minus);
    let outcome = if u < plus || minus == 0.0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    Ok((outcome, project(s, q, outcome)))
}

/// [`collapse`] with a fresh generator seeded from `seed`.
pub fn collapse_seeded(s: &PureState, q: usize, seed: u64) -> Result<(Outcome, PureState)> {
    collapse(s, q, &mut seeded_rng(seed))
}

/// The generator behind every seeded stochastic operation: ChaCha20, a
/// counter-based stream cipher whose output is fixed across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Renormalized projection of qubit `q` onto the pointer state `outcome`.
pub fn project(s: &PureState, q: usize, outcome: Outcome) -> PureState {
    let mut next = s.clone();
    next.apply_single(q, hadamard());
    let bit = 1 << q;
    let keep_set = outcome == Outcome::Minus;
    for (i, a) in next.amplitudes.iter_mut().enumerate() {
        if (i & bit != 0) != keep_set {
            *a = ZERO;
        }
    }
    next.apply_single(q, hadamard());
    let norm = next.norm();
    if norm > 0.0 {
        for a in &mut next.amplitudes {
            *a /= norm;
        }
    }
    next.tick += 1;
    next
}

/// Reduced density matrix of the qubits in `keep`. Local index bit `k` is
/// qubit `keep[k]`.
pub fn reduced_density(s: &PureState, keep: &[usize]) -> Result<DMatrix<Complex64>> {
    if keep.is_empty() || keep.len() > s.n_qubits {
        return Err(EntangleError::InvalidSubset);
    }
    let mut seen = 0usize;
    for &q in keep {
        if q >= s.n_qubits || seen & (1 << q) != 0 {
            return Err(EntangleError::InvalidSubset);
        }
        seen |= 1 << q;
    }
    let traced: Vec<usize> = (0..s.n_qubits).filter(|q| seen & (1 << q) == 0).collect();
    let dim = 1 << keep.len();
    let compose = |local: usize, env: usize| -> usize {
        let mut index = 0;
        for (k, &q) in keep.iter().enumerate() {
            index |= ((local >> k) & 1) << q;
        }
        for (k, &q) in traced.iter().enumerate() {
            index |= ((env >> k) & 1) << q;
        }
        index
    };
    let mut rho = DMatrix::from_element(dim, dim, ZERO);
    for env in 0..(1usize << traced.len()) {
        for r in 0..dim {
            let ar = s.amplitudes[compose(r, env)];
            if ar == ZERO {
                continue;
            }
            for c in 0..dim {
                rho[(r, c)] += ar * s.amplitudes[compose(c, env)].conj();
            }
        }
    }
    Ok(rho)
}

/// Eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

/// Von Neumann entropy in nats.
pub fn von_neumann_entropy(rho: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(rho)
        .into_iter()
        .filter(|&l| l > 1e-15)
        .map(|l| -l * l.ln())
        .sum()
}

/// Partial transpose on the second qubit of a two-qubit density matrix.
pub fn partial_transpose_second(rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    // local index = a + 2 b, transpose the b indices
    DMatrix::from_fn(4, 4, |r, c| {
        let (ra, rb) = (r & 1, r >> 1);
        let (ca, cb) = (c & 1, c >> 1);
        rho[(ra | (cb << 1), ca | (rb << 1))]
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMeasures {
    /// `S(rho_i) + S(rho_j) - S(rho_ij)`, nats.
    pub mutual_information: f64,
    /// Sum of the magnitudes of negative eigenvalues of the partial transpose.
    pub negativity: f64,
}

impl PairMeasures {
    /// Mutual information over its two-qubit maximum `2 ln 2`, clamped to
    /// `[0, 1]`; the scale used for entanglement-block entries.
    pub fn strength(&self) -> f64 {
        (self.mutual_information / (2.0 * std::f64::consts::LN_2)).clamp(0.0, 1.0)
    }
}

pub fn pair_relation_measures(s: &PureState, i: usize, j: usize) -> Result<PairMeasures> {
    s.check_qubit(i)?;
    s.check_qubit(j)?;
    if i == j {
        return Err(EntangleError::SameQubit(i));
    }
    let rho_ij = reduced_density(s, &[i, j])?;
    let rho_i = reduced_density(s, &[i])?;
    let rho_j = reduced_density(s, &[j])?;
    let mi =
        von_neumann_entropy(&rho_i) + von_neumann_entropy(&rho_j) - von_neumann_entropy(&rho_ij);
    let negativity = hermitian_eigenvalues(&partial_transpose_second(&rho_ij))
        .into_iter()
        .filter(|&l| l < 0.0)
        .map(f64::abs)
        .sum();
    Ok(PairMeasures {
        mutual_information: mi.max(0.0),
        negativity,
    })
}

/// Pairwise measures for every `i < j`.
pub fn all_pair_measures(s: &PureState) -> Vec<((usize, usize), PairMeasures)> {
    let n = s.n_qubits;
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(((i, j), pair_relation_measures(s, i, j).expect("valid pair")));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Created,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cause {
    Interaction,
    Propagation,
    Collapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RelationEvent {
    pub tick: u64,
    pub kind: RelationKind,
    /// Ordered with `pair.0 < pair.1`.
    pub pair: (usize, usize),
    pub witness: Option<usize>,
    pub cause: Cause,
}

impl RelationEvent {
    fn involves(&self, v: usize) -> bool {
        self.pair.0 == v || self.pair.1 == v
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Tick-ordered record of relations appearing and disappearing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationEventLog {
    events: Vec<RelationEvent>,
}

pub const EVENT_LOG_HEADER: &str = "tick,kind,a,b,witness,cause";

impl RelationEventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stamps every pair already related in `s` as created at `s.tick()`.
    pub fn from_state(s: &PureState, eps: f64) -> Self {
        let events = all_pair_measures(s)
            .into_iter()
            .filter(|(_, m)| m.mutual_information > eps)
            .map(|(pair, _)| RelationEvent {
                tick: s.tick,
                kind: RelationKind::Created,
                pair,
                witness: None,
                cause: Cause::Interaction,
            })
            .collect();
        Self { events }
    }

    /// Builds a log from raw events without validation; use
    /// [`locality_check`] to audit it.
    pub fn from_events(events: Vec<RelationEvent>) -> Self {
        Self { events }
    }

    pub fn events(&self) -> &[RelationEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Pairs related after replaying every event with tick `<= tick`.
    pub fn relations_at(&self, tick: u64) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for e in self.events.iter().filter(|e| e.tick <= tick) {
            apply_event(&mut set, e);
        }
        set
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{EVENT_LOG_HEADER}")?;
        for e in &self.events {
            let witness = e.witness.map(|w| w.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{:?},{},{},{},{:?}",
                e.tick, e.kind, e.pair.0, e.pair.1, witness, e.cause
            )?;
        }
        Ok(())
    }
}

fn apply_event(set: &mut BTreeSet<(usize, usize)>, e: &RelationEvent) {
    match e.kind {
        RelationKind::Created => {
            set.insert(e.pair);
        }
        RelationKind::Removed => {
            set.remove(&e.pair);
        }
    }
}

/// What happened between two consecutive states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// A local interaction between two subsystems.
    Interaction(usize, usize),
    /// A projective measurement.
    Collapse,
    /// Nothing acted on the state.
    Idle,
}

/// Appends the relation changes between `before` and `after` to `log`.
///
/// With `t = after.tick()`: pairs dropping to or below `eps` are removed at
/// `t`. A pair that becomes related and is the interacting pair is created at
/// `t`. Any other newly related pair is created one tick later, at `t + 1`,
/// by propagation through a witness `b` related to both ends at tick `t`.
pub fn propagate_relations(
    before: &PureState,
    after: &PureState,
    transition: Transition,
    log: &RelationEventLog,
    eps: f64,
) -> Result<RelationEventLog> {
    if before.n_qubits != after.n_qubits {
        return Err(EntangleError::QubitCountMismatch);
    }
    if after.tick != before.tick + 1 {
        return Err(EntangleError::TickMismatch {
            before: before.tick,
            after: after.tick,
        });
    }
    if let Transition::Interaction(a, b) = transition {
        before.check_qubit(a)?;
        before.check_qubit(b)?;
        if a == b {
            return Err(EntangleError::SameQubit(a));
        }
    }
    let t = after.tick;
    let m_before = all_pair_measures(before);
    let m_after = all_pair_measures(after);

    let mut now_events = Vec::new();
    let mut propagated = Vec::new();
    for ((pair, mb), (_, ma)) in m_before.iter().zip(&m_after) {
        let was = mb.mutual_information > eps;
        let is = ma.mutual_information > eps;
        if was && !is {
            let cause = match transition {
                Transition::Collapse => Cause::Collapse,
                _ => Cause::Interaction,
            };
            now_events.push(RelationEvent {
                tick: t,
                kind: RelationKind::Removed,
                pair: *pair,
                witness: None,
                cause,
            });
        } else if !was && is {
            match transition {
                Transition::Interaction(a, b) if ordered(a, b) == *pair => {
                    now_events.push(RelationEvent {
                        tick: t,
                        kind: RelationKind::Created,
                        pair: *pair,
                        witness: None,
                        cause: Cause::Interaction,
                    })
                }
                Transition::Collapse => now_events.push(RelationEvent {
                    tick: t,
                    kind: RelationKind::Created,
                    pair: *pair,
                    witness: None,
                    cause: Cause::Collapse,
                }),
                _ => propagated.push(*pair),
            }
        }
    }

    let mut next = log.clone();
    next.events.extend(now_events);
    let related = next.relations_at(t);
    for (a, c) in propagated {
        let witness = (0..after.n_qubits)
            .filter(|&b| b != a && b != c)
            .find(|&b| related.contains(&ordered(a, b)) && related.contains(&ordered(b, c)))
            .ok_or(EntangleError::LocalityViolation { a, c, tick: t + 1 })?;
        next.events.push(RelationEvent {
            tick: t + 1,
            kind: RelationKind::Created,
            pair: (a, c),
            witness: Some(witness),
            cause: Cause::Propagation,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalityVerdict {
    Pass,
    Fail {
        index: usize,
        event: RelationEvent,
        reason: String,
    },
}

impl LocalityVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, LocalityVerdict::Pass)
    }
}

/// Replays `log` and confirms that ticks never decrease and that every
/// propagated relation has a witness related to both ends at an earlier tick.
pub fn locality_check(log: &RelationEventLog) -> LocalityVerdict {
    let fail = |index: usize, event: RelationEvent, reason: String| LocalityVerdict::Fail {
        index,
        event,
        reason,
    };
    // relations settled before the current tick, and the ones being built at it
    let mut settled = BTreeSet::new();
    let mut current = BTreeSet::new();
    let mut current_tick = None;
    for (index, e) in log.events.iter().enumerate() {
        match current_tick {
            Some(tick) if e.tick < tick => {
                return fail(index, *e, format!("tick {} after tick {tick}", e.tick));
            }
            Some(tick) if e.tick == tick => {}
            _ => {
                settled = current.clone();
                current_tick = Some(e.tick);
            }
        }
        if e.pair.0 >= e.pair.1 {
            return fail(index, *e, "pair must be ordered and distinct".into());
        }
        if e.kind == RelationKind::Created && e.cause == Cause::Propagation {
            let Some(b) = e.witness else {
                return fail(index, *e, "propagated relation without a witness".into());
            };
            if e.involves(b) {
                return fail(index, *e, format!("witness {b} is an endpoint"));
            }
            let (a, c) = e.pair;
            if !settled.contains(&ordered(a, b)) || !settled.contains(&ordered(b, c)) {
                return fail(
                    index,
                    *e,
                    format!(
                        "witness {b} was not related to both ends before tick {}",
                        e.tick
                    ),
                );
            }
        }
        apply_event(&mut current, e);
    }
    LocalityVerdict::Pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bell() -> PureState {
        PureState::new(2, vec![c(FRAC_1_SQRT_2), ZERO, ZERO, c(FRAC_1_SQRT_2)]).unwrap()
    }

    #[test]
    fn epr_amplitudes() {
        let s = make_epr_with_apparatus();
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert_eq!(s.amplitude(0b010), c(FRAC_1_SQRT_2));
        assert_eq!(s.amplitude(0b001), c(-FRAC_1_SQRT_2));
        let nonzero = s.amplitudes().iter().filter(|a| a.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn singlet_negativity() {
        let m = pair_relation_measures(&make_epr_with_apparatus(), ELECTRON_1, ELECTRON_2).unwrap();
        assert!((m.negativity - 0.5).abs() < 1e-12);
        assert!((m.mutual_information - 2.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn interaction_on_singlet_gives_three_party_state() {
        let s = apply_measurement_interaction(&make_epr_with_apparatus(), ELECTRON_2, APPARATUS)
            .unwrap();
        assert_eq!(s.tick(), 1);
        // (|up down -> - |down up +>) / sqrt 2, expanded in the computational basis
        let half = 0.5;
        let mut want = [0.0; 8];
        want[0b010] = half; // up down 0
        want[0b110] = -half; // up down 1
        want[0b001] = -half; // down up 0
        want[0b101] = -half; // down up 1
        for (i, w) in want.iter().enumerate() {
            assert!((s.amplitude(i) - c(*w)).norm() < 1e-12, "index {i}");
        }
    }

    #[test]
    fn interaction_on_basis_state_does_not_touch_other_electron() {
        // |up up 0> -> |up up +>
        let s =
            apply_measurement_interaction(&PureState::basis(3, 0).unwrap(), ELECTRON_2, APPARATUS)
                .unwrap();
        assert!((s.amplitude(0b000) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!((s.amplitude(0b100) - c(FRAC_1_SQRT_2)).norm() < 1e-15);
        let m = pair_relation_measures(&s, ELECTRON_1, APPARATUS).unwrap();
        assert!(m.mutual_information.abs() < 1e-12);
    }

    #[test]
    fn interaction_on_unentangled_electron() {
        // e2 = (|up> - |down>) / sqrt 2, apparatus |0>, on two qubits (e2 = 0, app = 1)
        let s = PureState::new(2, vec![c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2), ZERO, ZERO]).unwrap();
        let out = apply_measurement_interaction(&s, 0, 1).unwrap();
        // (|up +> - |down ->) / sqrt 2 = (|00> + |up,1> - |down,0> + |down,1>) / 2
        let want = [0.5, -0.5, 0.5, 0.5];
        for (i, w) in want.iter().enumerate() {
            assert!((out.amplitude(i) - c(*w)).norm() < 1e-15);
        }
    }

    #[test]
    fn interaction_requires_ready_apparatus() {
        let s = PureState::basis(3, 0b100).unwrap();
        assert!(matches!(
            apply_measurement_interaction(&s, ELECTRON_2, APPARATUS),
            Err(EntangleError::ApparatusNotInitialized(_))
        ));
        let s = make_epr_with_apparatus();
        assert_eq!(
            apply_measurement_interaction(&s, 1, 1),
            Err(EntangleError::SameQubit(1))
        );
        assert!(apply_measurement_interaction(&s, 1, 3).is_err());
    }

    #[test]
    fn collapse_probabilities_and_branches() {
        let s = apply_measurement_interaction(&make_epr_with_apparatus(), ELECTRON_2, APPARATUS)
            .unwrap();
        let (p, m) = pointer_probabilities(&s, APPARATUS).unwrap();
        assert!((p - 0.5).abs() < 1e-12 && (m - 0.5).abs() < 1e-12);

        let minus = project(&s, APPARATUS, Outcome::Minus);
        // |up down -> = (|010> - |110>) / sqrt 2
        assert!((minus.amplitude(0b010) - c(FRAC_1_SQRT_2)).norm() < 1e-12);
        assert!((minus.amplitude(0b110) - c(-FRAC_1_SQRT_2)).norm() < 1e-12);
        for (_, pm) in all_pair_measures(&minus) {
            assert!(pm.mutual_information.abs() < 1e-12);
            assert!(pm.negativity.abs() < 1e-12);
        }
        let plus = project(&s, APPARATUS, Outcome::Plus);
        // |down up +> up to the global sign
        assert!((plus.amplitude(0b001).norm() - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((plus.amplitude(0b101) - plus.amplitude(0b001)).norm() < 1e-12);
    }

    #[test]
    fn collapse_is_deterministic_per_seed() {
        let s = apply_measurement_interaction(&make_epr_with_apparatus(), ELECTRON_2, APPARATUS)
            .unwrap();
        let a = collapse_seeded(&s, APPARATUS, 7).unwrap();
        let b = collapse_seeded(&s, APPARATUS, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.tick(), 2);
    }

    #[test]
    fn collapse_never_picks_empty_branch() {
        let s =
            apply_measurement_interaction(&PureState::basis(3, 0).unwrap(), ELECTRON_2, APPARATUS)
                .unwrap();
        for seed in 0..200 {
            assert_eq!(
                collapse_seeded(&s, APPARATUS, seed).unwrap().0,
                Outcome::Plus
            );
        }
    }

    #[test]
    fn reduced_density_of_bell_pair() {
        let rho = reduced_density(&bell(), &[0]).unwrap();
        let mut eig = hermitian_eigenvalues(&rho);
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - 0.5).abs() < 1e-12 && (eig[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_state_reduces_to_pure_state() {
        let s = PureState::basis(3, 0b101).unwrap();
        let rho = reduced_density(&s, &[2]).unwrap();
        let purity = (&rho * &rho).trace().re;
        assert!((purity - 1.0).abs() < 1e-12);
        let m = pair_relation_measures(&s, 0, 2).unwrap();
        assert_eq!((m.mutual_information, m.negativity), (0.0, 0.0));
    }

    #[test]
    fn three_party_state_pairs_are_separable_but_correlated() {
        let s = apply_measurement_interaction(&make_epr_with_apparatus(), ELECTRON_2, APPARATUS)
            .unwrap();
        let rho = reduced_density(&s, &[ELECTRON_1, APPARATUS]).unwrap();
        let mut eig = hermitian_eigenvalues(&rho);
        eig.sort_by(f64::total_cmp);
        // rank two, equal weights
        assert!(eig[0].abs() < 1e-12 && eig[1].abs() < 1e-12);
        assert!((eig[2] - 0.5).abs() < 1e-12 && (eig[3] - 0.5).abs() < 1e-12);
        let m = pair_relation_measures(&s, ELECTRON_1, ELECTRON_2).unwrap();
        assert!(m.negativity.abs() < 1e-12);
        assert!((m.mutual_information - LN_2).abs() < 1e-12);
    }

    #[test]
    fn subset_validation() {
        let s = make_epr_with_apparatus();
        assert_eq!(reduced_density(&s, &[]), Err(EntangleError::InvalidSubset));
        assert_eq!(
            reduced_density(&s, &[0, 0]),
            Err(EntangleError::InvalidSubset)
        );
        assert_eq!(reduced_density(&s, &[3]), Err(EntangleError::InvalidSubset));
        assert_eq!(
            pair_relation_measures(&s, 1, 1),
            Err(EntangleError::SameQubit(1))
        );
    }

    #[test]
    fn state_validation() {
        assert!(matches!(
            PureState::new(1, vec![c(1.0), c(1.0)]),
            Err(EntangleError::NotNormalized(_))
        ));
        assert!(PureState::new(2, vec![c(1.0)]).is_err());
        assert_eq!(
            PureState::basis(13, 0),
            Err(EntangleError::TooManyQubits(13))
        );
    }

    fn epr_log() -> (Vec<PureState>, RelationEventLog) {
        let s0 = make_epr_with_apparatus();
        let log = RelationEventLog::from_state(&s0, DEFAULT_EPSILON);
        let s1 = apply_measurement_interaction(&s0, ELECTRON_2, APPARATUS).unwrap();
        let log = propagate_relations(
            &s0,
            &s1,
            Transition::Interaction(ELECTRON_2, APPARATUS),
            &log,
            DEFAULT_EPSILON,
        )
        .unwrap();
        let s2 = project(&s1, APPARATUS, Outcome::Minus);
        let log =
            propagate_relations(&s1, &s2, Transition::Collapse, &log, DEFAULT_EPSILON).unwrap();
        (vec![s0, s1, s2], log)
    }

    #[test]
    fn epr_relation_events() {
        let (_, log) = epr_log();
        let ev = log.events();
        assert_eq!(
            ev[0],
            RelationEvent {
                tick: 0,
                kind: RelationKind::Created,
                pair: (0, 1),
                witness: None,
                cause: Cause::Interaction
            }
        );
        assert_eq!(
            ev[1],
            RelationEvent {
                tick: 1,
                kind: RelationKind::Created,
                pair: (1, 2),
                witness: None,
                cause: Cause::Interaction
            }
        );
        assert_eq!(
            ev[2],
            RelationEvent {
                tick: 2,
                kind: RelationKind::Created,
                pair: (0, 2),
                witness: Some(ELECTRON_2),
                cause: Cause::Propagation
            }
        );
        let removed: Vec<_> = ev[3..]
            .iter()
            .map(|e| (e.tick, e.kind, e.pair, e.cause))
            .collect();
        assert_eq!(
            removed,
            vec![
                (2, RelationKind::Removed, (0, 1), Cause::Collapse),
                (2, RelationKind::Removed, (0, 2), Cause::Collapse),
                (2, RelationKind::Removed, (1, 2), Cause::Collapse),
            ]
        );
        assert!(locality_check(&log).passed());
        assert!(log.relations_at(2).is_empty());
    }

    #[test]
    fn idle_step_adds_nothing() {
        let s0 = make_epr_with_apparatus();
        let s1 = s0.clone().with_tick(1);
        let log = RelationEventLog::new();
        let next = propagate_relations(&s0, &s1, Transition::Idle, &log, DEFAULT_EPSILON).unwrap();
        assert!(next.is_empty());
        assert!(matches!(
            propagate_relations(&s0, &s0, Transition::Idle, &log, DEFAULT_EPSILON),
            Err(EntangleError::TickMismatch { .. })
        ));
    }

    #[test]
    fn missing_witness_is_a_locality_violation() {
        // start from a product state with no recorded relations: after the
        // interaction on (1, 2) nothing links 0, so a pure state in which 0
        // suddenly correlates with 2 has no witness
        let s0 = PureState::basis(3, 0).unwrap();
        let log = RelationEventLog::from_state(&s0, DEFAULT_EPSILON);
        // GHZ correlates all three pairs in one jump
        let mut amps = vec![ZERO; 8];
        amps[0b000] = c(FRAC_1_SQRT_2);
        amps[0b111] = c(FRAC_1_SQRT_2);
        let s1 = PureState::new(3, amps).unwrap().with_tick(1);
        let err = propagate_relations(
            &s0,
            &s1,
            Transition::Interaction(1, 2),
            &log,
            DEFAULT_EPSILON,
        )
        .unwrap_err();
        assert_eq!(
            err,
            EntangleError::LocalityViolation {
                a: 0,
                c: 1,
                tick: 2
            }
        );
    }

    #[test]
    fn locality_check_rejects_forged_logs() {
        assert!(locality_check(&RelationEventLog::new()).passed());
        let forged = RelationEventLog::from_events(vec![RelationEvent {
            tick: 3,
            kind: RelationKind::Created,
            pair: (0, 2),
            witness: None,
            cause: Cause::Propagation,
        }]);
        match locality_check(&forged) {
            LocalityVerdict::Fail { index, .. } => assert_eq!(index, 0),
            LocalityVerdict::Pass => panic!("forged log passed"),
        }
        // witness given but not related beforehand
        let (_, log) = epr_log();
        let mut events = log.events().to_vec();
        events[2].witness = Some(1);
        events.remove(1);
        match locality_check(&RelationEventLog::from_events(events)) {
            LocalityVerdict::Fail { index, .. } => assert_eq!(index, 1),
            LocalityVerdict::Pass => panic!("forged log passed"),
        }
        // decreasing ticks
        let backwards = RelationEventLog::from_events(vec![
            RelationEvent {
                tick: 2,
                kind: RelationKind::Created,
                pair: (0, 1),
                witness: None,
                cause: Cause::Interaction,
            },
            RelationEvent {
                tick: 1,
                kind: RelationKind::Removed,
                pair: (0, 1),
                witness: None,
                cause: Cause::Collapse,
            },
        ]);
        assert!(!locality_check(&backwards).passed());
    }

    #[test]
    fn event_log_csv() {
        let (_, log) = epr_log();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], EVENT_LOG_HEADER);
        assert_eq!(lines[1], "0,Created,0,1,,Interaction");
        assert_eq!(lines[3], "2,Created,0,2,1,Propagation");
    }

    #[test]
    fn strength_scale() {
        let s0 = make_epr_with_apparatus();
        let s1 = apply_measurement_interaction(&s0, ELECTRON_2, APPARATUS).unwrap();
        let singlet = pair_relation_measures(&s0, ELECTRON_1, ELECTRON_2).unwrap();
        assert!((singlet.strength() - 1.0).abs() < 1e-12);
        let swapped = pair_relation_measures(&s1, ELECTRON_1, APPARATUS).unwrap();
        assert!((swapped.strength() - 0.5).abs() < 1e-12);
        assert_eq!(
            pair_relation_measures(&s0, ELECTRON_1, APPARATUS)
                .unwrap()
                .strength(),
            0.0
        );
    }
}
