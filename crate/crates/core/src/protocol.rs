//! Full QKD sessions: per-round setting choice, measurement, sifting, CHSH
//! estimation and the audit of Eve's knowledge of the key.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{count, lit, Scalar};
use crate::optics::{measure_pulse, DetectorStation, Outcome, PolarizationAngle};
use crate::sources::{
    emit_double_blind_bbm92, emit_double_blind_ekert, emit_honest_singlet, emit_single_blinding, eve_predict,
    round_rng, ScenarioConfig, ScenarioKind, Side,
};
use crate::tally::{CorrelationEstimate, SessionTally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bbm92,
    Ekert,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Bbm92 => "bbm92",
            Protocol::Ekert => "ekert",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bbm92" => Ok(Protocol::Bbm92),
            "ekert" => Ok(Protocol::Ekert),
            other => Err(Error::invalid("protocol", format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig<T> {
    pub protocol: Protocol,
    pub alice_settings: Vec<PolarizationAngle<T>>,
    pub bob_settings: Vec<PolarizationAngle<T>>,
    pub rounds: u64,
    pub seed: u64,
}

impl<T: Scalar> ProtocolConfig<T> {
    /// Standard analyzer sets: `{0, π/4}` on both sides for BBM92;
    /// `{0, π/8, π/4}` for Alice and `{π/8, π/4, 3π/8}` for Bob in Ekert.
    pub fn new(protocol: Protocol, rounds: u64, seed: u64) -> Self {
        let eighth = |k: f64| PolarizationAngle::new(T::PI() * lit(k / 8.0));
        let (alice_settings, bob_settings) = match protocol {
            Protocol::Bbm92 => (vec![eighth(0.0), eighth(2.0)], vec![eighth(0.0), eighth(2.0)]),
            Protocol::Ekert => (
                vec![eighth(0.0), eighth(1.0), eighth(2.0)],
                vec![eighth(1.0), eighth(2.0), eighth(3.0)],
            ),
        };
        ProtocolConfig {
            protocol,
            alice_settings,
            bob_settings,
            rounds,
            seed,
        }
    }

    pub fn with_settings(mut self, alice: Vec<PolarizationAngle<T>>, bob: Vec<PolarizationAngle<T>>) -> Self {
        self.alice_settings = alice;
        self.bob_settings = bob;
        self
    }

    /// Copy with every analyzer rotated by `delta`.
    pub fn rotated(&self, delta: T) -> Self {
        let rot = |v: &[PolarizationAngle<T>]| v.iter().map(|s| s.rotated(delta)).collect();
        ProtocolConfig {
            alice_settings: rot(&self.alice_settings),
            bob_settings: rot(&self.bob_settings),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds", "must be at least 1"));
        }
        if self.alice_settings.is_empty() {
            return Err(Error::invalid("alice-settings", "must not be empty"));
        }
        if self.bob_settings.is_empty() {
            return Err(Error::invalid("bob-settings", "must not be empty"));
        }
        for (name, list) in [
            ("alice-settings", &self.alice_settings),
            ("bob-settings", &self.bob_settings),
        ] {
            for (i, s) in list.iter().enumerate() {
                if list[..i].contains(s) {
                    return Err(Error::invalid(name, format!("duplicate setting {s}")));
                }
            }
        }
        Ok(())
    }
}

/// What Eve learned in a single-blinding round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveIntercept<T> {
    pub basis: PolarizationAngle<T>,
    pub outcome: Outcome,
}

/// The part of a round visible to Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublicRecord<T> {
    pub index: u64,
    pub theta_a: PolarizationAngle<T>,
    pub theta_b: PolarizationAngle<T>,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
}

/// One simulated round including Eve's private information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord<T> {
    pub index: u64,
    pub theta_a: PolarizationAngle<T>,
    pub theta_b: PolarizationAngle<T>,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
    pub weak_side: Option<Side>,
    /// Present iff the round came from a double blinding-attack.
    pub hidden_lambda: Option<PolarizationAngle<T>>,
    pub eve_intercept: Option<EveIntercept<T>>,
}

impl<T: Scalar> RoundRecord<T> {
    pub fn public(&self) -> PublicRecord<T> {
        PublicRecord {
            index: self.index,
            theta_a: self.theta_a,
            theta_b: self.theta_b,
            outcome_a: self.outcome_a,
            outcome_b: self.outcome_b,
        }
    }

    /// Eve's prediction of both outcomes from her hidden polarization.
    pub fn eve_prediction(&self, scenario: &ScenarioConfig<T>) -> Result<(Outcome, Outcome)> {
        let lambda = self
            .hidden_lambda
            .ok_or(Error::NotApplicable("round carries no hidden polarization"))?;
        eve_predict(lambda, self.weak_side, self.theta_a, self.theta_b, scenario)
    }

    /// Eve's guess of Bob's outcome, if she has one.
    fn eve_guess_bob(&self, scenario: &ScenarioConfig<T>) -> Option<Outcome> {
        match (self.hidden_lambda, self.eve_intercept) {
            (Some(_), _) => self.eve_prediction(scenario).ok().map(|(_, b)| b),
            (None, Some(icpt)) => Some(icpt.outcome),
            (None, None) => None,
        }
    }
}

fn simulate_round<T: Scalar>(
    pcfg: &ProtocolConfig<T>,
    scfg: &ScenarioConfig<T>,
    index: u64,
) -> (usize, usize, RoundRecord<T>) {
    let mut rng = round_rng(pcfg.seed, index);
    let ia = rng.gen_range(0..pcfg.alice_settings.len());
    let ib = rng.gen_range(0..pcfg.bob_settings.len());
    let (theta_a, theta_b) = (pcfg.alice_settings[ia], pcfg.bob_settings[ib]);
    let station = |theta| DetectorStation::new(scfg.threshold, theta).expect("validated threshold");

    let mut rec = RoundRecord {
        index,
        theta_a,
        theta_b,
        outcome_a: Outcome::NoClick,
        outcome_b: Outcome::NoClick,
        weak_side: None,
        hidden_lambda: None,
        eve_intercept: None,
    };
    match scfg.kind {
        ScenarioKind::HonestSinglet => {
            let (a, b) = emit_honest_singlet(&mut rng, theta_a, theta_b, scfg.depolarize_prob);
            rec.outcome_a = a;
            rec.outcome_b = b;
        }
        ScenarioKind::SingleBlinding => {
            let r = emit_single_blinding(&mut rng, theta_a, scfg).expect("validated scenario");
            rec.outcome_a = r.alice;
            rec.outcome_b = measure_pulse(r.forwarded, &station(theta_b));
            rec.eve_intercept = Some(EveIntercept {
                basis: r.eve_basis,
                outcome: r.eve_outcome,
            });
        }
        ScenarioKind::DoubleBlindBbm92 | ScenarioKind::DoubleBlindEkert => {
            let r = if scfg.kind == ScenarioKind::DoubleBlindBbm92 {
                emit_double_blind_bbm92(&mut rng, scfg)
            } else {
                emit_double_blind_ekert(&mut rng, scfg, index).expect("validated scenario")
            };
            rec.outcome_a = measure_pulse(r.pulse_a, &station(theta_a));
            rec.outcome_b = measure_pulse(r.pulse_b, &station(theta_b));
            rec.weak_side = r.weak_side;
            rec.hidden_lambda = Some(r.hidden_lambda);
        }
    }
    (ia, ib, rec)
}

fn validate_all<T: Scalar>(pcfg: &ProtocolConfig<T>, scfg: &ScenarioConfig<T>) -> Result<()> {
    pcfg.validate()?;
    scfg.validate()
}

/// Simulates `pcfg.rounds` rounds and returns them in index order. Rounds
/// run on the current rayon pool; the result does not depend on its size.
pub fn run_session<T: Scalar>(pcfg: &ProtocolConfig<T>, scfg: &ScenarioConfig<T>) -> Result<Vec<RoundRecord<T>>> {
    validate_all(pcfg, scfg)?;
    Ok((0..pcfg.rounds)
        .into_par_iter()
        .map(|i| simulate_round(pcfg, scfg, i).2)
        .collect())
}

/// Eve's bookkeeping over a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EveTally {
    /// Rounds where Eve predicted both outcomes from λ.
    pub predicted_rounds: u64,
    pub prediction_mismatches: u64,
    /// Intercept-resend rounds where Bob clicked.
    pub intercept_bob_clicks: u64,
    /// ... and his outcome differed from Eve's measurement.
    pub intercept_mismatches: u64,
    /// Sifted bits for which Eve holds a guess.
    pub sifted_guessed: u64,
    pub sifted_matches: u64,
}

impl EveTally {
    pub fn observe<T: Scalar>(&mut self, rec: &RoundRecord<T>, scenario: &ScenarioConfig<T>) {
        if let Ok(pred) = rec.eve_prediction(scenario) {
            self.predicted_rounds += 1;
            if pred != (rec.outcome_a, rec.outcome_b) {
                self.prediction_mismatches += 1;
            }
        }
        if let Some(icpt) = rec.eve_intercept {
            if rec.outcome_b.is_click() {
                self.intercept_bob_clicks += 1;
                if rec.outcome_b != icpt.outcome {
                    self.intercept_mismatches += 1;
                }
            }
        }
        if is_sifted(&rec.public()) {
            if let Some(guess) = rec.eve_guess_bob(scenario) {
                self.sifted_guessed += 1;
                if bob_bit(guess) == bob_bit(rec.outcome_b) {
                    self.sifted_matches += 1;
                }
            }
        }
    }

    pub fn merge(self, o: EveTally) -> EveTally {
        EveTally {
            predicted_rounds: self.predicted_rounds + o.predicted_rounds,
            prediction_mismatches: self.prediction_mismatches + o.prediction_mismatches,
            intercept_bob_clicks: self.intercept_bob_clicks + o.intercept_bob_clicks,
            intercept_mismatches: self.intercept_mismatches + o.intercept_mismatches,
            sifted_guessed: self.sifted_guessed + o.sifted_guessed,
            sifted_matches: self.sifted_matches + o.sifted_matches,
        }
    }

    /// Fraction of sifted bits Eve knows; `None` if she holds no guesses.
    pub fn match_fraction<T: Scalar>(&self) -> Option<T> {
        (self.sifted_guessed > 0).then(|| count::<T>(self.sifted_matches) / count::<T>(self.sifted_guessed))
    }
}

/// Aggregate of a streamed session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats<T> {
    pub tally: SessionTally<T>,
    pub eve: EveTally,
}

impl<T: Scalar> SessionStats<T> {
    pub fn from_records(records: &[RoundRecord<T>], scenario: &ScenarioConfig<T>) -> Self {
        let mut tally = SessionTally::empty();
        let mut eve = EveTally::default();
        for r in records {
            tally.add(r.theta_a, r.theta_b, r.outcome_a, r.outcome_b, r.weak_side);
            eve.observe(r, scenario);
        }
        SessionStats { tally, eve }
    }
}

/// Like [`run_session`] but folds rounds into counts instead of storing
/// them, for sessions too large to keep in memory.
pub fn run_tally<T: Scalar>(pcfg: &ProtocolConfig<T>, scfg: &ScenarioConfig<T>) -> Result<SessionStats<T>> {
    validate_all(pcfg, scfg)?;
    let empty = || SessionStats {
        tally: SessionTally::new(&pcfg.alice_settings, &pcfg.bob_settings),
        eve: EveTally::default(),
    };
    Ok((0..pcfg.rounds)
        .into_par_iter()
        .fold(empty, |mut acc, i| {
            let (ia, ib, rec) = simulate_round(pcfg, scfg, i);
            acc.tally
                .add_indexed(ia, ib, rec.outcome_a, rec.outcome_b, rec.weak_side);
            acc.eve.observe(&rec, scfg);
            acc
        })
        .reduce(empty, |a, b| SessionStats {
            tally: a.tally.merge(b.tally),
            eve: a.eve.merge(b.eve),
        }))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    Ok(pool.install(f))
}

fn is_sifted<T: Scalar>(r: &PublicRecord<T>) -> bool {
    r.theta_a == r.theta_b && r.outcome_a.is_click() && r.outcome_b.is_click()
}

fn alice_bit(o: Outcome) -> bool {
    o == Outcome::Minus
}

/// Bob's bit after the anticorrelation flip.
fn bob_bit(o: Outcome) -> bool {
    o == Outcome::Plus
}

/// Raw sifted key. Eve's bits are absent when she has no view of the round.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKey<T> {
    pub indices: Vec<u64>,
    pub bases: Vec<PolarizationAngle<T>>,
    pub bits_alice: Vec<bool>,
    pub bits_bob: Vec<bool>,
    pub bits_eve: Option<Vec<bool>>,
}

impl<T> SiftedKey<T> {
    pub fn len(&self) -> usize {
        self.bits_alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits_alice.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftResult<T> {
    pub key: SiftedKey<T>,
    pub errors: usize,
    /// `None` when no round survived sifting.
    pub qber: Option<T>,
}

/// Sifts on public data only: rounds with equal settings where both sides
/// clicked. Returns the key without Eve's bits.
pub fn sift_public<T: Scalar>(records: impl IntoIterator<Item = PublicRecord<T>>) -> SiftedKey<T> {
    let mut key = SiftedKey {
        indices: Vec::new(),
        bases: Vec::new(),
        bits_alice: Vec::new(),
        bits_bob: Vec::new(),
        bits_eve: None,
    };
    for r in records.into_iter().filter(is_sifted) {
        key.indices.push(r.index);
        key.bases.push(r.theta_a);
        key.bits_alice.push(alice_bit(r.outcome_a));
        key.bits_bob.push(bob_bit(r.outcome_b));
    }
    key
}

/// BBM92 sifting with Eve's shadow key attached where she has one.
pub fn sift_bbm92<T: Scalar>(records: &[RoundRecord<T>], scenario: &ScenarioConfig<T>) -> SiftResult<T> {
    let mut key = sift_public(records.iter().map(RoundRecord::public));
    if scenario.kind != ScenarioKind::HonestSinglet {
        let by_index = |i: u64| {
            // Records are in index order when produced by run_session; fall back to a scan otherwise.
            match records.get(i as usize) {
                Some(r) if r.index == i => r,
                _ => records.iter().find(|r| r.index == i).expect("sifted index present"),
            }
        };
        let eve: Option<Vec<bool>> = key
            .indices
            .iter()
            .map(|&i| by_index(i).eve_guess_bob(scenario).map(bob_bit))
            .collect();
        key.bits_eve = eve;
    }
    let errors = key.bits_alice.iter().zip(&key.bits_bob).filter(|(a, b)| a != b).count();
    let qber = (!key.is_empty()).then(|| count::<T>(errors as u64) / count::<T>(key.len() as u64));
    SiftResult { key, errors, qber }
}

/// Fraction of sifted bits where Eve's bit equals Bob's.
pub fn eve_knowledge_audit<T: Scalar>(key: &SiftedKey<T>) -> Result<Option<T>> {
    let eve = key
        .bits_eve
        .as_ref()
        .ok_or(Error::NotApplicable("Eve holds no view of this session"))?;
    if key.is_empty() {
        return Ok(None);
    }
    let matches = eve.iter().zip(&key.bits_bob).filter(|(e, b)| e == b).count();
    Ok(Some(count::<T>(matches as u64) / count::<T>(key.len() as u64)))
}

/// The four analyzer angles of a CHSH test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshAngles<T> {
    pub a: PolarizationAngle<T>,
    pub a_prime: PolarizationAngle<T>,
    pub b: PolarizationAngle<T>,
    pub b_prime: PolarizationAngle<T>,
}

impl<T: Scalar> ChshAngles<T> {
    /// `a = 0, a′ = π/4, b = π/8, b′ = 3π/8`.
    pub fn ekert_default() -> Self {
        let eighth = |k: f64| PolarizationAngle::new(T::PI() * lit(k / 8.0));
        ChshAngles {
            a: eighth(0.0),
            a_prime: eighth(2.0),
            b: eighth(1.0),
            b_prime: eighth(3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshCorrelations<T> {
    pub ab: CorrelationEstimate<T>,
    pub ab_prime: CorrelationEstimate<T>,
    pub a_prime_b: CorrelationEstimate<T>,
    pub a_prime_b_prime: CorrelationEstimate<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshEstimate<T> {
    pub value: T,
    pub stderr: T,
}

impl<T: Scalar> ChshCorrelations<T> {
    pub fn as_array(&self) -> [CorrelationEstimate<T>; 4] {
        [self.ab, self.ab_prime, self.a_prime_b, self.a_prime_b_prime]
    }

    /// `S` with the four standard errors added in quadrature; `None` if any
    /// pair lacks coincidences.
    pub fn chsh(&self) -> Option<ChshEstimate<T>> {
        let [e1, e2, e3, e4] = self.as_array();
        let value = chsh_value(e1.value?, e2.value?, e3.value?, e4.value?);
        let var = self
            .as_array()
            .iter()
            .fold(T::zero(), |acc, e| acc + e.stderr.unwrap_or_else(T::zero).powi(2));
        Some(ChshEstimate {
            value,
            stderr: var.sqrt(),
        })
    }
}

/// Coincidence-conditioned correlations at the four CHSH setting pairs.
pub fn chsh_from_tally<T: Scalar>(tally: &SessionTally<T>, angles: &ChshAngles<T>) -> Result<ChshCorrelations<T>> {
    let get = |a, b| {
        tally
            .correlation(a, b)
            .ok_or_else(|| Error::invalid("chsh-angles", format!("setting pair ({a}, {b}) not present in records")))
    };
    Ok(ChshCorrelations {
        ab: get(angles.a, angles.b)?,
        ab_prime: get(angles.a, angles.b_prime)?,
        a_prime_b: get(angles.a_prime, angles.b)?,
        a_prime_b_prime: get(angles.a_prime, angles.b_prime)?,
    })
}

pub fn chsh_select<T: Scalar>(records: &[RoundRecord<T>], angles: &ChshAngles<T>) -> Result<ChshCorrelations<T>> {
    let mut tally = SessionTally::empty();
    for r in records {
        tally.add(r.theta_a, r.theta_b, r.outcome_a, r.outcome_b, None);
    }
    chsh_from_tally(&tally, angles)
}

/// `S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|`.
pub fn chsh_value<T: Scalar>(e_ab: T, e_ab_prime: T, e_a_prime_b: T, e_a_prime_b_prime: T) -> T {
    (e_ab - e_ab_prime + e_a_prime_b + e_a_prime_b_prime).abs()
}
