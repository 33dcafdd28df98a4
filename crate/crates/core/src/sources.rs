//! Per-round emission for every scenario: the honest singlet source, the
//! single (intercept-resend) blinding attack and the double blinding-attack
//! in its BBM92 and Ekert tunings.
//!
//! Every random draw comes from a generator derived from `(seed, round
//! index)`, so a round can be reproduced in isolation and rounds can be
//! simulated in any order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, Scalar};
use crate::optics::{Intensity, Outcome, PolarizationAngle, Pulse};

/// Deterministic per-round generator.
pub type RoundRng = ChaCha8Rng;

/// Generator for round `index` of the session seeded with `seed`.
pub fn round_rng(seed: u64, index: u64) -> RoundRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on `[0, 1)` converted to `T`.
pub(crate) fn unit<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    lit(rng.gen::<f64>())
}

/// Eve's hidden polarization, uniform on `[0, π)`.
pub fn sample_lambda<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> PolarizationAngle<T> {
    PolarizationAngle::new(unit::<T, _>(rng) * T::PI())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    #[serde(rename = "honest")]
    HonestSinglet,
    SingleBlinding,
    #[serde(rename = "double-bbm92")]
    DoubleBlindBbm92,
    #[serde(rename = "double-ekert")]
    DoubleBlindEkert,
}

impl ScenarioKind {
    pub fn is_double_blinding(self) -> bool {
        matches!(self, ScenarioKind::DoubleBlindBbm92 | ScenarioKind::DoubleBlindEkert)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::HonestSinglet => "honest",
            ScenarioKind::SingleBlinding => "single-blinding",
            ScenarioKind::DoubleBlindBbm92 => "double-bbm92",
            ScenarioKind::DoubleBlindEkert => "double-ekert",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honest" => Ok(ScenarioKind::HonestSinglet),
            "single-blinding" => Ok(ScenarioKind::SingleBlinding),
            "double-bbm92" => Ok(ScenarioKind::DoubleBlindBbm92),
            "double-ekert" => Ok(ScenarioKind::DoubleBlindEkert),
            other => Err(Error::invalid("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

/// How Eve distributes the weak pulse in the Ekert-tuned attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeakSidePolicy {
    /// A on even rounds, B on odd rounds.
    Alternate,
    /// Fair coin per round.
    #[default]
    Random,
    FixedA,
    FixedB,
}

impl FromStr for WeakSidePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternate" => Ok(WeakSidePolicy::Alternate),
            "random" => Ok(WeakSidePolicy::Random),
            "fixed-a" => Ok(WeakSidePolicy::FixedA),
            "fixed-b" => Ok(WeakSidePolicy::FixedB),
            other => Err(Error::invalid("weak-side", format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

/// Source configuration. Intensities are absolute, in the same units as
/// `threshold` (which defaults to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig<T> {
    pub kind: ScenarioKind,
    /// Width parameter of the Ekert tuning; the weak pulse carries `I_th/cos²α`.
    pub alpha: T,
    pub threshold: Intensity<T>,
    pub strong_intensity: Intensity<T>,
    pub single_blind_intensity: Intensity<T>,
    pub weak_side_policy: WeakSidePolicy,
    /// Probability that the honest source emits white noise instead of a singlet.
    pub depolarize_prob: T,
    /// Bases Eve measures in during single blinding.
    pub eve_bases: Vec<PolarizationAngle<T>>,
}

impl<T: Scalar> ScenarioConfig<T> {
    /// Defaults for `kind`: `α = π/(4√2)`, strong pulses at `2·I_th`, single
    /// blinding at `1.5·I_th`, random weak side, no depolarization and Eve
    /// using the BBM92 bases `{0, π/4}`.
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            kind,
            alpha: default_alpha(),
            threshold: Intensity::threshold_unit(),
            strong_intensity: Intensity::new(lit(2.0)).unwrap(),
            single_blind_intensity: Intensity::new(lit(1.5)).unwrap(),
            weak_side_policy: WeakSidePolicy::default(),
            depolarize_prob: T::zero(),
            eve_bases: vec![PolarizationAngle::zero(), PolarizationAngle::new(T::FRAC_PI_4())],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let th = self.threshold.value();
        if th <= T::zero() {
            return Err(Error::invalid("threshold", "must be > 0"));
        }
        if self.strong_intensity.value() <= T::zero() {
            return Err(Error::invalid("strong-intensity", "must be > 0"));
        }
        match self.kind {
            ScenarioKind::HonestSinglet => {
                let p = self.depolarize_prob;
                if !(p >= T::zero() && p <= T::one()) {
                    return Err(Error::invalid("depolarize", format!("must lie in [0, 1], got {p}")));
                }
            }
            ScenarioKind::SingleBlinding => {
                let i = self.single_blind_intensity.value();
                if !(i > th && i < lit::<T>(2.0) * th) {
                    return Err(Error::invalid(
                        "single-blind-intensity",
                        format!("must lie strictly between I_th and 2·I_th, got {i}"),
                    ));
                }
                if self.eve_bases.is_empty() {
                    return Err(Error::invalid("eve-bases", "must not be empty"));
                }
            }
            ScenarioKind::DoubleBlindEkert => check_alpha(self.alpha)?,
            ScenarioKind::DoubleBlindBbm92 => {}
        }
        Ok(())
    }

    /// Intensity of the weak pulse, `I_th / cos²α`.
    pub fn weak_intensity(&self) -> Result<Intensity<T>> {
        check_alpha(self.alpha)?;
        let c = self.alpha.cos();
        Intensity::new(self.threshold.value() / (c * c))
    }
}

/// `π/(4√2)`, the width that reproduces `|E| = √2/2` at the Ekert angles.
pub fn default_alpha<T: Scalar>() -> T {
    T::PI() / (lit::<T>(4.0) * T::SQRT_2())
}

pub(crate) fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::FRAC_PI_4() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: "alpha",
            value: crate::num::to_f64(alpha),
            domain: "(0, π/4)",
        })
    }
}

/// Pulse pair emitted by Eve in a double blinding round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmittedRound<T> {
    pub hidden_lambda: PolarizationAngle<T>,
    pub pulse_a: Pulse<T>,
    pub pulse_b: Pulse<T>,
    pub weak_side: Option<Side>,
}

fn correlated_pair<T: Scalar>(
    lambda: PolarizationAngle<T>,
    intensity_a: Intensity<T>,
    intensity_b: Intensity<T>,
) -> (Pulse<T>, Pulse<T>) {
    (
        Pulse::new(intensity_a, lambda),
        Pulse::new(intensity_b, lambda.orthogonal()),
    )
}

/// BBM92 tuning: both pulses at the strong intensity, polarizations `λ`
/// and `λ + π/2`.
pub fn emit_double_blind_bbm92<T: Scalar, R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig<T>) -> EmittedRound<T> {
    let lambda = sample_lambda(rng);
    let (pulse_a, pulse_b) = correlated_pair(lambda, cfg.strong_intensity, cfg.strong_intensity);
    EmittedRound {
        hidden_lambda: lambda,
        pulse_a,
        pulse_b,
        weak_side: None,
    }
}

/// Side receiving the weak pulse in round `index` under `policy`.
pub fn choose_weak_side<R: Rng + ?Sized>(policy: WeakSidePolicy, index: u64, rng: &mut R) -> Side {
    match policy {
        WeakSidePolicy::Alternate if index.is_multiple_of(2) => Side::A,
        WeakSidePolicy::Alternate => Side::B,
        WeakSidePolicy::Random if rng.gen::<bool>() => Side::A,
        WeakSidePolicy::Random => Side::B,
        WeakSidePolicy::FixedA => Side::A,
        WeakSidePolicy::FixedB => Side::B,
    }
}

/// Ekert tuning: one side gets `I_th/cos²α`, the other the strong intensity.
pub fn emit_double_blind_ekert<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ScenarioConfig<T>,
    index: u64,
) -> Result<EmittedRound<T>> {
    let weak = cfg.weak_intensity()?;
    let lambda = sample_lambda(rng);
    let side = choose_weak_side(cfg.weak_side_policy, index, rng);
    let (ia, ib) = match side {
        Side::A => (weak, cfg.strong_intensity),
        Side::B => (cfg.strong_intensity, weak),
    };
    let (pulse_a, pulse_b) = correlated_pair(lambda, ia, ib);
    Ok(EmittedRound {
        hidden_lambda: lambda,
        pulse_a,
        pulse_b,
        weak_side: Some(side),
    })
}

fn fair_outcome<R: Rng + ?Sized>(rng: &mut R) -> Outcome {
    if rng.gen::<bool>() {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// Outcome of the partner photon given `first`, drawn from the singlet law
/// `P(a, b) = (1 − a·b·cos 2Δ)/4`.
fn singlet_partner<T: Scalar, R: Rng + ?Sized>(rng: &mut R, first: Outcome, delta: T) -> Outcome {
    let p_opposite = (T::one() + (lit::<T>(2.0) * delta).cos()) * lit(0.5);
    if unit::<T, _>(rng) < p_opposite {
        first.flipped()
    } else {
        first
    }
}

/// Ideal polarization-singlet pair measured at `theta_a`, `theta_b`; with
/// probability `depolarize_prob` the pair is replaced by two fair coins.
pub fn emit_honest_singlet<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    theta_a: PolarizationAngle<T>,
    theta_b: PolarizationAngle<T>,
    depolarize_prob: T,
) -> (Outcome, Outcome) {
    let noisy = depolarize_prob > T::zero() && unit::<T, _>(rng) < depolarize_prob;
    let a = fair_outcome(rng);
    if noisy {
        return (a, fair_outcome(rng));
    }
    (a, singlet_partner(rng, a, theta_a.diff(theta_b)))
}

/// One intercept-resend round of the single blinding attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleBlindRound<T> {
    /// Alice's genuine measurement of her photon.
    pub alice: Outcome,
    pub eve_basis: PolarizationAngle<T>,
    pub eve_outcome: Outcome,
    /// Bright pulse resent to Bob's blinded detectors.
    pub forwarded: Pulse<T>,
}

/// Eve measures Bob's photon in a random basis from `cfg.eve_bases` and
/// resends a pulse polarized along her result.
pub fn emit_single_blinding<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    theta_a: PolarizationAngle<T>,
    cfg: &ScenarioConfig<T>,
) -> Result<SingleBlindRound<T>> {
    if cfg.eve_bases.is_empty() {
        return Err(Error::invalid("eve-bases", "must not be empty"));
    }
    let eve_basis = cfg.eve_bases[rng.gen_range(0..cfg.eve_bases.len())];
    let alice = fair_outcome(rng);
    let eve_outcome = singlet_partner(rng, alice, theta_a.diff(eve_basis));
    let polarization = match eve_outcome {
        Outcome::Plus => eve_basis,
        _ => eve_basis.orthogonal(),
    };
    Ok(SingleBlindRound {
        alice,
        eve_basis,
        eve_outcome,
        forwarded: Pulse::new(cfg.single_blind_intensity, polarization),
    })
}

/// Closed-form click of a strong pulse polarized along `lambda`.
fn strong_response<T: Scalar>(lambda: PolarizationAngle<T>, theta: PolarizationAngle<T>) -> Outcome {
    Outcome::from_sign((lit::<T>(2.0) * lambda.diff(theta)).cos())
}

/// Closed-form click of a weak pulse: silent inside the band
/// `α < |λ − θ| < π/2 − α`.
fn weak_response<T: Scalar>(lambda: PolarizationAngle<T>, theta: PolarizationAngle<T>, alpha: T) -> Outcome {
    let d = lambda.diff(theta).abs();
    if d > alpha && d < T::FRAC_PI_2() - alpha {
        Outcome::NoClick
    } else {
        strong_response(lambda, theta)
    }
}

/// The outcomes Alice and Bob will record, computed by Eve from her hidden
/// polarization alone. Only defined for the double blinding scenarios.
pub fn eve_predict<T: Scalar>(
    hidden_lambda: PolarizationAngle<T>,
    weak_side: Option<Side>,
    theta_a: PolarizationAngle<T>,
    theta_b: PolarizationAngle<T>,
    cfg: &ScenarioConfig<T>,
) -> Result<(Outcome, Outcome)> {
    match cfg.kind {
        ScenarioKind::DoubleBlindBbm92 => Ok((
            strong_response(hidden_lambda, theta_a),
            strong_response(hidden_lambda, theta_b).flipped(),
        )),
        ScenarioKind::DoubleBlindEkert => {
            check_alpha(cfg.alpha)?;
            let weak = weak_side.ok_or(Error::invalid("weak_side", "required for the Ekert tuning"))?;
            let a = match weak {
                Side::A => weak_response(hidden_lambda, theta_a, cfg.alpha),
                Side::B => strong_response(hidden_lambda, theta_a),
            };
            // Bob's pulse is rotated by π/2, which flips the sign and maps the
            // silent band onto itself.
            let b = match weak {
                Side::B => weak_response(hidden_lambda, theta_b, cfg.alpha),
                Side::A => strong_response(hidden_lambda, theta_b),
            }
            .flipped();
            Ok((a, b))
        }
        ScenarioKind::HonestSinglet | ScenarioKind::SingleBlinding => Err(Error::NotApplicable(
            "outcome prediction requires a double blinding-attack",
        )),
    }
}
