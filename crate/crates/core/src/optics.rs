//! Polarization angles, bright pulses, and threshold detection at a
//! polarizing beamsplitter whose detectors have been forced into linear mode.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, Scalar};

/// Direction of linear polarization (or of an analyzer), stored in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct PolarizationAngle<T>(T);

impl<T: Scalar> PolarizationAngle<T> {
    /// Builds the canonical representative of `radians` modulo π.
    pub fn new(radians: T) -> Self {
        let pi = T::PI();
        let mut r = radians % pi;
        if r < T::zero() {
            r = r + pi;
        }
        // `x % π + π` can round up to π for tiny negative x.
        if r >= pi {
            r = T::zero();
        }
        PolarizationAngle(r)
    }

    #[inline]
    pub fn zero() -> Self {
        PolarizationAngle(T::zero())
    }

    #[inline]
    pub fn radians(self) -> T {
        self.0
    }

    /// The angle rotated by `delta` radians.
    pub fn rotated(self, delta: T) -> Self {
        Self::new(self.0 + delta)
    }

    /// The orthogonal polarization direction.
    pub fn orthogonal(self) -> Self {
        self.rotated(T::FRAC_PI_2())
    }

    /// Signed difference `self − other` reduced to `[−π/2, π/2]`.
    pub fn diff(self, other: Self) -> T {
        reduce_difference(self.0 - other.0)
    }
}

impl<T: Scalar> fmt::Display for PolarizationAngle<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reduces an arbitrary angle difference modulo π into `[−π/2, π/2]`.
pub fn reduce_difference<T: Scalar>(d: T) -> T {
    let pi = T::PI();
    let mut r = d % pi;
    if r > T::FRAC_PI_2() {
        r = r - pi;
    } else if r < -T::FRAC_PI_2() {
        r = r + pi;
    }
    r
}

/// Non-negative light intensity in units of the discriminator threshold.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Intensity<T>(T);

impl<T: Scalar> Intensity<T> {
    pub fn new(value: T) -> Result<Self> {
        if value.is_finite() && value >= T::zero() {
            Ok(Intensity(value))
        } else {
            Err(Error::invalid(
                "intensity",
                format!("must be finite and >= 0, got {value}"),
            ))
        }
    }

    /// Threshold intensity `I_th`, the unit of every intensity in the crate.
    pub fn threshold_unit() -> Self {
        Intensity(T::one())
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    /// `self · k` for a non-negative factor.
    pub fn scaled(self, k: T) -> Result<Self> {
        Self::new(self.0 * k)
    }
}

/// A bright classical pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse<T> {
    pub intensity: Intensity<T>,
    pub polarization: PolarizationAngle<T>,
}

impl<T: Scalar> Pulse<T> {
    pub fn new(intensity: Intensity<T>, polarization: PolarizationAngle<T>) -> Self {
        Pulse {
            intensity,
            polarization,
        }
    }
}

/// One party's measurement apparatus: a PBS at `setting` followed by two
/// blinded detectors sharing the same `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorStation<T> {
    threshold: Intensity<T>,
    setting: PolarizationAngle<T>,
}

impl<T: Scalar> DetectorStation<T> {
    pub fn new(threshold: Intensity<T>, setting: PolarizationAngle<T>) -> Result<Self> {
        if threshold.value() <= T::zero() {
            return Err(Error::invalid("threshold", "must be > 0"));
        }
        Ok(DetectorStation { threshold, setting })
    }

    /// Station with the unit threshold.
    pub fn unit(setting: PolarizationAngle<T>) -> Self {
        DetectorStation {
            threshold: Intensity::threshold_unit(),
            setting,
        }
    }

    pub fn threshold(&self) -> Intensity<T> {
        self.threshold
    }

    pub fn setting(&self) -> PolarizationAngle<T> {
        self.setting
    }

    pub fn measure(&self, pulse: Pulse<T>) -> Outcome {
        measure_pulse(pulse, self)
    }
}

/// Detection result at one station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// Click in channel 0 only.
    Plus,
    /// Click in channel 1 only.
    Minus,
    NoClick,
    /// Both channels fired; never produced by a correctly tuned attack.
    DoubleClick,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Plus, Outcome::Minus, Outcome::NoClick, Outcome::DoubleClick];

    /// `+1`, `−1` or `0`; `None` for a double click.
    pub fn value(self) -> Option<i8> {
        match self {
            Outcome::Plus => Some(1),
            Outcome::Minus => Some(-1),
            Outcome::NoClick => Some(0),
            Outcome::DoubleClick => None,
        }
    }

    /// True for a single-channel click, the only outcome entering correlations.
    pub fn is_click(self) -> bool {
        matches!(self, Outcome::Plus | Outcome::Minus)
    }

    /// True if any detector fired.
    pub fn is_detection(self) -> bool {
        self != Outcome::NoClick
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
            Outcome::NoClick => 2,
            Outcome::DoubleClick => 3,
        }
    }

    /// Outcome with channels swapped.
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
            other => other,
        }
    }

    /// Maps the sign of `x` onto a click; zero gives no click.
    pub fn from_sign<T: Scalar>(x: T) -> Self {
        if x > T::zero() {
            Outcome::Plus
        } else if x < T::zero() {
            Outcome::Minus
        } else {
            Outcome::NoClick
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("double"),
        }
    }
}

/// Malus-law split of `pulse` at a PBS oriented along `setting`:
/// `(I·cos²(λ−θ), I·sin²(λ−θ))`.
pub fn malus_split<T: Scalar>(pulse: Pulse<T>, setting: PolarizationAngle<T>) -> (Intensity<T>, Intensity<T>) {
    let i = pulse.intensity.value();
    let d = pulse.polarization.diff(setting);
    let c = (lit::<T>(2.0) * d).cos();
    let half = lit::<T>(0.5);
    let i0 = i * (T::one() + c) * half;
    let i1 = i * (T::one() - c) * half;
    // 1 ± c never goes negative for |c| <= 1, but clamp rounding residue.
    (Intensity(i0.max(T::zero())), Intensity(i1.max(T::zero())))
}

/// Click logic for linear-mode detectors; a channel fires only on intensity
/// strictly above `threshold`.
pub fn threshold_click<T: Scalar>(i0: Intensity<T>, i1: Intensity<T>, threshold: Intensity<T>) -> Outcome {
    let th = threshold.value();
    match (i0.value() > th, i1.value() > th) {
        (true, false) => Outcome::Plus,
        (false, true) => Outcome::Minus,
        (true, true) => Outcome::DoubleClick,
        (false, false) => Outcome::NoClick,
    }
}

pub fn measure_pulse<T: Scalar>(pulse: Pulse<T>, station: &DetectorStation<T>) -> Outcome {
    let (i0, i1) = malus_split(pulse, station.setting);
    threshold_click(i0, i1, station.threshold)
}
