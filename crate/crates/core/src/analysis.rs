//! Closed-form predictions for the attack, CHSH efficiency bounds, and the
//! statistics Alice and Bob could use to notice it: efficiency estimates and a
//! fair-sampling check on setting dependence of the detection rates.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::num::{count, lit, to_f64, Scalar};
use crate::protocol::RoundRecord;
use crate::sources::{check_alpha, Side};
use crate::tally::{OutcomeMatrix, SessionTally};

/// Correlation of the λ-uniform strong-pulse attack, `−1 + (4/π)|Δ|`, for
/// `Δ = θ_B − θ_A` in `[−π/2, π/2]`.
pub fn oracle_corr_bbm92<T: Scalar>(delta: T) -> T {
    -T::one() + lit::<T>(4.0) / T::PI() * delta.abs()
}

/// Correlation on detected pairs under the Ekert tuning: `−1` below
/// `π/4 − α`, `+1` above `π/4 + α`, linear `(|Δ| − π/4)/α` in between.
pub fn oracle_corr_ekert<T: Scalar>(delta: T, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let d = delta.abs();
    let q = T::FRAC_PI_4();
    Ok(if d < q - alpha {
        -T::one()
    } else if d > q + alpha {
        T::one()
    } else {
        (d - q) / alpha
    })
}

/// Singlet correlation with white-noise fraction `p`: `−(1 − p)·cos 2Δ`.
pub fn oracle_corr_singlet<T: Scalar>(delta: T, depolarize_prob: T) -> T {
    -(T::one() - depolarize_prob) * (lit::<T>(2.0) * delta).cos()
}

/// Detection probability of a weak pulse, `4α/π`.
pub fn oracle_weak_detection_prob<T: Scalar>(alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    Ok(lit::<T>(4.0) * alpha / T::PI())
}

/// Per-side efficiency with the weak pulse shared evenly, `(1 + p_w)/2`.
pub fn oracle_eta<T: Scalar>(alpha: T) -> Result<T> {
    Ok((T::one() + oracle_weak_detection_prob(alpha)?) * lit(0.5))
}

/// Conditional efficiency `p_w / η`.
pub fn oracle_eta_conditional<T: Scalar>(alpha: T) -> Result<T> {
    Ok(oracle_weak_detection_prob(alpha)? / oracle_eta(alpha)?)
}

/// Largest CHSH value a local model reaches at conditional efficiency
/// `η₂,₁`: `4/η₂,₁ − 2`, valid for `2/3 ≤ η₂,₁ ≤ 1`.
pub fn chsh_bound_conditional<T: Scalar>(eta_21: T) -> Result<T> {
    let lo = lit::<T>(2.0) / lit(3.0);
    if !(eta_21 >= lo && eta_21 <= T::one()) {
        return Err(Error::OutOfDomain {
            name: "eta_21",
            value: to_f64(eta_21),
            domain: "[2/3, 1]",
        });
    }
    Ok(lit::<T>(4.0) / eta_21 - lit(2.0))
}

/// Largest CHSH value a local model reaches at detection efficiency `η`
/// without independence of non-detections: `2/(2η − 1)`, valid for
/// `3/4 ≤ η ≤ 1`.
pub fn chsh_bound_detection<T: Scalar>(eta: T) -> Result<T> {
    if !(eta >= lit(0.75) && eta <= T::one()) {
        return Err(Error::OutOfDomain {
            name: "eta",
            value: to_f64(eta),
            domain: "[3/4, 1]",
        });
    }
    Ok(lit::<T>(2.0) / (lit::<T>(2.0) * eta - T::one()))
}

/// Lower limit on `η₂,₁` implied by `η`: `2 − 1/η`.
pub fn larsson_floor<T: Scalar>(eta: T) -> T {
    lit::<T>(2.0) - eta.recip()
}

/// A rate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub stderr: T,
}

impl<T: Scalar> Estimate<T> {
    fn binomial(successes: u64, trials: u64) -> Option<Self> {
        if trials == 0 {
            return None;
        }
        let n = count::<T>(trials);
        let p = count::<T>(successes) / n;
        Some(Estimate {
            value: p,
            stderr: (p * (T::one() - p) / n).sqrt(),
        })
    }

    /// True if `|value − target| ≤ tol`.
    pub fn within(&self, target: T, tol: T) -> bool {
        (self.value - target).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport<T> {
    /// Singles per side per emitted pair; `None` if the emission count is unknown.
    pub eta: Option<Estimate<T>>,
    /// Coincidences per single, symmetrized over the two sides.
    pub eta_21: Option<Estimate<T>>,
    /// Singles rate of Alice and Bob; needs the emission count.
    pub per_side_rates: Option<(Estimate<T>, Estimate<T>)>,
    pub n_emitted: Option<u64>,
    pub singles: (u64, u64),
    pub coincidences: u64,
}

impl<T: Scalar> EfficiencyReport<T> {
    /// `η₂,₁ − (2 − 1/η)`, when both are available.
    pub fn larsson_margin(&self) -> Option<T> {
        Some(self.eta_21?.value - larsson_floor(self.eta?.value))
    }
}

/// Efficiency estimates from the joint detection histogram. Rounds missing
/// from the records but counted in `n_emitted` are taken as undetected on
/// both sides.
pub fn efficiencies_from_counts<T: Scalar>(m: &OutcomeMatrix, n_emitted: Option<u64>) -> Result<EfficiencyReport<T>> {
    let recorded = m.total();
    if recorded == 0 {
        return Err(Error::invalid("records", "must not be empty"));
    }
    if let Some(n) = n_emitted {
        if n < recorded {
            return Err(Error::invalid(
                "n_emitted",
                format!("{n} is less than the {recorded} recorded rounds"),
            ));
        }
    }
    let sa = m.detections(Side::A);
    let sb = m.detections(Side::B);
    let both = m.joint_detections();
    let only_a = sa - both;
    let only_b = sb - both;

    let eta = n_emitted.map(|n| {
        // Singles per round s ∈ {0, 1, 2}.
        let nt = count::<T>(n);
        let mean = count::<T>(sa + sb) / nt;
        let mean_sq = (count::<T>(only_a + only_b) + lit::<T>(4.0) * count::<T>(both)) / nt;
        let var = (mean_sq - mean * mean).max(T::zero());
        Estimate {
            value: mean * lit(0.5),
            stderr: (var / nt).sqrt() * lit(0.5),
        }
    });

    let eta_21 = (sa + sb > 0).then(|| {
        // Delta method for R = 2·c̄/s̄ with c = coincidence indicator, s = singles.
        let nt = count::<T>(recorded);
        let mc = count::<T>(both) / nt;
        let ms = count::<T>(sa + sb) / nt;
        let r = mc / ms;
        let g = |c: T, s: T| c - r * s;
        let none = recorded - only_a - only_b - both;
        let var_g = (count::<T>(none) * g(T::zero(), T::zero()).powi(2)
            + count::<T>(only_a + only_b) * g(T::zero(), T::one()).powi(2)
            + count::<T>(both) * g(T::one(), lit(2.0)).powi(2))
            / nt;
        Estimate {
            value: lit::<T>(2.0) * r,
            stderr: lit::<T>(2.0) * (var_g / nt).sqrt() / ms,
        }
    });

    let per_side_rates = n_emitted.map(|n| {
        (
            Estimate::binomial(sa, n).expect("n > 0"),
            Estimate::binomial(sb, n).expect("n > 0"),
        )
    });

    Ok(EfficiencyReport {
        eta,
        eta_21,
        per_side_rates,
        n_emitted,
        singles: (sa, sb),
        coincidences: both,
    })
}

pub fn estimate_efficiencies<T: Scalar>(
    records: &[RoundRecord<T>],
    n_emitted: Option<u64>,
) -> Result<EfficiencyReport<T>> {
    efficiencies_from_counts(&tally_records(records).overall(), n_emitted)
}

/// Detection rate on whichever side received the weak pulse.
pub fn weak_side_detection_rate<T: Scalar>(tally: &SessionTally<T>) -> Option<Estimate<T>> {
    let a = tally.weak_side(Side::A);
    let b = tally.weak_side(Side::B);
    Estimate::binomial(a.detected + b.detected, a.rounds + b.rounds)
}

fn tally_records<T: Scalar>(records: &[RoundRecord<T>]) -> SessionTally<T> {
    let mut t = SessionTally::empty();
    for r in records {
        t.add(r.theta_a, r.theta_b, r.outcome_a, r.outcome_b, r.weak_side);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairSamplingConfig {
    /// Family-wise significance level.
    pub significance: f64,
    /// Fewer rounds than this in any setting cell makes the verdict inconclusive.
    pub min_cell_count: u64,
}

impl Default for FairSamplingConfig {
    fn default() -> Self {
        FairSamplingConfig {
            significance: 0.01,
            min_cell_count: 100,
        }
    }
}

/// Chi-square test that a detection rate is the same across setting cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityTest {
    pub name: &'static str,
    pub trials: Vec<u64>,
    pub rates: Vec<f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl HomogeneityTest {
    /// `cells` holds `(trials, successes)` per setting cell.
    pub fn run(name: &'static str, cells: &[(u64, u64)]) -> Self {
        let n: u64 = cells.iter().map(|c| c.0).sum();
        let d: u64 = cells.iter().map(|c| c.1).sum();
        let rates = cells
            .iter()
            .map(|&(t, s)| if t > 0 { s as f64 / t as f64 } else { f64::NAN })
            .collect();
        let dof = cells.iter().filter(|c| c.0 > 0).count().saturating_sub(1);
        let pooled = if n > 0 { d as f64 / n as f64 } else { 0.0 };
        let statistic = if pooled <= 0.0 || pooled >= 1.0 {
            0.0
        } else {
            cells
                .iter()
                .filter(|c| c.0 > 0)
                .map(|&(t, s)| {
                    let expect = t as f64 * pooled;
                    (s as f64 - expect).powi(2) / (expect * (1.0 - pooled))
                })
                .sum()
        };
        let p_value = if dof == 0 || statistic == 0.0 {
            1.0
        } else {
            ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN)
        };
        HomogeneityTest {
            name,
            trials: cells.iter().map(|c| c.0).collect(),
            rates,
            statistic,
            dof,
            p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairSamplingReport {
    pub verdict: Verdict,
    pub significance: f64,
    /// Level applied to each individual test (Bonferroni split).
    pub per_test_level: f64,
    pub tests: Vec<HomogeneityTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Checks whether Alice's singles rate, Bob's singles rate and the
/// coincidence rate depend on the local settings.
pub fn fair_sampling_from_tally<T: Scalar>(tally: &SessionTally<T>, cfg: &FairSamplingConfig) -> FairSamplingReport {
    let na = tally.alice_settings().len();
    let nb = tally.bob_settings().len();
    let alice: Vec<_> = (0..na).map(|i| tally.setting_counts(Side::A, i)).collect();
    let bob: Vec<_> = (0..nb).map(|i| tally.setting_counts(Side::B, i)).collect();
    let pairs: Vec<_> = (0..na)
        .flat_map(|ia| (0..nb).map(move |ib| (ia, ib)))
        .map(|(ia, ib)| {
            let m = tally.cell(ia, ib);
            (m.total(), m.joint_detections())
        })
        .collect();

    let tests = vec![
        HomogeneityTest::run("alice_singles", &alice),
        HomogeneityTest::run("bob_singles", &bob),
        HomogeneityTest::run("coincidences", &pairs),
    ];
    let per_test_level = cfg.significance / tests.len() as f64;

    let reason = if na < 2 || nb < 2 {
        Some(format!("need at least 2 settings per side, have {na} and {nb}"))
    } else if pairs.iter().any(|c| c.0 < cfg.min_cell_count) {
        Some(format!("a setting pair has fewer than {} rounds", cfg.min_cell_count))
    } else {
        None
    };
    let verdict = if reason.is_some() {
        Verdict::Inconclusive
    } else if tests.iter().any(|t| t.p_value < per_test_level) {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    FairSamplingReport {
        verdict,
        significance: cfg.significance,
        per_test_level,
        tests,
        reason,
    }
}

pub fn fair_sampling_monitor<T: Scalar>(records: &[RoundRecord<T>], cfg: &FairSamplingConfig) -> FairSamplingReport {
    fair_sampling_from_tally(&tally_records(records), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

    const ALPHA: f64 = PI / (4.0 * SQRT_2);

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Conditional correlation by direct quadrature over λ of the sign rules,
    /// independent of the piecewise formula.
    fn ekert_corr_quadrature(delta: f64, alpha: f64) -> f64 {
        let n = 400_000;
        let (mut sum, mut det) = (0.0, 0.0);
        for k in 0..n {
            let l = PI * (k as f64 + 0.5) / n as f64;
            let c = (2.0 * l).cos();
            let a = if c > (2.0 * alpha).cos() {
                1.0
            } else if -c > (2.0 * alpha).cos() {
                -1.0
            } else {
                0.0
            };
            let b = -(2.0 * (l - delta)).cos().signum();
            if a != 0.0 {
                det += 1.0;
                sum += a * b;
            }
        }
        sum / det
    }

    #[test]
    fn bbm92_oracle_examples() {
        assert_eq!(oracle_corr_bbm92(0.0), -1.0);
        assert!(close(oracle_corr_bbm92(FRAC_PI_4), 0.0, 1e-15));
        assert!(close(oracle_corr_bbm92(FRAC_PI_2), 1.0, 1e-15));
        assert!(close(oracle_corr_bbm92(-FRAC_PI_4), 0.0, 1e-15));
    }

    #[test]
    fn ekert_oracle_examples() {
        let r = SQRT_2 / 2.0;
        assert!(close(oracle_corr_ekert(FRAC_PI_8, ALPHA).unwrap(), -r, 1e-12));
        assert!(close(oracle_corr_ekert(3.0 * FRAC_PI_8, ALPHA).unwrap(), r, 1e-12));
        for a in [0.1, ALPHA, 0.7] {
            assert_eq!(oracle_corr_ekert(0.0, a).unwrap(), -1.0);
        }
        assert!(oracle_corr_ekert(0.1, 0.0).is_err());
        assert!(oracle_corr_ekert(0.1, FRAC_PI_4).is_err());
    }

    #[test]
    fn ekert_oracle_matches_quadrature() {
        for delta in [0.0, 0.1, FRAC_PI_8, 0.5, FRAC_PI_4, 3.0 * FRAC_PI_8, 1.2, FRAC_PI_2] {
            let q = ekert_corr_quadrature(delta, ALPHA);
            let o = oracle_corr_ekert(delta, ALPHA).unwrap();
            assert!(close(q, o, 1e-4), "Δ = {delta}: quadrature {q}, oracle {o}");
        }
    }

    #[test]
    fn ekert_oracle_is_continuous() {
        for a in [0.05, 0.3, ALPHA, 0.75] {
            assert!(close(oracle_corr_ekert(FRAC_PI_4 - a, a).unwrap(), -1.0, 1e-12));
            assert!(close(oracle_corr_ekert(FRAC_PI_4 + a, a).unwrap(), 1.0, 1e-12));
        }
    }

    #[test]
    fn efficiency_oracles() {
        assert!(close(oracle_weak_detection_prob(ALPHA).unwrap(), 1.0 / SQRT_2, 1e-12));
        assert!(close(oracle_weak_detection_prob(FRAC_PI_8).unwrap(), 0.5, 1e-12));
        assert!(close(oracle_weak_detection_prob(FRAC_PI_4 - 1e-12).unwrap(), 1.0, 1e-9));

        assert!(close(oracle_eta(ALPHA).unwrap(), (SQRT_2 + 2.0) / 4.0, 1e-12));
        assert!(close(oracle_eta(ALPHA).unwrap(), 0.85355, 1e-5));
        assert!(close(oracle_eta(FRAC_PI_8).unwrap(), 0.75, 1e-12));

        assert!(close(
            oracle_eta_conditional(ALPHA).unwrap(),
            2.0 * (SQRT_2 - 1.0),
            1e-12
        ));
        assert!(close(oracle_eta_conditional(FRAC_PI_8).unwrap(), 2.0 / 3.0, 1e-12));
        assert!(close(oracle_eta_conditional(FRAC_PI_4 - 1e-12).unwrap(), 1.0, 1e-9));

        for bad in [0.0, -0.2, FRAC_PI_4, 1.0] {
            assert!(oracle_weak_detection_prob(bad).is_err());
            assert!(oracle_eta(bad).is_err());
            assert!(oracle_eta_conditional(bad).is_err());
        }
    }

    #[test]
    fn bound_examples() {
        let tsq = 2.0 * SQRT_2;
        assert!(close(chsh_bound_conditional(2.0 * (SQRT_2 - 1.0)).unwrap(), tsq, 1e-12));
        assert!(close(chsh_bound_conditional(1.0).unwrap(), 2.0, 1e-12));
        assert!(close(chsh_bound_conditional(2.0 / 3.0).unwrap(), 4.0, 1e-12));
        assert!(close(chsh_bound_detection((SQRT_2 + 2.0) / 4.0).unwrap(), tsq, 1e-12));
        assert!(close(chsh_bound_detection(1.0).unwrap(), 2.0, 1e-12));
        assert!(close(chsh_bound_detection(0.75).unwrap(), 4.0, 1e-12));
        assert!(matches!(
            chsh_bound_detection(0.5),
            Err(Error::OutOfDomain { name: "eta", .. })
        ));
        assert!(matches!(
            chsh_bound_conditional(0.6),
            Err(Error::OutOfDomain { name: "eta_21", .. })
        ));
    }

    #[test]
    fn attack_sits_on_both_bounds() {
        let tsq = 2.0 * SQRT_2;
        let by_cond = chsh_bound_conditional(oracle_eta_conditional(ALPHA).unwrap()).unwrap();
        let by_det = chsh_bound_detection(oracle_eta(ALPHA).unwrap()).unwrap();
        assert!(close(by_cond, tsq, 1e-12) && close(by_det, tsq, 1e-12));
        // η₂,₁ = 2 − 1/η holds with equality for this attack at every α.
        for a in [0.1, 0.3, ALPHA, 0.7] {
            let gap = oracle_eta_conditional(a).unwrap() - larsson_floor(oracle_eta(a).unwrap());
            assert!(gap.abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_decrease_strictly() {
        let grid = |lo: f64, k: usize| (0..=k).map(move |i| lo + (1.0 - lo) * i as f64 / k as f64);
        let c: Vec<f64> = grid(2.0 / 3.0, 500)
            .map(|x| chsh_bound_conditional(x).unwrap())
            .collect();
        let d: Vec<f64> = grid(0.75, 500).map(|x| chsh_bound_detection(x).unwrap()).collect();
        assert!(c.windows(2).all(|w| w[1] < w[0]));
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn efficiency_estimator_on_fixture() {
        use crate::optics::Outcome::*;
        let mut m = OutcomeMatrix::default();
        for _ in 0..6 {
            m.add(Plus, Minus);
        }
        for _ in 0..2 {
            m.add(NoClick, Plus);
        }
        for _ in 0..2 {
            m.add(Minus, NoClick);
        }
        let r = efficiencies_from_counts::<f64>(&m, Some(10)).unwrap();
        assert_eq!(r.singles, (8, 8));
        assert_eq!(r.coincidences, 6);
        assert!(close(r.eta.unwrap().value, 0.8, 1e-15));
        assert!(close(r.eta_21.unwrap().value, 0.75, 1e-15));
        let (a, b) = r.per_side_rates.unwrap();
        assert!(close(a.value, 0.8, 1e-15) && close(b.value, 0.8, 1e-15));

        let unknown = efficiencies_from_counts::<f64>(&m, None).unwrap();
        assert!(unknown.eta.is_none() && unknown.per_side_rates.is_none());
        assert!(close(unknown.eta_21.unwrap().value, 0.75, 1e-15));

        // Twenty emissions of which only ten were recorded.
        let sparse = efficiencies_from_counts::<f64>(&m, Some(20)).unwrap();
        assert!(close(sparse.eta.unwrap().value, 0.4, 1e-15));
        assert!(efficiencies_from_counts::<f64>(&m, Some(5)).is_err());
        assert!(efficiencies_from_counts::<f64>(&OutcomeMatrix::default(), None).is_err());
    }

    #[test]
    fn homogeneity_test_basics() {
        let flat = HomogeneityTest::run("flat", &[(1000, 500), (1000, 500)]);
        assert_eq!(flat.statistic, 0.0);
        assert_eq!(flat.p_value, 1.0);
        let saturated = HomogeneityTest::run("all", &[(1000, 1000), (1000, 1000)]);
        assert_eq!(saturated.p_value, 1.0);
        let skewed = HomogeneityTest::run("skew", &[(1000, 1000), (1000, 500)]);
        assert!(skewed.p_value < 1e-10);
        // 2×2 table: statistic = N(ad − bc)²/(row and column products).
        let t = HomogeneityTest::run("t", &[(100, 60), (100, 45)]);
        let expected = 200.0 * (60.0 * 55.0 - 40.0 * 45.0f64).powi(2) / (100.0 * 100.0 * 105.0 * 95.0);
        assert!(close(t.statistic, expected, 1e-12));
        assert_eq!(t.dof, 1);
    }
}
