//! Machine-readable session summary with the closed-form expectations for
//! the configured parameters alongside the estimates.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{
    efficiencies_from_counts, fair_sampling_from_tally, oracle_corr_bbm92, oracle_corr_ekert, oracle_corr_singlet,
    oracle_eta, oracle_eta_conditional, oracle_weak_detection_prob, weak_side_detection_rate, Estimate,
    FairSamplingConfig, FairSamplingReport,
};
use crate::error::Result;
use crate::num::{to_f64, Scalar};
use crate::optics::{measure_pulse, DetectorStation, PolarizationAngle, Pulse};
use crate::protocol::{chsh_from_tally, chsh_value, ChshAngles, Protocol, ProtocolConfig, SessionStats};
use crate::sources::{ScenarioConfig, ScenarioKind, WeakSidePolicy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    pub alpha: f64,
    pub threshold: f64,
    pub strong_intensity: f64,
    pub single_blind_intensity: f64,
    pub weak_side: WeakSidePolicy,
    pub depolarize: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub theta_a: f64,
    pub theta_b: f64,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub coincidences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshSummary {
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    /// `(a,b)`, `(a,b′)`, `(a′,b)`, `(a′,b′)` in that order.
    pub pairs: Vec<PairSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencySummary {
    pub eta: Option<Estimate<f64>>,
    pub eta_21: Option<Estimate<f64>>,
    /// Alice's and Bob's singles rates.
    pub per_side: Option<[Estimate<f64>; 2]>,
    pub weak_side_rate: Option<Estimate<f64>>,
    pub singles: [u64; 2],
    pub coincidences: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monitors {
    pub fair_sampling: FairSamplingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EveSummary {
    pub predicted_rounds: u64,
    pub prediction_mismatches: u64,
    pub intercept_bob_clicks: u64,
    pub intercept_mismatches: u64,
    /// Fraction of sifted bits Eve holds; null when she has no view.
    pub key_match_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSummary {
    pub scenario: ScenarioKind,
    pub protocol: Protocol,
    pub rounds: u64,
    pub seed: u64,
    pub parameters: Parameters,
    pub qber: Option<f64>,
    pub sifted_bits: u64,
    pub double_clicks: u64,
    pub chsh: Option<ChshSummary>,
    pub efficiency: EfficiencySummary,
    pub monitors: Monitors,
    pub eve: EveSummary,
    pub oracle: BTreeMap<String, f64>,
}

fn est<T: Scalar>(e: Estimate<T>) -> Estimate<f64> {
    Estimate {
        value: to_f64(e.value),
        stderr: to_f64(e.stderr),
    }
}

/// Closed-form correlation for the scenario at `Δ = θ_B − θ_A`, where one exists.
pub fn oracle_correlation<T: Scalar>(scenario: &ScenarioConfig<T>, delta: T) -> Option<T> {
    match scenario.kind {
        ScenarioKind::HonestSinglet => Some(oracle_corr_singlet(delta, scenario.depolarize_prob)),
        ScenarioKind::DoubleBlindBbm92 => Some(oracle_corr_bbm92(delta)),
        ScenarioKind::DoubleBlindEkert => oracle_corr_ekert(delta, scenario.alpha).ok(),
        ScenarioKind::SingleBlinding => None,
    }
}

/// Bob's click probability under single blinding, by enumerating Eve's
/// bases against Bob's settings.
pub fn oracle_single_blind_bob_rate<T: Scalar>(
    scenario: &ScenarioConfig<T>,
    bob_settings: &[PolarizationAngle<T>],
) -> Option<f64> {
    let n = scenario.eve_bases.len() * bob_settings.len();
    if n == 0 {
        return None;
    }
    let clicks = scenario
        .eve_bases
        .iter()
        .flat_map(|&e| bob_settings.iter().map(move |&b| (e, b)))
        .filter(|&(e, b)| {
            let station = DetectorStation::new(scenario.threshold, b).expect("positive threshold");
            measure_pulse(Pulse::new(scenario.single_blind_intensity, e), &station).is_click()
        })
        .count();
    Some(clicks as f64 / n as f64)
}

fn oracle_table<T: Scalar>(pcfg: &ProtocolConfig<T>, scenario: &ScenarioConfig<T>) -> BTreeMap<String, f64> {
    let mut o = BTreeMap::new();
    match scenario.kind {
        ScenarioKind::HonestSinglet => {
            o.insert("qber".into(), to_f64(scenario.depolarize_prob) / 2.0);
            o.insert("eta".into(), 1.0);
            o.insert("eta_21".into(), 1.0);
        }
        ScenarioKind::SingleBlinding => {
            o.insert("qber".into(), 0.0);
            o.insert("alice_rate".into(), 1.0);
            if let Some(r) = oracle_single_blind_bob_rate(scenario, &pcfg.bob_settings) {
                o.insert("bob_rate".into(), r);
                o.insert("eta".into(), (1.0 + r) / 2.0);
            }
            o.insert("eve_key_match".into(), 1.0);
        }
        ScenarioKind::DoubleBlindBbm92 => {
            o.insert("qber".into(), 0.0);
            o.insert("eta".into(), 1.0);
            o.insert("eta_21".into(), 1.0);
            o.insert("eve_key_match".into(), 1.0);
        }
        ScenarioKind::DoubleBlindEkert => {
            o.insert("qber".into(), 0.0);
            let a = scenario.alpha;
            if let (Ok(pw), Ok(eta), Ok(eta21)) =
                (oracle_weak_detection_prob(a), oracle_eta(a), oracle_eta_conditional(a))
            {
                o.insert("weak_side_rate".into(), to_f64(pw));
                o.insert("eta".into(), to_f64(eta));
                o.insert("eta_21".into(), to_f64(eta21));
            }
            o.insert("eve_key_match".into(), 1.0);
        }
    }
    if pcfg.protocol == Protocol::Ekert {
        let q = ChshAngles::<T>::ekert_default();
        let e = |x: PolarizationAngle<T>, y: PolarizationAngle<T>| oracle_correlation(scenario, y.diff(x));
        if let (Some(e1), Some(e2), Some(e3), Some(e4)) = (
            e(q.a, q.b),
            e(q.a, q.b_prime),
            e(q.a_prime, q.b),
            e(q.a_prime, q.b_prime),
        ) {
            o.insert("chsh_e_ab".into(), to_f64(e1));
            o.insert("chsh_e_ab_prime".into(), to_f64(e2));
            o.insert("chsh_e_a_prime_b".into(), to_f64(e3));
            o.insert("chsh_e_a_prime_b_prime".into(), to_f64(e4));
            o.insert("chsh".into(), to_f64(chsh_value(e1, e2, e3, e4)));
        }
    }
    o
}

impl SessionSummary {
    pub fn build<T: Scalar>(
        pcfg: &ProtocolConfig<T>,
        scenario: &ScenarioConfig<T>,
        stats: &SessionStats<T>,
        fair: &FairSamplingConfig,
    ) -> Result<Self> {
        let tally = &stats.tally;
        let overall = tally.overall();
        let eff = efficiencies_from_counts::<T>(&overall, Some(pcfg.rounds))?;
        let (sifted, _) = tally.sift_counts();

        let chsh = match pcfg.protocol {
            Protocol::Bbm92 => None,
            Protocol::Ekert => {
                let angles = ChshAngles::ekert_default();
                let corr = chsh_from_tally(tally, &angles).ok();
                corr.map(|c| {
                    let s = c.chsh();
                    let quad = [
                        (angles.a, angles.b),
                        (angles.a, angles.b_prime),
                        (angles.a_prime, angles.b),
                        (angles.a_prime, angles.b_prime),
                    ];
                    ChshSummary {
                        value: s.map(|s| to_f64(s.value)),
                        stderr: s.map(|s| to_f64(s.stderr)),
                        pairs: quad
                            .iter()
                            .zip(c.as_array())
                            .map(|(&(a, b), e)| PairSummary {
                                theta_a: to_f64(a.radians()),
                                theta_b: to_f64(b.radians()),
                                value: e.value.map(to_f64),
                                stderr: e.stderr.map(to_f64),
                                coincidences: e.coincidences,
                            })
                            .collect(),
                    }
                })
            }
        };

        let has_eve_view = scenario.kind != ScenarioKind::HonestSinglet;
        Ok(SessionSummary {
            scenario: scenario.kind,
            protocol: pcfg.protocol,
            rounds: pcfg.rounds,
            seed: pcfg.seed,
            parameters: Parameters {
                alpha: to_f64(scenario.alpha),
                threshold: to_f64(scenario.threshold.value()),
                strong_intensity: to_f64(scenario.strong_intensity.value()),
                single_blind_intensity: to_f64(scenario.single_blind_intensity.value()),
                weak_side: scenario.weak_side_policy,
                depolarize: to_f64(scenario.depolarize_prob),
            },
            qber: tally.qber().map(to_f64),
            sifted_bits: sifted,
            double_clicks: overall.double_clicks(),
            chsh,
            efficiency: EfficiencySummary {
                eta: eff.eta.map(est),
                eta_21: eff.eta_21.map(est),
                per_side: eff.per_side_rates.map(|(a, b)| [est(a), est(b)]),
                weak_side_rate: weak_side_detection_rate(tally).map(est),
                singles: [eff.singles.0, eff.singles.1],
                coincidences: eff.coincidences,
            },
            monitors: Monitors {
                fair_sampling: fair_sampling_from_tally(tally, fair),
            },
            eve: EveSummary {
                predicted_rounds: stats.eve.predicted_rounds,
                prediction_mismatches: stats.eve.prediction_mismatches,
                intercept_bob_clicks: stats.eve.intercept_bob_clicks,
                intercept_mismatches: stats.eve.intercept_mismatches,
                key_match_fraction: if has_eve_view {
                    stats.eve.match_fraction::<T>().map(to_f64)
                } else {
                    None
                },
            },
            oracle: oracle_table(pcfg, scenario),
        })
    }
}
