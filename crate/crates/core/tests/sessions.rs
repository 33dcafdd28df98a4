use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

use blindqkd::analysis::{
    efficiencies_from_counts, estimate_efficiencies, oracle_corr_ekert, oracle_corr_singlet, FairSamplingConfig,
    Verdict,
};
use blindqkd::protocol::{chsh_from_tally, chsh_select, run_session, run_tally, sift_bbm92, ChshAngles};
use blindqkd::sources::default_alpha;
use blindqkd::{
    Error, Outcome, PolarizationAngle, Protocol, ProtocolConfig, ScenarioConfig, ScenarioKind, SessionSummary, Side,
};

fn angle(x: f64) -> PolarizationAngle {
    PolarizationAngle::new(x)
}

#[test]
fn depolarized_honest_source_errs_at_half_the_noise() {
    let mut s = ScenarioConfig::new(ScenarioKind::HonestSinglet);
    s.depolarize_prob = 0.1;
    let p = ProtocolConfig::new(Protocol::Bbm92, 1_000_000, 3);
    let qber: f64 = run_tally(&p, &s).unwrap().tally.qber().unwrap();
    assert!((qber - 0.05).abs() <= 0.002, "qber {qber}");
}

#[test]
fn honest_source_sifts_without_errors() {
    let s = ScenarioConfig::new(ScenarioKind::HonestSinglet);
    let recs = run_session(&ProtocolConfig::new(Protocol::Bbm92, 100_000, 4), &s).unwrap();
    let sift = sift_bbm92(&recs, &s);
    assert_eq!(sift.errors, 0);
    assert!(sift.key.bits_eve.is_none());
    assert!((sift.key.len() as f64 / 100_000.0 - 0.5).abs() < 0.01);
}

#[test]
fn honest_correlations_follow_the_singlet() {
    let s = ScenarioConfig::new(ScenarioKind::HonestSinglet);
    let p = ProtocolConfig::new(Protocol::Bbm92, 1_000_000, 5).with_settings(vec![angle(0.0)], vec![angle(FRAC_PI_4)]);
    let e = run_tally(&p, &s)
        .unwrap()
        .tally
        .correlation(angle(0.0), angle(FRAC_PI_4))
        .unwrap();
    assert!(e.value.unwrap().abs() <= 0.004);
    assert!((oracle_corr_singlet(FRAC_PI_4, 0.0) as f64).abs() < 1e-15);

    // 4e6 rounds puts the 0.01 tolerance near five standard errors.
    let p = ProtocolConfig::new(Protocol::Ekert, 4_000_000, 6);
    let stats = run_tally(&p, &s).unwrap();
    let chsh = chsh_from_tally(&stats.tally, &ChshAngles::ekert_default())
        .unwrap()
        .chsh()
        .unwrap();
    assert!((chsh.value - 2.0 * SQRT_2).abs() <= 0.01, "S = {}", chsh.value);
}

#[test]
fn chsh_from_records_matches_streamed_tally() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let p = ProtocolConfig::new(Protocol::Ekert, 50_000, 7);
    let recs = run_session(&p, &s).unwrap();
    let a = chsh_select(&recs, &ChshAngles::ekert_default())
        .unwrap()
        .chsh()
        .unwrap();
    let b = chsh_from_tally(&run_tally(&p, &s).unwrap().tally, &ChshAngles::ekert_default())
        .unwrap()
        .chsh()
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn chsh_select_rejects_missing_settings() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindBbm92);
    let recs = run_session(&ProtocolConfig::new(Protocol::Bbm92, 1_000, 8), &s).unwrap();
    assert!(chsh_select(&recs, &ChshAngles::ekert_default()).is_err());
}

#[test]
fn ekert_attack_matches_the_correlation_oracle() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let alpha = default_alpha::<f64>();
    for (k, delta) in [0.0, 0.2, FRAC_PI_8, 0.5, FRAC_PI_4, 1.0, 3.0 * FRAC_PI_8, FRAC_PI_2]
        .into_iter()
        .enumerate()
    {
        let p = ProtocolConfig::new(Protocol::Bbm92, 400_000, 100 + k as u64)
            .with_settings(vec![angle(0.0)], vec![angle(delta)]);
        let e = run_tally(&p, &s)
            .unwrap()
            .tally
            .correlation(angle(0.0), angle(delta))
            .unwrap();
        let oracle = oracle_corr_ekert(angle(delta).diff(angle(0.0)), alpha).unwrap();
        let se = e.stderr.unwrap().max(1e-3);
        assert!(
            (e.value.unwrap() - oracle).abs() <= 4.0 * se,
            "Δ={delta}: {:?} vs {oracle}",
            e.value
        );
    }
}

#[test]
fn correlation_depends_only_on_the_setting_difference() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let stats = run_tally(&ProtocolConfig::new(Protocol::Ekert, 1_000_000, 9), &s).unwrap();
    let pooled = stats.tally.correlations_by_delta();
    for (ta, tb, m) in stats.tally.pairs() {
        let e = m.correlation::<f64>();
        let d = tb.diff(ta);
        let (_, bin) = pooled.iter().find(|(bd, _)| (bd - d).abs() < 1e-9).unwrap();
        let se = e.stderr.unwrap().hypot(bin.stderr.unwrap()).max(1e-3);
        assert!((e.value.unwrap() - bin.value.unwrap()).abs() <= 4.0 * se);
    }
}

#[test]
fn detection_rate_does_not_depend_on_the_local_setting() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let stats = run_tally(&ProtocolConfig::new(Protocol::Ekert, 1_000_000, 10), &s).unwrap();
    for (side, n) in [
        (Side::A, stats.tally.alice_settings().len()),
        (Side::B, stats.tally.bob_settings().len()),
    ] {
        let rates: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let (t, d) = stats.tally.setting_counts(side, i);
                let p = d as f64 / t as f64;
                (p, (p * (1.0 - p) / t as f64).sqrt())
            })
            .collect();
        for w in rates.windows(2) {
            assert!(
                (w[0].0 - w[1].0).abs() <= 4.0 * w[0].1.hypot(w[1].1),
                "{side:?}: {rates:?}"
            );
        }
    }
}

#[test]
fn strong_pulse_always_clicks_and_one_side_at_most_is_silent() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let recs = run_session(&ProtocolConfig::new(Protocol::Ekert, 200_000, 11), &s).unwrap();
    for r in &recs {
        let strong = match r.weak_side.unwrap() {
            Side::A => r.outcome_b,
            Side::B => r.outcome_a,
        };
        assert!(strong.is_click(), "round {}", r.index);
        assert!(!(r.outcome_a == Outcome::NoClick && r.outcome_b == Outcome::NoClick));
    }
}

#[test]
fn ekert_attack_sits_on_the_efficiency_floor() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let n = 1_000_000;
    let stats = run_tally(&ProtocolConfig::new(Protocol::Ekert, n, 12), &s).unwrap();
    let eff = efficiencies_from_counts::<f64>(&stats.tally.overall(), Some(n)).unwrap();
    assert!(
        eff.larsson_margin().unwrap().abs() <= 0.003,
        "{:?}",
        eff.larsson_margin()
    );

    let honest = ScenarioConfig::new(ScenarioKind::HonestSinglet);
    let recs = run_session(&ProtocolConfig::new(Protocol::Ekert, 10_000, 12), &honest).unwrap();
    let eff = estimate_efficiencies(&recs, Some(10_000)).unwrap();
    assert_eq!(eff.eta.unwrap().value, 1.0);
    assert_eq!(eff.larsson_margin(), Some(0.0));
}

#[test]
fn same_seed_same_session_and_seeds_matter() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let p = ProtocolConfig::new(Protocol::Ekert, 5_000, 13);
    assert_eq!(run_session(&p, &s).unwrap(), run_session(&p, &s).unwrap());
    let q = ProtocolConfig { seed: 14, ..p.clone() };
    assert_ne!(run_session(&p, &s).unwrap(), run_session(&q, &s).unwrap());
}

#[test]
fn prefix_of_a_longer_session_is_the_shorter_session() {
    let s = ScenarioConfig::new(ScenarioKind::SingleBlinding);
    let short = run_session(&ProtocolConfig::new(Protocol::Bbm92, 1_000, 15), &s).unwrap();
    let long = run_session(&ProtocolConfig::new(Protocol::Bbm92, 3_000, 15), &s).unwrap();
    assert_eq!(short[..], long[..1_000]);
}

#[test]
fn invalid_configurations_name_the_parameter() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let err = run_session(&ProtocolConfig::new(Protocol::Ekert, 0, 0), &s).unwrap_err();
    assert_eq!(err.parameter(), Some("rounds"));

    let mut bad = s.clone();
    bad.alpha = PI / 3.0;
    let err = run_tally(&ProtocolConfig::new(Protocol::Ekert, 10, 0), &bad).unwrap_err();
    assert!(matches!(err, Error::OutOfDomain { name: "alpha", .. }), "{err}");

    let mut bad = ScenarioConfig::new(ScenarioKind::HonestSinglet);
    bad.depolarize_prob = 1.5;
    assert!(run_tally(&ProtocolConfig::new(Protocol::Bbm92, 10, 0), &bad).is_err());
}

#[test]
fn summary_reports_the_attack() {
    let s = ScenarioConfig::new(ScenarioKind::DoubleBlindEkert);
    let p = ProtocolConfig::new(Protocol::Ekert, 200_000, 16);
    let stats = run_tally(&p, &s).unwrap();
    let summary = SessionSummary::build(&p, &s, &stats, &FairSamplingConfig::default()).unwrap();
    let v = serde_json::to_value(&summary).unwrap();
    assert_eq!(v["scenario"], "double-ekert");
    assert_eq!(v["protocol"], "ekert");
    assert_eq!(v["rounds"], 200_000);
    assert!((v["chsh"]["value"].as_f64().unwrap() - 2.0 * SQRT_2).abs() < 0.05);
    assert_eq!(
        v["monitors"]["fair_sampling"]["verdict"],
        serde_json::to_value(Verdict::Pass).unwrap()
    );
}
