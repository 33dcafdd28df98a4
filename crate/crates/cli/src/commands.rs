use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fs::File;
use std::io::BufWriter;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use blindqkd::analysis::{
    chsh_bound_conditional, chsh_bound_detection, efficiencies_from_counts, oracle_eta, oracle_eta_conditional,
    oracle_weak_detection_prob, weak_side_detection_rate, FairSamplingConfig,
};
use blindqkd::protocol::{chsh_from_tally, run_session, run_tally, with_workers, ChshAngles};
use blindqkd::records::write_records_csv;
use blindqkd::sources::default_alpha;
use blindqkd::summary::oracle_correlation;
use blindqkd::{
    Error, Intensity, PolarizationAngle, Protocol, ProtocolConfig, ScenarioConfig, ScenarioKind, SessionStats,
    SessionSummary,
};

use crate::output::{flatten, opt, write_csv, write_json};
use crate::{Axis, BoundsArgs, Format, RunArgs, SessionArgs, SweepArgs};

fn intensity(name: &'static str, v: f64) -> Result<Intensity, Error> {
    Intensity::new(v).map_err(|_| Error::InvalidParameter {
        name,
        reason: format!("must be finite and >= 0, got {v}"),
    })
}

impl SessionArgs {
    fn configs(&self) -> Result<(ProtocolConfig, ScenarioConfig), Error> {
        let pcfg = ProtocolConfig::new(self.protocol.into(), self.rounds, self.seed);
        let mut scfg = ScenarioConfig::new(self.scenario.into());
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                reason: format!("must be > 0, got {}", self.threshold),
            });
        }
        scfg.threshold = intensity("threshold", self.threshold)?;
        scfg.alpha = self.alpha.unwrap_or_else(default_alpha);
        scfg.strong_intensity = intensity(
            "strong-intensity",
            self.strong_intensity.unwrap_or(2.0 * self.threshold),
        )?;
        scfg.single_blind_intensity = intensity(
            "single-blind-intensity",
            self.single_blind_intensity.unwrap_or(1.5 * self.threshold),
        )?;
        scfg.weak_side_policy = self.weak_side.into();
        scfg.depolarize_prob = self.depolarize;
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::InvalidParameter {
                name: "significance",
                reason: format!("must lie in (0, 1), got {}", self.significance),
            });
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter {
                name: "workers",
                reason: "must be at least 1".into(),
            });
        }
        pcfg.validate()?;
        scfg.validate()?;
        Ok((pcfg, scfg))
    }

    fn fair_sampling(&self) -> FairSamplingConfig {
        FairSamplingConfig {
            significance: self.significance,
            ..FairSamplingConfig::default()
        }
    }

    /// Runs `f` on the requested number of workers.
    fn on_workers<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.workers {
            Some(n) => Ok(with_workers(n, f)?),
            None => Ok(f()),
        }
    }
}

pub fn run(args: &RunArgs) -> Result<()> {
    let s = &args.session;
    let (pcfg, scfg) = s.configs()?;
    if args.eve_view && args.records.is_none() {
        bail!("--eve-view requires --records");
    }

    let stats = s.on_workers(|| -> Result<SessionStats> {
        match &args.records {
            Some(path) => {
                let records = run_session(&pcfg, &scfg)?;
                let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
                write_records_csv(BufWriter::new(file), &records, &scfg, args.eve_view)?;
                Ok(SessionStats::from_records(&records, &scfg))
            }
            None => Ok(run_tally(&pcfg, &scfg)?),
        }
    })??;

    let summary = SessionSummary::build(&pcfg, &scfg, &stats, &s.fair_sampling())?;
    match args.format {
        Format::Json => write_json(args.out.as_deref(), &summary),
        Format::Csv => {
            let rows: Vec<Vec<String>> = flatten(&serde_json::to_value(&summary)?)
                .into_iter()
                .map(|(k, v)| vec![k, v])
                .collect();
            write_csv(args.out.as_deref(), &["key", "value"], &rows)
        }
    }
}

fn grid(args: &SweepArgs) -> Result<Vec<f64>, Error> {
    let bad = |reason: &str| Error::InvalidParameter {
        name: "grid",
        reason: reason.into(),
    };
    let points = match &args.grid {
        Some(g) => g
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| bad(&format!("cannot parse `{t}` as a number")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            let (from, to, step) = match args.axis {
                Axis::Delta => (
                    args.from.unwrap_or(0.0),
                    args.to.unwrap_or(FRAC_PI_2),
                    args.step.unwrap_or(std::f64::consts::PI / 36.0),
                ),
                Axis::Alpha => (
                    args.from.unwrap_or(0.1),
                    args.to.unwrap_or(0.7),
                    args.step.unwrap_or(0.1),
                ),
            };
            if !(step > 0.0 && step.is_finite() && from.is_finite() && to.is_finite()) {
                return Err(bad("step must be positive and bounds finite"));
            }
            if to < from {
                Vec::new()
            } else {
                let n = ((to - from) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| from + step * k as f64).collect()
            }
        }
    };
    if points.is_empty() {
        return Err(bad("must contain at least one point"));
    }
    if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("must be finite and strictly increasing"));
    }
    Ok(points)
}

#[derive(Serialize)]
struct DeltaRow {
    delta: f64,
    estimate: Option<f64>,
    stderr: Option<f64>,
    coincidences: u64,
    oracle: Option<f64>,
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    eta: Option<f64>,
    eta_stderr: Option<f64>,
    eta_oracle: f64,
    eta_21: Option<f64>,
    eta_21_stderr: Option<f64>,
    eta_21_oracle: f64,
    weak_rate: Option<f64>,
    weak_rate_stderr: Option<f64>,
    weak_rate_oracle: f64,
    chsh: Option<f64>,
    chsh_stderr: Option<f64>,
    chsh_oracle: Option<f64>,
}

fn emit<R: Serialize>(args: &SweepArgs, header: &[&str], rows: &[R], to_row: impl Fn(&R) -> Vec<String>) -> Result<()> {
    match args.format {
        Format::Json => write_json(args.out.as_deref(), &rows),
        Format::Csv => write_csv(
            args.out.as_deref(),
            header,
            &rows.iter().map(to_row).collect::<Vec<_>>(),
        ),
    }
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let s = &args.session;
    let (base, scfg) = s.configs()?;
    let points = grid(args)?;
    match args.axis {
        Axis::Delta => {
            let rows = s.on_workers(|| -> Result<Vec<DeltaRow>> {
                points
                    .iter()
                    .map(|&delta| {
                        let ta = PolarizationAngle::zero();
                        let tb = PolarizationAngle::new(delta);
                        let pcfg = base.clone().with_settings(vec![ta], vec![tb]);
                        let stats = run_tally(&pcfg, &scfg)?;
                        let e = stats.tally.correlation(ta, tb).expect("configured pair");
                        Ok(DeltaRow {
                            delta,
                            estimate: e.value,
                            stderr: e.stderr,
                            coincidences: e.coincidences,
                            oracle: oracle_correlation(&scfg, tb.diff(ta)),
                        })
                    })
                    .collect()
            })??;
            emit(
                args,
                &["delta", "estimate", "stderr", "coincidences", "oracle"],
                &rows,
                |r| {
                    vec![
                        r.delta.to_string(),
                        opt(r.estimate),
                        opt(r.stderr),
                        r.coincidences.to_string(),
                        opt(r.oracle),
                    ]
                },
            )
        }
        Axis::Alpha => {
            if scfg.kind != ScenarioKind::DoubleBlindEkert {
                return Err(Error::InvalidParameter {
                    name: "scenario",
                    reason: "an alpha sweep needs --scenario double-ekert".into(),
                }
                .into());
            }
            let pcfg = ProtocolConfig::new(Protocol::Ekert, base.rounds, base.seed);
            let rows = s.on_workers(|| -> Result<Vec<AlphaRow>> {
                points
                    .iter()
                    .map(|&alpha| {
                        let mut cfg = scfg.clone();
                        cfg.alpha = alpha;
                        cfg.validate()?;
                        let stats = run_tally(&pcfg, &cfg)?;
                        let eff = efficiencies_from_counts::<f64>(&stats.tally.overall(), Some(pcfg.rounds))?;
                        let weak = weak_side_detection_rate(&stats.tally);
                        let angles = ChshAngles::ekert_default();
                        let chsh = chsh_from_tally(&stats.tally, &angles)?.chsh();
                        let e = |a: PolarizationAngle, b: PolarizationAngle| oracle_correlation(&cfg, b.diff(a));
                        let chsh_oracle = match (
                            e(angles.a, angles.b),
                            e(angles.a, angles.b_prime),
                            e(angles.a_prime, angles.b),
                            e(angles.a_prime, angles.b_prime),
                        ) {
                            (Some(a), Some(b), Some(c), Some(d)) => Some(blindqkd::protocol::chsh_value(a, b, c, d)),
                            _ => None,
                        };
                        Ok(AlphaRow {
                            alpha,
                            eta: eff.eta.map(|x| x.value),
                            eta_stderr: eff.eta.map(|x| x.stderr),
                            eta_oracle: oracle_eta(alpha)?,
                            eta_21: eff.eta_21.map(|x| x.value),
                            eta_21_stderr: eff.eta_21.map(|x| x.stderr),
                            eta_21_oracle: oracle_eta_conditional(alpha)?,
                            weak_rate: weak.map(|x| x.value),
                            weak_rate_stderr: weak.map(|x| x.stderr),
                            weak_rate_oracle: oracle_weak_detection_prob(alpha)?,
                            chsh: chsh.map(|x| x.value),
                            chsh_stderr: chsh.map(|x| x.stderr),
                            chsh_oracle,
                        })
                    })
                    .collect()
            })??;
            let header = [
                "alpha",
                "eta",
                "eta_stderr",
                "eta_oracle",
                "eta_21",
                "eta_21_stderr",
                "eta_21_oracle",
                "weak_rate",
                "weak_rate_stderr",
                "weak_rate_oracle",
                "chsh",
                "chsh_stderr",
                "chsh_oracle",
            ];
            emit(args, &header, &rows, |r| {
                vec![
                    r.alpha.to_string(),
                    opt(r.eta),
                    opt(r.eta_stderr),
                    r.eta_oracle.to_string(),
                    opt(r.eta_21),
                    opt(r.eta_21_stderr),
                    r.eta_21_oracle.to_string(),
                    opt(r.weak_rate),
                    opt(r.weak_rate_stderr),
                    r.weak_rate_oracle.to_string(),
                    opt(r.chsh),
                    opt(r.chsh_stderr),
                    opt(r.chsh_oracle),
                ]
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct BoundRow {
    quantity: &'static str,
    input: f64,
    bound: Option<f64>,
    flag: String,
}

/// Local-model bound on S for one efficiency value, with a verdict against
/// the quantum maximum `2√2`.
fn bound_row(quantity: &'static str, input: f64) -> BoundRow {
    let (bound, domain) = match quantity {
        "eta" => (chsh_bound_detection(input), "[3/4, 1]"),
        _ => (chsh_bound_conditional(input), "[2/3, 1]"),
    };
    match bound {
        Ok(b) => BoundRow {
            quantity,
            input,
            bound: Some(b),
            flag: if b >= 2.0 * SQRT_2 {
                "attack feasible at S = 2√2".into()
            } else {
                "violation certifiable".into()
            },
        },
        Err(_) => BoundRow {
            quantity,
            input,
            bound: None,
            flag: format!("out of domain {domain}"),
        },
    }
}

pub fn bounds(args: &BoundsArgs) -> Result<()> {
    let rows: Vec<BoundRow> = args
        .eta
        .iter()
        .map(|&x| bound_row("eta", x))
        .chain(args.eta21.iter().map(|&x| bound_row("eta_21", x)))
        .collect();
    match args.format {
        Format::Json => write_json(args.out.as_deref(), &rows),
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.quantity.to_string(),
                        r.input.to_string(),
                        r.bound.map(|b| format!("{b:.4}")).unwrap_or_default(),
                        r.flag.clone(),
                    ]
                })
                .collect();
            write_csv(args.out.as_deref(), &["quantity", "input", "bound", "flag"], &table)
        }
    }
}
