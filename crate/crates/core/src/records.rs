//! CSV dump of round records.
//!
//! Columns: `round, theta_a, theta_b, outcome_a, outcome_b, weak_side`; the
//! Eve view appends `lambda, eve_pred_a, eve_pred_b`. Angles are radians with
//! nine significant digits, outcomes are `1`, `-1`, `0` or `double`, and
//! inapplicable fields are left empty.

use std::io::Write;

use crate::error::{Error, Result};
use crate::num::{to_f64, Scalar};
use crate::protocol::RoundRecord;
use crate::sources::ScenarioConfig;

pub const PUBLIC_COLUMNS: [&str; 6] = ["round", "theta_a", "theta_b", "outcome_a", "outcome_b", "weak_side"];
pub const EVE_COLUMNS: [&str; 3] = ["lambda", "eve_pred_a", "eve_pred_b"];

/// Formats `x` with nine significant digits in positional notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding may carry into a new leading digit, e.g. 9.999999999 → 10.00000000.
    let digits = s.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
    if digits.trim_start_matches('0').len() > 9 && decimals > 0 {
        let d = decimals - 1;
        format!("{x:.d$}")
    } else {
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_records_csv<T: Scalar, W: Write>(
    out: W,
    records: &[RoundRecord<T>],
    scenario: &ScenarioConfig<T>,
    eve_view: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = PUBLIC_COLUMNS.to_vec();
    if eve_view {
        header.extend(EVE_COLUMNS);
    }
    w.write_record(&header).map_err(csv_err)?;

    let angle = |a: crate::optics::PolarizationAngle<T>| format_sig9(to_f64(a.radians()));
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            angle(r.theta_a),
            angle(r.theta_b),
            r.outcome_a.to_string(),
            r.outcome_b.to_string(),
            r.weak_side.map(|s| s.to_string()).unwrap_or_default(),
        ];
        if eve_view {
            row.push(r.hidden_lambda.map(angle).unwrap_or_default());
            match (r.eve_prediction(scenario), r.eve_intercept) {
                (Ok((a, b)), _) => {
                    row.push(a.to_string());
                    row.push(b.to_string());
                }
                (Err(_), Some(icpt)) => {
                    row.push(String::new());
                    row.push(icpt.outcome.to_string());
                }
                (Err(_), None) => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
