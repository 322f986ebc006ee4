use serde::{Deserialize, Serialize};

use super::{AnalyticsError, BandCounts, BandSeries, FlashoverAlert, PredictorConfig};

pub const REPORT_HEADER: &str =
    "t_sec,red,yellow,green,blue,background,total,hot_fraction,hot_rate";

/// `printf("%.6g")` rendering.
pub fn format_g6(x: f64) -> String {
    const PRECISION: i32 = 6;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t_sec: f64,
    pub counts: BandCounts,
    pub hot_fraction: f64,
    pub hot_rate: f64,
}

pub fn write_report(series: &BandSeries) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let mut prev: Option<(f64, f64)> = None;
    for (t, c) in series.samples() {
        let frac = c.hot_fraction().unwrap_or(f64::NAN);
        let rate = match prev {
            None => 0.0,
            Some((pt, pf)) => (frac - pf) / (t - pt),
        };
        prev = Some((*t, frac));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            format_g6(*t),
            c.red,
            c.yellow,
            c.green,
            c.blue,
            c.background,
            c.total,
            format_g6(frac),
            format_g6(rate)
        ));
    }
    out
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>, AnalyticsError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == REPORT_HEADER => {}
        Some((_, h)) => {
            return Err(AnalyticsError::Parse {
                line: 1,
                message: format!("expected header {REPORT_HEADER:?}, found {h:?}"),
            })
        }
        None => {
            return Err(AnalyticsError::Parse {
                line: 1,
                message: "empty report".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 9 {
            return Err(AnalyticsError::Parse {
                line: line_no,
                message: format!("expected 9 fields, found {}", fields.len()),
            });
        }
        let float = |idx: usize, name: &str| -> Result<f64, AnalyticsError> {
            fields[idx].parse().map_err(|_| AnalyticsError::Parse {
                line: line_no,
                message: format!("{name} is not a number: {:?}", fields[idx]),
            })
        };
        let int = |idx: usize, name: &str| -> Result<u64, AnalyticsError> {
            fields[idx].parse().map_err(|_| AnalyticsError::Parse {
                line: line_no,
                message: format!("{name} is not a nonnegative integer: {:?}", fields[idx]),
            })
        };
        rows.push(ReportRow {
            t_sec: float(0, "t_sec")?,
            counts: BandCounts {
                red: int(1, "red")?,
                yellow: int(2, "yellow")?,
                green: int(3, "green")?,
                blue: int(4, "blue")?,
                background: int(5, "background")?,
                total: int(6, "total")?,
                mass: None,
            },
            hot_fraction: float(7, "hot_fraction")?,
            hot_rate: float(8, "hot_rate")?,
        });
    }
    Ok(rows)
}

/// Times and hot fractions of a parsed report.
///
/// Pixel-label rows are recomputed exactly from their counts; channel-sum rows
/// (whose rounded counts do not partition the frame) use the recorded fraction.
pub fn report_fractions(rows: &[ReportRow]) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .map(|r| {
            let f = if r.counts.is_conserved() {
                r.counts.hot_fraction().unwrap_or(r.hot_fraction)
            } else {
                r.hot_fraction
            };
            (r.t_sec, f)
        })
        .unzip()
}

/// Serialized form of a detector result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertReport {
    pub alert_time_sec: f64,
    pub observed_rate: f64,
    pub hot_fraction_at_alert: f64,
    pub lead_time_sec: Option<f64>,
    pub config: PredictorConfig,
}

impl AlertReport {
    pub fn new(alert: FlashoverAlert, config: PredictorConfig) -> Self {
        Self {
            alert_time_sec: alert.alert_time_sec,
            observed_rate: alert.observed_rate,
            hot_fraction_at_alert: alert.hot_fraction_at_alert,
            lead_time_sec: alert.lead_time_sec,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("alert serializes");
        s.push('\n');
        s
    }
}
