//! Grid-frequency profiles.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest and highest frequency a profile may command (Hz).
pub const F_RANGE: (f64, f64) = (45.0, 55.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyProfile {
    Constant {
        f: f64,
    },
    LinearRamp {
        f_start: f64,
        f_end: f64,
        t_start: f64,
        t_end: f64,
    },
    /// `(t, f)` breakpoints, interpolated linearly and clamped at both ends.
    Sampled {
        points: Vec<(f64, f64)>,
    },
}

impl Default for FrequencyProfile {
    fn default() -> Self {
        FrequencyProfile::Constant { f: 50.0 }
    }
}

fn check_f(f: f64, field: &str) -> Result<()> {
    if !(F_RANGE.0..=F_RANGE.1).contains(&f) {
        return Err(Error::invalid(field, format!("{f} Hz outside [45, 55]")));
    }
    Ok(())
}

impl FrequencyProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            FrequencyProfile::Constant { f } => check_f(*f, "f"),
            FrequencyProfile::LinearRamp {
                f_start,
                f_end,
                t_start,
                t_end,
            } => {
                check_f(*f_start, "f_start")?;
                check_f(*f_end, "f_end")?;
                if !(t_start.is_finite() && t_end.is_finite() && *t_start >= 0.0) {
                    return Err(Error::invalid("t_start", "ramp times must be finite and >= 0"));
                }
                if t_end < t_start {
                    return Err(Error::invalid("t_end", "must not precede t_start"));
                }
                Ok(())
            }
            FrequencyProfile::Sampled { points } => {
                if points.is_empty() {
                    return Err(Error::Empty("sampled frequency profile"));
                }
                for (k, &(t, f)) in points.iter().enumerate() {
                    if !t.is_finite() {
                        return Err(Error::invalid(format!("points[{k}]"), "time must be finite"));
                    }
                    check_f(f, &format!("points[{k}]"))?;
                }
                if let Some(k) = points.windows(2).position(|w| w[1].0 <= w[0].0) {
                    return Err(Error::invalid(
                        format!("points[{}]", k + 1),
                        "times must be strictly increasing",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Frequency at time `t` (Hz).
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", "profile time must be finite and >= 0"));
        }
        Ok(match self {
            FrequencyProfile::Constant { f } => *f,
            FrequencyProfile::LinearRamp {
                f_start,
                f_end,
                t_start,
                t_end,
            } => {
                if t <= *t_start {
                    *f_start
                } else if t >= *t_end {
                    *f_end
                } else {
                    f_start + (f_end - f_start) * (t - t_start) / (t_end - t_start)
                }
            }
            FrequencyProfile::Sampled { points } => {
                let (first, last) = match (points.first(), points.last()) {
                    (Some(a), Some(b)) => (*a, *b),
                    _ => return Err(Error::Empty("sampled frequency profile")),
                };
                if t <= first.0 {
                    first.1
                } else if t >= last.0 {
                    last.1
                } else {
                    let k = points.partition_point(|p| p.0 <= t);
                    let (t0, f0) = points[k - 1];
                    let (t1, f1) = points[k];
                    f0 + (f1 - f0) * (t - t0) / (t1 - t0)
                }
            }
        })
    }

    /// Reads a two-column `t,f` CSV. A header row is accepted and skipped.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::invalid(
                    format!("row {}", row + 1),
                    format!("expected 2 columns, found {}", rec.len()),
                ));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(f)) => points.push((t, f)),
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::invalid(
                        format!("row {}", row + 1),
                        "values must be numeric",
                    ))
                }
            }
        }
        let profile = FrequencyProfile::Sampled { points };
        profile.validate()?;
        Ok(profile)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        FrequencyProfile::from_csv_reader(std::fs::File::open(path)?)
    }
}
