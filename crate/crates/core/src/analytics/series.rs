use super::{AnalyticsError, BandCounts};

/// Time-ordered band counts of one frame stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BandSeries {
    samples: Vec<(f64, BandCounts)>,
}

impl BandSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<(f64, BandCounts)>) -> Result<Self, AnalyticsError> {
        let mut series = Self::new();
        for (t, c) in samples {
            series.push(t, c)?;
        }
        Ok(series)
    }

    /// Append a frame; timestamps must increase and the frame size stay fixed.
    pub fn push(&mut self, t_sec: f64, counts: BandCounts) -> Result<(), AnalyticsError> {
        if !t_sec.is_finite() {
            return Err(AnalyticsError::Series(format!(
                "timestamp {t_sec} is not finite"
            )));
        }
        if let Some((prev_t, prev)) = self.samples.last() {
            if t_sec <= *prev_t {
                return Err(AnalyticsError::NonIncreasingTime {
                    index: self.samples.len(),
                    previous: *prev_t,
                    found: t_sec,
                });
            }
            if counts.total != prev.total {
                return Err(AnalyticsError::Series(format!(
                    "frame at t={t_sec} has {} pixels, earlier frames have {}",
                    counts.total, prev.total
                )));
            }
        }
        self.samples.push((t_sec, counts));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(f64, BandCounts)] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|(t, _)| *t).collect()
    }

    pub fn hot_fractions(&self) -> Result<Vec<f64>, AnalyticsError> {
        self.samples
            .iter()
            .map(|(t, c)| {
                c.hot_fraction().map_err(|_| {
                    AnalyticsError::Series(format!(
                        "frame at t={t} is entirely background; hot fraction undefined"
                    ))
                })
            })
            .collect()
    }
}

/// Trailing moving average over `min(w, available)` samples.
pub fn smooth(values: &[f64], w: usize) -> Result<Vec<f64>, AnalyticsError> {
    if w == 0 {
        return Err(AnalyticsError::Config(
            "smoothing window must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        if i >= w {
            acc -= values[i - w];
        }
        let n = (i + 1).min(w);
        // Recompute short windows exactly so the running sum cannot drift.
        let mean = if i < w {
            acc / n as f64
        } else {
            values[i + 1 - w..=i].iter().sum::<f64>() / w as f64
        };
        out.push(mean);
    }
    Ok(out)
}

/// Backward difference quotient; the first sample's rate is 0.
pub fn rate(times: &[f64], values: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    if times.len() != values.len() {
        return Err(AnalyticsError::Series(format!(
            "{} timestamps for {} values",
            times.len(),
            values.len()
        )));
    }
    if times.len() < 2 {
        return Err(AnalyticsError::InsufficientData {
            needed: 2,
            found: times.len(),
        });
    }
    let mut out = vec![0.0];
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        if !(dt > 0.0) {
            return Err(AnalyticsError::NonIncreasingTime {
                index: i,
                previous: times[i - 1],
                found: times[i],
            });
        }
        out.push((values[i] - values[i - 1]) / dt);
    }
    Ok(out)
}
