use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, BandCounts, BandSeries};

/// Rate-of-change rule on the smoothed hot fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Trailing smoothing window, in samples.
    pub window: usize,
    /// Alert threshold on d(hot fraction)/dt, per second.
    pub theta: f64,
    /// Consecutive samples at or above `theta` needed to alert.
    pub consecutive: usize,
    pub warmup_sec: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: 5,
            theta: 0.004,
            consecutive: 3,
            warmup_sec: 20.0,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.window == 0 || self.consecutive == 0 {
            return Err(AnalyticsError::Config(
                "window and consecutive must both be at least 1".into(),
            ));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(AnalyticsError::Config(format!(
                "theta must be positive and finite, got {}",
                self.theta
            )));
        }
        if !self.warmup_sec.is_finite() {
            return Err(AnalyticsError::Config("warmup must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlashoverAlert {
    pub alert_time_sec: f64,
    pub observed_rate: f64,
    pub hot_fraction_at_alert: f64,
    pub lead_time_sec: Option<f64>,
}

/// Incremental detector for one frame stream. Each push costs O(window).
#[derive(Debug, Clone)]
pub struct FlashoverMonitor {
    config: PredictorConfig,
    recent: VecDeque<f64>,
    last: Option<(f64, f64)>,
    run: usize,
    alert: Option<FlashoverAlert>,
}

impl FlashoverMonitor {
    pub fn new(config: PredictorConfig) -> Result<Self, AnalyticsError> {
        config.validate()?;
        Ok(Self {
            config,
            recent: VecDeque::with_capacity(config.window),
            last: None,
            run: 0,
            alert: None,
        })
    }

    pub fn alert(&self) -> Option<FlashoverAlert> {
        self.alert
    }

    pub fn push_counts(
        &mut self,
        t_sec: f64,
        counts: &BandCounts,
    ) -> Result<Option<FlashoverAlert>, AnalyticsError> {
        let fraction = counts.hot_fraction().map_err(|_| {
            AnalyticsError::Series(format!(
                "frame at t={t_sec} is entirely background; hot fraction undefined"
            ))
        })?;
        self.push_fraction(t_sec, fraction)
    }

    /// Feed one raw hot-fraction sample. Returns the alert on the sample that raises it.
    pub fn push_fraction(
        &mut self,
        t_sec: f64,
        fraction: f64,
    ) -> Result<Option<FlashoverAlert>, AnalyticsError> {
        if self.recent.len() == self.config.window {
            self.recent.pop_front();
        }
        self.recent.push_back(fraction);
        let smoothed = self.recent.iter().sum::<f64>() / self.recent.len() as f64;
        let rate = match self.last {
            None => 0.0,
            Some((prev_t, prev_s)) => {
                if !(t_sec > prev_t) {
                    return Err(AnalyticsError::NonIncreasingTime {
                        index: 0,
                        previous: prev_t,
                        found: t_sec,
                    });
                }
                (smoothed - prev_s) / (t_sec - prev_t)
            }
        };
        self.last = Some((t_sec, smoothed));
        if self.alert.is_some() {
            return Ok(None);
        }
        if t_sec >= self.config.warmup_sec && rate >= self.config.theta {
            self.run += 1;
        } else {
            self.run = 0;
        }
        if self.run >= self.config.consecutive {
            let alert = FlashoverAlert {
                alert_time_sec: t_sec,
                observed_rate: rate,
                hot_fraction_at_alert: fraction,
                lead_time_sec: None,
            };
            self.alert = Some(alert);
            return Ok(Some(alert));
        }
        Ok(None)
    }
}

/// First alert over a hot-fraction series, if any.
pub fn detect_fractions(
    times: &[f64],
    fractions: &[f64],
    config: &PredictorConfig,
) -> Result<Option<FlashoverAlert>, AnalyticsError> {
    config.validate()?;
    let needed = config.window + config.consecutive;
    if times.len() < needed {
        return Err(AnalyticsError::InsufficientData {
            needed,
            found: times.len(),
        });
    }
    if times.len() != fractions.len() {
        return Err(AnalyticsError::Series(format!(
            "{} timestamps for {} values",
            times.len(),
            fractions.len()
        )));
    }
    let mut monitor = FlashoverMonitor::new(*config)?;
    for (i, (&t, &f)) in times.iter().zip(fractions).enumerate() {
        if let Some(alert) = monitor.push_fraction(t, f).map_err(|e| match e {
            AnalyticsError::NonIncreasingTime {
                previous, found, ..
            } => AnalyticsError::NonIncreasingTime {
                index: i,
                previous,
                found,
            },
            other => other,
        })? {
            return Ok(Some(alert));
        }
    }
    Ok(None)
}

pub fn detect(
    series: &BandSeries,
    config: &PredictorConfig,
) -> Result<Option<FlashoverAlert>, AnalyticsError> {
    config.validate()?;
    let needed = config.window + config.consecutive;
    if series.len() < needed {
        return Err(AnalyticsError::InsufficientData {
            needed,
            found: series.len(),
        });
    }
    detect_fractions(&series.times(), &series.hot_fractions()?, config)
}

pub fn evaluate(alert: FlashoverAlert, ground_truth_flashover_sec: f64) -> FlashoverAlert {
    FlashoverAlert {
        lead_time_sec: Some(ground_truth_flashover_sec - alert.alert_time_sec),
        ..alert
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(start: f64, slope: f64) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..120).map(|i| i as f64).collect();
        let f = t
            .iter()
            .map(|&t| {
                if t < start {
                    0.1
                } else {
                    (0.1 + slope * (t - start)).min(1.0)
                }
            })
            .collect();
        (t, f)
    }

    #[test]
    fn constant_series_never_alerts() {
        let t: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let alert = detect_fractions(&t, &vec![0.3; 100], &PredictorConfig::default()).unwrap();
        assert_eq!(alert, None);
    }

    #[test]
    fn ramp_alerts_after_window_fills() {
        let (t, f) = ramp(50.0, 0.0125);
        let alert = detect_fractions(&t, &f, &PredictorConfig::default())
            .unwrap()
            .unwrap();
        // Smoothed rate: 0.0025 at t=51, 0.005 at 52, 0.01 at 54.
        assert_eq!(alert.alert_time_sec, 54.0);
        assert!((alert.observed_rate - 0.01).abs() < 1e-9);
        assert!((alert.hot_fraction_at_alert - 0.15).abs() < 1e-12);
    }

    #[test]
    fn warmup_suppresses_early_samples() {
        let (t, f) = ramp(0.0, 0.01);
        let cfg = PredictorConfig::default();
        let alert = detect_fractions(&t, &f, &cfg).unwrap().unwrap();
        assert_eq!(alert.alert_time_sec, 22.0);
    }

    #[test]
    fn too_short_series() {
        let err = detect_fractions(&[0.0; 7], &[0.0; 7], &PredictorConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            AnalyticsError::InsufficientData {
                needed: 8,
                found: 7
            }
        ));
    }

    #[test]
    fn invalid_config() {
        let cfg = PredictorConfig {
            theta: 0.0,
            ..PredictorConfig::default()
        };
        assert!(FlashoverMonitor::new(cfg).is_err());
        let cfg = PredictorConfig {
            window: 0,
            ..PredictorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn evaluate_lead_times() {
        let a = FlashoverAlert {
            alert_time_sec: 145.0,
            observed_rate: 0.01,
            hot_fraction_at_alert: 0.2,
            lead_time_sec: None,
        };
        assert_eq!(evaluate(a, 200.0).lead_time_sec, Some(55.0));
        let a = FlashoverAlert {
            alert_time_sec: 200.0,
            ..a
        };
        assert_eq!(evaluate(a, 200.0).lead_time_sec, Some(0.0));
        let a = FlashoverAlert {
            alert_time_sec: 210.0,
            ..a
        };
        assert_eq!(evaluate(a, 200.0).lead_time_sec, Some(-10.0));
    }

    #[test]
    fn monitor_raises_once() {
        let (t, f) = ramp(30.0, 0.02);
        let mut m = FlashoverMonitor::new(PredictorConfig::default()).unwrap();
        let raised: Vec<_> = t
            .iter()
            .zip(&f)
            .filter_map(|(&t, &f)| m.push_fraction(t, f).unwrap())
            .collect();
        assert_eq!(raised.len(), 1);
        assert_eq!(m.alert(), Some(raised[0]));
    }
}
