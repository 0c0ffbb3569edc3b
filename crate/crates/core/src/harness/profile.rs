use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accumulates wall time per named stage, in first-use order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimer {
    stages: Vec<(String, Duration)>,
}

impl StageTimer {
    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.add(stage, start.elapsed());
        out
    }

    pub fn add(&mut self, stage: &str, d: Duration) {
        match self.stages.iter_mut().find(|(s, _)| s == stage) {
            Some((_, acc)) => *acc += d,
            None => self.stages.push((stage.to_string(), d)),
        }
    }

    pub fn merge(&mut self, other: &StageTimer) {
        for (s, d) in &other.stages {
            self.add(s, *d);
        }
    }

    pub fn timings(&self) -> Vec<StageTiming> {
        self.stages
            .iter()
            .map(|(s, d)| StageTiming { stage: s.clone(), seconds: d.as_secs_f64() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealtimeFactor {
    pub stage: String,
    /// Processing seconds.
    pub seconds: f64,
    /// Audio seconds over processing seconds.
    pub factor: f64,
    /// The processing time was below the timer resolution, so `factor` is
    /// only a lower bound computed from that resolution.
    pub lower_bound: bool,
    pub realtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealtimeReport {
    pub audio_seconds: f64,
    pub resolution_seconds: f64,
    pub stages: Vec<RealtimeFactor>,
    pub global: RealtimeFactor,
}

/// Smallest non-zero step observed on the monotonic clock.
pub fn timer_resolution() -> f64 {
    static RES: OnceLock<f64> = OnceLock::new();
    *RES.get_or_init(|| {
        let mut best = f64::INFINITY;
        for _ in 0..50 {
            let a = Instant::now();
            let mut b = Instant::now();
            while b == a {
                b = Instant::now();
            }
            best = best.min((b - a).as_secs_f64());
        }
        best
    })
}

fn factor(stage: &str, seconds: f64, audio: f64, resolution: f64) -> RealtimeFactor {
    let lower_bound = seconds < resolution;
    let f = audio / seconds.max(resolution);
    RealtimeFactor {
        stage: stage.to_string(),
        seconds,
        factor: f,
        lower_bound,
        realtime: f >= 1.0,
    }
}

/// Per-stage and global real-time factors. The global factor uses the sum
/// of the stage times.
pub fn realtime_factor(timings: &[StageTiming], audio_seconds: f64, resolution_seconds: f64) -> Result<RealtimeReport> {
    if !(audio_seconds > 0.0) || !audio_seconds.is_finite() {
        return Err(Error::InvalidInput(format!("audio duration {audio_seconds} s must be positive")));
    }
    if !(resolution_seconds > 0.0) {
        return Err(Error::InvalidInput("timer resolution must be positive".into()));
    }
    if let Some(t) = timings.iter().find(|t| !(t.seconds >= 0.0) || !t.seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("stage `{}` has time {}", t.stage, t.seconds)));
    }
    let stages: Vec<RealtimeFactor> = timings
        .iter()
        .map(|t| factor(&t.stage, t.seconds, audio_seconds, resolution_seconds))
        .collect();
    let total: f64 = timings.iter().map(|t| t.seconds).sum();
    Ok(RealtimeReport {
        audio_seconds,
        resolution_seconds,
        stages,
        global: factor("global", total, audio_seconds, resolution_seconds),
    })
}
