use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::model::ModelWeights;
use crate::runtime::stream::{StageTimes, StreamState};
use crate::scalar::Scalar;

/// Summary of one stage over all profiled frames, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl StageStats {
    fn from_ms(values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let pct = |p: f64| {
            let idx = ((p / 100.0) * n as f64).ceil() as usize;
            values[idx.clamp(1, n) - 1]
        };
        StageStats {
            mean: values.iter().sum::<f64>() / n as f64,
            median: pct(50.0),
            p95: pct(95.0),
            p99: pct(99.0),
            max: values[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub repeats: usize,
    pub frame_period_ms: f64,
    /// Buffering delay (one analysis frame), independent of compute speed.
    pub algorithmic_latency_ms: f64,
    pub pre_process: StageStats,
    pub inference: StageStats,
    pub post_process: StageStats,
    /// Per-frame sum of the three stages.
    pub total: StageStats,
}

impl LatencyReport {
    /// Fails when the per-frame total p99 exceeds `bound_ms`.
    pub fn check_p99(&self, bound_ms: f64) -> Result<()> {
        if self.total.p99 > bound_ms {
            return Err(Error::Numerical(format!(
                "p99 frame compute {:.3} ms exceeds bound {bound_ms} ms",
                self.total.p99
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>10} {:>10} {:>10} {:>10}",
            "stage (ms)", "mean", "median", "p95", "p99"
        )?;
        for (name, s) in [
            ("pre-process", &self.pre_process),
            ("inference", &self.inference),
            ("post-process", &self.post_process),
            ("total", &self.total),
        ] {
            writeln!(
                f,
                "{name:<16} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                s.mean, s.median, s.p95, s.p99
            )?;
        }
        writeln!(f, "{:<16} {:>10.1}", "frame period", self.frame_period_ms)?;
        write!(f, "{:<16} {:>10.1}", "algorithmic", self.algorithmic_latency_ms)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Streams `signal` through a fresh state `n_repeats` times and times every
/// processed frame.
pub fn profile_stream<T: Scalar>(
    signal: &AudioSignal<T>,
    weights: &ModelWeights<T>,
    n_repeats: usize,
) -> Result<LatencyReport> {
    let rate = signal.sample_rate() as f64;
    if signal.len() < signal.sample_rate() as usize {
        return Err(Error::param("profiling needs at least one second of audio"));
    }
    if n_repeats == 0 {
        return Err(Error::param("n_repeats must be at least 1"));
    }
    let mut state = StreamState::new(weights)?;
    let hop = state.hop();
    let chunks = signal.len() / hop;
    let cap = chunks * n_repeats;
    let (mut pre, mut inf, mut post, mut total) =
        (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    let mut times = StageTimes::default();
    for _ in 0..n_repeats {
        state.reset();
        for chunk in signal.samples().chunks_exact(hop) {
            if state.push_frame_timed(chunk, weights, &mut times)?.is_some() {
                let (a, b, c) = (ms(times.pre), ms(times.inference), ms(times.post));
                pre.push(a);
                inf.push(b);
                post.push(c);
                total.push(a + b + c);
            }
        }
    }
    let c = state.config();
    Ok(LatencyReport {
        frames: total.len(),
        repeats: n_repeats,
        frame_period_ms: c.frame_length as f64 / rate * 1e3,
        algorithmic_latency_ms: state.algorithmic_latency() as f64 / rate * 1e3,
        pre_process: StageStats::from_ms(&mut pre),
        inference: StageStats::from_ms(&mut inf),
        post_process: StageStats::from_ms(&mut post),
        total: StageStats::from_ms(&mut total),
    })
}
