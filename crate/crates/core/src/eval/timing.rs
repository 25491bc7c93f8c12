use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};

/// Records per-stage wall time for one repetition of a pipeline.
#[derive(Debug, Default)]
pub struct StageTimer {
    names: Vec<String>,
    /// `samples[stage][rep]`, milliseconds.
    samples: Vec<Vec<f64>>,
    rep: usize,
}

impl StageTimer {
    /// Runs `f` as the named stage and records its duration.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let idx = match self.names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.samples.push(Vec::new());
                self.names.len() - 1
            }
        };
        let s = &mut self.samples[idx];
        if s.len() <= self.rep {
            s.resize(self.rep + 1, 0.0);
        }
        s[self.rep] += ms;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLatency {
    pub name: String,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub reps: usize,
    pub stages: Vec<StageLatency>,
    /// Median over repetitions of the per-repetition stage sum.
    pub total_median_ms: f64,
}

impl LatencyReport {
    pub fn stage_sum_ms(&self) -> f64 {
        self.stages.iter().map(|s| s.median_ms).sum()
    }

    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[latency]");
        let _ = writeln!(s, "reps = {}", self.reps);
        for st in &self.stages {
            let _ = writeln!(s, "{}.median_ms = {:.3}", st.name, st.median_ms);
            let _ = writeln!(s, "{}.min_ms = {:.3}", st.name, st.min_ms);
            let _ = writeln!(s, "{}.max_ms = {:.3}", st.name, st.max_ms);
        }
        let _ = writeln!(s, "total.median_ms = {:.3}", self.total_median_ms);
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs `pipeline` `reps` times and reports per-stage medians.
pub fn time_pipeline<F>(reps: usize, mut pipeline: F) -> Result<LatencyReport>
where
    F: FnMut(&mut StageTimer) -> Result<()>,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("timing needs at least one repetition".into()));
    }
    let mut timer = StageTimer::default();
    for rep in 0..reps {
        timer.rep = rep;
        pipeline(&mut timer)?;
    }
    for s in &mut timer.samples {
        s.resize(reps, 0.0);
    }
    let totals: Vec<f64> = (0..reps).map(|r| timer.samples.iter().map(|s| s[r]).sum()).collect();
    let stages = timer
        .names
        .iter()
        .zip(&timer.samples)
        .map(|(name, s)| StageLatency {
            name: name.clone(),
            median_ms: median(s),
            min_ms: s.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: s.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    Ok(LatencyReport {
        reps,
        stages,
        total_median_ms: median(&totals),
    })
}
