use std::time::Instant;

use embrec_core::TimingStats;

pub const DEFAULT_REPS: usize = 7;
pub const DEFAULT_WARMUP: usize = 2;

/// Source of timestamps in milliseconds. Only differences are used.
pub trait Clock {
    fn now_ms(&mut self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOptions {
    pub reps: usize,
    pub warmup: usize,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self { reps: DEFAULT_REPS, warmup: DEFAULT_WARMUP }
    }
}

/// Result of [`time_stage`]: stats over the timed runs and what each returned.
#[derive(Debug, Clone)]
pub struct Timed<T> {
    pub stats: TimingStats,
    pub outputs: Vec<T>,
}

/// Runs `work` `options.warmup` times untimed, then `options.reps` times
/// under the monotonic clock.
pub fn time_stage<T, E, F>(options: StageOptions, work: F) -> Result<Timed<T>, E>
where
    F: FnMut() -> Result<T, E>,
    E: From<embrec_core::Error>,
{
    time_stage_with(&mut MonotonicClock::new(), options, work)
}

pub fn time_stage_with<C, T, E, F>(clock: &mut C, options: StageOptions, mut work: F) -> Result<Timed<T>, E>
where
    C: Clock + ?Sized,
    F: FnMut() -> Result<T, E>,
    E: From<embrec_core::Error>,
{
    if options.reps == 0 {
        return Err(embrec_core::Error::Invalid("reps must be >= 1".into()).into());
    }
    for _ in 0..options.warmup {
        work()?;
    }
    let mut samples = Vec::with_capacity(options.reps);
    let mut outputs = Vec::with_capacity(options.reps);
    for _ in 0..options.reps {
        let start = clock.now_ms();
        let out = work()?;
        samples.push(clock.now_ms() - start);
        outputs.push(out);
    }
    Ok(Timed { stats: TimingStats::from_samples(samples)?, outputs })
}

/// Times several stages in round-robin order: every warmup round and every
/// timed rep runs each stage once, so slow drift in machine speed affects all
/// stages alike. Returns one [`Timed`] per stage, in input order.
pub fn time_interleaved<T, E>(
    options: StageOptions,
    stages: &mut [&mut dyn FnMut() -> Result<T, E>],
) -> Result<Vec<Timed<T>>, E>
where
    E: From<embrec_core::Error>,
{
    time_interleaved_with(&mut MonotonicClock::new(), options, stages)
}

pub fn time_interleaved_with<C, T, E>(
    clock: &mut C,
    options: StageOptions,
    stages: &mut [&mut dyn FnMut() -> Result<T, E>],
) -> Result<Vec<Timed<T>>, E>
where
    C: Clock + ?Sized,
    E: From<embrec_core::Error>,
{
    if options.reps == 0 {
        return Err(embrec_core::Error::Invalid("reps must be >= 1".into()).into());
    }
    for _ in 0..options.warmup {
        for work in stages.iter_mut() {
            work()?;
        }
    }
    let mut samples = vec![Vec::with_capacity(options.reps); stages.len()];
    let mut outputs: Vec<Vec<T>> = (0..stages.len()).map(|_| Vec::with_capacity(options.reps)).collect();
    for _ in 0..options.reps {
        for (i, work) in stages.iter_mut().enumerate() {
            let start = clock.now_ms();
            let out = work()?;
            samples[i].push(clock.now_ms() - start);
            outputs[i].push(out);
        }
    }
    samples
        .into_iter()
        .zip(outputs)
        .map(|(s, outputs)| Ok(Timed { stats: TimingStats::from_samples(s)?, outputs }))
        .collect()
}
