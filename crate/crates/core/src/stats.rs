//! Ensemble averages and the statistical checks run on simulated records.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{trajectory_rng, Filter, FilterSpec};
use crate::lindblad::GeneratorSpec;
use crate::linops::{CMat, DensityMatrix, C64};

/// Trajectories handed to the worker pool at a time. Results are always
/// reduced in index order, so the chunk size never changes the output.
const CHUNK: usize = 64;

/// Worker count: `QFSIM_THREADS` if set to a positive integer, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("QFSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Evaluates `map(i)` for `i in 0..n` on the worker pool and feeds the results
/// to `fold` in increasing `i`.
pub fn fold_ordered<T, M, F>(n: u64, map: M, mut fold: F) -> Result<()>
where
    T: Send,
    M: Fn(u64) -> Result<T> + Sync,
    F: FnMut(u64, T) -> Result<()>,
{
    let threads = worker_threads();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let mut start = 0u64;
    while start < n {
        let end = (start + (CHUNK * threads) as u64).min(n);
        let batch: Vec<Result<T>> = if threads == 1 {
            (start..end).map(&map).collect()
        } else {
            pool.install(|| (start..end).into_par_iter().map(&map).collect())
        };
        for (offset, item) in batch.into_iter().enumerate() {
            fold(start + offset as u64, item?)?;
        }
        start = end;
    }
    Ok(())
}

/// Collects `map(i)` for `i in 0..n` in index order.
pub fn map_ordered<T, M>(n: u64, map: M) -> Result<Vec<T>>
where
    T: Send,
    M: Fn(u64) -> Result<T> + Sync,
{
    let mut out = Vec::with_capacity(n as usize);
    fold_ordered(n, map, |_, v| {
        out.push(v);
        Ok(())
    })?;
    Ok(out)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Running sums of sampled state matrices, one slot per sample time.
#[derive(Clone, Debug)]
pub struct StateAccumulator {
    count: usize,
    /// First trajectory's states; sums are of deviations from it to avoid
    /// cancellation in the variance.
    shift: Vec<CMat>,
    sum: Vec<CMat>,
    /// Squares of real parts in `.re`, of imaginary parts in `.im`.
    sum_sq: Vec<CMat>,
}

impl StateAccumulator {
    pub fn new(dim: usize, slots: usize) -> Self {
        Self {
            count: 0,
            shift: Vec::new(),
            sum: vec![CMat::zeros(dim); slots],
            sum_sq: vec![CMat::zeros(dim); slots],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one trajectory's sampled states.
    pub fn add(&mut self, states: &[CMat]) -> Result<()> {
        if states.len() != self.sum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sum.len(),
                found: states.len(),
            });
        }
        if self.count == 0 {
            self.shift = states.to_vec();
        }
        for (((s, q), m), c) in self
            .sum
            .iter_mut()
            .zip(self.sum_sq.iter_mut())
            .zip(states)
            .zip(&self.shift)
        {
            let d = m - c;
            *s += &d;
            let sq = CMat::from_fn(d.dim(), |i, j| {
                let z = d[(i, j)];
                C64::new(z.re * z.re, z.im * z.im)
            });
            *q += &sq;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(self, times: Vec<f64>, seed: u64) -> Result<EnsembleSummary> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "ensemble needs at least 2 trajectories, got {}",
                self.count
            )));
        }
        let n = self.count as f64;
        let mut mean = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        for ((s, q), c) in self.sum.iter().zip(&self.sum_sq).zip(&self.shift) {
            let m = s.scale_re(1.0 / n);
            let se = CMat::from_fn(m.dim(), |i, j| {
                let mu = m[(i, j)];
                let sq = q[(i, j)];
                let var_re = ((sq.re / n - mu.re * mu.re) * n / (n - 1.0)).max(0.0);
                let var_im = ((sq.im / n - mu.im * mu.im) * n / (n - 1.0)).max(0.0);
                C64::new((var_re / n).sqrt(), (var_im / n).sqrt())
            });
            mean.push(&m + c);
            stderr.push(se);
        }
        Ok(EnsembleSummary {
            times,
            mean,
            stderr,
            count: self.count,
            seed,
        })
    }
}

/// Mean state and componentwise standard errors at each sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean: Vec<CMat>,
    /// Standard error of the real part in `.re`, imaginary part in `.im`.
    pub stderr: Vec<CMat>,
    pub count: usize,
    pub seed: u64,
}

impl EnsembleSummary {
    /// Index of the sample time closest to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
    }

    /// Largest componentwise `|mean − target| / (k·σ + slack)` at slot `i`
    /// (real and imaginary parts separately); at most 1 means within bound.
    pub fn bound_ratio(&self, i: usize, target: &CMat, k: f64, slack: f64) -> f64 {
        let m = &self.mean[i];
        let se = &self.stderr[i];
        let mut worst: f64 = 0.0;
        for (idx, (a, b)) in m.as_slice().iter().zip(target.as_slice()).enumerate() {
            let s = se.as_slice()[idx];
            worst = worst.max((a.re - b.re).abs() / (k * s.re + slack));
            worst = worst.max((a.im - b.im).abs() / (k * s.im + slack));
        }
        worst
    }
}

/// Ensemble of `n` filtered trajectories of the given spec, sampled on every
/// `stride`-th grid point. Trajectory `i` uses stream `i` of `seed`.
pub fn ensemble_mean_strided(
    spec: &FilterSpec,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    n: u64,
    seed: u64,
    stride: usize,
) -> Result<EnsembleSummary> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("ensemble needs N ≥ 2, got {n}")));
    }
    if stride == 0 {
        return Err(Error::InvalidSpec("stride must be positive".into()));
    }
    let filter = Filter::new(spec, gen)?;
    let steps = filter.steps();
    let slots: Vec<usize> = (0..=steps).step_by(stride).collect();
    let times: Vec<f64> = slots.iter().map(|&k| k as f64 * spec.dt).collect();
    let mut acc = StateAccumulator::new(rho0.dim(), slots.len());
    fold_ordered(
        n,
        |i| {
            let mut rng = trajectory_rng(seed, i);
            let mut sampled = Vec::with_capacity(slots.len());
            filter.run(rho0, &mut rng, |k, s| {
                if k % stride == 0 {
                    sampled.push(s.mat().clone());
                }
            })?;
            Ok(sampled)
        },
        |_, sampled| acc.add(&sampled),
    )?;
    acc.finish(times, seed)
}

/// Ensemble mean on the full grid.
pub fn ensemble_mean(
    spec: &FilterSpec,
    gen: &GeneratorSpec,
    rho0: &DensityMatrix,
    n: u64,
    seed: u64,
) -> Result<EnsembleSummary> {
    ensemble_mean_strided(spec, gen, rho0, n, seed, 1)
}

/// Inter-click intervals pooled over trajectories.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalSample {
    /// Time from the start to the first click, one per trajectory with clicks.
    pub first: Vec<f64>,
    /// Times between consecutive clicks.
    pub subsequent: Vec<f64>,
    /// Consecutive pairs `(X_i, X_{i+1})` of subsequent intervals within one trajectory.
    pub pairs: Vec<(f64, f64)>,
}

impl IntervalSample {
    pub fn len(&self) -> usize {
        self.first.len() + self.subsequent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits each trajectory's click times into intervals.
pub fn extract_intervals<T: AsRef<[f64]>>(click_times: &[T]) -> IntervalSample {
    let mut out = IntervalSample::default();
    for clicks in click_times {
        let clicks = clicks.as_ref();
        let Some(&first) = clicks.first() else {
            continue;
        };
        out.first.push(first);
        let gaps: Vec<f64> = clicks.windows(2).map(|w| w[1] - w[0]).collect();
        out.pairs.extend(gaps.windows(2).map(|w| (w[0], w[1])));
        out.subsequent.extend(gaps);
    }
    out
}

/// Kolmogorov–Smirnov distance `sup |F_m − F|`, tie-aware.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let f = cdf(x);
        d = d.max((f - i as f64 / m).abs()).max((f - j as f64 / m).abs());
        i = j;
    }
    Ok(d)
}

/// Pearson correlation of consecutive interval pairs.
pub fn interval_correlation(sample: &IntervalSample) -> Result<f64> {
    pearson(&sample.pairs)
}

pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InsufficientData("constant intervals".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// `M_t = Tr(ρ_t X) − Tr(ρ_0 X) − ∫₀ᵗ Tr(ρ_s L_s†(X)) ds` on the grid, with
/// the integral by the trapezoid rule.
pub fn martingale_residual(
    states: &[DensityMatrix],
    dt: f64,
    gen: &GeneratorSpec,
    observable: &CMat,
) -> Result<Vec<f64>> {
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let x0 = first.expect(observable).re;
    let mut out = Vec::with_capacity(states.len());
    let mut integral = 0.0;
    let mut prev_rate = 0.0;
    for (k, s) in states.iter().enumerate() {
        let rate = s.expect(&gen.heisenberg_action(observable, k as f64 * dt)?).re;
        if k > 0 {
            integral += 0.5 * dt * (prev_rate + rate);
        }
        prev_rate = rate;
        out.push(s.expect(observable).re - x0 - integral);
    }
    Ok(out)
}

/// Fraction of consecutive click pairs closer than `delta`, divided by `delta`.
pub fn coincidence_rate<T: AsRef<[f64]>>(click_times: &[T], dt: f64, delta: f64) -> Result<f64> {
    if !(delta >= dt) {
        return Err(Error::InvalidSpec(format!("delta {delta} is below the grid step {dt}")));
    }
    let mut pairs = 0usize;
    let mut close = 0usize;
    // tolerate grid round-off when comparing separations with delta
    let cut = delta - 1e-9 * dt;
    for clicks in click_times {
        for w in clicks.as_ref().windows(2) {
            pairs += 1;
            if w[1] - w[0] < cut {
                close += 1;
            }
        }
    }
    if pairs == 0 {
        return Ok(0.0);
    }
    Ok(close as f64 / pairs as f64 / delta)
}
