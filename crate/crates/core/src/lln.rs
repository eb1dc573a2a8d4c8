//! Law-of-large-numbers deviations of empirical averages and U-statistics.
//!
//! The one-body statistic is `d(X, g, h) = |M^-1 Σ h(x_j) - E_g h|`; the n-body
//! version averages `h_n` over all n-subsets (normalized by `C(M, n)`).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::density::DensityRep;
use crate::dynamics::{binomial, next_combination};
use crate::error::{input, Result};
use crate::rng::{distinct_indices, substream, Sampler};
use crate::stats::{log_log_fit, median, wilson_interval, LinearFit};

/// Subsets per U-statistic above which subsets are sampled.
pub const SUBSET_CAP: usize = 100_000;

/// Bounded observable on `R^(arity * dim)`, evaluated on concatenated points.
pub struct Observable<F> {
    pub dim: usize,
    pub arity: usize,
    /// Declared bound on `|h|`.
    pub sup: f64,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Observable<F> {
    pub fn one_body(dim: usize, sup: f64, f: F) -> Self {
        Self { dim, arity: 1, sup, f }
    }

    pub fn many_body(dim: usize, arity: usize, sup: f64, f: F) -> Self {
        Self { dim, arity, sup, f }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// `E_g h` for a one-body observable, by cell-center quadrature or cloud average.
pub fn expectation<F: Fn(&[f64]) -> f64 + Sync>(g: &DensityRep, h: &Observable<F>) -> Result<f64> {
    if h.arity != 1 || g.dim() != h.dim {
        return input("expectation needs a one-body observable of matching dimension");
    }
    let (atoms, weights) = g.atoms();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return input("density has no mass");
    }
    let s: f64 = atoms.chunks_exact(h.dim).zip(&weights).map(|(x, w)| w * h.eval(x)).sum();
    Ok(s / total)
}

/// `|M^-1 Σ h(x_j) - mean|` for flat points `x`.
pub fn deviation_from_mean<F: Fn(&[f64]) -> f64 + Sync>(x: &[f64], mean: f64, h: &Observable<F>) -> Result<f64> {
    if x.is_empty() || x.len() % h.dim != 0 {
        return input("need at least one sample point of the observable's dimension");
    }
    let m = (x.len() / h.dim) as f64;
    let s: f64 = x.chunks_exact(h.dim).map(|p| h.eval(p)).sum();
    Ok((s / m - mean).abs())
}

/// `d(X, g, h)` with `E_g h` computed from the representation of `g`.
pub fn deviation_stat<F: Fn(&[f64]) -> f64 + Sync>(x: &[f64], g: &DensityRep, h: &Observable<F>) -> Result<f64> {
    deviation_from_mean(x, expectation(g, h)?, h)
}

/// `|C(M, n)^-1 Σ_{subsets} h_n(x_J) - mean|`, subsets sampled uniformly when
/// there are more than `cap` of them. `rng` is used only when sampling.
pub fn ustat_deviation<F: Fn(&[f64]) -> f64 + Sync>(
    x: &[f64],
    mean: f64,
    h: &Observable<F>,
    cap: usize,
    rng: &mut dyn rand::RngCore,
) -> Result<f64> {
    let dim = h.dim;
    let n = h.arity;
    if dim == 0 || x.len() % dim != 0 {
        return input("sample length is not a multiple of the dimension");
    }
    let m = x.len() / dim;
    if n == 0 || n > m {
        return input("observable arity must satisfy 1 <= n <= M");
    }
    let mut buf = vec![0.0; n * dim];
    let mut eval = |idx: &[usize]| {
        for (k, &i) in idx.iter().enumerate() {
            buf[k * dim..(k + 1) * dim].copy_from_slice(&x[i * dim..(i + 1) * dim]);
        }
        h.eval(&buf)
    };
    let total = binomial(m, n);
    let avg = if total <= cap as f64 {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut s = 0.0;
        loop {
            s += eval(&idx);
            if !next_combination(&mut idx, m) {
                break;
            }
        }
        s / total
    } else {
        let mut s = 0.0;
        for _ in 0..cap {
            let idx = distinct_indices(rng, m, n);
            s += eval(&idx);
        }
        s / cap as f64
    };
    Ok((avg - mean).abs())
}

/// Monte Carlo setup for one sweep over sample sizes.
pub struct DeviationExperiment<'a, F> {
    pub sampler: &'a dyn Sampler,
    pub h: &'a Observable<F>,
    /// `E_{g^{⊗n}} h`, closed form or quadrature.
    pub mean: f64,
    pub sizes: Vec<usize>,
    pub kappa: f64,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub kappa: f64,
    pub threshold: f64,
    pub tail_count: usize,
    pub tail_freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub median_d: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Raw deviations per sample size, plus tabulated tail frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub sizes: Vec<usize>,
    pub deviations: Vec<Vec<f64>>,
    /// `threshold = factor * M^(-1/2 + kappa)`.
    pub factor: f64,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// Log-log fit of median deviation against `M`.
    pub median_fit: LinearFit,
}

impl Sweep {
    fn build(sizes: Vec<usize>, deviations: Vec<Vec<f64>>, factor: f64, kappa: f64, seed: u64) -> Result<Self> {
        let medians: Vec<f64> = deviations.iter().map(|d| median(d)).collect();
        let ms: Vec<f64> = sizes.iter().map(|&m| m as f64).collect();
        let median_fit = if sizes.len() >= 2 {
            log_log_fit(&ms, &medians)?.0
        } else {
            LinearFit {
                slope: f64::NAN,
                intercept: f64::NAN,
                r2: f64::NAN,
                slope_se: f64::NAN,
                points: sizes.len(),
            }
        };
        let mut s = Sweep {
            sizes,
            deviations,
            factor,
            seed,
            rows: Vec::new(),
            median_fit,
        };
        s.rows = s.table(kappa);
        Ok(s)
    }

    /// Tail table for another `kappa`, reusing the same deviations.
    pub fn table(&self, kappa: f64) -> Vec<SweepRow> {
        self.sizes
            .iter()
            .zip(&self.deviations)
            .map(|(&m, d)| {
                let threshold = self.factor * (m as f64).powf(-0.5 + kappa);
                let tail_count = d.iter().filter(|&&v| v >= threshold).count();
                let (ci_lo, ci_hi) = wilson_interval(tail_count, d.len(), 1.96);
                SweepRow {
                    m,
                    kappa,
                    threshold,
                    tail_count,
                    tail_freq: tail_count as f64 / d.len() as f64,
                    ci_lo,
                    ci_hi,
                    median_d: median(d),
                    reps: d.len(),
                    seed: self.seed,
                }
            })
            .collect()
    }

    /// Inversions in the tail frequency across increasing `M`, counting only
    /// those whose Wilson intervals do not overlap as hard.
    pub fn tail_inversions(&self) -> (usize, usize) {
        let mut soft = 0;
        let mut hard = 0;
        for w in self.rows.windows(2) {
            if w[1].tail_freq > w[0].tail_freq {
                if w[1].ci_lo > w[0].ci_hi {
                    hard += 1;
                } else {
                    soft += 1;
                }
            }
        }
        (soft, hard)
    }
}

fn check_experiment<F>(e: &DeviationExperiment<'_, F>) -> Result<()> {
    if e.repetitions < 100 {
        return input("a sweep needs at least 100 repetitions");
    }
    if !(e.kappa > 0.0) {
        return input("kappa must be positive");
    }
    if e.sizes.is_empty() || e.sizes.iter().any(|&m| m == 0) {
        return input("sample sizes must be positive");
    }
    if !e.h.sup.is_finite() {
        return input("observable bound must be finite");
    }
    if e.sampler.dim() != e.h.dim {
        return input("sampler and observable dimensions differ");
    }
    Ok(())
}

/// Tail frequencies of `d >= 2 M^(-1/2 + kappa)` for the one-body statistic.
/// Repetition `r` at size `M` draws from the substream keyed by `(seed, M, r)`.
pub fn tail_probability_sweep<F: Fn(&[f64]) -> f64 + Sync>(e: &DeviationExperiment<'_, F>) -> Result<Sweep> {
    check_experiment(e)?;
    if e.h.arity != 1 {
        return input("tail_probability_sweep needs a one-body observable");
    }
    let mut devs = Vec::with_capacity(e.sizes.len());
    let mut x = Vec::new();
    for &m in &e.sizes {
        let mut d = Vec::with_capacity(e.repetitions);
        x.resize(m * e.h.dim, 0.0);
        for r in 0..e.repetitions {
            let mut rng = substream(e.seed, &[m as u64, r as u64]);
            for p in x.chunks_exact_mut(e.h.dim) {
                e.sampler.sample(&mut rng, p);
            }
            d.push(deviation_from_mean(&x, e.mean, e.h)?);
        }
        devs.push(d);
    }
    Sweep::build(e.sizes.clone(), devs, 2.0, e.kappa, e.seed)
}

/// Tail frequencies of the normalized U-statistic deviation against `M^(-1/2 + kappa)`.
pub fn ustat_deviation_sweep<F: Fn(&[f64]) -> f64 + Sync>(e: &DeviationExperiment<'_, F>) -> Result<Sweep> {
    check_experiment(e)?;
    if e.sizes.iter().any(|&m| m < e.h.arity) {
        return input("observable arity exceeds a sample size");
    }
    let mut devs = Vec::with_capacity(e.sizes.len());
    let mut x = Vec::new();
    for &m in &e.sizes {
        let mut d = Vec::with_capacity(e.repetitions);
        x.resize(m * e.h.dim, 0.0);
        for r in 0..e.repetitions {
            let mut rng = substream(e.seed, &[m as u64, r as u64]);
            for p in x.chunks_exact_mut(e.h.dim) {
                e.sampler.sample(&mut rng, p);
            }
            d.push(ustat_deviation(&x, e.mean, e.h, SUBSET_CAP, &mut rng)?);
        }
        devs.push(d);
    }
    Sweep::build(e.sizes.clone(), devs, 1.0, e.kappa, e.seed)
}
