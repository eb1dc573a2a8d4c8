//! Pooled `s`-marginal histograms from repeated N-particle runs.

use alloc::vec;
use alloc::vec::Vec;

use super::histogram::{BinSpec, Histogram};
use crate::error::{input, Result};
use crate::phase::Configuration;
use crate::rng::{distinct_indices, seeded, substream_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalOptions {
    /// Ordered tuples per run above which subsets are sampled instead.
    pub cap: usize,
    pub seed: u64,
}

impl Default for MarginalOptions {
    fn default() -> Self {
        Self { cap: 20_000, seed: 0x3a_671a }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalEstimate {
    pub s: usize,
    /// Histogram over `R^{2Ds}`; each run carries total weight 1.
    pub histogram: Histogram,
    pub runs: usize,
}

impl MarginalEstimate {
    pub fn spec(&self) -> &BinSpec {
        &self.histogram.spec
    }
}

/// Number of ordered distinct `s`-tuples out of `n`, saturating.
fn falling(n: usize, s: usize) -> usize {
    (0..s).fold(1usize, |acc, k| acc.saturating_mul(n - k))
}

/// Histogram of one run's ordered `s`-tuples, total weight 1.
pub fn run_marginal<const D: usize>(
    x: &Configuration<D>,
    s: usize,
    spec: &BinSpec,
    opts: &MarginalOptions,
    run_index: u64,
) -> Result<Histogram> {
    let n = x.len();
    if s == 0 || s > n {
        return input("marginal order must satisfy 1 <= s <= N");
    }
    if spec.dim() != 2 * D * s {
        return input("bin spec dimension must equal 2 D s");
    }
    let mut h = Histogram::new(spec.clone());
    let mut buf = vec![0.0; 2 * D * s];
    let mut push = |idx: &[usize], w: f64, h: &mut Histogram| {
        for (k, &i) in idx.iter().enumerate() {
            x[i].write_coords(&mut buf[2 * D * k..2 * D * (k + 1)]);
        }
        h.add(&buf, w);
    };
    let total = falling(n, s);
    if total <= opts.cap {
        let w = 1.0 / total as f64;
        let mut idx = vec![0usize; s];
        ordered_tuples(n, s, &mut idx, 0, &mut |t| push(t, w, &mut h));
    } else {
        // sampled subsets, each entered under all s! orders
        let perms = permutations(s);
        let subsets = (opts.cap / perms.len()).max(1);
        let w = 1.0 / (subsets * perms.len()) as f64;
        let mut rng = seeded(substream_seed(opts.seed, &[run_index, s as u64]));
        let mut t = vec![0usize; s];
        for _ in 0..subsets {
            let sub = distinct_indices(&mut rng, n, s);
            for p in &perms {
                for (k, &j) in p.iter().enumerate() {
                    t[k] = sub[j];
                }
                push(&t, w, &mut h);
            }
        }
    }
    Ok(h)
}

fn ordered_tuples(n: usize, s: usize, idx: &mut Vec<usize>, depth: usize, f: &mut dyn FnMut(&[usize])) {
    if depth == s {
        f(idx);
        return;
    }
    for i in 0..n {
        if idx[..depth].contains(&i) {
            continue;
        }
        idx[depth] = i;
        ordered_tuples(n, s, idx, depth + 1, f);
    }
}

fn permutations(s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; s];
    ordered_tuples(s, s, &mut idx, 0, &mut |p| out.push(p.to_vec()));
    out
}

/// Pools the `s`-marginal histograms of independent runs sharing `N`.
pub fn estimate_marginal<const D: usize>(
    runs: &[Configuration<D>],
    s: usize,
    spec: &BinSpec,
    opts: &MarginalOptions,
) -> Result<MarginalEstimate> {
    let Some(first) = runs.first() else {
        return input("at least one run is required");
    };
    let n = first.len();
    if runs.iter().any(|r| r.len() != n) {
        return input("all runs must share N");
    }
    let mut h = Histogram::new(spec.clone());
    for (k, x) in runs.iter().enumerate() {
        h.merge(&run_marginal(x, s, spec, opts, k as u64)?)?;
    }
    Ok(MarginalEstimate {
        s,
        histogram: h,
        runs: runs.len(),
    })
}
