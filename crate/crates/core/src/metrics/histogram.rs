//! Sparse histograms on a fixed box, L1 distances and fluctuation floors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::density::Grid;
use crate::error::{input, Error, Result};

/// Riemann-sum L1 distance between two densities on the same grid.
pub fn l1_distance(a: &Grid, b: &Grid) -> Result<f64> {
    if !a.same_layout(b) {
        return Err(Error::GridMismatch("l1_distance needs identical grids"));
    }
    let s: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(s * a.cell_volume())
}

/// Regular bins over a box. Points outside land in a single overflow bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct BinSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub bins: Vec<usize>,
}

impl BinSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != bins.len() || lo.is_empty() {
            return input("bin spec axes disagree");
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return input("bin spec needs lo < hi on every axis");
        }
        if bins.iter().any(|&b| b == 0) {
            return input("bin spec needs at least one bin per axis");
        }
        let mut total: u128 = 1;
        for &b in &bins {
            total = total
                .checked_mul(b as u128)
                .ok_or_else(|| Error::Input("too many bins".into()))?;
        }
        Ok(Self { lo, hi, bins })
    }

    /// Same box `[lo, hi]` and bin count on each of `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![bins; dim])
    }

    /// Bins of the given width covering `[lo, hi]` (rounded up) on each axis.
    pub fn with_width(dim: usize, lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return input("bin width must be positive");
        }
        let bins = ((hi - lo) / width - 1e-9).ceil().max(1.0) as usize;
        Self::new(vec![lo; dim], vec![lo + bins as f64 * width; dim], vec![bins; dim])
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn cells(&self) -> u128 {
        self.bins.iter().map(|&b| b as u128).product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.bins[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn axis_bin(&self, axis: usize, v: f64) -> Option<usize> {
        if !(v >= self.lo[axis] && v <= self.hi[axis]) {
            return None;
        }
        let k = ((v - self.lo[axis]) / self.width(axis)) as usize;
        Some(k.min(self.bins[axis] - 1))
    }

    /// Row-major cell key, last axis fastest. `None` when outside the box.
    pub fn key(&self, x: &[f64]) -> Option<u128> {
        let mut key = 0u128;
        for (axis, &v) in x.iter().enumerate() {
            key = key * self.bins[axis] as u128 + self.axis_bin(axis, v)? as u128;
        }
        Some(key)
    }

    pub fn unravel(&self, mut key: u128, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            let b = self.bins[axis] as u128;
            out[axis] = (key % b) as usize;
            key /= b;
        }
    }

    pub fn center(&self, key: u128, out: &mut [f64]) {
        let mut idx = vec![0usize; self.dim()];
        self.unravel(key, &mut idx);
        for (axis, o) in out.iter_mut().enumerate() {
            *o = self.lo[axis] + (idx[axis] as f64 + 0.5) * self.width(axis);
        }
    }

    /// Axis-wise concatenation; keys satisfy `key(a ++ b) = key_a * cells_b + key_b`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let cat = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Self::new(
            cat(&self.lo, &other.lo),
            cat(&self.hi, &other.hi),
            self.bins.iter().chain(&other.bins).copied().collect(),
        )
    }

    /// `s`-fold concatenation of this spec.
    pub fn power(&self, s: usize) -> Result<Self> {
        if s == 0 {
            return input("power needs s >= 1");
        }
        let mut out = self.clone();
        for _ in 1..s {
            out = out.concat(self)?;
        }
        Ok(out)
    }
}

/// Weighted counts on a [`BinSpec`], stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub spec: BinSpec,
    pub counts: BTreeMap<u128, f64>,
    pub overflow: f64,
    /// Total added weight, including overflow.
    pub total: f64,
    /// Number of points added (unweighted).
    pub samples: u64,
}

impl Histogram {
    pub fn new(spec: BinSpec) -> Self {
        Self {
            spec,
            counts: BTreeMap::new(),
            overflow: 0.0,
            total: 0.0,
            samples: 0,
        }
    }

    pub fn add(&mut self, x: &[f64], weight: f64) {
        match self.spec.key(x) {
            Some(k) => *self.counts.entry(k).or_insert(0.0) += weight,
            None => self.overflow += weight,
        }
        self.total += weight;
        self.samples += 1;
    }

    /// Adds every `dim`-sized chunk of a flat array with unit weight.
    pub fn add_flat(&mut self, points: &[f64]) {
        for p in points.chunks_exact(self.spec.dim()) {
            self.add(p, 1.0);
        }
    }

    pub fn from_flat(spec: BinSpec, points: &[f64]) -> Result<Self> {
        if points.len() % spec.dim() != 0 {
            return input("flat sample length is not a multiple of the dimension");
        }
        let mut h = Self::new(spec);
        h.add_flat(points);
        Ok(h)
    }

    /// Adds another histogram's counts into this one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch("histograms use different bin specs"));
        }
        for (&k, &v) in &other.counts {
            *self.counts.entry(k).or_insert(0.0) += v;
        }
        self.overflow += other.overflow;
        self.total += other.total;
        self.samples += other.samples;
        Ok(())
    }

    /// Cell masses of a grid density, split across bins by exact overlap.
    /// Grid mass outside the bin box goes to overflow.
    pub fn from_grid(spec: BinSpec, g: &Grid) -> Result<Self> {
        if g.dim() != spec.dim() {
            return input("grid and bin spec dimensions differ");
        }
        let dim = spec.dim();
        // per axis, per grid index: list of (bin, fraction of the grid cell)
        let mut overlaps: Vec<Vec<Vec<(usize, f64)>>> = Vec::with_capacity(dim);
        for axis in 0..dim {
            let w = g.width(axis);
            let bw = spec.width(axis);
            let mut per = Vec::with_capacity(g.shape[axis]);
            for i in 0..g.shape[axis] {
                let a = g.lo[axis] + i as f64 * w;
                let b = a + w;
                let mut list = Vec::new();
                let first = (((a - spec.lo[axis]) / bw).floor().max(0.0)) as usize;
                let mut k = first;
                while k < spec.bins[axis] {
                    let lo = spec.lo[axis] + k as f64 * bw;
                    let hi = lo + bw;
                    if lo >= b {
                        break;
                    }
                    let ov = hi.min(b) - lo.max(a);
                    if ov > 0.0 {
                        list.push((k, ov / w));
                    }
                    k += 1;
                }
                per.push(list);
            }
            overlaps.push(per);
        }
        let mut h = Self::new(spec);
        let vol = g.cell_volume();
        let mut idx = vec![0usize; dim];
        for flat in 0..g.cells() {
            let m = g.values[flat] * vol;
            if m == 0.0 {
                continue;
            }
            g.unravel(flat, &mut idx);
            let mut inside = 0.0;
            // odometer over the per-axis overlap lists
            let lists: Vec<&Vec<(usize, f64)>> = (0..dim).map(|a| &overlaps[a][idx[a]]).collect();
            if lists.iter().all(|l| !l.is_empty()) {
                let mut pos = vec![0usize; dim];
                'odometer: loop {
                    let mut key = 0u128;
                    let mut frac = 1.0;
                    for a in 0..dim {
                        let (bin, f) = lists[a][pos[a]];
                        key = key * h.spec.bins[a] as u128 + bin as u128;
                        frac *= f;
                    }
                    *h.counts.entry(key).or_insert(0.0) += m * frac;
                    inside += m * frac;
                    for a in (0..dim).rev() {
                        pos[a] += 1;
                        if pos[a] < lists[a].len() {
                            continue 'odometer;
                        }
                        pos[a] = 0;
                    }
                    break;
                }
            }
            h.overflow += m - inside;
            h.total += m;
        }
        Ok(h)
    }

    /// Normalized cell probabilities.
    pub fn probability(&self, key: u128) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        self.counts.get(&key).copied().unwrap_or(0.0) / self.total
    }

    pub fn overflow_probability(&self) -> f64 {
        if self.total <= 0.0 {
            0.0
        } else {
            self.overflow / self.total
        }
    }

    /// L1 distance of the normalized histogram densities; overflow counts as one cell.
    pub fn l1(&self, other: &Self) -> Result<f64> {
        self.check_comparable(other)?;
        let mut s = (self.overflow_probability() - other.overflow_probability()).abs();
        for (k, _) in union(&self.counts, &other.counts) {
            s += (self.probability(k) - other.probability(k)).abs();
        }
        Ok(s)
    }

    /// Upper bound on the expected L1 between two independent histograms of
    /// this many samples each, given the pooled cell probabilities.
    pub fn fluctuation_bound(&self, other: &Self) -> Result<f64> {
        self.check_comparable(other)?;
        let (na, nb) = (self.samples as f64, other.samples as f64);
        let scale = 1.0 / na + 1.0 / nb;
        let mut s = 0.0;
        let pooled = |pa: f64, pb: f64| (pa * na + pb * nb) / (na + nb);
        for (k, _) in union(&self.counts, &other.counts) {
            let p = pooled(self.probability(k), other.probability(k));
            s += (p * (1.0 - p) * scale).sqrt();
        }
        let p = pooled(self.overflow_probability(), other.overflow_probability());
        s += (p * (1.0 - p) * scale).sqrt();
        Ok(s)
    }

    /// Expected L1 between an `n`-sample histogram and exact cell probabilities
    /// `self` (the multinomial floor), using exact binomial mean absolute deviations.
    pub fn multinomial_floor(&self, n: u64) -> f64 {
        let mut s: f64 = self.counts.keys().map(|&k| binomial_mad(n, self.probability(k))).sum();
        s += binomial_mad(n, self.overflow_probability());
        s
    }

    /// Dense probability array in key order (small specs only).
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        let cells = self.spec.cells();
        if cells > (1u128 << 28) {
            return input("histogram too large to densify");
        }
        let mut out = vec![0.0; cells as usize];
        for (&k, _) in &self.counts {
            out[k as usize] = self.probability(k);
        }
        Ok(out)
    }

    /// Rebuilds a histogram from dense probabilities (total weight 1).
    pub fn from_dense(spec: BinSpec, values: &[f64]) -> Result<Self> {
        if values.len() as u128 != spec.cells() {
            return input("dense histogram length does not match the bin spec");
        }
        let mut h = Self::new(spec);
        for (k, &v) in values.iter().enumerate() {
            if v != 0.0 {
                h.counts.insert(k as u128, v);
            }
        }
        let mass: f64 = values.iter().sum();
        h.overflow = (1.0 - mass).max(0.0);
        h.total = h.overflow + mass;
        Ok(h)
    }

    fn check_comparable(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch("histograms use different bin specs"));
        }
        if self.total <= 0.0 || other.total <= 0.0 {
            return input("histogram is empty");
        }
        Ok(())
    }
}

fn union<'a>(a: &'a BTreeMap<u128, f64>, b: &'a BTreeMap<u128, f64>) -> impl Iterator<Item = (u128, ())> + 'a {
    let mut ia = a.keys().peekable();
    let mut ib = b.keys().peekable();
    core::iter::from_fn(move || match (ia.peek(), ib.peek()) {
        (Some(&&x), Some(&&y)) => {
            if x < y {
                ia.next();
                Some((x, ()))
            } else if y < x {
                ib.next();
                Some((y, ()))
            } else {
                ia.next();
                ib.next();
                Some((x, ()))
            }
        }
        (Some(&&x), None) => {
            ia.next();
            Some((x, ()))
        }
        (None, Some(&&y)) => {
            ib.next();
            Some((y, ()))
        }
        (None, None) => None,
    })
}

/// L1 distance between the joint histogram and the product of two histograms
/// whose specs concatenate to the joint spec. Does not materialize the product.
pub fn product_l1(joint: &Histogram, left: &Histogram, right: &Histogram) -> Result<f64> {
    if joint.spec != left.spec.concat(&right.spec)? {
        return Err(Error::GridMismatch("joint spec is not the concatenation"));
    }
    if joint.total <= 0.0 || left.total <= 0.0 || right.total <= 0.0 {
        return input("histogram is empty");
    }
    let cr = right.spec.cells();
    let inside_l = 1.0 - left.overflow_probability();
    let inside_r = 1.0 - right.overflow_probability();
    // mass of the product that falls outside the joint box
    let prod_outside = 1.0 - inside_l * inside_r;
    let mut s = (joint.overflow_probability() - prod_outside).abs();
    let mut covered = 0.0;
    for &k in joint.counts.keys() {
        let q = left.probability(k / cr) * right.probability(k % cr);
        s += (joint.probability(k) - q).abs();
        covered += q;
    }
    Ok(s + (inside_l * inside_r - covered).max(0.0))
}

/// Mean absolute deviation `E|K/n - p|` for `K ~ Binomial(n, p)`.
pub fn binomial_mad(n: u64, p: f64) -> f64 {
    if n == 0 || p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = nf * p;
    let sd = (mean * (1.0 - p)).sqrt();
    let lo = (mean - 12.0 * sd - 10.0).floor().max(0.0) as u64;
    let hi = ((mean + 12.0 * sd + 10.0).ceil() as u64).min(n);
    let ln_n = libm::lgamma(nf + 1.0);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut s = 0.0;
    for k in lo..=hi {
        let kf = k as f64;
        let lpmf = ln_n - libm::lgamma(kf + 1.0) - libm::lgamma(nf - kf + 1.0) + kf * lp + (nf - kf) * lq;
        s += lpmf.exp() * (kf - mean).abs();
    }
    s / nf
}

/// L1 distance between the histograms of two flat sample sets.
pub fn l1_from_samples(sa: &[f64], sb: &[f64], spec: &BinSpec) -> Result<f64> {
    if sa.is_empty() || sb.is_empty() {
        return input("sample sets must be nonempty");
    }
    let ha = Histogram::from_flat(spec.clone(), sa)?;
    let hb = Histogram::from_flat(spec.clone(), sb)?;
    ha.l1(&hb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FnDensity;
    use crate::rng::{seeded, GaussianProduct, Sampler, UniformBox};

    fn gauss(x: f64, m: f64) -> f64 {
        libm::exp(-0.5 * (x - m) * (x - m)) / libm::sqrt(2.0 * core::f64::consts::PI)
    }

    #[test]
    fn grid_l1_identity_and_disjoint() {
        let mut a = Grid::cube(1, 0.0, 2.0, 20).unwrap();
        a.fill_with(|x| if x[0] < 1.0 { 1.0 } else { 0.0 });
        let b = a.like(a.values.iter().rev().copied().collect());
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        assert!((l1_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let c = Grid::cube(1, 0.0, 2.0, 21).unwrap();
        assert!(matches!(l1_distance(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn grid_l1_two_gaussians() {
        // oracle: fine Simpson quadrature of |N(0,1) - N(1,1)| on [-12, 13]
        let n = 200_000;
        let (lo, hi) = (-12.0, 13.0);
        let h = (hi - lo) / n as f64;
        let mut oracle = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            oracle += w * (gauss(x, 0.0) - gauss(x, 1.0)).abs();
        }
        oracle *= h / 3.0;
        let a = Grid::sample(vec![-12.0], vec![13.0], vec![5000], &FnDensity { dim: 1, f: |x: &[f64]| gauss(x[0], 0.0) }).unwrap();
        let b = Grid::sample(vec![-12.0], vec![13.0], vec![5000], &FnDensity { dim: 1, f: |x: &[f64]| gauss(x[0], 1.0) }).unwrap();
        let v = l1_distance(&a, &b).unwrap();
        assert!((v - oracle).abs() < 1e-3, "{v} vs {oracle}");
    }

    #[test]
    fn sample_l1_trivial_cases() {
        let spec = BinSpec::cube(2, 0.0, 2.0, 8).unwrap();
        let mut rng = seeded(3);
        let u = UniformBox::cube(2, 0.0, 1.0);
        let sa = u.sample_many(&mut rng, 1000);
        assert_eq!(l1_from_samples(&sa, &sa, &spec).unwrap(), 0.0);
        let sb: Vec<f64> = sa.iter().map(|v| v + 1.0).collect();
        assert!((l1_from_samples(&sa, &sb, &spec).unwrap() - 2.0).abs() < 1e-12);
        assert!(l1_from_samples(&[], &sa, &spec).is_err());
    }

    #[test]
    fn same_density_within_fluctuation_bound() {
        let spec = BinSpec::cube(2, -4.0, 4.0, 16).unwrap();
        let g = GaussianProduct::isotropic(2, 1.0);
        let mut rng = seeded(11);
        let sa = g.sample_many(&mut rng, 50_000);
        let sb = g.sample_many(&mut rng, 50_000);
        let ha = Histogram::from_flat(spec.clone(), &sa).unwrap();
        let hb = Histogram::from_flat(spec, &sb).unwrap();
        let d = ha.l1(&hb).unwrap();
        let bound = ha.fluctuation_bound(&hb).unwrap();
        assert!(d < 3.0 * bound, "{d} vs {bound}");
        assert!(d > 0.0);
    }

    #[test]
    fn binomial_mad_matches_direct_sum() {
        // oracle: brute-force pmf by multiplicative recursion
        for &(n, p) in &[(10u64, 0.3), (57, 0.01), (400, 0.5)] {
            let mut pmf = (1.0 - p).powi(n as i32);
            let mut s = 0.0;
            for k in 0..=n {
                s += pmf * (k as f64 / n as f64 - p).abs();
                pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
            }
            assert!((binomial_mad(n, p) - s).abs() < 1e-10, "n={n} p={p}");
        }
    }

    #[test]
    fn from_grid_conserves_mass_and_splits() {
        let mut g = Grid::cube(1, 0.0, 1.0, 3).unwrap();
        g.values = vec![1.0, 1.0, 1.0];
        let spec = BinSpec::cube(1, 0.0, 1.0, 2).unwrap();
        let h = Histogram::from_grid(spec, &g).unwrap();
        assert!((h.probability(0) - 0.5).abs() < 1e-12);
        assert!((h.probability(1) - 0.5).abs() < 1e-12);
        assert!(h.overflow.abs() < 1e-12);

        let spec = BinSpec::cube(2, 0.0, 0.5, 3).unwrap();
        let mut g = Grid::cube(2, 0.0, 1.0, 7).unwrap();
        g.fill_with(|_| 1.0);
        let h = Histogram::from_grid(spec, &g).unwrap();
        let inside: f64 = h.counts.values().sum();
        assert!((inside - 0.25).abs() < 1e-12);
        assert!((h.overflow - 0.75).abs() < 1e-12);
    }

    #[test]
    fn product_l1_of_product_is_zero() {
        let spec1 = BinSpec::cube(1, 0.0, 1.0, 4).unwrap();
        let spec2 = spec1.power(2).unwrap();
        let xs = [0.1, 0.3, 0.6, 0.9];
        let mut joint = Histogram::new(spec2);
        let mut one = Histogram::new(spec1);
        for &a in &xs {
            one.add(&[a], 1.0);
            for &b in &xs {
                joint.add(&[a, b], 1.0);
            }
        }
        assert!(product_l1(&joint, &one, &one).unwrap() < 1e-12);
        // perfectly correlated pairs are far from the product
        let mut diag = Histogram::new(joint.spec.clone());
        for &a in &xs {
            diag.add(&[a, a], 1.0);
        }
        let v = product_l1(&diag, &one, &one).unwrap();
        // diagonal cells 1/4 vs 1/16, off-diagonal 0 vs 1/16
        assert!((v - 1.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn dense_round_trip() {
        let spec = BinSpec::cube(2, 0.0, 1.0, 3).unwrap();
        let h = Histogram::from_flat(spec.clone(), &[0.1, 0.1, 0.5, 0.9, 0.5, 0.9, 2.0, 2.0]).unwrap();
        let d = h.to_dense().unwrap();
        let back = Histogram::from_dense(spec, &d).unwrap();
        assert!(h.l1(&back).unwrap() < 1e-12);
    }
}
