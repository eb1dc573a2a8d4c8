//! Bounded-Lipschitz distance between an empirical measure and a density.
//!
//! Test functions satisfy `max(sup|g|, Lip g) <= 1`. The lower estimate maximizes
//! `|∫g dμ - ∫g df|` over a seeded dictionary; the upper estimate takes the best of
//! a smoothing bound, a projected transport plan and an optimal matching against
//! an equal-mass quantization of `f`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::density::{DensityRep, Grid};
use crate::error::{input, Result};
use crate::phase::Configuration;
use crate::rng::{seeded, unit_vector};

/// Uniform atoms `x_1..x_M` in `R^dim`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return input("empirical measure needs at least one atom of the right dimension");
        }
        Ok(Self { dim, points })
    }

    pub fn from_configuration<const D: usize>(x: &Configuration<D>) -> Result<Self> {
        Self::new(2 * D, x.to_flat())
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlBracket {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlOptions {
    pub seed: u64,
    pub ramps: usize,
    pub bumps: usize,
    pub capped: usize,
    /// Smoothing half-widths tried for the upper bound.
    pub bandwidths: Vec<f64>,
    /// Random projections tried for the transport upper bound.
    pub projections: usize,
    /// Largest atom count for which the optimal-assignment bound is computed.
    pub assignment_max: usize,
}

impl Default for BlOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed_b1,
            ramps: 160,
            bumps: 64,
            capped: 32,
            bandwidths: vec![0.1, 0.2, 0.4, 0.8],
            projections: 8,
            assignment_max: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TestFn {
    /// `clamp(u.x - c, -1, 1)`
    Ramp { u: Vec<f64>, c: f64 },
    /// `clamp(r - |x - z|, 0, 1)`
    Bump { z: Vec<f64>, r: f64 },
    /// `min(|x - z|, 2) - 1`
    Capped { z: Vec<f64> },
}

impl TestFn {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFn::Ramp { u, c } => {
                let s: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
                (s - c).clamp(-1.0, 1.0)
            }
            TestFn::Bump { z, r } => (r - dist(x, z)).clamp(0.0, 1.0),
            TestFn::Capped { z } => dist(x, z).min(2.0) - 1.0,
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Reusable evaluator: the dictionary and its integrals against `f` are
/// computed once, then any number of empirical measures can be compared.
#[derive(Clone, Debug)]
pub struct BlEvaluator {
    dim: usize,
    dictionary: Vec<TestFn>,
    reference: Vec<f64>,
    atoms: Vec<f64>,
    masses: Vec<f64>,
    /// Half cell diameter for grids (cost of moving mass to centers), 0 for clouds.
    quantization: f64,
    grid: Option<Grid>,
    /// Projection directions with the reference atoms sorted along each.
    projections: Vec<(Vec<f64>, Vec<(f64, usize)>)>,
    options: BlOptions,
}

impl BlEvaluator {
    pub fn new(f: &DensityRep, options: BlOptions) -> Result<Self> {
        let dim = f.dim();
        let (atoms, mut masses) = f.atoms();
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return input("reference density must have positive finite mass");
        }
        masses.iter_mut().for_each(|m| *m /= total);
        let (quantization, grid) = match f {
            DensityRep::Grid(g) => (0.5 * g.cell_diameter(), Some(g.clone())),
            DensityRep::Cloud(_) => (0.0, None),
        };
        let dictionary = build_dictionary(dim, &atoms, &masses, &options);
        let reference = dictionary
            .iter()
            .map(|g| atoms.chunks_exact(dim).zip(&masses).map(|(x, m)| m * g.eval(x)).sum())
            .collect();
        let projections = projection_directions(dim, &options)
            .into_iter()
            .map(|u| {
                let mut b: Vec<(f64, usize)> = atoms
                    .chunks_exact(dim)
                    .enumerate()
                    .filter(|(j, _)| masses[*j] > 0.0)
                    .map(|(j, y)| (y.iter().zip(&u).map(|(a, b)| a * b).sum(), j))
                    .collect();
                b.sort_by(|x, y| x.0.total_cmp(&y.0));
                (u, b)
            })
            .collect();
        Ok(Self {
            dim,
            dictionary,
            reference,
            atoms,
            masses,
            quantization,
            grid,
            projections,
            options,
        })
    }

    pub fn dictionary_len(&self) -> usize {
        self.dictionary.len()
    }

    pub fn seed(&self) -> u64 {
        self.options.seed
    }

    /// Dictionary lower estimate alone (cheap).
    pub fn lower(&self, mu: &EmpiricalMeasure) -> Result<f64> {
        self.check(mu)?;
        let m = mu.len() as f64;
        let mut best = 0.0f64;
        for (g, r) in self.dictionary.iter().zip(&self.reference) {
            let s: f64 = mu.points.chunks_exact(self.dim).map(|x| g.eval(x)).sum::<f64>() / m;
            best = best.max((s - r).abs());
        }
        Ok(best)
    }

    /// Rigorous-up-to-quadrature upper estimate.
    pub fn upper(&self, mu: &EmpiricalMeasure) -> Result<f64> {
        self.check(mu)?;
        let mut best = 2.0f64;
        best = best.min(self.transport_upper(mu));
        if mu.len() <= self.options.assignment_max {
            best = best.min(self.assignment_upper(mu));
        }
        if let Some(g) = &self.grid {
            for &h in &self.options.bandwidths {
                best = best.min(smoothing_upper(mu, g, h));
            }
        }
        Ok(best)
    }

    /// Lower estimate clamped to the upper one, so the bracket is ordered.
    pub fn bracket(&self, mu: &EmpiricalMeasure) -> Result<BlBracket> {
        let upper = self.upper(mu)?;
        let lower = self.lower(mu)?.min(upper);
        Ok(BlBracket { lower, upper })
    }

    fn check(&self, mu: &EmpiricalMeasure) -> Result<()> {
        if mu.dim != self.dim {
            return input("empirical measure and density dimensions differ");
        }
        Ok(())
    }

    /// Quantizes the reference into `M` equal-mass atoms, then matches them
    /// optimally with the `M` atoms of μ.
    fn assignment_upper(&self, mu: &EmpiricalMeasure) -> f64 {
        let n = mu.len();
        let dim = self.dim;
        let (centers, quant) = equal_mass_quantization(dim, &self.atoms, &self.masses, n);
        let mut cost = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cost[i * n + j] = dist(mu.atom(i), &centers[j * dim..(j + 1) * dim]).min(2.0);
            }
        }
        assignment_cost(n, &cost) / n as f64 + quant + self.quantization
    }

    /// Couples μ and the reference atoms monotonically along random projections
    /// (exact quantile coupling in 1-D); cost `min(|x - y|, 2)`.
    fn transport_upper(&self, mu: &EmpiricalMeasure) -> f64 {
        let best = self
            .projections
            .iter()
            .map(|(u, b)| self.coupling_cost(mu, u, b))
            .fold(f64::INFINITY, f64::min);
        best + self.quantization
    }

    fn coupling_cost(&self, mu: &EmpiricalMeasure, u: &[f64], b: &[(f64, usize)]) -> f64 {
        let dim = self.dim;
        let proj = |x: &[f64]| -> f64 { x.iter().zip(u).map(|(a, b)| a * b).sum() };
        let mut a: Vec<(f64, usize)> = (0..mu.len()).map(|i| (proj(mu.atom(i)), i)).collect();
        a.sort_by(|x, y| x.0.total_cmp(&y.0));
        let wa = 1.0 / mu.len() as f64;
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (wa, b.first().map_or(0.0, |p| self.masses[p.1]));
        let mut cost = 0.0;
        while i < a.len() && j < b.len() {
            let m = ra.min(rb);
            let x = mu.atom(a[i].1);
            let y = &self.atoms[b[j].1 * dim..(b[j].1 + 1) * dim];
            cost += m * dist(x, y).min(2.0);
            ra -= m;
            rb -= m;
            if ra <= 1e-15 {
                i += 1;
                ra = wa;
            }
            if rb <= 1e-15 {
                j += 1;
                if j < b.len() {
                    rb = self.masses[b[j].1];
                }
            }
        }
        cost
    }
}

/// Splits the reference into `n` pieces of mass `1/n` by recursive mass
/// bisection along the widest axis, and sends each piece to its centroid.
/// Returns the centroids (flat) and the capped cost of that transport.
fn equal_mass_quantization(dim: usize, atoms: &[f64], masses: &[f64], n: usize) -> (Vec<f64>, f64) {
    let items: Vec<(usize, f64)> = masses.iter().copied().enumerate().filter(|(_, m)| *m > 0.0).collect();
    let mut centers = Vec::with_capacity(n * dim);
    let mut cost = 0.0;
    let mut stack = vec![(items, n)];
    while let Some((items, parts)) = stack.pop() {
        let mass: f64 = items.iter().map(|p| p.1).sum();
        if parts == 1 {
            let mut z = vec![0.0; dim];
            for &(i, m) in &items {
                for a in 0..dim {
                    z[a] += m * atoms[i * dim + a] / mass;
                }
            }
            cost += items.iter().map(|&(i, m)| m * dist(&atoms[i * dim..(i + 1) * dim], &z).min(2.0)).sum::<f64>();
            // mass drift against the uniform 1/n target, moved at the cap
            cost += 2.0 * (mass - 1.0 / n as f64).abs();
            centers.extend_from_slice(&z);
            continue;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| {
                let spread = |a: usize| {
                    let (lo, hi) = items.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(i, _)| {
                        (l.min(atoms[i * dim + a]), h.max(atoms[i * dim + a]))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mut items = items;
        items.sort_by(|x, y| atoms[x.0 * dim + axis].total_cmp(&atoms[y.0 * dim + axis]).then(x.0.cmp(&y.0)));
        let left_parts = parts / 2;
        let target = mass * left_parts as f64 / parts as f64;
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let mut acc = 0.0;
        for (i, m) in items {
            if acc >= target {
                right.push((i, m));
            } else if acc + m <= target {
                acc += m;
                left.push((i, m));
            } else {
                left.push((i, target - acc));
                right.push((i, m - (target - acc)));
                acc = target;
            }
        }
        stack.push((right, parts - left_parts));
        stack.push((left, left_parts));
    }
    (centers, cost)
}

/// Minimum-cost perfect matching on a dense `n x n` cost matrix (Hungarian
/// method with potentials). Returns the cost of the matching found.
pub(crate) fn assignment_cost(n: usize, cost: &[f64]) -> f64 {
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| c(p[j], j)).sum()
}

/// Upper bound through `μ_h`, μ smoothed by a product triangular kernel of
/// half-width `h`: transport cost of the smoothing, plus cell-averaging cost,
/// plus total variation between cell masses of `μ_h` and the grid.
fn smoothing_upper(mu: &EmpiricalMeasure, g: &Grid, h: f64) -> f64 {
    let dim = mu.dim;
    let m = mu.len() as f64;
    let mut cell_mass = vec![0.0; g.cells()];
    let mut outside = 0.0;
    let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for i in 0..mu.len() {
        let x = mu.atom(i);
        let mut inside = 1.0;
        for (axis, list) in lists.iter_mut().enumerate() {
            list.clear();
            let w = g.width(axis);
            let (a, b) = (x[axis] - h, x[axis] + h);
            let k0 = ((a - g.lo[axis]) / w).floor().max(0.0) as usize;
            let k1 = (((b - g.lo[axis]) / w).ceil().max(0.0) as usize).min(g.shape[axis]);
            let mut got = 0.0;
            for k in k0..k1 {
                let lo = g.lo[axis] + k as f64 * w;
                let p = tri_cdf(lo + w, x[axis], h) - tri_cdf(lo, x[axis], h);
                if p > 0.0 {
                    list.push((k, p));
                    got += p;
                }
            }
            inside *= got;
        }
        outside += (1.0 - inside) / m;
        if lists.iter().any(|l| l.is_empty()) {
            continue;
        }
        let mut pos = vec![0usize; dim];
        'odometer: loop {
            let mut flat = 0;
            let mut p = 1.0 / m;
            for a in 0..dim {
                let (k, q) = lists[a][pos[a]];
                flat += k * g.stride(a);
                p *= q;
            }
            cell_mass[flat] += p;
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
    let vol = g.cell_volume();
    let total = g.mass();
    let tv: f64 = cell_mass
        .iter()
        .zip(&g.values)
        .map(|(a, v)| (a - v * vol / total).abs())
        .sum::<f64>()
        + outside;
    h * (dim as f64 / 6.0).sqrt() + g.cell_diameter() + tv
}

/// Coordinate axes first, then seeded random unit vectors.
fn projection_directions(dim: usize, o: &BlOptions) -> Vec<Vec<f64>> {
    let mut rng = seeded(o.seed ^ 0x7a5_9011);
    let tries = if dim == 1 { 1 } else { o.projections.max(1) };
    (0..tries)
        .map(|t| {
            let mut u = vec![0.0; dim];
            if t < dim {
                u[t] = 1.0;
            } else {
                unit_vector(&mut rng, &mut u);
            }
            u
        })
        .collect()
}

/// CDF of the triangular density on `[c - h, c + h]`.
fn tri_cdf(x: f64, c: f64, h: f64) -> f64 {
    let u = (x - c) / h;
    if u <= -1.0 {
        0.0
    } else if u <= 0.0 {
        0.5 * (1.0 + u) * (1.0 + u)
    } else if u < 1.0 {
        1.0 - 0.5 * (1.0 - u) * (1.0 - u)
    } else {
        1.0
    }
}

fn build_dictionary(dim: usize, atoms: &[f64], masses: &[f64], o: &BlOptions) -> Vec<TestFn> {
    let mut rng = seeded(o.seed);
    let n = masses.len();
    // weighted atom picker via cumulative masses
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &m in masses {
        acc += m;
        cum.push(acc);
    }
    let pick = |rng: &mut crate::rng::LabRng| -> Vec<f64> {
        let r = rng.random::<f64>() * acc;
        let j = cum.partition_point(|&c| c < r).min(n - 1);
        atoms[j * dim..(j + 1) * dim].to_vec()
    };
    let mut out = Vec::with_capacity(o.ramps + o.bumps + o.capped);
    let mut u = vec![0.0; dim];
    for k in 0..o.ramps {
        if dim == 1 {
            u[0] = if k % 2 == 0 { 1.0 } else { -1.0 };
        } else {
            unit_vector(&mut rng, &mut u);
        }
        // offsets at projected quantiles of the reference, shifted by U(-1, 1)
        let z = pick(&mut rng);
        let s: f64 = u.iter().zip(&z).map(|(a, b)| a * b).sum();
        let c = s + rng.random_range(-1.0..1.0);
        out.push(TestFn::Ramp { u: u.clone(), c });
    }
    const RADII: [f64; 4] = [0.5, 1.0, 1.5, 2.5];
    for k in 0..o.bumps {
        out.push(TestFn::Bump {
            z: pick(&mut rng),
            r: RADII[k % RADII.len()],
        });
    }
    for _ in 0..o.capped {
        out.push(TestFn::Capped { z: pick(&mut rng) });
    }
    out
}

/// One-shot bracket of `d_BL(μ, f)` with default options.
pub fn bounded_lipschitz_distance(mu: &EmpiricalMeasure, f: &DensityRep) -> Result<BlBracket> {
    BlEvaluator::new(f, BlOptions::default())?.bracket(mu)
}
