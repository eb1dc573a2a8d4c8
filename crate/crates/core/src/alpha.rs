//! The independence functional `α_K(F, f)` on finite state spaces.
//!
//! A finite model replaces `R^6` by states `0..S`; N-particle laws are
//! symmetric tensors on `S^N`. Decompositions `G = Σ λ_i Symm{χ_i ⊗ g_i^{⊗(N-k_i)}}`
//! are searched exactly: for a fixed finite family of one-particle densities the
//! infimum is a linear program in the joint variables `λ_i χ_i`.
//!
//! The weighted Lipschitz constraint `‖g‖ <= K` is replaced by a proxy that embeds
//! the states in `R^6` and takes the weighted difference quotient over state pairs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{input, Error, Result};
use crate::lp::{LinearProgram, LpOutcome};

/// Largest state space and particle number accepted by the exact evaluation.
pub const MAX_STATES: usize = 6;
pub const MAX_PARTICLES: usize = 4;

/// `m_γ(k) = k / N^γ` up to `N^γ`, then 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpec {
    pub gamma: f64,
    pub n: usize,
}

impl WeightSpec {
    pub fn new(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma > 0.5 && gamma < 1.0) {
            return input("gamma must lie in (1/2, 1)");
        }
        if n == 0 {
            return input("N must be positive");
        }
        Ok(Self { gamma, n })
    }
}

pub fn weight_m_gamma(k: usize, spec: &WeightSpec) -> Result<f64> {
    if k > spec.n {
        return input("k must satisfy 0 <= k <= N");
    }
    let knee = (spec.n as f64).powf(spec.gamma);
    Ok(if (k as f64) <= knee { k as f64 / knee } else { 1.0 })
}

/// Symmetric N-particle law on `S` states, with a state embedding for the proxy norm.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance {
    pub states: usize,
    pub particles: usize,
    pub embedding: Vec<[f64; 6]>,
    /// `S^N` values, lexicographic in `(x_1, ..., x_N)` with `x_N` fastest.
    pub tensor: Vec<f64>,
}

/// Default embedding: state `s` at `0.25 s` on the first axis.
pub fn default_embedding(states: usize) -> Vec<[f64; 6]> {
    (0..states)
        .map(|s| {
            let mut e = [0.0; 6];
            e[0] = 0.25 * s as f64;
            e
        })
        .collect()
}

fn norm6(e: &[f64; 6]) -> f64 {
    e.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl DiscreteInstance {
    pub fn new(states: usize, particles: usize, embedding: Vec<[f64; 6]>, tensor: Vec<f64>) -> Result<Self> {
        if states == 0 || particles == 0 {
            return input("need at least one state and one particle");
        }
        if embedding.len() != states {
            return input("embedding must list one point per state");
        }
        let len = states.checked_pow(particles as u32).ok_or_else(|| Error::Input("instance too large".into()))?;
        if tensor.len() != len {
            return input("tensor length must be S^N");
        }
        for i in 0..states {
            for j in 0..i {
                if embedding[i] == embedding[j] {
                    return input("embedding must be injective");
                }
            }
        }
        let inst = Self {
            states,
            particles,
            embedding,
            tensor,
        };
        inst.check()?;
        Ok(inst)
    }

    /// Builds the symmetric tensor from orbit masses (keyed by occupation vectors).
    pub fn from_orbit_masses(states: usize, particles: usize, embedding: Vec<[f64; 6]>, masses: &BTreeMap<Vec<u8>, f64>) -> Result<Self> {
        let len = states.pow(particles as u32);
        let mut tensor = vec![0.0; len];
        let mut idx = vec![0usize; particles];
        for (flat, t) in tensor.iter_mut().enumerate() {
            unravel(flat, states, &mut idx);
            let o = occupation(&idx, states);
            let size = orbit_size(&o);
            *t = masses.get(&o).copied().unwrap_or(0.0) / size;
        }
        Self::new(states, particles, embedding, tensor)
    }

    /// Product law `p^{⊗N}`.
    pub fn product(p: &[f64], particles: usize, embedding: Vec<[f64; 6]>) -> Result<Self> {
        let states = p.len();
        let len = states.pow(particles as u32);
        let mut idx = vec![0usize; particles];
        let tensor = (0..len)
            .map(|flat| {
                unravel(flat, states, &mut idx);
                idx.iter().map(|&s| p[s]).product()
            })
            .collect();
        Self::new(states, particles, embedding, tensor)
    }

    fn check(&self) -> Result<()> {
        if self.tensor.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return input("tensor entries must be finite and nonnegative");
        }
        let mass: f64 = self.tensor.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return input("tensor must be normalized");
        }
        let mut idx = vec![0usize; self.particles];
        let mut sorted = vec![0usize; self.particles];
        for flat in 0..self.tensor.len() {
            unravel(flat, self.states, &mut idx);
            sorted.copy_from_slice(&idx);
            sorted.sort_unstable();
            let rep = ravel(&sorted, self.states);
            if (self.tensor[flat] - self.tensor[rep]).abs() > 1e-12 {
                return input("tensor must be symmetric under coordinate permutations");
            }
        }
        Ok(())
    }

    /// Orbit masses keyed by occupation vector.
    pub fn orbit_masses(&self) -> BTreeMap<Vec<u8>, f64> {
        let mut out = BTreeMap::new();
        let mut idx = vec![0usize; self.particles];
        for (flat, &v) in self.tensor.iter().enumerate() {
            unravel(flat, self.states, &mut idx);
            *out.entry(occupation(&idx, self.states)).or_insert(0.0) += v;
        }
        out
    }

    /// `s`-marginal as an `S^s` tensor.
    pub fn marginal(&self, s: usize) -> Result<Vec<f64>> {
        if s == 0 || s > self.particles {
            return input("marginal order must satisfy 1 <= s <= N");
        }
        let tail = self.states.pow((self.particles - s) as u32);
        Ok(self.tensor.chunks_exact(tail).map(|c| c.iter().sum()).collect())
    }

    /// Convex combination `Σ w_i F_i` of instances on the same space.
    pub fn mix(parts: &[(f64, &DiscreteInstance)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return input("mixture needs at least one part");
        };
        if parts.iter().any(|(_, p)| p.states != first.states || p.particles != first.particles) {
            return input("mixture parts must share S and N");
        }
        let mut tensor = vec![0.0; first.tensor.len()];
        for (w, p) in parts {
            for (t, v) in tensor.iter_mut().zip(&p.tensor) {
                *t += w * v;
            }
        }
        Self::new(first.states, first.particles, first.embedding.clone(), tensor)
    }

    pub fn l1(&self, other: &Self) -> Result<f64> {
        if self.tensor.len() != other.tensor.len() {
            return input("instances differ in size");
        }
        Ok(self.tensor.iter().zip(&other.tensor).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Proxy weighted Lipschitz norm of a one-particle vector under the embedding.
    pub fn proxy_norm(&self, g: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.states {
            for j in 0..self.states {
                let (ni, nj) = (norm6(&self.embedding[i]), norm6(&self.embedding[j]));
                if i == j || ni > nj {
                    continue;
                }
                let d: f64 = self.embedding[i]
                    .iter()
                    .zip(&self.embedding[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.max((1.0 + ni).powi(10) * (g[i] - g[j]).abs() / d);
            }
        }
        best
    }

    /// Self-describing text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chaoslab-discrete 1");
        let _ = writeln!(s, "states {}", self.states);
        let _ = writeln!(s, "particles {}", self.particles);
        for (i, e) in self.embedding.iter().enumerate() {
            let _ = write!(s, "embed {i}");
            for v in e {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s.push_str("values");
        for v in &self.tensor {
            let _ = write!(s, " {v:e}");
        }
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("discrete instance: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some("chaoslab-discrete 1") {
            return Err(bad("missing or unsupported header"));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let rest = line.strip_prefix(name).ok_or_else(|| bad(name))?;
            rest.trim().parse().map_err(|_| bad(name))
        };
        let states = field("states")?;
        let particles = field("particles")?;
        if states == 0 || states > 64 || particles == 0 || particles > 16 {
            return Err(bad("sizes out of range"));
        }
        let mut embedding = Vec::with_capacity(states);
        for i in 0..states {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("embed") || parts.next() != Some(i.to_string().as_str()) {
                return Err(bad("embed line"));
            }
            let mut e = [0.0; 6];
            for v in e.iter_mut() {
                *v = parts.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("embed coordinate"))?;
            }
            embedding.push(e);
        }
        let line = lines.next().ok_or_else(|| bad("truncated"))?;
        let rest = line.strip_prefix("values").ok_or_else(|| bad("values"))?;
        let tensor: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("value")))
            .collect::<Result<_>>()?;
        Self::new(states, particles, embedding, tensor)
    }
}

fn unravel(mut flat: usize, states: usize, out: &mut [usize]) {
    for o in out.iter_mut().rev() {
        *o = flat % states;
        flat /= states;
    }
}

fn ravel(idx: &[usize], states: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * states + i)
}

fn occupation(idx: &[usize], states: usize) -> Vec<u8> {
    let mut o = vec![0u8; states];
    for &i in idx {
        o[i] += 1;
    }
    o
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn orbit_size(o: &[u8]) -> f64 {
    let n: usize = o.iter().map(|&c| c as usize).sum();
    factorial(n) / o.iter().map(|&c| factorial(c as usize)).product::<f64>()
}

/// All occupation vectors of `size` particles over `states` states.
fn multisets(states: usize, size: usize) -> Vec<Vec<u8>> {
    fn rec(states: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == states - 1 {
            cur.push(left as u8);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c as u8);
            rec(states, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(states, size, &mut Vec::with_capacity(states), &mut out);
    out
}

/// Probability that `|t|` i.i.d. draws from `g` have occupation `t`.
fn multinomial(t: &[u8], g: &[f64]) -> f64 {
    let mut p = orbit_size(t);
    for (&c, &gs) in t.iter().zip(g) {
        if c > 0 {
            p *= gs.powi(c as i32);
        }
    }
    p
}

/// Points of the simplex in `R^S` whose coordinates are multiples of `step`
/// (`1/step` rounded to an integer).
pub fn simplex_net(states: usize, step: f64) -> Vec<Vec<f64>> {
    let parts = (1.0 / step).round().max(1.0) as usize;
    multisets(states, parts)
        .into_iter()
        .map(|o| o.iter().map(|&c| c as f64 / parts as f64).collect())
        .collect()
}

/// Net resolution used by default: 0.1 up to four states, 0.25 above.
pub fn default_net_step(states: usize) -> f64 {
    if states <= 4 {
        0.1
    } else {
        0.25
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaOptions {
    pub weight: WeightSpec,
    /// Bound on the proxy norm of admissible one-particle densities.
    pub k_proxy: f64,
    pub net_step: f64,
    /// Extra candidate one-particle densities added to the net.
    pub extra: Vec<Vec<f64>>,
}

impl AlphaOptions {
    pub fn new(weight: WeightSpec, k_proxy: f64, states: usize) -> Self {
        Self {
            weight,
            k_proxy,
            net_step: default_net_step(states),
            extra: Vec::new(),
        }
    }
}

/// One component of an optimal decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaComponent {
    pub lambda: f64,
    pub k: usize,
    pub g: Vec<f64>,
    /// Orbit masses of the bad block (occupation vectors of size `k`), summing to 1.
    pub chi: Vec<(Vec<u8>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaValue {
    /// `+inf` when no candidate density satisfies the norm constraint.
    pub value: f64,
    pub components: Vec<AlphaComponent>,
    pub candidates: usize,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Exact minimum over decompositions whose one-particle factors come from the
/// net (plus extras) and satisfy the proxy norm bound.
pub fn alpha_exact_discrete(inst: &DiscreteInstance, f: &[f64], o: &AlphaOptions) -> Result<AlphaValue> {
    let (s, n) = (inst.states, inst.particles);
    if s > MAX_STATES || n > MAX_PARTICLES {
        return Err(Error::Capability(format!(
            "exact alpha enumerates at most {MAX_STATES} states and {MAX_PARTICLES} particles, got S={s}, N={n}"
        )));
    }
    if f.len() != s || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 || f.iter().any(|v| *v < 0.0) {
        return input("f must be a probability vector on the state space");
    }
    if o.weight.n != n {
        return input("weight spec N differs from the instance");
    }
    if !(o.net_step > 0.0 && o.net_step <= 1.0) {
        return input("net step must lie in (0, 1]");
    }
    let mut family: Vec<Vec<f64>> = simplex_net(s, o.net_step);
    for g in &o.extra {
        if g.len() != s || (g.iter().sum::<f64>() - 1.0).abs() > 1e-9 || g.iter().any(|v| *v < 0.0) {
            return input("extra candidates must be probability vectors");
        }
        family.push(g.clone());
    }
    let family: Vec<Vec<f64>> = family.into_iter().filter(|g| inst.proxy_norm(g) <= o.k_proxy).collect();
    if family.is_empty() {
        return Ok(AlphaValue {
            value: f64::INFINITY,
            components: Vec::new(),
            candidates: 0,
        });
    }
    let orbits = multisets(s, n);
    let orbit_row: BTreeMap<Vec<u8>, usize> = orbits.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let target = inst.orbit_masses();

    // columns: (k, g index, head occupation)
    struct Col {
        k: usize,
        g: usize,
        head: Vec<u8>,
    }
    let mut cols: Vec<Col> = Vec::new();
    let mut costs: Vec<f64> = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    for k in 0..=n {
        let m = weight_m_gamma(k, &o.weight)?;
        let heads = multisets(s, k);
        let tails = multisets(s, n - k);
        // with no independent particles g only enters through its cost
        let gs: Vec<usize> = if k == n {
            let best = (0..family.len())
                .min_by(|&a, &b| l1(f, &family[a]).total_cmp(&l1(f, &family[b])))
                .unwrap();
            vec![best]
        } else {
            (0..family.len()).collect()
        };
        for &gi in &gs {
            let g = &family[gi];
            let tail_p: Vec<f64> = tails.iter().map(|t| multinomial(t, g)).collect();
            for h in &heads {
                let mut col = Vec::new();
                for (t, &p) in tails.iter().zip(&tail_p) {
                    if p == 0.0 {
                        continue;
                    }
                    let o: Vec<u8> = h.iter().zip(t).map(|(a, b)| a + b).collect();
                    col.push((orbit_row[&o], p));
                }
                cols.push(Col { k, g: gi, head: h.clone() });
                costs.push(m + l1(f, g));
                entries.push(col);
            }
        }
    }
    let nmu = cols.len();
    let rows = orbits.len();
    let mut lp = LinearProgram::new(nmu + 2 * rows);
    lp.cost[..nmu].copy_from_slice(&costs);
    lp.cost[nmu..].iter_mut().for_each(|c| *c = 1.0);
    let mut a = vec![vec![0.0; nmu + 2 * rows]; rows + 1];
    for (j, col) in entries.iter().enumerate() {
        for &(r, p) in col {
            a[r][j] += p;
        }
        a[rows][j] = 1.0;
    }
    for r in 0..rows {
        a[r][nmu + 2 * r] = -1.0;
        a[r][nmu + 2 * r + 1] = 1.0;
    }
    for (r, row) in a.into_iter().enumerate() {
        let rhs = if r < rows { target.get(&orbits[r]).copied().unwrap_or(0.0) } else { 1.0 };
        lp.add_row(row, rhs);
    }
    let (x, value) = match lp.solve()? {
        LpOutcome::Optimal { x, value } => (x, value),
        _ => return Err(Error::Degenerate("alpha linear program has no optimum")),
    };
    // group the optimal mass by (k, g)
    let mut groups: BTreeMap<(usize, usize), Vec<(Vec<u8>, f64)>> = BTreeMap::new();
    for (j, c) in cols.iter().enumerate() {
        if x[j] > 1e-12 {
            groups.entry((c.k, c.g)).or_default().push((c.head.clone(), x[j]));
        }
    }
    let components = groups
        .into_iter()
        .map(|((k, gi), heads)| {
            let lambda: f64 = heads.iter().map(|h| h.1).sum();
            AlphaComponent {
                lambda,
                k,
                g: family[gi].clone(),
                chi: heads.into_iter().map(|(h, w)| (h, w / lambda)).collect(),
            }
        })
        .collect();
    Ok(AlphaValue {
        value: value.max(0.0),
        components,
        candidates: family.len(),
    })
}

/// A decomposition candidate on a discrete instance. `chi` holds orbit masses
/// of the bad block over occupation vectors of size `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureDecomposition {
    pub components: Vec<AlphaComponent>,
}

impl MixtureDecomposition {
    /// The N-particle law `G` as orbit masses.
    pub fn orbit_masses(&self, states: usize, particles: usize) -> Result<BTreeMap<Vec<u8>, f64>> {
        let mut out = BTreeMap::new();
        let total: f64 = self.components.iter().map(|c| c.lambda).sum();
        if (total - 1.0).abs() > 1e-9 || self.components.iter().any(|c| c.lambda < 0.0) {
            return input("mixture weights must be nonnegative and sum to 1");
        }
        for c in &self.components {
            if c.k > particles || c.g.len() != states {
                return input("component does not fit the instance");
            }
            let chi_mass: f64 = c.chi.iter().map(|h| h.1).sum();
            if (chi_mass - 1.0).abs() > 1e-9 || c.chi.iter().any(|h| h.1 < 0.0) {
                return input("bad-block density must be nonnegative and normalized");
            }
            let tails = multisets(states, particles - c.k);
            for (head, w) in &c.chi {
                if head.len() != states || head.iter().map(|&v| v as usize).sum::<usize>() != c.k {
                    return input("bad-block occupation has the wrong size");
                }
                for t in &tails {
                    let p = multinomial(t, &c.g);
                    if p > 0.0 {
                        let o: Vec<u8> = head.iter().zip(t).map(|(a, b)| a + b).collect();
                        *out.entry(o).or_insert(0.0) += c.lambda * w * p;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `min` over candidates of `Σ λ_i (m(k_i) + ‖f - g_i‖_1) + ‖G - F‖_1`; every
/// candidate's densities must satisfy the proxy bound `k_proxy`.
pub fn alpha_upper_bound(
    inst: &DiscreteInstance,
    f: &[f64],
    weight: &WeightSpec,
    k_proxy: f64,
    candidates: &[MixtureDecomposition],
) -> Result<f64> {
    if candidates.is_empty() {
        return input("at least one candidate decomposition is required");
    }
    let target = inst.orbit_masses();
    let mut best = f64::INFINITY;
    for cand in candidates {
        for c in &cand.components {
            if inst.proxy_norm(&c.g) > k_proxy {
                return input("candidate density violates the norm bound");
            }
        }
        let g = cand.orbit_masses(inst.states, inst.particles)?;
        let mut dist = 0.0;
        for o in multisets(inst.states, inst.particles) {
            dist += (g.get(&o).copied().unwrap_or(0.0) - target.get(&o).copied().unwrap_or(0.0)).abs();
        }
        let mut cost = dist;
        for c in &cand.components {
            cost += c.lambda * (weight_m_gamma(c.k, weight)? + l1(f, &c.g));
        }
        best = best.min(cost);
    }
    Ok(best)
}

/// Upper bound obtained by taking `G = F` as a single all-bad component:
/// `m(N) + min_g ‖f - g‖_1` over admissible `g`.
pub fn alpha_identity_bound(f_to_g_distances: &[f64], weight: &WeightSpec) -> Result<f64> {
    let d = f_to_g_distances.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(weight_m_gamma(weight.n, weight)? + d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

/// `‖sF - f^{⊗s}‖_1 <= 2 s (α + s/N)` on a discrete instance.
pub fn marginal_bound_check(inst: &DiscreteInstance, f: &[f64], s: usize, alpha: f64) -> Result<MarginalBoundReport> {
    let marg = inst.marginal(s)?;
    let mut idx = vec![0usize; s];
    let mut lhs = 0.0;
    for (flat, &v) in marg.iter().enumerate() {
        unravel(flat, inst.states, &mut idx);
        let p: f64 = idx.iter().map(|&i| f[i]).product();
        lhs += (v - p).abs();
    }
    Ok(bound_report(lhs, 0.0, s, inst.particles, alpha))
}

/// Sampled variant: the measured left side plus a fluctuation allowance on the right.
pub fn marginal_bound_check_sampled(lhs: f64, fluctuation: f64, s: usize, n: usize, alpha: f64) -> MarginalBoundReport {
    bound_report(lhs, fluctuation, s, n, alpha)
}

fn bound_report(lhs: f64, allowance: f64, s: usize, n: usize, alpha: f64) -> MarginalBoundReport {
    let rhs = 2.0 * s as f64 * (alpha + s as f64 / n as f64) + allowance;
    MarginalBoundReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        pass: lhs <= rhs + 1e-12,
    }
}
