//! Weighted Lipschitz norm `‖g‖ = sup_{|a| <= |b|} (1 + |a|)^10 |g(a) - g(b)| / |a - b|`
//! and the shake operator `ε g(x) = inf_{|e| <= 1} g(x + ε e (1 + |x|))`.
//!
//! Both are global optimization problems; the estimators here return a lower
//! estimate of the sup and an upper estimate of the inf.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::density::{Evaluable, Grid};
use crate::error::{input, Error, Result};
use crate::rng::{halton, seeded, unit_vector};

/// Exponent of the weight.
const WEIGHT_POWER: i32 = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedNormOptions {
    /// Candidate points are drawn from `[-half_width, half_width]^n`.
    pub half_width: f64,
    /// Number of base candidate points.
    pub resolution: usize,
    pub seed: u64,
    /// Best pairs handed to local refinement.
    pub refine_top: usize,
    pub refine_sweeps: usize,
}

impl Default for WeightedNormOptions {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            resolution: 2000,
            seed: 0x0a11_0c8e,
            refine_top: 8,
            refine_sweeps: 80,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedNormEstimate {
    /// Lower estimate of the norm at full resolution.
    pub value: f64,
    /// Same search at half resolution.
    pub coarse: f64,
    /// Relative change between the two below 2%.
    pub converged: bool,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Weighted difference quotient of one pair; the weight uses the smaller norm.
pub fn weighted_quotient(g: &dyn Evaluable, a: &[f64], b: &[f64]) -> f64 {
    quotient_with(g, a, g.eval(a), b)
}

fn quotient_with(g: &dyn Evaluable, a: &[f64], ga: f64, b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    if d == 0.0 {
        return 0.0;
    }
    let w = (1.0 + norm(a).min(norm(b))).powi(WEIGHT_POWER);
    let q = w * (ga - g.eval(b)).abs() / d;
    if q.is_finite() {
        q
    } else {
        0.0
    }
}

/// Pair `b = a + h u` with `u` a unit vector.
#[derive(Clone, Debug)]
struct Pair {
    a: Vec<f64>,
    u: Vec<f64>,
    h: f64,
    q: f64,
}

impl Pair {
    fn b(&self) -> Vec<f64> {
        self.a.iter().zip(&self.u).map(|(x, v)| x + self.h * v).collect()
    }
}

fn score(g: &dyn Evaluable, a: &[f64], u: &[f64], h: f64) -> f64 {
    let b: Vec<f64> = a.iter().zip(u).map(|(x, v)| x + h * v).collect();
    weighted_quotient(g, a, &b)
}

fn search(g: &dyn Evaluable, o: &WeightedNormOptions, resolution: usize) -> Pair {
    let n = g.dim();
    let r = o.half_width;
    let mut rng = seeded(o.seed);
    let mut cands: Vec<Vec<f64>> = Vec::with_capacity(resolution + 1);
    cands.push(vec![0.0; n]);
    // quasi-random fill of the box
    let mut h = vec![0.0; n];
    for i in 0..resolution / 2 {
        halton(i as u64 + 1, &mut h);
        cands.push(h.iter().map(|v| r * (2.0 * v - 1.0)).collect());
    }
    // radial shells, quadratically refined near the origin
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            dirs.push(e);
        }
    }
    for _ in 0..16 {
        let mut e = vec![0.0; n];
        unit_vector(&mut rng, &mut e);
        dirs.push(e);
    }
    let shells = (resolution / 2 / dirs.len()).max(2);
    for k in 1..=shells {
        let t = k as f64 / shells as f64;
        let rad = r * t * t;
        for e in &dirs {
            cands.push(e.iter().map(|v| rad * v).collect());
        }
    }

    const STEPS: [f64; 5] = [1e-5, 1e-3, 1e-2, 0.1, 0.5];
    let mut pairs: Vec<Pair> = Vec::with_capacity(cands.len());
    let mut u = vec![0.0; n];
    for a in cands {
        let ga = g.eval(&a);
        let na = norm(&a);
        let fd = 1e-6 * (1.0 + na);
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let mut x = a.clone();
            x[i] += fd;
            grad[i] = (g.eval(&x) - ga) / fd;
        }
        let mut dirs_here: Vec<Vec<f64>> = Vec::with_capacity(3);
        let gn = norm(&grad);
        if gn > 0.0 && gn.is_finite() {
            let mut d: Vec<f64> = grad.iter().map(|v| v / gn).collect();
            if d.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() < 0.0 {
                d.iter_mut().for_each(|v| *v = -*v);
            }
            dirs_here.push(d);
        }
        if na > 0.0 {
            dirs_here.push(a.iter().map(|v| v / na).collect());
        }
        unit_vector(&mut rng, &mut u);
        dirs_here.push(u.clone());
        let mut best = Pair { a: a.clone(), u: dirs_here[0].clone(), h: 1.0, q: -1.0 };
        for d in &dirs_here {
            for &hs in &STEPS {
                let b: Vec<f64> = a.iter().zip(d).map(|(x, v)| x + hs * v).collect();
                let q = quotient_with(g, &a, ga, &b);
                if q > best.q {
                    best = Pair { a: a.clone(), u: d.clone(), h: hs, q };
                }
            }
        }
        pairs.push(best);
    }
    pairs.sort_by(|x, y| y.q.total_cmp(&x.q));
    pairs.truncate(o.refine_top.max(1));
    let mut best = pairs[0].clone();
    for p in pairs {
        let p = refine(g, p, o.refine_sweeps);
        if p.q > best.q {
            best = p;
        }
    }
    best
}

/// Pattern search over the base point, the direction and the step length.
fn refine(g: &dyn Evaluable, mut p: Pair, sweeps: usize) -> Pair {
    let n = p.a.len();
    let mut s = 0.05 * (1.0 + norm(&p.a));
    for _ in 0..sweeps {
        let mut improved = false;
        let try_move = |cand: Pair, p: &mut Pair| {
            let q = score(g, &cand.a, &cand.u, cand.h);
            if q > p.q {
                *p = Pair { q, ..cand };
                true
            } else {
                false
            }
        };
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut c = p.clone();
                c.a[i] += sign * s;
                improved |= try_move(c, &mut p);
                let mut c = p.clone();
                c.u[i] += sign * s;
                let un = norm(&c.u);
                if un > 0.0 {
                    c.u.iter_mut().for_each(|v| *v /= un);
                    improved |= try_move(c, &mut p);
                }
            }
        }
        let na = norm(&p.a);
        if na > 0.0 {
            for sign in [1.0, -1.0] {
                let mut c = p.clone();
                let f = 1.0 + sign * s / na;
                c.a.iter_mut().for_each(|v| *v *= f);
                improved |= try_move(c, &mut p);
            }
        }
        for f in [0.5, 2.0] {
            let mut c = p.clone();
            // very short pairs only measure rounding noise
            c.h = (c.h * f).max(1e-7 * (1.0 + na));
            improved |= try_move(c, &mut p);
        }
        if !improved {
            s *= 0.5;
            if s < 1e-9 {
                break;
            }
        }
    }
    p
}

/// Lower estimate of the weighted Lipschitz norm of `g`.
pub fn weighted_lipschitz_norm(g: &dyn Evaluable, o: &WeightedNormOptions) -> WeightedNormEstimate {
    let fine = search(g, o, o.resolution);
    let coarse = search(g, o, (o.resolution / 2).max(8));
    let value = fine.q.max(coarse.q);
    let converged = value == 0.0 || (value - coarse.q).abs() <= 0.02 * value;
    let (a, b) = if fine.q >= coarse.q { (fine.a.clone(), fine.b()) } else { (coarse.a.clone(), coarse.b()) };
    WeightedNormEstimate {
        value,
        coarse: coarse.q,
        converged,
        a,
        b,
    }
}

/// Radial density `x -> profile(|x|)` with a non-increasing profile, for
/// which shaking is exact: `ε g(x) = profile((1 + ε)(1 + |x|) - 1)`.
#[derive(Clone, Debug)]
pub struct Radial<F> {
    pub dim: usize,
    pub profile: F,
    /// Product of `1 + ε` over the shakes applied so far.
    factor: f64,
}

impl<F: Fn(f64) -> f64 + Sync> Radial<F> {
    pub fn new(dim: usize, profile: F) -> Self {
        Self { dim, profile, factor: 1.0 }
    }

    pub fn at_radius(&self, r: f64) -> f64 {
        (self.profile)(self.factor * (1.0 + r) - 1.0)
    }

    pub fn shake(&self, eps: f64) -> Result<Radial<&F>> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return input("shake needs a finite eps >= 0");
        }
        Ok(Radial {
            dim: self.dim,
            profile: &self.profile,
            factor: self.factor * (1.0 + eps),
        })
    }

    /// `∫ g` over the ball of radius `r_max`, by composite Simpson in the radius.
    pub fn mass(&self, r_max: f64, panels: usize) -> f64 {
        radial_integral(self.dim, |r| self.at_radius(r), r_max, panels)
    }
}

impl<F: Fn(f64) -> f64 + Sync> Evaluable for Radial<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.at_radius(norm(x))
    }
}

/// `|S^{n-1}| ∫_0^{r_max} f(r) r^{n-1} dr` by composite Simpson (`panels` rounded up to even).
pub fn radial_integral(dim: usize, f: impl Fn(f64) -> f64, r_max: f64, panels: usize) -> f64 {
    let m = (panels.max(2) + 1) & !1;
    let h = r_max / m as f64;
    let mut s = 0.0;
    for i in 0..=m {
        let r = i as f64 * h;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * f(r) * r.powi(dim as i32 - 1);
    }
    sphere_area(dim) * s * h / 3.0
}

/// Surface area of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * core::f64::consts::PI.powf(h) / libm::tgamma(h)
}

/// `2^10 ∫_{R^n} (1 + |x|)^{-9} dx = 2^10 |S^{n-1}| B(n, 9 - n)`, finite for `n <= 8`.
pub fn shake_constant(n: usize) -> Result<f64> {
    if n == 0 || n > 8 {
        return input("the shake constant is finite only for 1 <= n <= 8");
    }
    let (a, b) = (n as f64, 9.0 - n as f64);
    let beta = (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp();
    Ok(1024.0 * sphere_area(n) * beta)
}

/// Sampled shake of an arbitrary evaluable. Always `<= g(x)`, since the
/// center of the ball is among the candidates.
#[derive(Clone, Debug)]
pub struct Shaken<G> {
    pub g: G,
    pub eps: f64,
    directions: Vec<f64>,
    descent_steps: usize,
}

/// `ε g` estimated by directional sampling plus local descent.
pub fn shake<G: Evaluable>(g: G, eps: f64) -> Result<Shaken<G>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return input("shake needs a finite eps >= 0");
    }
    let n = g.dim();
    let mut rng = seeded(0x05ba_4e00 ^ n as u64);
    let count = 32 + 8 * n;
    let mut directions = vec![0.0; count * n];
    for d in directions.chunks_exact_mut(n) {
        unit_vector(&mut rng, d);
    }
    Ok(Shaken {
        g,
        eps,
        directions,
        descent_steps: 24,
    })
}

impl<G: Evaluable> Shaken<G> {
    fn inf_near(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let nx = norm(x);
        let rho = self.eps * (1.0 + nx);
        let mut best = self.g.eval(x);
        if rho == 0.0 {
            return best;
        }
        let mut best_e = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut consider = |e: &[f64], best: &mut f64, best_e: &mut Vec<f64>| {
            for ((yi, xi), ei) in y.iter_mut().zip(x).zip(e) {
                *yi = xi + rho * ei;
            }
            let v = self.g.eval(&y);
            if v < *best {
                *best = v;
                best_e.copy_from_slice(e);
            }
        };
        let mut e = vec![0.0; n];
        for i in 0..n {
            for s in [1.0, -1.0] {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[i] = s;
                consider(&e, &mut best, &mut best_e);
            }
        }
        if nx > 0.0 {
            for s in [1.0, -1.0] {
                for (ei, xi) in e.iter_mut().zip(x) {
                    *ei = s * xi / nx;
                }
                consider(&e, &mut best, &mut best_e);
            }
        }
        for d in self.directions.chunks_exact(n) {
            for t in [1.0, 0.5] {
                for (ei, di) in e.iter_mut().zip(d) {
                    *ei = t * di;
                }
                consider(&e, &mut best, &mut best_e);
            }
        }
        // pattern search inside the unit ball
        let mut step = 0.25;
        for _ in 0..self.descent_steps {
            let mut moved = false;
            for i in 0..n {
                for s in [step, -step] {
                    let mut c = best_e.clone();
                    c[i] += s;
                    let cn = norm(&c);
                    if cn > 1.0 {
                        c.iter_mut().for_each(|v| *v /= cn);
                    }
                    let before = best;
                    consider(&c, &mut best, &mut best_e);
                    moved |= best < before;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best
    }
}

impl<G: Evaluable> Evaluable for Shaken<G> {
    fn dim(&self) -> usize {
        self.g.dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.inf_near(x)
    }
}

/// `ε_n g = ε g / ‖ε g‖_1` sampled on the layout of `template`.
pub fn shake_normalized<G: Evaluable>(g: G, eps: f64, template: &Grid) -> Result<Grid> {
    let s = shake(g, eps)?;
    let mut out = Grid::sample(template.lo.clone(), template.hi.clone(), template.shape.clone(), &s)?;
    let mass = out.mass();
    if !(mass > 0.0) {
        return Err(Error::Degenerate("shaken density has zero mass"));
    }
    out.values.iter_mut().for_each(|v| *v /= mass);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FnDensity;

    fn tent(r: f64) -> f64 {
        (1.0 - r).max(0.0)
    }

    fn fast() -> WeightedNormOptions {
        WeightedNormOptions {
            resolution: 600,
            ..WeightedNormOptions::default()
        }
    }

    #[test]
    fn constant_has_zero_norm() {
        let g = FnDensity { dim: 3, f: |_: &[f64]| 0.7 };
        let e = weighted_lipschitz_norm(&g, &fast());
        assert_eq!(e.value, 0.0);
        assert!(e.converged);
    }

    #[test]
    fn norm_is_homogeneous() {
        let g = FnDensity { dim: 2, f: |x: &[f64]| libm::exp(-x[0] * x[0] - 2.0 * x[1] * x[1]) };
        let base = weighted_lipschitz_norm(&g, &fast()).value;
        for lambda in [2.0, -0.5, 4.0] {
            let h = FnDensity { dim: 2, f: move |x: &[f64]| lambda * libm::exp(-x[0] * x[0] - 2.0 * x[1] * x[1]) };
            let v = weighted_lipschitz_norm(&h, &fast()).value;
            assert!((v - libm::fabs(lambda) * base).abs() <= 1e-9 * v, "{lambda}: {v} vs {base}");
        }
    }

    #[test]
    fn radial_tent_approaches_two_to_the_ten() {
        // oracle: dense 1-D search of (1 + a)^10 |tent(a) - tent(b)| / |b - a| over a < b
        let mut oracle = 0.0f64;
        let n = 4000;
        for i in 0..n {
            let a = 2.0 * i as f64 / n as f64;
            for j in [i + 1, i + 2, i + 10] {
                let b = 2.0 * j as f64 / n as f64;
                oracle = oracle.max((1.0 + a).powi(10) * (tent(a) - tent(b)).abs() / (b - a));
            }
        }
        assert!(oracle > 1015.0 && oracle <= 1024.0);
        for dim in [1usize, 6] {
            let g = Radial::new(dim, tent);
            let e = weighted_lipschitz_norm(&g, &WeightedNormOptions::default());
            assert!(e.value <= 1024.0 * (1.0 + 1e-6), "{e:?}");
            assert!(e.value > 1024.0 * 0.98, "dim {dim}: {e:?}");
            assert!(e.converged);
        }
    }

    #[test]
    fn gaussian_decay_bound_holds() {
        // |g(x)| <= ‖g‖ (1 + |x|)^-9 along rays
        let g = Radial::new(6, |r: f64| libm::exp(-r * r));
        let e = weighted_lipschitz_norm(&g, &WeightedNormOptions::default());
        for i in 0..200 {
            let r = i as f64 * 0.05;
            assert!(g.at_radius(r) <= e.value * (1.0 + r).powi(-9) * (1.0 + 1e-9), "r={r}");
        }
    }

    #[test]
    fn shake_zero_and_constant_are_identity() {
        let g = FnDensity { dim: 2, f: |x: &[f64]| libm::exp(-x[0] * x[0]) * (1.0 + x[1].sin() / 2.0) };
        let s = shake(&g, 0.0).unwrap();
        for x in [[0.0, 0.0], [1.0, -2.0], [3.0, 0.5]] {
            assert_eq!(s.eval(&x), g.eval(&x));
        }
        let c = FnDensity { dim: 3, f: |_: &[f64]| 2.5 };
        for eps in [0.01, 0.3, 2.0] {
            let s = shake(&c, eps).unwrap();
            assert_eq!(s.eval(&[0.3, -1.0, 4.0]), 2.5);
        }
        assert!(shake(&c, -0.1).is_err());
    }

    #[test]
    fn sampled_shake_matches_radial_formula() {
        let g = Radial::new(3, |r: f64| libm::exp(-r * r));
        for eps in [0.05, 0.2] {
            let exact = g.shake(eps).unwrap();
            let sampled = shake(&g, eps).unwrap();
            for x in [[0.0, 0.0, 0.0], [0.5, 0.2, -0.1], [1.0, 1.0, 1.0], [-2.0, 0.0, 0.3]] {
                let (a, b) = (exact.eval(&x), sampled.eval(&x));
                assert!((a - b).abs() <= 1e-12 + 1e-9 * a, "{eps} {x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn shake_is_below_and_monotone() {
        let g = Radial::new(2, tent);
        let xs = [[0.0, 0.0], [0.2, 0.1], [0.5, -0.3]];
        for x in xs {
            let mut prev = g.eval(&x);
            for eps in [0.0, 0.01, 0.05, 0.1, 0.3] {
                let v = g.shake(eps).unwrap().eval(&x);
                assert!(v <= prev);
                prev = v;
            }
        }
        let wavy = FnDensity { dim: 2, f: |x: &[f64]| 2.0 + (3.0 * x[0]).sin() * x[1].cos() };
        let s = shake(&wavy, 0.1).unwrap();
        for x in xs {
            assert!(s.eval(&x) <= wavy.eval(&x));
        }
    }

    #[test]
    fn normalized_shake_and_degenerate_case() {
        let g = Radial::new(1, tent);
        let template = Grid::cube(1, -2.0, 2.0, 400).unwrap();
        let n = shake_normalized(&g, 0.1, &template).unwrap();
        assert!((n.mass() - 1.0).abs() < 1e-12);
        assert!(matches!(shake_normalized(&g, 1.5, &template), Err(Error::Degenerate(_))));
    }

    #[test]
    fn shake_constant_values() {
        // oracle: direct radial quadrature of (1 + r)^-9 with substitution r = t / (1 - t)
        for n in 1..=6usize {
            let m = 200_000;
            let mut s = 0.0;
            for i in 0..m {
                let t = (i as f64 + 0.5) / m as f64;
                let r = t / (1.0 - t);
                s += r.powi(n as i32 - 1) * (1.0 + r).powi(-9) / ((1.0 - t) * (1.0 - t));
            }
            let oracle = 1024.0 * sphere_area(n) * s / m as f64;
            let c = shake_constant(n).unwrap();
            assert!((c - oracle).abs() < 1e-6 * c, "n={n}: {c} vs {oracle}");
        }
        let pi3 = core::f64::consts::PI.powi(3);
        assert!(shake_constant(6).unwrap() < 1024.0 * pi3);
        assert!(shake_constant(9).is_err());
    }

    #[test]
    fn sphere_areas() {
        let pi = core::f64::consts::PI;
        assert!((sphere_area(2) - 2.0 * pi).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * pi).abs() < 1e-12);
        assert!((sphere_area(6) - pi.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn radial_mass_of_gaussian() {
        let g = Radial::new(6, |r: f64| libm::exp(-r * r));
        let exact = core::f64::consts::PI.powi(3);
        assert!((g.mass(8.0, 4000) - exact).abs() < 1e-8);
    }
}
