//! d-body interaction kernels `v_t(x_1, ..., x_d)`.
//!
//! A kernel returns the velocity of its first argument given `d - 1`
//! partners. It must be symmetric in the partner slots and satisfy
//!
//! ```text
//! |v_t(X) - v_s(Y)| <= L (|X - Y| + |t - s|),    |v_t(X)| <= L (1 + |x_1|)
//! ```
//!
//! with a declared constant `L >= 1`. [`check_kernel_lipschitz`] probes both
//! inequalities on random pairs.

use alloc::string::ToString;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::phase::PhasePoint;
use crate::rng::{seeded, unit_vector};

pub trait Kernel<const D: usize>: Sync {
    /// Number of simultaneously interacting particles `d >= 2`.
    fn arity(&self) -> usize;

    /// Declared Lipschitz constant `L`.
    fn lipschitz(&self) -> f64;

    /// Whether the kernel claims symmetry in arguments `2..d`.
    fn symmetric_tail(&self) -> bool {
        true
    }

    /// `v_t(args[0], ..., args[d-1])`; `args.len() == arity()`.
    fn eval(&self, t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D>;

    /// The pair potential, for Newtonian pair kernels.
    fn pair_potential(&self) -> Option<&dyn Potential<D>> {
        None
    }
}

impl<const D: usize, K: Kernel<D> + ?Sized> Kernel<D> for &K {
    fn arity(&self) -> usize {
        (**self).arity()
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn symmetric_tail(&self) -> bool {
        (**self).symmetric_tail()
    }
    fn eval(&self, t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D> {
        (**self).eval(t, args)
    }
    fn pair_potential(&self) -> Option<&dyn Potential<D>> {
        (**self).pair_potential()
    }
}

/// A smooth pair potential `A: R^D -> R` with declared gradient bounds.
pub trait Potential<const D: usize>: Sync {
    fn value(&self, q: &[f64; D]) -> f64;
    fn grad(&self, q: &[f64; D]) -> [f64; D];
    /// `sup |grad A|`, if known.
    fn grad_bound(&self) -> Option<f64>;
    /// Lipschitz constant of `grad A` (operator-norm bound on the Hessian), if known.
    fn grad_lipschitz(&self) -> Option<f64>;
    /// Whether `A` is radially symmetric (so `grad A(0) = 0`).
    fn radial(&self) -> bool {
        false
    }
}

/// `A(q) = amplitude * exp(-|q|^2 / width^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub width: f64,
}

impl GaussianBump {
    pub fn unit() -> Self {
        Self {
            amplitude: 1.0,
            width: 1.0,
        }
    }
}

impl<const D: usize> Potential<D> for GaussianBump {
    fn value(&self, q: &[f64; D]) -> f64 {
        let r2: f64 = q.iter().map(|x| x * x).sum();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }

    fn grad(&self, q: &[f64; D]) -> [f64; D] {
        let w2 = self.width * self.width;
        let r2: f64 = q.iter().map(|x| x * x).sum();
        let s = -2.0 * self.amplitude / w2 * (-r2 / w2).exp();
        let mut g = [0.0; D];
        for (gi, qi) in g.iter_mut().zip(q) {
            *gi = s * qi;
        }
        g
    }

    fn grad_bound(&self) -> Option<f64> {
        // max over r of 2|a| r / w^2 exp(-r^2/w^2), attained at r = w / sqrt 2
        Some(core::f64::consts::SQRT_2 * self.amplitude.abs() * (-0.5f64).exp() / self.width)
    }

    fn grad_lipschitz(&self) -> Option<f64> {
        // Hessian eigenvalues: -2a/w^2 e^{-r^2/w^2} and (4r^2/w^2 - 2) a/w^2 e^{-r^2/w^2};
        // largest magnitude is 2|a|/w^2 at the origin.
        Some(2.0 * self.amplitude.abs() / (self.width * self.width))
    }

    fn radial(&self) -> bool {
        true
    }
}

/// `A(q) = c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPotential(pub f64);

impl<const D: usize> Potential<D> for ConstantPotential {
    fn value(&self, _q: &[f64; D]) -> f64 {
        self.0
    }
    fn grad(&self, _q: &[f64; D]) -> [f64; D] {
        [0.0; D]
    }
    fn grad_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn grad_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn radial(&self) -> bool {
        true
    }
}

/// Free streaming `v((q1, p1), ...) = (p1, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeKernel {
    pub arity: usize,
}

impl Default for FreeKernel {
    fn default() -> Self {
        Self { arity: 2 }
    }
}

impl<const D: usize> Kernel<D> for FreeKernel {
    fn arity(&self) -> usize {
        self.arity
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn eval(&self, _t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D> {
        PhasePoint::new(args[0].p, [0.0; D])
    }
}

/// The zero vector field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroKernel {
    pub arity: usize,
}

impl Default for ZeroKernel {
    fn default() -> Self {
        Self { arity: 2 }
    }
}

impl<const D: usize> Kernel<D> for ZeroKernel {
    fn arity(&self) -> usize {
        self.arity
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn eval(&self, _t: f64, _args: &[PhasePoint<D>]) -> PhasePoint<D> {
        PhasePoint::zero()
    }
}

/// Newtonian pair kernel `v((q1, p1), (q2, p2)) = (p1, -grad A(q1 - q2))`.
#[derive(Clone, Debug)]
pub struct NewtonianPair<P> {
    potential: P,
    lipschitz: f64,
}

/// Builds the Newtonian pair kernel for `A`.
///
/// `L` is `max(1, sup|grad A|, sqrt(1 + 2 Lip(grad A)^2))`: the free-streaming
/// part contributes `|p1 - p1'|`, the force part `Lip(grad A) |r - r'|` with
/// `|r - r'| <= sqrt 2 |(q1 - q1', q2 - q2')|`.
pub fn newtonian_pair_kernel<const D: usize, P: Potential<D>>(potential: P) -> Result<NewtonianPair<P>> {
    let (Some(g), Some(h)) = (potential.grad_bound(), potential.grad_lipschitz()) else {
        return Err(Error::Config(
            "pair potential must declare a gradient bound and a gradient Lipschitz constant"
                .to_string(),
        ));
    };
    if !(g.is_finite() && h.is_finite() && g >= 0.0 && h >= 0.0) {
        return Err(Error::Config("gradient bounds must be finite and nonnegative".to_string()));
    }
    let lipschitz = 1f64.max(g).max((1.0 + 2.0 * h * h).sqrt());
    Ok(NewtonianPair { potential, lipschitz })
}

impl<P> NewtonianPair<P> {
    pub fn potential(&self) -> &P {
        &self.potential
    }

    /// Replaces the declared Lipschitz constant (used to build deliberately
    /// mis-declared kernels in checks).
    pub fn with_declared_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = l;
        self
    }
}

impl<const D: usize, P: Potential<D>> Kernel<D> for NewtonianPair<P> {
    fn arity(&self) -> usize {
        2
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    fn eval(&self, _t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D> {
        let (a, b) = (&args[0], &args[1]);
        let mut r = [0.0; D];
        for i in 0..D {
            r[i] = a.q[i] - b.q[i];
        }
        let g = self.potential.grad(&r);
        let mut force = [0.0; D];
        for i in 0..D {
            force[i] = -g[i];
        }
        PhasePoint::new(a.p, force)
    }

    fn pair_potential(&self) -> Option<&dyn Potential<D>> {
        Some(&self.potential)
    }
}

/// Kernel defined by a closure; mostly for tests and experiments with `d > 2`.
pub struct FnKernel<F> {
    pub arity: usize,
    pub lipschitz: f64,
    pub symmetric_tail: bool,
    pub f: F,
}

impl<const D: usize, F> Kernel<D> for FnKernel<F>
where
    F: Fn(f64, &[PhasePoint<D>]) -> PhasePoint<D> + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn symmetric_tail(&self) -> bool {
        self.symmetric_tail
    }
    fn eval(&self, t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D> {
        (self.f)(t, args)
    }
}

/// Probe settings for [`check_kernel_lipschitz`].
#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub probes: usize,
    pub seed: u64,
    /// Coordinates are drawn from `[-half_width, half_width]`.
    pub half_width: f64,
    /// Times are drawn from `[0, time_span]`.
    pub time_span: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            probes: 10_000,
            seed: 0,
            half_width: 5.0,
            time_span: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzReport {
    pub declared: f64,
    /// `max |v_t(X) - v_s(Y)| / (|X - Y| + |t - s|)` over probes.
    pub max_difference_ratio: f64,
    /// `max |v_t(X)| / (1 + |x_1|)` over probes.
    pub max_growth_ratio: f64,
    /// `max |v_t(X) - v_t(X')|` over probes where `X'` permutes arguments `2..d`.
    pub max_tail_asymmetry: f64,
    pub probes: usize,
}

impl LipschitzReport {
    pub fn violation(&self) -> bool {
        self.max_difference_ratio > self.declared || self.max_growth_ratio > self.declared
    }
}

/// Samples probe pairs and reports the largest observed Lipschitz and growth
/// ratios against the declared constant.
///
/// Half of the pairs are independent uniform draws from the probe box; the
/// other half are local perturbations `Y = X + h u` with `u` a unit vector
/// supported on one random `q` or `p` block and `h` log-uniform in
/// `[1e-4, 1]`, which is where difference quotients approach the Lipschitz
/// constant. Half of the local probes also place the partners' positions
/// within `0.5` of `q_1`, where pair forces vary fastest.
pub fn check_kernel_lipschitz<const D: usize, K: Kernel<D> + ?Sized>(
    kernel: &K,
    cfg: &ProbeConfig,
) -> Result<LipschitzReport> {
    if cfg.probes == 0 {
        return Err(Error::Input("probes must be at least 1".to_string()));
    }
    let d = kernel.arity();
    let w = cfg.half_width;
    let mut rng = seeded(cfg.seed);
    let mut x: Vec<PhasePoint<D>> = alloc::vec![PhasePoint::zero(); d];
    let mut y = x.clone();
    let mut dir = alloc::vec![0.0; D];
    let mut report = LipschitzReport {
        declared: kernel.lipschitz(),
        max_difference_ratio: 0.0,
        max_growth_ratio: 0.0,
        max_tail_asymmetry: 0.0,
        probes: cfg.probes,
    };

    let uniform_point = |rng: &mut dyn RngCore| {
        let mut pt = PhasePoint::<D>::zero();
        for i in 0..2 * D {
            *pt.coord_mut(i) = rng.random_range(-w..=w);
        }
        pt
    };

    for probe in 0..cfg.probes {
        for xi in x.iter_mut() {
            *xi = uniform_point(&mut rng);
        }
        let t = rng.random::<f64>() * cfg.time_span;
        let s;
        if probe % 2 == 0 {
            for yi in y.iter_mut() {
                *yi = uniform_point(&mut rng);
            }
            s = rng.random::<f64>() * cfg.time_span;
        } else {
            if rng.random::<bool>() {
                for j in 1..d {
                    for i in 0..D {
                        x[j].q[i] = x[0].q[i] + rng.random_range(-0.5..=0.5);
                    }
                }
            }
            y.clone_from(&x);
            let h = 10f64.powf(rng.random_range(-4.0..=0.0));
            let slot = rng.random_range(0..d);
            unit_vector(&mut rng, &mut dir);
            let momentum = rng.random::<bool>();
            for i in 0..D {
                if momentum {
                    y[slot].p[i] += h * dir[i];
                } else {
                    y[slot].q[i] += h * dir[i];
                }
            }
            s = if rng.random::<f64>() < 0.25 {
                (t + h * rng.random::<f64>()).min(cfg.time_span)
            } else {
                t
            };
        }

        let vx = kernel.eval(t, &x);
        let vy = kernel.eval(s, &y);
        if !(vx.is_finite() && vy.is_finite()) {
            return Err(Error::NonFiniteKernel {
                indices: (0..d).collect(),
            });
        }
        let dx: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (*a - *b).norm_sq())
            .sum::<f64>()
            .sqrt();
        let denom = dx + (t - s).abs();
        if denom > 0.0 {
            let ratio = (vx - vy).norm() / denom;
            report.max_difference_ratio = report.max_difference_ratio.max(ratio);
        }
        report.max_growth_ratio = report.max_growth_ratio.max(vx.norm() / (1.0 + x[0].norm()));

        if d > 2 {
            let mut z = x.clone();
            z[1..].reverse();
            let vz = kernel.eval(t, &z);
            report.max_tail_asymmetry = report.max_tail_asymmetry.max((vx - vz).norm());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_gradient_matches_central_differences() {
        let a = GaussianBump::unit();
        let q = [1.0, 0.0, 0.0];
        let g = <GaussianBump as Potential<3>>::grad(&a, &q);
        // d/dx exp(-x^2) at 1 is -2/e
        assert!((g[0] + 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        let h = 1e-6;
        let fd = (Potential::<3>::value(&a, &[1.0 + h, 0.0, 0.0])
            - Potential::<3>::value(&a, &[1.0 - h, 0.0, 0.0]))
            / (2.0 * h);
        assert!((fd - g[0]).abs() < 1e-9);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn newtonian_force_at_unit_separation() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let x1 = PhasePoint::new([1.0, 0.0, 0.0], [0.3, 0.0, 0.0]);
        let x2 = PhasePoint::new([0.0; 3], [0.0; 3]);
        let v = k.eval(0.0, &[x1, x2]);
        assert_eq!(v.q, x1.p);
        assert!((v.p[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(v.p[1], 0.0);
        assert_eq!(v.p[2], 0.0);
    }

    #[test]
    fn coincident_particles_feel_no_force() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let x = PhasePoint::new([0.4, -1.0, 2.0], [1.0, 1.0, 1.0]);
        let y = PhasePoint::new([0.4, -1.0, 2.0], [-3.0, 0.0, 0.0]);
        assert_eq!(k.eval(0.0, &[x, y]).p, [0.0; 3]);
    }

    #[test]
    fn constant_potential_reduces_to_free_streaming() {
        let k = newtonian_pair_kernel::<3, _>(ConstantPotential(4.0)).unwrap();
        let x = PhasePoint::new([0.1, 0.2, 0.3], [1.0, -1.0, 0.5]);
        let y = PhasePoint::new([2.0, 0.0, 0.0], [0.0; 3]);
        assert_eq!(k.eval(0.0, &[x, y]), Kernel::<3>::eval(&FreeKernel::default(), 0.0, &[x, y]));
        assert_eq!(Kernel::<3>::lipschitz(&k), 1.0);
    }

    #[test]
    fn gaussian_kernel_lipschitz_constant() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        assert!((Kernel::<3>::lipschitz(&k) - 3.0).abs() < 1e-15);
    }

    struct Undeclared;
    impl Potential<1> for Undeclared {
        fn value(&self, q: &[f64; 1]) -> f64 {
            q[0].cos()
        }
        fn grad(&self, q: &[f64; 1]) -> [f64; 1] {
            [-q[0].sin()]
        }
        fn grad_bound(&self) -> Option<f64> {
            None
        }
        fn grad_lipschitz(&self) -> Option<f64> {
            Some(1.0)
        }
    }

    #[test]
    fn missing_gradient_metadata_is_a_configuration_error() {
        assert!(matches!(newtonian_pair_kernel::<1, _>(Undeclared), Err(Error::Config(_))));
    }

    #[test]
    fn free_kernel_ratios_stay_below_one() {
        let cfg = ProbeConfig {
            probes: 5000,
            ..ProbeConfig::default()
        };
        let r = check_kernel_lipschitz::<3, _>(&FreeKernel::default(), &cfg).unwrap();
        assert!(r.max_difference_ratio <= 1.0 + 1e-12);
        assert!(r.max_growth_ratio <= 1.0);
        assert!(!r.violation());
    }

    #[test]
    fn understated_constant_is_flagged() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let k = k.with_declared_lipschitz(1.5);
        let cfg = ProbeConfig {
            probes: 20_000,
            seed: 5,
            ..ProbeConfig::default()
        };
        assert!(check_kernel_lipschitz::<3, _>(&k, &cfg).unwrap().violation());
    }

    #[test]
    fn zero_probes_rejected() {
        let cfg = ProbeConfig {
            probes: 0,
            ..ProbeConfig::default()
        };
        assert!(check_kernel_lipschitz::<3, _>(&FreeKernel::default(), &cfg).is_err());
    }
}
