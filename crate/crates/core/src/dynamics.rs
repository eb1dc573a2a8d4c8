//! The microscopic N-particle flow.
//!
//! The vector field is assembled from a d-body kernel,
//!
//! ```text
//! (V_t(X))_j = C(N-1, d-1)^{-1} sum_{S subset {1..N}\{j}, |S| = d-1} v_t(x_j, x_S)
//! ```
//!
//! and integrated either with the explicit one-step map
//! `Psi_{t+h,t}(X) = X + h V_t(X)` or with classical RK4, which serves as the
//! reference for the exact flow.

use alloc::string::ToString;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Potential};
use crate::phase::{Configuration, PhasePoint};

/// How the partner sum of the N-particle field is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Average over the `C(N-1, d-1)` partner subsets that exclude `j`.
    #[default]
    Binomial,
    /// Average over all `N^{d-1}` partner tuples, `j` included. For a
    /// Newtonian pair kernel this is `dp_i/dt = -(1/N) sum_j grad A(q_i - q_j)`.
    SelfInclusive,
}

/// Integration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Psi,
    Rk4,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Psi => "Psi",
            Method::Rk4 => "RK4",
        }
    }
}

/// Sum whose result does not depend on the order of the terms.
///
/// Terms are converted to 64-bit fixed point with a power-of-two scale chosen
/// from the largest magnitude, so the integer accumulation is associative.
/// Falls back to a plain sum when the scale leaves the normal exponent range.
pub(crate) fn order_free_sum(terms: &[f64]) -> f64 {
    let max = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let (_, exp) = libm::frexp(max * terms.len() as f64);
    let e = 62 - exp;
    if !(-1000..=1000).contains(&e) {
        return terms.iter().sum();
    }
    let scale = libm::ldexp(1.0, e);
    let acc: i64 = terms.iter().map(|&v| (v * scale) as i64).sum();
    acc as f64 / scale
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// Advances `idx` to the next strictly increasing tuple below `n`.
pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Advances `idx` to the next tuple in `{0..n}^k` (odometer order).
fn next_tuple(idx: &mut [usize], n: usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < n {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Evaluates the N-particle vector field `V_t(X)`.
///
/// Every component is an order-independent sum, so the result is exactly
/// permutation-equivariant: `V(sigma X) = sigma V(X)` bit for bit.
pub fn assemble_vector_field<const D: usize, K: Kernel<D> + ?Sized>(
    x: &Configuration<D>,
    kernel: &K,
    t: f64,
    normalization: Normalization,
) -> Result<Configuration<D>> {
    let n = x.len();
    let d = kernel.arity();
    if d < 1 || n < d {
        return Err(Error::Arity { arity: d, n });
    }
    let pts = x.points();
    let mut out = Vec::with_capacity(n);
    let mut args: Vec<PhasePoint<D>> = alloc::vec![PhasePoint::zero(); d];
    let mut terms: Vec<PhasePoint<D>> = Vec::new();
    let mut coord_buf: Vec<f64> = Vec::new();
    let mut partners = alloc::vec![0usize; d - 1];

    for j in 0..n {
        terms.clear();
        args[0] = pts[j];
        let push = |partners: &[usize], args: &mut [PhasePoint<D>], terms: &mut Vec<PhasePoint<D>>| {
            for (slot, &i) in partners.iter().enumerate() {
                args[slot + 1] = pts[i];
            }
            let v = kernel.eval(t, args);
            if !v.is_finite() {
                let mut indices = Vec::with_capacity(d);
                indices.push(j);
                indices.extend_from_slice(partners);
                return Err(Error::NonFiniteKernel { indices });
            }
            terms.push(v);
            Ok(())
        };

        let denom = match normalization {
            Normalization::Binomial => {
                // partner subsets drawn from the N-1 indices other than j
                let others = n - 1;
                for (s, p) in partners.iter_mut().enumerate() {
                    *p = s;
                }
                loop {
                    let mapped: Vec<usize> = partners.iter().map(|&i| if i >= j { i + 1 } else { i }).collect();
                    push(&mapped, &mut args, &mut terms)?;
                    if partners.is_empty() || !next_combination(&mut partners, others) {
                        break;
                    }
                }
                binomial(n - 1, d - 1)
            }
            Normalization::SelfInclusive => {
                partners.iter_mut().for_each(|p| *p = 0);
                loop {
                    push(&partners, &mut args, &mut terms)?;
                    if partners.is_empty() || !next_tuple(&mut partners, n) {
                        break;
                    }
                }
                (n as f64).powi(d as i32 - 1)
            }
        };

        let mut v = PhasePoint::<D>::zero();
        for c in 0..2 * D {
            coord_buf.clear();
            coord_buf.extend(terms.iter().map(|p| p.coord(c)));
            let first = coord_buf[0];
            // identical terms (e.g. the streaming part) average to themselves exactly
            *v.coord_mut(c) = if coord_buf.iter().all(|&t| t == first) && terms.len() as f64 == denom {
                first
            } else {
                order_free_sum(&coord_buf) / denom
            };
        }
        out.push(v);
    }
    Ok(Configuration::new(out))
}

/// One step of the explicit map `Psi_{t+dt,t}(X) = X + dt V_t(X)`.
///
/// `dt = 0` returns `X` bit for bit.
pub fn step_psi<const D: usize, K: Kernel<D> + ?Sized>(
    x: &Configuration<D>,
    kernel: &K,
    t: f64,
    dt: f64,
    normalization: Normalization,
) -> Result<Configuration<D>> {
    if !dt.is_finite() {
        return Err(Error::Input("step size must be finite".to_string()));
    }
    if dt == 0.0 {
        return Ok(x.clone());
    }
    let v = assemble_vector_field(x, kernel, t, normalization)?;
    Ok(x.axpy(dt, &v))
}

/// One classical fourth-order Runge-Kutta step.
pub fn step_rk4<const D: usize, K: Kernel<D> + ?Sized>(
    x: &Configuration<D>,
    kernel: &K,
    t: f64,
    dt: f64,
    normalization: Normalization,
) -> Result<Configuration<D>> {
    if !dt.is_finite() {
        return Err(Error::Input("step size must be finite".to_string()));
    }
    if dt == 0.0 {
        return Ok(x.clone());
    }
    let h = dt;
    let k1 = assemble_vector_field(x, kernel, t, normalization)?;
    let k2 = assemble_vector_field(&x.axpy(0.5 * h, &k1), kernel, t + 0.5 * h, normalization)?;
    let k3 = assemble_vector_field(&x.axpy(0.5 * h, &k2), kernel, t + 0.5 * h, normalization)?;
    let k4 = assemble_vector_field(&x.axpy(h, &k3), kernel, t + h, normalization)?;
    let pts = x
        .iter()
        .zip(k1.iter().zip(k2.iter()).zip(k3.iter().zip(k4.iter())))
        .map(|(xi, ((a, b), (c, e)))| {
            let mut y = *xi;
            for i in 0..2 * D {
                *y.coord_mut(i) += h / 6.0 * (a.coord(i) + 2.0 * b.coord(i) + 2.0 * c.coord(i) + e.coord(i));
            }
            y
        })
        .collect();
    Ok(Configuration::new(pts))
}

/// Integration settings for [`evolve_micro`].
#[derive(Clone, Debug)]
pub struct SolverSettings {
    /// Maximal step size; each segment is split into equal steps no longer than this.
    pub dt: f64,
    pub method: Method,
    pub normalization: Normalization,
    /// Times at which states are recorded (besides the initial one). `None`
    /// records every step.
    pub output_times: Option<Vec<f64>>,
}

impl SolverSettings {
    pub fn new(dt: f64, method: Method) -> Self {
        Self {
            dt,
            method,
            normalization: Normalization::Binomial,
            output_times: None,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = Some(times);
        self
    }
}

/// States of the microscopic flow at increasing (or, for backward runs,
/// decreasing) time stamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<const D: usize = 3> {
    pub times: Vec<f64>,
    pub states: Vec<Configuration<D>>,
    pub method: Method,
    pub dt: f64,
}

impl<const D: usize> Trajectory<D> {
    pub fn last(&self) -> &Configuration<D> {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn particles(&self) -> usize {
        self.states.first().map_or(0, Configuration::len)
    }
}

fn integrate_segment<const D: usize, K: Kernel<D> + ?Sized>(
    x: &mut Configuration<D>,
    kernel: &K,
    from: f64,
    to: f64,
    settings: &SolverSettings,
    mut on_step: impl FnMut(f64, &Configuration<D>),
) -> Result<()> {
    let span = to - from;
    if span == 0.0 {
        return Ok(());
    }
    let steps = libm::ceil(span.abs() / settings.dt - 1e-9).max(1.0) as usize;
    let h = span / steps as f64;
    for i in 0..steps {
        let t = from + i as f64 * h;
        let next = match settings.method {
            Method::Psi => step_psi(x, kernel, t, h, settings.normalization)?,
            Method::Rk4 => step_rk4(x, kernel, t, h, settings.normalization)?,
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteState { last_valid_time: t });
        }
        *x = next;
        let t_next = if i + 1 == steps { to } else { from + (i + 1) as f64 * h };
        on_step(t_next, x);
    }
    Ok(())
}

/// Evolves `x0` from `t_start` to `t_end` (either direction).
pub fn evolve_between<const D: usize, K: Kernel<D> + ?Sized>(
    x0: &Configuration<D>,
    kernel: &K,
    t_start: f64,
    t_end: f64,
    settings: &SolverSettings,
) -> Result<Trajectory<D>> {
    if !(settings.dt.is_finite() && settings.dt > 0.0) {
        return Err(Error::Input("dt must be positive and finite".to_string()));
    }
    if !(t_start.is_finite() && t_end.is_finite()) {
        return Err(Error::Input("time span must be finite".to_string()));
    }
    if x0.len() < kernel.arity() {
        return Err(Error::Arity {
            arity: kernel.arity(),
            n: x0.len(),
        });
    }
    let dir = if t_end >= t_start { 1.0 } else { -1.0 };
    let mut traj = Trajectory {
        times: alloc::vec![t_start],
        states: alloc::vec![x0.clone()],
        method: settings.method,
        dt: settings.dt,
    };
    let mut x = x0.clone();
    match &settings.output_times {
        None => {
            integrate_segment(&mut x, kernel, t_start, t_end, settings, |t, s| {
                traj.times.push(t);
                traj.states.push(s.clone());
            })?;
        }
        Some(outs) => {
            let mut prev = t_start;
            for &t_out in outs {
                let ahead = (t_out - prev) * dir;
                let inside = (t_out - t_start) * dir >= 0.0 && (t_end - t_out) * dir >= 0.0;
                if !(inside && ahead > 0.0) {
                    return Err(Error::Input(
                        "output times must be strictly monotone and inside the time span".to_string(),
                    ));
                }
                integrate_segment(&mut x, kernel, prev, t_out, settings, |_, _| {})?;
                traj.times.push(t_out);
                traj.states.push(x.clone());
                prev = t_out;
            }
        }
    }
    Ok(traj)
}

/// Evolves `x0` over `[0, t_end]`, recording states per `settings`.
pub fn evolve_micro<const D: usize, K: Kernel<D> + ?Sized>(
    x0: &Configuration<D>,
    kernel: &K,
    t_end: f64,
    settings: &SolverSettings,
) -> Result<Trajectory<D>> {
    if !(t_end > 0.0) {
        return Err(Error::Input("t_end must be positive".to_string()));
    }
    evolve_between(x0, kernel, 0.0, t_end, settings)
}

/// Fine-step RK4 stand-in for the exact flow `Phi_{t_end, t_start}`.
pub fn reference_flow<const D: usize, K: Kernel<D> + ?Sized>(
    x0: &Configuration<D>,
    kernel: &K,
    t_start: f64,
    t_end: f64,
    dt: f64,
    normalization: Normalization,
) -> Result<Configuration<D>> {
    let settings = SolverSettings {
        dt,
        method: Method::Rk4,
        normalization,
        output_times: Some(alloc::vec![t_end]),
    };
    if t_start == t_end {
        return Ok(x0.clone());
    }
    let mut traj = evolve_between(x0, kernel, t_start, t_end, &settings)?;
    Ok(traj.states.pop().expect("final state recorded"))
}

/// Total energy `sum |p_j|^2 / 2 + c sum_{i,j} A(q_i - q_j)` of a Newtonian system.
///
/// The pair coefficient matches the normalization: `1/(2N)` over all pairs
/// for [`Normalization::SelfInclusive`], `1/(2(N-1))` over `i != j` for
/// [`Normalization::Binomial`].
pub fn newtonian_energy<const D: usize>(
    x: &Configuration<D>,
    potential: &dyn Potential<D>,
    normalization: Normalization,
) -> f64 {
    let n = x.len();
    let kinetic: f64 = x.iter().map(|pt| 0.5 * pt.p.iter().map(|v| v * v).sum::<f64>()).sum();
    let mut pair = 0.0;
    for (i, a) in x.iter().enumerate() {
        for (j, b) in x.iter().enumerate() {
            if i == j && normalization == Normalization::Binomial {
                continue;
            }
            let mut r = [0.0; D];
            for k in 0..D {
                r[k] = a.q[k] - b.q[k];
            }
            pair += potential.value(&r);
        }
    }
    let c = match normalization {
        Normalization::Binomial => 0.5 / (n as f64 - 1.0),
        Normalization::SelfInclusive => 0.5 / n as f64,
    };
    kinetic + c * pair
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{newtonian_pair_kernel, FnKernel, FreeKernel, GaussianBump, ZeroKernel};
    use crate::rng::{sample_configuration, seeded, UniformBox};
    use rand::seq::SliceRandom;

    fn random_config<const D: usize>(n: usize, seed: u64) -> Configuration<D> {
        let mut rng = seeded(seed);
        sample_configuration(&UniformBox::cube(2 * D, -1.0, 1.0), n, &mut rng)
    }

    /// Direct O(N^d) summation over ordered partner tuples with distinct
    /// indices, divided by (d-1)! C(N-1, d-1).
    fn naive_field<const D: usize>(x: &Configuration<D>, k: &dyn Kernel<D>, t: f64) -> Vec<PhasePoint<D>> {
        let n = x.len();
        let d = k.arity();
        let mut out = Vec::new();
        for j in 0..n {
            let mut acc = PhasePoint::<D>::zero();
            let mut count = 0.0;
            let mut idx = alloc::vec![0usize; d - 1];
            loop {
                let distinct = {
                    let mut all: Vec<usize> = idx.clone();
                    all.push(j);
                    all.sort_unstable();
                    all.windows(2).all(|w| w[0] != w[1])
                };
                if distinct {
                    let mut args = alloc::vec![x[j]];
                    args.extend(idx.iter().map(|&i| x[i]));
                    acc += k.eval(t, &args);
                    count += 1.0;
                }
                if !next_tuple(&mut idx, n) {
                    break;
                }
            }
            out.push(acc * (1.0 / count));
        }
        out
    }

    #[test]
    fn free_kernel_field_is_momentum() {
        let x = random_config::<3>(2, 1);
        let v = assemble_vector_field(&x, &FreeKernel::default(), 0.0, Normalization::Binomial).unwrap();
        for (vi, xi) in v.iter().zip(x.iter()) {
            assert_eq!(vi.q, xi.p);
            assert_eq!(vi.p, [0.0; 3]);
        }
    }

    #[test]
    fn pair_field_matches_double_loop() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let x = random_config::<3>(3, 2);
        let v = assemble_vector_field(&x, &k, 0.0, Normalization::Binomial).unwrap();
        let oracle = naive_field(&x, &k, 0.0);
        for (a, b) in v.iter().zip(&oracle) {
            assert!((*a - *b).norm() < 1e-14);
        }
    }

    #[test]
    fn three_body_field_matches_naive_summation() {
        let k = FnKernel {
            arity: 3,
            lipschitz: 3.0,
            symmetric_tail: true,
            f: |_t: f64, a: &[PhasePoint<1>]| {
                let s = (a[1].q[0] - a[0].q[0]).sin() + (a[2].q[0] - a[0].q[0]).sin();
                PhasePoint::new(a[0].p, [s * (a[1].q[0] * a[2].q[0]).cos()])
            },
        };
        let x = random_config::<1>(6, 3);
        let v = assemble_vector_field(&x, &k, 0.0, Normalization::Binomial).unwrap();
        let oracle = naive_field(&x, &k, 0.0);
        for (a, b) in v.iter().zip(&oracle) {
            assert!((*a - *b).norm() < 1e-14, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn equal_positions_give_zero_force() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let mut x = random_config::<3>(5, 4);
        for pt in x.points_mut() {
            pt.q = [0.3, -0.2, 0.9];
        }
        let v = assemble_vector_field(&x, &k, 0.0, Normalization::Binomial).unwrap();
        assert!(v.iter().all(|vi| vi.p == [0.0; 3]));
    }

    #[test]
    fn self_inclusive_matches_newtonian_equations() {
        let a = GaussianBump::unit();
        let k = newtonian_pair_kernel::<1, _>(a).unwrap();
        let x = random_config::<1>(4, 5);
        let v = assemble_vector_field(&x, &k, 0.0, Normalization::SelfInclusive).unwrap();
        for i in 0..4 {
            let mut f = 0.0;
            for j in 0..4 {
                f -= Potential::<1>::grad(&a, &[x[i].q[0] - x[j].q[0]])[0];
            }
            assert!((v[i].p[0] - f / 4.0).abs() < 1e-15);
            assert!((v[i].q[0] - x[i].p[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_particles_is_an_arity_error() {
        let x = random_config::<3>(1, 6);
        let err = assemble_vector_field(&x, &FreeKernel::default(), 0.0, Normalization::Binomial).unwrap_err();
        assert_eq!(err, Error::Arity { arity: 2, n: 1 });
    }

    #[test]
    fn non_finite_output_reports_indices() {
        let k = FnKernel {
            arity: 2,
            lipschitz: 1.0,
            symmetric_tail: true,
            f: |_t: f64, a: &[PhasePoint<1>]| {
                if a[1].q[0] > 100.0 {
                    PhasePoint::new([f64::NAN], [0.0])
                } else {
                    PhasePoint::zero()
                }
            },
        };
        let mut x = random_config::<1>(3, 7);
        x[2].q[0] = 200.0;
        match assemble_vector_field(&x, &k, 0.0, Normalization::Binomial) {
            Err(Error::NonFiniteKernel { indices }) => assert_eq!(indices, alloc::vec![0, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn psi_zero_step_is_identity_and_free_step_is_exact() {
        let x = random_config::<3>(4, 8);
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        assert_eq!(step_psi(&x, &k, 0.0, 0.0, Normalization::Binomial).unwrap(), x);
        let y = step_psi(&x, &FreeKernel::default(), 0.0, 0.25, Normalization::Binomial).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            for i in 0..3 {
                assert_eq!(b.q[i], a.q[i] + 0.25 * a.p[i]);
            }
            assert_eq!(a.p, b.p);
        }
    }

    #[test]
    fn rk4_is_exact_for_zero_and_free_fields() {
        let x = random_config::<3>(3, 9);
        let zero = step_rk4(&x, &ZeroKernel::default(), 0.0, 0.7, Normalization::Binomial).unwrap();
        assert_eq!(zero, x);
        let free = step_rk4(&x, &FreeKernel::default(), 0.0, 0.7, Normalization::Binomial).unwrap();
        for (a, b) in x.iter().zip(free.iter()) {
            for i in 0..3 {
                assert!((b.q[i] - (a.q[i] + 0.7 * a.p[i])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn free_evolution_under_psi_is_free_transport() {
        let x = random_config::<3>(5, 10);
        let settings = SolverSettings::new(0.01, Method::Psi);
        let traj = evolve_micro(&x, &FreeKernel::default(), 1.0, &settings).unwrap();
        assert_eq!(traj.times.len(), 101);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        for (a, b) in x.iter().zip(traj.last().iter()) {
            for i in 0..3 {
                assert!((b.q[i] - (a.q[i] + a.p[i])).abs() < 1e-12);
                assert_eq!(a.p[i], b.p[i]);
            }
        }
    }

    #[test]
    fn output_times_must_be_inside_span() {
        let x = random_config::<1>(3, 11);
        let s = SolverSettings::new(0.1, Method::Rk4).with_output_times(alloc::vec![0.5, 2.0]);
        assert!(evolve_micro(&x, &FreeKernel::default(), 1.0, &s).is_err());
        let s = SolverSettings::new(0.1, Method::Rk4).with_output_times(alloc::vec![0.5, 1.0]);
        let traj = evolve_micro(&x, &FreeKernel::default(), 1.0, &s).unwrap();
        assert_eq!(traj.times, alloc::vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn blow_up_aborts_with_last_valid_time() {
        let k = FnKernel {
            arity: 2,
            lipschitz: 1.0,
            symmetric_tail: true,
            f: |_t: f64, a: &[PhasePoint<1>]| PhasePoint::new([a[0].q[0] * 1e200], [0.0]),
        };
        let mut x = random_config::<1>(2, 12);
        x[0].q[0] = 1e200;
        let err = evolve_micro(&x, &k, 1.0, &SolverSettings::new(0.25, Method::Psi)).unwrap_err();
        match err {
            Error::NonFiniteState { last_valid_time } => assert_eq!(last_valid_time, 0.0),
            Error::NonFiniteKernel { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn order_free_sum_is_permutation_invariant() {
        let mut rng = seeded(13);
        let mut v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 - 0.4).collect();
        let s0 = order_free_sum(&v);
        for _ in 0..10 {
            v.shuffle(&mut rng);
            assert_eq!(order_free_sum(&v).to_bits(), s0.to_bits());
        }
        let plain: f64 = v.iter().sum();
        assert!((plain - s0).abs() < 1e-12);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let mut idx = alloc::vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(binomial(799, 1), 799.0);
        assert_eq!(binomial(10, 3), 120.0);
    }
}
