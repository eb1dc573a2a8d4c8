//! Mean-field force `v_t *^{d-1} f_t` and the effective one-particle flow.
//!
//! ```text
//! d/dt phi(t) = integral v_t(phi, x_2, ..., x_d) f_t(x_2) ... f_t(x_d) dx_2 ... dx_d
//! ```
//!
//! A [`MeanField`] is the right-hand side of that ODE for a fixed curve
//! `t -> f_t`. Three implementations are provided: generic quadrature against
//! grid cells or cloud atoms ([`KernelField`]), a fast lattice evaluation for
//! Newtonian pair kernels on grids ([`NewtonianGridField`]), and the closed
//! form for a Gaussian bump against a Gaussian spatial marginal
//! ([`GaussianClosedFormField`]).

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};

use crate::density::{DensityRep, Grid, TimeDensity};
use crate::error::{input, Error, Result};
use crate::kernel::{GaussianBump, Kernel, Potential};
use crate::phase::PhasePoint;
use crate::rng::{substream_seed, LabRng};

/// Default number of Monte Carlo partner tuples per force evaluation on clouds.
pub const DEFAULT_SAMPLES: usize = 4096;

/// Grids are summed exactly unless `cells^{d-1}` exceeds this.
const GRID_EXACT_LIMIT: f64 = 1e8;

/// Point masses representing one density slice.
#[derive(Clone, Debug)]
pub struct Atoms<const D: usize> {
    pub points: Vec<PhasePoint<D>>,
    pub weights: Vec<f64>,
    cumulative: Vec<f64>,
    from_grid: bool,
}

impl<const D: usize> Atoms<D> {
    pub fn from_rep(f: &DensityRep) -> Result<Self> {
        if f.dim() != 2 * D {
            return input("density dimension must equal the phase-space dimension");
        }
        let (flat, weights) = f.atoms();
        if weights.is_empty() {
            return input("density has no atoms (empty cloud or zero grid)");
        }
        let points = flat.chunks_exact(2 * D).map(PhasePoint::from_coords).collect();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            points,
            weights,
            cumulative,
            from_grid: matches!(f, DensityRep::Grid(_)),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }

    fn draw(&self, rng: &mut dyn RngCore) -> usize {
        let u = rng.random::<f64>() * self.total();
        self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    fn exact(&self, partners: usize, samples: usize) -> bool {
        let tuples = (self.len() as f64).powi(partners as i32);
        if self.from_grid {
            tuples <= GRID_EXACT_LIMIT
        } else {
            tuples <= samples as f64
        }
    }

    /// `v_t *^{d-1} f` at `x`, normalized by the total weight.
    pub fn force<K: Kernel<D> + ?Sized>(
        &self,
        kernel: &K,
        x: &PhasePoint<D>,
        t: f64,
        samples: usize,
        rng: &mut dyn RngCore,
    ) -> PhasePoint<D> {
        let k = kernel.arity() - 1;
        let mut args = vec![*x; k + 1];
        if k == 0 {
            return kernel.eval(t, &args);
        }
        let mut acc = PhasePoint::<D>::zero();
        if self.exact(k, samples) {
            let mut idx = vec![0usize; k];
            loop {
                let mut w = 1.0;
                for (s, &i) in idx.iter().enumerate() {
                    args[s + 1] = self.points[i];
                    w *= self.weights[i];
                }
                if w != 0.0 {
                    acc = acc.axpy(w, &kernel.eval(t, &args));
                }
                let mut pos = k;
                loop {
                    if pos == 0 {
                        let norm = self.total().powi(k as i32);
                        return acc * (1.0 / norm);
                    }
                    pos -= 1;
                    idx[pos] += 1;
                    if idx[pos] < self.len() {
                        break;
                    }
                    idx[pos] = 0;
                }
            }
        }
        for _ in 0..samples {
            for slot in args.iter_mut().skip(1) {
                *slot = self.points[self.draw(rng)];
            }
            acc += kernel.eval(t, &args);
        }
        acc * (1.0 / samples as f64)
    }
}

/// Mean-field force `v_t *^{d-1} f` at `x` for one density.
///
/// Grids use tensorized quadrature over cell centres. Clouds are summed
/// exactly when `M^{d-1} <= samples`, otherwise `samples` partner tuples are
/// drawn with replacement from `rng`.
pub fn mean_field_force<const D: usize, K: Kernel<D> + ?Sized>(
    x: &PhasePoint<D>,
    f: &DensityRep,
    kernel: &K,
    t: f64,
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<PhasePoint<D>> {
    if samples == 0 {
        return input("sample count must be positive");
    }
    let atoms = Atoms::from_rep(f)?;
    Ok(atoms.force(kernel, x, t, samples, rng))
}

/// Right-hand side `x -> (v_t *^{d-1} f_t)(x)` of the effective flow.
pub trait MeanField<const D: usize>: Sync {
    fn velocity(&self, x: &PhasePoint<D>, t: f64) -> PhasePoint<D>;
    /// Times on which the underlying curve is defined.
    fn time_range(&self) -> (f64, f64);
}

impl<const D: usize, M: MeanField<D> + ?Sized> MeanField<D> for &M {
    fn velocity(&self, x: &PhasePoint<D>, t: f64) -> PhasePoint<D> {
        (**self).velocity(x, t)
    }
    fn time_range(&self) -> (f64, f64) {
        (**self).time_range()
    }
}

/// Generic quadrature field for any kernel and any [`TimeDensity`].
///
/// Between slices the force is interpolated linearly in `t`; for pair kernels
/// this equals the force of the interpolated density. Monte Carlo draws use a
/// stream keyed by `(seed, x, t)`, so the field is a deterministic function.
pub struct KernelField<'a, const D: usize, K: ?Sized> {
    kernel: &'a K,
    times: Vec<f64>,
    atoms: Vec<Atoms<D>>,
    pub samples: usize,
    pub seed: u64,
}

impl<'a, const D: usize, K: Kernel<D> + ?Sized> KernelField<'a, D, K> {
    pub fn new(kernel: &'a K, curve: &TimeDensity) -> Result<Self> {
        let atoms = curve.slices.iter().map(Atoms::from_rep).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel,
            times: curve.times.clone(),
            atoms,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        })
    }

    pub fn with_samples(mut self, samples: usize, seed: u64) -> Self {
        self.samples = samples.max(1);
        self.seed = seed;
        self
    }

    fn slice_force(&self, i: usize, x: &PhasePoint<D>, t: f64) -> PhasePoint<D> {
        let mut key: Vec<u64> = x.coords().map(f64::to_bits).collect();
        key.push(t.to_bits());
        key.push(i as u64);
        let mut rng = LabRng::seed_from_u64(substream_seed(self.seed, &key));
        self.atoms[i].force(self.kernel, x, t, self.samples, &mut rng)
    }
}

fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[n - 1] {
        return (n - 1, 0.0);
    }
    let i = times.partition_point(|&s| s <= t) - 1;
    (i, (t - times[i]) / (times[i + 1] - times[i]))
}

impl<const D: usize, K: Kernel<D> + ?Sized> MeanField<D> for KernelField<'_, D, K> {
    fn velocity(&self, x: &PhasePoint<D>, t: f64) -> PhasePoint<D> {
        let (i, w) = bracket(&self.times, t);
        let a = self.slice_force(i, x, t);
        if w == 0.0 {
            return a;
        }
        let b = self.slice_force(i + 1, x, t);
        a * (1.0 - w) + b * w
    }

    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("nonempty"))
    }
}

/// Force lattice `-grad A * rho` for one grid slice.
#[derive(Clone, Debug)]
struct ForceLattice<const D: usize> {
    rho: Grid,
    force: Vec<[f64; D]>,
}

/// Mean field of a Newtonian pair kernel on grid slices:
/// `(p, -(grad A * rho_t)(q))`, with `rho_t` the spatial marginal.
///
/// The force is tabulated at spatial cell centres and interpolated
/// multilinearly; outside the lattice it is summed directly.
pub struct NewtonianGridField<'a, const D: usize> {
    potential: &'a dyn Potential<D>,
    times: Vec<f64>,
    lattices: Vec<ForceLattice<D>>,
}

impl<'a, const D: usize> NewtonianGridField<'a, D> {
    pub fn new(potential: &'a dyn Potential<D>, curve: &TimeDensity) -> Result<Self> {
        let mut lattices = Vec::with_capacity(curve.slices.len());
        for s in &curve.slices {
            let g = s
                .as_grid()
                .ok_or_else(|| Error::Input("grid slices required".to_string()))?;
            lattices.push(Self::lattice(potential, g)?);
        }
        Ok(Self {
            potential,
            times: curve.times.clone(),
            lattices,
        })
    }

    /// Field of a kernel, if it is a Newtonian pair kernel.
    pub fn for_kernel<K: Kernel<D> + ?Sized>(kernel: &'a K, curve: &TimeDensity) -> Result<Self> {
        match kernel.pair_potential() {
            Some(p) if kernel.arity() == 2 => Self::new(p, curve),
            _ => Err(Error::UnsupportedKernel("a Newtonian pair kernel is required")),
        }
    }

    fn lattice(potential: &dyn Potential<D>, g: &Grid) -> Result<ForceLattice<D>> {
        if g.dim() != 2 * D {
            return input("grid dimension must equal the phase-space dimension");
        }
        let axes: Vec<usize> = (0..D).collect();
        let rho = g.marginal(&axes)?;
        let vol = rho.cell_volume();
        let n = rho.cells();
        let mut centers = vec![[0.0; D]; n];
        for (i, c) in centers.iter_mut().enumerate() {
            rho.center(i, c);
        }
        let mut force = vec![[0.0; D]; n];
        for (i, fi) in force.iter_mut().enumerate() {
            let mut acc = [0.0; D];
            for (j, cj) in centers.iter().enumerate() {
                let m = rho.values[j];
                if m == 0.0 {
                    continue;
                }
                let mut r = [0.0; D];
                for a in 0..D {
                    r[a] = centers[i][a] - cj[a];
                }
                let gr = potential.grad(&r);
                for a in 0..D {
                    acc[a] -= gr[a] * m;
                }
            }
            for a in 0..D {
                fi[a] = acc[a] * vol;
            }
        }
        Ok(ForceLattice { rho, force })
    }

    fn direct(&self, lat: &ForceLattice<D>, q: &[f64; D]) -> [f64; D] {
        let vol = lat.rho.cell_volume();
        let mut c = [0.0; D];
        let mut acc = [0.0; D];
        for (j, &m) in lat.rho.values.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            lat.rho.center(j, &mut c);
            let mut r = [0.0; D];
            for a in 0..D {
                r[a] = q[a] - c[a];
            }
            let gr = self.potential.grad(&r);
            for a in 0..D {
                acc[a] -= gr[a] * m * vol;
            }
        }
        acc
    }

    fn slice_force(&self, i: usize, q: &[f64; D]) -> [f64; D] {
        let lat = &self.lattices[i];
        let rho = &lat.rho;
        let mut base = [0usize; D];
        let mut frac = [0.0; D];
        for a in 0..D {
            let u = (q[a] - rho.lo[a]) / rho.width(a) - 0.5;
            let n = rho.shape[a];
            if !(u >= 0.0 && u <= (n - 1) as f64) || n < 2 {
                return self.direct(lat, q);
            }
            let b = (u.floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = u - b as f64;
        }
        let mut out = [0.0; D];
        for corner in 0..(1usize << D) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..D {
                let up = (corner >> a) & 1;
                w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * rho.shape[a] + base[a] + up;
            }
            if w != 0.0 {
                for a in 0..D {
                    out[a] += w * lat.force[flat][a];
                }
            }
        }
        out
    }

    /// Spatial force `-(grad A * rho_t)(q)`.
    pub fn force_at(&self, q: &[f64; D], t: f64) -> [f64; D] {
        let (i, w) = bracket(&self.times, t);
        let a = self.slice_force(i, q);
        if w == 0.0 {
            return a;
        }
        let b = self.slice_force(i + 1, q);
        let mut out = [0.0; D];
        for k in 0..D {
            out[k] = (1.0 - w) * a[k] + w * b[k];
        }
        out
    }
}

impl<const D: usize> MeanField<D> for NewtonianGridField<'_, D> {
    fn velocity(&self, x: &PhasePoint<D>, t: f64) -> PhasePoint<D> {
        PhasePoint::new(x.p, self.force_at(&x.q, t))
    }

    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().expect("nonempty"))
    }
}

/// Mean field of the Gaussian bump `a exp(-|q|^2 / w^2)` against a density
/// whose spatial marginal is `N(mu, sigma^2 I)` at all times:
///
/// ```text
/// (A * rho)(q) = a (w^2 / s)^{D/2} exp(-|q - mu|^2 / s),   s = w^2 + 2 sigma^2
/// ```
#[derive(Clone, Copy, Debug)]
pub struct GaussianClosedFormField<const D: usize> {
    pub bump: GaussianBump,
    pub mean: [f64; D],
    pub sigma: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl<const D: usize> GaussianClosedFormField<D> {
    /// `(A * rho)(q)`.
    pub fn potential_at(&self, q: &[f64; D]) -> f64 {
        let w2 = self.bump.width * self.bump.width;
        let s = w2 + 2.0 * self.sigma * self.sigma;
        let r2: f64 = q.iter().zip(&self.mean).map(|(a, m)| (a - m) * (a - m)).sum();
        self.bump.amplitude * (w2 / s).powf(D as f64 / 2.0) * (-r2 / s).exp()
    }

    /// `-(grad A * rho)(q)`.
    pub fn force_at(&self, q: &[f64; D]) -> [f64; D] {
        let s = self.bump.width * self.bump.width + 2.0 * self.sigma * self.sigma;
        let phi = self.potential_at(q);
        let mut f = [0.0; D];
        for a in 0..D {
            f[a] = 2.0 * (q[a] - self.mean[a]) / s * phi;
        }
        f
    }
}

impl<const D: usize> MeanField<D> for GaussianClosedFormField<D> {
    fn velocity(&self, x: &PhasePoint<D>, _t: f64) -> PhasePoint<D> {
        PhasePoint::new(x.p, self.force_at(&x.q))
    }

    fn time_range(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }
}

fn rk4_step<const D: usize>(field: &dyn MeanField<D>, x: &PhasePoint<D>, t: f64, h: f64) -> PhasePoint<D> {
    let k1 = field.velocity(x, t);
    let k2 = field.velocity(&x.axpy(0.5 * h, &k1), t + 0.5 * h);
    let k3 = field.velocity(&x.axpy(0.5 * h, &k2), t + 0.5 * h);
    let k4 = field.velocity(&x.axpy(h, &k3), t + h);
    let mut y = *x;
    for i in 0..2 * D {
        *y.coord_mut(i) += h / 6.0 * (k1.coord(i) + 2.0 * k2.coord(i) + 2.0 * k3.coord(i) + k4.coord(i));
    }
    y
}

fn check_span<const D: usize>(field: &dyn MeanField<D>, s: f64, t: f64) -> Result<()> {
    let (a, b) = field.time_range();
    let tol = 1e-12 * (1.0 + b.abs());
    for v in [s, t] {
        if !(v >= a - tol && v <= b + tol) {
            return Err(Error::Range { t: v, start: a, end: b });
        }
    }
    Ok(())
}

/// `phi^f_{t,s}(x)`: the effective flow carrying `x` at time `s` to time `t`
/// (either direction), RK4 with steps no longer than `dt`.
pub fn flow_map<const D: usize>(
    field: &dyn MeanField<D>,
    x: &PhasePoint<D>,
    s: f64,
    t: f64,
    dt: f64,
) -> Result<PhasePoint<D>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return input("dt must be positive and finite");
    }
    check_span(field, s, t)?;
    Ok(flow_unchecked(field, x, s, t, dt))
}

pub(crate) fn flow_unchecked<const D: usize>(
    field: &dyn MeanField<D>,
    x: &PhasePoint<D>,
    s: f64,
    t: f64,
    dt: f64,
) -> PhasePoint<D> {
    if s == t {
        return *x;
    }
    let steps = ((t - s).abs() / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    let mut y = *x;
    for i in 0..steps {
        y = rk4_step(field, &y, s + i as f64 * h, h);
    }
    y
}

/// Path of the effective flow from `t_start` to `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectivePath<const D: usize> {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint<D>>,
}

/// Integrates `d phi / dt = (v_t *^{d-1} f_t)(phi)` from `x0` at `t_start`
/// to `t_end`, recording every step.
pub fn evolve_effective<const D: usize>(
    x0: &PhasePoint<D>,
    field: &dyn MeanField<D>,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<EffectivePath<D>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return input("dt must be positive and finite");
    }
    check_span(field, t_start, t_end)?;
    let steps = ((t_end - t_start).abs() / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t_end - t_start) / steps as f64;
    let mut times = vec![t_start];
    let mut points = vec![*x0];
    let mut y = *x0;
    for i in 0..steps {
        y = rk4_step(field, &y, t_start + i as f64 * h, h);
        if !y.is_finite() {
            return Err(Error::NonFiniteState {
                last_valid_time: t_start + i as f64 * h,
            });
        }
        times.push(if i + 1 == steps { t_end } else { t_start + (i + 1) as f64 * h });
        points.push(y);
    }
    Ok(EffectivePath { times, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Cloud;
    use crate::kernel::{newtonian_pair_kernel, ConstantPotential, FreeKernel};
    use crate::rng::{seeded, GaussianProduct};

    fn gaussian_cloud<const D: usize>(m: usize, sigma: f64, seed: u64) -> DensityRep {
        let g = GaussianProduct::isotropic(2 * D, sigma);
        let mut rng = seeded(seed);
        let pts = crate::rng::Sampler::sample_many(&g, &mut rng, m);
        DensityRep::Cloud(Cloud::uniform(2 * D, pts).unwrap())
    }

    #[test]
    fn free_kernel_force_is_momentum() {
        let f = gaussian_cloud::<3>(50, 1.0, 1);
        let x = PhasePoint::new([0.1, 0.2, 0.3], [1.0, -2.0, 0.5]);
        let v = mean_field_force(&x, &f, &FreeKernel::default(), 0.0, 64, &mut seeded(0)).unwrap();
        assert_eq!(v, PhasePoint::new(x.p, [0.0; 3]));
    }

    #[test]
    fn single_atom_cloud_is_exact() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let y = PhasePoint::new([1.0, 0.0, 0.0], [0.0; 3]);
        let f = DensityRep::Cloud(Cloud::from_phase_points(&[y]));
        let x = PhasePoint::new([0.0; 3], [0.5; 3]);
        let v = mean_field_force(&x, &f, &k, 0.0, DEFAULT_SAMPLES, &mut seeded(0)).unwrap();
        assert_eq!(v, k.eval(0.0, &[x, y]));
    }

    #[test]
    fn empty_cloud_is_an_input_error() {
        let f = DensityRep::Cloud(Cloud::new(6, vec![], vec![]).unwrap());
        let x = PhasePoint::<3>::zero();
        assert!(matches!(
            mean_field_force(&x, &f, &FreeKernel::default(), 0.0, 10, &mut seeded(0)),
            Err(Error::Input(_))
        ));
    }

    /// 1-D Simpson integration of the Gaussian convolution in the radial
    /// direction of the probe: the force only has a component along `q`.
    fn convolution_oracle_1d(q: f64, sigma: f64) -> f64 {
        let n = 20000;
        let (a, b) = (-12.0 * sigma, 12.0 * sigma);
        let h = (b - a) / n as f64;
        let integrand = |y: f64| {
            let r = q - y;
            let grad = -2.0 * r * (-r * r).exp();
            let rho = (-(y * y) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * core::f64::consts::PI).sqrt());
            -grad * rho
        };
        let mut s = integrand(a) + integrand(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature() {
        let field = GaussianClosedFormField::<1> {
            bump: GaussianBump::unit(),
            mean: [0.0],
            sigma: 1.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        for q in [-2.0, -0.3, 0.0, 0.7, 1.5] {
            let exact = convolution_oracle_1d(q, 1.0);
            assert!((field.force_at(&[q])[0] - exact).abs() < 1e-10, "q={q}");
        }
    }

    #[test]
    fn cloud_force_converges_to_closed_form_in_3d() {
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let f = gaussian_cloud::<3>(20000, 1.0, 2);
        let closed = GaussianClosedFormField::<3> {
            bump: GaussianBump::unit(),
            mean: [0.0; 3],
            sigma: 1.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        let x = PhasePoint::new([0.8, -0.4, 0.2], [0.0; 3]);
        let v = mean_field_force(&x, &f, &k, 0.0, 200_000, &mut seeded(3)).unwrap();
        let exact = closed.force_at(&x.q);
        for a in 0..3 {
            assert!((v.p[a] - exact[a]).abs() < 0.01, "{:?} vs {:?}", v.p, exact);
        }
    }

    #[test]
    fn grid_field_matches_closed_form() {
        let g = GaussianProduct::isotropic(2, 1.0);
        let mut grid = Grid::sample(vec![-7.0; 2], vec![7.0; 2], vec![140, 20], &g).unwrap();
        grid.normalize().unwrap();
        let curve = TimeDensity::stationary(DensityRep::Grid(grid), 0.0, 1.0).unwrap();
        let bump = GaussianBump::unit();
        let field = NewtonianGridField::<1>::new(&bump, &curve).unwrap();
        let closed = GaussianClosedFormField::<1> {
            bump,
            mean: [0.0],
            sigma: 1.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        for q in [-3.0, -1.0, 0.25, 2.0, 9.0] {
            let a = field.force_at(&[q], 0.5)[0];
            let b = closed.force_at(&[q])[0];
            assert!((a - b).abs() < 2e-3, "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn free_and_constant_potential_flows_are_free_flight() {
        let f = gaussian_cloud::<3>(10, 1.0, 4);
        let curve = TimeDensity::stationary(f, 0.0, 2.0).unwrap();
        let free = FreeKernel::default();
        let flat = newtonian_pair_kernel::<3, _>(ConstantPotential(3.0)).unwrap();
        let x0 = PhasePoint::new([0.5, 0.0, -1.0], [1.0, 2.0, -0.5]);
        for field in [
            &KernelField::new(&free, &curve).unwrap() as &dyn MeanField<3>,
            &KernelField::new(&flat, &curve).unwrap(),
        ] {
            let path = evolve_effective(&x0, field, 0.0, 1.5, 0.1).unwrap();
            let end = path.points.last().unwrap();
            for a in 0..3 {
                assert!((end.q[a] - (x0.q[a] + 1.5 * x0.p[a])).abs() < 1e-12);
                assert_eq!(end.p[a], x0.p[a]);
            }
        }
    }

    #[test]
    fn narrow_cloud_matches_central_force_ode() {
        // a point mass at the origin exerts -grad A(q) on the probe
        let k = newtonian_pair_kernel::<3, _>(GaussianBump::unit()).unwrap();
        let f = DensityRep::Cloud(Cloud::from_phase_points(&[PhasePoint::<3>::zero()]));
        let curve = TimeDensity::stationary(f, 0.0, 1.0).unwrap();
        let field = KernelField::new(&k, &curve).unwrap();
        let x0 = PhasePoint::new([0.5, 0.2, 0.0], [0.0, 0.3, 0.1]);
        let path = evolve_effective(&x0, &field, 0.0, 1.0, 0.01).unwrap();

        let central = GaussianClosedFormField::<3> {
            bump: GaussianBump::unit(),
            mean: [0.0; 3],
            sigma: 0.0,
            t_start: 0.0,
            t_end: 1.0,
        };
        let reference = flow_map(&central, &x0, 0.0, 1.0, 1e-4).unwrap();
        assert!(path.points.last().unwrap().distance(&reference) < 1e-9);
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let f = gaussian_cloud::<1>(5, 1.0, 5);
        let curve = TimeDensity::stationary(f, 0.0, 1.0).unwrap();
        let free = FreeKernel::default();
        let field = KernelField::new(&free, &curve).unwrap();
        let err = evolve_effective(&PhasePoint::<1>::zero(), &field, 0.0, 2.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::Range { .. }));
    }

    #[test]
    fn cloud_with_multi_body_kernel_uses_sampling() {
        let k = crate::kernel::FnKernel {
            arity: 3,
            lipschitz: 1.0,
            symmetric_tail: true,
            f: |_t: f64, a: &[PhasePoint<1>]| PhasePoint::new([0.0], [a[1].q[0] * a[2].q[0]]),
        };
        // E[y z] = 0 for independent centred partners
        let f = gaussian_cloud::<1>(5000, 1.0, 6);
        let x = PhasePoint::<1>::zero();
        let v = mean_field_force(&x, &f, &k, 0.0, 100_000, &mut seeded(7)).unwrap();
        assert!(v.p[0].abs() < 0.02);
    }
}
