//! Self-consistent solution of `f_t = f_0 o phi^f_{0,t}` by Picard iteration,
//! and the discrete residual of the Newtonian Vlasov equation
//!
//! ```text
//! d_t f + p . grad_q f + F . grad_p f = 0,    F = -(grad A) * rho_t.
//! ```

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::density::{Cloud, DensityRep, Evaluable, Grid, TimeDensity};
use crate::error::{input, Error, Result};
use crate::kernel::Kernel;
use crate::meanfield::{flow_unchecked, KernelField, MeanField, NewtonianGridField};
use crate::phase::PhasePoint;

/// Raised when backward characteristics leave the grid box or mass is lost.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageWarning {
    /// Cells whose characteristic foot lies outside the box enlarged by the margin.
    pub cells_outside: usize,
    /// Estimated mass lost through the box boundary (`|1 - raw mass|`).
    pub mass_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pushforward {
    pub grid: Grid,
    /// `1 - mass` before renormalization.
    pub defect: f64,
    pub coverage: Option<CoverageWarning>,
}

/// Mass defect above which a coverage warning is raised even if every foot
/// stayed inside the margin.
const DEFECT_WARN: f64 = 1e-3;

/// Evaluates `f_0(phi_{0,t}(x))` at every cell centre of `template`.
///
/// No Jacobian factor is applied (the flow preserves volume). The result is
/// renormalized to unit mass and the defect is reported.
pub fn pushforward_density<const D: usize>(
    f0: &dyn Evaluable,
    template: &Grid,
    field: &dyn MeanField<D>,
    t: f64,
    dt: f64,
    margin: f64,
) -> Result<Pushforward> {
    if template.dim() != 2 * D || f0.dim() != 2 * D {
        return input("grid and initial density must live on the 2D-dimensional phase space");
    }
    if !(dt > 0.0) {
        return input("dt must be positive");
    }
    let (a, b) = field.time_range();
    if !(t >= a && t <= b && 0.0 >= a) {
        return Err(Error::Range { t, start: a, end: b });
    }
    let mut grid = template.like(vec![0.0; template.cells()]);
    let mut c = vec![0.0; 2 * D];
    let mut foot = vec![0.0; 2 * D];
    let mut outside = 0usize;
    for i in 0..grid.cells() {
        grid.center(i, &mut c);
        let x = PhasePoint::<D>::from_coords(&c);
        let y = flow_unchecked(field, &x, t, 0.0, dt);
        y.write_coords(&mut foot);
        let beyond = foot
            .iter()
            .enumerate()
            .any(|(k, &v)| v < template.lo[k] - margin || v > template.hi[k] + margin);
        if beyond {
            outside += 1;
        }
        grid.values[i] = f0.eval(&foot).max(0.0);
    }
    let defect = grid.normalize()?;
    let coverage = (outside > 0 || defect.abs() > DEFECT_WARN).then_some(CoverageWarning {
        cells_outside: outside,
        mass_loss: defect.abs(),
    });
    Ok(Pushforward { grid, defect, coverage })
}

#[derive(Clone, Debug)]
pub struct PicardSettings {
    pub t_end: f64,
    /// Spacing of the stored time slices and RK4 step of the characteristics.
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Characteristics may leave the box by this much before a warning.
    pub margin: f64,
}

impl PicardSettings {
    pub fn new(t_end: f64, dt: f64, tol: f64, max_iter: usize) -> Self {
        Self {
            t_end,
            dt,
            tol,
            max_iter,
            margin: 0.0,
        }
    }

    fn validate(&self) -> Result<usize> {
        if !(self.tol > 0.0) {
            return input("tol must be positive");
        }
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.dt.is_finite() && self.t_end.is_finite()) {
            return input("t_end and dt must be positive and finite");
        }
        if self.max_iter == 0 {
            return input("max_iter must be at least 1");
        }
        Ok(((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize)
    }

    fn times(&self, steps: usize) -> Vec<f64> {
        (0..=steps)
            .map(|j| if j == steps { self.t_end } else { j as f64 * self.t_end / steps as f64 })
            .collect()
    }
}

/// Converged curve with its residual history.
#[derive(Clone, Debug)]
pub struct PicardSolution {
    pub density: TimeDensity,
    /// `sup_t ||f^{(m+1)}_t - f^{(m)}_t||_1` for each iteration.
    pub residuals: Vec<f64>,
    /// Largest renormalization defect per iteration.
    pub defects: Vec<f64>,
    /// Coverage warnings of the final iteration, one per affected slice.
    pub warnings: Vec<(f64, CoverageWarning)>,
}

impl PicardSolution {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

fn l1_grids(a: &Grid, b: &Grid) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.cell_volume()
}

/// One Picard map `f -> f_0 o phi^f_{0,t}` on every slice time.
fn picard_map<const D: usize, K: Kernel<D> + ?Sized>(
    f0: &dyn Evaluable,
    template: &Grid,
    kernel: &K,
    curve: &TimeDensity,
    settings: &PicardSettings,
) -> Result<(TimeDensity, f64, Vec<(f64, CoverageWarning)>)> {
    let newtonian;
    let generic;
    let field: &dyn MeanField<D> = if kernel.pair_potential().is_some() && kernel.arity() == 2 {
        newtonian = NewtonianGridField::for_kernel(kernel, curve)?;
        &newtonian
    } else {
        generic = KernelField::new(kernel, curve)?;
        &generic
    };
    let mut slices = Vec::with_capacity(curve.times.len());
    let mut max_defect = 0.0f64;
    let mut warnings = Vec::new();
    for &t in &curve.times {
        let pf = pushforward_density(f0, template, field, t, settings.dt, settings.margin)?;
        max_defect = max_defect.max(pf.defect.abs());
        if let Some(w) = pf.coverage {
            warnings.push((t, w));
        }
        slices.push(DensityRep::Grid(pf.grid));
    }
    Ok((TimeDensity::new(curve.times.clone(), slices)?, max_defect, warnings))
}

/// Picard iteration for the Vlasov-type equation on a grid.
///
/// Starts from `f^{(0)}_t = f_0` and applies `f^{(m+1)}_t = f_0 o phi^{f^{(m)}}_{0,t}`
/// at the slice times `0, dt, ..., t_end` until the sup-over-t L1 change drops
/// below `tol`. The returned curve is the last iterate.
pub fn picard_vlasov_solve<const D: usize, K: Kernel<D> + ?Sized>(
    f0: &dyn Evaluable,
    template: &Grid,
    kernel: &K,
    settings: &PicardSettings,
) -> Result<PicardSolution> {
    let steps = settings.validate()?;
    if template.dim() != 2 * D {
        return input("grid dimension must equal the phase-space dimension");
    }
    let times = settings.times(steps);
    let mut g0 = template.like(vec![0.0; template.cells()]);
    g0.fill_with(|x| f0.eval(x).max(0.0));
    g0.normalize()?;
    let mut curve = TimeDensity::new(times.clone(), vec![DensityRep::Grid(g0); times.len()])?;
    let mut residuals = Vec::new();
    let mut defects = Vec::new();
    for _ in 0..settings.max_iter {
        let (next, defect, warnings) = picard_map(f0, template, kernel, &curve, settings)?;
        let residual = curve
            .slices
            .iter()
            .zip(&next.slices)
            .map(|(a, b)| l1_grids(a.as_grid().expect("grid"), b.as_grid().expect("grid")))
            .fold(0.0, f64::max);
        residuals.push(residual);
        defects.push(defect);
        curve = next;
        if residual < settings.tol {
            return Ok(PicardSolution {
                density: curve,
                residuals,
                defects,
                warnings,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: settings.max_iter,
        residuals,
    })
}

/// Sample-based solution: the atoms of `f_0` carried by the effective flow.
#[derive(Clone, Debug)]
pub struct PicardCloudSolution {
    pub density: TimeDensity,
    /// `sup_t sum_i w_i min(|x_i^{(m+1)}(t) - x_i^{(m)}(t)|, 2)`, an upper bound
    /// on the bounded-Lipschitz change between successive iterates.
    pub residuals: Vec<f64>,
}

/// Picard iteration on a weighted cloud: `f^{(m+1)}_t` is the pushforward of
/// the atoms of `f_0` under `phi^{f^{(m)}}_{t,0}`.
pub fn picard_vlasov_cloud<const D: usize, K: Kernel<D> + ?Sized>(
    f0: &Cloud,
    kernel: &K,
    settings: &PicardSettings,
    samples: usize,
    seed: u64,
) -> Result<PicardCloudSolution> {
    let steps = settings.validate()?;
    if f0.dim != 2 * D {
        return input("cloud dimension must equal the phase-space dimension");
    }
    if f0.is_empty() {
        return input("empty cloud");
    }
    let times = settings.times(steps);
    let atoms: Vec<PhasePoint<D>> = (0..f0.len()).map(|i| PhasePoint::from_coords(f0.point(i))).collect();
    let mut paths: Vec<Vec<PhasePoint<D>>> = vec![atoms.clone(); times.len()];
    let to_curve = |paths: &[Vec<PhasePoint<D>>]| -> Result<TimeDensity> {
        let slices = paths
            .iter()
            .map(|pts| {
                let mut c = Cloud::from_phase_points(pts);
                c.weights.clone_from(&f0.weights);
                DensityRep::Cloud(c)
            })
            .collect();
        TimeDensity::new(times.clone(), slices)
    };
    let mut curve = to_curve(&paths)?;
    let mut residuals = Vec::new();
    for _ in 0..settings.max_iter {
        let field = KernelField::new(kernel, &curve)?.with_samples(samples, seed);
        let mut next = Vec::with_capacity(times.len());
        next.push(atoms.clone());
        for j in 1..times.len() {
            let prev = &next[j - 1];
            let pts: Vec<PhasePoint<D>> = prev
                .iter()
                .map(|x| flow_unchecked(&field, x, times[j - 1], times[j], settings.dt))
                .collect();
            next.push(pts);
        }
        let residual = paths
            .iter()
            .zip(&next)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .zip(&f0.weights)
                    .map(|((x, y), w)| w * x.distance(y).min(2.0))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        residuals.push(residual);
        paths = next;
        curve = to_curve(&paths)?;
        if residual < settings.tol {
            return Ok(PicardCloudSolution { density: curve, residuals });
        }
    }
    Err(Error::NotConverged {
        iterations: settings.max_iter,
        residuals,
    })
}

/// `integral over interior cells and times of |d_t f + p . grad_q f + F . grad_p f|`
/// with central differences, `F = -(grad A) * rho_t` from the kernel's pair potential.
pub fn vlasov_pde_residual<const D: usize, K: Kernel<D> + ?Sized>(f: &TimeDensity, kernel: &K) -> Result<f64> {
    if kernel.pair_potential().is_none() || kernel.arity() != 2 {
        return Err(Error::UnsupportedKernel("the Vlasov residual needs a Newtonian pair kernel"));
    }
    if f.times.len() < 3 {
        return input("at least three time slices are needed");
    }
    let grids: Vec<&Grid> = f
        .slices
        .iter()
        .map(|s| s.as_grid().ok_or_else(|| Error::Input("grid slices required".to_string())))
        .collect::<Result<_>>()?;
    let g0 = grids[0];
    if grids.iter().any(|g| !g.same_layout(g0)) {
        return Err(Error::GridMismatch("all slices must share one grid"));
    }
    if g0.dim() != 2 * D || g0.shape.iter().any(|&n| n < 3) {
        return input("grid must be 2D-dimensional with at least 3 cells per axis");
    }
    let field = NewtonianGridField::for_kernel(kernel, f)?;
    let strides: Vec<usize> = (0..2 * D).map(|a| g0.stride(a)).collect();
    let widths: Vec<f64> = (0..2 * D).map(|a| g0.width(a)).collect();
    let vol = g0.cell_volume();
    let mut idx = vec![0usize; 2 * D];
    let mut c = vec![0.0; 2 * D];
    let mut total = 0.0;
    for j in 1..f.times.len() - 1 {
        let span = f.times[j + 1] - f.times[j - 1];
        let (prev, cur, next) = (grids[j - 1], grids[j], grids[j + 1]);
        let mut slab = 0.0;
        for i in 0..cur.cells() {
            cur.unravel(i, &mut idx);
            if idx.iter().zip(&cur.shape).any(|(&k, &n)| k == 0 || k + 1 == n) {
                continue;
            }
            cur.center(i, &mut c);
            let mut q = [0.0; D];
            q.copy_from_slice(&c[..D]);
            let force = field.force_at(&q, f.times[j]);
            let mut r = (next.values[i] - prev.values[i]) / span;
            for a in 0..2 * D {
                let d = (cur.values[i + strides[a]] - cur.values[i - strides[a]]) / (2.0 * widths[a]);
                let coef = if a < D { c[D + a] } else { force[a - D] };
                r += coef * d;
            }
            slab += r.abs();
        }
        total += slab * vol * 0.5 * span;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::FreeTransported;
    use crate::kernel::{newtonian_pair_kernel, ConstantPotential, FreeKernel, GaussianBump};
    use crate::rng::GaussianProduct;

    fn template(n: usize, half: f64) -> Grid {
        Grid::cube(2, -half, half, n).unwrap()
    }

    /// Free streaming as a mean field (force from a constant potential vanishes).
    fn free_field(t_end: f64) -> crate::meanfield::GaussianClosedFormField<1> {
        crate::meanfield::GaussianClosedFormField {
            bump: GaussianBump { amplitude: 0.0, width: 1.0 },
            mean: [0.0],
            sigma: 1.0,
            t_start: 0.0,
            t_end,
        }
    }

    fn closed_form_curve(f0: &GaussianProduct, g: &Grid, times: &[f64]) -> TimeDensity {
        let slices = times
            .iter()
            .map(|&t| {
                let ft = FreeTransported { f0: f0.clone(), t };
                let mut s = g.like(vec![0.0; g.cells()]);
                s.fill_with(|x| ft.eval(x));
                DensityRep::Grid(s)
            })
            .collect();
        TimeDensity::new(times.to_vec(), slices).unwrap()
    }

    #[test]
    fn zero_time_pushforward_is_identity() {
        let g = template(32, 6.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let mut g0 = g.clone();
        g0.fill_with(|x| f0.eval(x));
        g0.normalize().unwrap();
        let curve = TimeDensity::stationary(DensityRep::Grid(g0.clone()), 0.0, 1.0).unwrap();
        let free = FreeKernel::default();
        let field = KernelField::<1, _>::new(&free, &curve).unwrap();
        let pf = pushforward_density(&g0, &g, &field, 0.0, 0.1, 0.0).unwrap();
        assert!(pf.defect.abs() < 1e-12);
        for (a, b) in pf.grid.values.iter().zip(&g0.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn free_transport_matches_closed_form() {
        let g = template(96, 7.0);
        let f0 = GaussianProduct {
            mean: vec![0.5, 0.0],
            std: vec![0.7, 1.0],
        };
        let field = free_field(1.0);
        let pf = pushforward_density(&f0, &g, &field, 1.0, 0.1, 0.0).unwrap();
        let exact = FreeTransported { f0, t: 1.0 };
        let mut c = [0.0; 2];
        let mut err = 0.0;
        for i in 0..g.cells() {
            g.center(i, &mut c);
            err += (pf.grid.values[i] - exact.eval(&c)).abs();
        }
        assert!(err * g.cell_volume() < 1e-3, "L1 error {}", err * g.cell_volume());
    }

    #[test]
    fn narrow_box_raises_coverage_warning() {
        let g = template(16, 1.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let field = free_field(2.0);
        let pf = pushforward_density(&f0, &g, &field, 2.0, 0.1, 0.0).unwrap();
        assert!(pf.coverage.is_some());
    }

    #[test]
    fn free_kernel_picard_reaches_fixed_point_after_one_map() {
        let g = template(24, 6.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let sol = picard_vlasov_solve::<1, _>(&f0, &g, &FreeKernel::default(), &PicardSettings::new(0.5, 0.1, 1e-10, 5))
            .unwrap();
        assert_eq!(sol.iterations(), 2);
        assert!(sol.residuals[0] > 0.0);
        assert!(sol.residuals[1] < 1e-12);
    }

    #[test]
    fn loose_tolerance_stops_after_first_iteration() {
        let g = template(24, 6.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let k = newtonian_pair_kernel::<1, _>(GaussianBump::unit()).unwrap();
        let sol = picard_vlasov_solve::<1, _>(&f0, &g, &k, &PicardSettings::new(0.5, 0.1, 10.0, 5)).unwrap();
        assert_eq!(sol.iterations(), 1);
    }

    #[test]
    fn max_iter_reports_history() {
        let g = template(24, 6.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let k = newtonian_pair_kernel::<1, _>(GaussianBump::unit()).unwrap();
        match picard_vlasov_solve::<1, _>(&f0, &g, &k, &PicardSettings::new(0.5, 0.1, 1e-14, 2)) {
            Err(Error::NotConverged { iterations, residuals }) => {
                assert_eq!(iterations, 2);
                assert_eq!(residuals.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gaussian_bump_residuals_contract() {
        let g = template(48, 6.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let k = newtonian_pair_kernel::<1, _>(GaussianBump::unit()).unwrap();
        let sol = picard_vlasov_solve::<1, _>(&f0, &g, &k, &PicardSettings::new(0.5, 0.05, 1e-8, 12)).unwrap();
        let r = &sol.residuals;
        assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
        assert!(*r.last().unwrap() < 1e-8);
    }

    #[test]
    fn free_transport_pde_residual_is_small_and_perturbation_raises_it() {
        let g = template(64, 7.0);
        let f0 = GaussianProduct::isotropic(2, 1.0);
        let times: Vec<f64> = (0..=10).map(|j| j as f64 * 0.05).collect();
        let curve = closed_form_curve(&f0, &g, &times);
        let k = newtonian_pair_kernel::<1, _>(ConstantPotential(0.0)).unwrap();
        let r = vlasov_pde_residual::<1, _>(&curve, &k).unwrap();
        assert!(r < 0.01, "residual {r}");

        let mut bumped = curve.clone();
        for s in bumped.slices.iter_mut().skip(3).take(1) {
            if let DensityRep::Grid(gr) = s {
                let mut c = [0.0; 2];
                for i in 0..gr.cells() {
                    gr.center(i, &mut c);
                    gr.values[i] += 0.1 * (-((c[0] - 1.0).powi(2) + c[1].powi(2)) * 4.0).exp();
                }
                gr.normalize().unwrap();
            }
        }
        let rb = vlasov_pde_residual::<1, _>(&bumped, &k).unwrap();
        assert!(rb > r);
    }

    #[test]
    fn pde_residual_rejects_non_newtonian_kernels() {
        let g = template(8, 1.0);
        let curve = TimeDensity::new(
            vec![0.0, 0.1, 0.2],
            vec![DensityRep::Grid(g.clone()), DensityRep::Grid(g.clone()), DensityRep::Grid(g)],
        )
        .unwrap();
        assert!(matches!(
            vlasov_pde_residual::<1, _>(&curve, &FreeKernel::default()),
            Err(Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn cloud_picard_with_free_kernel_is_free_transport() {
        let pts = vec![0.0, 1.0, 1.0, -0.5, -1.0, 0.25];
        let f0 = Cloud::uniform(2, pts.clone()).unwrap();
        let sol = picard_vlasov_cloud::<1, _>(&f0, &FreeKernel::default(), &PicardSettings::new(1.0, 0.25, 1e-12, 4), 64, 0)
            .unwrap();
        let last = sol.density.slices.last().unwrap().as_cloud().unwrap();
        for i in 0..3 {
            let (q, p) = (pts[2 * i], pts[2 * i + 1]);
            assert!((last.point(i)[0] - (q + p)).abs() < 1e-12);
        }
    }
}
