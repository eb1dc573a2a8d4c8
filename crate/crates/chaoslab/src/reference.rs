//! Mean-field reference densities `f_t` at the plan's output times.

use chaoslab_core::density::{Cloud, DensityRep, Evaluable, FreeTransported, Grid};
use chaoslab_core::meanfield::{flow_map, KernelField, NewtonianGridField};
use chaoslab_core::rng::{sample_configuration, substream, substream_seed, GaussianProduct};
use chaoslab_core::vlasov::{picard_vlasov_cloud, picard_vlasov_solve, pushforward_density, PicardSettings};
use chaoslab_core::PhasePoint;

use crate::error::Result;
use crate::kernels::LabKernel;
use crate::plan::{ExperimentPlan, InitialSpec};

/// Substream stage keys.
pub const STAGE_INIT: u64 = 1;
pub const STAGE_MARGINAL: u64 = 2;
pub const STAGE_BL: u64 = 3;
pub const STAGE_REFERENCE: u64 = 4;

/// Reference densities, one per plan time.
#[derive(Clone, Debug)]
pub struct Reference {
    pub times: Vec<f64>,
    pub slices: Vec<DensityRep>,
    /// Picard residual history (empty for closed-form references).
    pub residuals: Vec<f64>,
}

impl Reference {
    pub fn grid(&self, i: usize) -> Option<&Grid> {
        self.slices[i].as_grid()
    }
}

pub fn initial_density(plan: &ExperimentPlan) -> GaussianProduct {
    match &plan.initial {
        InitialSpec::Gaussian { mean, std } => GaussianProduct {
            mean: mean.clone(),
            std: std.clone(),
        },
    }
}

/// Builds `f_t` for every plan time.
///
/// - 1+1 dimensions: a Picard grid solution, each output time read off by one
///   pushforward of `f_0` under the converged field; free streaming uses the
///   closed form `f_0(q - tp, p)` sampled on the grid.
/// - 3+3 dimensions: a weighted cloud of `f_0` atoms carried by the Picard
///   cloud iteration (or by free streaming).
pub fn build_reference<const D: usize>(plan: &ExperimentPlan, kernel: &LabKernel) -> Result<Reference> {
    let f0 = initial_density(plan);
    let r = &plan.reference;
    if D == 1 {
        let template = Grid::cube(2, -r.half_width, r.half_width, r.cells)?;
        if kernel.is_free() {
            let slices = plan
                .times
                .iter()
                .map(|&t| sample_normalized(&template, &FreeTransported { f0: f0.clone(), t }))
                .collect::<Result<Vec<_>>>()?;
            return Ok(Reference {
                times: plan.times.clone(),
                slices,
                residuals: Vec::new(),
            });
        }
        let settings = PicardSettings::new(plan.t_max(), r.dt, r.tol, r.max_iter);
        let sol = picard_vlasov_solve::<D, _>(&f0, &template, kernel, &settings)?;
        let field = NewtonianGridField::<D>::for_kernel(kernel, &sol.density)?;
        let slices = plan
            .times
            .iter()
            .map(|&t| Ok(DensityRep::Grid(pushforward_density(&f0, &template, &field, t, r.dt, 0.0)?.grid)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Reference {
            times: plan.times.clone(),
            slices,
            residuals: sol.residuals,
        });
    }

    let mut rng = substream(plan.seed, &[STAGE_REFERENCE]);
    let atoms = sample_configuration::<D>(&f0, r.atoms, &mut rng).into_points();
    let cloud_at = |pts: &[PhasePoint<D>]| DensityRep::Cloud(Cloud::from_phase_points(pts));
    if kernel.is_free() {
        let slices = plan
            .times
            .iter()
            .map(|&t| {
                let moved: Vec<PhasePoint<D>> = atoms.iter().map(|x| free_move(x, t)).collect();
                cloud_at(&moved)
            })
            .collect();
        return Ok(Reference {
            times: plan.times.clone(),
            slices,
            residuals: Vec::new(),
        });
    }
    let seed = substream_seed(plan.seed, &[STAGE_REFERENCE, 1]);
    let settings = PicardSettings::new(plan.t_max(), r.dt, r.tol, r.max_iter);
    let cloud = Cloud::from_phase_points(&atoms);
    let sol = picard_vlasov_cloud::<D, _>(&cloud, kernel, &settings, r.quadrature_samples, seed)?;
    let field = KernelField::new(kernel, &sol.density)?.with_samples(r.quadrature_samples, seed);
    let mut slices = Vec::with_capacity(plan.times.len());
    for &t in &plan.times {
        let moved = atoms
            .iter()
            .map(|x| flow_map(&field, x, 0.0, t, r.dt))
            .collect::<chaoslab_core::Result<Vec<_>>>()?;
        slices.push(cloud_at(&moved));
    }
    Ok(Reference {
        times: plan.times.clone(),
        slices,
        residuals: sol.residuals,
    })
}

fn free_move<const D: usize>(x: &PhasePoint<D>, t: f64) -> PhasePoint<D> {
    let mut y = *x;
    for i in 0..D {
        y.q[i] += t * y.p[i];
    }
    y
}

fn sample_normalized(template: &Grid, f: &dyn Evaluable) -> Result<DensityRep> {
    let mut g = template.clone();
    g.fill_with(|x| f.eval(x));
    g.normalize()?;
    Ok(DensityRep::Grid(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{HistogramSpec, KernelSpec, MethodSpec, MetricKind, NormalizationSpec, ReferenceSpec};

    fn plan(kernel: KernelSpec, space_dim: usize) -> ExperimentPlan {
        ExperimentPlan {
            schema_version: 1,
            kernel,
            initial: InitialSpec::Gaussian {
                mean: vec![0.0; 2 * space_dim],
                std: vec![1.0; 2 * space_dim],
            },
            space_dim,
            n_grid: vec![4],
            repetitions: 1,
            times: vec![0.25, 0.5],
            dt: 0.05,
            method: MethodSpec::Rk4,
            normalization: NormalizationSpec::Binomial,
            metrics: vec![MetricKind::DblLower],
            seed: 5,
            out_dir: None,
            reference: ReferenceSpec {
                cells: 48,
                atoms: 100,
                quadrature_samples: 100,
                ..ReferenceSpec::default()
            },
            histograms: HistogramSpec::default(),
        }
    }

    #[test]
    fn free_grid_reference_is_the_sheared_gaussian() {
        let p = plan(KernelSpec::Free, 1);
        let k = LabKernel::build::<1>(&p.kernel).unwrap();
        let r = build_reference::<1>(&p, &k).unwrap();
        let g = r.grid(1).unwrap();
        // the q-variance of the sheared unit Gaussian is 1 + t^2
        let mut c = [0.0; 2];
        let (mut m2, vol) = (0.0, g.cell_volume());
        for i in 0..g.cells() {
            g.center(i, &mut c);
            m2 += c[0] * c[0] * g.values[i] * vol;
        }
        assert!((m2 - 1.25).abs() < 0.02, "{m2}");
    }

    #[test]
    fn bump_grid_reference_converges_and_keeps_mass() {
        let p = plan(KernelSpec::GaussianBump { amplitude: 1.0, width: 1.0 }, 1);
        let k = LabKernel::build::<1>(&p.kernel).unwrap();
        let r = build_reference::<1>(&p, &k).unwrap();
        assert!(*r.residuals.last().unwrap() < p.reference.tol);
        for s in &r.slices {
            assert!((s.mass() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cloud_reference_is_deterministic() {
        let p = plan(KernelSpec::GaussianBump { amplitude: 1.0, width: 1.0 }, 3);
        let k = LabKernel::build::<3>(&p.kernel).unwrap();
        let a = build_reference::<3>(&p, &k).unwrap();
        let b = build_reference::<3>(&p, &k).unwrap();
        assert_eq!(a.slices, b.slices);
        assert_eq!(a.slices[0].dim(), 6);
    }
}
