//! Kernels addressable from plans and the command line.

use chaoslab_core::kernel::{newtonian_pair_kernel, FreeKernel, GaussianBump, Kernel, NewtonianPair, Potential};
use chaoslab_core::PhasePoint;

use crate::error::{HarnessError, Result};
use crate::plan::KernelSpec;

/// A plan kernel in `D` spatial dimensions.
#[derive(Clone, Debug)]
pub enum LabKernel {
    Free(FreeKernel),
    Bump(NewtonianPair<GaussianBump>),
}

impl LabKernel {
    pub fn build<const D: usize>(spec: &KernelSpec) -> Result<Self> {
        Ok(match spec {
            KernelSpec::Free => LabKernel::Free(FreeKernel::default()),
            KernelSpec::GaussianBump { amplitude, width } => LabKernel::Bump(newtonian_pair_kernel::<D, _>(
                GaussianBump {
                    amplitude: *amplitude,
                    width: *width,
                },
            )?),
        })
    }

    pub fn is_free(&self) -> bool {
        matches!(self, LabKernel::Free(_))
    }
}

impl<const D: usize> Kernel<D> for LabKernel {
    fn arity(&self) -> usize {
        match self {
            LabKernel::Free(k) => Kernel::<D>::arity(k),
            LabKernel::Bump(k) => Kernel::<D>::arity(k),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            LabKernel::Free(k) => Kernel::<D>::lipschitz(k),
            LabKernel::Bump(k) => Kernel::<D>::lipschitz(k),
        }
    }

    fn eval(&self, t: f64, args: &[PhasePoint<D>]) -> PhasePoint<D> {
        match self {
            LabKernel::Free(k) => k.eval(t, args),
            LabKernel::Bump(k) => k.eval(t, args),
        }
    }

    fn pair_potential(&self) -> Option<&dyn Potential<D>> {
        match self {
            LabKernel::Free(_) => None,
            LabKernel::Bump(k) => Kernel::<D>::pair_potential(k),
        }
    }
}

/// Kernel ids accepted by `check-kernel`.
pub const CHECKABLE: &[&str] = &["free", "gaussian_bump", "gaussian_bump_understated"];

/// Builds a named kernel for the Lipschitz probe. `gaussian_bump_understated`
/// declares half the true constant and must be flagged.
pub fn named<const D: usize>(id: &str) -> Result<LabKernel> {
    match id {
        "free" => Ok(LabKernel::Free(FreeKernel::default())),
        "gaussian_bump" => Ok(LabKernel::Bump(newtonian_pair_kernel::<D, _>(GaussianBump::unit())?)),
        "gaussian_bump_understated" => {
            let k = newtonian_pair_kernel::<D, _>(GaussianBump::unit())?;
            let l = Kernel::<D>::lipschitz(&k);
            Ok(LabKernel::Bump(k.with_declared_lipschitz(0.5 * l)))
        }
        other => Err(HarnessError::Plan(format!(
            "unknown kernel id {other:?}; expected one of {}",
            CHECKABLE.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chaoslab_core::kernel::{check_kernel_lipschitz, ProbeConfig};

    #[test]
    fn named_kernels_pass_or_fail_their_probe() {
        let cfg = ProbeConfig {
            probes: 2000,
            ..ProbeConfig::default()
        };
        for (id, bad) in [("free", false), ("gaussian_bump", false), ("gaussian_bump_understated", true)] {
            let k = named::<3>(id).unwrap();
            let r = check_kernel_lipschitz::<3, _>(&k, &cfg).unwrap();
            assert_eq!(r.violation(), bad, "{id}: {r:?}");
        }
        assert!(named::<3>("nope").is_err());
    }

    #[test]
    fn unit_bump_constant_is_three() {
        let k = LabKernel::build::<1>(&KernelSpec::GaussianBump {
            amplitude: 1.0,
            width: 1.0,
        })
        .unwrap();
        assert!((Kernel::<1>::lipschitz(&k) - 3.0).abs() < 1e-12);
    }
}
