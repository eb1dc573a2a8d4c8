use chaoslab_core::density::{DensityRep, Evaluable, Grid};
use chaoslab_core::lln::{
    deviation_stat, tail_probability_sweep, ustat_deviation, DeviationExperiment, Observable, SUBSET_CAP,
};
use chaoslab_core::rng::{seeded, GaussianProduct, Sampler, UniformBox};
use proptest::prelude::*;

fn gaussian_grid() -> DensityRep {
    let mut g = Grid::cube(2, -6.0, 6.0, 96).unwrap();
    g.fill_with(|x| GaussianProduct::isotropic(2, 1.0).eval(x));
    g.normalize().unwrap();
    DensityRep::Grid(g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deviation_is_bounded_by_twice_the_sup(m in 1usize..200, seed in any::<u64>(), amp in 0.1f64..5.0, spread in 0.5f64..10.0) {
        let h = Observable::one_body(2, amp, move |x: &[f64]| amp * (x[0] * x[1]).sin());
        let xs = UniformBox::cube(2, -spread, spread).sample_many(&mut seeded(seed), m);
        let d = deviation_stat(&xs, &gaussian_grid(), &h).unwrap();
        prop_assert!(d <= 2.0 * amp + 1e-12);
    }

    #[test]
    fn ustat_is_bounded_by_twice_the_sup(m in 2usize..40, seed in any::<u64>(), mean in -1.0f64..1.0) {
        let h = Observable::many_body(1, 2, 1.0, |x: &[f64]| (x[0] - x[1]).tanh());
        let xs = UniformBox::cube(1, -3.0, 3.0).sample_many(&mut seeded(seed), m);
        let d = ustat_deviation(&xs, mean, &h, SUBSET_CAP, &mut seeded(seed ^ 1)).unwrap();
        prop_assert!(d <= 2.0 + 1e-12);
    }
}

#[test]
fn tail_frequency_shrinks_as_the_threshold_grows() {
    let g = GaussianProduct::isotropic(1, 1.0);
    let h = Observable::one_body(1, 1.0, |x: &[f64]| x[0].tanh());
    let sweep = tail_probability_sweep(&DeviationExperiment {
        sampler: &g,
        h: &h,
        mean: 0.0,
        sizes: vec![50, 200, 800],
        kappa: 0.05,
        repetitions: 300,
        seed: 11,
    })
    .unwrap();
    for (i, _) in sweep.sizes.iter().enumerate() {
        let mut prev = f64::INFINITY;
        for kappa in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let freq = sweep.table(kappa)[i].tail_freq;
            assert!(freq <= prev, "kappa {kappa}");
            prev = freq;
        }
    }
    let (_, hard) = sweep.tail_inversions();
    assert_eq!(hard, 0);
}
