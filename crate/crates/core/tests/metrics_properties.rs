use chaoslab_core::density::{DensityRep, Evaluable, FnDensity, Grid};
use chaoslab_core::metrics::{
    l1_distance, radial_integral, shake, weighted_lipschitz_norm, BlEvaluator, BlOptions, EmpiricalMeasure, Radial,
    WeightedNormOptions,
};
use chaoslab_core::rng::{seeded, GaussianProduct, Sampler};
use proptest::prelude::*;

const CE: f64 = 1024.0 * std::f64::consts::PI * std::f64::consts::PI * std::f64::consts::PI;

fn tent(r: f64) -> f64 {
    (1.0 - r).max(0.0)
}

/// Gaussian profile cut to zero continuously at radius 2.5.
fn truncated_gaussian(r: f64) -> f64 {
    ((-r * r).exp() - (-6.25f64).exp()).max(0.0)
}

fn grid_strategy() -> impl Strategy<Value = [Grid; 3]> {
    prop::collection::vec(0.0f64..1.0, 3 * 64).prop_map(|v| {
        let mk = |s: &[f64]| Grid::cube(2, -1.0, 1.0, 8).unwrap().like(s.to_vec());
        [mk(&v[..64]), mk(&v[64..128]), mk(&v[128..])]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn l1_is_a_metric([a, b, c] in grid_strategy()) {
        let ab = l1_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, l1_distance(&b, &a).unwrap());
        prop_assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn radial_shake_is_monotone(r in 0.0f64..3.0, e1 in 0.0f64..0.5, de in 0.0f64..0.5) {
        let g = Radial::new(6, truncated_gaussian);
        let a = g.shake(e1).unwrap().at_radius(r);
        let b = g.shake(e1 + de).unwrap().at_radius(r);
        prop_assert!(b <= a && a <= g.at_radius(r));
    }

    #[test]
    fn sampled_shake_stays_below(x in -3.0f64..3.0, y in -3.0f64..3.0, eps in 0.0f64..0.4) {
        let g = FnDensity { dim: 2, f: |v: &[f64]| (-(v[0] * v[0]) - 0.5 * v[1] * v[1]).exp() * (1.5 + (2.0 * v[0]).sin()) };
        let s = shake(&g, eps).unwrap();
        prop_assert!(s.eval(&[x, y]) <= g.eval(&[x, y]));
    }

    #[test]
    fn bl_bracket_is_ordered(m in 1usize..60, seed in 0u64..1000, shift in -2.0f64..2.0) {
        let cloud = GaussianProduct::isotropic(2, 1.0).sample_many(&mut seeded(seed), m);
        let mu = EmpiricalMeasure::new(2, cloud.iter().map(|v| v + shift).collect()).unwrap();
        let mut f = Grid::cube(2, -5.0, 5.0, 40).unwrap();
        f.fill_with(|x| GaussianProduct::isotropic(2, 1.0).eval(x));
        f.normalize().unwrap();
        let ev = BlEvaluator::new(&DensityRep::Grid(f), BlOptions { seed, ..BlOptions::default() }).unwrap();
        let b = ev.bracket(&mu).unwrap();
        prop_assert!(0.0 <= b.lower && b.lower <= b.upper && b.upper <= 2.0);
    }
}

fn normalized_radial(dim: usize, profile: fn(f64) -> f64) -> (Radial<impl Fn(f64) -> f64 + Sync>, f64) {
    let mass = radial_integral(dim, profile, 3.0, 6000);
    (Radial::new(dim, move |r: f64| profile(r) / mass), mass)
}

#[test]
fn shaken_density_stays_close_in_l1() {
    for profile in [tent as fn(f64) -> f64, truncated_gaussian] {
        let (g, _) = normalized_radial(6, profile);
        let norm = weighted_lipschitz_norm(&g, &WeightedNormOptions::default()).value;
        for eps in [0.01, 0.05, 0.1] {
            let s = g.shake(eps).unwrap();
            let m = s.mass(3.0, 6000);
            let l1 = radial_integral(6, |r| (s.at_radius(r) / m - g.at_radius(r)).abs(), 3.0, 6000);
            assert!(l1 > 0.0 && l1 <= 2.0 * CE * eps * norm, "eps {eps}: {l1} vs {}", 2.0 * CE * eps * norm);
        }
    }
}

#[test]
fn shake_grows_the_weighted_norm_at_most_geometrically() {
    let opts = WeightedNormOptions { resolution: 1200, ..Default::default() };
    for profile in [tent as fn(f64) -> f64, truncated_gaussian] {
        for dim in [2usize, 6] {
            let g = Radial::new(dim, profile);
            let base = weighted_lipschitz_norm(&g, &opts).value;
            for eps in [0.05, 0.2, 0.5] {
                let shaken = weighted_lipschitz_norm(&g.shake(eps).unwrap(), &opts).value;
                assert!(shaken <= 1.1 * (1.0 + eps).powi(11) * base, "dim {dim} eps {eps}: {shaken} vs {base}");
            }
        }
    }
}

#[test]
fn finite_norm_densities_decay_polynomially() {
    let opts = WeightedNormOptions { resolution: 1500, ..Default::default() };
    let anisotropic = FnDensity { dim: 2, f: |v: &[f64]| (-(v[0] - 0.5).powi(2) - 2.0 * v[1] * v[1]).exp() };
    let bumpy = FnDensity { dim: 3, f: |v: &[f64]| (1.0 - v.iter().map(|x| x * x).sum::<f64>().sqrt()).max(0.0) * 2.0 };
    let cases: [&dyn Evaluable; 2] = [&anisotropic, &bumpy];
    for g in cases {
        let norm = weighted_lipschitz_norm(g, &opts).value;
        let mut rng = seeded(4);
        let pts = GaussianProduct::isotropic(g.dim(), 2.0).sample_many(&mut rng, 2000);
        for x in pts.chunks_exact(g.dim()) {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(g.eval(x).abs() <= norm * (1.0 + r).powi(-9) * (1.0 + 1e-9), "x = {x:?}");
        }
    }
}

/// Inverse standard normal CDF by bisection on the complementary error function.
fn normal_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(-mid / std::f64::consts::SQRT_2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn quantile_coupling_drives_the_bracket_to_zero() {
    let mut f = Grid::cube(1, -8.0, 8.0, 16_000).unwrap();
    f.fill_with(|x| GaussianProduct::isotropic(1, 1.0).eval(x));
    f.normalize().unwrap();
    let ev = BlEvaluator::new(&DensityRep::Grid(f), BlOptions::default()).unwrap();
    let mut prev = f64::INFINITY;
    for m in [10usize, 100, 1000, 10_000] {
        let atoms = (0..m).map(|i| normal_quantile((i as f64 + 0.5) / m as f64)).collect();
        let b = ev.bracket(&EmpiricalMeasure::new(1, atoms).unwrap()).unwrap();
        assert!(b.lower <= b.upper && b.upper < prev, "M={m}: {b:?}");
        prev = b.upper;
    }
    assert!(prev < 2e-3, "{prev}");
}
