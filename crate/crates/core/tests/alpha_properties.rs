use chaoslab_core::alpha::{
    alpha_exact_discrete, alpha_upper_bound, default_embedding, marginal_bound_check, AlphaOptions, DiscreteInstance,
    MixtureDecomposition, WeightSpec,
};
use chaoslab_core::rng::seeded;
use proptest::prelude::*;
use rand::Rng;

fn random_prob(rng: &mut impl Rng, s: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..s).map(|_| -rng.random::<f64>().ln()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|v| v / t).collect()
}

/// Symmetric law whose tensor entry depends only on the sorted index tuple.
fn random_symmetric(rng: &mut impl Rng, s: usize, n: usize) -> DiscreteInstance {
    let len = s.pow(n as u32);
    let mut by_orbit = std::collections::BTreeMap::new();
    let mut tensor = Vec::with_capacity(len);
    for flat in 0..len {
        let mut idx: Vec<usize> = (0..n).map(|k| flat / s.pow((n - 1 - k) as u32) % s).collect();
        idx.sort_unstable();
        let v = *by_orbit.entry(idx).or_insert_with(|| rng.random::<f64>().powi(2));
        tensor.push(v);
    }
    let total: f64 = tensor.iter().sum();
    tensor.iter_mut().for_each(|v| *v /= total);
    DiscreteInstance::new(s, n, default_embedding(s), tensor).unwrap()
}

fn random_instance(rng: &mut impl Rng, s: usize, n: usize) -> DiscreteInstance {
    if rng.random_bool(0.5) {
        random_symmetric(rng, s, n)
    } else {
        let a = DiscreteInstance::product(&random_prob(rng, s), n, default_embedding(s)).unwrap();
        let b = DiscreteInstance::product(&random_prob(rng, s), n, default_embedding(s)).unwrap();
        let mu = rng.random::<f64>();
        DiscreteInstance::mix(&[(1.0 - mu, &a), (mu, &b)]).unwrap()
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn options(n: usize, s: usize, k: f64) -> AlphaOptions {
    AlphaOptions::new(WeightSpec::new(0.75, n).unwrap(), k, s)
}

fn case() -> impl Strategy<Value = (usize, usize, u64, f64)> {
    (2usize..=4, 2usize..=3, any::<u64>(), 10.0f64..400.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn continuity((s, n, seed, k) in case()) {
        let mut rng = seeded(seed);
        let (big_f, big_h) = (random_instance(&mut rng, s, n), random_instance(&mut rng, s, n));
        let (f, h) = (random_prob(&mut rng, s), random_prob(&mut rng, s));
        let o = options(n, s, k);
        let af = alpha_exact_discrete(&big_f, &f, &o).unwrap().value;
        let ah = alpha_exact_discrete(&big_h, &h, &o).unwrap().value;
        prop_assert!(af <= ah + l1(&f, &h) + big_f.l1(&big_h).unwrap() + 1e-9, "{} vs {}", af, ah);
    }

    #[test]
    fn convexity((s, n, seed, k) in case(), w in 0.0f64..1.0) {
        let mut rng = seeded(seed);
        let (a, b) = (random_instance(&mut rng, s, n), random_instance(&mut rng, s, n));
        let f = random_prob(&mut rng, s);
        let o = options(n, s, k);
        let mix = DiscreteInstance::mix(&[(w, &a), (1.0 - w, &b)]).unwrap();
        let am = alpha_exact_discrete(&mix, &f, &o).unwrap().value;
        let aa = alpha_exact_discrete(&a, &f, &o).unwrap().value;
        let ab = alpha_exact_discrete(&b, &f, &o).unwrap().value;
        prop_assert!(am <= w * aa + (1.0 - w) * ab + 1e-9);
    }

    #[test]
    fn monotone_in_norm_bound((s, n, seed, k) in case(), grow in 1.0f64..10.0) {
        let mut rng = seeded(seed);
        let big_f = random_instance(&mut rng, s, n);
        let f = random_prob(&mut rng, s);
        let small = alpha_exact_discrete(&big_f, &f, &options(n, s, k)).unwrap().value;
        let large = alpha_exact_discrete(&big_f, &f, &options(n, s, k * grow)).unwrap().value;
        prop_assert!(large <= small + 1e-9);
    }

    #[test]
    fn marginal_bound_and_upper_bound_soundness((s, n, seed, k) in case()) {
        let mut rng = seeded(seed);
        let big_f = random_instance(&mut rng, s, n);
        let f = random_prob(&mut rng, s);
        let o = options(n, s, k);
        let a = alpha_exact_discrete(&big_f, &f, &o).unwrap();
        for order in 1..=n {
            let r = marginal_bound_check(&big_f, &f, order, a.value).unwrap();
            prop_assert!(r.pass, "s={} {:?}", order, r);
        }
        // the optimal decomposition, re-scored, is an upper bound equal to the exact value
        let dec = MixtureDecomposition { components: a.components.clone() };
        let ub = alpha_upper_bound(&big_f, &f, &o.weight, k, &[dec]).unwrap();
        prop_assert!(ub >= a.value - 1e-7 && ub <= a.value + 1e-6, "{} vs {}", ub, a.value);
    }
}
