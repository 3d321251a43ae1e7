use mbdp::bounds::{infimum_margin_null, infimum_margin_weak, null_certificate, weak_certificate};
use mbdp::kolmogorov::{assemble_generator, ProbabilityVector};
use mbdp::model::{build_space, RateBounds};
use mbdp::projection::{assemble_projected, marginal, reduce, Coordinate, EffectiveRates};
use mbdp::suite::random_model;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn caps_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..4)
}

fn rates_strategy(max_k: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max_k).prop_flat_map(|k| {
        (
            prop::collection::vec(0.0f64..5.0, k + 1),
            prop::collection::vec(0.0f64..5.0, k + 1),
        )
    })
}

fn effective(birth: Vec<f64>, mut death: Vec<f64>) -> EffectiveRates {
    death[0] = 0.0;
    let n = birth.len();
    EffectiveRates {
        coordinate: Coordinate::Type(0),
        birth,
        death,
        defined: vec![true; n],
        time: 0.0,
    }
}

fn stochastic(weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    weights.iter().map(|w| w / s).collect()
}

proptest! {
    #[test]
    fn enumeration_is_a_bijection(caps in caps_strategy()) {
        let space = build_space(&caps).unwrap();
        let expected: usize = caps.iter().map(|c| c + 1).product();
        prop_assert_eq!(space.size(), expected);
        let mut prev_total = 0;
        for i in 0..space.size() {
            let m = space.state_of(i).unwrap();
            prop_assert_eq!(space.index_of(m.coords()).unwrap(), i);
            prop_assert!(m.total() >= prev_total);
            prev_total = m.total();
        }
    }

    #[test]
    fn marginals_are_linear_and_stochastic(
        caps in caps_strategy(),
        seed in any::<u64>(),
        a in 0.0f64..1.0,
    ) {
        use rand::Rng;
        let space = build_space(&caps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = stochastic(&(0..space.size()).map(|_| rng.random::<f64>() + 1e-3).collect::<Vec<_>>());
        let q: Vec<f64> = stochastic(&(0..space.size()).map(|_| rng.random::<f64>() + 1e-3).collect::<Vec<_>>());
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let pv = |v: Vec<f64>| ProbabilityVector::new(v, 0.0).unwrap();
        let coords = (0..caps.len()).map(Coordinate::Type).chain([Coordinate::Total]);
        for c in coords {
            let xp = marginal(&pv(p.clone()), &space, c).unwrap().values;
            let xq = marginal(&pv(q.clone()), &space, c).unwrap().values;
            let xm = marginal(&pv(mix.clone()), &space, c).unwrap().values;
            prop_assert!((xm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..xm.len() {
                prop_assert!((xm[k] - (a * xp[k] + (1.0 - a) * xq[k])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduction_identity((birth, death) in rates_strategy(8), seed in any::<u64>()) {
        use rand::Rng;
        let rates = effective(birth, death);
        let sys = assemble_projected(&rates);
        let red = reduce(&sys);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = stochastic(&(0..sys.size()).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
            let full = sys.apply(&x);
            let mut bw = vec![0.0; red.size()];
            red.apply(&x[1..], &mut bw);
            for i in 0..red.size() {
                prop_assert!((full[i + 1] - (bw[i] + red.forcing[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projected_columns_conserve((birth, death) in rates_strategy(10)) {
        let sys = assemble_projected(&effective(birth, death));
        for s in sys.column_sums() {
            prop_assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn null_margin_dominates_alpha(
        l in 0.5f64..6.0,
        frac in 0.01f64..0.95,
        k in 2usize..12,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let big_l = l * 1.5;
        let m_hi = l * frac;
        let b = RateBounds::new(l, big_l, 0.0, m_hi).unwrap();
        let cert = null_certificate(&b, Coordinate::Type(0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let birth = (0..=k).map(|_| rng.random_range(l..=big_l)).collect();
        let death = (0..=k).map(|_| rng.random_range(0.0..=m_hi)).collect();
        let margin = infimum_margin_null(&effective(birth, death), &cert);
        prop_assert!(margin >= cert.alpha_star - 1e-12 * (1.0 + l));
        // Grid oracle: the corners are the worst case.
        let corner = effective(vec![l; k + 1], vec![m_hi; k + 1]);
        prop_assert!((infimum_margin_null(&corner, &cert) - cert.alpha_star).abs() < 1e-12 * (1.0 + l));
    }

    #[test]
    fn weak_margin_dominates_alpha(
        l in 0.1f64..2.0,
        spread in 1.0f64..2.0,
        gap in 2.5f64..6.0,
        k in 2usize..12,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let big_l = l * spread;
        let m_lo = big_l * gap;
        let m_hi = m_lo * 1.1;
        let b = RateBounds::new(l, big_l, m_lo, m_hi).unwrap();
        let Ok(cert) = weak_certificate(&b, Coordinate::Type(0)) else {
            return Ok(());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let birth = (0..=k).map(|_| rng.random_range(l..=big_l)).collect();
        let death = (0..=k).map(|_| rng.random_range(m_lo..=m_hi)).collect();
        let margin = infimum_margin_weak(&effective(birth, death), &cert);
        prop_assert!(margin >= cert.alpha_lower - 1e-12 * (1.0 + m_hi));
    }

    #[test]
    fn generators_conserve_on_random_models(seed in any::<u64>(), t in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tm = random_model(&mut rng, true, usize::MAX).unwrap();
        let a = assemble_generator(&tm.model, &tm.space, t).unwrap();
        for s in a.column_sums() {
            prop_assert!(s.abs() <= 1e-12);
        }
        prop_assert!(a.log_norm().abs() <= 1e-12);
        prop_assert!(a.norm_l1() <= tm.model.norm_bound() * (1.0 + 1e-12));
    }
}
