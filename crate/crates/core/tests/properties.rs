use proptest::prelude::*;
use roughflow::driver::{DriverPair, SigmaField, Sign};
use roughflow::euler::{solve_rough_euler, EulerSetup};
use roughflow::fbm::{fbm_rough_path, sample_fbm};
use roughflow::flow::LagrangianSetup;
use roughflow::rough_path::uniform_grid;
use roughflow::variation::{best_control, localized_p_variation, p_variation};
use roughflow::{Control, Localization, RoughPath, SampledPath, VorticityGrid};

/// Increasing times starting at zero.
fn times(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, n).prop_map(|gaps| {
        let mut t = vec![0.0];
        for g in gaps {
            t.push(t.last().unwrap() + g);
        }
        t
    })
}

fn sampled_path() -> impl Strategy<Value = SampledPath> {
    (1usize..4, 2usize..40).prop_flat_map(|(dim, n)| {
        (times(n), prop::collection::vec(-2.0..2.0f64, (n + 1) * dim))
            .prop_map(move |(t, v)| SampledPath::new(t, dim, v).unwrap())
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn brute(n: usize, w: &dyn Fn(usize, usize) -> f64, ok: &dyn Fn(usize, usize) -> bool) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << (n - 2)) {
        let mut nodes = vec![0];
        nodes.extend((1..n - 1).filter(|k| mask >> (k - 1) & 1 == 1));
        nodes.push(n - 1);
        if nodes.windows(2).all(|c| ok(c[0], c[1])) {
            best = best.max(nodes.windows(2).fold(0.0, |a, c| a + w(c[0], c[1])));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lift_satisfies_chen_and_symmetry(path in sampled_path(), picks in prop::collection::vec(any::<prop::sample::Index>(), 3)) {
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        let n = rp.len();
        let mut idx: Vec<usize> = picks.iter().map(|i| i.index(n)).collect();
        idx.sort_unstable();
        prop_assert!(rp.chen_defect_relative(idx[0], idx[1], idx[2]).unwrap() <= 1e-12);
        prop_assert!(rp.geometric_defect(idx[0], idx[2]) <= 1e-12 * (1.0 + norm(&rp.increment(idx[0], idx[2])).powi(2)));
    }

    #[test]
    fn refinement_and_coarsening_keep_levels(path in sampled_path(), sub in 1usize..5) {
        let rp = RoughPath::lift_piecewise_linear(&path).unwrap();
        let fine = rp.refine(sub).unwrap();
        let n = rp.num_steps();
        for (s, t) in [(0, n), (0, n / 2), (n / 2, n)] {
            let (a, b) = (rp.second_level(s, t), fine.second_level(s * sub, t * sub));
            let scale = 1.0 + norm(&a);
            prop_assert!(norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()) <= 1e-12 * scale);
        }
        let back = fine.coarsen(sub).unwrap();
        prop_assert_eq!(back.times(), rp.times());
        let d = back.second_level(0, n).iter().zip(&rp.second_level(0, n)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-12 * (1.0 + norm(&rp.second_level(0, n))));
    }

    #[test]
    fn dp_equals_enumeration(n in 2usize..11, dim in 1usize..3, p in 1.0..4.0f64, seed in prop::collection::vec(-1.0..1.0f64, 22)) {
        let samples = &seed[..n * dim];
        let dist = |i: usize, j: usize| norm(&(0..dim).map(|d| samples[j * dim + d] - samples[i * dim + d]).collect::<Vec<_>>());
        let dp = p_variation(samples, dim, p).unwrap();
        prop_assert_eq!(dp.value, brute(n, &|i, j| dist(i, j).powf(p), &|_, _| true));
        let from_partition = dp.partition.windows(2).fold(0.0, |a, c| a + dist(c[0], c[1]).powf(p));
        prop_assert_eq!(from_partition, dp.value);
    }

    #[test]
    fn localized_dp_equals_constrained_enumeration(n in 2usize..11, p in 1.0..3.0f64, cells in 1usize..10, values in prop::collection::vec(-1.0..1.0f64, 10)) {
        let dist = |i: usize, j: usize| (values[j] - values[i]).abs();
        let grid = uniform_grid(n - 1, 1.0);
        let threshold = (cells.min(n - 1) as f64 + 0.5) / (n - 1) as f64;
        let loc = Localization::new(Control::interval_power(grid, 1.0, 1.0), threshold).unwrap();
        let dp = localized_p_variation(n, dist, p, &loc).unwrap();
        prop_assert_eq!(dp.value, brute(n, &|i, j| dist(i, j).powf(p), &|i, j| loc.admits(i, j)));
        let control = best_control(n, dist, p, &loc).unwrap();
        prop_assert!(control.superadditivity_defect() <= 1e-12);
        prop_assert_eq!(control.value(0, n - 1), dp.value);
    }

    #[test]
    fn fbm_is_reproducible(h in 0.34..0.5f64, seed in any::<u64>()) {
        let a = sample_fbm(h, 64, 1.0, 2, seed).unwrap();
        let b = sample_fbm(h, 64, 1.0, 2, seed).unwrap();
        let c = sample_fbm(h, 64, 1.0, 2, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_ne!(&a.values, &c.values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn particle_transport_conserves_mean_and_sup(amp in 0.0..0.3f64, k1 in -2..3i32, phase in 0.0..6.0f64, seed in 0u64..1000) {
        let k = if k1 == 0 { [0, 1] } else { [k1, 1] };
        let sigma = vec![SigmaField::Mode { amplitude: amp, k, phase }];
        let rp = fbm_rough_path(0.4, 32, 4, 0.5, 1, seed).unwrap();
        let driver = DriverPair::new(sigma, rp, Sign::Minus).unwrap();
        let w0 = VorticityGrid::from_fn(16, |x, y| x.sin() * y.cos() + 0.3).unwrap();
        let traj = solve_rough_euler(&w0, &driver, &EulerSetup::new(LagrangianSetup::new(16, 32).with_snapshots(4))).unwrap();
        prop_assert!(traj.diagnostics.mean_drift <= 1e-12);
        prop_assert!(traj.diagnostics.particle_sup_ratio <= 1.0);
    }
}

#[test]
fn fbm_lift_is_geometric() {
    let rp = fbm_rough_path(0.4, 256, 8, 1.0, 3, 11).unwrap();
    for (s, t) in [(0, 256), (17, 200), (100, 101)] {
        assert!(rp.geometric_defect(s, t) <= 1e-12);
    }
    assert!(rp.chen_defect_relative(0, 128, 256).unwrap() <= 1e-12);
}
