//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roughflow::driver::{DriverPair, SigmaField, Sign};
use roughflow::euler::{solve_rough_euler, solve_viscous_reference, EulerSetup, ViscousSetup};
use roughflow::fbm::fbm_rough_path;
use roughflow::flow::{
    solve_euclidean, solve_flow, solve_inverse_flow, AnalyticVelocity, FlowProblem,
    LagrangianSetup, LinearFields, ParticleFlow, VelocityField,
};
use roughflow::rough_path::uniform_grid;
use roughflow::sewing::{rough_integral, ControlledPath};
use roughflow::variation::{
    localized_p_variation, p_variation, rough_gronwall_bound, GronwallConstants,
};
use roughflow::{Control, Localization, RoughPath, SampledPath, VorticityGrid};
use roughflow_harness::experiments::{fmt_column, log_log_slope};
use roughflow_harness::{run_experiment, ExperimentConfig, ExperimentKind, Report};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn modes() -> Vec<SigmaField> {
    vec![
        SigmaField::Mode {
            amplitude: 0.2,
            k: [1, 1],
            phase: 0.2,
        },
        SigmaField::Mode {
            amplitude: 0.15,
            k: [0, 1],
            phase: 1.0,
        },
    ]
}

fn standard_w0(x: f64, y: f64) -> f64 {
    x.sin() * y.sin() + 0.5 * (x + 2.0 * y).cos()
}

fn random_path(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> SampledPath {
    let times = uniform_grid(n, 1.0);
    let mut values = vec![0.0; dim];
    for k in 1..=n {
        for i in 0..dim {
            let prev = values[(k - 1) * dim + i];
            values.push(prev + rng.random_range(-1.0..1.0) / (n as f64).sqrt());
        }
    }
    SampledPath::new(times, dim, values).expect("valid sampled path")
}

fn chen_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut chen, mut geo): (f64, f64) = (0.0, 0.0);
    for case in 0..100 {
        let dim = 1 + case % 3;
        let n = [16, 64, 256, 1024][case % 4];
        let rp = if case % 2 == 0 {
            RoughPath::lift_piecewise_linear(&random_path(&mut rng, n, dim)).expect("lift")
        } else {
            fbm_rough_path(
                0.35 + 0.15 * rng.random::<f64>(),
                n,
                4,
                1.0,
                dim,
                case as u64,
            )
            .expect("fbm lift")
        };
        for _ in 0..40 {
            let mut idx = [
                rng.random_range(0..=n),
                rng.random_range(0..=n),
                rng.random_range(0..=n),
            ];
            idx.sort_unstable();
            let [s, u, t] = idx;
            chen = chen.max(rp.chen_defect_relative(s, u, t).expect("chen defect"));
            geo = geo.max(rp.geometric_defect(s, t));
        }
    }
    outcome(
        chen <= 1e-12 && geo <= 1e-12,
        format!("max relative Chen defect {chen:.2e}, geometric defect {geo:.2e}"),
    )
}

/// Best partition sum over all subsets of interior nodes, summed left to right.
fn brute_variation(
    n: usize,
    w: impl Fn(usize, usize) -> f64,
    admissible: impl Fn(usize, usize) -> bool,
) -> f64 {
    let interior = n - 2;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << interior) {
        let mut nodes = vec![0];
        nodes.extend((0..interior).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
        nodes.push(n - 1);
        if nodes.windows(2).any(|c| !admissible(c[0], c[1])) {
            continue;
        }
        let total = nodes.windows(2).fold(0.0, |acc, c| acc + w(c[0], c[1]));
        best = best.max(total);
    }
    best
}

fn variation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut localized = 0;
    for case in 0..500 {
        let n = rng.random_range(2..=12);
        let dim = 1 + case % 2;
        let p = rng.random_range(1.0..4.0);
        let samples: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dist = |i: usize, j: usize| {
            (0..dim)
                .map(|d| (samples[j * dim + d] - samples[i * dim + d]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let dp = p_variation(&samples, dim, p).expect("p-variation").value;
        if dp != brute_variation(n, |i, j| dist(i, j).powf(p), |_, _| true) {
            mismatches += 1;
        }
        let times = uniform_grid(n - 1, 1.0);
        let scale = 1.0 / (n - 1) as f64;
        let threshold = scale * rng.random_range(1.0..=(n - 1) as f64);
        let loc = Localization::new(Control::interval_power(times, 1.0, 1.0), threshold)
            .expect("localization");
        let dp = localized_p_variation(n, dist, p, &loc)
            .expect("localized variation")
            .value;
        let brute = brute_variation(n, |i, j| dist(i, j).powf(p), |i, j| loc.admits(i, j));
        if dp != brute {
            localized += 1;
        }
    }
    outcome(
        mismatches == 0 && localized == 0,
        format!("{mismatches} plain and {localized} localized mismatches in 500 instances"),
    )
}

fn smooth_driver(t: f64) -> [f64; 2] {
    [0.6 * (3.0 * t).sin(), 0.5 * (1.0 - (2.0 * t).cos())]
}

fn smooth_velocity(t: f64) -> [f64; 2] {
    [1.8 * (3.0 * t).cos(), (2.0 * t).sin()]
}

/// One-form `f(z) = (z₂ + sin z₁, z₁²)`; not a gradient.
fn one_form(z: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    (
        [z[1] + z[0].sin(), z[0] * z[0]],
        [[z[0].cos(), 1.0], [2.0 * z[0], 0.0]],
    )
}

fn rough_integral_order() -> Outcome {
    let fine = 1 << 14;
    let times = uniform_grid(fine, 1.0);
    let values: Vec<f64> = times.iter().flat_map(|&t| smooth_driver(t)).collect();
    let lift = RoughPath::lift_piecewise_linear(&SampledPath::new(times, 2, values).expect("path"))
        .expect("lift");
    let m = 1 << 16;
    let h = 1.0 / m as f64;
    let integrand = |t: f64| {
        let (f, _) = one_form(smooth_driver(t));
        let v = smooth_velocity(t);
        f[0] * v[0] + f[1] * v[1]
    };
    let simpson = (0..m / 2)
        .map(|k| {
            let t = 2.0 * k as f64 * h;
            h / 3.0 * (integrand(t) + 4.0 * integrand(t + h) + integrand(t + 2.0 * h))
        })
        .sum::<f64>();
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    for level in 6..=10 {
        let steps = 1usize << level;
        let rp = lift.coarsen(fine / steps).expect("coarsen");
        let y = ControlledPath::from_fn(rp.clone(), 2, |k| {
            let z = rp.value(k);
            let (f, df) = one_form([z[0], z[1]]);
            let mut d = vec![0.0; 4];
            for j in 0..2 {
                for i in 0..2 {
                    d[j * 2 + i] = df[j][i];
                }
            }
            (f.to_vec(), d)
        })
        .expect("controlled path");
        let integral = rough_integral(&y).expect("rough integral").integral;
        let value = integral.value(integral.len() - 1)[0] - integral.value(0)[0];
        hs.push(1.0 / steps as f64);
        errors.push((value - simpson).abs());
    }
    let slope = log_log_slope(&hs, &errors).unwrap_or(f64::NAN);
    outcome(
        slope >= 1.9,
        format!(
            "errors {} over meshes 2^6..2^10, slope {slope:.3}",
            fmt_column(&errors)
        ),
    )
}

fn scalar_rde() -> Outcome {
    let fine = 1 << 12;
    let seeds = 32;
    let fields = LinearFields::new(1, vec![vec![1.0]]).expect("fields");
    let mut errors = vec![0.0; 5];
    for seed in 0..seeds {
        let path = fbm_rough_path(0.5, fine, 8, 1.0, 1, seed).expect("Brownian lift");
        let exact = path.increment(0, fine)[0].exp();
        for (e, level) in errors.iter_mut().zip(8..=12) {
            let rp = path.coarsen(fine >> level).expect("coarsen");
            let y = solve_euclidean(&fields, &[1.0], &rp).expect("solve");
            *e += ((y.last().expect("nodes")[0] - exact) / exact).abs() / seeds as f64;
        }
    }
    let finest = errors[4];
    outcome(
        finest <= 1e-2 && errors.windows(2).all(|w| w[1] < w[0]),
        format!(
            "mean relative terminal errors over {seeds} paths {} at meshes 2^-8..2^-12",
            fmt_column(&errors)
        ),
    )
}

fn flow_suite() -> Outcome {
    let drift: Arc<dyn VelocityField> = Arc::new(AnalyticVelocity::new(1.0, |t, x| {
        [0.5 * x[1].sin() * (1.0 + t), 0.5 * x[0].cos()]
    }));
    let base = fbm_rough_path(0.4, 2048, 4, 1.0, 2, 3).expect("fbm");
    let mut hs = Vec::new();
    let mut defects = Vec::new();
    for steps in [64usize, 128, 256, 512, 1024] {
        let driver = DriverPair::new(
            modes(),
            base.coarsen(2048 / steps).expect("coarsen"),
            Sign::Plus,
        )
        .expect("driver");
        let problem = FlowProblem::new(
            drift.clone(),
            driver,
            ParticleFlow::lattice(64).expect("lattice"),
        );
        defects.push(
            solve_inverse_flow(&problem, steps)
                .expect("inverse flow")
                .composition_defect,
        );
        hs.push(1.0 / steps as f64);
    }
    let order = log_log_slope(&hs, &defects).unwrap_or(f64::NAN);

    let cells = 32usize;
    let side = 256usize;
    let expected = (side * side) as f64 / (cells * cells) as f64;
    let spread = (expected * (1.0 - 1.0 / (cells * cells) as f64)).sqrt();
    let mut worst_mean: f64 = 0.0;
    let mut worst_cell: f64 = 0.0;
    for seed in 0..10u64 {
        let rp = fbm_rough_path(0.4, 128, 4, 1.0, 2, seed).expect("fbm");
        let driver = DriverPair::new(modes(), rp, Sign::Plus).expect("driver");
        let initial = ParticleFlow::lattice_with(side, standard_w0).expect("lattice");
        let problem = FlowProblem::new(drift.clone(), driver, initial.clone()).with_snapshots(1);
        let last = solve_flow(&problem).expect("flow").last().clone();
        let before = initial.deposit(64).expect("deposit").mean();
        let after = last.deposit(64).expect("deposit").mean();
        worst_mean = worst_mean.max((after - before).abs());
        let mut counts = vec![0usize; cells * cells];
        for x in last.positions() {
            let i = ((x[0] / TAU * cells as f64) as usize).min(cells - 1);
            let j = ((x[1] / TAU * cells as f64) as usize).min(cells - 1);
            counts[i * cells + j] += 1;
        }
        let dev = counts
            .iter()
            .map(|&c| (c as f64 - expected).abs())
            .fold(0.0, f64::max);
        worst_cell = worst_cell.max(dev / spread);
    }
    outcome(
        order > 0.0 && worst_mean <= 1e-8 && worst_cell <= 3.0,
        format!(
            "inverse defects {} (order {order:.2}); 10 runs at 256^2: mean drift {worst_mean:.1e}, largest cell deviation {worst_cell:.2} sd",
            fmt_column(&defects)
        ),
    )
}

fn summarize(report: &Report) -> String {
    report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {}",
                if c.passed { "ok" } else { "failed" },
                c.name,
                c.detail
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn run_desk(config: ExperimentConfig) -> Outcome {
    match run_experiment(&config) {
        Ok(report) => outcome(report.passed(), summarize(&report)),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn steady_suite() -> Outcome {
    run_desk(ExperimentConfig::desk(ExperimentKind::SteadyCheck))
}

fn viscous_cross_validation() -> Outcome {
    let fine = 4096;
    let times = uniform_grid(fine, 1.0);
    let values: Vec<f64> = times
        .iter()
        .flat_map(|&t| [0.4 * (3.0 * t).sin(), 0.3 * (1.0 - (2.0 * t).cos())])
        .collect();
    let smooth = SampledPath::new(times, 2, values).expect("path");
    let rp = RoughPath::lift_piecewise_linear(&smooth)
        .expect("lift")
        .coarsen(fine / 256)
        .expect("coarsen");
    let driver = DriverPair::new(modes(), rp.clone(), Sign::Minus).expect("driver");
    let mut distances = Vec::new();
    for (nu, n, pps) in [(1e-3, 128usize, 256usize), (5e-4, 256, 512)] {
        let w0 = VorticityGrid::from_fn(n, standard_w0).expect("grid");
        let setup = EulerSetup::new(LagrangianSetup::new(n, pps).with_snapshots(2));
        let lagrangian = solve_rough_euler(&w0, &driver, &setup).expect("Lagrangian solve");
        let viscous = solve_viscous_reference(
            &w0,
            &modes(),
            &rp,
            &ViscousSetup::new(nu, 1.0 / 256.0).with_snapshots(2),
        )
        .expect("viscous solve");
        let field = lagrangian
            .last()
            .particles
            .deposit_normalized(n)
            .expect("deposit");
        distances.push(field.l1_distance(viscous.last()).expect("distance"));
    }
    outcome(
        distances[0] <= 5e-2 && distances[1] < distances[0],
        format!(
            "L1 {:.3e} at nu 1e-3, N 128; {:.3e} at nu 5e-4, N 256",
            distances[0], distances[1]
        ),
    )
}

fn remainder_suite() -> Outcome {
    run_desk(ExperimentConfig::desk(ExperimentKind::RemainderScan))
}

fn wong_zakai_suite() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for hurst in [0.4, 0.5] {
        let config = ExperimentConfig {
            hurst,
            ..ExperimentConfig::desk(ExperimentKind::WongZakai)
        };
        let r = run_desk(config);
        passed &= r.passed;
        details.push(format!("H={hurst}: {}", r.detail));
    }
    outcome(passed, details.join(" | "))
}

/// `G_t = G₀ + λ₁ C C' ω₁(0,t)^{1/k} + λ₂ ω₂(0,t)^{1/k'} + λ₃ ω₃(0,t)` with
/// `ω_i = c_i |t-s|^{r_i}`, `r₁ = r₂ ≤ k'`, `r₃ = 1`, which meets the
/// increment hypothesis on every pair.
fn gronwall_instances() -> (usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 64;
    let times = uniform_grid(n, 1.0);
    let mut ok = 0;
    let mut hypothesis_violations = 0;
    let mut tightest: f64 = 0.0;
    for _ in 0..20 {
        let k_prime = rng.random_range(1.0..2.0);
        let k = k_prime + rng.random_range(0.2..1.0);
        let r = rng.random_range(1.0..k_prime);
        let c1 = rng.random_range(0.001..0.05);
        let c2 = c1 * rng.random_range(0.0..1.0);
        let c3 = rng.random_range(0.0..1.0);
        let consts = GronwallConstants {
            threshold: rng.random_range(0.1..2.0),
            c: rng.random_range(1.0..1.5),
            c_prime: rng.random_range(0.1..1.0),
            k,
            k_prime,
        };
        let g0 = rng.random_range(0.0..2.0);
        let lambda: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let w1 = Control::interval_power(times.clone(), r, c1);
        let w2 = Control::interval_power(times.clone(), r, c2);
        let w3 = Control::interval_power(times.clone(), 1.0, c3);
        let g: Vec<f64> = (0..=n)
            .map(|t| {
                g0 + lambda[0] * consts.c * consts.c_prime * w1.value(0, t).powf(1.0 / k)
                    + lambda[1] * w2.value(0, t).powf(1.0 / k_prime)
                    + lambda[2] * w3.value(0, t)
            })
            .collect();
        let sup = g.iter().fold(0.0f64, |m, v| m.max(*v));
        for s in 0..=n {
            for t in s + 1..=n {
                if w1.value(s, t) > consts.threshold {
                    continue;
                }
                let rhs = consts.c * (sup + consts.c_prime) * w1.value(s, t).powf(1.0 / k)
                    + w2.value(s, t).powf(1.0 / k_prime)
                    + w3.value(s, t);
                if g[t] - g[s] > rhs * (1.0 + 1e-12) {
                    hypothesis_violations += 1;
                }
            }
        }
        let bound = rough_gronwall_bound(g0, [&w1, &w2, &w3], &consts).expect("bound");
        if sup <= bound {
            ok += 1;
        }
        tightest = tightest.max(sup / bound);
    }
    (ok, hypothesis_violations, tightest)
}

fn gronwall_and_stability() -> Outcome {
    let (ok, violations, tightest) = gronwall_instances();
    let flows = run_experiment(&ExperimentConfig::desk(ExperimentKind::FlowConvergence));
    let (flow_ok, flow_detail) = match flows {
        Ok(report) => {
            let pairs = report
                .table("pairs")
                .map(|t| t.rows.len().saturating_sub(1))
                .unwrap_or(0);
            (
                report.passed() && pairs >= 10,
                format!("{pairs} perturbed flow pairs: {}", summarize(&report)),
            )
        }
        Err(e) => (false, format!("flow pairs error: {e}")),
    };
    outcome(
        ok == 20 && violations == 0 && flow_ok,
        format!(
            "{ok}/20 Gronwall instances bounded ({violations} hypothesis violations, sup G / bound at most {tightest:.2e}); {flow_detail}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<f64>); 10] = [
        ("chen_geometric", chen_suite, Some(10.0)),
        ("variation_oracle", variation_oracle, Some(30.0)),
        ("rough_integral_order", rough_integral_order, None),
        ("scalar_rde", scalar_rde, None),
        ("flow_well_posedness", flow_suite, None),
        ("euler_transport", steady_suite, None),
        ("vanishing_viscosity", viscous_cross_validation, None),
        ("remainder_regularity", remainder_suite, None),
        ("wong_zakai", wong_zakai_suite, None),
        ("gronwall_and_stability", gronwall_and_stability, None),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let start = Instant::now();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let result =
            std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        let in_time = budget.is_none_or(|b| secs < b);
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        let timing = match budget {
            Some(b) => format!("{secs:.1}s of {b:.0}s"),
            None => format!("{secs:.1}s"),
        };
        println!(
            "{} {:>2} {name} [{timing}]: {}",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        ran - failed,
        ran,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
