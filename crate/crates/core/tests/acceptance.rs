//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its verdict; the process fails if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use netred::conic::InteriorPointSolver;
use netred::h2::{is_hurwitz, ErrorRealization};
use netred::optimizer::{
    bisect_gamma_hat, optimize_weights, standard_h2_feasible, augmented_h2_feasible, OptimizerSettings, Termination,
    WeightingProblem,
};
use netred::presets;
use netred::{BalancedRepresentation, Clustering, DirectedNetwork, QuotientModel, WeightParameterization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_network(rng: &mut ChaCha8Rng, n: usize) -> DirectedNetwork {
    if rng.gen_bool(0.5) {
        let extra = rng.gen_range(1..4);
        presets::random_balanced(n, extra, rng)
    } else {
        let extra = rng.gen_range(0..2 * n);
        presets::random_strong(n, extra, rng)
    }
}

/// A random point of the admissible set near the projection weights.
fn random_admissible(prob: &WeightingProblem, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mu0 = prob.initial_mu().expect("projection weights are admissible");
    let scale = rng.gen_range(0.25..4.0);
    for _ in 0..100 {
        let mu = mu0.map(|v| scale * v * rng.gen_range(-1.0f64..1.0).exp());
        let w = prob.weights(&mu);
        if w.min() > 0.0 {
            return w;
        }
    }
    prob.weights(&mu0) * scale
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let net = presets::paper6();
    let rep = BalancedRepresentation::new(&net).map_err(|e| e.to_string())?;
    let quotient = QuotientModel::new(&net, &rep, &presets::paper6_clustering()).map_err(|e| e.to_string())?;
    let param = WeightParameterization::new(&quotient).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    #[rustfmt::skip]
    let b_hat = DMatrix::from_row_slice(3, 4, &[
        1., -1., -1., 0.,
        0., 1., 0., -1.,
        -1., 0., 1., 1.,
    ]);
    check(quotient.b_hat == b_hat, || format!("quotient incidence {}", quotient.b_hat))?;
    check(quotient.masses.as_slice() == [2.0, 3.0, 1.0], || {
        format!("masses {:?}", quotient.masses.as_slice())
    })?;
    check(quotient.input_b.as_slice() == [0.0, 1.0, 0.0], || {
        format!("input {:?}", quotient.input_b.as_slice())
    })?;
    check(quotient.output.as_slice() == [1.0, 0.0, 0.0], || format!("output {}", quotient.output))?;
    // w3 = w1 - w2 and w4 = w2, exactly, for integer free coordinates.
    for (a, b) in [(2.0, 1.0), (5.0, 3.0), (1.0, 1.0)] {
        let w = param.weights_from_mu(&DVector::from_vec(vec![a, b]));
        check(w.as_slice() == [a, b, a - b, b], || format!("weights {:?} from ({a}, {b})", w.as_slice()))?;
    }
    check(param.lift.iter().all(|v| v.fract() == 0.0), || format!("lift {}", param.lift))?;
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("integer-exact, {elapsed:?}"))
}

fn criterion_2() -> Verdict {
    let b_hat = presets::sensor14_quotient_incidence();
    let param = WeightParameterization::from_incidence(&b_hat).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for printed in [presets::SENSOR14_INITIAL_WEIGHTS, presets::SENSOR14_OPTIMIZED_WEIGHTS] {
        let w = DVector::from_row_slice(&printed);
        let imbalance = (&b_hat * &w).amax();
        let relations = [w[0] - w[2], w[1] - w[3] - w[7], w[5] - w[7], w[4] - w[6]];
        let rel = relations.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(imbalance).max(rel);
        check(imbalance <= 1e-4, || format!("imbalance {imbalance:.2e} for {printed:?}"))?;
        check(rel <= 1e-4, || format!("relations off by {rel:.2e} for {printed:?}"))?;
        let mu = param.mu_from_weights(&w, 1e-4).map_err(|e| format!("not in range(T): {e}"))?;
        let back = param.weights_from_mu(&mu);
        let res = (&back - &w).amax();
        check(res <= 1e-4, || format!("range residual {res:.2e}"))?;
    }
    Ok(format!("largest residual {worst:.1e}"))
}

struct RunSummary {
    improvement: f64,
    monotone: bool,
    no_worse: bool,
    elapsed: Duration,
    iterations: usize,
    termination: Termination,
}

fn run_optimizer(prob: &WeightingProblem, settings: &OptimizerSettings) -> Result<RunSummary, String> {
    let solver = InteriorPointSolver::default();
    let start = Instant::now();
    let res = optimize_weights(prob, None, settings, &solver).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let f = res.trace.objectives();
    Ok(RunSummary {
        improvement: res.improvement(),
        monotone: f.windows(2).all(|p| p[1] <= p[0] + 1e-9),
        no_worse: res.final_error <= res.initial_error + 1e-9,
        elapsed,
        iterations: res.trace.len(),
        termination: res.termination,
    })
}

fn criterion_3_instances() -> Vec<WeightingProblem> {
    (0..20u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(6..=12);
            let r = rng.gen_range(3..=5);
            let extra = rng.gen_range(2..5);
            let net = presets::random_balanced(n, extra, &mut rng);
            let clustering = presets::random_clustering(n, r, &mut rng);
            WeightingProblem::new(&net, &clustering).expect("random instance is valid")
        })
        .collect()
}

/// Settings for the improvement criterion. The default `delta_hat` moves the
/// weights by O(delta_hat) per step and stops after one or two steps on these
/// instances, so a larger value is used here.
fn criterion_3_settings() -> OptimizerSettings {
    OptimizerSettings {
        delta_hat: 1e-2,
        ..OptimizerSettings::default()
    }
}

fn criterion_3() -> Verdict {
    let settings = criterion_3_settings();
    let paper6 = WeightingProblem::new(&presets::paper6(), &presets::paper6_clustering()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let s = run_optimizer(&paper6, &settings)?;
    check(s.monotone && s.no_worse, || "6-node example: trace not monotone or error increased".into())?;
    check(s.elapsed < Duration::from_secs(60), || format!("6-node example took {:?}", s.elapsed))?;
    lines.push(format!("6-node improvement {:.1}%", 100.0 * s.improvement));

    let mut improved = 0;
    let mut slowest = Duration::ZERO;
    for (k, prob) in criterion_3_instances().iter().enumerate() {
        let s = run_optimizer(prob, &settings)?;
        println!(
            "    instance {k:2}: improvement {:6.2}%, {:3} iterates, {:?}, {:.2?}",
            100.0 * s.improvement,
            s.iterations,
            s.termination,
            s.elapsed
        );
        check(s.monotone, || format!("instance {k}: objective trace increased"))?;
        check(s.no_worse, || format!("instance {k}: final error above initial"))?;
        check(s.elapsed < Duration::from_secs(60), || format!("instance {k} took {:?}", s.elapsed))?;
        if s.improvement > 0.01 {
            improved += 1;
        }
        slowest = slowest.max(s.elapsed);
    }
    check(improved >= 10, || format!("only {improved}/20 instances improved by more than 1%"))?;
    lines.push(format!("{improved}/20 random instances improved by more than 1%"));
    lines.push(format!("slowest {slowest:.2?} (delta_hat = {})", settings.delta_hat));

    // Informational: the same instances at the default delta_hat.
    let default = OptimizerSettings::default();
    let mut improved_default = 0;
    for prob in criterion_3_instances() {
        let s = run_optimizer(&prob, &default)?;
        check(s.monotone && s.no_worse, || "default settings: monotonicity violated".into())?;
        if s.improvement > 0.01 {
            improved_default += 1;
        }
    }
    lines.push(format!("{improved_default}/20 at the default delta_hat = {}", default.delta_hat));
    Ok(lines.join("; "))
}

fn criterion_4() -> Verdict {
    let solver = InteriorPointSolver::default();
    // The rescaled inequality certifies the H2 norm of the system with the
    // extra input sqrt(delta_hat) E, which converges to the plain norm as
    // delta_hat -> 0; at 1e-5 it is up to 2% higher on small-error instances.
    let delta_hat = 1e-7;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut instances = Vec::new();
    while instances.len() < 20 {
        let n = rng.gen_range(4..=9);
        let r = rng.gen_range(2..=n.min(4));
        let net = random_network(&mut rng, n);
        let clustering = presets::random_clustering(n, r, &mut rng);
        let prob = WeightingProblem::new(&net, &clustering).map_err(|e| e.to_string())?;
        let w = random_admissible(&prob, &mut rng);
        let h2 = prob.oracle_h2_squared(&w).map_err(|e| e.to_string())?;
        if h2 > 1e-10 {
            instances.push((prob, w, h2));
        }
    }
    let mut worst: f64 = 0.0;
    for (k, (prob, w, h2)) in instances.iter().enumerate() {
        let g = bisect_gamma_hat(prob, w, delta_hat, 1e-4, &solver).map_err(|e| e.to_string())?;
        let rel = (g / delta_hat - h2).abs() / h2;
        worst = worst.max(rel);
        check(rel <= 0.01, || format!("instance {k}: bisection {} vs oracle {h2}", g / delta_hat))?;
    }
    let mut agree = 0;
    for pair in 0..50 {
        let (prob, w, h2) = &instances[pair % instances.len()];
        // Stay clear of the threshold, where both programs sit at the
        // solver's tolerance.
        let factor = if rng.gen_bool(0.5) {
            rng.gen_range(0.3..0.95)
        } else {
            rng.gen_range(1.05..3.0)
        };
        let gamma = factor * h2;
        let standard = standard_h2_feasible(prob, w, gamma, &solver).map_err(|e| e.to_string())?;
        let augmented = augmented_h2_feasible(prob, w, delta_hat * gamma, delta_hat, &solver).map_err(|e| e.to_string())?;
        check(standard.feasible == augmented.feasible, || {
            format!(
                "pair {pair}: gamma = {factor:.3} * H2^2, standard {} vs rescaled {}",
                standard.feasible, augmented.feasible
            )
        })?;
        check(standard.feasible == (factor > 1.0), || {
            format!("pair {pair}: verdict {} at gamma = {factor:.3} * H2^2", standard.feasible)
        })?;
        agree += 1;
    }
    Ok(format!("worst bisection error {:.3}%, {agree}/50 verdicts agree", 100.0 * worst))
}

fn consensus_spectrum_ok(lap: &DMatrix<f64>) -> bool {
    let eig = lap.clone().complex_eigenvalues();
    let scale = lap.amax().max(1.0);
    let zeros = eig.iter().filter(|z| z.norm() <= 1e-9 * scale).count();
    zeros == 1 && eig.iter().filter(|z| z.norm() > 1e-9 * scale).all(|z| z.re > 1e-12 * scale)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_gain: f64 = 0.0;
    for k in 0..200 {
        let n = rng.gen_range(3..=12);
        let r = rng.gen_range(2..=n.min(6));
        let net = random_network(&mut rng, n);
        let clustering = presets::random_clustering(n, r, &mut rng);
        let prob = WeightingProblem::new(&net, &clustering).map_err(|e| e.to_string())?;
        let w = random_admissible(&prob, &mut rng);
        let err = ErrorRealization::new(&prob.net, &prob.rep, &prob.quotient, &w).map_err(|e| e.to_string())?;
        check(is_hurwitz(&err.a()), || format!("triple {k}: A_e is not Hurwitz"))?;
        let gain = err.integrator_mismatch.amax();
        worst_gain = worst_gain.max(gain);
        check(gain <= 1e-12, || format!("triple {k}: integrator gain {gain:.2e}"))?;
        let red = prob.quotient.reduced_system(&w).map_err(|e| e.to_string())?;
        check(consensus_spectrum_ok(&red.lap), || format!("triple {k}: reduced Laplacian spectrum"))?;
    }
    Ok(format!("200 triples, largest integrator gain {worst_gain:.1e}"))
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut problems = Vec::new();
    for _ in 0..10 {
        let n = rng.gen_range(4..=10);
        let r = rng.gen_range(2..=n.min(5));
        let net = random_network(&mut rng, n);
        let clustering = presets::random_clustering(n, r, &mut rng);
        problems.push(WeightingProblem::new(&net, &clustering).map_err(|e| e.to_string())?);
    }
    let mut convexity_slack = f64::INFINITY;
    let mut fd_error: f64 = 0.0;
    let mut tangent_excess = f64::NEG_INFINITY;
    for k in 0..100 {
        let prob = &problems[k % problems.len()];
        let m = prob.quotient.num_edges();
        let w1 = DVector::from_fn(m, |_, _| rng.gen_range(0.1..3.0));
        let w2 = DVector::from_fn(m, |_, _| rng.gen_range(0.1..3.0));
        let mid = (&w1 + &w2) * 0.5;
        let gap = (prob.phi_a(&w1) + prob.phi_a(&w2)) * 0.5 - prob.phi_a(&mid);
        let lmin = gap.symmetric_eigenvalues().min();
        convexity_slack = convexity_slack.min(lmin);
        check(lmin >= -1e-9, || format!("pair {k}: midpoint slack {lmin:.2e}"))?;

        let dm = prob.dim_mu();
        if dm == 0 {
            continue;
        }
        let mu = DVector::from_fn(dm, |_, _| rng.gen_range(-2.0..2.0));
        let h = DVector::from_fn(dm, |_, _| rng.gen_range(-1.0..1.0));
        let step = 1e-4;
        let central = (prob.phi_map(&(&mu + &h * step)) - prob.phi_map(&(&mu - &h * step))) / (2.0 * step);
        let exact = prob.dphi(&mu, &h);
        let rel = (&central - &exact).amax() / exact.amax().max(1e-300);
        fd_error = fd_error.max(rel);
        check(rel <= 1e-8, || format!("pair {k}: derivative off by {rel:.2e}"))?;

        let mu0 = DVector::from_fn(dm, |_, _| rng.gen_range(-2.0..2.0));
        let rem = prob.phi_map(&mu) - prob.phi_map(&mu0) - prob.dphi(&mu0, &(&mu - &mu0));
        let lmax = rem.symmetric_eigenvalues().max();
        let scale = prob.phi_map(&mu).amax().max(1.0);
        tangent_excess = tangent_excess.max(lmax / scale);
        check(lmax <= 1e-9 * scale, || format!("pair {k}: tangent remainder eigenvalue {lmax:.2e}"))?;
    }
    Ok(format!(
        "min midpoint eigenvalue {convexity_slack:.1e}, derivative error {fd_error:.1e}, tangent excess {tangent_excess:.1e}"
    ))
}

fn criterion_7() -> Verdict {
    let solver = InteriorPointSolver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut nets = vec![presets::paper6()];
    for _ in 0..5 {
        let n = rng.gen_range(3..=9);
        nets.push(random_network(&mut rng, n));
    }
    for (k, net) in nets.iter().enumerate() {
        let n = net.n();
        let prob = WeightingProblem::new(net, &Clustering::identity(n)).map_err(|e| e.to_string())?;
        let w0 = prob.weights(&prob.initial_mu().map_err(|e| e.to_string())?);
        let err = prob.oracle_h2(&w0).map_err(|e| e.to_string())?;
        worst = worst.max(err);
        check(err <= 1e-8, || format!("network {k}: identity clustering error {err:.2e}"))?;
        let red = prob.quotient.reduced_system(&w0).map_err(|e| e.to_string())?;
        let lap_diff = (&red.lap - net.laplacian()).amax();
        check(lap_diff <= 1e-10, || format!("network {k}: reduced Laplacian differs by {lap_diff:.2e}"))?;

        let single = WeightingProblem::new(net, &Clustering::single(n)).map_err(|e| e.to_string())?;
        check(single.reduced_order() == 0 && single.dim_mu() == 0, || {
            format!("network {k}: single cluster leaves free weights")
        })?;
        let red = single.quotient.reduced_system(&DVector::zeros(0)).map_err(|e| e.to_string())?;
        check(red.lap.shape() == (1, 1) && red.lap[(0, 0)] == 0.0, || format!("network {k}: L_hat {}", red.lap))?;
        // The scalar aggregate keeps the summed balanced input and output gains.
        let fsum = (single.quotient.input_b.row(0) - single.rep.input_b.row_sum()).amax();
        let hsum = (red.output.column(0) - net.output().column_sum()).amax();
        check(fsum <= 1e-12 && hsum <= 1e-12, || format!("network {k}: aggregate gains off"))?;
        let res = optimize_weights(&single, None, &OptimizerSettings::default(), &solver).map_err(|e| e.to_string())?;
        check(res.termination == Termination::NothingToOptimize && res.trace.len() == 1, || {
            format!("network {k}: single cluster ran {} iterates", res.trace.len())
        })?;
    }
    Ok(format!("largest identity-clustering error {worst:.1e}"))
}

fn main() -> ExitCode {
    let only: Option<String> = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("1 six-node symbolic pipeline", criterion_1),
        ("2 sensor-network weight identities", criterion_2),
        ("3 optimizer improves on projection", criterion_3),
        ("4 LMI and oracle agreement", criterion_4),
        ("5 Hurwitz, integrator and consensus properties", criterion_5),
        ("6 convexity and derivative checks", criterion_6),
        ("7 degenerate clusterings", criterion_7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_deref().is_some_and(|o| !name.starts_with(o)) {
            continue;
        }
        let start = Instant::now();
        let verdict = run();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
