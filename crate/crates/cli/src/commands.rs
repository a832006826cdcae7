use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use netred::conic::InteriorPointSolver;
use netred::h2::{is_hurwitz, reduced_reaches_consensus};
use netred::optimizer::{optimize_weights, OptimizationResult, OptimizerSettings, Termination, WeightingProblem};
use netred::{presets, BalancedRepresentation, Clustering};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::formats::{
    clusters_to_json, emit, fmt12, matrix_rows, read_clusters, read_graph, read_weights, round12, to_json_text,
    weight_records, EdgeRecord, GraphFile,
};
use crate::{BalanceArgs, BenchArgs, EvaluateArgs, GenArgs, Preset, ProjectArgs, ReduceArgs};

/// Admissibility tolerance for weights read from disk, relative to their size.
const ADMISSIBLE_TOL: f64 = 1e-9;

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Converged => "converged".into(),
        Termination::MaxIterations => "max_iterations".into(),
        Termination::NothingToOptimize => "nothing_to_optimize".into(),
        Termination::SubproblemFailed(_) => "subproblem_failed".into(),
        Termination::ObjectiveIncreased { .. } => "objective_increased".into(),
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let random = args.preset != Preset::Paper6;
    if random && args.n < 2 {
        return Err(CliError::Config(format!("--n must be at least 2, got {}", args.n)));
    }
    if random && args.clusters.is_some() && !(1..=args.n).contains(&args.num_clusters) {
        return Err(CliError::Config(format!(
            "--num-clusters must lie in 1..={}, got {}",
            args.n, args.num_clusters
        )));
    }
    let net = match args.preset {
        Preset::Paper6 => presets::paper6(),
        Preset::RandomBalanced => presets::random_balanced(args.n, args.extra, &mut rng),
        Preset::RandomUnbalanced => presets::random_strong(args.n, args.extra, &mut rng),
    };
    let clustering = args.clusters.as_ref().map(|_| match args.preset {
        Preset::Paper6 => presets::paper6_clustering(),
        _ => presets::random_clustering(args.n, args.num_clusters, &mut rng),
    });
    let graph_text = to_json_text(&GraphFile::from_network(&net))?;
    let clusters_text = clustering.map(|c| to_json_text(&clusters_to_json(&c))).transpose()?;
    emit(args.out.as_deref(), &graph_text)?;
    if let (Some(path), Some(text)) = (&args.clusters, clusters_text) {
        emit(Some(path), &text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BalanceOutput {
    masses: Vec<f64>,
    /// Edge weights of the balanced graph.
    balanced_edges: Vec<EdgeRecord>,
}

pub fn balance(args: &BalanceArgs) -> Result<(), CliError> {
    let net = read_graph(&args.graph)?;
    let rep = BalancedRepresentation::new(&net)?;
    let out = BalanceOutput {
        masses: rep.masses.iter().copied().collect(),
        balanced_edges: net
            .edges()
            .iter()
            .zip(rep.weights_b.iter())
            .map(|(e, &w)| EdgeRecord {
                tail: e.tail + 1,
                head: e.head + 1,
                weight: w,
            })
            .collect(),
    };
    emit(args.out.as_deref(), &to_json_text(&out)?)
}

fn load_problem(graph: &Path, clusters: &Path) -> Result<(WeightingProblem, Clustering), CliError> {
    let net = read_graph(graph)?;
    let clustering = read_clusters(clusters, net.n())?;
    let prob = WeightingProblem::new(&net, &clustering)?;
    Ok((prob, clustering))
}

pub fn project(args: &ProjectArgs) -> Result<(), CliError> {
    let (prob, _) = load_problem(&args.graph, &args.clusters)?;
    let w = prob.quotient.projection_weights(&prob.rep)?;
    emit(args.out.as_deref(), &to_json_text(&weight_records(&prob.quotient, &w))?)
}

/// Weights from a file, checked for positivity and `B_hat w = 0`, with their
/// free coordinates.
fn admissible_start(prob: &WeightingProblem, path: &Path) -> Result<(DVector<f64>, DVector<f64>), CliError> {
    let w = read_weights(path, &prob.quotient)?;
    if let Some(k) = w.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
        let (t, h) = prob.quotient.edges[k];
        return Err(CliError::Admissibility(format!(
            "weight {} of quotient edge {} -> {} is not positive",
            w[k],
            t + 1,
            h + 1
        )));
    }
    let tol = ADMISSIBLE_TOL * w.amax().max(1.0);
    prob.quotient.check_admissible(&w, tol)?;
    let mu = prob.param.mu_from_weights(&w, tol)?;
    Ok((w, mu))
}

#[derive(Serialize)]
struct ReducedModelOutput {
    clusters: Vec<Vec<usize>>,
    weights: Vec<EdgeRecord>,
    masses: Vec<f64>,
    laplacian: Vec<Vec<f64>>,
    input: Vec<Vec<f64>>,
    output: Vec<Vec<f64>>,
    initial_error: f64,
    final_error: f64,
    improvement_percent: f64,
    iterations: usize,
    best_iteration: usize,
    termination: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn warning_text(t: &Termination) -> Option<String> {
    match t {
        Termination::SubproblemFailed(msg) => Some(msg.clone()),
        Termination::ObjectiveIncreased { previous, rejected } => Some(format!(
            "objective rose from {} to {}; kept the previous iterate",
            fmt12(*previous),
            fmt12(*rejected)
        )),
        _ => None,
    }
}

fn write_trace(path: &Path, res: &OptimizationResult) -> Result<(), CliError> {
    let m = res.mu.len();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["iter", "objective_trR", "h2_error", "subproblem_status", "elapsed_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=m).map(|i| format!("mu_{i}")));
    wtr.write_record(&header).map_err(csv_error)?;
    for rec in &res.trace.records {
        let mut row = vec![
            rec.k.to_string(),
            fmt12(rec.objective),
            fmt12(rec.h2_error),
            rec.status.to_string(),
            fmt12(rec.elapsed.as_secs_f64() * 1e3),
        ];
        row.extend(rec.mu.iter().map(|&x| fmt12(x)));
        wtr.write_record(&row).map_err(csv_error)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn reduce(args: &ReduceArgs) -> Result<(), CliError> {
    let settings = args.opt.settings()?;
    let (prob, clustering) = load_problem(&args.graph, &args.clusters)?;
    let start = args.weights.as_deref().map(|p| admissible_start(&prob, p)).transpose()?;
    let solver = InteriorPointSolver::default();
    let res = optimize_weights(&prob, start.as_ref().map(|(_, mu)| mu), &settings, &solver)?;
    let red = prob.quotient.reduced_system(&res.weights)?;

    let out = ReducedModelOutput {
        clusters: clusters_to_json(&clustering),
        weights: weight_records(&prob.quotient, &res.weights),
        masses: prob.quotient.masses.iter().copied().collect(),
        laplacian: matrix_rows(&red.lap),
        input: matrix_rows(&red.input),
        output: matrix_rows(&red.output),
        initial_error: res.initial_error,
        final_error: res.final_error,
        improvement_percent: 100.0 * res.improvement(),
        iterations: res.trace.len(),
        best_iteration: res.best_iteration,
        termination: termination_label(&res.termination),
        warning: warning_text(&res.termination),
    };
    let text = to_json_text(&out)?;
    if let Some(path) = &args.trace {
        write_trace(path, &res)?;
    }
    emit(args.out.as_deref(), &text)?;

    let summary = format!(
        "initial H2 error: {}\nfinal H2 error: {}\nimprovement: {}%\niterations: {}\ntermination: {}",
        fmt12(res.initial_error),
        fmt12(res.final_error),
        fmt12(100.0 * res.improvement()),
        res.trace.len(),
        termination_label(&res.termination),
    );
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    if let Some(w) = warning_text(&res.termination) {
        log::warn!("{w}");
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let (prob, _) = load_problem(&args.graph, &args.clusters)?;
    let (w, _) = admissible_start(&prob, &args.weights)?;
    let err = prob.oracle_h2(&w)?;
    let consensus = reduced_reaches_consensus(&prob.quotient, &w)?;
    let hurwitz = is_hurwitz(&prob.a_e(&w));
    println!("h2_error: {}", fmt12(err));
    println!("reduced_consensus: {consensus}");
    println!("error_system_hurwitz: {hurwitz}");
    Ok(())
}

struct BenchRow {
    index: usize,
    seed: u64,
    n: usize,
    r: usize,
    free: usize,
    outcome: Result<OptimizationResult, String>,
    elapsed_ms: f64,
}

fn bench_instance(args: &BenchArgs, settings: &OptimizerSettings, index: usize) -> BenchRow {
    let seed = args.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(args.n_min..=args.n_max);
    let r = rng.gen_range(args.clusters_min..=args.clusters_max.min(n));
    let extra = rng.gen_range(2..5);
    let net = if args.unbalanced {
        presets::random_strong(n, 2 * extra, &mut rng)
    } else {
        presets::random_balanced(n, extra, &mut rng)
    };
    let clustering = presets::random_clustering(n, r, &mut rng);
    let start = Instant::now();
    let (free, outcome) = match WeightingProblem::new(&net, &clustering) {
        Ok(prob) => {
            let solver = InteriorPointSolver::default();
            let res = optimize_weights(&prob, None, settings, &solver).map_err(|e| e.to_string());
            (prob.dim_mu(), res)
        }
        Err(e) => (0, Err(e.to_string())),
    };
    BenchRow {
        index,
        seed,
        n,
        r,
        free,
        outcome,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let settings = args.opt.settings()?;
    if args.n_min < 2 || args.n_min > args.n_max {
        return Err(CliError::Config(format!("bad vertex range {}..={}", args.n_min, args.n_max)));
    }
    if args.clusters_min < 1 || args.clusters_min > args.clusters_max || args.clusters_min > args.n_min {
        return Err(CliError::Config(format!(
            "bad cluster range {}..={} for at least {} vertices",
            args.clusters_min, args.clusters_max, args.n_min
        )));
    }
    if args.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let rows: Vec<BenchRow> =
        pool.install(|| (0..args.count).into_par_iter().map(|i| bench_instance(args, &settings, i)).collect());

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "instance",
        "seed",
        "n",
        "r",
        "free_weights",
        "initial_error",
        "final_error",
        "improvement_percent",
        "iterations",
        "termination",
        "elapsed_ms",
    ])
    .map_err(csv_error)?;
    let mut improved = 0;
    for row in &rows {
        let mut rec = vec![
            row.index.to_string(),
            row.seed.to_string(),
            row.n.to_string(),
            row.r.to_string(),
            row.free.to_string(),
        ];
        match &row.outcome {
            Ok(res) => {
                if res.improvement() > 0.01 {
                    improved += 1;
                }
                rec.extend([
                    fmt12(res.initial_error),
                    fmt12(res.final_error),
                    fmt12(100.0 * res.improvement()),
                    res.trace.len().to_string(),
                    termination_label(&res.termination),
                ]);
            }
            Err(msg) => {
                log::warn!("instance {}: {msg}", row.index);
                rec.extend(["".into(), "".into(), "".into(), "0".into(), "error".into()]);
            }
        }
        rec.push(fmt12(round12(row.elapsed_ms)));
        wtr.write_record(&rec).map_err(csv_error)?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    emit(args.out.as_deref(), &text)?;
    eprintln!("{improved}/{} instances improved by more than 1%", rows.len());
    Ok(())
}
