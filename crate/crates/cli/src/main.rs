//! blindpca: select a small subset of original variables that explains the
//! leading principal components.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numeric failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use blindpca::blinding::blind;
use blindpca::io::{read_csv, write_scores_csv, write_table_csv, RunReport};
use blindpca::objective::{EvalConfig, WeightScheme};
use blindpca::pca::{covariance, eigendecompose};
use blindpca::search::{DSelect, SearchConfig, SelectionResult, Strategy};
use blindpca::simgen::{example2_true_cov, Method, ModelKind, StudyConfig};
use blindpca::{
    evaluate_population, DataMatrix, Error, Estimator, MetricKind, NeighborConfig, RSelect,
    SubsetIndex,
};

#[derive(Parser)]
#[command(name = "blindpca", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select variables from a CSV dataset.
    Select(SelectArgs),
    /// Run a replication study on one of the built-in simulation models.
    Simulate(SimulateArgs),
    /// Evaluate the analytic (population) objective for the ten-variable
    /// Gaussian model on group-representative subsets.
    Theory(TheoryArgs),
    /// Plain PCA report: eigenvalues, explained variance, loadings.
    Pca(PcaArgs),
}

#[derive(Args)]
struct CommonEvalArgs {
    /// Number of leading components to explain.
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Component weights: equal | variance | comma-separated values.
    #[arg(long, default_value = "variance")]
    weights: String,
    /// Distance on the retained coordinates.
    #[arg(long, default_value = "euclidean")]
    metric: String,
    /// Neighbor count: auto (GCV per column) or a fixed integer.
    #[arg(long, default_value = "auto")]
    r: String,
    /// Local estimator: mean | median.
    #[arg(long, default_value = "mean")]
    estimator: String,
    /// Count each point among its own neighbors. Default is leave-one-out
    /// estimates, the convention behind the published study numbers.
    #[arg(long, default_value_t = false)]
    self_neighbors: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Input CSV (header row required; all columns numeric after exclusions).
    csv: PathBuf,
    /// Cardinality: auto (angle rule) or a fixed integer.
    #[arg(long, default_value = "auto")]
    d: String,
    /// Angle threshold in degrees for the automatic cardinality rule.
    #[arg(long, default_value_t = 20.0)]
    gamma: f64,
    #[command(flatten)]
    eval: CommonEvalArgs,
    /// Search strategy: exhaustive | fb | genetic.
    #[arg(long, default_value = "exhaustive")]
    search: String,
    /// Seed for the genetic strategy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also select one subset per component (objective h^k alone).
    #[arg(long, default_value_t = false)]
    per_component: bool,
    /// Comma-separated column names to drop before analysis.
    #[arg(long, value_delimiter = ',')]
    exclude_cols: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-observation original and blinded PC scores as CSV.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Cap on the automatic cardinality rule.
    #[arg(long)]
    d_max: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model: example1-dim4 | example1-dim23 | example2-dim10.
    #[arg(long, default_value = "example1-dim4")]
    model: String,
    /// Sample size per replicate.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// Preset matching a published table (1, 2 or 5); sets model, n,
    /// replicates (500), d and the angle checks.
    #[arg(long)]
    paper_table: Option<u8>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 20.0)]
    gamma: f64,
    /// Base seed; replicate r uses base_seed + r.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Component weights for the blinding objective.
    #[arg(long, default_value = "equal")]
    weights: String,
    /// Distance on the retained coordinates.
    #[arg(long, default_value = "euclidean")]
    metric: String,
    /// Methods to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["blinding".to_string(), "b2".to_string(), "b4".to_string()])]
    methods: Vec<String>,
    /// Output prefix: writes <prefix>.csv and <prefix>.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Cardinality of the tabulated subsets: 1, 2, or omit for both.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 2)]
    q: usize,
    /// Component weights (tables use equal weights).
    #[arg(long, default_value = "equal")]
    weights: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PcaArgs {
    csv: PathBuf,
    /// Components to report; defaults to all.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    exclude_cols: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_weights(text: &str) -> Result<WeightScheme, Error> {
    match text {
        "equal" => Ok(WeightScheme::Equal),
        "variance" => Ok(WeightScheme::Variance),
        list => {
            let vals: Result<Vec<f64>, _> = list.split(',').map(str::parse::<f64>).collect();
            match vals {
                Ok(v) if !v.is_empty() => Ok(WeightScheme::Custom(v)),
                _ => Err(Error::invalid_argument(format!(
                    "cannot parse weights '{list}' (equal | variance | w1,w2,...)"
                ))),
            }
        }
    }
}

fn parse_metric(text: &str) -> Result<MetricKind, Error> {
    match text {
        "euclidean" => Ok(MetricKind::Euclidean),
        "mahalanobis" => Ok(MetricKind::Mahalanobis),
        other => Err(Error::invalid_argument(format!(
            "unknown metric '{other}' (euclidean | mahalanobis)"
        ))),
    }
}

fn parse_estimator(text: &str) -> Result<Estimator, Error> {
    match text {
        "mean" => Ok(Estimator::Mean),
        "median" => Ok(Estimator::Median),
        other => Err(Error::invalid_argument(format!(
            "unknown estimator '{other}' (mean | median)"
        ))),
    }
}

fn parse_strategy(text: &str) -> Result<Strategy, Error> {
    match text {
        "exhaustive" => Ok(Strategy::Exhaustive),
        "fb" | "forward-backward" => Ok(Strategy::ForwardBackward),
        "genetic" => Ok(Strategy::Genetic),
        other => Err(Error::invalid_argument(format!(
            "unknown search strategy '{other}' (exhaustive | fb | genetic)"
        ))),
    }
}

fn parse_r(text: &str) -> Result<RSelect, Error> {
    if text == "auto" {
        return Ok(RSelect::Auto);
    }
    text.parse::<usize>()
        .map(RSelect::Fixed)
        .map_err(|_| Error::invalid_argument(format!("cannot parse --r '{text}' (auto | integer)")))
}

fn build_eval(args: &CommonEvalArgs) -> Result<EvalConfig, Error> {
    Ok(EvalConfig {
        q: args.q,
        weights: parse_weights(&args.weights)?,
        neighbors: NeighborConfig {
            r: parse_r(&args.r)?,
            r_grid: None,
            estimator: parse_estimator(&args.estimator)?,
            include_self: args.self_neighbors,
        },
        metric: parse_metric(&args.metric)?,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::invalid_data(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_select(args: &SelectArgs) -> Result<(), Error> {
    let start = Instant::now();
    let x = read_csv(&args.csv, &args.exclude_cols)?;
    let eval = build_eval(&args.eval)?;
    let strategy = parse_strategy(&args.search)?;
    let d = match args.d.as_str() {
        "auto" => DSelect::Auto,
        text => DSelect::Fixed(text.parse::<usize>().map_err(|_| {
            Error::invalid_argument(format!("cannot parse --d '{text}' (auto | integer)"))
        })?),
    };
    let cfg = SearchConfig {
        strategy,
        d,
        gamma_deg: args.gamma,
        d_max: args.d_max,
        eval: eval.clone(),
        seed: args.seed,
        exhaustive_cap: 100_000,
    };

    let selection = blindpca::search::run(&x, &cfg)?;

    let per_component = if args.per_component {
        let mut list = Vec::new();
        for k in 0..eval.q {
            let mut w = vec![0.0; eval.q];
            w[k] = 1.0;
            let mut kcfg = cfg.clone();
            kcfg.eval.weights = WeightScheme::Custom(w);
            let res = blindpca::search::run(&x, &kcfg)?;
            list.push((k + 1, res));
        }
        Some(list)
    } else {
        None
    };

    if let Some(path) = &args.scores {
        let eig_x = eigendecompose(&covariance(&x))?;
        let blinded = blind(&x, &selection.subset, &eval.neighbors, eval.metric)?;
        let y = DataMatrix::new(blinded.values.clone())?;
        let eig_y = eigendecompose(&covariance(&y))?;
        let file = fs::File::create(path)
            .map_err(|e| Error::invalid_data(format!("cannot write {}: {e}", path.display())))?;
        write_scores_csv(&x, &eig_x, &blinded, &eig_y, eval.q, file)?;
    }

    let report = build_report(&x, &args.csv, &selection, &cfg, start.elapsed().as_millis())?;
    let mut json: serde_json::Value = serde_json::from_str(&report.to_json()?)
        .map_err(|e| Error::invalid_data(e.to_string()))?;
    if let Some(list) = per_component {
        let entries: Vec<serde_json::Value> = list
            .iter()
            .map(|(k, res)| {
                serde_json::json!({
                    "component": k,
                    "selected_one_based": res.subset.one_based(),
                    "h": res.report.h,
                    "largest_angle_deg": res.report.largest_angle_deg(),
                })
            })
            .collect();
        json["per_component_selection"] = serde_json::Value::Array(entries);
    }
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::invalid_data(e.to_string()))?;
    emit(&args.out, &text)
}

fn build_report(
    x: &DataMatrix,
    input: &std::path::Path,
    selection: &SelectionResult,
    cfg: &SearchConfig,
    elapsed_ms: u128,
) -> Result<RunReport, Error> {
    let selected_names = selection
        .subset
        .indices()
        .iter()
        .map(|&i| x.col_label(i))
        .collect();
    let r_used_named = selection
        .report
        .r_used
        .iter()
        .map(|&(col, r)| (x.col_label(col), r))
        .collect();
    Ok(RunReport {
        tool: "blindpca".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        input: input.display().to_string(),
        config: serde_json::to_value(cfg).map_err(|e| Error::invalid_data(e.to_string()))?,
        selected_one_based: selection.subset.one_based(),
        selected_names,
        r_used_named,
        degenerate: selection.report.degenerate,
        threshold_unmet: selection.threshold_unmet,
        selection: selection.clone(),
        elapsed_ms,
    })
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut cfg = match args.paper_table {
        Some(1) => StudyConfig::new(ModelKind::Example1Dim4, 100, args.replicates),
        Some(2) => StudyConfig::new(ModelKind::Example1Dim23, 100, args.replicates),
        Some(5) => {
            let mut c = StudyConfig::new(ModelKind::Example2Dim10, 50, args.replicates);
            c.angle_check_ds = vec![1, 2];
            c
        }
        Some(other) => {
            return Err(Error::invalid_argument(format!(
                "--paper-table {other} not recognized (1, 2 or 5)"
            )))
        }
        None => {
            let kind = ModelKind::parse(&args.model)?;
            let mut c = StudyConfig::new(kind, args.n.unwrap_or(100), args.replicates);
            c.d = args.d;
            c.eval = EvalConfig::table_reproduction(args.q);
            c.angle_check_ds = vec![args.d];
            c
        }
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    cfg.gamma_deg = args.gamma;
    cfg.base_seed = args.seed;
    cfg.eval.weights = parse_weights(&args.weights)?;
    cfg.eval.metric = parse_metric(&args.metric)?;
    cfg.methods = args
        .methods
        .iter()
        .map(|m| match m.as_str() {
            "blinding" => Ok(Method::Blinding),
            "b2" => Ok(Method::B2),
            "b4" => Ok(Method::B4),
            other => Err(Error::invalid_argument(format!(
                "unknown method '{other}' (blinding | b2 | b4)"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let table = blindpca::run_study(&cfg)?;

    let mut csv_text = Vec::new();
    write_table_csv(&table, &mut csv_text)?;
    let csv_text = String::from_utf8(csv_text).expect("ascii output");
    let json_text = serde_json::to_string_pretty(&table)
        .map_err(|e| Error::invalid_data(e.to_string()))?;

    match &args.out {
        Some(prefix) => {
            let csv_path = prefix.with_extension("csv");
            let json_path = prefix.with_extension("json");
            fs::write(&csv_path, &csv_text).map_err(|e| {
                Error::invalid_data(format!("cannot write {}: {e}", csv_path.display()))
            })?;
            fs::write(&json_path, &json_text).map_err(|e| {
                Error::invalid_data(format!("cannot write {}: {e}", json_path.display()))
            })?;
            println!("wrote {} and {}", csv_path.display(), json_path.display());
        }
        None => {
            println!("{csv_text}");
        }
    }
    for (d, rate) in &table.angle_gt_gamma_rate {
        println!(
            "# d={d}: largest angle > {:.0} deg in {:.1}% of replicates",
            table.gamma_deg,
            100.0 * rate
        );
    }
    Ok(())
}

fn cmd_theory(args: &TheoryArgs) -> Result<(), Error> {
    let weights = parse_weights(&args.weights)?;
    let model = example2_true_cov();
    let ds: Vec<usize> = match args.d {
        Some(1) => vec![1],
        Some(2) => vec![2],
        None => vec![1, 2],
        Some(other) => {
            return Err(Error::invalid_argument(format!(
                "--d {other} not tabulated (1 or 2)"
            )))
        }
    };

    // group representatives: A1 -> X1, X2; A2 -> X5, X6; A3 -> X9, X10
    let singles: [(&str, Vec<usize>); 3] =
        [("A1", vec![0]), ("A2", vec![4]), ("A3", vec![8])];
    let pairs: [(&str, Vec<usize>); 6] = [
        ("A1,A1", vec![0, 1]),
        ("A1,A2", vec![0, 4]),
        ("A1,A3", vec![0, 8]),
        ("A2,A2", vec![4, 5]),
        ("A2,A3", vec![4, 8]),
        ("A3,A3", vec![8, 9]),
    ];

    let mut rows = Vec::new();
    for &d in &ds {
        let entries: &[(&str, Vec<usize>)] = if d == 1 { &singles } else { &pairs };
        for (label, idx) in entries {
            let subset = SubsetIndex::new(idx.clone())?;
            let report = evaluate_population(&model, &subset, args.q, &weights)?;
            rows.push(serde_json::json!({
                "d": d,
                "groups": label,
                "largest_angle_deg": report.largest_angle_deg(),
                "h": report.h,
                "angles_deg": report.per_component.iter().map(|c| c.angle_deg).collect::<Vec<_>>(),
                "per_component_h": report.per_component.iter().map(|c| c.h).collect::<Vec<_>>(),
                "degenerate": report.degenerate,
            }));
        }
    }

    let text = serde_json::to_string_pretty(&serde_json::json!({
        "model": "example2-dim10 (analytic covariance)",
        "q": args.q,
        "weights": args.weights,
        "rows": rows,
    }))
    .map_err(|e| Error::invalid_data(e.to_string()))?;
    emit(&args.out, &text)
}

fn cmd_pca(args: &PcaArgs) -> Result<(), Error> {
    let x = read_csv(&args.csv, &args.exclude_cols)?;
    let p = x.n_cols();
    let q = args.q.unwrap_or(p);
    if q < 1 || q > p {
        return Err(Error::invalid_argument(format!("q = {q} out of range [1, {p}]")));
    }
    let eig = eigendecompose(&covariance(&x))?;
    let names: Vec<String> = (0..p).map(|i| x.col_label(i)).collect();
    let components: Vec<serde_json::Value> = (0..q)
        .map(|k| {
            serde_json::json!({
                "component": k + 1,
                "eigenvalue": eig.eigenvalues[k],
                "explained_variance_ratio": eig.explained_variance_ratio(k + 1)
                    - if k == 0 { 0.0 } else { eig.explained_variance_ratio(k) },
                "cumulative_explained_variance_ratio": eig.explained_variance_ratio(k + 1),
                "loadings": eig.eigenvector(k).to_vec(),
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "input": args.csv.display().to_string(),
        "n": x.n_rows(),
        "p": p,
        "variables": names,
        "degenerate": eig.degenerate,
        "components": components,
    }))
    .map_err(|e| Error::invalid_data(e.to_string()))?;
    emit(&args.out, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Select(args) => cmd_select(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Pca(args) => cmd_pca(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
