use std::fs;
use std::path::{Path, PathBuf};

use aggglm::{
    alternate_fit, granularity_sweep, permutation_test, read_dataset, recovered_histogram,
    simulate_glm, summarize_blocks, summarize_targets, write_dataset, AggregateSummary, Dataset,
    DatasetOptions, DesignMatrix, FamilyKind, FitOptions, GlmFamily, InitScheme, Relationship,
    SimulationConfig, SummaryScheme, SweepConfig,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{concatenate, Array2, Axis};
use serde::Serialize;

use crate::output::{median, write_json, write_text, Table};

#[derive(Debug, Parser)]
#[command(
    name = "aggglm",
    version,
    about = "GLMs fitted from aggregated responses"
)]
pub struct Cli {
    /// Worker threads for folds and permutation replicates (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Simulate(SimulateArgs),
    /// Reduce a target column to an order-statistic summary (JSON).
    Aggregate(AggregateArgs),
    /// Fit coefficients and imputed targets from a dataset and a summary.
    Fit(FitArgs),
    /// Permutation test of the fitted model against permuted-target GLMs.
    Permtest(PermtestArgs),
    /// Cross-validated error as a function of the number of bins.
    Curve(CurveArgs),
    /// Compare true and recovered histogram counts.
    Hist(HistArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Poisson,
    Bernoulli,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => FamilyKind::Gaussian,
            FamilyArg::Poisson => FamilyKind::Poisson,
            FamilyArg::Bernoulli => FamilyKind::Bernoulli,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RelationshipArg {
    Linear,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    Interpolate,
    ZeroBeta,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Seed for every random choice.
    #[arg(long, env = "AGGGLM_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Headered CSV input.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column.
    #[arg(long)]
    pub target: Option<String>,
    /// Block-label column; rows sharing a label are summarized together.
    #[arg(long)]
    pub block: Option<String>,
    /// Feature columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let options = DatasetOptions {
            target: self.target.clone(),
            block: self.block.clone(),
            features: self.features.clone(),
        };
        read_dataset(&self.data, &options)
            .with_context(|| format!("reading {}", self.data.display()))
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Ridge weight.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Prepend a constant column named "intercept" (never penalized).
    #[arg(long)]
    pub intercept: bool,
    /// Feature names (or 0-based indices) exempt from the ridge penalty.
    #[arg(long, value_delimiter = ',')]
    pub unpenalized: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Relative loss change that stops the alternating loop.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Interpolate)]
    pub init: InitArg,
}

impl ModelArgs {
    fn family(&self) -> GlmFamily<f64> {
        GlmFamily::new(self.family.into())
    }

    /// Design matrix, its column names and the fit options for `data`.
    fn prepare(
        &self,
        data: &Dataset,
        seed: u64,
    ) -> Result<(DesignMatrix<f64>, Vec<String>, FitOptions<f64>)> {
        let mut names = data.feature_names.clone();
        let mut x = data.x.clone();
        if self.intercept {
            x = concatenate(Axis(1), &[Array2::ones((data.n(), 1)).view(), x.view()])?;
            names.insert(0, "intercept".into());
        }
        let mut opts = FitOptions::with_lambda(self.lambda);
        opts.max_outer_iterations = self.max_iter;
        opts.relative_loss_tolerance = self.tol;
        opts.seed = seed;
        opts.init = match self.init {
            InitArg::Interpolate => InitScheme::Interpolate,
            InitArg::ZeroBeta => InitScheme::ZeroBeta,
        };
        if self.intercept {
            opts.glm.unpenalized.push(0);
        }
        for u in &self.unpenalized {
            let j = match names.iter().position(|n| n == u) {
                Some(j) => j,
                None => u
                    .parse::<usize>()
                    .ok()
                    .filter(|&j| j < names.len())
                    .with_context(|| format!("--unpenalized: no feature '{u}'"))?,
            };
            opts.glm.unpenalized.push(j);
        }
        Ok((DesignMatrix::new(x)?, names, opts))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Default: 0.3 for Poisson, 1 otherwise.
    #[arg(long)]
    pub coefficient_scale: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub covariate_scale: f64,
    #[arg(long, value_enum, default_value_t = RelationshipArg::Linear)]
    pub relationship: RelationshipArg,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Dataset CSV (features x1..xd, target y).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true coefficients as JSON.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// Equal-frequency bins.
    #[arg(long, conflicts_with = "edges")]
    pub bins: Option<usize>,
    /// Omit the sample minimum and maximum from quantile summaries.
    #[arg(long, requires = "bins")]
    pub drop_extremes: bool,
    /// Histogram bin edges, strictly increasing.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub edges: Option<Vec<f64>>,
}

impl SummaryArgs {
    fn scheme(&self) -> Option<SummaryScheme<f64>> {
        if let Some(bins) = self.bins {
            Some(SummaryScheme::QuantileCuts {
                bins,
                drop_extremes: self.drop_extremes,
            })
        } else {
            self.edges
                .clone()
                .map(|edges| SummaryScheme::EdgeHistogram { edges })
        }
    }
}

fn summarize(data: &Dataset, scheme: &SummaryScheme<f64>) -> Result<AggregateSummary<f64>> {
    let z = data.target()?;
    Ok(match data.blocks() {
        Some(blocks) => summarize_blocks(z, &blocks, scheme)?,
        None => summarize_targets(z, scheme)?,
    })
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub summary: SummaryArgs,
    /// Summary JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Summary JSON produced by `aggregate` (or by hand).
    #[arg(long)]
    pub summary: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory: fit_state.json, beta.csv, imputed.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Test the aggregated fit under this summary JSON.
    #[arg(long, conflicts_with_all = ["bins", "edges"])]
    pub summary: Option<PathBuf>,
    /// Build the summary from the target column instead; without either,
    /// the fully observed fit is tested.
    #[command(flatten)]
    pub scheme: SummaryArgs,
    #[arg(long, default_value_t = 1000)]
    pub perms: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory: permtest.json, null_errors.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Dataset to sweep; when absent, data are simulated per seed.
    #[arg(long, requires = "target")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub block: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 5, 10, 25, 50])]
    pub bins: Vec<usize>,
    #[arg(long)]
    pub drop_extremes: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Number of repetitions; repetition i uses seed + i.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long)]
    pub coefficient_scale: Option<f64>,
    #[arg(long, value_enum, default_value_t = RelationshipArg::Linear)]
    pub relationship: RelationshipArg,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory: curve.csv, baseline.csv, curve_summary.csv, curve.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Dataset holding the true target column.
    #[command(flatten)]
    pub data: DataArgs,
    /// imputed.csv written by `fit`.
    #[arg(long)]
    pub imputed: PathBuf,
    /// Bin edges; default is equal-width bins spanning the true targets.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "bins"
    )]
    pub edges: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Counts CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Fit(a) => fit(a),
        Command::Permtest(a) => permtest(a),
        Command::Curve(a) => curve(a),
        Command::Hist(a) => hist(a),
    }
}

fn simulation_config(
    family: FamilyKind,
    seed: u64,
    n: usize,
    d: usize,
    coefficient_scale: Option<f64>,
    relationship: RelationshipArg,
) -> SimulationConfig {
    let mut config = SimulationConfig::new(family, seed)
        .with_size(n, d)
        .with_relationship(match relationship {
            RelationshipArg::Linear => Relationship::Linear,
            RelationshipArg::None => Relationship::None,
        });
    if let Some(s) = coefficient_scale {
        config.coefficient_scale = s;
    }
    config
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = simulation_config(
        a.family.into(),
        a.seed.seed,
        a.n,
        a.d,
        a.coefficient_scale,
        a.relationship,
    );
    config.covariate_scale = a.covariate_scale;
    let sim = simulate_glm::<f64>(&config)?;
    let data = Dataset {
        feature_names: (1..=a.d).map(|j| format!("x{j}")).collect(),
        x: sim.x.into_inner(),
        target_name: Some("y".into()),
        target: Some(sim.z),
        block_name: None,
        block_labels: None,
    };
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data)?;
    write_text(&a.out, std::str::from_utf8(&buf)?)?;
    if let Some(path) = &a.coefficients {
        write_json(path, &sim.coefficients.beta.to_vec())?;
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    if a.data.target.is_none() {
        bail!("aggregate needs --target");
    }
    let Some(scheme) = a.summary.scheme() else {
        bail!("aggregate needs --bins or --edges");
    };
    let data = a.data.load()?;
    write_json(&a.out, &summarize(&data, &scheme)?)
}

fn read_summary(path: &Path) -> Result<AggregateSummary<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing summary {}", path.display()))
}

#[derive(Serialize)]
struct FitStateJson<'a> {
    beta: &'a [f64],
    lambda: f64,
    iterations: usize,
    converged: bool,
    loss_trajectory: &'a [f64],
}

fn fit(a: FitArgs) -> Result<()> {
    let data = a.data.load()?;
    let family = a.model.family();
    let (x, names, opts) = a.model.prepare(&data, a.seed.seed)?;
    let summary = read_summary(&a.summary)?.validated(x.nrows(), &family)?;
    let state = alternate_fit(&x, &summary, &family, &opts)?;
    if !state.converged {
        eprintln!(
            "warning: stopped after {} iterations without meeting the tolerance",
            state.iterations
        );
    }
    if state.glm_failures > 0 {
        eprintln!(
            "warning: {} coefficient steps hit the Newton iteration budget",
            state.glm_failures
        );
    }
    if state.rank_deficient {
        eprintln!("warning: rank-deficient design; minimum-norm coefficients reported");
    }

    let beta = state.coefficients.beta.to_vec();
    write_json(
        &a.out.join("fit_state.json"),
        &FitStateJson {
            beta: &beta,
            lambda: state.coefficients.lambda,
            iterations: state.iterations,
            converged: state.converged,
            loss_trajectory: &state.loss_trajectory,
        },
    )?;
    let mut t = Table::new(&["feature", "beta"]);
    for (name, b) in names.iter().zip(&beta) {
        t.row(&[name.clone(), b.to_string()]);
    }
    t.save(&a.out.join("beta.csv"))?;
    let mut t = Table::new(&["row", "z_hat"]);
    for (i, z) in state.z_hat.iter().enumerate() {
        t.row(&[i.to_string(), z.to_string()]);
    }
    t.save(&a.out.join("imputed.csv"))
}

#[derive(Serialize)]
struct PermtestJson<'a> {
    observed_error: f64,
    p_value: f64,
    n_perms: usize,
    seed: u64,
    null_failures: usize,
    null_errors: &'a [f64],
}

fn permtest(a: PermtestArgs) -> Result<()> {
    if a.data.target.is_none() {
        bail!("permtest needs --target");
    }
    let data = a.data.load()?;
    let family = a.model.family();
    data.validate_for(&family)?;
    let (x, _, opts) = a.model.prepare(&data, a.seed.seed)?;
    let summary = match (&a.summary, a.scheme.scheme()) {
        (Some(path), _) => Some(read_summary(path)?.validated(x.nrows(), &family)?),
        (None, Some(scheme)) => Some(summarize(&data, &scheme)?),
        (None, None) => None,
    };
    let result = permutation_test(
        &x,
        data.target()?,
        summary.as_ref(),
        &family,
        &opts,
        a.perms,
        a.seed.seed,
    )?;
    write_json(
        &a.out.join("permtest.json"),
        &PermtestJson {
            observed_error: result.observed_error,
            p_value: result.p_value,
            n_perms: a.perms,
            seed: a.seed.seed,
            null_failures: result.null_failures,
            null_errors: &result.null_errors,
        },
    )?;
    let mut t = Table::new(&["replicate", "error"]);
    for (r, e) in result.null_errors.iter().enumerate() {
        t.row(&[r.to_string(), e.to_string()]);
    }
    t.save(&a.out.join("null_errors.csv"))?;
    println!(
        "observed error {}  p-value {}",
        result.observed_error, result.p_value
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveRun {
    seed: u64,
    result: aggglm::SweepResult<f64>,
}

#[derive(Serialize)]
struct CurveSummaryRow {
    bins: Option<usize>,
    median_train_error: f64,
    median_test_error: f64,
}

#[derive(Serialize)]
struct CurveJson {
    runs: Vec<CurveRun>,
    summary: Vec<CurveSummaryRow>,
}

fn curve(a: CurveArgs) -> Result<()> {
    let family = a.model.family();
    if a.seeds == 0 {
        bail!("--seeds must be >= 1");
    }
    let dataset = match &a.data {
        Some(path) => {
            let d = DataArgs {
                data: path.clone(),
                target: a.target.clone(),
                block: a.block.clone(),
                features: a.features.clone(),
            }
            .load()?;
            d.validate_for(&family)?;
            Some(d)
        }
        None => None,
    };

    let mut runs = Vec::new();
    for i in 0..a.seeds {
        let seed = a.seed.seed + i;
        let data = match &dataset {
            Some(d) => d.clone(),
            None => {
                let config = simulation_config(
                    family.kind(),
                    seed,
                    a.n,
                    a.d,
                    a.coefficient_scale,
                    a.relationship,
                );
                let sim = simulate_glm::<f64>(&config)?;
                Dataset {
                    feature_names: (1..=a.d).map(|j| format!("x{j}")).collect(),
                    x: sim.x.into_inner(),
                    target_name: Some("y".into()),
                    target: Some(sim.z),
                    block_name: None,
                    block_labels: None,
                }
            }
        };
        let (x, _, opts) = a.model.prepare(&data, seed)?;
        let mut config = SweepConfig::new(a.bins.clone(), a.folds, seed);
        config.drop_extremes = a.drop_extremes;
        config.blocks = data.blocks();
        let result = granularity_sweep(&x, data.target()?, &family, &config, &opts)?;
        runs.push(CurveRun { seed, result });
    }

    let mut records = Table::new(&[
        "seed",
        "bins",
        "fold",
        "train_error",
        "test_error",
        "iterations",
        "converged",
    ]);
    let mut baseline = Table::new(&["seed", "fold", "train_error", "test_error"]);
    for run in &runs {
        for r in &run.result.records {
            records.row(&[
                run.seed.to_string(),
                r.bins.to_string(),
                r.fold.to_string(),
                r.train_error.to_string(),
                r.test_error.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]);
        }
        for r in &run.result.baseline {
            baseline.row(&[
                run.seed.to_string(),
                r.fold.to_string(),
                r.train_error.to_string(),
                r.test_error.to_string(),
            ]);
        }
    }

    // Medians over seeds of the fold-averaged errors.
    let mut summary = Vec::new();
    for &b in &a.bins {
        let (mut tr, mut te): (Vec<f64>, Vec<f64>) =
            runs.iter().filter_map(|r| r.result.mean_errors(b)).unzip();
        summary.push(CurveSummaryRow {
            bins: Some(b),
            median_train_error: median(&mut tr),
            median_test_error: median(&mut te),
        });
    }
    let (mut tr, mut te): (Vec<f64>, Vec<f64>) =
        runs.iter().map(|r| r.result.mean_baseline()).unzip();
    summary.push(CurveSummaryRow {
        bins: None,
        median_train_error: median(&mut tr),
        median_test_error: median(&mut te),
    });

    let mut table = Table::new(&["bins", "median_train_error", "median_test_error"]);
    for row in &summary {
        let label = row.bins.map_or("full".to_string(), |b| b.to_string());
        println!(
            "{label:>6}  train {:<22} test {}",
            row.median_train_error, row.median_test_error
        );
        table.row(&[
            label,
            row.median_train_error.to_string(),
            row.median_test_error.to_string(),
        ]);
    }
    records.save(&a.out.join("curve.csv"))?;
    baseline.save(&a.out.join("baseline.csv"))?;
    table.save(&a.out.join("curve_summary.csv"))?;
    write_json(&a.out.join("curve.json"), &CurveJson { runs, summary })
}

fn hist(a: HistArgs) -> Result<()> {
    if a.data.target.is_none() {
        bail!("hist needs --target");
    }
    let data = a.data.load()?;
    let truth = data.target()?;
    let imputed = read_dataset(
        &a.imputed,
        &DatasetOptions {
            target: Some("z_hat".into()),
            block: None,
            features: Some(vec!["row".into()]),
        },
    )
    .with_context(|| format!("reading {}", a.imputed.display()))?;
    let recovered = imputed.target()?;
    if recovered.len() != truth.len() {
        bail!(
            "imputed file has {} rows but the dataset has {}",
            recovered.len(),
            truth.len()
        );
    }
    let edges = match &a.edges {
        Some(e) => e.clone(),
        None => equal_width_edges(truth, a.bins)?,
    };
    let t = recovered_histogram(truth, &edges)?;
    let r = recovered_histogram(recovered, &edges)?;

    let mut table = Table::new(&["bin", "lower", "upper", "true_count", "recovered_count"]);
    table.row(&[
        "below".into(),
        "-inf".into(),
        edges[0].to_string(),
        t.below.to_string(),
        r.below.to_string(),
    ]);
    for (i, w) in edges.windows(2).enumerate() {
        table.row(&[
            i.to_string(),
            w[0].to_string(),
            w[1].to_string(),
            t.counts[i].to_string(),
            r.counts[i].to_string(),
        ]);
    }
    table.row(&[
        "above".into(),
        edges[edges.len() - 1].to_string(),
        "inf".into(),
        t.above.to_string(),
        r.above.to_string(),
    ]);
    table.save(&a.out)
}

/// `bins` equal-width bins over `[min, max]`; the last edge is nudged up so
/// the maximum falls inside the final half-open bin.
fn equal_width_edges(values: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        bail!("--bins must be >= 1");
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
    edges[bins] = edges[bins].max(hi).next_up();
    Ok(edges)
}
