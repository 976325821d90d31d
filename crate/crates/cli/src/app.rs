//! Argument parsing and the subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lvmrs::concentration::{ConcentrationMethod, RiskSplit};
use lvmrs::engine::{lvm_rs_certify_scores, temperature_grid, GridConfig, TemperatureScale};
use lvmrs::lipschitz::{min_form_terms, optimal_sigma, smoothed_lipschitz, BoundCase, BoundInputs};
use lvmrs::models::{LinearModel, ModelKind, SyntheticModel};
use lvmrs::noise::NoiseSeed;
use lvmrs::{accuracy_curve, certify_batch, exec, sample_scores, MapKind, ScoreOracle};

use crate::error::{CliError, CliResult};
use crate::inputs::{read_labels, read_matrix};
use crate::record::{read_records, write_records, CertificateRecord};
use crate::scorefile::{read_scores, write_scores, ScoreBlock, ScoreFormat, ScoreSet};

/// Noise stream used by `sample`, distinct from the ones `certify` draws.
const STREAM_EXPORT: u64 = 0x4558_504f_5254_0000;

#[derive(Debug, Parser)]
#[command(
    name = "lvmrs",
    version,
    about = "Certified l2 radii for randomized smoothing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a simplex map on validation noise and certify each input.
    Certify(CertifyArgs),
    /// Lipschitz bounds of a smoothed classifier.
    Bounds(BoundsArgs),
    /// Certified accuracy as a function of the perturbation level.
    Curve(CurveArgs),
    /// Sample noisy scores of a synthetic model into a score file.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in classifier: worst_case_hbar, threshold_1d, linear_multiclass, constant.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Lipschitz constant of worst_case_hbar.
    #[arg(long, default_value_t = 1.0)]
    pub model_lipschitz: f64,
    /// Output range r of worst_case_hbar.
    #[arg(long, default_value_t = 1.0)]
    pub model_mass: f64,
    /// Value of the constant model.
    #[arg(long, default_value_t = 1.0)]
    pub value: f64,
    /// Weight matrix of linear_multiclass, one class per CSV row.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Bias of linear_multiclass, comma separated (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bias: Option<Vec<f64>>,
    /// Input vectors, one per CSV row.
    #[arg(long, conflicts_with = "x")]
    pub inputs: Option<PathBuf>,
    /// A single input vector, comma separated (default: the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Pre-sampled score file (binary or CSV).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Noise level. Optional for binary score files, which record it.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub alpha: f64,
    /// Validation samples per input used to pick the map.
    #[arg(long)]
    pub n0: usize,
    /// Certification samples per input. For score files, defaults to the rows left after n0.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hardmax,softmax,sparsemax"
    )]
    pub maps: Vec<MapKind>,
    #[arg(long, default_value_t = 0.01)]
    pub t_lower: f64,
    #[arg(long, default_value_t = 50.0)]
    pub t_upper: f64,
    #[arg(long, default_value_t = 50)]
    pub t_count: usize,
    /// log or linear.
    #[arg(long, default_value = "log")]
    pub t_scale: TemperatureScale,
    /// Simplex mass r.
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// bernstein, hoeffding or clopper-pearson (hardmax only).
    #[arg(long, default_value = "bernstein")]
    pub method: ConcentrationMethod,
    /// paper-literal (alpha per class) or bonferroni (alpha / c per class).
    #[arg(long, default_value = "paper-literal")]
    pub risk_split: RiskSplit,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class labels, one per input, copied into the records.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Lipschitz constant of the base classifier composed with the map.
    #[arg(long)]
    pub lipschitz: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    #[arg(long, conflicts_with = "optimal", required_unless_present = "optimal")]
    pub sigma: Option<f64>,
    /// Evaluate at the noise level that maximizes the gain over the min form.
    #[arg(long)]
    pub optimal: bool,
    /// elementwise or vector.
    #[arg(long, default_value = "elementwise")]
    pub case: BoundCase,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Certificate records (JSON Lines).
    #[arg(long)]
    pub certificates: PathBuf,
    /// Labels, one per record. Without it every record must carry a label.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Perturbation levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub sigma: f64,
    /// Rows per input.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// binary or csv.
    #[arg(long, default_value = "binary")]
    pub format: ScoreFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Certify(a) => with_jobs(a.jobs, || cmd_certify(&a)),
        Command::Bounds(a) => cmd_bounds(&a, &mut std::io::stdout().lock()),
        Command::Curve(a) => cmd_curve(&a),
        Command::Sample(a) => with_jobs(a.jobs, || cmd_sample(&a)),
    }
}

fn with_jobs<T: Send>(
    jobs: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match jobs {
        None => f(),
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {j} worker threads: {e}")))?
            .install(f),
        #[cfg(not(feature = "parallel"))]
        Some(_) => f(),
    }
}

fn build_model(a: &ModelArgs, kind: ModelKind) -> CliResult<SyntheticModel> {
    Ok(match kind {
        ModelKind::WorstCaseHbar => {
            SyntheticModel::worst_case_hbar(a.model_lipschitz, a.model_mass)?
        }
        ModelKind::Threshold1d => SyntheticModel::Threshold1d,
        ModelKind::Constant => {
            if !a.value.is_finite() {
                return Err(CliError::Usage(format!(
                    "--value {} is not finite",
                    a.value
                )));
            }
            SyntheticModel::Constant { value: a.value }
        }
        ModelKind::LinearMulticlass => {
            let path = a
                .weights
                .as_ref()
                .ok_or_else(|| CliError::Usage("linear_multiclass needs --weights".into()))?;
            let weights = read_matrix(path)?;
            let bias = a.bias.clone().unwrap_or_else(|| vec![0.0; weights.len()]);
            if bias.len() != weights.len() {
                return Err(CliError::Data(format!(
                    "--bias has {} entries, expected {} (one per weight row)",
                    bias.len(),
                    weights.len()
                )));
            }
            SyntheticModel::LinearMulticlass(
                LinearModel::new(weights, bias).map_err(|e| CliError::Data(e.to_string()))?,
            )
        }
    })
}

fn model_inputs(a: &ModelArgs, model: &SyntheticModel) -> CliResult<Vec<Vec<f64>>> {
    let dim = model.input_dim();
    let inputs = match (&a.inputs, &a.x) {
        (Some(path), _) => read_matrix(path)?,
        (None, Some(x)) => vec![x.clone()],
        (None, None) => vec![vec![0.0; dim.unwrap_or(1)]],
    };
    for (i, x) in inputs.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data(format!("input {i} is not finite")));
        }
        if let Some(d) = dim {
            if x.len() != d {
                return Err(CliError::Data(format!(
                    "input {i} has {} values, expected {d} for the model",
                    x.len()
                )));
            }
        }
    }
    Ok(inputs)
}

fn load_labels(path: Option<&Path>, count: usize) -> CliResult<Vec<Option<usize>>> {
    match path {
        None => Ok(vec![None; count]),
        Some(p) => {
            let labels = read_labels(p)?;
            if labels.len() != count {
                return Err(CliError::Data(format!(
                    "{}: {} labels, expected {count} (one per input)",
                    p.display(),
                    labels.len()
                )));
            }
            Ok(labels.into_iter().map(Some).collect())
        }
    }
}

fn grid_config(a: &CertifyArgs, sigma: f64, n0: usize, n: usize) -> CliResult<GridConfig> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha {} must lie in (0, 1)",
            a.alpha
        )));
    }
    let cfg = GridConfig {
        temperatures: temperature_grid(a.t_lower, a.t_upper, a.t_count, a.t_scale)?,
        map_kinds: a.maps.clone(),
        mass: a.mass,
        n0,
        n,
        alpha: a.alpha,
        sigma,
        seed: a.seed,
        method: a.method,
        risk_split: a.risk_split,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn positive_sigma(sigma: f64) -> CliResult<f64> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(CliError::Usage(format!("--sigma {sigma} must be positive")))
    }
}

/// Certifies every input and returns the records in input order.
pub fn certify_records(a: &CertifyArgs) -> CliResult<Vec<CertificateRecord>> {
    if let Some(path) = &a.scores {
        let set = read_scores(path)?;
        let sigma = match (set.sigma, a.sigma) {
            (Some(file), Some(flag)) if file != flag => {
                return Err(CliError::Usage(format!(
                    "--sigma {flag} conflicts with sigma {file} recorded in {}",
                    path.display()
                )))
            }
            (Some(s), _) | (None, Some(s)) => positive_sigma(s)?,
            (None, None) => {
                return Err(CliError::Usage(format!(
                    "{} records no sigma, pass --sigma",
                    path.display()
                )))
            }
        };
        let rows = set.rows_per_input;
        if a.n0 >= rows {
            return Err(CliError::Data(format!(
                "--n0 {} leaves no certification rows: the file has {rows} rows per input",
                a.n0
            )));
        }
        let n = rows - a.n0;
        if let Some(flag) = a.n {
            if flag != n {
                return Err(CliError::Data(format!(
                    "--n {flag} does not match the file: expected {n} rows after --n0 {}, found {rows} in total",
                    a.n0
                )));
            }
        }
        let grid = grid_config(a, sigma, a.n0, n)?;
        let labels = load_labels(a.labels.as_deref(), set.blocks.len())?;
        let certs = exec::try_map_range(set.blocks.len(), |i| {
            let ScoreBlock { scores, .. } = &set.blocks[i];
            let validation = scores.slice_rows(0, a.n0)?;
            let certification = scores.slice_rows(a.n0, rows)?;
            lvm_rs_certify_scores(&validation, &certification, &grid).map(|o| o.certificate)
        })?;
        Ok(set
            .blocks
            .iter()
            .zip(certs)
            .zip(labels)
            .map(|((b, c), y)| CertificateRecord::new(b.input_id, y, &c, a.seed))
            .collect())
    } else {
        let kind = a.model.model.expect("clap requires --scores or --model");
        let model = build_model(&a.model, kind)?;
        let sigma = positive_sigma(
            a.sigma
                .ok_or_else(|| CliError::Usage("--model needs --sigma".into()))?,
        )?;
        let n =
            a.n.ok_or_else(|| CliError::Usage("--model needs --n".into()))?;
        let grid = grid_config(a, sigma, a.n0, n)?;
        let inputs = model_inputs(&a.model, &model)?;
        let labels = load_labels(a.labels.as_deref(), inputs.len())?;
        if let Some(k) = labels.iter().flatten().find(|&&k| k >= model.num_classes()) {
            return Err(CliError::Data(format!(
                "label {k} out of range for {} classes",
                model.num_classes()
            )));
        }
        let certs = certify_batch(&model, &inputs, &grid)?;
        Ok(certs
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (c, y))| CertificateRecord::new(i as u64, y, c, a.seed))
            .collect())
    }
}

fn open_out(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::io(p, e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn cmd_certify(a: &CertifyArgs) -> CliResult<()> {
    let records = certify_records(a)?;
    let w = open_out(a.out.as_deref())?;
    write_records(&records, w).map_err(|e| CliError::Data(format!("writing records: {e}")))
}

/// Rows of the `bounds` table.
pub fn bounds_table(a: &BoundsArgs) -> CliResult<Vec<(&'static str, String)>> {
    let positive = |v: f64, flag: &str| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::Usage(format!("--{flag} {v} must be positive")))
        }
    };
    let lipschitz = positive(a.lipschitz, "lipschitz")?;
    let mass = positive(a.mass, "mass")?;
    let sigma_star = optimal_sigma(lipschitz, mass, a.case)?;
    let sigma = match a.sigma {
        Some(s) => positive(s, "sigma")?,
        None => sigma_star,
    };
    let inp = BoundInputs::new(lipschitz, sigma, mass)?;
    let bound = smoothed_lipschitz(&inp, a.case)?;
    let (smoothing, base) = min_form_terms(&inp, a.case)?;
    Ok(vec![
        ("case", a.case.to_string()),
        ("lipschitz", lipschitz.to_string()),
        ("mass", mass.to_string()),
        ("sigma", sigma.to_string()),
        ("bound", bound.to_string()),
        ("bound_over_lipschitz", (bound / lipschitz).to_string()),
        ("min_form_smoothing", smoothing.to_string()),
        ("min_form_base", base.to_string()),
        ("min_form", smoothing.min(base).to_string()),
        ("optimal_sigma", sigma_star.to_string()),
    ])
}

fn cmd_bounds(a: &BoundsArgs, w: &mut dyn Write) -> CliResult<()> {
    for (k, v) in bounds_table(a)? {
        writeln!(w, "{k:<22}{v}").map_err(|e| CliError::Data(format!("writing table: {e}")))?;
    }
    Ok(())
}

/// `(eps, certified accuracy)` rows for a record file.
pub fn curve_rows(a: &CurveArgs) -> CliResult<Vec<(f64, f64)>> {
    if let Some(e) = a.eps.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(CliError::Usage(format!(
            "--eps value {e} must be finite and nonnegative"
        )));
    }
    let records = read_records(&a.certificates)?;
    let labels: Vec<usize> = match &a.labels {
        Some(p) => {
            let labels = read_labels(p)?;
            if labels.len() != records.len() {
                return Err(CliError::Data(format!(
                    "{}: {} labels, expected {} (one per record)",
                    p.display(),
                    labels.len(),
                    records.len()
                )));
            }
            labels
        }
        None => records
            .iter()
            .map(|r| {
                r.label.ok_or_else(|| {
                    CliError::Usage(format!(
                        "record for input {} has no label, pass --labels",
                        r.input_id
                    ))
                })
            })
            .collect::<CliResult<_>>()?,
    };
    let outcomes: Vec<_> = records.iter().map(|r| (r.prediction, r.radius)).collect();
    Ok(accuracy_curve(&outcomes, &labels, &a.eps)?)
}

fn cmd_curve(a: &CurveArgs) -> CliResult<()> {
    let rows = curve_rows(a)?;
    let mut wr = csv::Writer::from_writer(open_out(a.out.as_deref())?);
    let fail = |e: csv::Error| CliError::Data(format!("writing curve: {e}"));
    wr.write_record(["epsilon", "certified_accuracy"])
        .map_err(fail)?;
    for (eps, acc) in rows {
        wr.write_record([eps.to_string(), acc.to_string()])
            .map_err(fail)?;
    }
    wr.flush()
        .map_err(|e| CliError::Data(format!("writing curve: {e}")))
}

fn cmd_sample(a: &SampleArgs) -> CliResult<()> {
    let kind = a
        .model
        .model
        .ok_or_else(|| CliError::Usage("sample needs --model".into()))?;
    let model = build_model(&a.model, kind)?;
    let sigma = positive_sigma(a.sigma)?;
    if a.n < 2 {
        return Err(CliError::Usage(format!("--n {} is below 2", a.n)));
    }
    let inputs = model_inputs(&a.model, &model)?;
    let blocks = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let seed = NoiseSeed::new(a.seed, i as u64, STREAM_EXPORT);
            let scores = sample_scores(&model, x, a.n, sigma, seed)?;
            Ok(ScoreBlock {
                input_id: i as u64,
                scores,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let set = ScoreSet::new(Some(sigma), blocks)?;
    write_scores(&set, &a.out, a.format)
}
