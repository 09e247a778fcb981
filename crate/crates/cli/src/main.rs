//! `dyncov` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
//! Machine-readable output (JSON or CSV) goes to stdout, messages to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dyncov::diagnostics::{diagnose_batch, export_histograms, write_diagnostics_to};
use dyncov::feature_io::{read_labels, write_features, FeatureSet, Format};
use dyncov::gaussian_stats::{default_residual_dim, DEFAULT_EPS_SCALE};
use dyncov::pipeline::{basis_for, run_ablation, run_sweep, validate_grid};
use dyncov::scoring::{read_scores, write_scores_csv_to, write_scores_fmat};
use dyncov::stats_archive::{read_stats_archive, write_stats_archive};
use dyncov::synth::{generate, SynthSpec};
use dyncov::{
    evaluate, fit_stats, l2_normalize, read_features, residual_basis, score_batch,
    CovarianceSource, Error, GaussianStats, Method, ResidualBasis, ScoreConfig,
};

#[derive(Parser)]
#[command(name = "dyncov", version, about = "Dynamic covariance OOD scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit Gaussian statistics and a residual basis on labeled training features.
    Fit(FitArgs),
    /// Score test features against fitted statistics.
    Score(ScoreArgs),
    /// Compute AUROC and FPR95 from ID and OOD score files.
    Eval(EvalArgs),
    /// Evaluate over a grid of residual dimensions.
    Sweep(SweepArgs),
    /// Per-sample p/q/s and residual-norm diagnostics.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic ID/OOD feature scenario.
    Synth(SynthArgs),
    /// Run the five-configuration component ablation.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Fmat,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Fmat => Format::Binary,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Within,
    Full,
}

impl From<SourceArg> for CovarianceSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Within => CovarianceSource::Within,
            SourceArg::Full => CovarianceSource::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dcc,
    Maha,
    Euclid,
    #[value(name = "euclid-dyn")]
    EuclidDyn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dcc => Method::Dcc,
            MethodArg::Maha => Method::MahalanobisStatic,
            MethodArg::Euclid => Method::EuclideanStatic,
            MethodArg::EuclidDyn => Method::EuclideanDynamic,
        }
    }
}

/// Where fitted statistics come from: an archive, or a fit on the spot.
#[derive(Args)]
struct StatsSource {
    /// Fitted statistics archive (from `fit`).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Training features, fitted on the fly when --stats is absent.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Label file for --train (FLAB or one integer per line).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long = "eps-scale", default_value_t = DEFAULT_EPS_SCALE)]
    eps_scale: f64,
}

#[derive(Args)]
struct ScoreFlags {
    #[arg(long, value_enum, default_value = "dcc")]
    method: MethodArg,
    /// Residual dimension k.
    #[arg(long)]
    k: Option<usize>,
    /// Disable the per-sample rank-1 adjustment (turns dcc into maha).
    #[arg(long = "no-dme")]
    no_dme: bool,
    /// Adjust with the whole feature instead of its residual projection.
    #[arg(long = "no-rsp")]
    no_rsp: bool,
    /// Use the full covariance instead of the within-class covariance.
    #[arg(long = "no-dcm")]
    no_dcm: bool,
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl ScoreFlags {
    fn config(&self, dim: usize, archived: Option<&ResidualBasis>) -> ScoreConfig {
        let mut method: Method = self.method.into();
        if self.no_dme {
            method = match method {
                Method::Dcc => Method::MahalanobisStatic,
                Method::EuclideanDynamic => Method::EuclideanStatic,
                m => m,
            };
        }
        let mut config = ScoreConfig::for_method(method, None);
        config.rsp = config.dme && !self.no_rsp;
        config.dcm = !self.no_dcm;
        config.normalize = !self.no_normalize;
        let source = config.source();
        config.residual_dim = Some(self.k.unwrap_or_else(|| {
            archived
                .filter(|b| b.source == source)
                .map_or_else(|| default_residual_dim(dim), ResidualBasis::k)
        }));
        config
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output statistics archive.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "eps-scale", default_value_t = DEFAULT_EPS_SCALE)]
    eps_scale: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "within")]
    source: SourceArg,
    #[arg(long = "no-normalize")]
    no_normalize: bool,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    stats: StatsSource,
    #[arg(long)]
    test: PathBuf,
    /// Output file; CSV goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[command(flatten)]
    flags: ScoreFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// ID score file.
    #[arg(long)]
    test: PathBuf,
    /// OOD score file.
    #[arg(long)]
    ood: PathBuf,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a joint ID/OOD score histogram CSV here.
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    stats: StatsSource,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    ood: PathBuf,
    /// Comma-separated residual dimensions, e.g. "4,8,16".
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    flags: ScoreFlags,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    stats: StatsSource,
    #[arg(long)]
    test: PathBuf,
    /// Optional OOD features, diagnosed alongside the test set.
    #[arg(long)]
    ood: Option<PathBuf>,
    /// Diagnostics CSV for --test (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diagnostics CSV for --ood.
    #[arg(long = "ood-out")]
    ood_out: Option<PathBuf>,
    /// Residual-norm histogram CSV (labels ID and, with --ood, OOD).
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[command(flatten)]
    flags: ScoreFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "fmat")]
    format: FormatArg,
    /// JSON object with any SynthSpec fields; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-classes")]
    n_classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "n-per-class")]
    n_per_class: Option<usize>,
    #[arg(long = "within-sigma")]
    within_sigma: Option<f64>,
    #[arg(long = "n-ood")]
    n_ood: Option<usize>,
    #[arg(long = "ood-shift", allow_hyphen_values = true)]
    ood_shift: Option<f64>,
    #[arg(long = "outlier-fraction")]
    outlier_fraction: Option<f64>,
    #[arg(long = "outlier-magnitude")]
    outlier_magnitude: Option<f64>,
    #[arg(long = "outlier-direction-seed")]
    outlier_direction_seed: Option<u64>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    stats: StatsSource,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    ood: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "no-normalize")]
    no_normalize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dyncov: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => with_threads(a.flags.threads, || cmd_score(&a)),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => with_threads(a.flags.threads, || cmd_sweep(&a)),
        Command::Diagnose(a) => with_threads(a.flags.threads, || cmd_diagnose(&a)),
        Command::Synth(a) => cmd_synth(a),
        Command::Ablate(a) => with_threads(a.threads, || cmd_ablate(&a)),
    }
}

fn with_threads(threads: usize, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn read_any(path: &Path) -> CliResult<FeatureSet> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{}: no such file", path.display())));
    }
    Ok(read_features(path, Format::detect(path)?)?)
}

fn read_labeled(train: &Path, labels: Option<&Path>) -> CliResult<FeatureSet> {
    let set = read_any(train)?;
    match labels {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "{}: labels file does not exist",
                    path.display()
                )));
            }
            Ok(set.with_labels(read_labels(path)?)?)
        }
        None => Ok(set),
    }
}

fn load_stats(
    src: &StatsSource,
    normalize: bool,
) -> CliResult<(GaussianStats, Option<ResidualBasis>)> {
    match (&src.stats, &src.train) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::Usage(format!("{}: no such file", path.display())));
            }
            Ok(read_stats_archive(path)?)
        }
        (None, Some(train)) => {
            let mut set = read_labeled(train, src.labels.as_deref())?;
            if normalize {
                set = l2_normalize(&set)?;
            }
            Ok((fit_stats(&set, src.eps_scale)?, None))
        }
        (None, None) => Err(CliError::Usage(
            "either --stats or --train is required".into(),
        )),
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish_output(mut w: Box<dyn Write>, path: Option<&Path>) -> CliResult {
    w.flush()
        .map_err(|e| io_err(path.unwrap_or(Path::new("<stdout>")), e))
}

fn g(x: f64) -> serde_json::Value {
    json!(x)
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let mut train = read_labeled(&a.train, a.labels.as_deref())?;
    if train.labels().is_none() {
        return Err(CliError::Usage(format!(
            "{}: training features have no labels (pass --labels)",
            a.train.display()
        )));
    }
    if !a.no_normalize {
        train = l2_normalize(&train)?;
    }
    let d = train.dim();
    let k = a.k.unwrap_or_else(|| default_residual_dim(d));
    validate_grid(&[k], d)?;
    let stats = fit_stats(&train, a.eps_scale)?;
    let source: CovarianceSource = a.source.into();
    let basis = residual_basis(&stats, k, source)?;
    write_stats_archive(&a.out, &stats, Some(&basis))?;

    let spectrum = stats.covariance(source).symmetric_eigenvalues();
    let summary = json!({
        "n": train.n_samples(),
        "d": d,
        "n_classes": stats.n_classes(),
        "reg_epsilon": g(stats.reg_epsilon),
        "k": k,
        "source": source.to_string(),
        "eigenvalue_min": g(spectrum.min()),
        "eigenvalue_max": g(spectrum.max()),
    });
    println!("{summary}");
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> CliResult {
    let normalize = !a.flags.no_normalize;
    let (stats, archived) = load_stats(&a.stats, normalize)?;
    let config = a.flags.config(stats.dim(), archived.as_ref());
    let test = read_any(&a.test)?;
    let basis = basis_for(&stats, &config, archived.as_ref())?;
    let batch = score_batch(&test, &stats, basis.as_ref(), &config)?;

    match (FormatArg::into(a.format), &a.out) {
        (Format::Binary, Some(path)) => write_scores_fmat(&batch, path)?,
        (Format::Binary, None) => {
            return Err(CliError::Usage("--format fmat needs --out".into()));
        }
        (Format::Csv, out) => {
            let mut w = output(out.as_deref())?;
            write_scores_csv_to(&batch, &mut w)
                .map_err(|e| io_err(out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
            finish_output(w, out.as_deref())?;
        }
    }
    if a.out.is_some() {
        let summary = json!({
            "n": batch.len(),
            "method": config.method.to_string(),
            "dme": config.dme,
            "rsp": config.rsp,
            "dcm": config.dcm,
            "k": if config.rsp { config.residual_dim } else { None },
            "clamp_count": batch.clamp_count,
            "singular_count": batch.singular_count,
        });
        println!("{summary}");
    }
    if batch.clamp_count + batch.singular_count > 0 {
        eprintln!(
            "dyncov: {} samples clamped at zero, {} hit the singular-adjustment fallback",
            batch.clamp_count, batch.singular_count
        );
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    for p in [&a.test, &a.ood] {
        if !p.exists() {
            return Err(CliError::Usage(format!("{}: no such file", p.display())));
        }
    }
    let id = read_scores(&a.test)?;
    let ood = read_scores(&a.ood)?;
    if id.is_empty() || ood.is_empty() {
        return Err(CliError::Usage("score files must not be empty".into()));
    }
    let report = evaluate(&id, &ood)?;
    let text = report.to_json();
    if let Some(path) = &a.out {
        std::fs::write(path, format!("{text}\n")).map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &a.hist {
        export_histograms(&[("ID", &id), ("OOD", &ood)], a.bins, path)?;
    }
    println!("{text}");
    Ok(())
}

fn parse_grid(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad grid value `{s}`")))
        })
        .collect()
}

fn cmd_sweep(a: &SweepArgs) -> CliResult {
    let grid = parse_grid(&a.grid)?;
    let normalize = !a.flags.no_normalize;
    let (stats, archived) = load_stats(&a.stats, normalize)?;
    validate_grid(&grid, stats.dim())?;
    let test = read_any(&a.test)?;
    let ood = read_any(&a.ood)?;
    let config = a.flags.config(stats.dim(), archived.as_ref());
    let rows = run_sweep(&stats, &test, &ood, &config, &grid)?;

    let mut w = output(a.out.as_deref())?;
    let write = |w: &mut Box<dyn Write>| -> io::Result<()> {
        writeln!(w, "k,auroc,fpr95")?;
        for row in &rows {
            writeln!(
                w,
                "{},{},{}",
                row.k,
                dyncov::feature_io::fmt_g17(row.report.auroc),
                dyncov::feature_io::fmt_g17(row.report.fpr95)
            )?;
        }
        Ok(())
    };
    write(&mut w).map_err(|e| io_err(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    finish_output(w, a.out.as_deref())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cmd_diagnose(a: &DiagnoseArgs) -> CliResult {
    let normalize = !a.flags.no_normalize;
    let (stats, archived) = load_stats(&a.stats, normalize)?;
    let mut config = a.flags.config(stats.dim(), archived.as_ref());
    if !config.rsp {
        return Err(CliError::Usage(
            "diagnose needs the residual projection (drop --no-rsp)".into(),
        ));
    }
    config.method = Method::Dcc;
    let basis = basis_for(&stats, &config, archived.as_ref())?.expect("rsp config has a basis");

    let test = read_any(&a.test)?;
    let id_diag = diagnose_batch(&test, &stats, &basis, &config)?;
    let mut w = output(a.out.as_deref())?;
    write_diagnostics_to(&id_diag, &mut w)
        .map_err(|e| io_err(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    finish_output(w, a.out.as_deref())?;

    let ood_diag = match &a.ood {
        Some(path) => {
            let ood = read_any(path)?;
            let diag = diagnose_batch(&ood, &stats, &basis, &config)?;
            if let Some(out) = &a.ood_out {
                let mut w = output(Some(out))?;
                write_diagnostics_to(&diag, &mut w).map_err(|e| io_err(out, e))?;
                finish_output(w, Some(out))?;
            }
            Some(diag)
        }
        None => None,
    };

    if let Some(path) = &a.hist {
        let id_norms: Vec<f64> = id_diag.iter().map(|d| d.residual_norm).collect();
        let ood_norms: Vec<f64> = ood_diag.iter().flatten().map(|d| d.residual_norm).collect();
        let mut labeled: Vec<(&str, &[f64])> = vec![("ID", &id_norms)];
        if ood_diag.is_some() {
            labeled.push(("OOD", &ood_norms));
        }
        export_histograms(&labeled, a.bins, path)?;
    }

    if a.out.is_some() {
        let summarize = |diags: &[dyncov::diagnostics::SampleDiagnostics]| {
            let mut p: Vec<f64> = diags.iter().map(|d| d.p).collect();
            let mut q: Vec<f64> = diags.iter().map(|d| d.q).collect();
            let mut s: Vec<f64> = diags.iter().map(|d| d.s).collect();
            let mut norm: Vec<f64> = diags.iter().map(|d| d.residual_norm).collect();
            json!({
                "n": diags.len(),
                "median_p": g(median(&mut p)),
                "median_q": g(median(&mut q)),
                "median_s": g(median(&mut s)),
                "median_residual_norm": g(median(&mut norm)),
                "condition_holds": diags.iter().filter(|d| d.condition_holds).count(),
                "clamped": diags.iter().filter(|d| d.clamped).count(),
                "class_disagreements": diags.iter().filter(|d| d.chosen_class != d.adjusted_class).count(),
            })
        };
        let mut summary = json!({ "k": basis.k(), "test": summarize(&id_diag) });
        if let Some(diag) = &ood_diag {
            summary["ood"] = summarize(diag);
        }
        println!("{summary}");
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str::<SynthSpec>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
        if a.outlier_direction_seed.is_none() && a.spec.is_none() {
            spec.outlier_direction_seed = v;
        }
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { spec.$field = v; } )* };
    }
    set!(
        n_classes,
        dim,
        n_per_class,
        within_sigma,
        n_ood,
        ood_shift,
        outlier_fraction,
        outlier_magnitude,
        outlier_direction_seed
    );

    let data = generate(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let format: Format = a.format.into();
    let ext = match format {
        Format::Binary => "fmat",
        Format::Csv => "csv",
    };
    for (name, set) in [
        ("train", &data.train),
        ("id_test", &data.id_test),
        ("ood_test", &data.ood_test),
    ] {
        write_features(set, &a.out.join(format!("{name}.{ext}")), format)?;
    }
    let spec_json = serde_json::to_string(&spec).expect("spec serializes");
    std::fs::write(a.out.join("spec.json"), &spec_json).map_err(|e| io_err(&a.out, e))?;
    println!("{spec_json}");
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> CliResult {
    let normalize = !a.no_normalize;
    let (stats, archived) = load_stats(&a.stats, normalize)?;
    let k =
        a.k.or_else(|| archived.as_ref().map(ResidualBasis::k))
            .unwrap_or_else(|| default_residual_dim(stats.dim()));
    let test = read_any(&a.test)?;
    let ood = read_any(&a.ood)?;
    let rows = run_ablation(&stats, &test, &ood, k, normalize)?;

    let mut w = output(a.out.as_deref())?;
    let write = |w: &mut Box<dyn Write>| -> io::Result<()> {
        writeln!(w, "row,dme,rsp,dcm,auroc,fpr95")?;
        for row in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.name,
                u8::from(row.config.dme),
                u8::from(row.config.rsp),
                u8::from(row.config.dcm),
                dyncov::feature_io::fmt_g17(row.report.auroc),
                dyncov::feature_io::fmt_g17(row.report.fpr95)
            )?;
        }
        Ok(())
    };
    write(&mut w).map_err(|e| io_err(a.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    finish_output(w, a.out.as_deref())
}
