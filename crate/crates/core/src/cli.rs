//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad flags or scenario, 3 data error, 4 numeric
//! failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::codes::{cost_table, MicCostParams};
use crate::dataio;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{format_rows, format_summary, run_suite, summarize, SuiteConfig};
use crate::model::{Scheme, TransferSetting};
use crate::replay::recompute_tdl;
use crate::select::{select, SelectOptions};
use crate::synth::{generate, with_contiguous_classes, ScenarioKind, ScenarioSpec};
use crate::transfer::{build_prior, PriorOptions};

#[derive(Debug, Parser)]
#[command(name = "mdl-select", version, about = "Description-length feature selection")]
pub struct Cli {
    /// Worker threads for candidate scoring and replicates (output does not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic scenario and write x.csv, y.csv and truth.csv.
    Generate(GenerateArgs),
    /// Run a selection scheme and write the model ledger.
    Select(SelectArgs),
    /// Count selections of training models into a transfer prior.
    BuildPrior(BuildPriorArgs),
    /// Cross-validate schemes on synthetic scenarios.
    Eval(EvalArgs),
    /// Print per-feature model costs of the three multi-task codes.
    Costs(CostsArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub h: usize,
    #[arg(long = "m-star", default_value_t = 4)]
    pub m_star: usize,
    #[arg(long = "noise-sd", default_value_t = 0.1f64.sqrt())]
    pub noise_sd: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "partial")]
    pub scenario: String,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub dims: ScenarioArgs,
    /// Also write a class map of this many contiguous classes.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub scheme: String,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub classmap: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Transfer setting: 1 priors on classes and features, 2 features only.
    #[arg(long)]
    pub setting: Option<u8>,
    #[arg(long = "top-t", default_value_t = 75)]
    pub top_t: usize,
    #[arg(long = "l-theta", default_value_t = 2.0)]
    pub l_theta: f64,
    #[arg(long = "extra-steps")]
    pub extra_steps: Option<usize>,
    #[arg(long = "max-features")]
    pub max_features: Option<usize>,
    /// Use only this response column.
    #[arg(long)]
    pub task: Option<usize>,
    /// Shuffle the streamwise feature order with this seed.
    #[arg(long = "order-seed")]
    pub order_seed: Option<u64>,
    /// Streamwise pass for transfer-tpc.
    #[arg(long)]
    pub stream: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildPriorArgs {
    /// Class map of the feature universe the prior is built over.
    #[arg(long)]
    pub classmap: PathBuf,
    /// Model files of the training tasks.
    #[arg(long = "model", required = false)]
    pub models: Vec<PathBuf>,
    /// Count a feature only when a fitted coefficient is positive.
    #[arg(long = "positive-only")]
    pub positive_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub seed: u64,
    /// `all` or a comma-separated list of scenarios.
    #[arg(long, default_value = "all")]
    pub scenario: String,
    #[arg(long, default_value_t = 5)]
    pub replicates: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value = "partial-mic,full-mic,ric")]
    pub schemes: String,
    #[command(flatten)]
    pub dims: ScenarioArgs,
    #[arg(long = "top-t", default_value_t = 75)]
    pub top_t: usize,
    #[arg(long = "l-theta", default_value_t = 2.0)]
    pub l_theta: f64,
    /// Write per-replicate rows here.
    #[arg(long)]
    pub rows: Option<PathBuf>,
    /// Write the summary table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostsArgs {
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    #[arg(long, default_value_t = 20)]
    pub h: usize,
    #[arg(long = "l-theta", default_value_t = 2.0)]
    pub l_theta: f64,
    /// Subset sizes; defaults to 1, 5 and h.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Spec(_) | Error::Domain(_) => 2,
        Error::Numeric(_) | Error::DegenerateResidual { .. } | Error::SingularDesign { .. } => 4,
        _ => 3,
    }
}

/// The invocation with `--threads` removed, for output headers.
fn echo(args: &[String]) -> String {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args.iter().skip(1) {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        out.push(a.as_str());
    }
    format!("mdl-select {}", out.join(" "))
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let header = echo(&args);
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &header)),
            Err(e) => Err(Error::Spec(format!("cannot start {t} threads: {e}"))),
        },
        None => dispatch(cli.command, &header),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, header: &str) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a, header),
        Command::Select(a) => cmd_select(a, header),
        Command::BuildPrior(a) => cmd_build_prior(a),
        Command::Eval(a) => cmd_eval(a, header),
        Command::Costs(a) => cmd_costs(a),
    }
}

fn spec_error(e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Spec(m),
        other => other,
    }
}

fn cmd_generate(a: GenerateArgs, header: &str) -> Result<()> {
    let spec = ScenarioSpec {
        kind: a.scenario.parse()?,
        n: a.dims.n,
        m: a.dims.m,
        h: a.dims.h,
        m_star: a.dims.m_star,
        noise_sd: a.dims.noise_sd,
        seed: a.seed,
    };
    let (data, truth) = generate(&spec)?;
    let data = match a.classes {
        Some(k) => with_contiguous_classes(data, k).map_err(spec_error)?,
        None => data,
    };
    let comments = vec![header.to_string()];
    dataio::save_dataset(&a.out_dir, &data, &comments)?;
    dataio::save_matrix(&a.out_dir.join("truth.csv"), &data.task_names, &truth.beta, &comments)?;
    println!(
        "scenario={} n={} m={} h={} m_star={} noise_sd={} seed={} -> {}",
        spec.kind,
        spec.n,
        spec.m,
        spec.h,
        spec.m_star,
        spec.noise_sd,
        spec.seed,
        a.out_dir.display()
    );
    Ok(())
}

fn check_flags(a: &SelectArgs, scheme: Scheme) -> Result<()> {
    let transfer = scheme == Scheme::TransferTpc;
    if a.setting.is_some() && !transfer {
        return Err(Error::Spec("--setting requires --scheme transfer-tpc".into()));
    }
    if a.prior.is_some() && !transfer {
        return Err(Error::Spec("--prior requires --scheme transfer-tpc".into()));
    }
    if transfer && a.prior.is_none() {
        return Err(Error::Spec("--scheme transfer-tpc requires --prior".into()));
    }
    if a.stream && !transfer {
        return Err(Error::Spec("--stream applies to transfer-tpc; use --scheme tpc-stream".into()));
    }
    if a.extra_steps.is_some() && scheme != Scheme::TpcForwardBackward {
        return Err(Error::Spec("--extra-steps requires --scheme tpc-fb".into()));
    }
    let streaming = scheme == Scheme::TpcStreamwise || a.stream;
    if a.order_seed.is_some() && !streaming {
        return Err(Error::Spec("--order-seed requires a streamwise scheme".into()));
    }
    Ok(())
}

fn single_task(data: Dataset, task: usize) -> Result<Dataset> {
    if task >= data.h() {
        return Err(Error::Spec(format!("--task {task} but only {} responses", data.h())));
    }
    data.task(task)
}

fn cmd_select(a: SelectArgs, header: &str) -> Result<()> {
    let scheme: Scheme = a.scheme.parse().map_err(spec_error)?;
    check_flags(&a, scheme)?;
    let mut data = dataio::load_dataset(&a.x, &a.y, a.classmap.as_deref())?;
    if let Some(t) = a.task {
        data = single_task(data, t)?;
    }
    if scheme.is_class_aware() && data.h() != 1 {
        return Err(Error::Spec(format!(
            "{scheme} fits one response; pick one of {} with --task",
            data.h()
        )));
    }
    if matches!(scheme, Scheme::Tpc | Scheme::TpcForwardBackward | Scheme::TpcStreamwise)
        && data.class_map.is_none()
    {
        eprintln!("warning: no class map given; {scheme} falls back to RIC costs");
    }
    let prior = a.prior.as_deref().map(dataio::load_prior).transpose()?;
    let opts = SelectOptions {
        top_t: a.top_t,
        l_theta: a.l_theta,
        max_features: a.max_features,
        extra_steps: a.extra_steps.unwrap_or(0),
        prior: prior.clone(),
        setting: TransferSetting::from_number(a.setting.unwrap_or(1)).map_err(spec_error)?,
        order: None,
        order_seed: a.order_seed,
        transfer_streamwise: a.stream,
    };
    let start = Instant::now();
    let mut model = select(&data, scheme, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    model.flags = Some(header.to_string());
    let check = recompute_tdl(&data, &model, prior.as_ref())?;
    if (check - model.total_tdl).abs() > 1e-6 * model.total_tdl.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "ledger total {} disagrees with recomputed {check}",
            model.total_tdl
        )));
    }
    if let Some(out) = &a.out {
        dataio::save_model(out, &model)?;
    }
    println!(
        "scheme={} features={} coefficients={} tdl_bits={:.4} time_s={:.3}",
        scheme,
        model.selected_features().len(),
        model.num_coefficients(),
        model.total_tdl,
        elapsed
    );
    Ok(())
}

fn cmd_build_prior(a: BuildPriorArgs) -> Result<()> {
    let (features, classes) = dataio::load_class_map_file(&a.classmap)?;
    let models = a
        .models
        .iter()
        .map(|p| dataio::load_model(p))
        .collect::<Result<Vec<_>>>()?;
    if models.is_empty() {
        eprintln!("warning: no training models; writing the uninformative prior");
    }
    let prior = build_prior(
        &models,
        &features,
        &classes,
        &PriorOptions {
            positive_only: a.positive_only,
        },
    )?;
    dataio::save_prior(&a.out, &prior)?;
    println!(
        "models={} classes={} features={} -> {}",
        prior.t,
        classes.num_classes(),
        features.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(spec_error))
        .collect()
}

fn cmd_eval(a: EvalArgs, header: &str) -> Result<()> {
    let kinds = if a.scenario == "all" {
        ScenarioKind::ALL.to_vec()
    } else {
        parse_list(&a.scenario)?
    };
    let schemes: Vec<Scheme> = parse_list(&a.schemes)?;
    if let Some(s) = schemes.iter().find(|s| s.mic().is_none()) {
        return Err(Error::Spec(format!(
            "eval runs multi-task schemes only; `{s}` needs a single response"
        )));
    }
    if a.replicates == 0 {
        return Err(Error::Spec("--replicates must be at least 1".into()));
    }
    if a.replicates * a.dims.h < 2 {
        eprintln!("warning: one replicate of one task; standard errors are reported as 0");
    }
    let config = SuiteConfig {
        kinds,
        schemes,
        n: a.dims.n,
        m: a.dims.m,
        h: a.dims.h,
        m_star: a.dims.m_star,
        noise_sd: a.dims.noise_sd,
        replicates: a.replicates,
        folds: a.folds,
        seed: a.seed,
        options: SelectOptions {
            top_t: a.top_t,
            l_theta: a.l_theta,
            ..SelectOptions::default()
        },
    };
    let rows = run_suite(&config)?;
    let with_header = |body: String| format!("# {header}\n{body}");
    if let Some(p) = &a.rows {
        dataio::write_text(p, &with_header(format_rows(&rows)))?;
    }
    let table = with_header(format_summary(&summarize(&rows)));
    match &a.out {
        Some(p) => dataio::write_text(p, &table)?,
        None => print_out(&table)?,
    }
    Ok(())
}

fn print_out(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_costs(a: CostsArgs) -> Result<()> {
    let params = MicCostParams::new(a.m, a.h, a.l_theta).map_err(spec_error)?;
    let ks = if a.k.is_empty() {
        let mut ks = vec![1, 5, a.h];
        ks.retain(|&k| k <= a.h);
        ks.dedup();
        ks
    } else {
        a.k.clone()
    };
    let rows = cost_table(&params, &ks).map_err(spec_error)?;
    let mut out = format!("# m={} h={} l_theta={} c_h={:.6}\nk\tpartial\tfull\tric\tbest\n", a.m, a.h, a.l_theta, params.c_h());
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{}\n",
            r.k,
            r.partial,
            r.full,
            r.ric,
            r.best().name()
        ));
    }
    print_out(&out)
}
