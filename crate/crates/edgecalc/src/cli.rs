//! Batch command-line front end.
//!
//! Exit codes: 0 when a check passes, 2 when it fails, 1 on any error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::asymptotics::{check_conormal_embedding, fit_conormal_expansion, AsymptoticType};
use crate::deformation::{
    deformation_operator, deformed_embedding, is_special_lagrangian, linearization_fd,
    quadratic_remainder, Embedding,
};
use crate::ensemble::{random_specs, EnsembleSpec};
use crate::error::{Error, Result};
use crate::forms::FormField;
use crate::grid::{make_model_grid, ModelGrid};
use crate::io::{self, cell, FieldFile};
use crate::mellin::WeightData;
use crate::operators::{named_operator, EdgeOperator};
use crate::sobolev::{cone_norm_local, edge_norm, estimate_group_constants, k_norm, EdgeNormForm};
use crate::symbols::{
    boundary_symbol, check_boundary_ellipticity, indicial_roots, report_from_roots, unit_covectors,
    Window,
};
use crate::verify::{
    check_banach_algebra, check_pointwise_bound, check_product_weight_gain, PointwiseSpace,
    ProductTarget,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

/// Thread cap for the global pool.
pub const THREADS_ENV: &str = "EDGECALC_THREADS";
/// Optional grid presets, looked up in the working directory.
pub const CONFIG_FILE: &str = "edgecalc.json";

#[derive(Parser, Debug)]
#[command(
    name = "edgecalc",
    version,
    about = "Edge-degenerate calculus and special Lagrangian deformation checks"
)]
pub struct Cli {
    /// Output path: a directory, or a file whose `.json`/`.csv` sibling is also written.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid preset file (defaults to ./edgecalc.json when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Edge, cone or K norm of a field file.
    Norm(NormArgs),
    /// Indicial roots and admissible weights of an operator.
    Roots(RootsArgs),
    /// Boundary ellipticity on seeded unit covectors.
    SymbolCheck(SymbolArgs),
    /// Special Lagrangian conditions of an embedding.
    Slcheck(SlArgs),
    /// Linearization residual table.
    Linearize(LinearizeArgs),
    /// Quadratic remainder slope over dyadic scales.
    Remainder(RemainderArgs),
    /// Product estimate into the doubled weight.
    Algebra(AlgebraArgs),
    /// Weighted pointwise bound.
    Pointwise(PointwiseArgs),
    /// Product weight gain by gamma - (m+1)/2.
    WeightGain(WeightGainArgs),
    /// Least-squares conormal expansion of a field file.
    FitAsymptotics(FitArgs),
    /// Conormal embedding conditions for a deformed embedding.
    CheckEmbedding(EmbeddingArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct GridArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Half width of the t window.
    #[arg(long = "T")]
    t_half: Option<f64>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    n_sigma: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
}

/// Partial grid as read from the config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridPreset {
    m: Option<usize>,
    q: Option<usize>,
    #[serde(rename = "T")]
    t_half: Option<f64>,
    n_t: Option<usize>,
    n_sigma: Option<usize>,
    n_u: Option<usize>,
    eps: Option<f64>,
    eps1: Option<f64>,
    eps2: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    #[serde(default)]
    grid: GridPreset,
}

#[derive(Args, Debug)]
struct WeightArgs {
    #[arg(long)]
    s: f64,
    #[arg(long)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    /// Mandatory seed of the random ensemble.
    #[arg(long)]
    seed: u64,
    /// Range of packet centres in t.
    #[arg(long, default_value = "4:5", value_parser = parse_range)]
    t_range: (f64, f64),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormSpace {
    /// Global edge norm.
    Edge,
    /// Local edge norm (mode sum over the whole field).
    EdgeLocal,
    /// Cone norm on the model cone (q = 0 fields).
    Cone,
    /// K norm (q = 0 fields).
    K,
}

#[derive(Args, Debug)]
struct NormArgs {
    #[arg(long)]
    field: PathBuf,
    #[command(flatten)]
    weight: WeightArgs,
    #[arg(long, value_enum, default_value = "edge")]
    space: NormSpace,
}

#[derive(Args, Debug)]
struct OperatorArgs {
    /// Named operator (hodge-derham, hodge-laplace, d, fuchs-first, fuchs-second, identity)
    /// or a JSON operator description.
    #[arg(long)]
    op: String,
    #[arg(long)]
    degree: Option<usize>,
}

#[derive(Args, Debug)]
struct RootsArgs {
    #[command(flatten)]
    op: OperatorArgs,
    /// Re z window `a:b`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    window: (f64, f64),
    /// Im z window `a:b`.
    #[arg(long, default_value = "-5:5", value_parser = parse_range, allow_hyphen_values = true)]
    im: (f64, f64),
    #[arg(long, default_value_t = 8)]
    band_limit: i64,
    /// Dimension of the cross-section.
    #[arg(long, default_value_t = 1)]
    m: usize,
}

#[derive(Args, Debug)]
struct SymbolArgs {
    #[command(flatten)]
    op: OperatorArgs,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SlArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct LinearizeArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    xi: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    t: Vec<f64>,
    #[arg(long, default_value_t = 3.0)]
    s: f64,
    #[arg(long, default_value_t = 2.5)]
    gamma: f64,
    /// Allowed deviation of the residual slope in t from 1.
    #[arg(long, default_value_t = 0.1)]
    slope_tol: f64,
}

#[derive(Args, Debug)]
struct RemainderArgs {
    #[arg(long)]
    embedding: PathBuf,
    /// One or more form field files.
    #[arg(long, value_delimiter = ',', required = true)]
    xi: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    scales: usize,
    #[arg(long, default_value_t = 3.0)]
    s: f64,
    #[arg(long, default_value_t = 2.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    slope_tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Extra,
    Algebra,
}

#[derive(Args, Debug)]
struct AlgebraArgs {
    #[command(flatten)]
    weight: WeightArgs,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 32)]
    pairs: usize,
    #[arg(long, value_enum, default_value = "extra")]
    target: TargetArg,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PointwiseArg {
    Cone,
    Edge,
}

#[derive(Args, Debug)]
struct PointwiseArgs {
    #[command(flatten)]
    weight: WeightArgs,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, value_enum, default_value = "cone")]
    space: PointwiseArg,
    /// Group exponent for the edge threshold; measured when omitted.
    #[arg(long)]
    c_gamma: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct WeightGainArgs {
    #[command(flatten)]
    weight: WeightArgs,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    field: PathBuf,
    /// Asymptotic type as JSON `{terms: [[[re, im], m_j], ..], gamma, m}`.
    #[arg(long = "type")]
    asymptotic_type: PathBuf,
    /// Also write the remainder field to this file.
    #[arg(long)]
    remainder: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbeddingArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    xi: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    alpha_max: usize,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected a:b, got {s}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((a, b))
}

/// Result of one subcommand: machine report, optional table, pass flag.
struct Outcome {
    report: Value,
    table: Option<(Vec<&'static str>, Vec<Vec<String>>)>,
    pass: bool,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => io::read_json(p),
        None => {
            let p = Path::new(CONFIG_FILE);
            if p.exists() {
                io::read_json(p)
            } else {
                Ok(Config::default())
            }
        }
    }
}

/// Flags over config presets over built-in defaults.
fn resolve_grid(args: &GridArgs, preset: &GridPreset) -> Result<ModelGrid> {
    make_model_grid(
        args.m.or(preset.m).unwrap_or(1),
        args.q.or(preset.q).unwrap_or(1),
        args.t_half.or(preset.t_half).unwrap_or(12.0),
        args.n_t.or(preset.n_t).unwrap_or(256),
        args.n_sigma.or(preset.n_sigma).unwrap_or(16),
        args.n_u.or(preset.n_u).unwrap_or(16),
        args.eps.or(preset.eps).unwrap_or(0.5),
        args.eps1.or(preset.eps1).unwrap_or(0.1),
        args.eps2.or(preset.eps2).unwrap_or(0.3),
    )
}

fn load_operator(a: &OperatorArgs) -> Result<EdgeOperator> {
    if a.op.ends_with(".json") {
        let op: EdgeOperator = io::read_json(Path::new(&a.op))?;
        op.validate()?;
        Ok(op)
    } else {
        named_operator(&a.op, a.degree)
    }
}

fn load_form(path: &Path) -> Result<FormField> {
    match io::read_field(path)? {
        FieldFile::Form(f) => Ok(f),
        FieldFile::Scalar(_) => Err(Error::Invalid(format!(
            "{} holds a scalar field, expected a form",
            path.display()
        ))),
    }
}

fn weight(w: &WeightArgs) -> Result<WeightData> {
    WeightData::new(w.s, w.gamma)
}

fn ensemble_spec(e: &EnsembleArgs) -> EnsembleSpec {
    EnsembleSpec::deep(e.t_range)
}

fn norm(a: &NormArgs) -> Result<Outcome> {
    let f = io::read_scalar_field(&a.field)?;
    let w = weight(&a.weight)?;
    let (name, value) = match a.space {
        NormSpace::Edge => ("edge", edge_norm(&f, &w, EdgeNormForm::Global)?),
        NormSpace::EdgeLocal => ("edge-local", edge_norm(&f, &w, EdgeNormForm::Local)?),
        NormSpace::Cone => ("cone", cone_norm_local(&f, &w)?),
        NormSpace::K => ("k", k_norm(&f, &w)?),
    };
    println!("{}", cell(value));
    Ok(Outcome {
        report: json!({ "space": name, "s": w.s, "gamma": w.gamma, "norm": value }),
        table: Some((
            vec!["space", "s", "gamma", "norm"],
            vec![vec![name.into(), cell(w.s), cell(w.gamma), cell(value)]],
        )),
        pass: true,
    })
}

fn roots(a: &RootsArgs) -> Result<Outcome> {
    let p = load_operator(&a.op)?;
    let window = Window::new(a.window, a.im)?;
    let c = (a.m as f64 + 1.0) / 2.0;
    let gamma = (c - a.window.1, c - a.window.0);
    let roots = indicial_roots(&p, &window, a.band_limit)?;
    let rep = report_from_roots(roots, a.m, gamma, window, a.band_limit);
    let rows = rep
        .roots
        .iter()
        .map(|r| {
            vec![
                r.mode.to_string(),
                cell(r.z.re),
                cell(r.z.im),
                r.multiplicity.to_string(),
            ]
        })
        .collect();
    Ok(Outcome {
        report: serde_json::to_value(&rep)?,
        table: Some((vec!["mode_k", "re_z", "im_z", "multiplicity"], rows)),
        pass: true,
    })
}

fn symbol_check(a: &SymbolArgs) -> Result<Outcome> {
    let p = load_operator(&a.op)?;
    let samples = unit_covectors(a.seed, a.samples);
    let rep = check_boundary_ellipticity(&p, &samples)?;
    let mut rows = Vec::with_capacity(samples.len());
    for c in &samples {
        let s = boundary_symbol(&p, c)?
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        rows.push(vec![
            cell(c.r),
            cell(c.sigma),
            cell(c.u),
            cell(c.rho),
            cell(c.xi),
            cell(c.eta),
            cell(s),
        ]);
    }
    Ok(Outcome {
        pass: rep.pass,
        report: serde_json::to_value(&rep)?,
        table: Some((
            vec!["r", "sigma", "u", "rho", "xi", "eta", "min_singular_value"],
            rows,
        )),
    })
}

fn slcheck(a: &SlArgs, preset: &GridPreset) -> Result<Outcome> {
    let emb: Embedding = io::read_json(&a.embedding)?;
    let grid = resolve_grid(&a.grid, preset)?;
    let rep = is_special_lagrangian(&emb, &grid, a.tol)?;
    let p0 = deformation_operator(&emb, &FormField::zeros(&grid, 1)?)?.max_abs();
    let pass = rep.pass && p0 <= a.tol;
    Ok(Outcome {
        report: json!({ "sl": rep, "p_zero": p0, "phase": emb.phase, "pass": pass }),
        table: None,
        pass,
    })
}

fn linearize(a: &LinearizeArgs) -> Result<Outcome> {
    let emb: Embedding = io::read_json(&a.embedding)?;
    let xi = load_form(&a.xi)?;
    let table = linearization_fd(&emb, &xi, &a.t, &WeightData::new(a.s, a.gamma)?)?;
    let pass = (table.slope - 1.0).abs() <= a.slope_tol;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                cell(r.t),
                cell(r.residual),
                r.ratio.map(cell).unwrap_or_default(),
            ]
        })
        .collect();
    Ok(Outcome {
        report: json!({ "table": table, "slope": table.slope, "pass": pass }),
        table: Some((vec!["t", "residual", "ratio"], rows)),
        pass,
    })
}

fn remainder(a: &RemainderArgs) -> Result<Outcome> {
    let emb: Embedding = io::read_json(&a.embedding)?;
    let ensemble =
        a.xi.iter()
            .map(|p| load_form(p))
            .collect::<Result<Vec<_>>>()?;
    let fit = quadratic_remainder(&emb, &ensemble, a.scales, &WeightData::new(a.s, a.gamma)?)?;
    let pass = (fit.slope - 2.0).abs() <= a.slope_tol;
    let rows = fit
        .samples
        .iter()
        .map(|(x, r)| vec![cell(*x), cell(*r)])
        .collect();
    Ok(Outcome {
        report: json!({ "fit": fit, "pass": pass }),
        table: Some((vec!["xi_norm", "remainder_norm"], rows)),
        pass,
    })
}

fn verify_outcome(rep: crate::verify::VerifyReport) -> Result<Outcome> {
    let rows = rep
        .witnesses
        .iter()
        .map(|w| {
            vec![
                w.refinement.to_string(),
                w.members
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                w.node
                    .iter()
                    .map(|x| cell(*x))
                    .collect::<Vec<_>>()
                    .join(" "),
                cell(w.ratio),
            ]
        })
        .collect();
    Ok(Outcome {
        pass: rep.stable,
        report: serde_json::to_value(&rep)?,
        table: Some((vec!["refinement", "members", "node", "ratio"], rows)),
    })
}

fn algebra(a: &AlgebraArgs, preset: &GridPreset) -> Result<Outcome> {
    let grid = resolve_grid(&a.grid, preset)?;
    let target = match a.target {
        TargetArg::Extra => ProductTarget::ExtraRegularity,
        TargetArg::Algebra => ProductTarget::Algebra,
    };
    let rep = check_banach_algebra(
        &grid,
        &ensemble_spec(&a.ensemble),
        a.ensemble.seed,
        a.pairs,
        &weight(&a.weight)?,
        target,
    )?;
    verify_outcome(rep)
}

fn pointwise(a: &PointwiseArgs, preset: &GridPreset) -> Result<Outcome> {
    let grid = resolve_grid(&a.grid, preset)?;
    let w = weight(&a.weight)?;
    let space = match a.space {
        PointwiseArg::Cone => PointwiseSpace::Cone,
        PointwiseArg::Edge => {
            let c_gamma = match a.c_gamma {
                Some(c) => c,
                None => {
                    let lambdas: Vec<f64> = (-4..=4).map(|j| 10f64.powf(j as f64 / 4.0)).collect();
                    estimate_group_constants(&w, &lambdas, a.ensemble.seed)?.c_gamma
                }
            };
            PointwiseSpace::Edge { c_gamma }
        }
    };
    let rep = check_pointwise_bound(
        &grid,
        &ensemble_spec(&a.ensemble),
        a.ensemble.seed,
        a.count,
        &w,
        space,
    )?;
    verify_outcome(rep)
}

fn weight_gain(a: &WeightGainArgs, preset: &GridPreset) -> Result<Outcome> {
    let grid = resolve_grid(&a.grid, preset)?;
    let specs = random_specs(
        a.ensemble.seed,
        2,
        &ensemble_spec(&a.ensemble),
        grid.m,
        grid.q,
    );
    let rep = check_product_weight_gain(&grid, &specs[0], &specs[1], &weight(&a.weight)?)?;
    verify_outcome(rep)
}

fn fit_asymptotics(a: &FitArgs) -> Result<Outcome> {
    let f = io::read_scalar_field(&a.field)?;
    let raw: AsymptoticType = io::read_json(&a.asymptotic_type)?;
    let o = AsymptoticType::new(raw.terms, raw.gamma, raw.m)?;
    let fit = fit_conormal_expansion(&f, &o)?;
    if let Some(p) = &a.remainder {
        io::write_scalar_field(p, &fit.remainder)?;
    }
    let rows = fit
        .terms
        .iter()
        .map(|t| {
            let amp = t.c_samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
                * t.v_samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
            vec![cell(t.p.re), cell(t.p.im), t.k.to_string(), cell(amp)]
        })
        .collect();
    Ok(Outcome {
        report: fit.to_json_value(),
        table: Some((vec!["p_re", "p_im", "k", "max_abs_coefficient"], rows)),
        pass: true,
    })
}

fn check_embedding(a: &EmbeddingArgs) -> Result<Outcome> {
    let emb: Embedding = io::read_json(&a.embedding)?;
    let xi = load_form(&a.xi)?;
    let ups = deformed_embedding(&emb, &xi)?;
    let rep = check_conormal_embedding(&ups, &emb, a.gamma, a.alpha_max)?;
    let rows = rep
        .derivative_rates
        .iter()
        .map(|d| {
            vec![
                format!("d{:?}", d.alpha),
                d.rate.map(cell).unwrap_or_default(),
            ]
        })
        .chain(
            rep.metric_rates
                .iter()
                .map(|m| vec![m.component.clone(), m.rate.map(cell).unwrap_or_default()]),
        )
        .collect();
    Ok(Outcome {
        pass: rep.pass,
        report: serde_json::to_value(&rep)?,
        table: Some((vec!["quantity", "rate"], rows)),
    })
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Outcome)> {
    let config = load_config(cli.config.as_deref())?;
    let preset = &config.grid;
    Ok(match &cli.command {
        Command::Norm(a) => ("norm", norm(a)?),
        Command::Roots(a) => ("roots", roots(a)?),
        Command::SymbolCheck(a) => ("symbol-check", symbol_check(a)?),
        Command::Slcheck(a) => ("slcheck", slcheck(a, preset)?),
        Command::Linearize(a) => ("linearize", linearize(a)?),
        Command::Remainder(a) => ("remainder", remainder(a)?),
        Command::Algebra(a) => ("algebra", algebra(a, preset)?),
        Command::Pointwise(a) => ("pointwise", pointwise(a, preset)?),
        Command::WeightGain(a) => ("weight-gain", weight_gain(a, preset)?),
        Command::FitAsymptotics(a) => ("fit-asymptotics", fit_asymptotics(a)?),
        Command::CheckEmbedding(a) => ("check-embedding", check_embedding(a)?),
    })
}

/// JSON and CSV destinations for `--out`.
fn artifact_paths(out: &Path, name: &str) -> (PathBuf, PathBuf) {
    match out.extension().and_then(|e| e.to_str()) {
        Some("json") => (out.to_path_buf(), out.with_extension("csv")),
        Some("csv") => (out.with_extension("json"), out.to_path_buf()),
        _ => (
            out.join(format!("{name}.json")),
            out.join(format!("{name}.csv")),
        ),
    }
}

fn emit(cli: &Cli, name: &str, o: &Outcome) -> Result<()> {
    let text = io::to_json_string(&o.report)?;
    if !matches!(cli.command, Command::Norm(_)) {
        print!("{text}");
    }
    if let Some(out) = &cli.out {
        if out.extension().is_none() {
            std::fs::create_dir_all(out)?;
        }
        let (jp, cp) = artifact_paths(out, name);
        std::fs::write(jp, text)?;
        if let Some((header, rows)) = &o.table {
            io::write_csv(&cp, header, rows)?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("{THREADS_ENV} = {v:?} is not a count")))?;
        // a second initialization (tests, embedding) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_PASS;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("edgecalc: {}", line.trim_start_matches("error: "));
            return EXIT_ERROR;
        }
    };
    let result = configure_threads()
        .and_then(|_| dispatch(&cli))
        .and_then(|(name, o)| {
            emit(&cli, name, &o)?;
            Ok(o.pass)
        });
    match result {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => {
            eprintln!("edgecalc: {}", e.to_string().replace('\n', " "));
            EXIT_ERROR
        }
    }
}
