use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use newtonian_lab::covering::build_covers;
use newtonian_lab::curves::{check_s_k_inequality, check_upper_gradient, enumerate_family, CurveFamily, FamilySpec};
use newtonian_lab::gradient::{norm_star, write_per_k_csv};
use newtonian_lab::modulus::{
    default_gradient_family, minimal_upper_gradient_edge, minimal_upper_gradient_vertex, p_modulus,
    p_modulus_connecting, GradientSolution, SolverOptions,
};
use newtonian_lab::report::{write_atomic, write_report};
use newtonian_lab::space::{generate_space, load_space, SpaceFormat, SpaceKind};
use newtonian_lab::verify::{self, BallSampler, ComponentNorm, PointwiseOptions};
use newtonian_lab::{DiscreteFunction, MetricMeasureSpace, TestFunction};

#[derive(Parser)]
#[command(
    name = "newtonian-lab",
    version,
    about = "Dyadic covers, discrete gradients and curve modulus on finite metric-measure spaces"
)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the report files.
    #[arg(long, global = true, default_value = "reports")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated space to a JSON file.
    Generate {
        #[arg(long)]
        space: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Build and validate the covers over a window.
    Cover(CoverArgs),
    /// Per-generation `|| |T_k u|_p ||_p` and the trailing-window norm.
    NormStar(NormStarArgs),
    /// Curve-family modulus and minimal upper gradients.
    #[command(subcommand)]
    Modulus(ModulusCommand),
    /// Poincaré ratios over sampled balls.
    Poincare(PoincareArgs),
    /// Curve-wise inequality checks.
    #[command(subcommand)]
    Curves(CurvesCommand),
    /// Experiments that end in a pass/fail verdict.
    #[command(subcommand)]
    Verify(VerifyCommand),
}

#[derive(Args)]
struct SpaceArg {
    /// Space file (.json or .csv) or a generator such as `grid1d:256`.
    #[arg(long)]
    space: String,
}

#[derive(Args)]
struct WindowArg {
    /// Generation window `lo:hi`, clipped to the admissible window.
    #[arg(long, default_value = "-64:64")]
    window: String,
}

#[derive(Args)]
struct CoverArgs {
    #[command(flatten)]
    space: SpaceArg,
    #[command(flatten)]
    window: WindowArg,
    /// Include the full ball, cell and neighbor lists.
    #[arg(long)]
    dump: bool,
}

#[derive(Args)]
struct NormStarArgs {
    #[command(flatten)]
    space: SpaceArg,
    /// Function file or expression such as `linear`, `abs:0.5`, `sin:1`.
    #[arg(long)]
    function: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[command(flatten)]
    window: WindowArg,
    #[arg(long)]
    trailing: Option<usize>,
}

#[derive(Subcommand)]
enum ModulusCommand {
    /// p-modulus of an explicit or generated curve family.
    Solve {
        #[command(flatten)]
        space: SpaceArg,
        /// Family file, JSON spec, or `edges`, `grid-rows`,
        /// `k-shortest:SRC:SNK:COUNT`, `walks:COUNT:STEPS[:monotone]`.
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// p-modulus of all edge paths between two id sets (column generation).
    Connect {
        #[command(flatten)]
        space: SpaceArg,
        /// Comma-separated source ids.
        #[arg(long)]
        sources: String,
        #[arg(long)]
        sinks: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Minimal upper gradient of a function.
    Gradient {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = GradientKind::Edge)]
        mode: GradientKind,
        /// Family for the vertex program; defaults to edges plus random
        /// k-shortest paths.
        #[arg(long)]
        family: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GradientKind {
    Edge,
    Vertex,
}

#[derive(Args)]
struct PoincareArgs {
    #[command(flatten)]
    space: SpaceArg,
    #[arg(long)]
    function: String,
    /// `edge` (oracle lift), a function file, or an expression.
    #[arg(long, default_value = "edge")]
    gradient: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// `dyadic`, `cover:LO:HI[:DILATION]` or `radii:R1,R2,...`.
    #[arg(long, default_value = "dyadic")]
    sampler: String,
}

#[derive(Subcommand)]
enum CurvesCommand {
    /// Upper-gradient slack of `g` for `u` on every curve of a family.
    CheckUg {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value = "edge")]
        gradient: String,
        #[arg(long)]
        family: String,
    },
    /// Slack of `|S_k u(x) - S_k u(y)| <= 4 ∫ |T_k u|_p` on a family.
    CheckSk {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long)]
        family: String,
        #[arg(long)]
        k: i32,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Compare the trailing-window norm of `T_k u` with `||g_u||_p`.
    Equivalence {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[command(flatten)]
        window: WindowArg,
        #[arg(long)]
        trailing: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Pointwise window ratios and maximal-function domination.
    Pointwise {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Poincaré exponent below `p`; defaults to `(1 + p) / 2`.
        #[arg(long)]
        q: Option<f64>,
        #[command(flatten)]
        window: WindowArg,
        #[arg(long)]
        trailing: Option<usize>,
        #[arg(long, value_enum, default_value_t = Component::L1)]
        component: Component,
        #[arg(long, default_value_t = verify::POINTWISE_C)]
        c: f64,
    },
    /// Random-pair probe of the modulus of convexity of the embedded norm.
    Convexity {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        k: Option<i32>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value = "0.25,0.5,1,1.5")]
        epsilons: String,
    },
    /// Randomized `S_k` chaining trials over the admissible window.
    Almostug {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[command(flatten)]
        window: WindowArg,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Spread of the norm across covers with different greedy starts.
    CrossCover {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[command(flatten)]
        window: WindowArg,
        #[arg(long)]
        trailing: Option<usize>,
        /// Number of traversal seeds, derived from `--seed`.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Cover checks at every admissible generation.
    Cover {
        #[command(flatten)]
        space: SpaceArg,
    },
    /// Pointwise `T_k` Poincaré bound with a measured `c_PI`.
    TkBound {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        function: String,
        #[arg(long, default_value = "edge")]
        gradient: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[command(flatten)]
        window: WindowArg,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Component {
    L1,
    Lp,
}

fn load_any_space(spec: &str) -> Result<MetricMeasureSpace> {
    let path = Path::new(spec);
    if path.is_file() {
        return load_space(path, SpaceFormat::from_path(path)).with_context(|| format!("loading {spec}"));
    }
    Ok(generate_space(&SpaceKind::parse(spec)?)?)
}

fn load_function(space: &MetricMeasureSpace, spec: &str) -> Result<DiscreteFunction> {
    let u = if Path::new(spec).is_file() {
        DiscreteFunction::load(spec).with_context(|| format!("loading {spec}"))?
    } else {
        TestFunction::parse(spec)?.evaluate(space)
    };
    u.check_len(space.len())?;
    Ok(u)
}

fn load_gradient(space: &MetricMeasureSpace, u: &DiscreteFunction, spec: &str, p: f64) -> Result<DiscreteFunction> {
    if spec == "edge" {
        Ok(minimal_upper_gradient_edge(space, u, p)?.g)
    } else {
        load_function(space, spec)
    }
}

fn parse_ids(s: &str) -> Result<Vec<u64>> {
    s.split(',').filter(|t| !t.is_empty()).map(|t| t.trim().parse().context("bad point id")).collect()
}

fn to_indices(space: &MetricMeasureSpace, ids: &[u64]) -> Result<Vec<usize>> {
    ids.iter().map(|&id| space.index_of(id).with_context(|| format!("unknown point id {id}"))).collect()
}

fn load_family(space: &MetricMeasureSpace, spec: &str, seed: u64) -> Result<CurveFamily> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        if let Ok(fs) = serde_json::from_str::<FamilySpec>(&text) {
            return Ok(enumerate_family(space, &fs)?);
        }
        return Ok(CurveFamily::load(space, path)?);
    }
    if spec.trim_start().starts_with('{') {
        return Ok(enumerate_family(space, &serde_json::from_str::<FamilySpec>(spec)?)?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let fs = match parts[0] {
        "edges" => return Ok(CurveFamily::edges(space)?),
        "grid-rows" => FamilySpec::GridRows,
        "k-shortest" if parts.len() == 4 => FamilySpec::KShortest {
            sources: parse_ids(parts[1])?,
            sinks: parse_ids(parts[2])?,
            count: parts[3].parse()?,
        },
        "all-simple" if parts.len() == 4 => FamilySpec::AllSimplePaths {
            sources: parse_ids(parts[1])?,
            sinks: parse_ids(parts[2])?,
            hop_limit: parts[3].parse()?,
        },
        "walks" if parts.len() >= 3 => FamilySpec::RandomWalks {
            count: parts[1].parse()?,
            steps: parts[2].parse()?,
            monotone: parts.get(3) == Some(&"monotone"),
            seed,
        },
        _ => bail!("unrecognized family '{spec}'"),
    };
    Ok(enumerate_family(space, &fs)?)
}

fn parse_window(s: &str) -> Result<(i32, i32)> {
    let (a, b) = s.split_once(':').context("window must be LO:HI")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// Clipped window and a trailing length that defaults to three generations.
fn window_and_trailing(
    space: &MetricMeasureSpace,
    w: &WindowArg,
    trailing: Option<usize>,
) -> Result<((i32, i32), usize)> {
    let (lo, hi) = parse_window(&w.window)?;
    let (lo, hi) = space.clip_window(lo, hi)?;
    let len = (hi - lo + 1) as usize;
    Ok(((lo, hi), trailing.unwrap_or(3.min(len))))
}

fn parse_sampler(s: &str) -> Result<BallSampler> {
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts[0] {
        "dyadic" => BallSampler::Dyadic,
        "cover" if parts.len() >= 3 => BallSampler::CoverBalls {
            window: (parts[1].parse()?, parts[2].parse()?),
            dilation: parts.get(3).map(|d| d.parse()).transpose()?.unwrap_or(5.0),
        },
        "radii" if parts.len() == 2 => BallSampler::Exhaustive {
            radii: parts[1].split(',').map(|r| r.parse()).collect::<std::result::Result<_, _>>()?,
        },
        _ => bail!("unrecognized sampler '{s}'"),
    })
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse().context("bad number")).collect()
}

struct Output<'a> {
    dir: &'a Path,
    format: Format,
}

impl Output<'_> {
    /// Writes the JSON envelope, or the rows as CSV with `--format csv`.
    /// Tuple rows need `header`; struct rows name their own columns.
    fn emit<T: Serialize, R: Serialize>(
        &self,
        name: &str,
        report: &T,
        header: &[&str],
        rows: impl IntoIterator<Item = R>,
    ) -> Result<()> {
        let path = match self.format {
            Format::Json => write_report(self.dir, name, name, report)?,
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().has_headers(header.is_empty()).from_writer(Vec::new());
                if !header.is_empty() {
                    w.write_record(header)?;
                }
                for r in rows {
                    w.serialize(r)?;
                }
                let path = self.dir.join(format!("{name}.csv"));
                write_atomic(&path, &w.into_inner()?)?;
                path
            }
        };
        println!("wrote {}", path.display());
        Ok(())
    }

    fn emit_bytes(&self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(format!("{name}.csv"));
        write_atomic(&path, &bytes)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn gradient_rows(space: &MetricMeasureSpace, g: &GradientSolution) -> Vec<(u64, f64)> {
    (0..space.len()).map(|i| (space.id(i), g.g.get(i))).collect()
}

/// Runs a command and returns whether every pass flag it produced is true.
fn run(cli: Cli) -> Result<bool> {
    let out = Output { dir: &cli.out_dir, format: cli.format };
    let seed = cli.seed;
    let opts = SolverOptions::default();
    match cli.command {
        Command::Generate { space, output } => {
            let s = generate_space(&SpaceKind::parse(&space)?)?;
            write_atomic(&output, serde_json::to_string_pretty(&s.to_file())?.as_bytes())?;
            println!("wrote {} ({} points)", output.display(), s.len());
            Ok(true)
        }
        Command::Cover(a) => {
            let s = load_any_space(&a.space.space)?;
            let (lo, hi) = parse_window(&a.window.window)?;
            let (lo, hi) = s.clip_window(lo, hi)?;
            let mut r = verify::cover_validity(&s);
            r.per_k.retain(|g| (lo..=hi).contains(&g.k));
            r.pass = r.bounded && r.per_k.iter().all(|g| g.pass);
            let pass = r.pass;
            let rows: Vec<_> = r.per_k.iter().map(|g| (g.k, g.balls, g.n_k, g.pass)).collect();
            if a.dump {
                let dumps: Vec<_> = build_covers(&s, lo, hi, 0).iter().map(|c| c.to_dump(&s)).collect();
                out.emit(
                    "cover",
                    &serde_json::json!({ "validity": r, "covers": dumps }),
                    &["k", "balls", "N_k", "pass"],
                    rows,
                )?;
            } else {
                out.emit("cover", &r, &["k", "balls", "N_k", "pass"], rows)?;
            }
            println!("cover window {lo}:{hi}: {}", status(pass));
            Ok(pass)
        }
        Command::NormStar(a) => {
            let s = load_any_space(&a.space.space)?;
            let u = load_function(&s, &a.function)?;
            let (w, t) = window_and_trailing(&s, &a.window, a.trailing)?;
            let r = norm_star(&s, &u, a.p, w, t)?;
            match out.format {
                Format::Json => out.emit("norm-star", &r, &[], std::iter::empty::<()>())?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_per_k_csv(&r, &mut buf)?;
                    out.emit_bytes("norm-star", buf)?;
                }
            }
            println!("limsup {:.6} norm {:.6} xi {:.4}", r.limsup_estimate, r.norm_star, r.xi_observed);
            Ok(true)
        }
        Command::Modulus(ModulusCommand::Solve { space, family, p }) => {
            let s = load_any_space(&space.space)?;
            let fam = load_family(&s, &family, seed)?;
            let r = p_modulus(&s, &fam, p, &opts)?;
            let rows: Vec<_> = (0..s.len()).map(|i| (s.id(i), r.density.get(i))).collect();
            out.emit("modulus", &r, &["id", "rho"], rows)?;
            println!("Mod_{p} = {:.10} over {} curves", r.value, fam.len());
            Ok(r.converged)
        }
        Command::Modulus(ModulusCommand::Connect { space, sources, sinks, p }) => {
            let s = load_any_space(&space.space)?;
            let src = to_indices(&s, &parse_ids(&sources)?)?;
            let snk = to_indices(&s, &parse_ids(&sinks)?)?;
            let (r, fam) = p_modulus_connecting(&s, &src, &snk, p, &opts)?;
            let rows: Vec<_> = (0..s.len()).map(|i| (s.id(i), r.density.get(i))).collect();
            let report = serde_json::json!({ "solution": r, "curves": fam.to_id_lists(&s) });
            out.emit("modulus-connect", &report, &["id", "rho"], rows)?;
            println!("Mod_{p} = {:.10} with {} generated curves", r.value, fam.len());
            Ok(r.converged)
        }
        Command::Modulus(ModulusCommand::Gradient { space, function, p, mode, family }) => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let g = match mode {
                GradientKind::Edge => minimal_upper_gradient_edge(&s, &u, p)?,
                GradientKind::Vertex => {
                    let fam = match family {
                        Some(f) => load_family(&s, &f, seed)?,
                        None => default_gradient_family(&s, 32, 3, seed)?,
                    };
                    minimal_upper_gradient_vertex(&s, &u, p, &fam, &opts)?
                }
            };
            out.emit("gradient", &g, &["id", "g"], gradient_rows(&s, &g))?;
            println!("||g||_{p} = {:.10}", g.objective);
            Ok(g.converged)
        }
        Command::Poincare(a) => {
            let s = load_any_space(&a.space.space)?;
            let u = load_function(&s, &a.function)?;
            let g = load_gradient(&s, &u, &a.gradient, a.p)?;
            let r = verify::poincare_sweep(&s, &u, &g, a.p, a.lambda, &parse_sampler(&a.sampler)?)?;
            let rows: Vec<_> = r.per_ball.iter().map(|b| (b.center, b.radius, b.lhs, b.rhs_without_c)).collect();
            out.emit("poincare", &r, &["center", "radius", "lhs", "rhs_without_c"], rows)?;
            println!("c_PI estimate {:.6} ({} balls skipped)", r.c_pi_estimate, r.balls_skipped);
            Ok(r.c_pi_estimate.is_finite())
        }
        Command::Curves(CurvesCommand::CheckUg { space, function, gradient, family }) => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let g = load_gradient(&s, &u, &gradient, 2.0)?;
            let fam = load_family(&s, &family, seed)?;
            let r = check_upper_gradient(&s, &u, &g, &fam)?;
            let rows: Vec<_> = r.slacks.iter().enumerate().map(|(i, v)| (i, *v)).collect();
            out.emit("check-ug", &r, &["curve", "slack"], rows)?;
            println!("min slack {:.3e} over {} curves: {}", r.min_slack, r.evaluated, status(r.pass));
            Ok(r.pass)
        }
        Command::Curves(CurvesCommand::CheckSk { space, function, family, k, p }) => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let fam = load_family(&s, &family, seed)?;
            let cover = newtonian_lab::covering::build_cover(&s, k);
            let r = check_s_k_inequality(&s, &cover, &u, p, &fam)?;
            let rows: Vec<_> = r.slacks.iter().enumerate().map(|(i, v)| (i, *v)).collect();
            out.emit("check-sk", &r, &["curve", "slack"], rows)?;
            println!(
                "min slack {:.3e} over {} curves ({} skipped): {}",
                r.min_slack,
                r.evaluated,
                r.skipped,
                status(r.pass)
            );
            Ok(r.pass)
        }
        Command::Verify(v) => run_verify(v, &out, seed),
    }
}

fn run_verify(v: VerifyCommand, out: &Output, seed: u64) -> Result<bool> {
    match v {
        VerifyCommand::Equivalence { space, function, p, window, trailing, lambda } => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let (w, t) = window_and_trailing(&s, &window, trailing)?;
            let r = verify::equivalence_experiment(&s, &u, &function, p, w, t, lambda)?;
            out.emit("verify-equivalence", &r, &[], r.norm_star.per_k.clone())?;
            let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            println!(
                "lower ratio {} upper ratio {} (C' {:.3e}): {:?}",
                show(r.lower_ratio),
                show(r.upper_ratio),
                r.c_report,
                r.verdict
            );
            Ok(r.verdict.is_pass())
        }
        VerifyCommand::Pointwise { space, function, p, q, window, trailing, component, c } => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let (w, t) = window_and_trailing(&s, &window, trailing)?;
            let opts = PointwiseOptions {
                component_norm: match component {
                    Component::L1 => ComponentNorm::L1,
                    Component::Lp => ComponentNorm::Lp,
                },
                c_threshold: c,
                ..PointwiseOptions::default()
            };
            let q = q.unwrap_or((1.0 + p) / 2.0);
            let r = verify::pointwise_experiment(&s, &u, &function, q, p, w, t, opts)?;
            let rows: Vec<_> = r.ratios.iter().enumerate().map(|(i, v)| (s.id(i), *v)).collect();
            out.emit("verify-pointwise", &r, &["id", "ratio"], rows)?;
            println!(
                "within [1/C, C]: {:.4}, C measured {:.4}, domination {:.4}: {}",
                r.fraction_within,
                r.c_measured,
                r.domination.fraction_holding,
                status(r.pass)
            );
            Ok(r.pass)
        }
        VerifyCommand::Convexity { space, p, k, samples, epsilons } => {
            let s = load_any_space(&space.space)?;
            let k = k.unwrap_or(s.admissible_window().1);
            let r = verify::convexity_probe(&s, p, k, samples, &parse_floats(&epsilons)?, seed)?;
            out.emit("verify-convexity", &r, &[], r.per_epsilon.clone())?;
            println!("{} counterexamples over {samples} pairs: {:?}", r.total_counterexamples, r.pass);
            Ok(r.pass.is_pass())
        }
        VerifyCommand::Almostug { space, p, window, trials } => {
            let s = load_any_space(&space.space)?;
            let (w, _) = window_and_trailing(&s, &window, None)?;
            let r = verify::almostug_experiment(&s, p, w, trials, seed)?;
            out.emit("verify-almostug", &r, &[], r.violations.clone())?;
            println!("{} trials, min slack {:.3e}: {:?}", r.evaluated, r.min_slack, r.pass);
            Ok(r.pass.is_pass())
        }
        VerifyCommand::CrossCover { space, function, p, window, trailing, seeds } => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let (w, t) = window_and_trailing(&s, &window, trailing)?;
            let list: Vec<u64> = (0..seeds as u64).map(|i| seed.wrapping_add(i)).collect();
            let r = verify::cross_cover_experiment(&s, &u, p, w, t, &list)?;
            out.emit("verify-cross-cover", &r, &[], r.runs.clone())?;
            println!("relative spread {:.4} (bound {:.4}): {}", r.relative_spread, r.bound, status(r.pass));
            Ok(r.pass)
        }
        VerifyCommand::Cover { space } => {
            let s = load_any_space(&space.space)?;
            let r = verify::cover_validity(&s);
            let rows: Vec<_> = r.per_k.iter().map(|g| (g.k, g.balls, g.n_k, g.pass)).collect();
            out.emit("verify-cover", &r, &["k", "balls", "N_k", "pass"], rows)?;
            println!("N_max {} (cap {}): {}", r.n_max, r.n_cap, status(r.pass));
            Ok(r.pass)
        }
        VerifyCommand::TkBound { space, function, gradient, p, lambda, window } => {
            let s = load_any_space(&space.space)?;
            let u = load_function(&s, &function)?;
            let g = load_gradient(&s, &u, &gradient, p)?;
            let (w, _) = window_and_trailing(&s, &window, None)?;
            let sweep =
                verify::poincare_sweep(&s, &u, &g, p, lambda, &BallSampler::CoverBalls { window: w, dilation: 5.0 })?;
            let c_d = verify::doubling_constant(&s);
            let r = verify::tk_poincare_bound_check(&s, &u, &g, p, lambda, w, sweep.c_pi_estimate, c_d)?;
            out.emit("verify-tk-bound", &r, &[], r.per_k.clone())?;
            println!("{} violations, max ratio {:.3e}: {}", r.total_violations, r.max_ratio, status(r.pass));
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("NEWTONIAN_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
