use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kamkit::demos::{CircleParams, DemoReport, DemoSpec, MatherParams, MorseParams, NashMoserParams};
use kamkit::iterate::newton;
use kamkit::lie::{rho_schedule, ActionProblem, RhoScheduleParams};
use kamkit::sequences::{bruno_check, bruno_transform, model_iteration, tame_check, BrunoVerdict, PositiveSequence, Sign};
use kamkit::series::TruncatedSeries;
use kamkit::trace::IterationTrace;
use kamkit::verify::{run_suite, DEFAULT_SEED};
use kamkit::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "kamkit", version, about = "Certified quadratic iterations: Bruno sequences, Newton, Nash-Moser and Lie normal forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bruno sums and the Bruno transform
    Bruno {
        #[command(subcommand)]
        action: BrunoAction,
    },
    /// Check a_n b_n^2 <= b_(n+1) with a >= 1 and b <= 1
    Tame(TameArgs),
    /// Model iteration x_(n+1) = (a_n x_n^2 + b_n x_n)/2
    Model(ModelArgs),
    /// Radius schedule (rho, sigma, K) for a Lie problem
    Rho(RhoArgs),
    /// Newton iteration for x^p = y with quadratic-ratio checks
    Newton(NewtonArgs),
    /// Nash-Moser iteration for u + u^2 = y
    Nashmoser(NashMoserArgs),
    /// Lie normal-form demos
    Lie(LieArgs),
    /// Run the randomized property suite
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum BrunoAction {
    /// Partial Bruno sum with a closed-form tail
    Check {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, default_value_t = 40)]
        depth: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Enclosure of a^pi_n
    Transform {
        #[command(flatten)]
        seq: SeqArgs,
        #[arg(long, default_value_t = 0)]
        n: usize,
        #[arg(long, default_value_t = kamkit::sequences::TRANSFORM_DEPTH)]
        depth: usize,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Geometric,
    Constant,
    ExpPower,
    DoubleExp,
}

#[derive(Args)]
struct SeqArgs {
    /// compact (`geometric:2`) or JSON sequence description
    #[arg(long, conflicts_with = "family")]
    seq: Option<String>,
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// signed: negative gives exp(-alpha^n)
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args, Default)]
struct Output {
    /// write the step trace as CSV ("-" for stdout)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// write the full report as JSON ("-" for stdout)
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TameArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long, default_value_t = 1.0)]
    scale_a: f64,
    #[arg(long, default_value_t = 1.0)]
    scale_b: f64,
    #[arg(long, default_value_t = 40)]
    window: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long, default_value_t = 1.0)]
    scale_a: f64,
    #[arg(long, default_value_t = 1.0)]
    scale_b: f64,
    #[arg(long)]
    x0: f64,
    #[arg(long, default_value_t = 40)]
    steps: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum RhoProblem {
    Morse,
    Mather,
}

#[derive(Args)]
struct RhoArgs {
    #[arg(long, value_enum, default_value = "morse")]
    problem: RhoProblem,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// b_n = exp(-beta^n)
    #[arg(long, default_value_t = 1.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    k_const: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 40)]
    window: usize,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct NewtonArgs {
    #[arg(long, default_value_t = 2.0)]
    y: f64,
    #[arg(long, default_value_t = 2.0)]
    power: f64,
    #[arg(long, default_value_t = 1.5)]
    x0: f64,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// bound on |f'(x)^(-1)|; derived automatically when x0 is right of the root
    #[arg(long)]
    m: Option<f64>,
    /// bound on |f''|
    #[arg(long)]
    big_m: Option<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct NashMoserArgs {
    /// Taylor coefficients of y, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<f64>>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    s_inf: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: Output,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Demo {
    Morse,
    Mather,
    Circle,
}

#[derive(Args)]
struct LieArgs {
    #[arg(long, value_enum)]
    demo: Option<Demo>,
    /// perturbation size
    #[arg(long)]
    eps: Option<f64>,
    /// initial radius (strip width for the circle)
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
    /// JSON parameters of the demo, or a tagged {"demo": ...} object
    #[arg(long)]
    config: Option<PathBuf>,
    /// trace CSV path, defaults to <demo>_trace.csv
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn g(x: f64) -> String {
    format!("{x:.16e}")
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Input(_) => "input",
        Error::Domain(_) => "domain",
        Error::OutsideDisc { .. } => "outside_disc",
        Error::Division(_) => "division",
        Error::Order(_) => "order",
        Error::Step { .. } => "step",
        Error::Scheduling(_) => "scheduling",
        Error::Json(_) => "config",
        Error::Csv(_) | Error::Io(_) => "io",
    }
}

fn emit(path: &Path, content: &str) -> kamkit::Result<()> {
    if path.as_os_str() == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(content.as_bytes())?;
        if !content.ends_with('\n') {
            out.write_all(b"\n")?;
        }
        return Ok(());
    }
    fs::write(path, content)?;
    Ok(())
}

fn write_outputs<T: serde::Serialize>(out: &Output, trace: Option<&IterationTrace>, report: &T) -> kamkit::Result<()> {
    if let (Some(p), Some(t)) = (&out.csv, trace) {
        emit(p, &t.to_csv_string()?)?;
    }
    if let Some(p) = &out.json {
        emit(p, &serde_json::to_string_pretty(report)?)?;
    }
    Ok(())
}

fn sequence(args: &SeqArgs) -> kamkit::Result<PositiveSequence> {
    if let Some(s) = &args.seq {
        return PositiveSequence::parse(s);
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Input(format!("--{name} is required for this family")));
    let seq = match args.family {
        None => return Err(Error::Input("give --seq or --family".into())),
        Some(Family::Geometric) => PositiveSequence::geometric(need(args.q, "q")?),
        Some(Family::Constant) => PositiveSequence::constant(need(args.c, "c")?),
        Some(Family::ExpPower) => {
            let a = need(args.alpha, "alpha")?;
            PositiveSequence::exp_power(if a < 0.0 { Sign::Minus } else { Sign::Plus }, a.abs())
        }
        Some(Family::DoubleExp) => PositiveSequence::double_exp(need(args.eps, "eps")?),
    };
    seq.validate()?;
    Ok(seq)
}

fn scaled(spec: &str, factor: f64) -> kamkit::Result<PositiveSequence> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Input(format!("scale factors must be positive, got {factor}")));
    }
    let s = PositiveSequence::parse(spec)?;
    Ok(if factor == 1.0 { s } else { s.scaled(factor) })
}

fn bruno(action: BrunoAction) -> kamkit::Result<bool> {
    match action {
        BrunoAction::Check { seq, depth, out } => {
            let a = sequence(&seq)?;
            let cert = bruno_check(&a, depth)?;
            println!("partial_sum {}", g(cert.partial_sum));
            match cert.tail_bound {
                Some(t) => println!("tail_bound {}", g(t)),
                None => println!("tail_bound none"),
            }
            let verdict = serde_json::to_value(cert.verdict)?;
            println!("verdict {}", verdict.as_str().unwrap_or("?"));
            write_outputs(&out, None, &cert)?;
            Ok(cert.verdict == BrunoVerdict::Bruno)
        }
        BrunoAction::Transform { seq, n, depth, out } => {
            let a = sequence(&seq)?;
            let t = bruno_transform(&a, n, depth)?;
            println!("n {n}");
            println!("value {}", g(t.value));
            println!("lower {}", g(t.lower));
            println!("enclosed {}", t.enclosed);
            write_outputs(&out, None, &t)?;
            Ok(t.enclosed)
        }
    }
}

fn tame(args: TameArgs) -> kamkit::Result<bool> {
    let a = scaled(&args.a, args.scale_a)?;
    let b = scaled(&args.b, args.scale_b)?;
    let rep = tame_check(&a, &b, args.window)?;
    println!("window {}", rep.window);
    println!("a_ge_one {}", rep.a_ge_one);
    println!("b_le_one {}", rep.b_le_one);
    match rep.first_violation {
        Some(n) => println!("first_violation {n}"),
        None => println!("first_violation none"),
    }
    println!("vanishing {}", rep.vanishing);
    println!("tame {}", rep.tame);
    write_outputs(&args.out, None, &rep)?;
    Ok(rep.tame)
}

fn model(args: ModelArgs) -> kamkit::Result<bool> {
    let a = scaled(&args.a, args.scale_a)?;
    let b = scaled(&args.b, args.scale_b)?;
    let trace = model_iteration(&a, &b, args.x0, args.steps)?;
    println!("n,x_n,b_n,x_le_b");
    for s in &trace.steps {
        println!("{},{},{},{}", s.n, g(s.r_norm.unwrap_or(f64::NAN)), g(s.b_n.unwrap_or(f64::NAN)), s.checks_passed);
    }
    for note in &trace.notes {
        eprintln!("note: {note}");
    }
    println!("status {}", serde_json::to_value(trace.status)?.as_str().unwrap_or("?"));
    write_outputs(&args.out, Some(&trace), &trace)?;
    Ok(trace.status.is_certified())
}

fn rho(args: RhoArgs) -> kamkit::Result<bool> {
    let problem = match args.problem {
        RhoProblem::Morse => ActionProblem::morse(64, args.t)?,
        RhoProblem::Mather => ActionProblem::mather(TruncatedSeries::from_real(64, args.t, &[0.0, 0.0, 0.0, 1.0]), 1)?,
    };
    let b = PositiveSequence::exp_power(Sign::Minus, args.beta);
    let params = RhoScheduleParams { k_const: args.k_const, alpha: args.alpha, window: args.window };
    let s = rho_schedule(&problem, &b, args.t, &params)?;
    let conds: Vec<bool> = s.conditions.iter().map(|c| c.tame).collect();
    let c5 = s.condition5.iter().all(|&c| c);
    println!("problem {}", problem.name);
    println!("K {}", g(s.lemma.k_const));
    println!("halvings {}", s.total_halvings);
    println!("lemma_passed {}", s.lemma.passed);
    for (i, c) in conds.iter().enumerate() {
        println!("condition{} {c}", i + 1);
    }
    println!("condition5 {c5}");
    println!("limit_radius {}", g(s.limit_radius));
    println!("threshold {}", g(s.threshold));
    println!("m {}", g(s.m));
    println!("epsilon {}", g(s.epsilon));
    write_outputs(&args.out, None, &s)?;
    Ok(s.lemma.passed && conds.iter().all(|&c| c) && c5)
}

fn newton_cmd(args: NewtonArgs) -> kamkit::Result<bool> {
    let NewtonArgs { y, power: p, x0, steps, .. } = args;
    if !(p > 1.0 && y > 0.0 && x0 > 0.0) {
        return Err(Error::Input("newton solves x^p = y with p > 1, y > 0 and x0 > 0".into()));
    }
    let root = y.powf(1.0 / p);
    let (m, big_m) = match (args.m, args.big_m) {
        (Some(m), Some(bm)) => (m, bm),
        (None, None) if x0 >= root => {
            // convex increasing: iterates stay in [root, x0]
            let m = 1.0 / (p * root.powf(p - 1.0));
            let bm = p * (p - 1.0) * root.powf(p - 2.0).max(x0.powf(p - 2.0));
            (m, bm)
        }
        _ => return Err(Error::Input("give both --m and --big-m when x0 is left of the root".into())),
    };
    let rep = newton(|x| x.powf(p), |x| p * x.powf(p - 1.0), x0, y, m, big_m, steps)?;
    println!("n,x_n,|delta_n|,ratio,check");
    for s in &rep.trace.steps {
        let ratio = s.ratio.map(g).unwrap_or_default();
        println!("{},{},{},{},{}", s.n, g(s.r_norm.unwrap_or(f64::NAN)), g(s.delta_norm.unwrap_or(f64::NAN)), ratio, s.checks_passed);
    }
    println!("root {}", g(rep.root));
    println!("c {}", g(rep.c));
    println!("status {}", serde_json::to_value(rep.trace.status)?.as_str().unwrap_or("?"));
    write_outputs(&args.out, Some(&rep.trace), &rep)?;
    Ok(rep.trace.status.is_certified())
}

fn read_json(path: &Path) -> kamkit::Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn print_demo(rep: &DemoReport) {
    println!("demo {}", rep.name);
    for c in &rep.checks {
        println!("check {} {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    for (k, v) in &rep.summary {
        println!("{k} {}", g(*v));
    }
    if !rep.orders.is_empty() {
        println!("orders {:?}", rep.orders);
    }
    println!("status {}", serde_json::to_value(rep.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
}

fn nashmoser(args: NashMoserArgs) -> kamkit::Result<bool> {
    let mut p = match &args.config {
        Some(path) => serde_json::from_value::<NashMoserParams>(read_json(path)?)?,
        None => NashMoserParams::default(),
    };
    if let Some(y) = args.y.clone() {
        p.y = y;
    }
    p.s0 = args.s0.unwrap_or(p.s0);
    p.s_inf = args.s_inf.unwrap_or(p.s_inf);
    p.q = args.q.unwrap_or(p.q);
    p.steps = args.steps.unwrap_or(p.steps);
    let rep = kamkit::demos::demo_nashmoser(&p)?;
    print_demo(&rep);
    write_outputs(&args.out, Some(&rep.trace), &rep)?;
    Ok(rep.status.is_certified())
}

fn demo_name(d: Demo) -> &'static str {
    match d {
        Demo::Morse => "morse",
        Demo::Mather => "mather",
        Demo::Circle => "circle",
    }
}

fn lie_spec(args: &LieArgs) -> kamkit::Result<DemoSpec> {
    let mut spec = match (&args.config, args.demo) {
        (Some(path), demo) => {
            let v = read_json(path)?;
            if v.get("demo").is_some() {
                let spec: DemoSpec = serde_json::from_value(v)?;
                let tag = match &spec {
                    DemoSpec::Morse(_) => Some(Demo::Morse),
                    DemoSpec::Mather(_) => Some(Demo::Mather),
                    DemoSpec::Circle(_) => Some(Demo::Circle),
                    DemoSpec::NashmoserQuadratic(_) => None,
                };
                if tag.is_none() || (demo.is_some() && demo != tag) {
                    return Err(Error::Input("the config names a different demo than --demo".into()));
                }
                spec
            } else {
                match demo {
                    Some(Demo::Morse) => DemoSpec::Morse(serde_json::from_value::<MorseParams>(v)?),
                    Some(Demo::Mather) => DemoSpec::Mather(serde_json::from_value::<MatherParams>(v)?),
                    Some(Demo::Circle) => DemoSpec::Circle(serde_json::from_value::<CircleParams>(v)?),
                    None => return Err(Error::Input("give --demo or a tagged config".into())),
                }
            }
        }
        (None, Some(d)) => DemoSpec::by_name(demo_name(d))?,
        (None, None) => return Err(Error::Input("give --demo or --config".into())),
    };
    match &mut spec {
        DemoSpec::Morse(p) => {
            p.eps = args.eps.unwrap_or(p.eps);
            p.t = args.t.unwrap_or(p.t);
            p.steps = args.steps.unwrap_or(p.steps);
            p.cap = args.cap.unwrap_or(p.cap);
        }
        DemoSpec::Mather(p) => {
            if let Some(eps) = args.eps {
                let max = p.r.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                if max > 0.0 {
                    p.r.iter_mut().for_each(|c| *c *= eps / max);
                }
            }
            p.t = args.t.unwrap_or(p.t);
            p.steps = args.steps.unwrap_or(p.steps);
            p.cap = args.cap.unwrap_or(p.cap);
        }
        DemoSpec::Circle(p) => {
            p.eps = args.eps.unwrap_or(p.eps);
            p.width0 = args.t.unwrap_or(p.width0);
            p.steps = args.steps.unwrap_or(p.steps);
            p.cap = args.cap.unwrap_or(p.cap);
        }
        DemoSpec::NashmoserQuadratic(_) => unreachable!("rejected above"),
    }
    Ok(spec)
}

fn lie(args: LieArgs) -> kamkit::Result<bool> {
    let spec = lie_spec(&args)?;
    let rep = spec.run()?;
    print_demo(&rep);
    let csv = args.csv.clone().unwrap_or_else(|| PathBuf::from(format!("{}_trace.csv", rep.name)));
    let out = Output { csv: Some(csv), json: args.json.clone() };
    write_outputs(&out, Some(&rep.trace), &rep)?;
    Ok(rep.status.is_certified())
}

fn verify(args: VerifyArgs) -> kamkit::Result<bool> {
    let rep = run_suite(args.seed)?;
    println!("seed {}", rep.seed);
    for p in &rep.properties {
        println!(
            "{} {} cases={} violations={} worst={} {}",
            if p.passed { "PASS" } else { "FAIL" },
            p.name,
            p.cases,
            p.violations,
            g(p.worst),
            p.detail
        );
    }
    if let Some(path) = &args.json {
        emit(path, &serde_json::to_string_pretty(&rep)?)?;
    }
    Ok(rep.passed)
}

fn run(cli: Cli) -> kamkit::Result<bool> {
    match cli.command {
        Command::Bruno { action } => bruno(action),
        Command::Tame(a) => tame(a),
        Command::Model(a) => model(a),
        Command::Rho(a) => rho(a),
        Command::Newton(a) => newton_cmd(a),
        Command::Nashmoser(a) => nashmoser(a),
        Command::Lie(a) => lie(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": msg.trim() } }));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } }));
            ExitCode::from(1)
        }
    }
}
