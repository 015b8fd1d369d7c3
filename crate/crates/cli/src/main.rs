use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairdiv_core::adversary::{
    calibrate_window, check_cleanup, check_o1_o2_tree, play_game, play_recursive, AdversaryN2, GameOutcome,
};
use fairdiv_core::allocator::Policy;
use fairdiv_core::harness::{generate_instance, run_policy, Checks, ExperimentReport, GeneratorConfig, ValueGrid};
use fairdiv_core::mms::mms_report;
use fairdiv_core::stacking::{allocator_to_stacking, replay_stacking, stacking_trace_to_jsonl};
use fairdiv_core::{Instance, Rational};

#[derive(Parser)]
#[command(
    name = "fairdiv",
    version,
    about = "Online MMS allocation of chores: allocators, MMS oracle, stacking game, adversaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Run policies on an instance and check them against their bounds.
    Run(RunArgs),
    /// Adaptive lower-bound games.
    #[command(subcommand)]
    Adversary(AdversaryCommand),
    /// Stacking-game traces.
    #[command(subcommand)]
    Stacking(StackingCommand),
    /// Exact MMS (or bounds with a witness) for every agent.
    Mms(MmsArgs),
}

#[derive(Subcommand)]
enum AdversaryCommand {
    /// Play an adversary against a policy.
    Run(AdversaryArgs),
}

#[derive(Subcommand)]
enum StackingCommand {
    /// Re-apply a JSON-lines stacking trace and re-check every invariant.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Distinct values per agent.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Largest max/min value ratio per agent.
    #[arg(long = "spread", short = 'D', default_value = "16")]
    spread: Rational,
    #[arg(long, default_value = "powers-of-two")]
    grid: ValueGrid,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Instance files; several are run in parallel.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Repeatable; defaults to the four deterministic policies.
    #[arg(long)]
    policy: Vec<Policy>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write allocation, pressure trace and stacking trace per policy here
    /// (single instance only).
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Skip the stacking reduction.
    #[arg(long)]
    no_stacking: bool,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/2")]
    eps: Rational,
    #[arg(long, default_value = "pressure-greedy")]
    policy: Policy,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    /// Idle window for levels three and deeper; calibrated by pilot games when omitted.
    #[arg(long)]
    window: Option<usize>,
    /// Use the recursive adversary for n = 2 as well.
    #[arg(long)]
    recursive: bool,
    /// Directory for instance.json, allocation.json and certificate.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// k for steps that do not record one.
    #[arg(long)]
    k: Option<usize>,
    /// Bound on a+b; defaults to the largest value seen in the trace.
    #[arg(long)]
    beta: Option<Rational>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MmsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Checks ran; `false` means some bound was violated.
type Verdict = bool;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Adversary(AdversaryCommand::Run(a)) => adversary(a),
        Command::Stacking(StackingCommand::Replay(a)) => replay(a),
        Command::Mms(a) => mms(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn load(p: &Path) -> Result<Instance> {
    let text = read(p)?;
    fairdiv_core::instance::load_instance(text.as_bytes()).with_context(|| format!("parsing {}", p.display()))
}

fn gen(a: GenArgs) -> Result<Verdict> {
    let cfg = GeneratorConfig { n: a.n, m: a.m, k: a.k, spread: a.spread, value_grid: a.grid, seed: a.seed };
    let inst = generate_instance(&cfg)?;
    emit(a.out.as_deref(), &inst.to_json())?;
    Ok(true)
}

fn run(a: RunArgs) -> Result<Verdict> {
    let policies = if a.policy.is_empty() {
        vec![Policy::PressureGreedy, Policy::BiValue, Policy::RoundRobin, Policy::DumpToOne]
    } else {
        a.policy
    };
    let instances = a.input.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let checks = Checks { stacking: !a.no_stacking };
    let report = match (&a.trace_dir, instances.as_slice()) {
        (Some(dir), [inst]) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut runs = Vec::new();
            for p in &policies {
                let (alloc, trace, record) = run_policy(inst, p, checks)?;
                let stem = p.to_string().replace(':', "-");
                fs::write(dir.join(format!("{stem}.allocation.json")), alloc.to_json())?;
                fs::write(dir.join(format!("{stem}.trace.jsonl")), trace.to_jsonl())?;
                if inst.n >= 2 && matches!(p, Policy::PressureGreedy | Policy::BiValue) {
                    if let Ok(red) = allocator_to_stacking(&trace, inst.n) {
                        let text = stacking_trace_to_jsonl(&red.ops, &red.functions);
                        fs::write(dir.join(format!("{stem}.stacking.jsonl")), text)?;
                    }
                }
                runs.push(record);
            }
            ExperimentReport { runs }
        }
        (Some(_), _) => bail!("--trace-dir needs exactly one instance"),
        (None, _) => fairdiv_core::harness::run_batch(&instances, &policies, checks)?,
    };
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    emit(a.out.as_deref(), &text)?;
    Ok(!report.any_violation())
}

fn adversary(a: AdversaryArgs) -> Result<Verdict> {
    if a.n < 2 {
        bail!("adversary games need n >= 2");
    }
    let (outcome, window, observations_ok) = if a.n == 2 && !a.recursive {
        let mut adv = AdversaryN2::new(a.eps.clone())?;
        let target = Rational::from_integer(2) - &a.eps;
        (play_game(&mut adv, &a.policy, a.budget, &target)?, None, true)
    } else {
        let window = match a.window {
            Some(w) => w,
            None => calibrate_window(a.n, &a.eps, &a.policy, a.budget, 8)?,
        };
        let run = play_recursive(a.n, &a.eps, &a.policy, a.budget, window)?;
        let ok = check_o1_o2_tree(&run.log).iter().all(|r| r.pass()) && check_cleanup(&run.log, a.n).is_ok();
        (run.outcome, Some(window), ok)
    };
    let verified = outcome.certificate.verify(&outcome.instance, &outcome.allocation);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("instance.json"), outcome.instance.to_json())?;
        fs::write(dir.join("allocation.json"), outcome.allocation.to_json())?;
        fs::write(dir.join("certificate.json"), outcome.certificate.to_json())?;
    }
    print!("{}", summary(&a, &outcome, window, verified, observations_ok));
    Ok(verified && observations_ok)
}

fn summary(a: &AdversaryArgs, o: &GameOutcome, window: Option<usize>, verified: bool, obs: bool) -> String {
    let c = &o.certificate;
    match a.format {
        Format::Json => {
            let v = serde_json::json!({
                "n": a.n,
                "eps": a.eps,
                "policy": a.policy.to_string(),
                "rounds": o.rounds,
                "won": o.won,
                "target": o.target,
                "agent": c.agent,
                "ratio_lower": c.ratio_lower,
                "ratio_lower_dec": c.ratio_lower.to_decimal_string(20),
                "window": window,
                "certificate_verified": verified,
                "observations_ok": obs,
            });
            let mut s = serde_json::to_string_pretty(&v).expect("summary serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("n,eps,policy,rounds,won,target,agent,ratio_lower,ratio_lower_dec,window,certificate_verified,observations_ok\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                a.n,
                a.eps,
                a.policy,
                o.rounds,
                o.won,
                o.target,
                c.agent,
                c.ratio_lower,
                c.ratio_lower.to_decimal_string(20),
                window.map(|w| w.to_string()).unwrap_or_default(),
                verified,
                obs
            );
            s
        }
    }
}

fn replay(a: ReplayArgs) -> Result<Verdict> {
    let text = read(&a.input)?;
    let rep = replay_stacking(&text, a.k, a.beta)?;
    let out = match a.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rep)?;
            s.push('\n');
            s
        }
        Format::Csv => format!(
            "steps,k,beta,min_slack,max_value,pass,failures\n{},{},{},{},{},{},{}\n",
            rep.steps,
            rep.k,
            rep.beta,
            rep.min_slack,
            rep.max_value,
            rep.pass,
            rep.failures.len()
        ),
    };
    emit(a.out.as_deref(), &out)?;
    for f in &rep.failures {
        eprintln!("{f}");
    }
    Ok(rep.pass)
}

fn mms(a: MmsArgs) -> Result<Verdict> {
    let inst = load(&a.input)?;
    let rep = mms_report(&inst)?;
    let out = match a.format {
        Format::Json => rep.to_json(),
        Format::Csv => {
            let mut s = String::from("agent,exact,mms_lower,mms_upper,mms_lower_dec,mms_upper_dec\n");
            for ag in &rep.agents {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    ag.agent,
                    ag.exact().is_some(),
                    ag.lower_bound,
                    ag.upper_bound,
                    ag.lower_bound.to_decimal_string(20),
                    ag.upper_bound.to_decimal_string(20)
                );
            }
            s
        }
    };
    emit(a.out.as_deref(), &out)?;
    Ok(true)
}
