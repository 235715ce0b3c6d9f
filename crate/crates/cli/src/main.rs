//! `rct`: check, simulate and step retractable contract pairs.

mod repl;

use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rct_core::gen::GenParams;
use rct_core::lts::{RunError, Terminal};
use rct_core::oracle::{crosscheck_outcomes, oracle_check, report, CrosscheckReport, OracleError};
use rct_core::parser::{parse_file, ContractFile};
use rct_core::serial::{trace_to_jsonl, TraceDoc};
use rct_core::{
    check, parse, run, validate_derivation, Contract, OracleVerdict, PairConfig, Policy, Trace,
    Verdict,
};

#[derive(Parser)]
#[command(
    name = "rct",
    version,
    about = "Retractable session contracts: compliance checking and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether the client is compliant with the server.
    Check(CheckArgs),
    /// Run the pair semantics and print the trace.
    Simulate(SimulateArgs),
    /// Step through the pair semantics interactively.
    Step(PairInput),
    /// Compare the decider against the exhaustive oracle.
    Crosscheck(CrosscheckArgs),
    /// Print a contract file or expression in canonical form.
    Fmt(FmtArgs),
}

#[derive(Args)]
struct PairInput {
    /// Contract file with `client = …;` and `server = …;` bindings.
    file: Option<PathBuf>,
    /// Inline client contract (instead of a file).
    #[arg(long, requires = "server", conflicts_with = "file")]
    client: Option<String>,
    /// Inline server contract (instead of a file).
    #[arg(long, requires = "client", conflicts_with = "file")]
    server: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DerivationFormat {
    Text,
    Json,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: PairInput,
    /// Print the derivation tree of a compliant pair.
    #[arg(long, value_enum, num_args = 0..=1, default_missing_value = "text")]
    derivation: Option<DerivationFormat>,
    /// Print the failure tree of a non-compliant pair.
    #[arg(long)]
    explain: bool,
    /// Also run the exhaustive oracle (recursion-free pairs only).
    #[arg(long)]
    oracle: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    /// Aligned rows, one per configuration.
    Text,
    /// One JSON record per configuration.
    Json,
    /// The whole trace as one JSON document.
    Doc,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: PairInput,
    /// Seed for choosing among enabled steps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_steps: usize,
    /// Comma-separated step indices, e.g. `1,0,0`; overrides --seed.
    #[arg(long)]
    script: Option<String>,
    /// Always take the first enabled step; overrides --seed.
    #[arg(long, conflicts_with = "script")]
    first: bool,
    #[arg(long, value_enum, default_value = "text")]
    trace: TraceFormat,
}

#[derive(Args)]
struct CrosscheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 3)]
    max_branching: usize,
    #[arg(long, default_value_t = 4)]
    alphabet: usize,
    /// Check the pairs in every `.rct` file of this directory instead of
    /// random ones. Recursive pairs are skipped.
    #[arg(long, value_name = "DIR")]
    fixtures: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FmtArgs {
    /// A contract file, or a file holding a single contract.
    #[arg(required_unless_present = "expr", conflicts_with = "expr")]
    file: Option<PathBuf>,
    /// A contract expression.
    #[arg(long)]
    expr: Option<String>,
}

/// Failures that end a command before it produces a result.
enum Failure {
    /// Malformed input: exit 2.
    Input(anyhow::Error),
    /// A result failed its own consistency check: exit 3.
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Step(a) => cmd_step(a),
        Command::Crosscheck(a) => cmd_crosscheck(a),
        Command::Fmt(a) => cmd_fmt(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_contract(what: &str, text: &str) -> anyhow::Result<Contract> {
    parse(text).map_err(|e| anyhow!("{what}:\n{}", e.render(text)))
}

fn parse_contract_file(path: &Path, text: &str) -> anyhow::Result<ContractFile> {
    parse_file(text).map_err(|e| anyhow!("{}:\n{}", path.display(), e.render(text)))
}

fn load_pair(input: &PairInput) -> anyhow::Result<(Contract, Contract)> {
    match (&input.file, &input.client, &input.server) {
        (Some(path), _, _) => {
            let text = read(path)?;
            let file = parse_contract_file(path, &text)?;
            file.pair().map_err(|e| anyhow!("{}: {e}", path.display()))
        }
        (None, Some(c), Some(s)) => {
            Ok((parse_contract("client", c)?, parse_contract("server", s)?))
        }
        _ => Err(anyhow!(
            "give a contract file or both --client and --server"
        )),
    }
}

fn color_enabled() -> bool {
    match std::env::var("RCT_COLOR").as_deref() {
        Ok("always") => true,
        Ok("never") => false,
        _ => io::stdout().is_terminal(),
    }
}

fn paint(text: &str, ok: bool) -> String {
    if color_enabled() {
        format!("\x1b[{}m{text}\x1b[0m", if ok { "32" } else { "31" })
    } else {
        text.to_string()
    }
}

fn cmd_check(a: CheckArgs) -> CmdResult {
    let (client, server) = load_pair(&a.input)?;
    let oracle = if a.oracle {
        Some(oracle_check(&client, &server).map_err(|e: OracleError| Failure::Input(e.into()))?)
    } else {
        None
    };
    let verdict = check(&client, &server);
    let mut out = String::new();
    match &verdict {
        Verdict::Compliant(d) => {
            if !validate_derivation(d) {
                return Err(Failure::Internal(anyhow!(
                    "the derivation found does not validate"
                )));
            }
            out.push_str(&paint("Compliant", true));
            out.push('\n');
            match a.derivation {
                Some(DerivationFormat::Text) => out.push_str(&d.render()),
                Some(DerivationFormat::Json) => {
                    out.push_str(&serde_json::to_string_pretty(d).expect("derivations serialize"));
                    out.push('\n');
                }
                None => {}
            }
        }
        Verdict::NotCompliant(f) => {
            out.push_str(&paint("NotCompliant", false));
            out.push('\n');
            if a.explain {
                out.push_str(&f.render());
            }
        }
    }
    if let Some(o) = &oracle {
        if o.is_compliant() == verdict.is_compliant() {
            out.push_str("oracle: agrees\n");
        } else {
            out.push_str(&paint("oracle: DISAGREES", false));
            out.push('\n');
            if let OracleVerdict::NotCompliant(t) = o {
                out.push_str(&format!("witness:\n{t}"));
            }
            print!("{out}");
            return Err(Failure::Internal(anyhow!("decider and oracle disagree")));
        }
    }
    print!("{out}");
    Ok(if verdict.is_compliant() { 0 } else { 1 })
}

fn parse_script(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().with_context(|| format!("bad script index `{t}`")))
        .collect()
}

fn print_trace(t: &Trace, terminal: Option<Terminal>, format: TraceFormat) {
    match format {
        TraceFormat::Text => print!("{t}"),
        TraceFormat::Json => print!("{}", trace_to_jsonl(t)),
        TraceFormat::Doc => println!(
            "{}",
            serde_json::to_string_pretty(&TraceDoc::new(t, terminal)).expect("traces serialize")
        ),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let (client, server) = load_pair(&a.input)?;
    let policy = match (&a.script, a.first) {
        (Some(s), _) => Policy::Scripted(parse_script(s)?),
        (None, true) => Policy::First,
        (None, false) => Policy::Random(a.seed),
    };
    let out = run(PairConfig::start(client, server), &policy, a.max_steps)
        .map_err(|e: RunError| Failure::Input(e.into()))?;
    out.trace
        .replay()
        .map_err(|e| Failure::Internal(anyhow!("trace does not replay: {e}")))?;
    print_trace(&out.trace, Some(out.terminal.clone()), a.trace);
    let failed = out.is_failure();
    if matches!(a.trace, TraceFormat::Text) {
        let status = match (&out.terminal, failed) {
            (Terminal::Exhausted, _) => paint(
                &format!("exhausted after {} steps", out.trace.steps.len()),
                true,
            ),
            (Terminal::Stuck, false) => paint("stuck, client succeeded", true),
            (Terminal::Stuck, true) => paint("stuck, client has not succeeded", false),
        };
        println!("{status}");
    }
    Ok(if failed { 1 } else { 0 })
}

fn cmd_step(a: PairInput) -> CmdResult {
    let (client, server) = load_pair(&a)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    repl::run(
        PairConfig::start(client, server),
        stdin.lock(),
        stdout.lock(),
    )
    .map_err(|e| Failure::Internal(e.into()))?;
    Ok(0)
}

fn fixture_pairs(dir: &Path) -> anyhow::Result<Vec<(PathBuf, Contract, Contract)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "rct"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = read(&p)?;
            let (c, s) = parse_contract_file(&p, &text)?
                .pair()
                .map_err(|e| anyhow!("{}: {e}", p.display()))?;
            Ok((p, c, s))
        })
        .collect()
}

fn print_report(rep: &CrosscheckReport, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(rep).expect("reports serialize")
        );
        return;
    }
    println!(
        "{} pairs: {} agree compliant, {} agree not compliant, {} disagreements",
        rep.total,
        rep.agree_compliant,
        rep.agree_noncompliant,
        rep.disagreements.len()
    );
    for d in &rep.disagreements {
        println!(
            "  #{}: {}  ⊣  {}  (decider says {})",
            d.index,
            d.client,
            d.server,
            if d.decider_compliant {
                "compliant"
            } else {
                "not compliant"
            }
        );
    }
}

fn cmd_crosscheck(a: CrosscheckArgs) -> CmdResult {
    let rep = match &a.fixtures {
        Some(dir) => {
            let all = fixture_pairs(dir)?;
            let (finite, recursive): (Vec<_>, Vec<_>) = all
                .into_iter()
                .partition(|(_, c, s)| !c.contains_rec() && !s.contains_rec());
            if !a.json {
                for (p, _, _) in &recursive {
                    println!("skipped (recursive): {}", p.display());
                }
            }
            let pairs: Vec<_> = finite
                .iter()
                .map(|(_, c, s)| (c.clone(), s.clone()))
                .collect();
            let outs = crosscheck_outcomes(&pairs).map_err(|e| Failure::Internal(e.into()))?;
            if !a.json {
                for ((p, _, _), o) in finite.iter().zip(&outs) {
                    let v = if o.verdict.is_compliant() {
                        "compliant"
                    } else {
                        "not compliant"
                    };
                    let agree = if o.agrees() { "agrees" } else { "DISAGREES" };
                    println!("{}: {v}, oracle {agree}", p.display());
                }
            }
            report(&outs)
        }
        None => {
            let params = GenParams {
                max_depth: a.max_depth,
                max_branching: a.max_branching,
                alphabet: a.alphabet,
            };
            let pairs = rct_core::oracle::random_pairs(&params, a.seed, a.count);
            report(&crosscheck_outcomes(&pairs).map_err(|e| Failure::Internal(e.into()))?)
        }
    };
    print_report(&rep, a.json);
    Ok(if rep.is_clean() { 0 } else { 1 })
}

fn cmd_fmt(a: FmtArgs) -> CmdResult {
    let out = match (&a.file, &a.expr) {
        (_, Some(e)) => format!("{}\n", parse_contract("expression", e)?),
        (Some(path), None) => {
            let text = read(path)?;
            if text.contains('=') {
                parse_contract_file(path, &text)?.pretty()
            } else {
                format!(
                    "{}\n",
                    parse_contract(&path.display().to_string(), text.trim())?
                )
            }
        }
        (None, None) => unreachable!("clap requires one of file or --expr"),
    };
    let mut stdout = io::stdout().lock();
    stdout
        .write_all(out.as_bytes())
        .and_then(|_| stdout.flush())
        .map_err(|e| Failure::Internal(e.into()))?;
    Ok(0)
}
