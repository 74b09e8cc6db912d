use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gtf_core::analysis::classify;
use gtf_core::campaign::{
    make_target, replay, run_campaign, CampaignConfig, CampaignError, Poc, CONFIG_KEYS,
};
use gtf_core::coverage::process::{MAP_PATH_ENV, MAP_SIZE_ENV};
use gtf_core::coverage::toy::{self, ServeEnd, ToyTarget};
use gtf_core::coverage::{CrashKind, TargetAdapter, DEFAULT_MAP_SIZE};
use gtf_core::{render, reset_registry, BanditTable, EdgeCoverage, Generator, Instantiator};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ABORTED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "gtf", version, about = "Coverage-guided grammar fuzzer")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify grammar alternatives; CSV on stdout, summary on stderr.
    Analyze(GrammarArgs),
    /// Print generated statements, one per line.
    Generate(GenerateArgs),
    /// Run a fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Re-run a PoC file and check its crash key.
    Replay(ReplayArgs),
    /// Serve the embedded toy engine over the external target protocol.
    #[command(hide = true)]
    ToyTarget,
}

#[derive(Args, Clone, Default)]
struct GrammarArgs {
    /// Grammar file (default: bundled toy grammar).
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long)]
    placeholders: Option<PathBuf>,
    /// Rule config with label/exclude lines.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Start nonterminal override.
    #[arg(long)]
    start: Option<String>,
}

impl GrammarArgs {
    fn apply(&self, c: &mut CampaignConfig) {
        if self.grammar.is_some() {
            c.grammar = self.grammar.clone();
            c.tokens = self.tokens.clone();
            c.placeholders = self.placeholders.clone();
            c.rules = self.rules.clone();
        }
        if self.start.is_some() {
            c.start_symbol = self.start.clone();
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    grammar: GrammarArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    count: u64,
    #[arg(long)]
    depth_threshold: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct FuzzArgs {
    /// TOML campaign config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    grammar: GrammarArgs,
    #[arg(long)]
    target_cmd: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    budget_secs: Option<f64>,
    #[arg(long)]
    max_sequences: Option<u64>,
    #[arg(long)]
    no_coverage: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    depth_threshold: Option<u32>,
    #[arg(long)]
    map_size: Option<usize>,
    #[arg(long)]
    stats_interval_secs: Option<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    poc: PathBuf,
    /// External target command (default: embedded toy target).
    #[arg(long)]
    target_cmd: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAP_SIZE)]
    map_size: usize,
    #[arg(long, default_value_t = 5.0)]
    timeout_secs: f64,
}

fn main() -> ExitCode {
    let help = format!("Config keys (fuzz --config FILE):\n{CONFIG_KEYS}");
    let cmd = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommand("fuzz", |c| c.after_help(help));
    let cli = match cmd
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("gtf: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CampaignError) -> u8 {
    match e {
        CampaignError::Config(_)
        | CampaignError::Input(..)
        | CampaignError::Grammar(_)
        | CampaignError::Sequence(_) => EXIT_INPUT,
        CampaignError::Output(_) | CampaignError::TargetAborted(_) | CampaignError::Target(_) => {
            EXIT_ABORTED
        }
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, CampaignError> {
    match cmd {
        Cmd::Analyze(g) => analyze(&g),
        Cmd::Generate(a) => generate(&a),
        Cmd::Fuzz(a) => fuzz(&a),
        Cmd::Replay(a) => replay_poc(&a),
        Cmd::ToyTarget => Ok(toy_target()),
    }
}

fn analyze(args: &GrammarArgs) -> Result<ExitCode, CampaignError> {
    let mut config = CampaignConfig::default();
    args.apply(&mut config);
    let grammar = config.load_grammar()?;
    let classes = classify(&grammar);
    eprint!("{}", classes.report(&grammar));
    print!("{}", classes.to_csv(&grammar));
    Ok(ExitCode::SUCCESS)
}

fn generate(args: &GenerateArgs) -> Result<ExitCode, CampaignError> {
    let mut config = CampaignConfig::default();
    args.grammar.apply(&mut config);
    if let Some(d) = args.depth_threshold {
        config.depth_threshold = d;
    }
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    let policy = config.policy();
    policy
        .validate()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    let grammar = config.load_grammar()?;
    let classes = classify(&grammar);
    let generator = Generator::new(&grammar, &classes);
    let bandit = BanditTable::new(&grammar);
    let mut edges = EdgeCoverage::new(&grammar);
    let instantiator = Instantiator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut out = BufWriter::new(io::stdout().lock());
    for _ in 0..args.count {
        let seed: u64 = rng.gen();
        let tree = match generator.generate_with_retry(
            grammar.start(),
            &policy.with_seed(seed),
            &bandit,
            &mut edges,
        ) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("gtf: seed {seed}: {e}");
                continue;
            }
        };
        let template = render(&tree, &grammar).expect("generated trees are complete");
        let stmt = instantiator.instantiate(&template, &grammar, &mut reset_registry(), seed);
        if writeln!(out, "{stmt}").is_err() {
            break;
        }
    }
    let _ = out.flush();
    Ok(ExitCode::SUCCESS)
}

fn fuzz(args: &FuzzArgs) -> Result<ExitCode, CampaignError> {
    let mut c = match &args.config {
        Some(p) => CampaignConfig::from_file(p)?,
        None => CampaignConfig::default(),
    };
    args.grammar.apply(&mut c);
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                c.$field = v;
            }
        )*};
    }
    set!(
        seed,
        workers,
        output_dir,
        epsilon,
        depth_threshold,
        map_size,
        stats_interval_secs
    );
    if args.target_cmd.is_some() {
        c.target_cmd = args.target_cmd.clone();
    }
    match (args.budget_secs, args.max_sequences) {
        (None, None) => {}
        (b, m) => {
            c.budget_secs = b;
            c.max_sequences = m;
        }
    }
    c.no_coverage |= args.no_coverage;

    let stats = run_campaign(&c)?;
    let last = stats.last();
    println!(
        "sequences {} statements {} valid {:.2}% edges {}/{} tuples {} queue {} elapsed {:.1}s",
        stats.counters.sequences,
        last.stmts,
        last.valid_pct,
        last.edges_covered,
        last.edges_total,
        last.cov_tuples,
        stats.queue_len,
        stats.elapsed.as_secs_f64()
    );
    for crash in &stats.crashes {
        match &crash.poc {
            Some(p) => println!(
                "{} at {:.1}s {}",
                crash.key,
                crash.found_at.as_secs_f64(),
                p.display()
            ),
            None => println!("{} at {:.1}s", crash.key, crash.found_at.as_secs_f64()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn replay_poc(args: &ReplayArgs) -> Result<ExitCode, CampaignError> {
    let text = std::fs::read_to_string(&args.poc)
        .map_err(|e| CampaignError::Input(args.poc.clone(), e))?;
    let poc = Poc::parse(&text)
        .map_err(|e| CampaignError::Config(format!("{}: {e}", args.poc.display())))?;
    let mut target: Box<dyn TargetAdapter + Send> = match &args.target_cmd {
        None => Box::new(ToyTarget::new(args.map_size)),
        Some(cmd) => {
            let dir = std::env::temp_dir().join(format!("gtf-replay-{}", std::process::id()));
            std::fs::create_dir_all(&dir).map_err(CampaignError::Output)?;
            let config = CampaignConfig {
                target_cmd: Some(cmd.clone()),
                map_size: args.map_size,
                target_timeout_secs: args.timeout_secs,
                output_dir: dir,
                ..Default::default()
            };
            make_target(&config, 0)?
        }
    };
    let outcome = replay(&poc, target.as_mut())?;
    if outcome.matches(&poc.key) {
        println!("MATCH {}", poc.key);
        Ok(ExitCode::SUCCESS)
    } else {
        match &outcome.observed {
            Some(k) => println!("MISMATCH expected {} observed {}", poc.key, k),
            None => println!("MISMATCH expected {} observed no crash", poc.key),
        }
        Ok(ExitCode::from(EXIT_MISMATCH))
    }
}

/// Protocol server for the toy engine; faults become real signals so the
/// parent sees them exactly as it would a native target.
fn toy_target() -> ExitCode {
    let Some(path) = std::env::var_os(MAP_PATH_ENV) else {
        eprintln!("gtf: {MAP_PATH_ENV} not set");
        return ExitCode::from(EXIT_USAGE);
    };
    let size = match std::env::var(MAP_SIZE_ENV) {
        Ok(s) => match s.parse() {
            Ok(n) => n,
            Err(_) => {
                eprintln!("gtf: bad {MAP_SIZE_ENV} {s:?}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
        Err(_) => DEFAULT_MAP_SIZE,
    };
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    match toy::serve(stdin, stdout, std::path::Path::new(&path), size) {
        Ok(ServeEnd::Eof) => ExitCode::SUCCESS,
        Ok(ServeEnd::Crashed(c)) => {
            let sig = match c.kind {
                CrashKind::Crash => libc::SIGSEGV,
                CrashKind::Assertion => libc::SIGABRT,
            };
            // SAFETY: restoring the default disposition and raising a signal
            // in our own process; nothing runs after this.
            unsafe {
                libc::signal(sig, libc::SIG_DFL);
                libc::raise(sig);
            }
            ExitCode::from(EXIT_ABORTED)
        }
        Err(e) => {
            eprintln!("gtf: {e}");
            ExitCode::from(EXIT_ABORTED)
        }
    }
}
