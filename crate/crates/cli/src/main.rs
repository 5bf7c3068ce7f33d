//! `keyfault` command-line driver.
//!
//! Exit codes: 0 success, 1 domain failure (unresolved bits, failed
//! verification, no key inputs), 2 usage or file format error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use keyfault::atpg::{generate_pattern_set_with, read_pattern_file, write_pattern_file, AtpgConfig, DEFAULT_BACKTRACK_LIMIT};
use keyfault::attack::{brute_force_residual, random_keys, run_attack_with, verify_recovered_key, AttackOptions, AttackReport};
use keyfault::bench::{emit_bench, parse_bench_with, ParseOptions};
use keyfault::keys::{InjectionMap, KeyVector};
use keyfault::locking::{lock, LockSpec, Scheme};
use keyfault::logic::{Logic3, Polarity};
use keyfault::netlist::{Netlist, DEFAULT_KEY_PREFIX};
use keyfault::oracle::{Oracle, ReplayOracle, SimOracle, Transcript};
use keyfault::sim::simulate_injected;

#[derive(Parser)]
#[command(name = "keyfault", version, about = "Lock netlists, generate key-line test patterns, and recover keys by fault injection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Extra detail on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Args)]
struct NetlistArgs {
    /// Input `.bench` file; its stem names the netlist.
    netlist: PathBuf,
    /// Prefix identifying key inputs.
    #[arg(long, default_value = DEFAULT_KEY_PREFIX)]
    key_prefix: String,
}

#[derive(Subcommand)]
enum Command {
    /// Insert key gates and write the locked netlist plus a `.key` sidecar.
    Lock {
        #[command(flatten)]
        input: NetlistArgs,
        /// rll, sll, sfll or combined.
        #[arg(long)]
        scheme: Scheme,
        /// Total key bits. Implied by --split for the combined scheme.
        #[arg(long)]
        key_size: Option<usize>,
        #[arg(long)]
        seed: u64,
        /// SFLL and RLL bits of a combined lock, e.g. `40,40`.
        #[arg(long, value_parser = parse_split)]
        split: Option<(usize, usize)>,
        /// Protected cube for SFLL over the data inputs, e.g. `1X0X`.
        #[arg(long)]
        cube: Option<String>,
        /// Hidden key bits; drawn from the seed when omitted.
        #[arg(long)]
        key: Option<KeyVector>,
        /// Locked netlist path; defaults to `<stem>_<scheme><K>.bench` next to the input.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate one detecting pattern per key bit.
    Atpg {
        #[command(flatten)]
        input: NetlistArgs,
        /// Pattern file path; defaults to `<stem>.patterns`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Polarity tried first for every bit.
        #[arg(long, default_value = "sa1")]
        polarity: Polarity,
        #[arg(long, default_value_t = DEFAULT_BACKTRACK_LIMIT)]
        backtrack_limit: u64,
        /// Search key bits in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Recover the key of a simulated (or recorded) fault-injectable chip.
    Attack {
        #[command(flatten)]
        input: NetlistArgs,
        /// Hidden-key sidecar; only the simulated chip reads it.
        #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
        key: Option<PathBuf>,
        /// Answer queries from a recorded transcript instead of simulating.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Precomputed pattern file.
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Write the query transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include wall time in the report.
        #[arg(long)]
        timing: bool,
        /// Search exhaustively over up to 20 unresolved bits.
        #[arg(long)]
        brute_force_residual: bool,
        #[arg(long, default_value = "sa1")]
        polarity: Polarity,
        #[arg(long, default_value_t = DEFAULT_BACKTRACK_LIMIT)]
        backtrack_limit: u64,
        #[arg(long)]
        parallel: bool,
        /// Skip the constrained retry of unresolved bits.
        #[arg(long)]
        no_refine: bool,
    },
    /// Print primary outputs for given inputs, key and injection.
    Sim {
        #[command(flatten)]
        input: NetlistArgs,
        /// Input values, `0`/`1`/`X`, first declared input leftmost.
        #[arg(long)]
        pi: String,
        /// Key register contents.
        #[arg(long, default_value = "")]
        key: KeyVector,
        /// Forced key lines, `idx:val,...`.
        #[arg(long, default_value = "-")]
        inject: InjectionMap,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn domain(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

type Outcome = Result<(), Failure>;

fn parse_split(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `<sfll>,<rll>`")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((n(a)?, n(b)?))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(usage)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "circuit".to_string())
}

fn load(args: &NetlistArgs) -> Result<Netlist, Failure> {
    let text = read(&args.netlist)?;
    let opts = ParseOptions {
        name: stem(&args.netlist),
        key_prefix: args.key_prefix.clone(),
    };
    parse_bench_with(&text, &opts)
        .with_context(|| format!("parsing {}", args.netlist.display()))
        .map_err(usage)
}

fn sibling(input: &Path, file_name: String) -> PathBuf {
    input.with_file_name(file_name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Lock {
            input,
            scheme,
            key_size,
            seed,
            split,
            cube,
            key,
            output,
        } => cmd_lock(&input, scheme, key_size, seed, split, cube, key, output, verbose),
        Command::Atpg {
            input,
            output,
            polarity,
            backtrack_limit,
            parallel,
        } => cmd_atpg(&input, output, polarity, AtpgConfig { backtrack_limit, parallel }),
        Command::Attack {
            input,
            key,
            replay,
            patterns,
            transcript,
            report,
            timing,
            brute_force_residual,
            polarity,
            backtrack_limit,
            parallel,
            no_refine,
        } => cmd_attack(AttackArgs {
            input,
            key,
            replay,
            patterns,
            transcript,
            report,
            timing,
            brute_force: brute_force_residual,
            options: AttackOptions {
                atpg: AtpgConfig { backtrack_limit, parallel },
                polarity,
                patterns: None,
                refine: !no_refine,
            },
            verbose,
        }),
        Command::Sim { input, pi, key, inject } => cmd_sim(&input, &pi, &key, &inject),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_lock(
    input: &NetlistArgs,
    scheme: Scheme,
    key_size: Option<usize>,
    seed: u64,
    split: Option<(usize, usize)>,
    cube: Option<String>,
    key: Option<KeyVector>,
    output: Option<PathBuf>,
    verbose: bool,
) -> Outcome {
    let mut spec = match (scheme, split) {
        (Scheme::Combined, Some((s, r))) => {
            if key_size.is_some_and(|k| k != s + r) {
                return Err(usage(anyhow!("--key-size {} disagrees with --split {s},{r}", key_size.unwrap())));
            }
            LockSpec::combined(s, r, seed)
        }
        (Scheme::Combined, None) => return Err(usage(anyhow!("the combined scheme needs --split <sfll>,<rll>"))),
        (_, Some(_)) => return Err(usage(anyhow!("--split only applies to the combined scheme"))),
        (_, None) => LockSpec::new(scheme, key_size.ok_or_else(|| usage(anyhow!("--key-size is required")))?, seed),
    };
    if spec.key_size == 0 {
        return Err(usage(anyhow!("key size must be at least 1")));
    }
    if let Some(c) = cube {
        let parsed: Option<Vec<Logic3>> = c.chars().map(Logic3::from_char).collect();
        spec.protected_cube = Some(parsed.ok_or_else(|| usage(anyhow!("cube must use 0, 1 and X")))?);
    }
    let key = match key {
        Some(k) if k.len() != spec.key_size => {
            return Err(usage(anyhow!("--key has {} bits, key size is {}", k.len(), spec.key_size)))
        }
        Some(k) => k,
        None => random_keys(spec.key_size, 1, seed).remove(0),
    };
    let netlist = load(input)?;
    let locked = lock(&netlist, &spec, &key).map_err(domain)?;

    let out = output.unwrap_or_else(|| {
        sibling(&input.netlist, format!("{}_{}{}.bench", netlist.name(), scheme, spec.key_size))
    });
    write(&out, &emit_bench(&locked.netlist))?;
    let key_path = out.with_extension("key");
    write(&key_path, &format!("{key}\n"))?;

    let shape = locked.netlist.shape();
    println!(
        "{}: {} key inputs ({}), {} inputs, {} outputs, {} gates",
        out.display(),
        shape.keys,
        scheme,
        shape.inputs,
        shape.outputs,
        locked.netlist.gates().len()
    );
    if !locked.info.sites.is_empty() {
        println!("key gates on {} nets", locked.info.sites.len());
        if verbose {
            for (i, s) in locked.info.sites.iter().enumerate() {
                eprintln!("  key {i}: {s}");
            }
        }
    }
    if let Some(p) = &locked.info.protected {
        let cube: String = p.cube.iter().map(|v| v.to_char()).collect();
        println!("protected cube {cube} on output {}", p.output);
    }
    println!("key written to {}", key_path.display());
    Ok(())
}

fn cmd_atpg(input: &NetlistArgs, output: Option<PathBuf>, polarity: Polarity, config: AtpgConfig) -> Outcome {
    let netlist = load(input)?;
    let keys = netlist.key_inputs().len();
    if keys == 0 {
        return Err(domain(anyhow!("no key inputs (prefix `{}`)", input.key_prefix)));
    }
    let set = generate_pattern_set_with(&netlist, polarity, &config);
    for i in 0..keys {
        match set.get(i) {
            Some(p) if p.polarity == polarity => println!("k{i} found {}", p.polarity),
            Some(p) => println!("k{i} fallback {}", p.polarity),
            None if set.aborted.contains(&i) => println!("k{i} unresolved (backtrack limit)"),
            None => println!("k{i} unresolved"),
        }
    }
    let out = output.unwrap_or_else(|| sibling(&input.netlist, format!("{}.patterns", netlist.name())));
    write(&out, &write_pattern_file(netlist.shape(), netlist.name(), &set))?;
    println!(
        "{} patterns ({} sa1, {} sa0), {} unresolved, written to {}",
        set.patterns.len(),
        set.count(Polarity::Sa1),
        set.count(Polarity::Sa0),
        set.unresolved.len(),
        out.display()
    );
    Ok(())
}

struct AttackArgs {
    input: NetlistArgs,
    key: Option<PathBuf>,
    replay: Option<PathBuf>,
    patterns: Option<PathBuf>,
    transcript: Option<PathBuf>,
    report: Option<PathBuf>,
    timing: bool,
    brute_force: bool,
    options: AttackOptions,
    verbose: bool,
}

fn cmd_attack(mut a: AttackArgs) -> Outcome {
    let netlist = load(&a.input)?;
    if let Some(path) = &a.patterns {
        let (_, set) = read_pattern_file(&read(path)?, netlist.shape())
            .with_context(|| format!("reading patterns {}", path.display()))
            .map_err(usage)?;
        a.options.patterns = Some(set);
    }

    let sim = match &a.key {
        Some(path) => {
            let key: KeyVector = read(path)?
                .parse()
                .with_context(|| format!("reading key {}", path.display()))
                .map_err(usage)?;
            Some(SimOracle::new(netlist.clone(), key).map_err(usage)?)
        }
        None => None,
    };
    let replay = match (&sim, &a.replay) {
        (None, Some(path)) => {
            let t = Transcript::parse(&read(path)?)
                .with_context(|| format!("reading transcript {}", path.display()))
                .map_err(usage)?;
            Some(ReplayOracle::new(t))
        }
        _ => None,
    };
    let oracle: &dyn Oracle = match (&sim, &replay) {
        (Some(s), _) => s,
        (None, Some(r)) => r,
        (None, None) => return Err(usage(anyhow!("either --key or --replay is required"))),
    };

    let report = run_attack_with(&netlist, oracle, &a.options).map_err(domain);
    let result = report.and_then(|report| conclude(&netlist, oracle, report, &a));
    // the transcript is worth keeping even when the attack fails
    if let (Some(path), Some(sim)) = (&a.transcript, &sim) {
        write(path, &sim.transcript().to_text())?;
    }
    result
}

fn conclude(netlist: &Netlist, oracle: &dyn Oracle, report: AttackReport, a: &AttackArgs) -> Outcome {
    let json = if a.timing {
        report.to_json_with_timing()
    } else {
        report.to_json()
    };
    match &a.report {
        Some(path) => write(path, &format!("{json}\n"))?,
        None => println!("{json}"),
    }
    if a.verbose {
        eprintln!(
            "{} queries, {} patterns, {} refinement rounds",
            report.total_queries, report.total_patterns, report.refinement_rounds
        );
    }

    let key = if report.all_recovered() {
        report.recovered()
    } else if a.brute_force {
        brute_force_residual(netlist, &report, oracle).map_err(domain)?
    } else {
        return Err(domain(anyhow!("key bits {:?} unresolved", report.unresolved())));
    };
    let Some(key) = key else {
        return Err(domain(anyhow!("no assignment of the unresolved bits matches the chip")));
    };
    if !verify_recovered_key(netlist, &key, oracle).map_err(domain)? {
        return Err(domain(anyhow!("recovered key {key} does not reproduce the chip")));
    }
    eprintln!("recovered key {key}");
    Ok(())
}

fn cmd_sim(input: &NetlistArgs, pi: &str, key: &KeyVector, inject: &InjectionMap) -> Outcome {
    let netlist = load(input)?;
    let pi: Option<Vec<Logic3>> = pi.chars().map(Logic3::from_char).collect();
    let pi = pi.ok_or_else(|| usage(anyhow!("--pi must use 0, 1 and X")))?;
    let po = simulate_injected(&netlist, &pi, key, inject).map_err(usage)?;
    println!("{}", po.iter().map(|v| v.to_char()).collect::<String>());
    Ok(())
}
