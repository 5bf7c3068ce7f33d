//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use keyfault::atpg::{
    d_algorithm, generate_pattern_set_with, verify_pattern, write_pattern_file, AtpgConfig, AtpgOutcome, PatternSet,
};
use keyfault::attack::{random_keys, run_attack_with, AttackOptions, AttackReport};
use keyfault::bench::{emit_bench, parse_bench_with, ParseOptions};
use keyfault::circuits;
use keyfault::keys::{FaultSpec, InjectionMap, KeyVector};
use keyfault::locking::{find_mismatch, lock, protected_vectors, LockSpec, Locked, Scheme};
use keyfault::logic::{Logic3, Logic5, Polarity};
use keyfault::netlist::Netlist;
use keyfault::oracle::{ReplayOracle, SimOracle, Transcript};
use keyfault::sim::{simulate3, simulate5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 5;
const KEYS_PER_SEED: usize = 20;
const WRONG_KEYS: usize = 50;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Aggregates over one (circuit, lock) configuration.
#[derive(Default)]
struct Matrix {
    label: String,
    instances: usize,
    bits: usize,
    recovered_ok: usize,
    wrong_bits: usize,
    unresolved: usize,
    budget_violations: usize,
    query_violations: usize,
    max_instance_secs: f64,
    lock_failures: Vec<String>,
    replay_mismatches: usize,
    replays: usize,
    determinism_mismatches: usize,
}

impl Matrix {
    fn summary(&self) -> String {
        format!(
            "{}: {} instances, {}/{} bits recovered, {} wrong, {} unresolved, slowest {:.1}s",
            self.label,
            self.instances,
            self.recovered_ok,
            self.bits,
            self.wrong_bits,
            self.unresolved,
            self.max_instance_secs
        )
    }
}

fn bench(name: &str) -> Netlist {
    parse_bench_with(circuits::by_name(name).unwrap(), &ParseOptions::named(name)).unwrap()
}

/// Correct key equivalent; every sampled wrong key observable on some vector
/// (RLL/SLL) or on the protected pattern (SFLL-lite parts).
fn check_lock(original: &Netlist, locked: &Locked, key: &KeyVector, seed: u64) -> Result<(), String> {
    let l = &locked.netlist;
    if let Some(v) = find_mismatch(original, &[], l, key.bits(), 10_000, &[], seed) {
        return Err(format!("correct key mismatches on {v:?}"));
    }
    let protected = protected_vectors(&locked.info);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
    for _ in 0..WRONG_KEYS {
        let mut wrong = KeyVector::random(key.len(), &mut rng);
        if wrong == *key {
            wrong = wrong.with_flipped(rng.gen_range(0..key.len()));
        }
        let sfll_only = !protected.is_empty() && locked.info.sites.is_empty();
        let found = if sfll_only {
            find_mismatch(original, &[], l, wrong.bits(), 0, &protected, seed).is_some()
        } else {
            find_mismatch(original, &[], l, wrong.bits(), 10_000, &protected, seed).is_some()
        };
        if !found {
            return Err(format!("wrong key {wrong} is indistinguishable"));
        }
    }
    Ok(())
}

fn run_matrix(label: &str, circuit: &str, spec_for: impl Fn(u64) -> LockSpec, key_size: usize) -> Matrix {
    let original = bench(circuit);
    let mut m = Matrix {
        label: label.to_string(),
        ..Matrix::default()
    };
    let config = AtpgConfig {
        parallel: true,
        ..AtpgConfig::default()
    };
    for seed in 0..SEEDS {
        let spec = spec_for(seed);
        for (j, hidden) in random_keys(key_size, KEYS_PER_SEED, 1000 + seed).into_iter().enumerate() {
            let start = Instant::now();
            let locked = lock(&original, &spec, &hidden).expect("lock");
            let set = generate_pattern_set_with(&locked.netlist, Polarity::Sa1, &config);
            let opts = AttackOptions {
                atpg: config,
                patterns: Some(set.clone()),
                ..AttackOptions::default()
            };
            let oracle = SimOracle::new(locked.netlist.clone(), hidden.clone()).unwrap();
            let report = run_attack_with(&locked.netlist, &oracle, &opts).expect("attack");
            m.max_instance_secs = m.max_instance_secs.max(start.elapsed().as_secs_f64());
            m.instances += 1;
            tally(&mut m, &report, &hidden, &set);

            if let Err(e) = check_lock(&original, &locked, &hidden, seed) {
                m.lock_failures.push(format!("{label} seed {seed} key {j}: {e}"));
            }
            if j == 0 {
                m.replays += 1;
                let replay = ReplayOracle::new(Transcript::parse(&oracle.transcript().to_text()).unwrap());
                let again = run_attack_with(&locked.netlist, &replay, &opts).expect("replay");
                if again.to_json() != report.to_json() || replay.remaining() != 0 {
                    m.replay_mismatches += 1;
                }
                let relocked = lock(&original, &spec, &hidden).unwrap();
                let reset = generate_pattern_set_with(&relocked.netlist, Polarity::Sa1, &AtpgConfig::default());
                let shape = locked.netlist.shape();
                if emit_bench(&relocked.netlist) != emit_bench(&locked.netlist)
                    || write_pattern_file(shape, circuit, &reset) != write_pattern_file(shape, circuit, &set)
                {
                    m.determinism_mismatches += 1;
                }
            }
        }
    }
    m
}

fn tally(m: &mut Matrix, report: &AttackReport, hidden: &KeyVector, set: &PatternSet) {
    let k = hidden.len();
    m.bits += k;
    for r in &report.resolutions {
        match r.value {
            Some(v) if (v == 1) == hidden.get(r.key_index) => m.recovered_ok += 1,
            Some(_) => m.wrong_bits += 1,
            None => m.unresolved += 1,
        }
    }
    let per_pass = [set.count(Polarity::Sa1), set.count(Polarity::Sa0), report.patterns_sa1, report.patterns_sa0];
    if per_pass.iter().any(|&n| n > k) || report.total_patterns > k {
        m.budget_violations += 1;
    }
    if report.total_queries > 2 * k as u64 {
        m.query_violations += 1;
    }
}

fn recovery_verdict(ms: &[&Matrix], runtime_limit: Option<f64>) -> Verdict {
    let all = ms
        .iter()
        .all(|m| m.recovered_ok == m.bits && m.wrong_bits == 0 && m.unresolved == 0 && m.query_violations == 0);
    let fast = runtime_limit.is_none_or(|t| ms.iter().all(|m| m.max_instance_secs < t));
    let detail = ms.iter().map(|m| m.summary()).collect::<Vec<_>>().join("; ");
    verdict(all && fast, detail)
}

fn criterion5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let (mut cases, mut patterns, mut verdicts) = (0, 0, 0);
    let mut failures = Vec::new();
    while cases < 1_000 {
        let Some((_, locked, _, scheme)) = common::random_locked(&mut rng, 12, 4) else { continue };
        cases += 1;
        let keys = locked.key_inputs().len();
        for i in 0..keys {
            for pol in [Polarity::Sa1, Polarity::Sa0] {
                let fault = FaultSpec::new(i, pol);
                let c = InjectionMap::all_but(keys, i, pol.value());
                let got = d_algorithm(&locked, fault, &c).expect("search");
                verdicts += 1;
                let testable = common::brute_force_testable(&locked, fault, &c);
                match got {
                    AtpgOutcome::Detected(p) => {
                        patterns += 1;
                        if !verify_pattern(&locked, &p) || !common::brute_force_verify(&locked, &p) {
                            failures.push(format!("{scheme} case {cases}: unsound {p}"));
                        }
                    }
                    AtpgOutcome::Untestable if testable => {
                        failures.push(format!("{scheme} case {cases}: k{i} {pol} wrongly untestable"))
                    }
                    AtpgOutcome::Untestable => {}
                }
            }
        }
    }
    let detail = format!(
        "{cases} cases, {patterns} patterns verified, {verdicts} verdicts checked, {} failures {:?}",
        failures.len(),
        failures.iter().take(3).collect::<Vec<_>>()
    );
    verdict(failures.is_empty(), detail)
}

fn criterion6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let (mut runs, mut mismatches) = (0, 0);
    while runs < 10_000 {
        let Some((_, locked, _, _)) = common::random_locked(&mut rng, 12, 4) else { continue };
        let keys = locked.key_inputs().len();
        let pi: Vec<Logic3> = (0..locked.inputs().len())
            .map(|_| [Logic3::Zero, Logic3::One, Logic3::X][rng.gen_range(0..3)])
            .collect();
        let i = rng.gen_range(0..keys);
        let fault = FaultSpec::new(i, if rng.gen() { Polarity::Sa1 } else { Polarity::Sa0 });
        let c = common::random_constraints(&mut rng, keys, i);
        let five = simulate5(&locked, &pi, fault, &c).unwrap();
        runs += 1;
        let mut key: Vec<Logic3> = (0..keys).map(|k| c.get(k).map_or(Logic3::X, Logic3::from)).collect();
        key[i] = Logic3::from(fault.activation_value());
        let good = simulate3(&locked, &pi, &key).unwrap();
        key[i] = Logic3::from(fault.polarity.value());
        let faulty = simulate3(&locked, &pi, &key).unwrap();
        for ((v, g), f) in five.iter().zip(&good).zip(&faulty) {
            let ok = if g.is_known() && f.is_known() {
                v.good() == *g && v.faulty() == *f
            } else {
                *v == Logic5::X
            };
            if !ok {
                mismatches += 1;
            }
        }
    }
    verdict(mismatches == 0, format!("{runs} runs, {mismatches} mismatching outputs"))
}

fn criterion7(ms: &[&Matrix]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut failures: Vec<String> = ms.iter().flat_map(|m| m.lock_failures.clone()).collect();
    let large: usize = ms.iter().map(|m| m.instances).sum();
    let mut small = 0;
    while small < 1_000 {
        let inputs = rng.gen_range(2..=16);
        let gates = rng.gen_range(8..=40);
        let original = common::random_circuit(&mut rng, inputs, gates);
        let scheme = [Scheme::Rll, Scheme::Sll, Scheme::SfllLite, Scheme::Combined][rng.gen_range(0..4)];
        let k = rng.gen_range(2..=6);
        let key = KeyVector::random(k, &mut rng);
        let seed = rng.gen();
        let spec = match scheme {
            Scheme::Combined => LockSpec::combined(k / 2, k - k / 2, seed),
            s => LockSpec::new(s, k, seed),
        };
        let Ok(locked) = lock(&original, &spec, &key) else { continue };
        small += 1;
        if let Err(e) = check_lock(&original, &locked, &key, seed) {
            failures.push(format!("small {scheme}: {e}"));
        }
    }
    let detail = format!(
        "{large} benchmark locks and {small} small locks, {} failures {:?}",
        failures.len(),
        failures.iter().take(3).collect::<Vec<_>>()
    );
    verdict(failures.is_empty(), detail)
}

fn main() {
    let t = Instant::now();
    let c432 = run_matrix("c432 RLL-32", "c432", |s| LockSpec::new(Scheme::Rll, 32, s), 32);
    let c2670 = run_matrix("c2670 RLL-128", "c2670", |s| LockSpec::new(Scheme::Rll, 128, s), 128);
    let c1355 = run_matrix("c1355 SLL-128", "c1355", |s| LockSpec::new(Scheme::Sll, 128, s), 128);
    let c1908 = run_matrix("c1908 SLL-128", "c1908", |s| LockSpec::new(Scheme::Sll, 128, s), 128);
    let comb = run_matrix("c2670 SFLL-40+RLL-40", "c2670", |s| LockSpec::combined(40, 40, s), 80);
    let all = [&c432, &c2670, &c1355, &c1908, &comb];

    let budget: usize = all.iter().map(|m| m.budget_violations).sum();
    let instances: usize = all.iter().map(|m| m.instances).sum();
    let replays: usize = all.iter().map(|m| m.replays).sum();
    let replay_bad: usize = all.iter().map(|m| m.replay_mismatches).sum();
    let determinism_bad: usize = all.iter().map(|m| m.determinism_mismatches).sum();

    let results = [
        (1, "full key recovery, RLL", recovery_verdict(&[&c432, &c2670], Some(60.0))),
        (2, "full key recovery, SLL", recovery_verdict(&[&c1355, &c1908], None)),
        (3, "full key recovery, SFLL-lite + RLL", recovery_verdict(&[&comb], None)),
        (
            4,
            "pattern budget",
            verdict(budget == 0, format!("{instances} instances, {budget} over |K| in some polarity pass")),
        ),
        (5, "ATPG soundness and completeness", criterion5()),
        (6, "D-calculus consistency", criterion6()),
        (7, "lock equivalence", criterion7(&all)),
        (
            8,
            "determinism and replay",
            verdict(
                replay_bad == 0 && determinism_bad == 0,
                format!("{replays} replays, {replay_bad} differing reports, {determinism_bad} non-reproducible locks or pattern files"),
            ),
        ),
    ];
    let mut failed = 0;
    for (id, name, v) in &results {
        println!("criterion {id} [{name}]: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.0}s", results.len() - failed, results.len(), t.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
