//! Locks a benchmark, generates patterns once, and attacks a batch of
//! random hidden keys.
//!
//! cargo run --release -p keyfault --example attack_matrix -- c432 rll 32 [seeds] [keys]

use std::time::Instant;

use keyfault::atpg::{generate_pattern_set_with, AtpgConfig};
use keyfault::attack::{random_keys, run_attack_with, AttackOptions};
use keyfault::bench::{parse_bench_with, ParseOptions};
use keyfault::{circuits, lock, LockSpec, Polarity, Scheme, SimOracle};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("c432", String::as_str);
    let scheme: Scheme = args.get(1).map_or("rll", String::as_str).parse().expect("scheme");
    let size: usize = args.get(2).map_or(32, |s| s.parse().expect("key size"));
    let seeds: u64 = args.get(3).map_or(1, |s| s.parse().expect("seeds"));
    let nkeys: usize = args.get(4).map_or(5, |s| s.parse().expect("keys"));
    let text = circuits::by_name(name).expect("unknown circuit");
    let original = parse_bench_with(text, &ParseOptions::named(name)).unwrap();

    for seed in 0..seeds {
        let spec = match scheme {
            Scheme::Combined => LockSpec::combined(size / 2, size - size / 2, seed),
            s => LockSpec::new(s, size, seed),
        };
        let t = Instant::now();
        let (mut ok, mut worst_atpg, mut sa1, mut sa0, mut rounds) = (0, 0.0f64, 0, 0, 0);
        for hidden in random_keys(size, nkeys, seed) {
            let locked = lock(&original, &spec, &hidden).unwrap().netlist;
            let a = Instant::now();
            let config = AtpgConfig { parallel: true, ..AtpgConfig::default() };
            let set = generate_pattern_set_with(&locked, Polarity::Sa1, &config);
            worst_atpg = worst_atpg.max(a.elapsed().as_secs_f64());
            let opts = AttackOptions { patterns: Some(set), ..AttackOptions::default() };
            let oracle = SimOracle::new(locked.clone(), hidden.clone()).unwrap();
            let r = run_attack_with(&locked, &oracle, &opts).unwrap();
            sa1 = sa1.max(r.patterns_sa1);
            sa0 = sa0.max(r.patterns_sa0);
            rounds = rounds.max(r.refinement_rounds);
            if r.recovered() == Some(hidden) {
                ok += 1;
            } else {
                println!("  miss: unresolved {:?}", r.unresolved());
            }
        }
        println!(
            "seed {seed}: {ok}/{nkeys} recovered in {:.2?}; worst atpg {worst_atpg:.2}s, max sa1 {sa1} sa0 {sa0}, rounds {rounds}",
            t.elapsed()
        );
    }
}
