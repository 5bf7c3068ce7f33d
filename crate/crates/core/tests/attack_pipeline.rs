mod common;

use std::sync::Mutex;

use keyfault::atpg::generate_pattern_set;
use keyfault::attack::{random_keys, run_attack, run_attack_with, verify_recovered_key, AttackOptions, BitStatus};
use keyfault::bench::{parse_bench_with, ParseOptions};
use keyfault::keys::{InjectionMap, KeyVector};
use keyfault::locking::{lock, LockSpec, Scheme};
use keyfault::logic::{Logic3, Polarity};
use keyfault::netlist::{Netlist, Shape};
use keyfault::oracle::{Oracle, OracleError, OracleSession, ReplayOracle, SimOracle};
use keyfault::sim::simulate3;
use keyfault::circuits;

fn c432() -> Netlist {
    parse_bench_with(circuits::C432, &ParseOptions::named("c432")).unwrap()
}

fn locked_c432(key: &KeyVector) -> Netlist {
    lock(&c432(), &LockSpec::new(Scheme::Rll, 32, 7), key).unwrap().netlist
}

/// Forwards to an inner oracle and logs every injection map it is asked for.
struct Spy<'a> {
    inner: &'a dyn Oracle,
    opened: Mutex<Vec<InjectionMap>>,
}

impl Oracle for Spy<'_> {
    fn shape(&self) -> Shape {
        self.inner.shape()
    }

    fn open_session(&self, injection: InjectionMap) -> Result<OracleSession, OracleError> {
        self.opened.lock().unwrap().push(injection.clone());
        self.inner.open_session(injection)
    }

    fn query(&self, session: &mut OracleSession, pi: &[bool]) -> Result<Vec<bool>, OracleError> {
        self.inner.query(session, pi)
    }
}

#[test]
fn c432_rll_recovers_random_keys() {
    for hidden in random_keys(32, 20, 1) {
        let locked = locked_c432(&hidden);
        let oracle = SimOracle::new(locked.clone(), hidden.clone()).unwrap();
        let report = run_attack(&locked, &oracle).unwrap();
        assert_eq!(report.recovered(), Some(hidden.clone()));
        assert!(report.total_patterns <= 32);
        assert!(report.patterns_sa1 <= 32 && report.patterns_sa0 <= 32);
        assert!(verify_recovered_key(&locked, &hidden, &oracle).unwrap());
    }
}

#[test]
fn fully_injected_session_answers_like_the_all_ones_key() {
    let hidden = random_keys(32, 1, 2).remove(0);
    let locked = locked_c432(&hidden);
    let oracle = SimOracle::new(locked.clone(), hidden).unwrap();
    let set = generate_pattern_set(&locked, Polarity::Sa1);
    let mut cf = oracle.open_session(InjectionMap::all(32, true)).unwrap();
    let ones = vec![Logic3::One; 32];
    for p in &set.patterns {
        let got = oracle.query(&mut cf, &p.filled()).unwrap();
        let pi: Vec<Logic3> = p.filled().into_iter().map(Logic3::from).collect();
        let want: Vec<bool> = simulate3(&locked, &pi, &ones).unwrap().into_iter().map(|v| v.to_bool().unwrap()).collect();
        assert_eq!(got, want);
    }
    assert_eq!(cf.query_count(), set.patterns.len() as u64);
}

#[test]
fn attack_uses_only_fault_configured_sessions() {
    let hidden = random_keys(32, 1, 3).remove(0);
    let locked = locked_c432(&hidden);
    let sim = SimOracle::new(locked.clone(), hidden.clone()).unwrap();
    let spy = Spy { inner: &sim, opened: Mutex::new(Vec::new()) };
    let report = run_attack(&locked, &spy).unwrap();
    assert_eq!(report.recovered(), Some(hidden));
    let opened = spy.opened.into_inner().unwrap();
    // one C_F per polarity used, one C_A per bit, never an uninjected chip
    assert!(opened.iter().all(|m| !m.is_empty()));
    let full = opened.iter().filter(|m| m.len() == 32).count();
    let all_but_one = opened.iter().filter(|m| m.len() == 31).count();
    assert!(full <= 2);
    assert_eq!(all_but_one, 32);
    assert_eq!(report.total_queries, 2 * report.total_patterns as u64);
    let queries: u64 = report.resolutions.iter().map(|r| r.queries_used).sum();
    assert_eq!(queries, report.total_queries);
}

#[test]
fn replay_reproduces_the_report() {
    let hidden = random_keys(32, 1, 4).remove(0);
    let locked = locked_c432(&hidden);
    let sim = SimOracle::new(locked.clone(), hidden).unwrap();
    let live = run_attack(&locked, &sim).unwrap();
    let text = sim.transcript().to_text();
    let replay = ReplayOracle::new(keyfault::oracle::Transcript::parse(&text).unwrap());
    let again = run_attack(&locked, &replay).unwrap();
    assert_eq!(live.to_json(), again.to_json());
    assert_eq!(replay.remaining(), 0);
}

#[test]
fn replay_rejects_a_different_attack() {
    let hidden = random_keys(32, 1, 5).remove(0);
    let locked = locked_c432(&hidden);
    let sim = SimOracle::new(locked.clone(), hidden).unwrap();
    run_attack(&locked, &sim).unwrap();
    let replay = ReplayOracle::new(sim.transcript());
    let opts = AttackOptions { polarity: Polarity::Sa0, ..AttackOptions::default() };
    assert!(run_attack_with(&locked, &replay, &opts).is_err());
}

#[test]
fn wrong_keys_fail_verification() {
    let hidden = random_keys(32, 1, 6).remove(0);
    let locked = locked_c432(&hidden);
    let oracle = SimOracle::new(locked.clone(), hidden.clone()).unwrap();
    for i in [0, 13, 31] {
        assert!(!verify_recovered_key(&locked, &hidden.with_flipped(i), &oracle).unwrap());
    }

    let c17 = parse_bench_with(circuits::C17, &ParseOptions::named("c17")).unwrap();
    let key: KeyVector = "101".parse().unwrap();
    let sfll = lock(&c17, &LockSpec::new(Scheme::SfllLite, 3, 2), &key).unwrap().netlist;
    let oracle = SimOracle::new(sfll.clone(), key.clone()).unwrap();
    assert!(verify_recovered_key(&sfll, &key, &oracle).unwrap());
    for i in 0..3 {
        assert!(!verify_recovered_key(&sfll, &key.with_flipped(i), &oracle).unwrap());
    }
}

#[test]
fn every_scheme_on_small_circuits() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
    let mut done = 0;
    while done < 300 {
        let Some((_, locked, key, scheme)) = common::random_locked(&mut rng, 10, 4) else { continue };
        let oracle = SimOracle::new(locked.clone(), key.clone()).unwrap();
        let report = run_attack(&locked, &oracle).unwrap();
        // every recovered bit is right; unresolved bits are reported, not guessed
        for r in &report.resolutions {
            if r.status == BitStatus::Recovered {
                assert_eq!(r.value, Some(u8::from(key.get(r.key_index))), "{scheme}");
            } else {
                assert_eq!(r.value, None);
            }
        }
        done += 1;
    }
}
