mod common;

use keyfault::atpg::{d_algorithm, AtpgOutcome};
use keyfault::circuits;
use keyfault::keys::{FaultSpec, InjectionMap, KeyVector};
use keyfault::logic::{Logic3, Polarity};
use keyfault::parse_bench;
use keyfault::sim::{outputs_packed, simulate3, simulate5, simulate_injected, vector_blocks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_logic3(rng: &mut impl Rng, n: usize) -> Vec<Logic3> {
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => Logic3::Zero,
            1 => Logic3::One,
            _ => Logic3::X,
        })
        .collect()
}

#[test]
fn c17_matches_truth_table() {
    let c17 = parse_bench(circuits::C17).unwrap();
    for row in 0u64..32 {
        let pi = common::bits(row, 5);
        let want: Vec<Logic3> = common::eval(&c17, &pi, &[]).into_iter().map(Logic3::from).collect();
        let pi3: Vec<Logic3> = pi.iter().map(|&b| Logic3::from(b)).collect();
        assert_eq!(simulate3(&c17, &pi3, &[]).unwrap(), want, "row {row}");
    }
}

#[test]
fn five_valued_projections_match_ternary_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2_000 {
        let Some((_, locked, _, _)) = common::random_locked(&mut rng, 10, 4) else { continue };
        let keys = locked.key_inputs().len();
        let pi = random_logic3(&mut rng, locked.inputs().len());
        let i = rng.gen_range(0..keys);
        let fault = FaultSpec::new(i, if rng.gen() { Polarity::Sa1 } else { Polarity::Sa0 });
        let constraints = common::random_constraints(&mut rng, keys, i);
        let five = simulate5(&locked, &pi, fault, &constraints).unwrap();
        let mut key: Vec<Logic3> = (0..keys).map(|k| constraints.get(k).map_or(Logic3::X, Logic3::from)).collect();
        key[i] = Logic3::from(fault.activation_value());
        let good = simulate3(&locked, &pi, &key).unwrap();
        key[i] = Logic3::from(fault.polarity.value());
        let faulty = simulate3(&locked, &pi, &key).unwrap();
        for ((v, g), f) in five.iter().zip(&good).zip(&faulty) {
            if g.is_known() && f.is_known() {
                assert_eq!((v.good(), v.faulty()), (*g, *f));
            } else {
                assert_eq!(*v, keyfault::Logic5::X);
            }
        }
    }
}

#[test]
fn total_injection_hides_the_stored_key() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut done = 0;
    while done < 100 {
        let Some((_, locked, _, _)) = common::random_locked(&mut rng, 6, 3) else { continue };
        let keys = locked.key_inputs().len();
        let inj = InjectionMap::all(keys, rng.gen());
        let pis = locked.inputs().len();
        for row in 0u64..1 << pis {
            let pi: Vec<Logic3> = common::bits(row, pis).into_iter().map(Logic3::from).collect();
            let outs: Vec<_> = (0u64..1 << keys)
                .map(|k| simulate_injected(&locked, &pi, &KeyVector::new(common::bits(k, keys)), &inj).unwrap())
                .collect();
            assert!(outs.windows(2).all(|w| w[0] == w[1]));
        }
        done += 1;
    }
}

#[test]
fn refining_x_never_changes_known_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2_000 {
        let (inputs, gates) = (rng.gen_range(1..8), rng.gen_range(1..30));
        let n = common::random_circuit(&mut rng, inputs, gates);
        let pi = random_logic3(&mut rng, n.inputs().len());
        let before = simulate3(&n, &pi, &[]).unwrap();
        let mut refined = pi.clone();
        for v in refined.iter_mut().filter(|v| !v.is_known()) {
            if rng.gen() {
                *v = Logic3::from(rng.gen::<bool>());
            }
        }
        let after = simulate3(&n, &refined, &[]).unwrap();
        for (b, a) in before.iter().zip(&after) {
            assert!(b.covers(*a));
        }
    }
}

#[test]
fn partial_injection_exposes_the_free_key_bit() {
    let n = parse_bench(
        "INPUT(a)\nINPUT(b)\nINPUT(keyinput0)\nINPUT(keyinput1)\nINPUT(keyinput2)\nOUTPUT(y)\n\
         n1 = XOR(a, keyinput0)\nn2 = AND(n1, keyinput1)\nn3 = OR(b, keyinput2)\ny = NAND(n2, n3)",
    )
    .unwrap();
    let c = InjectionMap::all_but(3, 0, true);
    let AtpgOutcome::Detected(p) = d_algorithm(&n, FaultSpec::sa1(0), &c).unwrap() else { panic!() };
    let pi: Vec<Logic3> = p.filled().into_iter().map(Logic3::from).collect();
    let y = |k0: bool| simulate_injected(&n, &pi, &KeyVector::new(vec![k0, false, false]), &c).unwrap();
    assert_ne!(y(false), y(true));
}

#[test]
fn packed_matches_scalar_on_locked_circuits() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut done = 0;
    while done < 50 {
        let Some((_, locked, key, _)) = common::random_locked(&mut rng, 10, 4) else { continue };
        let kw = keyfault::sim::key_words(key.bits());
        for block in vector_blocks(locked.inputs().len(), 16, 0, 0) {
            let po = outputs_packed(&locked, &block.words, &kw);
            for lane in 0..block.lanes {
                let want = common::eval(&locked, &block.lane(lane), key.bits());
                let got: Vec<bool> = po.iter().map(|w| w >> lane & 1 == 1).collect();
                assert_eq!(got, want);
            }
        }
        done += 1;
    }
}
