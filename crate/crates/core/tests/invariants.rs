use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use finality_lab::adversary::*;
use finality_lab::chain::{ChainRef, Round, Slot, TxId};
use finality_lab::cli::{parse_scenario, serialize_scenario, serialize_trace};
use finality_lab::ffg::{greatest, Lattice};
use finality_lab::forkchoice::*;
use finality_lab::messages::*;
use finality_lab::oracle::*;
use finality_lab::properties::*;
use finality_lab::simnet::{run, SimConfig, SleepSpan, Trace};
use finality_lab::slashing::*;
use finality_lab::validator::{phase_of, slot_of, voting_round, Phase, Variant};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tree_of(seed: u64) -> (View, Vec<ChainRef>) {
    let mut r = rng(seed);
    let blocks = r.gen_range(1..12);
    let slots = r.gen_range(2..9);
    random_tree(&mut r, blocks, slots)
}

fn path(view: &View, c: &ChainRef) -> Vec<ChainRef> {
    view.tree().ancestry(c).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chains_relate_in_exactly_one_way(seed in any::<u64>()) {
        let (view, ids) = tree_of(seed);
        let tree = view.tree();
        for a in &ids {
            for b in &ids {
                let ab = tree.is_prefix(a, b).unwrap() && a != b;
                let ba = tree.is_prefix(b, a).unwrap() && a != b;
                let cases = [a == b, ab, ba, tree.conflicts(a, b).unwrap()];
                prop_assert_eq!(cases.iter().filter(|x| **x).count(), 1);
            }
        }
    }

    #[test]
    fn kappa_prefix_is_deepest_below_bound(seed in any::<u64>(), k in 0i64..4, t in 0i64..9) {
        let (view, ids) = tree_of(seed);
        let tree = view.tree();
        for c in &ids {
            let got = tree.kappa_deep_prefix(c, k, t).unwrap();
            let p = path(&view, c);
            let at = p.iter().position(|x| *x == got).unwrap();
            if got != tree.genesis() {
                prop_assert!(tree.slot(&got).unwrap() <= t - k);
            }
            if at > 0 {
                prop_assert!(tree.slot(&p[at - 1]).unwrap() > t - k);
            }
        }
    }

    #[test]
    fn extend_builds_on_the_chain(seed in any::<u64>(), txs in prop::collection::btree_set(0u64..50, 0..6)) {
        let (mut view, ids) = tree_of(seed);
        let pool: BTreeSet<TxId> = txs.into_iter().map(TxId).collect();
        let c = ids[ids.len() - 1];
        let t = view.tree().slot(&c).unwrap() + 1;
        let b = Arc::new(view.tree().extend(&c, t, &pool).unwrap());
        prop_assert_eq!(b.parent, Some(c));
        view.insert(Message::Block(b.clone()));
        let tree = view.tree();
        prop_assert!(tree.is_prefix(&c, &b.id).unwrap() && c != b.id);
        for tx in &pool {
            prop_assert!(tree.contains_tx(&b.id, *tx).unwrap());
        }
    }

    #[test]
    fn max_chain_ignores_order(seed in any::<u64>()) {
        let (view, mut ids) = tree_of(seed);
        let tree = view.tree();
        let first = tree.max_chain(&ids);
        ids.shuffle(&mut rng(seed ^ 1));
        prop_assert_eq!(first, tree.max_chain(&ids));
        ids.reverse();
        prop_assert_eq!(first, tree.max_chain(&ids));
    }

    #[test]
    fn checkpoint_order_is_a_total_preorder(seed in any::<u64>()) {
        let f = random_ffg_fixture(&mut rng(seed));
        let cps: Vec<Checkpoint> = f.votes.iter().flat_map(|v| [v.source, v.target]).collect();
        let g = Checkpoint::genesis(&f.tree);
        for a in &cps {
            prop_assert!(checkpoint_leq(&g, a));
            for b in &cps {
                prop_assert!(checkpoint_leq(a, b) || checkpoint_leq(b, a));
                for c in &cps {
                    if checkpoint_leq(a, b) && checkpoint_leq(b, c) {
                        prop_assert!(checkpoint_leq(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn view_insertion_order_is_irrelevant(seed in any::<u64>()) {
        let f = random_fork_fixture(&mut rng(seed));
        let mut msgs: Vec<Message> = f.full.tree().blocks().filter(|b| !b.is_genesis()).map(|b| Message::Block(b.clone())).collect();
        msgs.extend(f.full.votes().iter().map(|v| Message::Vote(*v)));
        msgs.shuffle(&mut rng(seed ^ 2));
        let mut shuffled = View::new();
        for m in &msgs {
            shuffled.insert(m.clone());
        }
        prop_assert_eq!(&shuffled, &f.full);
        for m in &msgs {
            shuffled.insert(m.clone());
        }
        prop_assert_eq!(&shuffled, &f.full);
        prop_assert_eq!(shuffled.digest(), f.full.digest());
    }

    #[test]
    fn equivocators_only_grow(seed in any::<u64>()) {
        let f = random_fork_fixture(&mut rng(seed));
        let small = equivocators(f.partial.votes());
        let big = equivocators(f.full.votes());
        prop_assert!(small.is_subset(&big));
    }

    #[test]
    fn ffg_lattice_is_monotone_and_nested(seed in any::<u64>()) {
        let f = random_ffg_fixture(&mut rng(seed));
        let mut r = rng(seed ^ 3);
        let subset: Vec<FfgVote> = f.votes.iter().filter(|_| r.gen_bool(0.7)).copied().collect();
        let all = Lattice::compute(&f.tree, &f.votes, f.n);
        let part = Lattice::compute(&f.tree, &subset, f.n);
        prop_assert!(part.justified.is_subset(&all.justified));
        prop_assert!(part.finalized.is_subset(&all.finalized));
        prop_assert!(all.finalized.is_subset(&all.justified));
        prop_assert!(checkpoint_leq(&all.gf, &all.gj));
        prop_assert_eq!(Some(all.gj), greatest(&all.justified));
    }

    #[test]
    fn conflicting_justification_is_accountable(seed in any::<u64>()) {
        let f = random_ffg_fixture(&mut rng(seed));
        let lat = Lattice::compute(&f.tree, &f.votes, f.n);
        let flagged = detect_all(&f.votes, &[]);
        for fin in &lat.finalized {
            for j in &lat.justified {
                if j.c >= fin.c && f.tree.conflicts(&j.chain, &fin.chain).unwrap() {
                    prop_assert!(flagged.len() >= f.n.div_ceil(3), "{fin:?} vs {j:?}: {flagged:?}");
                }
            }
        }
    }

    #[test]
    fn detectors_are_monotone_and_self_evident(seed in any::<u64>()) {
        let f = random_ffg_fixture(&mut rng(seed));
        let mut r = rng(seed ^ 4);
        let subset: Vec<FfgVote> = f.votes.iter().filter(|_| r.gen_bool(0.5)).copied().collect();
        for (small, big) in [(detect_e1(&subset), detect_e1(&f.votes)), (detect_e2(&subset), detect_e2(&f.votes))] {
            prop_assert!(small.keys().all(|k| big.contains_key(k)));
        }
        for (who, e) in detect_all(&f.votes, &[]) {
            prop_assert!(e.holds());
            prop_assert_eq!(e.sender(), who);
        }
    }

    #[test]
    fn filters_are_idempotent_set_functions(seed in any::<u64>(), t in 0i64..8, eta in 1i64..4) {
        let f = random_fork_fixture(&mut rng(seed));
        let votes = f.full.votes();
        let once = fil_rlmd(votes, t, eta);
        prop_assert_eq!(fil_rlmd(&once, t, eta), once.clone());
        prop_assert_eq!(fil_lmd(&fil_lmd(votes)), fil_lmd(votes));
        prop_assert_eq!(fil_eq(&fil_eq(votes)), fil_eq(votes));
        let mut order: Vec<VoteMsg> = votes.iter().copied().collect();
        order.shuffle(&mut rng(seed ^ 5));
        prop_assert_eq!(fil_lmd(&order), fil_lmd(votes));
        prop_assert_eq!(fil_exp(&order, t, eta), fil_exp(votes, t, eta));
    }

    #[test]
    fn fork_choice_extends_root(seed in any::<u64>()) {
        let f = random_fork_fixture(&mut rng(seed));
        let tree = f.full.tree();
        for by_sender in [false, true] {
            let out = mfc(&f.partial, &f.full, &f.root, f.t, f.eta, by_sender).unwrap();
            prop_assert!(tree.extends(&out, &f.root));
        }
        let head = rlmd_ghost(&f.full, &f.root, f.t, f.eta).unwrap();
        prop_assert!(tree.extends(&head, &f.root));
        if tree.slot(&f.root).unwrap() <= f.t {
            prop_assert!(tree.slot(&head).unwrap() <= f.t);
        }
    }

    #[test]
    fn production_rules_match_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        prop_assert!(fork_fixture_agrees(&random_fork_fixture(&mut r)));
        prop_assert!(ffg_fixture_agrees(&random_ffg_fixture(&mut r)));
    }

    #[test]
    fn phases_fire_at_fixed_offsets(t in 0i64..100, delta in 1u64..5) {
        let start = 4 * delta * t as Round;
        prop_assert_eq!(phase_of(start, delta), Phase::Propose);
        prop_assert_eq!(phase_of(start + delta, delta), Phase::Vote);
        prop_assert_eq!(phase_of(start + 2 * delta, delta), Phase::FastConfirm);
        prop_assert_eq!(phase_of(start + 3 * delta, delta), Phase::Merge);
        prop_assert_eq!(voting_round(t, delta), start + delta);
        prop_assert_eq!(slot_of(start + 4 * delta - 1, delta), t);
    }
}

/// Constraint 1 and 5 recomputed directly from the per-round sets.
fn naive_constraint(rec: &MembershipRecord, t: Slot, eta: Slot, tob: bool) -> bool {
    let d = rec.delta as i64;
    let at = |r: i64, sets: &Vec<BTreeSet<ValidatorId>>| -> BTreeSet<ValidatorId> {
        if r < 0 {
            BTreeSet::new()
        } else {
            sets.get(r as usize).or(sets.last()).cloned().unwrap_or_default()
        }
    };
    let vote = |s: Slot| 4 * d * s + d;
    let hv = if vote(t) < rec.honest.len() as i64 { at(vote(t), &rec.honest) } else { BTreeSet::new() };
    let a_next = at(vote(t + 1), &rec.corrupt);
    let mut stale = BTreeSet::new();
    for r in vote(t - eta + 1).max(0)..=vote(t - 1).min(rec.honest.len() as i64 - 1) {
        stale.extend(rec.honest[r as usize].iter().filter(|v| !hv.contains(v)));
    }
    let rhs = a_next.union(&stale).count();
    if tob {
        hv.iter().filter(|v| !a_next.contains(v)).count() > rhs
    } else {
        hv.len() > rhs
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn compliance_evaluator_matches_set_arithmetic(seed in any::<u64>(), n in 2usize..7, eta in 1i64..4) {
        let mut r = rng(seed);
        let rounds = 24;
        let mut corrupt = Vec::new();
        let mut cur = BTreeSet::new();
        let mut honest = Vec::new();
        for _ in 0..rounds {
            if r.gen_bool(0.05) {
                cur.insert(ValidatorId(r.gen_range(0..n as u32)));
            }
            corrupt.push(cur.clone());
            honest.push((0..n as u32).map(ValidatorId).filter(|v| !cur.contains(v) && r.gen_bool(0.8)).collect());
        }
        let rec = MembershipRecord { n, delta: 1, honest, corrupt };
        for t in 0..6 {
            prop_assert_eq!(eval_constraint_1(&rec, t, eta), naive_constraint(&rec, t, eta, true));
            prop_assert_eq!(eval_constraint_5(&rec, t, eta), naive_constraint(&rec, t, eta, false));
        }
    }
}

fn behavior() -> impl Strategy<Value = Behavior> {
    prop_oneof![
        Just(Behavior::Passive),
        Just(Behavior::Silent),
        Just(Behavior::Equivocator),
        (1i64..3).prop_map(|hold| Behavior::FfgWithholder { hold }),
    ]
}

fn network() -> impl Strategy<Value = Network> {
    prop_oneof![Just(Network::Prompt), Just(Network::MaxDelay), Just(Network::Random)]
}

prop_compose! {
    fn small_config()(
        n in 3usize..8,
        variant in prop::sample::select(Variant::ALL.to_vec()),
        slots in 3u64..8,
        seed in any::<u64>(),
        faulty in 0usize..3,
        behavior in behavior(),
        network in network(),
        gst_slots in 0u64..2,
        acks in any::<bool>(),
        naps in prop::collection::vec((0u32..8, 0u64..20, 1u64..8), 0..3),
    ) -> SimConfig {
        let mut cfg = SimConfig::new(n, variant, slots, seed);
        let f = faulty.min((n - 1) / 3);
        cfg.corrupt = (0..f as u32).map(|i| (ValidatorId(n as u32 - 1 - i), 4 * i as Round)).collect();
        cfg.behavior = behavior;
        cfg.network = network;
        cfg.gst = 4 * gst_slots;
        cfg.acks = acks && variant.has_ffg();
        let mut sleep: Vec<SleepSpan> = Vec::new();
        for (id, from, len) in naps {
            let id = ValidatorId(id % n as u32);
            if cfg.corrupt.contains_key(&id) || sleep.iter().any(|s| s.id == id) {
                continue;
            }
            let from = from.min(cfg.num_rounds() - 1);
            sleep.push(SleepSpan { id, from, to: (from + len).min(cfg.num_rounds()) });
        }
        cfg.sleep = sleep;
        cfg.txs = (0..slots).map(|t| (4 * t + 1, TxId(t))).collect();
        cfg
    }
}

fn authored_by_sender_or_corrupt(trace: &Trace) -> bool {
    trace.sends.iter().filter(|s| !s.relay).all(|s| {
        let author = trace.messages[s.msg].1.author();
        author.is_none_or(|a| a == s.from || trace.rounds[s.round as usize].corrupt.contains(&a))
    })
}

/// Slot-0 links start and end at the genesis checkpoint and are never valid.
fn honest_votes_well_formed(trace: &Trace) -> bool {
    trace.honest_sent().all(|m| match m {
        Message::Vote(v) => v.ffg.is_none_or(|f| {
            (v.slot == 0 || ffg_vote_valid(&f, &trace.tree)) && trace.tree.extends(&v.chain, &f.target.chain)
        }),
        _ => true,
    })
}

/// Post-GST messages outside the window reach every validator awake through the next Δ rounds,
/// either by delivery or because the validator itself relayed them.
fn prompt_delivery(trace: &Trace) -> Result<(), String> {
    let cfg = &trace.config;
    let d = cfg.delta;
    for (i, (r, m)) in trace.messages.iter().enumerate() {
        let r = *r;
        if r < cfg.gst || cfg.window().is_some_and(|(lo, hi)| r >= lo && r < hi) || r + d >= cfg.num_rounds() {
            continue;
        }
        let steady: BTreeSet<ValidatorId> = (r..=r + d)
            .map(|x| trace.rounds[x as usize].outputs.keys().copied().collect::<BTreeSet<_>>())
            .reduce(|a, b| a.intersection(&b).copied().collect())
            .unwrap_or_default();
        for v in steady {
            if m.author() == Some(v) {
                continue;
            }
            let got = trace.deliveries.iter().any(|x| x.msg == i && x.to == v && x.round <= r + d)
                || trace.sends.iter().any(|s| s.msg == i && s.from == v && s.round <= r + d);
            if !got {
                return Err(format!("message {i} sent at {r} not delivered to {v:?} by {}", r + d));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_runs_keep_structural_invariants(cfg in small_config()) {
        let trace = run(&cfg).unwrap();
        prop_assert!(check_prefix_and_monotone(&trace).is_pass(), "{}", check_prefix_and_monotone(&trace));
        prop_assert!(check_honest_unslashable(&trace).is_pass(), "{}", check_honest_unslashable(&trace));
        prop_assert!(honest_votes_well_formed(&trace));
        prop_assert!(authored_by_sender_or_corrupt(&trace));
        prop_assert_eq!(prompt_delivery(&trace), Ok(()));
        prop_assert!(check_finalized_safety_and_accountability(&trace).is_pass());
    }

    #[test]
    fn runs_are_reproducible(cfg in small_config()) {
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        prop_assert_eq!(serialize_trace(&a), serialize_trace(&b));
        prop_assert_eq!(run_all(&a), run_all(&b));
    }

    #[test]
    fn scenarios_round_trip(cfg in small_config(), pi in 0u32..3, t_a in 0i64..3, kappa in 2i64..5) {
        let mut cfg = cfg;
        cfg.kappa = kappa;
        if pi > 0 {
            cfg.pi = pi;
            cfg.t_a = Some(t_a);
        }
        let text = serialize_scenario(&cfg);
        prop_assert_eq!(parse_scenario(&text).unwrap(), cfg);
    }
}
