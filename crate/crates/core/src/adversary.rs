//! Byzantine behaviours, network delay strategies and the participation constraints
//! that make a run eligible for the protocol guarantees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{Block, Round, Slot, TxId};
use crate::messages::{Message, ValidatorId, VoteMsg};
use crate::simnet::{SimConfig, SleepSpan, Trace};
use crate::validator::{activation_round, slot_of, Status, Validator};

/// What corrupted validators do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Behavior {
    /// Keep running the honest protocol.
    Passive,
    /// Send nothing.
    Silent,
    /// Cast a second vote for a fresh sibling block every slot, reusing the FFG part.
    Equivocator,
    /// Run one honest replica per partition group, so each group sees a consistent but
    /// different voter.
    DoubleFfg,
    /// Run honestly but hold every vote back for `hold` slots.
    FfgWithholder { hold: Slot },
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::Passive => f.write_str("passive"),
            Behavior::Silent => f.write_str("silent"),
            Behavior::Equivocator => f.write_str("equivocator"),
            Behavior::DoubleFfg => f.write_str("double_ffg"),
            Behavior::FfgWithholder { hold } => write!(f, "ffg_withholder:{hold}"),
        }
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None => match s {
                "passive" => Ok(Behavior::Passive),
                "silent" => Ok(Behavior::Silent),
                "equivocator" => Ok(Behavior::Equivocator),
                "double_ffg" => Ok(Behavior::DoubleFfg),
                "ffg_withholder" => Ok(Behavior::FfgWithholder { hold: 2 }),
                _ => Err(format!("unknown behavior `{s}`")),
            },
            Some(("ffg_withholder", h)) => {
                h.parse().map(|hold| Behavior::FfgWithholder { hold }).map_err(|_| format!("bad hold `{h}`"))
            }
            _ => Err(format!("unknown behavior `{s}`")),
        }
    }
}

/// How the adversary schedules deliveries within the model's bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Network {
    Prompt,
    MaxDelay,
    Random,
    /// Before GST, messages between validators that share no group arrive at the bound.
    Partition(Vec<BTreeSet<ValidatorId>>),
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Network::Prompt => f.write_str("prompt"),
            Network::MaxDelay => f.write_str("max_delay"),
            Network::Random => f.write_str("random"),
            Network::Partition(groups) => {
                f.write_str("partition:")?;
                let parts: Vec<String> =
                    groups.iter().map(|g| g.iter().map(|v| v.0.to_string()).collect::<Vec<_>>().join(",")).collect();
                f.write_str(&parts.join("/"))
            }
        }
    }
}

impl FromStr for Network {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prompt" => Ok(Network::Prompt),
            "max_delay" => Ok(Network::MaxDelay),
            "random" => Ok(Network::Random),
            _ => {
                let spec = s.strip_prefix("partition:").ok_or_else(|| format!("unknown network `{s}`"))?;
                let mut groups = Vec::new();
                for part in spec.split('/') {
                    let mut g = BTreeSet::new();
                    for id in part.split(',').filter(|x| !x.is_empty()) {
                        g.insert(ValidatorId(id.parse().map_err(|_| format!("bad validator id `{id}`"))?));
                    }
                    groups.push(g);
                }
                Ok(Network::Partition(groups))
            }
        }
    }
}

impl Network {
    pub fn groups(&self) -> &[BTreeSet<ValidatorId>] {
        match self {
            Network::Partition(g) => g,
            _ => &[],
        }
    }

    fn separated(&self, a: ValidatorId, b: ValidatorId) -> bool {
        match self {
            Network::Partition(groups) => !groups.iter().any(|g| g.contains(&a) && g.contains(&b)),
            _ => false,
        }
    }

    /// Delivery round in `[send + 1, bound]`.
    pub fn pick(&self, send: Round, bound: Round, before_gst: bool, from: ValidatorId, to: ValidatorId, rng: &mut ChaCha8Rng) -> Round {
        let earliest = send + 1;
        let bound = bound.max(earliest);
        match self {
            Network::Prompt => earliest,
            Network::MaxDelay => bound,
            Network::Random => rng.gen_range(earliest..=bound),
            Network::Partition(_) => {
                if before_gst && self.separated(from, to) {
                    bound
                } else {
                    earliest
                }
            }
        }
    }
}

/// A message emitted by the adversary. `group` restricts recipients to one partition group.
#[derive(Clone, Debug)]
pub struct Outgoing {
    pub from: ValidatorId,
    pub msg: Message,
    pub relay: bool,
    pub group: Option<usize>,
}

#[derive(Clone, Debug)]
struct Replica {
    state: Validator,
    group: Option<usize>,
}

const MARKER_BASE: u64 = 1 << 62;

/// Runtime for all corrupted validators of one simulation.
#[derive(Debug)]
pub struct Adversary {
    behavior: Behavior,
    groups: Vec<BTreeSet<ValidatorId>>,
    delta: u64,
    replicas: BTreeMap<ValidatorId, Vec<Replica>>,
    held: Vec<(Slot, ValidatorId, Message)>,
}

impl Adversary {
    pub fn new(behavior: Behavior, network: &Network, delta: u64) -> Adversary {
        Adversary { behavior, groups: network.groups().to_vec(), delta, replicas: BTreeMap::new(), held: Vec::new() }
    }

    pub fn corrupted(&self) -> impl Iterator<Item = &ValidatorId> {
        self.replicas.keys()
    }

    /// Takes over `state`; corrupted validators stay awake from now on.
    pub fn corrupt(&mut self, mut state: Validator) {
        state.status = Status::Active;
        let id = state.id;
        let replicas = if self.behavior == Behavior::DoubleFfg && !self.groups.is_empty() {
            self.groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.contains(&id))
                .map(|(i, _)| Replica { state: state.clone(), group: Some(i) })
                .collect()
        } else {
            vec![Replica { state, group: None }]
        };
        self.replicas.insert(id, replicas);
    }

    fn route(&self, from: ValidatorId, tag: Option<usize>) -> Option<usize> {
        if self.behavior != Behavior::DoubleFfg || self.groups.is_empty() {
            return None;
        }
        tag.or_else(|| self.groups.iter().position(|g| g.contains(&from)))
    }

    /// Hands a delivered message to the replicas of `to`; returns relays for passive validators.
    pub fn deliver(&mut self, r: Round, to: ValidatorId, from: ValidatorId, tag: Option<usize>, msg: &Message) -> Vec<Outgoing> {
        let group = self.route(from, tag);
        let passive = self.behavior == Behavior::Passive;
        let Some(reps) = self.replicas.get_mut(&to) else { return Vec::new() };
        let mut out = Vec::new();
        for rep in reps.iter_mut().filter(|rep| group.is_none() || rep.group == group) {
            let ins = rep.state.receive(r, msg.clone());
            if passive {
                out.extend(ins.fresh.into_iter().map(|m| Outgoing { from: to, msg: m, relay: true, group: None }));
            }
        }
        out
    }

    /// Messages corrupted validators send at round `r`.
    pub fn act(&mut self, r: Round, pool: &BTreeSet<TxId>) -> Vec<Outgoing> {
        let t = slot_of(r, self.delta);
        let mut out = Vec::new();
        if r.is_multiple_of(4 * self.delta) {
            let (due, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.held).into_iter().partition(|(s, _, _)| *s <= t);
            self.held = keep;
            out.extend(due.into_iter().map(|(_, from, msg)| Outgoing { from, msg, relay: false, group: None }));
        }
        for (id, reps) in self.replicas.iter_mut() {
            for rep in reps.iter_mut() {
                let mut own_pool = pool.clone();
                if let Some(g) = rep.group {
                    own_pool.insert(TxId(MARKER_BASE + g as u64));
                }
                let msgs = rep.state.on_round(r, &own_pool);
                for msg in msgs {
                    match (&self.behavior, &msg) {
                        (Behavior::Silent, _) => {}
                        (Behavior::Equivocator, Message::Vote(v)) => {
                            let (block, alt) = equivocation(&rep.state, v, t);
                            out.push(Outgoing { from: *id, msg, relay: false, group: None });
                            out.push(Outgoing { from: *id, msg: Message::Block(block), relay: false, group: None });
                            out.push(Outgoing { from: *id, msg: Message::Vote(alt), relay: false, group: None });
                        }
                        (Behavior::FfgWithholder { hold }, Message::Vote(_)) => self.held.push((t + hold, *id, msg)),
                        _ => out.push(Outgoing { from: *id, msg, relay: false, group: rep.group }),
                    }
                }
            }
        }
        out
    }
}

/// A sibling of the honest vote chain at slot `t` and a vote for it with the same FFG part.
fn equivocation(state: &Validator, v: &VoteMsg, t: Slot) -> (Arc<Block>, VoteMsg) {
    let tree = state.view.tree();
    let parent = tree.parent(&v.chain).unwrap_or(v.chain);
    let marker = TxId(MARKER_BASE + (1 << 40) + ((v.sender.0 as u64) << 24) + t as u64);
    let block = Arc::new(Block::new(parent, t, [marker].into_iter().collect()));
    let alt = VoteMsg { chain: block.id, ffg: v.ffg, slot: t, sender: v.sender };
    (block, alt)
}

/// Honest-active and corrupted sets per round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipRecord {
    pub n: usize,
    pub delta: u64,
    pub honest: Vec<BTreeSet<ValidatorId>>,
    pub corrupt: Vec<BTreeSet<ValidatorId>>,
}

impl MembershipRecord {
    pub fn from_trace(trace: &Trace) -> MembershipRecord {
        MembershipRecord {
            n: trace.config.n,
            delta: trace.config.delta,
            honest: trace.rounds.iter().map(|r| r.honest.clone()).collect(),
            corrupt: trace.rounds.iter().map(|r| r.corrupt.clone()).collect(),
        }
    }

    /// Membership implied by the schedules alone, without running the protocol.
    pub fn predicted(cfg: &SimConfig) -> MembershipRecord {
        let rounds = cfg.num_rounds() as usize;
        let mut honest = vec![BTreeSet::new(); rounds];
        let mut corrupt = vec![BTreeSet::new(); rounds];
        for i in 0..cfg.n as u32 {
            let id = ValidatorId(i);
            let mut spans: Vec<&SleepSpan> = cfg.sleep.iter().filter(|s| s.id == id).collect();
            spans.sort_by_key(|s| s.from);
            let corrupt_at = cfg.corrupt.get(&id).copied();
            for (r, (h, a)) in honest.iter_mut().zip(corrupt.iter_mut()).enumerate() {
                let r = r as Round;
                if corrupt_at.is_some_and(|c| r >= c) {
                    a.insert(id);
                    continue;
                }
                let asleep = spans.iter().any(|s| s.from <= r && r < s.to);
                let joining = spans.iter().filter(|s| s.to <= r).any(|s| r < activation_round(s.to, cfg.delta));
                if !asleep && !joining {
                    h.insert(id);
                }
            }
        }
        MembershipRecord { n: cfg.n, delta: cfg.delta, honest, corrupt }
    }

    fn len(&self) -> i64 {
        self.honest.len() as i64
    }

    pub fn h(&self, r: i64) -> BTreeSet<ValidatorId> {
        if r < 0 || r >= self.len() {
            BTreeSet::new()
        } else {
            self.honest[r as usize].clone()
        }
    }

    /// Corrupted set; rounds past the end reuse the final set.
    pub fn a(&self, r: i64) -> BTreeSet<ValidatorId> {
        if r < 0 || self.corrupt.is_empty() {
            return BTreeSet::new();
        }
        self.corrupt[(r.min(self.len() - 1)) as usize].clone()
    }

    pub fn a_inf(&self) -> BTreeSet<ValidatorId> {
        self.corrupt.last().cloned().unwrap_or_default()
    }

    pub fn h_range(&self, from: i64, to: i64) -> BTreeSet<ValidatorId> {
        let mut out = BTreeSet::new();
        for r in from.max(0)..=to.min(self.len() - 1) {
            out.extend(self.honest[r as usize].iter().copied());
        }
        out
    }

    pub fn voting(&self, t: Slot) -> i64 {
        4 * self.delta as i64 * t + self.delta as i64
    }
}

fn union(a: &BTreeSet<ValidatorId>, b: &BTreeSet<ValidatorId>) -> usize {
    a.union(b).count()
}

fn minus(a: &BTreeSet<ValidatorId>, b: &BTreeSet<ValidatorId>) -> BTreeSet<ValidatorId> {
    a.difference(b).copied().collect()
}

/// Stale-participant term shared by the per-slot constraints.
fn stale(rec: &MembershipRecord, t: Slot, eta: Slot) -> BTreeSet<ValidatorId> {
    let hv = rec.h(rec.voting(t));
    minus(&rec.h_range(rec.voting(t - eta + 1), rec.voting(t - 1)), &hv)
}

pub fn eval_constraint_1(rec: &MembershipRecord, t: Slot, eta: Slot) -> bool {
    let hv = rec.h(rec.voting(t));
    let a_next = rec.a(rec.voting(t + 1));
    minus(&hv, &a_next).len() > union(&a_next, &stale(rec, t, eta))
}

pub fn eval_constraint_2(rec: &MembershipRecord, t_a: Slot, pi: u32, eta: Slot) -> bool {
    if pi == 0 {
        return true;
    }
    let ha = rec.h(rec.voting(t_a));
    (t_a + 1..=t_a + pi as Slot + 2).all(|tp| {
        let a_tp = rec.a(rec.voting(tp));
        let late = minus(&rec.h_range(rec.voting(tp - eta), rec.voting(tp - 1)), &ha);
        minus(&ha, &a_tp).len() > union(&a_tp, &late)
    })
}

pub fn eval_constraint_3(rec: &MembershipRecord, t_a: Slot, pi: u32) -> bool {
    if pi == 0 {
        return true;
    }
    let ha = rec.h(rec.voting(t_a));
    let after = rec.h(rec.voting(t_a) + rec.delta as i64);
    minus(&ha, &rec.a(rec.voting(t_a + 1))).is_subset(&after)
}

/// Wake-ups during the window plus every corrupted validator must stay below `num/den` of n.
pub fn eval_constraint_4(rec: &MembershipRecord, t_a: Slot, pi: u32, threshold: (usize, usize)) -> bool {
    if pi == 0 {
        return true;
    }
    let woke = minus(&rec.h_range(rec.voting(t_a + 1), rec.voting(t_a + pi as Slot + 1)), &rec.h(rec.voting(t_a)));
    let size = union(&woke, &rec.a_inf());
    size * threshold.1 < threshold.0 * rec.n
}

pub fn eval_constraint_5(rec: &MembershipRecord, t: Slot, eta: Slot) -> bool {
    let hv = rec.h(rec.voting(t));
    hv.len() > union(&rec.a(rec.voting(t + 1)), &stale(rec, t, eta))
}

/// Checks the participation constraints for every slot from GST on.
pub fn compliant(rec: &MembershipRecord, cfg: &SimConfig) -> bool {
    let eta = cfg.eta();
    let first = slot_of(cfg.gst, cfg.delta);
    let per_slot = (first..cfg.num_slots as Slot).all(|t| {
        if cfg.variant.is_tob() {
            eval_constraint_1(rec, t, eta)
        } else {
            eval_constraint_5(rec, t, eta)
        }
    });
    let window = match cfg.t_a {
        Some(t_a) if cfg.pi > 0 => {
            eval_constraint_2(rec, t_a, cfg.pi, eta)
                && eval_constraint_3(rec, t_a, cfg.pi)
                && eval_constraint_4(rec, t_a, cfg.pi, cfg.c4_threshold)
        }
        _ => true,
    };
    per_slot && window
}

pub fn is_eta_compliant(trace: &Trace, cfg: &SimConfig) -> bool {
    compliant(&MembershipRecord::from_trace(trace), cfg)
}

/// Random sleep spans with at most `max_asleep` validators asleep at once, each nap
/// lasting between `min_slots` and `max_slots` slots. Corrupted validators never sleep.
pub fn random_sleep(cfg: &SimConfig, rng: &mut ChaCha8Rng, max_asleep: usize, min_slots: u64, max_slots: u64) -> Vec<SleepSpan> {
    let slot_len = 4 * cfg.delta;
    let rounds = cfg.num_rounds();
    let honest: Vec<ValidatorId> = (0..cfg.n as u32).map(ValidatorId).filter(|v| !cfg.corrupt.contains_key(v)).collect();
    let mut spans: Vec<SleepSpan> = Vec::new();
    if honest.is_empty() || rounds == 0 {
        return spans;
    }
    let attempts = rng.gen_range(0..=honest.len() * 2);
    for _ in 0..attempts {
        let id = honest[rng.gen_range(0..honest.len())];
        let from = rng.gen_range(0..rounds);
        let to = (from + slot_len * rng.gen_range(min_slots..=max_slots)).min(rounds);
        // Keep naps of one validator disjoint and separated by its rejoin time.
        let clash = spans.iter().any(|s| s.id == id && from <= activation_round(s.to, cfg.delta) && s.from <= to);
        let crowded = (from..to).any(|r| spans.iter().filter(|s| s.from <= r && r < s.to).count() >= max_asleep);
        if !clash && !crowded && from < to {
            spans.push(SleepSpan { id, from, to });
        }
    }
    spans.sort_by_key(|s| (s.from, s.id));
    spans
}

/// Rejection-samples sleep schedules until the predicted membership is compliant.
pub fn compliant_sleep(cfg: &SimConfig, rng: &mut ChaCha8Rng, max_asleep: usize, min_slots: u64, max_slots: u64) -> Vec<SleepSpan> {
    for _ in 0..1000 {
        let mut trial = cfg.clone();
        trial.sleep = random_sleep(cfg, rng, max_asleep, min_slots, max_slots);
        if compliant(&MembershipRecord::predicted(&trial), &trial) {
            return trial.sleep;
        }
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn record(n: usize, honest: Vec<Vec<u32>>, corrupt: Vec<Vec<u32>>) -> MembershipRecord {
        let set = |v: Vec<u32>| v.into_iter().map(ValidatorId).collect::<BTreeSet<_>>();
        MembershipRecord {
            n,
            delta: 1,
            honest: honest.into_iter().map(set).collect(),
            corrupt: corrupt.into_iter().map(set).collect(),
        }
    }

    fn steady(n: usize, rounds: usize) -> MembershipRecord {
        let all: Vec<u32> = (0..n as u32).collect();
        record(n, vec![all; rounds], vec![vec![]; rounds])
    }

    #[test]
    fn steady_participation_satisfies_everything() {
        let rec = steady(4, 40);
        for t in 0..8 {
            assert!(eval_constraint_1(&rec, t, 1));
            assert!(eval_constraint_5(&rec, t, 4));
        }
        assert!(eval_constraint_2(&rec, 2, 2, 4));
        assert!(eval_constraint_3(&rec, 2, 2));
        assert!(eval_constraint_4(&rec, 2, 2, (2, 3)));
    }

    #[test]
    fn empty_voting_set_fails() {
        let rec = record(3, vec![vec![]; 12], vec![vec![]; 12]);
        assert!(!eval_constraint_1(&rec, 1, 1));
        assert!(!eval_constraint_5(&rec, 1, 1));
    }

    #[test]
    fn synchronous_form_of_constraint_one() {
        // eta = 1: |H_v(t) \ A_v(t+1)| > |A_v(t+1)|.
        let mut honest = vec![vec![0, 1]; 12];
        let mut corrupt = vec![vec![2]; 12];
        assert!(eval_constraint_1(&record(3, honest.clone(), corrupt.clone()), 1, 1));
        for r in 8..12 {
            honest[r] = vec![0];
            corrupt[r] = vec![1, 2];
        }
        assert!(!eval_constraint_1(&record(3, honest, corrupt), 1, 1));
    }

    #[test]
    fn window_constraints_vacuous_without_window() {
        let rec = record(3, vec![vec![]; 4], vec![vec![0, 1, 2]; 4]);
        assert!(eval_constraint_2(&rec, 0, 0, 1));
        assert!(eval_constraint_3(&rec, 0, 0));
        assert!(eval_constraint_4(&rec, 0, 0, (2, 3)));
    }

    #[test]
    fn mass_wakeup_breaks_window_constraints() {
        // n=6, two awake at voting(t_a) = 9, four more become active inside the window.
        let mut honest = vec![vec![0, 1]; 40];
        for h in honest.iter_mut().skip(13) {
            *h = vec![0, 1, 2, 3, 4, 5];
        }
        let rec = record(6, honest, vec![vec![]; 40]);
        assert!(!eval_constraint_4(&rec, 2, 2, (2, 3)));
        assert!(!eval_constraint_2(&rec, 2, 2, 4));
    }

    #[test]
    fn sleeping_after_vote_breaks_constraint_three() {
        let mut honest = vec![vec![0, 1, 2]; 20];
        honest[10] = vec![0, 1];
        let rec = record(3, honest, vec![vec![]; 20]);
        assert!(!eval_constraint_3(&rec, 2, 1));
        assert!(eval_constraint_3(&steady(3, 20), 2, 1));
    }

    #[test]
    fn parse_strategies() {
        assert_eq!("passive".parse::<Behavior>(), Ok(Behavior::Passive));
        assert_eq!("ffg_withholder:3".parse::<Behavior>(), Ok(Behavior::FfgWithholder { hold: 3 }));
        let net: Network = "partition:0,1,4/2,3,4".parse().unwrap();
        assert_eq!(net.to_string(), "partition:0,1,4/2,3,4");
        assert!(net.separated(ValidatorId(0), ValidatorId(2)));
        assert!(!net.separated(ValidatorId(0), ValidatorId(4)));
        assert!("bogus".parse::<Network>().is_err());
    }

    #[test]
    fn delivery_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let r = Network::Random.pick(10, 15, false, ValidatorId(0), ValidatorId(1), &mut rng);
            assert!((11..=15).contains(&r));
        }
        assert_eq!(Network::Prompt.pick(10, 15, true, ValidatorId(0), ValidatorId(1), &mut rng), 11);
        assert_eq!(Network::MaxDelay.pick(10, 11, false, ValidatorId(0), ValidatorId(1), &mut rng), 11);
    }
}
