//! Post-hoc safety and liveness checkers over a [`Trace`].
//!
//! Each checker only reads recorded outputs, sends and membership. The hypotheses of
//! each guarantee (honest proposer, bounded corruption, compliance, deadlines inside
//! the run) act as quantifier guards: a slot that does not meet them is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::adversary::is_eta_compliant;
use crate::chain::{ChainRef, Round, Slot, TxId};
use crate::messages::{quorum, Message, ValidatorId, View};
use crate::simnet::{RoundRecord, Trace};
use crate::slashing::{accountable_for, detect_all, Evidence, Flagged};
use crate::validator::observer_finalize;

/// Where a chain was observed: round, validator, chain.
pub type Sighting = (Round, ValidatorId, ChainRef);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Conflict { a: Sighting, b: Sighting },
    Reorg { slot: Slot, proposal: ChainRef, seen: Sighting },
    Deadline { slot: Slot, proposal: ChainRef, seen: Sighting },
    MissingProposal { slot: Slot, proposer: ValidatorId },
    MissingTx { tx: TxId, seen: Sighting },
    Unaccountable { flagged: BTreeSet<ValidatorId>, honest: BTreeSet<ValidatorId> },
    NotPrefix { seen: Sighting, fin: ChainRef },
    Slashable { validator: ValidatorId, evidence: Evidence },
    Regressed { before: Sighting, after: Sighting },
}

fn sighting(f: &mut fmt::Formatter<'_>, s: &Sighting) -> fmt::Result {
    write!(f, "(r={}, v={}, {})", s.0, s.1 .0, s.2)
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Conflict { a, b } => {
                f.write_str("conflict ")?;
                sighting(f, a)?;
                f.write_str(" vs ")?;
                sighting(f, b)
            }
            Witness::Reorg { slot, proposal, seen } => {
                write!(f, "slot {slot} proposal {proposal} reorged at ")?;
                sighting(f, seen)
            }
            Witness::Deadline { slot, proposal, seen } => {
                write!(f, "slot {slot} proposal {proposal} missing at ")?;
                sighting(f, seen)
            }
            Witness::MissingProposal { slot, proposer } => write!(f, "slot {slot} active proposer {} sent nothing", proposer.0),
            Witness::MissingTx { tx, seen } => {
                write!(f, "tx {} missing at ", tx.0)?;
                sighting(f, seen)
            }
            Witness::Unaccountable { flagged, honest } => write!(f, "flagged {:?}, honest among them {:?}", ids(flagged), ids(honest)),
            Witness::NotPrefix { seen, fin } => {
                write!(f, "fin {fin} not a prefix of ava at ")?;
                sighting(f, seen)
            }
            Witness::Slashable { validator, evidence } => write!(f, "honest {} slashable: {evidence:?}", validator.0),
            Witness::Regressed { before, after } => {
                f.write_str("fin regressed ")?;
                sighting(f, before)?;
                f.write_str(" -> ")?;
                sighting(f, after)
            }
        }
    }
}

fn ids(s: &BTreeSet<ValidatorId>) -> Vec<u32> {
    s.iter().map(|v| v.0).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Skip(String),
    Fail(Witness),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Skip(why) => write!(f, "skip ({why})"),
            Verdict::Fail(w) => write!(f, "fail {w}"),
        }
    }
}

fn slot_start(trace: &Trace, t: Slot) -> Round {
    trace.config.slot_len() * t as Round
}

fn rounds_from(trace: &Trace, from: Round) -> impl Iterator<Item = (Round, &RoundRecord)> {
    trace.rounds.iter().enumerate().skip(from as usize).map(|(r, rec)| (r as Round, rec))
}

/// Distinct chains of `pick` over the given members of each round, with their first sighting.
fn distinct<'a, I, M, P>(trace: &'a Trace, rounds: I, members: M, pick: P) -> BTreeMap<ChainRef, Sighting>
where
    I: Iterator<Item = (Round, &'a RoundRecord)>,
    M: Fn(&'a RoundRecord) -> &'a BTreeSet<ValidatorId>,
    P: Fn(&crate::simnet::Output) -> ChainRef,
{
    let mut out = BTreeMap::new();
    for (r, rec) in rounds {
        for v in members(rec) {
            if let Some(o) = trace.output(r, *v) {
                let c = pick(o);
                out.entry(c).or_insert((r, *v, c));
            }
        }
    }
    out
}

fn first_conflict(trace: &Trace, chains: &BTreeMap<ChainRef, Sighting>) -> Option<Witness> {
    let list: Vec<&Sighting> = chains.values().collect();
    for (i, a) in list.iter().enumerate() {
        for b in &list[i + 1..] {
            if trace.tree.conflicts(&a.2, &b.2).unwrap_or(false) {
                return Some(Witness::Conflict { a: **a, b: **b });
            }
        }
    }
    None
}

fn conflict_between(trace: &Trace, xs: &BTreeMap<ChainRef, Sighting>, ys: &BTreeMap<ChainRef, Sighting>) -> Option<Witness> {
    for a in xs.values() {
        for b in ys.values() {
            if trace.tree.conflicts(&a.2, &b.2).unwrap_or(false) {
                return Some(Witness::Conflict { a: *a, b: *b });
            }
        }
    }
    None
}

/// Every message ever sent, as one view.
pub fn full_view(trace: &Trace) -> View {
    let mut v = View::new();
    for (_, m) in &trace.messages {
        v.insert(m.clone());
    }
    v
}

fn corrupted_fraction_ok(trace: &Trace) -> bool {
    let f = trace.rounds.last().map(|r| r.corrupt.len()).unwrap_or(0);
    3 * f < trace.config.n
}

/// Honest slots with their proposal, restricted to `t >= from`.
fn honest_proposals(trace: &Trace, from: Slot) -> impl Iterator<Item = (Slot, ChainRef)> + '_ {
    trace
        .slots
        .iter()
        .enumerate()
        .skip(from.max(0) as usize)
        .filter(|(_, s)| s.honest)
        .filter_map(|(t, s)| s.proposal.map(|p| (t as Slot, p)))
}

pub fn check_available_safety(trace: &Trace, t_after: Round) -> Verdict {
    let chains = distinct(trace, rounds_from(trace, t_after), |r| &r.honest, |o| o.ava);
    match first_conflict(trace, &chains) {
        Some(w) => Verdict::Fail(w),
        None => Verdict::Pass,
    }
}

/// Result of looking for conflicting finalized outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalityAudit {
    pub conflict: Option<Witness>,
    /// Violators identified from every sent message, empty without a conflict.
    pub flagged: Flagged,
}

pub fn audit_finality(trace: &Trace) -> FinalityAudit {
    let chains = distinct(trace, rounds_from(trace, 0), |r| &r.honest, |o| o.fin);
    let conflict = first_conflict(trace, &chains);
    let flagged = match &conflict {
        Some(Witness::Conflict { a, b }) => accountable_for(&full_view(trace), &a.2, &b.2).unwrap_or_default(),
        _ => Flagged::new(),
    };
    FinalityAudit { conflict, flagged }
}

pub fn check_finalized_safety_and_accountability(trace: &Trace) -> Verdict {
    let audit = audit_finality(trace);
    if audit.conflict.is_none() {
        return Verdict::Pass;
    }
    let a_inf = trace.rounds.last().map(|r| r.corrupt.clone()).unwrap_or_default();
    let flagged: BTreeSet<ValidatorId> = audit.flagged.keys().copied().collect();
    let honest: BTreeSet<ValidatorId> = flagged.difference(&a_inf).copied().collect();
    if flagged.len() >= trace.config.n.div_ceil(3) && honest.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(Witness::Unaccountable { flagged, honest })
    }
}

fn reorgs(trace: &Trace, t_reorg: Slot, t_last: Option<Slot>, seen: &BTreeMap<ChainRef, Sighting>) -> Option<Witness> {
    for (t, p) in honest_proposals(trace, t_reorg) {
        if t_last.is_some_and(|last| t > last) {
            break;
        }
        for s in seen.values() {
            if trace.tree.conflicts(&p, &s.2).unwrap_or(false) {
                return Some(Witness::Reorg { slot: t, proposal: p, seen: *s });
            }
        }
    }
    None
}

pub fn check_reorg_resilience(trace: &Trace, t_reorg: Slot, big_t_reorg: Round) -> Verdict {
    if !is_eta_compliant(trace, &trace.config) {
        return Verdict::Skip("execution not compliant".into());
    }
    let seen = distinct(trace, rounds_from(trace, big_t_reorg), |r| &r.honest, |o| o.ava);
    match reorgs(trace, t_reorg, None, &seen) {
        Some(w) => Verdict::Fail(w),
        None => Verdict::Pass,
    }
}

/// End of the last period without bounded delays: GST, or the asynchrony window if later.
fn sync_bound(trace: &Trace) -> Round {
    let cfg = &trace.config;
    cfg.window().map_or(cfg.gst, |(_, hi)| cfg.gst.max(hi))
}

/// Slots from which synchronous guarantees apply: `4Δt >= max(GST, GAT) + 4Δ`,
/// with the asynchrony window counted as a later GST.
fn stable_slot(trace: &Trace) -> Slot {
    let cfg = &trace.config;
    let from = sync_bound(trace).max(cfg.gat) + cfg.slot_len();
    from.div_ceil(cfg.slot_len()) as Slot
}

/// Honest proposals of slots `>= from`, failing when an active honest proposer sent nothing.
fn required_proposals(trace: &Trace, from: Slot) -> Result<Vec<(Slot, ChainRef)>, Box<Witness>> {
    let mut out = Vec::new();
    for (t, s) in trace.slots.iter().enumerate().skip(from.max(0) as usize) {
        let t = t as Slot;
        if !s.honest {
            continue;
        }
        match s.proposal {
            Some(p) => out.push((t, p)),
            None => {
                let r = slot_start(trace, t);
                if trace.rounds.get(r as usize).is_some_and(|rec| rec.honest.contains(&s.proposer)) {
                    return Err(Box::new(Witness::MissingProposal { slot: t, proposer: s.proposer }));
                }
            }
        }
    }
    Ok(out)
}

pub fn check_finality_liveness(trace: &Trace) -> Verdict {
    let cfg = &trace.config;
    if !cfg.variant.has_ffg() {
        return Verdict::Skip("variant has no finality gadget".into());
    }
    if !corrupted_fraction_ok(trace) {
        return Verdict::Skip("f >= n/3".into());
    }
    if !is_eta_compliant(trace, cfg) {
        return Verdict::Skip("execution not compliant".into());
    }
    let d = cfg.delta;
    let proposals = match required_proposals(trace, stable_slot(trace)) {
        Ok(p) => p,
        Err(w) => return Verdict::Fail(*w),
    };
    for (t, p) in proposals {
        let deadline = 4 * d * (t as Round + 2) + 2 * d;
        let Some(rec) = trace.rounds.get(deadline as usize) else { break };
        let pool = &trace.slots[t as usize].pool;
        for v in &rec.honest {
            let Some(o) = trace.output(deadline, *v) else { continue };
            let seen = (deadline, *v, o.fin);
            if !trace.tree.extends(&o.fin, &p) {
                return Verdict::Fail(Witness::Deadline { slot: t, proposal: p, seen });
            }
            if let Some(tx) = pool.iter().find(|tx| !trace.tree.contains_tx(&o.fin, **tx).unwrap_or(false)) {
                return Verdict::Fail(Witness::MissingTx { tx: *tx, seen });
            }
        }
    }
    Verdict::Pass
}

pub fn check_two_slot_liveness(trace: &Trace) -> Verdict {
    let cfg = &trace.config;
    if !cfg.acks {
        return Verdict::Skip("acknowledgments disabled".into());
    }
    if !corrupted_fraction_ok(trace) {
        return Verdict::Skip("f >= n/3".into());
    }
    if !is_eta_compliant(trace, cfg) {
        return Verdict::Skip("execution not compliant".into());
    }
    let d = cfg.delta;
    let proposals = match required_proposals(trace, stable_slot(trace)) {
        Ok(p) => p,
        Err(w) => return Verdict::Fail(*w),
    };
    // The observer holds everything sent at least Δ before the deadline.
    let mut view = View::new();
    let mut next = 0;
    for (t, p) in proposals {
        let deadline = 4 * d * (t as Round + 1) + 3 * d;
        if deadline >= cfg.num_rounds() {
            break;
        }
        while next < trace.messages.len() && trace.messages[next].0 + d <= deadline {
            view.insert(trace.messages[next].1.clone());
            next += 1;
        }
        let done = observer_finalize(view.acks(), &view, cfg.n);
        if !done.iter().any(|c| trace.tree.extends(&c.chain, &p)) {
            let best = done.iter().max_by_key(|c| c.rank()).map(|c| c.chain).unwrap_or(trace.tree.genesis());
            return Verdict::Fail(Witness::Deadline { slot: t, proposal: p, seen: (deadline, ValidatorId(u32::MAX), best) });
        }
    }
    Verdict::Pass
}

pub fn check_fastconf_liveness(trace: &Trace) -> Verdict {
    let cfg = &trace.config;
    let d = cfg.delta;
    let q = quorum(cfg.n);
    let window = cfg.window();
    let Some((t_heal, _)) = sync_from(trace) else {
        return Verdict::Skip("synchrony never resumed".into());
    };
    for (t, p) in honest_proposals(trace, t_heal) {
        let start = slot_start(trace, t);
        if window.is_some_and(|(lo, hi)| start + 4 * d > lo && start < hi) {
            continue;
        }
        let Some(voters) = trace.rounds.get((start + d) as usize) else { break };
        if voters.honest.len() < q {
            continue;
        }
        let at = start + 2 * d;
        let Some(rec) = trace.rounds.get(at as usize) else { break };
        for v in &rec.honest {
            let Some(o) = trace.output(at, *v) else { continue };
            if !trace.tree.extends(&o.ava, &p) {
                return Verdict::Fail(Witness::Deadline { slot: t, proposal: p, seen: (at, *v, o.ava) });
            }
        }
    }
    Verdict::Pass
}

/// Confirmation time of the κ-deep rule, `8κΔ + Δ`.
pub fn kappa_tconf(kappa: Slot, delta: u64) -> Round {
    8 * kappa as Round * delta + delta
}

pub fn check_kappa_liveness(trace: &Trace) -> Verdict {
    let cfg = &trace.config;
    if !is_eta_compliant(trace, cfg) {
        return Verdict::Skip("execution not compliant".into());
    }
    let Some((_, healed)) = sync_from(trace) else {
        return Verdict::Skip("synchrony never resumed".into());
    };
    let tconf = kappa_tconf(cfg.kappa, cfg.delta);
    let mut txs: Vec<(Round, TxId)> = cfg.txs.clone();
    txs.sort();
    for (at, tx) in txs {
        if at < healed {
            continue;
        }
        let seen = distinct(trace, rounds_from(trace, at + tconf), |r| &r.honest, |o| o.ava);
        for s in seen.values() {
            if !trace.tree.contains_tx(&s.2, tx).unwrap_or(false) {
                return Verdict::Fail(Witness::MissingTx { tx, seen: *s });
            }
        }
    }
    Verdict::Pass
}

pub fn check_prefix_and_monotone(trace: &Trace) -> Verdict {
    let mut last: BTreeMap<ValidatorId, Sighting> = BTreeMap::new();
    for (r, rec) in rounds_from(trace, 0) {
        for v in &rec.honest {
            let Some(o) = trace.output(r, *v) else { continue };
            let now = (r, *v, o.fin);
            if !trace.tree.extends(&o.ava, &o.fin) {
                return Verdict::Fail(Witness::NotPrefix { seen: (r, *v, o.ava), fin: o.fin });
            }
            if let Some(before) = last.get(v) {
                if !trace.tree.extends(&o.fin, &before.2) {
                    return Verdict::Fail(Witness::Regressed { before: *before, after: now });
                }
            }
            last.insert(*v, now);
        }
    }
    Verdict::Pass
}

pub fn check_async_resilience(trace: &Trace) -> Verdict {
    let cfg = &trace.config;
    let t_a = match cfg.t_a {
        Some(t_a) if cfg.pi > 0 => t_a,
        _ => return Verdict::Skip("no asynchrony window".into()),
    };
    if !is_eta_compliant(trace, cfg) {
        return Verdict::Skip("execution not compliant".into());
    }
    let aware = distinct(trace, rounds_from(trace, 0), |r| &r.aware, |o| o.ava);
    if let Some(w) = reorgs(trace, 0, Some(t_a), &aware) {
        return Verdict::Fail(w);
    }
    let cutoff = slot_start(trace, t_a) + cfg.delta;
    let early = distinct(trace, rounds_from(trace, 0).take_while(|(r, _)| *r <= cutoff), |r| &r.honest, |o| o.ava);
    match conflict_between(trace, &early, &aware) {
        Some(w) => Verdict::Fail(w),
        None => Verdict::Pass,
    }
}

/// First slot after GST with an honest proposer whose fast-confirm round sees every honest validator active.
pub fn find_t_heal(trace: &Trace) -> Option<Slot> {
    heal_after(trace, trace.config.gst)
}

fn heal_after(trace: &Trace, gst: Round) -> Option<Slot> {
    let cfg = &trace.config;
    let d = cfg.delta;
    for (t, s) in trace.slots.iter().enumerate() {
        let start = slot_start(trace, t as Slot);
        let after_gst = gst == 0 || start >= gst + d;
        if !after_gst || !s.honest {
            continue;
        }
        let rec = trace.rounds.get((start + 2 * d) as usize)?;
        let all_honest = (0..cfg.n as u32).map(ValidatorId).filter(|v| !rec.corrupt.contains(v)).count();
        if rec.honest.len() == all_honest {
            return Some(t as Slot);
        }
    }
    None
}

/// Slot and round from which synchronous guarantees apply: the start of the run
/// without a GST or asynchrony window, otherwise the first healing slot after them
/// and its fast-confirm round.
pub fn sync_from(trace: &Trace) -> Option<(Slot, Round)> {
    let bound = sync_bound(trace);
    if bound == 0 {
        return Some((0, 0));
    }
    heal_after(trace, bound).map(|t| (t, slot_start(trace, t) + 2 * trace.config.delta))
}

/// Offences provable from messages their senders authored while honest.
pub fn honest_offences(trace: &Trace) -> Flagged {
    let mut votes = Vec::new();
    let mut acks = Vec::new();
    for m in trace.honest_sent() {
        match m {
            Message::Vote(v) => votes.extend(v.ffg),
            Message::Ack(a) => acks.push(*a),
            _ => {}
        }
    }
    detect_all(&votes, &acks)
}

pub fn check_honest_unslashable(trace: &Trace) -> Verdict {
    match honest_offences(trace).into_iter().next() {
        Some((validator, evidence)) => Verdict::Fail(Witness::Slashable { validator, evidence }),
        None => Verdict::Pass,
    }
}

/// Every checker, with the safety and reorg checks starting where synchrony resumed.
pub fn run_all(trace: &Trace) -> Vec<(&'static str, Verdict)> {
    let compliant = is_eta_compliant(trace, &trace.config);
    let healed = sync_from(trace);
    let guarded = |f: &dyn Fn(Slot, Round) -> Verdict| match healed {
        _ if !compliant => Verdict::Skip("execution not compliant".into()),
        None => Verdict::Skip("synchrony never resumed".into()),
        Some((t, r)) => f(t, r),
    };
    vec![
        ("available_safety", guarded(&|_, r| check_available_safety(trace, r))),
        ("finalized_safety", check_finalized_safety_and_accountability(trace)),
        ("honest_unslashable", check_honest_unslashable(trace)),
        ("reorg_resilience", guarded(&|t, r| check_reorg_resilience(trace, t, r))),
        ("finality_liveness", check_finality_liveness(trace)),
        ("two_slot_liveness", check_two_slot_liveness(trace)),
        ("fastconf_liveness", check_fastconf_liveness(trace)),
        ("kappa_liveness", check_kappa_liveness(trace)),
        ("prefix_monotone", check_prefix_and_monotone(trace)),
        ("async_resilience", check_async_resilience(trace)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TxLatency {
    pub tx: TxId,
    pub injected: Round,
    /// Rounds until every honest-active validator had it in its available chain.
    pub ava: Option<Round>,
    /// Same for the finalized chain.
    pub fin: Option<Round>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LatencyReport {
    pub txs: Vec<TxLatency>,
}

fn median(mut xs: Vec<Round>) -> Option<Round> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    Some(xs[(xs.len() - 1) / 2])
}

impl LatencyReport {
    /// Lower median of the available-chain latencies.
    pub fn median_ava(&self) -> Option<Round> {
        median(self.txs.iter().filter_map(|t| t.ava).collect())
    }

    pub fn median_fin(&self) -> Option<Round> {
        median(self.txs.iter().filter_map(|t| t.fin).collect())
    }
}

fn first_everywhere<P>(trace: &Trace, from: Round, tx: TxId, pick: P) -> Option<Round>
where
    P: Fn(&crate::simnet::Output) -> ChainRef,
{
    rounds_from(trace, from).find_map(|(r, rec)| {
        let all = !rec.honest.is_empty()
            && rec.honest.iter().all(|v| {
                trace.output(r, *v).is_some_and(|o| trace.tree.contains_tx(&pick(o), tx).unwrap_or(false))
            });
        all.then_some(r - from)
    })
}

pub fn latency_metrics(trace: &Trace) -> LatencyReport {
    let mut txs: Vec<(Round, TxId)> = trace.config.txs.clone();
    txs.sort();
    LatencyReport {
        txs: txs
            .into_iter()
            .map(|(at, tx)| TxLatency {
                tx,
                injected: at,
                ava: first_everywhere(trace, at, tx, |o| o.ava),
                fin: first_everywhere(trace, at, tx, |o| o.fin),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Block;
    use crate::simnet::{run, SimConfig};
    use crate::validator::Variant;
    use std::sync::Arc;

    fn base(variant: Variant) -> Trace {
        run(&SimConfig::new(4, variant, 8, 3)).unwrap()
    }

    fn fork(trace: &mut Trace) -> ChainRef {
        let g = trace.tree.genesis();
        let b = Arc::new(Block::new(g, 0, [TxId(999)].into_iter().collect()));
        trace.tree.insert(b).unwrap()
    }

    #[test]
    fn honest_run_passes_everything() {
        for variant in Variant::ALL {
            let trace = base(variant);
            assert_eq!(check_available_safety(&trace, 0), Verdict::Pass);
            assert_eq!(check_finalized_safety_and_accountability(&trace), Verdict::Pass);
            assert_eq!(check_reorg_resilience(&trace, 0, 0), Verdict::Pass);
            assert_eq!(check_fastconf_liveness(&trace), Verdict::Pass);
            assert_eq!(check_prefix_and_monotone(&trace), Verdict::Pass);
            assert!(audit_finality(&trace).flagged.is_empty());
        }
    }

    #[test]
    fn single_validator_is_vacuously_safe() {
        let trace = run(&SimConfig::new(1, Variant::Rlmd3sf, 4, 0)).unwrap();
        assert_eq!(check_available_safety(&trace, 0), Verdict::Pass);
    }

    #[test]
    fn injected_conflict_is_reported() {
        let mut trace = base(Variant::Tob3sf);
        let bad = fork(&mut trace);
        let v = *trace.rounds[20].honest.iter().next().unwrap();
        trace.rounds[20].outputs.get_mut(&v).unwrap().ava = bad;
        match check_available_safety(&trace, 0) {
            Verdict::Fail(Witness::Conflict { a, b }) => assert!(a.2 == bad || b.2 == bad),
            other => panic!("{other:?}"),
        }
        match check_reorg_resilience(&trace, 0, 0) {
            Verdict::Fail(Witness::Reorg { seen, .. }) => assert_eq!(seen, (20, v, bad)),
            other => panic!("{other:?}"),
        }
        assert_eq!(check_available_safety(&trace, 21), Verdict::Pass);
    }

    #[test]
    fn injected_regression_and_prefix_break() {
        let mut trace = base(Variant::Rlmd3sf);
        let v = ValidatorId(0);
        let g = trace.tree.genesis();
        trace.rounds[30].outputs.get_mut(&v).unwrap().fin = g;
        assert!(matches!(check_prefix_and_monotone(&trace), Verdict::Fail(Witness::Regressed { .. })));

        let mut trace = base(Variant::Rlmd3sf);
        let bad = fork(&mut trace);
        trace.rounds[5].outputs.get_mut(&v).unwrap().fin = bad;
        assert!(matches!(check_prefix_and_monotone(&trace), Verdict::Fail(Witness::NotPrefix { .. })));
    }

    #[test]
    fn no_honest_proposals_is_vacuous() {
        let mut trace = base(Variant::Rlmd);
        for s in &mut trace.slots {
            s.honest = false;
        }
        let bad = fork(&mut trace);
        trace.rounds[9].outputs.get_mut(&ValidatorId(1)).unwrap().ava = bad;
        assert_eq!(check_reorg_resilience(&trace, 0, 0), Verdict::Pass);
    }

    #[test]
    fn skips_follow_hypotheses() {
        let trace = base(Variant::Rlmd);
        assert!(matches!(check_finality_liveness(&trace), Verdict::Skip(_)));
        assert!(matches!(check_two_slot_liveness(&trace), Verdict::Skip(_)));
        assert!(matches!(check_async_resilience(&trace), Verdict::Skip(_)));
    }

    #[test]
    fn t_heal_with_synchrony_from_start() {
        let trace = base(Variant::Tob3sf);
        let first_honest = trace.slots.iter().position(|s| s.honest).unwrap() as Slot;
        assert_eq!(find_t_heal(&trace), Some(first_honest));
        let mut trace = trace;
        for s in &mut trace.slots {
            s.honest = false;
        }
        assert_eq!(find_t_heal(&trace), None);
    }

    #[test]
    fn latency_report_is_empty_without_txs() {
        assert!(latency_metrics(&base(Variant::TobProb)).txs.is_empty());
        assert_eq!(LatencyReport::default().median_ava(), None);
    }
}
