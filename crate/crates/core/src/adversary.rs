//! Adaptive lower-bound adversaries and ratio certificates.
//!
//! An adversary picks the next item's disutilities after seeing every past
//! decision. [`AdversaryN2`] is the two-agent game that pushes some agent
//! past `2 - ε` times its MMS. [`RecursiveAdversary`] nests one game per
//! agent count: agents `1..L-1` play a rescaled fresh copy of the level
//! below, which forces agent `L` to keep taking items, while agent `L`
//! gets a fast-growing value sequence.
//!
//! Every reported ratio is backed by an explicit witness partition.

use serde::{Deserialize, Serialize};

use crate::allocator::{Allocator, Policy, RunTrace};
use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance, Partition};
use crate::mms::{best_prefix_split, exact_limit, lpt_partition, mms_exact, per_type_partition, value_bounds};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmsSource {
    Exact,
    Witness,
}

/// Certified lower bound on one agent's competitive ratio.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioCertificate {
    /// 1-based.
    pub agent: usize,
    #[serde(rename = "d_A")]
    pub d_a: Rational,
    pub mms_upper: Rational,
    pub mms_lower: Rational,
    pub mms_source: MmsSource,
    pub witness: Partition,
    pub ratio_lower: Rational,
    /// `d_A / mms_lower` when the MMS is only bracketed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_upper: Option<Rational>,
}

impl RatioCertificate {
    /// Certificate for an empty instance: nothing allocated, ratio 1.
    pub fn trivial(n: usize) -> Self {
        RatioCertificate {
            agent: 1,
            d_a: Rational::zero(),
            mms_upper: Rational::zero(),
            mms_lower: Rational::zero(),
            mms_source: MmsSource::Exact,
            witness: Partition(vec![Vec::new(); n.max(1)]),
            ratio_lower: Rational::one(),
            ratio_upper: Some(Rational::one()),
        }
    }

    /// Recomputes the witness and both sides of the ratio.
    pub fn verify(&self, inst: &Instance, alloc: &Allocation) -> bool {
        if inst.items.is_empty() {
            return self.ratio_lower == Rational::one();
        }
        let i = self.agent - 1;
        self.witness.is_partition_of(inst.n, inst.m())
            && self.witness.max_bundle(inst, i) == self.mms_upper
            && alloc.bundle_value(inst, i) == self.d_a
            && self.mms_upper.is_positive()
            && &self.d_a / &self.mms_upper == self.ratio_lower
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("certificate serializes");
        s.push('\n');
        s
    }
}

/// First-fit packing of `items` into at most `bins` bins of `capacity`;
/// a new bin is opened only when no open bin has room.
pub fn greedy_bin_packing(
    values: &[Rational],
    items: &[usize],
    bins: usize,
    capacity: &Rational,
) -> Option<Vec<Vec<usize>>> {
    let mut loads: Vec<Rational> = Vec::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &j in items {
        let v = &values[j];
        match loads.iter().position(|l| &(l + v) <= capacity) {
            Some(b) => {
                loads[b] += v;
                out[b].push(j);
            }
            None => {
                if out.len() == bins || v > capacity {
                    return None;
                }
                loads.push(v.clone());
                out.push(vec![j]);
            }
        }
    }
    out.resize(bins, Vec::new());
    Some(out)
}

/// Packs `own` with capacity `(1+2ε)·max value`, then drops every other item
/// into the heaviest bin.
pub fn bin_packing_witness(values: &[Rational], own: &[usize], n: usize, eps: &Rational) -> Option<Partition> {
    let max = values.iter().max()?;
    let cap = (Rational::one() + Rational::from_integer(2) * eps) * max;
    let mut bins = greedy_bin_packing(values, own, n, &cap)?;
    let mut in_own = vec![false; values.len()];
    for &j in own {
        in_own[j] = true;
    }
    let heaviest = (0..n)
        .max_by(|&a, &b| {
            let sa: Rational = bins[a].iter().map(|&j| &values[j]).sum();
            let sb: Rational = bins[b].iter().map(|&j| &values[j]).sum();
            sa.cmp(&sb).then(b.cmp(&a))
        })
        .expect("n > 0");
    bins[heaviest].extend((0..values.len()).filter(|&j| !in_own[j]));
    for b in &mut bins {
        b.sort_unstable();
    }
    Some(Partition(bins))
}

/// Certificates for every agent of a finished allocation.
///
/// The MMS is exact when the instance is small enough. Otherwise the upper
/// end is the best of the supplied witnesses, longest-processing-time, the
/// per-type union, the best prefix split (`n = 2`) and, when `eps` is given,
/// the bin-packing witness.
pub fn certify_ratio(
    inst: &Instance,
    alloc: &Allocation,
    witnesses: &[Partition],
    eps: Option<&Rational>,
) -> Result<Vec<RatioCertificate>> {
    alloc.validate_for(inst)?;
    let n = inst.n;
    if inst.items.is_empty() {
        return Ok((0..n).map(|i| RatioCertificate { agent: i + 1, ..RatioCertificate::trivial(n) }).collect());
    }
    for w in witnesses {
        if !w.is_partition_of(n, inst.m()) {
            return Err(Error::InvalidInput("witness is not an n-partition of the items".into()));
        }
    }
    let bundles = alloc.bundles(n);
    (0..n)
        .map(|i| {
            let values = inst.agent_values(i);
            let d_a: Rational = bundles[i].iter().map(|&j| &values[j]).sum();
            let (lower, _) = value_bounds(&values, n);
            let (upper, witness, source, mms_lower) = if inst.m() <= exact_limit(n) {
                let sol = mms_exact(&values, n)?;
                (sol.value.clone(), sol.witness, MmsSource::Exact, sol.value)
            } else {
                let mut cands: Vec<Partition> = witnesses.to_vec();
                cands.push(lpt_partition(&values, n));
                cands.push(per_type_partition(&values, n));
                if n == 2 {
                    cands.push(best_prefix_split(&values));
                }
                if let Some(e) = eps {
                    cands.extend(bin_packing_witness(&values, &bundles[i], n, e));
                }
                let (u, w) = cands
                    .into_iter()
                    .map(|p| (p.max_bundle_of(&values), p))
                    .min_by(|a, b| a.0.cmp(&b.0))
                    .expect("at least one candidate");
                (u, w, MmsSource::Witness, lower)
            };
            let ratio_upper = match source {
                MmsSource::Exact => Some(&d_a / &upper),
                MmsSource::Witness => Some(&d_a / &mms_lower),
            };
            Ok(RatioCertificate {
                agent: i + 1,
                ratio_lower: &d_a / &upper,
                d_a,
                mms_upper: upper,
                mms_lower,
                mms_source: source,
                witness,
                ratio_upper,
            })
        })
        .collect()
}

/// Best certificate over all agents (largest certified ratio).
pub fn best_certificate(certs: Vec<RatioCertificate>) -> Option<RatioCertificate> {
    certs.into_iter().max_by(|a, b| a.ratio_lower.cmp(&b.ratio_lower).then(b.agent.cmp(&a.agent)))
}

/// A game opponent that reveals one item at a time.
pub trait Adversary {
    fn n(&self) -> usize;

    /// Disutilities of the next item for every agent.
    fn next_item(&mut self) -> Result<Vec<Rational>>;

    /// Records who received the item last returned by `next_item`.
    fn observe(&mut self, winner: usize) -> Result<()>;

    /// Cheap certificates available right after the last `observe`.
    fn certificates(&mut self, game: &GameView<'_>) -> Result<Vec<RatioCertificate>>;
}

/// Read-only state of a running game.
pub struct GameView<'a> {
    pub instance: &'a Instance,
    pub assignment: &'a [usize],
    /// `bundle_sums[i]` is `d_i(A_i)`.
    pub bundle_sums: &'a [Rational],
    /// `prefix[i][j]` is `d_i` of the first `j` items.
    pub prefix: &'a [Vec<Rational>],
}

impl GameView<'_> {
    /// Certificate for `agent` from an explicit witness.
    pub fn certify(&self, agent: usize, witness: Partition, source: MmsSource) -> RatioCertificate {
        let values = self.instance.agent_values(agent);
        let upper = witness.max_bundle_of(&values);
        let (lower, _) = value_bounds(&values, self.instance.n);
        let lower = if source == MmsSource::Exact { upper.clone() } else { lower };
        let d_a = self.bundle_sums[agent].clone();
        RatioCertificate {
            agent: agent + 1,
            ratio_lower: &d_a / &upper,
            ratio_upper: Some(&d_a / &lower),
            d_a,
            mms_upper: upper,
            mms_lower: lower,
            mms_source: source,
            witness,
        }
    }

    /// `d_agent` of the items `start..end` (0-based, end exclusive).
    pub fn range_sum(&self, agent: usize, start: usize, end: usize) -> Rational {
        &self.prefix[agent][end] - &self.prefix[agent][start]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub instance: Instance,
    pub allocation: Allocation,
    pub certificate: RatioCertificate,
    #[serde(skip)]
    pub trace: RunTrace,
    pub rounds: usize,
    /// The target was reached.
    pub won: bool,
    pub budget_exhausted: bool,
    pub target: Rational,
}

/// Alternates adversary emissions and policy decisions until some
/// certificate exceeds `target` or `budget` items have been played.
/// Pressure snapshots are omitted from the returned trace.
pub fn play_game<A: Adversary + ?Sized>(
    adv: &mut A,
    policy: &Policy,
    budget: usize,
    target: &Rational,
) -> Result<GameOutcome> {
    let n = adv.n();
    let mut alloc = Allocator::new(policy.clone(), n)?;
    alloc.set_snapshots(false);
    let mut inst = Instance::empty(n)?;
    let mut assignment = Vec::new();
    let mut sums = vec![Rational::zero(); n];
    let mut prefix: Vec<Vec<Rational>> = vec![vec![Rational::zero()]; n];
    let mut steps = Vec::new();
    let mut best: Option<RatioCertificate> = None;

    while inst.m() < budget {
        let row = adv.next_item()?;
        let step = alloc.allocate(&row)?;
        let w = step.agent - 1;
        for (i, v) in row.iter().enumerate() {
            let next = prefix[i].last().expect("seeded") + v;
            prefix[i].push(next);
        }
        sums[w] += &row[w];
        inst.push(row)?;
        assignment.push(w);
        steps.push(step);
        adv.observe(w)?;
        let view = GameView { instance: &inst, assignment: &assignment, bundle_sums: &sums, prefix: &prefix };
        for c in adv.certificates(&view)? {
            if best.as_ref().is_none_or(|b| c.ratio_lower > b.ratio_lower) {
                best = Some(c);
            }
        }
        if best.as_ref().is_some_and(|b| b.ratio_lower > *target) {
            break;
        }
    }

    let allocation = Allocation::new(assignment);
    let certificate = match best {
        Some(c) => c,
        None if inst.items.is_empty() => RatioCertificate::trivial(n),
        None => best_certificate(certify_ratio(&inst, &allocation, &[], None)?).expect("n > 0"),
    };
    let won = certificate.ratio_lower > *target;
    Ok(GameOutcome {
        rounds: inst.m(),
        budget_exhausted: !won,
        instance: inst,
        allocation,
        certificate,
        trace: RunTrace { n, steps },
        won,
        target: target.clone(),
    })
}

/// Two-agent adversary.
///
/// Agent 1 repeats its last value after taking an item and otherwise jumps
/// by `1/ε₁`, so taking two in a row is fatal for it. Agent 2 sees values
/// that dwarf everything before until its first take; afterwards it sees
/// that first value again after any item agent 1 took and `ε₂` times it
/// after its own takes.
#[derive(Clone, Debug)]
pub struct AdversaryN2 {
    eps: Rational,
    eps1: Rational,
    eps2: Rational,
    d: [Vec<Rational>; 2],
    sums: [Rational; 2],
    takers: Vec<usize>,
    first2: Option<usize>,
    pending: bool,
}

impl AdversaryN2 {
    pub fn new(eps: Rational) -> Result<Self> {
        if !eps.is_positive() || eps > Rational::one() {
            return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1]")));
        }
        let eps1 = &eps / Rational::from_integer(2);
        // Largest 1/q with q integer and 1/q <= eps/3.
        let q = (Rational::from_integer(3) / &eps).ceil();
        let eps2 = Rational::from_bigint(q).recip().expect("q >= 3");
        Ok(AdversaryN2 {
            eps,
            eps1,
            eps2,
            d: [Vec::new(), Vec::new()],
            sums: [Rational::zero(), Rational::zero()],
            takers: Vec::new(),
            first2: None,
            pending: false,
        })
    }

    pub fn eps(&self) -> &Rational {
        &self.eps
    }

    pub fn eps1(&self) -> &Rational {
        &self.eps1
    }

    pub fn eps2(&self) -> &Rational {
        &self.eps2
    }

    /// 0-based item of agent 2's first take.
    pub fn first_take_of_agent2(&self) -> Option<usize> {
        self.first2
    }

    /// Values of the next item from the history so far.
    pub fn next_values(&self) -> (Rational, Rational) {
        let Some(&last) = self.takers.last() else {
            return (Rational::one(), Rational::one());
        };
        let j = self.takers.len() - 1;
        let d1 = if last == 0 { self.d[0][j].clone() } else { &self.d[0][j] / &self.eps1 };
        let d2 = match self.first2 {
            None => &self.sums[1] / &self.eps2,
            Some(f) if last == 1 => &self.eps2 * &self.d[1][f],
            Some(f) => self.d[1][f].clone(),
        };
        (d1, d2)
    }
}

impl Adversary for AdversaryN2 {
    fn n(&self) -> usize {
        2
    }

    fn next_item(&mut self) -> Result<Vec<Rational>> {
        if self.pending {
            return Err(Error::InconsistentHistory("previous item was never allocated".into()));
        }
        let (d1, d2) = self.next_values();
        self.sums[0] += &d1;
        self.sums[1] += &d2;
        self.d[0].push(d1.clone());
        self.d[1].push(d2.clone());
        self.pending = true;
        Ok(vec![d1, d2])
    }

    fn observe(&mut self, winner: usize) -> Result<()> {
        if !self.pending || winner > 1 {
            return Err(Error::InconsistentHistory(format!("unexpected allocation to agent {}", winner + 1)));
        }
        self.pending = false;
        if winner == 1 && self.first2.is_none() {
            self.first2 = Some(self.takers.len());
        }
        self.takers.push(winner);
        Ok(())
    }

    fn certificates(&mut self, game: &GameView<'_>) -> Result<Vec<RatioCertificate>> {
        let m = game.instance.m();
        let mut out = Vec::with_capacity(2);
        for i in 0..2 {
            let values = game.instance.agent_values(i);
            if m <= 20 {
                let sol = mms_exact(&values, 2)?;
                out.push(game.certify(i, sol.witness, MmsSource::Exact));
            } else {
                out.push(game.certify(i, best_prefix_split(&values), MmsSource::Witness));
            }
        }
        Ok(out)
    }
}

/// Strictly super-geometric sequence `a_t > (1/ε)·Σ_{t'<t} a_{t'}`,
/// rescaled once so that `a_{T+1}` equals a pinned value.
#[derive(Clone, Debug)]
struct ASequence {
    eps: Rational,
    window: usize,
    raw: Vec<Rational>,
    raw_sum: Rational,
    scale: Rational,
}

impl ASequence {
    fn new(eps: Rational, window: usize) -> Self {
        let mut s = ASequence { eps, window, raw: Vec::new(), raw_sum: Rational::zero(), scale: Rational::one() };
        s.extend_to(window + 1);
        s
    }

    fn pin(&mut self, value: &Rational) {
        self.scale = value / &self.raw[self.window];
    }

    fn extend_to(&mut self, len: usize) {
        while self.raw.len() < len {
            let next = if self.raw.is_empty() { Rational::one() } else { &self.raw_sum / &self.eps + Rational::one() };
            self.raw_sum += &next;
            self.raw.push(next);
        }
    }

    /// `a_t`, 1-based.
    fn get(&mut self, t: usize) -> Rational {
        self.extend_to(t);
        &self.raw[t - 1] * &self.scale
    }
}

/// Everything one level instance emitted, for after-the-fact checking.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LevelLog {
    /// Number of agents this level controls.
    pub depth: usize,
    /// 0-based game item at which this instance started.
    pub start: usize,
    pub eps: Rational,
    pub eps_top: Rational,
    /// Idle window assumed for the top agent.
    pub window: usize,
    /// Local values per item, one entry per controlled agent.
    pub emitted: Vec<Vec<Rational>>,
    pub winners: Vec<usize>,
    /// Finished and current sub-instances, in order.
    pub children: Vec<LevelLog>,
}

/// A level's own win, in game item indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalWin {
    pub agent: usize,
    pub depth: usize,
    pub kind: WinKind,
    /// First game item of the level instance; earlier items are added to
    /// the heaviest bundle when lifting.
    pub start: usize,
    pub bundles: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinKind {
    /// A single agent absorbed `n` consecutive equal items.
    Absorbed,
    /// The top agent of a level reached `n` times its first taken value.
    TopReached,
}

#[derive(Clone, Debug)]
struct Level {
    depth: usize,
    n: usize,
    eps_sub: Rational,
    eps_top: Rational,
    deep_window: usize,
    start: usize,
    sub: Option<Box<Level>>,
    scale: Vec<Rational>,
    sums: Vec<Rational>,
    pending: Option<Vec<Rational>>,
    first_take: Option<(usize, Rational)>,
    last_take: usize,
    taken_sum: Rational,
    taken: Vec<usize>,
    a_seq: ASequence,
    won: bool,
    log: LevelLog,
}

impl Level {
    fn new(depth: usize, n: usize, eps: Rational, start: usize, deep_window: usize) -> Self {
        let nq = Rational::from(n);
        let eps_sub = &eps / &nq;
        let eps_top = &eps / (&nq * Rational::from(n + 3));
        let window = if depth == 2 { n } else { deep_window };
        let sub = (depth >= 2).then(|| Box::new(Level::new(depth - 1, n, eps_sub.clone(), start, deep_window)));
        let a_seq = ASequence::new(eps_top.clone(), window);
        Level {
            depth,
            n,
            log: LevelLog { depth, start, eps, eps_top: eps_top.clone(), window, ..LevelLog::default() },
            eps_sub,
            eps_top,
            deep_window,
            start,
            sub,
            scale: vec![Rational::one(); depth.saturating_sub(1)],
            sums: vec![Rational::zero(); depth],
            pending: None,
            first_take: None,
            last_take: 0,
            taken_sum: Rational::zero(),
            taken: Vec::new(),
            a_seq,
            won: false,
        }
    }

    fn len(&self) -> usize {
        self.log.winners.len()
    }

    fn emit(&mut self) -> Vec<Rational> {
        let vals = if self.depth == 1 {
            vec![Rational::one()]
        } else {
            let sub = self.sub.as_mut().expect("depth >= 2").emit();
            let mut v: Vec<Rational> = sub.iter().zip(&self.scale).map(|(x, s)| x * s).collect();
            v.push(self.top_value());
            v
        };
        self.pending = Some(vals.clone());
        vals
    }

    fn top_value(&mut self) -> Rational {
        let j = self.len();
        if j == 0 {
            return Rational::one();
        }
        if self.first_take.is_none() {
            &self.sums[self.depth - 1] / &self.eps_top
        } else {
            self.a_seq.get(j - self.last_take)
        }
    }

    fn observe(&mut self, winner: usize, item: usize, wins: &mut Vec<LocalWin>) -> Result<()> {
        let vals = self.pending.take().ok_or_else(|| Error::InconsistentHistory("observe without emit".into()))?;
        if winner >= self.depth {
            return Err(Error::InconsistentHistory(format!(
                "agent {} is outside a level of {} agents",
                winner + 1,
                self.depth
            )));
        }
        for (s, v) in self.sums.iter_mut().zip(&vals) {
            *s += v;
        }
        let j = self.len();
        self.log.emitted.push(vals.clone());
        self.log.winners.push(winner);

        if self.depth == 1 {
            if !self.won && self.len() == self.n {
                self.won = true;
                wins.push(LocalWin {
                    agent: 0,
                    depth: 1,
                    kind: WinKind::Absorbed,
                    start: self.start,
                    bundles: (self.start..=item).map(|x| vec![x]).collect(),
                });
            }
            return Ok(());
        }

        let top = self.depth - 1;
        if winner != top {
            return self.sub.as_mut().expect("depth >= 2").observe(winner, item, wins);
        }

        let v = vals[top].clone();
        if self.first_take.is_none() {
            self.a_seq.pin(&v);
            self.first_take = Some((j, v.clone()));
        }
        self.last_take = j;
        self.taken_sum += &v;
        self.taken.push(j);
        let big_v = self.first_take.as_ref().expect("set above").1.clone();
        if !self.won && self.taken_sum >= Rational::from(self.n) * &big_v {
            self.won = true;
            wins.push(self.top_win(&big_v));
        }

        // Clean-up: everything so far becomes negligible for agents below.
        let old = self.sub.take().expect("depth >= 2");
        self.log.children.push(old.into_log());
        for (w, s) in self.scale.iter_mut().zip(&self.sums) {
            *w = s / &self.eps_sub;
        }
        self.sub = Some(Box::new(Level::new(self.depth - 1, self.n, self.eps_sub.clone(), item + 1, self.deep_window)));
        Ok(())
    }

    fn top_win(&self, big_v: &Rational) -> LocalWin {
        let top = self.depth - 1;
        let values: Vec<Rational> = self.log.emitted.iter().map(|row| row[top].clone()).collect();
        let cap = (Rational::one() + Rational::from_integer(2) * &self.eps_top) * big_v;
        let mut bins = greedy_bin_packing(&values, &self.taken, self.n, &cap).unwrap_or_else(|| {
            let own: Vec<Rational> = self.taken.iter().map(|&j| values[j].clone()).collect();
            lpt_partition(&own, self.n).0.into_iter().map(|b| b.into_iter().map(|x| self.taken[x]).collect()).collect()
        });
        let heaviest = (0..self.n)
            .max_by(|&a, &b| {
                let sa: Rational = bins[a].iter().map(|&j| &values[j]).sum();
                let sb: Rational = bins[b].iter().map(|&j| &values[j]).sum();
                sa.cmp(&sb).then(b.cmp(&a))
            })
            .expect("n > 0");
        let mut is_taken = vec![false; values.len()];
        for &j in &self.taken {
            is_taken[j] = true;
        }
        bins[heaviest].extend((0..values.len()).filter(|&j| !is_taken[j]));
        LocalWin {
            agent: top,
            depth: self.depth,
            kind: WinKind::TopReached,
            start: self.start,
            bundles: bins.into_iter().map(|b| b.into_iter().map(|j| j + self.start).collect()).collect(),
        }
    }

    fn into_log(mut self) -> LevelLog {
        if let Some(sub) = self.sub.take() {
            self.log.children.push(sub.into_log());
        }
        self.log
    }

    fn snapshot_log(&self) -> LevelLog {
        let mut log = self.log.clone();
        if let Some(sub) = &self.sub {
            log.children.push(sub.snapshot_log());
        }
        log
    }
}

/// A lifted level win in the full game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinEvent {
    /// 1-based game round at which the win was observed.
    pub round: usize,
    pub depth: usize,
    /// 1-based.
    pub agent: usize,
    pub kind: WinKind,
    pub ratio: Rational,
    pub exceeds_target: bool,
}

/// Recursive adversary for `n` agents.
///
/// Level 1 gives its single agent equal items. Level `L` runs a fresh
/// level `L-1` (with `ε/n`) on agents `1..L-1`, restarting and rescaling it
/// whenever agent `L` takes an item; agent `L` sees exploding values until
/// its first take and then the `a`-sequence indexed by its idle time.
///
/// The idle window of level 2 is exactly `n`. Deeper levels use
/// `deep_window`, which has no closed form and is found by
/// [`calibrate_window`].
#[derive(Clone, Debug)]
pub struct RecursiveAdversary {
    n: usize,
    eps: Rational,
    target: Rational,
    root: Level,
    round: usize,
    events: Vec<WinEvent>,
    pending_wins: Vec<LocalWin>,
}

impl RecursiveAdversary {
    pub fn new(n: usize, eps: Rational, deep_window: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("need at least one agent".into()));
        }
        if !eps.is_positive() || eps > Rational::one() {
            return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1]")));
        }
        if deep_window == 0 {
            return Err(Error::InvalidInput("window must be positive".into()));
        }
        Ok(RecursiveAdversary {
            target: Rational::from(n) - &eps,
            root: Level::new(n, n, eps.clone(), 0, deep_window),
            n,
            eps,
            round: 0,
            events: Vec::new(),
            pending_wins: Vec::new(),
        })
    }

    pub fn eps(&self) -> &Rational {
        &self.eps
    }

    pub fn target(&self) -> &Rational {
        &self.target
    }

    pub fn events(&self) -> &[WinEvent] {
        &self.events
    }

    /// Log tree of every level instance so far.
    pub fn log(&self) -> LevelLog {
        self.root.snapshot_log()
    }
}

impl Adversary for RecursiveAdversary {
    fn n(&self) -> usize {
        self.n
    }

    fn next_item(&mut self) -> Result<Vec<Rational>> {
        if self.root.pending.is_some() {
            return Err(Error::InconsistentHistory("previous item was never allocated".into()));
        }
        Ok(self.root.emit())
    }

    fn observe(&mut self, winner: usize) -> Result<()> {
        let mut wins = Vec::new();
        self.root.observe(winner, self.round, &mut wins)?;
        self.round += 1;
        self.pending_wins = wins;
        Ok(())
    }

    fn certificates(&mut self, game: &GameView<'_>) -> Result<Vec<RatioCertificate>> {
        let wins = std::mem::take(&mut self.pending_wins);
        let mut out = Vec::new();
        for w in wins {
            let (ratio, heaviest) = lifted_ratio(game, &w);
            self.events.push(WinEvent {
                round: self.round,
                depth: w.depth,
                agent: w.agent + 1,
                kind: w.kind,
                exceeds_target: ratio > self.target,
                ratio,
            });
            let mut bundles = w.bundles.clone();
            bundles.resize(self.n, Vec::new());
            bundles[heaviest].extend(0..w.start);
            for b in &mut bundles {
                b.sort_unstable();
            }
            out.push(game.certify(w.agent, Partition(bundles), MmsSource::Witness));
        }
        Ok(out)
    }
}

/// Ratio of a lifted win computed from prefix sums, and the bundle that
/// receives the earlier items.
fn lifted_ratio(game: &GameView<'_>, w: &LocalWin) -> (Rational, usize) {
    let values = |j: usize| game.instance.value(w.agent, j);
    let sums: Vec<Rational> = w.bundles.iter().map(|b| b.iter().map(|&j| values(j)).sum()).collect();
    let heaviest = (0..sums.len()).max_by(|&a, &b| sums[a].cmp(&sums[b]).then(b.cmp(&a))).unwrap_or(0);
    let upper = &sums[heaviest] + game.range_sum(w.agent, 0, w.start);
    (&game.bundle_sums[w.agent] / &upper, heaviest)
}

/// O1/O2 outcome for one level instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationReport {
    pub depth: usize,
    pub start: usize,
    /// Prefixes ending in a take by the top agent at which O1 was checked.
    pub o1_checked: usize,
    pub o1_ok: bool,
    pub o2_checked: usize,
    pub o2_ok: bool,
    /// Local index of the first item after an idle stretch longer than the window.
    pub window_violation: Option<usize>,
}

impl ObservationReport {
    pub fn pass(&self) -> bool {
        self.o1_ok && self.o2_ok
    }
}

/// Checks, for the top agent of one level instance,
/// O1: `ε·d(A ∩ [j]) ≥ d([j] \ A)` at every prefix ending in its take, and
/// O2: `d(j) ≤ ε·V` for every item other than its first take, where `V` is
/// the value of that first take. Checking stops at the first idle stretch
/// longer than the window, which is reported.
pub fn check_o1_o2(log: &LevelLog) -> ObservationReport {
    let mut rep = ObservationReport {
        depth: log.depth,
        start: log.start,
        o1_checked: 0,
        o1_ok: true,
        o2_checked: 0,
        o2_ok: true,
        window_violation: None,
    };
    if log.depth < 2 {
        return rep;
    }
    let top = log.depth - 1;
    let Some(first) = log.winners.iter().position(|&w| w == top) else {
        return rep;
    };
    let big_v = &log.emitted[first][top];
    let bound = &log.eps_top * big_v;
    let mut last = first;
    let mut end = log.winners.len();
    for j in first + 1..log.winners.len() {
        if j - last > log.window {
            rep.window_violation = Some(j);
            end = j;
            break;
        }
        if log.winners[j] == top {
            last = j;
        }
    }
    for j in (0..end).filter(|&j| j != first) {
        rep.o2_checked += 1;
        if log.emitted[j][top] > bound {
            rep.o2_ok = false;
        }
    }
    let (mut mine, mut other) = (Rational::zero(), Rational::zero());
    for j in 0..end {
        let v = &log.emitted[j][top];
        if log.winners[j] == top {
            mine += v;
            if j >= first {
                rep.o1_checked += 1;
                if &log.eps_top * &mine < other {
                    rep.o1_ok = false;
                }
            }
        } else {
            other += v;
        }
    }
    rep
}

/// [`check_o1_o2`] on a log and all its descendants.
pub fn check_o1_o2_tree(log: &LevelLog) -> Vec<ObservationReport> {
    let mut out = vec![check_o1_o2(log)];
    for c in &log.children {
        out.extend(check_o1_o2_tree(c));
    }
    out
}

/// Re-derives every sub-agent value of every level from a freshly
/// replayed sub-adversary and the clean-up scale
/// `d_i([j*]) / (ε/n)`, where `j*` is the top agent's latest take.
/// Returns the number of values compared.
pub fn check_cleanup(log: &LevelLog, n: usize) -> Result<usize> {
    if log.depth < 2 {
        return Ok(0);
    }
    let top = log.depth - 1;
    let eps_sub = &log.eps / Rational::from(n);
    let deep_window = if log.depth >= 3 { log.children.first().map(|c| c.window).unwrap_or(n) } else { n };
    let mut compared = 0;
    let mut sums = vec![Rational::zero(); top];
    let mut factor = vec![Rational::one(); top];
    let mut fresh = Level::new(log.depth - 1, n, eps_sub.clone(), 0, deep_window);
    for (j, row) in log.emitted.iter().enumerate() {
        let expect = fresh.emit();
        for i in 0..top {
            if &expect[i] * &factor[i] != row[i] {
                return Err(Error::InconsistentHistory(format!(
                    "level {} item {}: agent {} value {} differs from rescaled replay {}",
                    log.depth,
                    log.start + j + 1,
                    i + 1,
                    row[i],
                    &expect[i] * &factor[i]
                )));
            }
            compared += 1;
            sums[i] += &row[i];
        }
        let w = log.winners[j];
        if w == top {
            for i in 0..top {
                factor[i] = &sums[i] / &eps_sub;
            }
            fresh = Level::new(log.depth - 1, n, eps_sub.clone(), 0, deep_window);
        } else {
            fresh.observe(w, j, &mut Vec::new())?;
        }
    }
    for c in &log.children {
        compared += check_cleanup(c, n)?;
    }
    Ok(compared)
}

/// Longest idle stretch of the root's top agent between two of its takes,
/// plus the trailing stretch when the game was cut off by the budget.
pub fn max_idle(log: &LevelLog, include_trailing: bool) -> usize {
    if log.depth < 2 {
        return 0;
    }
    let top = log.depth - 1;
    let mut last: Option<usize> = None;
    let mut best = 0;
    for (j, &w) in log.winners.iter().enumerate() {
        if w == top {
            if let Some(l) = last {
                best = best.max(j - l);
            }
            last = Some(j);
        }
    }
    if include_trailing {
        if let Some(l) = last {
            best = best.max(log.winners.len() - l);
        }
    }
    best
}

/// Outcome of a recursive game together with the level logs.
#[derive(Clone, Debug)]
pub struct RecursiveRun {
    pub outcome: GameOutcome,
    pub log: LevelLog,
    pub events: Vec<WinEvent>,
    pub window: usize,
}

pub fn play_recursive(n: usize, eps: &Rational, policy: &Policy, budget: usize, window: usize) -> Result<RecursiveRun> {
    let mut adv = RecursiveAdversary::new(n, eps.clone(), window)?;
    let target = adv.target().clone();
    let outcome = play_game(&mut adv, policy, budget, &target)?;
    Ok(RecursiveRun { outcome, log: adv.log(), events: adv.events().to_vec(), window })
}

/// Smallest window, found by repeated pilot games, that is at least the
/// longest idle stretch the policy actually produces at the top level.
pub fn calibrate_window(n: usize, eps: &Rational, policy: &Policy, budget: usize, max_rounds: usize) -> Result<usize> {
    let mut window = n;
    for _ in 0..max_rounds {
        let run = play_recursive(n, eps, policy, budget, window)?;
        let seen = max_idle(&run.log, run.outcome.budget_exhausted);
        if seen <= window {
            return Ok(window);
        }
        window = seen;
    }
    Ok(window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64) -> Rational {
        Rational::from_integer(a)
    }

    #[test]
    fn n2_parameters() {
        let adv = AdversaryN2::new(Rational::ratio(1, 2)).unwrap();
        assert_eq!(adv.eps1(), &Rational::ratio(1, 4));
        assert_eq!(adv.eps2(), &Rational::ratio(1, 6));
        let adv = AdversaryN2::new(Rational::ratio(3, 10)).unwrap();
        assert_eq!(adv.eps2(), &Rational::ratio(1, 10));
        assert!(AdversaryN2::new(q(0)).is_err());
    }

    #[test]
    fn n2_value_rules() {
        let mut adv = AdversaryN2::new(Rational::ratio(1, 2)).unwrap();
        assert_eq!(adv.next_item().unwrap(), vec![q(1), q(1)]);
        adv.observe(0).unwrap();
        // Agent 1 took item 1: its value repeats; agent 2 has nothing yet.
        assert_eq!(adv.next_item().unwrap(), vec![q(1), q(6)]);
        adv.observe(1).unwrap();
        // Agent 1 skipped: value times 4. Agent 2 just took: eps2 * 6.
        assert_eq!(adv.next_item().unwrap(), vec![q(4), q(1)]);
        adv.observe(0).unwrap();
        assert_eq!(adv.next_item().unwrap(), vec![q(4), q(6)]);
        assert!(adv.next_item().is_err());
        assert!(adv.observe(2).is_err());
    }

    #[test]
    fn dump_to_one_loses_after_two_items() {
        let mut adv = AdversaryN2::new(Rational::ratio(1, 2)).unwrap();
        let out = play_game(&mut adv, &Policy::DumpToOne, 100, &Rational::ratio(3, 2)).unwrap();
        assert!(out.won);
        assert_eq!(out.rounds, 2);
        assert!(out.certificate.ratio_lower >= Rational::ratio(8, 5));
        assert!(out.certificate.verify(&out.instance, &out.allocation));
    }

    #[test]
    fn zero_budget_is_trivial() {
        let mut adv = AdversaryN2::new(Rational::ratio(1, 2)).unwrap();
        let out = play_game(&mut adv, &Policy::PressureGreedy, 0, &Rational::ratio(3, 2)).unwrap();
        assert!(out.budget_exhausted && !out.won);
        assert_eq!(out.certificate.ratio_lower, Rational::one());
    }

    #[test]
    fn a_sequence_growth_and_pin() {
        let eps = Rational::ratio(1, 18);
        let mut a = ASequence::new(eps.clone(), 3);
        a.pin(&q(1000));
        assert_eq!(a.get(4), q(1000));
        let mut sum = Rational::zero();
        for t in 1..8 {
            let v = a.get(t);
            assert!(v > &sum / &eps);
            sum += &v;
        }
    }

    #[test]
    fn level_one_is_constant() {
        let mut adv = RecursiveAdversary::new(1, q(1), 1).unwrap();
        for _ in 0..4 {
            assert_eq!(adv.next_item().unwrap(), vec![q(1)]);
            adv.observe(0).unwrap();
        }
    }

    #[test]
    fn cleanup_starts_subgame_at_scale() {
        let mut adv = RecursiveAdversary::new(2, q(1), 2).unwrap();
        assert_eq!(adv.next_item().unwrap(), vec![q(1), q(1)]);
        adv.observe(1).unwrap();
        // d_1([j*]) = 1 and eps/n = 1/2, so the new sub-game starts at 2.
        // eps_top = 1/10 and T = 2 give raw a = 1, 11, 121, pinned at V = 1.
        assert_eq!(adv.next_item().unwrap(), vec![q(2), Rational::ratio(1, 121)]);
    }

    #[test]
    fn single_type_round_robin_certificates_are_one() {
        let inst = Instance::new(3, (0..9).map(|_| vec![q(2), q(2), q(2)]).collect()).unwrap();
        let alloc = Allocation::new((0..9).map(|j| j % 3).collect());
        for c in certify_ratio(&inst, &alloc, &[], None).unwrap() {
            assert_eq!(c.ratio_lower, Rational::one());
            assert_eq!(c.mms_source, MmsSource::Exact);
            assert!(c.verify(&inst, &alloc));
        }
    }

    #[test]
    fn bin_packing() {
        let values = vec![q(10), q(1), q(1), q(10), q(1)];
        let bins = greedy_bin_packing(&values, &[0, 1, 2, 3, 4], 2, &q(12)).unwrap();
        assert_eq!(bins, vec![vec![0, 1, 2], vec![3, 4]]);
        assert!(greedy_bin_packing(&values, &[0, 3], 1, &q(12)).is_none());
        let w = bin_packing_witness(&values, &[0, 3], 2, &Rational::ratio(1, 10)).unwrap();
        assert!(w.is_partition_of(2, 5));
    }
}
