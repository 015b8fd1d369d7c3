//! The stacking game on `(-1/2, 1/2]`.
//!
//! State is a non-decreasing step function `f`. A move `(a, b, A, B)` adds
//! `a` on `A`, subtracts `b` on `B` and then re-sorts the pieces so the
//! function is non-decreasing again. `|A| = b/(k(a+b))` and
//! `|B| = a/(k(a+b))`, so the total integral stays zero.
//!
//! The pressure-greedy allocator embeds into this game: every (agent, type)
//! pair owns a cell of width `1/(nk)` whose height is its pressure.

use serde::{Deserialize, Serialize};

use crate::allocator::RunTrace;
use crate::error::{Error, Result};
use crate::rational::Rational;

fn half() -> Rational {
    Rational::ratio(1, 2)
}

fn neg_half() -> Rational {
    Rational::ratio(-1, 2)
}

/// Left-open, right-closed interval `(left, right]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "(Rational, Rational)", from = "(Rational, Rational)")]
pub struct Interval {
    pub left: Rational,
    pub right: Rational,
}

impl From<Interval> for (Rational, Rational) {
    fn from(i: Interval) -> Self {
        (i.left, i.right)
    }
}

impl From<(Rational, Rational)> for Interval {
    fn from((left, right): (Rational, Rational)) -> Self {
        Interval { left, right }
    }
}

impl Interval {
    pub fn new(left: Rational, right: Rational) -> Self {
        Interval { left, right }
    }

    pub fn len(&self) -> Rational {
        &self.right - &self.left
    }
}

/// Disjoint intervals kept sorted with touching neighbours merged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalSet(Vec<Interval>);

impl From<IntervalSet> for Vec<Interval> {
    fn from(s: IntervalSet) -> Self {
        s.0
    }
}

impl TryFrom<Vec<Interval>> for IntervalSet {
    type Error = Error;

    fn try_from(v: Vec<Interval>) -> Result<Self> {
        IntervalSet::new(v)
    }
}

impl IntervalSet {
    /// Sorts, rejects empty or overlapping intervals and merges touching ones.
    pub fn new(mut v: Vec<Interval>) -> Result<Self> {
        if let Some(bad) = v.iter().find(|i| i.left >= i.right) {
            return Err(Error::InvalidOperation(format!("empty interval ({}, {}]", bad.left, bad.right)));
        }
        v.sort_by(|x, y| x.left.cmp(&y.left));
        let mut out: Vec<Interval> = Vec::with_capacity(v.len());
        for i in v {
            match out.last_mut() {
                Some(last) if last.right > i.left => {
                    return Err(Error::InvalidOperation("overlapping intervals".into()));
                }
                Some(last) if last.right == i.left => last.right = i.right,
                _ => out.push(i),
            }
        }
        Ok(IntervalSet(out))
    }

    pub fn single(left: Rational, right: Rational) -> Result<Self> {
        IntervalSet::new(vec![Interval::new(left, right)])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn measure(&self) -> Rational {
        self.0.iter().map(Interval::len).sum()
    }

    pub fn inf(&self) -> Option<&Rational> {
        self.0.first().map(|i| &i.left)
    }

    pub fn sup(&self) -> Option<&Rational> {
        self.0.last().map(|i| &i.right)
    }

    pub fn is_contiguous(&self) -> bool {
        self.0.len() <= 1
    }

    /// Whether the union with `other` is a single interval.
    pub fn touches_contiguously(&self, other: &IntervalSet) -> bool {
        let mut all = self.0.clone();
        all.extend(other.0.iter().cloned());
        IntervalSet::new(all).map(|s| s.is_contiguous()).unwrap_or(false)
    }
}

/// `(left, right]` carrying value `value`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "(Rational, Rational, Rational)", from = "(Rational, Rational, Rational)")]
pub struct Piece {
    pub left: Rational,
    pub right: Rational,
    pub value: Rational,
}

impl From<Piece> for (Rational, Rational, Rational) {
    fn from(p: Piece) -> Self {
        (p.left, p.right, p.value)
    }
}

impl From<(Rational, Rational, Rational)> for Piece {
    fn from((left, right, value): (Rational, Rational, Rational)) -> Self {
        Piece { left, right, value }
    }
}

/// Non-decreasing step function on `(-1/2, 1/2]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackingFunction {
    pieces: Vec<Piece>,
}

impl Default for StackingFunction {
    fn default() -> Self {
        Self::zero()
    }
}

impl StackingFunction {
    pub fn zero() -> Self {
        StackingFunction { pieces: vec![Piece { left: neg_half(), right: half(), value: Rational::zero() }] }
    }

    /// Validates cover and ordering and merges equal neighbours.
    pub fn from_pieces(pieces: Vec<Piece>) -> Result<Self> {
        let f = StackingFunction { pieces: merge_equal(pieces) };
        f.validate()?;
        Ok(f)
    }

    /// Lays values of equal-width cells left to right.
    pub fn from_cells(values: &[Rational]) -> Result<Self> {
        let w = Rational::ratio(1, values.len() as i64);
        let pieces = values
            .iter()
            .enumerate()
            .map(|(c, v)| Piece {
                left: neg_half() + &w * Rational::from(c),
                right: neg_half() + &w * Rational::from(c + 1),
                value: v.clone(),
            })
            .collect();
        StackingFunction::from_pieces(pieces)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Exact cover, positive widths and non-decreasing values. The zero
    /// integral is checked separately by [`StackingFunction::total_integral`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOperation(format!("invalid stacking function: {m}")));
        let (Some(first), Some(last)) = (self.pieces.first(), self.pieces.last()) else {
            return bad("no pieces");
        };
        if first.left != neg_half() || last.right != half() {
            return bad("does not cover (-1/2, 1/2]");
        }
        for p in &self.pieces {
            if p.left >= p.right {
                return bad("empty piece");
            }
        }
        for w in self.pieces.windows(2) {
            if w[0].right != w[1].left {
                return bad("pieces do not abut");
            }
            if w[0].value > w[1].value {
                return bad("values decrease");
            }
        }
        Ok(())
    }

    pub fn max_value(&self) -> &Rational {
        &self.pieces.last().expect("nonempty").value
    }

    pub fn min_value(&self) -> &Rational {
        &self.pieces[0].value
    }

    /// `f(x)` with the left-open convention; `x` in `(-1/2, 1/2]`.
    pub fn value_at(&self, x: &Rational) -> Result<&Rational> {
        if *x <= neg_half() || *x > half() {
            return Err(Error::OutOfRange(x.to_string()));
        }
        let idx = self.pieces.partition_point(|p| p.right < *x);
        Ok(&self.pieces[idx].value)
    }

    /// `∫ f` over the whole domain.
    pub fn total_integral(&self) -> Rational {
        self.pieces.iter().map(|p| p.len() * &p.value).sum()
    }

    /// All breakpoints including both ends.
    pub fn breakpoints(&self) -> Vec<Rational> {
        let mut v: Vec<Rational> = self.pieces.iter().map(|p| p.left.clone()).collect();
        v.push(half());
        v
    }

    /// `F(x)` at every breakpoint, paired with the breakpoint.
    pub fn tail_integrals(&self) -> Vec<(Rational, Rational)> {
        let mut acc = Rational::zero();
        let mut out = Vec::with_capacity(self.pieces.len() + 1);
        out.push((half(), Rational::zero()));
        for p in self.pieces.iter().rev() {
            acc += &(p.len() * &p.value);
            out.push((p.left.clone(), acc.clone()));
        }
        out.reverse();
        out
    }

    /// Width-weighted value multiset expanded into `cells` equal cells.
    /// Fails if some piece boundary is not on the cell grid.
    pub fn cell_values(&self, cells: usize) -> Result<Vec<Rational>> {
        let w = Rational::ratio(1, cells as i64);
        let mut out = Vec::with_capacity(cells);
        for p in &self.pieces {
            let count = p.len() / &w;
            if !count.is_integer() {
                return Err(Error::InvalidInput("piece not aligned with cell grid".into()));
            }
            let count = count.floor().try_into().map_err(|_| Error::InvalidInput("too many cells".into()))?;
            out.extend(std::iter::repeat_n(p.value.clone(), count));
        }
        Ok(out)
    }
}

impl Piece {
    pub fn len(&self) -> Rational {
        &self.right - &self.left
    }
}

fn merge_equal(pieces: Vec<Piece>) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        match out.last_mut() {
            Some(last) if last.value == p.value && last.right == p.left => last.right = p.right,
            _ => out.push(p),
        }
    }
    out
}

/// `F(x) = ∫_x^{1/2} f`.
pub fn integral_f(f: &StackingFunction, x: &Rational) -> Result<Rational> {
    if *x < neg_half() || *x > half() {
        return Err(Error::OutOfRange(x.to_string()));
    }
    let mut acc = Rational::zero();
    for p in f.pieces.iter().rev() {
        if p.right <= *x {
            break;
        }
        let lo = if p.left > *x { &p.left } else { x };
        acc += &((&p.right - lo) * &p.value);
    }
    Ok(acc)
}

/// One move of the game.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackingOperation {
    pub a: Rational,
    pub b: Rational,
    #[serde(rename = "A")]
    pub a_set: IntervalSet,
    #[serde(rename = "B")]
    pub b_set: IntervalSet,
    pub k: usize,
}

impl StackingOperation {
    /// Required `|A|` and `|B|` for the given `a`, `b` and `k`.
    pub fn measures(a: &Rational, b: &Rational, k: usize) -> (Rational, Rational) {
        let denom = Rational::from(k) * (a + b);
        (b / &denom, a / &denom)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOperation(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        for (name, v) in [("a", &self.a), ("b", &self.b)] {
            if !v.is_positive() || *v > Rational::one() {
                return bad(format!("{name} = {v} is outside (0, 1]"));
            }
        }
        let (ma, mb) = Self::measures(&self.a, &self.b, self.k);
        if self.a_set.measure() != ma || self.b_set.measure() != mb {
            return bad(format!(
                "measure mismatch: |A| = {}, |B| = {}, expected {ma} and {mb}",
                self.a_set.measure(),
                self.b_set.measure()
            ));
        }
        for s in [&self.a_set, &self.b_set] {
            if s.inf().is_some_and(|l| *l < neg_half()) || s.sup().is_some_and(|r| *r > half()) {
                return bad("interval outside (-1/2, 1/2]".into());
            }
        }
        if let (Some(sa), Some(ib)) = (self.a_set.sup(), self.b_set.inf()) {
            if sa > ib {
                return bad("A is not entirely left of B".into());
            }
        }
        Ok(())
    }

    pub fn is_contiguous(&self) -> bool {
        self.a_set.touches_contiguously(&self.b_set)
    }
}

/// Applies a move and re-sorts. Ties keep their left-to-right order.
pub fn apply_operation(f: &StackingFunction, op: &StackingOperation) -> Result<StackingFunction> {
    op.validate()?;
    let neg_b = -&op.b;
    let mut deltas: Vec<(&Rational, &Rational, &Rational)> = Vec::new();
    for i in op.a_set.intervals() {
        deltas.push((&i.left, &i.right, &op.a));
    }
    for i in op.b_set.intervals() {
        deltas.push((&i.left, &i.right, &neg_b));
    }

    // Split pieces at the move's boundaries: (length, value).
    let mut frags: Vec<(Rational, Rational)> = Vec::with_capacity(f.pieces.len() + 2 * deltas.len());
    let mut di = 0;
    for p in &f.pieces {
        let mut cur = p.left.clone();
        while cur < p.right {
            while di < deltas.len() && *deltas[di].1 <= cur {
                di += 1;
            }
            let (end, value) = match deltas.get(di) {
                Some(&(l, r, d)) if *l < p.right => {
                    if *l > cur {
                        (l.clone(), p.value.clone())
                    } else {
                        (r.clone().min(p.right.clone()), &p.value + d)
                    }
                }
                _ => (p.right.clone(), p.value.clone()),
            };
            frags.push((&end - &cur, value));
            cur = end;
        }
    }
    frags.sort_by(|x, y| x.1.cmp(&y.1));

    let mut pos = neg_half();
    let mut pieces: Vec<Piece> = Vec::with_capacity(frags.len());
    for (len, value) in frags {
        let right = &pos + &len;
        match pieces.last_mut() {
            Some(last) if last.value == value => last.right = right.clone(),
            _ => pieces.push(Piece { left: pos, right: right.clone(), value }),
        }
        pos = right;
    }
    debug_assert!(pos == half());
    Ok(StackingFunction { pieces })
}

/// `k` and the bound `β ≥ a + b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundProfile {
    pub k: usize,
    pub beta: Rational,
}

impl BoundProfile {
    pub fn new(k: usize, beta: Rational) -> Result<Self> {
        if k == 0 || !beta.is_positive() || beta > Rational::from_integer(2) {
            return Err(Error::InvalidInput(format!("bad bound profile k = {k}, beta = {beta}")));
        }
        Ok(BoundProfile { k, beta })
    }

    pub fn general(k: usize) -> Self {
        BoundProfile { k, beta: Rational::from_integer(2) }
    }

    /// `βk/4 - βk·x²`.
    pub fn bound_at(&self, x: &Rational) -> Rational {
        let bk = &self.beta * Rational::from(self.k);
        &bk * Rational::ratio(1, 4) - &bk * x * x
    }

    pub fn max_value(&self) -> Rational {
        &self.beta * Rational::from(self.k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub pass: bool,
    /// Smallest `bound(x) - F(x)` over breakpoints.
    pub min_slack: Rational,
    pub worst_x: Rational,
    pub max_value: Rational,
    pub max_value_ok: bool,
}

/// Checks `F(x) ≤ βk/4 - βk·x²` at every breakpoint and `max f ≤ βk`.
/// `F` is linear between breakpoints and the bound is concave, so the
/// breakpoints are where the difference is smallest.
///
/// Both sides vanish at `±1/2`, so the reported slack is taken over the
/// interior breakpoints and `x = 0`.
pub fn check_bound(f: &StackingFunction, profile: &BoundProfile) -> BoundCheck {
    let mut best: Option<(Rational, Rational)> = None;
    let mut consider = |x: Rational, fx: &Rational| {
        let slack = profile.bound_at(&x) - fx;
        if best.as_ref().is_none_or(|(s, _)| slack < *s) {
            best = Some((slack, x));
        }
    };
    let zero = Rational::zero();
    consider(zero.clone(), &integral_f(f, &zero).expect("0 is in range"));
    for (x, fx) in f.tail_integrals() {
        if x != half() && x != neg_half() && !x.is_zero() {
            consider(x, &fx);
        }
    }
    let (min_slack, worst_x) = best.expect("x = 0 is always checked");
    let max_value = f.max_value().clone();
    let max_value_ok = max_value <= profile.max_value();
    BoundCheck { pass: !min_slack.is_negative() && max_value_ok, min_slack, worst_x, max_value, max_value_ok }
}

/// Equivalent move whose support `A ∪ B` is one interval.
///
/// The leftmost piece of `A` is repeatedly moved into the gap just left of
/// the next piece of `A` (and mirrored for `B`), then `A` is slid against
/// `B`. Each substitution moves `+a` onto larger values of `f` and `-b`
/// onto smaller ones, which can only raise the tail integral after sorting.
pub fn contiguify(_f: &StackingFunction, op: &StackingOperation) -> Result<StackingOperation> {
    op.validate()?;
    if op.is_contiguous() {
        return Ok(op.clone());
    }
    let mut a: Vec<Interval> = op.a_set.intervals().to_vec();
    let mut b: Vec<Interval> = op.b_set.intervals().to_vec();

    while a.len() > 1 {
        shift_first_right(&mut a);
    }
    while b.len() > 1 {
        shift_last_left(&mut b);
    }
    // Slide A against B, still one leftmost chunk at a time.
    let target = b[0].left.clone();
    if a[0].right < target {
        a.push(Interval::new(target.clone(), target.clone()));
        while a.len() > 1 && a[0].right < a[1].left {
            shift_first_right(&mut a);
        }
    }
    Ok(StackingOperation {
        a: op.a.clone(),
        b: op.b.clone(),
        a_set: IntervalSet::new(a)?,
        b_set: IntervalSet::new(b)?,
        k: op.k,
    })
}

/// Moves `min(|a[0]|, gap)` from the left of `a[0]` to just left of `a[1]`.
fn shift_first_right(a: &mut Vec<Interval>) {
    let gap = &a[1].left - &a[0].right;
    let delta = a[0].len().min(gap);
    a[0].left += &delta;
    a[1].left -= &delta;
    if a[0].left == a[0].right {
        a.remove(0);
    } else if a[0].right == a[1].left {
        let first = a.remove(0);
        a[0].left = first.left;
    }
}

/// Mirror of [`shift_first_right`] for the last two pieces.
fn shift_last_left(b: &mut Vec<Interval>) {
    let l = b.len();
    let gap = &b[l - 1].left - &b[l - 2].right;
    let delta = b[l - 1].len().min(gap);
    b[l - 1].right -= &delta;
    b[l - 2].right += &delta;
    if b[l - 1].left == b[l - 1].right {
        b.pop();
    } else if b[l - 2].right == b[l - 1].left {
        let last = b.pop().expect("two pieces");
        b[l - 2].right = last.right;
    }
}

/// Result of embedding an allocator run into the stacking game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub n: usize,
    pub k: usize,
    pub ops: Vec<StackingOperation>,
    /// `functions[t]` is the state after `t` moves.
    pub functions: Vec<StackingFunction>,
    /// Smallest bound slack with `β = n/(n-1)`.
    pub min_slack: Rational,
    pub bound_ok: bool,
}

/// Replays a pressure-greedy trace as stacking moves on `nk` equal cells,
/// checking at every step that the cell heights are the trace's pressures.
/// `k` is the largest type count appearing anywhere in the trace.
pub fn allocator_to_stacking(trace: &RunTrace, n: usize) -> Result<Reduction> {
    if n < 2 {
        return Err(Error::InvalidInput("the stacking reduction needs n >= 2".into()));
    }
    if trace.n != n {
        return Err(Error::InvalidInput(format!("trace is for {} agents, not {n}", trace.n)));
    }
    let k = trace.k().max(1);
    let cells = n * k;
    let profile = BoundProfile { k, beta: Rational::ratio(n as i64, n as i64 - 1) };
    let width = Rational::ratio(1, cells as i64);
    let cell_interval =
        |c: usize| Interval::new(neg_half() + &width * Rational::from(c), neg_half() + &width * Rational::from(c + 1));
    let a = Rational::one();
    let b = Rational::ratio(1, n as i64 - 1);

    // label[c] = (agent, type) at cell c; cell_of is its inverse.
    let mut label: Vec<(usize, usize)> = (0..cells).map(|c| (c / k, c % k)).collect();
    let mut cell_of: Vec<usize> = (0..cells).collect();
    let mut height: Vec<Rational> = vec![Rational::zero(); cells];

    let mut f = StackingFunction::zero();
    let start = check_bound(&f, &profile);
    let mut min_slack = start.min_slack;
    let mut bound_ok = start.pass;
    let mut ops = Vec::with_capacity(trace.steps.len());
    let mut functions = vec![f.clone()];

    for (t, step) in trace.steps.iter().enumerate() {
        let mismatch = |detail: String| Error::ReductionMismatch { step: t + 1, detail };
        if step.types.len() != n || step.agent == 0 || step.agent > n {
            return Err(mismatch("malformed trace step".into()));
        }
        let winner = step.agent - 1;
        let touched: Vec<usize> = step.types.iter().enumerate().map(|(i, &u)| cell_of[i * k + u - 1]).collect();

        // Equal heights may be relabelled freely; put the winner leftmost.
        let min_h = touched.iter().map(|&c| &height[c]).min().expect("n >= 2").clone();
        if height[touched[winner]] != min_h {
            return Err(mismatch(format!("agent {} did not have minimum pressure", step.agent)));
        }
        let leftmost = *touched.iter().filter(|&&c| height[c] == min_h).min().expect("winner qualifies");
        let win_cell = touched[winner];
        if leftmost != win_cell {
            let (la, lb) = (label[leftmost], label[win_cell]);
            label.swap(leftmost, win_cell);
            cell_of[la.0 * k + la.1] = win_cell;
            cell_of[lb.0 * k + lb.1] = leftmost;
        }
        let win_cell = leftmost;
        let b_cells: Vec<usize> = touched.iter().copied().filter(|&c| c != win_cell).collect();
        debug_assert_eq!(b_cells.len(), n - 1);

        let op = StackingOperation {
            a: a.clone(),
            b: b.clone(),
            a_set: IntervalSet::new(vec![cell_interval(win_cell)])?,
            b_set: IntervalSet::new(b_cells.iter().map(|&c| cell_interval(c)).collect())?,
            k,
        };
        f = apply_operation(&f, &op).map_err(|e| mismatch(e.to_string()))?;

        // Move the cells the same way the function was sorted.
        height[win_cell] += &a;
        for &c in &b_cells {
            height[c] -= &b;
        }
        let mut order: Vec<usize> = (0..cells).collect();
        order.sort_by(|&x, &y| height[x].cmp(&height[y]));
        let new_label: Vec<(usize, usize)> = order.iter().map(|&c| label[c]).collect();
        height = order.iter().map(|&c| height[c].clone()).collect();
        label = new_label;
        for (c, &(i, u)) in label.iter().enumerate() {
            cell_of[i * k + u] = c;
        }

        if StackingFunction::from_cells(&height)? != f {
            return Err(mismatch("cell heights differ from the stacking function".into()));
        }
        for (c, &(i, u)) in label.iter().enumerate() {
            let expected = step.pressures.get(i).and_then(|row| row.get(u)).cloned().unwrap_or_else(Rational::zero);
            if height[c] != expected {
                return Err(mismatch(format!(
                    "pressure of agent {} type {} is {expected}, cell holds {}",
                    i + 1,
                    u + 1,
                    height[c]
                )));
            }
        }
        let mut pressures: Vec<Rational> = step.pressures.iter().flatten().cloned().collect();
        if pressures.len() > cells {
            return Err(mismatch("more pressures than cells".into()));
        }
        pressures.resize(cells, Rational::zero());
        pressures.sort();
        if pressures != f.cell_values(cells)? {
            return Err(mismatch("pressure multiset differs from piece values".into()));
        }

        let chk = check_bound(&f, &profile);
        bound_ok &= chk.pass;
        if chk.min_slack < min_slack {
            min_slack = chk.min_slack;
        }
        ops.push(op);
        functions.push(f.clone());
    }
    Ok(Reduction { n, k, ops, functions, min_slack, bound_ok })
}

/// One line of a stacking trace file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackingStep {
    pub a: Rational,
    pub b: Rational,
    #[serde(rename = "A")]
    pub a_set: IntervalSet,
    #[serde(rename = "B")]
    pub b_set: IntervalSet,
    pub pieces_after: Vec<Piece>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl StackingStep {
    pub fn new(op: &StackingOperation, after: &StackingFunction) -> Self {
        StackingStep {
            a: op.a.clone(),
            b: op.b.clone(),
            a_set: op.a_set.clone(),
            b_set: op.b_set.clone(),
            pieces_after: after.pieces().to_vec(),
            k: Some(op.k),
        }
    }
}

pub fn stacking_trace_to_jsonl(ops: &[StackingOperation], functions: &[StackingFunction]) -> String {
    let mut out = String::new();
    for (op, f) in ops.iter().zip(functions.iter().skip(1)) {
        out.push_str(&serde_json::to_string(&StackingStep::new(op, f)).expect("step serializes"));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: usize,
    pub k: usize,
    pub beta: Rational,
    pub min_slack: Rational,
    pub max_value: Rational,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Re-applies every step of a stacking trace from `f = 0` and re-checks all
/// invariants. `default_k` is used for lines without a `k` field.
pub fn replay_stacking(text: &str, default_k: Option<usize>, beta: Option<Rational>) -> Result<ReplayReport> {
    let steps = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<StackingStep>(l).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    let mut f = StackingFunction::zero();
    let mut failures = Vec::new();
    let mut k_max = default_k.unwrap_or(1);
    let mut beta_seen = Rational::zero();
    let mut history = Vec::with_capacity(steps.len());
    for (t, s) in steps.iter().enumerate() {
        let k =
            s.k.or(default_k)
                .ok_or_else(|| Error::InvalidInput(format!("step {} has no k and none was given", t + 1)))?;
        k_max = k_max.max(k);
        let op =
            StackingOperation { a: s.a.clone(), b: s.b.clone(), a_set: s.a_set.clone(), b_set: s.b_set.clone(), k };
        f = apply_operation(&f, &op).map_err(|e| Error::InvalidInput(format!("step {}: {e}", t + 1)))?;
        beta_seen = beta_seen.max(&s.a + &s.b);
        let recorded = StackingFunction { pieces: merge_equal(s.pieces_after.clone()) };
        if recorded != f {
            failures.push(format!("step {}: recorded pieces differ from recomputed function", t + 1));
        }
        if !f.total_integral().is_zero() {
            failures.push(format!("step {}: integral is not zero", t + 1));
        }
        history.push(f.clone());
    }
    let beta = beta.unwrap_or_else(|| if steps.is_empty() { Rational::from_integer(2) } else { beta_seen });
    let profile = BoundProfile::new(k_max, beta.clone())?;
    let mut min_slack = check_bound(&StackingFunction::zero(), &profile).min_slack;
    let mut max_value = Rational::zero();
    for (t, g) in history.iter().enumerate() {
        let chk = check_bound(g, &profile);
        if !chk.pass {
            failures.push(format!("step {}: bound violated (slack {}, max {})", t + 1, chk.min_slack, chk.max_value));
        }
        min_slack = min_slack.min(chk.min_slack);
        max_value = max_value.max(chk.max_value);
    }
    Ok(ReplayReport { steps: steps.len(), k: k_max, beta, min_slack, max_value, pass: failures.is_empty(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{run_online, Policy};
    use crate::instance::Instance;
    use proptest::prelude::*;

    fn r(p: i64, q: i64) -> Rational {
        Rational::ratio(p, q)
    }

    fn set(v: &[(Rational, Rational)]) -> IntervalSet {
        IntervalSet::new(v.iter().cloned().map(Interval::from).collect()).unwrap()
    }

    fn fig1() -> StackingFunction {
        let op = StackingOperation {
            a: r(1, 1),
            b: r(1, 1),
            a_set: set(&[(r(-1, 2), r(0, 1))]),
            b_set: set(&[(r(0, 1), r(1, 2))]),
            k: 1,
        };
        apply_operation(&StackingFunction::zero(), &op).unwrap()
    }

    #[test]
    fn single_move_sorts() {
        let f = fig1();
        assert_eq!(
            f.pieces(),
            &[
                Piece { left: r(-1, 2), right: r(0, 1), value: r(-1, 1) },
                Piece { left: r(0, 1), right: r(1, 2), value: r(1, 1) },
            ]
        );
    }

    #[test]
    fn three_agent_first_step() {
        let op = StackingOperation {
            a: r(1, 1),
            b: r(1, 2),
            a_set: set(&[(r(-1, 2), r(-1, 3))]),
            b_set: set(&[(r(-1, 6), r(0, 1)), (r(1, 6), r(1, 3))]),
            k: 2,
        };
        let f = apply_operation(&StackingFunction::zero(), &op).unwrap();
        assert_eq!(
            f.pieces(),
            &[
                Piece { left: r(-1, 2), right: r(-1, 6), value: r(-1, 2) },
                Piece { left: r(-1, 6), right: r(1, 3), value: r(0, 1) },
                Piece { left: r(1, 3), right: r(1, 2), value: r(1, 1) },
            ]
        );
    }

    #[test]
    fn symmetric_push_raises_max_by_a() {
        let f = fig1();
        let op = StackingOperation {
            a: r(1, 2),
            b: r(1, 2),
            a_set: set(&[(r(0, 1), r(1, 4))]),
            b_set: set(&[(r(1, 4), r(1, 2))]),
            k: 2,
        };
        let g = apply_operation(&f, &op).unwrap();
        assert_eq!(g.max_value(), &r(3, 2));
        assert!(g.total_integral().is_zero());
    }

    #[test]
    fn rejects_bad_moves() {
        let f = StackingFunction::zero();
        let mut op = StackingOperation {
            a: r(1, 1),
            b: r(1, 1),
            a_set: set(&[(r(0, 1), r(1, 2))]),
            b_set: set(&[(r(-1, 2), r(0, 1))]),
            k: 1,
        };
        assert!(apply_operation(&f, &op).is_err());
        op.a_set = set(&[(r(-1, 2), r(-1, 4))]);
        op.b_set = set(&[(r(0, 1), r(1, 2))]);
        assert!(apply_operation(&f, &op).is_err());
        assert!(IntervalSet::new(vec![Interval::new(r(0, 1), r(1, 2)), Interval::new(r(1, 4), r(1, 2))]).is_err());
    }

    #[test]
    fn tail_integral_examples() {
        let f = fig1();
        assert_eq!(integral_f(&f, &r(-1, 2)).unwrap(), Rational::zero());
        assert_eq!(integral_f(&f, &r(0, 1)).unwrap(), r(1, 2));
        assert_eq!(integral_f(&f, &r(1, 2)).unwrap(), Rational::zero());
        assert_eq!(integral_f(&f, &r(1, 4)).unwrap(), r(1, 4));
        assert!(integral_f(&f, &r(1, 1)).is_err());
    }

    #[test]
    fn bound_examples() {
        let zero = check_bound(&StackingFunction::zero(), &BoundProfile::general(3));
        assert!(zero.pass);
        assert_eq!(zero.min_slack, r(3, 2));
        assert_eq!(zero.worst_x, Rational::zero());
        assert_eq!(BoundProfile::general(3).bound_at(&Rational::zero()), r(3, 2));

        let chk = check_bound(&fig1(), &BoundProfile::general(1));
        assert!(chk.pass);
        assert_eq!(chk.min_slack, Rational::zero());
        assert_eq!(chk.worst_x, Rational::zero());
        assert_eq!(chk.max_value, r(1, 1));

        let tall = StackingFunction::from_pieces(vec![
            Piece { left: r(-1, 2), right: r(1, 4), value: r(-1, 1) },
            Piece { left: r(1, 4), right: r(1, 2), value: r(3, 1) },
        ])
        .unwrap();
        assert!(!check_bound(&tall, &BoundProfile::general(1)).pass);
    }

    #[test]
    fn contiguify_examples() {
        let f = StackingFunction::zero();
        let op = StackingOperation {
            a: r(1, 1),
            b: r(1, 1),
            a_set: set(&[(r(-1, 8), r(0, 1)), (r(1, 8), r(1, 4))]),
            b_set: set(&[(r(1, 4), r(1, 2))]),
            k: 2,
        };
        let c = contiguify(&f, &op).unwrap();
        assert_eq!(c.a_set, set(&[(r(0, 1), r(1, 4))]));
        assert_eq!(c.b_set, set(&[(r(1, 4), r(1, 2))]));

        let already = StackingOperation {
            a: r(1, 1),
            b: r(1, 1),
            a_set: set(&[(r(0, 1), r(1, 4))]),
            b_set: set(&[(r(1, 4), r(1, 2))]),
            k: 2,
        };
        assert_eq!(contiguify(&f, &already).unwrap(), already);

        let three = StackingOperation {
            a: r(1, 1),
            b: r(1, 2),
            a_set: set(&[(r(-1, 2), r(-7, 16)), (r(-1, 4), r(-3, 16)), (r(0, 1), r(1, 24))]),
            b_set: set(&[(r(1, 6), r(1, 2))]),
            k: 2,
        };
        let c = contiguify(&f, &three).unwrap();
        assert!(c.a_set.is_contiguous() && c.is_contiguous());
        assert_eq!(c.a_set.measure() + c.b_set.measure(), r(1, 2));
    }

    #[test]
    fn reduction_examples() {
        let inst = Instance::new(3, vec![vec![r(1, 1), r(1, 1), r(1, 1)], vec![r(4, 1), r(1, 1), r(4, 1)]]).unwrap();
        let (_, trace) = run_online(&inst, &Policy::PressureGreedy).unwrap();
        let red = allocator_to_stacking(&trace, 3).unwrap();
        assert_eq!(red.k, 2);
        let op = &red.ops[0];
        assert_eq!((&op.a, &op.b), (&r(1, 1), &r(1, 2)));
        assert_eq!(op.a_set.measure(), r(1, 6));
        assert_eq!(op.b_set.measure(), r(2, 6));
        assert_eq!(
            red.functions[1].pieces(),
            &[
                Piece { left: r(-1, 2), right: r(-1, 6), value: r(-1, 2) },
                Piece { left: r(-1, 6), right: r(1, 3), value: r(0, 1) },
                Piece { left: r(1, 3), right: r(1, 2), value: r(1, 1) },
            ]
        );

        let alt = Instance::new(2, (0..4).map(|_| vec![r(1, 1), r(1, 1)]).collect()).unwrap();
        let (_, trace) = run_online(&alt, &Policy::PressureGreedy).unwrap();
        let red = allocator_to_stacking(&trace, 2).unwrap();
        assert_eq!(red.functions[1], fig1());
        assert_eq!(red.functions[2], StackingFunction::zero());
        assert_eq!(red.functions[3], fig1());
        assert!(red.bound_ok);

        let empty = RunTrace { n: 2, steps: vec![] };
        let red = allocator_to_stacking(&empty, 2).unwrap();
        assert!(red.ops.is_empty());
        assert_eq!(red.functions, vec![StackingFunction::zero()]);
        assert!(allocator_to_stacking(&RunTrace { n: 1, steps: vec![] }, 1).is_err());
    }

    #[test]
    fn reduction_rejects_non_greedy_trace() {
        let inst = Instance::new(2, (0..3).map(|_| vec![r(1, 1), r(1, 1)]).collect()).unwrap();
        let (_, trace) = run_online(&inst, &Policy::DumpToOne).unwrap();
        assert!(matches!(allocator_to_stacking(&trace, 2), Err(Error::ReductionMismatch { step: 2, .. })));
    }

    #[test]
    fn replay_round_trip() {
        let inst = Instance::new(2, (0..5).map(|j| vec![r(j + 1, 1), r(1, 1)]).collect()).unwrap();
        let (_, trace) = run_online(&inst, &Policy::PressureGreedy).unwrap();
        let red = allocator_to_stacking(&trace, 2).unwrap();
        let text = stacking_trace_to_jsonl(&red.ops, &red.functions);
        let rep = replay_stacking(&text, None, None).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        assert_eq!(rep.steps, 5);

        let tampered = text.replacen("\"1\"]]", "\"2\"]]", 1);
        let rep = replay_stacking(&tampered, None, None).unwrap();
        assert!(!rep.pass);
    }

    /// Random move on a grid fine enough for every measure used.
    fn arb_op(k: usize) -> impl Strategy<Value = StackingOperation> {
        (1i64..=4, 1i64..=4, 0.0f64..1.0, 1usize..4, 1usize..4, any::<u64>()).prop_map(
            move |(a4, b4, split, ra, rb, seed)| {
                let grid = 840 * k as i64;
                let a_units = 840 * b4 / (a4 + b4);
                let b_units = 840 * a4 / (a4 + b4);
                let free = grid - a_units - b_units;
                let cut = (split * free as f64) as i64;
                let a_set = spread(a_units, cut + a_units, ra, seed, -(grid / 2), grid);
                let b_set =
                    spread(b_units, grid - cut - a_units, rb, seed.rotate_left(17), -(grid / 2) + cut + a_units, grid);
                StackingOperation { a: Rational::ratio(a4, 4), b: Rational::ratio(b4, 4), a_set, b_set, k }
            },
        )
    }

    /// `units` grid cells in `parts` fragments inside `room` cells from `start`.
    fn spread(units: i64, room: i64, parts: usize, seed: u64, start: i64, grid: i64) -> IntervalSet {
        let parts = parts.min(units as usize).max(1);
        let mut s = seed;
        let mut next = |m: i64| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if m <= 0 {
                0
            } else {
                ((s >> 33) as i64) % (m + 1)
            }
        };
        let mut sizes = vec![1i64; parts];
        for _ in 0..units - parts as i64 {
            let i = next(parts as i64 - 1) as usize;
            sizes[i] += 1;
        }
        let mut slack = room - units;
        let mut pos = start;
        let mut out = Vec::new();
        for sz in sizes {
            let g = next(slack / 2);
            slack -= g;
            pos += g;
            out.push(Interval::new(Rational::ratio(pos, grid), Rational::ratio(pos + sz, grid)));
            pos += sz;
        }
        IntervalSet::new(out).unwrap()
    }

    proptest! {
        #[test]
        fn moves_preserve_invariants(k in 1usize..4, ops in prop::collection::vec(arb_op(1), 1..25)) {
            let profile = BoundProfile::general(k);
            let mut f = StackingFunction::zero();
            for mut op in ops {
                op = rescale(op, k);
                f = apply_operation(&f, &op).unwrap();
                prop_assert!(f.validate().is_ok());
                prop_assert!(f.total_integral().is_zero());
                prop_assert!(check_bound(&f, &profile).pass);
                prop_assert!(*f.max_value() <= Rational::from(2 * k));
            }
        }

        #[test]
        fn contiguify_dominates(pre in prop::collection::vec(arb_op(2), 0..6), op in arb_op(2)) {
            let mut f = StackingFunction::zero();
            for p in &pre {
                f = apply_operation(&f, p).unwrap();
            }
            let c = contiguify(&f, &op).unwrap();
            prop_assert!(c.is_contiguous());
            prop_assert_eq!(c.a_set.measure(), op.a_set.measure());
            prop_assert_eq!(c.b_set.measure(), op.b_set.measure());
            prop_assert!(c.validate().is_ok());
            let g = apply_operation(&f, &op).unwrap();
            let h = apply_operation(&f, &c).unwrap();
            for x in g.breakpoints().into_iter().chain(h.breakpoints()) {
                prop_assert!(integral_f(&h, &x).unwrap() >= integral_f(&g, &x).unwrap());
            }
        }
    }

    /// Shrinks a `k = 1` move to the requested `k` by scaling about `-1/2`.
    fn rescale(op: StackingOperation, k: usize) -> StackingOperation {
        let s = Rational::ratio(1, k as i64);
        let map = |set: &IntervalSet| {
            IntervalSet::new(
                set.intervals()
                    .iter()
                    .map(|i| {
                        Interval::new(
                            neg_half() + (&i.left - neg_half()) * &s,
                            neg_half() + (&i.right - neg_half()) * &s,
                        )
                    })
                    .collect(),
            )
            .unwrap()
        };
        StackingOperation { a_set: map(&op.a_set), b_set: map(&op.b_set), k, ..op }
    }
}
