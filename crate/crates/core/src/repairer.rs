//! Rule-based repair with constant CFDs learned from data context: support
//! auto-tuning, filtering, rewriting onto the target, violation detection
//! and minimum-cost attribute-value repair.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use serde::Serialize;

use crate::model::{ContextRelationship, ContextType, PipelineConfig, Relation, Value};
use crate::profiler::{discover_cfds, ConditionalFd, FunctionalDependency};
use crate::text::damerau_levenshtein;

/// States explored per tuple before falling back to direct rhs fixes.
pub const SEARCH_LIMIT: usize = 20_000;

/// True when `row` matches the lhs pattern and its rhs differs from the
/// constant. A null rhs is a violation.
pub fn violates(cfd: &ConditionalFd, rel: &Relation, row: usize) -> bool {
    cfd.lhs_matches(rel, row)
        && rel
            .index_of(&cfd.rhs.0)
            .is_some_and(|i| rel.cell(row, i) != Some(cfd.rhs.1.as_str()))
}

/// Keeps the CFDs no tuple of `context` violates.
pub fn filter_cfds(cfds: &[ConditionalFd], context: &Relation) -> Vec<ConditionalFd> {
    cfds.iter()
        .filter(|c| (0..context.len()).all(|row| !violates(c, context, row)))
        .cloned()
        .collect()
}

/// Share of CFDs with confidence 1; zero for an empty set.
pub fn cfd_score(cfds: &[ConditionalFd]) -> f64 {
    if cfds.is_empty() {
        return 0.0;
    }
    cfds.iter().filter(|c| c.confidence >= 1.0).count() as f64 / cfds.len() as f64
}

/// Lowers the support threshold while the share of exact CFDs improves and
/// returns the filtered set of the best round.
pub fn tune_cfds(context: &Relation, cfg: &PipelineConfig) -> Vec<ConditionalFd> {
    let mut support = cfg.initial_support_for(context.len()).max(1);
    let step = cfg.support_step.max(1);
    let mut best_score = cfg.repair_lb;
    let mut best = Vec::new();
    loop {
        let discovered = discover_cfds(context, support, cfg.max_lhs);
        let score = cfd_score(&discovered);
        if score <= best_score {
            break;
        }
        best_score = score;
        best = filter_cfds(&discovered, context);
        if support == 1 {
            break;
        }
        support = support.saturating_sub(step).max(1);
    }
    best
}

/// Re-expresses context CFDs over target attributes. CFDs mentioning an
/// unmapped attribute are dropped; their count is returned alongside.
pub fn rewrite_to_target(cfds: &[ConditionalFd], rel: &ContextRelationship) -> (Vec<ConditionalFd>, usize) {
    let mut out = Vec::new();
    let mut dropped = 0;
    for cfd in cfds {
        let lhs: Option<Vec<(String, String)>> = cfd
            .lhs
            .iter()
            .map(|(a, v)| rel.target_of(a).map(|t| (t.to_string(), v.clone())))
            .collect();
        let rhs = rel.target_of(&cfd.rhs.0).map(|t| (t.to_string(), cfd.rhs.1.clone()));
        match (lhs, rhs) {
            (Some(lhs), Some(rhs)) => out.push(ConditionalFd {
                relation: rel.target_table.clone(),
                lhs,
                rhs,
                support: cfd.support,
                confidence: cfd.confidence,
            }),
            _ => dropped += 1,
        }
    }
    (out, dropped)
}

/// Union of per-context CFD sets. When two CFDs share an lhs pattern and rhs
/// attribute but disagree on the constant, the higher-priority context wins
/// (reference, then master, then example; then larger support).
pub fn merge_cfds(sets: &[(ContextType, Vec<ConditionalFd>)]) -> Vec<ConditionalFd> {
    let mut chosen: BTreeMap<(Vec<(String, String)>, String), (u8, Reverse<usize>, ConditionalFd)> = BTreeMap::new();
    for (ctype, cfds) in sets {
        for cfd in cfds {
            let key = (cfd.lhs.clone(), cfd.rhs.0.clone());
            let rank = (ctype.priority(), Reverse(cfd.support));
            match chosen.get(&key) {
                Some((p, s, _)) if (*p, *s) <= rank => {}
                _ => {
                    chosen.insert(key, (rank.0, rank.1, cfd.clone()));
                }
            }
        }
    }
    chosen.into_values().map(|(_, _, c)| c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SingleTuple,
    TuplePair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Index into the CFD list (single-tuple) or FD list (tuple-pair).
    pub rule: usize,
    pub rows: Vec<usize>,
    pub attributes: Vec<String>,
}

/// Single-tuple CFD violations, ordered by row then CFD.
pub fn detect_violations(rel: &Relation, cfds: &[ConditionalFd]) -> Vec<Violation> {
    let mut out = Vec::new();
    for row in 0..rel.len() {
        for (i, cfd) in cfds.iter().enumerate() {
            if violates(cfd, rel, row) {
                out.push(Violation {
                    kind: ViolationKind::SingleTuple,
                    rule: i,
                    rows: vec![row],
                    attributes: vec![cfd.rhs.0.clone()],
                });
            }
        }
    }
    out
}

/// Tuple pairs agreeing on a pattern-free FD's lhs (all non-null) but
/// holding different non-null rhs values.
pub fn detect_fd_violations(rel: &Relation, fds: &[FunctionalDependency]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, fd) in fds.iter().enumerate() {
        let lhs: Option<Vec<usize>> = fd.lhs.iter().map(|a| rel.index_of(a)).collect();
        let (Some(lhs), Some(rhs)) = (lhs, rel.index_of(&fd.rhs)) else {
            continue;
        };
        let key = |row: usize| -> Option<Vec<&str>> { lhs.iter().map(|&i| rel.cell(row, i)).collect() };
        for i in 0..rel.len() {
            for j in i + 1..rel.len() {
                let (Some(a), Some(b)) = (rel.cell(i, rhs), rel.cell(j, rhs)) else {
                    continue;
                };
                if a != b && key(i).is_some() && key(i) == key(j) {
                    out.push(Violation {
                        kind: ViolationKind::TuplePair,
                        rule: k,
                        rows: vec![i, j],
                        attributes: vec![fd.rhs.clone()],
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| a.rows.cmp(&b.rows).then(a.rule.cmp(&b.rule)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairOp {
    pub row: usize,
    pub attribute: String,
    pub old: Value,
    pub new: Value,
    pub cost: f64,
}

/// Damerau-Levenshtein distance; a null on either side costs the other's length.
pub fn change_cost(old: Option<&str>, new: Option<&str>) -> usize {
    match (old, new) {
        (Some(a), Some(b)) => damerau_levenshtein(a, b),
        (None, Some(v)) | (Some(v), None) => v.chars().count(),
        (None, None) => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairOutcome {
    #[serde(skip)]
    pub relation: Relation,
    pub ops: Vec<RepairOp>,
    pub total_cost: f64,
    /// Rows left with violations because the search ran out of options.
    pub unresolved: Vec<usize>,
    pub bound_triggered: bool,
}

/// Candidate replacement values per attribute: every constant the CFDs use
/// for it.
fn constants_by_attribute(cfds: &[ConditionalFd]) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for cfd in cfds {
        for (a, v) in &cfd.lhs {
            out.entry(a).or_default().insert(v);
        }
        out.entry(&cfd.rhs.0).or_default().insert(&cfd.rhs.1);
    }
    out
}

/// Values an lhs attribute may be changed to: other pattern constants, or a
/// null that matches no pattern when there is no other constant.
pub fn lhs_alternatives(current: Option<&str>, constants: Option<&BTreeSet<&str>>) -> Vec<Value> {
    let others: Vec<Value> = constants
        .into_iter()
        .flatten()
        .filter(|c| Some(**c) != current)
        .map(|c| Some(c.to_string()))
        .collect();
    if others.is_empty() && current.is_some() {
        vec![None]
    } else {
        others
    }
}

struct TupleView<'a> {
    attributes: &'a [String],
    values: Vec<Value>,
}

impl TupleView<'_> {
    fn get(&self, attr: &str) -> Option<Option<&str>> {
        self.attributes.iter().position(|a| a == attr).map(|i| self.values[i].as_deref())
    }

    fn first_violation<'c>(&self, cfds: &'c [ConditionalFd]) -> Option<&'c ConditionalFd> {
        cfds.iter().find(|cfd| {
            cfd.lhs.iter().all(|(a, v)| self.get(a) == Some(Some(v.as_str())))
                && self.get(&cfd.rhs.0).is_some_and(|r| r != Some(cfd.rhs.1.as_str()))
        })
    }
}

/// Exact minimum-cost fix of one tuple: uniform-cost search that branches on
/// the first violated CFD, either setting its rhs to the constant or moving
/// one unmodified lhs attribute to an alternative value. Each attribute is
/// changed at most once. `None` when no violation-free state is reachable
/// within [`SEARCH_LIMIT`] expansions.
fn repair_tuple(
    attributes: &[String],
    tuple: &[Value],
    cfds: &[ConditionalFd],
    constants: &BTreeMap<&str, BTreeSet<&str>>,
) -> Option<(usize, Vec<(usize, Value)>)> {
    type State = (usize, Vec<(usize, Value)>);
    let mut heap: BinaryHeap<Reverse<State>> = BinaryHeap::new();
    let mut seen: HashSet<Vec<(usize, Value)>> = HashSet::new();
    heap.push(Reverse((0, Vec::new())));
    let mut expanded = 0;
    while let Some(Reverse((cost, changes))) = heap.pop() {
        if !seen.insert(changes.clone()) {
            continue;
        }
        expanded += 1;
        if expanded > SEARCH_LIMIT {
            return None;
        }
        let mut values = tuple.to_vec();
        for (i, v) in &changes {
            values[*i] = v.clone();
        }
        let view = TupleView { attributes, values };
        let Some(cfd) = view.first_violation(cfds) else {
            return Some((cost, changes));
        };
        let modified = |i: usize| changes.iter().any(|(j, _)| *j == i);
        let mut push = |i: usize, new: Value| {
            let step = change_cost(tuple[i].as_deref(), new.as_deref());
            let mut next = changes.clone();
            next.push((i, new));
            next.sort();
            heap.push(Reverse((cost + step, next)));
        };
        if let Some(r) = attributes.iter().position(|a| *a == cfd.rhs.0) {
            if !modified(r) {
                push(r, Some(cfd.rhs.1.clone()));
            }
        }
        for (a, _) in &cfd.lhs {
            let Some(i) = attributes.iter().position(|x| x == a) else {
                continue;
            };
            if modified(i) {
                continue;
            }
            for alt in lhs_alternatives(view.values[i].as_deref(), constants.get(a.as_str())) {
                push(i, alt);
            }
        }
    }
    None
}

/// Direct rhs fixes in CFD order, used when the exact search gives up.
fn greedy_tuple(attributes: &[String], tuple: &[Value], cfds: &[ConditionalFd]) -> (Vec<(usize, Value)>, bool) {
    let mut values = tuple.to_vec();
    let mut touched = BTreeSet::new();
    let limit = attributes.len();
    while touched.len() < limit {
        let view = TupleView { attributes, values: values.clone() };
        let Some(cfd) = view.first_violation(cfds) else {
            break;
        };
        let Some(r) = attributes.iter().position(|a| *a == cfd.rhs.0) else {
            break;
        };
        if !touched.insert(r) {
            break;
        }
        values[r] = Some(cfd.rhs.1.clone());
    }
    let view = TupleView { attributes, values: values.clone() };
    let clean = view.first_violation(cfds).is_none();
    let changes = (0..attributes.len())
        .filter(|&i| values[i] != tuple[i])
        .map(|i| (i, values[i].clone()))
        .collect();
    (changes, clean)
}

/// Minimum-cost repair of CFD violations, then majority repair of
/// pattern-free FD conflicts. At most |tuples|·|attributes| operations.
pub fn repair(rel: &Relation, cfds: &[ConditionalFd], fds: &[FunctionalDependency]) -> RepairOutcome {
    let cfds: Vec<ConditionalFd> = cfds
        .iter()
        .filter(|c| rel.has_attribute(&c.rhs.0) && c.lhs.iter().all(|(a, _)| rel.has_attribute(a)))
        .cloned()
        .collect();
    let constants = constants_by_attribute(&cfds);
    let attributes = rel.attributes().to_vec();
    let mut out = rel.clone();
    let mut ops = Vec::new();
    let mut unresolved = Vec::new();
    let mut bound_triggered = false;
    let bound = rel.len() * rel.arity();

    let violating: BTreeSet<usize> = detect_violations(rel, &cfds).iter().map(|v| v.rows[0]).collect();
    for row in violating {
        let tuple = &rel.tuples()[row];
        let changes = match repair_tuple(&attributes, tuple, &cfds, &constants) {
            Some((_, changes)) => changes,
            None => {
                let (changes, clean) = greedy_tuple(&attributes, tuple, &cfds);
                if !clean {
                    unresolved.push(row);
                }
                changes
            }
        };
        for (i, new) in changes {
            if ops.len() >= bound {
                bound_triggered = true;
                break;
            }
            let old = tuple[i].clone();
            let cost = change_cost(old.as_deref(), new.as_deref()) as f64;
            out.tuples_mut()[row][i] = new.clone();
            ops.push(RepairOp {
                row,
                attribute: attributes[i].clone(),
                old,
                new,
                cost,
            });
        }
    }

    for fd in fds {
        let lhs: Option<Vec<usize>> = fd.lhs.iter().map(|a| out.index_of(a)).collect();
        let (Some(lhs), Some(rhs)) = (lhs, out.index_of(&fd.rhs)) else {
            continue;
        };
        let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
        for row in 0..out.len() {
            let key: Option<Vec<String>> = lhs.iter().map(|&i| out.cell(row, i).map(str::to_string)).collect();
            if let (Some(key), Some(_)) = (key, out.cell(row, rhs)) {
                groups.entry(key).or_default().push(row);
            }
        }
        for rows in groups.values() {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &r in rows {
                *counts.entry(out.cell(r, rhs).expect("grouped on non-null rhs")).or_default() += 1;
            }
            if counts.len() < 2 {
                continue;
            }
            let majority = counts
                .iter()
                .fold(None::<(&str, usize)>, |best, (&v, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((v, c)),
                })
                .map(|(v, _)| v.to_string())
                .expect("non-empty group");
            for &r in rows {
                if out.cell(r, rhs) != Some(majority.as_str()) {
                    if ops.len() >= bound {
                        bound_triggered = true;
                        break;
                    }
                    let old = out.tuples()[r][rhs].clone();
                    let cost = change_cost(old.as_deref(), Some(&majority)) as f64;
                    out.tuples_mut()[r][rhs] = Some(majority.clone());
                    ops.push(RepairOp {
                        row: r,
                        attribute: fd.rhs.clone(),
                        old,
                        new: Some(majority.clone()),
                        cost,
                    });
                }
            }
        }
    }

    let total_cost = ops.iter().map(|o| o.cost).sum();
    RepairOutcome {
        relation: out,
        ops,
        total_cost,
        unresolved,
        bound_triggered,
    }
}
