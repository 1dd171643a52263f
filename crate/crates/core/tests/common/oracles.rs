//! Exhaustive reference implementations used to check the profiler and the
//! repairer. Everything here is quadratic or exponential on purpose.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use wrangle_core::model::{AttributeRef, Relation, Value};
use wrangle_core::profiler::{ConditionalFd, FunctionalDependency, InclusionDependency};

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s| s.len() <= max)
        .collect()
}

fn proper_subsets(set: &[usize]) -> Vec<Vec<usize>> {
    subsets(set.len(), set.len() - 1)
        .into_iter()
        .map(|pick| pick.iter().map(|&i| set[i]).collect())
        .collect()
}

/// Columns with no null and no two equal cells, checked pairwise.
pub fn keys(rel: &Relation) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (c, attr) in rel.attributes().iter().enumerate() {
        let mut ok = true;
        for i in 0..rel.len() {
            if rel.cell(i, c).is_none() {
                ok = false;
            }
            for j in i + 1..rel.len() {
                if rel.cell(i, c) == rel.cell(j, c) {
                    ok = false;
                }
            }
        }
        if ok {
            out.insert(attr.clone());
        }
    }
    out
}

/// Every ordered pair of distinct columns where each non-null cell of the
/// first occurs somewhere in the second.
pub fn inds(rels: &[Relation]) -> BTreeSet<InclusionDependency> {
    let cols: Vec<(AttributeRef, &Relation, usize)> = rels
        .iter()
        .flat_map(|r| (0..r.arity()).map(move |c| (AttributeRef::new(r.name(), &r.attributes()[c]), r, c)))
        .collect();
    let mut out = BTreeSet::new();
    for (a, ra, ca) in &cols {
        for (b, rb, cb) in &cols {
            if a == b {
                continue;
            }
            let mut any = false;
            let mut all = true;
            for i in 0..ra.len() {
                if let Some(v) = ra.cell(i, *ca) {
                    any = true;
                    all &= (0..rb.len()).any(|j| rb.cell(j, *cb) == Some(v));
                }
            }
            if any && all {
                out.insert(InclusionDependency {
                    from: a.clone(),
                    to: b.clone(),
                });
            }
        }
    }
    out
}

fn fd_holds(rel: &Relation, lhs: &[usize], rhs: usize) -> bool {
    for i in 0..rel.len() {
        for j in i + 1..rel.len() {
            let agree = lhs.iter().all(|&c| rel.cell(i, c) == rel.cell(j, c));
            if agree && rel.cell(i, rhs) != rel.cell(j, rhs) {
                return false;
            }
        }
    }
    true
}

/// Minimal FDs by checking every tuple pair for every candidate.
pub fn fds(rel: &Relation, max_lhs: usize) -> BTreeSet<FunctionalDependency> {
    let n = rel.arity();
    let mut out = BTreeSet::new();
    for lhs in subsets(n, max_lhs) {
        for rhs in (0..n).filter(|a| !lhs.contains(a)) {
            if !fd_holds(rel, &lhs, rhs) {
                continue;
            }
            if proper_subsets(&lhs).iter().any(|sub| fd_holds(rel, sub, rhs)) {
                continue;
            }
            out.insert(FunctionalDependency {
                relation: rel.name().to_string(),
                lhs: lhs.iter().map(|&i| rel.attributes()[i].clone()).collect(),
                rhs: rel.attributes()[rhs].clone(),
            });
        }
    }
    out
}

/// Comparable form of a CFD: lhs pattern, rhs, support, confidence bits.
pub type CfdKey = (Vec<(String, String)>, (String, String), usize, u64);

pub fn cfd_key(c: &ConditionalFd) -> CfdKey {
    (c.lhs.clone(), c.rhs.clone(), c.support, c.confidence.to_bits())
}

/// Enumerates every constant pattern occurring in the data, counts matching
/// tuples by a full scan and prunes patterns shadowed by an exact sub-pattern.
pub fn cfds(rel: &Relation, support: usize, max_lhs: usize) -> BTreeSet<CfdKey> {
    let n = rel.arity();
    let attrs = rel.attributes();
    let mut all: Vec<(Vec<usize>, Vec<String>, usize, String, usize, usize)> = Vec::new();
    for lhs in subsets(n, max_lhs).into_iter().filter(|l| l.len() < n) {
        let patterns: BTreeSet<Vec<String>> = (0..rel.len())
            .filter_map(|i| lhs.iter().map(|&c| rel.cell(i, c).map(str::to_string)).collect())
            .collect();
        for pattern in patterns {
            let rows: Vec<usize> = (0..rel.len())
                .filter(|&i| lhs.iter().zip(&pattern).all(|(&c, v)| rel.cell(i, c) == Some(v.as_str())))
                .collect();
            if rows.len() < support.max(1) {
                continue;
            }
            for rhs in (0..n).filter(|a| !lhs.contains(a)) {
                let values: BTreeSet<&str> = rows.iter().filter_map(|&i| rel.cell(i, rhs)).collect();
                let mut best: Option<(&str, usize)> = None;
                for v in values {
                    let hits = rows.iter().filter(|&&i| rel.cell(i, rhs) == Some(v)).count();
                    if best.is_none_or(|(_, h)| hits > h) {
                        best = Some((v, hits));
                    }
                }
                if let Some((v, hits)) = best {
                    all.push((lhs.clone(), pattern.clone(), rhs, v.to_string(), hits, rows.len()));
                }
            }
        }
    }
    let exact: HashSet<(Vec<usize>, Vec<String>, usize, String)> = all
        .iter()
        .filter(|c| c.4 == c.5)
        .map(|c| (c.0.clone(), c.1.clone(), c.2, c.3.clone()))
        .collect();
    all.iter()
        .filter(|(lhs, pattern, rhs, v, _, _)| {
            !subsets(lhs.len(), lhs.len() - 1).iter().any(|pick| {
                let sub: Vec<usize> = pick.iter().map(|&i| lhs[i]).collect();
                let sub_pattern: Vec<String> = pick.iter().map(|&i| pattern[i].clone()).collect();
                exact.contains(&(sub, sub_pattern, *rhs, v.clone()))
            })
        })
        .map(|(lhs, pattern, rhs, v, hits, rows)| {
            (
                lhs.iter().zip(pattern).map(|(&c, p)| (attrs[c].clone(), p.clone())).collect(),
                (attrs[*rhs].clone(), v.clone()),
                *rows,
                (*hits as f64 / *rows as f64).to_bits(),
            )
        })
        .collect()
}

/// Edit distance with insertion, deletion, substitution and adjacent
/// transposition, by breadth-first search over intermediate strings.
pub fn edit_distance(a: &str, b: &str) -> usize {
    if a == b {
        return 0;
    }
    let alphabet: BTreeSet<char> = a.chars().chain(b.chars()).collect();
    let limit = a.chars().count().max(b.chars().count()) + 1;
    let mut seen: HashSet<Vec<char>> = HashSet::new();
    let mut queue: VecDeque<(Vec<char>, usize)> = VecDeque::new();
    let target: Vec<char> = b.chars().collect();
    queue.push_back((a.chars().collect(), 0));
    while let Some((s, d)) = queue.pop_front() {
        if s == target {
            return d;
        }
        if !seen.insert(s.clone()) {
            continue;
        }
        let mut next = Vec::new();
        for i in 0..=s.len() {
            for &c in &alphabet {
                if s.len() < limit {
                    let mut t = s.clone();
                    t.insert(i, c);
                    next.push(t);
                }
                if i < s.len() && s[i] != c {
                    let mut t = s.clone();
                    t[i] = c;
                    next.push(t);
                }
            }
            if i < s.len() {
                let mut t = s.clone();
                t.remove(i);
                next.push(t);
            }
            if i + 1 < s.len() {
                let mut t = s.clone();
                t.swap(i, i + 1);
                next.push(t);
            }
        }
        queue.extend(next.into_iter().filter(|t| !seen.contains(t)).map(|t| (t, d + 1)));
    }
    unreachable!("every string is reachable")
}

pub fn cell_cost(old: &Value, new: &Value) -> usize {
    match (old, new) {
        (Some(a), Some(b)) => edit_distance(a, b),
        (None, Some(v)) | (Some(v), None) => v.chars().count(),
        (None, None) => 0,
    }
}

/// True when the tuple matches the CFD's pattern but not its rhs constant.
pub fn tuple_violates(attrs: &[String], tuple: &[Value], cfd: &ConditionalFd) -> bool {
    let get = |a: &str| attrs.iter().position(|x| x == a).map(|i| tuple[i].as_deref());
    cfd.lhs.iter().all(|(a, v)| get(a) == Some(Some(v.as_str())))
        && get(&cfd.rhs.0).is_some_and(|r| r != Some(cfd.rhs.1.as_str()))
}

pub fn relation_violations(rel: &Relation, cfds: &[ConditionalFd]) -> usize {
    rel.tuples()
        .iter()
        .map(|t| cfds.iter().filter(|c| tuple_violates(rel.attributes(), t, c)).count())
        .sum()
}

/// Cheapest violation-free version of one tuple. Each cell may keep its
/// value, take any constant the CFDs use for its attribute, or become null
/// when the CFDs offer no constant other than its current value.
pub fn cheapest_fix(attrs: &[String], tuple: &[Value], cfds: &[ConditionalFd]) -> Option<usize> {
    let mut constants: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in cfds {
        for (a, v) in &c.lhs {
            constants.entry(a).or_default().insert(v);
        }
        constants.entry(&c.rhs.0).or_default().insert(&c.rhs.1);
    }
    let domains: Vec<Vec<Value>> = attrs
        .iter()
        .zip(tuple)
        .map(|(a, cur)| {
            let mut d = vec![cur.clone()];
            let consts = constants.get(a.as_str()).cloned().unwrap_or_default();
            let others: Vec<Value> = consts
                .iter()
                .filter(|c| Some(**c) != cur.as_deref())
                .map(|c| Some(c.to_string()))
                .collect();
            if others.is_empty() && cur.is_some() && !consts.is_empty() {
                d.push(None);
            }
            d.extend(others);
            d
        })
        .collect();
    let mut best: Option<usize> = None;
    let mut idx = vec![0; attrs.len()];
    loop {
        let candidate: Vec<Value> = idx.iter().zip(&domains).map(|(&i, d)| d[i].clone()).collect();
        if !cfds.iter().any(|c| tuple_violates(attrs, &candidate, c)) {
            let cost: usize = candidate.iter().zip(tuple).map(|(n, o)| cell_cost(o, n)).sum();
            best = Some(best.map_or(cost, |b| b.min(cost)));
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
