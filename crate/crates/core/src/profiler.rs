//! Data profiling: candidate keys, inclusion dependencies, foreign-key
//! candidates, functional dependencies and constant conditional FDs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::matcher::CorrespondenceSet;
use crate::model::{AttributeRef, Relation, TargetAttr};

/// `lhs -> rhs` over attributes of one relation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FunctionalDependency {
    pub relation: String,
    pub lhs: Vec<String>,
    pub rhs: String,
}

impl fmt::Display for FunctionalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] -> [{}]", self.relation, self.lhs.join(", "), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct InclusionDependency {
    pub from: AttributeRef,
    pub to: AttributeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ForeignKeyCandidate {
    pub ind: InclusionDependency,
    pub shared_target_attribute: TargetAttr,
}

/// A constant CFD `(R: X -> A, (x1, .., xn || a))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalFd {
    pub relation: String,
    /// Pattern constants keyed by attribute, in relation attribute order.
    pub lhs: Vec<(String, String)>,
    pub rhs: (String, String),
    pub support: usize,
    pub confidence: f64,
}

impl ConditionalFd {
    pub fn embedded(&self) -> FunctionalDependency {
        FunctionalDependency {
            relation: self.relation.clone(),
            lhs: self.lhs.iter().map(|(a, _)| a.clone()).collect(),
            rhs: self.rhs.0.clone(),
        }
    }

    /// Identity of the rule ignoring its statistics.
    pub fn key(&self) -> (Vec<(String, String)>, (String, String)) {
        (self.lhs.clone(), self.rhs.clone())
    }

    /// True when every lhs attribute of `row` equals its pattern constant.
    pub fn lhs_matches(&self, rel: &Relation, row: usize) -> bool {
        self.lhs.iter().all(|(attr, constant)| {
            rel.index_of(attr)
                .and_then(|i| rel.cell(row, i))
                .is_some_and(|v| v == constant)
        })
    }
}

impl fmt::Display for ConditionalFd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attrs: Vec<&str> = self.lhs.iter().map(|(a, _)| a.as_str()).collect();
        let consts: Vec<&str> = self.lhs.iter().map(|(_, c)| c.as_str()).collect();
        write!(
            f,
            "{}: [{}] -> [{}], ({} || {}) support={} confidence={:.3}",
            self.relation,
            attrs.join(", "),
            self.rhs.0,
            consts.join(", "),
            self.rhs.1,
            self.support,
            self.confidence
        )
    }
}

/// Single attributes with no nulls and pairwise distinct values.
pub fn discover_candidate_keys(rel: &Relation) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    'attrs: for (idx, attr) in rel.attributes().iter().enumerate() {
        let mut seen = BTreeSet::new();
        for value in rel.column(idx) {
            match value {
                Some(v) if seen.insert(v) => {}
                _ => continue 'attrs,
            }
        }
        keys.insert(attr.clone());
    }
    keys
}

/// All `A ⊆ B` over distinct non-null values, `A != B`, `A` non-empty.
pub fn discover_inclusion_dependencies(rels: &[Relation]) -> Vec<InclusionDependency> {
    let columns: Vec<(AttributeRef, BTreeSet<&str>)> = rels
        .iter()
        .flat_map(|rel| {
            rel.attributes().iter().enumerate().map(move |(idx, attr)| {
                (
                    AttributeRef::new(rel.name(), attr),
                    rel.column(idx).flatten().collect::<BTreeSet<_>>(),
                )
            })
        })
        .collect();
    let mut out = Vec::new();
    for (from, from_values) in &columns {
        if from_values.is_empty() {
            continue;
        }
        for (to, to_values) in &columns {
            if from == to || to_values.len() < from_values.len() {
                continue;
            }
            if from_values.is_subset(to_values) {
                out.push(InclusionDependency {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
    }
    out.sort();
    out
}

/// INDs between different relations whose `to` side is a candidate key and
/// whose endpoints both match a common target attribute above `lb`. A
/// dependent column with fewer than two distinct values is contained in any
/// column sharing that value and is not taken as a reference.
pub fn discover_foreign_keys(
    rels: &[Relation],
    matches: &CorrespondenceSet,
    lb: f64,
) -> Vec<ForeignKeyCandidate> {
    let keys: BTreeMap<&str, BTreeSet<String>> = rels
        .iter()
        .map(|r| (r.name(), discover_candidate_keys(r)))
        .collect();
    let mut out = Vec::new();
    for ind in discover_inclusion_dependencies(rels) {
        if ind.from.relation == ind.to.relation {
            continue;
        }
        let dependent = rels.iter().find(|r| r.name() == ind.from.relation);
        let distinct = dependent
            .and_then(|r| r.index_of(&ind.from.attribute).map(|i| r.distinct_values(i).len()))
            .unwrap_or(0);
        if distinct < 2 {
            continue;
        }
        if !keys
            .get(ind.to.relation.as_str())
            .is_some_and(|k| k.contains(&ind.to.attribute))
        {
            continue;
        }
        let from_targets = matches.targets_of(&ind.from, lb);
        let to_targets = matches.targets_of(&ind.to, lb);
        let shared = from_targets
            .iter()
            .filter_map(|(t, s1)| {
                to_targets
                    .iter()
                    .find(|(t2, _)| t2 == t)
                    .map(|(_, s2)| (t.clone(), s1.min(*s2)))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        if let Some((shared_target_attribute, _)) = shared {
            out.push(ForeignKeyCandidate {
                ind,
                shared_target_attribute,
            });
        }
    }
    out
}

/// Stripped partition: equivalence classes of size >= 2, rows ascending.
#[derive(Debug, Clone)]
struct Partition {
    classes: Vec<Vec<u32>>,
}

impl Partition {
    fn of_column(rel: &Relation, idx: usize) -> Self {
        // Nulls form one class of their own.
        let mut groups: HashMap<Option<&str>, Vec<u32>> = HashMap::new();
        for (row, v) in rel.column(idx).enumerate() {
            groups.entry(v).or_default().push(row as u32);
        }
        let mut classes: Vec<Vec<u32>> = groups.into_values().filter(|c| c.len() > 1).collect();
        classes.sort_unstable();
        Partition { classes }
    }

    /// `||π|| - |π|`; equal errors on `X` and `X ∪ {A}` iff `X -> A`.
    fn error(&self) -> usize {
        self.classes.iter().map(|c| c.len() - 1).sum()
    }

    fn product(&self, other: &Partition, rows: usize) -> Partition {
        let mut owner = vec![u32::MAX; rows];
        for (i, class) in self.classes.iter().enumerate() {
            for &row in class {
                owner[row as usize] = i as u32;
            }
        }
        let mut classes = Vec::new();
        let mut buckets: HashMap<u32, Vec<u32>> = HashMap::new();
        for class in &other.classes {
            for &row in class {
                let o = owner[row as usize];
                if o != u32::MAX {
                    buckets.entry(o).or_default().push(row);
                }
            }
            for (_, bucket) in buckets.drain() {
                if bucket.len() > 1 {
                    classes.push(bucket);
                }
            }
        }
        classes.sort_unstable();
        Partition { classes }
    }
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimal FDs with a non-empty lhs of at most `max_lhs` attributes that hold
/// exactly on the instance. Nulls compare equal to each other.
pub fn discover_fds(rel: &Relation, max_lhs: usize) -> Vec<FunctionalDependency> {
    let n = rel.arity();
    let rows = rel.len();
    let singles: Vec<Partition> = (0..n).map(|i| Partition::of_column(rel, i)).collect();
    let mut partitions: HashMap<Vec<usize>, Partition> = (0..n)
        .map(|i| (vec![i], singles[i].clone()))
        .collect();
    // (lhs, rhs) pairs already known to hold.
    let mut holds: BTreeSet<(Vec<usize>, usize)> = BTreeSet::new();
    let mut out = Vec::new();

    for size in 1..=max_lhs.min(n.saturating_sub(1)) {
        for lhs in subsets_of_size(n, size) {
            if !partitions.contains_key(&lhs) {
                let (head, last) = lhs.split_at(size - 1);
                let base = &partitions[head];
                let p = base.product(&singles[last[0]], rows);
                partitions.insert(lhs.clone(), p);
            }
            let lhs_error = partitions[&lhs].error();
            for rhs in (0..n).filter(|a| !lhs.contains(a)) {
                let shadowed = (1..size).any(|k| {
                    subsets_of_size(size, k).into_iter().any(|pick| {
                        let sub: Vec<usize> = pick.iter().map(|&i| lhs[i]).collect();
                        holds.contains(&(sub, rhs))
                    })
                });
                if shadowed {
                    continue;
                }
                let refined = partitions[&lhs].product(&singles[rhs], rows);
                if refined.error() == lhs_error {
                    holds.insert((lhs.clone(), rhs));
                    out.push(FunctionalDependency {
                        relation: rel.name().to_string(),
                        lhs: lhs.iter().map(|&i| rel.attributes()[i].clone()).collect(),
                        rhs: rel.attributes()[rhs].clone(),
                    });
                }
            }
        }
    }
    out
}

/// Constant CFDs with `|lhs| <= max_lhs` whose lhs pattern matches at least
/// `support` tuples. The rhs constant is the most frequent non-null rhs value
/// among matching tuples (ties: smallest). A CFD is dropped when a proper
/// sub-pattern with the same rhs constant already holds with confidence 1.
pub fn discover_cfds(rel: &Relation, support: usize, max_lhs: usize) -> Vec<ConditionalFd> {
    let support = support.max(1);
    let n = rel.arity();
    let attrs = rel.attributes();
    let mut found: Vec<ConditionalFd> = Vec::new();

    for size in 1..=max_lhs.min(n.saturating_sub(1)) {
        for lhs in subsets_of_size(n, size) {
            let mut groups: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
            for row in 0..rel.len() {
                let key: Option<Vec<&str>> = lhs.iter().map(|&i| rel.cell(row, i)).collect();
                if let Some(key) = key {
                    groups.entry(key).or_default().push(row);
                }
            }
            for (pattern, members) in groups.iter().filter(|(_, m)| m.len() >= support) {
                for rhs in (0..n).filter(|a| !lhs.contains(a)) {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for &row in members {
                        if let Some(v) = rel.cell(row, rhs) {
                            *counts.entry(v).or_default() += 1;
                        }
                    }
                    // BTreeMap iterates ascending, so the first maximum wins ties.
                    let Some((constant, hits)) = counts
                        .iter()
                        .fold(None::<(&str, usize)>, |best, (&v, &c)| match best {
                            Some((_, bc)) if bc >= c => best,
                            _ => Some((v, c)),
                        })
                    else {
                        continue;
                    };
                    found.push(ConditionalFd {
                        relation: rel.name().to_string(),
                        lhs: lhs
                            .iter()
                            .zip(pattern)
                            .map(|(&i, v)| (attrs[i].clone(), v.to_string()))
                            .collect(),
                        rhs: (attrs[rhs].clone(), constant.to_string()),
                        support: members.len(),
                        confidence: hits as f64 / members.len() as f64,
                    });
                }
            }
        }
    }

    let exact: BTreeSet<(Vec<(String, String)>, (String, String))> = found
        .iter()
        .filter(|c| c.confidence == 1.0)
        .map(ConditionalFd::key)
        .collect();
    found.retain(|cfd| {
        let size = cfd.lhs.len();
        !(1..size).any(|k| {
            subsets_of_size(size, k).into_iter().any(|pick| {
                let sub: Vec<(String, String)> = pick.iter().map(|&i| cfd.lhs[i].clone()).collect();
                exact.contains(&(sub, cfd.rhs.clone()))
            })
        })
    });
    found
}
