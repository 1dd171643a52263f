//! Mapping generation and verification: sources are clustered by foreign-key
//! candidates, candidate st-tgds are generated over a descending threshold
//! sweep, and the best candidate per anchor source is kept.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;

use crate::matcher::{Correspondence, CorrespondenceSet};
use crate::model::{AttributeRef, ContextRelationship, PipelineConfig, Relation, TargetSchema, Value};
use crate::profiler::ForeignKeyCandidate;

/// Upper bound on join atoms in one candidate.
pub const MAX_JOINS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SourceCluster {
    pub members: BTreeSet<String>,
    pub joins: BTreeSet<ForeignKeyCandidate>,
}

impl SourceCluster {
    /// Members that are never the referenced side of a one-way join edge.
    /// Falls back to the smallest member when every member is referenced.
    pub fn roots(&self) -> BTreeSet<String> {
        let referenced: BTreeSet<&str> = self
            .joins
            .iter()
            .filter(|fk| !self.joins.iter().any(|o| is_reverse(fk, o)))
            .map(|fk| fk.ind.to.relation.as_str())
            .collect();
        let roots: BTreeSet<String> = self
            .members
            .iter()
            .filter(|m| !referenced.contains(m.as_str()))
            .cloned()
            .collect();
        if roots.is_empty() {
            self.members.iter().next().cloned().into_iter().collect()
        } else {
            roots
        }
    }
}

fn is_reverse(a: &ForeignKeyCandidate, b: &ForeignKeyCandidate) -> bool {
    a.ind.from == b.ind.to && a.ind.to == b.ind.from
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingCandidate {
    pub target_table: String,
    /// The members and join edges this candidate uses.
    pub cluster: SourceCluster,
    /// Equi-join conditions in evaluation order.
    pub join_plan: Vec<(AttributeRef, AttributeRef)>,
    /// Target attribute to source attribute; absent attributes are existential.
    pub projection: BTreeMap<String, AttributeRef>,
    pub threshold_used: f64,
    pub verification_score: Option<f64>,
}

impl MappingCandidate {
    /// Number of schematic correspondences the candidate satisfies.
    pub fn correspondences(&self) -> usize {
        self.projection.len()
    }

    /// Readable st-tgd, e.g. `z(x1, x2) ∧ d(x2, x3) → ∃y1 p(y1, x1, x3)`.
    pub fn tgd_text(&self, sources: &[Relation], target: &TargetSchema) -> String {
        let mut parent: BTreeMap<AttributeRef, AttributeRef> = BTreeMap::new();
        fn find(parent: &BTreeMap<AttributeRef, AttributeRef>, a: &AttributeRef) -> AttributeRef {
            let mut cur = a.clone();
            while let Some(p) = parent.get(&cur) {
                if *p == cur {
                    break;
                }
                cur = p.clone();
            }
            cur
        }
        for (a, b) in &self.join_plan {
            let (ra, rb) = (find(&parent, a), find(&parent, b));
            if ra != rb {
                parent.insert(rb, ra);
            }
        }
        let mut vars: BTreeMap<AttributeRef, String> = BTreeMap::new();
        let mut next = 1;
        let mut body = Vec::new();
        for member in &self.cluster.members {
            let Some(rel) = sources.iter().find(|r| r.name() == member) else {
                continue;
            };
            let args: Vec<String> = rel
                .attributes()
                .iter()
                .map(|attr| {
                    let root = find(&parent, &AttributeRef::new(member.clone(), attr));
                    vars.entry(root)
                        .or_insert_with(|| {
                            let v = format!("x{next}");
                            next += 1;
                            v
                        })
                        .clone()
                })
                .collect();
            body.push(format!("{member}({})", args.join(", ")));
        }
        let mut existentials = Vec::new();
        let head_args: Vec<String> = target
            .table(&self.target_table)
            .map(|t| t.attributes.as_slice())
            .unwrap_or_default()
            .iter()
            .map(|attr| match self.projection.get(attr) {
                Some(src) => vars.get(&find(&parent, src)).cloned().unwrap_or_else(|| src.to_string()),
                None => {
                    let y = format!("y{}", existentials.len() + 1);
                    existentials.push(y.clone());
                    y
                }
            })
            .collect();
        let quant = if existentials.is_empty() {
            String::new()
        } else {
            format!("∃{} ", existentials.join(","))
        };
        format!("{} → {quant}{}({})", body.join(" ∧ "), self.target_table, head_args.join(", "))
    }
}

/// Connected components of the source graph whose edges are FK candidates.
pub fn cluster_sources(sources: &[Relation], fks: &[ForeignKeyCandidate]) -> Vec<SourceCluster> {
    let names: Vec<&str> = sources.iter().map(Relation::name).collect();
    let mut comp: Vec<usize> = (0..names.len()).collect();
    fn root(comp: &mut [usize], mut i: usize) -> usize {
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    let idx = |n: &str| names.iter().position(|m| *m == n);
    for fk in fks {
        if let (Some(a), Some(b)) = (idx(&fk.ind.from.relation), idx(&fk.ind.to.relation)) {
            let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
            comp[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut clusters: BTreeMap<usize, SourceCluster> = BTreeMap::new();
    for i in 0..names.len() {
        let r = root(&mut comp, i);
        clusters
            .entry(r)
            .or_insert_with(|| SourceCluster {
                members: BTreeSet::new(),
                joins: BTreeSet::new(),
            })
            .members
            .insert(names[i].to_string());
    }
    for fk in fks {
        if let Some(a) = idx(&fk.ind.from.relation) {
            if idx(&fk.ind.to.relation).is_some() {
                let r = root(&mut comp, a);
                clusters.get_mut(&r).expect("component exists").joins.insert(fk.clone());
            }
        }
    }
    clusters.into_values().collect()
}

fn connected(members: &BTreeSet<String>, edges: &[&ForeignKeyCandidate]) -> bool {
    let Some(start) = members.iter().next() else {
        return false;
    };
    let mut seen = BTreeSet::from([start.as_str()]);
    let mut changed = true;
    while changed {
        changed = false;
        for e in edges {
            let (a, b) = (e.ind.from.relation.as_str(), e.ind.to.relation.as_str());
            if seen.contains(a) != seen.contains(b) {
                seen.insert(a);
                seen.insert(b);
                changed = true;
            }
        }
    }
    seen.len() == members.len()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Sub-clusters a cluster can be mapped through: every member alone, then
/// every connected join subgraph of up to [`MAX_JOINS`] edges.
pub fn subgraphs(cluster: &SourceCluster) -> Vec<SourceCluster> {
    let mut out: Vec<SourceCluster> = cluster
        .members
        .iter()
        .map(|m| SourceCluster {
            members: BTreeSet::from([m.clone()]),
            joins: BTreeSet::new(),
        })
        .collect();
    let edges: Vec<&ForeignKeyCandidate> = cluster.joins.iter().collect();
    for k in 1..=MAX_JOINS.min(edges.len()) {
        for combo in combinations(edges.len(), k) {
            let chosen: Vec<&ForeignKeyCandidate> = combo.iter().map(|&i| edges[i]).collect();
            let redundant = chosen
                .iter()
                .enumerate()
                .any(|(i, a)| chosen[i + 1..].iter().any(|b| is_reverse(a, b)));
            if redundant {
                continue;
            }
            let members: BTreeSet<String> = chosen
                .iter()
                .flat_map(|e| [e.ind.from.relation.clone(), e.ind.to.relation.clone()])
                .collect();
            if connected(&members, &chosen) {
                out.push(SourceCluster {
                    members,
                    joins: chosen.into_iter().cloned().collect(),
                });
            }
        }
    }
    out
}

fn join_plan(sub: &SourceCluster) -> Vec<(AttributeRef, AttributeRef)> {
    // Order edges so that each one touches a relation already joined.
    let roots = sub.roots();
    let mut joined: BTreeSet<&str> = roots.iter().take(1).map(String::as_str).collect();
    let mut pending: Vec<&ForeignKeyCandidate> = sub.joins.iter().collect();
    let mut plan = Vec::new();
    while !pending.is_empty() {
        let pos = pending
            .iter()
            .position(|e| joined.contains(e.ind.from.relation.as_str()) || joined.contains(e.ind.to.relation.as_str()))
            .unwrap_or(0);
        let e = pending.remove(pos);
        joined.insert(&e.ind.from.relation);
        joined.insert(&e.ind.to.relation);
        plan.push((e.ind.from.clone(), e.ind.to.clone()));
    }
    plan
}

/// One-to-one assignment of source attributes to target attributes. It
/// maximises the number of pairs scoring above `confident`, then the total
/// score; remaining ties prefer smaller source attributes. A target
/// attribute shared by a join edge may only come from that edge's endpoints.
fn project(
    sub: &SourceCluster,
    target_table: &str,
    target: &TargetSchema,
    filtered: &CorrespondenceSet,
    confident: f64,
) -> BTreeMap<String, AttributeRef> {
    let Some(table) = target.table(target_table) else {
        return BTreeMap::new();
    };
    let eligible = |c: &Correspondence| {
        sub.joins.iter().all(|fk| {
            let shared = &fk.shared_target_attribute;
            shared.table != target_table
                || shared.attribute != c.target.attribute
                || c.source == fk.ind.from
                || c.source == fk.ind.to
        })
    };
    let pairs: Vec<Correspondence> = filtered
        .iter()
        .filter(|c| {
            c.target.table == target_table
                && sub.members.contains(&c.source.relation)
                && table.attributes.contains(&c.target.attribute)
                && eligible(c)
        })
        .collect();
    let targets: Vec<&String> = pairs.iter().map(|c| &c.target.attribute).collect::<BTreeSet<_>>().into_iter().collect();
    let sources: Vec<&AttributeRef> = pairs.iter().map(|c| &c.source).collect::<BTreeSet<_>>().into_iter().collect();
    if targets.is_empty() {
        return BTreeMap::new();
    }
    // Integer weights in three tiers: confident count, score, tie-break.
    let cols = sources.len() + targets.len();
    let tie = (targets.len() * cols + 1) as i64;
    let scale = 1_000_000i64;
    let tier = (targets.len() as i64 + 1) * scale * tie;
    let mut weights = Matrix::new(targets.len(), cols, 0i64);
    for c in &pairs {
        let r = targets.binary_search(&&c.target.attribute).expect("collected above");
        let j = sources.binary_search(&&c.source).expect("collected above");
        let bonus = if c.score > confident { tier } else { 0 };
        weights[(r, j)] = bonus + (c.score * scale as f64).round() as i64 * tie + (sources.len() - j) as i64;
    }
    let (_, assignment) = kuhn_munkres(&weights);
    assignment
        .iter()
        .enumerate()
        .filter(|&(r, &j)| j < sources.len() && weights[(r, j)] > 0)
        .map(|(r, &j)| (targets[r].clone(), sources[j].clone()))
        .collect()
}

/// Candidates for one cluster at one threshold, for every target table.
pub fn generate_candidates(
    cluster: &SourceCluster,
    matches: &CorrespondenceSet,
    target: &TargetSchema,
    threshold: f64,
    confident: f64,
) -> Vec<MappingCandidate> {
    let filtered = matches.above(threshold);
    let mut out = Vec::new();
    for table in target.tables() {
        for sub in subgraphs(cluster) {
            let projection = project(&sub, &table.name, target, &filtered, confident);
            if projection.is_empty() {
                continue;
            }
            out.push(MappingCandidate {
                target_table: table.name.clone(),
                join_plan: join_plan(&sub),
                cluster: sub,
                projection,
                threshold_used: threshold,
                verification_score: None,
            });
        }
    }
    out
}

fn find_source<'a>(sources: &'a [Relation], name: &str) -> Result<&'a Relation> {
    sources.iter().find(|r| r.name() == name).ok_or_else(|| Error::DanglingRef {
        relation: name.to_string(),
        attribute: String::new(),
    })
}

fn column_of(sources: &[Relation], a: &AttributeRef) -> Result<(usize, usize)> {
    let rel_idx = sources
        .iter()
        .position(|r| r.name() == a.relation)
        .ok_or_else(|| Error::DanglingRef {
            relation: a.relation.clone(),
            attribute: a.attribute.clone(),
        })?;
    let col = sources[rel_idx].index_of(&a.attribute).ok_or_else(|| Error::DanglingRef {
        relation: a.relation.clone(),
        attribute: a.attribute.clone(),
    })?;
    Ok((rel_idx, col))
}

/// Runs the join plan as inner equi-joins and projects into the target table.
pub fn execute_mapping(cand: &MappingCandidate, sources: &[Relation], target: &TargetSchema) -> Result<Relation> {
    let table = target
        .table(&cand.target_table)
        .ok_or_else(|| Error::TargetSchema(format!("unknown target table {}", cand.target_table)))?;
    for member in &cand.cluster.members {
        find_source(sources, member)?;
    }
    // A joined row holds one tuple index per source relation taking part.
    let mut present: BTreeSet<usize> = BTreeSet::new();
    let mut rows: Vec<HashMap<usize, usize>> = Vec::new();
    let start = match cand.join_plan.first() {
        Some((from, _)) => column_of(sources, from)?.0,
        None => {
            let member = cand.cluster.members.iter().next().ok_or_else(|| Error::DanglingRef {
                relation: String::new(),
                attribute: String::new(),
            })?;
            sources.iter().position(|r| r.name() == member).expect("member checked above")
        }
    };
    present.insert(start);
    for i in 0..sources[start].len() {
        rows.push(HashMap::from([(start, i)]));
    }
    let cell = |rel: usize, row: usize, col: usize| -> Option<&str> { sources[rel].cell(row, col) };
    for (a, b) in &cand.join_plan {
        let (ra, ca) = column_of(sources, a)?;
        let (rb, cb) = column_of(sources, b)?;
        let (old, new) = match (present.contains(&ra), present.contains(&rb)) {
            (true, true) => {
                rows.retain(|r| match (cell(ra, r[&ra], ca), cell(rb, r[&rb], cb)) {
                    (Some(x), Some(y)) => x == y,
                    _ => false,
                });
                continue;
            }
            (true, false) => ((ra, ca), (rb, cb)),
            (false, true) => ((rb, cb), (ra, ca)),
            (false, false) => {
                return Err(Error::DanglingRef {
                    relation: a.relation.clone(),
                    attribute: a.attribute.clone(),
                })
            }
        };
        let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
        for i in 0..sources[new.0].len() {
            if let Some(v) = cell(new.0, i, new.1) {
                index.entry(v).or_default().push(i);
            }
        }
        let mut next = Vec::new();
        for r in &rows {
            if let Some(v) = cell(old.0, r[&old.0], old.1) {
                for &j in index.get(v).map(Vec::as_slice).unwrap_or_default() {
                    let mut joined = r.clone();
                    joined.insert(new.0, j);
                    next.push(joined);
                }
            }
        }
        rows = next;
        present.insert(new.0);
    }
    let mut columns: Vec<Option<(usize, usize)>> = Vec::new();
    for attr in &table.attributes {
        columns.push(match cand.projection.get(attr) {
            Some(src) => {
                let (rel, col) = column_of(sources, src)?;
                if !present.contains(&rel) {
                    return Err(Error::DanglingRef {
                        relation: src.relation.clone(),
                        attribute: src.attribute.clone(),
                    });
                }
                Some((rel, col))
            }
            None => None,
        });
    }
    let tuples: Vec<Vec<Value>> = rows
        .iter()
        .map(|r| {
            columns
                .iter()
                .map(|c| c.and_then(|(rel, col)| cell(rel, r[&rel], col).map(str::to_string)))
                .collect()
        })
        .collect();
    Relation::new(table.name.clone(), table.attributes.clone(), tuples)
}

fn distinct(rel: &Relation, idx: usize) -> BTreeSet<&str> {
    rel.column(idx).flatten().collect()
}

/// coverage × mean Jaccard against each context of the candidate's target
/// table, averaged over those contexts. `None` when no context applies.
pub fn verify_mapping(
    cand: &MappingCandidate,
    contexts: &[(&Relation, &ContextRelationship)],
    sources: &[Relation],
    target: &TargetSchema,
) -> Result<Option<f64>> {
    let relevant: Vec<_> = contexts
        .iter()
        .filter(|(_, rel)| rel.target_table == cand.target_table)
        .collect();
    if relevant.is_empty() {
        return Ok(None);
    }
    let out = execute_mapping(cand, sources, target)?;
    if out.is_empty() {
        return Ok(Some(0.0));
    }
    let width = out.arity().max(1);
    let coverage = cand.projection.len() as f64 / width as f64;
    let mut total = 0.0;
    for (context, rel) in &relevant {
        let mut sims = Vec::new();
        for (ctx_attr, tgt_attr) in &rel.attribute_map {
            if !cand.projection.contains_key(tgt_attr) {
                continue;
            }
            let (Some(ci), Some(oi)) = (context.index_of(ctx_attr), out.index_of(tgt_attr)) else {
                continue;
            };
            sims.push(crate::text::jaccard(&distinct(&out, oi), &distinct(context, ci)));
        }
        let mean = if sims.is_empty() {
            0.0
        } else {
            sims.iter().sum::<f64>() / sims.len() as f64
        };
        total += coverage * mean;
    }
    Ok(Some((total / relevant.len() as f64).clamp(0.0, 1.0)))
}

/// Thresholds from `ub` down to `lb`, both inclusive.
pub fn sweep(ub: f64, lb: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0u32;
    loop {
        let t = ub - f64::from(i) * step;
        if t < lb - 1e-9 {
            break;
        }
        out.push(t.max(lb));
        i += 1;
    }
    if out.last().is_some_and(|last| (last - lb).abs() > 1e-9) {
        out.push(lb);
    }
    out
}

fn better_without_context(a: &MappingCandidate, b: &MappingCandidate) -> bool {
    // true when `a` beats the incumbent `b`
    a.correspondences()
        .cmp(&b.correspondences())
        .then_with(|| b.join_plan.len().cmp(&a.join_plan.len()))
        .then_with(|| b.cluster.members.cmp(&a.cluster.members))
        .is_gt()
}

/// Best candidate per (target table, anchor source) over the threshold sweep.
/// Anchors are the cluster's root members; a candidate serves the anchor
/// that is its only root.
pub fn select_mappings(
    clusters: &[SourceCluster],
    matches: &CorrespondenceSet,
    contexts: &[(&Relation, &ContextRelationship)],
    sources: &[Relation],
    target: &TargetSchema,
    cfg: &PipelineConfig,
) -> Result<Vec<MappingCandidate>> {
    let thresholds = sweep(cfg.mapping_ub, cfg.mapping_lb, cfg.mapping_step);
    let mut selected = Vec::new();
    for cluster in clusters {
        let anchors = cluster.roots();
        let mut best: BTreeMap<(String, String), MappingCandidate> = BTreeMap::new();
        for &t in &thresholds {
            for mut cand in generate_candidates(cluster, matches, target, t, cfg.match_lb) {
                let roots = cand.cluster.roots();
                let Some(anchor) = roots.iter().next().filter(|a| roots.len() == 1 && anchors.contains(*a)) else {
                    continue;
                };
                cand.verification_score = verify_mapping(&cand, contexts, sources, target)?;
                let key = (cand.target_table.clone(), anchor.clone());
                let replace = match best.get(&key) {
                    None => true,
                    Some(incumbent) => match (cand.verification_score, incumbent.verification_score) {
                        (Some(s), Some(i)) => s > i,
                        _ => better_without_context(&cand, incumbent),
                    },
                };
                if replace {
                    best.insert(key, cand);
                }
            }
        }
        selected.extend(best.into_values());
    }
    Ok(selected)
}
