//! Context-informed schema matching: name-based matching, instance matching
//! against context data, and recogniser-driven testing of the result.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    normalize_name, AttributeRef, ContextRelationship, PipelineConfig, Relation, TargetAttr,
    TargetSchema,
};
use crate::text::{self, BasicType};

/// Pairs scoring below this are not reported by the name and instance matchers.
pub const MIN_SCORE: f64 = 0.1;
/// Distinct values sampled per column by the instance matcher.
pub const SAMPLE_CAP: usize = 1000;

const SHAPE_WEIGHT: f64 = 0.4;
const TYPE_WEIGHT: f64 = 0.3;
const LENGTH_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchSource {
    Schema,
    Instance,
    Recogniser,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correspondence {
    pub source: AttributeRef,
    pub target: TargetAttr,
    pub score: f64,
    pub provenance: BTreeSet<MatchSource>,
}

impl Correspondence {
    pub fn new(source: AttributeRef, target: TargetAttr, score: f64, from: MatchSource) -> Self {
        Correspondence {
            source,
            target,
            score: score.clamp(0.0, 1.0),
            provenance: BTreeSet::from([from]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Scored {
    score: f64,
    provenance: BTreeSet<MatchSource>,
}

/// At most one scored entry per (source attribute, target attribute).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    entries: BTreeMap<(AttributeRef, TargetAttr), Scored>,
}

impl CorrespondenceSet {
    /// Inserts, keeping the larger score and the union of provenance on clash.
    pub fn insert(&mut self, c: Correspondence) {
        let slot = self
            .entries
            .entry((c.source, c.target))
            .or_insert_with(|| Scored {
                score: c.score,
                provenance: BTreeSet::new(),
            });
        slot.score = slot.score.max(c.score);
        slot.provenance.extend(c.provenance);
    }

    pub fn get(&self, source: &AttributeRef, target: &TargetAttr) -> Option<Correspondence> {
        self.entries
            .get(&(source.clone(), target.clone()))
            .map(|s| Correspondence {
                source: source.clone(),
                target: target.clone(),
                score: s.score,
                provenance: s.provenance.clone(),
            })
    }

    pub fn score(&self, source: &AttributeRef, target: &TargetAttr) -> Option<f64> {
        self.entries.get(&(source.clone(), target.clone())).map(|s| s.score)
    }

    pub fn iter(&self) -> impl Iterator<Item = Correspondence> + '_ {
        self.entries.iter().map(|((source, target), s)| Correspondence {
            source: source.clone(),
            target: target.clone(),
            score: s.score,
            provenance: s.provenance.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Target attributes matched by `source` with score strictly above `lb`.
    pub fn targets_of(&self, source: &AttributeRef, lb: f64) -> Vec<(TargetAttr, f64)> {
        self.entries
            .iter()
            .filter(|((s, _), e)| s == source && e.score > lb)
            .map(|((_, t), e)| (t.clone(), e.score))
            .collect()
    }

    /// Entries scoring strictly above `threshold`.
    pub fn above(&self, threshold: f64) -> CorrespondenceSet {
        CorrespondenceSet {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| e.score > threshold)
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    /// Entries whose source attribute belongs to `relation`.
    pub fn for_relation(&self, relation: &str) -> CorrespondenceSet {
        CorrespondenceSet {
            entries: self
                .entries
                .iter()
                .filter(|((s, _), _)| s.relation == relation)
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: CorrespondenceSet) {
        for c in other.iter() {
            self.insert(c);
        }
    }

    fn set_score(&mut self, source: &AttributeRef, target: &TargetAttr, score: f64, add: Option<MatchSource>) {
        if let Some(e) = self.entries.get_mut(&(source.clone(), target.clone())) {
            e.score = score.clamp(0.0, 1.0);
            if let Some(p) = add {
                e.provenance.insert(p);
            }
        }
    }
}

impl FromIterator<Correspondence> for CorrespondenceSet {
    fn from_iter<I: IntoIterator<Item = Correspondence>>(iter: I) -> Self {
        let mut set = CorrespondenceSet::default();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

/// Name similarity of two schema elements: the larger of normalized edit
/// similarity and token-set Jaccard.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let (na, nb) = (normalize_name(a), normalize_name(b));
    let edit = text::edit_similarity(&na, &nb);
    let tokens = text::jaccard(&text::name_tokens(a), &text::name_tokens(b));
    edit.max(tokens)
}

/// Metadata-only matching of every source attribute against every target attribute.
pub fn schema_match(source: &Relation, target: &TargetSchema) -> CorrespondenceSet {
    let mut out = CorrespondenceSet::default();
    for attr in source.attributes() {
        for t in target.all_attributes() {
            let score = name_similarity(attr, &t.attribute);
            if score >= MIN_SCORE {
                out.insert(Correspondence::new(
                    AttributeRef::new(source.name(), attr),
                    t,
                    score,
                    MatchSource::Schema,
                ));
            }
        }
    }
    out
}

fn sample(rel: &Relation, idx: usize) -> Vec<&str> {
    let mut values = rel.distinct_values(idx);
    values.truncate(SAMPLE_CAP);
    values
}

/// Similarity of two value samples: the larger of set Jaccard and trigram cosine.
pub fn value_similarity(a: &[&str], b: &[&str]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let sa: BTreeSet<&str> = a.iter().copied().collect();
    let sb: BTreeSet<&str> = b.iter().copied().collect();
    let j = text::jaccard(&sa, &sb);
    let cos = text::cosine(
        &text::trigram_profile(a.iter().copied()),
        &text::trigram_profile(b.iter().copied()),
    );
    j.max(cos)
}

/// Instance-based matching of a source against one context relation, which
/// stands in for the target instance of the attributes it maps.
pub fn instance_match(source: &Relation, context: &Relation, rel: &ContextRelationship) -> CorrespondenceSet {
    let mut out = CorrespondenceSet::default();
    for (ctx_attr, tgt_attr) in &rel.attribute_map {
        let Some(ctx_idx) = context.index_of(ctx_attr) else {
            continue;
        };
        let ctx_values = sample(context, ctx_idx);
        if ctx_values.is_empty() {
            continue;
        }
        let target = TargetAttr::new(rel.target_table.clone(), tgt_attr);
        for (idx, attr) in source.attributes().iter().enumerate() {
            let score = value_similarity(&sample(source, idx), &ctx_values);
            if score >= MIN_SCORE {
                out.insert(Correspondence::new(
                    AttributeRef::new(source.name(), attr),
                    target.clone(),
                    score,
                    MatchSource::Instance,
                ));
            }
        }
    }
    out
}

/// Per-pair maximum with provenance union.
pub fn combine(acc: &CorrespondenceSet, new: &CorrespondenceSet) -> CorrespondenceSet {
    let mut out = acc.clone();
    out.extend(new.clone());
    out
}

/// Folds instance matches into schema matches. Same semantics as [`combine`].
pub fn update(schema_m: &CorrespondenceSet, instance_m: &CorrespondenceSet) -> CorrespondenceSet {
    combine(schema_m, instance_m)
}

/// Summary statistics of one column used by the generic recogniser.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainProfile {
    pub target: TargetAttr,
    /// Fractions of integer, decimal and text values.
    pub types: [f64; 3],
    pub length_mean: f64,
    pub length_std: f64,
    pub token_mean: f64,
    pub shapes: BTreeMap<String, f64>,
}

impl DomainProfile {
    /// Profiles a non-empty list of values.
    pub fn from_values<'a, I>(target: TargetAttr, values: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut types = [0.0; 3];
        let mut lengths = Vec::new();
        let mut tokens = 0.0;
        let mut shapes: BTreeMap<String, f64> = BTreeMap::new();
        for v in values {
            let slot = match text::basic_type(v) {
                BasicType::Integer => 0,
                BasicType::Decimal => 1,
                BasicType::Text => 2,
            };
            types[slot] += 1.0;
            lengths.push(v.chars().count() as f64);
            tokens += v.split_whitespace().count() as f64;
            *shapes.entry(text::shape(v)).or_default() += 1.0;
        }
        let n = lengths.len() as f64;
        if n == 0.0 {
            return None;
        }
        types.iter_mut().for_each(|t| *t /= n);
        shapes.values_mut().for_each(|s| *s /= n);
        let length_mean = lengths.iter().sum::<f64>() / n;
        let length_std = (lengths.iter().map(|l| (l - length_mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(DomainProfile {
            target,
            types,
            length_mean,
            length_std,
            token_mean: tokens / n,
            shapes,
        })
    }

    /// Recogniser score of `other` (a source column profile) against this profile.
    pub fn score(&self, other: &DomainProfile) -> f64 {
        let shape: f64 = self
            .shapes
            .iter()
            .filter_map(|(k, p)| other.shapes.get(k).map(|q| p.min(*q)))
            .sum();
        let types: f64 = self.types.iter().zip(other.types).map(|(p, q)| p.min(q)).sum();
        let z = (other.length_mean - self.length_mean) / self.length_std.max(1.0);
        let length = (-0.5 * z * z).exp();
        (SHAPE_WEIGHT * shape + TYPE_WEIGHT * types + LENGTH_WEIGHT * length).clamp(0.0, 1.0)
    }
}

/// Builds the recogniser profile of the context column mapped to `target_attr`.
pub fn build_domain_profile(
    context: &Relation,
    rel: &ContextRelationship,
    target_attr: &str,
) -> Result<DomainProfile> {
    let unmapped = || Error::UnmappedAttribute {
        context: rel.context_source.clone(),
        attribute: target_attr.to_string(),
    };
    let ctx_attr = rel.context_for(target_attr).ok_or_else(unmapped)?;
    let idx = context.index_of(ctx_attr).ok_or_else(unmapped)?;
    DomainProfile::from_values(
        TargetAttr::new(rel.target_table.clone(), target_attr),
        context.column(idx).flatten(),
    )
    .ok_or_else(|| Error::EmptyColumn {
        relation: context.name().to_string(),
        attribute: ctx_attr.to_string(),
    })
}

/// Scores every non-empty source column against every profile.
pub fn recognise(source: &Relation, profiles: &[DomainProfile]) -> CorrespondenceSet {
    let mut out = CorrespondenceSet::default();
    for (idx, attr) in source.attributes().iter().enumerate() {
        let Some(column) = DomainProfile::from_values(
            TargetAttr::new("", attr),
            source.column(idx).flatten(),
        ) else {
            continue;
        };
        for profile in profiles {
            let score = profile.score(&column);
            if score > 0.0 {
                out.insert(Correspondence::new(
                    AttributeRef::new(source.name(), attr),
                    profile.target.clone(),
                    score,
                    MatchSource::Recogniser,
                ));
            }
        }
    }
    out
}

/// Raises correspondences the recogniser confirms (score >= `ub`), lowers
/// ones it contradicts (score < `lb`, unless instance evidence backs them),
/// and adds confident recogniser-only matches.
pub fn test_matches(m: &CorrespondenceSet, recog: &CorrespondenceSet, lb: f64, ub: f64) -> CorrespondenceSet {
    let mut out = m.clone();
    for r in recog.iter() {
        match m.get(&r.source, &r.target) {
            Some(existing) => {
                if r.score >= ub {
                    out.set_score(
                        &r.source,
                        &r.target,
                        existing.score.max(r.score),
                        Some(MatchSource::Recogniser),
                    );
                } else if r.score < lb && lb > 0.0 && !existing.provenance.contains(&MatchSource::Instance) {
                    out.set_score(&r.source, &r.target, existing.score * r.score / lb, None);
                }
            }
            None if r.score >= ub => out.insert(r),
            None => {}
        }
    }
    out
}

/// One source matched against the target, informed by every context.
pub fn match_source(
    source: &Relation,
    target: &TargetSchema,
    contexts: &[(&Relation, &ContextRelationship)],
    cfg: &PipelineConfig,
) -> CorrespondenceSet {
    let mut m = schema_match(source, target);
    let mut from_instances = CorrespondenceSet::default();
    for (context, rel) in contexts {
        from_instances = combine(&from_instances, &instance_match(source, context, rel));
    }
    m = update(&m, &from_instances);
    for (context, rel) in contexts {
        let profiles: Vec<DomainProfile> = rel
            .attribute_map
            .iter()
            .filter_map(|(_, t)| build_domain_profile(context, rel, t).ok())
            .collect();
        let recog = recognise(source, &profiles);
        m = test_matches(&m, &recog, cfg.match_lb, cfg.match_ub);
    }
    m
}
