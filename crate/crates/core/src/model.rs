//! Domain types shared by every stage: relations, the target schema, data
//! context relationships and pipeline parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nullable cell. All values are carried as text.
pub type Value = Option<String>;

/// Raw tokens that denote a missing value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NullTokens(BTreeSet<String>);

impl NullTokens {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NullTokens(tokens.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for NullTokens {
    fn default() -> Self {
        NullTokens::new(["", "-", "NULL", "N/A", "null"])
    }
}

/// Trims `raw`, collapses internal whitespace runs to one space, and maps
/// configured null tokens to `None`.
pub fn normalize_cell(raw: &str, null_tokens: &NullTokens) -> Value {
    let trimmed = raw.trim();
    if null_tokens.contains(trimmed) {
        return None;
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut in_space = false;
    for ch in trimmed.chars() {
        if ch.is_whitespace() {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(ch);
            in_space = false;
        }
    }
    if null_tokens.contains(&out) {
        None
    } else {
        Some(out)
    }
}

/// Attribute and table names are compared lowercased and trimmed.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

/// A named table: ordered attributes plus rows of nullable text cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    name: String,
    attributes: Vec<String>,
    tuples: Vec<Vec<Value>>,
}

impl Relation {
    pub fn new(
        name: impl Into<String>,
        attributes: Vec<String>,
        tuples: Vec<Vec<Value>>,
    ) -> Result<Self> {
        let name = name.into();
        let attributes: Vec<String> = attributes.iter().map(|a| normalize_name(a)).collect();
        let mut seen = BTreeSet::new();
        for attr in &attributes {
            if !seen.insert(attr.as_str()) {
                return Err(Error::DuplicateAttribute {
                    relation: name,
                    attribute: attr.clone(),
                });
            }
        }
        for (row, tuple) in tuples.iter().enumerate() {
            if tuple.len() != attributes.len() {
                return Err(Error::Arity {
                    relation: name,
                    row,
                    expected: attributes.len(),
                    found: tuple.len(),
                });
            }
        }
        Ok(Relation {
            name,
            attributes,
            tuples,
        })
    }

    /// Builds a relation from string literals; `None` cells stay null.
    pub fn from_rows(name: &str, attributes: &[&str], rows: &[&[Option<&str>]]) -> Result<Self> {
        Relation::new(
            name,
            attributes.iter().map(|a| a.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|c| c.map(str::to_string)).collect())
                .collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn tuples(&self) -> &[Vec<Value>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn index_of(&self, attribute: &str) -> Option<usize> {
        let wanted = normalize_name(attribute);
        self.attributes.iter().position(|a| *a == wanted)
    }

    pub fn has_attribute(&self, attribute: &str) -> bool {
        self.index_of(attribute).is_some()
    }

    pub fn column(&self, idx: usize) -> impl Iterator<Item = Option<&str>> + '_ {
        self.tuples.iter().map(move |t| t[idx].as_deref())
    }

    /// Distinct non-null values of a column in first-occurrence order.
    pub fn distinct_values(&self, idx: usize) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.column(idx).flatten() {
            if seen.insert(v) {
                out.push(v);
            }
        }
        out
    }

    pub fn cell(&self, row: usize, idx: usize) -> Option<&str> {
        self.tuples[row][idx].as_deref()
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub(crate) fn tuples_mut(&mut self) -> &mut Vec<Vec<Value>> {
        &mut self.tuples
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeRef {
    pub relation: String,
    pub attribute: String,
}

impl AttributeRef {
    pub fn new(relation: impl Into<String>, attribute: impl AsRef<str>) -> Self {
        AttributeRef {
            relation: relation.into(),
            attribute: normalize_name(attribute.as_ref()),
        }
    }
}

impl fmt::Display for AttributeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.attribute)
    }
}

/// An attribute of a target table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetAttr {
    pub table: String,
    pub attribute: String,
}

impl TargetAttr {
    pub fn new(table: impl Into<String>, attribute: impl AsRef<str>) -> Self {
        TargetAttr {
            table: table.into(),
            attribute: normalize_name(attribute.as_ref()),
        }
    }
}

impl fmt::Display for TargetAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetTable {
    pub name: String,
    pub attributes: Vec<String>,
}

/// The data product schema the pipeline populates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSchema {
    tables: Vec<TargetTable>,
}

impl TargetSchema {
    pub fn new(tables: Vec<TargetTable>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::TargetSchema("no tables".into()));
        }
        let mut names = BTreeSet::new();
        let mut normalized = Vec::with_capacity(tables.len());
        for table in tables {
            if !names.insert(table.name.clone()) {
                return Err(Error::TargetSchema(format!("duplicate table `{}`", table.name)));
            }
            if table.attributes.is_empty() {
                return Err(Error::TargetSchema(format!("table `{}` has no attributes", table.name)));
            }
            let attributes: Vec<String> = table.attributes.iter().map(|a| normalize_name(a)).collect();
            let mut seen = BTreeSet::new();
            for a in &attributes {
                if !seen.insert(a) {
                    return Err(Error::TargetSchema(format!(
                        "table `{}` repeats attribute `{a}`",
                        table.name
                    )));
                }
            }
            normalized.push(TargetTable {
                name: table.name,
                attributes,
            });
        }
        Ok(TargetSchema { tables: normalized })
    }

    pub fn single(name: &str, attributes: &[&str]) -> Result<Self> {
        TargetSchema::new(vec![TargetTable {
            name: name.to_string(),
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
        }])
    }

    pub fn tables(&self) -> &[TargetTable] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&TargetTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Every target attribute in schema order.
    pub fn all_attributes(&self) -> impl Iterator<Item = TargetAttr> + '_ {
        self.tables
            .iter()
            .flat_map(|t| t.attributes.iter().map(move |a| TargetAttr::new(t.name.clone(), a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextType {
    Reference,
    Master,
    Example,
}

impl ContextType {
    pub const ALL: [ContextType; 3] = [ContextType::Reference, ContextType::Master, ContextType::Example];

    /// Lower rank wins when two contexts offer competing rules.
    pub fn priority(self) -> u8 {
        match self {
            ContextType::Reference => 0,
            ContextType::Master => 1,
            ContextType::Example => 2,
        }
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextType::Reference => "reference",
            ContextType::Master => "master",
            ContextType::Example => "example",
        })
    }
}

/// Aligns one context relation with one target table: `R(d, p, t)` with a
/// single-atom body and head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRelationship {
    pub context_source: String,
    pub target_table: String,
    /// (context attribute, target attribute) pairs.
    pub attribute_map: Vec<(String, String)>,
    pub ctype: ContextType,
}

impl ContextRelationship {
    pub fn new(
        context_source: impl Into<String>,
        target_table: impl Into<String>,
        pairs: &[(&str, &str)],
        ctype: ContextType,
    ) -> Self {
        ContextRelationship {
            context_source: context_source.into(),
            target_table: target_table.into(),
            attribute_map: pairs
                .iter()
                .map(|(c, t)| (normalize_name(c), normalize_name(t)))
                .collect(),
            ctype,
        }
    }

    pub fn target_of(&self, context_attr: &str) -> Option<&str> {
        let wanted = normalize_name(context_attr);
        self.attribute_map
            .iter()
            .find(|(c, _)| *c == wanted)
            .map(|(_, t)| t.as_str())
    }

    pub fn context_for(&self, target_attr: &str) -> Option<&str> {
        let wanted = normalize_name(target_attr);
        self.attribute_map
            .iter()
            .find(|(_, t)| *t == wanted)
            .map(|(c, _)| c.as_str())
    }

    pub fn target_attr(&self, context_attr: &str) -> Option<TargetAttr> {
        self.target_of(context_attr)
            .map(|t| TargetAttr::new(self.target_table.clone(), t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    EmptyMap,
    UnknownContextSource { name: String },
    UnknownTargetTable { name: String },
    MissingContextAttribute { attribute: String },
    MissingTargetAttribute { attribute: String },
    NonInjective { target_attribute: String, context_attributes: Vec<String> },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::EmptyMap => f.write_str("attribute map is empty"),
            ValidationIssue::UnknownContextSource { name } => write!(f, "unknown context source `{name}`"),
            ValidationIssue::UnknownTargetTable { name } => write!(f, "unknown target table `{name}`"),
            ValidationIssue::MissingContextAttribute { attribute } => {
                write!(f, "context attribute `{attribute}` does not exist")
            }
            ValidationIssue::MissingTargetAttribute { attribute } => {
                write!(f, "target attribute `{attribute}` does not exist")
            }
            ValidationIssue::NonInjective {
                target_attribute,
                context_attributes,
            } => write!(
                f,
                "target attribute `{target_attribute}` is mapped from {}",
                context_attributes.join(", ")
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks that a context relationship resolves against the registered
/// relations and the target schema, and that it is injective on targets.
pub fn validate_relationship(
    rel: &ContextRelationship,
    registry: &[Relation],
    target: &TargetSchema,
) -> ValidationReport {
    let mut issues = Vec::new();
    if rel.attribute_map.is_empty() {
        issues.push(ValidationIssue::EmptyMap);
    }
    let context = registry.iter().find(|r| r.name() == rel.context_source);
    if context.is_none() {
        issues.push(ValidationIssue::UnknownContextSource {
            name: rel.context_source.clone(),
        });
    }
    let table = target.table(&rel.target_table);
    if table.is_none() {
        issues.push(ValidationIssue::UnknownTargetTable {
            name: rel.target_table.clone(),
        });
    }
    let mut by_target: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (ctx_attr, tgt_attr) in &rel.attribute_map {
        let ctx_attr = normalize_name(ctx_attr);
        let tgt_attr = normalize_name(tgt_attr);
        if let Some(context) = context {
            if !context.has_attribute(&ctx_attr) {
                issues.push(ValidationIssue::MissingContextAttribute {
                    attribute: ctx_attr.clone(),
                });
            }
        }
        if let Some(table) = table {
            if !table.attributes.contains(&tgt_attr) {
                issues.push(ValidationIssue::MissingTargetAttribute {
                    attribute: tgt_attr.clone(),
                });
            }
        }
        by_target.entry(tgt_attr).or_default().push(ctx_attr);
    }
    for (target_attribute, context_attributes) in by_target {
        if context_attributes.len() > 1 {
            issues.push(ValidationIssue::NonInjective {
                target_attribute,
                context_attributes,
            });
        }
    }
    ValidationReport { issues }
}

/// Tunable parameters of all four stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub match_lb: f64,
    pub match_ub: f64,
    pub mapping_lb: f64,
    pub mapping_ub: f64,
    pub mapping_step: f64,
    pub folds: usize,
    /// Initial CFD support; `None` derives `max(5, ceil(0.05 * |context|))`.
    pub initial_support: Option<usize>,
    pub support_step: usize,
    pub repair_lb: f64,
    pub max_lhs: usize,
    pub null_tokens: NullTokens,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            match_lb: 0.5,
            match_ub: 0.8,
            mapping_lb: 0.2,
            mapping_ub: 0.9,
            mapping_step: 0.1,
            folds: 3,
            initial_support: None,
            support_step: 1,
            repair_lb: 0.0,
            max_lhs: 2,
            null_tokens: NullTokens::default(),
            seed: 7,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Params(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("match_lb", self.match_lb)?;
        unit("match_ub", self.match_ub)?;
        unit("mapping_lb", self.mapping_lb)?;
        unit("mapping_ub", self.mapping_ub)?;
        unit("repair_lb", self.repair_lb)?;
        if self.match_lb > self.match_ub {
            return Err(Error::Params("match_lb exceeds match_ub".into()));
        }
        if self.mapping_lb > self.mapping_ub {
            return Err(Error::Params("mapping_lb exceeds mapping_ub".into()));
        }
        if !(self.mapping_step > 0.0) {
            return Err(Error::Params("mapping_step must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Params("folds must be at least 2".into()));
        }
        if self.initial_support == Some(0) {
            return Err(Error::Params("initial_support must be at least 1".into()));
        }
        if self.support_step == 0 {
            return Err(Error::Params("support_step must be at least 1".into()));
        }
        if self.repair_lb >= 1.0 {
            return Err(Error::Params("repair_lb must be below 1".into()));
        }
        if self.max_lhs == 0 {
            return Err(Error::Params("max_lhs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn initial_support_for(&self, context_len: usize) -> usize {
        self.initial_support
            .unwrap_or_else(|| 5.max((0.05 * context_len as f64).ceil() as usize))
    }
}
