//! The JSON run configuration and loading of the files it references.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{load_named, CsvDialect};
use crate::model::{normalize_name, ContextRelationship, ContextType, PipelineConfig, Relation, TargetSchema, TargetTable};
use crate::profiler::FunctionalDependency;

/// Which stages may use data context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggle {
    pub matching: bool,
    pub mapping: bool,
    pub transformation: bool,
    pub repair: bool,
}

impl Default for StageToggle {
    fn default() -> Self {
        StageToggle::all(true)
    }
}

impl StageToggle {
    pub const STAGES: [&'static str; 4] = ["matching", "mapping", "transformation", "repair"];

    pub fn all(on: bool) -> StageToggle {
        StageToggle {
            matching: on,
            mapping: on,
            transformation: on,
            repair: on,
        }
    }

    /// Sets a stage by name; returns false for an unknown stage.
    pub fn set(&mut self, stage: &str, on: bool) -> bool {
        let slot = match stage.trim().to_lowercase().as_str() {
            "matching" | "match" => &mut self.matching,
            "mapping" | "map" => &mut self.mapping,
            "transformation" | "transform" => &mut self.transformation,
            "repair" => &mut self.repair,
            _ => return false,
        };
        *slot = on;
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub dialect: CsvDialect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "type")]
    pub ctype: ContextType,
    pub target_table: String,
    /// Context attribute to target attribute.
    pub attribute_map: BTreeMap<String, String>,
    #[serde(default)]
    pub dialect: CsvDialect,
}

/// A user-declared pattern-free dependency on a target table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    pub table: String,
    pub lhs: Vec<String>,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub ground_truth: PathBuf,
    pub keys: Vec<String>,
    /// Defaults to the first target table.
    #[serde(default)]
    pub table: Option<String>,
    #[serde(default)]
    pub excluded_marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: Vec<TargetTable>,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub context: Vec<ContextSpec>,
    #[serde(default)]
    pub toggles: StageToggle,
    #[serde(default)]
    pub params: PipelineConfig,
    #[serde(default)]
    pub fds: Vec<FdSpec>,
    #[serde(default)]
    pub evaluation: Option<EvaluationSpec>,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.params.validate()?;
        TargetSchema::new(cfg.target.clone())?;
        if cfg.sources.is_empty() {
            return Err(Error::Config {
                path: path.to_path_buf(),
                line: 0,
                column: 0,
                message: "no sources configured".into(),
            });
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path)
    }
}

/// Everything a run needs, loaded into memory.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub target: TargetSchema,
    pub sources: Vec<Relation>,
    pub contexts: Vec<(Relation, ContextRelationship)>,
    pub toggles: StageToggle,
    pub params: PipelineConfig,
    pub fds: Vec<FunctionalDependency>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "relation".into())
}

impl Inputs {
    /// Loads every referenced file; relative paths resolve against `base`.
    pub fn load(cfg: &RunConfig, base: &Path) -> Result<Inputs> {
        let target = TargetSchema::new(cfg.target.clone())?;
        let nulls = &cfg.params.null_tokens;
        let sources = cfg
            .sources
            .iter()
            .map(|s| {
                let name = s.name.clone().unwrap_or_else(|| stem(&s.path));
                load_named(&base.join(&s.path), &name, &s.dialect, nulls)
            })
            .collect::<Result<Vec<_>>>()?;
        let contexts = cfg
            .context
            .iter()
            .map(|c| {
                let name = c.name.clone().unwrap_or_else(|| stem(&c.path));
                let rel = load_named(&base.join(&c.path), &name, &c.dialect, nulls)?;
                let pairs: Vec<(&str, &str)> = c.attribute_map.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                Ok((rel, ContextRelationship::new(name, c.target_table.clone(), &pairs, c.ctype)))
            })
            .collect::<Result<Vec<_>>>()?;
        let fds = cfg
            .fds
            .iter()
            .map(|f| FunctionalDependency {
                relation: f.table.clone(),
                lhs: f.lhs.iter().map(|a| normalize_name(a)).collect(),
                rhs: normalize_name(&f.rhs),
            })
            .collect();
        Ok(Inputs {
            target,
            sources,
            contexts,
            toggles: cfg.toggles,
            params: cfg.params.clone(),
            fds,
        })
    }
}
