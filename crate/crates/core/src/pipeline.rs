//! Stage orchestration: match, map, transform, repair.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{Inputs, RunConfig, StageToggle};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate, MetricsReport};
use crate::ingest::{load_named, write_relation, to_csv_string, CsvDialect};
use crate::mapper::{cluster_sources, execute_mapping, select_mappings};
use crate::matcher::{match_source, schema_match, Correspondence, CorrespondenceSet, MatchSource};
use crate::model::{validate_relationship, AttributeRef, ContextRelationship, Relation, TargetAttr};
use crate::profiler::{discover_fds, discover_foreign_keys};
use crate::repairer::{merge_cfds, repair, rewrite_to_target, tune_cfds, RepairOp};
use crate::transformer::{apply_transforms, choose_rules, generate_examples, validate_kfold, SelectedRule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingEntry {
    pub target_table: String,
    pub tgd: String,
    pub threshold: f64,
    pub verification: Option<f64>,
    pub tuples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleEntry {
    pub table: String,
    pub column: String,
    pub context: String,
    pub support: usize,
    pub consistency: Option<f64>,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfdEntry {
    pub table: String,
    pub context: String,
    pub tuned: usize,
    pub rewritten: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairEntry {
    pub table: String,
    pub rules: Vec<String>,
    pub ops: Vec<RepairOp>,
    pub total_cost: f64,
    pub unresolved: Vec<usize>,
    pub bound_triggered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub toggles: StageToggle,
    pub issues: Vec<String>,
    pub matches: Vec<Correspondence>,
    pub foreign_keys: Vec<String>,
    pub mappings: Vec<MappingEntry>,
    pub rules: Vec<RuleEntry>,
    pub cfds: Vec<CfdEntry>,
    pub repairs: Vec<RepairEntry>,
    pub metrics: Option<MetricsReport>,
}

/// Wall-clock milliseconds per stage, kept apart from the report so the
/// report stays reproducible.
pub type Timings = Vec<(String, f64)>;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tables: Vec<Relation>,
    pub report: Report,
    pub timings: Timings,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Relation> {
        self.tables.iter().find(|t| t.name() == name)
    }
}

struct Clock(Instant, Timings);

impl Clock {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.1.push((stage.to_string(), (now - self.0).as_secs_f64() * 1000.0));
        self.0 = now;
    }
}

/// Bag union of the selected mappings' outputs.
fn union(name: &str, attributes: Vec<String>, parts: Vec<Relation>) -> Result<Relation> {
    let tuples = parts.iter().flat_map(|p| p.tuples().iter().cloned()).collect();
    Relation::new(name, attributes, tuples)
}

/// Runs all stages over in-memory inputs.
pub fn run(inputs: &Inputs) -> Result<RunOutput> {
    let Inputs {
        target,
        sources,
        toggles,
        params,
        ..
    } = inputs;
    let mut clock = Clock(Instant::now(), Vec::new());
    let mut issues = Vec::new();

    let registry: Vec<Relation> = inputs.contexts.iter().map(|(r, _)| r.clone()).collect();
    let mut contexts: Vec<(&Relation, &ContextRelationship)> = Vec::new();
    for (rel, cr) in &inputs.contexts {
        let report = validate_relationship(cr, &registry, target);
        if report.is_valid() {
            contexts.push((rel, cr));
        } else {
            for issue in &report.issues {
                issues.push(format!("context `{}` ignored: {issue}", cr.context_source));
            }
        }
    }

    let mut matches = CorrespondenceSet::default();
    for source in sources {
        let m = if toggles.matching {
            match_source(source, target, &contexts, params)
        } else {
            schema_match(source, target)
        };
        matches.extend(m);
    }
    clock.lap("matching");

    let fks = discover_foreign_keys(sources, &matches, params.match_lb);
    let clusters = cluster_sources(sources, &fks);
    clock.lap("profiling");

    let mapping_contexts: &[(&Relation, &ContextRelationship)] = if toggles.mapping { &contexts } else { &[] };
    let selected = match select_mappings(&clusters, &matches, mapping_contexts, sources, target, params) {
        Ok(s) => s,
        Err(e) => {
            issues.push(format!("mapping selection failed: {e}"));
            Vec::new()
        }
    };
    let mut mappings = Vec::new();
    let mut tables = Vec::new();
    for table in target.tables() {
        let mut parts = Vec::new();
        for cand in selected.iter().filter(|c| c.target_table == table.name) {
            match execute_mapping(cand, sources, target) {
                Ok(rel) => {
                    mappings.push(MappingEntry {
                        target_table: table.name.clone(),
                        tgd: cand.tgd_text(sources, target),
                        threshold: cand.threshold_used,
                        verification: cand.verification_score,
                        tuples: rel.len(),
                    });
                    parts.push(rel);
                }
                Err(e) => issues.push(format!("mapping into `{}` failed: {e}", table.name)),
            }
        }
        tables.push(union(&table.name, table.attributes.clone(), parts)?);
    }
    clock.lap("mapping");

    let mut rules = Vec::new();
    if toggles.transformation {
        for instance in &mut tables {
            let name = instance.name().to_string();
            let identity: CorrespondenceSet = instance
                .attributes()
                .iter()
                .map(|a| Correspondence::new(AttributeRef::new(&name, a), TargetAttr::new(&name, a), 1.0, MatchSource::Schema))
                .collect();
            let fds_t = discover_fds(instance, 1);
            let mut candidates = Vec::new();
            for (ctx, cr) in contexts.iter().filter(|(_, cr)| cr.target_table == name) {
                let fds_d = discover_fds(ctx, 1);
                for col in generate_examples(instance, ctx, cr, &identity, &fds_t, &fds_d, params.match_lb) {
                    let v = validate_kfold(&col.examples, params.folds, params.seed);
                    if let Some(rule) = v.rule {
                        candidates.push(SelectedRule {
                            column: col.column,
                            context: col.context,
                            ctype: col.ctype,
                            rule,
                            consistency: v.consistency,
                        });
                    }
                }
            }
            let chosen = choose_rules(candidates);
            *instance = apply_transforms(instance, &chosen);
            rules.extend(chosen.into_iter().map(|s| RuleEntry {
                table: name.clone(),
                column: s.column,
                context: s.context,
                support: s.rule.support,
                consistency: s.consistency,
                rule: s.rule.to_string(),
            }));
        }
    }
    clock.lap("transformation");

    let mut cfd_log = Vec::new();
    let mut repairs = Vec::new();
    if toggles.repair {
        for instance in &mut tables {
            let name = instance.name().to_string();
            let mut sets = Vec::new();
            for (ctx, cr) in contexts.iter().filter(|(_, cr)| cr.target_table == name) {
                let tuned = tune_cfds(ctx, params);
                let (rewritten, dropped) = rewrite_to_target(&tuned, cr);
                cfd_log.push(CfdEntry {
                    table: name.clone(),
                    context: cr.context_source.clone(),
                    tuned: tuned.len(),
                    rewritten: rewritten.len(),
                    dropped,
                });
                sets.push((cr.ctype, rewritten));
            }
            let merged = merge_cfds(&sets);
            let fds: Vec<_> = inputs.fds.iter().filter(|f| f.relation == name).cloned().collect();
            if merged.is_empty() && fds.is_empty() {
                continue;
            }
            let outcome = repair(instance, &merged, &fds);
            if outcome.bound_triggered {
                issues.push(format!("repair of `{name}` hit its operation bound"));
            }
            repairs.push(RepairEntry {
                table: name,
                rules: merged.iter().map(|c| c.to_string()).chain(fds.iter().map(|f| f.to_string())).collect(),
                ops: outcome.ops,
                total_cost: outcome.total_cost,
                unresolved: outcome.unresolved,
                bound_triggered: outcome.bound_triggered,
            });
            *instance = outcome.relation;
        }
    }
    clock.lap("repair");

    let mut foreign_keys: Vec<String> = fks
        .iter()
        .map(|fk| format!("{} ⊆ {} ({})", fk.ind.from, fk.ind.to, fk.shared_target_attribute))
        .collect();
    foreign_keys.sort();
    let report = Report {
        seed: params.seed,
        toggles: *toggles,
        issues,
        matches: matches.iter().collect(),
        foreign_keys,
        mappings,
        rules,
        cfds: cfd_log,
        repairs,
        metrics: None,
    };
    Ok(RunOutput {
        tables,
        report,
        timings: clock.1,
    })
}

/// Loads `config_path`, applies overrides and runs the pipeline. When the
/// config has an evaluation section the metrics are added to the report.
pub fn run_pipeline(config_path: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let cfg = RunConfig::from_file(config_path)?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut inputs = Inputs::load(&cfg, &base)?;
    overrides.apply(&mut inputs)?;
    let mut out = run(&inputs)?;
    if let Some(ev) = &cfg.evaluation {
        let table = ev.table.clone().unwrap_or_else(|| inputs.target.tables()[0].name.clone());
        let result = out
            .table(&table)
            .ok_or_else(|| Error::Evaluation(format!("no target table `{table}`")))?;
        let truth = load_named(&base.join(&ev.ground_truth), &table, &CsvDialect::default(), &inputs.params.null_tokens)?;
        match evaluate(result, &truth, &ev.keys, ev.excluded_marker.as_deref()) {
            Ok(m) => out.report.metrics = Some(m),
            Err(e) => out.report.issues.push(e.to_string()),
        }
    }
    Ok(out)
}

/// Command-line adjustments to a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub toggles: Vec<(String, bool)>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, inputs: &mut Inputs) -> Result<()> {
        for (stage, on) in &self.toggles {
            if !inputs.toggles.set(stage, *on) {
                return Err(Error::Params(format!(
                    "unknown stage `{stage}` (expected one of {})",
                    StageToggle::STAGES.join(", ")
                )));
            }
        }
        if let Some(seed) = self.seed {
            inputs.params.seed = seed;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Human-readable rendering of a report.
pub fn render_text(report: &Report) -> String {
    let mut s = String::new();
    let t = report.toggles;
    let on = |b: bool| if b { "on" } else { "off" };
    let _ = writeln!(
        s,
        "seed {}; context for matching {}, mapping {}, transformation {}, repair {}",
        report.seed,
        on(t.matching),
        on(t.mapping),
        on(t.transformation),
        on(t.repair)
    );
    let _ = writeln!(s, "\nmatches ({})", report.matches.len());
    for c in &report.matches {
        let from: Vec<String> = c.provenance.iter().map(|p| format!("{p:?}").to_lowercase()).collect();
        let _ = writeln!(s, "  {} -> {}  {:.3}  [{}]", c.source, c.target, c.score, from.join(", "));
    }
    let _ = writeln!(s, "\nforeign keys ({})", report.foreign_keys.len());
    for fk in &report.foreign_keys {
        let _ = writeln!(s, "  {fk}");
    }
    let _ = writeln!(s, "\nmappings ({})", report.mappings.len());
    for m in &report.mappings {
        let _ = writeln!(
            s,
            "  {}\n    threshold {:.2}, verification {}, {} tuples",
            m.tgd,
            m.threshold,
            opt(m.verification),
            m.tuples
        );
    }
    let _ = writeln!(s, "\ntransformation rules ({})", report.rules.len());
    for r in &report.rules {
        let _ = writeln!(
            s,
            "  {}.{} from {} (support {}, consistency {}): {}",
            r.table,
            r.column,
            r.context,
            r.support,
            opt(r.consistency),
            r.rule
        );
    }
    let _ = writeln!(s, "\ncfds");
    for c in &report.cfds {
        let _ = writeln!(
            s,
            "  {} from {}: {} tuned, {} rewritten, {} dropped",
            c.table, c.context, c.tuned, c.rewritten, c.dropped
        );
    }
    for r in &report.repairs {
        let _ = writeln!(s, "\nrepair of {} (cost {})", r.table, r.total_cost);
        for op in &r.ops {
            let show = |v: &Option<String>| v.as_deref().map_or("null".to_string(), |x| format!("{x:?}"));
            let _ = writeln!(
                s,
                "  row {} {}: {} -> {} (cost {})",
                op.row,
                op.attribute,
                show(&op.old),
                show(&op.new),
                op.cost
            );
        }
        if !r.unresolved.is_empty() {
            let _ = writeln!(s, "  unresolved rows {:?}", r.unresolved);
        }
    }
    if !report.issues.is_empty() {
        let _ = writeln!(s, "\nissues");
        for i in &report.issues {
            let _ = writeln!(s, "  {i}");
        }
    }
    if let Some(m) = &report.metrics {
        let _ = writeln!(s, "\nmetrics\n  {m}");
    }
    s
}

/// Writes `<table>.csv`, `report.json`, `report.txt` and `timings.json`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let dialect = CsvDialect::default();
    for table in &out.tables {
        let path = dir.join(format!("{}.csv", table.name()));
        write_relation(table, &path, &dialect)?;
        written.push(path);
    }
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("report.json", report_json(&out.report))?;
    put("report.txt", render_text(&out.report))?;
    let timings: serde_json::Map<String, serde_json::Value> = out
        .timings
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::json!(v)))
        .collect();
    put("timings.json", serde_json::to_string_pretty(&timings).expect("plain map"))?;
    Ok(written)
}

pub fn report_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// CSV text of every output table, concatenated; handy for comparisons.
pub fn tables_csv(out: &RunOutput) -> Result<String> {
    let dialect = CsvDialect::default();
    let mut s = String::new();
    for t in &out.tables {
        s.push_str(&to_csv_string(t, &dialect)?);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContextType, PipelineConfig, TargetSchema};

    fn inputs() -> Inputs {
        let source = Relation::from_rows(
            "listing",
            &["street", "town", "pc"],
            &[
                &[Some("1 High St"), Some("Leeds"), Some("LS1 1AA")],
                &[Some("2 Low St"), None, Some("LS2 2BB")],
                &[Some("3 Mid St"), Some("York"), Some("YO1 3CC")],
            ],
        )
        .unwrap();
        let address = Relation::from_rows(
            "address",
            &["postcode", "town"],
            &[
                &[Some("LS1 1AA"), Some("Leeds")],
                &[Some("LS2 2BB"), Some("Leeds")],
                &[Some("YO1 3CC"), Some("York")],
            ],
        )
        .unwrap();
        let cr = ContextRelationship::new(
            "address",
            "p",
            &[("postcode", "postcode"), ("town", "city")],
            ContextType::Reference,
        );
        Inputs {
            target: TargetSchema::single("p", &["street", "city", "postcode"]).unwrap(),
            sources: vec![source],
            contexts: vec![(address, cr)],
            toggles: StageToggle::default(),
            params: PipelineConfig {
                initial_support: Some(1),
                ..PipelineConfig::default()
            },
            fds: Vec::new(),
        }
    }

    #[test]
    fn single_source_flows_through_every_stage() {
        let out = run(&inputs()).unwrap();
        let p = out.table("p").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.attributes(), ["street", "city", "postcode"]);
        let city = p.index_of("city").unwrap();
        assert_eq!(p.cell(1, city), Some("Leeds"));
        assert_eq!(out.report.repairs.len(), 1);
        let stages: Vec<&str> = out.timings.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(stages, ["matching", "profiling", "mapping", "transformation", "repair"]);
    }

    #[test]
    fn repair_toggle_leaves_missing_values() {
        let mut i = inputs();
        i.toggles.repair = false;
        let out = run(&i).unwrap();
        let p = out.table("p").unwrap();
        assert_eq!(p.cell(1, p.index_of("city").unwrap()), None);
        assert!(out.report.repairs.is_empty());
    }

    #[test]
    fn invalid_context_is_reported_and_skipped() {
        let mut i = inputs();
        i.contexts[0].1.target_table = "q".into();
        let out = run(&i).unwrap();
        assert!(out.report.issues.iter().any(|s| s.contains("unknown target table")));
        assert!(out.report.repairs.is_empty());
    }

    #[test]
    fn report_is_reproducible() {
        let a = run(&inputs()).unwrap();
        let b = run(&inputs()).unwrap();
        assert_eq!(report_json(&a.report), report_json(&b.report));
        assert_eq!(tables_csv(&a).unwrap(), tables_csv(&b).unwrap());
        assert!(render_text(&a.report).contains("mappings (1)"));
    }

    #[test]
    fn unknown_stage_override_is_a_config_error() {
        let mut i = inputs();
        let o = Overrides {
            toggles: vec![("profiling".into(), false)],
            seed: None,
        };
        assert!(o.apply(&mut i).unwrap_err().is_config_error());
    }
}
