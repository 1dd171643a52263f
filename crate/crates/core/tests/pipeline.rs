mod common;

use std::path::{Path, PathBuf};

use wrangle_core::config::StageToggle;
use wrangle_core::pipeline::{run, run_pipeline, Overrides};

fn golden_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/config.json")
}

#[test]
fn golden_run_joins_and_cleans_the_listings() {
    let out = run_pipeline(&golden_config(), &Overrides::default()).unwrap();
    let p = out.table("p").unwrap();
    assert_eq!(p.len(), 4);
    let street = p.index_of("street").unwrap();
    let city = p.index_of("city").unwrap();
    let streets: Vec<_> = (0..p.len()).filter_map(|r| p.cell(r, street)).collect();
    assert!(streets.contains(&"Canton Street"));
    assert!((0..p.len()).all(|r| p.cell(r, city) == Some("London")));
    assert_eq!(out.report.mappings.len(), 2);
    assert!(out.report.mappings.iter().all(|m| m.tgd.contains("deprivation")));
    let m = out.report.metrics.unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (32, 0, 0));
    assert!(out.report.issues.is_empty());
}

#[test]
fn later_toggles_leave_earlier_stages_alone() {
    let c = common::corpus::generate(5);
    let full = run(&c.inputs).unwrap().report;
    for stage in ["repair", "transformation"] {
        let mut inputs = c.inputs.clone();
        inputs.toggles.set(stage, false);
        let partial = run(&inputs).unwrap().report;
        assert_eq!(partial.matches, full.matches, "{stage}");
        assert_eq!(partial.foreign_keys, full.foreign_keys, "{stage}");
        assert_eq!(partial.mappings, full.mappings, "{stage}");
        if stage == "repair" {
            assert_eq!(partial.rules, full.rules);
            assert!(partial.repairs.is_empty());
        }
    }
}

#[test]
fn no_context_runs_still_produce_the_target_schema() {
    let c = common::corpus::generate(5);
    let mut inputs = common::corpus::with_contexts(&c, &[]);
    inputs.toggles = StageToggle::all(true);
    let out = run(&inputs).unwrap();
    let listing = out.table("listing").unwrap();
    assert_eq!(listing.attributes(), c.truth.attributes());
    assert!(out.report.rules.is_empty() && out.report.repairs.is_empty());
}

#[test]
fn seed_override_is_reported() {
    let out = run_pipeline(&golden_config(), &Overrides { toggles: vec![], seed: Some(99) }).unwrap();
    assert_eq!(out.report.seed, 99);
}
