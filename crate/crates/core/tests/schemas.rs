use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load(rel: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(repo(rel)).unwrap()).unwrap()
}

fn assert_valid(schema: &str, instance: &Value) {
    let v = jsonschema::validator_for(&load(schema)).unwrap();
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}");
}

#[test]
fn shipped_configs_match_schemas() {
    let cases = [
        ("schemas/fit_request.schema.json", "configs/quarton_fit.json"),
        ("schemas/fit_request.schema.json", "configs/fluxonium_fit.json"),
        ("schemas/circuit.schema.json", "configs/demo_124.json"),
        ("schemas/circuit.schema.json", "configs/fluxonium_trainmon.json"),
        ("schemas/compare.schema.json", "configs/fluxonium_compare.json"),
        ("schemas/scan.schema.json", "configs/scan.json"),
        ("schemas/scan.schema.json", "configs/scan_smoke.json"),
        ("schemas/dephasing.schema.json", "configs/noise.json"),
    ];
    for (schema, config) in cases {
        assert_valid(schema, &load(config));
    }
}

#[test]
fn serialized_defaults_match_schemas() {
    let dephasing = serde_json::to_value(trainmon::io::DephasingConfig::default()).unwrap();
    assert_valid("schemas/dephasing.schema.json", &dephasing);
}

#[test]
fn schemas_reject_unknown_fields() {
    let mut scan = load("configs/scan.json");
    scan["colour"] = Value::from("red");
    let v = jsonschema::validator_for(&load("schemas/scan.schema.json")).unwrap();
    assert!(!v.is_valid(&scan));
}
