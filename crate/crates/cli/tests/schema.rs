use serde_json::Value;
use wgamp::harness::SweepConfig;

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

/// Every documented default must equal the built-in one.
fn check_defaults(props: &Value, defaults: &Value, prefix: &str) {
    for (name, value) in defaults.as_object().unwrap() {
        let Some(d) = props[name].get("default") else { continue };
        if d.is_number() {
            assert_eq!(d.as_f64(), value.as_f64(), "{prefix}{name}");
        } else {
            assert_eq!(d, value, "{prefix}{name}");
        }
    }
}

#[test]
fn sweep_schema_matches_config() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/sweep-config.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let defaults = serde_json::to_value(SweepConfig::default()).unwrap();
    let gamp = &schema["$defs"]["gamp"]["properties"];
    let em = &schema["$defs"]["em"]["properties"];

    assert_eq!(keys(&schema["properties"]), keys(&defaults));
    assert_eq!(keys(gamp), keys(&defaults["gamp"]));
    assert_eq!(keys(em), keys(&defaults["em"]));
    assert_eq!(keys(&em["estimate"]["properties"]), keys(&defaults["em"]["estimate"]));

    check_defaults(&schema["properties"], &defaults, "");
    check_defaults(gamp, &defaults["gamp"], "gamp.");
    check_defaults(em, &defaults["em"], "em.");
    check_defaults(
        &em["estimate"]["properties"],
        &defaults["em"]["estimate"],
        "em.estimate.",
    );
}
