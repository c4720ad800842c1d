use hjbnav::env::{ElementShape, MotionProfile};
use hjbnav::gp::{lattice_in_disc, GpModel, KernelParams};
use hjbnav::model::{ElementInfo, ElementModel, TrainingInfo};
use hjbnav::scene::{build_street_crossing, StreetCrossingConfig};
use serde_json::Value;

fn schema(name: &str) -> Value {
    let path = format!("{}/../../docs/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn resolve<'a>(root: &'a Value, other: &'a Value, node: &'a Value) -> (&'a Value, &'a Value) {
    match node.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let (doc, ptr) = r.split_once('#').unwrap();
            let base = if doc.is_empty() { root } else { other };
            resolve(base, other, base.pointer(ptr).unwrap())
        }
        None => (root, node),
    }
}

/// Walks required keys and const/enum values; enough to catch drift between the
/// schema and what the serializers emit.
fn check(root: &Value, other: &Value, node: &Value, v: &Value, at: &str) {
    let (root, node) = resolve(root, other, node);
    if let Some(alts) = node.get("oneOf").and_then(Value::as_array) {
        let ok = alts.iter().any(|a| {
            let a = resolve(root, other, a).1;
            let t = &a["properties"]["type"]["const"];
            t.is_null() || v.get("type") == Some(t)
        });
        assert!(ok, "{at}: no alternative matches");
        for a in alts {
            let a = resolve(root, other, a).1;
            if v.get("type") == Some(&a["properties"]["type"]["const"]) {
                check(root, other, a, v, at);
            }
        }
        return;
    }
    if let Some(c) = node.get("const") {
        assert_eq!(v, c, "{at}");
    }
    if let Some(e) = node.get("enum").and_then(Value::as_array) {
        assert!(e.contains(v), "{at}: {v} not in enum");
    }
    for key in node.get("required").and_then(Value::as_array).into_iter().flatten() {
        let key = key.as_str().unwrap();
        assert!(v.get(key).is_some(), "{at}: missing {key}");
    }
    if let (Some(props), Some(obj)) = (node.get("properties").and_then(Value::as_object), v.as_object()) {
        for (k, sub) in props {
            if let Some(child) = obj.get(k) {
                check(root, other, sub, child, &format!("{at}.{k}"));
            }
        }
    }
    if let (Some(items), Some(arr)) = (node.get("items"), v.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            check(root, other, items, child, &format!("{at}[{i}]"));
        }
    }
}

#[test]
fn model_files_follow_the_schema() {
    let gp = GpModel::from_points(&lattice_in_disc(3.0, 1.0), 2, KernelParams::default()).unwrap();
    for shape in [
        ElementShape::rectangle(4.0, 2.0).unwrap(),
        ElementShape::polygon(vec![[0.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]).unwrap(),
    ] {
        let m = ElementModel {
            gp: gp.clone(),
            element: ElementInfo { shape, motion: MotionProfile::constant(0.8, 0.0) },
            training: TrainingInfo {
                epochs: 1,
                max_steps: 100,
                lambda: 0.1,
                dt: 0.05,
                seed: 0,
                qc: 1.0,
                radius: 3.0,
                eta: 0.01,
                sigma_explore: 0.5,
                u_max: 1.0,
                w_term: 10.0,
                init_value: 0.0,
            },
        };
        let v: Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let s = schema("model.schema.json");
        check(&s, &s, &s, &v, "model");
    }
}

#[test]
fn scenario_files_follow_the_schema() {
    let sc = build_street_crossing(&StreetCrossingConfig::default()).unwrap();
    let v = serde_json::to_value(&sc).unwrap();
    let (s, m) = (schema("scenario.schema.json"), schema("model.schema.json"));
    check(&s, &m, &s, &v, "scenario");
}
