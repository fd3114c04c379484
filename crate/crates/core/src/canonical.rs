//! Canonical JSON: object keys sorted, no insignificant whitespace, UTF-8.
//!
//! Written against `serde_json::Value` directly so the byte layout does not
//! depend on whether some other crate in the build enables `preserve_order`.

use serde::Serialize;
use serde_json::Value;

pub fn to_vec<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("ledger types serialize to JSON");
    let mut out = Vec::new();
    write_value(&v, &mut out);
    out
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    String::from_utf8(to_vec(value)).expect("canonical JSON is UTF-8")
}

fn write_value(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => {
            out.extend_from_slice(serde_json::to_string(s).expect("string").as_bytes())
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(serde_json::to_string(k).expect("key").as_bytes());
                out.push(b':');
                write_value(&map[k], out);
            }
            out.push(b'}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_compact() {
        let v = json!({"b": 1, "a": {"z": [1, 2.5, "x"], "c": null}});
        assert_eq!(to_string(&v), r#"{"a":{"c":null,"z":[1,2.5,"x"]},"b":1}"#);
    }

    #[test]
    fn strings_escaped() {
        assert_eq!(to_string(&json!("a\"b\n")), r#""a\"b\n""#);
    }
}
