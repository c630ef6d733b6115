use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub version: &'static str,
    pub wall_time: f64,
}

/// Rounds to 12 significant digits and prints with `.` as decimal mark.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn cell(v: &Value) -> String {
    let raw = match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.to_string(),
            (_, Some(u)) => u.to_string(),
            _ => format_number(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw
    }
}

/// Flattens results into rows: an array of objects gives one row each, an
/// object gives a single row. Nested values are written as JSON text.
pub fn to_csv(results: &Value) -> String {
    let rows: Vec<Map<String, Value>> = match results {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Object(m) => m.clone(),
                other => Map::from_iter([("value".to_string(), other.clone())]),
            })
            .collect(),
        Value::Object(m) => vec![m.clone()],
        other => vec![Map::from_iter([("value".to_string(), other.clone())])],
    };
    let mut header: Vec<String> = Vec::new();
    for r in &rows {
        for k in r.keys() {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for r in &rows {
        let line: Vec<String> = header
            .iter()
            .map(|k| r.get(k).map(cell).unwrap_or_default())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(2.0 * (2f64.sqrt() - 1.0)), "0.828427124746");
        assert_eq!(format_number(0.75), "0.75");
        assert_eq!(format_number(1234.5678901234567), "1234.56789012");
    }

    #[test]
    fn csv_rows_and_quoting() {
        let v = json!([{"a": 1, "b": "x,y"}, {"a": 0.1, "c": [1, 2]}]);
        assert_eq!(to_csv(&v), "a,b,c\n1,\"x,y\",\n0.1,,\"[1,2]\"\n");
    }
}
