//! Ordered result blocks rendered as `key=value` lines or a JSON object.

use serde_json::Value;

/// Shortest round-trip form; `inf`, `-inf` and `nan` for non-finite values.
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

fn float_value(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

#[derive(Debug, Default)]
pub struct Block {
    entries: Vec<(String, String, Value)>,
}

impl Block {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        let text = value.to_string();
        let json = match text.parse::<i64>() {
            Ok(i) => Value::from(i),
            Err(_) => Value::String(text.clone()),
        };
        self.entries.push((key.to_owned(), text, json));
    }

    pub fn float(&mut self, key: &str, value: f64) {
        self.entries.push((key.to_owned(), fmt_float(value), float_value(value)));
    }

    pub fn floats(&mut self, key: &str, values: &[f64]) {
        let text = values.iter().map(|&v| fmt_float(v)).collect::<Vec<_>>().join(",");
        let json = Value::Array(values.iter().map(|&v| float_value(v)).collect());
        self.entries.push((key.to_owned(), text, json));
    }

    pub fn render(&self, json: bool) -> String {
        if json {
            let fields: Vec<String> = self
                .entries
                .iter()
                .map(|(k, _, v)| format!("{}:{}", Value::String(k.clone()), v))
                .collect();
            format!("{{{}}}\n", fields.join(","))
        } else {
            self.entries.iter().map(|(k, t, _)| format!("{k}={t}\n")).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_forms() {
        let mut b = Block::new();
        b.push("status", "optimal");
        b.push("nodes", 3);
        b.float("value", -1.5);
        b.float("bound", f64::NEG_INFINITY);
        b.floats("x", &[0.25, 1.0]);
        assert_eq!(b.render(false), "status=optimal\nnodes=3\nvalue=-1.5\nbound=-inf\nx=0.25,1\n");
        let v: Value = serde_json::from_str(&b.render(true)).unwrap();
        assert_eq!(v["nodes"], 3);
        assert_eq!(v["value"], -1.5);
        assert!(v["bound"].is_null());
        assert_eq!(v["x"][0], 0.25);
    }
}
