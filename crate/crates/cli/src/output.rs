use serde::Serialize;
use serde_json::{Number, Value};

/// Twelve significant digits; integral values print as integers.
pub fn round_number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    if x == x.trunc() && x.abs() < 1e15 {
        return Value::from(x as i64);
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap();
    Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

pub fn tidy(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => round_number(n.as_f64().unwrap()),
        Value::Array(a) => Value::Array(a.into_iter().map(tidy).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, tidy(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = tidy(serde_json::to_value(value).expect("serializable"));
    let mut s = serde_json::to_string_pretty(&v).unwrap();
    s.push('\n');
    s
}

pub fn fmt_num(x: f64) -> String {
    match round_number(x) {
        Value::Null => "NaN".into(),
        v => v.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.288_788_095_086_602_4), "0.288788095087");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_num(1e-20 / 3.0), "3.33333333333e-21");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn nested_values() {
        let v = serde_json::json!({"a": [1.0, 0.5], "b": {"c": 1.0 / 3.0}, "d": "x"});
        assert_eq!(tidy(v).to_string(), r#"{"a":[1,0.5],"b":{"c":0.333333333333},"d":"x"}"#);
    }
}
