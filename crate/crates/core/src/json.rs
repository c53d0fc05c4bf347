//! Deterministic JSON helpers: object keys are sorted and every float is
//! written with 17 significant digits.

use std::str::FromStr;

use serde_json::{Number, Value};

use crate::linalg::{ComplexMatrix, StateVector, C64};

/// A float as a JSON number with 17 significant digits; non-finite values
/// become `null`.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let text = format!("{x:.16e}");
    Value::Number(Number::from_str(&text).expect("formatted float is a valid JSON number"))
}

/// `[re, im]`
pub fn complex(z: C64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

/// Row-major list of rows of `[re, im]` pairs.
pub fn matrix(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array((0..m.cols()).map(|j| complex(m.get(i, j))).collect()))
            .collect(),
    )
}

pub fn state(s: &StateVector) -> Value {
    serde_json::json!({
        "dims": s.dims(),
        "amplitudes": s.amplitudes().iter().map(|z| complex(*z)).collect::<Vec<_>>(),
    })
}

/// Pretty rendering with a trailing newline.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values always serialize");
    s.push('\n');
    s
}
