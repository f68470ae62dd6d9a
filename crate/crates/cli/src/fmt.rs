use serde_json::Value;

/// `%g`-style formatting at 6 significant digits.
pub fn g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (999999.5 -> 1e6).
    let exp = if format!("{:.5e}", x).contains(&format!("e{}", exp + 1)) {
        exp + 1
    } else {
        exp
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("exponent");
        format!("{}e{}", trim_zeros(mantissa.to_string()), e)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn round6(x: f64) -> f64 {
    g6(x).parse().unwrap_or(x)
}

/// Rounds every float in a JSON tree to 6 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            serde_json::Number::from_f64(round6(n.as_f64().expect("f64")))
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

pub fn json_string(v: &impl serde::Serialize) -> String {
    let v = serde_json::to_value(v).expect("serializable");
    serde_json::to_string_pretty(&round_json(v)).expect("serializable")
}

/// Seconds from `0.1`, `100ms`, `2s`, `250us`.
pub fn parse_seconds(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = s.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid duration {s:?}; use e.g. 0.1, 100ms, 2s"))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(format!("duration must be positive, got {s:?}"));
    }
    Ok(v * scale)
}
