//! JSON helpers: floats are written with 17 significant digits so that every
//! report value round-trips exactly through any IEEE-754 parser.

use serde::Serializer;
use serde_json::value::RawValue;

/// Formats `x` like C's `%.17g`, but always keeps a `.` or exponent so the
/// token reads back as a float. Non-finite values are not representable in
/// JSON and yield `None`.
pub fn format_sig17(x: f64) -> Option<String> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(if x.is_sign_negative() { "-0.0" } else { "0.0" }.to_string());
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-4..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let tail = if tail.is_empty() { "0" } else { tail };
        return Some(format!("{sign}{head}.{tail}e{exp}"));
    }

    let (int_part, frac_part) = if exp >= 0 {
        let split = (exp + 1) as usize;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        ("0".to_string(), format!("{zeros}{digits}"))
    };
    let frac = frac_part.trim_end_matches('0');
    let frac = if frac.is_empty() { "0" } else { frac };
    Some(format!("{sign}{int_part}.{frac}"))
}

fn raw(x: f64) -> Box<RawValue> {
    let text = format_sig17(x).unwrap_or_else(|| "null".to_string());
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

/// `serialize_with` adapter for `f64` fields.
pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&raw(*x), s)
}

/// `serialize_with` adapter for `Option<f64>` fields; `None` becomes `null`.
pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_f64(v, s),
        None => s.serialize_none(),
    }
}

/// `serialize_with` adapter for float vectors.
pub fn ser_vec_f64<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&raw(*x))?;
    }
    seq.end()
}

/// `serialize_with` adapter for `(key, value)` float pairs written as a JSON
/// object whose keys are the shortest decimal form of the key.
pub fn ser_f64_map<S: Serializer>(pairs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(pairs.len()))?;
    for (k, v) in pairs {
        map.serialize_entry(&format!("{k}"), &raw(*v))?;
    }
    map.end()
}
