//! CSV float formatting: shortest round-trip decimal so values survive a
//! parse without loss and reruns compare byte for byte.

pub fn float(value: f64) -> String {
    if value.is_nan() {
        "NaN".to_string()
    } else {
        value.to_string()
    }
}
