//! Fixed-point display rounding shared by every report table.

/// Format `value` with `decimals` fractional digits, rounding half up.
///
/// `f64::round` alone misbehaves on values like 66.55 whose binary
/// representation sits a hair below the decimal midpoint, so the value is
/// first rendered to `decimals + 6` digits and the rounding decision is made
/// on that decimal string. Statistics in this crate are ratios of small
/// integers or sums of short decimals, so a value that lands within that
/// guard band of a midpoint is treated as sitting on it.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    let rendered = format!("{:.*}", decimals + 6, value.abs());
    let (int_part, frac_part) = rendered
        .split_once('.')
        .expect("fixed formatting always yields a fraction");

    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(frac_part.bytes().take(decimals))
        .map(|b| b - b'0')
        .collect();

    if frac_part.as_bytes()[decimals] >= b'5' {
        let mut carry = true;
        for d in digits.iter_mut().rev() {
            if *d == 9 {
                *d = 0;
            } else {
                *d += 1;
                carry = false;
                break;
            }
        }
        if carry {
            digits.insert(0, 1);
        }
    }

    let int_len = digits.len() - decimals;
    let mut out = String::new();
    if value < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    for &d in &digits[..int_len] {
        out.push((b'0' + d) as char);
    }
    if decimals > 0 {
        out.push('.');
        for &d in &digits[int_len..] {
            out.push((b'0' + d) as char);
        }
    }
    out
}
