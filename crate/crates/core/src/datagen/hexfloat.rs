//! C99-style hexadecimal floating point text (`0x1.8000000000000p+1`).
//!
//! Output matches Python's `float.hex`; input accepts any hex-float spelling
//! and rounds to nearest, ties to even.

const MANT_BITS: u32 = 52;
const MANT_MASK: u64 = (1 << MANT_BITS) - 1;

pub fn format(x: f64) -> String {
    debug_assert!(x.is_finite());
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> MANT_BITS) & 0x7ff) as i32;
    let mant = bits & MANT_MASK;
    match (exp, mant) {
        (0, 0) => format!("{sign}0x0.0p+0"),
        (0, m) => format!("{sign}0x0.{m:013x}p-1022"),
        (e, m) => format!("{sign}0x1.{m:013x}p{:+}", e - 1023),
    }
}

/// Parses a hex float. Returns `None` for malformed text or values that
/// overflow `f64`.
pub fn parse(s: &str) -> Option<f64> {
    let (negative, rest) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let (digits, exp_text) = match rest.find(['p', 'P']) {
        Some(k) => (&rest[..k], Some(&rest[k + 1..])),
        None => (rest, None),
    };
    let mut exp2: i64 = match exp_text {
        Some(t) => t.parse::<i32>().ok()? as i64,
        None => 0,
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(k) => (&digits[..k], &digits[k + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }

    // Up to 15 significant hex digits (60 bits) go into the mantissa, the rest
    // only matter through a sticky bit.
    let mut mant: u64 = 0;
    let mut kept = 0u32;
    let mut sticky = false;
    let mut leading = true;
    for (k, ch) in int_part.chars().chain(frac_part.chars()).enumerate() {
        let d = ch.to_digit(16)? as u64;
        let is_frac = k >= int_part.len();
        if leading && d == 0 {
            if is_frac {
                exp2 -= 4;
            }
            continue;
        }
        leading = false;
        if kept < 15 {
            mant = (mant << 4) | d;
            kept += 1;
            if is_frac {
                exp2 -= 4;
            }
        } else {
            sticky |= d != 0;
            if !is_frac {
                exp2 += 4;
            }
        }
    }
    let signed = |v: f64| if negative { -v } else { v };
    if mant == 0 {
        return Some(signed(0.0));
    }

    // value = mant · 2^exp2 (+ sticky)
    let nbits = 64 - mant.leading_zeros() as i64;
    let top = exp2 + nbits - 1;
    if top > 1023 {
        return None;
    }
    let shift = if top >= -1022 { nbits - 53 } else { -1074 - exp2 };
    let (mut m, mut e) = if shift > 0 {
        if shift >= 64 {
            (0u64, exp2 + shift)
        } else {
            let dropped = mant & ((1u64 << shift) - 1);
            let half = 1u64 << (shift - 1);
            let mut m = mant >> shift;
            if dropped > half || (dropped == half && (sticky || m & 1 == 1)) {
                m += 1;
            }
            (m, exp2 + shift)
        }
    } else {
        (mant << (-shift), exp2 + shift)
    };
    if m == 1 << 53 {
        m >>= 1;
        e += 1;
    }
    if m == 0 {
        return Some(signed(0.0));
    }
    let bits = if m >> MANT_BITS != 0 {
        let biased = e + 52 + 1023;
        if biased >= 2047 {
            return None;
        }
        ((biased as u64) << MANT_BITS) | (m & MANT_MASK)
    } else {
        m
    };
    Some(signed(f64::from_bits(bits)))
}
