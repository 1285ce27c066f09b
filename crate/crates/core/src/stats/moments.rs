use crate::error::{Error, Result};

/// Compensated (Neumaier) sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("mean of an empty sequence"));
    }
    Ok(neumaier_sum(values.iter().copied()) / values.len() as f64)
}

/// Population variance (divides by n).
pub fn variance(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    Ok(neumaier_sum(values.iter().map(|v| (v - m) * (v - m))) / values.len() as f64)
}

/// Standardized third central moment `m3 / m2^(3/2)` (population moments).
pub fn skewness(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::Degenerate(format!(
            "skewness needs at least 3 values, got {}",
            values.len()
        )));
    }
    let m = mean(values)?;
    let n = values.len() as f64;
    let m2 = neumaier_sum(values.iter().map(|v| (v - m).powi(2))) / n;
    let m3 = neumaier_sum(values.iter().map(|v| (v - m).powi(3))) / n;
    if !(m2 > 0.0) || m2 <= f64::EPSILON * m * m {
        return Err(Error::Degenerate("skewness of a constant sequence".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

/// Correctly rounded sum of non-negative finite values, independent of
/// their order. Returns NaN if any value is negative or not finite.
///
/// Mantissas are accumulated exactly per binary exponent and the big integer
/// they form is rounded to nearest-even once at the end.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    // 2^75 additions of 53-bit mantissas fit in a u128 bin
    let mut bins = vec![0u128; 2047];
    for x in values {
        let bits = x.to_bits();
        if bits >> 63 != 0 && x != 0.0 || !x.is_finite() {
            return f64::NAN;
        }
        let exp = ((bits >> 52) & 0x7ff) as usize;
        let frac = bits & ((1u64 << 52) - 1);
        // value = m * 2^(max(exp, 1) - 1075)
        let (slot, m) = if exp == 0 { (0, frac) } else { (exp - 1, frac | (1u64 << 52)) };
        bins[slot] += m as u128;
    }
    round_scaled(&bins)
}

/// `sum_k bins[k] * 2^(k - 1074)` rounded to nearest-even.
fn round_scaled(bins: &[u128]) -> f64 {
    const LIMBS: usize = 2047 / 64 + 4;
    let mut big = [0u64; LIMBS];
    for (k, &v) in bins.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let (limb, off) = (k / 64, k % 64);
        // v << off spans at most three limbs
        let lo = (v << off) as u64;
        let mid = ((v << off) >> 64) as u64;
        let hi = if off == 0 { 0 } else { (v >> (128 - off)) as u64 };
        let mut carry = 0u64;
        for (i, part) in [lo, mid, hi].into_iter().enumerate() {
            let (s1, c1) = big[limb + i].overflowing_add(part);
            let (s2, c2) = s1.overflowing_add(carry);
            big[limb + i] = s2;
            carry = (c1 | c2) as u64;
        }
        let mut i = limb + 3;
        while carry != 0 {
            let (s, c) = big[i].overflowing_add(1);
            big[i] = s;
            carry = c as u64;
            i += 1;
        }
    }
    let Some(top_limb) = big.iter().rposition(|&l| l != 0) else {
        return 0.0;
    };
    let msb = top_limb * 64 + 63 - big[top_limb].leading_zeros() as usize;
    let bit = |i: usize| (big[i / 64] >> (i % 64)) & 1;
    if msb < 53 {
        // exact: a subnormal or small multiple of 2^-1074
        let m = big[0] as f64;
        return m * f64::from_bits(1);
    }
    let shift = msb - 52;
    let mut mant = 0u64;
    for i in 0..53 {
        mant |= bit(shift + i) << i;
    }
    let round = bit(shift - 1);
    let sticky = (0..shift - 1).any(|i| bit(i) != 0);
    let mut exp = shift as i32 - 1074;
    if round == 1 && (sticky || mant & 1 == 1) {
        mant += 1;
        if mant == 1u64 << 53 {
            mant >>= 1;
            exp += 1;
        }
    }
    mant as f64 * pow2(exp)
}

fn pow2(k: i32) -> f64 {
    if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k + 1074))
    }
}
