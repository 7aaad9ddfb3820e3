//! Wigner 3j symbols and Gaunt coefficients for integer angular momenta,
//! Condon–Shortley phases.

use std::f64::consts::PI;

fn factorial(n: i64) -> f64 {
    (2..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn triangle(a: i64, b: i64, c: i64) -> bool {
    c >= (a - b).abs() && c <= a + b
}

/// `(j1 j2 j3; m1 m2 m3)` by the Racah formula. Exactly zero when a
/// selection rule fails.
pub fn wigner_3j(j1: i64, j2: i64, j3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
    if m1 + m2 + m3 != 0 || !triangle(j1, j2, j3) || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if m1 == 0 && m2 == 0 && m3 == 0 && (j1 + j2 + j3) % 2 == 1 {
        return 0.0;
    }
    let delta =
        factorial(j1 + j2 - j3) * factorial(j1 - j2 + j3) * factorial(-j1 + j2 + j3) / factorial(j1 + j2 + j3 + 1);
    let pre = (delta
        * factorial(j1 + m1)
        * factorial(j1 - m1)
        * factorial(j2 + m2)
        * factorial(j2 - m2)
        * factorial(j3 + m3)
        * factorial(j3 - m3))
    .sqrt();
    let kmin = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let kmax = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let den = factorial(k)
            * factorial(j1 + j2 - j3 - k)
            * factorial(j1 - m1 - k)
            * factorial(j2 + m2 - k)
            * factorial(j3 - j2 + m1 + k)
            * factorial(j3 - j1 - m2 + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / den;
    }
    let phase = if (j1 - j2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * pre * sum
}

/// `∫ Y_{l1 m1} Y_{l2 m2} conj(Y_{L M}) dΩ`.
pub fn gaunt(l1: i64, m1: i64, l2: i64, m2: i64, l: i64, m: i64) -> f64 {
    if m1 + m2 != m || (l1 + l2 + l) % 2 == 1 || !triangle(l1, l2, l) {
        return 0.0;
    }
    let norm = (((2 * l1 + 1) * (2 * l2 + 1) * (2 * l + 1)) as f64 / (4.0 * PI)).sqrt();
    let phase = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * norm * wigner_3j(l1, l2, l, 0, 0, 0) * wigner_3j(l1, l2, l, m1, m2, -m)
}

/// `∫ conj(Y_a) conj(Y_b) Y_c Y_d dΩ` for `(l, m)` pairs. Exactly zero
/// when the magnetic sums differ or the total parity is odd.
pub fn four_harmonic_integral(a: (i64, i64), b: (i64, i64), c: (i64, i64), d: (i64, i64)) -> f64 {
    let m = c.1 + d.1;
    if a.1 + b.1 != m || (a.0 + b.0 + c.0 + d.0) % 2 == 1 {
        return 0.0;
    }
    let lo = (a.0 - b.0).abs().max((c.0 - d.0).abs());
    let hi = (a.0 + b.0).min(c.0 + d.0);
    (lo..=hi).map(|l| gaunt(a.0, a.1, b.0, b.1, l, m) * gaunt(c.0, c.1, d.0, d.1, l, m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_3j_values() {
        assert!((wigner_3j(1, 1, 0, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((wigner_3j(1, 1, 2, 0, 0, 0) - (2.0f64 / 15.0).sqrt()).abs() < 1e-15);
        assert!((wigner_3j(1, 1, 1, 1, -1, 0) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(wigner_3j(1, 1, 1, 0, 0, 0), 0.0);
        assert_eq!(wigner_3j(1, 1, 3, 0, 0, 0), 0.0);
    }

    #[test]
    fn three_j_orthogonality() {
        for (j1, j2) in [(1i64, 2i64), (2, 2), (3, 1)] {
            for j3 in (j1 - j2).abs()..=(j1 + j2) {
                for m3 in -j3..=j3 {
                    let s: f64 = (-j1..=j1).map(|m1| wigner_3j(j1, j2, j3, m1, -m1 - m3, m3).powi(2)).sum();
                    assert!((s - 1.0 / (2 * j3 + 1) as f64).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn pair_integral_is_orthonormality() {
        // ∫ Y_{lm} Y_{l'm'} = (-1)^m δ_{ll'} δ_{m,-m'}
        let inv = 1.0 / (4.0 * PI).sqrt();
        for l in 0..4i64 {
            for m in -l..=l {
                let g = gaunt(l, m, l, -m, 0, 0);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                assert!((g - sign * inv).abs() < 1e-15, "l={l} m={m}");
                assert_eq!(gaunt(l, m, l + 1, -m, 0, 0), 0.0);
            }
        }
    }

    #[test]
    fn four_harmonics_with_s_bra() {
        let quarter = 1.0 / (4.0 * PI);
        assert!((four_harmonic_integral((0, 0), (0, 0), (0, 0), (0, 0)) - quarter).abs() < 1e-16);
        assert!((four_harmonic_integral((0, 0), (0, 0), (2, 1), (2, -1)) + quarter).abs() < 1e-16);
        assert_eq!(four_harmonic_integral((0, 0), (0, 0), (1, 0), (0, 0)), 0.0);
        assert_eq!(four_harmonic_integral((0, 0), (0, 0), (1, 1), (1, 0)), 0.0);
    }

    #[test]
    fn four_harmonics_p_wave() {
        // ∫ |Y_10|^4 = 9/(20π)
        let v = four_harmonic_integral((1, 0), (1, 0), (1, 0), (1, 0));
        assert!((v - 9.0 / (20.0 * PI)).abs() < 1e-14);
    }
}
