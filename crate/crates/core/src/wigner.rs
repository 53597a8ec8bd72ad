//! Wigner 3j symbols.
//!
//! Two evaluation routes share one entry point: an explicit Racah sum over
//! log-factorials for small angular momenta, and a two-sided three-term
//! recurrence in the magnetic quantum number for everything else. The
//! recurrence produces a whole family `(j1 j2 j3; m1, -m3-m1, m3)` over all
//! admissible `m1` at once, which is what the quantized basis needs.

use std::fmt;
use std::sync::OnceLock;

/// Integer or half-integer quantum number, stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const fn from_doubled(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn int(v: i64) -> Self {
        HalfInt(2 * v)
    }

    /// Nearest half-integer to `v`.
    pub fn from_f64(v: f64) -> Self {
        HalfInt((2.0 * v).round() as i64)
    }

    pub const fn doubled(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 + o.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 - o.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Above this value of `j1 + j2 + j3` the Racah sum loses too many digits to
/// cancellation and the recurrence is used instead.
const RACAH_MAX_JSUM: i64 = 30;

const LN_FACT_TABLE: usize = 8192;

fn ln_factorial(n: i64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        t.push(0.0);
        let mut acc = 0.0;
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    debug_assert!(n >= 0);
    table[n as usize]
}

fn parity_sign(twice_exponent: i64) -> f64 {
    debug_assert!(twice_exponent % 2 == 0);
    if (twice_exponent / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Selection rules shared by both routes. Returns false when the symbol is
/// identically zero.
fn admissible(j: [HalfInt; 3], m: [HalfInt; 3]) -> bool {
    let [j1, j2, j3] = j.map(HalfInt::doubled);
    let [m1, m2, m3] = m.map(HalfInt::doubled);
    if j1 < 0 || j2 < 0 || j3 < 0 {
        return false;
    }
    if m1 + m2 + m3 != 0 {
        return false;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return false;
    }
    if (j1 - m1) % 2 != 0 || (j2 - m2) % 2 != 0 || (j3 - m3) % 2 != 0 {
        return false;
    }
    if (j1 + j2 + j3) % 2 != 0 {
        return false;
    }
    j3 >= (j1 - j2).abs() && j3 <= j1 + j2
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)`. Zero whenever a selection rule
/// fails.
pub fn wigner3j(j: [HalfInt; 3], m: [HalfInt; 3]) -> f64 {
    if !admissible(j, m) {
        return 0.0;
    }
    let jsum = (j[0].doubled() + j[1].doubled() + j[2].doubled()) / 2;
    if jsum <= RACAH_MAX_JSUM {
        return racah_sum(j, m);
    }
    let fam = wigner3j_family(j[0], j[1], j[2], m[2]).expect("admissible symbol has a family");
    fam.get(m[0])
}

/// Convenience wrapper taking plain floats (rounded to the nearest half).
pub fn wigner3j_f64(l1: f64, l2: f64, l3: f64, m1: f64, m2: f64, m3: f64) -> f64 {
    wigner3j([l1, l2, l3].map(HalfInt::from_f64), [m1, m2, m3].map(HalfInt::from_f64))
}

/// Explicit Racah formula with log-factorials. Exact up to rounding for small
/// arguments; use [`wigner3j`] for general input.
pub fn racah_sum(j: [HalfInt; 3], m: [HalfInt; 3]) -> f64 {
    if !admissible(j, m) {
        return 0.0;
    }
    // Everything below is an integer combination of the doubled values.
    let [j1, j2, j3] = j.map(HalfInt::doubled);
    let [m1, m2, m3] = m.map(HalfInt::doubled);
    let h = |x: i64| {
        debug_assert!(x % 2 == 0);
        x / 2
    };
    let a = h(j1 + j2 - j3);
    let b = h(j1 - j2 + j3);
    let c = h(-j1 + j2 + j3);
    let total = h(j1 + j2 + j3) + 1;
    let ln_delta = ln_factorial(a) + ln_factorial(b) + ln_factorial(c) - ln_factorial(total);
    let ln_pref = 0.5
        * (ln_delta
            + ln_factorial(h(j1 + m1))
            + ln_factorial(h(j1 - m1))
            + ln_factorial(h(j2 + m2))
            + ln_factorial(h(j2 - m2))
            + ln_factorial(h(j3 + m3))
            + ln_factorial(h(j3 - m3)));

    let t1 = h(j3 - j2 + m1);
    let t2 = h(j3 - j1 - m2);
    let t3 = a;
    let t4 = h(j1 - m1);
    let t5 = h(j2 + m2);
    let k_min = 0.max(-t1).max(-t2);
    let k_max = t3.min(t4).min(t5);

    let mut sum = 0.0;
    for k in k_min..=k_max {
        let ln_den = ln_factorial(k)
            + ln_factorial(t1 + k)
            + ln_factorial(t2 + k)
            + ln_factorial(t3 - k)
            + ln_factorial(t4 - k)
            + ln_factorial(t5 - k);
        let term = (ln_pref - ln_den).exp();
        sum += if k % 2 == 0 { term } else { -term };
    }
    parity_sign(j1 - j2 - m3) * sum
}

/// All symbols `(j1 j2 j3; m1, -m3-m1, m3)` for admissible `m1`, ascending.
#[derive(Debug, Clone)]
pub struct ThreeJFamily {
    pub m1_min: HalfInt,
    pub values: Vec<f64>,
}

impl ThreeJFamily {
    pub fn m1_max(&self) -> HalfInt {
        HalfInt(self.m1_min.0 + 2 * (self.values.len() as i64 - 1))
    }

    /// Value at `m1`, zero outside the admissible range.
    pub fn get(&self, m1: HalfInt) -> f64 {
        let off = m1.0 - self.m1_min.0;
        if off < 0 || off % 2 != 0 {
            return 0.0;
        }
        self.values.get((off / 2) as usize).copied().unwrap_or(0.0)
    }
}

const RESCALE_AT: f64 = 1e250;

/// Computes a [`ThreeJFamily`] by the three-term recurrence that follows from
/// the `J^2` eigen-equation at fixed `M = -m3`:
///
/// ```text
/// A(m1) f(m1-1) + [2 m1 m2 - X] f(m1) + B(m1) f(m1+1) = 0,
/// X = j3(j3+1) - j1(j1+1) - j2(j2+1)
/// ```
///
/// The recurrence is run backward from the top of the range down to the
/// first local maximum, and forward from the bottom up to that point, so
/// neither direction is carried through a region where the wanted solution
/// is recessive. The two pieces are matched by least squares on their
/// overlap, normalized by `sum f^2 = 1/(2 j3 + 1)`, and signed by the
/// single-term Racah value at the top of the range.
pub fn wigner3j_family(j1: HalfInt, j2: HalfInt, j3: HalfInt, m3: HalfInt) -> Option<ThreeJFamily> {
    let (tj1, tj2, tj3, tm3) = (j1.0, j2.0, j3.0, m3.0);
    if tm3.abs() > tj3 || (tj3 - tm3) % 2 != 0 || (tj1 + tj2 + tj3) % 2 != 0 {
        return None;
    }
    if tj3 < (tj1 - tj2).abs() || tj3 > tj1 + tj2 {
        return None;
    }
    let tm1_min = (-tj1).max(-tm3 - tj2);
    let tm1_max = tj1.min(-tm3 + tj2);
    if tm1_min > tm1_max || (tj1 - tm1_min) % 2 != 0 {
        return None;
    }
    let len = ((tm1_max - tm1_min) / 2 + 1) as usize;
    let (fj1, fj2, fj3, fm3) = (j1.value(), j2.value(), j3.value(), m3.value());
    let x_const = fj3 * (fj3 + 1.0) - fj1 * (fj1 + 1.0) - fj2 * (fj2 + 1.0);

    let m1_at = |k: usize| tm1_min as f64 / 2.0 + k as f64;
    let diag = |k: usize| {
        let m1 = m1_at(k);
        let m2 = -fm3 - m1;
        x_const - 2.0 * m1 * m2
    };
    // coupling between k and k+1, i.e. B(m1) = A(m1 + 1)
    let coup = |k: usize| {
        let m1 = m1_at(k);
        let m2 = -fm3 - m1;
        ((fj1 - m1) * (fj1 + m1 + 1.0)).max(0.0).sqrt() * ((fj2 + m2) * (fj2 - m2 + 1.0)).max(0.0).sqrt()
    };

    let values = if len == 1 {
        vec![1.0]
    } else {
        // backward sweep from the top
        let mut back = vec![0.0; len];
        back[len - 1] = 1.0;
        let mut k = len - 1;
        let mut peak = 0;
        while k > 0 {
            // B(k-1) f(k-1) ... solve diag(k) f(k) = A(k) f(k-1) + B(k) f(k+1) for f(k-1)
            let up = if k + 1 < len { coup(k) * back[k + 1] } else { 0.0 };
            let a = coup(k - 1);
            back[k - 1] = (diag(k) * back[k] - up) / a;
            if back[k - 1].abs() > RESCALE_AT {
                for v in &mut back[k - 1..] {
                    *v /= RESCALE_AT;
                }
            }
            if back[k - 1].abs() < back[k].abs() {
                peak = k;
                break;
            }
            k -= 1;
        }
        // forward sweep from the bottom up to peak + 1
        let stop = (peak + 1).min(len - 1);
        let mut fwd = vec![0.0; len];
        fwd[0] = 1.0;
        for k in 0..stop {
            let down = if k > 0 { coup(k - 1) * fwd[k - 1] } else { 0.0 };
            fwd[k + 1] = (diag(k) * fwd[k] - down) / coup(k);
            if fwd[k + 1].abs() > RESCALE_AT {
                for v in &mut fwd[..=k + 1] {
                    *v /= RESCALE_AT;
                }
            }
        }
        // match on indices computed by both sweeps around the peak
        let (mut num, mut den) = (0.0, 0.0);
        for k in peak.saturating_sub(1)..=stop {
            num += fwd[k] * back[k];
            den += back[k] * back[k];
        }
        let scale = if den > 0.0 { num / den } else { 0.0 };
        let mut out = vec![0.0; len];
        out[..=peak].copy_from_slice(&fwd[..=peak]);
        for k in peak + 1..len {
            out[k] = scale * back[k];
        }
        out
    };

    let mut values = values;
    let norm = values.iter().map(|v| v * v).sum::<f64>() * (tj3 as f64 + 1.0);
    let top_sign = parity_sign(tj1 - tj2 - tm3);
    let fix = top_sign * values[len - 1].signum() / norm.sqrt();
    for v in &mut values {
        *v *= fix;
    }
    Some(ThreeJFamily { m1_min: HalfInt(tm1_min), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(v: f64) -> HalfInt {
        HalfInt::from_f64(v)
    }

    fn w(l: [f64; 3], m: [f64; 3]) -> f64 {
        wigner3j(l.map(h), m.map(h))
    }

    #[test]
    fn closed_form_j_j_0() {
        // (j j 0; m -m 0) = (-1)^{j-m} / sqrt(2j+1)
        let v = w([1.0, 1.0, 0.0], [1.0, -1.0, 0.0]);
        assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-14, "{v}");
        for tj in 0..12i64 {
            for tm in (-tj..=tj).step_by(2) {
                let j = HalfInt(tj);
                let m = HalfInt(tm);
                let expected = parity_sign(tj - tm) / (tj as f64 + 1.0).sqrt();
                let got = wigner3j([j, j, HalfInt(0)], [m, -m, HalfInt(0)]);
                assert!((got - expected).abs() < 1e-13, "j={j} m={m}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn selection_rules_give_zero() {
        assert_eq!(w([1.0, 1.0, 1.0], [1.0, 1.0, -1.0]), 0.0);
        assert!(w([1.0, 1.0, 1.0], [0.0, 0.0, 0.0]).abs() < 1e-15);
        assert_eq!(w([1.0, 1.0, 3.0], [0.0, 0.0, 0.0]), 0.0);
        assert_eq!(w([1.0, 2.0, 2.0], [2.0, -2.0, 0.0]), 0.0);
    }

    #[test]
    fn known_values() {
        // (1 1 1; 1 -1 0) = 1/sqrt(6), (1 1 2; 1 -1 0) = 1/sqrt(30)
        assert!((w([1.0, 1.0, 1.0], [1.0, -1.0, 0.0]) - 1.0 / 6f64.sqrt()).abs() < 1e-14);
        assert!((w([1.0, 1.0, 2.0], [1.0, -1.0, 0.0]) - 1.0 / 30f64.sqrt()).abs() < 1e-14);
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert!((w([0.5, 0.5, 1.0], [0.5, -0.5, 0.0]) - 1.0 / 6f64.sqrt()).abs() < 1e-14);
    }

    fn all_args(max_twice: i64) -> Vec<([HalfInt; 3], [HalfInt; 3])> {
        let mut out = Vec::new();
        for tj1 in 0..=max_twice {
            for tj2 in 0..=max_twice {
                for tj3 in 0..=max_twice {
                    if (tj1 + tj2 + tj3) % 2 != 0 || tj3 < (tj1 - tj2).abs() || tj3 > tj1 + tj2 {
                        continue;
                    }
                    for tm1 in (-tj1..=tj1).step_by(2) {
                        for tm2 in (-tj2..=tj2).step_by(2) {
                            let tm3 = -tm1 - tm2;
                            if tm3.abs() > tj3 {
                                continue;
                            }
                            out.push((
                                [HalfInt(tj1), HalfInt(tj2), HalfInt(tj3)],
                                [HalfInt(tm1), HalfInt(tm2), HalfInt(tm3)],
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn permutation_and_reflection_symmetries_up_to_six() {
        for (j, m) in all_args(12) {
            let v = racah_sum(j, m);
            let phase = parity_sign(j[0].0 + j[1].0 + j[2].0);
            // even (cyclic) permutation
            let cyc = racah_sum([j[1], j[2], j[0]], [m[1], m[2], m[0]]);
            assert!((v - cyc).abs() < 1e-13);
            // odd permutation
            let swp = racah_sum([j[1], j[0], j[2]], [m[1], m[0], m[2]]);
            assert!((v - phase * swp).abs() < 1e-13);
            // m -> -m
            let neg = racah_sum(j, [-m[0], -m[1], -m[2]]);
            assert!((v - phase * neg).abs() < 1e-13);
        }
    }

    #[test]
    fn recurrence_matches_racah_on_overlap() {
        let mut worst: f64 = 0.0;
        for (j, m) in all_args(20) {
            let fam = wigner3j_family(j[0], j[1], j[2], m[2]).unwrap();
            worst = worst.max((fam.get(m[0]) - racah_sum(j, m)).abs());
        }
        assert!(worst < 1e-12, "worst deviation {worst:e}");
    }

    #[test]
    fn family_orthogonality_large_spin() {
        // sum_{m1} (2 j3 + 1) f_{j3}(m1) f_{j3'}(m1) = delta_{j3 j3'} at fixed m3
        let s = HalfInt(99); // s = 49.5
        let m3 = HalfInt(6);
        let fams: Vec<_> = (3..=99).map(|l| (l, wigner3j_family(s, s, HalfInt::int(l), m3).unwrap())).collect();
        for (la, fa) in &fams {
            for (lb, fb) in &fams {
                let mut dot = 0.0;
                let lo = fa.m1_min.max(fb.m1_min).0;
                let hi = fa.m1_max().min(fb.m1_max()).0;
                let mut t = lo;
                while t <= hi {
                    dot += fa.get(HalfInt(t)) * fb.get(HalfInt(t));
                    t += 2;
                }
                let dot = dot * ((2 * la + 1) as f64 * (2 * lb + 1) as f64).sqrt();
                let expected = if la == lb { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-11, "l={la}, l'={lb}: {dot}");
            }
        }
    }

    proptest! {
        #[test]
        fn scalar_route_agrees_with_family(tj in 0i64..40, tl in 0i64..40, k in 0usize..200) {
            let j1 = HalfInt(tj);
            let j3 = HalfInt(tl);
            // pick j2 from the triangle, with the right parity
            let lo = (tj - tl).abs();
            let hi = tj + tl;
            let choices: Vec<i64> = (lo..=hi).step_by(2).collect();
            let j2 = HalfInt(choices[k % choices.len()]);
            let m3 = HalfInt(-tl + 2 * ((k / 3) as i64 % (tl + 1)));
            if let Some(fam) = wigner3j_family(j1, j2, j3, m3) {
                let mut t = fam.m1_min;
                while t <= fam.m1_max() {
                    let m2 = -m3 - t;
                    let direct = wigner3j([j1, j2, j3], [t, m2, m3]);
                    prop_assert!((direct - fam.get(t)).abs() < 1e-12);
                    t = t + HalfInt(2);
                }
            }
        }
    }
}
