//! Exact dyadic rationals `num / 2^level` on the unit interval.

use std::cmp::Ordering;
use std::fmt;

/// Deepest level a coordinate may carry. Comparisons shift into `u128`.
pub const MAX_LEVEL: u32 = 62;

/// A non-negative dyadic rational `numerator / 2^level`.
///
/// Always stored in lowest terms: the numerator is odd, or the value is an
/// integer stored at level 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicCoord {
    numerator: u64,
    level: u32,
}

impl DyadicCoord {
    pub const ZERO: DyadicCoord = DyadicCoord { numerator: 0, level: 0 };
    pub const ONE: DyadicCoord = DyadicCoord { numerator: 1, level: 0 };

    pub fn new(numerator: u64, level: u32) -> Self {
        assert!(level <= MAX_LEVEL, "dyadic level {level} exceeds {MAX_LEVEL}");
        let mut c = DyadicCoord { numerator, level };
        c.normalize();
        c
    }

    fn normalize(&mut self) {
        if self.numerator == 0 {
            self.level = 0;
            return;
        }
        let shift = self.numerator.trailing_zeros().min(self.level);
        self.numerator >>= shift;
        self.level -= shift;
    }

    pub fn numerator(self) -> u64 {
        self.numerator
    }

    pub fn level(self) -> u32 {
        self.level
    }

    /// Numerator when expressed at the (finer or equal) level `level`.
    pub fn numerator_at(self, level: u32) -> u128 {
        debug_assert!(level >= self.level);
        (self.numerator as u128) << (level - self.level)
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / (1u64 << self.level) as f64
    }

    pub fn midpoint(self, other: DyadicCoord) -> DyadicCoord {
        let level = self.level.max(other.level) + 1;
        let sum = self.numerator_at(level - 1) + other.numerator_at(level - 1);
        DyadicCoord::new(sum as u64, level)
    }

    pub fn checked_sub(self, other: DyadicCoord) -> Option<DyadicCoord> {
        let level = self.level.max(other.level);
        let a = self.numerator_at(level);
        let b = other.numerator_at(level);
        (a >= b).then(|| DyadicCoord::new((a - b) as u64, level))
    }

    /// Parses strings like `0.375`, `3/8` or `1`.
    pub fn parse(s: &str) -> Option<DyadicCoord> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().ok()?;
            let d: u64 = d.trim().parse().ok()?;
            if !d.is_power_of_two() {
                return None;
            }
            return Some(DyadicCoord::new(n, d.trailing_zeros()));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        let int: u64 = int.parse().ok()?;
        let k = frac.len() as u32;
        if k == 0 {
            return Some(DyadicCoord::new(int, 0));
        }
        let f: u128 = frac.parse().ok()?;
        let five_k = 5u128.checked_pow(k)?;
        if !f.is_multiple_of(five_k) {
            return None;
        }
        // value = f / 10^k = (f / 5^k) / 2^k
        let num = (f / five_k) + ((int as u128) << k);
        if k > MAX_LEVEL {
            return None;
        }
        Some(DyadicCoord::new(u64::try_from(num).ok()?, k))
    }
}

impl Ord for DyadicCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        let level = self.level.max(other.level);
        self.numerator_at(level).cmp(&other.numerator_at(level))
    }
}

impl PartialOrd for DyadicCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact decimal expansion (every dyadic rational has a finite one).
impl fmt::Display for DyadicCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.numerator >> self.level;
        write!(f, "{int}")?;
        let mask: u128 = (1u128 << self.level) - 1;
        let mut rem = self.numerator as u128 & mask;
        if rem == 0 {
            return Ok(());
        }
        f.write_str(".")?;
        while rem != 0 {
            rem *= 10;
            let digit = rem >> self.level;
            write!(f, "{digit}")?;
            rem &= mask;
        }
        Ok(())
    }
}


impl std::ops::Add for DyadicCoord {
    type Output = DyadicCoord;

    fn add(self, other: DyadicCoord) -> DyadicCoord {
        let level = self.level.max(other.level);
        DyadicCoord::new((self.numerator_at(level) + other.numerator_at(level)) as u64, level)
    }
}

/// The dyadic interval `[index / 2^level, (index + 1) / 2^level]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub const UNIT: DyadicInterval = DyadicInterval { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Self {
        assert!(level <= MAX_LEVEL, "dyadic level {level} exceeds {MAX_LEVEL}");
        assert!(index < (1u64 << level), "interval index outside [0,1]");
        DyadicInterval { level, index }
    }

    pub fn lo(self) -> DyadicCoord {
        DyadicCoord::new(self.index, self.level)
    }

    pub fn hi(self) -> DyadicCoord {
        DyadicCoord::new(self.index + 1, self.level)
    }

    pub fn length(self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    /// The `2^depth` sub-intervals obtained by `depth` bisections, in order.
    pub fn split(self, depth: u32) -> impl Iterator<Item = DyadicInterval> {
        let level = self.level + depth;
        let first = self.index << depth;
        (0..1u64 << depth).map(move |k| DyadicInterval::new(level, first + k))
    }

    /// True if `other` is a (non-strict) sub-interval of `self`.
    pub fn contains(self, other: DyadicInterval) -> bool {
        other.level >= self.level && (other.index >> (other.level - self.level)) == self.index
    }

    /// Dyadic intervals either nest or meet in at most one point.
    pub fn overlaps(self, other: DyadicInterval) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// True if `c` lies strictly between the endpoints.
    pub fn contains_interior(self, c: DyadicCoord) -> bool {
        self.lo() < c && c < self.hi()
    }

    pub fn contains_point(self, c: DyadicCoord) -> bool {
        self.lo() <= c && c <= self.hi()
    }

    /// The interval of the given level containing the real point `s` (clamped to `[0,1)`).
    pub fn containing(level: u32, s: f64) -> DyadicInterval {
        let n = 1u64 << level;
        let k = (s * n as f64).floor();
        let k = if k < 0.0 { 0 } else { (k as u64).min(n - 1) };
        DyadicInterval::new(level, k)
    }

    /// Reference coordinate of `s` inside this interval.
    pub fn to_reference(self, s: f64) -> f64 {
        (s - self.lo().to_f64()) / self.length()
    }

    pub fn from_reference(self, r: f64) -> f64 {
        self.lo().to_f64() + r * self.length()
    }
}

impl fmt::Display for DyadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo(), self.hi())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_to_lowest_terms() {
        let c = DyadicCoord::new(4, 3);
        assert_eq!((c.numerator(), c.level()), (1, 1));
        assert_eq!(DyadicCoord::new(0, 7), DyadicCoord::ZERO);
        assert_eq!(DyadicCoord::new(8, 3), DyadicCoord::ONE);
        assert_eq!(DyadicCoord::new(3, 0).numerator(), 3);
    }

    #[test]
    fn exact_decimal_display() {
        assert_eq!(DyadicCoord::new(3, 3).to_string(), "0.375");
        assert_eq!(DyadicCoord::ONE.to_string(), "1");
        assert_eq!(DyadicCoord::new(1, 10).to_string(), "0.0009765625");
    }

    #[test]
    fn parse_round_trip() {
        for s in ["0", "1", "0.5", "0.375", "0.0009765625"] {
            assert_eq!(DyadicCoord::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(DyadicCoord::parse("3/8"), Some(DyadicCoord::new(3, 3)));
        assert_eq!(DyadicCoord::parse("0.1"), None);
        assert_eq!(DyadicCoord::parse("1/3"), None);
    }

    #[test]
    fn interval_nesting() {
        let a = DyadicInterval::new(1, 0);
        let b = DyadicInterval::new(3, 2);
        assert!(a.contains(b));
        assert!(!b.contains(a));
        assert!(!DyadicInterval::new(1, 1).overlaps(b));
        let kids: Vec<_> = a.split(2).collect();
        assert_eq!(kids.len(), 4);
        assert_eq!(kids[0].lo(), DyadicCoord::ZERO);
        assert_eq!(kids[3].hi(), DyadicCoord::new(1, 1));
    }

    proptest! {
        #[test]
        fn midpoint_is_exact(a in 0u64..1 << 20, la in 0u32..30, b in 0u64..1 << 20, lb in 0u32..30) {
            let x = DyadicCoord::new(a, la);
            let y = DyadicCoord::new(b, lb);
            let m = x.midpoint(y);
            prop_assert_eq!(m + m, x + y);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(lo <= m && m <= hi);
        }

        #[test]
        fn order_agrees_with_f64(a in 0u64..1 << 20, la in 0u32..20, b in 0u64..1 << 20, lb in 0u32..20) {
            let x = DyadicCoord::new(a, la);
            let y = DyadicCoord::new(b, lb);
            prop_assert_eq!(x.cmp(&y), x.to_f64().partial_cmp(&y.to_f64()).unwrap());
        }
    }
}
