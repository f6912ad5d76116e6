use serde::{Deserialize, Serialize};

/// Half-open interval `[lo, hi)` on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if hi > lo {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn overlap_len(&self, other: &Interval) -> f64 {
        self.intersect(other).map_or(0.0, |i| i.len())
    }

    /// Interval spanned by two points in either order.
    pub fn spanning(a: f64, b: f64) -> Interval {
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }

    /// Affine coordinate of `x` in `[0, 1)`.
    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lo) / self.len()
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        self.lo + t * self.len()
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{:?}, {:?})", self.lo, self.hi)
    }
}

/// Total length of the symmetric difference of two finite unions of intervals.
///
/// Inputs need not be sorted or disjoint; overlapping members are merged first.
pub fn symmetric_difference_len(a: &[Interval], b: &[Interval]) -> f64 {
    let a = merge(a);
    let b = merge(b);
    let mut events: Vec<(f64, i32, i32)> = Vec::with_capacity(2 * (a.len() + b.len()));
    for iv in &a {
        events.push((iv.lo, 1, 0));
        events.push((iv.hi, -1, 0));
    }
    for iv in &b {
        events.push((iv.lo, 0, 1));
        events.push((iv.hi, 0, -1));
    }
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut in_a, mut in_b) = (0i32, 0i32);
    let mut last = f64::NEG_INFINITY;
    let mut total = 0.0;
    for (x, da, db) in events {
        if (in_a > 0) != (in_b > 0) {
            total += x - last;
        }
        in_a += da;
        in_b += db;
        last = x;
    }
    total
}

/// Sorted, pairwise disjoint union of the given intervals.
pub fn merge(items: &[Interval]) -> Vec<Interval> {
    let mut v: Vec<Interval> = items.iter().copied().filter(|i| !i.is_empty()).collect();
    v.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => out.push(iv),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_diff_of_disjoint_sets_adds_lengths() {
        let a = [Interval::new(0.0, 0.25)];
        let b = [Interval::new(0.5, 0.75)];
        assert_eq!(symmetric_difference_len(&a, &b), 0.5);
    }

    #[test]
    fn sym_diff_of_nested_sets() {
        let a = [Interval::new(0.0, 0.5)];
        let b = [Interval::new(0.0, 0.25), Interval::new(0.25, 0.375)];
        assert_eq!(symmetric_difference_len(&a, &b), 0.125);
        assert_eq!(symmetric_difference_len(&a, &a), 0.0);
    }

    #[test]
    fn merge_joins_touching_pieces() {
        let m = merge(&[Interval::new(0.5, 1.0), Interval::new(0.0, 0.5)]);
        assert_eq!(m, vec![Interval::new(0.0, 1.0)]);
    }
}
