//! Order-independent floating point summation.
//!
//! [`ExactSum`] keeps the running total as a list of non-overlapping
//! partials (Shewchuk's expansion), so the represented sum is exact. The
//! reported value is that exact sum rounded once to nearest-even. Any two
//! accumulators fed the same multiset of finite values therefore report
//! bit-identical totals, whatever the insertion order or merge tree.

use crate::model::Resources;

#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        ExactSum::default()
    }

    /// Adds a finite value.
    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite());
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.partials.iter().all(|&p| p == 0.0)
    }

    /// The exact sum, correctly rounded.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl PartialEq for ExactSum {
    fn eq(&self, other: &Self) -> bool {
        self.value().to_bits() == other.value().to_bits()
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Exact accumulator for a [`Resources`] pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResourceSum {
    pub cpus: ExactSum,
    pub memory: ExactSum,
}

impl ResourceSum {
    pub fn add(&mut self, r: Resources) {
        if r.cpus != 0.0 {
            self.cpus.add(r.cpus);
        }
        if r.memory != 0.0 {
            self.memory.add(r.memory);
        }
    }

    pub fn merge(&mut self, other: &ResourceSum) {
        self.cpus.merge(&other.cpus);
        self.memory.merge(&other.memory);
    }

    pub fn value(&self) -> Resources {
        Resources::new(self.cpus.value(), self.memory.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation() {
        let s: ExactSum = [1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        let s: ExactSum = [0.1; 10].into_iter().collect();
        assert_eq!(s.value(), 1.0);
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    #[test]
    fn half_way_rounding() {
        // 1 + 2^-53 + 2^-106 must round up to 1 + 2^-52.
        let s: ExactSum = [1.0, 2f64.powi(-53), 2f64.powi(-106)].into_iter().collect();
        assert_eq!(s.value(), 1.0 + 2f64.powi(-52));
    }

    proptest! {
        #[test]
        fn order_and_grouping_invariant(
            values in prop::collection::vec(-1e6f64..1e6, 0..200),
            split in 0usize..200,
            seed in any::<u64>(),
        ) {
            let whole: ExactSum = values.iter().copied().collect();

            let mut shuffled = values.clone();
            // Deterministic Fisher-Yates from the seed.
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let split = split.min(shuffled.len());
            let mut left: ExactSum = shuffled[..split].iter().copied().collect();
            let right: ExactSum = shuffled[split..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.value().to_bits(), whole.value().to_bits());
        }

        #[test]
        fn matches_integer_reference(values in prop::collection::vec(-1_000_000i64..1_000_000, 0..100)) {
            // Dyadic inputs: the exact sum is representable, so the result
            // must equal the integer sum scaled back.
            let scale = 2f64.powi(-20);
            let s: ExactSum = values.iter().map(|&v| v as f64 * scale).collect();
            let exact: i64 = values.iter().sum();
            prop_assert_eq!(s.value(), exact as f64 * scale);
        }
    }
}
