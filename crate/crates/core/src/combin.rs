//! Subset and tuple enumeration with a sampling fallback.
//!
//! Sweeps over dropout patterns, survivor sets and collusion tuples are
//! exhaustive when the count fits under a cap, otherwise a fixed number of
//! uniform samples is drawn from a seeded source.

use std::collections::BTreeSet;

use itertools::Itertools;

use crate::ff::FieldRng;

/// Enumeration limits: exhaustive up to `cap` items, else `samples` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCaps {
    pub cap: u128,
    pub samples: usize,
}

impl Default for SweepCaps {
    fn default() -> Self {
        Self { cap: 10_000, samples: 1_000 }
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Uniform `k`-subset of `0..n` (partial Fisher-Yates).
pub fn random_subset(n: usize, k: usize, rng: &mut FieldRng) -> BTreeSet<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.into_iter().take(k).collect()
}

/// All `k`-subsets of `0..n` in lexicographic order, or a sample of them.
pub fn subsets_of_size(n: usize, k: usize, caps: SweepCaps, rng: &mut FieldRng) -> Vec<BTreeSet<usize>> {
    if binomial(n, k) <= caps.cap {
        (0..n).combinations(k).map(|c| c.into_iter().collect()).collect()
    } else {
        (0..caps.samples).map(|_| random_subset(n, k, rng)).collect()
    }
}

/// Size constraint on the subsets drawn for one slot.
#[derive(Debug, Clone, Copy)]
pub enum SlotSize {
    Exactly(usize),
    AtMost(usize),
}

fn slot_sets(n: usize, size: SlotSize) -> Vec<BTreeSet<usize>> {
    let sizes = match size {
        SlotSize::Exactly(k) => k..=k,
        SlotSize::AtMost(k) => 0..=k.min(n),
    };
    sizes
        .flat_map(|k| (0..n).combinations(k).map(|c| c.into_iter().collect::<BTreeSet<_>>()))
        .collect()
}

fn slot_count(n: usize, size: SlotSize) -> u128 {
    match size {
        SlotSize::Exactly(k) => binomial(n, k),
        SlotSize::AtMost(k) => (0..=k.min(n)).map(|i| binomial(n, i)).sum(),
    }
}

fn sample_slot(n: usize, size: SlotSize, rng: &mut FieldRng) -> BTreeSet<usize> {
    match size {
        SlotSize::Exactly(k) => random_subset(n, k, rng),
        SlotSize::AtMost(k) => {
            // weight each size by how many subsets it has, so the draw is
            // uniform over the whole slot
            let total = slot_count(n, size);
            let mut x = (rng.next_u64() as u128) % total;
            for i in 0..=k.min(n) {
                let c = binomial(n, i);
                if x < c {
                    return random_subset(n, i, rng);
                }
                x -= c;
            }
            unreachable!("x < total")
        }
    }
}

/// Cartesian product of per-slot subset families. Exhaustive (in
/// lexicographic order) when the product fits under `caps.cap`, otherwise
/// `caps.samples` independent uniform draws.
pub fn tuples(slots: &[(usize, SlotSize)], caps: SweepCaps, rng: &mut FieldRng) -> Vec<Vec<BTreeSet<usize>>> {
    let total = slots
        .iter()
        .try_fold(1u128, |acc, &(n, s)| acc.checked_mul(slot_count(n, s)))
        .unwrap_or(u128::MAX);
    if slots.is_empty() {
        return vec![Vec::new()];
    }
    if total <= caps.cap {
        slots
            .iter()
            .map(|&(n, s)| slot_sets(n, s))
            .multi_cartesian_product()
            .collect()
    } else {
        (0..caps.samples)
            .map(|_| slots.iter().map(|&(n, s)| sample_slot(n, s, rng)).collect())
            .collect()
    }
}

/// Human-readable one-based rendering of per-cluster user sets, e.g.
/// `[{}, {2,4}]`.
pub fn render_sets(sets: &[BTreeSet<usize>]) -> String {
    let parts: Vec<String> = sets
        .iter()
        .map(|s| format!("{{{}}}", s.iter().map(|v| (v + 1).to_string()).join(",")))
        .collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn exhaustive_tuples_in_order() {
        let mut rng = FieldRng::new(0);
        let t = tuples(&[(2, SlotSize::Exactly(1)), (4, SlotSize::AtMost(1))], SweepCaps::default(), &mut rng);
        assert_eq!(t.len(), 2 * 5);
        assert_eq!(render_sets(&t[0]), "[{1}, {}]");
        assert_eq!(render_sets(&t[1]), "[{1}, {1}]");
        assert_eq!(render_sets(&t[9]), "[{2}, {4}]");
        // a single empty tuple when there are no slots
        assert_eq!(tuples(&[], SweepCaps::default(), &mut rng), vec![Vec::<BTreeSet<usize>>::new()]);
    }

    #[test]
    fn sampling_above_cap() {
        let mut rng = FieldRng::new(3);
        let caps = SweepCaps { cap: 3, samples: 50 };
        let t = tuples(&[(6, SlotSize::Exactly(2))], caps, &mut rng);
        assert_eq!(t.len(), 50);
        assert!(t.iter().all(|x| x[0].len() == 2 && x[0].iter().all(|&v| v < 6)));
        let s = subsets_of_size(10, 5, caps, &mut rng);
        assert_eq!(s.len(), 50);
        let t = tuples(&[(5, SlotSize::AtMost(2))], caps, &mut rng);
        assert!(t.iter().all(|x| x[0].len() <= 2));
    }
}
