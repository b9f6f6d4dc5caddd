use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::FlatParams;

/// Bit-per-parameter mask. A set bit means the parameter is kept.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PruneMask {
    len: usize,
    words: Vec<u64>,
    ones: usize,
}

impl PruneMask {
    pub fn ones(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64)];
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        PruneMask {
            len,
            words,
            ones: len,
        }
    }

    pub fn zeros(len: usize) -> Self {
        PruneMask {
            len,
            words: vec![0; len.div_ceil(64)],
            ones: 0,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut m = PruneMask::zeros(bits.len());
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            m.set(i);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(
            i < self.len,
            "bit {i} out of range for mask of {}",
            self.len
        );
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        if *w & bit == 0 {
            *w |= bit;
            self.ones += 1;
        }
    }

    pub fn clear(&mut self, i: usize) {
        assert!(
            i < self.len,
            "bit {i} out of range for mask of {}",
            self.len
        );
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        if *w & bit != 0 {
            *w &= !bit;
            self.ones -= 1;
        }
    }

    /// Number of kept parameters.
    pub fn count_ones(&self) -> usize {
        self.ones
    }

    /// Number of pruned parameters.
    pub fn count_zeros(&self) -> usize {
        self.len - self.ones
    }

    pub fn sparsity(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.count_zeros() as f64 / self.len as f64
        }
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// True when every kept bit of `self` is also kept in `other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.len == other.len
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    /// Packed bytes, parameter 0 in the least-significant bit of byte 0.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Inverse of [`to_packed_bytes`](Self::to_packed_bytes). Padding bits past `len` are ignored.
    pub fn from_packed_bytes(len: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::DimensionMismatch {
                expected: len.div_ceil(8),
                actual: bytes.len(),
                context: "packed mask bytes",
            });
        }
        let mut words: Vec<u64> = bytes
            .chunks(8)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(buf)
            })
            .collect();
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        let ones = words.iter().map(|w| w.count_ones() as usize).sum();
        Ok(PruneMask { len, words, ones })
    }
}

/// Number of parameters pruned at sparsity `s`: `floor(P * s)`.
///
/// Products that land within float representation error of an integer are snapped to it,
/// so `s = k / P` prunes exactly `k`.
pub fn prune_count(total: usize, sparsity: f64) -> usize {
    let x = total as f64 * sparsity;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-12 * r.max(1.0) {
        r
    } else {
        x.floor()
    };
    (n.max(0.0) as usize).min(total)
}

/// Kept parameters at sparsity `s`: `P - floor(P * s)`.
pub fn kept_count(total: usize, sparsity: f64) -> usize {
    total - prune_count(total, sparsity)
}

/// Global magnitude pruning to `sparsity`, never resurrecting anything `prev` pruned.
pub fn magnitude_mask(params: &[f32], sparsity: f64, prev: &PruneMask) -> Result<PruneMask> {
    magnitude_mask_with(params, sparsity, prev, None)
}

/// Which parameters compete with each other in the magnitude ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    /// One ranking over the whole flat vector.
    #[default]
    Global,
    /// Every parameterized layer is ranked on its own and pruned to the target sparsity.
    PerLayer,
}

fn check_lens(params: &[f32], prev: &PruneMask, protected: Option<&PruneMask>) -> Result<()> {
    if prev.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: prev.len(),
            context: "previous mask",
        });
    }
    if let Some(p) = protected {
        if p.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: p.len(),
                context: "protected set",
            });
        }
    }
    Ok(())
}

/// Clears the `need` smallest-magnitude entries of `candidates` (ties broken by index).
fn clear_smallest(
    params: &[f32],
    mut candidates: Vec<usize>,
    need: usize,
    mask: &mut PruneMask,
) -> Result<()> {
    if candidates.len() < need {
        return Err(Error::InsufficientEligible {
            needed: need,
            available: candidates.len(),
        });
    }
    if need == 0 {
        return Ok(());
    }
    let by_magnitude = |a: &usize, b: &usize| -> Ordering {
        params[*a].abs().total_cmp(&params[*b].abs()).then(a.cmp(b))
    };
    if need < candidates.len() {
        candidates.select_nth_unstable_by(need, by_magnitude);
    }
    for &i in &candidates[..need] {
        mask.clear(i);
    }
    Ok(())
}

/// As [`magnitude_mask`], but parameters set in `protected` are never pruned.
pub fn magnitude_mask_with(
    params: &[f32],
    sparsity: f64,
    prev: &PruneMask,
    protected: Option<&PruneMask>,
) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidSparsity(sparsity));
    }
    check_lens(params, prev, protected)?;
    let total = params.len();
    let target = prune_count(total, sparsity);
    let already = prev.count_zeros();
    if target < already {
        return Err(Error::Resurrection {
            requested: sparsity,
            already,
            total,
        });
    }
    let candidates: Vec<usize> = prev
        .iter_ones()
        .filter(|&i| protected.is_none_or(|p| !p.get(i)))
        .collect();
    let mut mask = prev.clone();
    clear_smallest(params, candidates, target - already, &mut mask)?;
    Ok(mask)
}

/// Per-layer magnitude pruning: inside each range, `floor(n * sparsity)` of its `n`
/// unprotected entries end up pruned. Entries outside every range are never pruned, and
/// nothing `prev` pruned is resurrected.
///
/// Each layer is floored on its own, so the overall sparsity can fall short of the target
/// by less than one parameter per layer.
pub fn layerwise_magnitude_mask(
    params: &[f32],
    sparsity: f64,
    prev: &PruneMask,
    layers: &[Range<usize>],
    protected: Option<&PruneMask>,
) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidSparsity(sparsity));
    }
    check_lens(params, prev, protected)?;
    let mut seen = PruneMask::zeros(params.len());
    for r in layers {
        if r.start > r.end || r.end > params.len() {
            return Err(Error::InvalidConfig(format!(
                "layer range {r:?} outside {} parameters",
                params.len()
            )));
        }
        for i in r.clone() {
            if seen.get(i) {
                return Err(Error::InvalidConfig(format!(
                    "layer ranges overlap at parameter {i}"
                )));
            }
            seen.set(i);
        }
    }
    let mut mask = prev.clone();
    for r in layers {
        let eligible: Vec<usize> = r
            .clone()
            .filter(|&i| protected.is_none_or(|p| !p.get(i)))
            .collect();
        let target = prune_count(eligible.len(), sparsity);
        let already = eligible.iter().filter(|&&i| !prev.get(i)).count();
        if target < already {
            return Err(Error::Resurrection {
                requested: sparsity,
                already,
                total: eligible.len(),
            });
        }
        let candidates = eligible.into_iter().filter(|&i| prev.get(i)).collect();
        clear_smallest(params, candidates, target - already, &mut mask)?;
    }
    Ok(mask)
}

/// Elementwise product with the mask; pruned coordinates become exactly `0.0`.
pub fn apply_mask(params: &[f32], mask: &PruneMask) -> Result<FlatParams> {
    let mut out = params.to_vec();
    apply_mask_in_place(&mut out, mask)?;
    Ok(FlatParams(out))
}

pub fn apply_mask_in_place(params: &mut [f32], mask: &PruneMask) -> Result<()> {
    if mask.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: mask.len(),
            context: "mask",
        });
    }
    for (i, v) in params.iter_mut().enumerate() {
        if !mask.get(i) {
            *v = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bit_ops_track_count() {
        let mut m = PruneMask::ones(70);
        assert_eq!(m.count_ones(), 70);
        m.clear(3);
        m.clear(3);
        m.clear(69);
        assert_eq!(m.count_ones(), 68);
        assert!(!m.get(69));
        m.set(3);
        assert_eq!(m.count_ones(), 69);
        assert_eq!(m.iter_ones().count(), 69);
    }

    #[test]
    fn packed_bit_order() {
        let m = PruneMask::from_bools(&[
            true, false, true, false, false, false, false, false, false, true,
        ]);
        assert_eq!(m.to_packed_bytes(), vec![0b0000_0101, 0b0000_0010]);
        let back = PruneMask::from_packed_bytes(10, &m.to_packed_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn table_counts() {
        let p = 2_950_401;
        assert_eq!(kept_count(p, 0.85), 442_561);
        assert_eq!(kept_count(p, 0.90), 295_041);
        assert_eq!(kept_count(p, 0.95), 147_521);
        assert_eq!(kept_count(p, 0.99), 29_505);
    }

    #[test]
    fn prunes_two_smallest() {
        let w = [0.5, -0.1, 0.3, -0.8];
        let m = magnitude_mask(&w, 0.5, &PruneMask::ones(4)).unwrap();
        assert_eq!(m.to_bools(), vec![true, false, false, true]);
    }

    #[test]
    fn zero_sparsity_is_identity() {
        let w = [0.5, -0.1, 0.3];
        assert_eq!(
            magnitude_mask(&w, 0.0, &PruneMask::ones(3)).unwrap(),
            PruneMask::ones(3)
        );
    }

    #[test]
    fn ties_break_by_index() {
        let w = [1.0, -1.0, 1.0, 1.0];
        let m = magnitude_mask(&w, 0.5, &PruneMask::ones(4)).unwrap();
        assert_eq!(m.to_bools(), vec![false, false, true, true]);
    }

    #[test]
    fn refuses_to_resurrect() {
        let prev = PruneMask::from_bools(&[false, false, true, true]);
        let err = magnitude_mask(&[0.0, 0.0, 1.0, 2.0], 0.25, &prev).unwrap_err();
        assert!(matches!(err, Error::Resurrection { .. }));
    }

    #[test]
    fn keeps_previously_pruned_even_if_large() {
        // index 0 is large but already pruned; the next prune takes the smallest survivor
        let prev = PruneMask::from_bools(&[false, true, true, true]);
        let m = magnitude_mask(&[9.0, 0.2, 0.1, 5.0], 0.5, &prev).unwrap();
        assert_eq!(m.to_bools(), vec![false, true, false, true]);
    }

    #[test]
    fn protected_parameters_survive() {
        let protected = PruneMask::from_bools(&[true, false, false, false]);
        let m = magnitude_mask_with(
            &[0.0, 0.2, 0.1, 5.0],
            0.5,
            &PruneMask::ones(4),
            Some(&protected),
        )
        .unwrap();
        assert_eq!(m.to_bools(), vec![true, false, false, true]);
        let all = PruneMask::ones(4);
        assert!(matches!(
            magnitude_mask_with(&[1.0; 4], 0.5, &PruneMask::ones(4), Some(&all)),
            Err(Error::InsufficientEligible { .. })
        ));
    }

    #[test]
    fn invalid_sparsity_and_lengths() {
        assert!(magnitude_mask(&[1.0], 1.5, &PruneMask::ones(1)).is_err());
        assert!(magnitude_mask(&[1.0, 2.0], 0.5, &PruneMask::ones(1)).is_err());
    }

    #[test]
    fn one_kept_parameter() {
        for p in 1..200usize {
            let s = (p - 1) as f64 / p as f64;
            assert_eq!(kept_count(p, s), 1, "P = {p}");
        }
    }

    #[test]
    fn apply_examples() {
        let m = PruneMask::from_bools(&[true, false]);
        let out = apply_mask(&[1.5, -2.0], &m).unwrap();
        assert_eq!(out.0, vec![1.5, 0.0]);
        assert_eq!(apply_mask(&out, &m).unwrap(), out);
        assert_eq!(
            apply_mask(&[1.5, -2.0], &PruneMask::ones(2)).unwrap().0,
            vec![1.5, -2.0]
        );
        assert!(apply_mask(&[1.0], &m).is_err());
    }

    #[test]
    fn layerwise_ranks_each_layer_alone() {
        // global ranking would drop the whole second layer
        let w = [4.0, -3.0, 2.0, 1.0, 0.4, -0.3, 0.2, 0.1, 9.0];
        let layers = [0..4, 4..8];
        let m = layerwise_magnitude_mask(&w, 0.5, &PruneMask::ones(9), &layers, None).unwrap();
        assert_eq!(
            m.to_bools(),
            vec![true, true, false, false, true, true, false, false, true]
        );
        let g = magnitude_mask(&w[..8], 0.5, &PruneMask::ones(8)).unwrap();
        assert_eq!(g.to_bools()[4..], [false; 4]);
    }

    #[test]
    fn layerwise_protection_and_errors() {
        let w = [0.1, 0.2, 0.3, 0.4, 5.0, 6.0];
        let protected = PruneMask::from_bools(&[true, false, false, false, false, false]);
        let m = layerwise_magnitude_mask(
            &w,
            0.5,
            &PruneMask::ones(6),
            &[0..4, 4..6],
            Some(&protected),
        )
        .unwrap();
        // 3 eligible in the first layer -> 1 pruned; 2 in the second -> 1 pruned
        assert_eq!(m.to_bools(), vec![true, false, true, true, false, true]);
        let prev = m.clone();
        assert!(matches!(
            layerwise_magnitude_mask(&w, 0.2, &prev, &[0..4, 4..6], Some(&protected)),
            Err(Error::Resurrection { .. })
        ));
        assert!(
            layerwise_magnitude_mask(&w, 0.5, &PruneMask::ones(6), &[0..4, 3..6], None).is_err()
        );
        assert!(layerwise_magnitude_mask(
            &w,
            0.5,
            &PruneMask::ones(6),
            std::slice::from_ref(&(0..7)),
            None
        )
        .is_err());
        assert!(layerwise_magnitude_mask(
            &w,
            1.5,
            &PruneMask::ones(6),
            std::slice::from_ref(&(0..6)),
            None
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn nested_exact_and_magnitude_ordered(
            w in proptest::collection::vec(-10.0f32..10.0, 1..300),
            mut levels in proptest::collection::vec(0.0f64..=1.0, 1..6),
        ) {
            levels.sort_by(f64::total_cmp);
            let p = w.len();
            let mut prev = PruneMask::ones(p);
            for &s in &levels {
                let m = magnitude_mask(&w, s, &prev).unwrap();
                prop_assert_eq!(m.count_ones(), p - prune_count(p, s));
                prop_assert!(m.is_subset_of(&prev));
                // newly cleared indices are no larger than any survivor
                let kept_min = m.iter_ones().map(|i| w[i].abs()).fold(f32::INFINITY, f32::min);
                for (i, v) in w.iter().enumerate() {
                    if prev.get(i) && !m.get(i) {
                        prop_assert!(v.abs() <= kept_min);
                    }
                }
                prev = m;
            }
        }

        #[test]
        fn layerwise_nested_and_exact_per_layer(
            w in proptest::collection::vec(-10.0f32..10.0, 2..300),
            cuts in proptest::collection::vec(0.0f64..1.0, 1..5),
            mut levels in proptest::collection::vec(0.0f64..=1.0, 1..6),
        ) {
            levels.sort_by(f64::total_cmp);
            let p = w.len();
            // the last entry stays outside every layer
            let mut bounds: Vec<usize> = cuts.iter().map(|c| (c * (p - 1) as f64) as usize).collect();
            bounds.push(0);
            bounds.push(p - 1);
            bounds.sort_unstable();
            bounds.dedup();
            let layers: Vec<Range<usize>> = bounds.windows(2).map(|b| b[0]..b[1]).collect();
            let mut prev = PruneMask::ones(p);
            for &s in &levels {
                let m = layerwise_magnitude_mask(&w, s, &prev, &layers, None).unwrap();
                prop_assert!(m.is_subset_of(&prev));
                prop_assert!(m.get(p - 1));
                for r in &layers {
                    let kept = r.clone().filter(|&i| m.get(i)).count();
                    prop_assert_eq!(kept, r.len() - prune_count(r.len(), s));
                }
                prev = m;
            }
        }

        #[test]
        fn packed_roundtrip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let m = PruneMask::from_bools(&bits);
            let back = PruneMask::from_packed_bytes(bits.len(), &m.to_packed_bytes()).unwrap();
            prop_assert_eq!(back.to_bools(), bits);
        }
    }
}
