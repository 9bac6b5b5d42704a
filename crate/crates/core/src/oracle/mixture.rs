use std::collections::BTreeSet;

use super::{check_positions, ConditionMode, LogitOracle, LogitRow, OracleError, OracleMetadata, MASK_LOGIT};
use crate::types::TokenSequence;

/// Seeded pseudo-random oracle with an explicit visual-dependence map.
///
/// Each row is a sum of three hash-derived terms: a fixed per-position base,
/// a term that depends on the committed context (so predictions move as the
/// decode progresses), and, in [`ConditionMode::Full`] only, a shift applied
/// at the positions flagged visual-dependent. Rows for unflagged positions
/// are identical across modes.
#[derive(Debug, Clone)]
pub struct MixtureOracle {
    meta: OracleMetadata,
    seed: u64,
    visual: BTreeSet<usize>,
    base_scale: f64,
    context_weight: f64,
    visual_strength: f64,
}

const SALT_BASE: u64 = 0x6261_7365;
const SALT_CONTEXT: u64 = 0x6374_7874;
const SALT_VISUAL: u64 = 0x7669_7375;

impl MixtureOracle {
    pub fn new(meta: OracleMetadata, seed: u64) -> Result<Self, OracleError> {
        meta.validate()?;
        if meta.vocab_size < 2 {
            return Err(OracleError::InvalidConfig(
                "mixture oracle needs at least one non-mask token".into(),
            ));
        }
        Ok(Self {
            meta,
            seed,
            visual: BTreeSet::new(),
            base_scale: 4.0,
            context_weight: 1.0,
            visual_strength: 3.0,
        })
    }

    pub fn with_visual_positions(mut self, positions: impl IntoIterator<Item = usize>) -> Self {
        self.visual = positions.into_iter().collect();
        self
    }

    pub fn with_scales(mut self, base_scale: f64, context_weight: f64, visual_strength: f64) -> Self {
        self.base_scale = base_scale;
        self.context_weight = context_weight;
        self.visual_strength = visual_strength;
        self
    }

    pub fn is_visual(&self, position: usize) -> bool {
        self.visual.contains(&position)
    }

    fn row(&self, context: u64, position: usize, mode: ConditionMode) -> LogitRow {
        let visual = mode == ConditionMode::Full && self.is_visual(position);
        let pos = position as u64;
        let logits = (0..self.meta.vocab_size as u64)
            .map(|v| {
                if v == self.meta.mask_token_id as u64 {
                    return MASK_LOGIT;
                }
                let mut l = self.base_scale * unit(mix(&[self.seed, SALT_BASE, pos, v]))
                    + self.context_weight * unit(mix(&[self.seed, SALT_CONTEXT, context, pos, v]));
                if visual {
                    l += self.visual_strength * unit(mix(&[self.seed, SALT_VISUAL, pos, v]));
                }
                l
            })
            .collect();
        LogitRow::dense(position, logits)
    }
}

impl LogitOracle for MixtureOracle {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        Ok(self.meta.clone())
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        check_positions(seq, positions)?;
        let context = seq
            .tokens()
            .iter()
            .zip(seq.mask_flags())
            .enumerate()
            .filter(|(_, (_, &m))| !m)
            .fold(self.seed, |h, (j, (&t, _))| mix(&[h, j as u64, t as u64]));
        Ok(positions.iter().map(|&j| self.row(context, j, mode)).collect())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |h, &w| splitmix64(h ^ w))
}

/// Map a hash to [-1, 1).
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> MixtureOracle {
        MixtureOracle::new(OracleMetadata::new(32, 0).unwrap(), 7)
            .unwrap()
            .with_visual_positions([1, 4])
    }

    #[test]
    fn modes_differ_only_on_visual_positions() {
        let o = oracle();
        let seq = TokenSequence::fully_masked(6, 0).unwrap();
        let all: Vec<usize> = (0..6).collect();
        let full = o.query(&seq, &all, ConditionMode::Full).unwrap();
        let novis = o.query(&seq, &all, ConditionMode::NoVisual).unwrap();
        for (j, (a, b)) in full.iter().zip(&novis).enumerate() {
            assert_eq!(a != b, o.is_visual(j), "position {j}");
        }
    }

    #[test]
    fn deterministic_and_context_dependent() {
        let o = oracle();
        let mut seq = TokenSequence::fully_masked(4, 0).unwrap();
        let a = o.query(&seq, &[2], ConditionMode::Full).unwrap();
        assert_eq!(a, o.query(&seq, &[2], ConditionMode::Full).unwrap());
        seq.commit(0, 5).unwrap();
        let b = o.query(&seq, &[2], ConditionMode::Full).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn unit_range() {
        for i in 0..1000u64 {
            let u = unit(splitmix64(i));
            assert!((-1.0..1.0).contains(&u));
        }
    }
}
