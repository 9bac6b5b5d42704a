//! `rank_candidates` against exhaustive subset enumeration.

use dift_core::oracle::DistributionRow;
use dift_core::types::ScoredCandidate;
use dift_core::{apply_psp, confidence_score, rank_candidates, ScoreStrategy};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Whether `a` should be committed before `b`: higher penalized score, then
/// lower position, then lower token.
fn beats(a: &ScoredCandidate, b: &ScoredCandidate) -> bool {
    if a.penalized != b.penalized {
        return a.penalized > b.penalized;
    }
    if a.position != b.position {
        return a.position < b.position;
    }
    a.token < b.token
}

/// The unique subset of size `count` whose every member beats every
/// non-member, found by trying all subsets.
fn brute_force(cands: &[ScoredCandidate], count: usize) -> Vec<usize> {
    let n = cands.len();
    let mut found = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != count {
            continue;
        }
        let inside = |i: usize| mask & (1 << i) != 0;
        let dominant = (0..n)
            .filter(|&i| inside(i))
            .all(|i| (0..n).filter(|&j| !inside(j)).all(|j| beats(&cands[i], &cands[j])));
        if dominant {
            let mut set: Vec<usize> = (0..n).filter(|&i| inside(i)).map(|i| cands[i].position).collect();
            set.sort_unstable();
            found.push(set);
        }
    }
    assert_eq!(found.len(), 1, "exactly one dominant subset");
    found.pop().unwrap()
}

fn random_candidates(rng: &mut StdRng, n: usize, vocab: u32) -> Vec<ScoredCandidate> {
    let mut positions: Vec<usize> = (0..16).collect();
    positions.shuffle(rng);
    positions
        .into_iter()
        .take(n)
        .map(|position| {
            // Coarse score grid so that ties are common.
            let penalized = rng.gen_range(0..5) as f64 / 4.0;
            ScoredCandidate {
                position,
                rel: position as f64 / 15.0,
                token: rng.gen_range(1..vocab),
                confidence: penalized,
                penalized,
            }
        })
        .collect()
}

#[test]
fn score_strategies_match_subset_enumeration() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let strategies = [ScoreStrategy::LowConfidence, ScoreStrategy::Margin, ScoreStrategy::Entropy];
    for case in 0..3000 {
        let n = rng.gen_range(1..=8);
        let vocab = rng.gen_range(2..=8);
        let cands = random_candidates(&mut rng, n, vocab);
        let count = rng.gen_range(0..=n);
        let strategy = strategies[case % strategies.len()];
        let chosen = rank_candidates(&cands, strategy, count).unwrap();
        assert_eq!(chosen.len(), count);

        // Best-first order.
        let by_pos = |p: usize| cands.iter().find(|c| c.position == p).unwrap();
        assert!(chosen.windows(2).all(|w| beats(by_pos(w[0]), by_pos(w[1]))), "case {case}");

        let mut set = chosen.clone();
        set.sort_unstable();
        assert_eq!(set, brute_force(&cands, count), "case {case}: {cands:?}");
    }
}

#[test]
fn left_to_right_takes_leftmost() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let cands = random_candidates(&mut rng, n, 8);
        let count = rng.gen_range(0..=n);
        let chosen = rank_candidates(&cands, ScoreStrategy::LeftToRight, count).unwrap();
        let mut positions: Vec<usize> = cands.iter().map(|c| c.position).collect();
        positions.sort_unstable();
        assert_eq!(chosen, positions[..count]);
    }
}

#[test]
fn count_beyond_candidates_is_an_error() {
    let mut rng = StdRng::seed_from_u64(1);
    let cands = random_candidates(&mut rng, 3, 4);
    assert!(rank_candidates(&cands, ScoreStrategy::LowConfidence, 4).is_err());
}

/// Rows of length <= 8 over vocabularies <= 8, scored by max probability with
/// a zero-strength penalty, against "sort by max probability, take the top".
#[test]
fn low_confidence_with_zero_gamma_is_top_max_probability() {
    let mut rng = StdRng::seed_from_u64(0x10c);
    for case in 0..3000 {
        let rows = rng.gen_range(1..=8);
        let vocab = rng.gen_range(2..=8);
        let steps = rng.gen_range(1..=8);
        let step = rng.gen_range(1..=steps);
        let mut cands = Vec::new();
        let mut maxima = Vec::new();
        for position in 0..rows {
            // Small integer weights so equal maxima are common.
            let w: Vec<f64> = (0..vocab).map(|_| rng.gen_range(1..4) as f64).collect();
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let row = DistributionRow::new(position, probs.clone()).unwrap();
            let confidence = confidence_score(&row, ScoreStrategy::LowConfidence).unwrap();
            let rel = if rows == 1 { 0.0 } else { position as f64 / (rows - 1) as f64 };
            let penalized = apply_psp(confidence, step, steps, rel, 0.0).unwrap();
            cands.push(ScoredCandidate { position, rel, token: 1, confidence, penalized });
            maxima.push(probs.iter().copied().fold(0.0, f64::max));
        }
        let count = rng.gen_range(0..=rows);
        let mut reference: Vec<usize> = (0..rows).collect();
        reference.sort_by(|&a, &b| maxima[b].partial_cmp(&maxima[a]).unwrap().then(a.cmp(&b)));
        reference.truncate(count);
        let chosen = rank_candidates(&cands, ScoreStrategy::LowConfidence, count).unwrap();
        assert_eq!(chosen, reference, "case {case}");
    }
}
