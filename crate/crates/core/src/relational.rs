//! Pairwise patch geometry: distance matrices, stability scores under an
//! edit, and top-K pair selection.
//!
//! Pairs are unordered and stored canonically as `(i, j)` with `i < j`. The
//! lexicographic rank of a canonical pair is its position in every per-pair
//! vector in this crate (scores, probabilities, indicator bitmaps).

use std::cmp::Ordering;

use crate::imaging::PatchFeatureMap;
use crate::{Error, Result};

/// `C(p, 2)`.
#[inline]
pub fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Lexicographic rank of the canonical pair `(i, j)` among all pairs of `p`
/// patches.
pub fn pair_rank(i: usize, j: usize, p: usize) -> Result<usize> {
    if i >= j || j >= p {
        return Err(Error::InvalidArgument(format!(
            "pair ({i}, {j}) is not canonical for {p} patches"
        )));
    }
    Ok(rank_unchecked(i, j, p))
}

#[inline]
pub(crate) fn rank_unchecked(i: usize, j: usize, p: usize) -> usize {
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_rank`].
pub fn pair_unrank(rank: usize, p: usize) -> Result<(usize, usize)> {
    if rank >= pair_count(p) {
        return Err(Error::InvalidArgument(format!("rank {rank} out of range for {p} patches")));
    }
    let mut i = 0;
    let mut start = 0;
    loop {
        let row = p - 1 - i;
        if rank < start + row {
            return Ok((i, i + 1 + rank - start));
        }
        start += row;
        i += 1;
    }
}

/// All canonical pairs in rank order.
pub fn canonical_pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
}

/// A set of canonical pairs over `p` patches, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairIndexSet {
    p: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndexSet {
    pub fn new(p: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        for &(i, j) in &pairs {
            pair_rank(i, j, p)?;
        }
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate pair in set".into()));
        }
        Ok(Self { p, pairs })
    }

    pub fn from_ranks(p: usize, ranks: impl IntoIterator<Item = usize>) -> Result<Self> {
        let pairs = ranks
            .into_iter()
            .map(|r| pair_unrank(r, p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p, pairs)
    }

    pub fn empty(p: usize) -> Self {
        Self { p, pairs: Vec::new() }
    }

    /// Every pair over `p` patches.
    pub fn full(p: usize) -> Self {
        Self {
            p,
            pairs: canonical_pairs(p).collect(),
        }
    }

    pub fn patch_count(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.binary_search(&key).is_ok()
    }

    /// Ranks in ascending order.
    pub fn ranks(&self) -> Vec<usize> {
        self.pairs.iter().map(|&(i, j)| rank_unchecked(i, j, self.p)).collect()
    }

    /// Number of shared pairs (both sets are sorted, so this is a merge).
    pub fn intersection_count(&self, other: &PairIndexSet) -> usize {
        let (mut a, mut b) = (self.pairs.iter().peekable(), other.pairs.iter().peekable());
        let mut n = 0;
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                Ordering::Less => {
                    a.next();
                }
                Ordering::Greater => {
                    b.next();
                }
                Ordering::Equal => {
                    n += 1;
                    a.next();
                    b.next();
                }
            }
        }
        n
    }
}

/// Symmetric `P × P` matrix of pairwise feature distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    p: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a row-major `p × p` matrix.
    pub fn from_values(p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != p * p {
            return Err(Error::DimensionMismatch(format!(
                "{p}x{p} matrix needs {} values, got {}",
                p * p,
                values.len()
            )));
        }
        for i in 0..p {
            if values[i * p + i] != 0.0 {
                return Err(Error::InvalidArgument("distance matrix diagonal must be zero".into()));
            }
            for j in i + 1..p {
                let v = values[i * p + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!("invalid distance {v} at ({i}, {j})")));
                }
                if v != values[j * p + i] {
                    return Err(Error::InvalidArgument("distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { p, values })
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Upper-triangle entries in canonical pair order.
    pub fn upper(&self) -> Vec<f64> {
        canonical_pairs(self.p).map(|(i, j)| self.get(i, j)).collect()
    }
}

/// Euclidean distance between every pair of patch features.
pub fn pairwise_distances(fm: &PatchFeatureMap) -> DistanceMatrix {
    let p = fm.len();
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        let fi = fm.feature(i);
        for j in i + 1..p {
            let d = euclidean(fi, fm.feature(j));
            values[i * p + j] = d;
            values[j * p + i] = d;
        }
    }
    DistanceMatrix { p, values }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-pair stability `s = exp(-|d - d̂|)`, indexed by pair rank.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityScores {
    p: usize,
    scores: Vec<f64>,
}

impl StabilityScores {
    pub fn from_scores(p: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != pair_count(p) {
            return Err(Error::DimensionMismatch(format!(
                "{p} patches have {} pairs, got {} scores",
                pair_count(p),
                scores.len()
            )));
        }
        if scores.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::InvalidArgument("stability scores must lie in (0, 1]".into()));
        }
        Ok(Self { p, scores })
    }

    pub fn patch_count(&self) -> usize {
        self.p
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

pub fn stability_scores(before: &DistanceMatrix, after: &DistanceMatrix) -> Result<StabilityScores> {
    if before.p != after.p {
        return Err(Error::DimensionMismatch(format!(
            "distance matrices over {} and {} patches",
            before.p, after.p
        )));
    }
    let scores = canonical_pairs(before.p)
        .map(|(i, j)| (-(before.get(i, j) - after.get(i, j)).abs()).exp())
        .collect();
    Ok(StabilityScores { p: before.p, scores })
}

/// Ranks of the `k` largest values; ties go to the lower rank. The result is
/// in ascending rank order.
pub(crate) fn top_k_ranks(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {k} out of range 1..={}",
            values.len()
        )));
    }
    let cmp = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// The `k` most stable pairs; ties broken by ascending pair rank.
pub fn top_k_pairs(scores: &StabilityScores, k: usize) -> Result<PairIndexSet> {
    let ranks = top_k_ranks(&scores.scores, k)?;
    PairIndexSet::from_ranks(scores.p, ranks)
}

/// Ground-truth stable pairs of `original` against its edited counterpart.
pub fn make_ground_truth(original: &PatchFeatureMap, edited: &PatchFeatureMap, k: usize) -> Result<PairIndexSet> {
    if original.len() != edited.len() || original.dim() != edited.dim() {
        return Err(Error::DimensionMismatch(format!(
            "original has {} patches of dimension {}, edited has {} of dimension {}",
            original.len(),
            original.dim(),
            edited.len(),
            edited.dim()
        )));
    }
    let scores = stability_scores(&pairwise_distances(original), &pairwise_distances(edited))?;
    top_k_pairs(&scores, k)
}
