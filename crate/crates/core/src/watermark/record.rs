//! Encrypted watermark records and their on-disk JSON form.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::arnold::{arnold_forward, arnold_inverse, ArnoldKey, BitGrid};
use super::grid_side;
use crate::imaging::FeatureSource;
use crate::relational::{pair_count, PairIndexSet};
use crate::{Error, Result};

pub const RECORD_VERSION: u32 = 1;

/// Everything about a record that is not derived from the pair set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordMeta {
    pub content_id: String,
    pub patch_side: usize,
    pub image_side: usize,
    pub feature_source: FeatureSource,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

/// A scrambled pair-indicator grid plus the metadata needed to check it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatermarkRecord {
    pub version: u32,
    /// Patch count.
    pub p: usize,
    /// Pair count in the watermark.
    pub k: usize,
    /// `C(p, 2)`.
    pub m: usize,
    /// Grid side, `ceil(sqrt(m))`.
    pub n_g: usize,
    pub patch_side: usize,
    pub image_side: usize,
    pub feature_source: String,
    /// Scrambled grid, row-major MSB-first, lowercase hex.
    pub cipher_bits: String,
    pub created: u64,
    pub content_id: String,
}

impl WatermarkRecord {
    /// Structural checks that do not need the key.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::CorruptPayload(m));
        if self.version != RECORD_VERSION {
            return bad(format!("unsupported record version {}", self.version));
        }
        if self.p < 2 || self.m != pair_count(self.p) {
            return bad(format!("M = {} does not match P = {}", self.m, self.p));
        }
        if self.n_g != grid_side(self.p) {
            return bad(format!("grid side {} does not match M = {}", self.n_g, self.m));
        }
        if self.k == 0 || self.k > self.m {
            return bad(format!("K = {} out of range", self.k));
        }
        let want = (self.n_g * self.n_g).div_ceil(8) * 2;
        if self.cipher_bits.len() != want {
            return bad(format!("cipher payload has {} hex chars, expected {want}", self.cipher_bits.len()));
        }
        if self.cipher_bits.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return bad("cipher payload is not lowercase hex".into());
        }
        FeatureSource::parse(&self.feature_source).map_err(|e| Error::CorruptPayload(e.to_string()))?;
        Ok(())
    }

    fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("record serializes").to_string()
    }

    /// Canonical JSON (sorted keys, no whitespace) followed by a trailing
    /// `crc32` field computed over the canonical form of the other fields.
    pub fn to_json(&self) -> String {
        let canonical = self.canonical_json();
        let crc = crc32fast::hash(canonical.as_bytes());
        let body = canonical.strip_suffix('}').expect("object");
        format!("{body},\"crc32\":{crc}}}\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptPayload(format!("record is not valid JSON: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::CorruptPayload("record is not a JSON object".into()))?;
        let stored = obj
            .remove("crc32")
            .and_then(|v| v.as_u64())
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| Error::CorruptPayload("missing or invalid crc32 field".into()))?;
        let computed = crc32fast::hash(value.to_string().as_bytes());
        if stored != computed {
            return Err(Error::CrcMismatch { stored, computed });
        }
        let record: WatermarkRecord =
            serde_json::from_value(value).map_err(|e| Error::CorruptPayload(format!("record fields: {e}")))?;
        record.validate()?;
        Ok(record)
    }
}

fn check_key(key: &ArnoldKey, p: usize) -> Result<()> {
    let side = grid_side(p);
    if key.side() != side {
        return Err(Error::InvalidKey(format!(
            "key grid side {} does not match {side} required for {p} patches",
            key.side()
        )));
    }
    Ok(())
}

/// Builds the indicator grid of `pairs`, scrambles it and packs it into a
/// record. Rank `r` sits at cell `(r mod N, r div N)`.
pub fn encrypt(pairs: &PairIndexSet, key: &ArnoldKey, meta: &RecordMeta) -> Result<WatermarkRecord> {
    let p = pairs.patch_count();
    if p < 2 {
        return Err(Error::InvalidArgument("need at least two patches".into()));
    }
    check_key(key, p)?;
    let side = key.side();
    let mut bits = vec![false; side * side];
    for r in pairs.ranks() {
        bits[r] = true;
    }
    let scrambled = arnold_forward(&BitGrid::new(side, bits)?, key)?;
    Ok(WatermarkRecord {
        version: RECORD_VERSION,
        p,
        k: pairs.len(),
        m: pair_count(p),
        n_g: side,
        patch_side: meta.patch_side,
        image_side: meta.image_side,
        feature_source: meta.feature_source.as_str().to_string(),
        cipher_bits: hex::encode(scrambled.to_bytes()),
        created: meta.created,
        content_id: meta.content_id.clone(),
    })
}

/// Inverse of [`encrypt`]. A recovered one-bit in the padding beyond `M`, or
/// a bit count different from `K`, means the key is wrong.
pub fn decrypt(record: &WatermarkRecord, key: &ArnoldKey) -> Result<PairIndexSet> {
    record.validate()?;
    check_key(key, record.p)?;
    let bytes = hex::decode(&record.cipher_bits).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let grid = arnold_inverse(&BitGrid::from_bytes(record.n_g, &bytes)?, key)?;
    let ranks: Vec<usize> = grid
        .bits()
        .iter()
        .enumerate()
        .filter_map(|(r, b)| b.then_some(r))
        .collect();
    if let Some(r) = ranks.iter().find(|r| **r >= record.m) {
        return Err(Error::WrongKey(format!("one-bit recovered in padding cell {r}")));
    }
    if ranks.len() != record.k {
        return Err(Error::WrongKey(format!("{} one-bits recovered, record holds {}", ranks.len(), record.k)));
    }
    PairIndexSet::from_ranks(record.p, ranks)
}
