//! Watermark storage and verification.
//!
//! A watermark is a [`PairIndexSet`] of `K` pairs. For storage it becomes an
//! indicator vector over all `M = C(P, 2)` pair ranks, zero-padded to an
//! `N × N` grid with `N = ceil(sqrt(M))`, scrambled by a keyed Arnold map and
//! hex-packed into a [`WatermarkRecord`]. Verification decrypts the record
//! and compares the overlap count against a calibrated threshold.

mod arnold;
mod calibrate;
mod record;
mod registry;

pub use arnold::{arnold_forward, arnold_inverse, ArnoldKey, BitGrid, DEFAULT_ITERATIONS};
pub use calibrate::{calibrate, tail_probabilities, CalibrationMode, CalibrationResult};
pub use record::{decrypt, encrypt, RecordMeta, WatermarkRecord, RECORD_VERSION};
pub use registry::{record_path, registry_get, registry_list, registry_put, RECORD_EXTENSION};

use crate::relational::{pair_count, pair_rank, PairIndexSet};
use crate::{Error, Result};

/// Flat index of the canonical pair `(i, j)` in the indicator vector.
pub fn pair_index(i: usize, j: usize, p: usize) -> Result<usize> {
    pair_rank(i, j, p)
}

/// Smallest `N` with `N² >= C(p, 2)`.
pub fn grid_side(p: usize) -> usize {
    let m = pair_count(p);
    let mut n = (m as f64).sqrt() as usize;
    while n * n < m {
        n += 1;
    }
    while n > 0 && (n - 1) * (n - 1) >= m {
        n -= 1;
    }
    n
}

/// Fraction of shared pairs, `|a ∩ b| / K`.
pub fn overlap(a: &PairIndexSet, b: &PairIndexSet) -> Result<f64> {
    check_same_size(a, b)?;
    Ok(a.intersection_count(b) as f64 / a.len() as f64)
}

fn check_same_size(a: &PairIndexSet, b: &PairIndexSet) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "overlap needs two non-empty sets of equal size, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.patch_count() != b.patch_count() {
        return Err(Error::DimensionMismatch(format!(
            "pair sets over {} and {} patches",
            a.patch_count(),
            b.patch_count()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub authenticated: bool,
    pub eta: f64,
    /// Shared pair count.
    pub overlap: usize,
    pub threshold: usize,
}

/// Decrypts `record` and authenticates `suspect` when it shares at least
/// `calib.threshold` pairs with it.
pub fn verify(
    record: &WatermarkRecord,
    key: &ArnoldKey,
    suspect: &PairIndexSet,
    calib: &CalibrationResult,
) -> Result<Decision> {
    if calib.k != record.k {
        return Err(Error::DimensionMismatch(format!(
            "calibration for K = {} used with a K = {} record",
            calib.k, record.k
        )));
    }
    let registered = decrypt(record, key)?;
    decide(&registered, suspect, calib.threshold)
}

/// The threshold comparison on already-decrypted sets.
pub fn decide(registered: &PairIndexSet, suspect: &PairIndexSet, threshold: usize) -> Result<Decision> {
    check_same_size(registered, suspect)?;
    let shared = registered.intersection_count(suspect);
    Ok(Decision {
        authenticated: shared >= threshold,
        eta: shared as f64 / registered.len() as f64,
        overlap: shared,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::FeatureSource;
    use rand::seq::index::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta(id: &str) -> RecordMeta {
        RecordMeta {
            content_id: id.to_string(),
            patch_side: 16,
            image_side: 224,
            feature_source: FeatureSource::MeanRgb,
            created: 1_700_000_000,
        }
    }

    fn random_set(p: usize, k: usize, seed: u64) -> PairIndexSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PairIndexSet::from_ranks(p, sample(&mut rng, pair_count(p), k).into_iter()).unwrap()
    }

    fn key196() -> ArnoldKey {
        ArnoldKey::new(3, 5, DEFAULT_ITERATIONS, 139).unwrap()
    }

    #[test]
    fn grid_side_values() {
        assert_eq!(grid_side(196), 139);
        assert_eq!(pair_count(196), 19110);
        assert_eq!(grid_side(2), 1);
        assert_eq!(grid_side(4), 3);
        assert_eq!(grid_side(5), 4);
    }

    #[test]
    fn pair_index_examples() {
        assert_eq!(pair_index(0, 1, 4).unwrap(), 0);
        assert_eq!(pair_index(2, 3, 4).unwrap(), 5);
        assert!(pair_index(2, 2, 4).is_err());
    }

    #[test]
    fn empty_set_encrypts_to_zeros() {
        let rec = encrypt(&PairIndexSet::empty(196), &key196(), &meta("x")).unwrap();
        assert!(rec.cipher_bits.bytes().all(|b| b == b'0'));
        assert_eq!(rec.cipher_bits.len(), 19321usize.div_ceil(8) * 2);
    }

    #[test]
    fn encryption_preserves_popcount() {
        let set = random_set(196, 50, 1);
        let rec = encrypt(&set, &key196(), &meta("x")).unwrap();
        let ones: u32 = hex::decode(&rec.cipher_bits).unwrap().iter().map(|b| b.count_ones()).sum();
        assert_eq!(ones, 50);
        assert_eq!((rec.p, rec.k, rec.m, rec.n_g), (196, 50, 19110, 139));
    }

    #[test]
    fn decrypt_round_trip() {
        let set = random_set(30, 20, 2);
        let key = ArnoldKey::new(2, 7, 4, grid_side(30)).unwrap();
        let rec = encrypt(&set, &key, &meta("y")).unwrap();
        assert_eq!(decrypt(&rec, &key).unwrap(), set);
    }

    #[test]
    fn wrong_key_fails_structural_check() {
        let set = random_set(196, 50, 3);
        let rec = encrypt(&set, &key196(), &meta("z")).unwrap();
        let mut detected = Vec::new();
        let mut tried = 0;
        for p in 1..30 {
            for q in 1..30 {
                let Ok(wrong) = ArnoldKey::new(p, q, DEFAULT_ITERATIONS, 139) else { continue };
                if (p, q) == (3, 5) {
                    continue;
                }
                tried += 1;
                match decrypt(&rec, &wrong) {
                    Err(Error::WrongKey(_)) => detected.push((p, q)),
                    Ok(s) => assert_ne!(s, set),
                    Err(e) => panic!("{e}"),
                }
            }
        }
        // Popcount survives any permutation, so only a one-bit landing in the
        // 211 padding cells gives a wrong key away: about 42% of keys for K = 50.
        assert!(detected.contains(&(1, 5)));
        assert!(detected.len() > tried / 4 && detected.len() < tried);
        let wrong_side = ArnoldKey::new(1, 2, DEFAULT_ITERATIONS, 138).unwrap();
        assert!(matches!(decrypt(&rec, &wrong_side), Err(Error::InvalidKey(_))));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let mut rec = encrypt(&random_set(196, 50, 4), &key196(), &meta("t")).unwrap();
        rec.cipher_bits.truncate(rec.cipher_bits.len() - 2);
        assert!(matches!(decrypt(&rec, &key196()), Err(Error::CorruptPayload(_))));
    }

    #[test]
    fn overlap_examples() {
        let a = PairIndexSet::new(6, [(0, 1), (0, 2), (1, 2), (3, 4)]).unwrap();
        let b = PairIndexSet::new(6, [(0, 3), (0, 4), (1, 5), (2, 5)]).unwrap();
        let c = PairIndexSet::new(6, [(0, 1), (0, 4), (1, 5), (2, 5)]).unwrap();
        assert_eq!(overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap(&a, &b).unwrap(), 0.0);
        assert_eq!(overlap(&a, &c).unwrap(), 0.25);
        let short = PairIndexSet::new(6, [(0, 1)]).unwrap();
        assert!(overlap(&a, &short).is_err());
    }

    #[test]
    fn verify_threshold_boundary() {
        let calib = calibrate(50, 1e-3, CalibrationMode::Binomial, 0).unwrap();
        assert_eq!(calib.threshold, 37);
        let registered = random_set(196, 50, 5);
        let rec = encrypt(&registered, &key196(), &meta("v")).unwrap();

        let d = verify(&rec, &key196(), &registered, &calib).unwrap();
        assert!(d.authenticated);
        assert_eq!(d.eta, 1.0);

        // Keep `shared` registered pairs and fill up with pairs outside the set.
        let outside: Vec<usize> = (0..19110).filter(|r| !registered.ranks().contains(r)).take(50).collect();
        let suspect_with = |shared: usize| {
            let mut ranks: Vec<usize> = registered.ranks()[..shared].to_vec();
            ranks.extend(&outside[..50 - shared]);
            PairIndexSet::from_ranks(196, ranks).unwrap()
        };
        let at = verify(&rec, &key196(), &suspect_with(37), &calib).unwrap();
        assert!(at.authenticated);
        assert_eq!(at.overlap, 37);
        let below = verify(&rec, &key196(), &suspect_with(36), &calib).unwrap();
        assert!(!below.authenticated);
        let none = verify(&rec, &key196(), &suspect_with(0), &calib).unwrap();
        assert!(!none.authenticated);
        assert_eq!(none.eta, 0.0);

        let other_k = calibrate(40, 1e-3, CalibrationMode::Binomial, 0).unwrap();
        assert!(verify(&rec, &key196(), &registered, &other_k).is_err());
    }

    #[test]
    fn decision_independent_of_key() {
        let calib = calibrate(50, 1e-3, CalibrationMode::Hypergeometric, 19110).unwrap();
        let registered = random_set(196, 50, 6);
        let suspect = random_set(196, 50, 7);
        let k2 = ArnoldKey::new(11, 2, 3, 139).unwrap();
        let a = verify(&encrypt(&registered, &key196(), &meta("a")).unwrap(), &key196(), &suspect, &calib).unwrap();
        let b = verify(&encrypt(&registered, &k2, &meta("a")).unwrap(), &k2, &suspect, &calib).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_json_round_trip_and_crc() {
        let rec = encrypt(&random_set(196, 50, 8), &key196(), &meta("img-1")).unwrap();
        let json = rec.to_json();
        assert!(json.trim_end().ends_with('}'));
        let crc_pos = json.find("\"crc32\"").unwrap();
        assert!(json[crc_pos..].matches(':').count() == 1, "crc32 must be the trailing field");
        assert_eq!(WatermarkRecord::from_json(&json).unwrap(), rec);

        let i = json.find("\"cipher_bits\":\"").unwrap() + 20;
        let mut tampered = json.clone().into_bytes();
        tampered[i] = if tampered[i] == b'0' { b'1' } else { b'0' };
        let tampered = String::from_utf8(tampered).unwrap();
        assert!(matches!(WatermarkRecord::from_json(&tampered), Err(Error::CrcMismatch { .. })));
    }

    #[test]
    fn registry_put_get() {
        let dir = tempfile::tempdir().unwrap();
        let rec = encrypt(&random_set(196, 50, 9), &key196(), &meta("photo.png")).unwrap();
        let path = registry_put(dir.path(), &rec, false).unwrap();
        assert_eq!(path.extension().unwrap(), "rzw");
        assert_eq!(path.file_stem().unwrap().len(), 64);
        assert_eq!(registry_get(dir.path(), "photo.png").unwrap(), rec);

        assert!(matches!(registry_put(dir.path(), &rec, false), Err(Error::DuplicateRecord(_))));
        registry_put(dir.path(), &rec, true).unwrap();
        assert!(matches!(registry_get(dir.path(), "other"), Err(Error::MissingRecord(_))));
    }

    #[test]
    fn registry_list_is_sorted_by_id() {
        let dir = tempfile::tempdir().unwrap();
        for (i, id) in ["b", "c", "a"].iter().enumerate() {
            let rec = encrypt(&random_set(196, 50, 20 + i as u64), &key196(), &meta(id)).unwrap();
            registry_put(dir.path(), &rec, false).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let ids: Vec<String> = registry_list(dir.path()).unwrap().into_iter().map(|r| r.content_id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn registry_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let rec = encrypt(&random_set(196, 50, 10), &key196(), &meta("id")).unwrap();
        let path = registry_put(dir.path(), &rec, false).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let at = bytes.len() / 2;
        bytes[at] = if bytes[at] == b'a' { b'b' } else { b'a' };
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(registry_get(dir.path(), "id"), Err(Error::CrcMismatch { .. })));
    }

    #[test]
    fn concurrent_puts_of_one_id_have_one_winner() {
        let dir = tempfile::tempdir().unwrap();
        let rec = encrypt(&random_set(196, 50, 11), &key196(), &meta("race")).unwrap();
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8).map(|_| s.spawn(|| registry_put(dir.path(), &rec, false))).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert_eq!(registry_get(dir.path(), "race").unwrap(), rec);
    }
}
