use std::fs;

use proptest::prelude::*;
use siting_core::checkpoint::{checkpoint_path, decode, encode, load, save, timing_report, MAGIC};
use siting_core::ranking::{sweep_lengths, LengthAccumulator, SweepConfig};
use siting_core::synthetic::random_matrix;
use siting_core::Error;

fn config(dir: &std::path::Path) -> SweepConfig {
    SweepConfig {
        workers: 2,
        checkpoint_dir: Some(dir.to_path_buf()),
        stride: 32,
        ..SweepConfig::default()
    }
}

#[test]
fn checkpoint_from_other_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = random_matrix(15, 5, 1, 1);
    let b = random_matrix(15, 5, 1, 2);
    sweep_lengths(&a, &config(dir.path())).unwrap();
    match sweep_lengths(&b, &config(dir.path())) {
        Err(Error::FingerprintMismatch { path }) => {
            assert_eq!(path, checkpoint_path(dir.path(), 1))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = random_matrix(15, 5, 1, 3);
    sweep_lengths(&matrix, &config(dir.path())).unwrap();
    let path = checkpoint_path(dir.path(), 2);
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        sweep_lengths(&matrix, &config(dir.path())),
        Err(Error::CheckpointCorrupt { .. })
    ));

    // truncated file
    let good = encode(&LengthAccumulator::new(15, 5, 2), &matrix.fingerprint());
    fs::write(&path, &good[..good.len() - 5]).unwrap();
    assert!(matches!(
        load(dir.path(), 2, &matrix.fingerprint()),
        Err(Error::CheckpointCorrupt { .. })
    ));
}

#[test]
fn completed_lengths_are_skipped_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = random_matrix(20, 6, 2, 4);
    let first = sweep_lengths(&matrix, &config(dir.path())).unwrap();
    let stamp: Vec<_> = (1..=6)
        .map(|s| {
            fs::metadata(checkpoint_path(dir.path(), s))
                .unwrap()
                .modified()
                .unwrap()
        })
        .collect();
    let second = sweep_lengths(&matrix, &config(dir.path())).unwrap();
    assert_eq!(first.accumulators, second.accumulators);
    for s in 1..=6 {
        let now = fs::metadata(checkpoint_path(dir.path(), s))
            .unwrap()
            .modified()
            .unwrap();
        assert_eq!(now, stamp[s - 1], "length {s} was rewritten");
    }
}

#[test]
fn save_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = random_matrix(10, 4, 0, 5);
    sweep_lengths(&matrix, &config(dir.path())).unwrap();
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "len_1.ckpt",
            "len_2.ckpt",
            "len_3.ckpt",
            "len_4.ckpt",
            "timings.csv"
        ]
    );
    let bytes = fs::read(checkpoint_path(dir.path(), 1)).unwrap();
    assert_eq!(&bytes[..8], MAGIC);
}

#[test]
fn failed_write_keeps_previous_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let fp = [3u8; 32];
    let acc = LengthAccumulator::new(4, 3, 2);
    save(&acc, dir.path(), &fp).unwrap();
    // a directory squatting on the temp name makes the write fail
    fs::create_dir(dir.path().join(".len_2.ckpt.tmp")).unwrap();
    let mut next = acc.clone();
    next.combos_done = 3;
    assert!(save(&next, dir.path(), &fp).is_err());
    assert_eq!(load(dir.path(), 2, &fp).unwrap().unwrap(), acc);
}

#[test]
fn timings_cover_every_length() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = random_matrix(12, 5, 0, 6);
    sweep_lengths(&matrix, &config(dir.path())).unwrap();
    let rows = timing_report(dir.path()).unwrap();
    let lengths: Vec<usize> = rows.iter().map(|r| r.s).collect();
    assert_eq!(lengths, vec![1, 2, 3, 4, 5]);
    let counts: Vec<u64> = rows.iter().map(|r| r.combinations).collect();
    assert_eq!(counts, vec![5, 10, 10, 5, 1]);
    assert!(rows.iter().all(|r| r.elapsed_seconds >= 0.0));
}

#[test]
fn missing_checkpoint_is_none() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load(dir.path(), 1, &[0; 32]).unwrap().is_none());
}

proptest! {
    #[test]
    fn encode_decode_round_trip(n in 1usize..20, m in 1usize..8, seed in any::<u64>(), fp in any::<[u8; 32]>()) {
        let s = 1 + (seed as usize % m);
        let mut acc = LengthAccumulator::new(n, m, s);
        for (i, v) in acc.nr_row.iter_mut().enumerate() {
            *v = (seed.wrapping_mul(i as u64 + 1) % 1000) as f64 / 7.0;
        }
        for (i, c) in acc.oc.iter_mut().enumerate() {
            *c = seed.rotate_left(i as u32);
        }
        acc.combos_done = seed % (acc.total() + 1);
        acc.elapsed_seconds = 1.5;
        let bytes = encode(&acc, &fp);
        let (got_fp, got) = decode(&bytes, std::path::Path::new("p")).unwrap();
        prop_assert_eq!(got_fp, fp);
        prop_assert!(got.same_state(&acc));
        prop_assert_eq!(got.elapsed_seconds, 1.5);
    }

    #[test]
    fn any_single_bit_flip_is_detected(pos_frac in 0.0f64..1.0, bit in 0u8..8) {
        let acc = LengthAccumulator::new(3, 3, 2);
        let mut bytes = encode(&acc, &[9; 32]);
        let pos = ((bytes.len() - 1) as f64 * pos_frac) as usize;
        bytes[pos] ^= 1 << bit;
        prop_assert!(decode(&bytes, std::path::Path::new("p")).is_err());
    }
}
