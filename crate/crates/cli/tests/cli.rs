use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use vistrain::formats::{decode_compressed_counts, encode_compressed_counts};
use vistrain::state::{decode_state, encode_state, load_state, save_state, StateLock};
use vistrain_core::dataset::TrainingDataset;
use vistrain_core::mask::{rle_encode, Bitmap, MaskTrack};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vistrain"))
}

fn exit_code(args: &[&str]) -> i32 {
    bin().args(args).output().unwrap().status.code().unwrap()
}

fn dataset(videos: &[(u32, u32, Vec<bool>)]) -> TrainingDataset {
    let mut ds = TrainingDataset::new();
    for (i, (h, w, bits)) in videos.iter().enumerate() {
        let bm = Bitmap::from_column_major(*h, *w, bits.clone()).unwrap();
        let track = MaskTrack::new(vec![Some(rle_encode(&bm)), None, Some(rle_encode(&bm))]).unwrap();
        ds.add_base_video(format!("v{i}"), 3, vec![track]).unwrap();
    }
    ds
}

fn video_strategy() -> impl Strategy<Value = (u32, u32, Vec<bool>)> {
    (1u32..12, 1u32..12).prop_flat_map(|(h, w)| {
        (Just(h), Just(w), proptest::collection::vec(any::<bool>(), (h * w) as usize))
    })
}

proptest! {
    #[test]
    fn compressed_counts_round_trip(counts in proptest::collection::vec(0u32..100_000, 0..40)) {
        let s = encode_compressed_counts(&counts);
        prop_assert_eq!(decode_compressed_counts(&s).unwrap(), counts);
    }

    #[test]
    fn state_round_trips_exactly(videos in proptest::collection::vec(video_strategy(), 0..4)) {
        let ds = dataset(&videos);
        let (bytes, sum) = encode_state(&ds).unwrap();
        let (back, sum2) = decode_state(Path::new("mem"), &bytes).unwrap();
        prop_assert_eq!(back, ds);
        prop_assert_eq!(sum, sum2);
    }
}

#[test]
fn saved_state_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let ds = dataset(&[(4, 4, vec![true; 16])]);
    let sum = save_state(&path, &ds).unwrap();
    let (back, sum2) = load_state(&path).unwrap();
    assert_eq!(back, ds);
    assert_eq!(sum, sum2);
}

#[test]
fn second_lock_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    let held = StateLock::acquire(&path).unwrap();
    assert_eq!(StateLock::acquire(&path).err().unwrap().exit_code(), 4);
    drop(held);
    assert!(StateLock::acquire(&path).is_ok());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let (gt, dump, state, bad) = (p("gt.json"), p("dump.jsonl"), p("state.json"), p("bad.jsonl"));

    assert_eq!(exit_code(&["round"]), 2, "clap usage errors exit 2");
    assert_eq!(exit_code(&["round", "--state", &p("missing.json"), "--dump", &dump]), 4);

    assert_eq!(exit_code(&["mock-gt", "--out", &gt, "--videos", "3", "--frames", "4"]), 0);
    assert_eq!(exit_code(&["mock-dump", "--gt", &gt, "--out", &dump]), 0);
    assert_eq!(exit_code(&["init", "--state", &state]), 0);

    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(exit_code(&["round", "--state", &state, "--dump", &bad]), 2);

    assert_eq!(exit_code(&["sample", "--state", &state, "--batches", "1"]), 5);

    assert_eq!(exit_code(&["round", "--state", &state, "--dump", &dump]), 0);
    assert_eq!(exit_code(&["sample", "--state", &state, "--batches", "3", "--out", &p("plan.jsonl")]), 0);

    let text = std::fs::read_to_string(&state).unwrap();
    let tampered = text.replacen("\"round\":1", "\"round\":7", 1);
    assert_ne!(text, tampered);
    std::fs::write(&state, tampered).unwrap();
    assert_eq!(exit_code(&["sample", "--state", &state, "--batches", "1"]), 3);
}
