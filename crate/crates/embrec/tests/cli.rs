use std::fs;
use std::path::Path;
use std::process::Command;

use embrec::cli::cli_main;

const CONFIG: &str = r#"{"n_layers":4,"d_model":16,"n_heads":2,"d_ff":32,"vocab_size":300,"max_seq":24,"ln_eps":1e-5,"seed":3}"#;

fn setup(dir: &Path) -> (String, String) {
    let config = dir.join("model.json");
    fs::write(&config, CONFIG).unwrap();
    let corpus = dir.join("corpus.jsonl");
    fs::write(
        &corpus,
        concat!(
            r#"{"doc_id":"a","tokens":[1,2,3,4,5]}"#,
            "\n",
            r#"{"doc_id":"b","text":"a byte-level document that is longer than one window"}"#,
            "\n\n",
            r#"{"doc_id":"c","tokens":[299]}"#,
            "\n"
        ),
    )
    .unwrap();
    (config.display().to_string(), corpus.display().to_string())
}

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("embrec").chain(args.iter().copied()))
}

fn bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_embrec")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn build_verify_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (config, corpus) = setup(dir.path());
    let store = dir.path().join("store").display().to_string();
    let build = ["build", "--model-config", &config, "--corpus", &corpus, "--layer", "2", "--dtype", "f16", "--out", &store];
    let (code, out, _) = bin(&build);
    assert_eq!(code, 0);
    // "b" is 52 bytes: windows of 24, 24 and 4
    assert!(out.contains("wrote 5 entries"), "{out}");
    let (code, out, _) = bin(&build);
    assert_eq!(code, 0);
    assert!(out.contains("wrote 0 entries") && out.contains("5 already cached"), "{out}");

    assert_eq!(run(&["verify", "--store", &store]), 0);
    let (code, out, _) = bin(&["inspect", "--store", &store, "--doc", "b#w2"]);
    assert_eq!(code, 0);
    assert!(out.contains("\"doc_id\":\"b#w2\"") && out.contains("shape [4 x 16]"), "{out}");
    assert_eq!(run(&["inspect", "--store", &store, "--doc", "zzz"]), 1);
}

#[test]
fn verify_flags_a_flipped_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (config, corpus) = setup(dir.path());
    let store = dir.path().join("store");
    let s = store.display().to_string();
    assert_eq!(run(&["build", "--model-config", &config, "--corpus", &corpus, "--layer", "1", "--dtype", "f32", "--out", &s]), 0);
    let shard = store.join("shard-00000.bin");
    let mut bytes = fs::read(&shard).unwrap();
    bytes[8 + 3] ^= 0x01;
    fs::write(&shard, bytes).unwrap();
    let (code, out, _) = bin(&["verify", "--store", &s]);
    assert_eq!(code, 1);
    assert!(out.contains("corrupted toy-") && out.contains("/1/a:"), "{out}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (config, corpus) = setup(dir.path());
    let store = dir.path().join("s").display().to_string();
    let json = dir.path().join("r.json").display().to_string();
    let bench = |k: &str| {
        bin(&["bench", "--model-config", &config, "--store", &store, "--k", k, "--mode", "recycle-ram", "--batch", "2", "--seq", "8", "--reps", "1", "--prefetch", "0", "--json", &json])
    };
    let (code, _, err) = bench("4");
    assert_eq!(code, 2);
    assert!(err.contains("must be below n_layers"), "{err}");
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["verify"]), 2);
    assert_eq!(run(&["build", "--model-config", &config, "--corpus", &corpus, "--layer", "9", "--dtype", "f32", "--out", &store]), 2);
    assert_eq!(run(&["build", "--model-config", &config, "--corpus", &corpus, "--layer", "1", "--dtype", "f8", "--out", &store]), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_layers":4}"#).unwrap();
    assert_eq!(run(&["build", "--model-config", &bad.display().to_string(), "--corpus", &corpus, "--layer", "1", "--dtype", "f32", "--out", &store]), 2);
    let small = dir.path().join("small.json");
    fs::write(&small, CONFIG.replace("300", "100")).unwrap();
    // text records need a byte vocabulary
    assert_eq!(run(&["build", "--model-config", &small.display().to_string(), "--corpus", &corpus, "--layer", "1", "--dtype", "f32", "--out", &store]), 2);
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = setup(dir.path());
    let store = dir.path().join("s").display().to_string();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let (code, out, err) = bin(&[
        "bench", "--model-config", &config, "--store", &store, "--k", "2", "--mode", "recycle-disk-prefetch",
        "--batch", "3", "--seq", "12", "--reps", "2", "--prefetch", "2", "--json", &json.display().to_string(),
        "--csv", &csv.display().to_string(), "--inject-read-delay-ms", "1",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("recycle_disk_prefetch N=4 k=2"), "{out}");
    let report = embrec::bench::report_parse_json(&json).unwrap();
    assert_eq!(report.scenario.prefetch_depth, 2);
    assert_eq!(report.scenario.read_delay_ms, 1);
    assert_eq!(report.variant.reps, 2);
    assert_eq!(embrec::bench::report_parse_csv(&csv).unwrap().len(), 1);
    assert_eq!(run(&["verify", "--store", &store]), 0);
}

#[test]
fn demo_checksums_agree() {
    for seed in ["0", "1", "42"] {
        let (code, out, _) = bin(&["demo", "--seed", seed]);
        assert_eq!(code, 0);
        let lines: Vec<_> = out.lines().filter(|l| l.contains("full ")).collect();
        assert_eq!(lines.len(), 3);
        for line in lines {
            let words: Vec<_> = line.split_whitespace().collect();
            assert_eq!(words[2], words[4], "{line}");
            assert_eq!(words[5], "match");
        }
    }
}
