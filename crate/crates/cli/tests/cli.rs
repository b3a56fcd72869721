use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdte_core::tree::{load_tree, parse_tree_json};

fn pdte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdte")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pdte(args);
    assert!(
        out.status.success(),
        "pdte {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    pdte(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn labels(stdout: &str) -> Vec<u64> {
    stdout.lines().filter_map(|l| l.strip_prefix("label ")).map(|v| v.parse().unwrap()).collect()
}

/// Generates a tree and a feature file in `dir`.
fn gen(dir: &Path, tag: &str, shape: &[&str], seed: u64) -> (PathBuf, PathBuf) {
    let t = dir.join(format!("{tag}.json"));
    let x = dir.join(format!("{tag}-x.json"));
    let seed = seed.to_string();
    let mut args = vec!["gen-tree", "--out", p(&t), "--features", p(&x), "--seed", &seed];
    args.extend_from_slice(shape);
    ok(&args);
    (t, x)
}

#[test]
fn preset_shape_matches_table() {
    let dir = tempfile::tempdir().unwrap();
    let (t, _) = gen(dir.path(), "wine", &["--preset", "wine"], 1);
    let tree = load_tree(&t).unwrap();
    assert_eq!((tree.n, tree.depth(), tree.node_count()), (7, 5, 23));
}

#[test]
fn scalability_shape_has_25d_slots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let stdout = ok(&["gen-tree", "--scalability", "50", "--n", "4", "--out", p(&out)]);
    assert!(stdout.contains("d=50 m=1250"), "{stdout}");
    let tree = load_tree(&out).unwrap();
    assert_eq!(tree.depth(), 50);
    assert_eq!(tree.node_count(), 1249);
}

#[test]
fn same_seed_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let (a, ax) = gen(dir.path(), "a", &["--sparse", "6:21"], 9);
    let (b, bx) = gen(dir.path(), "b", &["--sparse", "6:21"], 9);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(std::fs::read(ax).unwrap(), std::fs::read(bx).unwrap());
}

#[test]
fn single_leaf_tree_prints_its_label() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("leaf.json");
    let x = dir.path().join("x.csv");
    std::fs::write(&t, r#"{"n": 2, "nodes": [{"c": 42}]}"#).unwrap();
    std::fs::write(&x, "3,4\n").unwrap();
    for backend in ["ot", "prf", "he"] {
        let out = ok(&["eval", "--tree", p(&t), "--features", p(&x), "--backend", backend, "--paillier-bits", "512"]);
        assert_eq!(labels(&out), vec![42], "{backend}");
    }
}

#[test]
fn protocol_label_matches_plaintext_mode() {
    let dir = tempfile::tempdir().unwrap();
    let shapes: [&[&str]; 4] = [&["--preset", "wine"], &["--sparse", "5:15"], &["--complete", "3"], &["--preset", "linnerud"]];
    let backends = ["ot", "prf", "he"];
    let opts = ["none", "cluster2", "cluster3", "layered"];
    for i in 0..20 {
        let (t, x) = gen(dir.path(), &format!("f{i}"), shapes[i % 4], i as u64);
        let plain = labels(&ok(&["eval", "--plaintext", "--tree", p(&t), "--features", p(&x)]));
        let args = [
            "eval", "--tree", p(&t), "--features", p(&x),
            "--backend", backends[i % 3], "--opt", opts[(i / 3) % 4], "--paillier-bits", "512", "--seed", "5",
        ];
        assert_eq!(labels(&ok(&args)), plain, "fixture {i}: {args:?}");
    }
}

#[test]
fn transcript_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (t, x) = gen(dir.path(), "t", &["--preset", "wine"], 3);
    let csv_path = dir.path().join("t.csv");
    ok(&["eval", "--tree", p(&t), "--features", p(&x), "--csv", p(&csv_path), "--net", "lan", "--net", "10:1M"]);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("party,phase,bytes,rounds"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.len() == 4));
}

#[test]
fn modeled_times_listed_per_network() {
    let dir = tempfile::tempdir().unwrap();
    let (t, x) = gen(dir.path(), "t", &["--preset", "wine"], 3);
    let out = ok(&["eval", "--tree", p(&t), "--features", p(&x), "--net", "wan", "--net", "10:1M"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("modeled_ms ")).count(), 2);
    assert!(out.contains("modeled_ms wan "));
}

#[test]
fn dealt_files_drive_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (t, x) = gen(dir.path(), "t", &["--preset", "breast"], 4);
    let deal_dir = dir.path().join("corr");
    ok(&["deal", "--tree", p(&t), "--backend", "prf", "--evals", "2", "--seed", "11", "--deal-dir", p(&deal_dir)]);
    assert!(deal_dir.join("p0.corr").exists() && deal_dir.join("p1.corr").exists());
    let plain = labels(&ok(&["eval", "--plaintext", "--tree", p(&t), "--features", p(&x)]));
    let eval = |evals: &str, seed: &str| {
        pdte(&[
            "eval", "--tree", p(&t), "--features", p(&x), "--backend", "prf", "--evals", evals, "--seed", seed,
            "--deal-dir", p(&deal_dir),
        ])
    };
    let out = eval("2", "11");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(labels(&String::from_utf8(out.stdout).unwrap()), vec![plain[0]; 2]);
    // More evaluations than were dealt for runs dry mid-protocol.
    assert_eq!(eval("3", "11").status.code(), Some(3));
    // Files dealt under another seed are rejected up front.
    assert_eq!(eval("1", "12").status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (t, x) = gen(dir.path(), "t", &["--preset", "wine"], 3);
    assert_eq!(code(&["eval", "--tree", p(&t), "--features", p(&x), "--backend", "rsa"]), 2);
    assert_eq!(code(&["eval", "--tree", p(&t), "--features", p(&x), "--opt", "cluster7"]), 2);
    assert_eq!(code(&["eval", "--tree", "/nonexistent.json", "--features", p(&x)]), 2);
    let short = dir.path().join("short.json");
    std::fs::write(&short, "[1, 2]").unwrap();
    assert_eq!(code(&["eval", "--tree", p(&t), "--features", p(&short)]), 2);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 1,\n \"nodes\": [}").unwrap();
    let out = pdte(&["eval", "--tree", p(&bad), "--features", p(&x)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(code(&["gen-tree", "--sparse", "3:40", "--out", p(&dir.path().join("o.json"))]), 2);
}

#[test]
fn bench_bytes_are_reproducible_across_trials() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    ok(&[
        "bench", "--preset", "wine", "--complete", "4", "--backends", "ot,prf", "--opts", "none,cluster2", "--trials", "3",
        "--out", p(&out),
    ]);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "tree");
    assert!(header.iter().any(|h| h == "wan_online_ms"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 2 * 2 * 3);
    for group in rows.chunks(3) {
        assert!(group.iter().all(|r| &r[col("online_bytes")] == &group[0][col("online_bytes")]));
        assert!(group.iter().all(|r| &r[col("correct")] == "true"));
    }
    let again = dir.path().join("b2.csv");
    ok(&[
        "bench", "--preset", "wine", "--complete", "4", "--backends", "ot,prf", "--opts", "none,cluster2", "--trials", "3",
        "--out", p(&again),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn bench_prf_online_bytes_flat_in_m() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    ok(&[
        "bench", "--sparse", "12:1023", "--sparse", "12:8191", "--backends", "prf", "--delta", "xor", "--prf", "toy64",
        "--out", p(&out),
    ]);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "online_bytes").unwrap();
    let m = header.iter().position(|h| h == "m").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!((&rows[0][m], &rows[1][m]), ("1024", "8192"));
    assert_eq!(rows[0][col], rows[1][col]);
}

#[test]
fn written_tree_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (t, _) = gen(dir.path(), "t", &["--complete", "3", "--n", "5"], 2);
    let tree = parse_tree_json(&std::fs::read_to_string(&t).unwrap()).unwrap();
    assert!(tree.is_complete());
    assert_eq!(tree.n, 5);
}
