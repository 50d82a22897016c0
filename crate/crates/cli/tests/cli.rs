use std::path::PathBuf;
use std::process::{Command, Output};

fn klee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klee")).args(args).output().expect("spawn klee")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("klee-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

fn json_field(text: &str, key: &str) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v[key].clone()
}

#[test]
fn generate_is_byte_identical() {
    let a = stdout(&klee(&["generate", "--kind", "cubes", "-n", "10", "-d", "2", "--seed", "1"]));
    let b = stdout(&klee(&["generate", "--kind", "cubes", "-n", "10", "-d", "2", "--seed", "1"]));
    assert_eq!(a, b);
    assert!(a.starts_with("2 10\n"));
    assert_eq!(a.lines().count(), 11);
}

#[test]
fn generate_writes_file() {
    let out = std::env::temp_dir().join(format!("klee-gen-{}.txt", std::process::id()));
    let o = klee(&["generate", "--kind", "uniform", "-n", "100", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn exact_on_three_boxes() {
    let f = scratch("three.txt", "2 3\n0 4 0 4\n2 6 2 6\n5 6 0 1\n");
    let o = stdout(&klee(&["estimate", f.to_str().unwrap(), "--algo", "exact"]));
    assert_eq!(json_field(&o, "estimate"), serde_json::json!(29.0));
    assert_eq!(json_field(&o, "schema"), serde_json::json!("klee-report/1"));
}

#[test]
fn crude_on_single_box_is_exact() {
    let f = scratch("single.txt", "3 1\n0 1 0 7 0 1\n");
    let o = stdout(&klee(&["estimate", f.to_str().unwrap(), "--algo", "crude", "--seed", "4"]));
    assert_eq!(json_field(&o, "estimate"), serde_json::json!(7.0));
}

#[test]
fn main_is_reproducible() {
    let inst = stdout(&klee(&["generate", "--kind", "uniform", "-n", "50", "--seed", "2"]));
    let f = scratch("u50.txt", &inst);
    for algo in ["main", "boosted", "crude", "klm"] {
        let args = ["estimate", f.to_str().unwrap(), "--algo", algo, "--eps", "0.2", "--seed", "9", "--no-timing"];
        let a = stdout(&klee(&args));
        assert_eq!(a, stdout(&klee(&args)), "{algo}");
        assert_eq!(json_field(&a, "elapsed_ms"), serde_json::Value::Null);
    }
    let csv = stdout(&klee(&["estimate", f.to_str().unwrap(), "--format", "csv", "--no-timing"]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn exit_codes() {
    let bad = scratch("bad.txt", "2 1\n0 1 oops 1\n");
    assert_eq!(klee(&["estimate", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(klee(&["estimate", "/nonexistent/instance"]).status.code(), Some(2));
    let ok = scratch("ok.txt", "1 1\n0 1\n");
    assert_eq!(klee(&["estimate", ok.to_str().unwrap(), "--eps", "1.5"]).status.code(), Some(3));
    assert_eq!(
        klee(&["estimate", ok.to_str().unwrap(), "--algo", "boosted", "--reps", "4"]).status.code(),
        Some(3)
    );
    let degenerate = scratch("flat.txt", "2 1\n0 1 2 2\n");
    assert_eq!(klee(&["estimate", degenerate.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn empty_bench_is_header_only() {
    let o = stdout(&klee(&["bench"]));
    assert_eq!(o.lines().count(), 1);
    assert!(o.starts_with("n,d,eps,algo,seed,"));
}

#[test]
fn bench_rows_repeat() {
    let args = ["bench", "-n", "64,128", "--algo", "main,klm,exact", "--seed", "1,2", "--no-timing"];
    let a = stdout(&klee(&args));
    assert_eq!(a, stdout(&klee(&args)));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn lowerbound_tables() {
    let empty = stdout(&klee(&["lowerbound", "-n", "2", "--ell", "3", "--trials", "0"]));
    assert_eq!(empty.lines().count(), 1);
    let o = stdout(&klee(&[
        "lowerbound", "-n", "2", "--ell", "3", "--algo", "exhaustive-contains", "--trials", "2", "--seed", "1",
    ]));
    let header: Vec<&str> = o.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in o.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[col("sign_correct")], "1");
        // 2n objects, each asked about 3 n ℓ points.
        assert!(f[col("queries")].parse::<u64>().unwrap() >= 4 * 18);
    }
    let by_eps = stdout(&klee(&["lowerbound", "-n", "2", "--eps", "0.08", "--trials", "1"]));
    assert!(by_eps.lines().nth(1).unwrap().starts_with("2,4,klm,"));
    assert_eq!(klee(&["lowerbound", "-n", "2"]).status.code(), Some(2));
}
