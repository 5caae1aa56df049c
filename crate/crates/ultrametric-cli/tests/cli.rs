use std::path::PathBuf;
use std::process::{Command, Output};

fn ultra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultra")).args(args).env_remove("ULTRA_OUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ultra-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Data rows of a CSV body after the schema comment and header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(2).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn kernel_smoke() {
    let o = ultra(&["kernel", "--padic", "p=2,depth=3", "--sigma", "standard", "--t", "1.0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# ultra kernel v1\n"));
    assert_eq!(text.lines().nth(1), Some("t,x,y,p"));
    let r = rows(&text);
    assert_eq!(r.len(), 64);
    // symmetric, and the diagonal is the largest entry of its row
    let k = |x: usize, y: usize| r[8 * x + y][3].parse::<f64>().unwrap();
    for x in 0..8 {
        for y in 0..8 {
            assert!((k(x, y) - k(y, x)).abs() <= 1e-12 * k(x, x));
            assert!(k(x, y) <= k(x, x));
        }
    }
}

#[test]
fn zp_spectrum() {
    let o = ultra(&["spectrum", "--zp", "p=2,alpha=1,depth=4"]);
    assert!(o.status.success());
    let got: Vec<(f64, u64)> =
        rows(&stdout(&o)).iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    let want = [(0.0, 1), (2.0, 1), (4.0, 2), (8.0, 4), (16.0, 8)];
    assert_eq!(got.len(), want.len());
    for ((l, m), (wl, wm)) in got.iter().zip(want) {
        assert!((l - wl).abs() < 1e-12 * wl.max(1.0));
        assert_eq!(*m, wm);
    }
}

#[test]
fn duality_round_trip_report() {
    let o = ultra(&["duality", "--roundtrip", "--tree", "random", "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "ultra duality v1");
    assert_eq!(v["c"], "1");
    assert!(v["max_transition_diff"].as_f64().unwrap() <= 1e-12);
    assert!(String::from_utf8_lossy(&o.stderr).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn output_is_stable_across_runs() {
    let args = ["simulate", "--padic", "p=2,depth=3", "--t", "0.5", "--paths", "5000", "--seed", "3"];
    assert_eq!(ultra(&args).stdout, ultra(&args).stdout);
}

#[test]
fn checks_and_exit_codes() {
    let ok = ultra(&["green", "--qp", "p=2,alpha=0.5,depth=4", "--check"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stderr).contains("PASS"));

    let bad_prime = ultra(&["kernel", "--padic", "p=4,depth=2"]);
    assert_eq!(bad_prime.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_prime.stderr).contains("not prime"));

    assert_eq!(ultra(&["kernel"]).status.code(), Some(2));
    assert_eq!(ultra(&["padic", "--x", "p:2 digits:7"]).status.code(), Some(2));
}

#[test]
fn recurrence_verdict() {
    let o = ultra(&["green", "--model", r#"{"model":"vladimirov","p":2,"alpha":1.0}"#, "--r", "1"]);
    assert!(o.status.success());
    assert_eq!(rows(&stdout(&o)), [["1", "recurrent", ""]]);
    let o = ultra(&["green", "--model", r#"{"model":"vladimirov","p":2,"alpha":0.5}"#]);
    assert_eq!(rows(&stdout(&o)).len(), 9);
    assert!(rows(&stdout(&o)).iter().all(|r| r[1] == "finite"));
}

#[test]
fn padic_arithmetic() {
    let o = ultra(&["padic", "--x", "p:2 val:-1 digits:101", "--y", "p:2 val:0 digits:11"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "ultra padic v1");
    let text = stdout(&o);
    // 5/2 + 3 = 11/2
    assert!(text.contains("11/2"), "{text}");
}

#[test]
fn config_file_overrides_flags() {
    let dir = scratch("config");
    let cfg = dir.join("c.json");
    std::fs::write(&cfg, r#"{"zp":"p=3,alpha=1,depth=2"}"#).unwrap();
    let o = ultra(&["spectrum", "--zp", "p=2,alpha=1,depth=4", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let mult: Vec<String> = rows(&stdout(&o)).iter().map(|r| r[1].clone()).collect();
    assert_eq!(mult, ["1", "2", "6"]);

    std::fs::write(&cfg, r#"{"zpp":"p=3,alpha=1,depth=2"}"#).unwrap();
    let o = ultra(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = scratch("outdir");
    let o = Command::new(env!("CARGO_BIN_EXE_ultra"))
        .args(["jump", "--padic", "p=3,depth=2"])
        .env("ULTRA_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(dir.join("jump.csv")).unwrap();
    assert!(text.starts_with("# ultra jump v1"));

    let explicit = dir.join("nested/k.csv");
    let o = ultra(&["kernel", "--padic", "p=2,depth=2", "--t", "0.3", "--out", explicit.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(explicit).unwrap().starts_with("# ultra kernel v1"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn walk_and_rotation() {
    let dir = scratch("walk");
    let w = dir.join("w.json");
    std::fs::write(&w, r#"{"tree":{"parents":[null,0,0]}}"#).unwrap();
    let o = ultra(&["walk", "--walk", w.to_str().unwrap(), "--check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = ultra(&["padic", "--rotation", "p=2,m0=0,a=1;1/2;1/4;1/8"]);
    assert!(o.status.success());
    let o = ultra(&["padic", "--rotation", "p=2,m0=0,a=1;2;1/4"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::remove_dir_all(dir).unwrap();
}
