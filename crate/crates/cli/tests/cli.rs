use std::process::{Command, Output};

use equistream_core::conventions::parse_manifest;
use equistream_core::fixture::Fixture;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_equistream"))
        .args(args)
        .env_remove("EQUISTREAM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Report lines with the timing field removed.
fn without_times(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split(' ').filter(|w| !w.starts_with("time=")).collect::<Vec<_>>().join(" "))
        .collect()
}

#[test]
fn verify_eaas_passes() {
    let o = run(&["verify", "--suite", "eaas", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("PASS eaas/eaas_exactness")));
    assert!(!out.contains("FAIL"));
}

#[test]
fn unknown_suite_is_usage_error() {
    assert_eq!(run(&["verify", "--suite", "none"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--tol", "nothing=1"]).status.code(), Some(2));
}

#[test]
fn failure_echoes_replay_command() {
    let o = run(&["verify", "--suite", "attention", "--seed", "3", "--tol", "shift_invariance=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL attention/shift_invariance"));
    assert!(stderr(&o).contains("replay: equistream verify --suite attention --seed 3"));
}

#[test]
fn verify_is_deterministic_and_covers_every_property() {
    let a = run(&["verify", "--seed", "5"]);
    let b = run(&["verify", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(without_times(&stdout(&a)), without_times(&stdout(&b)));
    let names: Vec<String> = stdout(&a)
        .lines()
        .filter_map(|l| l.split(' ').nth(1))
        .filter_map(|p| p.split('/').nth(1).map(str::to_string))
        .collect();
    assert_eq!(names, equistream_cli::verify::PROPERTIES.map(str::to_string).to_vec());
}

#[test]
fn bench_attn_rows_per_variant() {
    let o = run(&["bench-attn", "--sweep-n", "128,512", "--k", "16", "--warmup", "1", "--iters", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("variant,N,K,H,C,lmax,precision,mean_time_s,qps,peak_elems,madds,seed")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    for v in ["edge-materializing", "masked-dense", "streaming"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{v},"))).count(), 2);
    }
}

#[test]
fn bench_attn_flag_errors() {
    let base = ["bench-attn", "--sweep-n", "16", "--k", "4"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        run(&a).status.code()
    };
    assert_eq!(with(&["--parallel", "--variants", "streaming"]), Some(2));
    assert_eq!(with(&["--iters", "0"]), Some(2));
    assert_eq!(with(&["--precision", "f16"]), Some(2));
    assert_eq!(with(&["--variants", "streaming,streaming"]), Some(2));
    assert_eq!(with(&["--parallel", "--warmup", "0", "--iters", "1"]), Some(0));
}

#[test]
fn bench_tp_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tp.csv");
    let o = run(&[
        "bench-tp", "--lmax", "1", "--channels", "8", "--counts", "1", "--warmup", "0", "--iters",
        "1", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("li,lf,lo,count,C,lmax,"));
    // paths with degrees up to 1 that satisfy the triangle rule
    assert_eq!(text.lines().count(), 1 + 5);
}

#[test]
fn gen_system_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.fixture");
    let b = dir.path().join("b.fixture");
    let args = |p: &std::path::Path| {
        vec!["gen-system", "--n", "1000", "--a", "3.8", "--seed", "1", "--out"]
            .into_iter()
            .map(String::from)
            .chain([p.to_str().unwrap().to_string()])
            .collect::<Vec<_>>()
    };
    let a_args = args(&a);
    assert_eq!(run(&a_args.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_equistream"))
        .args(["gen-system", "--n", "1000", "--out", b.to_str().unwrap()])
        .env("EQUISTREAM_SEED", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    match Fixture::load(&a).unwrap() {
        Fixture::System(s) => {
            assert_eq!(s.positions.len(), 1000);
            assert_eq!(s.seed, 1);
        }
        other => panic!("unexpected fixture {other:?}"),
    }
}

#[test]
fn dumps_are_machine_readable() {
    let o = run(&["dump-conventions"]);
    assert_eq!(o.status.code(), Some(0));
    let m = parse_manifest(&stdout(&o)).unwrap();
    assert_eq!(m.get("lmax").map(String::as_str), Some("4"));

    let o = run(&["dump-paths", "--lmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("translation l 2 u 1 ")));

    let o = run(&["dump-paths", "--rules", "--lmax", "1"]);
    assert!(stdout(&o).contains("path 1 1 0 parity even"));

    assert_eq!(run(&["dump-paths", "--lmax", "9"]).status.code(), Some(2));
}
