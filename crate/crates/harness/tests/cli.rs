use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msaccel_harness::error::{EXIT_AUDIT, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, EXIT_PARSE};
use msaccel_harness::trace::{numeric_columns, read_csv, COLUMNS};
use msaccel_harness::Summary;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_msaccel"));
    c.env_remove("MSACCEL_CACHE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn summary(csv: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap()
}

fn out_path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run(&[
            "--method",
            "NEWTON",
            "--data",
            "quadratic:diag=1:2,b=1:1"
        ])),
        EXIT_OK
    );

    for bad in [
        vec!["--method", "OPTMS", "--data", "worst:d=3", "--sigma", "1.5"],
        vec!["--method", "OPTMS", "--data", "worst:d=3", "--alpha", "1"],
        vec!["--method", "OPTMS", "--oracle", "GD", "--data", "worst:d=3"],
        vec!["--method", "OPTMS", "--data", "nonsense:d=3"],
        vec!["--method", "OPTMS"],
        vec!["--method", "BOGUS", "--data", "worst:d=3"],
        vec!["--method", "CR", "--data", "quadratic:diag=1:2"],
    ] {
        assert_eq!(code(&run(&bad)), EXIT_CONFIG, "{bad:?}");
    }

    let svm = dir.path().join("bad.svm");
    std::fs::write(&svm, "+1 1:0.5 2:1\n-1 2:x\n").unwrap();
    let o = run(&["--method", "OPTMS", "--data", svm.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_PARSE);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let out = out_path(&dir, "div.csv");
    let o = run(&[
        "--method",
        "GD",
        "--eta",
        "1e200",
        "--data",
        "quadratic:diag=1:2,b=1:1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_DIVERGENCE, "{}", stderr(&o));
    // the partial trace is on disk
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert!(!rows.is_empty());
    assert!(summary(&out).error.is_some());

    let trace = dir.path().join("notatrace.csv");
    std::fs::write(&trace, "a,b\n1,2\n").unwrap();
    assert_eq!(
        code(&run(&["audit-trace", "--trace", trace.to_str().unwrap()])),
        EXIT_PARSE
    );
}

#[test]
fn newton_solves_quadratic_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_path(&dir, "newton.csv");
    let o = run(&[
        "--method",
        "NEWTON",
        "--data",
        "quadratic:diag=3:0.5,b=1:-2",
        "--budget-calls",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s.rows, 2);
    assert!(s.final_gap.unwrap() <= 1e-10, "{:?}", s.final_gap);
}

#[test]
fn optms_amsn_synthetic_passes_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_path(&dir, "optms.csv");
    let o = run(&[
        "--method",
        "OPTMS",
        "--oracle",
        "AMSN",
        "--data",
        "synthetic:n=500,d=200,seed=1",
        "--budget-calls",
        "30",
        "--audit",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    for r in &rows[1..] {
        assert!(r.e.is_some() && r.lambda.is_some() && r.lambda_prime.is_some());
    }
    let s = summary(&out);
    assert!(s.audit.as_ref().unwrap().pass);
    assert_eq!(s.csv_schema, 1);

    // the standalone auditor agrees
    let o = run(&[
        "audit-trace",
        "--trace",
        out.to_str().unwrap(),
        "--data",
        "synthetic:n=500,d=200,seed=1",
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("solve bound: pass") && text.contains("potential: pass"),
        "{text}"
    );

    // and rejects a trace paired with the wrong data
    let o = run(&[
        "audit-trace",
        "--trace",
        out.to_str().unwrap(),
        "--data",
        "worst:d=5",
    ]);
    assert_eq!(code(&o), EXIT_CONFIG);
}

#[test]
fn same_seed_gives_identical_numeric_columns() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec![
            "--method",
            "OPTMS",
            "--data",
            "synthetic:n=100,d=10,seed=7",
            "--budget-calls",
            "15",
        ],
        vec![
            "--method",
            "MSBISECT",
            "--data",
            "worst:d=20",
            "--oracle",
            "CR",
            "--budget-calls",
            "20",
        ],
        vec![
            "--method",
            "AGD",
            "--data",
            "synthetic:n=50,d=5,seed=3",
            "--budget-calls",
            "10",
        ],
    ] {
        let texts: Vec<String> = (0..2)
            .map(|i| {
                let out = out_path(&dir, &format!("det{i}.csv"));
                let mut a = args.clone();
                a.extend(["--out", out.to_str().unwrap()]);
                assert_eq!(code(&run(&a)), EXIT_OK);
                std::fs::read_to_string(&out).unwrap()
            })
            .collect();
        assert_eq!(
            numeric_columns(&texts[0]),
            numeric_columns(&texts[1]),
            "{args:?}"
        );
    }
}

#[test]
fn reference_cache_is_written_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = out_path(&dir, "c.csv");
    let args = [
        "--method",
        "NEWTON",
        "--data",
        "synthetic:n=60,d=6,seed=2",
        "--budget-calls",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    let first = bin()
        .args(args)
        .env("MSACCEL_CACHE", &cache)
        .output()
        .unwrap();
    assert_eq!(code(&first), EXIT_OK);
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    let a = summary(&out);
    let second = bin()
        .args(args)
        .env("MSACCEL_CACHE", &cache)
        .output()
        .unwrap();
    assert_eq!(code(&second), EXIT_OK);
    let b = summary(&out);
    assert_eq!(serde_json::to_value(a.reference.source).unwrap(), "newton");
    assert_eq!(serde_json::to_value(b.reference.source).unwrap(), "cache");
    assert_eq!(a.final_gap, b.final_gap);
}

#[test]
fn corrupted_a_column_fails_at_that_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_path(&dir, "q.csv");
    let o = run(&[
        "--method",
        "OPTMS",
        "--oracle",
        "GD",
        "--eta",
        "0.25",
        "--data",
        "quadratic:diag=1:2:4,b=1:1:1",
        "--budget-calls",
        "12",
        "--audit",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    assert_eq!(
        code(&run(&["audit-trace", "--trace", out.to_str().unwrap()])),
        EXIT_OK
    );

    let a_col = COLUMNS.iter().position(|c| *c == "A").unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = 5;
    let mut fields: Vec<String> = lines[row + 1].split(',').map(String::from).collect();
    let a: f64 = fields[a_col].parse().unwrap();
    fields[a_col] = format!("{:.16e}", a * 50.0);
    lines[row + 1] = fields.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    std::fs::copy(out.with_extension("json"), bad.with_extension("json")).unwrap();

    let o = run(&["audit-trace", "--trace", bad.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_AUDIT);
    let report =
        msaccel_harness::audit_trace(&bad, Some(&bad.with_extension("json")), None, None, 2.0)
            .unwrap();
    let p = report.potential.unwrap();
    assert!(!p.pass);
    assert!(p.violations.contains(&row), "{:?}", p.violations);
}

#[test]
fn chain_amsn_fo_eighty_iterations_pass_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_path(&dir, "chain.csv");
    let o = run(&[
        "--method",
        "OPTMS",
        "--oracle",
        "AMSN_FO",
        "--data",
        "worst:d=300",
        "--budget-calls",
        "80",
        "--audit",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), EXIT_OK, "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s.oracle_calls, 80);
    let report = s.audit.unwrap();
    assert!(report.pass, "{:?}", report.lines());
    // aMSN-fo walks the same λ grid, so the counter bound applies to its solves too
    let sb = msaccel_harness::audit::check_solve_bound(&s.calls);
    assert!(sb.pass, "{sb:?}");
}
