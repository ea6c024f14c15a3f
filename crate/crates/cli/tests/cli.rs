use std::process::{Command, Output};

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stencil-dmp"));
    c.args(args).env_remove("STENCIL_DMP_MODE");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: &[&str] = &["--kernel", "diffusion", "--shape", "32,32", "--so", "4", "--tn", "3", "--ranks", "4"];

#[test]
fn csv_has_header_and_one_row() {
    let out = stdout(&run(&[SMALL, &["--check"]].concat(), &[]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("kernel,shape,sdo,ranks,topology,mode,"));
    assert!(lines[1].starts_with("diffusion,32x32,4,4,2x2,diagonal,inproc,3,"));
    assert!(lines[1].contains(",0.0,") || lines[1].contains(",0,"), "{}", lines[1]);
}

#[test]
fn json_report() {
    let out = stdout(&run(&[SMALL, &["--json", "--mode", "full"]].concat(), &[]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let m = &v[0];
    assert_eq!(m["config"]["mode"], "full");
    assert_eq!(m["topology"], serde_json::json!([2, 2]));
    assert_eq!(m["points_updated"], 32 * 32 * 3);
    assert_eq!(m["msgs_per_rank_step"].as_array().unwrap().len(), 4);
}

#[test]
fn mode_from_environment() {
    let out = stdout(&run(SMALL, &[("STENCIL_DMP_MODE", "basic")]));
    assert!(out.lines().nth(1).unwrap().contains(",basic,"));
    let out = stdout(&run(&[SMALL, &["--mode", "full"]].concat(), &[("STENCIL_DMP_MODE", "basic")]));
    assert!(out.lines().nth(1).unwrap().contains(",full,"));
}

#[test]
fn dump_plan_prints_schedule() {
    let out = stdout(&run(&[SMALL, &["--mode", "full", "--dump-plan"]].concat(), &[]));
    assert!(out.starts_with("<Callable Kernel mode=full>"));
    assert!(out.contains("CORE") && out.contains("REMAINDER"));
}

#[test]
fn bad_input_fails_cleanly() {
    for args in [
        &["--kernel", "maxwell"][..],
        &["--kernel", "tti", "--shape", "32,32"],
        &["--kernel", "diffusion", "--shape", "32,32", "--mode", "diag"],
        &["--kernel", "diffusion", "--shape", "32,32", "--ranks", "3", "--topology", "2,2"],
    ] {
        let o = run(args, &[]);
        assert!(!o.status.success(), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn output_file_and_scaling() {
    let dir = std::env::temp_dir().join(format!("stencil-dmp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("weak.csv");
    let args = [
        "--kernel", "diffusion", "--shape", "24,24", "--so", "2", "--tn", "2", "--scaling", "weak", "--series", "1,2,4",
        "--out", path.to_str().unwrap(),
    ];
    assert!(stdout(&run(&args, &[])).is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("ranks,shape,topology,"));
    assert!(rows[3].starts_with("4,48x48,2x2,"));
    std::fs::remove_dir_all(dir).unwrap();
}
