use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn shopbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shopbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn gen_instance(dir: &Path, name: &str, triplet: &str) -> String {
    let path = dir.join(name);
    let o = shopbench(&[
        "instance",
        "gen",
        "--triplet",
        triplet,
        "--jobs",
        "4",
        "--work-centers",
        "3",
        "--seed",
        "5",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn notation_commands() {
    let o = shopbench(&["notation", "validate", "Jm|block_in|C_max"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains('['), "{}", stdout(&o));

    let o = shopbench(&["notation", "validate", "Jm|prec|C_max"]);
    assert_eq!((code(&o), stdout(&o).trim()), (0, "ok"));

    let o = shopbench(&["--json", "notation", "parse", "FJc|brkdwn^s,S_jki|T_ave"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["alpha"], "FJc");
    assert_eq!(v["gamma"], "T_ave");

    assert_eq!(code(&shopbench(&["notation", "parse", "Jm|C_max"])), 1);
    assert_eq!(code(&shopbench(&["notation"])), 2);
    assert_eq!(code(&shopbench(&["frobnicate"])), 2);
}

#[test]
fn instance_commands() {
    let dir = tempfile::tempdir().unwrap();
    // no implicit entropy
    assert_eq!(
        code(&shopbench(&["instance", "gen", "--triplet", "Jm||C_max", "--jobs", "3"])),
        2
    );
    let path = gen_instance(dir.path(), "jm.json", "Jm||C_max");
    let again = gen_instance(dir.path(), "jm2.json", "Jm||C_max");
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(again).unwrap());

    let o = shopbench(&["instance", "validate", &path]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("ok: 4 jobs, 3 machines"));

    let orlib = dir.path().join("jm.txt");
    let o = shopbench(&["instance", "convert", &path, "--to", "orlib", "--out", orlib.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = shopbench(&["instance", "validate", orlib.to_str().unwrap()]);
    assert_eq!(code(&o), 0);

    let mut bad: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    bad["jobs"][0]["operations"][0]["duration"] = serde_json::json!(-1.0);
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, bad.to_string()).unwrap();
    let o = shopbench(&["--json", "instance", "validate", bad_path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("nonpositive-duration"));

    assert_eq!(code(&shopbench(&["instance", "validate", "/no/such/file"])), 2);
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(dir.path(), "jm.json", "Jm|p_ji^s|C_max");
    let out = dir.path().join("run");
    assert_eq!(
        code(&shopbench(&["run", "--instance", &inst, "--agent", "rule:SPT"])),
        2,
        "seed is mandatory"
    );
    let o = shopbench(&[
        "--json",
        "run",
        "--instance",
        &inst,
        "--agent",
        "random",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let trace = out.join("trace.jsonl");
    let config = out.join("config.json");
    let o = shopbench(&["replay", "--trace", trace.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains(run["trace_hash"].as_str().unwrap()));

    // rerun from the saved config gives the same episode
    let o = shopbench(&["--json", "run", "--config", config.to_str().unwrap()]);
    let rerun: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rerun["trace_hash"], run["trace_hash"]);

    let text = std::fs::read_to_string(&trace).unwrap();
    std::fs::write(&trace, text.replacen("\"step\":1,", "\"step\":2,", 1)).unwrap();
    let o = shopbench(&["replay", "--trace", trace.to_str().unwrap(), "--config", config.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("mismatch"));
}

fn write_bench(dir: &Path, agents: &str, seeds: usize) -> String {
    let inst = gen_instance(dir, "shop.json", "Jm||C_max");
    let seeds: Vec<String> = (0..seeds).map(|s| s.to_string()).collect();
    let text = format!(
        "version = 1\nagents = [{agents}]\nseeds = [{}]\n\n[instance]\nsource = \"file\"\npath = \"{}\"\n\n[breakdown]\nkind = \"operation_sequencing\"\n",
        seeds.join(", "),
        Path::new(&inst).file_name().unwrap().to_str().unwrap()
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bench_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_bench(dir.path(), "\"rule:SPT\", \"random\"", 10);
    let out = dir.path().join("report");
    let o = Command::new(env!("CARGO_BIN_EXE_shopbench"))
        .args(["bench", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("SHOPBENCH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("| rule:SPT | 10 | 0 |"));
    for f in ["report.csv", "report.json", "report.md"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let json = out.join("report.json");
    let o = shopbench(&["report", "--input", json.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), std::fs::read_to_string(out.join("report.csv")).unwrap());
    assert_eq!(code(&shopbench(&["report", "--input", json.to_str().unwrap(), "--format", "xml"])), 2);

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_shopbench"))
        .args(["bench", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("SHOPBENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 2);
}

#[test]
fn bench_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // a routing rule cannot answer sequencing decisions: every cell of it fails
    let cfg = write_bench(dir.path(), "\"rule:SPT\", \"random\", \"rule:SQ\"", 10);
    let out = dir.path().join("r");
    let o = shopbench(&["--json", "bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["rows"].as_u64(), v["failed"].as_u64()), (Some(30), Some(10)));

    let cfg = write_bench(dir.path(), "\"rule:SPT\", \"random\"", 9);
    let o = shopbench(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 10 seeds"));
}

#[test]
fn serve_speaks_the_wire_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_instance(dir.path(), "jm.json", "Jm||C_max");
    let mut child = Command::new(env!("CARGO_BIN_EXE_shopbench"))
        .args(["serve", "--instance", &inst, "--seed", "1", "--action", "rules"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, r#"{{"cmd":"spec","protocol_version":1}}"#).unwrap();
        writeln!(stdin, r#"{{"cmd":"reset"}}"#).unwrap();
        writeln!(stdin, r#"{{"cmd":"step","action":{{"type":"rule","value":0}}}}"#).unwrap();
        writeln!(stdin, r#"{{"cmd":"spec","protocol_version":99}}"#).unwrap();
        writeln!(stdin, r#"{{"cmd":"close"}}"#).unwrap();
    }
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["spec"]["n_jobs"], 4);
    assert_eq!(lines[1]["done"], false);
    assert!(lines[2].get("error").is_none(), "{}", lines[2]);
    assert_eq!(lines[3]["error"]["kind"], "protocol_mismatch");
    assert_eq!(lines[4]["closed"], true);
}
