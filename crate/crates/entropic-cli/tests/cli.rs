use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entropic::analysis::{ansatz_model, powerlaw_model};

fn entropic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entropic")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, trajectories: u64) -> String {
    format!(
        r#"schema = "entropic-run/1"
[geometry]
dimension = 2
extents = [3, 3]
[physics]
n = 2
beta = [0.35]
l = [1]
[protocol]
n_steps = 8
equilibration_sweeps = 20
trajectories = {trajectories}
master_seed = 11
[io]
output_dir = "{}"
checkpoint_interval = 20
"#,
        dir.display()
    )
}

fn write(path: &Path, text: &str) -> String {
    fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_outputs() {
    let t = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for k in 0..2 {
        let d = t.path().join(format!("run{k}"));
        let cfg = write(&t.path().join(format!("c{k}.toml")), &small_config(&d, 40));
        let o = entropic(&["simulate", "--config", &cfg]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push((read_dir_sorted(&d.join("records")), fs::read(d.join("cfunction.csv")).unwrap(), fs::read(d.join("ratios.json")).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let t = tempfile::tempdir().unwrap();
    let full = t.path().join("full");
    let cfg = write(&t.path().join("full.toml"), &small_config(&full, 60));
    assert!(entropic(&["simulate", "--config", &cfg]).status.success());

    let part = t.path().join("part");
    let cfg_short = write(&t.path().join("short.toml"), &small_config(&part, 40));
    assert!(entropic(&["simulate", "--config", &cfg_short]).status.success());
    // A crash mid-write leaves a truncated last line.
    let rec = fs::read_dir(part.join("records")).unwrap().map(|e| e.unwrap().path()).find(|p| p.to_string_lossy().ends_with("forward.jsonl")).unwrap();
    let mut text = fs::read_to_string(&rec).unwrap();
    text.push_str("{\"seed\":11,\"str");
    fs::write(&rec, text).unwrap();
    let cfg_long = write(&t.path().join("long.toml"), &small_config(&part, 60));
    assert!(entropic(&["simulate", "--config", &cfg_long]).status.success());

    assert_eq!(read_dir_sorted(&full.join("records")), read_dir_sorted(&part.join("records")));
    assert_eq!(fs::read(full.join("cfunction.csv")).unwrap(), fs::read(part.join("cfunction.csv")).unwrap());
}

#[test]
fn dry_run_prints_plan_only() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("out");
    let cfg = write(&t.path().join("c.toml"), &small_config(&d, 0));
    let o = entropic(&["simulate", "--config", &cfg]);
    assert!(o.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan[0]["l"], 1);
    assert_eq!(plan[0]["n_sites"], 18);
    assert!(!d.exists());
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = write(&t.path().join("bad.toml"), &small_config(t.path(), 10).replace("n = 2", "n = 2\nbogus = 3"));
    assert_eq!(entropic(&["simulate", "--config", &bad]).status.code(), Some(2));
    assert_eq!(entropic(&["verify", "no-such-suite"]).status.code(), Some(2));
    assert_eq!(entropic(&["scale", "7"]).status.code(), Some(2));
    let o = entropic(&["verify", "duality-2d"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn scale_and_coeffs_output() {
    let o = entropic(&["scale", "8"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "n_tau_c,beta_c,a_tc,entry\n8,0.226102,0.125,0.226102(5)\n");
    let o = entropic(&["dualize", "coeffs", "--n", "2", "--beta", "0.5"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let c: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    // Two-state clock: C_0 = cosh(beta), C_1 = sinh(beta).
    assert!((c[0] - 0.5f64.cosh()).abs() < 1e-14 && (c[1] - 0.5f64.sinh()).abs() < 1e-14);
}

const POINT_HEADER: &str = "beta,n,n_tau,n_s,l,boundary_sites,log_ratio,value,error,value_mid,error_mid\n";

fn analysis_config(dir: &Path, mg: Option<&Path>) -> String {
    let mut s = format!(
        r#"schema = "entropic-run/1"
[geometry]
dimension = 3
extents = [4, 8, 8]
[physics]
n = 2
beta = [0.3]
l = [1]
[analysis]
ansatz_min = 1.25
powerlaw_max = 0.85
thermo_m_start = 0.25
c2_cft = 0.5
[io]
output_dir = "{}"
"#,
        dir.display()
    );
    if let Some(p) = mg {
        s = s.replace("c2_cft = 0.5", &format!("c2_cft = 0.5\nmg_table = \"{}\"", p.display()));
    }
    s
}

#[test]
fn analyze_recovers_injected_parameters() {
    let t = tempfile::tempdir().unwrap();
    let (a, alpha, b, c) = (0.33, 0.36, 0.36, 0.48);
    let amg = 0.1;
    let mut csv = String::from(POINT_HEADER);
    for l in [3usize, 4, 5, 6, 7, 8, 13, 15, 18, 21, 25, 30] {
        let x = l as f64 * amg;
        let f = if x < 1.0 { powerlaw_model(x, b, c) } else { ansatz_model(x, a, alpha) };
        for ns in [8usize, 12, 16] {
            let v = 0.5 * f * (1.0 + 0.5 * (-0.3 * ns as f64).exp());
            csv.push_str(&format!("0.3,2,4,{ns},{l},16,0,{v},{},{v},{}\n", 0.01 * v, 0.01 * v));
        }
    }
    let input = write(&t.path().join("points.csv"), &csv);
    let mg = t.path().join("mg.csv");
    write(&mg, &format!("beta,a_mg\n0.3,{amg}\n"));
    let out = t.path().join("an");
    let cfg = write(&t.path().join("a.toml"), &analysis_config(&out, Some(&mg)));
    let o = entropic(&["analyze", "--config", &cfg, "--input", &input, "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("analysis.json")).unwrap()).unwrap();
    let check = |fit: &str, k: usize, truth: f64| {
        let v = r[fit]["params"][k].as_f64().unwrap();
        let e = r[fit]["errors"][k].as_f64().unwrap();
        assert!((v - truth).abs() <= 2.0 * e.max(1e-9), "{fit}[{k}] = {v} +- {e}, injected {truth}");
        assert!(e < 0.1 * truth, "{fit}[{k}] error {e} too large to be informative");
    };
    check("ansatz", 0, a);
    check("ansatz", 1, alpha);
    check("powerlaw", 0, b);
    check("powerlaw", 1, c);
    let svg = fs::read_to_string(out.join("cfunction.svg")).unwrap();
    assert!(svg.contains("Ansatz fit") && svg.contains("reference power law") && svg.contains("l m_g"));
}

#[test]
fn single_volume_input_is_flagged_not_fatal() {
    let t = tempfile::tempdir().unwrap();
    let input = write(&t.path().join("p.csv"), &format!("{POINT_HEADER}0.3,2,4,8,2,16,0.1,0.2,0.01,0.25,0.0125\n"));
    let out = t.path().join("an");
    let cfg = write(&t.path().join("a.toml"), &analysis_config(&out, None));
    let o = entropic(&["analyze", "--config", &cfg, "--input", &input, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not extrapolated"));
    let o = entropic(&["analyze", "--config", &cfg, "--input", &input, "--output", out.to_str().unwrap(), "--mg-axis"]);
    assert_eq!(o.status.code(), Some(2));
}
