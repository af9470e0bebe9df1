use std::path::Path;
use std::process::{Command, Output};

fn ufm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ufm"));
    cmd.args(args).env_remove("UFM_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str], out: &Path) {
    let mut full = args.to_vec();
    full.extend(["--out-dir", out.to_str().unwrap()]);
    let o = ufm(&full, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(ufm(&["simulate", "--k", "4", "--r", "2", "--out-dir", out], &[]).status.code(), Some(0));

    let bad_k = ufm(&["simulate", "--k", "5", "--r", "10", "--out-dir", out], &[]);
    assert_eq!(bad_k.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_k.stderr).contains("k must be even and ≥ 4"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "k = 4\nR = 10\nlearning_rate = 0.1\n").unwrap();
    let unknown = ufm(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", out], &[]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("learning_rate"));

    assert_eq!(ufm(&["simulate", "--k", "4", "--r", "10", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(
        ufm(&["simulate", "--k", "4", "--r", "10", "--out-dir", out], &[("UFM_SEED", "x")]).status.code(),
        Some(2)
    );

    let diverged = ufm(&["simulate", "--k", "4", "--r", "10", "--eta", "2", "--steps", "100", "--out-dir", out], &[]);
    assert_eq!(diverged.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&diverged.stderr).contains("diverged at step"));

    assert_eq!(ufm(&["simulate", "--config", "/nonexistent/ufm.toml"], &[]).status.code(), Some(4));
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let blocked = blocker.join("sub");
    let io = ufm(&["theory", "--k", "4", "--r", "10", "--out-dir", blocked.to_str().unwrap()], &[]);
    assert_eq!(io.status.code(), Some(4));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "k = 4\nR = 2\n[init]\nkind = \"random\"\nseed = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let seed_of = |sub: &str, extra: &[&str], envs: &[(&str, &str)]| {
        let out = dir.path().join(sub);
        let mut args = vec!["theory", "--config", c, "--out-dir", out.to_str().unwrap()];
        args.extend(extra);
        assert!(ufm(&args, envs).status.success());
        let text = read(&out.join("resolved_config.toml"));
        let v: toml::Value = toml::from_str(&text).unwrap();
        v["init"]["seed"].as_integer().unwrap()
    };
    assert_eq!(seed_of("a", &[], &[]), 1);
    assert_eq!(seed_of("b", &[], &[("UFM_SEED", "5")]), 5);
    assert_eq!(seed_of("c", &["--seed", "2"], &[("UFM_SEED", "5")]), 2);
}

#[test]
fn resolved_config_round_trips_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(
        &["simulate", "--k", "6", "--r", "3", "--weighting-mode", "reweighted", "--gamma", "0.3", "--record-every", "25"],
        &a,
    );
    let resolved = a.join("resolved_config.toml");
    ok(&["simulate", "--config", resolved.to_str().unwrap()], &b);
    assert_eq!(read(&resolved), read(&b.join("resolved_config.toml")));
    assert_eq!(read(&a.join("trajectory.csv")), read(&b.join("trajectory.csv")));
    let digest = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&read(&p.join("manifest.json"))).unwrap();
        v["config_digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn gamma_zero_reweighting_is_vanilla() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v");
    let w = dir.path().join("w");
    ok(&["simulate", "--k", "4", "--r", "10", "--record-every", "3"], &v);
    ok(&["simulate", "--k", "4", "--r", "10", "--record-every", "3", "--weighting-mode", "reweighted", "--gamma", "0"], &w);
    assert_eq!(read(&v.join("trajectory.csv")), read(&w.join("trajectory.csv")));
}

#[test]
fn table_shapes_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--k", "4", "--r", "10", "--steps", "8003", "--record-every", "7", "--outputs", "trajectory,summary,confusion"],
        dir.path(),
    );
    let traj = read(&dir.path().join("trajectory.csv"));
    let mut rdr = csv::Reader::from_reader(traj.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.iter().filter(|h| h.starts_with("mode_factor_")).count(), 3);
    assert_eq!(header.iter().filter(|h| h.starts_with("theory_factor_")).count(), 3);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8003 / 7 + 1);
    assert_eq!(&rows[rows.len() - 1][0], "8001");

    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert!((summary["window"].as_f64().unwrap() - 2.162278).abs() < 1e-6);
    assert_eq!(summary["terminal_diagonal"], serde_json::Value::Bool(true));

    let confusion = read(&dir.path().join("confusion.csv"));
    assert_eq!(confusion.lines().count(), 1 + 4 * rows.len());
    assert!(confusion.starts_with("step,true_class,pred_1,pred_2,pred_3,pred_4\n"));
}

#[test]
fn other_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["spectrum", "--k", "4", "--r", "10", "--weighting-mode", "reweighted"], &s);
    let spec: serde_json::Value = serde_json::from_str(&read(&s.join("spectrum.json"))).unwrap();
    assert!((spec["lambdas"][1].as_f64().unwrap() - (10f64.sqrt() + 1.0) / 11f64.sqrt()).abs() < 1e-12);
    assert_eq!(spec["v"].as_array().unwrap().len(), 22);

    let w = dir.path().join("w");
    ok(&["sweep", "--k", "4", "--ratios", "1,10,100"], &w);
    let sweep = read(&w.join("sweep.csv"));
    let row: Vec<f64> = sweep.lines().nth(2).unwrap().split(',').take(3).map(|x| x.parse().unwrap()).collect();
    assert_eq!(row[0], 10.0);
    assert!((row[1] - (10f64.sqrt() - 1.0)).abs() < 1e-12);

    let c = dir.path().join("c");
    ok(&["compare-inits", "--k", "4", "--r", "10", "--seeds", "0,1", "--record-every", "5"], &c);
    assert_eq!(read(&c.join("compare.csv")).lines().count(), 4);

    let t = dir.path().join("t");
    ok(&["theory", "--k", "4", "--r", "10", "--steps", "100", "--record-every", "10", "--eta", "0.5"], &t);
    assert_eq!(read(&t.join("theory.csv")).lines().count(), 12);
}
