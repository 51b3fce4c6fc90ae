use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bnpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnpl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_toy(dir: &Path) -> std::path::PathBuf {
    let f = dir.join("r.csv");
    std::fs::write(&f, "list_id,rank,item\nu1,1,a\nu1,2,b\nu2,1,b\nu2,2,c\nu3,1,a\nu4,1,c\nu4,2,d\n").unwrap();
    f
}

#[test]
fn simulate_writes_its_tables() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = bnpl(&["simulate", "--alpha", "3", "--lists", "20", "--m", "4", "--replicates", "50", "--seed", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rankings = std::fs::read_to_string(out.join("rankings.csv")).unwrap();
    assert_eq!(rankings.lines().count(), 1 + 20 * 4);
    assert_eq!(std::fs::read_to_string(out.join("mean_items.csv")).unwrap().lines().count(), 21);
    assert_eq!(std::fs::read_to_string(out.join("heatmap.csv")).unwrap().lines().count(), 21);

    let planted = dir.path().join("planted");
    let o = bnpl(&["simulate", "--planted", "3", "--lists", "30", "--replicates", "5", "--seed", "2", "--out", p(&planted)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(planted.join("truth.csv")).unwrap().lines().count(), 31);
}

#[test]
fn fit_models_write_traces() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    for (cmd, extra) in [("fit", vec![]), ("fit-mixture", vec![]), ("fit-gencrm", vec!["--sigma", "0.3"])] {
        let trace = dir.path().join(format!("{cmd}.ndjson"));
        let mut args = vec![cmd, "--data", p(&data), "--iters", "20", "--burnin", "10", "--seed", "5", "--out", p(&trace)];
        args.extend(extra);
        let o = bnpl(&args);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&trace).unwrap();
        assert_eq!(text.lines().count(), 11, "{cmd}");
        assert!(text.lines().next().unwrap().contains("\"seed\":5"));
    }
}

#[test]
fn same_seed_same_trace() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    let (a, b) = (dir.path().join("a.ndjson"), dir.path().join("b.ndjson"));
    for t in [&a, &b] {
        let o = bnpl(&["fit-mixture", "--data", p(&data), "--iters", "100", "--seed", "9", "--out", p(t)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn chains_get_their_own_files() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    let out = dir.path().join("t.ndjson");
    let o = bnpl(&["fit", "--data", p(&data), "--iters", "30", "--seed", "1", "--chains", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c0 = std::fs::read(dir.path().join("t.chain0.ndjson")).unwrap();
    let c1 = std::fs::read(dir.path().join("t.chain1.ndjson")).unwrap();
    assert_ne!(c0, c1);
    assert_eq!(code(&bnpl(&["fit", "--data", p(&data), "--chains", "0", "--out", p(&out)])), 3);
}

#[test]
fn summarize_after_mixture_fit() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    let trace = dir.path().join("t.ndjson");
    assert_eq!(code(&bnpl(&["fit-mixture", "--data", p(&data), "--iters", "60", "--seed", "3", "--out", p(&trace)])), 0);
    let out = dir.path().join("summary");
    let o = bnpl(&["summarize", "--trace", p(&trace), "--data", p(&data), "--conditional-iters", "50", "--conditional-burnin", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["partition.csv", "dahl.json", "zeta.csv", "cluster_weights.csv", "entropy.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = bnpl(&["summarize", "--trace", p(&trace), "--out", p(&dir.path().join("bare"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));
}

#[test]
fn config_file_and_flags() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    let cfg = dir.path().join("c.json");
    let mut c = bnpl::io::RunConfig::new(bnpl::io::ModelKind::Single);
    c.iterations = 12;
    c.burn_in = 4;
    std::fs::write(&cfg, serde_json::to_string(&c).unwrap()).unwrap();
    let trace = dir.path().join("t.ndjson");
    let o = bnpl(&["fit", "--data", p(&data), "--config", p(&cfg), "--thin", "2", "--seed", "4", "--out", p(&trace)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 1 + 4);
    // a config for another model is refused
    assert_eq!(code(&bnpl(&["fit-mixture", "--data", p(&data), "--config", p(&cfg), "--out", p(&trace)])), 3);
}

#[test]
fn exit_codes() {
    let dir = tempdir().unwrap();
    let data = write_toy(dir.path());
    let out = dir.path().join("t.ndjson");
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&bnpl(&["fit", "--data", p(&missing), "--out", p(&out)])), 4);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "list_id,rank,item\nx,1,a\nx,3,b\n").unwrap();
    let o = bnpl(&["fit", "--data", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains('x'));

    assert_eq!(code(&bnpl(&["fit", "--data", p(&data), "--iters", "10", "--burnin", "10", "--out", p(&out)])), 3);
    assert_eq!(code(&bnpl(&["fit-mixture", "--data", p(&data), "--tau", "2", "--out", p(&out)])), 3);
    assert_eq!(code(&bnpl(&["fit", "--data", p(&data), "--sigma", "0.5", "--out", p(&out)])), 3);

    let corrupt = dir.path().join("c.ndjson");
    assert_eq!(code(&bnpl(&["fit", "--data", p(&data), "--iters", "10", "--seed", "1", "--out", p(&corrupt)])), 0);
    let text = std::fs::read_to_string(&corrupt).unwrap().replacen("\"iter\":7", "\"iter\":8", 1);
    std::fs::write(&corrupt, text).unwrap();
    assert_eq!(code(&bnpl(&["summarize", "--trace", p(&corrupt), "--out", p(&dir.path().join("s"))])), 2);

    assert_eq!(code(&bnpl(&["fit", "--schedule", "fancy", "--data", p(&data)])), 2);
}
