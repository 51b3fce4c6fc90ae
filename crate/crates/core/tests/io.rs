use std::io::Cursor;
use std::time::Instant;

use bnpl::io::{
    parse_rankings, parse_rankings_from, read_trace, read_trace_from, run_fit, run_summarize, trace_header, write_rankings,
    write_trace, ModelKind, RunConfig, SummarizeOptions,
};
use bnpl::simulate::PlantedClusters;
use bnpl::summaries::{
    dahl_point_estimate, posterior_mean_weights, ClusterWeights, CoClustering, McmcTrace, Snapshot,
};
use bnpl::{Error, RankingDataset};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn parse(text: &str) -> bnpl::Result<RankingDataset> {
    parse_rankings_from(Cursor::new(text.as_bytes().to_vec()))
}

fn to_csv(data: &RankingDataset) -> String {
    let mut out = Vec::new();
    write_rankings(data, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn two_applicants() {
    let mut text = String::from("list_id,rank,item\n");
    for r in 1..=10 {
        text += &format!("A1,{r},p{r}\n");
    }
    for r in 1..=5 {
        text += &format!("A2,{r},q{r}\n");
    }
    let d = parse(&text).unwrap();
    assert_eq!(d.num_lists(), 2);
    assert_eq!(d.lengths(), vec![10, 5]);
    assert_eq!(d.num_items(), 15);
    assert_eq!(d.list_labels(), &["A1", "A2"]);
    assert!(d.counts().iter().all(|&n| n == 1));
}

#[test]
fn single_row() {
    let d = parse("list_id,rank,item\n1,1,A\n").unwrap();
    assert_eq!((d.num_lists(), d.lengths(), d.num_items()), (1, vec![1], 1));
}

#[test]
fn ingestion_errors_are_located() {
    let gap = parse("list_id,rank,item\nx,1,a\nbob,1,a\nbob,3,b\n").unwrap_err();
    assert!(matches!(gap, Error::Input { .. }));
    assert!(gap.to_string().contains("bob"), "{gap}");
    assert_eq!(gap.exit_code(), 2);

    let dup_rank = parse("list_id,rank,item\nx,1,a\nx,1,b\n").unwrap_err();
    assert!(matches!(dup_rank, Error::Input { line: 3, .. }), "{dup_rank}");
    let dup_item = parse("list_id,rank,item\nx,1,a\nx,2,a\n").unwrap_err();
    assert!(matches!(dup_item, Error::Input { line: 3, .. }), "{dup_item}");
    assert!(matches!(parse(""), Err(Error::Input { line: 1, .. })));
    assert!(matches!(parse("list_id,rank,item\n"), Err(Error::Input { .. })));
    assert!(matches!(parse("id,pos,item\nx,1,a\n"), Err(Error::Input { line: 1, .. })));
    assert!(matches!(parse("list_id,rank,item\nx,0,a\n"), Err(Error::Input { line: 2, .. })));
    assert!(matches!(parse("list_id,rank,item\nx,one,a\n"), Err(Error::Input { line: 2, .. })));
}

#[test]
fn row_order_within_the_file_is_irrelevant() {
    let a = parse("list_id,rank,item\nx,1,a\nx,2,b\ny,1,c\ny,2,a\n").unwrap();
    let b = parse("list_id,rank,item\nx,2,b\ny,2,a\nx,1,a\ny,1,c\n").unwrap();
    assert_eq!(a, b);
}

fn small_config(model: ModelKind, iterations: u64, burn_in: u64, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(model);
    c.iterations = iterations;
    c.burn_in = burn_in;
    c.seed = Some(seed);
    c
}

fn toy() -> RankingDataset {
    RankingDataset::from_labels(&[vec!["a", "b", "c"], vec!["b", "a"], vec!["c", "d"], vec!["a"]]).unwrap()
}

#[test]
fn run_fit_keeps_the_requested_snapshots() {
    let data = toy();
    for model in [ModelKind::Single, ModelKind::Mixture, ModelKind::GeneralCrm] {
        let mut c = small_config(model, 10, 5, 1);
        let trace = run_fit(&c, &data, None, &mut |_| {}).unwrap();
        assert_eq!(trace.len(), 5);
        assert_eq!(trace.snapshots().iter().map(|s| s.iter).collect::<Vec<_>>(), vec![6, 7, 8, 9, 10]);
        c.thin = 2;
        assert_eq!(run_fit(&c, &data, None, &mut |_| {}).unwrap().len(), 3);
    }
}

#[test]
fn run_fit_validates_the_config() {
    let data = toy();
    let c = small_config(ModelKind::Single, 5, 5, 1);
    let e = run_fit(&c, &data, None, &mut |_| {}).unwrap_err();
    assert!(matches!(e, Error::Config(_)));
    assert_eq!(e.exit_code(), 3);
    let mut strict = small_config(ModelKind::Mixture, 10, 5, 1);
    strict.tau = 2.0;
    assert!(matches!(run_fit(&strict, &data, None, &mut |_| {}), Err(Error::Config(_))));
    assert!(RunConfig::from_json("{\"model\": \"single\", \"bogus\": 1}").is_err());
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let data = toy();
    let mut c = small_config(ModelKind::Single, 4, 2, 0);
    c.seed = None;
    let dir = tempdir().unwrap();
    let path = dir.path().join("t.ndjson");
    let trace = run_fit(&c, &data, Some(&path), &mut |_| {}).unwrap();
    let (h, back) = read_trace(&path).unwrap();
    assert_eq!(h.seed, trace.seed);
    assert_eq!(h.config.seed, Some(trace.seed));
    // the recorded seed and config reproduce the run
    let again = run_fit(&h.config, &data, None, &mut |_| {}).unwrap();
    assert_eq!(again.snapshots(), back.snapshots());
}

#[test]
fn reruns_are_bitwise_identical() {
    let data = toy();
    let dir = tempdir().unwrap();
    for model in [ModelKind::Single, ModelKind::Mixture, ModelKind::GeneralCrm] {
        let c = small_config(model, 200, 100, 77);
        let (p1, p2) = (dir.path().join("a.ndjson"), dir.path().join("b.ndjson"));
        run_fit(&c, &data, Some(&p1), &mut |_| {}).unwrap();
        run_fit(&c, &data, Some(&p2), &mut |_| {}).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap(), "{model:?}");
    }
}

#[test]
fn progress_reports_throughput() {
    let data = toy();
    let c = small_config(ModelKind::Mixture, 300, 100, 5);
    let mut seen = Vec::new();
    run_fit(&c, &data, None, &mut |p| seen.push((p.sweep, p.total, p.sweeps_per_minute))).unwrap();
    assert_eq!(seen.last().unwrap().0, 300);
    assert!(seen.iter().all(|&(_, t, r)| t == 300 && r > 0.0));
}

#[test]
fn damaged_traces_are_detected() {
    let data = toy();
    let dir = tempdir().unwrap();
    let path = dir.path().join("t.ndjson");
    run_fit(&small_config(ModelKind::Mixture, 20, 10, 3), &data, Some(&path), &mut |_| {}).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);

    // change one value in the third snapshot without updating its checksum
    let mut bad: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    bad[3] = bad[3].replacen("\"iter\":13", "\"iter\":14", 1);
    assert_ne!(bad[3], lines[3]);
    let e = read_trace_from(Cursor::new(bad.join("\n") + "\n")).unwrap_err();
    assert!(matches!(e, Error::CorruptTrace { line: 4, .. }), "{e}");

    let e = read_trace_from(Cursor::new(format!("{}\nnot json\n{}\n", lines[0], lines[1]))).unwrap_err();
    assert!(matches!(e, Error::CorruptTrace { line: 2, .. }));

    // an interrupted final append is dropped
    let cut = format!("{}\n{}", lines[..5].join("\n"), &lines[5][..lines[5].len() / 2]);
    let (_, t) = read_trace_from(Cursor::new(cut)).unwrap();
    assert_eq!(t.len(), 4);

    let e = read_trace_from(Cursor::new(String::new())).unwrap_err();
    assert!(matches!(e, Error::CorruptTrace { .. }));
    assert!(matches!(read_trace(&dir.path().join("missing")), Err(Error::Io(_))));
}

#[test]
fn summarize_single_snapshot() {
    let data = toy();
    let dir = tempdir().unwrap();
    let path = dir.path().join("t.ndjson");
    let c = small_config(ModelKind::Mixture, 3, 2, 4);
    let trace = run_fit(&c, &data, Some(&path), &mut |_| {}).unwrap();
    assert_eq!(trace.len(), 1);
    let out = dir.path().join("s");
    let s = run_summarize(&path, &out, Some(&data), &SummarizeOptions { conditional_iterations: 50, conditional_burn_in: 10, ..Default::default() }).unwrap();
    assert_eq!(s.dahl.index, 0);
    let same = |a: &[u32], b: &[usize]| {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    };
    assert!(same(&trace.snapshots()[0].assignments, s.dahl.partition.labels()));
    let part = std::fs::read_to_string(out.join("partition.csv")).unwrap();
    assert_eq!(part.lines().count(), data.num_lists() + 1);
    for f in ["zeta.csv", "dahl.json", "cluster_weights.csv", "entropy.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let entropy = std::fs::read_to_string(out.join("entropy.csv")).unwrap();
    for row in entropy.lines().skip(1) {
        let h: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&h), "{row}");
    }
}

#[test]
fn summarize_needs_a_trace() {
    let dir = tempdir().unwrap();
    let e = run_summarize(&dir.path().join("none.ndjson"), dir.path(), None, &SummarizeOptions::default()).unwrap_err();
    assert_eq!(e.exit_code(), 4);
}

fn two_groups(lists: usize, seed: u64) -> (RankingDataset, Vec<usize>) {
    let p = PlantedClusters { clusters: 2, lists, m: 5, items_per_cluster: 6, background: 6, dominance: 30.0 };
    p.generate(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn summarize_matches_in_process_summaries() {
    let (data, _) = two_groups(60, 8);
    let dir = tempdir().unwrap();
    let path = dir.path().join("t.ndjson");
    let c = small_config(ModelKind::Mixture, 600, 300, 9);
    let trace = run_fit(&c, &data, Some(&path), &mut |_| {}).unwrap();
    let opts = SummarizeOptions { conditional_iterations: 300, conditional_burn_in: 100, ..Default::default() };
    let s = run_summarize(&path, &dir.path().join("out"), Some(&data), &opts).unwrap();

    let zeta = CoClustering::from_trace(&trace).unwrap();
    let d = dahl_point_estimate(&trace, &zeta).unwrap();
    assert_eq!(s.dahl, d);

    let mut cond = c.clone();
    cond.fixed_partition = Some(d.partition.labels().to_vec());
    cond.burn_in = 100;
    cond.iterations = 400;
    cond.record_weights = true;
    let ct = run_fit(&cond, &data, None, &mut |_| {}).unwrap();
    assert_eq!(s.tables.unwrap(), posterior_mean_weights(&ct, &d.partition).unwrap());

    // the written partition is the in-process one
    let part = std::fs::read_to_string(dir.path().join("out/partition.csv")).unwrap();
    let labels: Vec<usize> = part.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(labels, d.partition.labels());
    let zrow = std::fs::read_to_string(dir.path().join("out/zeta.csv")).unwrap();
    let first: Vec<f64> = zrow.lines().nth(1).unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    assert_eq!(first, zeta.block(0..1)[0]);
}

#[test]
fn mixture_fit_throughput_at_two_hundred_lists() {
    let (data, _) = two_groups(200, 10);
    let c = small_config(ModelKind::Mixture, 2000, 1000, 11);
    let t = Instant::now();
    run_fit(&c, &data, None, &mut |_| {}).unwrap();
    let secs = t.elapsed().as_secs_f64();
    println!("2000 mixture sweeps at L=200: {secs:.1}s");
    assert!(secs < 300.0);
}

fn datasets() -> impl Strategy<Value = Vec<Vec<String>>> {
    proptest::collection::vec(proptest::collection::hash_set("[a-z]{1,3}", 1..6), 1..8)
        .prop_map(|ls| ls.into_iter().map(|s| s.into_iter().collect()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ingestion_round_trip(lists in datasets(), seed in 0u64..1000) {
        let data = RankingDataset::from_labels(&lists).unwrap();
        let text = to_csv(&data);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &data);
        // shuffled rows describe the same rankings
        let mut lines: Vec<&str> = text.lines().skip(1).collect();
        lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = parse(&format!("list_id,rank,item\n{}\n", lines.join("\n"))).unwrap();
        let named = |d: &RankingDataset| {
            let mut v: Vec<(String, Vec<String>)> = d
                .list_labels()
                .iter()
                .zip(d.rankings())
                .map(|(l, r)| (l.clone(), r.items().iter().map(|&i| d.registry().label(i).unwrap().to_owned()).collect()))
                .collect();
            v.sort();
            v
        };
        prop_assert_eq!(named(&shuffled), named(&data));
    }

    #[test]
    fn trace_round_trip(
        snaps in proptest::collection::vec((proptest::collection::vec(0u32..3, 4), 1e-300f64..1e300, proptest::option::of(any::<f64>().prop_filter("finite", |x| x.is_finite())), proptest::collection::vec(0.0f64..1.0, 3)), 1..6)
    ) {
        let data = toy();
        let mut c = RunConfig::new(ModelKind::Mixture);
        c.seed = Some(42);
        let header = trace_header(&c, &data).unwrap();
        let mut t = McmcTrace::new(42, header.config_sha.clone());
        for (i, (assign, alpha, phi, ws)) in snaps.into_iter().enumerate() {
            let s = Snapshot {
                iter: i as u64 * 3 + 1,
                assignments: assign,
                alpha,
                phi,
                gamma: Some(alpha.sqrt()),
                num_clusters: 3,
                weights: Some(vec![ClusterWeights::from_masses(&ws, 0.125)]),
            };
            t.push(s).unwrap();
        }
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        write_trace(&path, &header, &t).unwrap();
        let (h, back) = read_trace(&path).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back.snapshots(), t.snapshots());
        prop_assert_eq!(back.seed, 42);
    }
}

#[test]
fn parses_files_on_disk() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("r.csv");
    std::fs::write(&p, "list_id,rank,item\nu,1,x\nu,2,y\n").unwrap();
    assert_eq!(parse_rankings(&p).unwrap().lengths(), vec![2]);
    assert!(matches!(parse_rankings(&dir.path().join("nope.csv")), Err(Error::Io(_))));
}
