use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{ModelKind, RunConfig};
use super::trace::{read_trace, TraceHeader, TraceWriter, TRACE_VERSION};
use crate::error::{Error, Result};
use crate::mixture::{mixture_sweep, MixtureState};
use crate::pl::RankingDataset;
use crate::rng::StreamFactory;
use crate::single::{gen_crm_sweep, gibbs_sweep_single, GenCrmState, SingleModelState};
use crate::summaries::{
    dahl_auto, dahl_point_estimate, posterior_mean_weights, ClusterWeightTable, ClusterWeights, CoClustering, DahlEstimate,
    McmcTrace, Partition, Snapshot,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub sweep: u64,
    pub total: u64,
    pub sweeps_per_minute: f64,
    pub clusters: usize,
}

enum Chain {
    Single(SingleModelState),
    GenCrm(GenCrmState),
    Mixture(MixtureState),
}

pub fn trace_header(config: &RunConfig, data: &RankingDataset) -> Result<TraceHeader> {
    let seed = config.seed.ok_or_else(|| Error::Config("seed must be resolved before writing a trace".into()))?;
    Ok(TraceHeader {
        version: TRACE_VERSION,
        seed,
        config_sha: config.fingerprint(),
        model: config.model,
        config: config.clone(),
        items: data.registry().labels().to_vec(),
        lists: data.list_labels().to_vec(),
    })
}

/// Runs `config.iterations` sweeps and keeps every `thin`-th sweep after
/// burn-in. Snapshots are appended to `trace_path` as they are produced.
/// A missing seed is drawn and recorded in the returned trace.
pub fn run_fit(
    config: &RunConfig,
    data: &RankingDataset,
    trace_path: Option<&Path>,
    progress: &mut dyn FnMut(&Progress),
) -> Result<McmcTrace> {
    let mut config = config.clone();
    let seed = config.resolve_seed();
    config.validate()?;
    let header = trace_header(&config, data)?;
    let streams = StreamFactory::new(seed);
    let mut writer = trace_path.map(|p| TraceWriter::create(p, &header)).transpose()?;
    let mut trace = McmcTrace::new(seed, header.config_sha.clone());
    let mixture_cfg = config.mixture_config();
    let gen_cfg = if config.model == ModelKind::GeneralCrm { Some(config.gen_crm_config()?) } else { None };
    let mut chain = match config.model {
        ModelKind::Single => Chain::Single(SingleModelState::init(data, config.alpha, config.tau, &streams)?),
        ModelKind::GeneralCrm => Chain::GenCrm(GenCrmState::init(data, &config.crm_spec()?, &streams)?),
        ModelKind::Mixture => Chain::Mixture(match &config.fixed_partition {
            Some(labels) => MixtureState::from_assignments(data, &mixture_cfg, config.mixture_init(), labels.clone(), &streams)?,
            None => MixtureState::init(data, &mixture_cfg, config.mixture_init(), &streams)?,
        }),
    };
    let single_cfg = config.single_config();
    let every = (config.iterations / 100).max(1);
    let start = Instant::now();
    for sweep in 1..=config.iterations {
        match &mut chain {
            Chain::Single(s) => gibbs_sweep_single(s, data, &single_cfg, &streams)?,
            Chain::GenCrm(s) => gen_crm_sweep(s, data, gen_cfg.as_ref().expect("built above"), &streams)?,
            Chain::Mixture(s) => mixture_sweep(s, data, &mixture_cfg, &streams)?,
        }
        if sweep > config.burn_in && (sweep - config.burn_in - 1) % config.thin == 0 {
            let snap = snapshot(&chain, sweep, data.num_lists(), config.record_weights, config.alpha);
            if let Some(w) = writer.as_mut() {
                w.append(&snap)?;
            }
            trace.push(snap)?;
        }
        if sweep % every == 0 || sweep == config.iterations {
            let minutes = start.elapsed().as_secs_f64() / 60.0;
            let clusters = if let Chain::Mixture(s) = &chain { s.num_clusters() } else { 1 };
            progress(&Progress { sweep, total: config.iterations, sweeps_per_minute: sweep as f64 / minutes.max(1e-12), clusters });
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(trace)
}

fn snapshot(chain: &Chain, iter: u64, lists: usize, weights: bool, fixed_alpha: f64) -> Snapshot {
    match chain {
        Chain::Single(s) => Snapshot {
            iter,
            assignments: vec![0; lists],
            alpha: s.alpha,
            phi: None,
            gamma: None,
            num_clusters: 1,
            weights: weights.then(|| vec![ClusterWeights::from_masses(&s.weights, s.residual)]),
        },
        // the unranked mass is integrated out, so weights are relative to the ranked items
        Chain::GenCrm(s) => Snapshot {
            iter,
            assignments: vec![0; lists],
            alpha: fixed_alpha,
            phi: None,
            gamma: None,
            num_clusters: 1,
            weights: weights.then(|| vec![ClusterWeights::from_masses(&s.weights, 0.0)]),
        },
        Chain::Mixture(s) => Snapshot {
            iter,
            assignments: s.assignments.iter().map(|&a| a as u32).collect(),
            alpha: s.alpha,
            phi: Some(s.phi),
            gamma: Some(s.gamma),
            num_clusters: s.num_clusters(),
            weights: weights.then(|| s.clusters.iter().map(|c| ClusterWeights::from_masses(&c.weights, c.residual)).collect()),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummarizeOptions {
    /// Largest number of rankings for which the co-clustering matrix is held
    /// in memory and written out.
    pub dense_limit: usize,
    pub write_zeta: bool,
    /// Retained sweeps of the fixed-partition run for cluster weights.
    pub conditional_iterations: u64,
    pub conditional_burn_in: u64,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        Self { dense_limit: 5000, write_zeta: true, conditional_iterations: 2000, conditional_burn_in: 500 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub dahl: DahlEstimate,
    pub tables: Option<Vec<ClusterWeightTable>>,
}

#[derive(Serialize)]
struct DahlRecord<'a> {
    index: usize,
    iter: u64,
    score: f64,
    clusters: usize,
    sizes: &'a [usize],
    samples: usize,
}

/// Writes `partition.csv`, `dahl.json`, `zeta.csv` (when small enough) and,
/// when weights are available, `cluster_weights.csv` and `entropy.csv`.
///
/// Mixture traces with free assignments carry no usable weights; given the
/// dataset, a run with assignments held at the point estimate supplies them.
pub fn run_summarize(trace_path: &Path, out_dir: &Path, data: Option<&RankingDataset>, opts: &SummarizeOptions) -> Result<Summary> {
    let (header, trace) = read_trace(trace_path)?;
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    std::fs::create_dir_all(out_dir)?;
    let dahl = if opts.write_zeta && trace.num_lists() <= opts.dense_limit {
        let zeta = CoClustering::from_trace(&trace)?;
        write_zeta(&zeta, &header.lists, &out_dir.join("zeta.csv"))?;
        dahl_point_estimate(&trace, &zeta)?
    } else {
        dahl_auto(&trace, opts.dense_limit)?
    };
    write_partition(&dahl.partition, &header.lists, &out_dir.join("partition.csv"))?;
    let rec = DahlRecord {
        index: dahl.index,
        iter: dahl.iter,
        score: dahl.score,
        clusters: dahl.partition.num_clusters(),
        sizes: dahl.partition.sizes(),
        samples: trace.len(),
    };
    std::fs::write(out_dir.join("dahl.json"), serde_json::to_string_pretty(&rec).expect("json") + "\n")?;

    let trace_has_weights = trace.snapshots().iter().all(|s| s.weights.is_some());
    let tables = if trace_has_weights && (header.model != ModelKind::Mixture || header.config.fixed_partition.is_some()) {
        let labels = trace.snapshots()[0].assignments.iter().map(|&a| a as usize).collect();
        Some(posterior_mean_weights(&trace, &Partition::from_dense(labels)?)?)
    } else if let (Some(data), ModelKind::Mixture) = (data, header.model) {
        if data.registry().labels() != header.items.as_slice() || data.list_labels() != header.lists.as_slice() {
            return Err(Error::StateMismatch("dataset does not match the trace".into()));
        }
        let mut cfg = header.config.clone();
        cfg.fixed_partition = Some(dahl.partition.labels().to_vec());
        cfg.burn_in = opts.conditional_burn_in;
        cfg.iterations = opts.conditional_burn_in + opts.conditional_iterations;
        cfg.thin = 1;
        cfg.record_weights = true;
        let cond = run_fit(&cfg, data, Some(&out_dir.join("conditional.ndjson")), &mut |_| {})?;
        Some(posterior_mean_weights(&cond, &dahl.partition)?)
    } else {
        None
    };
    if let Some(t) = &tables {
        write_tables(t, &header.items, out_dir)?;
    }
    Ok(Summary { dahl, tables })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

fn write_zeta(zeta: &CoClustering, lists: &[String], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "list_id")?;
    for l in lists {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for (k, l) in lists.iter().enumerate() {
        write!(w, "{l}")?;
        for j in 0..zeta.size() {
            write!(w, ",{}", zeta.get(k, j))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_partition(p: &Partition, lists: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["list_id", "cluster"]).map_err(csv_err)?;
    for (l, &c) in lists.iter().zip(p.labels()) {
        w.write_record([l.as_str(), &c.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_tables(tables: &[ClusterWeightTable], items: &[String], out_dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("cluster_weights.csv")).map_err(csv_err)?;
    w.write_record(["cluster", "rank", "item", "weight"]).map_err(csv_err)?;
    for t in tables {
        for (r, (id, wt)) in t.entries.iter().enumerate() {
            let label = items.get(id.index()).map_or_else(|| id.to_string(), String::clone);
            w.write_record([t.cluster.to_string(), (r + 1).to_string(), label, wt.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    let mut e = csv::Writer::from_path(out_dir.join("entropy.csv")).map_err(csv_err)?;
    e.write_record(["cluster", "size", "entropy", "residual"]).map_err(csv_err)?;
    for t in tables {
        e.write_record([t.cluster.to_string(), t.size.to_string(), t.entropy.to_string(), t.residual.to_string()])
            .map_err(csv_err)?;
    }
    e.flush()?;
    Ok(())
}
