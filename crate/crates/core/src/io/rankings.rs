//! `list_id,rank,item` CSV files, one row per ranked choice.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::crm::ItemRegistry;
use crate::error::{Error, Result};
use crate::pl::{PartialRanking, RankingDataset};

const HEADER: [&str; 3] = ["list_id", "rank", "item"];

fn input(line: u64, message: impl Into<String>) -> Error {
    Error::Input { line: line as usize, message: message.into() }
}

pub fn parse_rankings(path: &Path) -> Result<RankingDataset> {
    parse_rankings_from(std::fs::File::open(path)?)
}

/// Lists keep their order of first appearance and items are registered list
/// by list in rank order, so row order within the file does not matter.
pub fn parse_rankings_from<R: Read>(reader: R) -> Result<RankingDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| input(1, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(input(1, "empty file"));
    }
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(input(1, format!("expected header `list_id,rank,item`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    struct List {
        first_line: u64,
        rows: Vec<(u32, String)>,
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut lists: Vec<(String, List)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(input(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let (id, rank, item) = (&rec[0], &rec[1], &rec[2]);
        if id.is_empty() || item.is_empty() {
            return Err(input(line, "list_id and item must be non-empty"));
        }
        let rank: u32 = rank.parse().map_err(|_| input(line, format!("rank `{rank}` is not a positive integer")))?;
        if rank == 0 {
            return Err(input(line, "ranks start at 1"));
        }
        let slot = *index.entry(id.to_owned()).or_insert_with(|| {
            lists.push((id.to_owned(), List { first_line: line, rows: Vec::new() }));
            lists.len() - 1
        });
        let list = &mut lists[slot].1;
        if list.rows.iter().any(|(r, _)| *r == rank) {
            return Err(input(line, format!("list `{id}` has rank {rank} twice")));
        }
        if list.rows.iter().any(|(_, it)| it == item) {
            return Err(input(line, format!("list `{id}` ranks item `{item}` twice")));
        }
        list.rows.push((rank, item.to_owned()));
    }
    if lists.is_empty() {
        return Err(input(1, "no rankings"));
    }
    let mut registry = ItemRegistry::new();
    let mut rankings = Vec::with_capacity(lists.len());
    let mut labels = Vec::with_capacity(lists.len());
    for (id, mut list) in lists {
        list.rows.sort_by_key(|(r, _)| *r);
        if let Some(gap) = list.rows.iter().enumerate().find(|(i, (r, _))| *r as usize != i + 1) {
            return Err(input(list.first_line, format!("list `{id}` skips rank {}", gap.0 + 1)));
        }
        let items = list.rows.iter().map(|(_, it)| registry.intern(it)).collect();
        rankings.push(PartialRanking::new(items)?);
        labels.push(id);
    }
    RankingDataset::with_list_labels(rankings, registry, labels)
}

pub fn write_rankings<W: Write>(data: &RankingDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Io(e.into());
    w.write_record(HEADER).map_err(err)?;
    for (label, r) in data.list_labels().iter().zip(data.rankings()) {
        for (p, it) in r.items().iter().enumerate() {
            let item = data.registry().label(*it).ok_or(Error::UnknownItem(*it))?;
            w.write_record([label.as_str(), &(p + 1).to_string(), item]).map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rankings_file(data: &RankingDataset, path: &Path) -> Result<()> {
    write_rankings(data, std::io::BufWriter::new(std::fs::File::create(path)?))
}
