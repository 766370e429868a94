//! File formats.
//!
//! Snapshots are CSV `t,u,v` (0-based, one row per undirected edge) with
//! an optional JSON sidecar `<stem>.meta.json` holding `n` and `snapshots`;
//! without it both are inferred from the largest ids. Masks are CSV `t,i,m`
//! where unlisted entries are majority. Memberships are CSV `node,label`
//! (1-based labels) or `t,node,label` for one membership per snapshot.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use graphseq_core::{Adjacency, GraphSequence, MajorityMask, Membership};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> EvalError {
    EvalError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> EvalError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => EvalError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(path, line, format!("{other:?}")),
    }
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| EvalError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value).map_err(|source| EvalError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load_meta(path: &Path) -> Result<Meta> {
    let side = sidecar_path(path);
    if side.exists() {
        load_json(&side)
    } else {
        Ok(Meta::default())
    }
}

/// Reads integer rows with the expected header; yields `(line, values)`.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, Vec<usize>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse_err(path, 1, format!("expected header {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields", header.len())));
        }
        let values = record
            .iter()
            .map(|f| f.parse::<usize>().map_err(|_| parse_err(path, line, format!("'{f}' is not a non-negative integer"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub fn load_snapshots(path: &Path) -> Result<GraphSequence> {
    let meta = load_meta(path)?;
    let rows = read_rows(path, &["t", "u", "v"])?;
    let n = meta
        .n
        .unwrap_or_else(|| rows.iter().map(|(_, r)| r[1].max(r[2]) + 1).max().unwrap_or(0));
    let snapshots = meta
        .snapshots
        .unwrap_or_else(|| rows.iter().map(|(_, r)| r[0] + 1).max().unwrap_or(0));
    if n == 0 || snapshots == 0 {
        return Err(parse_err(path, 1, "no edges and no sidecar giving n and the snapshot count"));
    }
    let mut adj = vec![Adjacency::empty(n); snapshots];
    let mut seen = HashSet::new();
    for (line, r) in rows {
        let (t, u, v) = (r[0], r[1].min(r[2]), r[1].max(r[2]));
        if t >= snapshots {
            return Err(parse_err(path, line, format!("snapshot {t} out of range 0..{snapshots}")));
        }
        if v >= n {
            return Err(parse_err(path, line, format!("node {v} out of range 0..{n}")));
        }
        if u == v {
            return Err(parse_err(path, line, format!("self-loop on node {u}")));
        }
        if !seen.insert((t, u, v)) {
            log::warn!("{}:{line}: duplicate edge ({u},{v}) at t={t} ignored", path.display());
            continue;
        }
        adj[t].set_edge(u, v, true);
    }
    Ok(GraphSequence::new(adj)?)
}

pub fn save_snapshots(seq: &GraphSequence, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "u", "v"]).map_err(|e| csv_err(path, e))?;
    for (t, a) in seq.snapshots().iter().enumerate() {
        for (u, v) in a.edges() {
            w.serialize((t, u, v)).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    save_json(
        &Meta {
            n: Some(seq.n()),
            snapshots: Some(seq.len()),
            k: None,
        },
        &sidecar_path(path),
    )
}

pub fn load_mask(path: &Path, steps: usize, n: usize) -> Result<MajorityMask> {
    let mut mask = MajorityMask::all_majority(steps, n);
    for (line, r) in read_rows(path, &["t", "i", "m"])? {
        let (t, i, m) = (r[0], r[1], r[2]);
        if t >= steps || i >= n {
            return Err(parse_err(path, line, format!("entry ({t},{i}) outside {steps}x{n}")));
        }
        if m > 1 {
            return Err(parse_err(path, line, format!("mask value {m} is not 0 or 1")));
        }
        mask.set(t, i, m == 1);
    }
    Ok(mask)
}

/// Writes the minority entries only.
pub fn save_mask(mask: &MajorityMask, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "i", "m"]).map_err(|e| csv_err(path, e))?;
    for t in 0..mask.steps() {
        for i in mask.minorities(t) {
            w.serialize((t, i, 0)).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn membership_from_rows(path: &Path, rows: &[(usize, usize, usize)], k: Option<usize>) -> Result<Membership> {
    let n = rows.len();
    let mut labels = vec![0usize; n];
    for &(line, node, label) in rows {
        if node >= n {
            return Err(parse_err(path, line, format!("node {node} out of range 0..{n}")));
        }
        if labels[node] != 0 {
            return Err(parse_err(path, line, format!("node {node} listed twice")));
        }
        if label == 0 {
            return Err(parse_err(path, line, "labels are 1-based"));
        }
        labels[node] = label;
    }
    let k = k.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0).max(2));
    Ok(Membership::new(labels, k)?)
}

pub fn load_membership(path: &Path, k: Option<usize>) -> Result<Membership> {
    let k = k.or(load_meta(path)?.k);
    let rows: Vec<_> = read_rows(path, &["node", "label"])?
        .into_iter()
        .map(|(line, r)| (line, r[0], r[1]))
        .collect();
    membership_from_rows(path, &rows, k)
}

pub fn save_membership(g: &Membership, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["node", "label"]).map_err(|e| csv_err(path, e))?;
    for i in 0..g.n() {
        w.serialize((i, g.label(i))).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))?;
    save_json(
        &Meta {
            n: Some(g.n()),
            snapshots: None,
            k: Some(g.k()),
        },
        &sidecar_path(path),
    )
}

/// One membership per snapshot, from CSV `t,node,label`.
pub fn load_memberships(path: &Path, k: Option<usize>) -> Result<Vec<Membership>> {
    let k = k.or(load_meta(path)?.k);
    let mut by_t: BTreeMap<usize, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for (line, r) in read_rows(path, &["t", "node", "label"])? {
        by_t.entry(r[0]).or_default().push((line, r[1], r[2]));
    }
    if let Some((&last, _)) = by_t.iter().next_back() {
        if last + 1 != by_t.len() {
            return Err(parse_err(path, 1, "snapshot indices are not contiguous from 0"));
        }
    }
    let out: Vec<Membership> = by_t
        .values()
        .map(|rows| membership_from_rows(path, rows, k))
        .collect::<Result<_>>()?;
    let k = out.iter().map(Membership::k).max().unwrap_or(2);
    out.into_iter()
        .map(|g| if g.k() == k { Ok(g) } else { Ok(Membership::from_indices(g.indices().to_vec(), k)?) })
        .collect()
}

pub fn save_memberships(gs: &[Membership], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "node", "label"]).map_err(|e| csv_err(path, e))?;
    for (t, g) in gs.iter().enumerate() {
        for i in 0..g.n() {
            w.serialize((t, i, g.label(i))).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    save_json(
        &Meta {
            n: gs.first().map(Membership::n),
            snapshots: Some(gs.len()),
            k: gs.iter().map(Membership::k).max(),
        },
        &sidecar_path(path),
    )
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphseq_core::generator::{gen_sequence, GenConfig, MinoritySchedule};
    use graphseq_core::{BlockMatrix, DynamicsParams};

    fn generated() -> graphseq_core::generator::Generated {
        let d = DynamicsParams::type2(BlockMatrix::planted(2, 0.4, 0.1).unwrap(), 0.5).unwrap();
        let cfg = GenConfig::changing(30, 4, d, MinoritySchedule::Fraction { fraction: 0.2, start: 1 }, 9);
        gen_sequence(&cfg).unwrap()
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snaps.csv");
        let gen = generated();
        save_snapshots(&gen.seq, &path).unwrap();
        assert_eq!(load_snapshots(&path).unwrap(), gen.seq);
    }

    #[test]
    fn mask_and_membership_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gen = generated();
        let mask_path = dir.path().join("mask.csv");
        save_mask(&gen.mask, &mask_path).unwrap();
        assert_eq!(load_mask(&mask_path, 3, 30).unwrap(), gen.mask);
        let gs: Vec<Membership> = (0..4).map(|t| gen.truth.at(t).clone()).collect();
        let p = dir.path().join("truth.csv");
        save_memberships(&gs, &p).unwrap();
        assert_eq!(load_memberships(&p, None).unwrap(), gs);
        let p = dir.path().join("g.csv");
        save_membership(&gs[0], &p).unwrap();
        assert_eq!(load_membership(&p, None).unwrap(), gs[0]);
    }

    #[test]
    fn duplicates_are_merged_and_bad_lines_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "t,u,v\n0,0,1\n0,1,0\n1,2,3\n").unwrap();
        let seq = load_snapshots(&path).unwrap();
        assert_eq!((seq.n(), seq.len()), (4, 2));
        assert_eq!(seq.snapshot(0).edge_count(), 1);

        std::fs::write(&path, "t,u,v\n0,0,1\n0,5,1\n").unwrap();
        save_json(&Meta { n: Some(4), snapshots: Some(1), k: None }, &sidecar_path(&path)).unwrap();
        match load_snapshots(&path) {
            Err(EvalError::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "t,u,v\n0,2,2\n").unwrap();
        assert!(matches!(load_snapshots(&path), Err(EvalError::Parse { line: 2, .. })));
        std::fs::write(&path, "t,u,v\n0,a,2\n").unwrap();
        assert!(matches!(load_snapshots(&path), Err(EvalError::Parse { line: 2, .. })));
    }
}
