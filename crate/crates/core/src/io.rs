//! File formats: edge lists, graph JSON, dense matrices, observations and
//! time series (all CSV except the graph JSON).
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamic::{KkfParameters, TimeSeriesObservations};
use crate::error::{Error, Result};
use crate::graph::{validate_graph, Graph, GraphJson};
use crate::static_estimators::{Observation, SamplingMask};

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
    weight: f64,
}

/// Reads `src,dst,weight` rows (with header). Each undirected edge may be
/// listed once or in both directions with equal weight. `n` defaults to the
/// largest index plus one.
pub fn read_edge_list<R: Read>(reader: R, n: Option<usize>) -> Result<Graph> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut edges = BTreeMap::new();
    let mut max_index = None;
    for row in rdr.deserialize() {
        let EdgeRow { src, dst, weight } = row?;
        max_index = Some(max_index.unwrap_or(0).max(src).max(dst));
        let key = (src.min(dst), src.max(dst));
        match edges.insert(key, weight) {
            Some(prev) if prev.to_bits() != weight.to_bits() => {
                return Err(Error::AsymmetricAdjacency(key.0, key.1));
            }
            _ => {}
        }
    }
    let inferred = max_index.map_or(0, |m| m + 1);
    let n = match n {
        Some(n) if n < inferred => return Err(Error::dim("vertex count", n, inferred)),
        Some(n) => n,
        None => inferred,
    };
    let mut a = DMatrix::zeros(n, n);
    for ((i, j), w) in edges {
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    validate_graph(a)
}

pub fn write_edge_list<W: Write>(g: &Graph, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (src, dst, weight) in g.edges() {
        wtr.serialize(EdgeRow { src, dst, weight })?;
    }
    if g.edge_count() == 0 {
        wtr.write_record(["src", "dst", "weight"])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_graph_json<R: Read>(reader: R) -> Result<Graph> {
    let json: GraphJson = serde_json::from_reader(reader)?;
    Graph::try_from(json)
}

pub fn write_graph_json<W: Write>(g: &Graph, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &GraphJson::from(g))?;
    Ok(())
}

/// Loads a graph from `.json` or edge-list `.csv` by extension.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_graph_json(file),
        _ => read_edge_list(file, None),
    }
}

pub fn save_graph(g: &Graph, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => write_graph_json(g, file),
        _ => write_edge_list(g, file),
    }
}

/// Dense matrix, one CSV row per matrix row, no header.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::dim("matrix row length", first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// A single column written as `value` rows.
pub fn write_vector_csv<W: Write>(v: &DVector<f64>, writer: W) -> Result<()> {
    write_matrix_csv(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()), writer)
}

pub fn read_vector_csv<R: Read>(reader: R) -> Result<DVector<f64>> {
    let m = read_matrix_csv(reader)?;
    if m.ncols() > 1 && m.nrows() > 1 {
        return Err(Error::dim("vector columns", 1, m.ncols()));
    }
    Ok(DVector::from_iterator(m.len(), m.iter().copied()))
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    vertex_index: usize,
    value: f64,
}

/// `vertex_index,value` rows (with header), in any order.
pub fn read_observations<R: Read>(reader: R, n: usize) -> Result<Observation> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for row in rdr.deserialize() {
        let ObservationRow { vertex_index, value } = row?;
        rows.push((vertex_index, value));
    }
    observation_from_rows(rows, n)
}

fn observation_from_rows(mut rows: Vec<(usize, f64)>, n: usize) -> Result<Observation> {
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse(format!("vertex {} sampled twice", w[0].0)));
    }
    let (idx, vals): (Vec<usize>, Vec<f64>) = rows.into_iter().unzip();
    Observation::new(SamplingMask::new(idx, n)?, DVector::from_vec(vals))
}

pub fn write_observations<W: Write>(obs: &Observation, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (&vertex_index, &value) in obs.mask().indices().iter().zip(obs.y().iter()) {
        wtr.serialize(ObservationRow { vertex_index, value })?;
    }
    if obs.is_empty() {
        wtr.write_record(["vertex_index", "value"])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    t: usize,
    vertex_index: usize,
    value: f64,
}

/// `t,vertex_index,value` rows (with header, `t` 0-based). `t_len` defaults
/// to the largest slot index plus one; slots without rows are empty.
pub fn read_time_series<R: Read>(reader: R, n: usize, t_len: Option<usize>) -> Result<TimeSeriesObservations> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut per_slot: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let SeriesRow { t, vertex_index, value } = row?;
        per_slot.entry(t).or_default().push((vertex_index, value));
    }
    let inferred = per_slot.keys().next_back().map_or(0, |t| t + 1);
    let t_len = match t_len {
        Some(t) if t < inferred => return Err(Error::dim("slot count", t, inferred)),
        Some(t) => t,
        None => inferred,
    };
    let slots = (0..t_len)
        .map(|t| observation_from_rows(per_slot.remove(&t).unwrap_or_default(), n))
        .collect::<Result<Vec<_>>>()?;
    TimeSeriesObservations::new(n, slots)
}

pub fn write_time_series<W: Write>(series: &TimeSeriesObservations, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut any = false;
    for (t, obs) in series.slots().iter().enumerate() {
        for (&vertex_index, &value) in obs.mask().indices().iter().zip(obs.y().iter()) {
            wtr.serialize(SeriesRow { t, vertex_index, value })?;
            any = true;
        }
    }
    if !any {
        wtr.write_record(["t", "vertex_index", "value"])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `P_<t>.csv` (t = 2..T) and `Q_<t>.csv` (t = 1..T) into `dir`.
pub fn export_kkf_parameters(params: &KkfParameters, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (k, p) in params.transitions().iter().enumerate() {
        write_matrix_csv(p, File::create(dir.join(format!("P_{}.csv", k + 2)))?)?;
    }
    for (k, q) in params.noise().iter().enumerate() {
        write_matrix_csv(q, File::create(dir.join(format!("Q_{}.csv", k + 1)))?)?;
    }
    Ok(())
}

/// Serializes rows of any `Serialize` record type as CSV with a header.
pub fn write_records<W: Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
