//! Dataset directories and model checkpoints.
//!
//! A dataset directory holds five UTF-8 text files:
//!
//! - `edges.txt`: one `u v` pair of 0-based node ids per line, undirected
//! - `features.csv`: `n` lines of `d` comma-separated decimals
//! - `labels.txt`: `n` lines, one class id each
//! - `masks.txt`: lines `train:`, `val:`, `test:`, each followed by node ids
//! - `meta.txt`: `num_nodes=`, `num_classes=`, `feature_dim=`
//!
//! Blank lines and lines starting with `#` are skipped everywhere.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pown_core::encoder::GcnParams;
use pown_core::infomax::Discriminator;
use pown_core::prototype::PrototypeSet;
use pown_core::trainer::PownModel;
use pown_core::{DenseMatrix, Graph, SplitMasks};

use crate::error::{Error, Result};

/// A graph with its fixed node split, plus a display name.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub masks: SplitMasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Meta {
    num_nodes: usize,
    num_classes: usize,
    feature_dim: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `(line number, trimmed content)` of the lines that carry data.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: FromStr>(tok: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| Error::format(path, line, format!("invalid {what} `{tok}`")))
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = read(path)?;
    let (mut n, mut c, mut d) = (None, None, None);
    for (line, l) in data_lines(&text) {
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| Error::format(path, line, "expected key=value"))?;
        let slot = match key.trim() {
            "num_nodes" => &mut n,
            "num_classes" => &mut c,
            "feature_dim" => &mut d,
            other => return Err(Error::format(path, line, format!("unknown key `{other}`"))),
        };
        *slot = Some(parse_num(value, path, line, key.trim())?);
    }
    let missing = |k: &str| Error::format(path, 0, format!("missing `{k}`"));
    Ok(Meta {
        num_nodes: n.ok_or_else(|| missing("num_nodes"))?,
        num_classes: c.ok_or_else(|| missing("num_classes"))?,
        feature_dim: d.ok_or_else(|| missing("feature_dim"))?,
    })
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, l) in data_lines(&text) {
        let mut it = l.split_whitespace();
        let (Some(u), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::format(path, line, "expected `u v`"));
        };
        let u: usize = parse_num(u, path, line, "node id")?;
        let v: usize = parse_num(v, path, line, "node id")?;
        if u >= n || v >= n {
            return Err(Error::format(path, line, format!("node id out of range for {n} nodes")));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path, meta: Meta) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut data = Vec::with_capacity(meta.num_nodes * meta.feature_dim);
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let before = data.len();
        for tok in l.split(',') {
            data.push(parse_num::<f64>(tok, path, line, "feature value")?);
        }
        if data.len() - before != meta.feature_dim {
            return Err(Error::format(
                path,
                line,
                format!("{} values, expected {}", data.len() - before, meta.feature_dim),
            ));
        }
        rows += 1;
    }
    if rows != meta.num_nodes {
        return Err(Error::format(path, 0, format!("{rows} rows, expected {}", meta.num_nodes)));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::format(path, i / meta.feature_dim + 1, "non-finite feature value"));
    }
    Ok(DenseMatrix::from_vec(rows, meta.feature_dim, data)?)
}

fn read_labels(path: &Path, meta: Meta) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::with_capacity(meta.num_nodes);
    for (line, l) in data_lines(&text) {
        let y: usize = parse_num(l, path, line, "label")?;
        if y >= meta.num_classes {
            return Err(Error::format(path, line, format!("label {y} >= num_classes {}", meta.num_classes)));
        }
        labels.push(y);
    }
    if labels.len() != meta.num_nodes {
        return Err(Error::format(path, 0, format!("{} labels, expected {}", labels.len(), meta.num_nodes)));
    }
    Ok(labels)
}

fn read_masks(path: &Path, n: usize) -> Result<SplitMasks> {
    let text = read(path)?;
    let mut sets: [Option<Vec<usize>>; 3] = [None, None, None];
    for (line, l) in data_lines(&text) {
        let (key, rest) = l
            .split_once(':')
            .ok_or_else(|| Error::format(path, line, "expected `train:`, `val:` or `test:`"))?;
        let slot = match key.trim() {
            "train" => 0,
            "val" => 1,
            "test" => 2,
            other => return Err(Error::format(path, line, format!("unknown mask `{other}`"))),
        };
        if sets[slot].is_some() {
            return Err(Error::format(path, line, format!("mask `{}` given twice", key.trim())));
        }
        let ids = rest
            .split_whitespace()
            .map(|t| parse_num::<usize>(t, path, line, "node id"))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&v) = ids.iter().find(|&&v| v >= n) {
            return Err(Error::format(path, line, format!("node id {v} out of range for {n} nodes")));
        }
        sets[slot] = Some(ids);
    }
    let [Some(train), Some(val), Some(test)] = sets else {
        return Err(Error::format(path, 0, "need `train:`, `val:` and `test:` lines"));
    };
    SplitMasks::from_indices(n, &train, &val, &test).map_err(|e| Error::format(path, 0, e.to_string()))
}

/// Loads a dataset directory. The name is the directory's last component.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(&dir.join("meta.txt"))?;
    let features = read_features(&dir.join("features.csv"), meta)?;
    let labels = read_labels(&dir.join("labels.txt"), meta)?;
    let edges = read_edges(&dir.join("edges.txt"), meta.num_nodes)?;
    let masks = read_masks(&dir.join("masks.txt"), meta.num_nodes)?;
    let graph = Graph::new(features, &edges, labels, meta.num_classes)?;
    let name = dir
        .file_name()
        .map_or_else(|| dir.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset { name, graph, masks })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `dataset` in the directory format read by [`load_dataset`]. Each
/// undirected edge is written once with `u < v`.
pub fn save_dataset(dir: &Path, graph: &Graph, masks: &SplitMasks) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_lines(&dir.join("meta.txt"), |w| {
        writeln!(w, "num_nodes={}", graph.num_nodes())?;
        writeln!(w, "num_classes={}", graph.num_classes())?;
        writeln!(w, "feature_dim={}", graph.feature_dim())
    })?;
    write_lines(&dir.join("edges.txt"), |w| {
        for (u, v) in graph.edges() {
            if u < v {
                writeln!(w, "{u} {v}")?;
            }
        }
        Ok(())
    })?;
    write_lines(&dir.join("features.csv"), |w| {
        for row in graph.features().row_iter() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    write_lines(&dir.join("labels.txt"), |w| {
        graph.labels().iter().try_for_each(|y| writeln!(w, "{y}"))
    })?;
    write_lines(&dir.join("masks.txt"), |w| {
        for (key, ids) in [
            ("train", masks.train_nodes()),
            ("val", masks.validation_nodes()),
            ("test", masks.test_nodes()),
        ] {
            let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
            writeln!(w, "{key}: {}", ids.join(" "))?;
        }
        Ok(())
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"POWNCKP1";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.path, 0, format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice of length N"))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take()?);
        usize::try_from(v).map_err(|_| Error::format(self.path, 0, "size field overflows"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let len = rows
            .checked_mul(cols)
            .filter(|&l| l <= (self.bytes.len() - self.pos) / 8)
            .ok_or_else(|| Error::format(self.path, 0, format!("matrix {rows}x{cols} exceeds the file")))?;
        let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DenseMatrix::from_vec(rows, cols, data)?)
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    for x in m.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Serializes a trained model; see the README for the byte layout.
pub fn checkpoint_bytes(model: &PownModel) -> Vec<u8> {
    let p = &model.prototypes;
    let mut out = Vec::from(&CHECKPOINT_MAGIC[..]);
    put_u64(&mut out, model.encoder.num_layers());
    put_u64(&mut out, p.known_ids.len());
    put_u64(&mut out, p.new_ids.len());
    for &c in &model.known_classes {
        put_u64(&mut out, c);
    }
    for x in [model.encoder.dropout, p.tau_supervised, p.tau_pseudo] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for w in &model.encoder.weights {
        put_matrix(&mut out, w);
    }
    put_matrix(&mut out, &model.discriminator.weight);
    // known prototypes first, then new ones
    let order: Vec<usize> = p.known_ids.iter().chain(&p.new_ids).copied().collect();
    put_matrix(&mut out, &p.vectors.select_rows(&order));
    out
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<PownModel> {
    if bytes.get(..8) != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(Error::format(path, 0, "not a checkpoint (bad magic)"));
    }
    let mut c = Cursor { bytes, pos: 8, path };
    let layers = c.u64()?;
    let known = c.u64()?;
    let new = c.u64()?;
    if !(2..=3).contains(&layers) || known > bytes.len() {
        return Err(Error::format(path, 0, "implausible checkpoint header"));
    }
    let known_classes = (0..known).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
    let dropout = c.f64()?;
    let tau_supervised = c.f64()?;
    let tau_pseudo = c.f64()?;
    let weights = (0..layers).map(|_| c.matrix()).collect::<Result<Vec<_>>>()?;
    let discriminator = Discriminator::from_weight(c.matrix()?)?;
    let vectors = c.matrix()?;
    if c.pos != bytes.len() {
        return Err(Error::format(path, 0, "trailing bytes after checkpoint"));
    }
    if vectors.rows() != known + new {
        return Err(Error::format(path, 0, "prototype count disagrees with header"));
    }
    Ok(PownModel {
        encoder: GcnParams { weights, dropout },
        discriminator,
        prototypes: PrototypeSet {
            vectors,
            known_ids: (0..known).collect(),
            new_ids: (known..known + new).collect(),
            tau_supervised,
            tau_pseudo,
        },
        known_classes,
    })
}

pub fn save_checkpoint(path: &Path, model: &PownModel) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PownModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

/// `dir/name`, for building artifact paths.
pub(crate) fn artifact(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
