//! word2vec-style table files.
//!
//! Text: a header `count dim [space=NAME] [order=sorted|insertion]`, then one
//! `key v1 ... vD` row per entry. Values use the shortest decimal rendering
//! that parses back to the same `f64`, so text round trips are bit-exact.
//!
//! Binary: the same header line, then per entry `key`, one space, `dim`
//! little-endian `f32` values and a newline. Values are rounded to `f32`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingTable, KeyOrder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Binary,
}

impl TableFormat {
    /// `.bin` files are binary, everything else is text.
    pub fn for_path(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => TableFormat::Binary,
            _ => TableFormat::Text,
        }
    }
}

pub fn save_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    match TableFormat::for_path(path) {
        TableFormat::Text => save_table_text(table, path),
        TableFormat::Binary => save_table_binary(table, path),
    }
}

pub fn load_table(path: &Path) -> Result<EmbeddingTable> {
    match TableFormat::for_path(path) {
        TableFormat::Text => load_table_text(path),
        TableFormat::Binary => load_table_binary(path),
    }
}

fn header(table: &EmbeddingTable) -> Result<String> {
    let name = table.space_name();
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::Invalid(format!("space name `{name}` must be a non-empty single word")));
    }
    Ok(format!(
        "{} {} space={} order={}",
        table.len(),
        table.dim(),
        name,
        table.order().as_str()
    ))
}

struct Header {
    count: usize,
    dim: usize,
    space: String,
    order: KeyOrder,
}

fn parse_header(line: &str, file: &str) -> Result<Header> {
    let bad = |m: String| Error::parse(file, 1, m);
    let mut tok = line.split_ascii_whitespace();
    let count = tok
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("header must start with `count dim`".into()))?;
    let dim = tok
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&d: &usize| d > 0)
        .ok_or_else(|| bad("header must start with `count dim`".into()))?;
    let mut h = Header {
        count,
        dim,
        space: "unnamed".into(),
        order: KeyOrder::Insertion,
    };
    for extra in tok {
        match extra.split_once('=') {
            Some(("space", v)) => h.space = v.to_string(),
            Some(("order", v)) => h.order = KeyOrder::parse(v).ok_or_else(|| bad(format!("unknown key order `{v}`")))?,
            _ => return Err(bad(format!("unexpected header field `{extra}`"))),
        }
    }
    Ok(h)
}

pub fn save_table_text(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header(table)?).map_err(io)?;
    for (key, v) in table.iter() {
        w.write_all(key.as_bytes()).map_err(io)?;
        for x in v {
            write!(w, " {x:?}").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_table_text(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::parse(&name, 1, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let h = parse_header(&first, &name)?;
    let mut table = EmbeddingTable::new(h.space, h.dim, h.order)?;
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_ascii_whitespace();
        let key = tok.next().unwrap_or_default().to_string();
        let values = tok
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(&name, line_no, format!("bad or non-finite value `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != h.dim {
            return Err(Error::parse(
                &name,
                line_no,
                format!("expected {} values, found {}", h.dim, values.len()),
            ));
        }
        table
            .push(key, values)
            .map_err(|e| Error::parse(&name, line_no, e.to_string()))?;
    }
    if table.len() != h.count {
        return Err(Error::parse(
            &name,
            1,
            format!("header announces {} rows, file has {}", h.count, table.len()),
        ));
    }
    Ok(table)
}

pub fn save_table_binary(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header(table)?).map_err(io)?;
    for (key, v) in table.iter() {
        w.write_all(key.as_bytes()).map_err(io)?;
        w.write_all(b" ").map_err(io)?;
        for &x in v {
            w.write_all(&(x as f32).to_le_bytes()).map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_table_binary(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut r = BufReader::new(file);
    let mut first = String::new();
    r.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let h = parse_header(first.trim_end(), &name)?;
    let mut table = EmbeddingTable::new(h.space, h.dim, h.order)?;
    let mut buf = vec![0u8; 4 * h.dim];
    for row in 0..h.count {
        let entry = row + 1;
        let mut key = Vec::new();
        r.read_until(b' ', &mut key).map_err(|e| Error::io(path, e))?;
        if key.pop() != Some(b' ') {
            return Err(Error::parse(&name, entry, "truncated entry key"));
        }
        let key = String::from_utf8(key)
            .map_err(|_| Error::parse(&name, entry, "key is not UTF-8"))?
            .trim_start_matches('\n')
            .to_string();
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(&name, entry, format!("truncated vector for `{key}`")))?;
        let values: Vec<f64> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(&name, entry, format!("non-finite value for `{key}`")));
        }
        table.push(key, values).map_err(|e| Error::parse(&name, entry, e.to_string()))?;
    }
    Ok(table)
}
