//! Plain-text parameter files.
//!
//! ```text
//! isac-checkpoint 1
//! meta <key> <value ...>
//! tensor <name> <rows> <cols>
//! <row 0 values, space separated>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip `f64` formatting, so save/load is
//! lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &str = "isac-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: &str) {
        assert!(!key.contains(char::is_whitespace), "meta keys are single tokens");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.meta.push((key.to_string(), value.to_string())),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key).ok_or_else(|| Error::Checkpoint(format!("missing meta {key}")))?;
        raw.parse().map_err(|_| Error::Checkpoint(format!("bad value for {key}: {raw:?}")))
    }

    pub fn push_tensor(&mut self, name: &str, m: Matrix) {
        self.tensors.retain(|(n, _)| n != name);
        self.tensors.push((name.to_string(), m));
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{MAGIC}")?;
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}")?;
        }
        for (name, m) in &self.tensors {
            writeln!(out, "tensor {name} {} {}", m.rows(), m.cols())?;
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|x| x.to_string()).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        match lines.next() {
            Some((_, Ok(l))) if l.trim() == MAGIC => {}
            Some((i, Ok(_))) => return Err(bad(i, "not an isac checkpoint")),
            Some((_, Err(e))) => return Err(e.into()),
            None => return Err(Error::Checkpoint("empty file".into())),
        }
        let mut ck = Checkpoint::new();
        while let Some((i, line)) = lines.next() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(bad(i, "tensor header needs name, rows, cols"));
                }
                let rows: usize = f[1].parse().map_err(|_| bad(i, "rows"))?;
                let cols: usize = f[2].parse().map_err(|_| bad(i, "cols"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (j, row) = lines.next().ok_or_else(|| bad(i, "truncated tensor"))?;
                    let row = row?;
                    let before = data.len();
                    for tok in row.split_whitespace() {
                        data.push(tok.parse::<f64>().map_err(|_| bad(j, "bad number"))?);
                    }
                    if data.len() - before != cols {
                        return Err(bad(j, "row width differs from header"));
                    }
                }
                ck.tensors.push((f[0].to_string(), Matrix::from_vec(rows, cols, data)?));
            } else {
                return Err(bad(i, "expected meta or tensor"));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless_round_trip() {
        let mut ck = Checkpoint::new();
        ck.set_meta("nodes", "4");
        ck.set_meta("note", "two words");
        ck.push_tensor("w0", Matrix::from_fn(3, 2, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.37) / 7.0));
        ck.push_tensor("empty", Matrix::zeros(0, 5));
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("note"), Some("two words"));
        assert_eq!(back.meta_parse::<usize>("nodes").unwrap(), 4);
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        assert!(Checkpoint::read("hello\n".as_bytes()).is_err());
        assert!(Checkpoint::read("isac-checkpoint 1\ntensor a 2 2\n1 2\n".as_bytes()).is_err());
        assert!(Checkpoint::read("isac-checkpoint 1\ntensor a 1 2\n1 2 3\n".as_bytes()).is_err());
    }
}
