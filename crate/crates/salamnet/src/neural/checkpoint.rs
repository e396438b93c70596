//! Sectioned text checkpoint container.
//!
//! Layout:
//!
//! ```text
//! salamnet-checkpoint v1
//! field <key> <value>
//! ...
//! tensor <name> <rows> <cols>
//! <rows lines of cols space-separated values>
//! ...
//! blob <name> <line-count>
//! <raw lines>
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits so a reload reproduces the
//! exact f64 bits.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub fields: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
    pub blobs: Vec<(String, String)>,
}

const MAGIC: &str = "salamnet-checkpoint v1";

impl Checkpoint {
    pub fn field(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing field {key:?}")))
    }

    pub fn parse_field<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.field(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("field {key:?} has an invalid value")))
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
    }

    pub fn blob(&self, name: &str) -> Option<&str> {
        self.blobs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.fields {
            out.push_str(&format!("field {k} {v}\n"));
        }
        for t in &self.tensors {
            debug_assert_eq!(t.data.len(), t.rows * t.cols);
            out.push_str(&format!("tensor {} {} {}\n", t.name, t.rows, t.cols));
            for row in t.data.chunks_exact(t.cols.max(1)) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        for (name, blob) in &self.blobs {
            let line_count = blob.lines().count();
            out.push_str(&format!("blob {name} {line_count}\n"));
            for line in blob.lines() {
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(content: &str) -> Result<Checkpoint> {
        let mut lines = content.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("bad or missing magic line".into()));
        }
        let mut ckpt = Checkpoint::default();
        let mut saw_end = false;
        while let Some(line) = lines.next() {
            if line == "end" {
                saw_end = true;
                break;
            }
            let mut parts = line.splitn(2, ' ');
            match parts.next() {
                Some("field") => {
                    let rest = parts.next().unwrap_or("");
                    let (key, value) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::Checkpoint(format!("bad field line {line:?}")))?;
                    ckpt.fields.insert(key.to_string(), value.to_string());
                }
                Some("tensor") => {
                    let rest = parts.next().unwrap_or("");
                    let bits: Vec<&str> = rest.split(' ').collect();
                    if bits.len() != 3 {
                        return Err(Error::Checkpoint(format!("bad tensor line {line:?}")));
                    }
                    let name = bits[0].to_string();
                    let rows: usize = bits[1]
                        .parse()
                        .map_err(|_| Error::Checkpoint("bad tensor rows".into()))?;
                    let cols: usize = bits[2]
                        .parse()
                        .map_err(|_| Error::Checkpoint("bad tensor cols".into()))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let row_line = lines.next().ok_or_else(|| {
                            Error::Checkpoint(format!("tensor {name} truncated"))
                        })?;
                        for v in row_line.split(' ') {
                            let parsed: f64 = v.parse().map_err(|_| {
                                Error::Checkpoint(format!("bad value in tensor {name}"))
                            })?;
                            data.push(parsed);
                        }
                    }
                    if data.len() != rows * cols {
                        return Err(Error::Checkpoint(format!(
                            "tensor {name} has {} values, expected {}",
                            data.len(),
                            rows * cols
                        )));
                    }
                    ckpt.tensors.push(NamedTensor {
                        name,
                        rows,
                        cols,
                        data,
                    });
                }
                Some("blob") => {
                    let rest = parts.next().unwrap_or("");
                    let (name, count) = rest
                        .split_once(' ')
                        .ok_or_else(|| Error::Checkpoint(format!("bad blob line {line:?}")))?;
                    let count: usize = count
                        .parse()
                        .map_err(|_| Error::Checkpoint("bad blob line count".into()))?;
                    let mut blob = String::new();
                    for _ in 0..count {
                        let l = lines
                            .next()
                            .ok_or_else(|| Error::Checkpoint(format!("blob {name} truncated")))?;
                        blob.push_str(l);
                        blob.push('\n');
                    }
                    ckpt.blobs.push((name.to_string(), blob));
                }
                _ => return Err(Error::Checkpoint(format!("unrecognized line {line:?}"))),
            }
        }
        if !saw_end {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::seed_from_u64(99);
        let data: Vec<f64> = (0..12)
            .map(|_| (rng.uniform(-10.0, 10.0)).exp2() * rng.uniform(-1.0, 1.0))
            .collect();
        let mut ckpt = Checkpoint::default();
        ckpt.fields.insert("arch".into(), "GRU".into());
        ckpt.fields.insert("seed".into(), "42".into());
        ckpt.tensors.push(NamedTensor {
            name: "w".into(),
            rows: 3,
            cols: 4,
            data: data.clone(),
        });
        ckpt.blobs
            .push(("tfidf".into(), "#tfidf\tn_docs=2\nab\t0\t1.0\n".into()));

        let rendered = ckpt.render();
        let parsed = Checkpoint::parse(&rendered).unwrap();
        assert_eq!(parsed.field("arch").unwrap(), "GRU");
        let t = parsed.tensor("w").unwrap();
        for (a, b) in t.data.iter().zip(&data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(parsed.blob("tfidf").unwrap(), "#tfidf\tn_docs=2\nab\t0\t1.0\n");
        // render -> parse -> render is byte identical
        assert_eq!(parsed.render(), rendered);
    }

    #[test]
    fn truncated_tensor_is_an_error() {
        let text = "salamnet-checkpoint v1\ntensor w 2 2\n1.0 2.0\nend\n";
        assert!(Checkpoint::parse(text).is_err());
    }

    #[test]
    fn missing_magic_is_an_error() {
        assert!(Checkpoint::parse("field a b\nend\n").is_err());
    }
}
