//! The `CALDS v1` dataset text format.
//!
//! ```text
//! CALDS v1 D=<dim> N=<count>
//! <sample_id> <identity> <clothes> <camera> <split> <f_1> ... <f_D>
//! ```
//!
//! Fields are whitespace separated and features are hex floats, so files are
//! bit-exact. Decimal features are accepted on input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::hexfloat;
use crate::data::{ClothesRegistry, Dataset, Sample};
use crate::error::{Error, Result};

pub const MAGIC: &str = "CALDS";
pub const VERSION: &str = "v1";

pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {VERSION} D={} N={}", dataset.dim(), dataset.len())?;
    for s in dataset.samples() {
        write!(out, "{} {} {} {} {}", s.id, s.identity, s.clothes, s.camera, s.split)?;
        for &v in &s.feature {
            write!(out, " {}", hexfloat::format(v))?;
        }
        writeln!(out)?;
    }
    out.flush()
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "dataset",
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad(1, format!("expected `{MAGIC}` magic")));
    }
    match parts.next() {
        Some(VERSION) => {}
        other => return Err(bad(1, format!("unsupported version {other:?}"))),
    }
    let mut field = |key: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, format!("missing or invalid `{key}<n>`")))
    };
    let dim = field("D=")?;
    let count = field("N=")?;
    if parts.next().is_some() {
        return Err(bad(1, "trailing header fields"));
    }
    Ok((dim, count))
}

fn parse_feature(tok: &str) -> Option<f64> {
    let body = tok.trim_start_matches(['-', '+']);
    let v = if body.starts_with("0x") || body.starts_with("0X") {
        hexfloat::parse(tok)?
    } else {
        tok.parse().ok()?
    };
    v.is_finite().then_some(v)
}

fn parse_record(line: &str, lineno: usize, dim: usize) -> Result<Sample> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 5 + dim {
        return Err(bad(
            lineno,
            format!(
                "expected {} fields (5 labels + D={dim} features), got {}",
                5 + dim,
                toks.len()
            ),
        ));
    }
    let int = |k: usize, name: &str| -> Result<u64> {
        toks[k]
            .parse()
            .map_err(|_| bad(lineno, format!("invalid {name} `{}`", toks[k])))
    };
    let narrow = |v: u64, name: &str| -> Result<u32> {
        u32::try_from(v).map_err(|_| bad(lineno, format!("{name} {v} out of range")))
    };
    let feature = toks[5..]
        .iter()
        .map(|t| parse_feature(t).ok_or_else(|| bad(lineno, format!("invalid feature `{t}`"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Sample {
        id: int(0, "sample id")?,
        identity: narrow(int(1, "identity")?, "identity")?,
        clothes: narrow(int(2, "clothes")?, "clothes")?,
        camera: narrow(int(3, "camera")?, "camera")?,
        split: toks[4]
            .parse()
            .map_err(|_| bad(lineno, format!("invalid split `{}`", toks[4])))?,
        feature,
    })
}

/// Reads and validates a dataset: header counts, dimensions, unique sample
/// ids and clothes labels owned by a single identity.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| bad(1, e.to_string()))?,
        None => return Err(bad(1, "empty file")),
    };
    let (dim, count) = parse_header(&header)?;
    let mut samples = Vec::with_capacity(count);
    for (k, line) in lines {
        let line = line.map_err(|e| bad(k + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_record(&line, k + 1, dim)?);
    }
    if samples.len() != count {
        return Err(bad(
            1,
            format!("header declares N={count}, found {} records", samples.len()),
        ));
    }
    if !samples.is_empty() {
        ClothesRegistry::build(&samples)?;
    }
    Dataset::new(dim, samples)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}
