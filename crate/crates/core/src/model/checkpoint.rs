//! Text checkpoints. Every tensor is written as hex floats, so a reload is
//! bit-exact.
//!
//! ```text
//! CALCKPT v1
//! variant <name>
//! config_hash <sha256 hex>
//! temperature <hex>
//! layers <n>
//! tensor <name> <rows> <cols>
//! <one row of hex floats per line>
//! ...
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{TrainingConfig, Variant};
use super::params::{Backbone, DenseLayer, ModelParams};
use crate::datagen::hexfloat;
use crate::error::{Error, Result};
use crate::losses::{CosineClassifierHead, LinearHead};
use crate::numerics::Matrix;

pub const MAGIC: &str = "CALCKPT";
pub const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub config_hash: String,
    pub params: ModelParams,
}

/// SHA-256 over the resolved `key = value` lines of the config.
pub fn config_hash(cfg: &TrainingConfig) -> String {
    let mut h = Sha256::new();
    for (k, v) in cfg.entries() {
        h.update(format!("{k} = {v}\n").as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_tensor<W: Write>(out: &mut W, name: &str, m: &Matrix) -> std::io::Result<()> {
    writeln!(out, "tensor {name} {} {}", m.rows(), m.cols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| hexfloat::format(v)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn bias_matrix(b: &[f64]) -> Matrix {
    Matrix::new(1, b.len(), b.to_vec()).expect("row vector")
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> std::io::Result<()> {
    let p = &ckpt.params;
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "variant {}", ckpt.variant)?;
    writeln!(out, "config_hash {}", ckpt.config_hash)?;
    writeln!(out, "temperature {}", hexfloat::format(p.clothes_head.temperature()))?;
    writeln!(out, "layers {}", p.backbone.layers.len())?;
    for (i, l) in p.backbone.layers.iter().enumerate() {
        write_tensor(&mut out, &format!("layer{i}.weights"), &l.weights)?;
        write_tensor(&mut out, &format!("layer{i}.bias"), &bias_matrix(&l.bias))?;
    }
    write_tensor(&mut out, "id_head.weights", &p.id_head.weights)?;
    write_tensor(&mut out, "id_head.bias", &bias_matrix(&p.id_head.bias))?;
    write_tensor(&mut out, "clothes_head.weights", &p.clothes_head.weights)?;
    writeln!(out, "end")?;
    out.flush()
}

struct Lines<I> {
    inner: I,
    line: usize,
}

impl<I: Iterator<Item = std::io::Result<String>>> Lines<I> {
    fn bad(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            kind: "checkpoint",
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(self.bad(e.to_string())),
            None => Err(self.bad("unexpected end of file")),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(self.bad(format!("expected `{key} <value>`"))),
        }
    }

    fn tensor(&mut self, name: &str) -> Result<Matrix> {
        let l = self.next()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let (rows, cols) = match parts.as_slice() {
            ["tensor", n, r, c] if *n == name => match (r.parse(), c.parse()) {
                (Ok(r), Ok(c)) => (r, c),
                _ => return Err(self.bad("invalid tensor shape")),
            },
            _ => return Err(self.bad(format!("expected tensor `{name}`"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let before = data.len();
            for tok in l.split_whitespace() {
                data.push(hexfloat::parse(tok).ok_or_else(|| self.bad(format!("bad value `{tok}`")))?);
            }
            if data.len() - before != cols {
                return Err(self.bad(format!("expected {cols} values")));
            }
        }
        Matrix::new(rows, cols, data)
    }
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    if lines.next()?.trim() != format!("{MAGIC} {VERSION}") {
        return Err(lines.bad(format!("expected `{MAGIC} {VERSION}` header")));
    }
    let variant: Variant = lines.keyed("variant")?.parse()?;
    let config_hash = lines.keyed("config_hash")?;
    let t = lines.keyed("temperature")?;
    let temperature = hexfloat::parse(&t).ok_or_else(|| lines.bad("bad temperature"))?;
    let n: usize = lines
        .keyed("layers")?
        .parse()
        .map_err(|_| lines.bad("bad layer count"))?;
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let weights = lines.tensor(&format!("layer{i}.weights"))?;
        let bias = lines.tensor(&format!("layer{i}.bias"))?.into_vec();
        if bias.len() != weights.rows()
            || layers
                .last()
                .is_some_and(|p: &DenseLayer| p.weights.rows() != weights.cols())
        {
            return Err(lines.bad(format!("layer {i} shape mismatch")));
        }
        layers.push(DenseLayer { weights, bias });
    }
    let id_w = lines.tensor("id_head.weights")?;
    let id_b = lines.tensor("id_head.bias")?.into_vec();
    let clothes_w = lines.tensor("clothes_head.weights")?;
    if lines.next()?.trim() != "end" {
        return Err(lines.bad("expected `end`"));
    }
    let backbone = Backbone { layers };
    if n == 0 || id_w.cols() != backbone.output_dim() || clothes_w.cols() != backbone.output_dim() {
        return Err(lines.bad("head dimensions do not match the backbone"));
    }
    Ok(Checkpoint {
        variant,
        config_hash,
        params: ModelParams {
            backbone,
            id_head: LinearHead::new(id_w, id_b)?,
            clothes_head: CosineClassifierHead::new(clothes_w, temperature)?,
        },
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(ckpt, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
