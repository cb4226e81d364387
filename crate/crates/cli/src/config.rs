//! Flat `key = value` run configuration: defaults, then the config file, then
//! command-line flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cal_core::datagen::GenConfig;
use cal_core::eval::{Mode, Protocol};
use cal_core::model::{TrainingConfig, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gen: GenConfig,
    pub train: TrainingConfig,
    pub variant: Variant,
    pub run_id: String,
    pub protocols: Vec<Mode>,
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            train: TrainingConfig::default(),
            variant: Variant::Cal,
            run_id: "run".into(),
            protocols: Mode::ALL.to_vec(),
            data: "dataset.calds".into(),
            checkpoint: PathBuf::new(),
            out: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "variant" => self.variant = value.parse()?,
            "run_id" => {
                if value.is_empty() || value.contains([',', '\n']) {
                    bail!("run_id `{value}` must be non-empty without commas");
                }
                self.run_id = value.into()
            }
            "protocols" => {
                self.protocols = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_, _>>()?;
                if self.protocols.is_empty() {
                    bail!("protocols must name at least one of general, cc, sc");
                }
            }
            "data" => self.data = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "out" => self.out = value.into(),
            "seed" => {
                self.gen.set("data_seed", value)?;
                self.train.set("train_seed", value)?;
            }
            _ => {
                if !self.gen.set(key, value)? && !self.train.set(key, value)? {
                    bail!("unknown config key `{key}`");
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .with_context(|| format!("override `{p}` is not of the form key=value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected `key = value`", path.display(), n + 1))?;
            self.set(k.trim(), v)
                .with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn protocols(&self) -> Vec<Protocol> {
        self.protocols.iter().map(|&m| Protocol::new(m)).collect()
    }

    /// Every resolved entry, in a fixed order; loading this text back as a
    /// config file yields an identical `RunConfig`.
    pub fn to_text(&self) -> String {
        let protocols: Vec<&str> = self.protocols.iter().map(|m| m.as_str()).collect();
        let mut out = String::new();
        for (k, v) in [
            ("variant", self.variant.to_string()),
            ("run_id", self.run_id.clone()),
            ("protocols", protocols.join(",")),
            ("data", self.data.display().to_string()),
            ("checkpoint", self.checkpoint.display().to_string()),
            ("out", self.out.display().to_string()),
        ] {
            writeln!(out, "{k} = {v}").unwrap();
        }
        for (k, v) in self.gen.entries().into_iter().chain(self.train.entries()) {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut a = RunConfig::default();
        a.apply_overrides(&[
            "variant=baseline".into(),
            "protocols=sc,cc".into(),
            "seed=7".into(),
            "epsilon=0.25".into(),
            "clothes_scale=2.5".into(),
            "out=some dir".into(),
        ])
        .unwrap();
        assert_eq!(a.gen.seed, 7);
        assert_eq!(a.train.seed, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, a.to_text()).unwrap();
        let mut b = RunConfig::default();
        b.load_file(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_entries_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("epochs", "many").is_err());
        assert!(c.set("protocols", "cc,xx").is_err());
        assert!(c.apply_overrides(&["epochs".into()]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "# comment\n\nepochs = 3\nbroken line\n").unwrap();
        let err = c.load_file(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":4"), "{err:#}");
        assert_eq!(c.train.epochs, 3);
    }
}
