use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, ensure, Context, Result};
use cal_core::data::{ClothesRegistry, Dataset, Split};
use cal_core::datagen::{generate as generate_dataset, load_dataset, save_dataset};
use cal_core::eval::{
    evaluate_backbone, training_convergence, LogHistogram, Mode, Protocol, RankingReport, CSV_HEADER,
};
use cal_core::model::{config_hash, load_checkpoint, save_checkpoint, train_variant, Checkpoint, TrainingSet};

use crate::config::RunConfig;

const DEFAULT_DATASET: &str = "dataset.calds";
const DEFAULT_RUN_DIR: &str = "run";

fn out_dir(cfg: &mut RunConfig) -> Result<PathBuf> {
    if cfg.out.as_os_str().is_empty() {
        cfg.out = DEFAULT_RUN_DIR.into();
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(cfg.out.clone())
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    if cfg.checkpoint.as_os_str().is_empty() {
        cfg.out.join("checkpoint.ckpt")
    } else {
        cfg.checkpoint.clone()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn summary_table(ds: &Dataset) -> String {
    let mut out = format!(
        "{:<8} {:>10} {:>8} {:>8}\n",
        "subset", "identities", "clothes", "samples"
    );
    let mut row = |name: &str, samples: Vec<&cal_core::data::Sample>| {
        let ids: BTreeSet<u32> = samples.iter().map(|s| s.identity).collect();
        let clothes: BTreeSet<u32> = samples.iter().map(|s| s.clothes).collect();
        writeln!(
            out,
            "{name:<8} {:>10} {:>8} {:>8}",
            ids.len(),
            clothes.len(),
            samples.len()
        )
        .unwrap();
    };
    row("train", ds.split(Split::Train));
    row("query", ds.split(Split::Query));
    row("gallery", ds.split(Split::Gallery));
    row("total", ds.samples().iter().collect());
    out
}

fn registry_text(ds: &Dataset, registry: &ClothesRegistry) -> String {
    let train: BTreeSet<u32> = ds.split(Split::Train).iter().map(|s| s.identity).collect();
    let mut out = format!(
        "# identities={} clothes={}\n# identity split clothes...\n",
        registry.num_identities(),
        registry.num_clothes()
    );
    for id in registry.identities() {
        let split = if train.contains(&id) { "train" } else { "test" };
        let owned: Vec<String> = registry.owned(id).unwrap_or(&[]).iter().map(u32::to_string).collect();
        writeln!(out, "{id} {split} {}", owned.join(" ")).unwrap();
    }
    out
}

pub fn generate(mut cfg: RunConfig) -> Result<()> {
    if cfg.out.as_os_str().is_empty() {
        cfg.out = DEFAULT_DATASET.into();
    }
    let (ds, registry) = generate_dataset(&cfg.gen)?;
    if cfg.gen.min_clothes < 2 {
        eprintln!(
            "warning: identities with a single outfit have no clothes-changing positives; \
             clothes-changing evaluation on this dataset will fail"
        );
    }
    if let Some(parent) = cfg.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_dataset(&ds, &cfg.out)?;
    cfg.data = cfg.out.clone();
    write(&sidecar(&cfg.out, ".registry.txt"), &registry_text(&ds, &registry))?;
    write(&sidecar(&cfg.out, ".config.txt"), &cfg.to_text())?;
    print!("{}", summary_table(&ds));
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    load_dataset(&cfg.data).with_context(|| format!("loading dataset {}", cfg.data.display()))
}

pub fn train(mut cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&mut cfg)?;
    let ds = load_data(&cfg)?;
    eprintln!(
        "training {} on {} ({} epochs)",
        cfg.variant,
        cfg.data.display(),
        cfg.train.epochs
    );
    let (params, log) = train_variant(&cfg.train, &ds, cfg.variant)?;
    let ckpt = Checkpoint {
        variant: cfg.variant,
        config_hash: config_hash(&cfg.train),
        params,
    };
    cfg.checkpoint = dir.join("checkpoint.ckpt");
    save_checkpoint(&ckpt, &cfg.checkpoint)?;
    write(&dir.join("metrics.csv"), &log.to_csv())?;
    write(&dir.join("config.txt"), &cfg.to_text())?;
    if let Some(last) = log.epochs.last() {
        eprintln!("final epoch: l_id={:.6}", last.identity_loss);
    }
    Ok(())
}

fn load_ckpt(cfg: &RunConfig, ds: &Dataset) -> Result<Checkpoint> {
    let path = checkpoint_path(cfg);
    let ckpt = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    ensure!(
        ckpt.params.backbone.input_dim() == ds.dim(),
        "checkpoint expects {}-dimensional features, dataset has {}",
        ckpt.params.backbone.input_dim(),
        ds.dim()
    );
    Ok(ckpt)
}

pub fn eval(mut cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&mut cfg)?;
    let ds = load_data(&cfg)?;
    let ckpt = load_ckpt(&cfg, &ds)?;
    let report = evaluate_backbone(&ckpt.params.backbone, &ds, &cfg.protocols())?;
    for (p, why) in &report.skipped_protocols {
        eprintln!("notice: protocol {p} skipped: {why}");
    }
    if report.sections.is_empty() {
        bail!("none of the requested protocols could be scored");
    }
    let variant = ckpt.variant.as_str();
    let text = report.to_text(&cfg.run_id, variant);
    let mut csv = format!("{CSV_HEADER}\n");
    for row in report.csv_rows(&cfg.run_id, variant) {
        writeln!(csv, "{row}").unwrap();
    }
    write(&dir.join("report.txt"), &text)?;
    write(&dir.join("results.csv"), &csv)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    Epsilon,
    InverseTemperature,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Epsilon => "epsilon",
            Axis::InverseTemperature => "inv_tau",
        }
    }
}

fn top1(report: &RankingReport, mode: Mode) -> Option<f64> {
    report.section(Protocol::new(mode)).map(|s| s.top1())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "nan".into())
}

pub fn sweep(mut cfg: RunConfig, epsilons: &[f64], inv_taus: &[f64]) -> Result<()> {
    ensure!(
        !epsilons.is_empty() || !inv_taus.is_empty(),
        "give an epsilon grid (--epsilons) and/or an inverse-temperature grid (--inv-taus)"
    );
    if inv_taus.iter().any(|&v| !(v > 0.0)) {
        bail!("inverse temperatures must be > 0");
    }
    let dir = out_dir(&mut cfg)?;
    let ds = load_data(&cfg)?;
    let protocols: Vec<Protocol> = Mode::ALL.into_iter().map(Protocol::new).collect();

    let mut points = Vec::new();
    for &e in epsilons {
        let mut c = cfg.train.clone();
        c.epsilon = e;
        points.push((Axis::Epsilon, e, c));
    }
    for &t in inv_taus {
        let mut c = cfg.train.clone();
        c.temperature = 1.0 / t;
        points.push((Axis::InverseTemperature, t, c));
    }
    for (_, _, c) in &points {
        c.validate()?;
    }
    eprintln!("sweep: {} grid points", points.len());

    let results: Vec<Result<RankingReport>> = thread::scope(|s| {
        let handles: Vec<_> = points
            .iter()
            .map(|(_, _, c)| {
                let ds = &ds;
                let protocols = &protocols;
                let variant = cfg.variant;
                s.spawn(move || -> Result<RankingReport> {
                    let (params, _) = train_variant(c, ds, variant)?;
                    Ok(evaluate_backbone(&params.backbone, ds, protocols)?)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut table = format!(
        "{:<8} {:>10} {:>12} {:>12} {:>12}\n",
        "param", "value", "general_top1", "cc_top1", "sc_top1"
    );
    let mut csv = String::from("param,value,general_top1,cc_top1,sc_top1\n");
    let mut plots: Vec<(String, String)> = Vec::new();
    for ((axis, value, _), r) in points.iter().zip(results) {
        let r = r?;
        let [g, cc, sc] = [Mode::General, Mode::ClothesChanging, Mode::SameClothes].map(|m| top1(&r, m));
        writeln!(
            table,
            "{:<8} {:>10} {:>12} {:>12} {:>12}",
            axis.name(),
            value,
            fmt_opt(g),
            fmt_opt(cc),
            fmt_opt(sc)
        )
        .unwrap();
        writeln!(
            csv,
            "{},{},{},{},{}",
            axis.name(),
            value,
            fmt_opt(g),
            fmt_opt(cc),
            fmt_opt(sc)
        )
        .unwrap();
        for (mode, v) in [("cc", cc), ("sc", sc)] {
            let name = format!("sweep_{}_{mode}.dat", axis.name());
            let line = format!("{value} {}\n", fmt_opt(v));
            match plots.iter_mut().find(|(n, _)| *n == name) {
                Some((_, body)) => body.push_str(&line),
                None => plots.push((name, format!("# {} top1_{mode}\n{line}", axis.name()))),
            }
        }
    }
    write(&dir.join("sweep.txt"), &table)?;
    write(&dir.join("sweep.csv"), &csv)?;
    for (name, body) in &plots {
        write(&dir.join(name), body)?;
    }
    write(&dir.join("config.txt"), &cfg.to_text())?;
    print!("{table}");
    Ok(())
}

pub fn stats(mut cfg: RunConfig) -> Result<()> {
    let dir = out_dir(&mut cfg)?;
    let ds = load_data(&cfg)?;
    let ckpt = load_ckpt(&cfg, &ds)?;
    let set = TrainingSet::from_dataset(&ds)?;
    ensure!(
        ckpt.params.clothes_head.num_classes() == set.num_clothes(),
        "checkpoint has {} clothes classes, training split has {}",
        ckpt.params.clothes_head.num_classes(),
        set.num_clothes()
    );
    if !ckpt.variant.uses_clothes_classifier() {
        eprintln!(
            "notice: variant {} never trains the clothes classifier; statistics reflect its initialization",
            ckpt.variant
        );
    }
    let st = training_convergence(&ckpt.params, &set)?;
    let (pos, ppos, neg) = st.medians();
    let names = ["p_pos", "p_ppos", "p_neg"];
    let hists = st.histograms();

    let mut text = format!(
        "# convergence statistics variant={} samples={}\n",
        ckpt.variant,
        st.samples.len()
    );
    for (name, m) in names.iter().zip([pos, ppos, neg]) {
        writeln!(text, "median {name} = {}", fmt_opt(m)).unwrap();
    }
    writeln!(text, "ordering p_pos > p_ppos > p_neg: {}", st.ordering_holds()).unwrap();
    let mut csv = String::from("group,bin,count\n");
    for (name, h) in names.iter().zip(&hists) {
        writeln!(text, "\n[{name}] n={}", h.total()).unwrap();
        for (k, &c) in h.counts.iter().enumerate() {
            let label = LogHistogram::bin_label(k);
            writeln!(text, "{label:<14} {c}").unwrap();
            writeln!(csv, "{name},\"{label}\",{c}").unwrap();
        }
    }
    for (name, m) in names.iter().zip([pos, ppos, neg]) {
        writeln!(csv, "{name},median,{}", fmt_opt(m)).unwrap();
    }
    write(&dir.join("convergence.txt"), &text)?;
    write(&dir.join("convergence.csv"), &csv)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            sidecar(Path::new("a/b.calds"), ".config.txt"),
            PathBuf::from("a/b.calds.config.txt")
        );
    }
}
