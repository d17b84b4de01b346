//! One function per verb. Each is a pure function of its config document and
//! input files, apart from wall-clock fields.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use civd::data::{gen_synthetic, sample_episode, save_bank, BankFormat, Manifest, ManifestSplits};
use civd::eval::evaluate;
use civd::pipeline::{bench as bench_head, build_head};
use civd::render::{episode_partition, rasterize, to_svg};
use civd::{Error, Result};

use crate::config::{output_dir, read_json, GenConfig, RenderConfig, RunConfig};
use crate::Common;

fn require_config(c: &Common) -> Result<&Path> {
    c.config.as_deref().ok_or_else(|| Error::Config("--config <path> is required".into()))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn gen(c: &Common) -> Result<()> {
    let mut cfg: GenConfig = match &c.config {
        Some(p) => read_json(p)?,
        None => GenConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.synthetic.seed = seed;
    }
    cfg.synthetic.validate()?;
    let out = output_dir(c.out.as_deref(), c.config.as_deref(), cfg.output_dir.as_deref());
    let banks = gen_synthetic(&cfg.synthetic)?;
    prepare_dir(&out)?;
    let ext = match cfg.format {
        BankFormat::Binary => "vbnk",
        BankFormat::Text => "txt",
    };
    let name = |split: &str| PathBuf::from(format!("{split}.{ext}"));
    for (split, bank) in [("base", &banks.base), ("novel", &banks.novel), ("validation", &banks.validation)] {
        save_bank(bank, out.join(name(split)), cfg.format)?;
    }
    let manifest = Manifest {
        dataset: "synthetic".into(),
        splits: ManifestSplits { base: Some(name("base")), novel: name("novel"), validation: Some(name("validation")) },
        provenance: vec![format!("generated from synthetic spec {}", serde_json::to_string(&cfg.synthetic)?)],
    };
    manifest.save(out.join("manifest.json"))?;
    println!("wrote {} (base, novel, validation, manifest)", out.display());
    Ok(())
}

fn load_run(c: &Common) -> Result<(RunConfig, civd::pipeline::Banks, PathBuf)> {
    let path = require_config(c)?;
    let (mut cfg, paths) = RunConfig::load(path)?;
    if let Some(seed) = c.seed {
        cfg.episodes.seed = seed;
        if let Some(v) = cfg.validation_episodes.as_mut() {
            v.seed = seed;
        }
    }
    if let Some(e) = c.episodes {
        cfg.episodes.episodes = e;
    }
    let out = output_dir(c.out.as_deref(), Some(path), cfg.output_dir.as_deref());
    let banks = paths.load()?;
    Ok((cfg, banks, out))
}

pub fn eval(c: &Common) -> Result<()> {
    let (cfg, banks, out) = load_run(c)?;
    let start = Instant::now();
    let head = build_head::<f64>(&cfg.head, &banks, &cfg.validation_spec())?;
    let build_secs = start.elapsed().as_secs_f64();
    let mut report = evaluate(&head, &banks.novel, &cfg.episodes, head.description())?;
    report.wall_clock.insert("head_build".into(), build_secs);
    prepare_dir(&out)?;
    report.write_json(out.join("report.json"))?;
    report.write_csv(out.join("report.csv"))?;
    if let Some(sel) = head.selection() {
        write_json(&out.join("selection.json"), sel)?;
    }
    println!(
        "{}: mean={:.6} half_width={:.6} episodes={} report={}",
        report.description,
        report.mean,
        report.half_width,
        report.episodes,
        out.join("report.json").display()
    );
    Ok(())
}

pub fn bench(c: &Common) -> Result<()> {
    let (cfg, banks, out) = load_run(c)?;
    let start = Instant::now();
    let head = build_head::<f64>(&cfg.head, &banks, &cfg.validation_spec())?;
    let build_secs = start.elapsed().as_secs_f64();
    let mut report = bench_head(&head, &cfg.episodes)?;
    report.phases.insert("head_build".into(), build_secs);
    prepare_dir(&out)?;
    write_json(&out.join("bench.json"), &report)?;
    let phases: Vec<String> = report.phases.iter().map(|(k, v)| format!("{k}={v:.4}s")).collect();
    println!(
        "{}: L={} episodes={} total={:.4}s {}",
        report.description,
        report.members,
        report.episodes,
        report.total_seconds,
        phases.join(" ")
    );
    Ok(())
}

pub fn render2d(c: &Common, svg: Option<&Path>) -> Result<()> {
    let path = require_config(c)?;
    let mut cfg = RenderConfig::load(path)?;
    if let Some(seed) = c.seed {
        cfg.episode.seed = seed;
    }
    let bank = civd::data::load_bank(&cfg.bank)?;
    cfg.episode.validate_for(&bank)?;
    let draw = sample_episode(&bank, &cfg.episode, cfg.episode_index)?;
    let (partition, support) = episode_partition(&bank, &draw, &cfg.render)?;
    let raster = rasterize(&partition, &cfg.raster)?;
    let target = match svg {
        Some(p) => p.to_path_buf(),
        None => output_dir(c.out.as_deref(), Some(path), cfg.output_dir.as_deref()).join("partition.svg"),
    };
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_dir(dir)?;
    }
    fs::write(&target, to_svg(&raster, &support))?;
    println!("wrote {} ({}x{})", target.display(), raster.width, raster.height);
    Ok(())
}
