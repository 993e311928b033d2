use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use fieldmol_core::diffusion::{
    read_fmgd, sample_rng, sample_stream, train_toy_denoiser, write_fmgd, write_loss_trace, Condition, Denoiser,
    OracleDenoiser,
};
use fieldmol_core::extract::{
    add_uniform_noise, extract_molecule, matched_rmsd, ExtractionConfig, ExtractionDiagnostics, BOND_TABLE_VERSION,
};
use fieldmol_core::field::{place_molecule, read_fmgf, voxelize as voxelize_one, write_fmgf, FieldTensor};
use fieldmol_core::metrics::{
    chirality_distribution, count_fidelity, evaluate as evaluate_sets, ConditionedCount, CountBin,
};
use fieldmol_core::molecule::{canonical_key, parse_sdf, parse_sdf_records, write_sdf, Molecule, TetrahedralQuery};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    command: &'static str,
    bond_table: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_sidecar<T: Serialize>(path: &Path, command: &'static str, config: &RunConfig, body: T) -> Result<()> {
    let mut w = create(path)?;
    let meta = Sidecar {
        command,
        bond_table: BOND_TABLE_VERSION,
        config,
        body,
    };
    serde_json::to_writer_pretty(&mut w, &meta)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_molecules(path: &Path) -> Result<Vec<Molecule>> {
    parse_sdf(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_fields(path: &Path) -> Result<Vec<FieldTensor>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_fmgf(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_fields(path: &Path, fields: &[FieldTensor]) -> Result<()> {
    let mut w = create(path)?;
    write_fmgf(&mut w, fields)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Skipped {
    record: usize,
    reason: String,
}

#[derive(Serialize)]
struct VoxelizeMeta {
    written_records: Vec<usize>,
    skipped: Vec<Skipped>,
}

pub fn voxelize(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let records = parse_sdf_records(&read_text(input)?);
    let layout = cfg.layout()?;
    let params = cfg.params(&layout);
    let results: Vec<Result<FieldTensor, String>> = records
        .into_par_iter()
        .map(|r| {
            let mol = r.map_err(|e| e.to_string())?;
            voxelize_one(&mol, &layout, &params, cfg.orient).map_err(|e| e.to_string())
        })
        .collect();
    let mut fields = Vec::new();
    let mut meta = VoxelizeMeta {
        written_records: Vec::new(),
        skipped: Vec::new(),
    };
    for (record, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => {
                fields.push(f);
                meta.written_records.push(record);
            }
            Err(reason) => {
                warn!("record {record} skipped: {reason}");
                meta.skipped.push(Skipped { record, reason });
            }
        }
    }
    write_fields(output, &fields)?;
    info!("wrote {} fields, skipped {}", fields.len(), meta.skipped.len());
    write_sidecar(&with_suffix(output, ".json"), "voxelize", cfg, meta)?;
    Ok(())
}

fn extract_all(fields: &[FieldTensor], cfg: &RunConfig) -> Vec<(Molecule, Option<ExtractionDiagnostics>, Option<String>)> {
    fields
        .par_iter()
        .map(|f| {
            let xcfg: ExtractionConfig = cfg.extraction_for(f.layout());
            match extract_molecule(f, &xcfg) {
                Ok(r) => (r.molecule, Some(r.diagnostics), None),
                Err(e) => (Molecule::empty(), None, Some(e.to_string())),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ExtractRecord {
    index: usize,
    atoms: usize,
    bonds: usize,
    error: Option<String>,
    diagnostics: Option<ExtractionDiagnostics>,
}

pub fn extract(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let fields = read_fields(input)?;
    let extracted = extract_all(&fields, cfg);
    let mols: Vec<Molecule> = extracted.iter().map(|e| e.0.clone()).collect();
    write_text(output, &write_sdf(&mols))?;
    let records: Vec<ExtractRecord> = extracted
        .into_iter()
        .enumerate()
        .map(|(index, (m, diagnostics, error))| {
            if let Some(e) = &error {
                warn!("field {index}: {e}");
            }
            ExtractRecord {
                index,
                atoms: m.len(),
                bonds: m.bonds().len(),
                error,
                diagnostics,
            }
        })
        .collect();
    write_sidecar(&with_suffix(output, ".json"), "extract", cfg, serde_json::json!({ "records": records }))?;
    info!("extracted {} molecules", mols.len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub condition_atoms: Option<usize>,
    pub atoms: usize,
    pub bonds: usize,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct SampleMeta<'a> {
    denoiser: String,
    beta: f64,
    samples: &'a [SampleRecord],
    snapshot_steps: Vec<usize>,
}

fn atom_counts(fields: &[FieldTensor], cfg: &RunConfig) -> Result<Vec<usize>> {
    extract_all(fields, cfg)
        .into_iter()
        .enumerate()
        .map(|(k, (m, _, err))| match err {
            Some(e) => bail!("dataset field {k}: {e}"),
            None => Ok(m.len()),
        })
        .collect()
}

pub fn sample(cfg: &RunConfig, dataset: Option<&Path>, model: Option<&Path>, output: &Path) -> Result<()> {
    let schedule = cfg.schedule()?;
    let (denoiser, layout, source): (Box<dyn Denoiser>, _, String) = match (dataset, model) {
        (Some(path), _) => {
            let fields = read_fields(path)?;
            let layout = fields.first().context("dataset holds no fields")?.layout().clone();
            let mut oracle = OracleDenoiser::new(fields)?;
            if cfg.atoms.is_some() {
                let counts = atom_counts(oracle.dataset(), cfg)?;
                oracle = oracle.with_atom_counts(counts)?;
            }
            (Box::new(oracle), layout, format!("oracle:{}", path.display()))
        }
        (None, Some(path)) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let model = read_fmgd(BufReader::new(f))?;
            let layout = model.layout().clone();
            (Box::new(model), layout, format!("toy:{}", path.display()))
        }
        (None, None) => bail!("sample needs --dataset or --model"),
    };
    let cond = cfg.atoms.map_or(Condition::null(), Condition::atoms);
    let stride = cfg.snapshot_stride;
    let runs: Vec<(FieldTensor, Vec<FieldTensor>)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i as u64);
            let mut snaps = Vec::new();
            let u = sample_stream(denoiser.as_ref(), &layout, &schedule, &cond, cfg.beta, &mut rng, |step, u| {
                if stride > 0 && step % stride == 0 {
                    snaps.push(u.clone());
                }
            })?;
            Ok((u, snaps))
        })
        .collect::<Result<_>>()?;
    let fields: Vec<FieldTensor> = runs.iter().map(|r| r.0.clone()).collect();
    let extracted = extract_all(&fields, cfg);
    let records: Vec<SampleRecord> = extracted
        .iter()
        .enumerate()
        .map(|(index, (m, _, error))| SampleRecord {
            index,
            condition_atoms: cond.atom_count,
            atoms: m.len(),
            bonds: m.bonds().len(),
            error: error.clone(),
        })
        .collect();
    let mols: Vec<Molecule> = extracted.into_iter().map(|e| e.0).collect();
    write_fields(&with_suffix(output, ".fmgf"), &fields)?;
    write_text(&with_suffix(output, ".sdf"), &write_sdf(&mols))?;
    let mut snapshot_steps = Vec::new();
    if stride > 0 {
        let start = schedule.steps.saturating_sub(1).max(1);
        snapshot_steps = (0..=start).rev().filter(|s| s % stride == 0).collect();
        let all: Vec<FieldTensor> = runs.into_iter().flat_map(|r| r.1).collect();
        write_fields(&with_suffix(output, ".snapshots.fmgf"), &all)?;
    }
    let meta = SampleMeta {
        denoiser: source,
        beta: cfg.beta,
        samples: &records,
        snapshot_steps,
    };
    write_sidecar(&with_suffix(output, ".json"), "sample", cfg, meta)?;
    info!("sampled {} fields", fields.len());
    Ok(())
}

pub fn roundtrip(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let layout = cfg.layout()?;
    let params = cfg.params(&layout);
    let xcfg = cfg.extraction_for(&layout);
    let mut prepared = Vec::new();
    for (k, r) in parse_sdf_records(&read_text(input)?).into_iter().enumerate() {
        let prepared_one = r.map_err(anyhow::Error::from).and_then(|m| {
            let f = voxelize_one(&m, &layout, &params, cfg.orient)?;
            Ok((place_molecule(&m, &layout.spec, cfg.orient), f))
        });
        match prepared_one {
            Ok(p) => prepared.push((k, p)),
            Err(e) => warn!("record {k} skipped: {e:#}"),
        }
    }
    if prepared.is_empty() {
        bail!("no usable molecules in {}", input.display());
    }
    let mut csv = String::from("lambda,molecules,recovered,accuracy,mean_rmsd,max_rmsd\n");
    for &lambda in &cfg.noise {
        let outcomes: Vec<Option<f64>> = prepared
            .par_iter()
            .map(|(k, (mol, field))| -> Result<Option<f64>> {
                let mut noisy = field.clone();
                add_uniform_noise(&mut noisy, lambda, &mut sample_rng(cfg.seed, *k as u64));
                let got = extract_molecule(&noisy, &xcfg)?.molecule;
                Ok((canonical_key(&got) == canonical_key(mol)).then(|| matched_rmsd(mol, &got)).flatten())
            })
            .collect::<Result<_>>()?;
        let rmsd: Vec<f64> = outcomes.iter().flatten().copied().collect();
        let n = prepared.len();
        let mean = if rmsd.is_empty() { 0.0 } else { rmsd.iter().sum::<f64>() / rmsd.len() as f64 };
        let max = rmsd.iter().copied().fold(0.0, f64::max);
        csv.push_str(&format!(
            "{lambda},{n},{},{:.4},{mean:.6},{max:.6}\n",
            rmsd.len(),
            100.0 * rmsd.len() as f64 / n as f64
        ));
        info!("lambda {lambda}: {}/{n} recovered", rmsd.len());
    }
    write_text(output, &csv)?;
    write_sidecar(&with_suffix(output, ".json"), "roundtrip", cfg, serde_json::json!({ "molecules": prepared.len() }))
}

#[derive(Deserialize)]
struct SampleMetaIn {
    samples: Vec<SampleRecord>,
}

pub fn evaluate(
    cfg: &RunConfig,
    generated: &Path,
    reference: &Path,
    train: &Path,
    sample_meta: Option<&Path>,
    output: &Path,
) -> Result<()> {
    let gen = read_molecules(generated)?;
    let reference = read_molecules(reference)?;
    let train_keys: HashSet<_> = read_molecules(train)?.iter().map(canonical_key).collect();
    let mut report = evaluate_sets(&gen, &reference, &train_keys, &TetrahedralQuery::default())?;
    if let Some(path) = sample_meta {
        let meta: SampleMetaIn =
            serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        if meta.samples.len() != gen.len() {
            bail!("{} sample records for {} generated molecules", meta.samples.len(), gen.len());
        }
        let mut targets: Vec<usize> = meta.samples.iter().filter_map(|s| s.condition_atoms).collect();
        targets.sort_unstable();
        targets.dedup();
        let bins: Vec<CountBin> = targets.iter().map(|&n| CountBin::single(n)).collect();
        let samples: Vec<ConditionedCount> = meta
            .samples
            .iter()
            .zip(&gen)
            .map(|(s, m)| ConditionedCount {
                bin: s.condition_atoms.map(|n| targets.binary_search(&n).expect("target listed")),
                atoms: m.len(),
            })
            .collect();
        report.count_fidelity = Some(count_fidelity(&samples, &bins)?);
    }
    write_sidecar(&with_suffix(output, ".json"), "evaluate", cfg, &report)?;
    let mut w = create(&with_suffix(output, ".csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_chirality_csv(&report.chirality, output)?;
    info!("validity {:.1}%, novelty {:.1}%", report.validity, report.novelty);
    Ok(())
}

fn write_chirality_csv(report: &fieldmol_core::metrics::ChiralityReport, prefix: &Path) -> Result<()> {
    let mut w = create(&with_suffix(prefix, ".determinants.csv"))?;
    report.write_determinants_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&with_suffix(prefix, ".histogram.csv"))?;
    report.write_histogram_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn chiral(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let mols = read_molecules(input)?;
    let report = chirality_distribution(&mols, &TetrahedralQuery::default());
    write_chirality_csv(&report, output)?;
    write_sidecar(
        &with_suffix(output, ".json"),
        "chiral",
        cfg,
        serde_json::json!({
            "centers": report.determinants.len(),
            "degenerate": report.degenerate,
            "sign_fraction": report.sign_fraction,
        }),
    )?;
    info!("{} centres, sign fraction {}", report.determinants.len(), report.sign_fraction);
    Ok(())
}

pub fn train(cfg: &RunConfig, dataset: &Path, output: &Path, conditional: bool) -> Result<()> {
    let fields = read_fields(dataset)?;
    let conditions: Option<Vec<Condition>> = if conditional {
        Some(atom_counts(&fields, cfg)?.into_iter().map(Condition::atoms).collect())
    } else {
        None
    };
    let schedule = cfg.schedule()?;
    let outcome = train_toy_denoiser(&fields, conditions.as_deref(), &schedule, &cfg.train_config())?;
    let mut w = create(output)?;
    write_fmgd(&mut w, &outcome.denoiser)?;
    w.flush()?;
    let mut w = create(&with_suffix(output, ".loss.csv"))?;
    write_loss_trace(&mut w, &outcome.loss_trace)?;
    w.flush()?;
    let last = outcome.loss_trace.last().copied();
    write_sidecar(
        &with_suffix(output, ".json"),
        "train",
        cfg,
        serde_json::json!({ "fields": fields.len(), "conditional": conditional, "final_loss": last }),
    )?;
    info!("trained on {} fields, final loss {last:?}", fields.len());
    Ok(())
}
