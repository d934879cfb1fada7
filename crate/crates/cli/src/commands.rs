use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flatpose_core::docparse::parse_document;
use flatpose_core::estimator::{
    build_estimator, library_from_models, oracle_estimate, EstimatorInput, EstimatorOutput, ESTIMATOR_NAMES,
};
use flatpose_core::geometry::{detect_symmetries, extrude, DEFAULT_ANGULAR_STEP_DEG, DEFAULT_SYMMETRY_TOLERANCE};
use flatpose_core::metrics::{evaluate, read_estimates, write_estimates, EstimateRecord, EvalConfig, EvalReport};
use flatpose_core::scenegen::{generate_dataset, read_bop_dataset, write_bop_dataset, write_models, GenConfig, LoadedModels};

use crate::config::{ConvertSection, EstimateSection};
use crate::manifest::RunManifest;
use crate::CliError;

/// 1-based line and column of a byte offset.
pub fn line_col(text: &[u8], offset: usize) -> (usize, usize) {
    let upto = &text[..offset.min(text.len())];
    let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = upto.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
    (line, col)
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist or is not a directory", path.display())))
    }
}

fn load_models(dir: &Path) -> Result<LoadedModels, CliError> {
    require_dir(dir, "models directory")?;
    LoadedModels::read(dir).map_err(|e| CliError::runtime(format!("{e}")))
}

/// Parses the document, extrudes every part and writes the models
/// directory. Returns the category ids written.
pub fn convert(xml: &[u8], source: &str, out: &Path, section: &ConvertSection) -> Result<Vec<u32>, CliError> {
    if !(section.thickness > 0.0) {
        return Err(CliError::usage(format!("thickness must be positive, got {}", section.thickness)));
    }
    let doc = parse_document(xml).map_err(|e| {
        let at = match e.byte_offset() {
            Some(offset) => {
                let (l, c) = line_col(xml, offset as usize);
                format!(":{l}:{c}")
            }
            None => String::new(),
        };
        CliError::runtime(format!("{source}{at}: {e}"))
    })?;
    let profiles = doc
        .profiles(section.tolerance)
        .map_err(|(id, e)| CliError::runtime(format!("{source}: part {id}: {e}")))?;
    if profiles.is_empty() {
        tracing::warn!("{source} contains no parts; writing an empty models directory");
    }
    let mut models = Vec::with_capacity(profiles.len());
    for p in profiles {
        let id = p.category_id;
        let mesh = extrude(&p, section.thickness).map_err(|e| CliError::runtime(format!("{source}: part {id}: {e}")))?;
        let sym = detect_symmetries(&mesh, DEFAULT_ANGULAR_STEP_DEG, DEFAULT_SYMMETRY_TOLERANCE)
            .map_err(|e| CliError::runtime(format!("{source}: part {id}: {e}")))?;
        tracing::info!(part = id, triangles = mesh.triangles.len(), symmetries = sym.len(), "converted");
        models.push((mesh, Some(p), sym));
    }
    write_models(out, &models).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(models.iter().map(|(m, _, _)| m.category_id).collect())
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let target = to.join(e.file_name());
        if e.file_type()?.is_dir() {
            copy_dir(&e.path(), &target)?;
        } else {
            fs::copy(e.path(), target)?;
        }
    }
    Ok(())
}

/// Generates `config.scenes` scenes and writes them, with a copy of the
/// models, under `out`. Returns the number of images.
pub fn gen(models_dir: &Path, out: &Path, config: &GenConfig, seed: u64) -> Result<usize, CliError> {
    if config.scenes == 0 {
        return Err(CliError::usage("count must be at least 1"));
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let models = load_models(models_dir)?;
    let parts = models.mesh_list();
    if parts.is_empty() {
        return Err(CliError::usage(format!("no models in {}", models_dir.display())));
    }
    let scenes = generate_dataset(&parts, config, seed).map_err(|e| CliError::runtime(e.to_string()))?;
    write_bop_dataset(&scenes, out).map_err(|e| CliError::runtime(e.to_string()))?;
    copy_dir(models_dir, &out.join("models")).map_err(|e| CliError::runtime(format!("copying models: {e}")))?;
    Ok(scenes.iter().map(|s| s.images.len()).sum())
}

fn records_from(out: EstimatorOutput, scene_id: u32, image_id: u32) -> impl Iterator<Item = EstimateRecord> {
    out.detections.into_iter().filter_map(move |d| {
        let p = d.pose?;
        Some(EstimateRecord {
            scene_id,
            image_id,
            category_id: d.category_id,
            score: d.score,
            rotation: p.rotation_row_major(),
            translation: p.translation_array(),
            bbox: Some(d.bbox),
        })
    })
}

/// Runs the configured estimator on every image of the dataset.
pub fn estimate(dataset: &Path, models_dir: &Path, section: &EstimateSection) -> Result<Vec<EstimateRecord>, CliError> {
    require_dir(dataset, "dataset")?;
    let known = section.estimator == "oracle" || ESTIMATOR_NAMES.contains(&section.estimator.as_str());
    if !known {
        return Err(CliError::usage(format!(
            "unknown estimator `{}` (valid: oracle, {})",
            section.estimator,
            ESTIMATOR_NAMES.join(", ")
        )));
    }
    let scenes = read_bop_dataset(dataset).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut records = Vec::new();
    if section.estimator == "oracle" {
        section.oracle.validate().map_err(|e| CliError::usage(e.to_string()))?;
        for img in scenes.iter().flat_map(|s| &s.images) {
            let a = &img.annotation;
            let out = oracle_estimate(a, &section.oracle, section.seed).map_err(|e| CliError::runtime(e.to_string()))?;
            records.extend(records_from(out, a.scene_id, a.image_id));
        }
        return Ok(records);
    }
    let models = load_models(models_dir)?;
    let (library, missing) = library_from_models(&models);
    if !missing.is_empty() {
        tracing::warn!(?missing, "models without a stored profile are not matched");
    }
    let est = build_estimator(&section.estimator, library, section.contour).map_err(|e| CliError::usage(e.to_string()))?;
    for (frame, img) in scenes.iter().flat_map(|s| &s.images).enumerate() {
        let a = &img.annotation;
        let out = est
            .estimate(&EstimatorInput::from_scene_image(img, frame as u64))
            .map_err(|e| CliError::runtime(format!("scene {} image {}: {e}", a.scene_id, a.image_id)))?;
        records.extend(records_from(out, a.scene_id, a.image_id));
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[EstimateRecord]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    let f = fs::File::create(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    write_estimates(&mut w, records).and_then(|_| w.flush()).map_err(|e| CliError::runtime(e.to_string()))
}

/// Scores an estimates file; writes `report.json` and `report.txt`.
pub fn eval(
    dataset: &Path,
    models_dir: &Path,
    estimates: &Path,
    out: &Path,
    config: &EvalConfig,
) -> Result<EvalReport, CliError> {
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    require_dir(dataset, "dataset")?;
    let file = fs::File::open(estimates)
        .map_err(|e| CliError::usage(format!("cannot open estimates {}: {e}", estimates.display())))?;
    let records = read_estimates(BufReader::new(file))
        .map_err(|e| CliError::runtime(format!("{}: {e}", estimates.display())))?;
    let models = load_models(models_dir)?;
    let scenes = read_bop_dataset(dataset).map_err(|e| CliError::runtime(e.to_string()))?;
    let report = evaluate(&scenes, &models, &records, config).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(out.join("report.json"), json).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::write(out.join("report.txt"), report.to_table()).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(report)
}

/// Writes the manifest, listing every file under `out` relative to it.
pub fn write_dir_manifest(out: &Path, mut manifest: RunManifest) -> Result<(), CliError> {
    manifest.outputs = crate::manifest::list_files(out).map_err(|e| CliError::runtime(e.to_string()))?;
    manifest.write(&out.join(crate::manifest::MANIFEST_FILE)).map_err(|e| CliError::runtime(e.to_string()))
}

pub fn sibling_manifest_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_map_to_lines() {
        let t = b"ab\ncde\nf";
        assert_eq!(line_col(t, 0), (1, 1));
        assert_eq!(line_col(t, 4), (2, 2));
        assert_eq!(line_col(t, 7), (3, 1));
        assert_eq!(line_col(t, 100), (3, 2));
    }

    #[test]
    fn manifest_sits_next_to_file() {
        assert_eq!(sibling_manifest_path(Path::new("a/est.jsonl")), PathBuf::from("a/est.jsonl.manifest.json"));
    }
}
