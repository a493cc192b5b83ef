use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use swimbladder::atlas::{build_atlas, Atlas};
use swimbladder::classifier::{cross_validate, predict, train_forest, CvReport, ForestModel, ForestParams, Label};
use swimbladder::contour::{write_overlay, write_polar, SegmentedShape};
use swimbladder::descriptors::{features_with, read_features_csv, rows_to_dataset, write_features_csv, FeatureRow};
use swimbladder::imaging::io::{read_gray, read_mask, write_gray, write_mask};
use swimbladder::imaging::BinaryMask;
use swimbladder::phantom::{generate_cohort_shaped, CohortShape, PhantomSpec};
use swimbladder::pipeline::{segment, AtlasSet};
use swimbladder::preprocessing::Orientation;

use crate::config::Settings;
use crate::manifest::{Manifest, ManifestEntry};

/// Number of items that failed without aborting the run.
pub type Failures = usize;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn report_failures(failures: &[(String, String)]) -> Failures {
    for (id, err) in failures {
        eprintln!("failed: {id}: {err}");
    }
    failures.len()
}

pub fn phantom_gen(settings: &Settings, shape: CohortShape, out: &Path) -> Result<Failures> {
    if shape.total() == 0 {
        bail!("cohort is empty");
    }
    create_dir(&out.join("images"))?;
    create_dir(&out.join("masks"))?;
    let cohort = generate_cohort_shaped(shape, &PhantomSpec::new(Orientation::Dorsal, true, 0), settings.seed)?;
    let entries = cohort
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let id = format!("embryo_{i:04}");
            let image_path = format!("images/{id}.png");
            let body_path = format!("masks/{id}_body.png");
            write_gray(&p.image, out.join(&image_path))?;
            write_mask(&p.body, out.join(&body_path))?;
            let bladder_mask_path = if p.bladder.is_empty() {
                None
            } else {
                let path = format!("masks/{id}_bladder.png");
                write_mask(&p.bladder, out.join(&path))?;
                Some(path)
            };
            Ok(ManifestEntry {
                id: Some(id),
                image_path,
                orientation: p.orientation,
                label: Some(p.label),
                bladder_mask_path,
                body_mask_path: Some(body_path),
                seed: Some(p.seed),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Manifest::write(&out.join("manifest.jsonl"), &entries)?;
    println!("generated {} phantoms in {}", entries.len(), out.display());
    Ok(0)
}

pub fn build_atlas_cmd(
    settings: &Settings,
    manifest: &Path,
    orientation: Orientation,
    fixed_index: usize,
    masks_dir: Option<&Path>,
    out: &Path,
) -> Result<Failures> {
    let m = Manifest::load(manifest)?;
    let chosen: Vec<&ManifestEntry> = m
        .entries
        .iter()
        .filter(|e| e.orientation == orientation && e.label != Some(Label::NoSwimBladder))
        .collect();
    if chosen.len() < 2 {
        bail!("need ≥ 2 healthy {orientation} images with masks, found {}", chosen.len());
    }
    let mut images = Vec::with_capacity(chosen.len());
    let mut masks = Vec::with_capacity(chosen.len());
    for e in &chosen {
        let mask_path = match (masks_dir, &e.bladder_mask_path) {
            (Some(dir), _) => dir.join(format!("{}_bladder.png", e.key())),
            (None, Some(p)) => m.resolve(p),
            (None, None) => bail!("{}: no swim bladder mask", e.key()),
        };
        images.push(read_gray(m.resolve(&e.image_path)).with_context(|| format!("{}: image", e.key()))?);
        masks.push(read_mask(&mask_path).with_context(|| format!("{}: mask {}", e.key(), mask_path.display()))?);
    }
    let atlas = build_atlas(&images, &masks, fixed_index, orientation, &settings.pipeline.registration)
        .with_context(|| format!("building {orientation} atlas"))?;
    atlas.save(out)?;
    println!("{orientation} atlas: n = {}, fixed = {}", atlas.n, chosen[atlas.fixed_index].key());
    for (e, r) in chosen.iter().zip(&atlas.registrations) {
        if let Some(r) = r {
            let flag = if r.did_not_improve { " (no improvement over identity)" } else { "" };
            println!("  {}: MI {:.4} bits{flag}", e.key(), r.mutual_information);
        }
    }
    Ok(0)
}

fn load_atlas(dir: Option<&Path>) -> Result<Option<Atlas>> {
    dir.map(|d| Atlas::load(d).with_context(|| format!("loading atlas {}", d.display())))
        .transpose()
}

#[derive(Debug, Serialize)]
struct SegmentRecord {
    id: String,
    center: [f64; 2],
    radius: usize,
    start_angle: f64,
    fallback: bool,
    start_row: usize,
    path_cost: u64,
    area: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou: Option<f64>,
}

pub fn segment_cmd(
    settings: &Settings,
    manifest: &Path,
    atlas_dorsal: Option<&Path>,
    atlas_lateral: Option<&Path>,
    out: &Path,
    overlays: bool,
) -> Result<Failures> {
    let m = Manifest::load(manifest)?;
    let atlases = AtlasSet {
        dorsal: load_atlas(atlas_dorsal)?,
        lateral: load_atlas(atlas_lateral)?,
    };
    if atlases.dorsal.is_none() && atlases.lateral.is_none() {
        bail!("at least one of --atlas-dorsal / --atlas-lateral is required");
    }
    create_dir(out)?;
    let results: Vec<Result<SegmentRecord>> = m
        .entries
        .par_iter()
        .map(|e| {
            let id = e.key();
            let image = read_gray(m.resolve(&e.image_path))?;
            let seg = segment(&image, e.orientation, &atlases, &settings.pipeline)?;
            write_mask(&seg.shape.full, out.join(format!("{id}_S.png")))?;
            write_mask(&seg.shape.interior, out.join(format!("{id}_Si.png")))?;
            write_mask(&seg.shape.contour, out.join(format!("{id}_Sc.png")))?;
            if overlays {
                write_overlay(out.join(format!("{id}_overlay.png")), &image, &seg.roi, &seg.shape)?;
                write_polar(out.join(format!("{id}_polar.png")), &seg.polar)?;
            }
            let iou = match &e.bladder_mask_path {
                Some(p) => Some(seg.shape.full.iou(&read_mask(m.resolve(p))?)),
                None => None,
            };
            Ok(SegmentRecord {
                id,
                center: [seg.roi.center.x, seg.roi.center.y],
                radius: seg.roi.radius,
                start_angle: seg.roi.start_angle,
                fallback: seg.roi.fallback,
                start_row: seg.start_row,
                path_cost: seg.path.cost,
                area: seg.shape.full.count(),
                iou,
            })
        })
        .collect();
    let mut lines = String::new();
    let mut failures = Vec::new();
    for (e, r) in m.entries.iter().zip(results) {
        match r {
            Ok(rec) => {
                if rec.fallback {
                    eprintln!("warning: {}: no certain atlas region after transport, used map maximum", rec.id);
                }
                lines.push_str(&serde_json::to_string(&rec)?);
                lines.push('\n');
            }
            Err(err) => failures.push((e.key(), format!("{err:#}"))),
        }
    }
    fs::write(out.join("segments.jsonl"), lines)?;
    println!("segmented {} of {} images", m.entries.len() - failures.len(), m.entries.len());
    Ok(report_failures(&failures))
}

pub fn features_cmd(settings: &Settings, manifest: &Path, shapes: &Path, out: &Path) -> Result<Failures> {
    let m = Manifest::load(manifest)?;
    let results: Vec<Result<FeatureRow>> = m
        .entries
        .par_iter()
        .map(|e| {
            let id = e.key();
            let image = read_gray(m.resolve(&e.image_path))?;
            let interior = read_mask(shapes.join(format!("{id}_Si.png")))?;
            let contour = read_mask(shapes.join(format!("{id}_Sc.png")))?;
            let (w, h) = image.dims();
            let shape = SegmentedShape {
                full: contour.union(&interior),
                contour,
                interior,
                curve: BinaryMask::new(w, h),
            };
            let f = features_with(&image, &shape, settings.pipeline.opening_radius)?;
            Ok(FeatureRow {
                image_id: id,
                label: e.label,
                features: f.vector,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (e, r) in m.entries.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(err) => failures.push((e.key(), format!("{err:#}"))),
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_features_csv(std::io::BufWriter::new(file), &rows)?;
    println!("wrote {} feature rows to {}", rows.len(), out.display());
    Ok(report_failures(&failures))
}

fn load_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_features_csv(std::io::BufReader::new(file))?)
}

pub fn train_cmd(settings: &Settings, features: &Path, out: &Path) -> Result<Failures> {
    let data = rows_to_dataset(&load_rows(features)?)?;
    let model = train_forest(&data, &settings.forest)?;
    fs::write(out, model.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
    println!("trained {} trees on {} samples", model.trees.len(), data.len());
    Ok(0)
}

pub fn predict_cmd(model: &Path, features: &Path, out: &Path) -> Result<Failures> {
    let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let model = ForestModel::from_json(&text)?;
    let rows = load_rows(features)?;
    let mut w = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    w.write_record(["image_id", "predicted", "votes_fraction"])?;
    let (mut correct, mut labelled) = (0, 0);
    for row in &rows {
        let p = predict(&model, &row.features.to_array())?;
        if let Some(truth) = row.label {
            labelled += 1;
            correct += usize::from(truth == p.label);
        }
        w.write_record([row.image_id.as_str(), p.label.as_str(), &format!("{:.4}", p.votes_fraction)])?;
    }
    w.flush()?;
    println!("predicted {} images", rows.len());
    if labelled > 0 {
        println!("accuracy on labelled rows: {:.4} ({correct}/{labelled})", correct as f64 / labelled as f64);
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct CrossvalOutput<'a> {
    forest: &'a ForestParams,
    n_samples: usize,
    #[serde(flatten)]
    report: &'a CvReport,
}

pub fn crossval_cmd(settings: &Settings, features: &Path, out: &Path) -> Result<Failures> {
    let data = rows_to_dataset(&load_rows(features)?)?;
    let report = cross_validate(&data, settings.folds, &settings.forest, settings.seed)?;
    let doc = CrossvalOutput {
        forest: &settings.forest,
        n_samples: data.len(),
        report: &report,
    };
    fs::write(out, serde_json::to_string_pretty(&doc)? + "\n").with_context(|| format!("writing {}", out.display()))?;
    let t = report.pooled_table;
    println!("{}-fold cross-validation on {} samples", report.k, data.len());
    println!("                   predicted SB  predicted no SB");
    println!("  truth SB         {:>12}  {:>15}", t[0][0], t[0][1]);
    println!("  truth no SB      {:>12}  {:>15}", t[1][0], t[1][1]);
    println!(
        "accuracy {:.4}  sensitivity {:.4}  specificity {:.4}",
        report.metrics.accuracy, report.metrics.sensitivity, report.metrics.specificity
    );
    Ok(0)
}
