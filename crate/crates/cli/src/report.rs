//! `evaluate` and `grid-diff`: score retrieved medians (and any external
//! estimators) against the dataset reference and, when mosaic frames are
//! configured, against the mosaic as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rainq::colocation::{colocate_radius_mean, grid_average, mosaic_to_rate, nearest_time_frame, MosaicFrame};
use rainq::eval::tables::{
    bias_rmse_csv, contingency_csv, coverage_csv, error_stats_csv, f1_table_csv, histogram_csv, mae_csv, pod_far_csv,
    scatter_csv,
};
use rainq::eval::{
    conditional_bias_rmse, contingency, density_scatter, error_conditional_stats, grid_difference, intensity_histogram,
    mae_by_time, pixel_difference_grid, stratify_by_surface, ContingencyTable, CoverageAccumulator, MatchedPixels,
    Stratified,
};
use rainq::geo::LatLonBox;
use rainq::swath::{
    read_mask, read_quantiles, read_rain, GridField, GridSpec, Provenance, QuantileField, RainField, SurfaceMask,
    SwathData,
};

use crate::commands::read_manifest;
use crate::config::{ReportTable, RunConfig};
use crate::write_atomically;

/// Subdirectory of the report holding the tables scored against the mosaic.
pub const MOSAIC_SUBDIR: &str = "mosaic";

struct Scene {
    id: String,
    reference: RainField,
    mosaic: Option<RainField>,
    quantiles: QuantileField,
    /// retrieval median first, then the external estimators in config order
    estimates: Vec<RainField>,
}

struct Sources {
    names: Vec<String>,
    scenes: Vec<Scene>,
    mask: Option<SurfaceMask>,
}

#[derive(Clone, Copy)]
enum Reference {
    Dataset,
    Mosaic,
}

impl Scene {
    fn reference(&self, which: Reference) -> &RainField {
        match which {
            Reference::Dataset => &self.reference,
            Reference::Mosaic => self.mosaic.as_ref().expect("mosaic reference loaded"),
        }
    }
}

fn read_frames(paths: &[PathBuf]) -> anyhow::Result<Vec<MosaicFrame>> {
    let mut frames = paths
        .iter()
        .map(|p| MosaicFrame::read(p).with_context(|| format!("reading mosaic frame {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    frames.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(frames)
}

fn load_sources(cfg: &RunConfig) -> anyhow::Result<Sources> {
    let src = &cfg.sources;
    let manifest = read_manifest(&cfg.dataset_dir)?;
    let mask = match (&cfg.mask, &manifest.mask) {
        (Some(p), _) => Some(read_mask(p).with_context(|| format!("reading mask {}", p.display()))?),
        (None, Some(rel)) => {
            let p = cfg.dataset_dir.join(rel);
            Some(read_mask(&p).with_context(|| format!("reading mask {}", p.display()))?)
        }
        (None, None) => None,
    };
    let frames = read_frames(&src.mosaic)?;
    let mut names = vec![src.estimator.clone()];
    names.extend(src.external.iter().map(|e| e.name.clone()));

    let rain = |p: PathBuf, prov| read_rain(&p, prov).with_context(|| format!("reading {}", p.display()));
    let mut scenes = Vec::new();
    for e in manifest.entries(src.split) {
        let reference = rain(cfg.dataset_dir.join(&e.reference), Provenance::Reference)?;
        let qpath = cfg.retrieve_dir.join(format!("{}.q.swt", e.id));
        let quantiles = read_quantiles(&qpath).with_context(|| format!("reading {}", qpath.display()))?;
        let mut estimates = vec![rain(cfg.retrieve_dir.join(format!("{}.median.swt", e.id)), Provenance::Retrieval)?];
        for x in &src.external {
            estimates.push(rain(x.dir.join(format!("{}.swt", e.id)), Provenance::ExternalEstimator)?);
        }
        for (name, est) in names.iter().zip(&estimates) {
            if !est.same_shape(&reference) {
                anyhow::bail!(rainq::Error::DimensionMismatch(format!(
                    "scene {}: {name} is {:?}, reference {:?}",
                    e.id,
                    est.shape(),
                    reference.shape()
                )));
            }
        }
        let mosaic = if frames.is_empty() {
            None
        } else {
            let frame = nearest_time_frame(&frames, reference.geo().mid_time())?;
            let samples = mosaic_to_rate(frame, src.quality_min).to_samples();
            Some(colocate_radius_mean(&samples, reference.geo(), src.colocation_radius_km)?)
        };
        scenes.push(Scene { id: e.id.clone(), reference, mosaic, quantiles, estimates });
    }
    if scenes.is_empty() {
        anyhow::bail!(rainq::Error::Empty("scenes in the evaluated split"));
    }
    Ok(Sources { names, scenes, mask })
}

/// Co-located pairs of estimator `k` against the chosen reference.
fn matched(src: &Sources, k: usize, which: Reference) -> anyhow::Result<MatchedPixels> {
    let mut px = MatchedPixels::new();
    for s in &src.scenes {
        px.push_fields(&s.estimates[k], s.reference(which)).with_context(|| format!("scene {}", s.id))?;
    }
    let px = px.colocated();
    if px.is_empty() {
        return Err(anyhow::Error::new(rainq::Error::Empty("co-located pixels between the estimator and the reference"))
            .context(format!("estimator {}", src.names[k])));
    }
    Ok(px)
}

/// Land / ocean / total; without a mask the land and ocean rows see no pixels.
fn stratify<T>(px: &MatchedPixels, mask: Option<&SurfaceMask>, f: impl Fn(&MatchedPixels) -> T) -> Stratified<T> {
    match mask {
        Some(m) => stratify_by_surface(px, m, f),
        None => {
            let empty = MatchedPixels::new();
            Stratified { land: f(&empty), ocean: f(&empty), total: f(px) }
        }
    }
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn grid_spec(domain: Option<LatLonBox>, cell_deg: f64) -> rainq::Result<GridSpec> {
    match domain {
        Some(b) => GridSpec::covering(&b, cell_deg),
        None => GridSpec::global(cell_deg),
    }
}

fn est_pixels(px: &MatchedPixels) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    (0..px.len()).map(|i| (px.lat[i], px.lon[i], px.est[i]))
}

fn ref_pixels(px: &MatchedPixels) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    (0..px.len()).map(|i| (px.lat[i], px.lon[i], px.reference[i]))
}

/// Paired cell means (estimate, reference) over cells non-empty on both sides.
fn paired_cells(est: &GridField, reference: &GridField) -> (Vec<f64>, Vec<f64>) {
    est.mean
        .iter()
        .zip(&reference.mean)
        .filter(|(e, r)| !e.is_nan() && !r.is_nan())
        .map(|(e, r)| (*e, *r))
        .unzip()
}

fn write(dir: &Path, name: &str, body: String) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

/// Write every configured table for one reference into `dir`.
fn write_tables(cfg: &RunConfig, src: &Sources, which: Reference, dir: &Path) -> anyhow::Result<()> {
    let ec = &cfg.evaluate;
    let thr = ec.threshold;
    let mask = src.mask.as_ref();
    let pixels: Vec<MatchedPixels> = (0..src.names.len()).map(|k| matched(src, k, which)).collect::<anyhow::Result<_>>()?;
    let named = |f: &dyn Fn(&MatchedPixels) -> _| -> Vec<(&str, Stratified<Option<ContingencyTable>>)> {
        src.names.iter().zip(&pixels).map(|(n, px)| (n.as_str(), stratify(px, mask, f))).collect()
    };
    let table = |p: &MatchedPixels| contingency(&p.est, &p.reference, thr).ok();
    let tables: std::collections::BTreeSet<ReportTable> = ec.tables.iter().copied().collect();

    for t in tables {
        match t {
            ReportTable::Contingency => write(dir, "contingency.csv", contingency_csv(&named(&table)))?,
            ReportTable::PodFar => write(dir, "pod_far.csv", pod_far_csv(&named(&table)))?,
            ReportTable::BiasRmse => {
                let rows: Vec<_> = src
                    .names
                    .iter()
                    .zip(&pixels)
                    .map(|(n, px)| (n.as_str(), stratify(px, mask, |p| conditional_bias_rmse(&p.est, &p.reference, thr))))
                    .collect();
                write(dir, "bias_rmse.csv", bias_rmse_csv(&rows))?
            }
            ReportTable::ErrorStats => {
                let rows: Vec<_> = src
                    .names
                    .iter()
                    .zip(&pixels)
                    .map(|(n, px)| (n.as_str(), stratify(px, mask, |p| error_conditional_stats(&p.est, &p.reference, thr))))
                    .collect();
                write(dir, "error_stats.csv", error_stats_csv(&rows))?
            }
            ReportTable::Coverage => {
                let mut acc = CoverageAccumulator::new(&ec.coverage_bins, thr)?;
                for s in &src.scenes {
                    acc.add_scene(&s.quantiles, s.reference(which)).with_context(|| format!("scene {}", s.id))?;
                }
                write(dir, "coverage.csv", coverage_csv(&acc.finish()))?
            }
            ReportTable::F1 => {
                for (n, px) in src.names.iter().zip(&pixels) {
                    let t = table(px).unwrap_or(ContingencyTable { tp: 0, fn_: 0, fp: 0, tn: 0 });
                    write(dir, &format!("f1_{}.csv", slug(n)), f1_table_csv(n, &t))?;
                }
            }
            ReportTable::Histogram => {
                let mut fields: Vec<(&str, &[f64])> = vec![("reference", &pixels[0].reference)];
                fields.extend(src.names.iter().zip(&pixels).map(|(n, px)| (n.as_str(), px.est.as_slice())));
                let h = intensity_histogram(&fields, &ec.histogram_edges, thr)?;
                write(dir, "histogram.csv", histogram_csv(&ec.histogram_edges, &h))?
            }
            ReportTable::DiffMap => {
                let spec = grid_spec(ec.domain, ec.cell_deg)?;
                for (n, px) in src.names.iter().zip(&pixels) {
                    write(dir, &format!("diff_map_{}.csv", slug(n)), pixel_difference_grid(px, &spec, thr).to_csv())?;
                }
            }
            ReportTable::Scatter => {
                let spec = grid_spec(ec.domain, ec.fine_cell_deg)?;
                for (n, px) in src.names.iter().zip(&pixels) {
                    let (e, r) = paired_cells(&grid_average(est_pixels(px), &spec, thr), &grid_average(ref_pixels(px), &spec, thr));
                    let body = match density_scatter(&e, &r, &ec.scatter) {
                        Ok(sc) => scatter_csv(&sc),
                        // too few rainy cells to regress
                        Err(rainq::Error::Empty(_)) => format!("slope,intercept,r2,n\nNaN,NaN,NaN,{}\nest_lo,est_hi,ref_lo,ref_hi,count\n", e.len()),
                        Err(err) => return Err(err.into()),
                    };
                    write(dir, &format!("scatter_{}.csv", slug(n)), body)?;
                }
            }
            ReportTable::GridDiff => {
                let spec = grid_spec(ec.domain, ec.fine_cell_deg)?;
                for (n, px) in src.names.iter().zip(&pixels) {
                    let d = grid_difference(&grid_average(ref_pixels(px), &spec, thr), &grid_average(est_pixels(px), &spec, thr))?;
                    write(dir, &format!("grid_diff_{}.csv", slug(n)), d.to_csv())?;
                }
            }
            ReportTable::Mae => {
                let series: Vec<_> = src
                    .names
                    .iter()
                    .zip(&pixels)
                    .map(|(n, px)| (n.as_str(), mae_by_time(&px.est, &px.reference, &px.time, thr, ec.bucketing)))
                    .collect();
                write(dir, "mae.csv", mae_csv(&series))?
            }
        }
    }
    Ok(())
}

/// Full report for the configured split, written atomically to `report_dir`.
pub fn evaluate(cfg: &RunConfig) -> anyhow::Result<()> {
    let src = load_sources(cfg)?;
    write_atomically(&cfg.report_dir, |dir| {
        write_tables(cfg, &src, Reference::Dataset, dir)?;
        if !cfg.sources.mosaic.is_empty() {
            let sub = dir.join(MOSAIC_SUBDIR);
            fs::create_dir(&sub).with_context(|| format!("creating {}", sub.display()))?;
            write_tables(cfg, &src, Reference::Mosaic, &sub)?;
        }
        eprintln!("report for {} scenes written to {}", src.scenes.len(), cfg.report_dir.display());
        cfg.write_receipt(dir)
    })
}

/// Both difference paths per estimator: per-pixel differences averaged per
/// cell, and the difference of per-cell means. The reference is the mosaic
/// when frames are configured, the dataset reference otherwise.
pub fn grid_diff(cfg: &RunConfig) -> anyhow::Result<()> {
    let gc = &cfg.grid_diff;
    let src = load_sources(cfg)?;
    let which = if cfg.sources.mosaic.is_empty() { Reference::Dataset } else { Reference::Mosaic };
    let spec = grid_spec(gc.domain, gc.cell_deg)?;
    let mut files = BTreeMap::new();
    for (k, n) in src.names.iter().enumerate() {
        let px = matched(&src, k, which)?;
        let ref_grid = grid_average(ref_pixels(&px), &spec, gc.threshold);
        let est_grid = grid_average(est_pixels(&px), &spec, gc.threshold);
        let s = slug(n);
        files.insert(format!("pixel_diff_{s}.csv"), pixel_difference_grid(&px, &spec, gc.threshold).to_csv());
        files.insert(format!("grid_diff_{s}.csv"), grid_difference(&ref_grid, &est_grid)?.to_csv());
        files.insert(format!("reference_grid_{s}.csv"), ref_grid.to_csv());
        files.insert(format!("estimate_grid_{s}.csv"), est_grid.to_csv());
    }
    write_atomically(&cfg.grid_diff_dir, |dir| {
        for (name, body) in files {
            write(dir, &name, body)?;
        }
        cfg.write_receipt(dir)
    })
}
