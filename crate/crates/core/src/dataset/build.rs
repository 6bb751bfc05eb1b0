//! Database construction and the JSON manifest that describes it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{select_scene, split_dataset, synthetic_mask, generate_scene, Normalizer, SceneSelectionRule, SynthConfig};
use crate::error::{Error, Result};
use crate::swath::{
    crop_to_tile, read_rain, read_tb, write_mask, write_swath, Provenance, RainField, SurfaceMask,
    SwathData, TbScene,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const MASK_FILE: &str = "mask.msk";
const FORMAT: &str = "rainq-manifest-1";

/// Where scenes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SceneSource {
    /// `n_scenes` candidates from the synthetic generator
    #[default]
    Synthetic,
    /// existing SWT1 brightness-temperature / reference-rain pairs
    Ingest { pairs: Vec<(PathBuf, PathBuf)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub source: SceneSource,
    /// candidate scenes generated before selection
    pub n_scenes: usize,
    pub synth: SynthConfig,
    pub rule: SceneSelectionRule,
    /// train / val / test
    pub fractions: [f64; 3],
    /// resolution of the generated land/ocean mask
    pub mask_cell_deg: f64,
    /// tiles are cropped to multiples of this
    pub tile_multiple: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            source: SceneSource::Synthetic,
            n_scenes: 200,
            synth: SynthConfig::default(),
            rule: SceneSelectionRule::default(),
            fractions: [0.7, 0.15, 0.15],
            mask_cell_deg: 0.25,
            tile_multiple: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub split: Split,
    /// paths relative to the manifest directory
    pub tb: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub synth: SynthConfig,
    pub rule: SceneSelectionRule,
    pub fractions: [f64; 3],
    pub n_candidates: usize,
    pub normalizer: Normalizer,
    /// land/ocean mask for stratified scoring, relative path
    pub mask: Option<String>,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::invalid("manifest", e.to_string()))?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&s)
            .map_err(|e| Error::invalid("manifest", format!("{}: {e}", path.display())))?;
        if m.format != FORMAT {
            return Err(Error::invalid("manifest", format!("unknown format {:?}", m.format)));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |e| e.split == split)
    }
}

/// Scenes of one split, read back from the files listed in the manifest.
pub fn load_split(manifest: &Manifest, dir: impl AsRef<Path>, split: Split) -> Result<Vec<(TbScene, RainField)>> {
    let dir = dir.as_ref();
    manifest
        .entries(split)
        .map(|e| {
            let tb = read_tb(dir.join(&e.tb))?;
            let rf = read_rain(dir.join(&e.reference), Provenance::Reference)?;
            if **tb.geo() != **rf.geo() {
                return Err(Error::DimensionMismatch(format!("scene {}: TB and reference geolocation differ", e.id)));
            }
            Ok((tb, rf))
        })
        .collect()
}

fn candidates(cfg: &BuildConfig, mask: &SurfaceMask) -> Result<Vec<(TbScene, RainField)>> {
    match &cfg.source {
        SceneSource::Synthetic => (0..cfg.n_scenes)
            .map(|i| {
                let id = format!("scene_{i:05}");
                let s = generate_scene(&cfg.synth, mask, i as u64, &id)?;
                Ok((crop_to_tile(&s.tb, cfg.tile_multiple)?, crop_to_tile(&s.reference, cfg.tile_multiple)?))
            })
            .collect(),
        SceneSource::Ingest { pairs } => pairs
            .iter()
            .map(|(tb, rf)| {
                let tb = crop_to_tile(&read_tb(tb)?, cfg.tile_multiple)?;
                let rf = crop_to_tile(&read_rain(rf, Provenance::Reference)?, cfg.tile_multiple)?;
                if **tb.geo() != **rf.geo() {
                    return Err(Error::DimensionMismatch(format!(
                        "granule {}: TB and reference geolocation differ",
                        tb.granule_id
                    )));
                }
                Ok((tb, rf))
            })
            .collect(),
    }
}

/// Generate (or ingest), select, split and normalize; writes the scene files,
/// the mask and the manifest under `out_dir`.
pub fn build_dataset(cfg: &BuildConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    build_dataset_with_mask(cfg, synthetic_mask(cfg.mask_cell_deg)?, out_dir)
}

/// [`build_dataset`] with a supplied land/ocean mask instead of the generated one.
pub fn build_dataset_with_mask(cfg: &BuildConfig, mask: SurfaceMask, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    cfg.synth.validate()?;
    cfg.rule.validate()?;
    let all = candidates(cfg, &mask)?;
    let n_candidates = all.len();
    let selected: Vec<(usize, (TbScene, RainField))> = all
        .into_iter()
        .enumerate()
        .filter(|(_, (_, rf))| select_scene(rf, &cfg.rule))
        .collect();
    if selected.is_empty() {
        return Err(Error::Empty("selected scenes (0 scenes selected)"));
    }
    let split = split_dataset(selected.len(), cfg.fractions, cfg.synth.seed)?;
    let mut assignment = vec![Split::Train; selected.len()];
    for &i in &split.val {
        assignment[i] = Split::Val;
    }
    for &i in &split.test {
        assignment[i] = Split::Test;
    }
    // manifest order, so refitting from the written files reproduces it exactly
    let train: Vec<&TbScene> = (0..selected.len())
        .filter(|&k| assignment[k] == Split::Train)
        .map(|k| &selected[k].1 .0)
        .collect();
    let normalizer = Normalizer::fit(&train)?;

    let scene_dir = out_dir.join("scenes");
    fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;
    let mut scenes = Vec::with_capacity(selected.len());
    for (k, (i, (tb, rf))) in selected.iter().enumerate() {
        let id = format!("scene_{i:05}");
        let tb_rel = format!("scenes/{id}.tb.swt");
        let rf_rel = format!("scenes/{id}.ref.swt");
        write_swath(out_dir.join(&tb_rel), tb)?;
        write_swath(out_dir.join(&rf_rel), rf)?;
        scenes.push(SceneEntry {
            id,
            split: assignment[k],
            tb: tb_rel,
            reference: rf_rel,
        });
    }
    write_mask(out_dir.join(MASK_FILE), &mask)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        seed: cfg.synth.seed,
        synth: cfg.synth.clone(),
        rule: cfg.rule,
        fractions: cfg.fractions,
        n_candidates,
        normalizer,
        mask: Some(MASK_FILE.into()),
        scenes,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> BuildConfig {
        BuildConfig {
            n_scenes: n,
            synth: SynthConfig { n_scan: 32, n_pix: 32, seed, ..Default::default() },
            rule: SceneSelectionRule { light_count: 20, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn manifests_are_byte_identical_across_runs() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        build_dataset(&small(12, 42), a.path()).unwrap();
        build_dataset(&small(12, 42), b.path()).unwrap();
        let ma = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, fs::read(b.path().join(MANIFEST_FILE)).unwrap());
        let m = Manifest::read(a.path().join(MANIFEST_FILE)).unwrap();
        for e in &m.scenes {
            assert_eq!(fs::read(a.path().join(&e.tb)).unwrap(), fs::read(b.path().join(&e.tb)).unwrap());
        }
    }

    #[test]
    fn split_and_reload() {
        let d = tempfile::tempdir().unwrap();
        let m = build_dataset(&small(20, 1), d.path()).unwrap();
        let n: usize = [Split::Train, Split::Val, Split::Test].iter().map(|s| m.entries(*s).count()).sum();
        assert_eq!(n, m.scenes.len());
        let train = load_split(&m, d.path(), Split::Train).unwrap();
        assert_eq!(train.len(), m.entries(Split::Train).count());
        assert!(train.iter().all(|(tb, rf)| select_scene(rf, &m.rule) && tb.shape() == (32, 32)));
        let refs: Vec<&TbScene> = train.iter().map(|p| &p.0).collect();
        assert_eq!(Normalizer::fit(&refs).unwrap(), m.normalizer);
    }

    #[test]
    fn nothing_selected_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        let mut cfg = small(3, 1);
        cfg.rule = SceneSelectionRule { light_count: 1_000_000, heavy_count: 1_000_000, ..Default::default() };
        let err = build_dataset(&cfg, d.path()).unwrap_err();
        assert!(err.to_string().contains("0 scenes selected"), "{err}");
    }

    #[test]
    fn ingest_crops_and_copies() {
        let src = tempfile::tempdir().unwrap();
        let mask = synthetic_mask(0.5).unwrap();
        let synth = SynthConfig { n_scan: 37, n_pix: 35, ..Default::default() };
        let mut pairs = Vec::new();
        for i in 0..4u64 {
            let s = generate_scene(&synth, &mask, i, "g").unwrap();
            let (t, r) = (src.path().join(format!("g{i}.tb.swt")), src.path().join(format!("g{i}.ref.swt")));
            write_swath(&t, &s.tb).unwrap();
            write_swath(&r, &s.reference).unwrap();
            pairs.push((t, r));
        }
        let cfg = BuildConfig {
            source: SceneSource::Ingest { pairs },
            rule: SceneSelectionRule { light_count: 1, ..Default::default() },
            fractions: [0.5, 0.25, 0.25],
            ..Default::default()
        };
        let out = tempfile::tempdir().unwrap();
        let m = build_dataset(&cfg, out.path()).unwrap();
        assert_eq!(m.n_candidates, 4);
        let (tb, _) = &load_split(&m, out.path(), Split::Train).unwrap()[0];
        assert_eq!(tb.shape(), (32, 32));
    }
}
