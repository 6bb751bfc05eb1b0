//! `build-dataset`, `train` and `retrieve`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rainq::dataset::{build_dataset_with_mask, load_split, synthetic_mask, Manifest, Split, MANIFEST_FILE};
use rainq::quantiles::{monotonize, point_estimate};
use rainq::qunet::{predict_scene, Checkpoint, QuantileUNet, Sample, Trainer};
use rainq::swath::{crop_to_tile, read_mask, read_tb, write_swath, SwathData, TbScene};

use crate::config::RunConfig;
use crate::{write_atomically, UsageError};

pub const CHECKPOINT_FILE: &str = "checkpoint.qnt";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";

pub fn read_manifest(dir: &Path) -> anyhow::Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    Manifest::read(&path).with_context(|| format!("reading dataset manifest {}", path.display()))
}

pub fn build_dataset(cfg: &RunConfig) -> anyhow::Result<()> {
    let mask = match &cfg.mask {
        Some(p) => read_mask(p).with_context(|| format!("reading mask {}", p.display()))?,
        None => synthetic_mask(cfg.build.mask_cell_deg)?,
    };
    write_atomically(&cfg.dataset_dir, |dir| {
        let m = build_dataset_with_mask(&cfg.build, mask, dir).context("building the dataset")?;
        eprintln!(
            "{} of {} candidate scenes selected ({} train, {} val, {} test)",
            m.scenes.len(),
            m.n_candidates,
            m.entries(Split::Train).count(),
            m.entries(Split::Val).count(),
            m.entries(Split::Test).count()
        );
        cfg.write_receipt(dir)
    })
}

fn samples(manifest: &Manifest, dir: &Path, split: Split) -> anyhow::Result<Vec<Sample>> {
    let scenes = load_split(manifest, dir, split).with_context(|| format!("loading the {split:?} split"))?;
    Ok(scenes
        .iter()
        .map(|(tb, rf)| Sample::from_scene(tb, rf, &manifest.normalizer))
        .collect::<Result<_, _>>()?)
}

fn loss_csv(t: &Trainer) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in &t.history {
        let val = r.val_loss.map_or("NaN".to_string(), |v| v.to_string());
        writeln!(s, "{},{},{}", r.epoch, r.train_loss, val).unwrap();
    }
    s
}

fn replace_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

/// Trains on the train split, validating on val; the checkpoint and loss
/// history are rewritten after every epoch so an interrupted run can resume.
pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let manifest = read_manifest(&cfg.dataset_dir)?;
    let train = samples(&manifest, &cfg.dataset_dir, Split::Train)?;
    let val = samples(&manifest, &cfg.dataset_dir, Split::Val)?;
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let ck = Checkpoint::read(p).with_context(|| format!("reading checkpoint {}", p.display()))?;
            if ck.model.config() != &cfg.model {
                return Err(UsageError(format!("model: differs from the architecture stored in {}", p.display())).into());
            }
            let adam = ck
                .adam
                .with_context(|| format!("{} holds no optimizer state to resume from", p.display()))?;
            Trainer::resume(ck.model, adam, ck.history, cfg.train.clone())?
        }
        None => Trainer::new(QuantileUNet::new(cfg.model.clone())?, cfg.train.clone())?,
    };

    let dir = &cfg.train_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.write_receipt(dir)?;
    let save = |t: &Trainer| -> anyhow::Result<()> {
        replace_file(&dir.join(CHECKPOINT_FILE), &Checkpoint::from_trainer(t, Some(manifest.normalizer)).to_bytes()?)?;
        replace_file(&dir.join(LOSS_HISTORY_FILE), loss_csv(t).as_bytes())
    };
    trainer
        .run(&train, &val, |t, r| {
            eprintln!("epoch {} train loss {:.5} val loss {:?}", r.epoch, r.train_loss, r.val_loss);
            save(t).map_err(|e| rainq::Error::Checkpoint(format!("{e:#}")))
        })
        .context("training")?;
    save(&trainer)
}

/// Scene id of an input file: its name without `.swt` and `.tb`.
fn scene_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".swt").unwrap_or(&name);
    name.strip_suffix(".tb").unwrap_or(name).to_string()
}

pub fn retrieve(cfg: &RunConfig) -> anyhow::Result<()> {
    let rc = &cfg.retrieve;
    let ck_path = rc.checkpoint.clone().unwrap_or_else(|| cfg.train_dir.join(CHECKPOINT_FILE));
    let ck = Checkpoint::read(&ck_path).with_context(|| format!("reading checkpoint {}", ck_path.display()))?;

    let (inputs, manifest): (Vec<(String, PathBuf)>, Option<Manifest>) = if rc.inputs.is_empty() {
        let m = read_manifest(&cfg.dataset_dir)?;
        let inputs = m.entries(rc.split).map(|e| (e.id.clone(), cfg.dataset_dir.join(&e.tb))).collect();
        (inputs, Some(m))
    } else {
        (rc.inputs.iter().map(|p| (scene_id(p), p.clone())).collect(), None)
    };
    let mut seen = BTreeSet::new();
    if let Some((id, _)) = inputs.iter().find(|(id, _)| !seen.insert(id.clone())) {
        return Err(UsageError(format!("retrieve.inputs: two inputs share the scene id {id}")).into());
    }
    let normalizer = match (ck.normalizer, &manifest) {
        (Some(n), _) => n,
        (None, Some(m)) => m.normalizer,
        (None, None) => anyhow::bail!("{} carries no input normalizer and no dataset manifest was read", ck_path.display()),
    };
    let factor = ck.model.config().tile_factor();

    write_atomically(&cfg.retrieve_dir, |dir| {
        for (id, path) in &inputs {
            let tb: TbScene = read_tb(path).with_context(|| format!("reading {}", path.display()))?;
            let tb = if rc.crop { crop_to_tile(&tb, factor)? } else { tb };
            let (h, w) = tb.shape();
            if h % factor != 0 || w % factor != 0 {
                return Err(anyhow::Error::new(rainq::Error::TileNotDivisible { rows: h, cols: w, factor })
                    .context(format!("scene {id} (set retrieve.crop to crop automatically)")));
            }
            let qf = monotonize(&predict_scene(&ck.model, &normalizer, &tb).with_context(|| format!("retrieving scene {id}"))?);
            write_swath(dir.join(format!("{id}.q.swt")), &qf)?;
            write_swath(dir.join(format!("{id}.median.swt")), &point_estimate(&qf, 0.5)?)?;
        }
        eprintln!("retrieved {} scenes", inputs.len());
        cfg.write_receipt(dir)
    })
}
