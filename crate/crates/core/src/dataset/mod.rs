//! Scene selection, train/val/test splitting, input standardization and the
//! synthetic scene generator used in place of a real radiometer/radar archive.

mod build;
mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swath::{RainField, SwathData, TbScene, N_TB_CHANNELS};

pub use build::{
    build_dataset, build_dataset_with_mask, load_split, BuildConfig, Manifest, SceneEntry, SceneSource, Split,
    MANIFEST_FILE,
};
pub use synth::{
    forward_tb, generate_scene, invert_tb, radar_samples, synth_geolocation, synth_rain, synth_tb,
    synthetic_mask, RainCell, RainCells, SynthConfig, SynthScene,
};

/// Minimum rain content for a scene to enter the database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSelectionRule {
    pub light_thresh: f64,
    pub light_count: usize,
    pub heavy_thresh: f64,
    pub heavy_count: usize,
}

impl Default for SceneSelectionRule {
    fn default() -> Self {
        SceneSelectionRule {
            light_thresh: 0.1,
            light_count: 100,
            heavy_thresh: 100.0,
            heavy_count: 10,
        }
    }
}

impl SceneSelectionRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.light_thresh > 0.0 && self.heavy_thresh > 0.0) {
            return Err(Error::invalid("selection rule", "thresholds must be > 0"));
        }
        if self.light_count == 0 || self.heavy_count == 0 {
            return Err(Error::invalid("selection rule", "counts must be >= 1"));
        }
        Ok(())
    }
}

/// Keep the scene if it has enough light rain or enough heavy rain.
/// NaN pixels count as dry.
pub fn select_scene(rain: &RainField, rule: &SceneSelectionRule) -> bool {
    let (mut light, mut heavy) = (0usize, 0usize);
    for &v in rain.values() {
        let v = v as f64;
        light += (v > rule.light_thresh) as usize;
        heavy += (v > rule.heavy_thresh) as usize;
    }
    light >= rule.light_count || heavy >= rule.heavy_count
}

/// Index sets of a three-way split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle `0..n` under `seed` and cut it into (train, val, test) by
/// `fractions`; sizes are rounded, the test split takes the remainder.
pub fn split_dataset(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    if n == 0 {
        return Err(Error::Empty("scene list"));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions", format!("{fractions:?} must be in [0, 1] and sum to 1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(SplitIndices { train: idx, val, test })
}

/// Per-channel standardization fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: [f64; N_TB_CHANNELS],
    pub std: [f64; N_TB_CHANNELS],
}

impl Normalizer {
    /// Population mean and standard deviation over every finite pixel.
    pub fn fit(scenes: &[&TbScene]) -> Result<Self> {
        if scenes.len() < 2 {
            return Err(Error::invalid("normalizer", "need at least 2 training scenes"));
        }
        let mut mean = [0.0; N_TB_CHANNELS];
        let mut std = [0.0; N_TB_CHANNELS];
        for c in 0..N_TB_CHANNELS {
            let (mut n, mut sum) = (0usize, 0.0f64);
            for s in scenes {
                for &v in s.plane(c) {
                    if !v.is_nan() {
                        n += 1;
                        sum += v as f64;
                    }
                }
            }
            if n == 0 {
                return Err(Error::Empty("finite brightness temperatures"));
            }
            let m = sum / n as f64;
            let mut ss = 0.0;
            for s in scenes {
                for &v in s.plane(c) {
                    if !v.is_nan() {
                        ss += (v as f64 - m).powi(2);
                    }
                }
            }
            let sd = (ss / n as f64).sqrt();
            if !(sd > 0.0) {
                return Err(Error::invalid("normalizer", format!("channel {c} has zero variance")));
            }
            mean[c] = m;
            std[c] = sd;
        }
        Ok(Normalizer { mean, std })
    }

    /// Standardized planes in channel-major order. Missing TB becomes 0
    /// (the training mean) so the network never sees NaN.
    pub fn apply(&self, scene: &TbScene) -> Vec<f32> {
        let n = scene.geo().len();
        let mut out = Vec::with_capacity(N_TB_CHANNELS * n);
        for c in 0..N_TB_CHANNELS {
            out.extend(scene.plane(c).iter().map(|&v| {
                if v.is_nan() {
                    0.0
                } else {
                    ((v as f64 - self.mean[c]) / self.std[c]) as f32
                }
            }));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swath::test_support::grid_geo;
    use crate::swath::Provenance;
    use proptest::prelude::*;
    use rand::Rng;

    fn field(values: Vec<f32>) -> RainField {
        let n = values.len();
        RainField::new(grid_geo(1, n, 0.0, 0.0, 0.01), values, Provenance::Reference).unwrap()
    }

    #[test]
    fn selection_examples() {
        let rule = SceneSelectionRule::default();
        let mut v = vec![0f32; 400];
        v[..100].fill(0.2);
        assert!(select_scene(&field(v.clone()), &rule));
        let mut v = vec![0f32; 400];
        v[..99].fill(0.2);
        v[99..108].fill(150.0);
        // heavy pixels also exceed the light threshold: 108 light pixels
        assert!(select_scene(&field(v.clone()), &rule));
        let mut v = vec![0f32; 400];
        v[..90].fill(0.2);
        v[90..99].fill(150.0);
        assert!(!select_scene(&field(v), &rule));
        assert!(!select_scene(&field(vec![0.0; 400]), &rule));
        let mut v = vec![f32::NAN; 400];
        v[..10].fill(150.0);
        assert!(select_scene(&field(v), &rule));
    }

    #[test]
    fn heavy_clause_alone() {
        let rule = SceneSelectionRule { light_count: 1000, ..Default::default() };
        let mut v = vec![0f32; 400];
        v[..10].fill(101.0);
        assert!(select_scene(&field(v.clone()), &rule));
        v[9] = 100.0;
        assert!(!select_scene(&field(v), &rule));
    }

    proptest! {
        #[test]
        fn selection_is_monotone(
            base in prop::collection::vec(prop_oneof![Just(0.0f32), 0.0f32..0.3, 50.0f32..200.0], 150),
            bumps in prop::collection::vec((0usize..150, 0.0f32..200.0), 1..40),
        ) {
            let rule = SceneSelectionRule { light_count: 60, heavy_count: 5, ..Default::default() };
            let before = select_scene(&field(base.clone()), &rule);
            let mut more = base;
            for (i, add) in bumps {
                more[i] += add;
            }
            prop_assert!(!before || select_scene(&field(more), &rule));
        }
    }

    #[test]
    fn split_examples() {
        let a = split_dataset(10, [0.7, 0.3, 0.0], 5).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (7, 3, 0));
        assert_eq!(a, split_dataset(10, [0.7, 0.3, 0.0], 5).unwrap());
        let all = split_dataset(10, [1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(all.train.len(), 10);
        assert!(split_dataset(0, [1.0, 0.0, 0.0], 5).is_err());
        assert!(split_dataset(10, [0.5, 0.4, 0.0], 5).is_err());
    }

    #[test]
    fn split_is_partition_and_seed_dependent() {
        let a = split_dataset(50, [0.6, 0.2, 0.2], 1).unwrap();
        let b = split_dataset(50, [0.6, 0.2, 0.2], 2).unwrap();
        for s in [&a, &b] {
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..50).collect::<Vec<_>>());
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), (30, 10, 10));
        }
        assert_ne!(a.train, b.train);
    }

    fn random_scene(rng: &mut ChaCha8Rng, id: usize) -> TbScene {
        let geo = grid_geo(8, 8, 0.0, 0.0, 0.05);
        let tb = (0..4 * 64).map(|k| 200.0 + (k / 64) as f32 * 10.0 + rng.random_range(-30.0..30.0)).collect();
        TbScene::new(format!("s{id}"), geo, tb).unwrap()
    }

    #[test]
    fn normalizer_standardizes_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scenes: Vec<TbScene> = (0..5).map(|i| random_scene(&mut rng, i)).collect();
        let refs: Vec<&TbScene> = scenes.iter().collect();
        let norm = Normalizer::fit(&refs).unwrap();
        let planes: Vec<Vec<f32>> = scenes.iter().map(|s| norm.apply(s)).collect();
        for c in 0..4 {
            let vals: Vec<f64> = planes.iter().flat_map(|p| p[c * 64..(c + 1) * 64].iter().map(|v| *v as f64)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((sd - 1.0).abs() < 1e-6, "std {sd}");
        }

        // refitting on standardized data is the identity transform
        let geo = scenes[0].geo().clone();
        let restd: Vec<TbScene> = planes
            .iter()
            .map(|p| TbScene::new("z", geo.clone(), p.iter().map(|v| v * 10.0 + 200.0).collect()).unwrap())
            .collect();
        let again = Normalizer::fit(&restd.iter().collect::<Vec<_>>()).unwrap();
        for c in 0..4 {
            assert!((again.mean[c] - 200.0).abs() < 1e-4);
            assert!((again.std[c] - 10.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_channel_is_rejected() {
        let geo = grid_geo(4, 4, 0.0, 0.0, 0.05);
        let mut tb = vec![250f32; 64];
        for (k, v) in tb.iter_mut().enumerate().skip(16) {
            *v += k as f32;
        }
        let s = TbScene::new("c", geo, tb).unwrap();
        assert!(Normalizer::fit(&[&s, &s]).is_err());
        assert!(Normalizer::fit(&[&s]).is_err());
    }
}
