//! Library-level round trip: synthesize, select, train, retrieve, verify.

use std::sync::Arc;

use proptest::prelude::*;
use rainq::dataset::{build_dataset, load_split, BuildConfig, Split, SynthConfig};
use rainq::eval::{CoverageAccumulator, DEFAULT_COVERAGE_BINS};
use rainq::quantiles::{is_monotone, monotonize, point_estimate, RAIN_THRESHOLD};
use rainq::qunet::{predict_scene, ModelConfig, QuantileUNet, Sample, TrainConfig, Trainer};
use rainq::swath::{read_quantiles, read_rain, write_swath, Geolocation, Provenance, RainField, SwathData};

fn small_build() -> BuildConfig {
    let mut cfg = BuildConfig { n_scenes: 24, fractions: [0.5, 0.25, 0.25], ..Default::default() };
    cfg.synth = SynthConfig { n_scan: 32, n_pix: 32, seed: 7, ..Default::default() };
    cfg.rule.light_count = 20;
    cfg
}

#[test]
fn train_retrieve_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&small_build(), dir.path()).unwrap();
    let samples = |s| -> Vec<Sample> {
        load_split(&m, dir.path(), s)
            .unwrap()
            .iter()
            .map(|(tb, rf)| Sample::from_scene(tb, rf, &m.normalizer).unwrap())
            .collect()
    };
    let (train, val) = (samples(Split::Train), samples(Split::Val));
    assert!(!train.is_empty() && !val.is_empty());

    let model = QuantileUNet::new(ModelConfig { depth: 2, width: 4, seed: 1, ..Default::default() }).unwrap();
    let mut t = Trainer::new(model, TrainConfig { epochs: 4, batch_size: 4, lr: 1e-3, ..Default::default() }).unwrap();
    t.run(&train, &val, |_, _| Ok(())).unwrap();
    let val_loss: Vec<f64> = t.history.iter().map(|r| r.val_loss.unwrap()).collect();
    assert!(val_loss.last() < val_loss.first(), "{val_loss:?}");

    let mut acc = CoverageAccumulator::new(&DEFAULT_COVERAGE_BINS, RAIN_THRESHOLD).unwrap();
    for (tb, rf) in load_split(&m, dir.path(), Split::Test).unwrap() {
        let qf = monotonize(&predict_scene(&t.model, &m.normalizer, &tb).unwrap());
        assert!(is_monotone(&qf));
        let path = dir.path().join("q.swt");
        write_swath(&path, &qf).unwrap();
        assert_eq!(read_quantiles(&path).unwrap(), qf);
        let med = point_estimate(&qf, 0.5).unwrap();
        assert_eq!(med.values(), qf.plane(49));
        acc.add_scene(&qf, &rf).unwrap();
    }
    let table = acc.finish();
    assert!(table.all.n > 0);
    assert!((0.0..=100.0).contains(&table.all.cov50) && table.all.cov50 <= table.all.cov90);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rain_swaths_round_trip_bitwise(
        (ns, np, vals) in (1usize..6, 1usize..6).prop_flat_map(|(ns, np)| {
            (Just(ns), Just(np), prop::collection::vec(prop_oneof![Just(f32::NAN), 0f32..300.0], ns * np))
        })
    ) {
        let n = ns * np;
        let lat = (0..n).map(|i| -60.0 + i as f32 * 0.37).collect();
        let lon = (0..n).map(|i| (170.0 + i as f32 * 0.91 + 180.0).rem_euclid(360.0) - 180.0).collect();
        let geo = Arc::new(Geolocation::new(ns, np, lat, lon, (0..ns).map(|s| s as f64 * 1.9).collect()).unwrap());
        let rf = RainField::new(geo, vals.clone(), Provenance::Reference).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.swt");
        write_swath(&path, &rf).unwrap();
        let back = read_rain(&path, Provenance::Reference).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.values()), bits(&vals));
        prop_assert_eq!(back.shape(), (ns, np));
    }
}
