//! Library-level pipeline on the synthetic fixtures.

use std::collections::BTreeMap;
use std::fs;

use coastseg_core::catalog::{annotate_altitude, filter_catalog, select_scenes, SceneRecord};
use coastseg_core::dataset::{build_dataset, load_crop, BuildOptions, CropParams, DatasetManifest, SceneSource};
use coastseg_core::exec::Exec;
use coastseg_core::fixtures::{fixture_catalog, fixture_coastal_types, fixture_policy, separable_scene};
use coastseg_core::gbdt::{predict_gbdt, sample_training_pixels, train_gbdt_with, GbdtModel, TrainParams};
use coastseg_core::importance::{
    band_importance_with, export_permuted_suite, prediction_name, read_suite_input, read_suite_manifest,
    score_external_predictions, Predictor, TestImage,
};
use coastseg_core::index::NdwiSegmenter;
use coastseg_core::metrics::{aggregate_report, evaluate_batch, EvalItem, EvalParams, Strata};
use coastseg_core::raster::{write_mask, BandRole, RasterScene, SegMask};
use coastseg_core::Result;

struct Memory {
    scenes: BTreeMap<String, (RasterScene, SegMask)>,
}

impl SceneSource for Memory {
    fn load(&self, r: &SceneRecord) -> Result<(RasterScene, SegMask)> {
        Ok(self.scenes[&r.scene_id].clone())
    }
}

fn selected() -> Vec<SceneRecord> {
    let policy = fixture_policy();
    let mut pool = filter_catalog(&fixture_catalog(), &policy);
    annotate_altitude(&mut pool, &policy, Exec::Sequential).unwrap();
    select_scenes(&pool, &policy).unwrap()
}

fn source(records: &[SceneRecord]) -> Memory {
    Memory {
        scenes: records
            .iter()
            .map(|r| (r.scene_id.clone(), separable_scene(&r.scene_id, 288, 768, 11)))
            .collect(),
    }
}

fn options(exec: Exec, out: Option<&std::path::Path>) -> BuildOptions<'_> {
    BuildOptions {
        params: CropParams {
            train_per_scene: 3,
            ..CropParams::default()
        },
        coastal_types: fixture_coastal_types(),
        rng_seed: 99,
        out_dir: out,
        exec,
    }
}

#[test]
fn manifest_is_schedule_independent_and_replays() {
    let recs = selected();
    let src = source(&recs);
    let a = build_dataset(&recs, &src, &options(Exec::Sequential, None)).unwrap();
    let b = build_dataset(&recs, &src, &options(Exec::Parallel, None)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.tests().count(), recs.len());
    for (scene, rough) in src.scenes.values() {
        a.validate_scene(scene, rough, &CropParams::default()).unwrap();
    }

    let mut buf = Vec::new();
    a.write_jsonl(&mut buf).unwrap();
    assert_eq!(DatasetManifest::read_jsonl(buf.as_slice()).unwrap(), a);
}

#[test]
fn materialized_crops_match_in_memory_extraction() {
    let recs = selected();
    let src = source(&recs);
    let dir = tempfile::tempdir().unwrap();
    let m = build_dataset(&recs, &src, &options(Exec::Parallel, Some(dir.path()))).unwrap();
    let again = tempfile::tempdir().unwrap();
    build_dataset(&recs, &src, &options(Exec::Sequential, Some(again.path()))).unwrap();
    for e in &m.entries {
        let (scene, mask) = load_crop(dir.path(), e).unwrap();
        let (full, rough) = &src.scenes[&e.crop.scene_id];
        let (want_scene, want_mask) = coastseg_core::dataset::extract_crop(full, rough, &e.crop).unwrap();
        assert_eq!(scene.bands(), want_scene.bands());
        assert_eq!(mask, want_mask);
        let name = e.name();
        for f in [format!("{name}.bin"), format!("{name}_mask.bin")] {
            assert_eq!(fs::read(dir.path().join(&f)).unwrap(), fs::read(again.path().join(&f)).unwrap());
        }
    }
}

fn test_images(recs: &[SceneRecord]) -> (Vec<TestImage>, Vec<Strata>, Vec<(RasterScene, SegMask)>) {
    let src = source(recs);
    let m = build_dataset(recs, &src, &options(Exec::Parallel, None)).unwrap();
    let mut tests = Vec::new();
    let mut strata = Vec::new();
    let mut trains = Vec::new();
    for e in &m.entries {
        let (full, rough) = &src.scenes[&e.crop.scene_id];
        let (scene, truth) = coastseg_core::dataset::extract_crop(full, rough, &e.crop).unwrap();
        match e.crop.split {
            coastseg_core::dataset::Split::Test => {
                tests.push(TestImage { id: e.name(), scene, truth });
                strata.push(Strata::from_entry(e));
            }
            coastseg_core::dataset::Split::Train => trains.push((scene, truth)),
        }
    }
    (tests, strata, trains)
}

#[test]
fn ndwi_and_gbdt_are_exact_on_separable_fixtures() {
    let recs = selected();
    let (tests, strata, trains) = test_images(&recs);
    let ndwi = NdwiSegmenter::default();
    let samples = sample_training_pixels(&trains, 100, 5).unwrap();
    let model = train_gbdt_with(
        &samples,
        &TrainParams {
            n_trees: 50,
            ..TrainParams::default()
        },
        Exec::Parallel,
    )
    .unwrap();

    for predictor in [&ndwi as &dyn Predictor, &model] {
        let items: Vec<EvalItem> = tests
            .iter()
            .zip(&strata)
            .map(|(t, s)| EvalItem {
                image_id: t.id.clone(),
                pred: predictor.predict(&t.scene).unwrap(),
                truth: t.truth.clone(),
                strata: s.clone(),
            })
            .collect();
        let rows = evaluate_batch(&items, &EvalParams::default(), Exec::Parallel).unwrap();
        assert_eq!(rows, evaluate_batch(&items, &EvalParams::default(), Exec::Sequential).unwrap());
        let rep = aggregate_report(&rows).unwrap();
        assert_eq!(rep.overall.accuracy, 1.0);
        assert_eq!(rep.overall.fom, 1.0);
        assert_eq!(rep.by_tile.len(), 2);
        assert_eq!(rep.by_coastal_type.len(), 2);
    }
}

#[test]
fn model_file_round_trip_is_bit_identical() {
    let (tests, _, trains) = test_images(&selected());
    let samples = sample_training_pixels(&trains, 50, 1).unwrap();
    let model = train_gbdt_with(&samples, &TrainParams { n_trees: 30, ..TrainParams::default() }, Exec::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = GbdtModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for t in &tests {
        assert_eq!(predict_gbdt(&loaded, &t.scene).unwrap(), predict_gbdt(&model, &t.scene).unwrap());
        for i in (0..t.scene.pixel_count()).step_by(997) {
            let x = std::array::from_fn(|k| t.scene.band(BandRole::ALL[k]).unwrap()[i]);
            assert_eq!(loaded.margin(&x).to_bits(), model.margin(&x).to_bits());
        }
    }
}

#[test]
fn file_protocol_matches_in_process_scores() {
    let (tests, _, _) = test_images(&selected());
    let tests = &tests[..3];
    let seed = 2024;
    let ndwi = NdwiSegmenter::default();
    let in_process = band_importance_with(&ndwi, tests, seed, 1, Exec::Parallel).unwrap();

    let suite = tempfile::tempdir().unwrap();
    let manifest = export_permuted_suite(tests, suite.path(), seed).unwrap();
    let bundles = fs::read_dir(suite.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "bin"))
        .count();
    assert_eq!(bundles, 24);
    assert_eq!(read_suite_manifest(suite.path()).unwrap(), manifest);

    let preds = tempfile::tempdir().unwrap();
    for img in &manifest.images {
        for (variant, stem) in &img.inputs {
            let scene = read_suite_input(suite.path(), stem).unwrap();
            write_mask(&ndwi.predict(&scene).unwrap(), &preds.path().join(&img.expected_predictions[variant])).unwrap();
        }
    }
    let external = score_external_predictions(preds.path(), tests, seed).unwrap();
    assert_eq!(external, in_process);

    // Ground truth as every prediction: nothing to lose.
    let truth_dir = tempfile::tempdir().unwrap();
    for t in tests {
        for variant in img_variants() {
            write_mask(&t.truth, &truth_dir.path().join(prediction_name(&t.id, &variant))).unwrap();
        }
    }
    let perfect = score_external_predictions(truth_dir.path(), tests, seed).unwrap();
    assert!(perfect.iter().all(|s| s.score == 0.0 && s.baseline_accuracy == 1.0));

    fs::remove_file(preds.path().join(format!("{}.bin", prediction_name(&tests[0].id, "perm_NIR")))).unwrap();
    assert!(score_external_predictions(preds.path(), tests, seed).is_err());
}

fn img_variants() -> Vec<String> {
    std::iter::once("baseline".to_string())
        .chain(BandRole::ALL.iter().map(|b| format!("perm_{b}")))
        .collect()
}
