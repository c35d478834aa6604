use ldfa_core::archive;
use ldfa_core::config::{Mode, PipelineConfig};
use ldfa_core::data::{Dataset, InputFormat, RawData};
use ldfa_core::datasets::{axis_centers, gaussian_blobs};
use ldfa_core::numerics::Matrix;
use ldfa_core::pipeline::{fit, stratified_split, transform, ModelArchive};
use proptest::prelude::*;

fn small_blobs(seed: u64) -> Dataset {
    let centers = axis_centers(3, 6, 4.0).unwrap();
    let (x, labels) = gaussian_blobs(&centers, 15, 0.4, seed).unwrap();
    Dataset::from_raw(RawData::new(x, InputFormat::Csv), Some(labels)).unwrap()
}

fn quick_ldfa(seed: u64, oos: bool) -> PipelineConfig {
    PipelineConfig {
        mode: Mode::Ldfa,
        k: 6,
        d: 2,
        widths: vec![6, 4, 2],
        pretrain_epochs: 20,
        finetune_epochs: 10,
        align_epochs: 20,
        seed,
        oos,
        ..Default::default()
    }
}

fn fitted() -> (Dataset, ModelArchive) {
    let ds = small_blobs(0);
    let m = fit(&quick_ldfa(3, true), &ds).unwrap();
    (ds, m)
}

#[test]
fn archive_round_trip_is_bit_exact() {
    let (_, m) = fitted();
    let bytes = archive::to_bytes(&m).unwrap();
    let back = archive::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(archive::to_bytes(&back).unwrap(), bytes);
}

#[test]
fn transform_is_unchanged_by_save_and_load() {
    let (ds, m) = fitted();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ldfa");
    archive::save(&m, &path).unwrap();
    let loaded = archive::load(&path).unwrap();
    let probe = small_blobs(7).raw.values;
    assert_eq!(transform(&m, &probe).unwrap(), transform(&loaded, &probe).unwrap());
    assert_eq!(transform(&loaded, &ds.raw.values).unwrap().dim(), m.embedding.h.dim());
}

#[test]
fn damaged_archives_are_rejected() {
    let (_, m) = fitted();
    let bytes = archive::to_bytes(&m).unwrap();
    assert!(archive::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    assert!(archive::from_bytes(&bytes[..40]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(archive::from_bytes(&bad).is_err());
    let mut extra = bytes;
    extra.extend_from_slice(&[0; 8]);
    assert!(archive::from_bytes(&extra).is_err());
}

#[test]
fn fit_is_reproducible_and_seed_sensitive() {
    let ds = small_blobs(0);
    let a = fit(&quick_ldfa(11, false), &ds).unwrap();
    let b = fit(&quick_ldfa(11, false), &ds).unwrap();
    let c = fit(&quick_ldfa(12, false), &ds).unwrap();
    assert_eq!(archive::to_bytes(&a).unwrap(), archive::to_bytes(&b).unwrap());
    assert_ne!(a.embedding.h, c.embedding.h);
}

#[test]
fn out_of_sample_reproduces_training_embedding() {
    let (ds, m) = fitted();
    let again = transform(&m, &ds.raw.values).unwrap();
    let scale = &m.oos.as_ref().unwrap().scale;
    let diff = scale.apply(&again) - scale.apply(&m.embedding.h);
    let worst = diff.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 0.05, "max scaled deviation {worst}");
}

#[test]
fn pca_transform_of_training_matches_fit() {
    let ds = small_blobs(0);
    let m = fit(&PipelineConfig { mode: Mode::Pca, d: 3, ..Default::default() }, &ds).unwrap();
    let again = transform(&m, &ds.raw.values).unwrap();
    let worst = (&again - &m.embedding.h).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-12, "{worst}");
    let roundtrip = archive::from_bytes(&archive::to_bytes(&m).unwrap()).unwrap();
    assert_eq!(roundtrip, m);
}

#[test]
fn model_without_oos_refuses_new_samples() {
    let ds = small_blobs(0);
    let m = fit(&quick_ldfa(1, false), &ds).unwrap();
    assert!(transform(&m, &ds.raw.values).is_err());
    assert_eq!(transform(&m, &Matrix::zeros((6, 0))).unwrap().dim(), (2, 0));
}

proptest! {
    #[test]
    fn stratified_split_partitions_each_class(
        counts in prop::collection::vec(1usize..20, 1..5),
        seed in any::<u64>(),
    ) {
        let labels: Vec<String> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c.to_string(), n))
            .collect();
        let (train, test) = stratified_split(&labels, 0.7, seed);
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let tag = c.to_string();
            let in_train = train.iter().filter(|&&i| labels[i] == tag).count();
            prop_assert_eq!(in_train, ((0.7 * n as f64).round() as usize).clamp(1, n));
        }
        prop_assert_eq!(stratified_split(&labels, 0.7, seed), (train, test));
    }
}
