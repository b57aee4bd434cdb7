use msf_core::data::{
    load_isic_layout, preprocess, synth_sbm_graph, synth_texture_dataset, write_img8, PreprocessConfig, SbmSpec,
};
use msf_core::graph::{features_to_csv, parse_features_csv, read_edge_list, write_edge_list};
use msf_core::model::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MsfCnnConfig, MsfCnnModel};
use msf_core::training::{
    accuracy, cross_validate, evaluate, fit, split, Dataset, SoftmaxRegression, SplitSpec, TrainConfig, Trainable,
};
use msf_core::{Error, FeatureMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model_config() -> MsfCnnConfig {
    MsfCnnConfig {
        image_size: 16,
        conv_channels: vec![4; 4],
        ..MsfCnnConfig::default()
    }
}

fn textures(n_per_class: usize, seed: u64) -> Dataset<FeatureMap> {
    let pre = PreprocessConfig {
        height: 16,
        width: 16,
        ..PreprocessConfig::default()
    };
    let records = synth_texture_dataset(n_per_class, 16, seed).unwrap();
    let samples = records.iter().map(|r| preprocess(r, &pre).unwrap().to_feature_map()).collect();
    Dataset::new(samples, records.iter().map(|r| r.label).collect(), 2).unwrap()
}

fn blobs(n: usize, seed: u64) -> Dataset<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let samples = labels
        .iter()
        .map(|&l| {
            let centre = if l == 0 { -2.0 } else { 2.0 };
            vec![centre + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        })
        .collect();
    Dataset::new(samples, labels, 2).unwrap()
}

#[test]
fn separable_blobs_are_learned_and_cross_validated() {
    let data = blobs(100, 1);
    let parts = split(&data.labels, &SplitSpec::default()).unwrap();
    let cfg = TrainConfig {
        lr_initial: 0.1,
        lr_final: 0.01,
        epochs: 20,
        decay_epoch: 10,
        ..TrainConfig::default()
    };
    let make = || Ok(SoftmaxRegression::new(2, 2, &mut ChaCha8Rng::seed_from_u64(3)));
    let cv = cross_validate(&make, &data, &parts.train, &cfg, 5, 0).unwrap();
    assert_eq!(cv.fold_accuracies.len(), 5);
    assert!(cv.mean >= 0.95, "{cv:?}");

    let mut model = make().unwrap();
    let logs = fit(&mut model, &data, &parts.train, &cfg, &mut |_| Ok(())).unwrap();
    assert_eq!(logs.len(), 20);
    assert!(logs.last().unwrap().mean_loss < logs[0].mean_loss);
    let probs = evaluate(&model, &data, &parts.test, 32).unwrap();
    let labels: Vec<usize> = parts.test.iter().map(|&i| data.labels[i]).collect();
    assert_eq!(accuracy(&probs, &labels), 1.0);
}

#[test]
fn fit_is_reproducible_and_seed_sensitive() {
    let data = textures(8, 2);
    let idx: Vec<usize> = (0..16).collect();
    let cfg = TrainConfig {
        lr_initial: 0.05,
        lr_final: 0.005,
        epochs: 2,
        decay_epoch: 1,
        batch_size: 8,
        seed: 5,
    };
    let run = |seed| {
        let mut m = MsfCnnModel::new(small_model_config(), 9).unwrap();
        let logs = fit(&mut m, &data, &idx, &TrainConfig { seed, ..cfg.clone() }, &mut |_| Ok(())).unwrap();
        (encode_checkpoint(&m.parameters()).unwrap(), logs)
    };
    let (a, la) = run(5);
    let (b, lb) = run(5);
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(run(6).0, a);
}

#[test]
fn evaluate_pads_sets_smaller_than_the_knn_batch() {
    let data = textures(6, 0);
    let model = MsfCnnModel::new(small_model_config(), 1).unwrap();
    assert_eq!(model.min_batch(), 5);
    let probs = evaluate(&model, &data, &[3, 7], 32).unwrap();
    assert_eq!(probs.shape(), (2, 2));
    for r in 0..2 {
        assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(evaluate(&model, &data, &[], 32).unwrap().shape(), (0, 2));

    // a trailing chunk below the minimum is merged, not dropped
    let all: Vec<usize> = (0..12).collect();
    assert_eq!(evaluate(&model, &data, &all, 10).unwrap().rows(), 12);

    let tiny = Dataset::new(data.samples[..3].to_vec(), data.labels[..3].to_vec(), 2).unwrap();
    assert!(matches!(evaluate(&model, &tiny, &[0], 32), Err(Error::Contract(_))));
}

#[test]
fn checkpoint_round_trip_reproduces_predictions() {
    let data = textures(4, 3);
    let model = MsfCnnModel::new(small_model_config(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.msfc");
    save_checkpoint(&path, &model.parameters()).unwrap();
    let params = load_checkpoint(&path).unwrap();
    assert_eq!(params, model.parameters());

    let mut restored = MsfCnnModel::new(small_model_config(), 99).unwrap();
    restored.set_parameters(&params).unwrap();
    let idx: Vec<usize> = (0..8).collect();
    assert_eq!(
        evaluate(&model, &data, &idx, 8).unwrap(),
        evaluate(&restored, &data, &idx, 8).unwrap()
    );

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(decode_checkpoint(&bytes).is_err());
    let no_ppm = MsfCnnConfig {
        ppm_levels: vec![],
        ..small_model_config()
    };
    let mut other = MsfCnnModel::new(no_ppm, 0).unwrap();
    assert!(other.set_parameters(&params).is_err());
}

#[test]
fn image_folder_layout_loads_names_and_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir(root.join("images")).unwrap();
    let records = synth_texture_dataset(2, 16, 0).unwrap();
    let names = ["coarse", "fine"];
    let mut csv = String::from("id,label\n");
    for r in &records {
        std::fs::write(root.join("images").join(format!("{}.img8", r.id)), write_img8(r).unwrap()).unwrap();
        csv.push_str(&format!("{},{}\n", r.id, names[r.label]));
    }
    std::fs::write(root.join("labels.csv"), csv).unwrap();
    std::fs::write(root.join("classes.txt"), "coarse\nfine\n").unwrap();

    let manifest = load_isic_layout(root).unwrap();
    assert_eq!(manifest.class_names, names);
    let loaded = manifest.load_images().unwrap();
    let mut expected = records.clone();
    expected.sort_by(|a, b| a.id.cmp(&b.id));
    assert!(loaded == expected, "records differ after reload");

    // without class names, labels must be integers
    std::fs::remove_file(root.join("classes.txt")).unwrap();
    assert!(load_isic_layout(root).is_err());
}

#[test]
fn sbm_graph_survives_text_round_trip() {
    let sbm = synth_sbm_graph(&SbmSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edges.txt");
    std::fs::write(&path, write_edge_list(&sbm.graph)).unwrap();
    let g = read_edge_list(&path, Some(sbm.graph.node_count())).unwrap();
    assert_eq!(g.edges().collect::<Vec<_>>(), sbm.graph.edges().collect::<Vec<_>>());

    let features = sbm.graph.features().unwrap();
    let back = parse_features_csv(&features_to_csv(features)).unwrap();
    assert_eq!(&back, features);
}
