//! End-to-end paths across modules at a small input size.

use flame_core::dataset::{letterbox, Image};
use flame_core::graph::{build_model, init_weights, Model, Variant};
use flame_core::metrics::{evaluate, GroundTruth};
use flame_core::postprocess::{decode, nms, DEFAULT_IOU};
use flame_core::weights::{load_weights, save_weights};
use flame_core::Error;

#[test]
fn weights_survive_disk_and_bind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("light.lyf");
    let graph = build_model(Variant::Light, 2, 64).unwrap();
    let store = init_weights(&graph, 11);
    save_weights(&store, &path).unwrap();
    let loaded = load_weights(&path).unwrap();
    assert_eq!(loaded.len(), store.len());
    for (name, t) in store.iter() {
        assert_eq!(loaded.get(name), Some(t), "{name}");
    }

    let image = Image::from_fn(90, 50, |x, y| [(x * 2) as u8, (y * 4) as u8, 77]);
    let (input, tf) = letterbox(&image, 64);
    let a = Model::new(graph.clone(), &store, true).unwrap().forward(&input).unwrap();
    let b = Model::new(graph, &loaded, true).unwrap().forward(&input).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.maps[0].shape(), [1, 4 * 16 + 2, 8, 8]);

    let dets = nms(&decode(&a, 0.0).unwrap(), DEFAULT_IOU);
    assert!(!dets.is_empty());
    for d in &dets {
        let back = tf.inverse_box(&d.bbox);
        assert!(back.x1 >= 0.0 && back.x2 <= 90.0 && back.y1 >= 0.0 && back.y2 <= 50.0);
        assert!(d.class_id < 2);
    }
}

#[test]
fn variant_mismatch_names_the_tensor() {
    let small = build_model(Variant::V8n, 1, 64).unwrap();
    let store = init_weights(&small, 0);
    let light = build_model(Variant::Light, 1, 64).unwrap();
    match Model::new(light, &store, false) {
        Err(Error::Load(msg)) => assert!(msg.contains("backbone."), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("v8n weights bound to the light graph"),
    }
}

#[test]
fn self_evaluation_is_perfect() {
    // decoded detections scored against themselves as ground truth
    let graph = build_model(Variant::V8n, 1, 64).unwrap();
    let model = Model::new(graph.clone(), &init_weights(&graph, 3), true).unwrap();
    let image = Image::from_fn(64, 64, |x, y| [(x * y) as u8, x as u8, y as u8]);
    let (input, _) = letterbox(&image, 64);
    let dets = nms(&decode(&model.forward(&input).unwrap(), 0.0).unwrap(), 0.3);
    let gts: Vec<GroundTruth> = dets
        .iter()
        .map(|d| GroundTruth {
            bbox: d.bbox,
            class_id: d.class_id,
        })
        .collect();
    let r = evaluate(std::slice::from_ref(&dets), &[gts], 0.5);
    assert_eq!((r.tp, r.fp, r.fn_count), (dets.len(), 0, 0));
    assert_eq!((r.map50, r.map50_95), (1.0, 1.0));
}
