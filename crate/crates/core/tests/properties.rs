use proptest::prelude::*;

use vsr::data::{preprocess_raw, Frames, Manifest, UtteranceRecord};
use vsr::eval::{EvalReport, RunAggregate};
use vsr::layers::{softmax_xent, DeltaWindow};
use vsr::model::{predict_label, Checkpoint};
use vsr::Tensor;

fn seq(t: usize, d: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-10.0f64..10.0, t * d).prop_map(move |v| Tensor::from_vec(&[t, d], v).unwrap())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn delta_is_linear((x, y) in (1usize..12, 1usize..4).prop_flat_map(|(t, d)| (seq(t, d), seq(t, d))),
                       a in -3.0f64..3.0, b in -3.0f64..3.0, theta in 1usize..4) {
        let w = DeltaWindow::new(theta).unwrap();
        let mix: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + b * q).collect();
        let mixed = w.append_derivatives(&Tensor::from_vec(x.dims(), mix).unwrap()).unwrap();
        let (dx, dy) = (w.append_derivatives(&x).unwrap(), w.append_derivatives(&y).unwrap());
        let expected: Vec<f64> = dx.as_slice().iter().zip(dy.as_slice()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(close(mixed.as_slice(), &expected, 1e-12));
    }

    #[test]
    fn delta_of_constant_is_zero(t in 1usize..15, c in -100.0f64..100.0, theta in 1usize..4) {
        let w = DeltaWindow::new(theta).unwrap();
        let d = w.forward(&Tensor::full(&[t, 2], c)).unwrap();
        prop_assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raw_preprocessing_ignores_affine_intensity(x in (2usize..8, 2usize..10).prop_flat_map(|(t, d)| seq(t, d)),
                                                  gain in 0.1f64..10.0, offset in -50.0f64..50.0) {
        let shifted: Vec<f64> = x.as_slice().iter().map(|v| gain * v + offset).collect();
        let a = preprocess_raw(&x).unwrap();
        let b = preprocess_raw(&Tensor::from_vec(x.dims(), shifted).unwrap()).unwrap();
        // Skip near-degenerate frames, whose output flips between zero and unit scale.
        prop_assume!(a.as_slice().iter().all(|v| v.is_finite()));
        prop_assert!(close(a.as_slice(), b.as_slice(), 1e-6));
    }

    #[test]
    fn utterance_container_round_trips(t in 2usize..6, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..t * h * w).map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 24) as u8).collect();
        let frames = Frames::new(t, h, w, pixels).unwrap();
        let bytes = frames.to_bytes();
        let back = Frames::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &frames);
        prop_assert!(Frames::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn checkpoint_round_trips(meta in prop::collection::vec(("[a-z_]{1,8}", "[ -~]{0,12}"), 0..4),
                              values in prop::collection::vec(-1e6f32..1e6, 1..30)) {
        let n = values.len();
        let ckpt = Checkpoint {
            metadata: meta,
            tensors: vec![("w".into(), Tensor::from_vec(&[n], values).unwrap()), ("m".into(), Tensor::zeros(&[2, 1, 3]))],
        };
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        prop_assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn masked_rows_do_not_matter(logits in seq(6, 3), garbage in seq(6, 3),
                                 mask in prop::collection::vec(any::<bool>(), 6), labels in prop::collection::vec(0usize..3, 6)) {
        prop_assume!(mask.iter().any(|&m| m));
        let mixed: Vec<f64> = (0..6).flat_map(|t| if mask[t] { logits.row(t).to_vec() } else { garbage.row(t).to_vec() }).collect();
        let (l1, g1) = softmax_xent(&logits, &labels, &mask).unwrap();
        let (l2, g2) = softmax_xent(&Tensor::from_vec(&[6, 3], mixed).unwrap(), &labels, &mask).unwrap();
        prop_assert_eq!(l1.to_bits(), l2.to_bits());
        prop_assert_eq!(g1.as_slice(), g2.as_slice());
        for t in (0..6).filter(|&t| !mask[t]) {
            prop_assert!(g1.row(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn majority_vote_ignores_frame_order(logits in (1usize..10).prop_flat_map(|t| seq(t, 4)), rot in 0usize..10) {
        let t = logits.rows();
        let rows: Vec<f64> = (0..t).flat_map(|i| logits.row((i + rot) % t).to_vec()).collect();
        prop_assert_eq!(predict_label(&logits), predict_label(&Tensor::from_vec(&[t, 4], rows).unwrap()));
    }

    #[test]
    fn evaluation_ignores_utterance_order(items in prop::collection::vec((0usize..4, 0usize..4, 0usize..3), 1..40), rot in 0usize..40) {
        let report = |items: &[(usize, usize, usize)]| {
            let labels: Vec<usize> = items.iter().map(|i| i.0).collect();
            let predicted: Vec<usize> = items.iter().map(|i| i.1).collect();
            let subjects: Vec<String> = items.iter().map(|i| format!("s{}", i.2)).collect();
            let refs: Vec<&str> = subjects.iter().map(String::as_str).collect();
            EvalReport::from_predictions(4, &labels, &predicted, &refs, "test", "m").unwrap()
        };
        let a = report(&items);
        let mut rotated = items.clone();
        rotated.rotate_left(rot % items.len());
        prop_assert_eq!(a.to_json(), report(&rotated).to_json());
        prop_assert!((a.accuracy - a.confusion_accuracy()).abs() < 1e-12);
        let correct = items.iter().filter(|i| i.0 == i.1).count();
        prop_assert!((a.accuracy - correct as f64 / items.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn aggregate_matches_streaming_recompute(accs in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let seeds: Vec<u64> = (0..accs.len() as u64).collect();
        let agg = RunAggregate::from_accuracies(&accs, &seeds).unwrap();
        // Welford's online mean and variance.
        let (mut mean, mut m2, mut max) = (0.0, 0.0, f64::MIN);
        for (k, &x) in accs.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (x - mean);
            max = f64::max(max, x);
        }
        let std = if accs.len() > 1 { (m2 / (accs.len() - 1) as f64).sqrt() } else { 0.0 };
        prop_assert!((agg.mean - mean).abs() < 1e-12);
        prop_assert!((agg.std - std).abs() < 1e-12);
        prop_assert_eq!(agg.max, max);
    }

    #[test]
    fn manifest_round_trips(records in prop::collection::vec(("[a-z0-9/]{1,10}\\.vsru", 1u32..30, 0usize..3), 1..10)) {
        let manifest = Manifest {
            classes: vec!["a".into(), "b".into(), "c".into()],
            height: 4,
            width: 5,
            protocol: Some("custom".into()),
            records: records.into_iter().enumerate().map(|(i, (path, s, label))| UtteranceRecord { path: format!("{i}/{path}"), subject: format!("s{s}"), label }).collect(),
        };
        prop_assert_eq!(Manifest::from_jsonl(&manifest.to_jsonl()).unwrap(), manifest);
    }
}
