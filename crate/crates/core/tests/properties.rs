use proptest::collection::vec;
use proptest::prelude::*;
use uth_core::eval::mean_ap;
use uth_core::losses::{entropy_loss, quantization_loss, rotation_invariance_loss, triplet_loss};
use uth_core::network::build_network;
use uth_core::retrieval::{hamming_distance, knn_search};
use uth_core::{CodeDatabase, Dims, FeatureMatrix, HashCode, ImageSample, LayerSpec, TripletConfig};

fn bits(m: usize) -> impl Strategy<Value = Vec<bool>> {
    vec(any::<bool>(), m)
}

fn code_triple() -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>)> {
    (1usize..200).prop_flat_map(|m| (bits(m), bits(m), bits(m)))
}

fn triple(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (vec(-2.0..2.0f64, m), vec(-2.0..2.0f64, m), vec(-2.0..2.0f64, m))
}

proptest! {
    #[test]
    fn hamming_is_a_metric((a, b, c) in code_triple()) {
        let (a, b, c) = (HashCode::from_bits(&a), HashCode::from_bits(&b), HashCode::from_bits(&c));
        let d = |x: &HashCode, y: &HashCode| hamming_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) as usize <= a.bit_width());
        prop_assert_eq!(d(&a, &b) == 0, a == b);
    }

    #[test]
    fn pack_unpack_round_trip(b in (1usize..300).prop_flat_map(bits)) {
        let code = HashCode::from_bits(&b);
        prop_assert_eq!(code.to_bits(), b.clone());
        prop_assert_eq!(code.words().len(), b.len().div_ceil(64));
        let again = HashCode::from_words(code.words().to_vec(), b.len()).unwrap();
        prop_assert_eq!(again, code);
    }

    #[test]
    fn padding_bits_are_rejected(m in 1usize..255, extra in 0u32..64) {
        prop_assume!(m % 64 != 0);
        let pos = (m % 64) as u32 + extra % (64 - (m % 64) as u32);
        let mut words = vec![0u64; m.div_ceil(64)];
        *words.last_mut().unwrap() |= 1 << pos;
        prop_assert!(HashCode::from_words(words, m).is_err());
    }

    #[test]
    fn losses_are_non_negative((a, p, n) in triple(12), margin in 0.01..3.0f64) {
        let cfg = TripletConfig::new(margin).unwrap();
        prop_assert!(triplet_loss(&a, &p, &n, &cfg).unwrap().0 >= 0.0);
        prop_assert!(rotation_invariance_loss(&a, &p).unwrap().0 >= 0.0);
        let f = FeatureMatrix::from_rows(&[a.clone(), p.clone(), n.clone()]).unwrap();
        prop_assert!(quantization_loss(&f).unwrap().0 >= 0.0);
        let (le, _, leb) = entropy_loss(&f).unwrap();
        prop_assert!(le >= 0.0 && leb >= 0.0);
    }

    #[test]
    fn triplet_loss_is_translation_invariant((a, p, n) in triple(8), shift in -5.0..5.0f64) {
        let cfg = TripletConfig::default();
        let s = |v: &[f64]| v.iter().map(|x| x + shift).collect::<Vec<_>>();
        let l0 = triplet_loss(&a, &p, &n, &cfg).unwrap().0;
        let l1 = triplet_loss(&s(&a), &s(&p), &s(&n), &cfg).unwrap().0;
        prop_assert!((l0 - l1).abs() <= 1e-9 * (1.0 + l0.abs()));
    }

    #[test]
    fn inactive_hinge_has_zero_loss_and_gradient((a, p, n) in triple(8)) {
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
        let gap = d(&a, &n) - d(&a, &p);
        prop_assume!(gap > 0.2);
        let cfg = TripletConfig::new(gap - 0.1).unwrap();
        let (loss, g) = triplet_loss(&a, &p, &n, &cfg).unwrap();
        prop_assert_eq!(loss, 0.0);
        prop_assert!(g.anchor.iter().chain(&g.positive).chain(&g.negative).all(|v| *v == 0.0));
    }

    #[test]
    fn knn_is_sorted_and_sized(
        codes in vec(bits(24), 1..60),
        q in bits(24),
        k in 1usize..80,
    ) {
        let n = codes.len();
        let db = CodeDatabase::new(
            24,
            codes.iter().map(|c| HashCode::from_bits(c)).collect(),
            (0..n as u64).rev().collect(),
            None,
        ).unwrap();
        let res = knn_search(&db, &HashCode::from_bits(&q), k).unwrap();
        prop_assert_eq!(res.len(), k.min(n));
        prop_assert!(res.windows(2).all(|w| (w[0].distance, w[0].id) < (w[1].distance, w[1].id)));
    }

    #[test]
    fn map_ignores_gallery_storage_order(
        gallery in vec((bits(16), 0u32..3), 2..50),
        queries in vec((bits(16), 0u32..3), 1..10),
        k in 1usize..60,
        rot in 0usize..50,
    ) {
        let build = |rows: &[(Vec<bool>, u32, u64)]| CodeDatabase::new(
            16,
            rows.iter().map(|r| HashCode::from_bits(&r.0)).collect(),
            rows.iter().map(|r| r.2).collect(),
            Some(rows.iter().map(|r| r.1).collect()),
        ).unwrap();
        let g: Vec<(Vec<bool>, u32, u64)> =
            gallery.into_iter().enumerate().map(|(i, (b, l))| (b, l, i as u64)).collect();
        let mut shuffled = g.clone();
        shuffled.rotate_left(rot % g.len());
        shuffled.reverse();
        let q: Vec<(Vec<bool>, u32, u64)> =
            queries.into_iter().enumerate().map(|(i, (b, l))| (b, l, 1000 + i as u64)).collect();
        let (m0, _) = mean_ap(&build(&q), &build(&g), k).unwrap();
        let (m1, _) = mean_ap(&build(&q), &build(&shuffled), k).unwrap();
        prop_assert_eq!(m0, m1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_batch_order_equivariant(
        pixels in vec(vec(0.0..1.0f64, 2 * 8 * 8), 2..6),
        seed in any::<u64>(),
        rot in 1usize..6,
    ) {
        let dims = Dims::new(8, 8, 2);
        let layers = [
            LayerSpec::Convolution { out_channels: 3, kernel: 3, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::FullyConnected { out_dim: 16 },
            LayerSpec::Relu,
        ];
        let net = build_network(&layers, dims, seed).unwrap();
        let batch: Vec<ImageSample> = pixels
            .into_iter()
            .enumerate()
            .map(|(i, p)| ImageSample::new(p, dims, None, i).unwrap())
            .collect();
        let n = batch.len();
        let mut permuted = batch.clone();
        permuted.rotate_left(rot % n);
        let (f, _) = net.forward(&batch).unwrap();
        let (g, _) = net.forward(&permuted).unwrap();
        for i in 0..n {
            prop_assert_eq!(g.row(i), f.row((i + rot) % n));
        }
        prop_assert!(f.as_slice().iter().all(|v| *v >= 0.0));
    }
}
