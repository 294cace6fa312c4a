//! File-format round trips and the genuine dataset counts.

use std::path::PathBuf;

use proptest::prelude::*;
use uth::cifar::{decode_cifar10, load_cifar10, write_cifar10, RECORD_LEN};
use uth::codes_file::{decode_codes, encode_codes, load_codes, save_codes};
use uth::idx::{decode_mnist, load_mnist_idx, write_idx_images, write_idx_labels};
use uth::params_file::{decode_params, encode_params, load_params, save_params};
use uth::Error;
use uth_core::network::{build_network, default_layers};
use uth_core::retrieval::encode_dataset;
use uth_core::{Dataset, Dims, LayerSpec, DEFAULT_THRESHOLD};

fn byte_dataset(dims: Dims, n: usize, seed: u32) -> Dataset {
    let images = (0..n)
        .map(|i| {
            (0..dims.len())
                .map(|p| f64::from(((p as u32).wrapping_mul(31) ^ (i as u32 * 7 + seed)) % 256) / 255.0)
                .collect()
        })
        .collect();
    Dataset::from_pixels("toy", dims, images, Some((0..n as u32).map(|i| i % 10).collect())).unwrap()
}

#[test]
fn idx_round_trip_is_bitwise() {
    let ds = byte_dataset(Dims::MNIST, 7, 3);
    let (mut img, mut lab) = (Vec::new(), Vec::new());
    write_idx_images(&mut img, &ds).unwrap();
    write_idx_labels(&mut lab, &ds).unwrap();
    assert_eq!(img.len(), 16 + 7 * 784);
    assert_eq!(lab.len(), 8 + 7);
    let back = decode_mnist(&img, &lab).unwrap();
    assert_eq!(back.samples(), ds.samples());
    let (mut img2, mut lab2) = (Vec::new(), Vec::new());
    write_idx_images(&mut img2, &back).unwrap();
    write_idx_labels(&mut lab2, &back).unwrap();
    assert_eq!((img, lab), (img2, lab2));
}

#[test]
fn idx_errors_are_classified() {
    let ds = byte_dataset(Dims::MNIST, 3, 0);
    let (mut img, mut lab) = (Vec::new(), Vec::new());
    write_idx_images(&mut img, &ds).unwrap();
    write_idx_labels(&mut lab, &ds).unwrap();

    let mut bad = img.clone();
    bad[3] = 0x01;
    assert!(matches!(decode_mnist(&bad, &lab), Err(Error::Format(_))));
    assert!(matches!(decode_mnist(&img, &lab[..lab.len() - 1]), Err(Error::Io(_))));
    assert!(matches!(decode_mnist(&img[..img.len() - 10], &lab), Err(Error::Io(_))));

    let two = Dataset::from_pixels("t", Dims::MNIST, vec![vec![0.0; 784]; 2], Some(vec![1, 2])).unwrap();
    let mut lab2 = Vec::new();
    write_idx_labels(&mut lab2, &two).unwrap();
    assert!(matches!(decode_mnist(&img, &lab2), Err(Error::Consistency(_))));
}

#[test]
fn cifar_round_trip_is_bitwise() {
    let ds = byte_dataset(Dims::CIFAR10, 5, 9);
    let mut bytes = Vec::new();
    write_cifar10(&mut bytes, &ds).unwrap();
    assert_eq!(bytes.len(), 5 * RECORD_LEN);
    let back = decode_cifar10(&[bytes[..2 * RECORD_LEN].to_vec(), bytes[2 * RECORD_LEN..].to_vec()]).unwrap();
    assert_eq!(back.samples(), ds.samples());
    let mut again = Vec::new();
    write_cifar10(&mut again, &back).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn cifar_full_size_synthetic_batches() {
    // five 10,000-record training batches and one test batch, like the
    // published archive, loaded from disk one split at a time
    let dir = tempfile::tempdir().unwrap();
    let record = |i: usize| {
        let mut r = vec![0u8; RECORD_LEN];
        r[0] = (i % 10) as u8;
        r[1 + i % 3072] = 255;
        r
    };
    let write_batch = |name: &str, offset: usize| {
        let bytes: Vec<u8> = (0..10_000).flat_map(|i| record(offset + i)).collect();
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    };
    let test = load_cifar10(&[write_batch("test_batch.bin", 0)]).unwrap();
    assert_eq!(test.len(), 10_000);
    assert_eq!(test.samples()[13].label, Some(3));
    drop(test);
    let train_paths: Vec<PathBuf> = (1..=5).map(|b| write_batch(&format!("data_batch_{b}.bin"), b * 10_000)).collect();
    let train = load_cifar10(&train_paths).unwrap();
    assert_eq!(train.len(), 50_000);
    assert_eq!(train.dims(), Dims::CIFAR10);
}

#[test]
fn params_file_round_trip_preserves_forward() {
    let dir = tempfile::tempdir().unwrap();
    let ds = byte_dataset(Dims::MNIST, 4, 1);
    for (bits, seed) in [(16, 0), (64, 5), (256, 9)] {
        let net = build_network(&default_layers(bits), Dims::MNIST, seed).unwrap();
        let path = dir.path().join(format!("p{bits}.uthp"));
        save_params(&net, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(encode_params(&back), std::fs::read(&path).unwrap());
        let (f0, _) = net.forward(ds.samples()).unwrap();
        let (f1, _) = back.forward(ds.samples()).unwrap();
        assert!(f0.as_slice().iter().zip(f1.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let odd = [
        LayerSpec::Convolution { out_channels: 2, kernel: 3, stride: 2 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { out_dim: 16 },
        LayerSpec::Relu,
    ];
    let net = build_network(&odd, Dims::new(9, 7, 3), 4).unwrap();
    assert_eq!(decode_params(&encode_params(&net)).unwrap(), net);
}

#[test]
fn params_file_rejects_damage_without_partial_results() {
    let net = build_network(&default_layers(16), Dims::MNIST, 0).unwrap();
    let bytes = encode_params(&net);
    for cut in (0..bytes.len()).step_by(bytes.len() / 97) {
        assert!(matches!(decode_params(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
    }
    let mut v2 = bytes.clone();
    v2[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(decode_params(&v2), Err(Error::Format(_))));
}

#[test]
fn codes_file_round_trip_matches_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let ds = byte_dataset(Dims::MNIST, 12, 2);
    let net = build_network(&default_layers(32), Dims::MNIST, 1).unwrap();
    let db = encode_dataset(&net, &ds, DEFAULT_THRESHOLD).unwrap();
    let path = dir.path().join("c.uthc");
    save_codes(&db, &path).unwrap();
    assert_eq!(load_codes(&path).unwrap(), db);
    assert_eq!(encode_codes(&decode_codes(&std::fs::read(&path).unwrap()).unwrap()), std::fs::read(&path).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn idx_bytes_survive_any_content(pixels in proptest::collection::vec(any::<u8>(), 784 * 2), l0 in 0u8..10, l1 in 0u8..10) {
        let images = pixels.chunks(784).map(|c| c.iter().map(|&b| f64::from(b) / 255.0).collect()).collect();
        let ds = Dataset::from_pixels("p", Dims::MNIST, images, Some(vec![l0.into(), l1.into()])).unwrap();
        let (mut img, mut lab) = (Vec::new(), Vec::new());
        write_idx_images(&mut img, &ds).unwrap();
        write_idx_labels(&mut lab, &ds).unwrap();
        prop_assert_eq!(&img[16..], &pixels[..]);
        let back = decode_mnist(&img, &lab).unwrap();
        prop_assert_eq!(back.samples(), ds.samples());
    }
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("UTH_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}

#[test]
fn genuine_mnist_counts() {
    let Some(dir) = mnist_dir() else {
        eprintln!("MNIST files not found; set UTH_MNIST_DIR to run this check");
        return;
    };
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).unwrap();
    assert_eq!((train.len(), train.dims()), (60_000, Dims::MNIST));
    drop(train);
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(test.len(), 10_000);
}

#[test]
fn genuine_cifar10_counts() {
    let Some(dir) = std::env::var_os("UTH_CIFAR10_DIR").map(PathBuf::from) else {
        eprintln!("UTH_CIFAR10_DIR not set; skipping the genuine CIFAR-10 count check");
        return;
    };
    let train: Vec<PathBuf> = (1..=5).map(|b| dir.join(format!("data_batch_{b}.bin"))).collect();
    assert_eq!(load_cifar10(&train).unwrap().len(), 50_000);
    assert_eq!(load_cifar10(&[dir.join("test_batch.bin")]).unwrap().len(), 10_000);
}
