//! IDX parsing against hand-built fixtures; the real MNIST files are only
//! used when `GRAD_ALIGN_MNIST_DIR` points at them.

use std::path::PathBuf;

use gradalign::data::{filter_classes, load_mnist_idx, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use gradalign::Error;

fn images_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

fn labels_file(labels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

#[test]
fn golden_image_header() {
    // Magic 0x00000803, then count 2, rows 2, cols 3, all big-endian.
    let bytes = [
        0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3, //
        0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255,
    ];
    let (count, rows, cols, pixels) = parse_idx_images(&bytes).unwrap();
    assert_eq!((count, rows, cols), (2, 2, 3));
    assert_eq!(pixels, &bytes[16..]);
}

#[test]
fn golden_label_header() {
    let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 7, 3, 5];
    assert_eq!(parse_idx_labels(&bytes).unwrap(), &[7, 3, 5]);
}

#[test]
fn dimensions_are_big_endian() {
    // 0x00000100 = 256 images of 1 x 1.
    let bytes = images_file(256, 1, 1, &[9; 256]);
    assert_eq!(&bytes[4..8], &[0, 0, 1, 0]);
    assert_eq!(parse_idx_images(&bytes).unwrap().0, 256);
}

#[test]
fn wrong_magic_is_rejected() {
    let labels = labels_file(&[1, 2]);
    match parse_idx_images(&labels) {
        Err(Error::BadMagic { expected, found }) => {
            assert_eq!((expected, found), (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC));
        }
        other => panic!("expected BadMagic, got {other:?}"),
    }
    assert!(matches!(parse_idx_labels(&images_file(1, 1, 1, &[0])), Err(Error::BadMagic { .. })));
}

#[test]
fn truncated_files_are_rejected() {
    let full = images_file(2, 2, 2, &[0; 8]);
    assert!(matches!(parse_idx_images(&full[..full.len() - 1]), Err(Error::Truncated { needed: 8, found: 7 })));
    // Cut inside the header.
    assert!(matches!(parse_idx_images(&full[..10]), Err(Error::Truncated { .. })));
    let labels = labels_file(&[1, 2, 3]);
    assert!(matches!(parse_idx_labels(&labels[..labels.len() - 2]), Err(Error::Truncated { needed: 3, found: 1 })));
    assert!(matches!(parse_idx_labels(&[]), Err(Error::Truncated { .. })));
}

#[test]
fn count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("img"), images_file(3, 1, 2, &[0; 6])).unwrap();
    std::fs::write(dir.path().join("lbl"), labels_file(&[1, 2])).unwrap();
    assert!(matches!(
        load_mnist_idx(dir.path().join("img"), dir.path().join("lbl")),
        Err(Error::CountMismatch { images: 3, labels: 2 })
    ));
}

#[test]
fn pixels_map_to_unit_range_and_filter_relabels() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("img"), images_file(4, 1, 2, &[0, 255, 0, 0, 255, 255, 51, 204])).unwrap();
    std::fs::write(dir.path().join("lbl"), labels_file(&[3, 5, 7, 3])).unwrap();
    let ds = load_mnist_idx(dir.path().join("img"), dir.path().join("lbl")).unwrap();
    assert_eq!((ds.len(), ds.n, ds.class_count), (4, 2, 10));
    assert_eq!(ds.samples[0].x, vec![-1.0, 1.0]);
    assert!((ds.samples[3].x[0] - (51.0 / 127.5 - 1.0)).abs() < 1e-15);
    let pair = filter_classes(&ds, &[3, 5]).unwrap();
    assert_eq!(pair.labels(), vec![0, 1, 0]);
    assert_eq!(pair.class_count, 2);
}

#[test]
fn official_mnist_three_five_count() {
    let Some(dir) = std::env::var_os("GRAD_ALIGN_MNIST_DIR").map(PathBuf::from) else {
        eprintln!("GRAD_ALIGN_MNIST_DIR not set; skipping the official-file count");
        return;
    };
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(filter_classes(&train, &[3, 5]).unwrap().len(), 11_552);
}
