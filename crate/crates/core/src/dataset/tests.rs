use super::*;
use crate::error::Error;

fn tiny() -> EmbeddingDataset {
    let x = Matrix::from_rows(&[[0.5, -1.25], [2.0, 0.1], [3.0, 4.0]]);
    let codes = vec![vec!["B", "A"], vec!["B"], vec![]];
    EmbeddingDataset::from_codes(vec!["s1".into(), "s2".into(), "s3".into()], x, &codes).unwrap()
}

#[test]
fn vocabulary_is_sorted_unique() {
    let v = build_vocabulary([["B", "A"].iter(), ["B"].iter()]);
    assert_eq!(v.codes(), &["A".to_string(), "B".to_string()]);
    assert_eq!(v.id("B"), Some(1));
    assert_eq!(v.id("Z"), None);
}

#[test]
fn binarize_drops_unknown_codes() {
    let v = LabelVocabulary::from_codes(["A", "B"]);
    assert_eq!(binarize(&["A"], &v), (vec![1.0, 0.0], 0));
    assert_eq!(binarize(&["A", "Z"], &v), (vec![1.0, 0.0], 1));
}

#[test]
fn remap_counts_unknown_codes() {
    let ds = tiny();
    let (remapped, unknown) = ds.remap_labels(&LabelVocabulary::from_codes(["B", "C"]));
    assert_eq!(unknown, 1);
    assert_eq!(remapped.labels(), &[vec![0], vec![0], vec![]]);
}

#[test]
fn femb_round_trip() {
    let ds = tiny();
    let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
    assert_eq!(back.sample_ids(), ds.sample_ids());
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.vocab(), ds.vocab());
    for (a, b) in back.x().as_slice().iter().zip(ds.x().as_slice()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn femb_corrupt_magic() {
    let mut bytes = encode_dataset(&tiny()).unwrap();
    bytes[1] = b'?';
    assert!(matches!(decode_dataset(&bytes), Err(Error::Format { offset: 0, .. })));
}

#[test]
fn femb_row_count_lie_is_a_length_error() {
    // Five declared samples over four stored rows.
    let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
    let ids = (0..4).map(|i| format!("s{i}")).collect();
    let codes: Vec<Vec<&str>> = vec![vec!["A"]; 4];
    let ds = EmbeddingDataset::from_codes(ids, x, &codes).unwrap();
    let mut bytes = encode_dataset(&ds).unwrap();
    bytes[6..10].copy_from_slice(&5u32.to_le_bytes());
    assert!(matches!(decode_dataset(&bytes), Err(Error::Length { .. })));
}

#[test]
fn text_import() {
    let text = "a\t1,2\tX;Y\n\nb\t3,4\t\nc\t5,6\tY\n";
    let ds = import_text(text).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.dim(), 2);
    assert_eq!(ds.vocab().codes(), &["X".to_string(), "Y".to_string()]);
    assert_eq!(ds.labels(), &[vec![0, 1], vec![], vec![1]]);
    assert!(matches!(import_text("a\t1,2\tX\nb\t1\tX\n"), Err(Error::Format { offset: 8, .. })));
    assert!(import_text("a\t1,x\tX\n").is_err());
}

#[test]
fn standardizer_basics() {
    let p = fit_standardizer(&Matrix::from_rows(&[[0.0], [2.0]])).unwrap();
    assert_eq!((p.mean[0], p.std[0]), (1.0, 1.0));
    assert_eq!(
        apply_standardizer(&Matrix::from_rows(&[[0.0], [2.0]]), &p).unwrap(),
        Matrix::from_rows(&[[-1.0], [1.0]])
    );
    assert_eq!(apply_standardizer(&Matrix::from_rows(&[[3.0]]), &p).unwrap().get(0, 0), 2.0);

    let c = fit_standardizer(&Matrix::from_rows(&[[5.0], [5.0], [5.0]])).unwrap();
    assert_eq!(c.std[0], 1e-8);

    assert!(fit_standardizer(&Matrix::zeros(1, 3)).is_err());
    assert!(apply_standardizer(&Matrix::zeros(2, 3), &p).is_err());
}

#[test]
fn standardizer_inverse_and_moments() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let x = Matrix::from_vec(100, 4, (0..400).map(|_| rng.random_range(-5.0..20.0)).collect()).unwrap();
    let p = fit_standardizer(&x).unwrap();
    let z = apply_standardizer(&x, &p).unwrap();
    for j in 0..4 {
        let col: Vec<f64> = (0..100).map(|r| z.get(r, j)).collect();
        let mean = col.iter().sum::<f64>() / 100.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
        assert!(mean.abs() < 1e-10 && (var.sqrt() - 1.0).abs() < 1e-10);
    }
    assert!(invert_standardizer(&z, &p).unwrap().max_abs_diff(&x) < 1e-12);
}

fn labelled(counts: &[(&str, usize)]) -> EmbeddingDataset {
    let mut codes = Vec::new();
    for (code, n) in counts {
        for _ in 0..*n {
            codes.push(vec![code.to_string()]);
        }
    }
    let n = codes.len();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    EmbeddingDataset::from_codes(ids, Matrix::zeros(n, 1), &codes).unwrap()
}

#[test]
fn rare_labels_are_filtered() {
    let ds = labelled(&[("A", 250), ("B", 150)]);
    let f = filter_rare_labels(&ds, 200).unwrap();
    assert_eq!(f.vocab().codes(), &["A".to_string()]);
    assert_eq!(f.len(), 250);
    assert_eq!(filter_rare_labels(&f, 200).unwrap(), f);
    assert_eq!(filter_rare_labels(&ds, 0).unwrap(), ds);
    assert!(matches!(filter_rare_labels(&ds, 1000), Err(Error::EmptyDataset(_))));
}

#[test]
fn split_sizes_and_determinism() {
    let ds = labelled(&[("A", 40), ("B", 35), ("C", 25)]);
    let s = stratified_split(&ds, DEFAULT_RATIOS, 3).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
    assert_eq!(s, stratified_split(&ds, DEFAULT_RATIOS, 3).unwrap());
    assert_ne!(s, stratified_split(&ds, DEFAULT_RATIOS, 4).unwrap());
    assert!(stratified_split(&ds, [0.5, 0.3, 0.3], 0).is_err());
    assert!(stratified_split(&ds, [1.0, 0.0, 0.0], 0).is_err());
}
