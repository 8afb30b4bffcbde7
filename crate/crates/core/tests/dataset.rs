use fedcode::dataset::{stratified_split, DEFAULT_RATIOS};
use fedcode::synthgen::{generate, SynthConfig};

#[test]
fn split_keeps_every_label_near_its_share() {
    for seed in 0..5 {
        let ds = generate(&SynthConfig {
            seed,
            mean_cardinality: 2.0,
            ..SynthConfig::new(500, 8, 10)
        })
        .unwrap();
        let split = stratified_split(&ds, DEFAULT_RATIOS, seed + 100).unwrap();
        let total = ds.label_support();
        let parts = [&split.train, &split.val, &split.test];
        assert_eq!(parts.map(|p| p.len()), [350, 75, 75]);
        for (part, ratio) in parts.iter().zip(DEFAULT_RATIOS) {
            // Brute-force recount straight from the label sets.
            let mut counts = vec![0usize; ds.n_labels()];
            for &i in part.iter() {
                for &l in &ds.labels()[i] {
                    counts[l as usize] += 1;
                }
            }
            for (c, t) in counts.iter().zip(&total) {
                assert!((*c as f64 - ratio * *t as f64).abs() <= 2.0, "seed {seed}: {c} of {t}");
            }
        }
    }
}
