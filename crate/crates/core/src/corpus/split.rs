use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, DatasetManifest, Label, Split};

const RATIO_TOLERANCE: f64 = 1e-9;

/// Splits `n` items into three parts proportional to `ratios` using
/// largest-remainder rounding. Remainder ties go to the earlier part.
pub fn largest_remainder_counts(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    // Snap values within rounding noise of an integer, so 0.15 * 100 is 15.
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remaining = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

fn strata(m: &DatasetManifest) -> BTreeMap<(Label, &str), Vec<usize>> {
    let mut out: BTreeMap<(Label, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in m.entries.iter().enumerate() {
        out.entry((e.label, e.domain.as_str())).or_default().push(i);
    }
    out
}

fn stratum_rng(seed: u64, ordinal: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ordinal as u64);
    rng
}

/// Assigns every entry to train/dev/test, stratified by (label, domain).
pub fn stratified_split(m: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > RATIO_TOLERANCE {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut out = m.clone();
    for (ordinal, (_, mut idx)) in strata(m).into_iter().enumerate() {
        let counts = largest_remainder_counts(idx.len(), ratios);
        idx.shuffle(&mut stratum_rng(seed, ordinal));
        let mut it = idx.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                out.entries[i].split = Some(split);
            }
        }
    }
    out.seed = seed;
    Ok(out)
}

/// Downsamples every (domain, label) stratum to at most `per_class_cap`
/// entries without replacement, seeded by the manifest seed. Entry order is
/// preserved; strata are never upsampled.
pub fn balance_classes(m: &DatasetManifest, per_class_cap: usize) -> DatasetManifest {
    let cap = per_class_cap.max(1);
    let mut keep = vec![false; m.entries.len()];
    for (ordinal, (_, mut idx)) in strata(m).into_iter().enumerate() {
        if idx.len() > cap {
            idx.shuffle(&mut stratum_rng(m.seed, ordinal));
            idx.truncate(cap);
        }
        for i in idx {
            keep[i] = true;
        }
    }
    let mut out = m.clone();
    out.entries = m
        .entries
        .iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then(|| e.clone()))
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledText;
    use proptest::prelude::*;

    fn uniform(n: usize, label: Label, domain: &str) -> Vec<LabeledText> {
        (0..n)
            .map(|i| {
                let generator = if label == Label::HumanWritten { "human" } else { "mock" };
                LabeledText::new(format!("{domain}-{}-{i}", label.code()), "body text", label, domain, generator)
            })
            .collect()
    }

    fn count(m: &DatasetManifest, s: Split) -> usize {
        m.entries.iter().filter(|e| e.split == Some(s)).count()
    }

    #[test]
    fn seventy_fifteen_fifteen() {
        let m = DatasetManifest::new(uniform(100, Label::MachineGenerated, "arxiv"));
        let s = stratified_split(&m, [0.70, 0.15, 0.15], 7).unwrap();
        assert_eq!((count(&s, Split::Train), count(&s, Split::Dev), count(&s, Split::Test)), (70, 15, 15));
    }

    #[test]
    fn degenerate_ratio_all_train() {
        let m = DatasetManifest::new(uniform(13, Label::HumanWritten, "wikihow"));
        let s = stratified_split(&m, [1.0, 0.0, 0.0], 1).unwrap();
        assert!(s.entries.iter().all(|e| e.split == Some(Split::Train)));
    }

    #[test]
    fn bad_ratios_rejected() {
        let m = DatasetManifest::new(uniform(3, Label::HumanWritten, "arxiv"));
        assert!(stratified_split(&m, [0.7, 0.2, 0.2], 1).is_err());
        assert!(stratified_split(&m, [1.2, -0.1, -0.1], 1).is_err());
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder_counts(100, [0.7, 0.15, 0.15]), [70, 15, 15]);
        assert_eq!(largest_remainder_counts(10, [0.7, 0.15, 0.15]), [7, 2, 1]);
        assert_eq!(largest_remainder_counts(7, [0.7, 0.15, 0.15]), [5, 1, 1]);
        assert_eq!(largest_remainder_counts(1, [0.7, 0.15, 0.15]), [1, 0, 0]);
        assert_eq!(largest_remainder_counts(0, [0.7, 0.15, 0.15]), [0, 0, 0]);
    }

    #[test]
    fn balance_examples() {
        let mut entries = uniform(5, Label::HumanWritten, "reddit");
        entries.extend(uniform(40, Label::MachinePolished, "reddit"));
        let m = DatasetManifest::new(entries).with_seed(3);
        let b = balance_classes(&m, 100);
        assert_eq!(b.len(), 45);
        let b = balance_classes(&m, 10);
        assert_eq!(b.len(), 15);
        let b = balance_classes(&m, 1);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn balance_cap_equal_to_stratum_keeps_all() {
        let m = DatasetManifest::new(uniform(18_000, Label::MachineGenerated, "arxiv"));
        assert_eq!(balance_classes(&m, 18_000).len(), 18_000);
    }

    proptest! {
        #[test]
        fn split_partitions_and_is_deterministic(sizes in proptest::collection::vec(0usize..40, 1..6), seed in any::<u64>()) {
            let mut entries = Vec::new();
            for (i, n) in sizes.iter().enumerate() {
                let label = Label::ALL[i % 4];
                let domain = ["arxiv", "reddit"][i / 4];
                entries.extend(uniform(*n, label, domain));
            }
            let m = DatasetManifest::new(entries);
            let a = stratified_split(&m, [0.7, 0.15, 0.15], seed).unwrap();
            let b = stratified_split(&m, [0.7, 0.15, 0.15], seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.entries.iter().all(|e| e.split.is_some()));
            for (i, n) in sizes.iter().enumerate() {
                let label = Label::ALL[i % 4];
                let domain = ["arxiv", "reddit"][i / 4];
                let expected = largest_remainder_counts(*n, [0.7, 0.15, 0.15]);
                for (k, s) in Split::ALL.into_iter().enumerate() {
                    let got = a.entries.iter().filter(|e| e.label == label && e.domain == domain && e.split == Some(s)).count();
                    prop_assert_eq!(got, expected[k]);
                }
            }
        }

        #[test]
        fn balance_is_idempotent(n1 in 0usize..60, n2 in 0usize..60, cap in 1usize..50, seed in any::<u64>()) {
            let mut entries = uniform(n1, Label::HumanWritten, "arxiv");
            entries.extend(uniform(n2, Label::MachineHumanized, "arxiv"));
            let m = DatasetManifest::new(entries).with_seed(seed);
            let once = balance_classes(&m, cap);
            let twice = balance_classes(&once, cap);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.len(), n1.min(cap) + n2.min(cap));
        }
    }
}
