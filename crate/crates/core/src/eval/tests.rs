use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Metrics straight from the definitions, walking the expanded list of
/// (truth, prediction) pairs instead of row and column sums.
fn brute_force(pairs: &[(usize, usize)], n: usize) -> (f64, f64, f64, f64) {
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    for c in 0..n {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fneg = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f1 = if 2.0 * tp + fp + fneg > 0.0 { 2.0 * tp / (2.0 * tp + fp + fneg) } else { 0.0 };
        p_sum += prec;
        r_sum += rec;
        f_sum += f1;
    }
    let acc = pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64;
    (p_sum / n as f64, r_sum / n as f64, f_sum / n as f64, acc)
}

fn expand(cm: &ConfusionMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (t, row) in cm.rows().iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            out.extend(std::iter::repeat_n((t, p), c as usize));
        }
    }
    out
}

#[test]
fn identity_matrix_scores_100() {
    let cm = ConfusionMatrix::from_rows((0..4).map(|i| (0..4).map(|j| if i == j { 5 } else { 0 }).collect()).collect());
    let r = EvalReport::from_confusion(cm);
    for v in [r.precision, r.recall, r.f1_macro, r.accuracy] {
        assert_eq!(v, 100.0);
    }
    assert!(r.warnings.is_empty());
}

#[test]
fn absent_class_counts_as_zero() {
    let cm = ConfusionMatrix::from_rows(vec![vec![4, 0, 0, 0], vec![0, 3, 0, 0], vec![0, 0, 2, 0], vec![0, 0, 0, 0]]);
    assert!((macro_f1(&cm) - 0.75).abs() < 1e-12);
    let r = EvalReport::from_confusion(cm);
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("machine_polished"));
}

#[test]
fn embedded_two_by_two_by_hand() {
    let cm = ConfusionMatrix::from_rows(vec![vec![3, 1, 0, 0], vec![2, 4, 0, 0], vec![0; 4], vec![0; 4]]);
    // F1 = 2TP / (2TP + FP + FN): 6/9 and 8/11, the two empty classes give 0.
    let expected = (6.0 / 9.0 + 8.0 / 11.0) / 4.0;
    assert!((macro_f1(&cm) - expected).abs() < 1e-12);
    assert!((cm.accuracy() - 0.7).abs() < 1e-12);
}

#[test]
fn random_matrices_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let rows: Vec<Vec<u64>> = (0..4).map(|_| (0..4).map(|_| rng.random_range(0..20)).collect()).collect();
        let cm = ConfusionMatrix::from_rows(rows);
        if cm.total() == 0 {
            continue;
        }
        let (p, r, f, a) = brute_force(&expand(&cm), 4);
        assert!((cm.macro_precision() - p).abs() < 1e-9);
        assert!((cm.macro_recall() - r).abs() < 1e-9);
        assert!((cm.macro_f1() - f).abs() < 1e-9);
        assert!((cm.accuracy() - a).abs() < 1e-9);
    }
}

#[test]
fn collapse_mapping() {
    let cm = ConfusionMatrix::from_pairs(4, [(0, 3)]);
    let b = cm.binary_collapse();
    // human predicted as machine: a false positive for the machine class
    assert_eq!(b.rows(), &[vec![0, 1], vec![0, 0]]);
    let perfect = ConfusionMatrix::from_pairs(4, (0..4).map(|c| (c, c)));
    assert_eq!(binary_collapse(&perfect).accuracy, 100.0);
}

#[test]
fn renderers_mention_every_class() {
    let cm = ConfusionMatrix::from_pairs(4, [(0, 0), (1, 2), (3, 3)]);
    let names = ["I", "II", "III", "IV"];
    let grid = render_grid(&cm, &names);
    assert_eq!(grid.lines().count(), 5);
    let svg = render_svg(&cm, &names, "a <b> & c");
    assert!(svg.starts_with("<svg") && svg.contains("a &lt;b&gt; &amp; c"));
    let r = EvalReport::from_confusion(cm);
    let table = render_table(&[("detector", &r)]);
    assert!(table.contains("F1-Macro") && table.contains("detector"));
}

#[test]
fn probe_learns_a_separable_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200;
    let mut x = ndarray::Array2::zeros((n, 3));
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 2;
        x[[i, 0]] = if c == 0 { -1.0 } else { 1.0 } + rng.random_range(-0.5..0.5);
        x[[i, 1]] = rng.random_range(-1.0..1.0);
        y.push(c);
    }
    let probe = LinearProbe::fit(&x, &y, 2, &ProbeConfig::default());
    assert!(probe.accuracy(&x, &y) > 0.99);
    let noise = x.mapv(|_| rng.random_range(-1.0..1.0));
    let blind = LinearProbe::fit(&noise, &y, 2, &ProbeConfig::default());
    assert!(blind.accuracy(&noise, &y) < 0.7);
}

fn pairs_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..4, 0usize..4), 1..200)
}

proptest! {
    #[test]
    fn order_does_not_matter(pairs in pairs_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = EvalReport::from_confusion(ConfusionMatrix::from_pairs(4, pairs));
        let b = EvalReport::from_confusion(ConfusionMatrix::from_pairs(4, shuffled));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn duplicating_the_split_keeps_metrics(pairs in pairs_strategy()) {
        let once = ConfusionMatrix::from_pairs(4, pairs.clone());
        let twice = ConfusionMatrix::from_pairs(4, pairs.iter().chain(&pairs).copied());
        prop_assert_eq!(twice.total(), 2 * once.total());
        prop_assert!((once.macro_f1() - twice.macro_f1()).abs() < 1e-12);
        prop_assert!((once.macro_precision() - twice.macro_precision()).abs() < 1e-12);
        prop_assert!((once.accuracy() - twice.accuracy()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_trace_over_total(pairs in pairs_strategy()) {
        let cm = ConfusionMatrix::from_pairs(4, pairs.clone());
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        prop_assert_eq!(cm.accuracy(), cm.trace() as f64 / cm.total() as f64);
        let r = EvalReport::from_confusion(cm);
        for v in [r.precision, r.recall, r.f1_macro, r.accuracy] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn collapse_never_lowers_accuracy(pairs in pairs_strategy()) {
        let cm = ConfusionMatrix::from_pairs(4, pairs);
        prop_assert!(cm.binary_collapse().accuracy() >= cm.accuracy());
        prop_assert_eq!(cm.binary_collapse().total(), cm.total());
    }
}
