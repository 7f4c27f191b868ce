//! Seeded synthetic corpora used by tests, the quickstart and the browser
//! demo. Texts are bags of filler words with class-specific marker tokens
//! mixed in, so a linear model over token counts separates the classes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DatasetManifest, Label, LabeledText, Split, HUMAN_GENERATOR};

pub const FILLER: &[&str] = &[
    "the", "a", "of", "to", "and", "in", "is", "it", "that", "for", "on", "with", "as", "was", "this", "by", "from",
    "at", "be", "or", "an", "are", "have", "not", "but", "which", "one", "all", "their", "there", "been", "when",
    "who", "more", "about", "some", "time", "into", "other", "than", "then", "these", "two", "first", "water",
    "people", "way", "day", "part", "place", "city", "river", "house", "paper", "model", "study", "group", "result",
    "method", "system", "data", "value", "number", "work", "school", "market", "light", "energy", "table", "line",
    "road", "garden", "window", "letter", "story", "music", "plant", "animal", "stone", "field", "season", "north",
    "south", "early", "late", "small", "large", "long", "short", "old", "new", "high", "low", "open", "local",
    "public", "common", "simple", "general", "several", "many", "each", "between", "after", "before", "during",
    "under", "over", "through", "around", "across", "found", "made", "used", "called", "known", "given", "shown",
    "began", "became", "left", "took", "came", "went", "built", "held", "moved", "turned", "kept", "seen",
];

/// Marker vocabulary per class, indexed by label code.
pub const CLASS_MARKERS: [&[&str]; 4] = [
    &["honestly", "gonna", "kinda", "yeah", "tbh", "lol"],
    &["furthermore", "crucial", "delve", "comprehensive", "notably", "moreover"],
    &["basically", "pretty", "stuff", "anyway", "actually", "folks"],
    &["refined", "clarity", "concise", "enhanced", "coherent", "polished"],
];

/// Alternative markers used only by the shifted held-out domain.
pub const SHIFTED_MARKERS: [&[&str]; 4] = [
    &["ngl", "wanna", "dunno"],
    &["additionally", "pivotal", "intricate"],
    &["kinda", "yeah", "ok"],
    &["streamlined", "lucid", "articulate"],
];

/// Nuisance tokens that encode the domain in the two-domain corpus.
pub const NUISANCE_MARKERS: [&[&str]; 2] = [&["zephyr", "quartz", "cobalt"], &["nimbus", "garnet", "saffron"]];

pub const NUISANCE_DOMAINS: [&str; 2] = ["wikipedia", "reddit"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextShape {
    pub min_words: usize,
    pub max_words: usize,
    /// Fraction of words drawn from the class markers.
    pub marker_rate: f64,
}

impl Default for TextShape {
    fn default() -> Self {
        TextShape { min_words: 24, max_words: 40, marker_rate: 0.25 }
    }
}

fn synth_text(rng: &mut ChaCha8Rng, shape: &TextShape, markers: &[&str], extra: &[&str], extra_count: usize) -> String {
    let n = rng.random_range(shape.min_words..=shape.max_words);
    let mut words: Vec<&str> = (0..n)
        .map(|_| {
            if rng.random_bool(shape.marker_rate) {
                *markers.choose(rng).expect("non-empty markers")
            } else {
                *FILLER.choose(rng).expect("non-empty filler")
            }
        })
        .collect();
    for _ in 0..extra_count {
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, extra.choose(rng).expect("non-empty extra markers"));
    }
    words.join(" ")
}

fn entry(id: String, text: String, label: Label, domain: &str, split: Split) -> LabeledText {
    let generator = if label == Label::HumanWritten { HUMAN_GENERATOR } else { "synthetic" };
    let mut e = LabeledText::new(id, text, label, domain, generator);
    e.split = Some(split);
    e
}

fn labelled_block(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    per_class: [usize; 3],
    shape: &TextShape,
    domain: &str,
    markers: &[&[&str]; 4],
    out: &mut Vec<LabeledText>,
) {
    for (split, n) in [Split::Train, Split::Dev, Split::Test].into_iter().zip(per_class) {
        for i in 0..n {
            for label in Label::ALL {
                let text = synth_text(rng, shape, markers[label.code()], &[], 0);
                let id = format!("{prefix}-{}-{}-{i}", split.name(), label.roman().to_lowercase());
                out.push(entry(id, text, label, domain, split));
            }
        }
    }
}

/// Separable four-class corpus: 200 train and 50 dev examples per class.
pub fn separable_corpus(seed: u64) -> DatasetManifest {
    separable_corpus_sized(seed, [200, 50, 0])
}

pub fn separable_corpus_sized(seed: u64, per_class: [usize; 3]) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    labelled_block(&mut rng, "sep", per_class, &TextShape::default(), "wikipedia", &CLASS_MARKERS, &mut out);
    let mut m = DatasetManifest::new(out).with_seed(seed);
    m.provenance = "synthetic separable corpus".into();
    m
}

/// Two domains whose only difference is a handful of nuisance tokens per
/// text. Labels are balanced within each domain, so the nuisance tokens
/// carry no label information.
pub fn nuisance_corpus(seed: u64, per_class_per_domain: [usize; 3], nuisance_per_text: usize) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = TextShape::default();
    let mut out = Vec::new();
    for (split, n) in [Split::Train, Split::Dev, Split::Test].into_iter().zip(per_class_per_domain) {
        for i in 0..n {
            for (d, domain) in NUISANCE_DOMAINS.iter().enumerate() {
                for label in Label::ALL {
                    let text = synth_text(&mut rng, &shape, CLASS_MARKERS[label.code()], NUISANCE_MARKERS[d], nuisance_per_text);
                    let id = format!("nz-{domain}-{}-{}-{i}", split.name(), label.roman().to_lowercase());
                    out.push(entry(id, text, label, domain, split));
                }
            }
        }
    }
    let mut m = DatasetManifest::new(out).with_seed(seed);
    m.provenance = "synthetic two-domain nuisance corpus".into();
    m
}

/// In-domain train/dev/test data plus a held-out domain (`outfox`, test
/// split only) whose texts mostly use marker words never seen in training
/// and carry fewer markers overall.
pub fn shifted_domain_corpus(seed: u64, per_class: [usize; 3], held_out_per_class: usize) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    labelled_block(&mut rng, "in", per_class, &TextShape::default(), "wikipedia", &CLASS_MARKERS, &mut out);
    let shifted = TextShape { marker_rate: 0.12, ..TextShape::default() };
    let mixed: [Vec<&str>; 4] = std::array::from_fn(|c| {
        let mut v: Vec<&str> = SHIFTED_MARKERS[c].iter().copied().collect();
        v.extend_from_slice(&CLASS_MARKERS[c][..1]);
        v
    });
    for i in 0..held_out_per_class {
        for label in Label::ALL {
            let text = synth_text(&mut rng, &shifted, &mixed[label.code()], &[], 0);
            let id = format!("out-test-{}-{i}", label.roman().to_lowercase());
            out.push(entry(id, text, label, "outfox", Split::Test));
        }
    }
    let mut m = DatasetManifest::new(out).with_seed(seed);
    m.provenance = "synthetic shifted-domain corpus".into();
    m
}

const TOPICS: &[&str] = &[
    "the old stone bridge over the river", "a small garden behind the school", "the history of the local market",
    "how the city built its first road", "a study of light in early paintings", "the river that changed its course",
    "a letter found in the house", "the music of the northern valleys", "an animal that moved into the city",
    "the season when the field turned gold",
];

/// Human-written seed texts (one domain per bundled source) for the
/// generation pipeline in the quickstart. Each text is a plain first
/// sentence followed by filler prose.
pub fn seed_human_corpus(per_domain: usize, seed: u64) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = TextShape { min_words: 50, max_words: 90, marker_rate: 0.0 };
    let mut out = Vec::new();
    for domain in crate::corpus::BUNDLED_DOMAINS {
        for i in 0..per_domain {
            let topic = TOPICS.choose(&mut rng).expect("topics");
            let body = synth_text(&mut rng, &shape, FILLER, &[], 0);
            let text = format!("This is about {topic}. {body}.");
            out.push(LabeledText::human(format!("{domain}-{i:04}"), text, domain));
        }
    }
    let mut m = DatasetManifest::new(out).with_seed(seed);
    m.provenance = "synthetic human seed corpus".into();
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_corpus_shape() {
        let m = separable_corpus(7);
        assert_eq!(m.split(Split::Train).len(), 800);
        assert_eq!(m.split(Split::Dev).len(), 200);
        m.validate().unwrap();
        for label in Label::ALL {
            assert_eq!(m.split(Split::Train).iter().filter(|e| e.label == label).count(), 200);
        }
        assert_eq!(separable_corpus(7), m);
        assert_ne!(separable_corpus(8), m);
    }

    #[test]
    fn markers_never_leak_across_classes() {
        let m = separable_corpus(1);
        for e in &m.entries {
            for (c, markers) in CLASS_MARKERS.iter().enumerate() {
                if c != e.label.code() {
                    assert!(!e.text.split(' ').any(|w| markers.contains(&w)), "{}", e.id);
                }
            }
        }
    }

    #[test]
    fn nuisance_tokens_follow_domain() {
        let m = nuisance_corpus(3, [10, 5, 0], 4);
        m.validate().unwrap();
        for e in &m.entries {
            let d = NUISANCE_DOMAINS.iter().position(|x| *x == e.domain).unwrap();
            let own = e.text.split(' ').filter(|w| NUISANCE_MARKERS[d].contains(w)).count();
            let other = e.text.split(' ').filter(|w| NUISANCE_MARKERS[1 - d].contains(w)).count();
            assert_eq!((own, other), (4, 0));
        }
    }

    #[test]
    fn seed_corpus_is_human_and_long_enough() {
        let m = seed_human_corpus(3, 0);
        m.validate().unwrap();
        assert_eq!(m.len(), 18);
        assert!(m.entries.iter().all(|e| e.label == Label::HumanWritten && e.word_count() >= 50));
    }

    #[test]
    fn shifted_domain_is_test_only() {
        let m = shifted_domain_corpus(0, [20, 5, 5], 10);
        m.validate().unwrap();
        let held: Vec<_> = m.entries.iter().filter(|e| e.domain == "outfox").collect();
        assert_eq!(held.len(), 40);
        assert!(held.iter().all(|e| e.split == Some(Split::Test)));
    }
}
