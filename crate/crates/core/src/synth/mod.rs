//! Toy language generation with controlled typological parameters.
//!
//! Each language is a grammar (clause order, adposition order, affixing
//! direction, an inert control feature, a family) plus a disjoint surface
//! vocabulary. Corpora are parallel across languages: sentence i in every
//! language realizes the same abstract clause, so cross-language sentence
//! pairs can be labeled by clause identity.
//!
//! Some surface forms are deliberately ambiguous within a language (noun/verb
//! and noun/affix collisions), so correct tagging of those tokens depends on
//! clause order and affix placement rather than on a per-token lookup.

mod io;

pub use io::{
    corpus_to_string, load_suite, read_corpus, save_suite, verify_manifest, write_corpus,
    SuiteManifest,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("suite needs at least {minimal} languages, got {got}")]
    TooFewLanguages { got: usize, minimal: usize },
    #[error("suite supports at most {max} languages (onset inventory), got {got}")]
    TooManyLanguages { got: usize, max: usize },
    #[error("bad corpus spec: {0}")]
    BadSpec(String),
    #[error("corpus file {path}, line {line}: {reason}")]
    BadCorpusLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("suite manifest: {0}")]
    BadManifest(String),
    #[error("corpus checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

// ── Grammar parameters ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "VERB")]
    Verb,
    #[serde(rename = "ADJ")]
    Adj,
    #[serde(rename = "ADP")]
    Adp,
    #[serde(rename = "AFF")]
    Aff,
}

impl Tag {
    pub const ALL: [Tag; 5] = [Tag::Noun, Tag::Verb, Tag::Adj, Tag::Adp, Tag::Aff];

    pub fn index(self) -> usize {
        Tag::ALL.iter().position(|&t| t == self).expect("member")
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Adj => "ADJ",
            Tag::Adp => "ADP",
            Tag::Aff => "AFF",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.iter().copied().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WordOrder {
    #[serde(rename = "SOV")]
    Sov,
    #[serde(rename = "SVO")]
    Svo,
    #[serde(rename = "VSO")]
    Vso,
    #[serde(rename = "VOS")]
    Vos,
    #[serde(rename = "OVS")]
    Ovs,
    #[serde(rename = "OSV")]
    Osv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Constituent {
    Subject,
    Verb,
    Object,
}

impl WordOrder {
    pub const ALL: [WordOrder; 6] = [
        WordOrder::Sov,
        WordOrder::Svo,
        WordOrder::Vso,
        WordOrder::Vos,
        WordOrder::Ovs,
        WordOrder::Osv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WordOrder::Sov => "SOV",
            WordOrder::Svo => "SVO",
            WordOrder::Vso => "VSO",
            WordOrder::Vos => "VOS",
            WordOrder::Ovs => "OVS",
            WordOrder::Osv => "OSV",
        }
    }

    fn sequence(self) -> [Constituent; 3] {
        use Constituent::*;
        match self {
            WordOrder::Sov => [Subject, Object, Verb],
            WordOrder::Svo => [Subject, Verb, Object],
            WordOrder::Vso => [Verb, Subject, Object],
            WordOrder::Vos => [Verb, Object, Subject],
            WordOrder::Ovs => [Object, Verb, Subject],
            WordOrder::Osv => [Object, Subject, Verb],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AdpositionOrder {
    #[serde(rename = "pre")]
    Pre,
    #[serde(rename = "post")]
    Post,
}

impl AdpositionOrder {
    pub fn name(self) -> &'static str {
        match self {
            AdpositionOrder::Pre => "pre",
            AdpositionOrder::Post => "post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Affixing {
    #[serde(rename = "prefixing")]
    Prefixing,
    #[serde(rename = "suffixing")]
    Suffixing,
}

impl Affixing {
    pub fn name(self) -> &'static str {
        match self {
            Affixing::Prefixing => "prefixing",
            Affixing::Suffixing => "suffixing",
        }
    }
}

/// Control feature with no surface effect whatsoever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InertFeature {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
}

impl InertFeature {
    pub fn name(self) -> &'static str {
        match self {
            InertFeature::A => "a",
            InertFeature::B => "b",
            InertFeature::C => "c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticGrammar {
    pub language: String,
    pub word_order: WordOrder,
    pub adposition_order: AdpositionOrder,
    pub affixing: Affixing,
    pub inert_feature: InertFeature,
    pub family: String,
    pub vocab_seed: u64,
}

// ── Corpus spec ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySizes {
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adpositions: usize,
    pub affixes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub sentences_per_language: usize,
    pub max_clause_elements: usize,
    pub sizes: CategorySizes,
    pub split: SplitFractions,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            sentences_per_language: 1000,
            max_clause_elements: 12,
            sizes: CategorySizes {
                nouns: 20,
                verbs: 12,
                adjectives: 6,
                adpositions: 4,
                affixes: 4,
            },
            split: SplitFractions {
                train: 0.8,
                dev: 0.1,
                test: 0.1,
            },
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sentences_per_language < 10 {
            return Err(SynthError::BadSpec(format!(
                "sentences_per_language must be >= 10, got {}",
                self.sentences_per_language
            )));
        }
        let sum = self.split.train + self.split.dev + self.split.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::BadSpec(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        if self.split.train <= 0.0 || self.split.dev < 0.0 || self.split.test <= 0.0 {
            return Err(SynthError::BadSpec(
                "train and test fractions must be positive".into(),
            ));
        }
        let s = &self.sizes;
        if s.nouns < 4 || s.verbs < 2 || s.adjectives < 1 || s.adpositions < 1 || s.affixes < 1 {
            return Err(SynthError::BadSpec(format!(
                "category sizes too small: {s:?}"
            )));
        }
        if self.max_clause_elements < 4 {
            return Err(SynthError::BadSpec(
                "max_clause_elements must be >= 4 (two nouns, verb, affix)".into(),
            ));
        }
        Ok(())
    }

    fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.sentences_per_language;
        let train = (n as f64 * self.split.train).round() as usize;
        let dev = (n as f64 * self.split.dev).round() as usize;
        let dev = dev.min(n - train);
        (train, dev, n - train - dev)
    }
}

// ── Vocabulary ──────────────────────────────────────────────────────────

/// Onset syllables, one per language, guaranteeing cross-language disjoint
/// surface forms when vocab seeds are distinct.
const ONSETS: [&str; 24] = [
    "ba", "de", "gi", "ko", "lu", "me", "ni", "po", "ra", "se", "tu", "vi", "za", "bo", "du",
    "ge", "ka", "li", "mu", "ne", "pi", "ro", "sa", "te",
];

const SYLLABLES: [&str; 30] = [
    "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo", "mu",
    "na", "ne", "ni", "no", "nu", "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
];

/// Probability of an adjective on the subject / object noun phrase, and of a
/// clause-final adposition phrase. Roughly a third of clauses stay bare,
/// which the order-recovery oracle relies on.
const P_ADJ: f64 = 0.3;
const P_PP: f64 = 0.35;

/// Probability that each stem (subject, object, verb) carries an affix.
/// Affixless verbs are the tokens where only clause order separates a verb
/// from a noun homophone.
const P_AFFIX: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    adpositions: Vec<String>,
    affixes: Vec<String>,
}

impl Vocabulary {
    /// Deterministic vocabulary for a grammar. Subject heads draw from the
    /// first half of `nouns`, object heads from the second half. Some verb
    /// and affix surfaces reuse noun surfaces on purpose.
    pub fn for_grammar(grammar: &SyntheticGrammar, sizes: &CategorySizes) -> Vocabulary {
        let onset = ONSETS[(grammar.vocab_seed as usize) % ONSETS.len()];
        let mut rng = seeded_rng(&["vocab", &grammar.vocab_seed.to_string()]);
        let mut used: BTreeSet<String> = BTreeSet::new();
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let a = SYLLABLES[rng.gen_range(0..SYLLABLES.len())];
            let b = SYLLABLES[rng.gen_range(0..SYLLABLES.len())];
            let form = format!("{onset}{a}{b}");
            if used.insert(form.clone()) {
                return form;
            }
        };

        let nouns: Vec<String> = (0..sizes.nouns).map(|_| fresh(&mut rng)).collect();
        let half = sizes.nouns / 2;

        // Noun/verb collisions take the bottom of each noun class;
        // noun/adposition collisions sit at the top of the subject class and
        // noun/affix collisions at the top of the object class. The ranges
        // are kept disjoint so every ambiguous surface has exactly two
        // readings. Every verb, adposition, and affix surface doubles as a
        // noun where the inventory allows, so none of those tags is a pure
        // lexical lookup: resolving a verb takes the clause order, an
        // adposition its placement rule, an affix its side rule.
        let amb_verbs = sizes.verbs;
        let from_a = ((amb_verbs + 1) / 2).min(half);
        let from_b = (amb_verbs - from_a).min(sizes.nouns - half);
        let amb_adps = sizes.adpositions.min(half - from_a);
        let amb_affixes = sizes.affixes.min(sizes.nouns - half - from_b);

        let mut verbs = Vec::with_capacity(sizes.verbs);
        verbs.extend(nouns[..from_a].iter().cloned());
        verbs.extend(nouns[half..half + from_b].iter().cloned());
        while verbs.len() < sizes.verbs {
            verbs.push(fresh(&mut rng));
        }

        let adjectives = (0..sizes.adjectives).map(|_| fresh(&mut rng)).collect();

        let mut adpositions = Vec::with_capacity(sizes.adpositions);
        adpositions.extend(nouns[half - amb_adps..half].iter().cloned());
        while adpositions.len() < sizes.adpositions {
            adpositions.push(fresh(&mut rng));
        }

        let mut affixes = Vec::with_capacity(sizes.affixes);
        affixes.extend(nouns[sizes.nouns - amb_affixes..].iter().cloned());
        while affixes.len() < sizes.affixes {
            affixes.push(fresh(&mut rng));
        }

        Vocabulary {
            nouns,
            verbs,
            adjectives,
            adpositions,
            affixes,
        }
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn subject_class(&self) -> &[String] {
        &self.nouns[..self.nouns.len() / 2]
    }

    pub fn object_class(&self) -> &[String] {
        &self.nouns[self.nouns.len() / 2..]
    }

    pub fn verbs(&self) -> &[String] {
        &self.verbs
    }

    pub fn adjectives(&self) -> &[String] {
        &self.adjectives
    }

    pub fn adpositions(&self) -> &[String] {
        &self.adpositions
    }

    pub fn affixes(&self) -> &[String] {
        &self.affixes
    }

    /// Every surface form, sorted and deduplicated.
    pub fn all_surfaces(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        for list in [
            &self.nouns,
            &self.verbs,
            &self.adjectives,
            &self.adpositions,
            &self.affixes,
        ] {
            set.extend(list.iter().cloned());
        }
        set
    }

    /// Surfaces that admit more than one tag.
    pub fn ambiguous_surfaces(&self) -> BTreeSet<String> {
        let nouns: BTreeSet<&String> = self.nouns.iter().collect();
        self.verbs
            .iter()
            .chain(self.adpositions.iter())
            .chain(self.affixes.iter())
            .filter(|s| nouns.contains(s))
            .cloned()
            .collect()
    }
}

// ── Sentences and corpora ───────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub language: String,
    pub train: Vec<TaggedSentence>,
    pub dev: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
}

impl TaggedCorpus {
    pub fn all_sentences(&self) -> impl Iterator<Item = &TaggedSentence> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Clause {
    subj: usize,
    obj: usize,
    verb: usize,
    subj_affix: Option<usize>,
    obj_affix: Option<usize>,
    verb_affix: Option<usize>,
    subj_adj: Option<usize>,
    obj_adj: Option<usize>,
    pp: Option<(usize, usize)>,
}

fn sample_clause(rng: &mut ChaCha8Rng, sizes: &CategorySizes, max_elements: usize) -> Clause {
    let half = sizes.nouns / 2;
    let mut affix = |rng: &mut ChaCha8Rng| {
        (rng.gen::<f64>() < P_AFFIX).then(|| rng.gen_range(0..sizes.affixes))
    };
    let mut clause = Clause {
        subj: rng.gen_range(0..half),
        obj: half + rng.gen_range(0..sizes.nouns - half),
        verb: rng.gen_range(0..sizes.verbs),
        subj_affix: affix(rng),
        obj_affix: affix(rng),
        verb_affix: affix(rng),
        subj_adj: (rng.gen::<f64>() < P_ADJ).then(|| rng.gen_range(0..sizes.adjectives)),
        obj_adj: (rng.gen::<f64>() < P_ADJ).then(|| rng.gen_range(0..sizes.adjectives)),
        pp: (rng.gen::<f64>() < P_PP).then(|| {
            (
                rng.gen_range(0..sizes.adpositions),
                rng.gen_range(0..sizes.nouns),
            )
        }),
    };
    // Trim optional elements until the clause fits the element budget. The
    // verb affix goes last so tight budgets keep the affixing signal.
    let count = |c: &Clause| {
        3 + c.subj_affix.map_or(0, |_| 1)
            + c.obj_affix.map_or(0, |_| 1)
            + c.verb_affix.map_or(0, |_| 1)
            + c.subj_adj.map_or(0, |_| 1)
            + c.obj_adj.map_or(0, |_| 1)
            + c.pp.map_or(0, |_| 2)
    };
    if count(&clause) > max_elements {
        clause.pp = None;
    }
    if count(&clause) > max_elements {
        clause.obj_adj = None;
    }
    if count(&clause) > max_elements {
        clause.subj_adj = None;
    }
    if count(&clause) > max_elements {
        clause.obj_affix = None;
    }
    if count(&clause) > max_elements {
        clause.subj_affix = None;
    }
    clause
}

fn linearize(clause: &Clause, grammar: &SyntheticGrammar, vocab: &Vocabulary) -> TaggedSentence {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let emit = |token: &str, tag: Tag, tokens: &mut Vec<String>, tags: &mut Vec<Tag>| {
        tokens.push(token.to_string());
        tags.push(tag);
    };
    // A stem and its affix are always adjacent, affix side per the grammar.
    // Bare verbs leave clause order as the only cue separating them from
    // their noun homophones.
    let affixed = |stem: &str,
                   tag: Tag,
                   affix: Option<usize>,
                   tokens: &mut Vec<String>,
                   tags: &mut Vec<Tag>| match affix {
        Some(a) => {
            let aff = &vocab.affixes[a];
            match grammar.affixing {
                Affixing::Prefixing => {
                    emit(aff, Tag::Aff, tokens, tags);
                    emit(stem, tag, tokens, tags);
                }
                Affixing::Suffixing => {
                    emit(stem, tag, tokens, tags);
                    emit(aff, Tag::Aff, tokens, tags);
                }
            }
        }
        None => emit(stem, tag, tokens, tags),
    };

    for part in grammar.word_order.sequence() {
        match part {
            Constituent::Subject => {
                if let Some(a) = clause.subj_adj {
                    emit(&vocab.adjectives[a], Tag::Adj, &mut tokens, &mut tags);
                }
                affixed(
                    &vocab.nouns[clause.subj],
                    Tag::Noun,
                    clause.subj_affix,
                    &mut tokens,
                    &mut tags,
                );
            }
            Constituent::Verb => {
                affixed(
                    &vocab.verbs[clause.verb],
                    Tag::Verb,
                    clause.verb_affix,
                    &mut tokens,
                    &mut tags,
                );
            }
            Constituent::Object => {
                if let Some(a) = clause.obj_adj {
                    emit(&vocab.adjectives[a], Tag::Adj, &mut tokens, &mut tags);
                }
                affixed(
                    &vocab.nouns[clause.obj],
                    Tag::Noun,
                    clause.obj_affix,
                    &mut tokens,
                    &mut tags,
                );
            }
        }
    }

    // The adposition phrase is a clause-final adjunct. Keeping it out of the
    // constituent interior means adjacency is unambiguous: a prepositional
    // ADP is always followed by its noun, a postpositional ADP always ends
    // the sentence.
    if let Some((adp, noun)) = clause.pp {
        match grammar.adposition_order {
            AdpositionOrder::Pre => {
                emit(&vocab.adpositions[adp], Tag::Adp, &mut tokens, &mut tags);
                emit(&vocab.nouns[noun], Tag::Noun, &mut tokens, &mut tags);
            }
            AdpositionOrder::Post => {
                emit(&vocab.nouns[noun], Tag::Noun, &mut tokens, &mut tags);
                emit(&vocab.adpositions[adp], Tag::Adp, &mut tokens, &mut tags);
            }
        }
    }

    TaggedSentence {
        tokens,
        tags,
        language: grammar.language.clone(),
    }
}

/// Generate one language's corpus. The clause stream is seeded independently
/// of the grammar, so corpora generated with the same `seed` are parallel
/// across languages. The inert feature is never consulted.
pub fn generate_language(
    grammar: &SyntheticGrammar,
    spec: &CorpusSpec,
    seed: u64,
) -> Result<TaggedCorpus> {
    spec.validate()?;
    let vocab = Vocabulary::for_grammar(grammar, &spec.sizes);
    let (n_train, n_dev, n_test) = spec.split_counts();
    let split = |name: &str, count: usize| {
        (0..count)
            .map(|i| {
                let mut rng =
                    seeded_rng(&["clause", &seed.to_string(), name, &i.to_string()]);
                let clause = sample_clause(&mut rng, &spec.sizes, spec.max_clause_elements);
                linearize(&clause, grammar, &vocab)
            })
            .collect::<Vec<_>>()
    };
    Ok(TaggedCorpus {
        language: grammar.language.clone(),
        train: split("train", n_train),
        dev: split("dev", n_dev),
        test: split("test", n_test),
    })
}

// ── Suites ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub seed: u64,
    pub spec: CorpusSpec,
    pub grammars: Vec<SyntheticGrammar>,
    pub corpora: BTreeMap<String, TaggedCorpus>,
}

pub const MIN_SUITE_LANGUAGES: usize = 4;

/// Build the grammar assignment for an n-language suite: word orders in
/// consecutive pairs (singly below 8), affixing and adposition order
/// alternating out of phase, inert values cycling, and families that
/// coincide with word order in the first half but cut across it in the
/// second.
pub fn suite_grammars(n_languages: usize) -> Result<Vec<SyntheticGrammar>> {
    if n_languages < MIN_SUITE_LANGUAGES {
        return Err(SynthError::TooFewLanguages {
            got: n_languages,
            minimal: MIN_SUITE_LANGUAGES,
        });
    }
    if n_languages > ONSETS.len() {
        return Err(SynthError::TooManyLanguages {
            got: n_languages,
            max: ONSETS.len(),
        });
    }
    let half = n_languages / 2;
    let first_families = half.div_ceil(2);
    Ok((0..n_languages)
        .map(|i| {
            // Order pairs are drawn so the verb-position classes stay mixed
            // (final, medial, medial, initial for the first eight), and each
            // pair's two members differ in exactly one of adposition order
            // and affix side. No two languages share the full feature triple,
            // every pairwise structural similarity is strictly below one, and
            // no language has a degenerate (constant) statistics vector.
            // Inert classes follow the pair table: a pair split by adposition
            // order is also split across inert classes, a pair split by affix
            // side shares one, so inert class boundaries never coincide with
            // an affix-side boundary.
            const PAIR_ORDERS: [WordOrder; 6] = [
                WordOrder::Sov,
                WordOrder::Svo,
                WordOrder::Ovs,
                WordOrder::Vos,
                WordOrder::Vso,
                WordOrder::Osv,
            ];
            use AdpositionOrder::{Post, Pre};
            use Affixing::{Prefixing, Suffixing};
            const PAIR_SIDES: [[(AdpositionOrder, Affixing); 2]; 6] = [
                [(Post, Prefixing), (Pre, Prefixing)],
                [(Pre, Suffixing), (Pre, Prefixing)],
                [(Post, Suffixing), (Post, Prefixing)],
                [(Pre, Suffixing), (Post, Suffixing)],
                [(Post, Prefixing), (Post, Suffixing)],
                [(Pre, Suffixing), (Pre, Prefixing)],
            ];
            use InertFeature::{A, B, C};
            const PAIR_INERT: [[InertFeature; 2]; 6] = [
                [A, B],
                [C, C],
                [B, B],
                [A, B],
                [A, A],
                [C, C],
            ];
            let (word_order, (adposition_order, affixing), inert_feature) = if n_languages >= 8 {
                (
                    PAIR_ORDERS[(i / 2) % 6],
                    PAIR_SIDES[(i / 2) % 6][i % 2],
                    PAIR_INERT[(i / 2) % 6][i % 2],
                )
            } else {
                (PAIR_ORDERS[i % 6], PAIR_SIDES[i % 6][0], [A, B, C][i % 3])
            };
            let family = if i < half {
                format!("fam{}", i / 2)
            } else {
                format!("fam{}", first_families + (i - half) % 2)
            };
            SyntheticGrammar {
                language: format!("l{i}"),
                word_order,
                adposition_order,
                affixing,
                inert_feature,
                family,
                vocab_seed: i as u64,
            }
        })
        .collect())
}

pub fn generate_suite(n_languages: usize, seed: u64, spec: &CorpusSpec) -> Result<Suite> {
    let grammars = suite_grammars(n_languages)?;
    let mut corpora = BTreeMap::new();
    for g in &grammars {
        corpora.insert(g.language.clone(), generate_language(g, spec, seed)?);
    }
    Ok(Suite {
        seed,
        spec: spec.clone(),
        grammars,
        corpora,
    })
}

// ── Sentence-pair classification data ───────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub tokens_a: Vec<String>,
    pub tokens_b: Vec<String>,
    pub language_a: String,
    pub language_b: String,
    /// True when both sides realize the same underlying clause.
    pub same_clause: bool,
}

/// Pair up two parallel sentence lists: even indices pair i with i (same
/// clause), odd indices pair i with a shifted partner (different clause).
/// Exactly balanced for even list lengths.
pub fn classification_task(a: &[TaggedSentence], b: &[TaggedSentence]) -> Vec<PairExample> {
    let n = a.len().min(b.len());
    (0..n)
        .map(|i| {
            let (j, same) = if i % 2 == 0 {
                (i, true)
            } else {
                ((i + n / 2) % n, i == (i + n / 2) % n)
            };
            PairExample {
                tokens_a: a[i].tokens.clone(),
                tokens_b: b[j].tokens.clone(),
                language_a: a[i].language.clone(),
                language_b: b[j].language.clone(),
                same_clause: same,
            }
        })
        .collect()
}

// ── Recovery oracles ────────────────────────────────────────────────────

/// Recover clause order from a corpus by majority vote over bare clauses
/// (argument nouns, verb, affixes, no adjectives or adpositions), using the
/// subject/object noun classes to tell S from O.
pub fn recover_word_order(corpus: &TaggedCorpus, vocab: &Vocabulary) -> Option<WordOrder> {
    let subj: BTreeSet<&String> = vocab.subject_class().iter().collect();
    let obj: BTreeSet<&String> = vocab.object_class().iter().collect();
    let mut votes: BTreeMap<WordOrder, usize> = BTreeMap::new();

    for s in corpus.all_sentences() {
        if s.tags.iter().any(|t| matches!(t, Tag::Adj | Tag::Adp)) {
            continue;
        }
        let mut pos = BTreeMap::new();
        for (i, (tok, tag)) in s.tokens.iter().zip(&s.tags).enumerate() {
            match tag {
                Tag::Verb => pos.insert(Constituent::Verb as usize, i),
                Tag::Noun if subj.contains(tok) => pos.insert(Constituent::Subject as usize, i),
                Tag::Noun if obj.contains(tok) => pos.insert(Constituent::Object as usize, i),
                _ => None,
            };
        }
        let (Some(&s_pos), Some(&v_pos), Some(&o_pos)) = (
            pos.get(&(Constituent::Subject as usize)),
            pos.get(&(Constituent::Verb as usize)),
            pos.get(&(Constituent::Object as usize)),
        ) else {
            continue;
        };
        let order = WordOrder::ALL.iter().copied().find(|o| {
            let seq = o.sequence();
            let rank = |c: Constituent| seq.iter().position(|&x| x == c).expect("member");
            let (rs, rv, ro) = (
                rank(Constituent::Subject),
                rank(Constituent::Verb),
                rank(Constituent::Object),
            );
            (rs < rv) == (s_pos < v_pos) && (rs < ro) == (s_pos < o_pos) && (rv < ro) == (v_pos < o_pos)
        });
        if let Some(order) = order {
            *votes.entry(order).or_default() += 1;
        }
    }
    votes.into_iter().max_by_key(|&(_, n)| n).map(|(o, _)| o)
}

/// Recover affix placement from sentence edges. A prefix can open a
/// sentence but never close one (its stem follows it), and a suffix can
/// close a sentence but never open one, so edge AFF tokens vote cleanly
/// even when affixes sit next to other affixed stems mid-sentence.
pub fn recover_affixing(corpus: &TaggedCorpus) -> Option<Affixing> {
    let (mut initial, mut fin) = (0usize, 0usize);
    for s in corpus.all_sentences() {
        if s.tags.first() == Some(&Tag::Aff) {
            initial += 1;
        }
        if s.tags.last() == Some(&Tag::Aff) {
            fin += 1;
        }
    }
    match initial.cmp(&fin) {
        std::cmp::Ordering::Greater => Some(Affixing::Prefixing),
        std::cmp::Ordering::Less => Some(Affixing::Suffixing),
        std::cmp::Ordering::Equal => None,
    }
}

/// Recover adposition order from ADP/NOUN adjacency.
pub fn recover_adposition_order(corpus: &TaggedCorpus) -> Option<AdpositionOrder> {
    let (mut pre, mut post) = (0usize, 0usize);
    for s in corpus.all_sentences() {
        for (i, tag) in s.tags.iter().enumerate() {
            if *tag != Tag::Adp {
                continue;
            }
            if i + 1 < s.tags.len() && s.tags[i + 1] == Tag::Noun {
                pre += 1;
            } else if i > 0 && s.tags[i - 1] == Tag::Noun {
                post += 1;
            }
        }
    }
    match pre.cmp(&post) {
        std::cmp::Ordering::Greater => Some(AdpositionOrder::Pre),
        std::cmp::Ordering::Less => Some(AdpositionOrder::Post),
        std::cmp::Ordering::Equal => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> CorpusSpec {
        CorpusSpec {
            sentences_per_language: 60,
            ..CorpusSpec::default()
        }
    }

    fn grammar(order: WordOrder, affixing: Affixing) -> SyntheticGrammar {
        SyntheticGrammar {
            language: "x0".into(),
            word_order: order,
            adposition_order: AdpositionOrder::Pre,
            affixing,
            inert_feature: InertFeature::A,
            family: "fam0".into(),
            vocab_seed: 3,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = grammar(WordOrder::Svo, Affixing::Suffixing);
        let spec = tiny_spec();
        let a = generate_language(&g, &spec, 11).unwrap();
        let b = generate_language(&g, &spec, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_language(&g, &spec, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn inert_feature_has_no_surface_effect() {
        let spec = tiny_spec();
        let mut ga = grammar(WordOrder::Vso, Affixing::Prefixing);
        let mut gb = ga.clone();
        ga.inert_feature = InertFeature::A;
        gb.inert_feature = InertFeature::C;
        let a = generate_language(&ga, &spec, 5).unwrap();
        let b = generate_language(&gb, &spec, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prefixing_puts_every_affix_directly_before_a_stem() {
        let g = grammar(WordOrder::Sov, Affixing::Prefixing);
        let corpus = generate_language(&g, &tiny_spec(), 7).unwrap();
        let mut on_verbs = 0usize;
        let mut on_nouns = 0usize;
        for s in corpus.all_sentences() {
            for (i, tag) in s.tags.iter().enumerate() {
                if *tag == Tag::Aff {
                    match s.tags[i + 1] {
                        Tag::Verb => on_verbs += 1,
                        Tag::Noun => on_nouns += 1,
                        other => panic!("affix before {other:?} in {:?}", s.tokens),
                    }
                }
            }
        }
        assert!(on_verbs > 0 && on_nouns > 0);
    }

    #[test]
    fn hand_linearization_of_a_bare_svo_clause() {
        let g = grammar(WordOrder::Svo, Affixing::Suffixing);
        let vocab = Vocabulary::for_grammar(&g, &CorpusSpec::default().sizes);
        let clause = Clause {
            subj: 1,
            obj: 12,
            verb: 7,
            subj_affix: None,
            obj_affix: Some(2),
            verb_affix: Some(3),
            subj_adj: None,
            obj_adj: None,
            pp: None,
        };
        let s = linearize(&clause, &g, &vocab);
        assert_eq!(
            s.tokens,
            vec![
                vocab.nouns()[1].clone(),
                vocab.verbs()[7].clone(),
                vocab.affixes()[3].clone(),
                vocab.nouns()[12].clone(),
                vocab.affixes()[2].clone(),
            ]
        );
        assert_eq!(
            s.tags,
            vec![Tag::Noun, Tag::Verb, Tag::Aff, Tag::Noun, Tag::Aff]
        );
    }

    #[test]
    fn corpora_are_parallel_across_languages() {
        // Same clause stream: sentence i realizes the same clause in every
        // language, so sentence lengths differ only through linearization,
        // which never drops tokens. Tag multisets must match.
        let spec = tiny_spec();
        let suite = generate_suite(8, 42, &spec).unwrap();
        let a = &suite.corpora["l0"];
        let b = &suite.corpora["l5"];
        for (sa, sb) in a.train.iter().zip(&b.train) {
            let mut ta: Vec<Tag> = sa.tags.clone();
            let mut tb: Vec<Tag> = sb.tags.clone();
            ta.sort();
            tb.sort();
            assert_eq!(ta, tb);
        }
    }

    #[test]
    fn suite_vocabularies_are_disjoint() {
        let spec = tiny_spec();
        let suite = generate_suite(8, 1, &spec).unwrap();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for g in &suite.grammars {
            let vocab = Vocabulary::for_grammar(g, &spec.sizes);
            for surface in vocab.all_surfaces() {
                assert!(seen.insert(surface.clone()), "shared surface {surface}");
            }
        }
    }

    #[test]
    fn vocabulary_has_planted_ambiguity() {
        let g = grammar(WordOrder::Svo, Affixing::Suffixing);
        let vocab = Vocabulary::for_grammar(&g, &CorpusSpec::default().sizes);
        let amb = vocab.ambiguous_surfaces();
        assert_eq!(
            amb.len(),
            vocab.verbs().len() + vocab.adpositions().len() + vocab.affixes().len()
        );
        let doubling = |list: &[String]| {
            list.iter().filter(|s| vocab.nouns().contains(s)).count()
        };
        assert_eq!(doubling(vocab.verbs()), vocab.verbs().len());
        assert_eq!(doubling(vocab.adpositions()), vocab.adpositions().len());
        assert_eq!(doubling(vocab.affixes()), vocab.affixes().len());
        assert_eq!(doubling(vocab.adjectives()), 0);
    }

    #[test]
    fn suite_balances_feature_values() {
        let grammars = suite_grammars(8).unwrap();
        let count = |f: &dyn Fn(&SyntheticGrammar) -> String| {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for g in &grammars {
                *m.entry(f(g)).or_default() += 1;
            }
            m
        };
        let affixing = count(&|g| g.affixing.name().to_string());
        assert_eq!(affixing["prefixing"], 4);
        assert_eq!(affixing["suffixing"], 4);
        let orders = count(&|g| g.word_order.name().to_string());
        assert!(orders.len() >= 4);
        assert!(orders.values().all(|&n| n >= 2));
        let inert = count(&|g| g.inert_feature.name().to_string());
        assert_eq!(inert.len(), 3);
        assert!(inert.values().all(|&n| n >= 2));
    }

    #[test]
    fn suite_families_correlate_with_order_in_first_half_only() {
        let grammars = suite_grammars(8).unwrap();
        let mut by_family: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for g in &grammars {
            by_family
                .entry(&g.family)
                .or_default()
                .insert(g.word_order.name());
        }
        let uniform = by_family.values().filter(|orders| orders.len() == 1).count();
        let mixed = by_family.values().filter(|orders| orders.len() > 1).count();
        assert_eq!(uniform, 2);
        assert_eq!(mixed, 2);
    }

    #[test]
    fn suite_too_small_reports_minimum() {
        let err = suite_grammars(3).unwrap_err();
        assert!(err.to_string().contains("at least 4"));
    }

    #[test]
    fn word_order_recovery_is_exact_on_suite() {
        let spec = tiny_spec();
        let suite = generate_suite(8, 9, &spec).unwrap();
        for g in &suite.grammars {
            let vocab = Vocabulary::for_grammar(g, &spec.sizes);
            let got = recover_word_order(&suite.corpora[&g.language], &vocab);
            assert_eq!(got, Some(g.word_order), "language {}", g.language);
        }
    }

    #[test]
    fn affixing_recovery_is_exact_on_suite() {
        let spec = tiny_spec();
        let suite = generate_suite(8, 9, &spec).unwrap();
        for g in &suite.grammars {
            let got = recover_affixing(&suite.corpora[&g.language]);
            assert_eq!(got, Some(g.affixing), "language {}", g.language);
        }
    }

    #[test]
    fn adposition_recovery_is_exact_on_suite() {
        let spec = tiny_spec();
        let suite = generate_suite(8, 9, &spec).unwrap();
        for g in &suite.grammars {
            let got = recover_adposition_order(&suite.corpora[&g.language]);
            assert_eq!(got, Some(g.adposition_order), "language {}", g.language);
        }
    }

    #[test]
    fn classification_pairs_are_balanced_and_sound() {
        let spec = tiny_spec();
        let suite = generate_suite(8, 3, &spec).unwrap();
        let a = &suite.corpora["l0"].train;
        let b = &suite.corpora["l2"].train;
        let pairs = classification_task(a, b);
        assert_eq!(pairs.len(), a.len());
        let positives = pairs.iter().filter(|p| p.same_clause).count();
        assert_eq!(positives, pairs.len() / 2);
        // A sentence paired with its own clause index is a positive.
        assert!(pairs[0].same_clause);
        assert_eq!(pairs[0].tokens_a, a[0].tokens);
        assert_eq!(pairs[0].tokens_b, b[0].tokens);
    }

    #[test]
    fn split_counts_honor_fractions() {
        let spec = CorpusSpec {
            sentences_per_language: 100,
            ..CorpusSpec::default()
        };
        let g = grammar(WordOrder::Svo, Affixing::Suffixing);
        let corpus = generate_language(&g, &spec, 1).unwrap();
        assert_eq!(corpus.train.len(), 80);
        assert_eq!(corpus.dev.len(), 10);
        assert_eq!(corpus.test.len(), 10);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = CorpusSpec::default();
        spec.sentences_per_language = 5;
        assert!(spec.validate().is_err());
        let mut spec = CorpusSpec::default();
        spec.split.train = 0.9;
        assert!(spec.validate().is_err());
    }
}
