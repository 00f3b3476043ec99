//! Ad-hoc diagnostic: adversarial game state under one condition.
//!
//! Prints the blinded/exposed head's accuracy over epochs plus pooled-space
//! centroid geometry per feature partition, to see whether blinding actually
//! drives the heads to chance and which partitions stay decodable.

use rand::seq::SliceRandom;
use std::collections::BTreeMap;

use typolab::autodiff::{Optimizer, Tape};
use typolab::model::{descend, Batch, Model, ModelConfig, TaskKind};
use typolab::synth::{generate_suite, CategorySizes, CorpusSpec, SplitFractions, Tag, TaggedSentence};
use typolab::typology::{combined_loss, FeatureArea, HeadMode, TypologyFeature};
use typolab::wals::synthetic_profiles;

fn envf(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
}

fn batches(sents: &[TaggedSentence], vocab: &BTreeMap<String, usize>, lang: usize, bs: usize) -> Vec<Batch> {
    sents
        .chunks(bs)
        .map(|chunk| {
            let mut tokens = Vec::new();
            let mut segments = Vec::new();
            let mut labels = Vec::new();
            for s in chunk {
                tokens.extend(s.tokens.iter().map(|t| vocab[t]));
                segments.push(s.tokens.len());
                labels.extend(s.tags.iter().map(|t| t.index()));
            }
            Batch { language_index: lang, tokens, segments, labels }
        })
        .collect()
}

fn task_accuracy(model: &Model, batches: &[Batch]) -> f64 {
    let (mut correct, mut total) = (0usize, 0usize);
    for b in batches {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, b).unwrap();
        let logits = tape.value(out.logits);
        let cols = logits.cols();
        for r in 0..logits.rows() {
            let row = &logits.values()[r * cols..(r + 1) * cols];
            let am = row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            correct += (am == b.labels[r]) as usize;
            total += 1;
        }
    }
    correct as f64 / total.max(1) as f64
}

/// Per-feature head accuracy over every language's train sentences.
fn head_accuracy(
    model: &Model,
    features: &[TypologyFeature],
    train: &BTreeMap<String, Vec<Batch>>,
    profiles: &BTreeMap<String, typolab::typology::LanguageProfile>,
) -> Vec<(String, f64)> {
    let heads = match model.heads() {
        Some(h) => h,
        None => return vec![],
    };
    let mut out = Vec::new();
    for f in features {
        let (mut correct, mut total) = (0usize, 0usize);
        for (lang, bs) in train {
            let target = profiles[lang].value_for(f).unwrap();
            for b in bs {
                let mut tape = Tape::new();
                let fwd = model.forward(&mut tape, b).unwrap();
                let logits = heads.head_forward(&mut tape, model.params(), fwd.pooled, &f.id).unwrap();
                let v = tape.value(logits);
                let cols = v.cols();
                for r in 0..v.rows() {
                    let row = &v.values()[r * cols..(r + 1) * cols];
                    let am = row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
                    correct += (am == target) as usize;
                    total += 1;
                }
            }
        }
        out.push((f.id.clone(), correct as f64 / total.max(1) as f64));
    }
    out
}

/// Mean pooled vector per language.
fn centroids(model: &Model, train: &BTreeMap<String, Vec<Batch>>) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    for (lang, bs) in train {
        let mut sum: Vec<f64> = vec![];
        let mut n = 0usize;
        for b in bs {
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, b).unwrap();
            let v = tape.value(fwd.pooled);
            let cols = v.cols();
            if sum.is_empty() {
                sum = vec![0.0; cols];
            }
            for r in 0..v.rows() {
                for c in 0..cols {
                    sum[c] += v.values()[r * cols + c];
                }
                n += 1;
            }
        }
        out.insert(lang.clone(), sum.iter().map(|s| s / n as f64).collect());
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// between-class centroid distance / within-class member-to-centroid distance.
fn partition_geometry(cents: &BTreeMap<String, Vec<f64>>, classes: &BTreeMap<String, String>) -> (f64, f64) {
    let mut by_class: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    for (lang, c) in cents {
        by_class.entry(classes[lang].as_str()).or_default().push(c);
    }
    let dim = cents.values().next().unwrap().len();
    let mut class_cents = Vec::new();
    let mut within = Vec::new();
    for members in by_class.values() {
        let mut c = vec![0.0; dim];
        for m in members {
            for (i, x) in m.iter().enumerate() {
                c[i] += x / members.len() as f64;
            }
        }
        for m in members {
            within.push(dist(m, &c));
        }
        class_cents.push(c);
    }
    let mut between = Vec::new();
    for i in 0..class_cents.len() {
        for j in i + 1..class_cents.len() {
            between.push(dist(&class_cents[i], &class_cents[j]));
        }
    }
    (
        between.iter().sum::<f64>() / between.len().max(1) as f64,
        within.iter().sum::<f64>() / within.len().max(1) as f64,
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let area = args.get(1).map(|s| s.as_str()).unwrap_or("none");
    let w = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let lambda = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.167);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(30);
    let sents: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(400);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1);
    let expose = std::env::var("GAME_EXPOSE").is_ok();

    let spec = CorpusSpec {
        sentences_per_language: sents,
        max_clause_elements: 8,
        sizes: CategorySizes { nouns: 24, verbs: 12, adjectives: 6, adpositions: 4, affixes: 6 },
        split: SplitFractions {
            train: envf("PILOT_TRAIN", 0.08),
            dev: 0.02,
            test: envf("PILOT_TEST", 0.9),
        },
    };
    let suite = generate_suite(8, 20260823, &spec).unwrap();
    let languages: Vec<String> = suite.grammars.iter().map(|g| g.language.clone()).collect();

    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    vocab.insert("<sep>".into(), 0);
    let mut surfaces = std::collections::BTreeSet::new();
    for c in suite.corpora.values() {
        for s in c.all_sentences() {
            surfaces.extend(s.tokens.iter().cloned());
        }
    }
    for s in surfaces {
        let n = vocab.len();
        vocab.insert(s, n);
    }

    let (all_features, profiles) = synthetic_profiles(&suite.grammars);
    let features: Vec<TypologyFeature> = match area {
        "none" => vec![],
        a => {
            let want = match a {
                "word_order" => FeatureArea::WordOrder,
                "morphology" => FeatureArea::Morphology,
                "phonology" => FeatureArea::Phonology,
                "genealogy" => FeatureArea::Genealogy,
                other => panic!("unknown area {other}"),
            };
            all_features.into_iter().filter(|f| f.area == want).collect()
        }
    };
    let mode = if features.is_empty() {
        None
    } else if expose {
        Some(HeadMode::Expose)
    } else {
        Some(HeadMode::Blind { lambda })
    };

    let config = ModelConfig {
        languages: languages.clone(),
        vocab_size: vocab.len(),
        layers: 2,
        hidden: envf("PILOT_HIDDEN", 16.0) as usize,
        token_embed: 32,
        lang_embed: 16,
        task: TaskKind::TokenTagging { labels: Tag::ALL.len() },
    };
    let mut model = Model::new(config, &features, seed).unwrap();
    let mut optimizer = Optimizer::adam(envf("GAME_LR", 1e-3));

    let mut train: BTreeMap<String, Vec<Batch>> = BTreeMap::new();
    let mut dev: BTreeMap<String, Vec<Batch>> = BTreeMap::new();
    for (i, lang) in languages.iter().enumerate() {
        let c = &suite.corpora[lang];
        train.insert(lang.clone(), batches(&c.train, &vocab, i, 8));
        dev.insert(lang.clone(), batches(&c.test, &vocab, i, 8));
    }
    let flat: Vec<(usize, Batch)> = languages
        .iter()
        .enumerate()
        .flat_map(|(i, l)| train[l].iter().cloned().map(move |b| (i, b)))
        .collect();

    println!("area {area} mode {mode:?} w {w} lambda {lambda} epochs {epochs} seed {seed}");
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..flat.len()).collect();
        let mut rng = typolab::seeded_rng(&["epoch", &seed.to_string(), &epoch.to_string()]);
        order.shuffle(&mut rng);
        for &bi in &order {
            let (lang_idx, batch) = &flat[bi];
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, batch).unwrap();
            let task_loss = tape.cross_entropy(out.logits, &batch.labels).unwrap();
            let loss = match mode {
                None => task_loss,
                Some(m) => {
                    let lang = &languages[*lang_idx];
                    let heads = model.heads().unwrap();
                    let typ = heads
                        .typology_loss(&mut tape, model.params(), out.pooled, &profiles[lang], m)
                        .unwrap();
                    combined_loss(&mut tape, task_loss, typ, w).unwrap()
                }
            };
            descend(&tape, loss, model.params_mut(), &mut optimizer).unwrap();
        }
        if epoch % 3 == 2 || epoch + 1 == epochs {
            let ha = head_accuracy(&model, &features, &train, &profiles);
            let ha: Vec<String> = ha.iter().map(|(id, a)| format!("{id}:{a:.3}")).collect();
            let all_dev: Vec<Batch> = dev.values().flatten().cloned().collect();
            println!(
                "  epoch {epoch:>2}  dev {:.4}  heads [{}]",
                task_accuracy(&model, &all_dev),
                ha.join(" ")
            );
        }
    }

    let cents = centroids(&model, &train);
    let mut norms: Vec<f64> = cents.values().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    norms.sort_by(f64::total_cmp);
    println!("  centroid norms {:?}", norms.iter().map(|n| (n * 100.0).round() / 100.0).collect::<Vec<_>>());
    for (name, pick) in [
        ("order", 0usize),
        ("adp", 1),
        ("affix", 2),
        ("inert", 3),
    ] {
        let classes: BTreeMap<String, String> = suite
            .grammars
            .iter()
            .map(|g| {
                let v = match pick {
                    0 => g.word_order.name().to_string(),
                    1 => g.adposition_order.name().to_string(),
                    2 => g.affixing.name().to_string(),
                    _ => g.inert_feature.name().to_string(),
                };
                (g.language.clone(), v)
            })
            .collect();
        let (between, within) = partition_geometry(&cents, &classes);
        println!("  partition {name:<6} between {between:.4} within {within:.4} ratio {:.2}", between / within.max(1e-12));
    }
}
