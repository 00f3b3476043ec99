//! Ad-hoc training pilot for tuning the fast test configuration.

use std::time::Instant;
use std::collections::BTreeMap;
use typolab::harness::{Condition, Mode, RunConfig, SuiteSpec};
use typolab::stats::{similarity_from_vectors, structural_vectors};
use typolab::synth::{generate_suite, CategorySizes, CorpusSpec, SplitFractions};
use typolab::typology::FeatureArea;

fn small(condition: Condition, epochs: usize, sents: usize, nseeds: usize) -> RunConfig {
    let mut c = RunConfig::standard(condition);
    c.suite = SuiteSpec {
        languages: 8,
        seed: 20260823,
        corpus: CorpusSpec {
            sentences_per_language: sents,
            max_clause_elements: 8,
            sizes: CategorySizes {
                nouns: 24,
                verbs: 12,
                adjectives: 6,
                adpositions: 4,
                affixes: 6,
            },
            split: SplitFractions {
                train: std::env::var("PILOT_TRAIN").ok().and_then(|v| v.parse().ok()).unwrap_or(0.32),
                dev: 0.02,
                test: std::env::var("PILOT_TEST").ok().and_then(|v| v.parse().ok()).unwrap_or(0.66),
            },
        },
    };
    let env = |k: &str, d: usize| {
        std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
    };
    c.model.hidden = env("PILOT_HIDDEN", 32);
    c.model.lang_embed = env("PILOT_LANG_EMBED", 16);
    c.model.token_embed = env("PILOT_TOKEN_EMBED", 32);
    c.model.layers = env("PILOT_LAYERS", 2);
    c.batch_size = env("PILOT_BATCH", 8);
    c.seeds = (1..=nseeds as u64).collect();
    c.epochs = epochs;
    c
}

fn tuned(mut cond: Condition, w_typ: f64, lambda: f64) -> Condition {
    if cond.mode != Mode::Baseline {
        cond.w_typ = w_typ;
        if cond.mode == Mode::Blind {
            cond.lambda = lambda;
        }
    }
    cond
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        f64::NAN
    } else {
        v[v.len() / 2]
    }
}

fn main() {
    let arg = |i: usize, d: f64| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(d)
    };
    let w = arg(1, 1.0);
    let l = arg(2, 1.0);
    let epochs = arg(3, 20.0) as usize;
    let sents = arg(4, 40.0) as usize;
    let nseeds = arg(5, 3.0) as usize;
    let base = small(Condition::baseline(), epochs, sents, nseeds);
    let suite = generate_suite(8, base.suite.seed, &base.suite.corpus).unwrap();
    let sim = similarity_from_vectors(&structural_vectors(&suite.corpora).unwrap()).unwrap();
    println!("w_typ {w} lambda {l} epochs {epochs} sents {sents} seeds {nseeds}");
    let all = std::env::var("PILOT_CONDS").map(|v| v != "core").unwrap_or(true);
    let mut conds = vec![
        Condition::baseline(),
        tuned(Condition::blind(FeatureArea::WordOrder), w, l),
        tuned(Condition::expose(FeatureArea::WordOrder), w, l),
    ];
    if all {
        conds.insert(2, tuned(Condition::blind(FeatureArea::Morphology), w, l));
        conds.insert(3, tuned(Condition::blind(FeatureArea::Phonology), w, l));
        conds.push(tuned(Condition::expose(FeatureArea::Morphology), w, l));
    }
    let mut base_means: Option<Vec<f64>> = None;
    for cond in conds {
        let cfg = small(cond.clone(), epochs, sents, nseeds);
        let t0 = Instant::now();
        let report = typolab::harness::run_condition(&cfg).unwrap();
        let per_seed = report.seed_means();
        let mean0 = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let var0 = |v: &[f64]| {
            let m = mean0(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len().max(2) - 1) as f64
        };
        let welch = match &base_means {
            None => {
                base_means = Some(per_seed.clone());
                String::new()
            }
            Some(b) => {
                let d = mean0(&per_seed) - mean0(b);
                let se = (var0(&per_seed) / per_seed.len() as f64 + var0(b) / b.len() as f64).sqrt();
                format!("  d {:+.2}pt t {:+.2}", d * 100.0, d / se.max(1e-12))
            }
        };
        // Mean sharing bucketed by structural-similarity level.
        let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for s in &report.per_seed {
            if let Some(scores) = &s.alpha_scores {
                let langs = scores.languages();
                for i in 0..langs.len() {
                    for j in i + 1..langs.len() {
                        let key = (sim.matrix.at(i, j) * 100.0).round() as i64;
                        buckets.entry(key).or_default().push(scores.at(i, j));
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let bucket_line: Vec<String> = buckets
            .iter()
            .rev()
            .map(|(k, v)| format!("{:+.2}:{:.3}", *k as f64 / 100.0, mean(v)))
            .collect();
        let rs: Vec<f64> = report.per_seed.iter().filter_map(|s| s.r_structural).collect();
        // How much the learned language-embedding geometry mirrors the
        // structural similarity matrix, and how much alpha follows the
        // embedding geometry.
        let mut emb_struct = vec![];
        for s in &report.per_seed {
            if s.language_embeddings.is_empty() {
                continue;
            }
            let langs: Vec<String> = (0..8).map(|i| format!("l{i}")).collect();
            if let Ok(es) = typolab::stats::similarity_from_embeddings(&langs, &s.language_embeddings) {
                let mut xs = vec![];
                let mut ys = vec![];
                for i in 0..8 {
                    for j in i + 1..8 {
                        xs.push(es.matrix.at(i, j));
                        ys.push(sim.matrix.at(i, j));
                    }
                }
                if let Ok(r) = typolab::stats::pearson(&xs, &ys) {
                    emb_struct.push(r);
                }
            }
        }
        let r_emb: Vec<f64> = report.per_seed.iter().filter_map(|s| s.r_embedding).collect();
        let sd = {
            let m = mean(&per_seed);
            (per_seed.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                / (per_seed.len().max(2) - 1) as f64)
                .sqrt()
        };
        println!(
            "{:<18} test {:.4} sd {:.4}{} r_med {:+.3} r {:?} [{:.1}s]\n    emb~struct med {:+.3} {:?}  alpha~emb med {:+.3}\n    alpha by sim: {}",
            cond.label(),
            report.aggregate.mean_test_accuracy,
            sd,
            welch,
            median(rs.clone()),
            rs.iter().map(|r| (r * 1e3).round() / 1e3).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64(),
            median(emb_struct.clone()),
            emb_struct.iter().map(|r| (r * 1e2).round() / 1e2).collect::<Vec<_>>(),
            median(r_emb.clone()),
            bucket_line.join("  ")
        );
    }
}
