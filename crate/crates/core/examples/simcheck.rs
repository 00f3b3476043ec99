use typolab::stats::{similarity_from_vectors, structural_vectors};
use typolab::synth::{generate_suite, CorpusSpec};

fn main() {
    let mut spec = CorpusSpec::default();
    spec.sentences_per_language = 100;
    let suite = generate_suite(8, 20260823, &spec).unwrap();
    let vecs = structural_vectors(&suite.corpora).unwrap();
    let sim = similarity_from_vectors(&vecs).unwrap();
    for v in &vecs {
        println!("{}: {:?}", v.language, v.components.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
    println!("degenerate: {:?}", sim.degenerate);
    let langs = sim.matrix.languages().to_vec();
    let mut pairs: Vec<(f64, String)> = vec![];
    for i in 0..langs.len() {
        for j in (i + 1)..langs.len() {
            pairs.push((sim.matrix.at(i, j), format!("{}-{}", langs[i], langs[j])));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (c, p) in &pairs {
        println!("  {c:+.3} {p}");
    }
}
