//! Central finite differences of the training objective.

use ncfair::train::{
    evaluate_loss, forward, generate_corpus, Batch, ModelParams, Objective, RunningClassMeans,
    Skew, SyntheticCorpusSpec,
};
use ncfair::SubsetSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

/// C = 12: [MASK], [PAD], two tokens per group, four contexts, two fillers.
pub fn tiny_spec() -> SyntheticCorpusSpec {
    SyntheticCorpusSpec {
        num_group_a: 2,
        num_group_b: 2,
        num_contexts: 4,
        num_filler: 2,
        skew: Skew::Uniform(0.8),
        sentence_len: 4,
        num_sentences: 24,
        seed: 5,
    }
}

pub struct Fixture {
    pub params: ModelParams,
    pub batch: Batch,
    pub running: RunningClassMeans,
}

/// Random tiny model (d = 6), a 12-sentence batch and a class-mean history
/// built from a separate batch.
pub fn tiny_fixture(tied: bool, seed: u64) -> Fixture {
    let corpus = generate_corpus(&tiny_spec()).unwrap();
    let vocab = corpus.layout().vocab_size();
    assert_eq!(vocab, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(vocab, 6, tied, 0.5, &mut rng);
    let history: Vec<usize> = (12..24).collect();
    let batch_idx: Vec<usize> = (0..12).collect();
    let mut running = RunningClassMeans::new(corpus.layout().sensitive(), 6);
    let hist_batch = corpus.batch(&history);
    let h = forward(&params, &hist_batch).unwrap();
    running.update(h.hidden(), &hist_batch.targets);
    Fixture {
        params,
        batch: corpus.batch(&batch_idx),
        running,
    }
}

pub fn sensitive_subset() -> SubsetSpec {
    tiny_spec().layout().sensitive()
}

fn total(params: &ModelParams, f: &Fixture, alpha: f64) -> f64 {
    let objective = Objective {
        alpha,
        running: &f.running,
        min_class_count: 1,
    };
    evaluate_loss(params, &f.batch, &objective).unwrap().total
}

/// Numerical gradient of every tensor, in `ModelParams::tensors` order.
pub fn numerical_grad(f: &Fixture, alpha: f64) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = f.params.tensors().iter().map(|t| t.2.len()).collect();
    let mut out = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let mut g = vec![0.0; n];
        for (j, gj) in g.iter_mut().enumerate() {
            let mut plus = f.params.clone();
            plus.tensors_mut()[k][j] += STEP;
            let mut minus = f.params.clone();
            minus.tensors_mut()[k][j] -= STEP;
            *gj = (total(&plus, f, alpha) - total(&minus, f, alpha)) / (2.0 * STEP);
        }
        out.push(g);
    }
    out
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst elementwise relative error per tensor: `(name, error)`.
pub fn gradient_errors(f: &Fixture, alpha: f64) -> Vec<(&'static str, f64)> {
    let objective = Objective {
        alpha,
        running: &f.running,
        min_class_count: 1,
    };
    let pass = forward(&f.params, &f.batch).unwrap();
    let (_, grads) = pass
        .backward(&f.params, &f.batch.targets, &objective)
        .unwrap();
    let numeric = numerical_grad(f, alpha);
    grads
        .tensors()
        .iter()
        .zip(&numeric)
        .map(|((name, _, a), n)| {
            let worst = a
                .iter()
                .zip(n)
                .map(|(&x, &y)| relative_error(x, y))
                .fold(0.0, f64::max);
            (*name, worst)
        })
        .collect()
}
