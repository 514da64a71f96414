use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{generate_corpus, Batch, Corpus, SensitiveGroup, SyntheticCorpusSpec};
use super::model::{forward, ModelParams, Objective};
use super::optim::Adam;
use super::running::RunningClassMeans;
use super::TrainError;
use crate::array_io::{write_array, DenseArray, SubsetSpec};
use crate::class_stats::ClassStatsAccumulator;
use crate::json::ser_f64;
use crate::nc_metrics::{nc_report, NcReport};

/// Regularizer weights offered for sweeps.
pub const ALPHA_SWEEP: [f64; 6] = [1.0, 3.0, 5.0, 10.0, 30.0, 50.0];

/// XOR-ed into the training corpus seed to obtain the held-out corpus seed.
const EVAL_SEED_SALT: u64 = 0x5EED_E7A1_0000_0001;

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dim: usize,
    pub tied: bool,
    pub min_class_count: u64,
    /// Regularized token ids; `None` means both sensitive groups.
    pub subset: Option<Vec<usize>>,
    pub reset_means_per_epoch: bool,
    pub init_std: f64,
    /// Size of the held-out corpus used for accuracy and stereotype preference.
    pub eval_sentences: usize,
    pub corpus: SyntheticCorpusSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 3.0,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            dim: 16,
            tied: true,
            min_class_count: 1,
            subset: None,
            reset_means_per_epoch: false,
            init_std: 0.02,
            eval_sentences: 1000,
            corpus: SyntheticCorpusSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Default config with both the corpus and the training seed set to `seed`.
    pub fn seeded(seed: u64) -> Self {
        let mut c = TrainConfig {
            seed,
            ..Default::default()
        };
        c.corpus.seed = seed;
        c
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.min_class_count == 0 {
            return bad("min_class_count must be >= 1".into());
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad(format!(
                "init_std must be finite and >= 0, got {}",
                self.init_std
            ));
        }
        if self.eval_sentences == 0 {
            return bad("eval_sentences must be >= 1".into());
        }
        self.corpus.validate()
    }

    /// The regularized subset, bound to the corpus vocabulary.
    pub fn regularized_subset(&self) -> Result<SubsetSpec, TrainError> {
        let layout = self.corpus.layout();
        let subset = match &self.subset {
            None => layout.sensitive(),
            Some(ids) => SubsetSpec::new(ids.clone(), "config")?,
        };
        subset.bind(layout.vocab_size())?;
        Ok(subset)
    }

    /// Spec of the held-out corpus: same layout and skew, derived seed.
    pub fn eval_corpus_spec(&self) -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            num_sentences: self.eval_sentences,
            seed: self.corpus.seed ^ EVAL_SEED_SALT,
            ..self.corpus.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Means over the epoch's optimizer steps.
    #[serde(serialize_with = "ser_f64")]
    pub loss_mlm: f64,
    #[serde(serialize_with = "ser_f64")]
    pub loss_nc3: f64,
    #[serde(serialize_with = "ser_f64")]
    pub loss_total: f64,
    pub nc3_skipped_steps: usize,
    /// Collapse metrics on the regularized subset, from a frozen pass over
    /// the training corpus.
    pub report: NcReport,
    #[serde(serialize_with = "ser_f64")]
    pub stereotype_preference: f64,
    /// Percent of held-out masked slots predicted exactly.
    #[serde(serialize_with = "ser_f64")]
    pub masked_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub initial_params: ModelParams,
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// Final-model logits on the held-out corpus, `n x C`.
    pub logits: Vec<f64>,
    pub logit_labels: Vec<usize>,
}

impl RunArtifacts {
    pub fn final_epoch(&self) -> Option<&EpochLog> {
        self.log.last()
    }

    /// Writes `params/*.npy`, `metrics.jsonl`, `config.json`,
    /// `corpus_spec.json`, `logits.npy` and `logit_labels.npy`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| TrainError::Io { path, source }
        };
        let params_dir = dir.join("params");
        fs::create_dir_all(&params_dir).map_err(io(&params_dir))?;
        for (name, shape, data) in self.params.tensors() {
            let arr = DenseArray::from_f64(shape, data.to_vec())?;
            write_array(&arr, params_dir.join(format!("{name}.npy")))?;
        }

        let mut lines = String::new();
        for entry in &self.log {
            lines.push_str(&serde_json::to_string(entry).expect("log serializes"));
            lines.push('\n');
        }
        let p = dir.join("metrics.jsonl");
        fs::write(&p, lines).map_err(io(&p))?;

        let p = dir.join("config.json");
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        fs::write(&p, text + "\n").map_err(io(&p))?;
        let p = dir.join("corpus_spec.json");
        let text = serde_json::to_string_pretty(&self.config.corpus).expect("spec serializes");
        fs::write(&p, text + "\n").map_err(io(&p))?;

        let n = self.logit_labels.len();
        let logits = DenseArray::from_f64(vec![n, self.params.vocab_size], self.logits.clone())?;
        write_array(&logits, dir.join("logits.npy"))?;
        write_array(
            &DenseArray::from_labels(&self.logit_labels),
            dir.join("logit_labels.npy"),
        )?;
        Ok(())
    }
}

/// Forward over `corpus` in chunks, returning `(hidden, logits)`.
fn predict(params: &ModelParams, corpus: &Corpus) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let mut hidden = Vec::with_capacity(corpus.len() * params.dim);
    let mut logits = Vec::with_capacity(corpus.len() * params.vocab_size);
    let idx: Vec<usize> = (0..corpus.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (h, l) = forward(params, &corpus.batch(chunk))?.into_parts();
        hidden.extend(h);
        logits.extend(l);
    }
    Ok((hidden, logits))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn softmax_group_masses(
    row: &[f64],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (f64, f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass = |r: std::ops::Range<usize>| row[r].iter().map(|&z| (z - max).exp()).sum::<f64>();
    (mass(a), mass(b))
}

/// Percent of masked slots whose arg-max prediction is the gold token.
pub fn masked_accuracy(params: &ModelParams, batch: &Batch) -> Result<f64, TrainError> {
    let (_, logits) = forward(params, batch)?.into_parts();
    let c = params.vocab_size;
    if batch.targets.len() != batch.rows() {
        return Err(TrainError::TargetMismatch {
            rows: batch.rows(),
            targets: batch.targets.len(),
        });
    }
    let hits = batch
        .targets
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(&logits[i * c..(i + 1) * c]) == y)
        .count();
    Ok(100.0 * hits as f64 / batch.rows() as f64)
}

fn preference_from_logits(logits: &[f64], c: usize, corpus: &Corpus) -> f64 {
    let layout = corpus.layout();
    let mut share_a = vec![0.0; layout.num_contexts];
    let mut seen = vec![0usize; layout.num_contexts];
    for (i, &ctx) in corpus.contexts.iter().enumerate() {
        let (pa, pb) = softmax_group_masses(
            &logits[i * c..(i + 1) * c],
            layout.group_range(SensitiveGroup::A),
            layout.group_range(SensitiveGroup::B),
        );
        share_a[ctx] += pa / (pa + pb);
        seen[ctx] += 1;
    }
    let mut total = 0.0;
    let mut used = 0;
    for (s, &n) in share_a.iter().zip(&seen) {
        if n > 0 {
            let p = s / n as f64;
            total += p.max(1.0 - p);
            used += 1;
        }
    }
    total / used as f64
}

/// Mean over the corpus's contexts of the larger of the two groups' shares
/// of the masked slot's sensitive probability mass. 0.5 means no preference.
pub fn stereotype_preference(params: &ModelParams, corpus: &Corpus) -> Result<f64, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let (_, logits) = predict(params, corpus)?;
    Ok(preference_from_logits(&logits, params.vocab_size, corpus))
}

struct Evaluation {
    report: NcReport,
    preference: f64,
    accuracy: f64,
    logits: Vec<f64>,
}

fn evaluate(
    params: &ModelParams,
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    subset: &SubsetSpec,
) -> Result<Evaluation, TrainError> {
    let (hidden, _) = predict(params, train_corpus)?;
    let mut acc = ClassStatsAccumulator::new(params.vocab_size, params.dim);
    acc.accumulate_rows(&hidden, &train_corpus.gold)?;
    let reps = DenseArray::from_f64(vec![train_corpus.len(), params.dim], hidden)?;
    let labels = DenseArray::from_labels(&train_corpus.gold);
    let report = nc_report(
        &acc,
        &params.weight_matrix(),
        subset,
        Some((&reps, &labels)),
    )?;

    let (_, logits) = predict(params, eval_corpus)?;
    let c = params.vocab_size;
    let hits = eval_corpus
        .gold
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(&logits[i * c..(i + 1) * c]) == y)
        .count();
    Ok(Evaluation {
        report,
        preference: preference_from_logits(&logits, c, eval_corpus),
        accuracy: 100.0 * hits as f64 / eval_corpus.len() as f64,
        logits,
    })
}

/// Trains on `corpus` with Adam, evaluating after every epoch.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<RunArtifacts, TrainError> {
    config.validate()?;
    if corpus.spec != config.corpus {
        return Err(TrainError::Config(
            "corpus was not generated from this config's corpus spec".into(),
        ));
    }
    if corpus.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let subset = config.regularized_subset()?;
    let eval_corpus = generate_corpus(&config.eval_corpus_spec())?;
    let vocab = corpus.layout().vocab_size();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = ModelParams::init(vocab, config.dim, config.tied, config.init_std, &mut rng);
    let mut params = initial.clone();
    let mut adam = Adam::new(
        &params,
        config.lr,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut running = RunningClassMeans::new(subset.clone(), config.dim);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut last_logits = None;

    for epoch in 0..config.epochs {
        if config.reset_means_per_epoch {
            running.reset();
        }
        order.shuffle(&mut rng);
        let (mut sum_mlm, mut sum_nc3, mut sum_total) = (0.0, 0.0, 0.0);
        let mut skipped = 0;
        let steps = order.len().div_ceil(config.batch_size);
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = corpus.batch(idx);
            let pass = forward(&params, &batch)?;
            let hidden = pass.hidden().to_vec();
            let objective = Objective {
                alpha: config.alpha,
                running: &running,
                min_class_count: config.min_class_count,
            };
            let (loss, grads) = pass.backward(&params, &batch.targets, &objective)?;
            if !loss.mlm.is_finite() || !loss.nc3.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    loss_mlm: loss.mlm,
                    loss_nc3: loss.nc3,
                });
            }
            adam.step(&mut params, &grads);
            if !params.all_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    loss_mlm: loss.mlm,
                    loss_nc3: loss.nc3,
                });
            }
            running.update(&hidden, &batch.targets);
            sum_mlm += loss.mlm;
            sum_nc3 += loss.nc3;
            sum_total += loss.total;
            skipped += usize::from(loss.nc3_skipped);
        }
        let eval = evaluate(&params, corpus, &eval_corpus, &subset)?;
        let n = steps as f64;
        log.push(EpochLog {
            epoch: epoch + 1,
            loss_mlm: sum_mlm / n,
            loss_nc3: sum_nc3 / n,
            loss_total: sum_total / n,
            nc3_skipped_steps: skipped,
            report: eval.report,
            stereotype_preference: eval.preference,
            masked_accuracy: eval.accuracy,
        });
        last_logits = Some(eval.logits);
    }

    let logits = match last_logits {
        Some(l) => l,
        None => predict(&params, &eval_corpus)?.1,
    };
    Ok(RunArtifacts {
        config: config.clone(),
        initial_params: initial,
        params,
        log,
        logits,
        logit_labels: eval_corpus.gold.clone(),
    })
}

/// Generates the configured corpus and trains on it.
pub fn run(config: &TrainConfig) -> Result<RunArtifacts, TrainError> {
    config.validate()?;
    let corpus = generate_corpus(&config.corpus)?;
    train(config, &corpus)
}
