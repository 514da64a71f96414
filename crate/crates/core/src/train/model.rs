use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::corpus::{Batch, MASK, PAD};
use super::loss::{mlm_with_grad, nc3_with_grad};
use super::running::RunningClassMeans;
use super::TrainError;
use crate::nc_metrics::WeightMatrix;

/// Parameters of the pooled-context MLP language model. Matrices are
/// row-major; `mlp_w1` maps `x` to `z = W1 x + b1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub vocab_size: usize,
    pub dim: usize,
    /// `C x d` input embeddings, also the classifier when tied.
    pub embeddings: Vec<f64>,
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Vec<f64>,
    pub mlp_b2: Vec<f64>,
    pub out_bias: Vec<f64>,
    /// Separate `C x d` classifier; `None` means tied to `embeddings`.
    pub out_weights: Option<Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, dim: usize, tied: bool) -> Self {
        ModelParams {
            vocab_size,
            dim,
            embeddings: vec![0.0; vocab_size * dim],
            mlp_w1: vec![0.0; dim * dim],
            mlp_b1: vec![0.0; dim],
            mlp_w2: vec![0.0; dim * dim],
            mlp_b2: vec![0.0; dim],
            out_bias: vec![0.0; vocab_size],
            out_weights: (!tied).then(|| vec![0.0; vocab_size * dim]),
        }
    }

    /// Gaussian(0, std) matrices and zero biases.
    pub fn init<R: Rng + ?Sized>(
        vocab_size: usize,
        dim: usize,
        tied: bool,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("init std must be finite and non-negative");
        let mut p = Self::zeros(vocab_size, dim, tied);
        for v in p
            .embeddings
            .iter_mut()
            .chain(&mut p.mlp_w1)
            .chain(&mut p.mlp_w2)
        {
            *v = normal.sample(rng);
        }
        if let Some(w) = &mut p.out_weights {
            w.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        p
    }

    pub fn is_tied(&self) -> bool {
        self.out_weights.is_none()
    }

    /// Classifier rows `w_c`, `C x d`.
    pub fn classifier(&self) -> &[f64] {
        self.out_weights.as_deref().unwrap_or(&self.embeddings)
    }

    fn classifier_mut(&mut self) -> &mut [f64] {
        match &mut self.out_weights {
            Some(w) => w,
            None => &mut self.embeddings,
        }
    }

    /// Untied model with the classifier initialised from the embeddings, so
    /// its outputs match the tied original exactly.
    pub fn untied_copy(&self) -> Self {
        let mut p = self.clone();
        p.out_weights = Some(self.classifier().to_vec());
        p
    }

    pub fn weight_matrix(&self) -> WeightMatrix {
        WeightMatrix::new(
            self.vocab_size,
            self.dim,
            self.classifier().to_vec(),
            Some(self.out_bias.clone()),
        )
        .expect("parameter shapes are consistent")
    }

    /// Named tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let (c, d) = (self.vocab_size, self.dim);
        let mut t = vec![
            ("embeddings", vec![c, d], self.embeddings.as_slice()),
            ("mlp_w1", vec![d, d], &self.mlp_w1),
            ("mlp_b1", vec![d], &self.mlp_b1),
            ("mlp_w2", vec![d, d], &self.mlp_w2),
            ("mlp_b2", vec![d], &self.mlp_b2),
            ("out_bias", vec![c], &self.out_bias),
        ];
        if let Some(w) = &self.out_weights {
            t.push(("out_weights", vec![c, d], w));
        }
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = vec![
            &mut self.embeddings,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
            &mut self.out_bias,
        ];
        if let Some(w) = &mut self.out_weights {
            t.push(w);
        }
        t
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

/// Activations of one batch. Consumed by [`ForwardPass::backward`], so a
/// pass cannot be differentiated twice.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    rows: usize,
    /// Visible context tokens of each row.
    visible: Vec<Vec<usize>>,
    pooled: Vec<f64>,
    activ: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl ForwardPass {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Masked-position representations `h`, `rows x d`.
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// `rows x C`.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.hidden, self.logits)
    }
}

fn matvec(m: &[f64], v: &[f64], bias: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = bias[i]
            + m[i * d..(i + 1) * d]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum::<f64>();
    }
}

/// `out += M^T v` for row-major `M` of shape `v.len() x out.len()`.
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = out.len();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(&m[i * d..(i + 1) * d]) {
            *o += mij * vi;
        }
    }
}

fn outer_add(g: &mut [f64], u: &[f64], v: &[f64]) {
    let d = v.len();
    for (i, &ui) in u.iter().enumerate() {
        for (gij, &vj) in g[i * d..(i + 1) * d].iter_mut().zip(v) {
            *gij += ui * vj;
        }
    }
}

pub fn forward(params: &ModelParams, batch: &Batch) -> Result<ForwardPass, TrainError> {
    let (c, d) = (params.vocab_size, params.dim);
    let n = batch.rows();
    if n == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let mut visible = Vec::with_capacity(n);
    let mut pooled = vec![0.0; n * d];
    let mut activ = vec![0.0; n * d];
    let mut hidden = vec![0.0; n * d];
    let mut logits = vec![0.0; n * c];
    let classifier = params.classifier();
    let mut z = vec![0.0; d];
    for i in 0..n {
        let mut ids = Vec::new();
        for &t in batch.row(i) {
            if t as usize >= c {
                return Err(TrainError::TokenOutOfRange {
                    token: t,
                    vocab_size: c,
                });
            }
            if t != MASK && t != PAD {
                ids.push(t as usize);
            }
        }
        let x = &mut pooled[i * d..(i + 1) * d];
        for &t in &ids {
            for (xj, &e) in x.iter_mut().zip(&params.embeddings[t * d..(t + 1) * d]) {
                *xj += e;
            }
        }
        if !ids.is_empty() {
            let k = ids.len() as f64;
            x.iter_mut().for_each(|v| *v /= k);
        }
        matvec(&params.mlp_w1, x, &params.mlp_b1, &mut z);
        let a = &mut activ[i * d..(i + 1) * d];
        for (aj, &zj) in a.iter_mut().zip(&z) {
            *aj = zj.tanh();
        }
        let h = &mut hidden[i * d..(i + 1) * d];
        matvec(&params.mlp_w2, a, &params.mlp_b2, h);
        matvec(
            classifier,
            h,
            &params.out_bias,
            &mut logits[i * c..(i + 1) * c],
        );
        visible.push(ids);
    }
    Ok(ForwardPass {
        rows: n,
        visible,
        pooled,
        activ,
        hidden,
        logits,
    })
}

/// What the training loss is made of.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub alpha: f64,
    /// Class-mean history for the regularizer, not yet including this batch.
    pub running: &'a RunningClassMeans,
    pub min_class_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mlm: f64,
    pub nc3: f64,
    pub nc3_skipped: bool,
    /// `mlm + alpha * nc3`.
    pub total: f64,
}

fn check_targets(rows: usize, vocab: usize, targets: &[usize]) -> Result<(), TrainError> {
    if targets.len() != rows {
        return Err(TrainError::TargetMismatch {
            rows,
            targets: targets.len(),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= vocab) {
        return Err(TrainError::TargetOutOfRange {
            target: t,
            vocab_size: vocab,
        });
    }
    Ok(())
}

impl ForwardPass {
    /// Loss and its gradient with respect to every parameter tensor. The
    /// gradient has the same layout (and tying) as `params`.
    pub fn backward(
        self,
        params: &ModelParams,
        targets: &[usize],
        objective: &Objective<'_>,
    ) -> Result<(LossBreakdown, ModelParams), TrainError> {
        let (c, d, n) = (params.vocab_size, params.dim, self.rows);
        check_targets(n, c, targets)?;
        let (mlm, dlogits) = mlm_with_grad(&self.logits, c, targets, true)?;
        let want_nc3_grad = objective.alpha != 0.0;
        let (nc3, nc3_grad) = nc3_with_grad(
            &self.hidden,
            targets,
            objective.running,
            params.classifier(),
            objective.min_class_count,
            want_nc3_grad,
        )?;
        let breakdown = LossBreakdown {
            mlm,
            nc3: nc3.value,
            nc3_skipped: nc3.skipped,
            total: mlm + objective.alpha * nc3.value,
        };

        let mut grads = ModelParams::zeros(c, d, params.is_tied());
        let classifier = params.classifier();
        let mut dh = vec![0.0; n * d];
        {
            let g_cls = grads.classifier_mut();
            for i in 0..n {
                let dl = &dlogits[i * c..(i + 1) * c];
                let h = &self.hidden[i * d..(i + 1) * d];
                outer_add(g_cls, dl, h);
                matvec_t_add(classifier, dl, &mut dh[i * d..(i + 1) * d]);
            }
            if let Some(g) = nc3_grad.as_ref().filter(|_| want_nc3_grad) {
                let alpha = objective.alpha;
                for (dhv, &gv) in dh.iter_mut().zip(&g.hidden) {
                    *dhv += alpha * gv;
                }
                for (class, gw) in &g.weights {
                    for (dst, &v) in g_cls[class * d..(class + 1) * d].iter_mut().zip(gw) {
                        *dst += alpha * v;
                    }
                }
            }
        }
        for i in 0..n {
            for (gb, &v) in grads.out_bias.iter_mut().zip(&dlogits[i * c..(i + 1) * c]) {
                *gb += v;
            }
        }

        let mut da = vec![0.0; d];
        let mut dx = vec![0.0; d];
        for i in 0..n {
            let dhi = &dh[i * d..(i + 1) * d];
            let a = &self.activ[i * d..(i + 1) * d];
            let x = &self.pooled[i * d..(i + 1) * d];
            outer_add(&mut grads.mlp_w2, dhi, a);
            grads.mlp_b2.iter_mut().zip(dhi).for_each(|(g, &v)| *g += v);
            da.fill(0.0);
            matvec_t_add(&params.mlp_w2, dhi, &mut da);
            for (daj, &aj) in da.iter_mut().zip(a) {
                *daj *= 1.0 - aj * aj;
            }
            outer_add(&mut grads.mlp_w1, &da, x);
            grads.mlp_b1.iter_mut().zip(&da).for_each(|(g, &v)| *g += v);
            let ids = &self.visible[i];
            if ids.is_empty() {
                continue;
            }
            dx.fill(0.0);
            matvec_t_add(&params.mlp_w1, &da, &mut dx);
            let k = ids.len() as f64;
            for &t in ids {
                for (g, &v) in grads.embeddings[t * d..(t + 1) * d].iter_mut().zip(&dx) {
                    *g += v / k;
                }
            }
        }
        Ok((breakdown, grads))
    }
}

/// Loss without gradients.
pub fn evaluate_loss(
    params: &ModelParams,
    batch: &Batch,
    objective: &Objective<'_>,
) -> Result<LossBreakdown, TrainError> {
    let pass = forward(params, batch)?;
    check_targets(pass.rows, params.vocab_size, &batch.targets)?;
    let (mlm, _) = mlm_with_grad(&pass.logits, params.vocab_size, &batch.targets, false)?;
    let (nc3, _) = nc3_with_grad(
        &pass.hidden,
        &batch.targets,
        objective.running,
        params.classifier(),
        objective.min_class_count,
        false,
    )?;
    Ok(LossBreakdown {
        mlm,
        nc3: nc3.value,
        nc3_skipped: nc3.skipped,
        total: mlm + objective.alpha * nc3.value,
    })
}
