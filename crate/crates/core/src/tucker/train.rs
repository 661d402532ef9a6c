use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array3, Axis, Dimension, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{init_params, select_rows, TrainConfig, TuckerParams, STANDARDIZE_EPS};
use crate::error::{Error, Result};
use crate::kg::{IdTriple, IndexedSplits};
use crate::relation::REVERSE_SUFFIX;

/// One 1-N training example: a `(head, relation)` pair and all its true tails.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub head: usize,
    pub relation: usize,
    pub tails: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub e: Array2<f64>,
    pub r: Array2<f64>,
    pub w: Array3<f64>,
    /// Batch mean and variance of the hidden vector when standardizing.
    pub hidden_stats: Option<(Array1<f64>, Array1<f64>)>,
}

fn mask(rng: &mut impl Rng, shape: (usize, usize), p: f64) -> Option<Array2<f64>> {
    (p > 0.0).then(|| {
        let keep = 1.0 / (1.0 - p);
        Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
    })
}

fn apply_mask(m: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(mask) = mask {
        *m *= mask;
    }
}

/// Numerically stable `-(y ln σ(z) + (1 - y) ln(1 - σ(z)))` together with
/// `σ(z)`, sharing one exponential.
fn bce_and_sigmoid(z: f64, y: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let loss = z.max(0.0) - z * y + e.ln_1p();
    let sig = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    (loss, sig)
}

/// Multi-hot targets smoothed to `(1 - ls) y + ls / n_entities`.
pub(crate) fn smoothed_targets(batch: &[Query<'_>], n_entities: usize, ls: f64) -> Array2<f64> {
    let off = ls / n_entities as f64;
    let mut y = Array2::from_elem((batch.len(), n_entities), off);
    for (bi, q) in batch.iter().enumerate() {
        for &t in q.tails {
            y[[bi, t]] = 1.0 - ls + off;
        }
    }
    y
}

/// Mean label-smoothed BCE over `batch × n_entities` and its exact gradient.
///
/// Dropout masks are drawn from `rng` in the order input, hidden 1, hidden 2.
/// With standardization on, batch statistics are used.
pub fn loss_and_gradients(
    params: &TuckerParams,
    batch: &[Query<'_>],
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(f64, Gradients)> {
    for q in batch {
        params.check_ids(q.head, q.relation)?;
    }
    let b = batch.len();
    let n_e = params.n_entities();
    let (de, dr) = (params.edim(), params.rdim());
    let heads: Vec<usize> = batch.iter().map(|q| q.head).collect();
    let rels: Vec<usize> = batch.iter().map(|q| q.relation).collect();

    let mut x0 = select_rows(&params.e, &heads);
    let m0 = mask(rng, (b, de), config.input_dropout);
    apply_mask(&mut x0, &m0);
    let rb = select_rows(&params.r, &rels);
    let core = params.core_by_relation();
    let mut wm = rb.dot(&core);
    let m1 = mask(rng, (b, de * de), config.hidden_dropout1);
    apply_mask(&mut wm, &m1);

    let mut h = Array2::zeros((b, de));
    for (bi, mut row) in h.axis_iter_mut(Axis(0)).enumerate() {
        let wmb = wm.row(bi).into_shape_with_order((de, de)).expect("contiguous row");
        row.assign(&x0.row(bi).dot(&wmb));
    }

    let standardized = params.standardizer.is_some().then(|| {
        let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
        let var = h.var_axis(Axis(0), 0.0);
        let inv_std = var.mapv(|v| 1.0 / (v + STANDARDIZE_EPS).sqrt());
        let hs = (&h - &mean) * &inv_std;
        (hs, mean, var, inv_std)
    });
    let mut h2 = match &standardized {
        Some((hs, ..)) => hs.clone(),
        None => h.clone(),
    };
    let m2 = mask(rng, (b, de), config.hidden_dropout2);
    apply_mask(&mut h2, &m2);

    let z = h2.dot(&params.e.t());
    let y = smoothed_targets(batch, n_e, config.label_smoothing);

    let scale = 1.0 / (b * n_e) as f64;
    let mut loss = 0.0;
    let mut dz = Array2::zeros((b, n_e));
    Zip::from(&mut dz).and(&z).and(&y).for_each(|d, &zz, &yy| {
        let (l, sig) = bce_and_sigmoid(zz, yy);
        loss += l;
        *d = (sig - yy) * scale;
    });
    loss *= scale;

    let mut de_grad = dz.t().dot(&h2);
    let mut dh = dz.dot(&params.e);
    apply_mask(&mut dh, &m2);
    if let Some((hs, _, _, inv_std)) = &standardized {
        let mean_d = dh.mean_axis(Axis(0)).expect("non-empty batch");
        let mean_dh = (&dh * hs).mean_axis(Axis(0)).expect("non-empty batch");
        dh = (&dh - &mean_d - hs * &mean_dh) * inv_std;
    }

    let mut dx0 = Array2::zeros((b, de));
    let mut dwm = Array2::zeros((b, de * de));
    for bi in 0..b {
        let wmb = wm.row(bi).into_shape_with_order((de, de)).expect("contiguous row");
        dx0.row_mut(bi).assign(&wmb.dot(&dh.row(bi)));
        let mut g = dwm
            .row_mut(bi)
            .into_shape_with_order((de, de))
            .expect("contiguous row");
        let (xr, dhr) = (x0.row(bi), dh.row(bi));
        for (i, mut gi) in g.axis_iter_mut(Axis(0)).enumerate() {
            gi.zip_mut_with(&dhr, |a, &d| *a = xr[i] * d);
        }
    }
    apply_mask(&mut dwm, &m1);
    apply_mask(&mut dx0, &m0);
    for (bi, &hd) in heads.iter().enumerate() {
        let mut row = de_grad.row_mut(hd);
        row += &dx0.row(bi);
    }

    let drb = dwm.dot(&core.t());
    let mut dr_grad = Array2::zeros((params.n_relations(), dr));
    for (bi, &r) in rels.iter().enumerate() {
        let mut row = dr_grad.row_mut(r);
        row += &drb.row(bi);
    }
    let dw = rb
        .t()
        .dot(&dwm)
        .into_shape_with_order((dr, de, de))
        .expect("dr * de * de entries")
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned();

    Ok((
        loss,
        Gradients {
            e: de_grad,
            r: dr_grad,
            w: dw,
            hidden_stats: standardized.map(|(_, m, v, _)| (m, v)),
        },
    ))
}

struct Moments<D: Dimension> {
    m: ndarray::Array<f64, D>,
    v: ndarray::Array<f64, D>,
}

impl<D: Dimension> Moments<D> {
    fn like(a: &ndarray::Array<f64, D>) -> Self {
        Self {
            m: ndarray::Array::zeros(a.raw_dim()),
            v: ndarray::Array::zeros(a.raw_dim()),
        }
    }

    fn step(&mut self, p: &mut ndarray::Array<f64, D>, g: &ndarray::Array<f64, D>, lr: f64, t: i32) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let c1 = 1.0 - B1.powi(t);
        let c2 = 1.0 - B2.powi(t);
        Zip::from(p)
            .and(g)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|p, &g, m, v| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            });
    }
}

struct Adam {
    e: Moments<ndarray::Ix2>,
    r: Moments<ndarray::Ix2>,
    w: Moments<ndarray::Ix3>,
    t: i32,
}

impl Adam {
    fn new(p: &TuckerParams) -> Self {
        Self {
            e: Moments::like(&p.e),
            r: Moments::like(&p.r),
            w: Moments::like(&p.w),
            t: 0,
        }
    }

    fn step(&mut self, p: &mut TuckerParams, g: &Gradients, lr: f64) {
        self.t += 1;
        self.e.step(&mut p.e, &g.e, lr, self.t);
        self.r.step(&mut p.r, &g.r, lr, self.t);
        self.w.step(&mut p.w, &g.w, lr, self.t);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TuckerParams,
    /// Mean batch loss per epoch.
    pub losses: Vec<f64>,
}

/// Trains on the (reverse-augmented) training split.
pub fn train(splits: &IndexedSplits, config: &TrainConfig) -> Result<TrainOutcome> {
    if !splits
        .relations
        .names()
        .iter()
        .any(|r| r.ends_with(REVERSE_SUFFIX))
    {
        log::warn!("training split has no reverse relations; was augmentation skipped?");
    }
    train_on(
        &splits.train,
        splits.entities.len(),
        splits.relations.len(),
        config,
    )
}

pub fn train_on(
    triples: &[IdTriple],
    n_entities: usize,
    n_relations: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if triples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut params = init_params(n_entities, n_relations, config, config.seed)?;
    let mut tails: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in triples {
        if t.head >= n_entities || t.tail >= n_entities {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id: t.head.max(t.tail),
                size: n_entities,
            });
        }
        tails.entry((t.head, t.relation)).or_default().push(t.tail);
    }
    let pairs: Vec<((usize, usize), Vec<usize>)> = tails
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_unstable();
            v.dedup();
            (k, v)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = Adam::new(&params);
    let mut lr = config.lr;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Query> = chunk
                .iter()
                .map(|&i| Query {
                    head: pairs[i].0 .0,
                    relation: pairs[i].0 .1,
                    tails: &pairs[i].1,
                })
                .collect();
            let (loss, grads) = loss_and_gradients(&params, &batch, config, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            if let (Some(s), Some((m, v))) = (&mut params.standardizer, &grads.hidden_stats) {
                s.update(m, v);
            }
            adam.step(&mut params, &grads, lr);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}, lr {lr:.6}");
        losses.push(mean);
        lr *= config.decay_rate;
    }
    Ok(TrainOutcome { params, losses })
}
