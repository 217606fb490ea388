//! Linear heads over frozen embeddings: a binary detector (score
//! above zero flags the input) and a multinomial threat classifier,
//! both fit by l2-regularized cross entropy, which keeps the training
//! problem convex with a unique solution for lambda > 0.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{minimize, Objective, SolveResult, SolverConfig};

#[derive(Clone, Debug)]
pub struct LabeledEmbeddingSet {
    pub embeddings: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledEmbeddingSet {
    pub fn new(embeddings: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if embeddings.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} embedding rows but {} labels",
                embeddings.nrows(),
                labels.len()
            )));
        }
        if embeddings.nrows() == 0 || embeddings.ncols() == 0 {
            return Err(Error::invalid("embedding set is empty"));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embeddings contain a non-finite value"));
        }
        Ok(LabeledEmbeddingSet { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    fn check_detection(&self) -> Result<()> {
        let mut seen = [false, false];
        for &l in &self.labels {
            if l > 1 {
                return Err(Error::invalid(format!("detection label {l} is not 0/1")));
            }
            seen[l] = true;
        }
        if !seen[0] || !seen[1] {
            return Err(Error::invalid(
                "detection training needs both clean and adversarial samples",
            ));
        }
        Ok(())
    }

    fn check_classification(&self, classes: usize) -> Result<()> {
        if classes < 2 {
            return Err(Error::invalid("classification needs at least two classes"));
        }
        let mut seen = vec![false; classes];
        for &l in &self.labels {
            if l >= classes {
                return Err(Error::invalid(format!(
                    "label {l} out of range for {classes} classes"
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "class {missing} has no training samples"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossScaling {
    Sum,
    Mean,
}

/// Cross entropy over a linear map of the embeddings plus an l2
/// penalty. `classes == 1` is the binary detector (one score row,
/// sigmoid likelihood); `classes >= 2` is multinomial softmax.
/// Parameters are flattened as W row-major followed by b.
pub struct LogisticObjective<'a> {
    pub data: &'a LabeledEmbeddingSet,
    pub classes: usize,
    pub lambda: f64,
    pub regularize_bias: bool,
    pub scaling: LossScaling,
}

impl LogisticObjective<'_> {
    pub fn param_len(&self) -> usize {
        self.classes * self.data.dim() + self.classes
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl Objective for LogisticObjective<'_> {
    fn eval(&self, x: &ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let d = self.data.dim();
        let k = self.classes;
        let n = self.data.len();
        if x.len() != self.param_len() {
            return Err(Error::shape(format!(
                "parameter vector has {} entries, expected {}",
                x.len(),
                self.param_len()
            )));
        }
        let w = x
            .slice(ndarray::s![..k * d])
            .to_shape((k, d))
            .map_err(|e| Error::shape(e.to_string()))?
            .to_owned();
        let b = x.slice(ndarray::s![k * d..]).to_owned();
        let mut data_loss = 0.0;
        let mut gw = Array2::<f64>::zeros((k, d));
        let mut gb = Array1::<f64>::zeros(k);
        if k == 1 {
            let scores = self.data.embeddings.dot(&w.row(0)) + b[0];
            let mut gs = Array1::<f64>::zeros(n);
            for i in 0..n {
                let s = scores[i];
                let y = self.data.labels[i] as f64;
                // softplus(s) - y*s, computed without overflow
                data_loss += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
                gs[i] = sigmoid(s) - y;
            }
            gw.row_mut(0).assign(&gs.dot(&self.data.embeddings));
            gb[0] = gs.sum();
        } else {
            let z = self.data.embeddings.dot(&w.t()) // n x k
                + &b.view().insert_axis(Axis(0));
            let mut gz = Array2::<f64>::zeros((n, k));
            for i in 0..n {
                let row = z.row(i);
                let y = self.data.labels[i];
                if y >= k {
                    return Err(Error::invalid(format!(
                        "label {y} out of range for {k} classes"
                    )));
                }
                let lse = crate::nn::log_sum_exp(&row);
                data_loss += lse - row[y];
                for c in 0..k {
                    gz[[i, c]] = (row[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                }
            }
            gw.assign(&gz.t().dot(&self.data.embeddings));
            gb.assign(&gz.sum_axis(Axis(0)));
        }
        if let LossScaling::Mean = self.scaling {
            let inv = 1.0 / n as f64;
            data_loss *= inv;
            gw.mapv_inplace(|v| v * inv);
            gb.mapv_inplace(|v| v * inv);
        }
        let mut loss = data_loss + self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        gw.zip_mut_with(&w, |g, &wv| *g += 2.0 * self.lambda * wv);
        if self.regularize_bias {
            loss += self.lambda * b.iter().map(|v| v * v).sum::<f64>();
            gb.zip_mut_with(&b, |g, &bv| *g += 2.0 * self.lambda * bv);
        }
        let mut grad = Array1::zeros(x.len());
        grad.slice_mut(ndarray::s![..k * d])
            .assign(&Array1::from_iter(gw.iter().cloned()));
        grad.slice_mut(ndarray::s![k * d..]).assign(&gb);
        Ok((loss, grad))
    }
}

#[derive(Clone, Debug)]
pub struct LinearHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub lambda: f64,
    pub regularize_bias: bool,
}

impl LinearHead {
    pub fn classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn score(&self, e: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if e.len() != self.dim() {
            return Err(Error::shape(format!(
                "head expects {}-dim embeddings, got {}",
                self.dim(),
                e.len()
            )));
        }
        Ok(self.weight.dot(e) + &self.bias)
    }

    /// Detector decision: 1 when the score is strictly positive.
    pub fn detect(&self, e: &ArrayView1<f64>) -> Result<usize> {
        if self.classes() != 1 {
            return Err(Error::invalid("detect needs a single-score head"));
        }
        Ok((self.score(e)?[0] > 0.0) as usize)
    }

    /// Class decision: argmax score, ties to the lowest index.
    pub fn classify(&self, e: &ArrayView1<f64>) -> Result<usize> {
        if self.classes() < 2 {
            return Err(Error::invalid("classify needs a multi-class head"));
        }
        let s = self.score(e)?;
        Ok(crate::encoders::argmax(&s.view()))
    }

    pub fn flat(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.weight.len() + self.bias.len());
        out.extend(self.weight.iter());
        out.extend(self.bias.iter());
        Array1::from_vec(out)
    }

    pub fn from_flat(
        flat: &ArrayView1<f64>,
        classes: usize,
        dim: usize,
        lambda: f64,
        regularize_bias: bool,
    ) -> Result<Self> {
        if flat.len() != classes * dim + classes {
            return Err(Error::shape(format!(
                "flat head has {} entries, expected {}",
                flat.len(),
                classes * dim + classes
            )));
        }
        let weight = flat
            .slice(ndarray::s![..classes * dim])
            .to_shape((classes, dim))
            .map_err(|e| Error::shape(e.to_string()))?
            .to_owned();
        let bias = flat.slice(ndarray::s![classes * dim..]).to_owned();
        Ok(LinearHead { weight, bias, lambda, regularize_bias })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &HeadJson::from(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let j: HeadJson = serde_json::from_reader(BufReader::new(f))?;
        j.into_head()
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
    }
}

/// On-disk head layout: dimensions up front, weights as one row-major
/// array.
#[derive(Serialize, Deserialize)]
struct HeadJson {
    k: usize,
    d: usize,
    lambda: f64,
    regularize_bias: bool,
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
}

impl From<&LinearHead> for HeadJson {
    fn from(h: &LinearHead) -> Self {
        HeadJson {
            k: h.classes(),
            d: h.dim(),
            lambda: h.lambda,
            regularize_bias: h.regularize_bias,
            w: h.weight.iter().cloned().collect(),
            b: h.bias.to_vec(),
        }
    }
}

impl HeadJson {
    fn into_head(self) -> Result<LinearHead> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        if self.w.len() != self.k * self.d || self.b.len() != self.k {
            return Err(Error::shape(format!(
                "head arrays disagree with k={} d={}",
                self.k, self.d
            )));
        }
        if self.w.iter().chain(self.b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("head contains a non-finite value"));
        }
        Ok(LinearHead {
            weight: Array2::from_shape_vec((self.k, self.d), self.w)
                .map_err(|e| Error::shape(e.to_string()))?,
            bias: Array1::from_vec(self.b),
            lambda: self.lambda,
            regularize_bias: self.regularize_bias,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub lambda: f64,
    pub regularize_bias: bool,
    pub scaling: LossScaling,
    pub solver: SolverConfig,
    pub init: Option<Array1<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda: 1.0,
            regularize_bias: true,
            scaling: LossScaling::Sum,
            solver: SolverConfig::default(),
            init: None,
        }
    }
}

pub struct FitOutcome {
    pub head: LinearHead,
    pub solve: SolveResult,
}

fn fit(
    data: &LabeledEmbeddingSet,
    classes: usize,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    if cfg.lambda < 0.0 {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let obj = LogisticObjective {
        data,
        classes,
        lambda: cfg.lambda,
        regularize_bias: cfg.regularize_bias,
        scaling: cfg.scaling,
    };
    let x0 = match &cfg.init {
        Some(x) => {
            if x.len() != obj.param_len() {
                return Err(Error::shape(format!(
                    "init has {} entries, expected {}",
                    x.len(),
                    obj.param_len()
                )));
            }
            x.clone()
        }
        None => Array1::zeros(obj.param_len()),
    };
    let solve = minimize(&obj, x0, &cfg.solver)?;
    let head = LinearHead::from_flat(
        &solve.x.view(),
        classes,
        data.dim(),
        cfg.lambda,
        cfg.regularize_bias,
    )?;
    Ok(FitOutcome { head, solve })
}

pub fn fit_detector(data: &LabeledEmbeddingSet, cfg: &FitConfig) -> Result<FitOutcome> {
    data.check_detection()?;
    fit(data, 1, cfg)
}

pub fn fit_classifier(
    data: &LabeledEmbeddingSet,
    classes: usize,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    data.check_classification(classes)?;
    fit(data, classes, cfg)
}

/// Union rule: adversarial if any member head fires.
pub fn ensemble_detect(heads: &[LinearHead], e: &ArrayView1<f64>) -> Result<usize> {
    if heads.is_empty() {
        return Err(Error::invalid("ensemble has no members"));
    }
    for h in heads {
        if h.detect(e)? == 1 {
            return Ok(1);
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_embeddings(n: usize, d: usize, classes: usize, seed: u64) -> LabeledEmbeddingSet {
        // class-dependent mean plus noise, linearly separable-ish
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut emb = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            labels.push(c);
            for j in 0..d {
                let center = if j % classes == c { 1.5 } else { -0.5 };
                emb[[i, j]] = center + rng.gen_range(-0.6..0.6);
            }
        }
        LabeledEmbeddingSet::new(emb, labels).unwrap()
    }

    /// Plain gradient descent on the same objective: slow, simple,
    /// independent of the line-search machinery.
    fn gd_oracle(obj: &LogisticObjective, lr: f64, iters: usize) -> Array1<f64> {
        let mut x = Array1::zeros(obj.param_len());
        for _ in 0..iters {
            let (_, g) = obj.eval(&x.view()).unwrap();
            x.zip_mut_with(&g, |xv, &gv| *xv -= lr * gv);
        }
        x
    }

    fn predictions(head: &LinearHead, data: &LabeledEmbeddingSet) -> Vec<usize> {
        (0..data.len())
            .map(|i| {
                if head.classes() == 1 {
                    head.detect(&data.embeddings.row(i)).unwrap()
                } else {
                    head.classify(&data.embeddings.row(i)).unwrap()
                }
            })
            .collect()
    }

    #[test]
    fn detector_fit_matches_gradient_descent_oracle() {
        let data = toy_embeddings(60, 8, 2, 3);
        let cfg = FitConfig::default();
        let out = fit_detector(&data, &cfg).unwrap();
        assert!(out.solve.converged);

        let obj = LogisticObjective {
            data: &data,
            classes: 1,
            lambda: 1.0,
            regularize_bias: true,
            scaling: LossScaling::Sum,
        };
        // lr below 1/L for this problem size
        let xo = gd_oracle(&obj, 5e-4, 200_000);
        let (oracle_loss, og) = obj.eval(&xo.view()).unwrap();
        assert!(og.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-6);
        assert!(
            (out.solve.loss - oracle_loss).abs() < 1e-4,
            "solver {} vs oracle {}",
            out.solve.loss,
            oracle_loss
        );
        let oracle_head =
            LinearHead::from_flat(&xo.view(), 1, data.dim(), 1.0, true).unwrap();
        assert_eq!(predictions(&out.head, &data), predictions(&oracle_head, &data));
    }

    #[test]
    fn classifier_fit_matches_gradient_descent_oracle() {
        let data = toy_embeddings(60, 6, 3, 9);
        let out = fit_classifier(&data, 3, &FitConfig::default()).unwrap();
        let obj = LogisticObjective {
            data: &data,
            classes: 3,
            lambda: 1.0,
            regularize_bias: true,
            scaling: LossScaling::Sum,
        };
        let xo = gd_oracle(&obj, 5e-4, 200_000);
        let (oracle_loss, _) = obj.eval(&xo.view()).unwrap();
        assert!((out.solve.loss - oracle_loss).abs() < 1e-4);
        let oracle_head =
            LinearHead::from_flat(&xo.view(), 3, data.dim(), 1.0, true).unwrap();
        assert_eq!(predictions(&out.head, &data), predictions(&oracle_head, &data));
    }

    #[test]
    fn convexity_two_inits_land_on_the_same_optimum() {
        let data = toy_embeddings(50, 10, 2, 17);
        let tight = SolverConfig { tolerance: 1e-7, ..Default::default() };
        let a = fit_detector(
            &data,
            &FitConfig { solver: tight.clone(), ..Default::default() },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let init = Array1::from_shape_fn(11, |_| rng.gen_range(-2.0..2.0));
        let b = fit_detector(
            &data,
            &FitConfig { solver: tight, init: Some(init), ..Default::default() },
        )
        .unwrap();
        assert!(
            (a.solve.loss - b.solve.loss).abs() <= 1e-6,
            "losses {} vs {}",
            a.solve.loss,
            b.solve.loss
        );
        assert_eq!(predictions(&a.head, &data), predictions(&b.head, &data));
    }

    #[test]
    fn regularizer_arithmetic_on_a_tiny_case() {
        // two samples, d = 2, parameters fixed by hand
        let data = LabeledEmbeddingSet::new(
            array![[1.0, 0.0], [0.0, 1.0]],
            vec![0, 1],
        )
        .unwrap();
        let obj = LogisticObjective {
            data: &data,
            classes: 1,
            lambda: 0.5,
            regularize_bias: true,
            scaling: LossScaling::Sum,
        };
        let x = array![2.0, -1.0, 0.5]; // w = (2, -1), b = 0.5
        let (loss, grad) = obj.eval(&x.view()).unwrap();
        // scores: 2.5 and -0.5; labels 0, 1
        let s1: f64 = 2.5;
        let s2: f64 = -0.5;
        let expect = (s1.exp().ln_1p() - 0.0)
            .max(0.0)
            .mul_add(0.0, s1.max(0.0) + (-s1.abs()).exp().ln_1p())
            + (s2.max(0.0) - s2 + (-s2.abs()).exp().ln_1p())
            + 0.5 * (4.0 + 1.0 + 0.25);
        assert!((loss - expect).abs() < 1e-12, "loss {loss} vs {expect}");
        let g1 = sigmoid(s1);
        let g2 = sigmoid(s2) - 1.0;
        assert!((grad[0] - (g1 + 2.0 * 0.5 * 2.0)).abs() < 1e-12);
        assert!((grad[1] - (g2 + 2.0 * 0.5 * -1.0)).abs() < 1e-12);
        assert!((grad[2] - (g1 + g2 + 2.0 * 0.5 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let data = LabeledEmbeddingSet::new(
            array![[1000.0], [-1000.0]],
            vec![1, 0],
        )
        .unwrap();
        let obj = LogisticObjective {
            data: &data,
            classes: 1,
            lambda: 1.0,
            regularize_bias: true,
            scaling: LossScaling::Sum,
        };
        let x = array![5.0, 0.0];
        let (loss, grad) = obj.eval(&x.view()).unwrap();
        assert!(loss.is_finite());
        assert!(grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shrinking_lambda_grows_the_separator_norm() {
        let data = toy_embeddings(40, 4, 2, 23);
        let strong = fit_detector(&data, &FitConfig::default()).unwrap();
        let weak = fit_detector(
            &data,
            &FitConfig { lambda: 1e-4, ..Default::default() },
        )
        .unwrap();
        let n_strong = strong.head.weight.iter().map(|v| v * v).sum::<f64>();
        let n_weak = weak.head.weight.iter().map(|v| v * v).sum::<f64>();
        assert!(
            n_weak > 2.0 * n_strong,
            "weak-penalty norm {n_weak} vs strong {n_strong}"
        );
    }

    #[test]
    fn sum_and_mean_scaling_agree_when_lambda_rescaled() {
        let data = toy_embeddings(30, 5, 2, 31);
        let n = data.len() as f64;
        let tight = SolverConfig { tolerance: 1e-9, ..Default::default() };
        let sum_fit = fit_detector(
            &data,
            &FitConfig { lambda: 2.0, solver: tight.clone(), ..Default::default() },
        )
        .unwrap();
        let mean_fit = fit_detector(
            &data,
            &FitConfig {
                lambda: 2.0 / n,
                scaling: LossScaling::Mean,
                solver: tight,
                ..Default::default()
            },
        )
        .unwrap();
        let diff = (&sum_fit.head.flat() - &mean_fit.head.flat())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-5, "parameter gap {diff}");
    }

    #[test]
    fn decision_rules_and_ties() {
        let det = LinearHead {
            weight: array![[1.0, -1.0]],
            bias: array![0.0],
            lambda: 1.0,
            regularize_bias: true,
        };
        assert_eq!(det.detect(&array![2.0, 1.0].view()).unwrap(), 1);
        assert_eq!(det.detect(&array![1.0, 2.0].view()).unwrap(), 0);
        // zero score is not flagged
        assert_eq!(det.detect(&array![1.0, 1.0].view()).unwrap(), 0);
        assert!(det.classify(&array![1.0, 1.0].view()).is_err());

        let cls = LinearHead {
            weight: array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            bias: Array1::zeros(3),
            lambda: 1.0,
            regularize_bias: true,
        };
        // classes 0 and 1 tie; lowest index wins
        assert_eq!(cls.classify(&array![3.0, 0.0].view()).unwrap(), 0);
        assert!(cls.detect(&array![3.0, 0.0].view()).is_err());
        assert!(cls.classify(&array![1.0].view()).is_err());
    }

    #[test]
    fn ensemble_is_the_union_of_members() {
        let pos = LinearHead {
            weight: array![[1.0]],
            bias: array![0.0],
            lambda: 1.0,
            regularize_bias: true,
        };
        let neg = LinearHead {
            weight: array![[-1.0]],
            bias: array![0.0],
            lambda: 1.0,
            regularize_bias: true,
        };
        let e_pos = array![0.5];
        let e_neg = array![-0.5];
        assert_eq!(
            ensemble_detect(&[pos.clone(), neg.clone()], &e_pos.view()).unwrap(),
            1
        );
        assert_eq!(
            ensemble_detect(&[pos.clone(), neg.clone()], &e_neg.view()).unwrap(),
            1
        );
        assert_eq!(ensemble_detect(&[pos.clone()], &e_neg.view()).unwrap(), 0);
        assert!(ensemble_detect(&[], &e_pos.view()).is_err());
        assert!(ensemble_detect(&[pos], &array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn head_json_round_trip_preserves_scores_exactly() {
        let data = toy_embeddings(20, 7, 2, 41);
        let out = fit_detector(&data, &FitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("head.json");
        out.head.save(&p).unwrap();
        let back = LinearHead::load(&p).unwrap();
        for i in 0..data.len() {
            let a = out.head.score(&data.embeddings.row(i)).unwrap();
            let b = back.score(&data.embeddings.row(i)).unwrap();
            assert_eq!(a, b);
        }
        // the file uses the documented key names
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["k"], 1);
        assert_eq!(v["d"], 7);
        assert!(v["W"].as_array().unwrap().len() == 7);
        assert!(v["b"].as_array().unwrap().len() == 1);
        assert!(v["lambda"].is_number());
        assert!(v["regularize_bias"].is_boolean());
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        // single-class detection set
        let one_sided =
            LabeledEmbeddingSet::new(array![[1.0], [2.0]], vec![0, 0]).unwrap();
        assert!(fit_detector(&one_sided, &FitConfig::default()).is_err());
        // missing class for the classifier
        let gap = LabeledEmbeddingSet::new(array![[1.0], [2.0]], vec![0, 2]).unwrap();
        assert!(fit_classifier(&gap, 3, &FitConfig::default()).is_err());
        // non-finite embedding
        assert!(LabeledEmbeddingSet::new(array![[f64::NAN]], vec![0]).is_err());
        // label/row mismatch
        assert!(LabeledEmbeddingSet::new(array![[1.0]], vec![0, 1]).is_err());
    }
}
