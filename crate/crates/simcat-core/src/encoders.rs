//! Embedding functions. A contrastively pretrained backbone (frozen
//! after training, projection head discarded) and a supervised
//! classifier whose backbone doubles as a baseline embedding.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{contrastive_view, ContrastivePolicy};
use crate::data::{shuffle, LabeledImageSet};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::nn::{
    backbone, ce_from_logits, flat_grads, projection_head, Adam, Dense, Layer, Net,
    NetGrads, SgdMomentum, Tensor,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Encoder {
    net: Net,
    pub input: (usize, usize, usize),
    pub embed_dim: usize,
    frozen: bool,
}

impl Encoder {
    fn from_net(net: Net, input: (usize, usize, usize)) -> Result<Self> {
        let embed_dim = net.output_dim(input)?;
        Ok(Encoder { net, input, embed_dim, frozen: true })
    }

    fn check(&self, x: &Image) -> Result<()> {
        if !self.frozen {
            return Err(Error::invalid("encoder is not frozen"));
        }
        if x.dim() != self.input {
            return Err(Error::shape(format!(
                "encoder expects {:?}, got {:?}",
                self.input,
                x.dim()
            )));
        }
        Ok(())
    }

    /// Deterministic embedding; identical input gives identical bits.
    pub fn embed(&self, x: &Image) -> Result<Array1<f64>> {
        self.check(x)?;
        let out = self.net.forward(&Tensor::Hwc(x.clone()))?;
        Ok(out.as_vec()?.clone())
    }

    pub fn embed_batch(&self, xs: &[Image]) -> Result<Array2<f64>> {
        if xs.is_empty() {
            return Err(Error::invalid("embed_batch on empty slice"));
        }
        let mut out = Array2::zeros((xs.len(), self.embed_dim));
        for (i, x) in xs.iter().enumerate() {
            let e = self.embed(x)?;
            out.row_mut(i).assign(&e);
        }
        Ok(out)
    }

    /// Pullback of a cotangent on the embedding to image space.
    pub fn embed_vjp(&self, x: &Image, cot: &ArrayView1<f64>) -> Result<Image> {
        self.check(x)?;
        if cot.len() != self.embed_dim {
            return Err(Error::shape("cotangent length differs from embedding dim"));
        }
        let (_, caches) = self.net.forward_cached(&Tensor::Hwc(x.clone()))?;
        let (gin, _) = self
            .net
            .backward(&caches, &Tensor::Vec(cot.to_owned()))?;
        Ok(gin.as_hwc()?.clone())
    }

    /// One forward pass, one backward pass: `scalar` maps the embedding
    /// to a loss value and its embedding-space gradient, and we return
    /// the loss with its image-space gradient.
    pub fn embed_grad<F>(&self, x: &Image, scalar: F) -> Result<(f64, Image)>
    where
        F: FnOnce(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    {
        self.check(x)?;
        let (e, caches) = self.net.forward_cached(&Tensor::Hwc(x.clone()))?;
        let e = e.as_vec()?;
        let (loss, cot) = scalar(e)?;
        if cot.len() != self.embed_dim {
            return Err(Error::shape("cotangent length differs from embedding dim"));
        }
        let (gin, _) = self.net.backward(&caches, &Tensor::Vec(cot))?;
        Ok((loss, gin.as_hwc()?.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let enc: Encoder = serde_json::from_reader(BufReader::new(f))?;
        if !enc.frozen {
            return Err(Error::format(
                path.display().to_string(),
                "stored encoder is not frozen".to_string(),
            ));
        }
        if enc.net.output_dim(enc.input)? != enc.embed_dim {
            return Err(Error::format(
                path.display().to_string(),
                "stored embed_dim disagrees with the network".to_string(),
            ));
        }
        Ok(enc)
    }
}

/// Normalized-temperature cross entropy over paired views. Row 2i and
/// row 2i+1 are the two views of sample i. Returns the mean loss over
/// all rows and its gradient with respect to the raw projections.
pub fn nt_xent(z: &Array2<f64>, temperature: f64) -> Result<(f64, Array2<f64>)> {
    let m = z.nrows();
    if m < 4 || m % 2 != 0 {
        return Err(Error::invalid("nt_xent needs an even row count of at least 4"));
    }
    if temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let p = z.ncols();
    let mut norms = vec![0.0; m];
    let mut u = Array2::zeros((m, p));
    for i in 0..m {
        let n = z.row(i).dot(&z.row(i)).sqrt().max(1e-12);
        norms[i] = n;
        u.row_mut(i).assign(&z.row(i).mapv(|v| v / n));
    }
    let s = u.dot(&u.t()) / temperature;
    let mut loss = 0.0;
    // dL/dS, skipping the diagonal which never enters the loss
    let mut ds = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let pos = i ^ 1;
        let mut mx = f64::NEG_INFINITY;
        for k in 0..m {
            if k != i {
                mx = mx.max(s[[i, k]]);
            }
        }
        let mut denom = 0.0;
        for k in 0..m {
            if k != i {
                denom += (s[[i, k]] - mx).exp();
            }
        }
        let lse = mx + denom.ln();
        loss += lse - s[[i, pos]];
        for k in 0..m {
            if k != i {
                let prob = (s[[i, k]] - lse).exp();
                ds[[i, k]] = (prob - if k == pos { 1.0 } else { 0.0 }) / m as f64;
            }
        }
    }
    loss /= m as f64;
    // chain through S = U U^T / tau and the row normalization
    let mut du = Array2::<f64>::zeros((m, p));
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let w = (ds[[i, j]] + ds[[j, i]]) / temperature;
            if w != 0.0 {
                let uj = u.row(j).to_owned();
                du.row_mut(i).zip_mut_with(&uj, |a, &b| *a += w * b);
            }
        }
    }
    let mut dz = Array2::<f64>::zeros((m, p));
    for i in 0..m {
        let ui = u.row(i);
        let inner = du.row(i).dot(&ui);
        let row = (&du.row(i) - &ui.mapv(|v| v * inner)).mapv(|v| v / norms[i]);
        dz.row_mut(i).assign(&row);
    }
    Ok((loss, dz))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub projection_dim: usize,
    pub learning_rate: f64,
    pub augment: ContrastivePolicy,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            epochs: 40,
            batch_size: 32,
            temperature: 0.5,
            projection_dim: 32,
            learning_rate: 3e-3,
            augment: ContrastivePolicy::default(),
            seed: 0,
        }
    }
}

pub struct ContrastiveOutcome {
    pub encoder: Encoder,
    pub epoch_losses: Vec<f64>,
}

/// SimCLR-style pretraining: two augmented views per image, NT-Xent
/// over the batch, Adam on backbone plus projection head. The head is
/// dropped on exit and the backbone comes back frozen.
pub fn train_contrastive(
    images: &[Image],
    channels: &[usize],
    embed_dim: usize,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveOutcome> {
    if images.len() < 2 {
        return Err(Error::invalid("contrastive training needs at least two images"));
    }
    if cfg.batch_size < 2 {
        return Err(Error::invalid("batch size must be at least 2"));
    }
    if cfg.temperature <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let input = images[0].dim();
    if images.iter().any(|im| im.dim() != input) {
        return Err(Error::shape("contrastive inputs disagree on dimensions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bb = backbone(input, channels, embed_dim, &mut rng)?;
    let mut proj = projection_head(embed_dim, cfg.projection_dim, &mut rng);
    let mut bb_params = bb.flat_params();
    let mut proj_params = proj.flat_params();
    let mut bb_opt = Adam::new(cfg.learning_rate, bb_params.len());
    let mut proj_opt = Adam::new(cfg.learning_rate, proj_params.len());

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let m = chunk.len() * 2;
            let mut z = Array2::zeros((m, cfg.projection_dim));
            let mut bb_caches = Vec::with_capacity(m);
            let mut proj_caches = Vec::with_capacity(m);
            for (vi, &idx) in chunk.iter().enumerate() {
                for view in 0..2 {
                    let v = contrastive_view(&images[idx], &cfg.augment, &mut rng);
                    let (e, bc) = bb.forward_cached(&Tensor::Hwc(v))?;
                    let (zrow, pc) = proj.forward_cached(&e)?;
                    z.row_mut(vi * 2 + view).assign(zrow.as_vec()?);
                    bb_caches.push(bc);
                    proj_caches.push(pc);
                }
            }
            let (loss, dz) = nt_xent(&z, cfg.temperature)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "contrastive loss became non-finite in epoch {epoch}"
                )));
            }
            let mut bb_grads = NetGrads::zeros_like(&bb);
            let mut proj_grads = NetGrads::zeros_like(&proj);
            for row in 0..m {
                let cot = Tensor::Vec(dz.row(row).to_owned());
                let (de, pg) = proj.backward(&proj_caches[row], &cot)?;
                proj_grads.add_assign(&pg);
                let (_, bg) = bb.backward(&bb_caches[row], &de)?;
                bb_grads.add_assign(&bg);
            }
            let bg = flat_grads(&bb, &bb_grads);
            let pg = flat_grads(&proj, &proj_grads);
            bb_opt.step(&mut bb_params, &bg.view());
            proj_opt.step(&mut proj_params, &pg.view());
            bb.set_flat_params(&bb_params.view())?;
            proj.set_flat_params(&proj_params.view())?;
            epoch_loss += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::invalid("no full batch fit in the dataset"));
        }
        epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok(ContrastiveOutcome { encoder: Encoder::from_net(bb, input)?, epoch_losses })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Frozen backbone plus a linear class map: the toy stand-in for the
/// attacked model. Also the source of the supervised baseline
/// embedding used for encoder comparisons.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaseClassifier {
    pub encoder: Encoder,
    pub class_w: Array2<f64>,
    pub class_b: Array1<f64>,
    pub num_classes: usize,
}

impl BaseClassifier {
    pub fn logits(&self, x: &Image) -> Result<Array1<f64>> {
        let e = self.encoder.embed(x)?;
        Ok(self.class_w.dot(&e) + &self.class_b)
    }

    /// Argmax with ties resolved to the lowest index.
    pub fn predict(&self, x: &Image) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z.view()))
    }

    /// Cross entropy of the class logits at label `y`, with its
    /// gradient in image space.
    pub fn ce_loss_and_input_grad(&self, x: &Image, y: usize) -> Result<(f64, Image)> {
        if y >= self.num_classes {
            return Err(Error::invalid(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        self.encoder.embed_grad(x, |e| {
            let z = self.class_w.dot(e) + &self.class_b;
            let (loss, gz) = ce_from_logits(&z.view(), y)?;
            Ok((loss, self.class_w.t().dot(&gz)))
        })
    }

    /// Margin term max(z_y - max_{i != y} z_i, -kappa) and its input
    /// gradient (zero on the flat branch).
    pub fn margin_and_input_grad(&self, x: &Image, y: usize, kappa: f64) -> Result<(f64, Image)> {
        if self.num_classes < 2 {
            return Err(Error::invalid("margin needs at least two classes"));
        }
        if y >= self.num_classes {
            return Err(Error::invalid(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        let e = self.encoder.embed(x)?;
        let z = self.class_w.dot(&e) + &self.class_b;
        let mut j_star = if y == 0 { 1 } else { 0 };
        for i in 0..z.len() {
            if i != y && z[i] > z[j_star] {
                j_star = i;
            }
        }
        let m = z[y] - z[j_star];
        if m <= -kappa {
            return Ok((-kappa, ndarray::Array3::zeros(x.dim())));
        }
        let cot = (&self.class_w.row(y) - &self.class_w.row(j_star)).to_owned();
        let g = self.encoder.embed_vjp(x, &cot.view())?;
        Ok((m, g))
    }

    pub fn accuracy(&self, set: &LabeledImageSet) -> Result<f64> {
        let mut hits = 0usize;
        for i in 0..set.len() {
            if self.predict(&set.images[i])? == set.labels[i] {
                hits += 1;
            }
        }
        Ok(hits as f64 / set.len() as f64)
    }

    /// Backbone and class map joined into one trainable net.
    pub fn to_net(&self) -> Net {
        let mut layers = self.encoder.net.layers.clone();
        layers.push(Layer::Dense(Dense {
            weight: self.class_w.clone(),
            bias: self.class_b.clone(),
        }));
        Net { layers }
    }

    pub fn from_net(net: Net, input: (usize, usize, usize)) -> Result<Self> {
        let mut layers = net.layers;
        let head = match layers.pop() {
            Some(Layer::Dense(d)) => d,
            _ => return Err(Error::invalid("classifier net must end in a dense layer")),
        };
        let encoder = Encoder::from_net(Net { layers }, input)?;
        if head.weight.ncols() != encoder.embed_dim {
            return Err(Error::shape("class map width differs from embedding dim"));
        }
        let num_classes = head.weight.nrows();
        Ok(BaseClassifier { encoder, class_w: head.weight, class_b: head.bias, num_classes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let c: BaseClassifier = serde_json::from_reader(BufReader::new(f))?;
        if c.class_w.nrows() != c.num_classes || c.class_w.nrows() != c.class_b.len() {
            return Err(Error::format(
                path.display().to_string(),
                "class map shape is inconsistent".to_string(),
            ));
        }
        Ok(c)
    }
}

pub fn argmax(z: &ArrayView1<f64>) -> usize {
    let mut best = 0;
    for i in 1..z.len() {
        if z[i] > z[best] {
            best = i;
        }
    }
    best
}

/// Minibatch cross-entropy training of a full net in place. Calls
/// `on_epoch` after each update with the mean training loss.
pub fn train_net_ce<F>(
    net: &mut Net,
    set: &LabeledImageSet,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    rng: &mut ChaCha8Rng,
    mut on_epoch: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&Net, usize, f64) -> Result<()>,
{
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut params = net.flat_params();
    let mut opt = SgdMomentum::new(learning_rate, momentum, params.len());
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        shuffle(&mut order, rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut grads = NetGrads::zeros_like(net);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (z, caches) = net.forward_cached(&Tensor::Hwc(set.images[i].clone()))?;
                let (loss, gz) = ce_from_logits(&z.as_vec()?.view(), set.labels[i])?;
                batch_loss += loss;
                let (_, g) = net.backward(&caches, &Tensor::Vec(gz))?;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            let flat = flat_grads(net, &grads);
            opt.step(&mut params, &flat.view());
            net.set_flat_params(&params.view())?;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "supervised loss became non-finite in epoch {epoch}"
                )));
            }
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / set.len() as f64;
        losses.push(mean);
        on_epoch(net, epoch, mean)?;
    }
    Ok(losses)
}

pub struct SupervisedOutcome {
    pub classifier: BaseClassifier,
    pub epoch_losses: Vec<f64>,
}

pub fn train_supervised(
    set: &LabeledImageSet,
    channels: &[usize],
    embed_dim: usize,
    cfg: &SupervisedConfig,
) -> Result<SupervisedOutcome> {
    set.validate()?;
    if set.num_classes < 2 {
        return Err(Error::invalid("supervised training needs at least two classes"));
    }
    let input = set.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = backbone(input, channels, embed_dim, &mut rng)?;
    let head_w = {
        // modest init for the class map; He would be fine too
        let sd = (1.0 / embed_dim as f64).sqrt();
        use rand_distr::{Distribution, Normal};
        let dist = Normal::new(0.0, sd).unwrap();
        Array2::from_shape_fn((set.num_classes, embed_dim), |_| dist.sample(&mut rng))
    };
    net.layers.push(Layer::Dense(Dense {
        weight: head_w,
        bias: Array1::zeros(set.num_classes),
    }));
    let epoch_losses = train_net_ce(
        &mut net,
        set,
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.momentum,
        &mut rng,
        |_, _, _| Ok(()),
    )?;
    let classifier = BaseClassifier::from_net(net, input)?;
    Ok(SupervisedOutcome { classifier, epoch_losses })
}

/// Mean accuracy of a bare net's argmax output.
pub fn net_accuracy(net: &Net, set: &LabeledImageSet) -> Result<f64> {
    let mut hits = 0usize;
    for i in 0..set.len() {
        let z = net.forward(&Tensor::Hwc(set.images[i].clone()))?;
        if argmax(&z.as_vec()?.view()) == set.labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_gratings, SyntheticSpec};
    use ndarray::Array2;

    fn toy_set(classes: usize, per_class: usize, seed: u64) -> LabeledImageSet {
        synthetic_gratings(&SyntheticSpec {
            classes,
            per_class,
            height: 12,
            width: 12,
            noise_sd: 0.04,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn nt_xent_identical_views_batch_of_two_is_ln3() {
        // four identical rows: every similarity is equal, so each
        // anchor faces a uniform 3-way choice
        let z = Array2::from_shape_fn((4, 6), |(_, j)| (j as f64 * 0.31).sin() + 0.2);
        let (loss, _) = nt_xent(&z, 0.5).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn nt_xent_gradient_matches_finite_differences() {
        let z0 = Array2::from_shape_fn((6, 5), |(i, j)| {
            0.4 + 0.5 * ((i * 5 + j) as f64 * 0.7).sin().abs()
        });
        let (_, dz) = nt_xent(&z0, 0.5).unwrap();
        let h = 1e-3;
        let mut max_rel = 0.0f64;
        for i in 0..6 {
            for j in 0..5 {
                let mut zp = z0.clone();
                zp[[i, j]] += h;
                let (fp, _) = nt_xent(&zp, 0.5).unwrap();
                zp[[i, j]] -= 2.0 * h;
                let (fm, _) = nt_xent(&zp, 0.5).unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                let denom = numeric.abs().max(dz[[i, j]].abs()).max(1e-8);
                max_rel = max_rel.max((numeric - dz[[i, j]]).abs() / denom);
            }
        }
        assert!(max_rel < 1e-3, "max relative error {max_rel}");
    }

    #[test]
    fn nt_xent_rejects_odd_or_tiny_batches() {
        assert!(nt_xent(&Array2::zeros((3, 4)), 0.5).is_err());
        assert!(nt_xent(&Array2::zeros((2, 4)), 0.5).is_err());
        assert!(nt_xent(&Array2::zeros((4, 4)), 0.0).is_err());
    }

    #[test]
    fn contrastive_loss_decreases_on_toy_data() {
        let set = toy_set(4, 12, 3);
        let cfg = ContrastiveConfig {
            epochs: 15,
            batch_size: 16,
            seed: 1,
            ..Default::default()
        };
        let out = train_contrastive(&set.images, &[6, 8], 16, &cfg).unwrap();
        let first = out.epoch_losses[0];
        let last = *out.epoch_losses.last().unwrap();
        assert!(
            last < first,
            "contrastive loss failed to improve: {first} -> {last}"
        );
    }

    #[test]
    fn embeddings_are_bit_reproducible_and_survive_save_load() {
        let set = toy_set(3, 6, 9);
        let cfg = ContrastiveConfig { epochs: 2, batch_size: 8, seed: 4, ..Default::default() };
        let enc = train_contrastive(&set.images, &[4, 6], 8, &cfg).unwrap().encoder;
        let a = enc.embed(&set.images[0]).unwrap();
        let b = enc.embed(&set.images[0]).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        enc.save(&path).unwrap();
        let back = Encoder::load(&path).unwrap();
        assert_eq!(back.embed(&set.images[0]).unwrap(), a);
    }

    #[test]
    fn embed_vjp_matches_finite_differences() {
        let set = toy_set(2, 4, 13);
        let cfg = ContrastiveConfig { epochs: 1, batch_size: 8, seed: 2, ..Default::default() };
        let enc = train_contrastive(&set.images, &[4], 6, &cfg).unwrap().encoder;
        let x0 = set.images[0].clone();
        let cot = Array1::from_shape_fn(6, |i| (i as f64 - 2.0) * 0.3);
        let g = enc.embed_vjp(&x0, &cot.view()).unwrap();

        let dim = x0.raw_dim();
        let flat0 = Array1::from_iter(x0.iter().cloned());
        let analytic = Array1::from_iter(g.iter().cloned());
        let report = crate::gradcheck::central_diff_check(
            |p| {
                let img = ndarray::Array3::from_shape_vec(dim.clone(), p.to_vec()).unwrap();
                enc.embed(&img).unwrap().dot(&cot)
            },
            &flat0,
            &analytic,
            &crate::gradcheck::probe_indices(flat0.len(), 40),
            1e-3,
        );
        assert!(report.checked >= 20, "too many kink skips: {}", report.skipped);
        assert!(report.max_rel_error < 1e-3, "max relative error {}", report.max_rel_error);
    }

    #[test]
    fn untrained_supervised_classifier_sits_at_chance() {
        let set = toy_set(4, 25, 21);
        let cfg = SupervisedConfig { epochs: 0, seed: 3, ..Default::default() };
        let out = train_supervised(&set, &[6, 8], 12, &cfg).unwrap();
        let acc = out.classifier.accuracy(&set).unwrap();
        // E[acc] = 1/k for label-independent predictions; 4 sigma band
        assert!(
            (acc - 0.25).abs() < 0.18,
            "untrained accuracy {acc} is suspiciously far from chance"
        );
    }

    #[test]
    fn supervised_training_learns_the_gratings() {
        let set = toy_set(3, 30, 8);
        let cfg = SupervisedConfig { epochs: 40, seed: 1, ..Default::default() };
        let out = train_supervised(&set, &[8, 16, 24], 16, &cfg).unwrap();
        let acc = out.classifier.accuracy(&set).unwrap();
        assert!(acc >= 0.9, "train accuracy only {acc}");
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    }

    #[test]
    fn classifier_round_trips_through_net_form() {
        let set = toy_set(3, 5, 2);
        let cfg = SupervisedConfig { epochs: 1, seed: 6, ..Default::default() };
        let c = train_supervised(&set, &[4], 8, &cfg).unwrap().classifier;
        let net = c.to_net();
        let c2 = BaseClassifier::from_net(net, set.dims()).unwrap();
        for img in set.images.iter().take(3) {
            assert_eq!(c.logits(img).unwrap(), c2.logits(img).unwrap());
        }
    }

    #[test]
    fn ce_input_grad_matches_finite_differences() {
        let set = toy_set(3, 4, 17);
        let cfg = SupervisedConfig { epochs: 2, seed: 5, ..Default::default() };
        let c = train_supervised(&set, &[4, 6], 8, &cfg).unwrap().classifier;
        let x0 = set.images[1].clone();
        let y = set.labels[1];
        let (_, g) = c.ce_loss_and_input_grad(&x0, y).unwrap();

        let dim = x0.raw_dim();
        let flat0 = Array1::from_iter(x0.iter().cloned());
        let analytic = Array1::from_iter(g.iter().cloned());
        let report = crate::gradcheck::central_diff_check(
            |p| {
                let img = ndarray::Array3::from_shape_vec(dim.clone(), p.to_vec()).unwrap();
                c.ce_loss_and_input_grad(&img, y).unwrap().0
            },
            &flat0,
            &analytic,
            &crate::gradcheck::probe_indices(flat0.len(), 30),
            1e-3,
        );
        assert!(report.checked >= 15, "too many kink skips: {}", report.skipped);
        assert!(report.max_rel_error < 1e-3, "max relative error {}", report.max_rel_error);
    }
}
