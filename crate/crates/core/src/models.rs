//! Generative models: a Gaussian VAE and a two-part disentangling
//! autoencoder trained on weakly labelled triplets.
//!
//! Both reconstruct with squared error (a unit-variance Gaussian likelihood up
//! to constants). Losses are summed over features and averaged over the batch.
//!
//! Notation for the disentangled model: `s` is the specified code, `z` the
//! unspecified one, and `x_{a⊕b} = f(s_b ‖ z_a)`, the sample built from the
//! unspecified part of `x_a` and the specified part of `x_b`. A same-label pair
//! is reconstructed with its specified codes exchanged:
//! `x₁ ≈ x_{1⊕2} = f(s₂ ‖ z₁)` and `x₂ ≈ x_{2⊕1} = f(s₁ ‖ z₂)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::checkpoint::Checkpoint;
use crate::data::{gather_triplets, LabeledDataset, TripletBatch, TripletSampler};
use crate::geometry::PartialMap;
use crate::network::{Activation, Adam, FeedForwardNet, Trace};
use crate::numerics::{Matrix, SeededRng};
use crate::{Error, Result};

/// `KL(N(mu, diag(exp(logvar))) ‖ N(0, I)) = −½ Σ (1 + logvar − mu² − exp(logvar))`.
pub fn kl_gaussian(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - libm::exp(*lv))
        .sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// swap reconstruction + KL on the unspecified code
    SwapL2Kl,
    /// the above plus a pair discriminator
    SwapAdversarial,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::SwapL2Kl => "swap_l2_kl",
            Variant::SwapAdversarial => "swap_adversarial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "swap_l2_kl" => Ok(Variant::SwapL2Kl),
            "swap_adversarial" => Ok(Variant::SwapAdversarial),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture and optimisation settings shared by both trainers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// VAE latent dimension
    pub latent_dim: usize,
    pub specified_dim: usize,
    pub unspecified_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub lambda: f64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 16,
            specified_dim: 16,
            unspecified_dim: 64,
            encoder_hidden: vec![256],
            decoder_hidden: vec![256],
            disc_hidden: vec![64],
            activation: Activation::ELU,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            beta: 1.0,
            lambda: 1.0,
            variant: Variant::SwapL2Kl,
        }
    }
}

fn widths_to_string(w: &[usize]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_widths(key: &str, s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: bad width {p:?}")))
        })
        .collect()
}

impl TrainConfig {
    pub const KEYS: [&'static str; 13] = [
        "latent_dim",
        "specified_dim",
        "unspecified_dim",
        "encoder_hidden",
        "decoder_hidden",
        "disc_hidden",
        "activation",
        "epochs",
        "batch_size",
        "lr",
        "beta",
        "lambda",
        "variant",
    ];

    /// `key=value` pairs, in [`TrainConfig::KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let v = [
            self.latent_dim.to_string(),
            self.specified_dim.to_string(),
            self.unspecified_dim.to_string(),
            widths_to_string(&self.encoder_hidden),
            widths_to_string(&self.decoder_hidden),
            widths_to_string(&self.disc_hidden),
            self.activation.name(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            format!("{:e}", self.lr),
            format!("{:e}", self.beta),
            format!("{:e}", self.lambda),
            self.variant.name().to_string(),
        ];
        Self::KEYS.iter().map(|k| k.to_string()).zip(v).collect()
    }

    /// Overrides one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got {v:?}")))
        };
        let float = |v: &str| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("{key}: expected a number, got {v:?}")))
        };
        match key {
            "latent_dim" => self.latent_dim = int(value)?,
            "specified_dim" => self.specified_dim = int(value)?,
            "unspecified_dim" => self.unspecified_dim = int(value)?,
            "encoder_hidden" => self.encoder_hidden = parse_widths(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse_widths(key, value)?,
            "disc_hidden" => self.disc_hidden = parse_widths(key, value)?,
            "activation" => {
                self.activation =
                    Activation::parse(value.trim()).map_err(|e| Error::Config(format!("{key}: {e}")))?
            }
            "epochs" => self.epochs = int(value)?,
            "batch_size" => self.batch_size = int(value)?,
            "lr" => self.lr = float(value)?,
            "beta" => self.beta = float(value)?,
            "lambda" => self.lambda = float(value)?,
            "variant" => self.variant = Variant::parse(value.trim())?,
            other => return Err(Error::Config(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    fn validate_common(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.beta < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config("beta and lambda must be nonnegative".into()));
        }
        for (name, w) in [
            ("encoder_hidden", &self.encoder_hidden),
            ("decoder_hidden", &self.decoder_hidden),
            ("disc_hidden", &self.disc_hidden),
        ] {
            if w.contains(&0) {
                return Err(Error::Config(format!("{name} contains a zero width")));
            }
        }
        Ok(())
    }

    pub fn validate_vae(&self) -> Result<()> {
        self.validate_common()?;
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_disentangled(&self) -> Result<()> {
        self.validate_common()?;
        if self.specified_dim == 0 || self.unspecified_dim == 0 {
            return Err(Error::Config("specified_dim and unspecified_dim must be positive".into()));
        }
        Ok(())
    }
}

fn mlp(input: usize, hidden: &[usize], output: usize, act: Activation, rng: &mut SeededRng) -> Result<FeedForwardNet> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    FeedForwardNet::init(&w, act, Activation::Identity, rng)
}

fn hstack(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows(), b.rows());
    Matrix::from_fn(a.rows(), a.cols() + b.cols(), |i, j| {
        if j < a.cols() {
            a.get(i, j)
        } else {
            b.get(i, j - a.cols())
        }
    })
}

fn vstack(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols(), b.cols());
    let mut v = Vec::with_capacity((a.rows() + b.rows()) * a.cols());
    v.extend_from_slice(a.as_slice());
    v.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), v).expect("vstack shape")
}

fn check_width(op: &'static str, x: &Matrix, d: usize) -> Result<()> {
    if x.cols() != d {
        return Err(Error::shape(op, d, x.cols()));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidInput(format!("{op}: empty batch")));
    }
    Ok(())
}

/// `mu + exp(logvar / 2) · eps` row-wise, for an encoder output `[mu ‖ logvar]`.
fn reparameterize(stats: &Matrix, eps: &Matrix) -> Matrix {
    let d = eps.cols();
    Matrix::from_fn(eps.rows(), d, |i, j| {
        let lv = stats.get(i, d + j);
        stats.get(i, j) + libm::exp(0.5 * lv) * eps.get(i, j)
    })
}

/// Adjoint of `[mu ‖ logvar]` given the adjoint of the sample, plus `w · KL`.
fn gaussian_adjoint(stats: &Matrix, eps: &Matrix, d_sample: &Matrix, kl_weight: f64) -> Matrix {
    let d = eps.cols();
    let mut adj = Matrix::zeros(stats.rows(), 2 * d);
    for i in 0..stats.rows() {
        for j in 0..d {
            let mu = stats.get(i, j);
            let lv = stats.get(i, d + j);
            let sigma = libm::exp(0.5 * lv);
            let ds = d_sample.get(i, j);
            adj.set(i, j, ds + kl_weight * mu);
            adj.set(i, d + j, ds * eps.get(i, j) * 0.5 * sigma + kl_weight * 0.5 * (libm::exp(lv) - 1.0));
        }
    }
    adj
}

fn kl_rows(stats: &Matrix, d: usize) -> f64 {
    stats
        .row_iter()
        .map(|r| kl_gaussian(&r[..d], &r[d..2 * d]))
        .sum()
}

/// Loss components for one batch, each already averaged over the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    /// generator side of the adversarial term
    pub gen: f64,
    /// discriminator loss (not part of `total`)
    pub disc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    /// `x → [mu ‖ logvar]`
    pub encoder: FeedForwardNet,
    pub decoder: FeedForwardNet,
    latent_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl VaeModel {
    pub fn new(encoder: FeedForwardNet, decoder: FeedForwardNet) -> Result<Self> {
        let d = decoder.in_dim();
        if encoder.out_dim() != 2 * d {
            return Err(Error::shape("vae encoder output", 2 * d, encoder.out_dim()));
        }
        if encoder.in_dim() != decoder.out_dim() {
            return Err(Error::shape("vae decoder output", encoder.in_dim(), decoder.out_dim()));
        }
        Ok(VaeModel {
            encoder,
            decoder,
            latent_dim: d,
        })
    }

    pub fn init(data_dim: usize, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate_vae()?;
        let d = cfg.latent_dim;
        let encoder = mlp(data_dim, &cfg.encoder_hidden, 2 * d, cfg.activation, rng)?;
        let decoder = mlp(d, &cfg.decoder_hidden, data_dim, cfg.activation, rng)?;
        VaeModel::new(encoder, decoder)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.out_dim()
    }

    /// Posterior means.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        check_width("vae encode", x, self.data_dim())?;
        Ok(self.encoder.forward_batch(x)?.select_cols(0, self.latent_dim))
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        self.decoder.forward_batch(z)
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new().with_meta("kind", "vae").with_meta("seed", seed);
        for (k, v) in cfg.to_pairs() {
            ck = ck.with_meta(format!("config.{k}"), v);
        }
        ck.with_net("encoder", self.encoder.clone())
            .with_net("decoder", self.decoder.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        expect_kind(ck, "vae")?;
        VaeModel::new(ck.require_net("encoder")?.clone(), ck.require_net("decoder")?.clone())
    }
}

fn expect_kind(ck: &Checkpoint, kind: &str) -> Result<()> {
    match ck.meta("kind") {
        Some(k) if k == kind => Ok(()),
        other => Err(Error::Parse(format!("expected a {kind} checkpoint, found kind {other:?}"))),
    }
}

/// Training configuration stored in a checkpoint's metadata.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    TrainConfig::from_pairs(
        ck.meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k, v.as_str()))),
    )
}

/// VAE objective for one batch with the reparameterisation noise given
/// explicitly (one row of `eps` per sample).
pub fn vae_loss_with_noise(model: &VaeModel, x: &Matrix, eps: &Matrix, beta: f64) -> Result<(LossParts, VaeGrads)> {
    check_width("vae_loss", x, model.data_dim())?;
    if eps.shape() != (x.rows(), model.latent_dim) {
        return Err(Error::shape(
            "vae_loss noise",
            format!("{:?}", (x.rows(), model.latent_dim)),
            format!("{:?}", eps.shape()),
        ));
    }
    let b = x.rows() as f64;
    let d = model.latent_dim;
    let te = model.encoder.forward_trace(x)?;
    let stats = te.output();
    let z = reparameterize(stats, eps);
    let td = model.decoder.forward_trace(&z)?;
    let diff = td.output().sub(x)?;
    let recon = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / b;
    let kl = kl_rows(stats, d) / b;

    let mut g_dec = vec![0.0; model.decoder.param_count()];
    let d_z = model.decoder.backward(&td, &diff.scale(2.0 / b), &mut g_dec)?;
    let adj = gaussian_adjoint(stats, eps, &d_z, beta / b);
    let mut g_enc = vec![0.0; model.encoder.param_count()];
    model.encoder.backward(&te, &adj, &mut g_enc)?;
    Ok((
        LossParts {
            total: recon + beta * kl,
            recon,
            kl,
            ..LossParts::default()
        },
        VaeGrads {
            encoder: g_enc,
            decoder: g_dec,
        },
    ))
}

/// VAE objective with one fresh reparameterised sample per datum.
pub fn vae_loss(model: &VaeModel, x: &Matrix, beta: f64, rng: &mut SeededRng) -> Result<(LossParts, VaeGrads)> {
    let eps = rng.normal_matrix(x.rows(), model.latent_dim);
    vae_loss_with_noise(model, x, &eps, beta)
}

/// Mean loss components per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<LossParts>,
}

impl History {
    pub fn first(&self) -> Option<LossParts> {
        self.epochs.first().copied()
    }
    pub fn last(&self) -> Option<LossParts> {
        self.epochs.last().copied()
    }
}

fn accumulate(acc: &mut LossParts, p: &LossParts, w: f64) {
    acc.total += w * p.total;
    acc.recon += w * p.recon;
    acc.kl += w * p.kl;
    acc.gen += w * p.gen;
    acc.disc += w * p.disc;
}

fn check_finite(p: &LossParts, epoch: usize) -> Result<()> {
    if !(p.total.is_finite() && p.disc.is_finite()) {
        return Err(Error::InvalidInput(format!("training diverged in epoch {epoch} (non-finite loss)")));
    }
    Ok(())
}

/// Minibatch Adam on the VAE objective. Deterministic given `seed`.
pub fn train_vae(dataset: &LabeledDataset, cfg: &TrainConfig, seed: u64) -> Result<(VaeModel, History)> {
    cfg.validate_vae()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let root = SeededRng::new(seed);
    let mut init_rng = root.derive(0);
    let mut order_rng = root.derive(1);
    let mut noise_rng = root.derive(2);
    let mut model = VaeModel::init(dataset.dim(), cfg, &mut init_rng)?;
    let mut opt_e = Adam::new(model.encoder.param_count(), cfg.lr);
    let mut opt_d = Adam::new(model.decoder.param_count(), cfg.lr);
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut acc = LossParts::default();
        for chunk in order.chunks(cfg.batch_size) {
            let x = dataset.samples.select_rows(chunk);
            let (parts, g) = vae_loss(&model, &x, cfg.beta, &mut noise_rng)?;
            accumulate(&mut acc, &parts, chunk.len() as f64 / n as f64);
            opt_e.step_net(&mut model.encoder, &g.encoder);
            opt_d.step_net(&mut model.decoder, &g.decoder);
        }
        check_finite(&acc, epoch)?;
        history.epochs.push(acc);
    }
    Ok((model, history))
}

/// Specified and unspecified codes of a batch, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub specified: Matrix,
    /// posterior means
    pub unspecified: Matrix,
}

impl LatentCode {
    /// `[s ‖ z]` per row, the decoder's input layout.
    pub fn joint(&self) -> Matrix {
        hstack(&self.specified, &self.unspecified)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisentangledModel {
    /// `x → s`
    pub enc_s: FeedForwardNet,
    /// `x → [mu_z ‖ logvar_z]`
    pub enc_z: FeedForwardNet,
    /// `[s ‖ z] → x`
    pub decoder: FeedForwardNet,
    /// pair discriminator `[x ‖ x'] → logit`, present for the adversarial variant
    pub disc: Option<FeedForwardNet>,
    pub variant: Variant,
    ds: usize,
    dz: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisentangledGrads {
    pub enc_s: Vec<f64>,
    pub enc_z: Vec<f64>,
    pub decoder: Vec<f64>,
    /// gradient of the discriminator loss; empty without a discriminator
    pub disc: Vec<f64>,
}

/// Reparameterisation noise for a triplet batch, `batch × dz` each.
#[derive(Clone, Debug, PartialEq)]
pub struct SwapNoise {
    pub e1: Matrix,
    pub e2: Matrix,
    pub e3: Matrix,
}

impl SwapNoise {
    pub fn zeros(batch: usize, dz: usize) -> Self {
        SwapNoise {
            e1: Matrix::zeros(batch, dz),
            e2: Matrix::zeros(batch, dz),
            e3: Matrix::zeros(batch, dz),
        }
    }

    pub fn sample(batch: usize, dz: usize, rng: &mut SeededRng) -> Self {
        SwapNoise {
            e1: rng.normal_matrix(batch, dz),
            e2: rng.normal_matrix(batch, dz),
            e3: rng.normal_matrix(batch, dz),
        }
    }
}

impl DisentangledModel {
    pub fn new(
        enc_s: FeedForwardNet,
        enc_z: FeedForwardNet,
        decoder: FeedForwardNet,
        disc: Option<FeedForwardNet>,
        variant: Variant,
    ) -> Result<Self> {
        let ds = enc_s.out_dim();
        if enc_z.out_dim() % 2 != 0 || enc_z.out_dim() == 0 {
            return Err(Error::shape("enc_z output", "even", enc_z.out_dim()));
        }
        let dz = enc_z.out_dim() / 2;
        let x = decoder.out_dim();
        if decoder.in_dim() != ds + dz {
            return Err(Error::shape("decoder input", ds + dz, decoder.in_dim()));
        }
        if enc_s.in_dim() != x || enc_z.in_dim() != x {
            return Err(Error::shape("encoder input", x, enc_s.in_dim().max(enc_z.in_dim())));
        }
        match (&disc, variant) {
            (Some(d), _) if d.in_dim() != 2 * x || d.out_dim() != 1 => {
                return Err(Error::shape("discriminator", format!("{} -> 1", 2 * x), format!("{} -> {}", d.in_dim(), d.out_dim())))
            }
            (None, Variant::SwapAdversarial) => {
                return Err(Error::Config("adversarial variant needs a discriminator".into()))
            }
            _ => {}
        }
        Ok(DisentangledModel {
            enc_s,
            enc_z,
            decoder,
            disc,
            variant,
            ds,
            dz,
        })
    }

    pub fn init(data_dim: usize, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate_disentangled()?;
        let (ds, dz) = (cfg.specified_dim, cfg.unspecified_dim);
        let enc_s = mlp(data_dim, &cfg.encoder_hidden, ds, cfg.activation, rng)?;
        let enc_z = mlp(data_dim, &cfg.encoder_hidden, 2 * dz, cfg.activation, rng)?;
        let decoder = mlp(ds + dz, &cfg.decoder_hidden, data_dim, cfg.activation, rng)?;
        let disc = match cfg.variant {
            Variant::SwapAdversarial => Some(mlp(2 * data_dim, &cfg.disc_hidden, 1, cfg.activation, rng)?),
            Variant::SwapL2Kl => None,
        };
        DisentangledModel::new(enc_s, enc_z, decoder, disc, cfg.variant)
    }

    pub fn specified_dim(&self) -> usize {
        self.ds
    }

    pub fn unspecified_dim(&self) -> usize {
        self.dz
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.out_dim()
    }

    /// Deterministic codes (posterior mean for `z`).
    pub fn encode(&self, x: &Matrix) -> Result<LatentCode> {
        check_width("disentangled encode", x, self.data_dim())?;
        Ok(LatentCode {
            specified: self.enc_s.forward_batch(x)?,
            unspecified: self.enc_z.forward_batch(x)?.select_cols(0, self.dz),
        })
    }

    pub fn decode(&self, code: &LatentCode) -> Result<Matrix> {
        self.decoder.forward_batch(&code.joint())
    }

    /// The decoder as a map on the specified space, with the unspecified code
    /// held at the prior mean `z = 0`.
    pub fn specified_decoder(&self) -> PartialMap<&FeedForwardNet> {
        PartialMap::head(&self.decoder, vec![0.0; self.dz]).expect("dz < decoder input")
    }

    /// The decoder as a map on the unspecified space, with the specified code
    /// held at `s`.
    pub fn unspecified_decoder(&self, s: &[f64]) -> Result<PartialMap<&FeedForwardNet>> {
        if s.len() != self.ds {
            return Err(Error::shape("unspecified_decoder", self.ds, s.len()));
        }
        PartialMap::tail(&self.decoder, s.to_vec())
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig, seed: u64) -> Checkpoint {
        let mut ck = Checkpoint::new()
            .with_meta("kind", "disentangled")
            .with_meta("seed", seed);
        for (k, v) in cfg.to_pairs() {
            ck = ck.with_meta(format!("config.{k}"), v);
        }
        ck = ck
            .with_net("enc_s", self.enc_s.clone())
            .with_net("enc_z", self.enc_z.clone())
            .with_net("decoder", self.decoder.clone());
        if let Some(d) = &self.disc {
            ck = ck.with_net("disc", d.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        expect_kind(ck, "disentangled")?;
        let variant = Variant::parse(ck.meta("config.variant").unwrap_or("swap_l2_kl"))
            .map_err(|e| Error::Parse(e.to_string()))?;
        DisentangledModel::new(
            ck.require_net("enc_s")?.clone(),
            ck.require_net("enc_z")?.clone(),
            ck.require_net("decoder")?.clone(),
            ck.net("disc").cloned(),
            variant,
        )
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `(1/B) Σ ‖x₁ − f(s₂ ‖ z₁)‖² + ‖x₂ − f(s₁ ‖ z₂)‖²` using posterior means.
pub fn swap_reconstruction_loss(model: &DisentangledModel, x1: &Matrix, x2: &Matrix) -> Result<f64> {
    let noise = SwapNoise::zeros(x1.rows(), model.dz);
    let batch = TripletBatch {
        x1: x1.clone(),
        x2: x2.clone(),
        x3: x1.clone(),
        labels: Vec::new(),
    };
    Ok(disentangled_objective(model, &batch, &noise, 0.0, 0.0)?.0.recon)
}

/// Discriminator logits of `[x ‖ x']` rows.
fn disc_logits(disc: &FeedForwardNet, a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    Ok(disc.forward_batch(&hstack(a, b))?.into_vec())
}

/// `(generator, discriminator)` losses with posterior means:
/// the discriminator separates real pairs `(x₁, x₂)` from fake pairs
/// `(x_{3⊕1}, x₁)`, `x_{3⊕1} = f(s₁ ‖ z₃)`; the generator gets the
/// non-saturating loss `−log d(x_{3⊕1}, x₁)`.
pub fn adversarial_losses(
    model: &DisentangledModel,
    disc: &FeedForwardNet,
    x1: &Matrix,
    x2: &Matrix,
    x3: &Matrix,
) -> Result<(f64, f64)> {
    check_width("adversarial_losses x1", x1, model.data_dim())?;
    check_width("adversarial_losses x2", x2, model.data_dim())?;
    check_width("adversarial_losses x3", x3, model.data_dim())?;
    if x1.rows() != x2.rows() || x1.rows() != x3.rows() {
        return Err(Error::shape("adversarial_losses batch", x1.rows(), x2.rows().max(x3.rows())));
    }
    let b = x1.rows() as f64;
    let c1 = model.encode(x1)?;
    let c3 = model.encode(x3)?;
    let fake = model.decoder.forward_batch(&hstack(&c1.specified, &c3.unspecified))?;
    let real_l = disc_logits(disc, x1, x2)?;
    let fake_l = disc_logits(disc, &fake, x1)?;
    let gen = fake_l.iter().map(|&l| softplus(-l)).sum::<f64>() / b;
    let dl = (real_l.iter().map(|&l| softplus(-l)).sum::<f64>() + fake_l.iter().map(|&l| softplus(l)).sum::<f64>()) / b;
    Ok((gen, dl))
}

struct Encoded {
    s_trace: Trace,
    z_trace: Trace,
    z: Matrix,
}

fn encode_traced(model: &DisentangledModel, x: &Matrix, eps: &Matrix) -> Result<Encoded> {
    let s_trace = model.enc_s.forward_trace(x)?;
    let z_trace = model.enc_z.forward_trace(x)?;
    let z = reparameterize(z_trace.output(), eps);
    Ok(Encoded { s_trace, z_trace, z })
}

/// Full disentangling objective for one triplet batch with explicit noise.
///
/// `total = swap + beta·KL(z₁, z₂) + lambda·gen`, where the adversarial part
/// is present only when the model carries a discriminator. Returns gradients
/// of `total` for the encoders and decoder and of the discriminator loss for
/// the discriminator.
pub fn disentangled_objective(
    model: &DisentangledModel,
    batch: &TripletBatch,
    noise: &SwapNoise,
    beta: f64,
    lambda: f64,
) -> Result<(LossParts, DisentangledGrads)> {
    let (x1, x2, x3) = (&batch.x1, &batch.x2, &batch.x3);
    let xd = model.data_dim();
    check_width("swap x1", x1, xd)?;
    check_width("swap x2", x2, xd)?;
    let nb = x1.rows();
    if x2.rows() != nb {
        return Err(Error::shape("swap batch", nb, x2.rows()));
    }
    for e in [&noise.e1, &noise.e2] {
        if e.shape() != (nb, model.dz) {
            return Err(Error::shape("swap noise", format!("{:?}", (nb, model.dz)), format!("{:?}", e.shape())));
        }
    }
    let b = nb as f64;
    let (ds, dz) = (model.ds, model.dz);

    let x12 = vstack(x1, x2);
    let enc = encode_traced(model, &x12, &vstack(&noise.e1, &noise.e2))?;
    let s = enc.s_trace.output();
    // row i: s₂ ‖ z₁ → x₁; row B+i: s₁ ‖ z₂ → x₂
    let dec_in = Matrix::from_fn(2 * nb, ds + dz, |i, j| {
        if j < ds {
            s.get((i + nb) % (2 * nb), j)
        } else {
            enc.z.get(i, j - ds)
        }
    });
    let td = model.decoder.forward_trace(&dec_in)?;
    let diff = td.output().sub(&x12)?;
    let recon = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / b;
    let kl = kl_rows(enc.z_trace.output(), dz) / b;

    let mut g_dec = vec![0.0; model.decoder.param_count()];
    let mut g_es = vec![0.0; model.enc_s.param_count()];
    let mut g_ez = vec![0.0; model.enc_z.param_count()];
    let mut g_disc = Vec::new();

    let d_in = model.decoder.backward(&td, &diff.scale(2.0 / b), &mut g_dec)?;
    let mut d_s = Matrix::from_fn(2 * nb, ds, |i, j| d_in.get((i + nb) % (2 * nb), j));
    let d_z = Matrix::from_fn(2 * nb, dz, |i, j| d_in.get(i, ds + j));

    let mut gen = 0.0;
    let mut disc_loss = 0.0;
    if let (Some(disc), true) = (&model.disc, lambda > 0.0 || model.variant == Variant::SwapAdversarial) {
        check_width("swap x3", x3, xd)?;
        if x3.rows() != nb || noise.e3.shape() != (nb, dz) {
            return Err(Error::shape("adversarial batch", nb, x3.rows()));
        }
        let t3 = model.enc_z.forward_trace(x3)?;
        let z3 = reparameterize(t3.output(), &noise.e3);
        let s1 = s.select_rows(&(0..nb).collect::<Vec<_>>());
        let tf = model.decoder.forward_trace(&hstack(&s1, &z3))?;
        let fake = tf.output();

        let pairs = vstack(&hstack(x1, x2), &hstack(fake, x1));
        let tdisc = disc.forward_trace(&pairs)?;
        let logits = tdisc.output().as_slice();
        let (real_l, fake_l) = logits.split_at(nb);
        gen = fake_l.iter().map(|&l| softplus(-l)).sum::<f64>() / b;
        disc_loss = (real_l.iter().map(|&l| softplus(-l)).sum::<f64>()
            + fake_l.iter().map(|&l| softplus(l)).sum::<f64>())
            / b;

        // discriminator parameters: d/dl softplus(-l) = σ(l) − 1, d/dl softplus(l) = σ(l)
        g_disc = vec![0.0; disc.param_count()];
        let adj_d = Matrix::from_fn(2 * nb, 1, |i, _| {
            let l = logits[i];
            if i < nb {
                (sigmoid(l) - 1.0) / b
            } else {
                sigmoid(l) / b
            }
        });
        disc.backward(&tdisc, &adj_d, &mut g_disc)?;

        // generator: only the fake image depends on the encoders and decoder
        let adj_g = Matrix::from_fn(2 * nb, 1, |i, _| {
            if i < nb {
                0.0
            } else {
                lambda * (sigmoid(logits[i]) - 1.0) / b
            }
        });
        let mut scratch = vec![0.0; disc.param_count()];
        let d_pairs = disc.backward(&tdisc, &adj_g, &mut scratch)?;
        let d_fake = Matrix::from_fn(nb, xd, |i, j| d_pairs.get(nb + i, j));
        let d_fin = model.decoder.backward(&tf, &d_fake, &mut g_dec)?;
        for i in 0..nb {
            for j in 0..ds {
                let v = d_s.get(i, j) + d_fin.get(i, j);
                d_s.set(i, j, v);
            }
        }
        let d_z3 = Matrix::from_fn(nb, dz, |i, j| d_fin.get(i, ds + j));
        let adj3 = gaussian_adjoint(t3.output(), &noise.e3, &d_z3, 0.0);
        model.enc_z.backward(&t3, &adj3, &mut g_ez)?;
    }

    model.enc_s.backward(&enc.s_trace, &d_s, &mut g_es)?;
    let adj_z = gaussian_adjoint(enc.z_trace.output(), &vstack(&noise.e1, &noise.e2), &d_z, beta / b);
    model.enc_z.backward(&enc.z_trace, &adj_z, &mut g_ez)?;

    Ok((
        LossParts {
            total: recon + beta * kl + lambda * gen,
            recon,
            kl,
            gen,
            disc: disc_loss,
        },
        DisentangledGrads {
            enc_s: g_es,
            enc_z: g_ez,
            decoder: g_dec,
            disc: g_disc,
        },
    ))
}

/// Adam on the disentangling objective over freshly sampled triplets,
/// `ceil(n / batch_size)` steps per epoch. With a discriminator, both players
/// take a simultaneous step on each batch. Deterministic given `seed`.
pub fn train_disentangled(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(DisentangledModel, History)> {
    cfg.validate_disentangled()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let sampler = TripletSampler::new(dataset.labels()?)?;
    let root = SeededRng::new(seed);
    let mut init_rng = root.derive(0);
    let mut triplet_rng = root.derive(1);
    let mut noise_rng = root.derive(2);
    let mut model = DisentangledModel::init(dataset.dim(), cfg, &mut init_rng)?;
    let mut opt_s = Adam::new(model.enc_s.param_count(), cfg.lr);
    let mut opt_z = Adam::new(model.enc_z.param_count(), cfg.lr);
    let mut opt_d = Adam::new(model.decoder.param_count(), cfg.lr);
    let mut opt_disc = model.disc.as_ref().map(|d| Adam::new(d.param_count(), cfg.lr));
    let steps = dataset.len().div_ceil(cfg.batch_size);
    let lambda = if model.disc.is_some() { cfg.lambda } else { 0.0 };
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let mut acc = LossParts::default();
        for _ in 0..steps {
            let idx: Vec<_> = (0..cfg.batch_size).map(|_| sampler.sample(&mut triplet_rng)).collect();
            let batch = gather_triplets(dataset, &idx);
            let noise = SwapNoise::sample(cfg.batch_size, model.dz, &mut noise_rng);
            let (parts, g) = disentangled_objective(&model, &batch, &noise, cfg.beta, lambda)?;
            accumulate(&mut acc, &parts, 1.0 / steps as f64);
            opt_s.step_net(&mut model.enc_s, &g.enc_s);
            opt_z.step_net(&mut model.enc_z, &g.enc_z);
            opt_d.step_net(&mut model.decoder, &g.decoder);
            if let (Some(opt), Some(disc)) = (opt_disc.as_mut(), model.disc.as_mut()) {
                opt.step_net(disc, &g.disc);
            }
        }
        check_finite(&acc, epoch)?;
        history.epochs.push(acc);
    }
    Ok((model, history))
}
