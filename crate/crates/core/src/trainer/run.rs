use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_holdout, Dataset};
use crate::diffcore::{Bound, Gradients, Graph, Mlp, Optimizer, Tensor};
use crate::error::{Error, Result};
use crate::evalor::{acsa, gm, ConfusionMatrix};
use crate::gamo::{
    classifier_loss, discriminator_loss, generator_classifier_loss, generator_discriminator_loss, FeatureExtractor,
    GamoModel, GeneratorNet, Role,
};
use crate::trainer::config::{Players, TrainConfig};
use crate::trainer::sampling::{assign_fake_labels, assign_uniform_labels, batch_indices, latent_batch};

/// One update in the order it was executed, for the instrumented trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Feature,
    RefreshClassData,
    ClassifierReal,
    DiscriminatorReal,
    ClassifierFake,
    DiscriminatorFake,
    GeneratorVsClassifier,
    GeneratorVsDiscriminator,
}

impl Step {
    fn network(self) -> &'static str {
        match self {
            Step::Feature | Step::RefreshClassData => "feature",
            Step::ClassifierReal | Step::ClassifierFake => "classifier",
            Step::DiscriminatorReal | Step::DiscriminatorFake => "discriminator",
            Step::GeneratorVsClassifier | Step::GeneratorVsDiscriminator => "generator",
        }
    }
}

/// Mean loss of each update type over one epoch; `None` when it did not run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub f: Option<f64>,
    pub m_real: Option<f64>,
    pub m_fake: Option<f64>,
    pub d_real: Option<f64>,
    pub d_fake: Option<f64>,
    pub g_vs_m: Option<f64>,
    pub g_vs_d: Option<f64>,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: EpochLosses,
    pub val_acsa: Option<f64>,
    pub val_gm: Option<f64>,
    pub wall_time_s: f64,
}

/// Writes records as JSON lines.
pub fn write_run_log<W: Write>(records: &[EpochRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub acsa: f64,
    pub model: GamoModel,
}

#[derive(Clone, Debug)]
struct Optimizers {
    feature: Optimizer,
    classifier: Optimizer,
    discriminator: Optimizer,
    generator: Vec<Optimizer>,
}

#[derive(Default)]
struct Accumulator {
    sum: [f64; 7],
    count: [usize; 7],
}

impl Accumulator {
    fn add(&mut self, step: Step, value: f64) {
        let k = match step {
            Step::Feature => 0,
            Step::ClassifierReal => 1,
            Step::ClassifierFake => 2,
            Step::DiscriminatorReal => 3,
            Step::DiscriminatorFake => 4,
            Step::GeneratorVsClassifier => 5,
            Step::GeneratorVsDiscriminator => 6,
            Step::RefreshClassData => return,
        };
        self.sum[k] += value;
        self.count[k] += 1;
    }

    fn finish(&self) -> EpochLosses {
        let m = |k: usize| (self.count[k] > 0).then(|| self.sum[k] / self.count[k] as f64);
        EpochLosses {
            f: m(0),
            m_real: m(1),
            m_fake: m(2),
            d_real: m(3),
            d_fake: m(4),
            g_vs_m: m(5),
            g_vs_d: m(6),
        }
    }
}

/// Mutable training state carried across epochs.
#[derive(Clone, Debug)]
pub struct RunState {
    pub epoch: usize,
    pub log: Vec<EpochRecord>,
    pub rng: ChaCha8Rng,
    pub best: Option<BestCheckpoint>,
    /// Every executed update, when tracing is switched on.
    pub trace: Option<Vec<Step>>,
    optimizers: Optimizers,
}

impl RunState {
    pub fn new(model: &GamoModel, cfg: &TrainConfig) -> Self {
        let generator = model
            .generator
            .as_ref()
            .map_or(0, |g| g.nets().len());
        Self {
            epoch: 0,
            log: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            best: None,
            trace: None,
            optimizers: Optimizers {
                feature: Optimizer::new(cfg.optimizers.feature),
                classifier: Optimizer::new(cfg.optimizers.classifier),
                discriminator: Optimizer::new(cfg.optimizers.discriminator),
                generator: (0..generator).map(|_| Optimizer::new(cfg.optimizers.generator)).collect(),
            },
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Serialized RNG position, enough to resume sampling exactly.
    pub fn rng_state(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.rng)?)
    }

    fn record(&mut self, step: Step) {
        if let Some(t) = &mut self.trace {
            t.push(step);
        }
    }
}

fn apply(opt: &mut Optimizer, net: &mut Mlp, bound: &Bound, grads: &Gradients, prefix: &str) -> Result<()> {
    let gs: Vec<Tensor> = bound
        .vars()
        .iter()
        .zip(net.params())
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    let names = net.param_names(prefix);
    opt.step(net.params_mut(), &gs, &names)
}

fn finite(value: f64, step: Step, epoch: usize, index: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged {
            network: step.network(),
            epoch,
            step: index,
        })
    }
}

/// Wraps non-finite failures from the tape or the optimizer into a
/// divergence diagnostic that names the step.
fn diagnose<T>(r: Result<T>, step: Step, epoch: usize, index: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(_) | Error::NonFiniteGradient(_) => Error::Diverged {
            network: step.network(),
            epoch,
            step: index,
        },
        other => other,
    })
}

fn feature_step(model: &mut GamoModel, opt: &mut Optimizer, x: Tensor, labels: &[usize], cfg: &TrainConfig) -> Result<f64> {
    let FeatureExtractor::Dense(fnet) = &mut model.feature else {
        return Ok(0.0);
    };
    let mut g = Graph::new();
    let fb = fnet.bind(&mut g, true);
    let mb = model.classifier.net.bind(&mut g, false);
    let xv = g.constant(x);
    let h = fnet.forward_graph(&mut g, &fb, xv)?;
    let out = model.classifier.net.forward_graph(&mut g, &mb, h)?;
    let loss = classifier_loss(&mut g, cfg.loss, out, labels, Role::Real)?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    apply(opt, fnet, &fb, &grads, "feature")?;
    Ok(value)
}

fn classifier_step(model: &mut GamoModel, opt: &mut Optimizer, x: Tensor, labels: &[usize], role: Role, cfg: &TrainConfig) -> Result<f64> {
    let net = &mut model.classifier.net;
    let mut g = Graph::new();
    let mb = net.bind(&mut g, true);
    let xv = g.constant(x);
    let out = net.forward_graph(&mut g, &mb, xv)?;
    let loss = classifier_loss(&mut g, cfg.loss, out, labels, role)?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    apply(opt, net, &mb, &grads, "classifier")?;
    Ok(value)
}

fn discriminator_step(model: &mut GamoModel, opt: &mut Optimizer, x: Tensor, labels: &[usize], real: bool, cfg: &TrainConfig) -> Result<f64> {
    let d = model
        .discriminator
        .as_mut()
        .ok_or_else(|| Error::Config("no discriminator in this model".into()))?;
    let mut g = Graph::new();
    let db = d.net.bind(&mut g, true);
    let xv = g.constant(x);
    let out = d.forward_graph(&mut g, &db, xv, labels)?;
    let loss = discriminator_loss(&mut g, cfg.loss, out, real)?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    apply(opt, &mut d.net, &db, &grads, "discriminator")?;
    Ok(value)
}

fn generator_step(
    model: &mut GamoModel,
    opts: &mut [Optimizer],
    z: &Tensor,
    labels: &[usize],
    against_classifier: bool,
    cfg: &TrainConfig,
) -> Result<f64> {
    let GamoModel {
        generator,
        classifier,
        discriminator,
        ..
    } = model;
    let gen = generator
        .as_mut()
        .ok_or_else(|| Error::Config("no generator in this model".into()))?;
    let mut g = Graph::new();
    let gb = gen.bind(&mut g, true);
    let zv = g.constant(z.clone());
    let fake = gen.forward_graph(&mut g, &gb, zv, labels)?;
    let loss = if against_classifier {
        let mb = classifier.net.bind(&mut g, false);
        let out = classifier.net.forward_graph(&mut g, &mb, fake)?;
        generator_classifier_loss(&mut g, cfg.loss, out, labels)?
    } else {
        let d = discriminator
            .as_ref()
            .ok_or_else(|| Error::Config("no discriminator in this model".into()))?;
        let db = d.net.bind(&mut g, false);
        let out = d.forward_graph(&mut g, &db, fake, labels)?;
        generator_discriminator_loss(&mut g, cfg.loss, out)?
    };
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    let names = gen.net_names();
    for (((net, bound), opt), name) in gen.nets_mut().into_iter().zip(&gb).zip(opts.iter_mut()).zip(&names) {
        // Networks that saw no sample this step (IGUs of absent classes) stay put.
        if bound.vars().iter().any(|&v| grads.get(v).is_some()) {
            apply(opt, net, bound, &grads, name)?;
        }
    }
    Ok(value)
}

/// Class predictions and the confusion matrix of `model` on `data`.
pub fn evaluate(model: &GamoModel, data: &Dataset) -> Result<ConfusionMatrix> {
    let pred = model.predict(data.features())?;
    ConfusionMatrix::from_predictions(data.labels(), &pred, data.num_classes())
}

/// One pass of the alternating updates:
///
/// 1. `u` feature-extractor steps on real batches with `M` frozen (skipped
///    unless the extractor is trainable and enabled), then the generator's
///    class snapshots are refreshed in the new feature space;
/// 2. `v` iterations of: `M` and `D` on a real batch; `M` and `D` on a
///    generated batch with `G` frozen; `G` against frozen `M`; `G` against
///    frozen `D` on the same latent batch.
pub fn train_epoch(
    model: &mut GamoModel,
    data: &Dataset,
    cfg: &TrainConfig,
    players: &Players,
    state: &mut RunState,
) -> Result<EpochLosses> {
    if model.classes != data.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, data {}",
            model.classes,
            data.num_classes()
        )));
    }
    let epoch = state.epoch;
    let n = data.len();
    let b = cfg.batch_size;
    let (u, v) = cfg.step_counts(n);
    let mut acc = Accumulator::default();

    if cfg.train_feature && model.feature.is_trainable() {
        for s in 0..u {
            let rows = batch_indices(n, b, &mut state.rng);
            let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
            let x = data.features().select_rows(&rows)?;
            let loss = diagnose(feature_step(model, &mut state.optimizers.feature, x, &labels, cfg), Step::Feature, epoch, s)?;
            acc.add(Step::Feature, finite(loss, Step::Feature, epoch, s)?);
            state.record(Step::Feature);
        }
    }
    let feats = model.features(data.features())?;
    let featured = data.with_features(feats.clone())?;
    if let Some(gen) = &mut model.generator {
        gen.refresh_class_data(&featured)?;
        state.record(Step::RefreshClassData);
    }

    let has_gen = model.generator.is_some() && players.generator != crate::gamo::GeneratorKind::None;
    let has_d = model.discriminator.is_some() && players.discriminator;
    let adversarial = has_gen && players.classifier_adversarial;
    let latent = model.latent_dim;

    for s in 0..v {
        let rows = batch_indices(n, b, &mut state.rng);
        let labels: Vec<usize> = rows.iter().map(|&r| data.labels()[r]).collect();
        let x = feats.select_rows(&rows)?;

        let loss = diagnose(
            classifier_step(model, &mut state.optimizers.classifier, x.clone(), &labels, Role::Real, cfg),
            Step::ClassifierReal,
            epoch,
            s,
        )?;
        acc.add(Step::ClassifierReal, finite(loss, Step::ClassifierReal, epoch, s)?);
        state.record(Step::ClassifierReal);
        if has_d {
            let loss = diagnose(
                discriminator_step(model, &mut state.optimizers.discriminator, x, &labels, true, cfg),
                Step::DiscriminatorReal,
                epoch,
                s,
            )?;
            acc.add(Step::DiscriminatorReal, finite(loss, Step::DiscriminatorReal, epoch, s)?);
            state.record(Step::DiscriminatorReal);
        }
        if !has_gen {
            continue;
        }

        let fake_labels = match assign_fake_labels(data.priors(), b, &mut state.rng) {
            Ok(l) => Some(l),
            Err(Error::NothingToOversample) => None,
            Err(e) => return Err(e),
        };
        if let Some(fake_labels) = fake_labels {
            let z = latent_batch(b, latent, &mut state.rng);
            let fake = model
                .generator
                .as_ref()
                .expect("checked above")
                .sample(&z, &fake_labels)?;
            if adversarial {
                let loss = diagnose(
                    classifier_step(model, &mut state.optimizers.classifier, fake.clone(), &fake_labels, Role::Generated, cfg),
                    Step::ClassifierFake,
                    epoch,
                    s,
                )?;
                acc.add(Step::ClassifierFake, finite(loss, Step::ClassifierFake, epoch, s)?);
                state.record(Step::ClassifierFake);
            }
            if has_d {
                let loss = diagnose(
                    discriminator_step(model, &mut state.optimizers.discriminator, fake, &fake_labels, false, cfg),
                    Step::DiscriminatorFake,
                    epoch,
                    s,
                )?;
                acc.add(Step::DiscriminatorFake, finite(loss, Step::DiscriminatorFake, epoch, s)?);
                state.record(Step::DiscriminatorFake);
            }
        }

        let g_labels = assign_uniform_labels(model.classes, b, &mut state.rng)?;
        let z = latent_batch(b, latent, &mut state.rng);
        if adversarial {
            let loss = diagnose(
                generator_step(model, &mut state.optimizers.generator, &z, &g_labels, true, cfg),
                Step::GeneratorVsClassifier,
                epoch,
                s,
            )?;
            acc.add(Step::GeneratorVsClassifier, finite(loss, Step::GeneratorVsClassifier, epoch, s)?);
            state.record(Step::GeneratorVsClassifier);
        }
        if has_d {
            let loss = diagnose(
                generator_step(model, &mut state.optimizers.generator, &z, &g_labels, false, cfg),
                Step::GeneratorVsDiscriminator,
                epoch,
                s,
            )?;
            acc.add(Step::GeneratorVsDiscriminator, finite(loss, Step::GeneratorVsDiscriminator, epoch, s)?);
            state.record(Step::GeneratorVsDiscriminator);
        }
    }
    state.epoch += 1;
    model.epochs_trained += 1;
    Ok(acc.finish())
}

/// Runs `cfg.epochs` epochs on `train`, scoring `val` after each one and
/// keeping the parameters with the best validation ACSA (earliest on ties).
pub fn train(
    mut model: GamoModel,
    train: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    players: &Players,
    mut state: RunState,
) -> Result<(GamoModel, RunState)> {
    cfg.validate()?;
    players.validate()?;
    let start = Instant::now();
    for _ in 0..cfg.epochs {
        let losses = train_epoch(&mut model, train, cfg, players, &mut state)?;
        let (val_acsa, val_gm) = match val {
            Some(v) if !v.is_empty() => {
                let cm = evaluate(&model, v)?;
                (Some(acsa(&cm)?), Some(gm(&cm)?))
            }
            _ => (None, None),
        };
        let epoch = state.epoch - 1;
        let score = val_acsa.unwrap_or(f64::NEG_INFINITY);
        if state.best.as_ref().is_none_or(|b| score > b.acsa || val_acsa.is_none()) {
            state.best = Some(BestCheckpoint {
                epoch,
                acsa: score,
                model: model.clone(),
            });
        }
        state.log.push(EpochRecord {
            epoch,
            losses,
            val_acsa,
            val_gm,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, state))
}

/// Train/validation split used by [`fit`]; the holdout stream is seeded
/// separately from the training stream.
pub fn split_for_training(data: &Dataset, cfg: &TrainConfig) -> Result<(Dataset, Option<Dataset>)> {
    if cfg.validation_fraction == 0.0 {
        return Ok((data.clone(), None));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_4A11_D47E);
    let (train, val) = stratified_holdout(data, cfg.validation_fraction, &mut rng)?;
    Ok((train, Some(val)))
}

pub struct FitOutcome {
    /// Parameters after the last epoch.
    pub last: GamoModel,
    /// Parameters with the best validation ACSA.
    pub best: GamoModel,
    pub state: RunState,
    pub train: Dataset,
    pub val: Option<Dataset>,
}

/// Splits off a validation set, builds fresh networks and trains them.
pub fn fit(data: &Dataset, cfg: &TrainConfig, players: &Players) -> Result<FitOutcome> {
    let (train_set, val) = split_for_training(data, cfg)?;
    fit_split(train_set, val, cfg, players)
}

/// [`fit`] on a ready-made train/validation split.
pub fn fit_split(train_set: Dataset, val: Option<Dataset>, cfg: &TrainConfig, players: &Players) -> Result<FitOutcome> {
    cfg.validate()?;
    players.validate()?;
    let model = GamoModel::init(&cfg.arch, players.generator, players.discriminator, cfg.loss, &train_set, cfg.seed)?;
    let state = RunState::new(&model, cfg);
    let (last, state) = train(model, &train_set, val.as_ref(), cfg, players, state)?;
    let best = state.best.as_ref().map_or_else(|| last.clone(), |b| b.model.clone());
    Ok(FitOutcome {
        last,
        best,
        state,
        train: train_set,
        val,
    })
}

/// Untraced samples from the model's generator for `labels`.
pub fn generate(model: &GamoModel, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let gen: &GeneratorNet = model
        .generator
        .as_ref()
        .ok_or_else(|| Error::Config("model has no generator".into()))?;
    let z = latent_batch(labels.len(), model.latent_dim, rng);
    gen.sample(&z, labels)
}
