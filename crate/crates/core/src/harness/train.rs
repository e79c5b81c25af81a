//! The training loop: augmentation, feature extraction, one Adam step per
//! sequence, learning-rate scheduling and checkpoint selection.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{AugCounters, Augmenter};
use super::config::{PlateauMonitor, RunConfig, Scheduler, Selection};
use super::schedule::PlateauScheduler;
use crate::autodiff::{adam_step, AdamState, Graph, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::loss::{downsample_labels, total_loss, LossConfig};
use crate::metrics::{edit_score, frame_accuracy, mean_std, run_length};
use crate::model::MsTcrNet;
use crate::preprocess::{features, fir_lowpass_resample, SensorSequence, TARGET_HZ};

/// A sequence together with its identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedSequence {
    pub id: String,
    pub seq: SensorSequence,
}

impl NamedSequence {
    pub fn new(id: impl Into<String>, seq: SensorSequence) -> Self {
        NamedSequence { id: id.into(), seq }
    }
}

/// Brings a recording to the network rate: sequences sampled faster than
/// 30 Hz are low-pass filtered and resampled, others pass unchanged.
pub fn prepare(seq: &SensorSequence) -> Result<SensorSequence> {
    if seq.rate_hz() > TARGET_HZ + 1e-9 {
        fir_lowpass_resample(seq, TARGET_HZ)
    } else {
        Ok(seq.clone())
    }
}

/// Network input (`M × T`) of an un-augmented sequence.
pub fn input_tensor(seq: &SensorSequence) -> Result<Tensor<f32>> {
    Ok(features(seq)?.to_tensor())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_edit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The selected weights.
    pub net: MsTcrNet<f32>,
    pub selected_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub counters: AugCounters,
}

/// Summed loss over every head for one sequence, plus the parameter
/// bindings needed to read gradients back.
fn sequence_loss<R: Rng + ?Sized>(
    net: &MsTcrNet<f32>,
    input: Tensor<f32>,
    labels: &[usize],
    loss_cfg: &LossConfig,
    training: bool,
    rng: &mut R,
) -> Result<(Graph<f32>, crate::autodiff::BoundParams, crate::autodiff::Var)> {
    let mut g = Graph::new();
    let p = net.params().bind(&mut g);
    let x = g.constant(input);
    let out = net.forward(&mut g, &p, x, training, rng)?;
    let work = downsample_labels(labels, net.config().primary_sampling);
    let pairs: Vec<_> = out.heads.iter().map(|&h| (h, work.as_slice())).collect();
    let loss = total_loss(&mut g, &pairs, loss_cfg)?;
    Ok((g, p, loss))
}

/// Eval-mode loss of one sequence.
pub fn eval_loss(net: &MsTcrNet<f32>, input: &Tensor<f32>, labels: &[usize], loss_cfg: &LossConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (g, _, loss) = sequence_loss(net, input.clone(), labels, loss_cfg, false, &mut rng)?;
    Ok(g.value(loss).data()[0] as f64)
}

/// Frame labels of the final stage.
pub fn predict(net: &MsTcrNet<f32>, input: &Tensor<f32>) -> Result<Vec<usize>> {
    Ok(net.predict(input)?.argmax_axis0())
}

/// Trains one network on `train`, selecting weights on `val`.
///
/// Fully determined by `seed`: it fixes initialization, dropout masks, the
/// per-epoch sequence order and every augmentation draw. Events go to
/// `events` as one JSON object per line.
pub fn train_model(
    cfg: &RunConfig,
    num_classes: usize,
    train: &[NamedSequence],
    val: &[NamedSequence],
    seed: u64,
    mut events: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let layout = train
        .first()
        .ok_or_else(|| Error::invalid("training split is empty"))?
        .seq
        .layout();
    if let Some(s) = train.iter().chain(val).find(|s| s.seq.layout() != layout) {
        return Err(Error::invalid(format!("sequence {} has a different channel layout", s.id)));
    }
    let mut net = MsTcrNet::<f32>::new(cfg.model_for(layout.width(), num_classes), seed)?;
    let mut adam = AdamState::new(cfg.lr);
    let mut aug = Augmenter::new(cfg.aug, layout.default_hands());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut scheduler = match cfg.scheduler {
        Scheduler::None => None,
        Scheduler::HalveOnPlateau { patience } => Some(PlateauScheduler::new(patience)),
    };
    let val_inputs = val.iter().map(|s| input_tensor(&s.seq)).collect::<Result<Vec<_>>>()?;
    let select_on_val = cfg.selection == Selection::BestValEdit && !val.is_empty();
    if cfg.selection == Selection::BestValEdit && val.is_empty() {
        log::info!("no validation split; keeping the final epoch");
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut losses = Vec::with_capacity(train.len());
        for &i in &order {
            let item = &train[i];
            let diverged = |detail: String| Error::Diverged {
                epoch,
                sequence: item.id.clone(),
                detail,
            };
            let s = aug.apply(&item.id, &item.seq, &mut rng)?;
            let (g, p, loss) = sequence_loss(&net, input_tensor(&s)?, s.labels(), &cfg.loss, true, &mut rng)?;
            let value = g.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(diverged(format!("loss {value} at lr {}", adam.lr)));
            }
            let grads = g.backward(loss).map_err(|e| match e {
                Error::NonFinite(what) => diverged(format!("{what} at lr {}", adam.lr)),
                other => other,
            })?;
            net.params_mut().zero_grad();
            net.params_mut().accumulate_grads(&p, &grads)?;
            adam_step(net.params_mut(), &mut adam);
            losses.push(value);
        }
        let train_loss = mean_std(&losses).0;

        let (mut val_loss, mut val_edit, mut val_accuracy) = (None, None, None);
        if !val.is_empty() {
            let mut edits = Vec::with_capacity(val.len());
            let mut accs = Vec::with_capacity(val.len());
            let mut vl = Vec::new();
            for (s, x) in val.iter().zip(&val_inputs) {
                let pred = predict(&net, x)?;
                edits.push(edit_score(&run_length(&pred), &run_length(s.seq.labels())));
                accs.push(frame_accuracy(&pred, s.seq.labels())?);
                if cfg.monitor == PlateauMonitor::ValLoss {
                    vl.push(eval_loss(&net, x, s.seq.labels(), &cfg.loss)?);
                }
            }
            val_edit = Some(mean_std(&edits).0);
            val_accuracy = Some(mean_std(&accs).0);
            val_loss = (!vl.is_empty()).then(|| mean_std(&vl).0);
        }

        let record = EpochRecord {
            epoch,
            train_loss,
            lr: adam.lr,
            val_loss,
            val_edit,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch}: loss {train_loss:.5} lr {:.3e} val edit {val_edit:?}", adam.lr);
        if let Some(w) = events.as_deref_mut() {
            let line = serde_json::json!({ "event": "epoch", "seed": seed, "record": &record });
            writeln!(w, "{line}").map_err(|e| Error::io("<events>", e))?;
        }
        history.push(record);

        if let Some(s) = scheduler.as_mut() {
            let monitored = match cfg.monitor {
                PlateauMonitor::TrainLoss => Some(train_loss),
                PlateauMonitor::ValLoss => val_loss,
            };
            if let Some(l) = monitored {
                if s.observe(l) {
                    adam.lr *= 0.5;
                    log::info!("epoch {epoch}: loss plateau, lr halved to {:.3e}", adam.lr);
                }
            }
        }
        if select_on_val {
            let edit = val_edit.expect("validation ran");
            if best.as_ref().is_none_or(|(b, _, _)| edit > *b) {
                best = Some((edit, epoch, net.params().clone()));
            }
        }
    }

    let (selected_epoch, net) = match best {
        Some((_, epoch, params)) => (epoch, MsTcrNet::from_params(net.config().clone(), params)?),
        None => (cfg.epochs, net),
    };
    Ok(TrainOutcome {
        net,
        selected_epoch,
        history,
        counters: aug.counters(),
    })
}
