//! The episode schedule.
//!
//! Stage 1 trains generator and identity classifier once. Every episode then
//! (2) re-draws and trains all discriminators when `episode mod T_ep == 0`,
//! (3) trains generator and classifier against the frozen ensembles, and
//! (4) lets the selected members catch up until their held-out accuracy beats
//! `A*` or `T_plat` iterations pass.
//!
//! Each component draws from its own ChaCha stream, so adding a second
//! ensemble leaves the first ensemble's initialization and batches untouched.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_br, loss_class, member_att_loss};
use super::{
    select_member, Ensemble, Generator, IdentityClassifier, ModelDigest, PassConfig, PassError,
    PassModel, StageRecord, TrainLog,
};
use crate::data::{stratified_holdout, DescriptorSet};
use crate::nn::sgd_step;

const STREAM_MODEL: u64 = 0;
const STREAM_MODEL_BATCH: u64 = 1;
const HOLDOUT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn ensemble_init_stream(seed: u64, e: usize) -> ChaCha8Rng {
    stream(seed, 2 + 2 * e as u64)
}

fn ensemble_batch_stream(seed: u64, e: usize) -> ChaCha8Rng {
    stream(seed, 3 + 2 * e as u64)
}

fn sample(rng: &mut ChaCha8Rng, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.random_range(0..n)).collect()
}

fn pick<T: Copy>(values: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&r| values[r]).collect()
}

/// Training rows and labels in dense index form.
struct Prepared {
    x: Array2<f64>,
    ids: Vec<usize>,
    attrs: Vec<Vec<usize>>,
    x_val: Array2<f64>,
    attrs_val: Vec<Vec<usize>>,
    categories: Vec<usize>,
    identities: usize,
}

fn attr_field(config: &PassConfig, e: usize) -> &'static str {
    match (config.adversaries.len(), e) {
        (1, _) => "attr",
        (_, 0) => "attr_a",
        _ => "attr_b",
    }
}

fn prepare(data: &DescriptorSet, config: &PassConfig) -> Result<Prepared, PassError> {
    let mut columns = Vec::with_capacity(config.adversaries.len());
    for (e, adv) in config.adversaries.iter().enumerate() {
        let col = data.attribute(&adv.attribute).map_err(|_| {
            PassError::config(
                attr_field(config, e),
                format!(
                    "attribute {:?} not in data; available: [{}]",
                    adv.attribute,
                    data.attribute_names().join(", ")
                ),
            )
        })?;
        columns.push(col);
    }
    let (kept, held) = stratified_holdout(
        &columns[0].labels,
        config.val_fraction,
        config.seed ^ HOLDOUT_SALT,
    );
    if held.is_empty() || kept.is_empty() {
        return Err(PassError::config(
            "val_fraction",
            format!(
                "{} rows cannot be split into training and validation parts",
                data.len()
            ),
        ));
    }
    let id_set = data.identity_set();
    let dense: std::collections::BTreeMap<u32, usize> =
        id_set.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let all = data.features_f64();
    let ids_all: Vec<usize> = data.identities().iter().map(|id| dense[id]).collect();
    Ok(Prepared {
        x: all.select(Axis(0), &kept),
        ids: pick(&ids_all, &kept),
        attrs: columns
            .iter()
            .map(|c| kept.iter().map(|&r| c.labels[r] as usize).collect())
            .collect(),
        x_val: all.select(Axis(0), &held),
        attrs_val: columns
            .iter()
            .map(|c| held.iter().map(|&r| c.labels[r] as usize).collect())
            .collect(),
        categories: columns.iter().map(|c| c.categories as usize).collect(),
        identities: id_set.len(),
    })
}

struct Trainer<'a> {
    cfg: &'a PassConfig,
    data: Prepared,
    model: PassModel,
    log: TrainLog,
    model_batch: ChaCha8Rng,
    ens_init: Vec<ChaCha8Rng>,
    ens_batch: Vec<ChaCha8Rng>,
}

impl<'a> Trainer<'a> {
    fn new(data: &DescriptorSet, cfg: &'a PassConfig) -> Result<Self, PassError> {
        cfg.validate()?;
        let data = prepare(data, cfg)?;
        let mut model_rng = stream(cfg.seed, STREAM_MODEL);
        let generator = Generator::random(data.x.ncols(), cfg.out_dim, &mut model_rng)?;
        let classifier = IdentityClassifier::random(cfg.out_dim, data.identities, &mut model_rng)?;
        let mut ens_init: Vec<ChaCha8Rng> = (0..cfg.adversaries.len())
            .map(|e| ensemble_init_stream(cfg.seed, e))
            .collect();
        let ensembles = cfg
            .adversaries
            .iter()
            .enumerate()
            .map(|(e, a)| {
                Ensemble::random(
                    a.attribute.clone(),
                    a.lambda,
                    a.k,
                    cfg.out_dim,
                    cfg.disc_hidden,
                    data.categories[e],
                    &mut ens_init[e],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cfg,
            ens_batch: (0..cfg.adversaries.len())
                .map(|e| ensemble_batch_stream(cfg.seed, e))
                .collect(),
            ens_init,
            model_batch: stream(cfg.seed, STREAM_MODEL_BATCH),
            model: PassModel {
                generator,
                classifier,
                ensembles,
            },
            log: TrainLog::default(),
            data,
        })
    }

    fn run(mut self) -> Result<(PassModel, TrainLog), PassError> {
        self.stage1()?;
        for episode in 0..self.cfg.n_ep {
            if episode % self.cfg.t_ep == 0 {
                self.stage2(episode)?;
            }
            self.stage3(episode)?;
            self.stage4(episode)?;
        }
        Ok((self.model, self.log))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        episode: usize,
        stage: u8,
        iterations: usize,
        reinitialized: bool,
        trained_members: Vec<(usize, usize)>,
        val_acc: Vec<f64>,
        before: ModelDigest,
    ) {
        self.log.stages.push(StageRecord {
            episode,
            stage,
            iterations,
            reinitialized,
            trained_members,
            val_acc,
            before,
            after: ModelDigest::of(&self.model),
        });
    }

    fn stage1(&mut self) -> Result<(), PassError> {
        let before = ModelDigest::of(&self.model);
        let n = self.data.x.nrows();
        for iter in 0..self.cfg.t_fc {
            let rows = sample(&mut self.model_batch, n, self.cfg.batch_size);
            let x = self.data.x.select(Axis(0), &rows);
            let ids = pick(&self.data.ids, &rows);
            let gen = self.model.generator.net();
            let cache = gen.forward(x.view())?;
            let class = loss_class(&self.model.classifier, cache.output().view(), &ids)?;
            let back = gen.backward(&cache, class.input_grad.view())?;
            sgd_step(self.model.generator.net_mut(), &back.grads, self.cfg.alpha1)?;
            sgd_step(
                self.model.classifier.net_mut(),
                &class.classifier,
                self.cfg.alpha1,
            )?;
            self.log
                .push(0, 1, iter, "L_class".into(), class.value, None, None);
        }
        self.record(0, 1, self.cfg.t_fc, false, vec![], vec![], before);
        Ok(())
    }

    fn stage2(&mut self, episode: usize) -> Result<(), PassError> {
        let before = ModelDigest::of(&self.model);
        let f_all = self.model.generator.transform(self.data.x.view())?;
        let mut trained = Vec::new();
        let mut iterations = 0;
        for e in 0..self.model.ensembles.len() {
            self.model.ensembles[e].reinitialize(&mut self.ens_init[e])?;
            let t_atrain = self.cfg.adversaries[e].t_atrain;
            let name = format!("L_att:{}", self.model.ensembles[e].attribute);
            for iter in 0..t_atrain {
                let rows = sample(&mut self.ens_batch[e], f_all.nrows(), self.cfg.batch_size);
                let f = f_all.select(Axis(0), &rows);
                let labels = pick(&self.data.attrs[e], &rows);
                let mut total = 0.0;
                for member in &mut self.model.ensembles[e].members {
                    let l = member_att_loss(member, f.view(), &labels)?;
                    sgd_step(member.net_mut(), &l.grads, self.cfg.alpha2)?;
                    total += l.value;
                }
                self.log
                    .push(episode, 2, iter, name.clone(), total, None, None);
            }
            iterations = iterations.max(t_atrain);
            trained.extend((0..self.model.ensembles[e].k()).map(|k| (e, k)));
        }
        self.record(episode, 2, iterations, true, trained, vec![], before);
        Ok(())
    }

    fn stage3(&mut self, episode: usize) -> Result<(), PassError> {
        let before = ModelDigest::of(&self.model);
        let n = self.data.x.nrows();
        let names: Vec<String> = self
            .model
            .ensembles
            .iter()
            .map(|e| format!("L_deb:{}", e.attribute))
            .collect();
        for iter in 0..self.cfg.t_deb {
            let rows = sample(&mut self.model_batch, n, self.cfg.batch_size);
            let x = self.data.x.select(Axis(0), &rows);
            let ids = pick(&self.data.ids, &rows);
            let br = loss_br(&self.model, x.view(), &ids)?;
            sgd_step(
                self.model.generator.net_mut(),
                &br.generator,
                self.cfg.alpha3,
            )?;
            sgd_step(
                self.model.classifier.net_mut(),
                &br.classifier,
                self.cfg.alpha3,
            )?;
            self.log
                .push(episode, 3, iter, "L_class".into(), br.class, None, None);
            for (d, name) in br.deb.iter().zip(&names) {
                self.log
                    .push(episode, 3, iter, name.clone(), d.value, Some(d.argmax), None);
            }
            self.log
                .push(episode, 3, iter, "L_br".into(), br.value, None, None);
        }
        self.record(episode, 3, self.cfg.t_deb, false, vec![], vec![], before);
        Ok(())
    }

    /// Lowest validation accuracy among the selected members of ensemble `e`.
    fn val_accuracy(&self, e: usize, f_val: ArrayView2<f64>, members: &[usize]) -> Result<f64, PassError> {
        let mut acc = f64::INFINITY;
        for &k in members {
            let a = self.model.ensembles[e].members[k].accuracy(f_val, &self.data.attrs_val[e])?;
            acc = acc.min(a);
        }
        Ok(acc)
    }

    fn stage4(&mut self, episode: usize) -> Result<(), PassError> {
        let before = ModelDigest::of(&self.model);
        let f_all = self.model.generator.transform(self.data.x.view())?;
        let f_val = self.model.generator.transform(self.data.x_val.view())?;
        let selected: Vec<Vec<usize>> = self
            .model
            .ensembles
            .iter()
            .map(|e| select_member(self.cfg.schedule, episode, e.k()))
            .collect();
        let names: Vec<(String, String)> = self
            .model
            .ensembles
            .iter()
            .map(|e| (format!("L_att:{}", e.attribute), format!("val_acc:{}", e.attribute)))
            .collect();
        let mut acc = vec![0.0; selected.len()];
        let mut steps = 0;
        for iter in 0..self.cfg.t_plat {
            if iter % self.cfg.acc_check_every == 0 {
                for e in 0..selected.len() {
                    acc[e] = self.val_accuracy(e, f_val.view(), &selected[e])?;
                    self.log
                        .push(episode, 4, iter, names[e].1.clone(), acc[e], None, Some(acc[e]));
                }
                let done = acc
                    .iter()
                    .zip(&self.cfg.adversaries)
                    .all(|(&a, adv)| a > adv.a_star);
                if done {
                    break;
                }
            }
            for e in 0..selected.len() {
                let rows = sample(&mut self.ens_batch[e], f_all.nrows(), self.cfg.batch_size);
                let f = f_all.select(Axis(0), &rows);
                let labels = pick(&self.data.attrs[e], &rows);
                for &k in &selected[e] {
                    let member = &mut self.model.ensembles[e].members[k];
                    let l = member_att_loss(member, f.view(), &labels)?;
                    sgd_step(member.net_mut(), &l.grads, self.cfg.alpha2)?;
                    self.log.push(
                        episode,
                        4,
                        iter,
                        names[e].0.clone(),
                        l.value,
                        Some(k),
                        Some(acc[e]),
                    );
                }
            }
            steps += 1;
        }
        let trained = selected
            .iter()
            .enumerate()
            .flat_map(|(e, ks)| ks.iter().map(move |&k| (e, k)))
            .collect();
        self.record(episode, 4, steps, false, trained, acc, before);
        Ok(())
    }
}

/// Runs the schedule for however many adversaries `config` lists.
pub fn train(data: &DescriptorSet, config: &PassConfig) -> Result<(PassModel, TrainLog), PassError> {
    Trainer::new(data, config)?.run()
}

/// Single-attribute training; `config` must list exactly one adversary.
pub fn train_pass(
    data: &DescriptorSet,
    config: &PassConfig,
) -> Result<(PassModel, TrainLog), PassError> {
    if config.adversaries.len() != 1 {
        return Err(PassError::config(
            "attr",
            format!(
                "PASS trains one adversary, config lists {}",
                config.adversaries.len()
            ),
        ));
    }
    train(data, config)
}

/// Two-attribute training; `config` must list exactly two adversaries.
pub fn train_multipass(
    data: &DescriptorSet,
    config: &PassConfig,
) -> Result<(PassModel, TrainLog), PassError> {
    if config.adversaries.len() != 2 {
        return Err(PassError::config(
            "attr_b",
            format!(
                "MultiPASS trains two adversaries, config lists {}",
                config.adversaries.len()
            ),
        ));
    }
    train(data, config)
}
