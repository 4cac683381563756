//! The adversarial training loop.
//!
//! One training cycle runs `critic_steps` critic updates — each scoring a
//! fresh batch of sampled fake orders against the batch's real orders — then
//! one generator update. The policy variants update the generator by
//! REINFORCE: sampling severs the graph between the nets, so critic scores
//! enter the generator loss as constant reward weights on the sample NLLs.
//! The continuous baseline keeps the classic differentiable path through the
//! critic instead.
//!
//! Per-cycle metrics append to `metrics.csv`
//! (`epoch,step,loss_c,loss_g,nll_real_mean,entropy_mean`), per-epoch
//! validation divergences to `valid.csv` (`epoch,kld,mse`). Checkpoints are
//! a parameter-store file plus a text manifest carrying config, counters,
//! and RNG cursors, which is what makes resume bit-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dataflow::{Batcher, WindowPair};
use numcore::graph::Mode;
use numcore::rng::{self, RngCursor};
use numcore::{AdamConfig, AdamState, Graph, ParamStore, Real};
use orderdomain::{Condition, Order};
use rand_chacha::ChaCha8Rng;

use crate::baseline::ContinuousBaselineNet;
use crate::error::GanError;
use crate::layers::init_rng;
use crate::losses::{
    advantage_weights, critic_loss_node, nll_node, weighted_nll_loss,
    LossVariant, SampledFields,
};
use crate::nets::{
    hist_tensor, order_feats_tensor, quotes_tensor, seeds_tensor, CriticNet, GeneratorNet,
    NetWidths,
};
use crate::policy::{Policy, PolicySample, Seed};

pub const METRICS_FILE: &str = "metrics.csv";
pub const VALID_FILE: &str = "valid.csv";
pub const METRICS_HEADER: &str = "epoch,step,loss_c,loss_g,nll_real_mean,entropy_mean";
pub const VALID_HEADER: &str = "epoch,kld,mse";
pub const ABORT_TAG: &str = "abort";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Pgsgan,
    PgsganHl,
    DcganBaseline,
}

impl ModelVariant {
    pub fn parse(name: &str) -> Result<Self, GanError> {
        match name {
            "pgsgan" => Ok(ModelVariant::Pgsgan),
            "pgsgan-hl" => Ok(ModelVariant::PgsganHl),
            "dcgan-baseline" => Ok(ModelVariant::DcganBaseline),
            other => Err(GanError::Config(format!(
                "unknown variant {other:?} (pgsgan | pgsgan-hl | dcgan-baseline)"
            ))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ModelVariant::Pgsgan => "pgsgan",
            ModelVariant::PgsganHl => "pgsgan-hl",
            ModelVariant::DcganBaseline => "dcgan-baseline",
        }
    }

    pub fn loss_variant(self) -> LossVariant {
        match self {
            ModelVariant::PgsganHl => LossVariant::Hinge,
            _ => LossVariant::Plain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Critic updates per generator update (two time-scale rule).
    pub critic_steps: usize,
    pub variant: ModelVariant,
    pub widths: NetWidths,
    pub widths_name: String,
    pub seed: u64,
    /// Checkpoint cadence in epochs; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    /// Optional cap on generator steps, independent of the epoch budget.
    pub max_gen_steps: Option<u64>,
    /// Fake draws per situation for the per-epoch validation divergences.
    pub valid_seeds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2048,
            learning_rate: 1e-5,
            max_epochs: 5000,
            critic_steps: 5,
            variant: ModelVariant::Pgsgan,
            widths: NetWidths::paper_default(),
            widths_name: "default".to_string(),
            seed: 1,
            checkpoint_every: 100,
            max_gen_steps: None,
            valid_seeds: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.batch_size < 2 {
            return Err(GanError::Config("batch_size must be >= 2".to_string()));
        }
        if self.learning_rate <= 0.0 {
            return Err(GanError::Config("learning_rate must be positive".to_string()));
        }
        if self.max_epochs == 0 || self.critic_steps == 0 {
            return Err(GanError::Config(
                "max_epochs and critic_steps must be positive".to_string(),
            ));
        }
        if self.valid_seeds == 0 {
            return Err(GanError::Config("valid_seeds must be positive".to_string()));
        }
        Ok(())
    }
}

pub enum Models<F: Real> {
    Policy {
        gen: GeneratorNet<F>,
        critic: CriticNet<F>,
    },
    Continuous {
        gen: ContinuousBaselineNet<F>,
        critic: CriticNet<F>,
    },
}

pub struct TrainState<F: Real> {
    pub config: TrainConfig,
    pub models: Models<F>,
    pub adam_g: AdamState<F>,
    pub adam_c: AdamState<F>,
    /// Completed epochs.
    pub epoch: usize,
    pub gen_step: u64,
    pub critic_step: u64,
    z_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy)]
pub struct StepMetrics {
    pub loss_c: f64,
    pub loss_g: f64,
    pub nll_real_mean: f64,
    pub entropy_mean: f64,
}

impl<F: Real> TrainState<F> {
    pub fn new(config: TrainConfig) -> Result<Self, GanError> {
        config.validate()?;
        let models = match config.variant {
            ModelVariant::DcganBaseline => Models::Continuous {
                gen: ContinuousBaselineNet::new(
                    config.widths.clone(),
                    "g",
                    &mut init_rng(config.seed, "g"),
                )?,
                critic: CriticNet::new(config.widths.clone(), "c", &mut init_rng(config.seed, "c"))?,
            },
            _ => Models::Policy {
                gen: GeneratorNet::new(config.widths.clone(), "g", &mut init_rng(config.seed, "g"))?,
                critic: CriticNet::new(config.widths.clone(), "c", &mut init_rng(config.seed, "c"))?,
            },
        };
        let lr = F::from_f64(config.learning_rate);
        Ok(TrainState {
            z_rng: rng::derive_rng(config.seed, "z"),
            sample_rng: rng::derive_rng(config.seed, "sample"),
            adam_g: AdamState::new(AdamConfig::with_lr(lr)),
            adam_c: AdamState::new(AdamConfig::with_lr(lr)),
            epoch: 0,
            gen_step: 0,
            critic_step: 0,
            config,
            models,
        })
    }

    pub fn policy_models(&mut self) -> Option<(&mut GeneratorNet<F>, &mut CriticNet<F>)> {
        match &mut self.models {
            Models::Policy { gen, critic } => Some((gen, critic)),
            Models::Continuous { .. } => None,
        }
    }

    fn draw_seeds(&mut self, n: usize) -> Vec<Seed<F>> {
        (0..n).map(|_| Seed::sample(&mut self.z_rng)).collect()
    }

    /// One full training cycle over a batch: `critic_steps` critic updates
    /// on fresh fake samples, then one generator update.
    pub fn train_step(&mut self, batch: &[&WindowPair]) -> Result<StepMetrics, GanError> {
        if batch.is_empty() {
            return Err(GanError::EmptyBatch);
        }
        match self.config.variant {
            ModelVariant::DcganBaseline => self.train_step_continuous(batch),
            _ => self.train_step_policy(batch),
        }
    }

    fn train_step_policy(&mut self, batch: &[&WindowPair]) -> Result<StepMetrics, GanError> {
        let loss_variant = self.config.variant.loss_variant();
        let conds: Vec<&Condition> = batch.iter().map(|(c, _)| c).collect();
        let reals: Vec<Order> = batch.iter().map(|(_, o)| *o).collect();
        let n = batch.len();
        let (epoch, step) = (self.epoch, self.gen_step);
        let nonfinite = |what: &'static str| GanError::NonFinite { what, epoch, step };

        // -- critic updates --
        let mut loss_c_sum = 0.0;
        for _ in 0..self.config.critic_steps {
            let seeds = self.draw_seeds(n);
            let Models::Policy { gen, critic } = &mut self.models else {
                unreachable!("policy variant")
            };
            let fake_orders: Vec<Order> = {
                let policies = gen.policies(&conds, &seeds, Mode::Train)?;
                let mut orders = Vec::with_capacity(n);
                for p in &policies {
                    orders.push(p.sample(&mut self.sample_rng)?.order);
                }
                orders
            };

            let mut g = Graph::new();
            let hist = g.constant(hist_tensor(&conds));
            let quotes = g.constant(quotes_tensor(&conds));
            let fake_feats = g.constant(order_feats_tensor(&fake_orders));
            let real_feats = g.constant(order_feats_tensor(&reals));
            let bound = critic.bind(&mut g, Mode::Train, true)?;
            let c_fake = critic.apply(&mut g, &bound, hist, quotes, fake_feats, Mode::Train)?;
            let c_real = critic.apply(&mut g, &bound, hist, quotes, real_feats, Mode::Train)?;
            let loss = critic_loss_node(&mut g, loss_variant, c_fake, c_real)?;
            let loss_value = g.value(loss).item().as_f64();
            if !loss_value.is_finite() {
                return Err(nonfinite("critic loss"));
            }
            let grads = g.backward(loss)?;
            let named = bound.binds.grads_by_name(&grads);
            self.adam_c.step(&mut critic.params, &named)?;
            self.critic_step += 1;
            loss_c_sum += loss_value;
        }

        // -- generator update --
        let seeds = self.draw_seeds(n);
        let Models::Policy { gen, critic } = &mut self.models else {
            unreachable!("policy variant")
        };
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(&conds));
        let quotes = g.constant(quotes_tensor(&conds));
        let z = g.constant(seeds_tensor(&seeds));
        let fwd = gen.forward_graph(&mut g, hist, quotes, z, Mode::Train, true)?;
        let policies = crate::nets::extract_policies(&g, &fwd.heads);
        let mut samples: Vec<PolicySample> = Vec::with_capacity(n);
        for p in &policies {
            samples.push(p.sample(&mut self.sample_rng)?);
        }
        let fields: Vec<SampledFields> = samples
            .iter()
            .map(|s| {
                (
                    s.order.side(),
                    s.order.action(),
                    s.order.is_mo(),
                    s.sampled_price_class,
                    s.order.volume_class(),
                )
            })
            .collect();

        let fake_orders: Vec<Order> = samples.iter().map(|s| s.order).collect();
        let c_fake = critic.scores(&conds, &fake_orders, Mode::Train)?;
        let weights = advantage_weights(loss_variant, &c_fake);
        let nll = nll_node(&mut g, &fwd.heads, &fields)?;
        let loss = weighted_nll_loss(&mut g, nll, &weights)?;
        let loss_g = g.value(loss).item().as_f64();
        if !loss_g.is_finite() {
            return Err(nonfinite("generator loss"));
        }
        let grads = g.backward(loss)?;
        let named = fwd.binds.grads_by_name(&grads);
        self.adam_g.step(&mut gen.params, &named)?;
        self.gen_step += 1;

        Ok(StepMetrics {
            loss_c: loss_c_sum / self.config.critic_steps as f64,
            loss_g,
            nll_real_mean: mean(policies.iter().zip(&reals).map(|(p, o)| p.nll(o))),
            entropy_mean: mean(policies.iter().map(Policy::entropy_bits)),
        })
    }

    fn train_step_continuous(&mut self, batch: &[&WindowPair]) -> Result<StepMetrics, GanError> {
        let conds: Vec<&Condition> = batch.iter().map(|(c, _)| c).collect();
        let reals: Vec<Order> = batch.iter().map(|(_, o)| *o).collect();
        let n = batch.len();
        let (epoch, step) = (self.epoch, self.gen_step);
        let nonfinite = |what: &'static str| GanError::NonFinite { what, epoch, step };

        let mut loss_c_sum = 0.0;
        for _ in 0..self.config.critic_steps {
            let seeds = self.draw_seeds(n);
            let Models::Continuous { gen, critic } = &mut self.models else {
                unreachable!("continuous variant")
            };
            // detached fake features, unit scale
            let emissions = gen.emit(&conds, &seeds, Mode::Train)?;
            let fake_rows: Vec<F> = emissions
                .iter()
                .flat_map(|row| {
                    [
                        row[0],
                        row[1],
                        row[2],
                        row[3] / 39.0,
                        row[4] / 39.0,
                    ]
                })
                .map(F::from_f64)
                .collect();
            let mut g = Graph::new();
            let hist = g.constant(hist_tensor(&conds));
            let quotes = g.constant(quotes_tensor(&conds));
            let fake_feats = g.constant(numcore::Tensor::from_vec(vec![n, 5], fake_rows)?);
            let real_feats = g.constant(order_feats_tensor(&reals));
            let bound = critic.bind(&mut g, Mode::Train, true)?;
            let c_fake = critic.apply(&mut g, &bound, hist, quotes, fake_feats, Mode::Train)?;
            let c_real = critic.apply(&mut g, &bound, hist, quotes, real_feats, Mode::Train)?;
            let loss = critic_loss_node(&mut g, LossVariant::Plain, c_fake, c_real)?;
            let loss_value = g.value(loss).item().as_f64();
            if !loss_value.is_finite() {
                return Err(nonfinite("critic loss"));
            }
            let grads = g.backward(loss)?;
            let named = bound.binds.grads_by_name(&grads);
            self.adam_c.step(&mut critic.params, &named)?;
            self.critic_step += 1;
            loss_c_sum += loss_value;
        }

        // generator update: gradient flows through the critic into the head
        let seeds = self.draw_seeds(n);
        let Models::Continuous { gen, critic } = &mut self.models else {
            unreachable!("continuous variant")
        };
        let mut g = Graph::new();
        let hist = g.constant(hist_tensor(&conds));
        let quotes = g.constant(quotes_tensor(&conds));
        let z = g.constant(seeds_tensor(&seeds));
        let fwd = gen.forward_graph(&mut g, hist, quotes, z, Mode::Train, true)?;
        let bound = critic.bind(&mut g, Mode::Train, false)?;
        let c_fake = critic.apply(&mut g, &bound, hist, quotes, fwd.unit_values, Mode::Train)?;
        let mean_score = g.mean_all(c_fake);
        let loss = g.neg(mean_score);
        let loss_g = g.value(loss).item().as_f64();
        if !loss_g.is_finite() {
            return Err(nonfinite("generator loss"));
        }
        let grads = g.backward(loss)?;
        let named = fwd.binds.grads_by_name(&grads);
        self.adam_g.step(&mut gen.params, &named)?;
        self.gen_step += 1;

        Ok(StepMetrics {
            loss_c: loss_c_sum / self.config.critic_steps as f64,
            loss_g,
            nll_real_mean: f64::NAN,
            entropy_mean: f64::NAN,
        })
    }

    /// Writes `<base>.pgsg` (parameters, persistent layer state, optimizer
    /// moments) and `<base>.manifest` (config, counters, RNG cursors).
    pub fn save_checkpoint(
        &self,
        base: &Path,
        batcher_cursor: Option<RngCursor>,
    ) -> Result<(), GanError> {
        let mut store = ParamStore::new();
        match &self.models {
            Models::Policy { gen, critic } => {
                gen.export_state(&mut store)?;
                critic.export_state(&mut store)?;
            }
            Models::Continuous { gen, critic } => {
                gen.export_state(&mut store)?;
                critic.export_state(&mut store)?;
            }
        }
        self.adam_g.export_into(&mut store, "adam.g")?;
        self.adam_c.export_into(&mut store, "adam.c")?;
        store.save(&base.with_extension("pgsg"))?;

        let mut m = String::new();
        let _ = writeln!(m, "format = 1");
        let _ = writeln!(m, "variant = {}", self.config.variant.tag());
        let _ = writeln!(m, "loss = {}", self.config.variant.loss_variant().tag());
        let _ = writeln!(m, "widths = {}", self.config.widths_name);
        let _ = writeln!(m, "seed = {}", self.config.seed);
        let _ = writeln!(m, "batch_size = {}", self.config.batch_size);
        let _ = writeln!(m, "learning_rate = {}", self.config.learning_rate);
        let _ = writeln!(m, "max_epochs = {}", self.config.max_epochs);
        let _ = writeln!(m, "critic_steps = {}", self.config.critic_steps);
        let _ = writeln!(m, "checkpoint_every = {}", self.config.checkpoint_every);
        let _ = writeln!(m, "valid_seeds = {}", self.config.valid_seeds);
        if let Some(cap) = self.config.max_gen_steps {
            let _ = writeln!(m, "max_gen_steps = {cap}");
        }
        let _ = writeln!(m, "epoch = {}", self.epoch);
        let _ = writeln!(m, "gen_step = {}", self.gen_step);
        let _ = writeln!(m, "critic_step = {}", self.critic_step);
        write_cursor(&mut m, "rng.z", rng::cursor(&self.z_rng));
        write_cursor(&mut m, "rng.sample", rng::cursor(&self.sample_rng));
        if let Some(cur) = batcher_cursor {
            write_cursor(&mut m, "rng.batcher", cur);
        }
        dataflow::write_atomic(&base.with_extension("manifest"), m.as_bytes())?;
        Ok(())
    }

    /// Rebuilds a state from checkpoint files written by
    /// [`TrainState::save_checkpoint`].
    pub fn load_checkpoint(base: &Path) -> Result<(Self, Option<RngCursor>), GanError> {
        let manifest = Manifest::read(&base.with_extension("manifest"))?;
        let config = manifest.to_config()?;
        let mut state = TrainState::new(config)?;
        let store = ParamStore::load(&base.with_extension("pgsg"))?;
        match &mut state.models {
            Models::Policy { gen, critic } => {
                gen.import_state(&store)?;
                critic.import_state(&store)?;
            }
            Models::Continuous { gen, critic } => {
                gen.import_state(&store)?;
                critic.import_state(&store)?;
            }
        }
        state.adam_g.import_from(&store, "adam.g")?;
        state.adam_c.import_from(&store, "adam.c")?;
        state.epoch = manifest.get_usize("epoch")?;
        state.gen_step = manifest.get_u64("gen_step")?;
        state.critic_step = manifest.get_u64("critic_step")?;
        state.z_rng = rng::restore(state.config.seed, manifest.cursor("rng.z")?);
        state.sample_rng = rng::restore(state.config.seed, manifest.cursor("rng.sample")?);
        let batcher_cursor = manifest.cursor("rng.batcher").ok();
        Ok((state, batcher_cursor))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for v in values {
        total += v;
        count += 1;
    }
    total / count as f64
}

fn write_cursor(out: &mut String, key: &str, cur: RngCursor) {
    let _ = writeln!(out, "{key}.stream = {}", cur.stream);
    let _ = writeln!(out, "{key}.word_pos = {}", cur.word_pos);
}

/// Flat key-value manifest.
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, GanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GanError::Manifest(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| GanError::Manifest(format!("bad line {line:?}")))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Manifest { entries })
    }

    pub fn get(&self, key: &str) -> Result<&str, GanError> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| GanError::Manifest(format!("missing key {key:?}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, GanError> {
        self.get(key)?
            .parse()
            .map_err(|e| GanError::Manifest(format!("{key}: {e}")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, GanError> {
        self.get(key)?
            .parse()
            .map_err(|e| GanError::Manifest(format!("{key}: {e}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, GanError> {
        self.get(key)?
            .parse()
            .map_err(|e| GanError::Manifest(format!("{key}: {e}")))
    }

    pub fn cursor(&self, key: &str) -> Result<RngCursor, GanError> {
        Ok(RngCursor {
            stream: self.get_u64(&format!("{key}.stream"))?,
            word_pos: self
                .get(&format!("{key}.word_pos"))?
                .parse()
                .map_err(|e| GanError::Manifest(format!("{key}.word_pos: {e}")))?,
        })
    }

    pub fn to_config(&self) -> Result<TrainConfig, GanError> {
        let widths_name = self.get("widths")?.to_string();
        Ok(TrainConfig {
            batch_size: self.get_usize("batch_size")?,
            learning_rate: self.get_f64("learning_rate")?,
            max_epochs: self.get_usize("max_epochs")?,
            critic_steps: self.get_usize("critic_steps")?,
            variant: ModelVariant::parse(self.get("variant")?)?,
            widths: NetWidths::parse(&widths_name)?,
            widths_name,
            seed: self.get_u64("seed")?,
            checkpoint_every: self.get_usize("checkpoint_every")?,
            max_gen_steps: self.get("max_gen_steps").ok().map(|v| v.parse()).transpose()
                .map_err(|e| GanError::Manifest(format!("max_gen_steps: {e}")))?,
            valid_seeds: self.get_usize("valid_seeds")?,
        })
    }
}

/// Per-epoch validation callback: returns `(kld_bits, mse)` to log, or
/// `None` to skip the row. Wired by the caller so divergence computation
/// stays outside this crate.
pub type ValidationHook<'a, F> =
    dyn FnMut(&mut TrainState<F>, usize) -> Result<Option<(f64, f64)>, GanError> + 'a;

pub struct TrainOutcome {
    pub epochs_run: usize,
    pub gen_steps: u64,
    pub final_checkpoint: PathBuf,
}

fn checkpoint_base(dir: &Path, tag: &str) -> PathBuf {
    dir.join(format!("ckpt-{tag}"))
}

pub fn epoch_tag(epoch: usize) -> String {
    format!("{epoch:06}")
}

fn append_line(path: &Path, header: &str, line: &str) -> Result<(), GanError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GanError::Manifest(format!("{}: {e}", path.display())))?;
    if f.metadata().map(|m| m.len()).unwrap_or(0) == 0 {
        writeln!(f, "{header}").map_err(|e| GanError::Manifest(e.to_string()))?;
    }
    writeln!(f, "{line}").map_err(|e| GanError::Manifest(e.to_string()))?;
    Ok(())
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

/// Runs the loop until the epoch budget, the generator-step cap, or a
/// numerical abort. On a non-finite loss the current state is checkpointed
/// under the `abort` tag and the error propagates.
pub fn train<F: Real>(
    state: &mut TrainState<F>,
    train_pairs: &[WindowPair],
    out_dir: &Path,
    batcher_cursor: Option<RngCursor>,
    validate: &mut ValidationHook<F>,
) -> Result<TrainOutcome, GanError> {
    std::fs::create_dir_all(out_dir).map_err(|e| GanError::Manifest(e.to_string()))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let valid_path = out_dir.join(VALID_FILE);

    let mut batcher = Batcher::new(
        train_pairs.len(),
        state.config.batch_size,
        true,
        state.config.seed,
    )?;
    if let Some(cur) = batcher_cursor {
        batcher.restore_cursor(cur);
    }

    // Baseline validation row for an untrained model.
    if state.epoch == 0 {
        if let Some((kld, mse)) = validate(state, 0)? {
            append_line(
                &valid_path,
                VALID_HEADER,
                &format!("0,{},{}", fmt_metric(kld), fmt_metric(mse)),
            )?;
        }
    }

    let mut run = |state: &mut TrainState<F>, batcher: &mut Batcher| -> Result<(), GanError> {
        while state.epoch < state.config.max_epochs {
            let epoch = state.epoch + 1;
            let batches = batcher.next_epoch();
            for batch_indices in &batches {
                if let Some(cap) = state.config.max_gen_steps {
                    if state.gen_step >= cap {
                        break;
                    }
                }
                let batch: Vec<&WindowPair> =
                    batch_indices.iter().map(|&i| &train_pairs[i]).collect();
                let metrics = state.train_step(&batch)?;
                append_line(
                    &metrics_path,
                    METRICS_HEADER,
                    &format!(
                        "{},{},{},{},{},{}",
                        epoch,
                        state.gen_step,
                        fmt_metric(metrics.loss_c),
                        fmt_metric(metrics.loss_g),
                        fmt_metric(metrics.nll_real_mean),
                        fmt_metric(metrics.entropy_mean),
                    ),
                )?;
            }
            state.epoch = epoch;
            if let Some((kld, mse)) = validate(state, epoch)? {
                append_line(
                    &valid_path,
                    VALID_HEADER,
                    &format!("{},{},{}", epoch, fmt_metric(kld), fmt_metric(mse)),
                )?;
            }
            if state.config.checkpoint_every > 0 && epoch % state.config.checkpoint_every == 0 {
                state.save_checkpoint(
                    &checkpoint_base(out_dir, &epoch_tag(epoch)),
                    Some(batcher.cursor()),
                )?;
            }
            if let Some(cap) = state.config.max_gen_steps {
                if state.gen_step >= cap {
                    break;
                }
            }
        }
        Ok(())
    };

    match run(state, &mut batcher) {
        Ok(()) => {
            let base = checkpoint_base(out_dir, &epoch_tag(state.epoch));
            state.save_checkpoint(&base, Some(batcher.cursor()))?;
            Ok(TrainOutcome {
                epochs_run: state.epoch,
                gen_steps: state.gen_step,
                final_checkpoint: base.with_extension("pgsg"),
            })
        }
        Err(err) => {
            // keep the wreckage for diagnosis
            let _ = state.save_checkpoint(&checkpoint_base(out_dir, ABORT_TAG), Some(batcher.cursor()));
            Err(err)
        }
    }
}

/// Highest-numbered checkpoint base in a directory, if any.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in std::fs::read_dir(dir).ok()? {
        let path = entry.ok()?.path();
        let name = path.file_name()?.to_str()?;
        if let Some(tag) = name.strip_prefix("ckpt-").and_then(|s| s.strip_suffix(".manifest")) {
            if let Ok(epoch) = tag.parse::<usize>() {
                if best.as_ref().map(|(e, _)| epoch > *e).unwrap_or(true) {
                    best = Some((epoch, dir.join(format!("ckpt-{tag}"))));
                }
            }
        }
    }
    best.map(|(_, p)| p)
}
