//! Training runs, ablation sweeps and run artifacts.
//!
//! One schedule entry is one iteration. Entries that a sequence policy holds
//! back still consume their iteration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::batching::{assemble_batch, batch_schedule, index_by_id, BatchOptions, MiniBatch, Schedule};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport, MetricsRow};
use crate::loss::{fs_loss, ws_loss};
use crate::model::{backward, forward, ModelConfig, ParamSet, Upstream};
use crate::optimizer::{schedule_filter, step, FilterDecision, MomentumPolicy, MomentumState, OptimizerConfig};
use crate::pseudo_label::{iterate_cycles, CycleOutcome, PseudoConfig};
use crate::rng::{stream, stream_rng};
use crate::supervision::SupervisionTag;
use crate::world::{
    generate_world, retag, split_supervision, FeatureSpace, SplitFractions, SynthImage, World, WorldConfig,
};

pub const LOG_HEADER_ITERATION: &str = "# one schedule entry (a two-image batch) = one iteration";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub hidden_dim: usize,
    pub batch: BatchOptions,
    pub optimizer: OptimizerConfig,
    /// `None` means every `max(iterations / 10, 200)` steps.
    pub eval_every: Option<usize>,
    /// Drives the split, the schedule and the initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            hidden_dim: 64,
            batch: BatchOptions::default(),
            optimizer: OptimizerConfig::default(),
            eval_every: None,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.iterations == 0 {
            return Err(Error::InvalidConfig {
                field: "iterations",
                reason: "must be at least 1".into(),
            });
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig {
                field: "hidden_dim",
                reason: "must be at least 1".into(),
            });
        }
        if self.batch.top_k == 0 {
            return Err(Error::InvalidConfig {
                field: "top_k",
                reason: "must be at least 1".into(),
            });
        }
        if self.eval_every == Some(0) {
            return Err(Error::InvalidConfig {
                field: "eval_every",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn eval_interval(&self) -> usize {
        self.eval_every.unwrap_or((self.iterations / 10).max(200))
    }

    pub fn switch_iteration(&self) -> usize {
        self.optimizer.sequence_switch_iteration.unwrap_or(self.iterations / 2)
    }
}

/// Everything a training run reads.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub space: &'a FeatureSpace,
    /// Supervision-tagged training images.
    pub images: &'a [SynthImage],
    pub test_images: &'a [SynthImage],
    pub rare_class_ids: &'a BTreeSet<usize>,
    pub n_classes: usize,
}

impl<'a> TrainData<'a> {
    pub fn new(world: &'a World, images: &'a [SynthImage], rare_class_ids: &'a BTreeSet<usize>) -> Self {
        Self {
            space: &world.features,
            images,
            test_images: &world.test_images,
            rare_class_ids,
            n_classes: world.n_classes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Step {
        iteration: usize,
        supervision: SupervisionTag,
        pseudo: bool,
        loss: f64,
        n_pairs: usize,
    },
    Skip {
        iteration: usize,
        supervision: SupervisionTag,
    },
    Eval {
        iteration: usize,
        map_full: f64,
        map_rare: Option<f64>,
        map_nonrare: Option<f64>,
    },
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEvent::Step {
                iteration,
                supervision,
                pseudo,
                loss,
                n_pairs,
            } => write!(
                f,
                "step iter={iteration} tag={supervision} pseudo={pseudo} pairs={n_pairs} loss={loss:.6}"
            ),
            LogEvent::Skip { iteration, supervision } => {
                write!(f, "skip iter={iteration} tag={supervision}")
            }
            LogEvent::Eval {
                iteration,
                map_full,
                map_rare,
                map_nonrare,
            } => write!(
                f,
                "eval iter={iteration} map_full={map_full:.6} map_rare={} map_nonrare={}",
                opt(*map_rare),
                opt(*map_nonrare)
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub header: Vec<String>,
    pub events: Vec<LogEvent>,
}

impl TrainingLog {
    pub fn write_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for h in &self.header {
            writeln!(out, "{h}")?;
        }
        for e in &self.events {
            writeln!(out, "{e}")?;
        }
        Ok(())
    }

    pub fn losses(&self) -> impl Iterator<Item = (usize, SupervisionTag, f64)> + '_ {
        self.events.iter().filter_map(|e| match *e {
            LogEvent::Step {
                iteration,
                supervision,
                loss,
                ..
            } => Some((iteration, supervision, loss)),
            _ => None,
        })
    }

    pub fn n_applied(&self) -> usize {
        self.losses().count()
    }
}

/// Resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub config: TrainConfig,
    pub params: ParamSet,
    pub state: MomentumState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let c: Checkpoint = serde_json::from_reader(f)?;
        if !c.params.same_shape(c.state.z_ws()) || !c.params.is_finite() {
            return Err(Error::Checkpoint(format!("{} is inconsistent", path.display())));
        }
        Ok(c)
    }
}

/// Owns the parameters and optimizer state of one run.
#[derive(Debug)]
pub struct Trainer<'a> {
    data: TrainData<'a>,
    cfg: TrainConfig,
    schedule: Schedule,
    index: HashMap<usize, usize>,
    pub params: ParamSet,
    pub state: MomentumState,
    pub iteration: usize,
    pub log: TrainingLog,
}

impl<'a> Trainer<'a> {
    pub fn new(data: TrainData<'a>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = ParamSet::init(
            &ModelConfig {
                feature_dim: data.space.feature_dim(),
                hidden_dim: cfg.hidden_dim,
                n_classes: data.n_classes,
            },
            cfg.seed,
        );
        let state = MomentumState::new(&params, cfg.optimizer.policy);
        Self::with_state(data, cfg, params, state, 0)
    }

    pub fn resume(data: TrainData<'a>, checkpoint: Checkpoint) -> Result<Self> {
        let Checkpoint {
            iteration,
            config,
            params,
            state,
        } = checkpoint;
        config.validate()?;
        if params.config().feature_dim != data.space.feature_dim() || params.config().n_classes != data.n_classes {
            return Err(Error::Checkpoint("parameters do not fit this world".into()));
        }
        Self::with_state(data, config, params, state, iteration)
    }

    fn with_state(
        data: TrainData<'a>,
        cfg: TrainConfig,
        params: ParamSet,
        state: MomentumState,
        iteration: usize,
    ) -> Result<Self> {
        let trainable = data.images.iter().filter(|i| i.is_trainable()).count();
        let probe = batch_schedule(data.images, 1, cfg.seed)?;
        let epochs = cfg.iterations.div_ceil(probe.batches_per_epoch.max(1));
        let schedule = batch_schedule(data.images, epochs, cfg.seed)?;
        let counts = |tag: SupervisionTag| {
            data.images
                .iter()
                .filter(|i| i.is_trainable() && i.supervision == tag)
                .count()
        };
        let header = vec![
            LOG_HEADER_ITERATION.to_string(),
            format!(
                "# trainable images: {trainable} (FS {}, WS {}, US {}); batches per epoch {}; epochs {epochs}",
                counts(SupervisionTag::FS),
                counts(SupervisionTag::WS),
                counts(SupervisionTag::US),
                schedule.batches_per_epoch
            ),
            format!("# config {}", serde_json::to_string(&cfg)?),
        ];
        Ok(Self {
            index: index_by_id(data.images),
            data,
            cfg,
            schedule,
            params,
            state,
            iteration,
            log: TrainingLog {
                header,
                events: Vec::new(),
            },
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            config: self.cfg,
            params: self.params.clone(),
            state: self.state.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    fn batch(&self, it: usize) -> Result<MiniBatch> {
        let entry = &self.schedule.entries[it];
        let img = |id: usize| {
            self.index
                .get(&id)
                .map(|&k| &self.data.images[k])
                .ok_or_else(|| Error::Schedule(format!("image {id} is not in the training set")))
        };
        assemble_batch(
            self.data.space,
            entry,
            img(entry.images[0])?,
            img(entry.images[1])?,
            self.data.n_classes,
            &self.cfg.batch,
        )
    }

    /// Runs one iteration; returns the loss when an update was applied.
    pub fn step_once(&mut self) -> Result<Option<f64>> {
        let it = self.iteration;
        let entry = self.schedule.entries[it];
        let pseudo = entry.supervision == SupervisionTag::US;
        let decision = schedule_filter(
            entry.supervision,
            pseudo,
            it,
            self.cfg.optimizer.policy,
            self.cfg.switch_iteration(),
        );
        self.iteration += 1;
        if decision == FilterDecision::Skip {
            self.log.events.push(LogEvent::Skip {
                iteration: it,
                supervision: entry.supervision,
            });
            return Ok(None);
        }
        let batch = self.batch(it)?;
        let x = batch.features();
        let fwd = forward(&self.params, &x)?;
        let (report, grads) = match (&batch.fs_targets, &batch.ws_targets) {
            (Some(y), _) => {
                let (r, g) = fs_loss(&fwd.scores.p, y)?;
                (r, backward(&self.params, &x, &fwd, Upstream::Pairwise(&g))?)
            }
            (None, Some(y)) => {
                let p = crate::model::aggregate_image_level(&fwd.scores.p);
                let (r, g) = ws_loss(&p, y)?;
                (r, backward(&self.params, &x, &fwd, Upstream::ImageLevel(&g))?)
            }
            (None, None) => unreachable!("assembled batches carry targets"),
        };
        if !report.value.is_finite() || !grads.is_finite() {
            return Err(Error::Aborted {
                iteration: it,
                reason: format!("non-finite loss {} on a {} batch", report.value, batch.supervision),
            });
        }
        step(
            &mut self.params,
            &grads,
            batch.supervision,
            batch.pseudo,
            &mut self.state,
            &self.cfg.optimizer,
        )?;
        if !self.params.is_finite() {
            return Err(Error::Aborted {
                iteration: it,
                reason: "parameters became non-finite".into(),
            });
        }
        self.log.events.push(LogEvent::Step {
            iteration: it,
            supervision: batch.supervision,
            pseudo: batch.pseudo,
            loss: report.value,
            n_pairs: batch.n_pairs(),
        });
        Ok(Some(report.value))
    }

    pub fn evaluate(&mut self) -> Result<EvalReport> {
        let report = evaluate(
            &self.params,
            self.data.space,
            self.data.test_images,
            self.data.rare_class_ids,
            self.cfg.batch.top_k,
        )?;
        self.log.events.push(LogEvent::Eval {
            iteration: self.iteration,
            map_full: report.map_full,
            map_rare: report.map_rare,
            map_nonrare: report.map_nonrare,
        });
        Ok(report)
    }

    /// Trains up to iteration `until` (capped at the budget), evaluating at
    /// the configured cadence.
    pub fn run_until(&mut self, until: usize) -> Result<()> {
        let until = until.min(self.cfg.iterations);
        let every = self.cfg.eval_interval();
        while self.iteration < until {
            self.step_once()?;
            if self.iteration.is_multiple_of(every) && self.iteration < self.cfg.iterations {
                self.evaluate()?;
            }
        }
        Ok(())
    }

    /// Trains to the end of the budget and evaluates the final parameters.
    pub fn finish(mut self) -> Result<TrainOutcome> {
        self.run_until(self.cfg.iterations)?;
        let report = self.evaluate()?;
        Ok(TrainOutcome {
            params: self.params,
            state: self.state,
            log: self.log,
            report,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub state: MomentumState,
    pub log: TrainingLog,
    pub report: EvalReport,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: TrainConfig) -> Checkpoint {
        Checkpoint {
            iteration: config.iterations,
            config,
            params: self.params.clone(),
            state: self.state.clone(),
        }
    }
}

/// Trains from scratch over the full budget.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(data, *cfg)?.finish()
}

/// Top-level run description; the CLI's config file mirrors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub world: WorldConfig,
    pub split: SplitFractions,
    pub train: TrainConfig,
    pub pseudo: PseudoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            world: WorldConfig::default(),
            split: SplitFractions::percent(70, 30).expect("valid split"),
            train: TrainConfig::default(),
            pseudo: PseudoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        self.pseudo.validate()
    }

    /// Uses `seed` for both the world and the training run.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn with_split(mut self, split: SplitFractions) -> Self {
        self.split = split;
        self
    }

    pub fn with_policy(mut self, policy: MomentumPolicy) -> Self {
        self.train.optimizer.policy = policy;
        self
    }

    pub fn with_element_swap(mut self, on: bool) -> Self {
        self.train.batch.element_swap = on;
        self
    }

    pub fn metrics_row(&self, report: &EvalReport) -> MetricsRow {
        MetricsRow {
            run_id: self.run_id.clone(),
            ws_fs_us: self.split.to_string(),
            policy: self.train.optimizer.policy.to_string(),
            hes: self.train.batch.element_swap,
            seed: self.train.seed,
            map_full: 0.0,
            map_rare: None,
            map_nonrare: None,
        }
        .with_report(report)
    }
}

/// Dotted paths whose values differ between two configs.
pub fn config_diff(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<Vec<String>> {
    fn walk(prefix: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        match (a, b) {
            (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let path = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    let null = serde_json::Value::Null;
                    walk(&path, x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            _ if a != b => out.push(format!("{prefix}: {a} -> {b}")),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk("", &serde_json::to_value(a)?, &serde_json::to_value(b)?, &mut out);
    Ok(out)
}

/// A generated world with its tagged training split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub world: World,
    pub train_images: Vec<SynthImage>,
    pub rare_class_ids: BTreeSet<usize>,
}

impl Prepared {
    pub fn data(&self) -> TrainData<'_> {
        TrainData::new(&self.world, &self.train_images, &self.rare_class_ids)
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let world = generate_world(&cfg.world)?;
    let train_images = split_supervision(&world.images, cfg.split, cfg.train.seed)?;
    let rare_class_ids = world.rare_class_ids();
    Ok(Prepared {
        world,
        train_images,
        rare_class_ids,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub outcome: TrainOutcome,
    pub row: MetricsRow,
}

/// Generates, splits, trains and evaluates one configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let outcome = train(prepared.data(), &cfg.train)?;
    let row = cfg.metrics_row(&outcome.report);
    Ok(RunOutcome { prepared, outcome, row })
}

/// WS/FS percentages of the full ratio ladder.
pub const RATIO_LADDER: [(u32, u32); 7] = [(100, 0), (80, 20), (70, 30), (50, 50), (30, 70), (20, 80), (0, 100)];

/// WS/FS percentages with part of the data left unlabeled.
pub const PARTIAL_LADDER: [(u32, u32); 5] = [(30, 30), (30, 50), (30, 70), (50, 30), (70, 30)];

pub fn ladder(pairs: &[(u32, u32)]) -> Result<Vec<SplitFractions>> {
    pairs.iter().map(|&(ws, fs)| SplitFractions::percent(ws, fs)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub ws_fs_us: String,
    pub n_seeds: usize,
    pub map_full_mean: f64,
    pub map_full_std: f64,
    pub map_rare_mean: Option<f64>,
    pub map_rare_std: Option<f64>,
    pub map_nonrare_mean: Option<f64>,
    pub map_nonrare_std: Option<f64>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

impl CellSummary {
    pub fn from_rows(ws_fs_us: String, rows: &[&MetricsRow]) -> Self {
        let full: Vec<f64> = rows.iter().map(|r| r.map_full).collect();
        let rare: Vec<f64> = rows.iter().filter_map(|r| r.map_rare).collect();
        let nonrare: Vec<f64> = rows.iter().filter_map(|r| r.map_nonrare).collect();
        let (fm, fs) = mean_std(&full).unwrap_or((0.0, 0.0));
        let r = mean_std(&rare);
        let nr = mean_std(&nonrare);
        Self {
            ws_fs_us,
            n_seeds: rows.len(),
            map_full_mean: fm,
            map_full_std: fs,
            map_rare_mean: r.map(|v| v.0),
            map_rare_std: r.map(|v| v.1),
            map_nonrare_mean: nr.map(|v| v.0),
            map_nonrare_std: nr.map(|v| v.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<MetricsRow>,
    pub cells: Vec<CellSummary>,
}

/// One run per `(ratio, seed)`, summarized per ratio in input order.
pub fn run_ratio_sweep(base: &ExperimentConfig, ratios: &[SplitFractions], seeds: &[u64]) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig {
            field: "seeds",
            reason: "a sweep needs at least one seed".into(),
        });
    }
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &ratio in ratios {
        let start = rows.len();
        for &seed in seeds {
            let mut cfg = base.clone().with_seed(seed).with_split(ratio);
            cfg.run_id = format!("{}-{}-s{seed}", base.run_id, ratio.to_string().replace('/', "_"));
            log::info!("sweep cell {ratio} seed {seed}");
            rows.push(run(&cfg)?.row);
        }
        let cell: Vec<&MetricsRow> = rows[start..].iter().collect();
        cells.push(CellSummary::from_rows(ratio.to_string(), &cell));
    }
    Ok(SweepResult { rows, cells })
}

pub fn write_cells_csv<W: Write>(out: W, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Shuffles HOI classes across all region annotations of the labeled
/// training images, keeping boxes in place. A control that breaks the link
/// between appearance/layout and class.
pub fn permute_labels(images: &[SynthImage], seed: u64) -> Vec<SynthImage> {
    let mut classes: Vec<usize> = images
        .iter()
        .flat_map(|i| i.gt_triplets.iter().map(|t| t.hoi_class))
        .collect();
    classes.shuffle(&mut stream_rng(seed, stream::PERMUTE, 0));
    let mut it = classes.into_iter();
    images
        .iter()
        .map(|img| {
            let mut out = img.clone();
            for t in &mut out.gt_triplets {
                t.hoi_class = it.next().expect("one class per triplet");
            }
            if out.supervision != SupervisionTag::US || out.pseudo {
                out.image_labels = out.labels_from_triplets();
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSplitReport {
    pub fs_classes: BTreeSet<usize>,
    pub ws_classes: BTreeSet<usize>,
    pub n_fs_images: usize,
    pub n_ws_images: usize,
    pub n_mixed_images: usize,
    /// FS-only model on FS classes, WS-only model on WS classes.
    pub separate: [Option<f64>; 2],
    /// One mixed model on the same two class subsets.
    pub joint: [Option<f64>; 2],
}

/// Splits the classes in half at random; images whose classes all fall in
/// the first half become FS, all in the second half WS, the rest unlabeled.
pub fn class_split_images(world: &World, seed: u64) -> (BTreeSet<usize>, BTreeSet<usize>, Vec<SynthImage>) {
    let mut classes: Vec<usize> = (0..world.n_classes()).collect();
    classes.shuffle(&mut stream_rng(seed, stream::CLASS_SPLIT, 0));
    let half = classes.len() / 2;
    let fs: BTreeSet<usize> = classes[..half].iter().copied().collect();
    let ws: BTreeSet<usize> = classes[half..].iter().copied().collect();
    let images = world
        .images
        .iter()
        .map(|img| {
            let labels = img.labels_from_triplets();
            let tag = if labels.iter().all(|c| fs.contains(c)) {
                SupervisionTag::FS
            } else if labels.iter().all(|c| ws.contains(c)) {
                SupervisionTag::WS
            } else {
                SupervisionTag::US
            };
            retag(img, tag)
        })
        .collect();
    (fs, ws, images)
}

pub fn run_class_split(cfg: &ExperimentConfig) -> Result<ClassSplitReport> {
    cfg.validate()?;
    if cfg.world.n_hoi_classes < 2 {
        return Err(Error::InvalidConfig {
            field: "n_hoi_classes",
            reason: "the class split needs at least two classes".into(),
        });
    }
    let world = generate_world(&cfg.world)?;
    let rare = world.rare_class_ids();
    let (fs, ws, images) = class_split_images(&world, cfg.train.seed);
    let only =
        |tag: SupervisionTag| -> Vec<SynthImage> { images.iter().filter(|i| i.supervision == tag).cloned().collect() };
    let count = |tag: SupervisionTag| images.iter().filter(|i| i.supervision == tag).count();
    let fs_images = only(SupervisionTag::FS);
    let ws_images = only(SupervisionTag::WS);
    let fs_model = train(TrainData::new(&world, &fs_images, &rare), &cfg.train)?;
    let ws_model = train(TrainData::new(&world, &ws_images, &rare), &cfg.train)?;
    let joint = train(TrainData::new(&world, &images, &rare), &cfg.train)?;
    let on = |r: &EvalReport, set: &BTreeSet<usize>| r.mean_over(set.iter().copied());
    Ok(ClassSplitReport {
        separate: [on(&fs_model.report, &fs), on(&ws_model.report, &ws)],
        joint: [on(&joint.report, &fs), on(&joint.report, &ws)],
        n_fs_images: fs_images.len(),
        n_ws_images: ws_images.len(),
        n_mixed_images: count(SupervisionTag::US),
        fs_classes: fs,
        ws_classes: ws,
    })
}

/// Pseudo-labeling cycles on the configured split.
pub fn run_pseudo_cycles(cfg: &ExperimentConfig) -> Result<(Prepared, CycleOutcome)> {
    let prepared = prepare(cfg)?;
    let outcome = iterate_cycles(
        &prepared.world,
        &prepared.train_images,
        &prepared.rare_class_ids,
        &cfg.train,
        &cfg.pseudo,
    )?;
    Ok((prepared, outcome))
}

/// Counts images per supervision tag, trainable ones only.
pub fn supervision_counts(images: &[SynthImage]) -> BTreeMap<SupervisionTag, usize> {
    let mut out = BTreeMap::new();
    for img in images.iter().filter(|i| i.is_trainable()) {
        *out.entry(img.supervision).or_insert(0) += 1;
    }
    out
}
