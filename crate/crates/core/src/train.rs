//! Training pairs, base training and subset fine-tuning.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeArchitecture, ModelCascade};
use crate::error::{LemError, Result};
use crate::event::{coord_bin, encode_state, one_hot, GameState, PredictedEvent, TimeUnit, NUM_TYPES};
use crate::ingest::Corpus;
use crate::nnet::{dataset_loss, Activation, Dataset, Network, TrainConfig, Trainer};
use crate::vocab::Vocabulary;

/// Context state of event k with the fields of event k+1 as targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub context: GameState,
    pub target: PredictedEvent,
    pub team_id: u64,
    pub player_id: u64,
    pub match_id: u64,
    pub home_team: u64,
}

/// One pair per consecutive event adjacency within each match.
pub fn build_pairs(corpus: &Corpus, unit: TimeUnit) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::with_capacity(corpus.num_events());
    for m in &corpus.matches {
        for w in m.events.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            // a gap across halftime is negative and lands in bin 0
            let gap = if next.period == prev.period {
                next.minute - prev.minute
            } else {
                0.0
            };
            pairs.push(TrainingPair {
                context: encode_state(prev)?,
                target: PredictedEvent {
                    event_type: next.event_type,
                    is_accurate: next.is_accurate,
                    is_goal: next.is_goal,
                    x_bin: coord_bin(next.x),
                    y_bin: coord_bin(next.y),
                    time_bin: unit.bin(gap),
                    is_home: next.is_home,
                },
                team_id: next.team_id,
                player_id: next.player_id,
                match_id: m.match_id,
                home_team: m.home_team,
            });
        }
    }
    Ok(pairs)
}

pub fn type_dataset(pairs: &[TrainingPair]) -> Dataset<f32> {
    let mut d = Dataset::with_capacity(crate::event::STATE_DIM, 1, pairs.len());
    for p in pairs {
        d.push(p.context.as_slice(), &[p.target.event_type.0 as u16]);
    }
    d
}

pub fn accuracy_dataset(pairs: &[TrainingPair]) -> Dataset<f32> {
    let mut d = Dataset::with_capacity(crate::cascade::ACCURACY_INPUT, 2, pairs.len());
    let mut input = Vec::with_capacity(crate::cascade::ACCURACY_INPUT);
    for p in pairs {
        input.clear();
        input.extend_from_slice(p.context.as_slice());
        input.extend_from_slice(&one_hot(p.target.event_type));
        d.push(&input, &[p.target.is_accurate as u16, p.target.is_goal as u16]);
    }
    d
}

pub fn data_dataset(pairs: &[TrainingPair]) -> Dataset<f32> {
    let mut d = Dataset::with_capacity(crate::cascade::DATA_INPUT, 4, pairs.len());
    let mut input = Vec::with_capacity(crate::cascade::DATA_INPUT);
    for p in pairs {
        let t = &p.target;
        input.clear();
        input.extend_from_slice(p.context.as_slice());
        input.extend_from_slice(&one_hot(t.event_type));
        input.push(t.is_accurate as u8 as f32);
        input.push(t.is_goal as u8 as f32);
        d.push(
            &input,
            &[t.x_bin as u16, t.y_bin as u16, t.time_bin as u16, t.is_home as u16],
        );
    }
    d
}

/// Share of pairs whose most likely predicted type is the target type.
pub fn type_accuracy(cascade: &ModelCascade, pairs: &[TrainingPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(LemError::InvalidInput("no pairs to evaluate".into()));
    }
    let mut hits = 0usize;
    for p in pairs {
        let probs = cascade.type_net.forward(p.context.as_slice())?;
        let best = (0..NUM_TYPES)
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
            .expect("nonempty");
        hits += (best == p.target.event_type.index()) as usize;
    }
    Ok(hits as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineTuneKind {
    Team,
    Player,
    PlayerAddition,
    PlayerReplacement,
}

impl std::str::FromStr for FineTuneKind {
    type Err = LemError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "team" => Ok(FineTuneKind::Team),
            "player" => Ok(FineTuneKind::Player),
            "player_addition" | "addition" => Ok(FineTuneKind::PlayerAddition),
            "player_replacement" | "replacement" => Ok(FineTuneKind::PlayerReplacement),
            _ => Err(LemError::InvalidSpec(format!("unknown fine-tune kind '{s}'"))),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Which pairs enter fine-tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneSpec {
    pub kind: FineTuneKind,
    #[serde(default)]
    pub team_id: Option<u64>,
    #[serde(default)]
    pub player_id: Option<u64>,
    #[serde(default)]
    pub replaced_player_id: Option<u64>,
    /// Team-side pairs come only from the team's home matches.
    #[serde(default = "default_true")]
    pub home_only: bool,
}

impl FineTuneSpec {
    pub fn team(team_id: u64) -> Self {
        FineTuneSpec {
            kind: FineTuneKind::Team,
            team_id: Some(team_id),
            player_id: None,
            replaced_player_id: None,
            home_only: true,
        }
    }

    pub fn player(player_id: u64) -> Self {
        FineTuneSpec {
            kind: FineTuneKind::Player,
            team_id: None,
            player_id: Some(player_id),
            replaced_player_id: None,
            home_only: true,
        }
    }

    pub fn addition(team_id: u64, player_id: u64) -> Self {
        FineTuneSpec {
            kind: FineTuneKind::PlayerAddition,
            team_id: Some(team_id),
            player_id: Some(player_id),
            replaced_player_id: None,
            home_only: true,
        }
    }

    pub fn replacement(team_id: u64, player_id: u64, replaced_player_id: u64) -> Self {
        FineTuneSpec {
            kind: FineTuneKind::PlayerReplacement,
            team_id: Some(team_id),
            player_id: Some(player_id),
            replaced_player_id: Some(replaced_player_id),
            home_only: true,
        }
    }

    pub fn with_home_only(mut self, home_only: bool) -> Self {
        self.home_only = home_only;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let need = |field: Option<u64>, name: &str| {
            field.map(|_| ()).ok_or_else(|| {
                LemError::InvalidSpec(format!("{:?} fine-tuning requires {name}", self.kind))
            })
        };
        match self.kind {
            FineTuneKind::Team => need(self.team_id, "team_id"),
            FineTuneKind::Player => need(self.player_id, "player_id"),
            FineTuneKind::PlayerAddition => {
                need(self.team_id, "team_id")?;
                need(self.player_id, "player_id")
            }
            FineTuneKind::PlayerReplacement => {
                need(self.team_id, "team_id")?;
                need(self.player_id, "player_id")?;
                need(self.replaced_player_id, "replaced_player_id")?;
                if self.player_id == self.replaced_player_id {
                    return Err(LemError::InvalidSpec(
                        "incoming and replaced player are the same".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn team_side(&self, p: &TrainingPair) -> bool {
        self.team_id.is_some_and(|t| p.team_id == t && (!self.home_only || p.home_team == t))
    }

    fn player_side(&self, p: &TrainingPair) -> bool {
        self.player_id == Some(p.player_id)
    }

    /// Whether a pair enters fine-tuning; membership is by the target's actor.
    pub fn includes(&self, p: &TrainingPair) -> bool {
        match self.kind {
            FineTuneKind::Team => self.team_side(p),
            FineTuneKind::Player => self.player_side(p),
            FineTuneKind::PlayerAddition => self.team_side(p) || self.player_side(p),
            FineTuneKind::PlayerReplacement => {
                (self.team_side(p) || self.player_side(p))
                    && Some(p.player_id) != self.replaced_player_id
            }
        }
    }
}

/// Indices of the pairs selected by `spec`, in input order.
pub fn select_finetune_indices(pairs: &[TrainingPair], spec: &FineTuneSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let idx: Vec<usize> = (0..pairs.len()).filter(|&i| spec.includes(&pairs[i])).collect();
    if idx.is_empty() {
        return Err(LemError::EmptyFineTuneSet(format!("{spec:?} selects no pairs")));
    }
    Ok(idx)
}

pub fn select_finetune_pairs(pairs: &[TrainingPair], spec: &FineTuneSpec) -> Result<Vec<TrainingPair>> {
    Ok(select_finetune_indices(pairs, spec)?
        .into_iter()
        .map(|i| pairs[i].clone())
        .collect())
}

/// `clamp(round(2 log2 n), 32, 256)`.
pub fn finetune_batch_size(n: u128) -> usize {
    let n = n.max(1);
    let b = (2.0 * (n as f64).log2()).round();
    b.clamp(32.0, 256.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHyperparameters {
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(rename = "type")]
    pub type_net: NetHyperparameters,
    pub accuracy: NetHyperparameters,
    pub data: NetHyperparameters,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            type_net: NetHyperparameters {
                layers: vec![256],
                learning_rate: 0.0010,
                batch_size: 32,
                activation: Activation::Sigmoid,
            },
            accuracy: NetHyperparameters {
                layers: vec![128],
                learning_rate: 0.0410,
                batch_size: 1024,
                activation: Activation::Sigmoid,
            },
            data: NetHyperparameters {
                layers: vec![64, 256, 256],
                learning_rate: 0.0063,
                batch_size: 1024,
                activation: Activation::Relu,
            },
        }
    }
}

impl Hyperparameters {
    pub fn architecture(&self) -> CascadeArchitecture {
        CascadeArchitecture {
            type_hidden: self.type_net.layers.clone(),
            type_activation: self.type_net.activation,
            accuracy_hidden: self.accuracy.layers.clone(),
            accuracy_activation: self.accuracy.activation,
            data_hidden: self.data.layers.clone(),
            data_activation: self.data.activation,
        }
    }

    fn nets(&self) -> [&NetHyperparameters; 3] {
        [&self.type_net, &self.accuracy, &self.data]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub hyperparameters: Hyperparameters,
    pub max_epochs: usize,
    pub seed: u64,
    pub time_unit: TimeUnit,
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig {
            hyperparameters: Hyperparameters::default(),
            max_epochs: 25,
            seed: 0,
            time_unit: TimeUnit::Minutes,
        }
    }
}

/// Per-network losses, one entry per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose weights were kept; 0 means the initial weights.
    pub kept_epoch: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    #[serde(rename = "type")]
    pub type_net: NetHistory,
    pub accuracy: NetHistory,
    pub data: NetHistory,
}

#[derive(Debug, Serialize)]
struct TrainingMeta<'a> {
    hyperparameters: &'a Hyperparameters,
    base: BaseProvenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    finetune: Option<FineTuneProvenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseProvenance {
    pub seed: u64,
    pub max_epochs: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub report: TrainingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneProvenance {
    pub spec: FineTuneSpec,
    pub seed: u64,
    pub epochs: usize,
    pub pairs: usize,
    pub batch_size: usize,
    pub learning_rates: [f64; 3],
    pub report: TrainingReport,
}

fn fit(
    net: &mut Network<f32>,
    train: &Dataset<f32>,
    val: Option<&Dataset<f32>>,
    config: TrainConfig,
    name: &str,
) -> Result<NetHistory> {
    let mut history = NetHistory::default();
    if config.max_epochs == 0 {
        return Ok(history);
    }
    let mut trainer = Trainer::new(net, config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best = val.map(|v| dataset_loss(net, v)).transpose()?.map(|l| (l, net.clone()));
    for epoch in 1..=config.max_epochs {
        let loss = trainer.epoch(net, train, &mut rng).map_err(|e| {
            log::error!("{name} network diverged in epoch {epoch}: {e}");
            e
        })?;
        history.train_loss.push(loss);
        match (val, best.as_mut()) {
            (Some(v), Some(best)) => {
                let vl = dataset_loss(net, v)?;
                log::info!("{name} epoch {epoch}: train {loss:.5} val {vl:.5}");
                history.val_loss.push(vl);
                if vl < best.0 {
                    *best = (vl, net.clone());
                    history.kept_epoch = epoch;
                }
            }
            _ => {
                log::info!("{name} epoch {epoch}: train {loss:.5}");
                history.kept_epoch = epoch;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        *net = snapshot;
    }
    Ok(history)
}

/// Trains the base cascade, keeping the best validation-loss weights of each network.
pub fn train_base(train: &Corpus, val: &Corpus, config: &BaseConfig) -> Result<(ModelCascade, TrainingReport)> {
    let train_pairs = build_pairs(train, config.time_unit)?;
    let val_pairs = build_pairs(val, config.time_unit)?;
    train_base_pairs(&train_pairs, &val_pairs, Vocabulary::default(), config)
}

pub fn train_base_pairs(
    train: &[TrainingPair],
    val: &[TrainingPair],
    vocabulary: Vocabulary,
    config: &BaseConfig,
) -> Result<(ModelCascade, TrainingReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(LemError::InvalidInput(
            "base training needs nonempty training and validation pairs".into(),
        ));
    }
    let hp = &config.hyperparameters;
    let mut cascade = ModelCascade::initialized(&hp.architecture(), vocabulary, config.time_unit, config.seed)?;
    let cfg = |h: &NetHyperparameters, k: u64| TrainConfig {
        learning_rate: h.learning_rate,
        batch_size: h.batch_size,
        max_epochs: config.max_epochs,
        seed: config.seed.wrapping_mul(31).wrapping_add(k),
    };
    let mut report = TrainingReport::default();
    report.type_net = fit(
        &mut cascade.type_net,
        &type_dataset(train),
        Some(&type_dataset(val)),
        cfg(&hp.type_net, 0),
        "type",
    )?;
    report.accuracy = fit(
        &mut cascade.accuracy_net,
        &accuracy_dataset(train),
        Some(&accuracy_dataset(val)),
        cfg(&hp.accuracy, 1),
        "accuracy",
    )?;
    report.data = fit(
        &mut cascade.data_net,
        &data_dataset(train),
        Some(&data_dataset(val)),
        cfg(&hp.data, 2),
        "data",
    )?;
    let meta = TrainingMeta {
        hyperparameters: hp,
        base: BaseProvenance {
            seed: config.seed,
            max_epochs: config.max_epochs,
            train_pairs: train.len(),
            val_pairs: val.len(),
            report: report.clone(),
        },
        finetune: None,
    };
    cascade.meta.training = serde_json::to_value(&meta).expect("serializable");
    Ok((cascade, report))
}

/// Hyperparameters recorded in a cascade, falling back to the defaults.
pub fn recorded_hyperparameters(cascade: &ModelCascade) -> Hyperparameters {
    cascade
        .meta
        .training
        .get("hyperparameters")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig { epochs: 25, seed: 0 }
    }
}

/// Fine-tunes a copy of `base` on `pairs`: learning rates a tenth of the
/// base ones, batch size from the pair count, every epoch run and the final
/// weights kept. `base` is never modified.
pub fn finetune(
    base: &ModelCascade,
    pairs: &[TrainingPair],
    spec: &FineTuneSpec,
    config: &FineTuneConfig,
) -> Result<(ModelCascade, TrainingReport)> {
    spec.validate()?;
    if pairs.is_empty() {
        return Err(LemError::EmptyFineTuneSet("no pairs".into()));
    }
    let hp = recorded_hyperparameters(base);
    let batch_size = finetune_batch_size(pairs.len() as u128);
    let lrs = hp.nets().map(|h| h.learning_rate / 10.0);
    let cfg = |k: usize| TrainConfig {
        learning_rate: lrs[k],
        batch_size,
        max_epochs: config.epochs,
        seed: config.seed.wrapping_mul(31).wrapping_add(k as u64),
    };
    let mut tuned = base.clone();
    let mut report = TrainingReport::default();
    report.type_net = fit(&mut tuned.type_net, &type_dataset(pairs), None, cfg(0), "type")?;
    report.accuracy = fit(&mut tuned.accuracy_net, &accuracy_dataset(pairs), None, cfg(1), "accuracy")?;
    report.data = fit(&mut tuned.data_net, &data_dataset(pairs), None, cfg(2), "data")?;

    let mut training = base.meta.training.clone();
    if !training.is_object() {
        training = serde_json::json!({ "hyperparameters": hp });
    }
    training["finetune"] = serde_json::to_value(FineTuneProvenance {
        spec: spec.clone(),
        seed: config.seed,
        epochs: config.epochs,
        pairs: pairs.len(),
        batch_size,
        learning_rates: lrs,
        report: report.clone(),
    })
    .expect("serializable");
    tuned.meta.training = training;
    Ok((tuned, report))
}

/// Fine-tune job descriptor consumed by the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneJob {
    pub spec: FineTuneSpec,
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub base: PathBuf,
    pub corpus: PathBuf,
    pub out: PathBuf,
}

fn default_epochs() -> usize {
    25
}

fn default_repeats() -> usize {
    1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, EventType};
    use crate::ingest::Match;

    fn ev(match_id: u64, minute: f64, team: u64, player: u64, home: bool) -> Event {
        Event {
            event_type: EventType(28),
            period: 0,
            minute,
            x: 0.5,
            y: 0.5,
            is_home: home,
            is_accurate: true,
            is_goal: false,
            home_score: 0,
            away_score: 0,
            team_id: team,
            player_id: player,
            match_id,
        }
    }

    fn corpus(matches: Vec<Vec<Event>>) -> Corpus {
        Corpus {
            mapping_version: "v".into(),
            matches: matches
                .into_iter()
                .map(|events| Match {
                    match_id: events[0].match_id,
                    league: "L".into(),
                    season: "S".into(),
                    home_team: 1,
                    away_team: 2,
                    events,
                })
                .collect(),
        }
    }

    #[test]
    fn pair_counts() {
        let one = corpus(vec![(0..5).map(|i| ev(1, i as f64, 1, 1, true)).collect()]);
        assert_eq!(build_pairs(&one, TimeUnit::Minutes).unwrap().len(), 4);
        let two = corpus(vec![
            (0..3).map(|i| ev(1, i as f64, 1, 1, true)).collect(),
            (0..3).map(|i| ev(2, i as f64, 1, 1, true)).collect(),
        ]);
        let pairs = build_pairs(&two, TimeUnit::Minutes).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs.iter().filter(|p| p.match_id == 2).count(), 2);
        let single = corpus(vec![vec![ev(3, 0.0, 1, 1, true)]]);
        assert!(build_pairs(&single, TimeUnit::Minutes).unwrap().is_empty());
    }

    #[test]
    fn time_bin_floors_the_gap() {
        let c = corpus(vec![vec![ev(1, 10.0, 1, 1, true), ev(1, 12.4, 1, 1, true)]]);
        assert_eq!(build_pairs(&c, TimeUnit::Minutes).unwrap()[0].target.time_bin, 2);
        assert_eq!(build_pairs(&c, TimeUnit::Seconds).unwrap()[0].target.time_bin, 59);
        let c = corpus(vec![vec![ev(1, 10.0, 1, 1, true), ev(1, 10.1, 1, 1, true)]]);
        assert_eq!(build_pairs(&c, TimeUnit::Seconds).unwrap()[0].target.time_bin, 6);
    }

    #[test]
    fn batch_size_rule() {
        assert_eq!(finetune_batch_size(1), 32);
        assert_eq!(finetune_batch_size(600_000), 38);
        assert_eq!(finetune_batch_size(1u128 << 64), 128);
        assert_eq!(finetune_batch_size(u128::MAX), 256);
        let mut last = 0;
        for k in 0..128 {
            let b = finetune_batch_size(1u128 << k);
            assert!((32..=256).contains(&b) && b >= last);
            last = b;
        }
    }

    #[test]
    fn spec_validation() {
        assert!(FineTuneSpec::team(1).validate().is_ok());
        let mut s = FineTuneSpec::team(1);
        s.team_id = None;
        assert!(s.validate().is_err());
        let mut s = FineTuneSpec::addition(1, 2);
        s.player_id = None;
        assert!(s.validate().is_err());
        assert!(FineTuneSpec::replacement(1, 2, 2).validate().is_err());
        let json = r#"{"kind":"player_replacement","team_id":1,"player_id":2,"replaced_player_id":3}"#;
        let s: FineTuneSpec = serde_json::from_str(json).unwrap();
        assert!(s.home_only);
        assert_eq!(s, FineTuneSpec::replacement(1, 2, 3));
    }

    fn toy_pairs() -> Vec<TrainingPair> {
        // team 1 (home in match 1): 10 target events; player 50 of team 2: 4
        let mut events = vec![ev(1, 0.0, 2, 51, false)];
        for i in 0..10 {
            events.push(ev(1, 1.0 + i as f64, 1, 10 + (i % 3), true));
        }
        for i in 0..4 {
            events.push(ev(1, 20.0 + i as f64, 2, 50, false));
        }
        build_pairs(&corpus(vec![events]), TimeUnit::Minutes).unwrap()
    }

    #[test]
    fn addition_is_the_union_of_disjoint_actors() {
        let pairs = toy_pairs();
        let add = select_finetune_pairs(&pairs, &FineTuneSpec::addition(1, 50)).unwrap();
        assert_eq!(add.len(), 14);
        assert_eq!(select_finetune_pairs(&pairs, &FineTuneSpec::team(1)).unwrap().len(), 10);
        assert_eq!(select_finetune_pairs(&pairs, &FineTuneSpec::player(50)).unwrap().len(), 4);
    }

    #[test]
    fn replacement_removes_the_outgoing_player() {
        let pairs = toy_pairs();
        let add = select_finetune_indices(&pairs, &FineTuneSpec::addition(1, 50)).unwrap();
        let rep = select_finetune_indices(&pairs, &FineTuneSpec::replacement(1, 50, 10)).unwrap();
        let out: Vec<usize> = add.iter().copied().filter(|&i| pairs[i].player_id == 10).collect();
        let mut union = rep.clone();
        union.extend(&out);
        union.sort();
        assert_eq!(union, add);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let pairs = toy_pairs();
        assert!(matches!(
            select_finetune_pairs(&pairs, &FineTuneSpec::player(12345)),
            Err(LemError::EmptyFineTuneSet(_))
        ));
        // team 2 never plays at home in the fixture
        assert!(select_finetune_pairs(&pairs, &FineTuneSpec::team(2)).is_err());
        assert_eq!(
            select_finetune_pairs(&pairs, &FineTuneSpec::team(2).with_home_only(false))
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn zero_epoch_finetune_is_identity_and_lr_is_a_tenth() {
        let pairs = toy_pairs();
        let hp = Hyperparameters {
            type_net: NetHyperparameters { layers: vec![4], ..Hyperparameters::default().type_net },
            accuracy: NetHyperparameters { layers: vec![4], ..Hyperparameters::default().accuracy },
            data: NetHyperparameters { layers: vec![4], ..Hyperparameters::default().data },
        };
        let cfg = BaseConfig {
            hyperparameters: hp,
            max_epochs: 1,
            ..Default::default()
        };
        let (base, _) = train_base_pairs(&pairs, &pairs, Vocabulary::default(), &cfg).unwrap();
        let spec = FineTuneSpec::team(1);
        let (same, _) = finetune(&base, &pairs, &spec, &FineTuneConfig { epochs: 0, seed: 1 }).unwrap();
        assert_eq!(same.type_net, base.type_net);
        assert_eq!(same.data_net, base.data_net);
        let (tuned, _) = finetune(&base, &pairs, &spec, &FineTuneConfig { epochs: 2, seed: 1 }).unwrap();
        assert_ne!(tuned.type_net, base.type_net);
        let lr = tuned.meta.training["finetune"]["learning_rates"][0].as_f64().unwrap();
        assert!((lr - 0.0001).abs() < 1e-12);
        let again = finetune(&base, &pairs, &spec, &FineTuneConfig { epochs: 2, seed: 1 }).unwrap().0;
        assert_eq!(again.to_bytes(), tuned.to_bytes());
    }

    #[test]
    fn recorded_hyperparameters_are_the_table_values() {
        let pairs = toy_pairs();
        let cfg = BaseConfig {
            max_epochs: 1,
            ..Default::default()
        };
        let (base, report) = train_base_pairs(&pairs, &pairs, Vocabulary::default(), &cfg).unwrap();
        assert_eq!(recorded_hyperparameters(&base), Hyperparameters::default());
        let h = &base.meta.training["hyperparameters"];
        assert_eq!(h["type"]["learning_rate"], 0.0010);
        assert_eq!(h["accuracy"]["batch_size"], 1024);
        assert_eq!(h["data"]["layers"], serde_json::json!([64, 256, 256]));
        assert_eq!(h["data"]["activation"], "relu");
        assert_eq!(report.type_net.val_loss.len(), 1);
    }
}
