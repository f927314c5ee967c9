//! The three-stage next-event model.
//!
//! Stage order is fixed: the type network sees the game state; the accuracy
//! network sees the state plus the *sampled* type; the data network sees both
//! plus the *sampled* accuracy and goal bits. Each stage samples before the
//! next one runs.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LemError, Result};
use crate::event::{
    one_hot, EventType, GameState, PredictedEvent, TimeUnit, NUM_TYPES, SIDE_BINS, STATE_DIM,
    TIME_BINS, X_BINS, Y_BINS,
};
use crate::nnet::{
    read_checkpoint, write_checkpoint, Activation, ForwardScratch, Head, HeadKind, Network,
    NetworkSpec,
};
use crate::vocab::Vocabulary;

pub const ACCURACY_INPUT: usize = STATE_DIM + NUM_TYPES;
pub const DATA_INPUT: usize = ACCURACY_INPUT + 2;
pub const DATA_HEADS: [usize; 4] = [X_BINS, Y_BINS, TIME_BINS, SIDE_BINS];
pub const DATA_OUTPUT: usize = X_BINS + Y_BINS + TIME_BINS + SIDE_BINS;

pub const CASCADE_MAGIC: &[u8; 4] = b"LEMC";
pub const CASCADE_VERSION: u32 = 1;

/// Hidden-layer layout of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeArchitecture {
    pub type_hidden: Vec<usize>,
    pub type_activation: Activation,
    pub accuracy_hidden: Vec<usize>,
    pub accuracy_activation: Activation,
    pub data_hidden: Vec<usize>,
    pub data_activation: Activation,
}

impl Default for CascadeArchitecture {
    /// Type [256] sigmoid, Accuracy [128] sigmoid, Data [64, 256, 256] relu.
    fn default() -> Self {
        CascadeArchitecture {
            type_hidden: vec![256],
            type_activation: Activation::Sigmoid,
            accuracy_hidden: vec![128],
            accuracy_activation: Activation::Sigmoid,
            data_hidden: vec![64, 256, 256],
            data_activation: Activation::Relu,
        }
    }
}

impl CascadeArchitecture {
    pub fn type_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: STATE_DIM,
            hidden: self.type_hidden.clone(),
            hidden_activation: self.type_activation,
            heads: vec![Head::categorical(NUM_TYPES)],
        }
    }

    pub fn accuracy_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: ACCURACY_INPUT,
            hidden: self.accuracy_hidden.clone(),
            hidden_activation: self.accuracy_activation,
            heads: vec![Head::bernoulli(2)],
        }
    }

    pub fn data_spec(&self) -> NetworkSpec {
        NetworkSpec {
            input_dim: DATA_INPUT,
            hidden: self.data_hidden.clone(),
            hidden_activation: self.data_activation,
            heads: DATA_HEADS.iter().map(|&n| Head::categorical(n)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeMeta {
    pub vocabulary: Vocabulary,
    /// Data-network head split: x, y, time elapsed, acting side.
    pub data_heads: Vec<usize>,
    pub time_unit: TimeUnit,
    /// Training hyperparameters and provenance, written by the trainer.
    #[serde(default)]
    pub training: serde_json::Value,
}

impl CascadeMeta {
    pub fn new(vocabulary: Vocabulary, time_unit: TimeUnit) -> Self {
        CascadeMeta {
            vocabulary,
            data_heads: DATA_HEADS.to_vec(),
            time_unit,
            training: serde_json::Value::Null,
        }
    }
}

/// Data-network output split into its four distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDistribution {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub time: Vec<f32>,
    pub side: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct ModelCascade {
    pub type_net: Network<f32>,
    pub accuracy_net: Network<f32>,
    pub data_net: Network<f32>,
    pub meta: CascadeMeta,
    goal_mask: [bool; NUM_TYPES],
}

/// Per-thread buffers for [`ModelCascade::sample_event_with`].
#[derive(Debug, Clone, Default)]
pub struct CascadeScratch {
    forward: ForwardScratch<f32>,
    input: Vec<f32>,
    probs: Vec<f32>,
}

fn check_net(
    net: &Network<f32>,
    name: &str,
    input: usize,
    heads: &[(HeadKind, usize)],
) -> Result<()> {
    let actual: Vec<(HeadKind, usize)> = net.heads().iter().map(|h| (h.kind, h.len)).collect();
    if net.input_dim() != input || actual != heads {
        return Err(LemError::InvalidNetwork(format!(
            "{name} network is {}->{:?}, expected {input}->{heads:?}",
            net.input_dim(),
            actual
        )));
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector with `u` in `[0, 1)`.
pub fn sample_categorical(probs: &[f32], u: f64) -> usize {
    let mut cum = 0.0f64;
    for (i, &p) in probs.iter().enumerate() {
        cum += p as f64;
        if u < cum {
            return i;
        }
    }
    // rounding left the total below u: take the last class with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn temper(probs: &mut [f32], temperature: f64) {
    if temperature == 1.0 {
        return;
    }
    let inv = 1.0 / temperature;
    let mut sum = 0.0f64;
    for p in probs.iter_mut() {
        *p = (*p as f64).powf(inv) as f32;
        sum += *p as f64;
    }
    if sum > 0.0 {
        probs.iter_mut().for_each(|p| *p = (*p as f64 / sum) as f32);
    }
}

fn temper_bernoulli(p: f32, temperature: f64) -> f32 {
    if temperature == 1.0 || p <= 0.0 || p >= 1.0 {
        return p;
    }
    let logit = (p as f64 / (1.0 - p as f64)).ln() / temperature;
    (1.0 / (1.0 + (-logit).exp())) as f32
}

fn check_one_hot(v: &[f32]) -> Result<EventType> {
    if v.len() != NUM_TYPES {
        return Err(LemError::DimensionMismatch {
            expected: NUM_TYPES,
            got: v.len(),
            context: "type one-hot",
        });
    }
    let ones = v.iter().filter(|&&x| x == 1.0).count();
    let zeros = v.iter().filter(|&&x| x == 0.0).count();
    if ones != 1 || zeros != NUM_TYPES - 1 {
        return Err(LemError::InvalidInput("type vector is not one-hot".into()));
    }
    Ok(EventType(v.iter().position(|&x| x == 1.0).expect("one entry") as u8))
}

impl ModelCascade {
    pub fn new(
        type_net: Network<f32>,
        accuracy_net: Network<f32>,
        data_net: Network<f32>,
        meta: CascadeMeta,
    ) -> Result<Self> {
        meta.vocabulary.validate()?;
        if meta.data_heads != DATA_HEADS {
            return Err(LemError::InvalidNetwork(format!(
                "unsupported data head split {:?} (supported: {:?})",
                meta.data_heads, DATA_HEADS
            )));
        }
        check_net(&type_net, "type", STATE_DIM, &[(HeadKind::Categorical, NUM_TYPES)])?;
        check_net(&accuracy_net, "accuracy", ACCURACY_INPUT, &[(HeadKind::Bernoulli, 2)])?;
        let data_heads: Vec<_> = DATA_HEADS.iter().map(|&n| (HeadKind::Categorical, n)).collect();
        check_net(&data_net, "data", DATA_INPUT, &data_heads)?;
        let goal_mask = meta.vocabulary.goal_mask();
        Ok(ModelCascade {
            type_net,
            accuracy_net,
            data_net,
            meta,
            goal_mask,
        })
    }

    /// Randomly initialized cascade with the given architecture.
    pub fn initialized(
        arch: &CascadeArchitecture,
        vocabulary: Vocabulary,
        time_unit: TimeUnit,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            Network::new(&arch.type_spec(), seed)?,
            Network::new(&arch.accuracy_spec(), seed.wrapping_add(1))?,
            Network::new(&arch.data_spec(), seed.wrapping_add(2))?,
            CascadeMeta::new(vocabulary, time_unit),
        )
    }

    /// Every weight and bias zero: uniform categorical heads, Bernoulli 0.5.
    pub fn zeros(arch: &CascadeArchitecture, vocabulary: Vocabulary, time_unit: TimeUnit) -> Result<Self> {
        Self::new(
            Network::zeros(&arch.type_spec())?,
            Network::zeros(&arch.accuracy_spec())?,
            Network::zeros(&arch.data_spec())?,
            CascadeMeta::new(vocabulary, time_unit),
        )
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.meta.vocabulary
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.meta.time_unit
    }

    pub fn is_goal_capable(&self, t: EventType) -> bool {
        self.goal_mask[t.index()]
    }

    pub fn predict_type(&self, state: &GameState) -> Result<Vec<f32>> {
        state.validate()?;
        self.type_net.forward(state.as_slice())
    }

    /// `(p_accurate, p_goal)`; `p_goal` is zero for types that cannot score.
    pub fn predict_accuracy(&self, state: &GameState, type_one_hot: &[f32]) -> Result<(f32, f32)> {
        let t = check_one_hot(type_one_hot)?;
        let input: Vec<f32> = state.as_slice().iter().chain(type_one_hot).copied().collect();
        let p = self.accuracy_net.forward(&input)?;
        let p_goal = if self.goal_mask[t.index()] { p[1] } else { 0.0 };
        Ok((p[0], p_goal))
    }

    pub fn predict_data(
        &self,
        state: &GameState,
        type_one_hot: &[f32],
        accuracy: (bool, bool),
    ) -> Result<DataDistribution> {
        check_one_hot(type_one_hot)?;
        let mut input: Vec<f32> = state.as_slice().iter().chain(type_one_hot).copied().collect();
        input.push(accuracy.0 as u8 as f32);
        input.push(accuracy.1 as u8 as f32);
        let p = self.data_net.forward(&input)?;
        let (x, rest) = p.split_at(X_BINS);
        let (y, rest) = rest.split_at(Y_BINS);
        let (time, side) = rest.split_at(TIME_BINS);
        Ok(DataDistribution {
            x: x.to_vec(),
            y: y.to_vec(),
            time: time.to_vec(),
            side: side.to_vec(),
        })
    }

    /// Samples the next event with fresh buffers.
    pub fn sample_event<R: Rng>(&self, state: &GameState, rng: &mut R) -> Result<PredictedEvent> {
        state.validate()?;
        self.sample_event_with(state, rng, &mut CascadeScratch::default(), 1.0)
    }

    /// Samples the next event: seven uniform draws, always in the order type,
    /// accuracy, goal, x, y, time, side.
    pub fn sample_event_with<R: Rng>(
        &self,
        state: &GameState,
        rng: &mut R,
        scratch: &mut CascadeScratch,
        temperature: f64,
    ) -> Result<PredictedEvent> {
        let CascadeScratch {
            forward,
            input,
            probs,
        } = scratch;

        let u_type: f64 = rng.random();
        probs.clear();
        probs.extend_from_slice(self.type_net.forward_with(state.as_slice(), forward)?);
        temper(probs, temperature);
        let event_type = EventType(sample_categorical(probs, u_type) as u8);

        input.clear();
        input.extend_from_slice(state.as_slice());
        input.extend_from_slice(&one_hot(event_type));
        let (u_acc, u_goal): (f64, f64) = (rng.random(), rng.random());
        let p = self.accuracy_net.forward_with(input, forward)?;
        let p_acc = temper_bernoulli(p[0], temperature);
        let p_goal = if self.goal_mask[event_type.index()] {
            temper_bernoulli(p[1], temperature)
        } else {
            0.0
        };
        let is_accurate = u_acc < p_acc as f64;
        let is_goal = u_goal < p_goal as f64;

        input.push(is_accurate as u8 as f32);
        input.push(is_goal as u8 as f32);
        let u: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        let out = self.data_net.forward_with(input, forward)?;
        let mut offset = 0;
        let mut bins = [0u8; 4];
        for (k, &len) in DATA_HEADS.iter().enumerate() {
            probs.clear();
            probs.extend_from_slice(&out[offset..offset + len]);
            temper(probs, temperature);
            bins[k] = sample_categorical(probs, u[k]) as u8;
            offset += len;
        }
        Ok(PredictedEvent {
            event_type,
            is_accurate,
            is_goal,
            x_bin: bins[0],
            y_bin: bins[1],
            time_bin: bins[2],
            is_home: bins[3] == 1,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CASCADE_MAGIC);
        out.extend_from_slice(&CASCADE_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        for (role, net) in [
            ("type", &self.type_net),
            ("accuracy", &self.accuracy_net),
            ("data", &self.data_net),
        ] {
            let inner = write_checkpoint(net, &serde_json::json!({ "role": role }));
            out.extend_from_slice(&(inner.len() as u64).to_le_bytes());
            out.extend_from_slice(&inner);
        }
        let crc = crc32fast::hash(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || LemError::Checkpoint("truncated cascade file".into());
        if bytes.len() < 16 || &bytes[..4] != CASCADE_MAGIC {
            return Err(LemError::Checkpoint("bad cascade magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CASCADE_VERSION {
            return Err(LemError::Version {
                found: version,
                expected: CASCADE_VERSION,
            });
        }
        let crc_at = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[crc_at..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[4..crc_at]);
        if stored != computed {
            return Err(LemError::Checksum { stored, computed });
        }
        let body = &bytes[..crc_at];
        let meta_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let mut at = 12 + meta_len;
        let meta: CascadeMeta = serde_json::from_slice(body.get(12..at).ok_or_else(truncated)?)
            .map_err(|e| LemError::Checkpoint(format!("cascade metadata: {e}")))?;
        let mut nets = Vec::with_capacity(3);
        for _ in 0..3 {
            let len_bytes = body.get(at..at + 8).ok_or_else(truncated)?;
            let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
            at += 8;
            let end = at.checked_add(len).ok_or_else(truncated)?;
            let (net, _) = read_checkpoint(body.get(at..end).ok_or_else(truncated)?)?;
            nets.push(net);
            at = end;
        }
        if at != body.len() {
            return Err(LemError::Checkpoint("trailing bytes in cascade file".into()));
        }
        let data = nets.pop().expect("three nets");
        let accuracy = nets.pop().expect("three nets");
        let type_net = nets.pop().expect("three nets");
        Self::new(type_net, accuracy, data, meta)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| LemError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| LemError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{encode_state, Event};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> CascadeArchitecture {
        CascadeArchitecture {
            type_hidden: vec![8],
            accuracy_hidden: vec![8],
            data_hidden: vec![8],
            ..Default::default()
        }
    }

    fn state() -> GameState {
        encode_state(&Event {
            event_type: EventType(28),
            period: 0,
            minute: 12.0,
            x: 0.4,
            y: 0.6,
            is_home: true,
            is_accurate: true,
            is_goal: false,
            home_score: 1,
            away_score: 0,
            team_id: 1,
            player_id: 1,
            match_id: 1,
        })
        .unwrap()
    }

    #[test]
    fn dimensions_match_the_architecture_table() {
        let c = ModelCascade::initialized(&CascadeArchitecture::default(), Vocabulary::default(), TimeUnit::Minutes, 1)
            .unwrap();
        assert_eq!((c.type_net.input_dim(), c.type_net.output_dim()), (42, 33));
        assert_eq!((c.accuracy_net.input_dim(), c.accuracy_net.output_dim()), (75, 2));
        assert_eq!((c.data_net.input_dim(), c.data_net.output_dim()), (77, 264));
        assert_eq!(DATA_HEADS.iter().sum::<usize>(), 264);
    }

    #[test]
    fn zero_cascade_is_uniform() {
        let c = ModelCascade::zeros(&small_arch(), Vocabulary::default(), TimeUnit::Minutes).unwrap();
        let p = c.predict_type(&state()).unwrap();
        assert_eq!(p.len(), 33);
        for v in &p {
            assert!((v - 1.0 / 33.0).abs() < 1e-7);
        }
        let shot = one_hot(EventType(32));
        assert_eq!(c.predict_accuracy(&state(), &shot).unwrap(), (0.5, 0.5));
        let d = c.predict_data(&state(), &shot, (true, false)).unwrap();
        for (head, n) in [(&d.x, 101), (&d.y, 101), (&d.time, 60), (&d.side, 2)] {
            assert_eq!(head.len(), n);
            for v in head {
                assert!((v - 1.0 / n as f32).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn goal_masked_for_non_shots() {
        let c = ModelCascade::zeros(&small_arch(), Vocabulary::default(), TimeUnit::Minutes).unwrap();
        let pass = one_hot(EventType(28));
        assert_eq!(c.predict_accuracy(&state(), &pass).unwrap(), (0.5, 0.0));
    }

    #[test]
    fn non_one_hot_type_is_rejected() {
        let c = ModelCascade::zeros(&small_arch(), Vocabulary::default(), TimeUnit::Minutes).unwrap();
        let mut v = one_hot(EventType(3));
        v[4] = 1.0;
        assert!(c.predict_accuracy(&state(), &v).is_err());
        assert!(c.predict_data(&state(), &[0.0; 33], (false, false)).is_err());
        assert!(c.predict_accuracy(&state(), &[1.0; 5]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let c = ModelCascade::initialized(&small_arch(), Vocabulary::default(), TimeUnit::Minutes, 5).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| c.sample_event(&state(), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn inverse_cdf_edges() {
        assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], 0.999_999), 1);
        assert_eq!(sample_categorical(&[0.5, 0.5], 0.5), 1);
        assert_eq!(sample_categorical(&[0.3, 0.3, 0.0], 0.9999), 1);
    }

    #[test]
    fn temperature_one_is_identity_and_low_temperature_sharpens() {
        let mut p = vec![0.2f32, 0.8];
        temper(&mut p, 1.0);
        assert_eq!(p, vec![0.2, 0.8]);
        temper(&mut p, 0.5);
        assert!(p[1] > 0.9);
        assert!(temper_bernoulli(0.7, 0.5) > 0.7);
    }

    #[test]
    fn container_round_trip_and_corruption() {
        let c = ModelCascade::initialized(&small_arch(), Vocabulary::default(), TimeUnit::Seconds, 9).unwrap();
        let bytes = c.to_bytes();
        let back = ModelCascade::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.data_net, c.data_net);
        assert!(ModelCascade::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        let mut bad = bytes.clone();
        bad[40] ^= 1;
        assert!(ModelCascade::from_bytes(&bad).is_err());
    }
}
