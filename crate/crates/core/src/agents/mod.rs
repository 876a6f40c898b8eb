//! Cascading group/operation/group Q-learning agents.
//!
//! Each agent scores `state ⊕ action` pairs with its own network, so the
//! candidate set may change size from one iteration to the next. The three
//! agents act in sequence and every downstream state embeds the upstream
//! choices:
//!
//! * group-1: state `Rep(F)`, actions are groups `Rep(C)`
//! * operation: state `Rep(F) ⊕ Rep(C¹)`, actions are operation one-hots
//! * group-2: state `Rep(F) ⊕ Rep(C¹) ⊕ Rep(o)`, actions are the other groups

pub mod exploration;
pub mod qnet;
pub mod replay;

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::DescriptorGroup;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ops::{Operation, OperationSet};
use crate::state::{concat_states, rep_descriptor_set, rep_group, rep_operation, StateVector, REP_LEN};

pub use exploration::{greedy_action, select_action, ExplorationSchedule};
pub use qnet::{td_loss_and_grad, td_update, Adam, Mlp, Scorer};
pub use replay::{ReplayBuffer, Transition};

/// Which quantity rewards the group-1 agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent1Reward {
    /// Utility of the chosen group itself, `U(C¹|y)`.
    Prose,
    /// Utility of the whole previous set, `U(F_{t−1}|y)`.
    Formula,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub exploration: ExplorationSchedule,
    /// Pins ε for every step when set.
    pub epsilon_override: Option<f64>,
    pub agent1_reward: Agent1Reward,
    /// Sync a frozen target network every this many updates.
    pub target_sync: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            gamma: 0.9,
            replay_capacity: 2048,
            batch_size: 32,
            exploration: ExplorationSchedule::default(),
            epsilon_override: None,
            agent1_reward: Agent1Reward::Prose,
            target_sync: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("agent gamma must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("agent learning_rate must be positive".into()));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 {
            return Err(Error::Config("agent replay_capacity and batch_size must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("agent hidden layer widths must be positive".into()));
        }
        if let Some(e) = self.epsilon_override {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config("agent epsilon must lie in [0, 1]".into()));
            }
        }
        if self.target_sync == Some(0) {
            return Err(Error::Config("agent target_sync must be positive".into()));
        }
        let s = &self.exploration;
        if !(0.0..=1.0).contains(&s.start) || !(0.0..=1.0).contains(&s.end) || !(s.decay_fraction >= 0.0) {
            return Err(Error::Config("invalid exploration schedule".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, step: usize, total: usize) -> f64 {
        self.epsilon_override
            .unwrap_or_else(|| self.exploration.epsilon(step, total))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Group1,
    Operation,
    Group2,
}

/// One Q-learning agent: online network, optional target copy, optimizer
/// state and replay memory.
#[derive(Clone, Debug)]
pub struct QAgent {
    role: AgentRole,
    q: Mlp,
    target: Option<Mlp>,
    opt: Adam,
    replay: ReplayBuffer,
    updates: usize,
}

impl QAgent {
    pub fn new<R: Rng>(role: AgentRole, input_width: usize, cfg: &AgentConfig, rng: &mut R) -> Self {
        let q = Mlp::new(input_width, &cfg.hidden, true, rng);
        let n = q.params().len();
        Self {
            role,
            target: cfg.target_sync.map(|_| q.clone()),
            q,
            opt: Adam::new(n, cfg.learning_rate),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            updates: 0,
        }
    }

    pub fn role(&self) -> AgentRole {
        self.role
    }

    pub fn network(&self) -> &Mlp {
        &self.q
    }

    pub fn act<R: Rng>(&self, state: &[f64], candidates: &[Vec<f64>], epsilon: f64, rng: &mut R) -> Result<usize> {
        select_action(&self.q, state, candidates, epsilon, rng)
    }

    pub fn greedy(&self, state: &[f64], candidates: &[Vec<f64>]) -> usize {
        greedy_action(&self.q, state, candidates)
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    /// One TD step on a minibatch drawn from replay. `None` when the
    /// memory is still empty.
    pub fn learn<R: Rng>(&mut self, cfg: &AgentConfig, rng: &mut R) -> Result<Option<f64>> {
        if self.replay.is_empty() {
            return Ok(None);
        }
        let batch = self.replay.sample(cfg.batch_size, rng);
        let loss = td_update(&mut self.q, self.target.as_ref(), &mut self.opt, &batch, cfg.gamma)?;
        self.updates += 1;
        if let (Some(every), Some(t)) = (cfg.target_sync, self.target.as_mut()) {
            if self.updates % every == 0 {
                *t = self.q.clone();
            }
        }
        Ok(Some(loss))
    }
}

fn joined(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// The outcome of one cascaded decision, with the network inputs of the
/// chosen actions kept for the TD update.
#[derive(Clone, Debug)]
pub struct CascadeChoice {
    pub group1: usize,
    pub operation: Operation,
    /// Chosen by the group-2 agent; `None` for unary operations.
    pub group2: Option<usize>,
    pub state1: StateVector,
    pub state_op: StateVector,
    pub state2: Option<StateVector>,
    pub input1: Vec<f64>,
    pub input_op: Vec<f64>,
    pub input2: Option<Vec<f64>>,
}

/// Network inputs of every candidate action in the following state, as
/// seen by each agent. The downstream agents' next states follow the
/// greedy upstream choices.
#[derive(Clone, Debug, Default)]
pub struct NextInputs {
    pub group1: Vec<Vec<f64>>,
    pub operation: Vec<Vec<f64>>,
    pub group2: Vec<Vec<f64>>,
}

pub struct CascadingAgents {
    pub group1: QAgent,
    pub operation: QAgent,
    pub group2: QAgent,
    ops: OperationSet,
    op_reps: Vec<StateVector>,
    cfg: AgentConfig,
}

impl CascadingAgents {
    pub fn new<R: Rng>(ops: &OperationSet, cfg: &AgentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let n_ops = ops.len();
        let op_reps = ops
            .operations()
            .into_iter()
            .map(|op| rep_operation(op, ops))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            group1: QAgent::new(AgentRole::Group1, 2 * REP_LEN, cfg, rng),
            operation: QAgent::new(AgentRole::Operation, 2 * REP_LEN + n_ops, cfg, rng),
            group2: QAgent::new(AgentRole::Group2, 3 * REP_LEN + n_ops, cfg, rng),
            ops: ops.clone(),
            op_reps,
            cfg: cfg.clone(),
        })
    }

    pub fn operations(&self) -> &OperationSet {
        &self.ops
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Operation candidates: every operation when at least two groups
    /// exist, otherwise only the unary ones.
    fn op_candidates(&self, n_groups: usize) -> Vec<usize> {
        let all = self.ops.operations();
        (0..all.len())
            .filter(|&i| n_groups >= 2 || !all[i].is_binary())
            .collect()
    }

    /// Group-1, then operation, then (for binary operations) group-2.
    pub fn cascade_select<R: Rng>(
        &self,
        data: &Dataset,
        groups: &[DescriptorGroup],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<CascadeChoice> {
        if groups.is_empty() {
            return Err(Error::Empty("no descriptor groups"));
        }
        let s1 = rep_descriptor_set(data)?;
        let reps: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| rep_group(data, g.members()).map(StateVector::into_inner))
            .collect::<Result<_>>()?;
        let c1 = self.group1.act(s1.as_slice(), &reps, epsilon, rng)?;
        let rep_c1 = StateVector::new(reps[c1].clone());
        let state_op = concat_states(&[&s1, &rep_c1]);

        let op_idx = self.op_candidates(groups.len());
        if op_idx.is_empty() {
            return Err(Error::InvalidInput(
                "a single descriptor group leaves no applicable operation".into(),
            ));
        }
        if op_idx.len() < self.ops.len() {
            log::info!("one descriptor group: operation choice restricted to unary");
        }
        let op_cands: Vec<Vec<f64>> = op_idx.iter().map(|&i| self.op_reps[i].as_slice().to_vec()).collect();
        let o = op_idx[self.operation.act(state_op.as_slice(), &op_cands, epsilon, rng)?];
        let operation = self.ops.operations()[o];

        let input1 = joined(&[s1.as_slice(), &reps[c1]]);
        let input_op = joined(&[state_op.as_slice(), self.op_reps[o].as_slice()]);

        let (group2, state2, input2) = if operation.is_binary() {
            let state2 = concat_states(&[&state_op, &self.op_reps[o]]);
            let others: Vec<usize> = (0..groups.len()).filter(|&g| g != c1).collect();
            let cands: Vec<Vec<f64>> = others.iter().map(|&g| reps[g].clone()).collect();
            let k = self.group2.act(state2.as_slice(), &cands, epsilon, rng)?;
            let c2 = others[k];
            let input2 = joined(&[state2.as_slice(), &reps[c2]]);
            (Some(c2), Some(state2), Some(input2))
        } else {
            (None, None, None)
        };

        Ok(CascadeChoice {
            group1: c1,
            operation,
            group2,
            state1: s1,
            state_op,
            state2,
            input1,
            input_op,
            input2,
        })
    }

    /// Candidate inputs for the state reached after an iteration, given the
    /// new descriptor set and its grouping.
    pub fn next_inputs(&self, data: &Dataset, groups: &[DescriptorGroup]) -> Result<NextInputs> {
        if groups.is_empty() || data.n_descriptors() == 0 {
            return Ok(NextInputs::default());
        }
        let s1 = rep_descriptor_set(data)?;
        let reps: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| rep_group(data, g.members()).map(StateVector::into_inner))
            .collect::<Result<_>>()?;
        let group1: Vec<Vec<f64>> = reps.iter().map(|r| joined(&[s1.as_slice(), r])).collect();
        let c1 = self.group1.greedy(s1.as_slice(), &reps);
        let state_op = joined(&[s1.as_slice(), &reps[c1]]);
        let op_idx = self.op_candidates(groups.len());
        let operation: Vec<Vec<f64>> = op_idx
            .iter()
            .map(|&i| joined(&[&state_op, self.op_reps[i].as_slice()]))
            .collect();

        let all = self.ops.operations();
        let binary: Vec<usize> = op_idx.iter().copied().filter(|&i| all[i].is_binary()).collect();
        let group2 = if binary.is_empty() || groups.len() < 2 {
            Vec::new()
        } else {
            let cands: Vec<Vec<f64>> = binary.iter().map(|&i| self.op_reps[i].as_slice().to_vec()).collect();
            let o = binary[self.operation.greedy(&state_op, &cands)];
            let state2 = joined(&[&state_op, self.op_reps[o].as_slice()]);
            (0..groups.len())
                .filter(|&g| g != c1)
                .map(|g| joined(&[&state2, &reps[g]]))
                .collect()
        };
        Ok(NextInputs {
            group1,
            operation,
            group2,
        })
    }

    /// Serializes network parameters with the operation ordering and a
    /// caller-supplied configuration hash.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            operations: self.ops.names().iter().map(|s| s.to_string()).collect(),
            config_hash: config_hash.to_string(),
            agents: [&self.group1, &self.operation, &self.group2]
                .iter()
                .map(|a| AgentParams {
                    role: a.role,
                    network: a.q.clone(),
                })
                .collect(),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        writeln!(f, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}").map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut f, &ck)?;
        f.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Restores parameters saved by [`save_checkpoint`](Self::save_checkpoint).
    /// The operation ordering and configuration hash must match.
    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>, config_hash: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io(path, e))?;
        let expected = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
        if header.trim_end() != expected {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint header `{}`",
                header.trim_end()
            )));
        }
        let ck: Checkpoint = serde_json::from_reader(reader)?;
        let ops: Vec<&str> = ck.operations.iter().map(String::as_str).collect();
        if ops != self.ops.names() {
            return Err(Error::InvalidInput("checkpoint operation ordering differs".into()));
        }
        if ck.config_hash != config_hash {
            return Err(Error::InvalidInput("checkpoint was written under a different configuration".into()));
        }
        for (agent, saved) in [&mut self.group1, &mut self.operation, &mut self.group2]
            .into_iter()
            .zip(ck.agents)
        {
            if saved.role != agent.role || saved.network.sizes() != agent.q.sizes() {
                return Err(Error::InvalidInput("checkpoint network shapes differ".into()));
            }
            agent.q = saved.network;
            if agent.target.is_some() {
                agent.target = Some(agent.q.clone());
            }
        }
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &str = "GRFG-AGENTS";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct AgentParams {
    role: AgentRole,
    network: Mlp,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    operations: Vec<String>,
    config_hash: String,
    agents: Vec<AgentParams>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{BinaryOp, UnaryOp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..30).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let y = (0..30).map(|i| i as f64).collect();
        Dataset::from_columns(&["a", "b", "c", "d"], cols, "y", y).unwrap()
    }

    fn groups() -> Vec<DescriptorGroup> {
        vec![
            DescriptorGroup::new(vec![0, 1]).unwrap(),
            DescriptorGroup::new(vec![2, 3]).unwrap(),
        ]
    }

    #[test]
    fn input_widths_follow_roles() {
        let ops = OperationSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = CascadingAgents::new(&ops, &AgentConfig::default(), &mut rng).unwrap();
        assert_eq!(a.group1.network().input_width(), 98);
        assert_eq!(a.operation.network().input_width(), 98 + 12);
        assert_eq!(a.group2.network().input_width(), 98 + 12 + 49);
    }

    #[test]
    fn single_group_with_unary_only_ops() {
        let ops = OperationSet::from_names(&["sin", "add"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = CascadingAgents::new(&ops, &AgentConfig::default(), &mut rng).unwrap();
        let d = data();
        let one = vec![DescriptorGroup::new(vec![0, 1, 2, 3]).unwrap()];
        for _ in 0..20 {
            let c = a.cascade_select(&d, &one, 1.0, &mut rng).unwrap();
            assert_eq!(c.group1, 0);
            assert_eq!(c.operation, Operation::Unary(UnaryOp::Sin));
            assert!(c.group2.is_none());
        }
        let binary_only = OperationSet::from_names(&["add"]).unwrap();
        let b = CascadingAgents::new(&binary_only, &AgentConfig::default(), &mut rng).unwrap();
        assert!(b.cascade_select(&d, &one, 0.0, &mut rng).is_err());
    }

    #[test]
    fn greedy_cascade_is_deterministic_and_embeds_upstream_choice() {
        let ops = OperationSet::new(vec![UnaryOp::Square], vec![BinaryOp::Multiply]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = CascadingAgents::new(&ops, &AgentConfig::default(), &mut rng).unwrap();
        let d = data();
        let g = groups();
        let first = a.cascade_select(&d, &g, 0.0, &mut rng).unwrap();
        let again = a.cascade_select(&d, &g, 0.0, &mut rng).unwrap();
        assert_eq!((first.group1, first.operation, first.group2), (again.group1, again.operation, again.group2));
        assert_eq!(first.state_op.len(), 98);
        if let Some(s2) = &first.state2 {
            assert_eq!(s2.len(), 98 + ops.len());
            assert_ne!(first.group2, Some(first.group1));
        }

        // sᵒ differs between the two possible group-1 actions
        let s1 = rep_descriptor_set(&d).unwrap();
        let so: Vec<StateVector> = g
            .iter()
            .map(|grp| concat_states(&[&s1, &rep_group(&d, grp.members()).unwrap()]))
            .collect();
        assert_ne!(so[0], so[1]);
        assert_eq!(first.state_op, so[first.group1]);
    }

    #[test]
    fn next_inputs_have_role_widths() {
        let ops = OperationSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CascadingAgents::new(&ops, &AgentConfig::default(), &mut rng).unwrap();
        let n = a.next_inputs(&data(), &groups()).unwrap();
        assert_eq!(n.group1.len(), 2);
        assert!(n.group1.iter().all(|x| x.len() == 98));
        assert_eq!(n.operation.len(), 12);
        assert!(n.operation.iter().all(|x| x.len() == 110));
        assert_eq!(n.group2.len(), 1);
        assert!(n.group2.iter().all(|x| x.len() == 159));
    }

    #[test]
    fn checkpoint_round_trip() {
        let ops = OperationSet::default();
        let cfg = AgentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = CascadingAgents::new(&ops, &cfg, &mut rng).unwrap();
        let mut b = CascadingAgents::new(&ops, &cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agents.ckpt");
        a.save_checkpoint(&path, "abc").unwrap();
        assert!(b.load_checkpoint(&path, "other").is_err());
        b.load_checkpoint(&path, "abc").unwrap();
        assert_eq!(a.group2.network(), b.group2.network());

        let reordered = OperationSet::from_names(&["add", "sin"]).unwrap();
        let mut c = CascadingAgents::new(&reordered, &cfg, &mut rng).unwrap();
        assert!(c.load_checkpoint(&path, "abc").is_err());
    }

    #[test]
    fn learning_reduces_loss_on_fixed_rewards() {
        let cfg = AgentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = QAgent::new(AgentRole::Group1, 4, &cfg, &mut rng);
        for i in 0..8 {
            let x = vec![i as f64, (i % 3) as f64, 1.0, -(i as f64)];
            agent.remember(Transition::new(x, (i as f64 * 0.7).sin(), vec![]));
        }
        let first = agent.learn(&cfg, &mut rng).unwrap().unwrap();
        let mut last = first;
        for _ in 0..300 {
            last = agent.learn(&cfg, &mut rng).unwrap().unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }
}
