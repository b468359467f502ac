//! Shared state featurization and action-scoring network.
//!
//! Every learner (GFlowNet policy, soft-Q network, SAC actor and critics) uses
//! the same layout: a fragment embedding table, a trunk over pooled node
//! embeddings plus size features, a per-stem head emitting one score per
//! fragment type, a stop head and a root head for the empty state. Scores
//! come out in [`Env::valid_actions`] order.

use pgfn_tensor::{Activation, LayerSpec, Mlp, ParamStore, Result, Tape, Tensor, Var};
use rand::Rng;

use crate::chemgraph::PartialMol;
use crate::env::{Env, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Trunk depth (number of hidden layers).
    pub depth: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { embed_dim: 16, hidden: 128, depth: 2 }
    }
}

const SIZE_FEATURES: usize = 2;

#[derive(Debug, Clone)]
pub struct ActionNet {
    pub prefix: String,
    pub config: NetConfig,
    vocab_size: usize,
    max_arity: usize,
    max_nodes: usize,
    emb: String,
    trunk: Mlp,
    stem_head: Mlp,
    stop_head: Mlp,
    root_head: Mlp,
}

/// Forward results for one state.
#[derive(Debug, Clone, Copy)]
pub struct NetOutput {
    /// `1 × |valid actions|` scores.
    pub scores: Var,
    /// `1 × hidden` trunk activation.
    pub trunk: Var,
    /// `n × embed_dim` node embeddings (`None` for the empty state).
    pub nodes: Option<Var>,
}

impl ActionNet {
    fn layouts(env: &Env, c: NetConfig) -> [LayerSpec; 4] {
        let (v, a, e, h) = (env.vocab().len(), env.vocab().max_arity(), c.embed_dim, c.hidden);
        let mut trunk = vec![e + SIZE_FEATURES];
        trunk.extend(std::iter::repeat_n(h, c.depth.max(1)));
        [
            LayerSpec::new(trunk).with_output(Activation::Relu),
            LayerSpec::new(vec![h + 2 * e + a + 1, h, v]),
            LayerSpec::new(vec![h, h, 1]),
            LayerSpec::new(vec![h, h, v]),
        ]
    }

    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        env: &Env,
        config: NetConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let emb = format!("{prefix}.emb");
        store.insert_glorot(&emb, env.vocab().len(), config.embed_dim, rng)?;
        let [t, s, p, r] = Self::layouts(env, config);
        Ok(ActionNet {
            prefix: prefix.to_string(),
            config,
            vocab_size: env.vocab().len(),
            max_arity: env.vocab().max_arity(),
            max_nodes: env.config().max_nodes,
            emb,
            trunk: Mlp::init(store, format!("{prefix}.trunk"), t, rng)?,
            stem_head: Mlp::init(store, format!("{prefix}.stem"), s, rng)?,
            stop_head: Mlp::init(store, format!("{prefix}.stop"), p, rng)?,
            root_head: Mlp::init(store, format!("{prefix}.root"), r, rng)?,
        })
    }

    /// Rebinds a network whose parameters already sit in `store`.
    pub fn bind(store: &ParamStore, prefix: &str, env: &Env, config: NetConfig) -> Result<Self> {
        let emb = format!("{prefix}.emb");
        let shape = store.get(&emb).map(|t| t.shape());
        if shape != Some((env.vocab().len(), config.embed_dim)) {
            return Err(pgfn_tensor::TensorError::ShapeMismatch(format!("`{emb}`")));
        }
        let [t, s, p, r] = Self::layouts(env, config);
        Ok(ActionNet {
            prefix: prefix.to_string(),
            config,
            vocab_size: env.vocab().len(),
            max_arity: env.vocab().max_arity(),
            max_nodes: env.config().max_nodes,
            emb,
            trunk: Mlp::bind(store, format!("{prefix}.trunk"), t)?,
            stem_head: Mlp::bind(store, format!("{prefix}.stem"), s)?,
            stop_head: Mlp::bind(store, format!("{prefix}.stop"), p)?,
            root_head: Mlp::bind(store, format!("{prefix}.root"), r)?,
        })
    }

    pub fn embedding(&self, tape: &mut Tape<'_>) -> Result<Var> {
        tape.param_named(&self.emb)
    }

    /// Scores for every valid action of a non-terminal `state`.
    pub fn forward(&self, tape: &mut Tape<'_>, env: &Env, state: &State) -> Result<NetOutput> {
        let mol = &state.mol;
        let e = self.config.embed_dim;
        if mol.is_empty() {
            let x = tape.constant(Tensor::zeros(1, e + SIZE_FEATURES));
            let trunk = self.trunk.forward(tape, x)?;
            let scores = self.root_head.forward(tape, trunk)?;
            return Ok(NetOutput { scores, trunk, nodes: None });
        }
        let n = mol.len();
        let stems = mol.open_stems(env.vocab());
        let emb = self.embedding(tape)?;
        let nodes = tape.gather_rows(emb, mol.nodes().to_vec());
        let pooled = tape.sum_rows(nodes);
        let pooled = tape.scale(pooled, 1.0 / n as f64);
        let size = tape.constant(Tensor::row_vector(vec![
            n as f64 / self.max_nodes as f64,
            stems.len() as f64 / self.max_nodes as f64,
        ]));
        let x = tape.concat_cols(&[pooled, size]);
        let trunk = self.trunk.forward(tape, x)?;

        let cfg = env.config();
        let attach = !stems.is_empty() && n < cfg.max_nodes;
        let stop = n >= cfg.min_nodes || stems.is_empty();
        let mut parts = Vec::with_capacity(2);
        if attach {
            parts.push(self.stem_scores(tape, env, mol, &stems, nodes, trunk)?);
        }
        if stop {
            parts.push(self.stop_head.forward(tape, trunk)?);
        }
        let scores = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts) };
        Ok(NetOutput { scores, trunk, nodes: Some(nodes) })
    }

    fn stem_scores(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        mol: &PartialMol,
        stems: &[crate::chemgraph::Stem],
        nodes: Var,
        trunk: Var,
    ) -> Result<Var> {
        let (s, n, a) = (stems.len(), mol.len(), self.max_arity);
        let mut avg = Tensor::zeros(s, n);
        let mut local = Tensor::zeros(s, a + 1);
        for (i, st) in stems.iter().enumerate() {
            let nbs = mol.neighbors(st.node);
            for &(_, nb, _) in &nbs {
                avg.set(i, nb, 1.0 / nbs.len() as f64);
            }
            local.set(i, st.stem, 1.0);
            let arity = env.vocab().get(mol.frag(st.node)).map_or(1, |t| t.arity);
            local.set(i, a, nbs.len() as f64 / arity as f64);
        }
        let avg = tape.constant(avg);
        let local = tape.constant(local);
        let own = tape.gather_rows(nodes, stems.iter().map(|st| st.node).collect());
        let nb = tape.matmul(avg, nodes);
        let tb = tape.gather_rows(trunk, vec![0; s]);
        let x = tape.concat_cols(&[tb, own, nb, local]);
        let out = self.stem_head.forward(tape, x)?;
        Ok(tape.reshape(out, 1, s * self.vocab_size))
    }

    pub fn num_params(&self, store: &ParamStore) -> usize {
        store.iter().filter(|(n, _)| n.starts_with(&format!("{}.", self.prefix))).map(|(_, t)| t.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::FragmentVocab;
    use crate::env::{Action, EnvConfig};
    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn scores_line_up_with_valid_actions() {
        let vocab = FragmentVocab::generated("t", 4, &[1, 2, 3]).unwrap();
        let env = Env::new(Arc::new(vocab), EnvConfig { max_nodes: 4, min_nodes: 2 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let net = ActionNet::init(&mut store, "pf", &env, NetConfig { embed_dim: 4, hidden: 8, depth: 2 }, &mut rng).unwrap();
        for _ in 0..30 {
            let mut s = State::initial();
            while !s.terminal {
                let actions = env.valid_actions(&s).unwrap();
                let mut tape = Tape::new(&store);
                let out = net.forward(&mut tape, &env, &s).unwrap();
                assert_eq!(tape.shape(out.scores), (1, actions.len()));
                assert!(tape.value(out.scores).data().iter().all(|x| x.is_finite()));
                let a: Action = *actions.choose(&mut rng).unwrap();
                s = env.step(&s, a).unwrap();
            }
        }
    }
}
