//! Structural transition model. Each input dimension (state then action) is
//! encoded separately by a shared encoder together with a learned position
//! embedding; a sampled binary graph mixes the per-input features into one
//! feature vector per output (next-state dimensions then reward); a shared
//! decoder maps each mixed feature plus an output embedding to a scalar.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::TransitionRecord;
use crate::error::{Result, RscError};
use crate::nn::gumbel::{gumbel_edges_graph, logistic_noise, relaxed_edges};
use crate::nn::{Activation, Adam, DenseNet, EdgeLogits, Graph, Parameterized, TemperatureSchedule, Tensor2, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScmConfig {
    /// State dimension `n`.
    pub n: usize,
    /// Action dimension.
    pub d_a: usize,
    pub d_pos: usize,
    pub d_f: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Sparsity weight.
    pub lambda: f64,
    /// Quasi-norm exponent.
    pub p: f64,
    /// Smoothing inside the quasi-norm.
    pub eps_p: f64,
    pub temperature: TemperatureSchedule,
    pub threshold: f64,
    pub lr: f64,
    /// Initial edge logit.
    pub init_logit: f64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            n: 4,
            d_a: 2,
            d_pos: 8,
            d_f: 16,
            encoder_hidden: vec![32, 32],
            decoder_hidden: vec![32, 32],
            lambda: 1e-3,
            p: 0.1,
            eps_p: 1e-6,
            temperature: TemperatureSchedule::default(),
            threshold: 0.5,
            lr: 1e-2,
            init_logit: 0.0,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_a == 0 || self.d_pos == 0 || self.d_f == 0 {
            return Err(RscError::Invalid("model dimensions must be positive".into()));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(RscError::Invalid("hidden widths must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(RscError::Invalid(format!("sparsity weight {}", self.lambda)));
        }
        if !(self.p > 0.0 && self.p <= 2.0) {
            return Err(RscError::Invalid(format!("quasi-norm exponent {} outside (0, 2]", self.p)));
        }
        if !(self.eps_p >= 0.0) || (self.p < 1.0 && self.eps_p == 0.0) {
            return Err(RscError::Invalid(format!(
                "smoothing {} (must be positive when p < 1)",
                self.eps_p
            )));
        }
        if !(self.lr > 0.0) {
            return Err(RscError::Invalid(format!("learning rate {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(RscError::Invalid(format!("threshold {}", self.threshold)));
        }
        self.temperature.validate()
    }

    pub fn num_inputs(&self) -> usize {
        self.n + self.d_a
    }

    pub fn num_outputs(&self) -> usize {
        self.n + 1
    }
}

/// How the forward pass obtains its graph.
#[derive(Debug, Clone)]
pub enum EdgeMode<'a> {
    /// Soft relaxed sample for the given noise.
    Soft(&'a Tensor2),
    /// Straight-through binary sample for the given noise.
    Hard(&'a Tensor2),
    /// A fixed `(n + d_A) × (n + 1)` adjacency used for every sample.
    Fixed(&'a Tensor2),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmModel {
    pub config: ScmConfig,
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    /// `(n + d_A) × d_pos`.
    pub pos_in: Tensor2,
    /// `(n + 1) × d_pos`.
    pub pos_out: Tensor2,
    pub edges: EdgeLogits,
}

impl Parameterized for ScmModel {
    fn params(&self) -> Vec<&Tensor2> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.extend([&self.pos_in, &self.pos_out, &self.edges.phi]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p.extend([&mut self.pos_in, &mut self.pos_out, &mut self.edges.phi]);
        p
    }
}

/// Recorded forward pass output.
pub struct ScmPass {
    /// `B × (n + 1)` predictions.
    pub out: Var,
    /// `B·(n + d_A) × d_f` per-input features.
    pub features: Var,
    pub bound: Vec<Var>,
}

impl ScmModel {
    pub fn new<R: Rng + ?Sized>(config: ScmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut enc = vec![1 + config.d_pos];
        enc.extend(&config.encoder_hidden);
        enc.push(config.d_f);
        let mut dec = vec![config.d_f + config.d_pos];
        dec.extend(&config.decoder_hidden);
        dec.push(1);
        let encoder = DenseNet::new(&enc, Activation::Relu, Activation::Identity, rng)?;
        let decoder = DenseNet::new(&dec, Activation::Relu, Activation::Identity, rng)?;
        let pos_in = Tensor2::uniform(config.num_inputs(), config.d_pos, 1.0, rng);
        let pos_out = Tensor2::uniform(config.num_outputs(), config.d_pos, 1.0, rng);
        let phi = Tensor2::filled(config.num_inputs(), config.num_outputs(), config.init_logit);
        let edges = EdgeLogits::new(phi, config.temperature.start)?;
        Ok(Self {
            config,
            encoder,
            decoder,
            pos_in,
            pos_out,
            edges,
        })
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, net) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for i in 0..net.layers().len() {
                names.push(format!("{prefix}.{i}.weight"));
                names.push(format!("{prefix}.{i}.bias"));
            }
        }
        names.extend(["pos_in".into(), "pos_out".into(), "phi".into()]);
        names
    }

    /// Stacks states and actions into `B × (n + d_A)`.
    pub fn inputs(&self, states: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Tensor2> {
        let (n, da) = (self.config.n, self.config.d_a);
        if states.len() != actions.len() || states.is_empty() {
            return Err(RscError::Shape(format!("{} states with {} actions", states.len(), actions.len())));
        }
        let mut data = Vec::with_capacity(states.len() * (n + da));
        for (s, a) in states.iter().zip(actions) {
            if s.len() != n || a.len() != da {
                return Err(RscError::Shape(format!(
                    "state of {} dims / action of {} dims, model expects {n} / {da}",
                    s.len(),
                    a.len()
                )));
            }
            data.extend_from_slice(s);
            data.extend_from_slice(a);
        }
        Tensor2::new(states.len(), n + da, data)
    }

    /// Records the forward pass on `x` (`B × (n + d_A)`).
    pub fn forward_graph(&self, g: &mut Graph, x: &Tensor2, edges: EdgeMode) -> Result<ScmPass> {
        let (j, k) = (self.config.num_inputs(), self.config.num_outputs());
        let batch = x.rows();
        if x.cols() != j {
            return Err(RscError::Shape(format!("input has {} columns, expected {j}", x.cols())));
        }
        let bound = self.bind(g)?;
        let ne = self.encoder.params().len();
        let nd = self.decoder.params().len();
        let (enc_p, rest) = bound.split_at(ne);
        let (dec_p, rest) = rest.split_at(nd);
        let (pos_in, pos_out, phi) = (rest[0], rest[1], rest[2]);

        let column = g.constant(Tensor2::new(batch * j, 1, x.data().to_vec())?)?;
        let pos = g.tile_rows(pos_in, batch)?;
        let enc_in = g.concat_cols(column, pos)?;
        let features = self.encoder.forward_graph(g, enc_p, enc_in)?;

        let graph = match edges {
            EdgeMode::Soft(noise) | EdgeMode::Hard(noise) => {
                let hard = matches!(edges, EdgeMode::Hard(_));
                let row = g.reshape(phi, 1, j * k)?;
                gumbel_edges_graph(g, row, noise, self.edges.tau(), hard)?
            }
            EdgeMode::Fixed(adj) => {
                if adj.shape() != (j, k) {
                    return Err(RscError::Shape(format!("fixed graph {:?}, expected ({j}, {k})", adj.shape())));
                }
                let row = g.constant(Tensor2::new(1, j * k, adj.data().to_vec())?)?;
                g.tile_rows(row, batch)?
            }
        };
        let mixed = g.graph_mix(features, graph, j, k)?;
        let pos = g.tile_rows(pos_out, batch)?;
        let dec_in = g.concat_cols(mixed, pos)?;
        let out = self.decoder.forward_graph(g, dec_p, dec_in)?;
        let out = g.reshape(out, batch, k)?;
        Ok(ScmPass { out, features, bound })
    }

    /// Per-input features `B·(n + d_A) × d_f` for `x`.
    pub fn encode(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut g = Graph::new();
        let zeros = Tensor2::zeros(self.config.num_inputs(), self.config.num_outputs());
        let pass = self.forward_graph(&mut g, x, EdgeMode::Fixed(&zeros))?;
        Ok(g.value(pass.features).clone())
    }

    /// Predictions for a batch; `hard` selects binary graph samples.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        states: &[Vec<f64>],
        actions: &[Vec<f64>],
        rng: &mut R,
        hard: bool,
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let x = self.inputs(states, actions)?;
        let e = self.config.num_inputs() * self.config.num_outputs();
        let noise = logistic_noise(x.rows(), e, rng);
        let mode = if hard { EdgeMode::Hard(&noise) } else { EdgeMode::Soft(&noise) };
        self.predict_with(&x, mode)
    }

    pub fn predict_with(&self, x: &Tensor2, edges: EdgeMode) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut g = Graph::new();
        let pass = self.forward_graph(&mut g, x, edges)?;
        let out = g.value(pass.out);
        let n = self.config.n;
        let next = (0..out.rows()).map(|r| out.row_slice(r)[..n].to_vec()).collect();
        let rewards = (0..out.rows()).map(|r| out.get(r, n)).collect();
        Ok((next, rewards))
    }

    /// Sampled graph for one transition, `(n + d_A) × (n + 1)`.
    pub fn sample_graph<R: Rng + ?Sized>(&self, rng: &mut R, hard: bool) -> Tensor2 {
        let (r, c) = self.edges.phi.shape();
        relaxed_edges(&self.edges.phi, &logistic_noise(r, c, rng), self.edges.tau(), hard)
    }
}

/// Single-transition prediction `(ŝ_{t+1}, r̂_t)`.
pub fn scm_forward<R: Rng + ?Sized>(
    model: &ScmModel,
    state: &[f64],
    action: &[f64],
    rng: &mut R,
    hard: bool,
) -> Result<(Vec<f64>, f64)> {
    let (mut next, rewards) = model.predict(&[state.to_vec()], &[action.to_vec()], rng, hard)?;
    Ok((next.pop().expect("one row"), rewards[0]))
}

/// Loss value and gradients in `params()` order.
#[derive(Debug, Clone)]
pub struct ScmLoss {
    pub total: f64,
    pub data: f64,
    pub penalty: f64,
    pub grads: Vec<Tensor2>,
}

/// Training objective with soft edges for the given logistic noise
/// (`B × (n + d_A)(n + 1)`):
/// `mean_b(‖s' − ŝ'‖² + (r − r̂)²) + λ Σ_ij (σ(φ_ij)² + ε)^{p/2}`.
pub fn scm_loss_with_noise(model: &ScmModel, batch: &[TransitionRecord], noise: &Tensor2) -> Result<ScmLoss> {
    if batch.is_empty() {
        return Err(RscError::Invalid("empty batch".into()));
    }
    let states: Vec<Vec<f64>> = batch.iter().map(|r| r.state.clone()).collect();
    let actions: Vec<Vec<f64>> = batch.iter().map(|r| r.action.clone()).collect();
    let x = model.inputs(&states, &actions)?;
    let n = model.config.n;
    let mut target = Vec::with_capacity(batch.len() * (n + 1));
    for r in batch {
        if r.next_state.len() != n {
            return Err(RscError::Shape("next state dimension".into()));
        }
        target.extend_from_slice(&r.next_state);
        target.push(r.reward);
    }
    let target = Tensor2::new(batch.len(), n + 1, target)?;

    let mut g = Graph::new();
    let pass = model.forward_graph(&mut g, &x, EdgeMode::Soft(noise))?;
    let t = g.constant(target)?;
    let diff = g.sub(pass.out, t)?;
    let sq = g.square(diff)?;
    let total_sq = g.sum(sq)?;
    let data = g.scale(total_sq, 1.0 / batch.len() as f64)?;

    let phi = pass.bound[pass.bound.len() - 1];
    let probs = g.sigmoid(phi)?;
    let sq = g.square(probs)?;
    let smoothed = g.add_scalar(sq, model.config.eps_p)?;
    let powered = g.pow(smoothed, model.config.p / 2.0)?;
    let norm = g.sum(powered)?;
    let penalty = g.scale(norm, model.config.lambda)?;
    let loss = g.add(data, penalty)?;

    let grads = g.backward(loss)?;
    Ok(ScmLoss {
        total: g.value(loss).item(),
        data: g.value(data).item(),
        penalty: g.value(penalty).item(),
        grads: model.collect_grads(&grads, &pass.bound),
    })
}

/// [`scm_loss_with_noise`] with freshly drawn noise.
pub fn scm_loss<R: Rng + ?Sized>(model: &ScmModel, batch: &[TransitionRecord], rng: &mut R) -> Result<ScmLoss> {
    let e = model.config.num_inputs() * model.config.num_outputs();
    let noise = logistic_noise(batch.len(), e, rng);
    scm_loss_with_noise(model, batch, &noise)
}

/// Binary adjacency: entry `1` iff `σ(φ_ij) ≥ threshold`. Rows are inputs
/// (state dims then action dims), columns are outputs (next-state dims then
/// reward).
pub fn extract_graph(model: &ScmModel, threshold: f64) -> Vec<Vec<u8>> {
    let probs = model.edges.probabilities();
    (0..probs.rows())
        .map(|i| probs.row_slice(i).iter().map(|&p| u8::from(p >= threshold)).collect())
        .collect()
}

/// Fraction of edges present in [`extract_graph`].
pub fn graph_density(model: &ScmModel, threshold: f64) -> f64 {
    let g = extract_graph(model, threshold);
    let total: usize = g.iter().map(Vec::len).sum();
    let on: usize = g.iter().flatten().map(|&x| x as usize).sum();
    on as f64 / total as f64
}

/// Graph with threshold metadata for JSON export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphExport {
    pub threshold: f64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub adjacency: Vec<Vec<u8>>,
    pub probabilities: Vec<Vec<f64>>,
}

pub fn export_graph(model: &ScmModel, threshold: f64) -> GraphExport {
    let (n, da) = (model.config.n, model.config.d_a);
    let probs = model.edges.probabilities();
    GraphExport {
        threshold,
        inputs: (0..n).map(|i| format!("s{i}")).chain((0..da).map(|i| format!("a{i}"))).collect(),
        outputs: (0..n).map(|i| format!("s{i}'")).chain(["r".to_string()]).collect(),
        adjacency: extract_graph(model, threshold),
        probabilities: (0..probs.rows()).map(|i| probs.row_slice(i).to_vec()).collect(),
    }
}

/// Adam-driven training state for an [`ScmModel`].
#[derive(Debug, Clone)]
pub struct ScmTrainer {
    pub model: ScmModel,
    optimizer: Adam,
}

impl ScmTrainer {
    pub fn new(model: ScmModel) -> Self {
        let optimizer = Adam::new(&model.params(), model.config.lr);
        Self { model, optimizer }
    }

    /// One gradient step at training progress `progress ∈ [0, 1]` (drives
    /// the temperature schedule).
    pub fn step<R: Rng + ?Sized>(&mut self, batch: &[TransitionRecord], progress: f64, rng: &mut R) -> Result<ScmLoss> {
        let tau = self.model.config.temperature.at(progress);
        self.model.edges.set_tau(tau)?;
        let loss = scm_loss(&self.model, batch, rng)?;
        self.optimizer.step(self.model.params_mut(), &loss.grads)?;
        Ok(loss)
    }
}
