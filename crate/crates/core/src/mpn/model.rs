use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AssocGraph, EDGE_FEATURE_DIM};
use crate::nn::{join, sigmoid, weighted_bce_logit, Array, Mlp, MlpCache, Parameters};

/// Order-invariant reduction of incoming messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpnConfig {
    pub feature_dim: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub aggregation: Aggregation,
}

impl Default for MpnConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            node_dim: 32,
            edge_dim: 32,
            hidden_dim: 32,
            layers: 4,
            aggregation: Aggregation::Mean,
        }
    }
}

impl MpnConfig {
    fn sizes(&self) -> [[usize; 3]; 5] {
        let (n, e, h) = (self.node_dim, self.edge_dim, self.hidden_dim);
        [
            [self.feature_dim, h, n],
            [EDGE_FEATURE_DIM, h, e],
            [2 * n + e, h, e],
            [n + e, h, n],
            [e, h, 1],
        ]
    }
}

/// Dense inputs of one association graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnInput {
    /// `[n_tracks, feature_dim]`
    pub track_features: Array,
    /// `[n_detections, feature_dim]`
    pub det_features: Array,
    /// `[n_edges, EDGE_FEATURE_DIM]`
    pub edge_features: Array,
    /// `(track, detection)` per edge row.
    pub edges: Vec<(usize, usize)>,
}

impl MpnInput {
    pub fn from_graph(g: &AssocGraph) -> Result<Self> {
        let tf: Vec<&[f64]> = g.tracks.iter().map(|t| t.feature.as_slice()).collect();
        let df: Vec<&[f64]> = g.detections.iter().map(|d| d.feature.as_slice()).collect();
        let ef: Vec<&[f64]> = g.edges.iter().map(|e| e.feature.as_slice()).collect();
        let input = Self {
            track_features: Array::from_rows(&tf)?,
            det_features: Array::from_rows(&df)?,
            edge_features: Array::from_rows(&ef)?,
            edges: g.pairs(),
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.is_empty() {
            return Err(Error::Shape("graph has no edges".into()));
        }
        if self.edge_features.rows() != self.edges.len() || self.edge_features.cols() != EDGE_FEATURE_DIM {
            return Err(Error::Shape("edge feature rows do not match edges".into()));
        }
        let (nt, nd) = (self.track_features.rows(), self.det_features.rows());
        if self.edges.iter().any(|&(i, j)| i >= nt || j >= nd) {
            return Err(Error::Shape("edge endpoint out of range".into()));
        }
        Ok(())
    }

    fn sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0).collect()
    }

    fn targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1).collect()
    }
}

/// Node and edge embeddings after every propagation round; index 0 holds
/// the encoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnState {
    pub tracks: Vec<Array>,
    pub detections: Vec<Array>,
    pub edges: Vec<Array>,
}

impl MpnState {
    pub fn rounds(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn final_edges(&self) -> &Array {
        self.edges.last().expect("state always holds layer 0")
    }
}

#[derive(Debug, Clone)]
struct RoundCache {
    edge: MlpCache,
    track_msg: MlpCache,
    det_msg: MlpCache,
}

/// Forward pass with everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct MpnForward {
    pub state: MpnState,
    /// One logit per edge.
    pub logits: Vec<f64>,
    enc_tracks: MlpCache,
    enc_dets: MlpCache,
    enc_edges: MlpCache,
    rounds: Vec<RoundCache>,
    classifier: MlpCache,
}

/// Gradients with respect to the graph inputs that depend on parameters
/// outside the network (the integrated trajectory features).
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub track_features: Array,
    pub edge_features: Array,
}

/// Message passing edge classifier. `node_update` serves both trajectory
/// and detection updates.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnModel {
    pub config: MpnConfig,
    pub node_encoder: Mlp,
    pub edge_encoder: Mlp,
    pub edge_update: Mlp,
    pub node_update: Mlp,
    pub classifier: Mlp,
}

fn degrees(idx: &[usize], n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for &i in idx {
        d[i] += 1;
    }
    d
}

fn aggregate(messages: &Array, idx: &[usize], prev: &Array, agg: Aggregation) -> Array {
    let deg = degrees(idx, prev.rows());
    let mut out = Array::zeros(&[prev.rows(), messages.cols()]);
    for (e, &i) in idx.iter().enumerate() {
        for (o, m) in out.row_mut(i).iter_mut().zip(messages.row(e)) {
            *o += m;
        }
    }
    for (i, &d) in deg.iter().enumerate() {
        if d == 0 {
            out.row_mut(i).copy_from_slice(prev.row(i));
        } else if agg == Aggregation::Mean {
            let s = 1.0 / d as f64;
            out.row_mut(i).iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}

impl MpnModel {
    pub fn new<R: Rng + ?Sized>(config: MpnConfig, rng: &mut R) -> Result<Self> {
        let s = config.sizes();
        Ok(Self {
            config,
            node_encoder: Mlp::new(&s[0], rng)?,
            edge_encoder: Mlp::new(&s[1], rng)?,
            edge_update: Mlp::new(&s[2], rng)?,
            node_update: Mlp::new(&s[3], rng)?,
            classifier: Mlp::new(&s[4], rng)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            node_encoder: self.node_encoder.zeros_like(),
            edge_encoder: self.edge_encoder.zeros_like(),
            edge_update: self.edge_update.zeros_like(),
            node_update: self.node_update.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    fn check(&self, input: &MpnInput) -> Result<()> {
        input.validate()?;
        for a in [&input.track_features, &input.det_features] {
            if a.cols() != self.config.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.config.feature_dim,
                    actual: a.cols(),
                });
            }
        }
        Ok(())
    }

    /// Layer-0 embeddings.
    pub fn encode(&self, input: &MpnInput) -> Result<MpnState> {
        self.check(input)?;
        Ok(MpnState {
            tracks: vec![self.node_encoder.infer(&input.track_features)?],
            detections: vec![self.node_encoder.infer(&input.det_features)?],
            edges: vec![self.edge_encoder.infer(&input.edge_features)?],
        })
    }

    fn round(&self, input: &MpnInput, t: &Array, d: &Array, h: &Array) -> Result<(Array, Array, Array, RoundCache)> {
        let (src, dst) = (input.sources(), input.targets());
        let ts = t.select_rows(&src);
        let ds = d.select_rows(&dst);
        let (h_new, edge) = self.edge_update.forward(&Array::hcat(&[&ts, &ds, h])?)?;
        let (mt, track_msg) = self.node_update.forward(&Array::hcat(&[&ts, &h_new])?)?;
        let (md, det_msg) = self.node_update.forward(&Array::hcat(&[&ds, &h_new])?)?;
        let t_new = aggregate(&mt, &src, t, self.config.aggregation);
        let d_new = aggregate(&md, &dst, d, self.config.aggregation);
        Ok((t_new, d_new, h_new, RoundCache { edge, track_msg, det_msg }))
    }

    /// Runs the configured number of rounds from the last layer of `state`.
    pub fn propagate(&self, input: &MpnInput, mut state: MpnState) -> Result<MpnState> {
        self.check(input)?;
        for _ in 0..self.config.layers {
            let (t, d, h, _) = self.round(
                input,
                state.tracks.last().expect("layer 0"),
                state.detections.last().expect("layer 0"),
                state.edges.last().expect("layer 0"),
            )?;
            state.tracks.push(t);
            state.detections.push(d);
            state.edges.push(h);
        }
        Ok(state)
    }

    /// Edge probabilities from the last edge embeddings.
    pub fn classify(&self, state: &MpnState) -> Result<Vec<f64>> {
        Ok(self.classifier.infer(state.final_edges())?.data().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Encode, propagate and classify.
    pub fn predict(&self, input: &MpnInput) -> Result<Vec<f64>> {
        let s = self.encode(input)?;
        let s = self.propagate(input, s)?;
        self.classify(&s)
    }

    pub fn forward(&self, input: &MpnInput) -> Result<MpnForward> {
        self.check(input)?;
        let (t0, enc_tracks) = self.node_encoder.forward(&input.track_features)?;
        let (d0, enc_dets) = self.node_encoder.forward(&input.det_features)?;
        let (h0, enc_edges) = self.edge_encoder.forward(&input.edge_features)?;
        let mut state = MpnState {
            tracks: vec![t0],
            detections: vec![d0],
            edges: vec![h0],
        };
        let mut rounds = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (t, d, h, c) = self.round(input, &state.tracks[l], &state.detections[l], &state.edges[l])?;
            state.tracks.push(t);
            state.detections.push(d);
            state.edges.push(h);
            rounds.push(c);
        }
        let (z, classifier) = self.classifier.forward(state.final_edges())?;
        Ok(MpnForward {
            logits: z.into_data(),
            state,
            enc_tracks,
            enc_dets,
            enc_edges,
            rounds,
            classifier,
        })
    }

    /// Reverse pass from per-edge logit gradients. Parameter gradients are
    /// added into `grads`.
    pub fn backward_into(&self, input: &MpnInput, fwd: &MpnForward, dlogits: &[f64], grads: &mut MpnModel) -> Result<InputGrads> {
        if dlogits.len() != input.edges.len() || fwd.rounds.len() != self.config.layers {
            return Err(Error::Shape("logit gradient or forward cache does not match".into()));
        }
        let (src, dst) = (input.sources(), input.targets());
        let (n, e) = (self.config.node_dim, self.config.edge_dim);
        let (nt, nd) = (input.track_features.rows(), input.det_features.rows());
        let deg_t = degrees(&src, nt);
        let deg_d = degrees(&dst, nd);
        let scale = |deg: usize| match self.config.aggregation {
            Aggregation::Mean => 1.0 / deg as f64,
            Aggregation::Sum => 1.0,
        };

        let dz = Array::from_vec(&[dlogits.len(), 1], dlogits.to_vec())?;
        let mut dh = self.classifier.backward_into(&fwd.classifier, &dz, &mut grads.classifier)?;
        let mut dt = Array::zeros(&[nt, n]);
        let mut dd = Array::zeros(&[nd, n]);

        for cache in fwd.rounds.iter().rev() {
            let mut dmt = Array::zeros(&[src.len(), n]);
            let mut dmd = Array::zeros(&[src.len(), n]);
            for k in 0..src.len() {
                let (i, j) = (src[k], dst[k]);
                let (si, sj) = (scale(deg_t[i]), scale(deg_d[j]));
                dmt.row_mut(k).iter_mut().zip(dt.row(i)).for_each(|(o, g)| *o = g * si);
                dmd.row_mut(k).iter_mut().zip(dd.row(j)).for_each(|(o, g)| *o = g * sj);
            }
            // Isolated nodes copy their embedding forward unchanged.
            let mut dt_prev = Array::zeros(&[nt, n]);
            let mut dd_prev = Array::zeros(&[nd, n]);
            for i in (0..nt).filter(|&i| deg_t[i] == 0) {
                dt_prev.row_mut(i).copy_from_slice(dt.row(i));
            }
            for j in (0..nd).filter(|&j| deg_d[j] == 0) {
                dd_prev.row_mut(j).copy_from_slice(dd.row(j));
            }
            let dxt = self.node_update.backward_into(&cache.track_msg, &dmt, &mut grads.node_update)?;
            let dxd = self.node_update.backward_into(&cache.det_msg, &dmd, &mut grads.node_update)?;
            for k in 0..src.len() {
                let (i, j) = (src[k], dst[k]);
                let (rt, rd) = (dxt.row(k), dxd.row(k));
                dt_prev.row_mut(i).iter_mut().zip(&rt[..n]).for_each(|(o, g)| *o += g);
                dd_prev.row_mut(j).iter_mut().zip(&rd[..n]).for_each(|(o, g)| *o += g);
                let hk = dh.row_mut(k);
                for c in 0..e {
                    hk[c] += rt[n + c] + rd[n + c];
                }
            }
            let dxe = self.edge_update.backward_into(&cache.edge, &dh, &mut grads.edge_update)?;
            let mut dh_prev = Array::zeros(&[src.len(), e]);
            for k in 0..src.len() {
                let r = dxe.row(k);
                dt_prev.row_mut(src[k]).iter_mut().zip(&r[..n]).for_each(|(o, g)| *o += g);
                dd_prev.row_mut(dst[k]).iter_mut().zip(&r[n..2 * n]).for_each(|(o, g)| *o += g);
                dh_prev.row_mut(k).copy_from_slice(&r[2 * n..]);
            }
            dt = dt_prev;
            dd = dd_prev;
            dh = dh_prev;
        }

        let track_features = self.node_encoder.backward_into(&fwd.enc_tracks, &dt, &mut grads.node_encoder)?;
        self.node_encoder.backward_into(&fwd.enc_dets, &dd, &mut grads.node_encoder)?;
        let edge_features = self.edge_encoder.backward_into(&fwd.enc_edges, &dh, &mut grads.edge_encoder)?;
        Ok(InputGrads {
            track_features,
            edge_features,
        })
    }

    /// Sum of weighted binary cross-entropy over the edges of one graph, its
    /// gradient and the forward pass.
    pub fn loss_and_grad(
        &self,
        input: &MpnInput,
        labels: &[bool],
        positive_weight: f64,
    ) -> Result<(f64, MpnModel, InputGrads, MpnForward)> {
        let fwd = self.forward(input)?;
        if labels.len() != fwd.logits.len() {
            return Err(Error::DimensionMismatch {
                expected: fwd.logits.len(),
                actual: labels.len(),
            });
        }
        let mut loss = 0.0;
        let mut dz = Vec::with_capacity(labels.len());
        for (&z, &y) in fwd.logits.iter().zip(labels) {
            let (l, g) = weighted_bce_logit(z, y, positive_weight)?;
            loss += l;
            dz.push(g);
        }
        let mut grads = self.zeros_like();
        let ig = self.backward_into(input, &fwd, &dz, &mut grads)?;
        Ok((loss, grads, ig, fwd))
    }

    /// Loss only; the objective that [`MpnModel::loss_and_grad`] differentiates.
    pub fn loss(&self, input: &MpnInput, labels: &[bool], positive_weight: f64) -> Result<f64> {
        let s = self.encode(input)?;
        let s = self.propagate(input, s)?;
        let z = self.classifier.infer(s.final_edges())?;
        z.data()
            .iter()
            .zip(labels)
            .map(|(&z, &y)| weighted_bce_logit(z, y, positive_weight).map(|r| r.0))
            .sum()
    }
}

impl Parameters for MpnModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array)) {
        self.node_encoder.visit(&join(prefix, "node_encoder"), f);
        self.edge_encoder.visit(&join(prefix, "edge_encoder"), f);
        self.edge_update.visit(&join(prefix, "edge_update"), f);
        self.node_update.visit(&join(prefix, "node_update"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array)) {
        self.node_encoder.visit_mut(&join(prefix, "node_encoder"), f);
        self.edge_encoder.visit_mut(&join(prefix, "edge_encoder"), f);
        self.edge_update.visit_mut(&join(prefix, "edge_update"), f);
        self.node_update.visit_mut(&join(prefix, "node_update"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use crate::nn::{Activation, Linear};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(layers: usize) -> MpnConfig {
        MpnConfig {
            feature_dim: 4,
            node_dim: 3,
            edge_dim: 3,
            hidden_dim: 5,
            layers,
            aggregation: Aggregation::Mean,
        }
    }

    fn random_input(cfg: &MpnConfig, nt: usize, nd: usize, edges: Vec<(usize, usize)>, seed: u64) -> MpnInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand = |r: usize, c: usize| {
            Array::from_vec(&[r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        MpnInput {
            track_features: rand(nt, cfg.feature_dim),
            det_features: rand(nd, cfg.feature_dim),
            edge_features: rand(edges.len(), EDGE_FEATURE_DIM),
            edges,
        }
    }

    fn complete(nt: usize, nd: usize) -> Vec<(usize, usize)> {
        (0..nt).flat_map(|i| (0..nd).map(move |j| (i, j))).collect()
    }

    #[test]
    fn identity_encoders_pass_inputs_through() {
        let cfg = MpnConfig {
            feature_dim: 4,
            node_dim: 4,
            edge_dim: 8,
            hidden_dim: 8,
            layers: 0,
            aggregation: Aggregation::Mean,
        };
        let mut m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        m.node_encoder = Mlp::identity(&[4, 8, 4]).unwrap();
        m.edge_encoder = Mlp::identity(&[EDGE_FEATURE_DIM, 8, 8]).unwrap();
        let input = random_input(&cfg, 2, 3, complete(2, 3), 2);
        let s = m.encode(&input).unwrap();
        assert_eq!(s.tracks[0], input.track_features);
        assert_eq!(s.detections[0], input.det_features);
        for k in 0..input.edges.len() {
            assert_eq!(&s.edges[0].row(k)[..EDGE_FEATURE_DIM], input.edge_features.row(k));
            assert!(s.edges[0].row(k)[EDGE_FEATURE_DIM..].iter().all(|&v| v == 0.0));
        }
        // L = 0 leaves the encoded state untouched.
        assert_eq!(m.propagate(&input, s.clone()).unwrap(), s);
    }

    #[test]
    fn identical_detections_share_embeddings_and_encoding_is_deterministic() {
        let cfg = small_config(2);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut input = random_input(&cfg, 2, 2, complete(2, 2), 4);
        let row = input.det_features.row(0).to_vec();
        input.det_features.row_mut(1).copy_from_slice(&row);
        let s = m.encode(&input).unwrap();
        assert_eq!(s.detections[0].row(0), s.detections[0].row(1));
        assert_eq!(s, m.encode(&input).unwrap());
    }

    #[test]
    fn single_edge_round_is_one_message() {
        let cfg = small_config(1);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let input = random_input(&cfg, 1, 1, vec![(0, 0)], 6);
        let s = m.propagate(&input, m.encode(&input).unwrap()).unwrap();
        let x = Array::hcat(&[&s.tracks[0], &s.edges[1]]).unwrap();
        assert_eq!(s.tracks[1], m.node_update.infer(&x).unwrap());
    }

    #[test]
    fn zero_classifier_gives_one_half() {
        let cfg = small_config(2);
        let mut m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        m.classifier = m.classifier.zeros_like();
        let input = random_input(&cfg, 3, 2, complete(3, 2), 8);
        assert!(m.predict(&input).unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn edge_order_does_not_change_scores() {
        let cfg = small_config(3);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let input = random_input(&cfg, 3, 3, vec![(0, 0), (0, 1), (1, 1), (2, 0), (2, 2)], 10);
        let perm = [3, 0, 4, 2, 1];
        let shuffled = MpnInput {
            edges: perm.iter().map(|&k| input.edges[k]).collect(),
            edge_features: input.edge_features.select_rows(&perm),
            ..input.clone()
        };
        let a = m.predict(&input).unwrap();
        let b = m.predict(&shuffled).unwrap();
        for (pos, &k) in perm.iter().enumerate() {
            assert!((a[k] - b[pos]).abs() < 1e-12);
        }
    }

    #[test]
    fn node_relabeling_permutes_embeddings() {
        let cfg = small_config(2);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let input = random_input(&cfg, 3, 2, vec![(0, 0), (1, 0), (1, 1), (2, 1)], 12);
        // Swap trajectories 0 and 2.
        let relabeled = MpnInput {
            track_features: input.track_features.select_rows(&[2, 1, 0]),
            edges: input.edges.iter().map(|&(i, j)| ([2, 1, 0][i], j)).collect(),
            ..input.clone()
        };
        let s = m.propagate(&input, m.encode(&input).unwrap()).unwrap();
        let r = m.propagate(&relabeled, m.encode(&relabeled).unwrap()).unwrap();
        assert_eq!(s.tracks[2].select_rows(&[2, 1, 0]), r.tracks[2]);
        assert_eq!(s.detections[2], r.detections[2]);
        assert_eq!(m.predict(&input).unwrap(), m.predict(&relabeled).unwrap());
    }

    #[test]
    fn trajectories_only_interact_through_edges() {
        // With a zeroed edge update, a trajectory's next embedding is a
        // function of its own previous embedding alone.
        let cfg = small_config(1);
        let mut m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        m.edge_update = m.edge_update.zeros_like();
        let a = random_input(&cfg, 2, 2, complete(2, 2), 14);
        let mut b = a.clone();
        b.track_features.row_mut(1).iter_mut().for_each(|v| *v += 0.5);
        b.det_features.row_mut(0).iter_mut().for_each(|v| *v -= 0.3);
        let sa = m.propagate(&a, m.encode(&a).unwrap()).unwrap();
        let sb = m.propagate(&b, m.encode(&b).unwrap()).unwrap();
        assert_eq!(sa.tracks[1].row(0), sb.tracks[1].row(0));
    }

    fn lin(w: &[&[f64]], b: &[f64]) -> Linear {
        Linear {
            weight: Array::from_rows(w).unwrap(),
            bias: Array::from_vec(&[b.len()], b.to_vec()).unwrap(),
        }
    }

    #[test]
    fn hand_computed_round_on_complete_two_by_two() {
        // feature = node = edge = 2 dims; single-layer maps for readability.
        let cfg = MpnConfig {
            feature_dim: 2,
            node_dim: 2,
            edge_dim: 2,
            hidden_dim: 2,
            layers: 1,
            aggregation: Aggregation::Mean,
        };
        let relu_out = |l: Linear| Mlp::from_layers(vec![l], Activation::Relu, Activation::Relu).unwrap();
        let m = MpnModel {
            config: cfg,
            node_encoder: Mlp::from_layers(vec![lin(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0])], Activation::Identity, Activation::Identity).unwrap(),
            edge_encoder: Mlp::from_layers(
                vec![lin(&[&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]], &[0.0, 0.0])],
                Activation::Identity,
                Activation::Identity,
            )
            .unwrap(),
            edge_update: relu_out(lin(
                &[&[0.1, 0.0, -0.2, 0.0, 0.5, 0.0], &[0.0, 0.3, 0.0, 0.1, 0.0, -0.4]],
                &[0.05, 0.1],
            )),
            node_update: relu_out(lin(&[&[0.2, 0.1, 0.3, 0.0], &[-0.1, 0.4, 0.0, 0.2]], &[0.0, 0.1])),
            classifier: Mlp::from_layers(vec![lin(&[&[1.0, -1.0]], &[0.0])], Activation::Identity, Activation::Identity).unwrap(),
        };
        let t = [[1.0, 2.0], [0.5, -1.0]];
        let d = [[0.0, 1.0], [2.0, 0.5]];
        let edges = complete(2, 2);
        let ef: Vec<[f64; 6]> = vec![
            [0.1, 0.0, 0.0, 0.0, 0.0, 0.2],
            [0.3, 0.0, 0.0, 0.0, 0.0, 0.4],
            [-0.2, 0.0, 0.0, 0.0, 0.0, 0.6],
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.1],
        ];
        let input = MpnInput {
            track_features: Array::from_rows(&t).unwrap(),
            det_features: Array::from_rows(&d).unwrap(),
            edge_features: Array::from_rows(&ef).unwrap(),
            edges: edges.clone(),
        };
        let s = m.propagate(&input, m.encode(&input).unwrap()).unwrap();

        let relu = |x: f64| x.max(0.0);
        let mut h = [[0.0; 2]; 4];
        for (k, &(i, j)) in edges.iter().enumerate() {
            let h0 = [ef[k][0], ef[k][5]];
            h[k][0] = relu(0.1 * t[i][0] - 0.2 * d[j][0] + 0.5 * h0[0] + 0.05);
            h[k][1] = relu(0.3 * t[i][1] + 0.1 * d[j][1] - 0.4 * h0[1] + 0.1);
        }
        let msg = |node: [f64; 2], hk: [f64; 2]| {
            [
                relu(0.2 * node[0] + 0.1 * node[1] + 0.3 * hk[0]),
                relu(-0.1 * node[0] + 0.4 * node[1] + 0.2 * hk[1] + 0.1),
            ]
        };
        for i in 0..2 {
            let a = msg(t[i], h[2 * i]);
            let b = msg(t[i], h[2 * i + 1]);
            for c in 0..2 {
                assert!((s.tracks[1].row(i)[c] - 0.5 * (a[c] + b[c])).abs() < 1e-15);
            }
        }
        for j in 0..2 {
            let a = msg(d[j], h[j]);
            let b = msg(d[j], h[2 + j]);
            for c in 0..2 {
                assert!((s.detections[1].row(j)[c] - 0.5 * (a[c] + b[c])).abs() < 1e-15);
            }
        }
        for k in 0..4 {
            assert_eq!(s.edges[1].row(k), &h[k]);
        }
    }

    #[test]
    fn isolated_nodes_keep_embeddings() {
        let cfg = small_config(2);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
        let input = random_input(&cfg, 3, 2, vec![(0, 0), (1, 0)], 16);
        let s = m.propagate(&input, m.encode(&input).unwrap()).unwrap();
        assert_eq!(s.tracks[2].row(2), s.tracks[0].row(2));
        assert_eq!(s.detections[2].row(1), s.detections[0].row(1));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for aggregation in [Aggregation::Mean, Aggregation::Sum] {
            let cfg = MpnConfig {
                aggregation,
                ..small_config(3)
            };
            let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
            let input = random_input(&cfg, 3, 3, vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 0)], 18);
            let labels = [true, false, true, false, false];
            let (loss, grads, _, _) = m.loss_and_grad(&input, &labels, 1.5).unwrap();
            assert!((loss - m.loss(&input, &labels, 1.5).unwrap()).abs() < 1e-12);
            let r = grad_check(&m, &grads, |p| p.loss(&input, &labels, 1.5).unwrap(), 1e-5, 1e-4);
            assert!(r.passed(), "{:?}", &r.failures[..r.failures.len().min(5)]);
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let cfg = small_config(2);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(19)).unwrap();
        let input = random_input(&cfg, 2, 2, complete(2, 2), 20);
        let labels = [true, false, false, true];
        let (_, _, ig, _) = m.loss_and_grad(&input, &labels, 1.0).unwrap();
        let h = 1e-6;
        for (which, analytic) in [(0, &ig.track_features), (1, &ig.edge_features)] {
            for k in 0..analytic.len() {
                let mut up = input.clone();
                let mut down = input.clone();
                let (a, b) = if which == 0 {
                    (&mut up.track_features, &mut down.track_features)
                } else {
                    (&mut up.edge_features, &mut down.edge_features)
                };
                a.data_mut()[k] += h;
                b.data_mut()[k] -= h;
                let num = (m.loss(&up, &labels, 1.0).unwrap() - m.loss(&down, &labels, 1.0).unwrap()) / (2.0 * h);
                let an = analytic.data()[k];
                assert!((num - an).abs() <= 1e-5 * an.abs().max(1.0), "{which} {k}: {an} vs {num}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let cfg = small_config(1);
        let m = MpnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let mut input = random_input(&cfg, 1, 1, vec![(0, 0)], 22);
        input.det_features = Array::zeros(&[1, 5]);
        assert!(m.encode(&input).is_err());
    }
}
