//! The outcome classifier (LSTM over the ball window) and the congruence
//! classifier (two-branch 1D CNN over reaction features).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ModelWeights, OutcomeFeatures, ReactionFeatures, Zone, OUTCOME_WINDOW, REACTION_CHANNELS, REACTION_STEPS};
use crate::nn::{
    argmax, dropout, relu, relu_backward, softmax, softmax_backward, Conv1d, Dense, Lstm, LstmCache, MaxPool1d,
    Network, NnError, Tensor,
};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DROPOUT_RATE: f64 = 0.1;

/// LSTM over the `(11, 2)` ball window, a dense layer on the final hidden
/// state and a 9-way softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeModel {
    pub lstm: Lstm,
    pub head: Dense,
}

pub struct OutcomeCache {
    lstm: LstmCache,
    probs: Vec<f64>,
}

impl OutcomeModel {
    pub fn new(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        OutcomeModel {
            lstm: Lstm::new(2, hidden, rng),
            head: Dense::new(hidden, Zone::COUNT, rng),
        }
    }

    /// Rebuilds a model of the right hidden size from saved weights.
    pub fn from_weights(weights: &ModelWeights) -> Result<Self, NnError> {
        let hidden = weights
            .layer("lstm.w_hidden")
            .and_then(|l| l.shape.first().copied())
            .ok_or_else(|| NnError::Weights("not an outcome model (no lstm.w_hidden)".into()))?;
        let mut model = OutcomeModel::new(hidden, &mut ChaCha8Rng::seed_from_u64(0));
        model.set_weights(weights)?;
        Ok(model)
    }
}

pub fn build_outcome_model(seed: u64) -> OutcomeModel {
    OutcomeModel::new(DEFAULT_HIDDEN, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl Network for OutcomeModel {
    type Cache = OutcomeCache;

    fn input_shape(&self) -> (usize, usize) {
        (OUTCOME_WINDOW, 2)
    }

    fn num_classes(&self) -> usize {
        Zone::COUNT
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("lstm.w_input", &self.lstm.w_input),
            ("lstm.w_hidden", &self.lstm.w_hidden),
            ("lstm.bias", &self.lstm.bias),
            ("head.weight", &self.head.weight),
            ("head.bias", &self.head.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.lstm.w_input,
            &mut self.lstm.w_hidden,
            &mut self.lstm.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    fn forward(&self, x: &Tensor, _rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, OutcomeCache), NnError> {
        self.check_input(x)?;
        let lstm = self.lstm.forward(x)?;
        let probs = softmax(&self.head.forward(lstm.final_hidden()));
        Ok((probs.clone(), OutcomeCache { lstm, probs }))
    }

    fn backward(&self, cache: &OutcomeCache, dprobs: &[f64], grads: &mut [Tensor]) {
        let dlogits = softmax_backward(&cache.probs, dprobs);
        let (lstm_grads, head_grads) = grads.split_at_mut(3);
        let (gw, gb) = head_grads.split_at_mut(1);
        let dh = self.head.backward(cache.lstm.final_hidden(), &dlogits, &mut gw[0], &mut gb[0]);
        self.lstm.backward(&cache.lstm, &dh, lstm_grads);
    }
}

/// One convolutional branch: conv, dropout, conv, max-pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub pool: MaxPool1d,
}

struct BranchCache {
    mask1: Option<Vec<f64>>,
    d1: Tensor,
    a2_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl Branch {
    fn new(k: usize, rng: &mut ChaCha8Rng) -> Self {
        Branch {
            conv1: Conv1d::new(REACTION_CHANNELS, 8, k, rng),
            conv2: Conv1d::new(8, 16, k, rng),
            pool: MaxPool1d { k: 2 },
        }
    }

    fn forward(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor, BranchCache), NnError> {
        let a1 = self.conv1.forward(x)?;
        let (d1, mask1) = dropout(a1.data(), DROPOUT_RATE, rng);
        let d1 = Tensor::new(a1.shape().to_vec(), d1)?;
        let a2 = self.conv2.forward(&d1)?;
        let (pooled, argmax) = self.pool.forward(&a2)?;
        Ok((
            pooled,
            BranchCache {
                mask1,
                d1,
                a2_shape: a2.shape().to_vec(),
                argmax,
            },
        ))
    }

    /// `grads` holds `[conv1.kernel, conv1.bias, conv2.kernel, conv2.bias]`.
    fn backward(&self, x: &Tensor, cache: &BranchCache, dpooled: &Tensor, grads: &mut [Tensor]) {
        let da2 = self.pool.backward(&cache.a2_shape, &cache.argmax, dpooled);
        let [gk1, gb1, gk2, gb2] = grads else {
            panic!("branch expects four gradient buffers");
        };
        let mut dd1 = self.conv2.backward(&cache.d1, &da2, gk2, gb2);
        if let Some(mask) = &cache.mask1 {
            dd1.data_mut().iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        self.conv1.backward(x, &dd1, gk1, gb1);
    }

    pub fn output_len(&self, steps: usize) -> usize {
        let after = steps + 2 - self.conv1.kernel_size() - self.conv2.kernel_size();
        after / self.pool.k
    }
}

/// Two convolutional branches (kernel 3 and kernel 9) over the `(30, 7)`
/// reaction sequence, concatenated and passed through two dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct CongruenceModel {
    pub branch_a: Branch,
    pub branch_b: Branch,
    pub hidden: Dense,
    pub output: Dense,
}

pub struct CongruenceCache {
    x: Tensor,
    a: BranchCache,
    b: BranchCache,
    pooled_a_shape: Vec<usize>,
    pooled_b_shape: Vec<usize>,
    concat_mask: Option<Vec<f64>>,
    dropped: Vec<f64>,
    pre_relu: Vec<f64>,
    activated: Vec<f64>,
    probs: Vec<f64>,
}

impl CongruenceModel {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let branch_a = Branch::new(3, rng);
        let branch_b = Branch::new(9, rng);
        let width = (branch_a.output_len(REACTION_STEPS) + branch_b.output_len(REACTION_STEPS)) * 16;
        CongruenceModel {
            branch_a,
            branch_b,
            hidden: Dense::new(width, 20, rng),
            output: Dense::new(20, 2, rng),
        }
    }

    /// Width of the concatenated branch outputs.
    pub fn concat_width(&self) -> usize {
        self.hidden.inputs()
    }

    /// Flattened concatenation of the two branch outputs, dropout off.
    pub fn concat_features(&self, x: &Tensor) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let (pa, _) = self.branch_a.forward(x, None)?;
        let (pb, _) = self.branch_b.forward(x, None)?;
        Ok(pa.data().iter().chain(pb.data()).copied().collect())
    }

    pub fn from_weights(weights: &ModelWeights) -> Result<Self, NnError> {
        let mut model = CongruenceModel::new(&mut ChaCha8Rng::seed_from_u64(0));
        model.set_weights(weights)?;
        Ok(model)
    }
}

pub fn build_congruence_model(seed: u64) -> CongruenceModel {
    CongruenceModel::new(&mut ChaCha8Rng::seed_from_u64(seed))
}

impl Network for CongruenceModel {
    type Cache = CongruenceCache;

    fn input_shape(&self) -> (usize, usize) {
        (REACTION_STEPS, REACTION_CHANNELS)
    }

    fn num_classes(&self) -> usize {
        2
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("a.conv1.kernel", &self.branch_a.conv1.kernel),
            ("a.conv1.bias", &self.branch_a.conv1.bias),
            ("a.conv2.kernel", &self.branch_a.conv2.kernel),
            ("a.conv2.bias", &self.branch_a.conv2.bias),
            ("b.conv1.kernel", &self.branch_b.conv1.kernel),
            ("b.conv1.bias", &self.branch_b.conv1.bias),
            ("b.conv2.kernel", &self.branch_b.conv2.kernel),
            ("b.conv2.bias", &self.branch_b.conv2.bias),
            ("c.hidden.weight", &self.hidden.weight),
            ("c.hidden.bias", &self.hidden.bias),
            ("c.output.weight", &self.output.weight),
            ("c.output.bias", &self.output.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.branch_a.conv1.kernel,
            &mut self.branch_a.conv1.bias,
            &mut self.branch_a.conv2.kernel,
            &mut self.branch_a.conv2.bias,
            &mut self.branch_b.conv1.kernel,
            &mut self.branch_b.conv1.bias,
            &mut self.branch_b.conv2.kernel,
            &mut self.branch_b.conv2.bias,
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    fn forward(&self, x: &Tensor, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, CongruenceCache), NnError> {
        self.check_input(x)?;
        let (pa, a) = self.branch_a.forward(x, rng.as_deref_mut())?;
        let (pb, b) = self.branch_b.forward(x, rng.as_deref_mut())?;
        let concat: Vec<f64> = pa.data().iter().chain(pb.data()).copied().collect();
        let (dropped, concat_mask) = dropout(&concat, DROPOUT_RATE, rng);
        let pre_relu = self.hidden.try_forward(&dropped)?;
        let activated = relu(&pre_relu);
        let probs = softmax(&self.output.forward(&activated));
        Ok((
            probs.clone(),
            CongruenceCache {
                x: x.clone(),
                a,
                b,
                pooled_a_shape: pa.shape().to_vec(),
                pooled_b_shape: pb.shape().to_vec(),
                concat_mask,
                dropped,
                pre_relu,
                activated,
                probs,
            },
        ))
    }

    fn backward(&self, cache: &CongruenceCache, dprobs: &[f64], grads: &mut [Tensor]) {
        let (branch_grads, head) = grads.split_at_mut(8);
        let (ga, gb) = branch_grads.split_at_mut(4);
        let [ghw, ghb, gow, gob] = head else {
            panic!("congruence model expects twelve gradient buffers");
        };
        let dlogits = softmax_backward(&cache.probs, dprobs);
        let dact = self.output.backward(&cache.activated, &dlogits, gow, gob);
        let dpre = relu_backward(&cache.pre_relu, &dact);
        let mut dconcat = self.hidden.backward(&cache.dropped, &dpre, ghw, ghb);
        if let Some(mask) = &cache.concat_mask {
            dconcat.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        let split = cache.pooled_a_shape.iter().product();
        let da = Tensor::new(cache.pooled_a_shape.clone(), dconcat[..split].to_vec()).expect("branch A shape");
        let db = Tensor::new(cache.pooled_b_shape.clone(), dconcat[split..].to_vec()).expect("branch B shape");
        self.branch_a.backward(&cache.x, &cache.a, &da, ga);
        self.branch_b.backward(&cache.x, &cache.b, &db, gb);
    }
}

/// Most probable zone (lowest zone on ties) and the full distribution.
pub fn predict_outcome(model: &OutcomeModel, features: &OutcomeFeatures) -> Result<(Zone, Vec<f64>), NnError> {
    let x = Tensor::from_rows(features.rows())?;
    let probs = model.predict(&x)?;
    Ok((Zone::from_index(argmax(&probs)), probs))
}

/// Class 1 is "congruent". Returns the decision at threshold 0.5 (ties go to
/// class 0) and the probability of congruence.
pub fn congruence_decision(probs: &[f64]) -> (bool, f64) {
    let p = probs[1];
    (argmax(probs) == 1, p)
}

pub fn predict_congruence(model: &CongruenceModel, features: &ReactionFeatures) -> Result<(bool, f64), NnError> {
    let x = Tensor::from_rows(features.rows())?;
    Ok(congruence_decision(&model.predict(&x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use rand::Rng;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn congruence_architecture() {
        let m = build_congruence_model(1);
        let x = random_input(30, 7, 2);
        assert_eq!(m.concat_features(&x).unwrap().len(), 320);
        assert_eq!(m.concat_width(), 320);
        assert_eq!(m.branch_a.output_len(30), 13);
        assert_eq!(m.branch_b.output_len(30), 7);
        let p = m.predict(&x).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Layer by layer: 3*7*8+8, 3*8*16+16, 9*7*8+8, 9*8*16+16, 320*20+20, 20*2+2.
        assert_eq!(m.param_count(), 176 + 400 + 512 + 1168 + 6420 + 42);
        assert_eq!(m.param_count(), 8718);
    }

    #[test]
    fn outcome_architecture() {
        let m = build_outcome_model(1);
        let p = m.predict(&random_input(11, 2, 3)).unwrap();
        assert_eq!(p.len(), 9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let entropy: f64 = -p.iter().map(|v| v * v.ln()).sum::<f64>();
        assert!(entropy <= 9f64.ln() + 1e-12);
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        assert!(build_outcome_model(1).predict(&random_input(10, 2, 1)).is_err());
        assert!(build_congruence_model(1).predict(&random_input(30, 6, 1)).is_err());
        assert!(build_congruence_model(1).predict(&random_input(29, 7, 1)).is_err());
    }

    #[test]
    fn untrained_prediction_is_reproducible() {
        let f = OutcomeFeatures::new((0..11).map(|i| [0.3 + 0.01 * i as f64, 0.5]).collect()).unwrap();
        let a = predict_outcome(&build_outcome_model(42), &f).unwrap();
        let b = predict_outcome(&build_outcome_model(42), &f).unwrap();
        assert_eq!(a, b);
        assert!(!a.0.is_miss());
    }

    #[test]
    fn congruence_threshold() {
        assert_eq!(congruence_decision(&[0.3, 0.7]), (true, 0.7));
        assert_eq!(congruence_decision(&[0.7, 0.3]), (false, 0.3));
        assert_eq!(congruence_decision(&[0.5, 0.5]).0, false);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cnn = build_congruence_model(3);
        assert!(gradient_check(&cnn, &random_input(30, 7, 4), 1, 1e-5).unwrap() < 1e-4);
        // The recurrent weights have gradients near 1e-8, where rounding in a
        // 1e-5 central difference alone exceeds 1e-4 relative error. The
        // LSTM is smooth, so a wider step is accurate.
        let lstm = build_outcome_model(3);
        assert!(gradient_check(&lstm, &random_input(11, 2, 5), 6, 1e-3).unwrap() < 1e-4);
    }

    #[test]
    fn weights_round_trip() {
        let m = build_congruence_model(8);
        let back = CongruenceModel::from_weights(&m.to_weights()).unwrap();
        assert_eq!(m, back);
        let o = OutcomeModel::new(12, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(OutcomeModel::from_weights(&o.to_weights()).unwrap(), o);
        assert!(OutcomeModel::from_weights(&m.to_weights()).is_err());
    }
}
