//! Stacked LSTM used as the trainable embedding of a past window.
//!
//! Gate order inside every `4H`-row weight matrix and bias is
//! (input, forget, cell, output). Each layer has an input-to-hidden matrix,
//! a hidden-to-hidden matrix and one bias per matrix, the same parameter set
//! as the common cuDNN-style LSTM. The embedding is the final hidden state
//! of the last layer.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Constraint, ParameterBlock, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_features: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub window: usize,
}

impl LstmConfig {
    /// Hidden size 128, two layers, 96-step window.
    pub fn with_defaults(input_features: usize) -> Self {
        Self {
            input_features,
            hidden_size: 128,
            num_layers: 2,
            window: 96,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 || self.hidden_size == 0 || self.num_layers == 0 || self.window == 0 {
            return Err(Error::Config(format!("LSTM dimensions must all be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden_size;
        (0..self.num_layers)
            .map(|l| {
                let input = if l == 0 { self.input_features } else { h };
                4 * h * (input + h) + 8 * h
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LstmLayer {
    input_size: usize,
    w_ih: ParameterBlock,
    w_hh: ParameterBlock,
    b_ih: ParameterBlock,
    b_hh: ParameterBlock,
}

#[derive(Debug, Clone, Default)]
struct LayerCache {
    inputs: Vec<Vec<f64>>,
    // Per step: gate activations (i, f, g, o) concatenated, cell state, tanh(cell).
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    tanh_cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

/// Intermediate states retained by [`Lstm::forward`] for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug)]
pub struct Lstm {
    config: LstmConfig,
    layers: Vec<LstmLayer>,
    forward_calls: AtomicUsize,
}

impl Clone for Lstm {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            layers: self.layers.clone(),
            forward_calls: AtomicUsize::new(self.forward_calls()),
        }
    }
}

impl PartialEq for Lstm {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn block(name: String, input: usize, rows: usize, values: Vec<f64>) -> ParameterBlock {
    ParameterBlock::new(name, vec![input, rows], values, Constraint::None).expect("sizes computed from config")
}

impl Lstm {
    /// Weights and biases uniform in `+-1/sqrt(hidden)`, forget-gate input
    /// bias shifted by +1.
    pub fn new(config: LstmConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        let bound = 1.0 / (h as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform_range(-bound, bound)).collect() };
        let layers = (0..config.num_layers)
            .map(|l| {
                let input = if l == 0 { config.input_features } else { h };
                let mut b_ih = draw(4 * h);
                b_ih[h..2 * h].iter_mut().for_each(|b| *b += 1.0);
                LstmLayer {
                    input_size: input,
                    w_ih: block(format!("lstm.{l}.w_ih"), input, 4 * h, draw(4 * h * input)),
                    w_hh: block(format!("lstm.{l}.w_hh"), h, 4 * h, draw(4 * h * h)),
                    b_ih: block(format!("lstm.{l}.b_ih"), 1, 4 * h, b_ih),
                    b_hh: block(format!("lstm.{l}.b_hh"), 1, 4 * h, draw(4 * h)),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            forward_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }

    /// How many windows have been embedded since construction.
    pub fn forward_calls(&self) -> usize {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        self.layers
            .iter()
            .flat_map(|l| [&l.w_ih, &l.w_hh, &l.b_ih, &l.b_hh])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w_ih, &mut l.w_hh, &mut l.b_ih, &mut l.b_hh])
            .collect()
    }

    fn check_window(&self, window: &ArrayView2<f64>) -> Result<()> {
        let (w, f) = window.dim();
        if w != self.config.window || f != self.config.input_features {
            return Err(Error::shape(
                "LSTM window",
                &[self.config.window, self.config.input_features],
                &[w, f],
            ));
        }
        if window.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LSTM input window".into()));
        }
        Ok(())
    }

    /// Runs the recurrence and returns the embedding together with the cache
    /// needed by [`Lstm::backward`].
    pub fn forward(&self, window: ArrayView2<f64>) -> Result<(Vec<f64>, LstmCache)> {
        self.check_window(&window)?;
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let h = self.config.hidden_size;
        let mut sequence: Vec<Vec<f64>> = window.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut cache = LstmCache::default();
        let mut z = vec![0.0; 4 * h];

        for layer in &self.layers {
            let n_in = layer.input_size;
            let w_ih = layer.w_ih.values();
            let w_hh = layer.w_hh.values();
            let b_ih = layer.b_ih.values();
            let b_hh = layer.b_hh.values();
            let mut lc = LayerCache::default();
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            for x in &sequence {
                for r in 0..4 * h {
                    let wi = &w_ih[r * n_in..(r + 1) * n_in];
                    let wh = &w_hh[r * h..(r + 1) * h];
                    let mut acc = b_ih[r] + b_hh[r];
                    for j in 0..n_in {
                        acc += wi[j] * x[j];
                    }
                    for j in 0..h {
                        acc += wh[j] * h_prev[j];
                    }
                    z[r] = acc;
                }
                let mut gates = vec![0.0; 4 * h];
                let mut c = vec![0.0; h];
                let mut tc = vec![0.0; h];
                let mut hn = vec![0.0; h];
                for j in 0..h {
                    let i = sigmoid(z[j]);
                    let f = sigmoid(z[h + j]);
                    let g = z[2 * h + j].tanh();
                    let o = sigmoid(z[3 * h + j]);
                    gates[j] = i;
                    gates[h + j] = f;
                    gates[2 * h + j] = g;
                    gates[3 * h + j] = o;
                    c[j] = f * c_prev[j] + i * g;
                    tc[j] = c[j].tanh();
                    hn[j] = o * tc[j];
                }
                lc.inputs.push(x.clone());
                lc.gates.push(gates);
                lc.cells.push(c.clone());
                lc.tanh_cells.push(tc);
                lc.hiddens.push(hn.clone());
                h_prev = hn;
                c_prev = c;
            }
            sequence = lc.hiddens.clone();
            cache.layers.push(lc);
        }
        let embedding = sequence.last().cloned().unwrap_or_else(|| vec![0.0; h]);
        Ok((embedding, cache))
    }

    /// Embedding only.
    pub fn embed(&self, window: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.forward(window)?.0)
    }

    /// Backpropagation through time from a gradient on the embedding.
    /// Parameter gradients are accumulated into the blocks.
    pub fn backward(&mut self, cache: &LstmCache, d_embedding: &[f64]) -> Result<()> {
        let h = self.config.hidden_size;
        if cache.layers.len() != self.layers.len() {
            return Err(Error::InvalidArgument("backward called without a matching forward cache".into()));
        }
        if d_embedding.len() != h {
            return Err(Error::shape("LSTM embedding gradient", &[h], &[d_embedding.len()]));
        }
        let steps = cache.layers[0].inputs.len();
        // Gradient arriving at each step's hidden output from above.
        let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; h]; steps];
        if steps > 0 {
            d_out[steps - 1].copy_from_slice(d_embedding);
        }

        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let n_in = layer.input_size;
            let mut d_in: Vec<Vec<f64>> = vec![vec![0.0; n_in]; steps];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dz = vec![0.0; 4 * h];
            let zeros = vec![0.0; h];

            let LstmLayer { w_ih, w_hh, b_ih, b_hh, .. } = layer;
            let w_ih_v = w_ih.values().to_vec();
            let w_hh_v = w_hh.values().to_vec();
            let g_wih = w_ih.grad_mut();
            let g_whh = w_hh.grad_mut();

            for t in (0..steps).rev() {
                let gates = &lc.gates[t];
                let c_prev = if t > 0 { &lc.cells[t - 1] } else { &zeros };
                let h_prev = if t > 0 { &lc.hiddens[t - 1] } else { &zeros };
                let tc = &lc.tanh_cells[t];
                for j in 0..h {
                    let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let dh = d_out[t][j] + dh_next[j];
                    let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
                    dz[j] = dc * g * i * (1.0 - i);
                    dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - g * g);
                    dz[3 * h + j] = dh * tc[j] * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let x = &lc.inputs[t];
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                let dx = &mut d_in[t];
                for r in 0..4 * h {
                    let d = dz[r];
                    if d == 0.0 {
                        continue;
                    }
                    let gi = &mut g_wih[r * n_in..(r + 1) * n_in];
                    let wi = &w_ih_v[r * n_in..(r + 1) * n_in];
                    for j in 0..n_in {
                        gi[j] += d * x[j];
                        dx[j] += d * wi[j];
                    }
                    let gh = &mut g_whh[r * h..(r + 1) * h];
                    let wh = &w_hh_v[r * h..(r + 1) * h];
                    for j in 0..h {
                        gh[j] += d * h_prev[j];
                        dh_next[j] += d * wh[j];
                    }
                }
                let gb = b_ih.grad_mut();
                for r in 0..4 * h {
                    gb[r] += dz[r];
                }
                let gb = b_hh.grad_mut();
                for r in 0..4 * h {
                    gb[r] += dz[r];
                }
            }
            d_out = d_in;
        }
        Ok(())
    }
}

/// Free-function form of [`Lstm::embed`].
pub fn lstm_forward(lstm: &Lstm, window: ArrayView2<f64>) -> Result<Vec<f64>> {
    lstm.embed(window)
}

/// Free-function form of [`Lstm::backward`].
pub fn lstm_backward(lstm: &mut Lstm, cache: &LstmCache, d_embedding: &[f64]) -> Result<()> {
    lstm.backward(cache, d_embedding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tiny(seed: u64) -> Lstm {
        let cfg = LstmConfig {
            input_features: 2,
            hidden_size: 3,
            num_layers: 2,
            window: 4,
        };
        Lstm::new(cfg, &mut SeededRng::new(seed)).unwrap()
    }

    fn window(seed: u64, w: usize, f: usize) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_fn((w, f), |_| rng.uniform_range(-1.0, 1.0))
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut l = tiny(0);
        for b in l.blocks_mut() {
            b.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let e = l.embed(window(1, 4, 2).view()).unwrap();
        assert_eq!(e, vec![0.0; 3]);
    }

    #[test]
    fn embedding_length_is_hidden_size() {
        let l = tiny(1);
        assert_eq!(l.embed(window(2, 4, 2).view()).unwrap().len(), 3);
    }

    #[test]
    fn purity() {
        let l = tiny(2);
        let w = window(3, 4, 2);
        assert_eq!(l.embed(w.view()).unwrap(), l.embed(w.view()).unwrap());
        assert_eq!(l.forward_calls(), 2);
    }

    #[test]
    fn shape_and_finiteness_checked() {
        let l = tiny(3);
        assert!(l.embed(window(4, 5, 2).view()).is_err());
        let mut w = window(4, 4, 2);
        w[[1, 1]] = f64::NAN;
        assert!(matches!(l.embed(w.view()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut l = tiny(4);
        let (_, cache) = l.forward(window(5, 4, 2).view()).unwrap();
        l.backward(&cache, &[0.0; 3]).unwrap();
        assert!(l.blocks().iter().all(|b| b.grad().iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn missing_cache_is_an_error() {
        let mut l = tiny(5);
        assert!(l.backward(&LstmCache::default(), &[1.0; 3]).is_err());
    }

    #[test]
    fn parameter_count_matches_blocks() {
        let l = tiny(6);
        let n: usize = l.blocks().iter().map(|b| b.len()).sum();
        assert_eq!(n, l.config().parameter_count());
        // The 246-feature, 128-unit, 2-layer configuration.
        assert_eq!(LstmConfig::with_defaults(246).parameter_count(), 324_608);
    }
}
