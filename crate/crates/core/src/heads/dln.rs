use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monotonic::{Calibrator, CalibratorTrace, ConstrainedLinear, EnsembleTrace, LatticeEnsemble};
use crate::numerics::{ParameterBlock, SeededRng};

/// Input range of the feature calibrators. The LSTM hidden state is
/// `o * tanh(c)` and therefore always inside it.
pub const FEATURE_RANGE: (f64, f64) = (-1.0, 1.0);
/// Input (and initial output) range of the shared output calibrator.
pub const OUTPUT_RANGE: (f64, f64) = (-0.25, 1.25);
/// Standard deviation of the noise added to the lattice ramp at init.
pub const LATTICE_INIT_NOISE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlnHeadConfig {
    pub feature_calib_keypoints: usize,
    pub quantile_calib_keypoints: usize,
    pub lattice_keypoints: usize,
    pub output_calib_keypoints: usize,
    pub lattice_input_size: usize,
    pub horizon: usize,
}

impl Default for DlnHeadConfig {
    fn default() -> Self {
        Self {
            feature_calib_keypoints: 61,
            quantile_calib_keypoints: 11,
            lattice_keypoints: 21,
            output_calib_keypoints: 61,
            lattice_input_size: 2,
            horizon: 36,
        }
    }
}

impl DlnHeadConfig {
    pub fn validate(&self) -> Result<()> {
        let ks = [
            ("feature_calib_keypoints", self.feature_calib_keypoints),
            ("quantile_calib_keypoints", self.quantile_calib_keypoints),
            ("lattice_keypoints", self.lattice_keypoints),
            ("output_calib_keypoints", self.output_calib_keypoints),
        ];
        for (name, k) in ks {
            if k < 2 {
                return Err(Error::Config(format!("{name} must be at least 2, got {k}")));
            }
        }
        if self.lattice_input_size == 0 || self.horizon == 0 {
            return Err(Error::Config("lattice_input_size and horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn lattice_count(&self, embedding_dim: usize) -> usize {
        embedding_dim.div_ceil(self.lattice_input_size)
    }

    /// Total vertex count of the ensemble, computed without building it.
    pub fn lattice_parameter_count(&self, embedding_dim: usize) -> usize {
        let full = embedding_dim / self.lattice_input_size;
        let rest = embedding_dim % self.lattice_input_size;
        let k = self.lattice_keypoints;
        let mut n = full * k.pow(self.lattice_input_size as u32 + 1);
        if rest > 0 {
            n += k.pow(rest as u32 + 1);
        }
        n
    }

    pub fn parameter_count(&self, embedding_dim: usize) -> usize {
        let lattices = self.lattice_count(embedding_dim);
        embedding_dim * self.feature_calib_keypoints
            + self.quantile_calib_keypoints
            + self.lattice_parameter_count(embedding_dim)
            + lattices * self.horizon
            + self.horizon
            + self.output_calib_keypoints
    }
}

/// Calibrated lattice ensemble head.
///
/// Embedding features pass through unconstrained calibrators, `tau` through
/// a monotone calibrator into the last axis of every lattice, the lattice
/// outputs through a nonnegative linear layer onto the horizon, and every
/// horizon output through one shared monotone calibrator.
#[derive(Debug, Clone, PartialEq)]
pub struct DlnHead {
    config: DlnHeadConfig,
    feature_calibrators: Vec<Calibrator>,
    quantile_calibrator: Calibrator,
    ensemble: LatticeEnsemble,
    output_layer: ConstrainedLinear,
    output_calibrator: Calibrator,
}

#[derive(Debug, Clone)]
pub struct DlnCache {
    feature_traces: Vec<CalibratorTrace>,
    quantile_trace: CalibratorTrace,
    ensemble_trace: EnsembleTrace,
    lattice_out: Vec<f64>,
    output_traces: Vec<CalibratorTrace>,
}

impl DlnHead {
    pub fn new(embedding_dim: usize, config: DlnHeadConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        if embedding_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let feature_calibrators = (0..embedding_dim)
            .map(|i| {
                Calibrator::linear(
                    format!("dln.feature_calibrator.{i}"),
                    config.feature_calib_keypoints,
                    FEATURE_RANGE,
                    (0.0, 1.0),
                    false,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let quantile_calibrator = Calibrator::linear(
            "dln.quantile_calibrator",
            config.quantile_calib_keypoints,
            (0.0, 1.0),
            (0.0, 1.0),
            true,
        )?;
        let ensemble = LatticeEnsemble::partitioned(
            "dln.lattice",
            embedding_dim,
            config.lattice_input_size,
            config.lattice_keypoints,
            LATTICE_INIT_NOISE,
            rng,
        )?;
        let output_layer = ConstrainedLinear::init("dln.output_layer", ensemble.lattices().len(), 0, config.horizon, rng)?;
        let output_calibrator =
            Calibrator::linear("dln.output_calibrator", config.output_calib_keypoints, OUTPUT_RANGE, OUTPUT_RANGE, true)?;
        Ok(Self {
            config,
            feature_calibrators,
            quantile_calibrator,
            ensemble,
            output_layer,
            output_calibrator,
        })
    }

    /// Assembles a head from parts; checks that they fit together.
    pub fn from_parts(
        config: DlnHeadConfig,
        feature_calibrators: Vec<Calibrator>,
        quantile_calibrator: Calibrator,
        ensemble: LatticeEnsemble,
        output_layer: ConstrainedLinear,
        output_calibrator: Calibrator,
    ) -> Result<Self> {
        if feature_calibrators.len() != ensemble.num_features() {
            return Err(Error::shape(
                "feature calibrators vs ensemble features",
                &[ensemble.num_features()],
                &[feature_calibrators.len()],
            ));
        }
        if output_layer.monotone_inputs() != ensemble.lattices().len() || output_layer.free_inputs() != 0 {
            return Err(Error::shape(
                "output layer inputs",
                &[ensemble.lattices().len(), 0],
                &[output_layer.monotone_inputs(), output_layer.free_inputs()],
            ));
        }
        if output_layer.outputs() != config.horizon {
            return Err(Error::shape("output layer outputs", &[config.horizon], &[output_layer.outputs()]));
        }
        Ok(Self {
            config,
            feature_calibrators,
            quantile_calibrator,
            ensemble,
            output_layer,
            output_calibrator,
        })
    }

    pub fn config(&self) -> &DlnHeadConfig {
        &self.config
    }

    pub fn embedding_dim(&self) -> usize {
        self.feature_calibrators.len()
    }

    pub fn feature_calibrators(&self) -> &[Calibrator] {
        &self.feature_calibrators
    }

    pub fn quantile_calibrator(&self) -> &Calibrator {
        &self.quantile_calibrator
    }

    pub fn ensemble(&self) -> &LatticeEnsemble {
        &self.ensemble
    }

    pub fn output_layer(&self) -> &ConstrainedLinear {
        &self.output_layer
    }

    pub fn output_calibrator(&self) -> &Calibrator {
        &self.output_calibrator
    }

    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        let mut out: Vec<&ParameterBlock> = self.feature_calibrators.iter().map(|c| c.output()).collect();
        out.push(self.quantile_calibrator.output());
        out.extend(self.ensemble.lattices().iter().map(|l| l.theta()));
        out.extend(self.output_layer.blocks());
        out.push(self.output_calibrator.output());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        let mut out: Vec<&mut ParameterBlock> = self.feature_calibrators.iter_mut().map(|c| c.output_mut()).collect();
        out.push(self.quantile_calibrator.output_mut());
        out.extend(self.ensemble.lattices_mut().iter_mut().map(|l| l.theta_mut()));
        out.extend(self.output_layer.blocks_mut());
        out.push(self.output_calibrator.output_mut());
        out
    }

    /// Every block a change in `tau` flows through, in order from input to
    /// output.
    pub fn tau_path_blocks(&self) -> Vec<&ParameterBlock> {
        let mut out = vec![self.quantile_calibrator.output()];
        out.extend(self.ensemble.lattices().iter().map(|l| l.theta()));
        out.push(self.output_layer.monotone_weights());
        out.push(self.output_calibrator.output());
        out
    }

    pub fn forward(&self, embedding: &[f64], tau: f64) -> Result<(Vec<f64>, DlnCache)> {
        if embedding.len() != self.embedding_dim() {
            return Err(Error::shape("DLN embedding", &[self.embedding_dim()], &[embedding.len()]));
        }
        if !tau.is_finite() {
            return Err(Error::NonFinite("quantile level".into()));
        }
        let tau = tau.clamp(0.0, 1.0);
        let mut calibrated = Vec::with_capacity(embedding.len());
        let mut feature_traces = Vec::with_capacity(embedding.len());
        for (c, &x) in self.feature_calibrators.iter().zip(embedding) {
            if !x.is_finite() {
                return Err(Error::NonFinite("DLN embedding".into()));
            }
            let (v, t) = c.forward(x);
            calibrated.push(v);
            feature_traces.push(t);
        }
        let (q, quantile_trace) = self.quantile_calibrator.forward(tau);
        let (lattice_out, ensemble_trace) = self.ensemble.forward(&calibrated, q)?;
        let linear = self.output_layer.forward(&lattice_out, &[])?;
        let mut out = Vec::with_capacity(linear.len());
        let mut output_traces = Vec::with_capacity(linear.len());
        for &z in &linear {
            let (v, t) = self.output_calibrator.forward(z);
            out.push(v);
            output_traces.push(t);
        }
        Ok((
            out,
            DlnCache {
                feature_traces,
                quantile_trace,
                ensemble_trace,
                lattice_out,
                output_traces,
            },
        ))
    }

    /// Accumulates all parameter gradients and returns the embedding
    /// gradient.
    pub fn backward(&mut self, cache: &DlnCache, upstream: &[f64]) -> Vec<f64> {
        let d_linear: Vec<f64> = cache
            .output_traces
            .iter()
            .zip(upstream)
            .map(|(t, &g)| self.output_calibrator.backward(t, g))
            .collect();
        let (d_lattice, _) = self.output_layer.backward(&cache.lattice_out, &[], &d_linear);
        let mut d_features = vec![0.0; self.embedding_dim()];
        let d_q = self.ensemble.backward(&cache.ensemble_trace, &d_lattice, &mut d_features);
        self.quantile_calibrator.backward(&cache.quantile_trace, d_q);
        self.feature_calibrators
            .iter_mut()
            .zip(&cache.feature_traces)
            .zip(&d_features)
            .map(|((c, t), &g)| c.backward(t, g))
            .collect()
    }
}

/// Forward pass without the cache.
pub fn dln_forward(head: &DlnHead, embedding: &[f64], tau: f64) -> Result<Vec<f64>> {
    Ok(head.forward(embedding, tau)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotonic::Lattice;
    use crate::numerics::Constraint;

    fn small(seed: u64) -> DlnHead {
        let cfg = DlnHeadConfig {
            feature_calib_keypoints: 5,
            quantile_calib_keypoints: 4,
            lattice_keypoints: 3,
            output_calib_keypoints: 6,
            lattice_input_size: 2,
            horizon: 3,
        };
        DlnHead::new(5, cfg, &mut SeededRng::new(seed)).unwrap()
    }

    #[test]
    fn default_partition_arithmetic() {
        let cfg = DlnHeadConfig::default();
        assert_eq!(cfg.lattice_count(128), 64);
        assert_eq!(cfg.lattice_parameter_count(128), 64 * 21 * 21 * 21);
        assert_eq!(cfg.lattice_parameter_count(128), 592_704);
    }

    #[test]
    fn counted_parameters_match_blocks() {
        let h = small(0);
        let n: usize = h.blocks().iter().map(|b| b.len()).sum();
        assert_eq!(n, h.config().parameter_count(5));
        assert_eq!(h.ensemble().lattices().len(), 3);
    }

    #[test]
    fn monotone_in_tau() {
        let h = small(1);
        let mut rng = SeededRng::new(9);
        for _ in 0..20 {
            let e: Vec<f64> = (0..5).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let mut prev = dln_forward(&h, &e, 0.0).unwrap();
            for i in 1..=50 {
                let cur = dln_forward(&h, &e, i as f64 / 50.0).unwrap();
                assert!(cur.iter().zip(&prev).all(|(c, p)| *c >= p - 1e-12));
                prev = cur;
            }
        }
    }

    #[test]
    fn hand_composed_identity_pipeline() {
        let cfg = DlnHeadConfig {
            feature_calib_keypoints: 2,
            quantile_calib_keypoints: 2,
            lattice_keypoints: 2,
            output_calib_keypoints: 2,
            lattice_input_size: 1,
            horizon: 2,
        };
        let feat = vec![Calibrator::linear("f", 2, (-1.0, 1.0), (0.0, 1.0), false).unwrap()];
        let quant = Calibrator::linear("q", 2, (0.0, 1.0), (0.0, 1.0), true).unwrap();
        // Ramp along the quantile axis only: theta(v0, v1) = v1.
        let lat = Lattice::new("l", 2, 2, vec![1], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let ens = LatticeEnsemble::new(vec![lat], vec![vec![0]], 1).unwrap();
        let lin = ConstrainedLinear::new("o", vec![1.0, 1.0], vec![], vec![0.0, 0.0]).unwrap();
        let out = Calibrator::linear("c", 2, (0.0, 1.0), (0.0, 1.0), true).unwrap();
        let h = DlnHead::from_parts(cfg, feat, quant, ens, lin, out).unwrap();
        for tau in [0.0, 0.3, 0.75, 1.0] {
            let y = dln_forward(&h, &[0.4], tau).unwrap();
            assert!(y.iter().all(|v| (v - tau).abs() < 1e-15));
        }
    }

    #[test]
    fn tau_path_is_fully_tagged() {
        let h = small(2);
        let path = h.tau_path_blocks();
        assert_eq!(path.len(), 1 + h.ensemble().lattices().len() + 2);
        assert_eq!(path[0].constraint(), &Constraint::Monotone(vec![0]));
        assert_eq!(path.last().unwrap().constraint(), &Constraint::Monotone(vec![0]));
        assert!(path.iter().all(|b| b.constraint().is_constrained()));
    }

    #[test]
    fn wrong_embedding_length() {
        assert!(dln_forward(&small(3), &[0.0; 4], 0.5).is_err());
    }
}
