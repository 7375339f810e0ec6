//! Output models mapping an embedding (and a quantile level) to an
//! `h`-step forecast.

mod affine;
mod dln;

use serde::{Deserialize, Serialize};

pub use affine::Affine;
pub use dln::{dln_forward, DlnCache, DlnHead, DlnHeadConfig, FEATURE_RANGE, LATTICE_INIT_NOISE, OUTPUT_RANGE};

use crate::error::{Error, Result};
use crate::metrics::EVAL_QUANTILES;
use crate::monotonic::ConstrainedLinear;
use crate::numerics::{ParameterBlock, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Dln,
    Linear,
    ConstrainedLinear,
    Mlp,
    #[serde(rename = "fixed-quantile-qr")]
    FixedQuantile,
    Point,
}

impl HeadKind {
    pub const ALL: [HeadKind; 6] = [
        HeadKind::Dln,
        HeadKind::Linear,
        HeadKind::ConstrainedLinear,
        HeadKind::Mlp,
        HeadKind::FixedQuantile,
        HeadKind::Point,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Dln => "dln",
            HeadKind::Linear => "linear",
            HeadKind::ConstrainedLinear => "constrained-linear",
            HeadKind::Mlp => "mlp",
            HeadKind::FixedQuantile => "fixed-quantile-qr",
            HeadKind::Point => "point",
        }
    }

    /// Short label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            HeadKind::Dln => "LSTM-DLN",
            HeadKind::Linear => "LSTM-Lin",
            HeadKind::ConstrainedLinear => "LSTM-CLin",
            HeadKind::Mlp => "LSTM-NN",
            HeadKind::FixedQuantile => "LSTM-QR",
            HeadKind::Point => "LSTM-PP",
        }
    }

    /// Whether forecasts are guaranteed nondecreasing in `tau`.
    pub fn is_monotone_in_tau(self) -> bool {
        matches!(self, HeadKind::Dln | HeadKind::ConstrainedLinear)
    }

    /// Whether the head takes `tau` as an input.
    pub fn uses_tau(self) -> bool {
        !matches!(self, HeadKind::FixedQuantile | HeadKind::Point)
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown head kind '{s}'")))
    }
}

/// Head kind plus everything needed to build one. `dln.horizon` is the
/// forecast horizon for every kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub dln: DlnHeadConfig,
    /// Hidden width of the MLP head; the embedding size when absent.
    pub mlp_width: Option<usize>,
}

impl HeadConfig {
    pub fn new(kind: HeadKind, horizon: usize) -> Self {
        Self {
            kind,
            dln: DlnHeadConfig {
                horizon,
                ..DlnHeadConfig::default()
            },
            mlp_width: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.dln.horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    hidden: Affine,
    output: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Dln(DlnHead),
    /// Affine map of `[embedding, tau]`.
    Linear(Affine),
    /// Nonnegative weight on `tau`, free weights on the embedding.
    ConstrainedLinear(ConstrainedLinear),
    Mlp(MlpHead),
    /// One output per (quantile of the evaluation grid, horizon step),
    /// index `q * h + j`.
    FixedQuantile(Affine),
    Point(Affine),
}

/// Forward-pass state needed by [`Head::backward`].
#[derive(Debug, Clone)]
pub enum HeadCache {
    Dln(DlnCache),
    Input(Vec<f64>),
    ConstrainedLinear { tau: f64, embedding: Vec<f64> },
    Mlp { input: Vec<f64>, activation: Vec<f64> },
}

fn with_tau(embedding: &[f64], tau: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(embedding.len() + 1);
    x.extend_from_slice(embedding);
    x.push(tau);
    x
}

fn check_tau(tau: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::NonFinite("quantile level".into()));
    }
    Ok(tau.clamp(0.0, 1.0))
}

/// Position of `tau` on the evaluation grid.
pub fn grid_index(tau: f64) -> Result<usize> {
    EVAL_QUANTILES
        .iter()
        .position(|&g| (g - tau).abs() < 1e-9)
        .ok_or_else(|| Error::InvalidArgument(format!("the fixed-quantile head only predicts grid levels, got {tau}")))
}

impl Head {
    pub fn new(config: &HeadConfig, embedding_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let h = config.horizon();
        if h == 0 || embedding_dim == 0 {
            return Err(Error::Config("horizon and embedding size must be positive".into()));
        }
        Ok(match config.kind {
            HeadKind::Dln => Head::Dln(DlnHead::new(embedding_dim, config.dln, rng)?),
            HeadKind::Linear => Head::Linear(Affine::init("linear", embedding_dim + 1, h, rng)?),
            HeadKind::ConstrainedLinear => {
                Head::ConstrainedLinear(ConstrainedLinear::init("clinear", 1, embedding_dim, h, rng)?)
            }
            HeadKind::Mlp => {
                let width = config.mlp_width.unwrap_or(embedding_dim);
                if width == 0 {
                    return Err(Error::Config("mlp_width must be positive".into()));
                }
                Head::Mlp(MlpHead {
                    hidden: Affine::init("mlp.hidden", embedding_dim + 1, width, rng)?,
                    output: Affine::init("mlp.output", width, h, rng)?,
                })
            }
            HeadKind::FixedQuantile => {
                Head::FixedQuantile(Affine::init("qr", embedding_dim, h * EVAL_QUANTILES.len(), rng)?)
            }
            HeadKind::Point => Head::Point(Affine::init("point", embedding_dim, h, rng)?),
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Dln(_) => HeadKind::Dln,
            Head::Linear(_) => HeadKind::Linear,
            Head::ConstrainedLinear(_) => HeadKind::ConstrainedLinear,
            Head::Mlp(_) => HeadKind::Mlp,
            Head::FixedQuantile(_) => HeadKind::FixedQuantile,
            Head::Point(_) => HeadKind::Point,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Head::Dln(d) => d.config().horizon,
            Head::Linear(a) | Head::Point(a) => a.outputs(),
            Head::ConstrainedLinear(c) => c.outputs(),
            Head::Mlp(m) => m.output.outputs(),
            Head::FixedQuantile(a) => a.outputs() / EVAL_QUANTILES.len(),
        }
    }

    /// Length of the raw output of [`Head::forward`]: `h`, or `h * 11` for
    /// the fixed-quantile head.
    pub fn output_len(&self) -> usize {
        match self {
            Head::FixedQuantile(a) => a.outputs(),
            _ => self.horizon(),
        }
    }

    pub fn blocks(&self) -> Vec<&ParameterBlock> {
        match self {
            Head::Dln(d) => d.blocks(),
            Head::Linear(a) | Head::FixedQuantile(a) | Head::Point(a) => a.blocks().to_vec(),
            Head::ConstrainedLinear(c) => c.blocks().to_vec(),
            Head::Mlp(m) => m.hidden.blocks().into_iter().chain(m.output.blocks()).collect(),
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParameterBlock> {
        match self {
            Head::Dln(d) => d.blocks_mut(),
            Head::Linear(a) | Head::FixedQuantile(a) | Head::Point(a) => a.blocks_mut().into_iter().collect(),
            Head::ConstrainedLinear(c) => c.blocks_mut().into_iter().collect(),
            Head::Mlp(m) => m.hidden.blocks_mut().into_iter().chain(m.output.blocks_mut()).collect(),
        }
    }

    /// Raw output and cache. `tau` is ignored by the fixed-quantile and
    /// point heads.
    pub fn forward(&self, embedding: &[f64], tau: f64) -> Result<(Vec<f64>, HeadCache)> {
        if let Some(i) = embedding.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {i}")));
        }
        match self {
            Head::Dln(d) => {
                let (y, c) = d.forward(embedding, tau)?;
                Ok((y, HeadCache::Dln(c)))
            }
            Head::Linear(a) => {
                let x = with_tau(embedding, check_tau(tau)?);
                Ok((a.forward(&x)?, HeadCache::Input(x)))
            }
            Head::ConstrainedLinear(c) => {
                let tau = check_tau(tau)?;
                let y = c.forward(&[tau], embedding)?;
                Ok((
                    y,
                    HeadCache::ConstrainedLinear {
                        tau,
                        embedding: embedding.to_vec(),
                    },
                ))
            }
            Head::Mlp(m) => {
                let x = with_tau(embedding, check_tau(tau)?);
                let activation: Vec<f64> = m.hidden.forward(&x)?.into_iter().map(|z| z.max(0.0)).collect();
                let y = m.output.forward(&activation)?;
                Ok((y, HeadCache::Mlp { input: x, activation }))
            }
            Head::FixedQuantile(a) | Head::Point(a) => Ok((a.forward(embedding)?, HeadCache::Input(embedding.to_vec()))),
        }
    }

    /// The `h`-step forecast at quantile `tau`.
    pub fn predict(&self, embedding: &[f64], tau: f64) -> Result<Vec<f64>> {
        let (y, _) = self.forward(embedding, tau)?;
        match self {
            Head::FixedQuantile(_) => {
                let h = self.horizon();
                let q = grid_index(tau)?;
                Ok(y[q * h..(q + 1) * h].to_vec())
            }
            _ => Ok(y),
        }
    }

    /// Accumulates parameter gradients for an upstream gradient on the raw
    /// output; returns the embedding gradient.
    pub fn backward(&mut self, cache: &HeadCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.output_len() {
            return Err(Error::shape("head upstream gradient", &[self.output_len()], &[upstream.len()]));
        }
        match (self, cache) {
            (Head::Dln(d), HeadCache::Dln(c)) => Ok(d.backward(c, upstream)),
            (Head::Linear(a), HeadCache::Input(x)) => {
                let mut dx = a.backward(x, upstream);
                dx.pop();
                Ok(dx)
            }
            (Head::ConstrainedLinear(c), HeadCache::ConstrainedLinear { tau, embedding }) => {
                Ok(c.backward(&[*tau], embedding, upstream).1)
            }
            (Head::Mlp(m), HeadCache::Mlp { input, activation }) => {
                let da = m.output.backward(activation, upstream);
                let dz: Vec<f64> = da
                    .iter()
                    .zip(activation)
                    .map(|(g, &a)| if a > 0.0 { *g } else { 0.0 })
                    .collect();
                let mut dx = m.hidden.backward(input, &dz);
                dx.pop();
                Ok(dx)
            }
            (Head::FixedQuantile(a) | Head::Point(a), HeadCache::Input(x)) => Ok(a.backward(x, upstream)),
            (head, _) => Err(Error::InvalidArgument(format!(
                "cache does not belong to a {} head",
                head.kind()
            ))),
        }
    }

    pub fn as_dln(&self) -> Option<&DlnHead> {
        match self {
            Head::Dln(d) => Some(d),
            _ => None,
        }
    }
}

/// MLP head forward at `tau`.
pub fn mlp_forward(head: &Head, embedding: &[f64], tau: f64) -> Result<Vec<f64>> {
    match head {
        Head::Mlp(_) => head.predict(embedding, tau),
        other => Err(Error::InvalidArgument(format!("expected an mlp head, got {}", other.kind()))),
    }
}

/// Linear or constrained-linear head forward at `tau`; `constrained`
/// must match the head.
pub fn linear_forward(head: &Head, embedding: &[f64], tau: f64, constrained: bool) -> Result<Vec<f64>> {
    match (head, constrained) {
        (Head::Linear(_), false) | (Head::ConstrainedLinear(_), true) => head.predict(embedding, tau),
        (other, _) => Err(Error::InvalidArgument(format!(
            "{} head does not match constrained={constrained}",
            other.kind()
        ))),
    }
}

/// All grid quantiles from the fixed-quantile head as an `11 x h` row-major
/// array.
pub fn fixed_qr_forward(head: &Head, embedding: &[f64]) -> Result<Vec<f64>> {
    match head {
        Head::FixedQuantile(a) => a.forward(embedding),
        other => Err(Error::InvalidArgument(format!("expected a fixed-quantile head, got {}", other.kind()))),
    }
}

pub fn point_forward(head: &Head, embedding: &[f64]) -> Result<Vec<f64>> {
    match head {
        Head::Point(a) => a.forward(embedding),
        other => Err(Error::InvalidArgument(format!("expected a point head, got {}", other.kind()))),
    }
}
