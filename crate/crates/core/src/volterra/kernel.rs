use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Grid, Result, VolterraError};

pub const DEFAULT_KERNEL_FLOOR: f64 = 1e-6;
pub const DEFAULT_CELL_FLOOR: f64 = 1e-8;

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Surface = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Boundaries `α_1(t) < … < α_{n-1}(t)` splitting `[0, t]` into `n` bands.
#[derive(Clone)]
pub enum AlphaPartition {
    /// `α_i(t) = c_i · t` with `0 < c_1 < … < c_{n-1} < 1`.
    Proportional(Vec<f64>),
    /// Boundary values tabulated on increasing times, interpolated linearly.
    Tabulated { t: Vec<f64>, values: Vec<Vec<f64>> },
    Custom(Vec<Curve>),
}

impl fmt::Debug for AlphaPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Proportional(c) => f.debug_tuple("Proportional").field(c).finish(),
            Self::Tabulated { t, values } => f
                .debug_struct("Tabulated")
                .field("t", t)
                .field("values", values)
                .finish(),
            Self::Custom(curves) => write!(f, "Custom({} curves)", curves.len()),
        }
    }
}

impl AlphaPartition {
    /// A single band covering `[0, t]`.
    pub fn single() -> Self {
        Self::Proportional(Vec::new())
    }

    pub fn proportional(coefficients: Vec<f64>) -> Result<Self> {
        let mut prev = 0.0;
        for &c in &coefficients {
            if !(c > prev && c < 1.0) {
                return Err(VolterraError::InvalidPartition(format!(
                    "proportional coefficients must satisfy 0 < c_1 < … < c_(n-1) < 1, got {coefficients:?}"
                )));
            }
            prev = c;
        }
        Ok(Self::Proportional(coefficients))
    }

    pub fn tabulated(t: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if t.len() < 2 || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(VolterraError::InvalidPartition(
                "tabulated times must be strictly increasing with at least two entries".into(),
            ));
        }
        if values.iter().any(|v| v.len() != t.len()) {
            return Err(VolterraError::InvalidPartition(
                "every tabulated boundary needs one value per time".into(),
            ));
        }
        Ok(Self::Tabulated { t, values })
    }

    /// Number of bands `n`.
    pub fn segments(&self) -> usize {
        1 + match self {
            Self::Proportional(c) => c.len(),
            Self::Tabulated { values, .. } => values.len(),
            Self::Custom(curves) => curves.len(),
        }
    }

    /// Boundary values `α_1(t) … α_{n-1}(t)`; `None` if `t` lies outside a
    /// tabulated range.
    pub fn boundaries(&self, t: f64) -> Option<Vec<f64>> {
        match self {
            Self::Proportional(c) => Some(c.iter().map(|c| c * t).collect()),
            Self::Custom(curves) => Some(curves.iter().map(|a| a(t)).collect()),
            Self::Tabulated { t: times, values } => {
                let last = *times.last()?;
                let span = last - times[0];
                let slack = 1e-12 * span.max(1.0);
                if t < times[0] - slack || t > last + slack {
                    return None;
                }
                let t = t.clamp(times[0], last);
                let k = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                Some(
                    values
                        .iter()
                        .map(|v| v[k - 1] + w * (v[k] - v[k - 1]))
                        .collect(),
                )
            }
        }
    }

    /// Checks `0 < α_1(t) < … < α_{n-1}(t) < t` at node `node`.
    pub(crate) fn check_at(&self, node: usize, t: f64) -> Result<Vec<f64>> {
        let bounds = self.boundaries(t).ok_or_else(|| VolterraError::PartitionAtNode {
            node,
            t,
            message: "outside the tabulated range".into(),
        })?;
        let mut prev = 0.0;
        for (i, &b) in bounds.iter().enumerate() {
            if !(b > prev) {
                return Err(VolterraError::PartitionAtNode {
                    node,
                    t,
                    message: format!("alpha_{} = {b} is not above {prev}", i + 1),
                });
            }
            prev = b;
        }
        if !(prev < t) && !bounds.is_empty() {
            return Err(VolterraError::PartitionAtNode {
                node,
                t,
                message: format!("alpha_{} = {prev} is not below t", bounds.len()),
            });
        }
        Ok(bounds)
    }
}

/// Efficiency factor `K_i(t, s)`.
#[derive(Clone)]
pub enum KernelFn {
    Const(f64),
    /// `value · exp(-rate · (t - s))`: efficiency fading with the age of the
    /// energy stored at time `s`.
    Decay { value: f64, rate: f64 },
    Custom(Surface),
}

impl fmt::Debug for KernelFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(v) => f.debug_tuple("Const").field(v).finish(),
            Self::Decay { value, rate } => f
                .debug_struct("Decay")
                .field("value", value)
                .field("rate", rate)
                .finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl KernelFn {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            Self::Const(v) => *v,
            Self::Decay { value, rate } => value * (-rate * (t - s)).exp(),
            Self::Custom(f) => f(t, s),
        }
    }
}

/// Response `G_i(s, x)` of a storage to the power `x`.
#[derive(Clone)]
pub enum Response {
    /// `G(s, x) = x`.
    Linear,
    /// `G(s, x) = a·x + b·x³`.
    Cubic { a: f64, b: f64 },
    Custom(Surface),
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => f.write_str("Linear"),
            Self::Cubic { a, b } => f.debug_struct("Cubic").field("a", a).field("b", b).finish(),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Response {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, s: f64, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Cubic { a, b } => a * x + b * x * x * x,
            Self::Custom(g) => g(s, x),
        }
    }

    pub fn derivative(&self, s: f64, x: f64) -> f64 {
        match self {
            Self::Linear => 1.0,
            Self::Cubic { a, b } => a + 3.0 * b * x * x,
            Self::Custom(g) => {
                let dx = 1e-7 * x.abs().max(1.0);
                (g(s, x + dx) - g(s, x - dx)) / (2.0 * dx)
            }
        }
    }

    /// Slope when `G` is linear in `x`.
    pub fn linear_slope(&self) -> Option<f64> {
        match self {
            Self::Linear => Some(1.0),
            Self::Cubic { a, b } if *b == 0.0 => Some(*a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub kernel: KernelFn,
    pub response: Response,
}

impl Segment {
    pub fn new(kernel: KernelFn, response: Response) -> Self {
        Self { kernel, response }
    }

    /// `K ≡ value`, `G = x`.
    pub fn constant(value: f64) -> Self {
        Self::new(KernelFn::Const(value), Response::Linear)
    }
}

/// Piecewise kernel: `n` segments and the partition separating them.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub partition: AlphaPartition,
    pub segments: Vec<Segment>,
    /// Lower bound on `|K_n(t, t)|`.
    pub kernel_floor: f64,
    /// Lower bound on the last cell width, as a fraction of `h`.
    pub cell_floor: f64,
}

impl KernelSpec {
    pub fn new(partition: AlphaPartition, segments: Vec<Segment>) -> Result<Self> {
        if segments.len() != partition.segments() {
            return Err(VolterraError::Config(format!(
                "partition has {} bands but {} segments were given",
                partition.segments(),
                segments.len()
            )));
        }
        Ok(Self {
            partition,
            segments,
            kernel_floor: DEFAULT_KERNEL_FLOOR,
            cell_floor: DEFAULT_CELL_FLOOR,
        })
    }

    /// One storage with `K ≡ efficiency`, `G = x`.
    pub fn single_constant(efficiency: f64) -> Self {
        Self::new(AlphaPartition::single(), vec![Segment::constant(efficiency)])
            .expect("one band, one segment")
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn last(&self) -> &Segment {
        self.segments.last().expect("kernel has at least one segment")
    }

    pub fn is_linear(&self) -> bool {
        self.segments.iter().all(|s| s.response.linear_slope().is_some())
    }

    /// Grid-wide checks: `α_i(0) = 0` and `|K_n(t_j, t_j)| ≥ kernel_floor`.
    pub(crate) fn validate(&self, grid: &Grid) -> Result<()> {
        if self.segments.is_empty() {
            return Err(VolterraError::Config("kernel needs at least one segment".into()));
        }
        let scale = 1e-12 * grid.horizon().max(1.0);
        if let Some(at_zero) = self.partition.boundaries(0.0) {
            if let Some(a) = at_zero.iter().find(|a| a.abs() > scale) {
                return Err(VolterraError::PartitionAtNode {
                    node: 0,
                    t: 0.0,
                    message: format!("alpha(0) = {a}, expected 0"),
                });
            }
        } else {
            return Err(VolterraError::PartitionAtNode {
                node: 0,
                t: 0.0,
                message: "outside the tabulated range".into(),
            });
        }
        let last = &self.last().kernel;
        for j in 0..=grid.intervals() {
            let t = grid.node(j);
            let value = last.eval(t, t);
            if !(value.abs() >= self.kernel_floor) {
                return Err(VolterraError::KernelFloor {
                    node: j,
                    t,
                    value,
                    floor: self.kernel_floor,
                });
            }
        }
        Ok(())
    }

    pub fn from_config(config: &KernelConfig) -> Result<Self> {
        let n = config.n;
        if n == 0 {
            return Err(VolterraError::Config("n must be at least 1".into()));
        }
        let partition = match &config.alphas {
            None if n == 1 => AlphaPartition::single(),
            None => {
                return Err(VolterraError::Config(format!(
                    "n = {n} requires an `alphas` entry"
                )))
            }
            Some(AlphaConfig::Proportional { c }) => AlphaPartition::proportional(c.clone())?,
            Some(AlphaConfig::Tabulated { t, values }) => {
                AlphaPartition::tabulated(t.clone(), values.clone())?
            }
        };
        if partition.segments() != n {
            return Err(VolterraError::Config(format!(
                "n = {n} but alphas describe {} bands",
                partition.segments()
            )));
        }
        if config.kernels.len() != n {
            return Err(VolterraError::Config(format!(
                "expected {n} K entries, got {}",
                config.kernels.len()
            )));
        }
        let responses: Vec<Response> = match config.responses.len() {
            0 => vec![Response::Linear; n],
            len if len == n => config.responses.iter().map(ResponseConfig::build).collect(),
            len => {
                return Err(VolterraError::Config(format!(
                    "expected {n} G entries, got {len}"
                )))
            }
        };
        let segments = config
            .kernels
            .iter()
            .map(KernelFnConfig::build)
            .zip(responses)
            .map(|(k, g)| Segment::new(k, g))
            .collect();
        let mut spec = Self::new(partition, segments)?;
        if let Some(floor) = config.kernel_floor {
            spec.kernel_floor = floor;
        }
        if let Some(floor) = config.cell_floor {
            spec.cell_floor = floor;
        }
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: KernelConfig = serde_json::from_str(text)?;
        Self::from_config(&config)
    }
}

/// JSON form of a kernel, e.g.
/// `{"n":2,"alphas":{"type":"proportional","c":[0.5]},"K":[{"type":"const","value":0.92},{"type":"const","value":0.92}],"G":[{"type":"linear"},{"type":"cubic","a":1.0,"b":0.1}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<AlphaConfig>,
    #[serde(rename = "K")]
    pub kernels: Vec<KernelFnConfig>,
    #[serde(rename = "G", default)]
    pub responses: Vec<ResponseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AlphaConfig {
    Proportional { c: Vec<f64> },
    Tabulated { t: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelFnConfig {
    Const { value: f64 },
    Decay { value: f64, rate: f64 },
}

impl KernelFnConfig {
    fn build(&self) -> KernelFn {
        match *self {
            Self::Const { value } => KernelFn::Const(value),
            Self::Decay { value, rate } => KernelFn::Decay { value, rate },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ResponseConfig {
    Linear,
    Cubic { a: f64, b: f64 },
}

impl ResponseConfig {
    fn build(&self) -> Response {
        match *self {
            Self::Linear => Response::Linear,
            Self::Cubic { a, b } => Response::Cubic { a, b },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_requires_increasing_fractions() {
        assert!(AlphaPartition::proportional(vec![0.3, 0.6]).is_ok());
        assert!(AlphaPartition::proportional(vec![0.6, 0.3]).is_err());
        assert!(AlphaPartition::proportional(vec![0.0]).is_err());
        assert!(AlphaPartition::proportional(vec![1.0]).is_err());
    }

    #[test]
    fn tabulated_interpolates_linearly() {
        let p = AlphaPartition::tabulated(vec![0.0, 1.0, 2.0], vec![vec![0.0, 0.5, 0.5]]).unwrap();
        assert_eq!(p.boundaries(0.5).unwrap(), vec![0.25]);
        assert_eq!(p.boundaries(1.5).unwrap(), vec![0.5]);
        assert_eq!(p.boundaries(2.0).unwrap(), vec![0.5]);
        assert!(p.boundaries(2.5).is_none());
    }

    #[test]
    fn check_at_flags_crossing_boundaries() {
        let p = AlphaPartition::Custom(vec![Arc::new(|t| 1.5 * t)]);
        let err = p.check_at(3, 0.3).unwrap_err();
        assert!(err.to_string().contains("node 3"), "{err}");
        let p = AlphaPartition::Custom(vec![Arc::new(|t| 0.6 * t), Arc::new(|t| 0.4 * t)]);
        assert!(p.check_at(1, 1.0).is_err());
    }

    #[test]
    fn parses_documented_json() {
        let text = r#"{"n":2, "alphas":{"type":"proportional","c":[0.5]},
            "K":[{"type":"const","value":0.92},{"type":"const","value":0.92}],
            "G":[{"type":"linear"},{"type":"cubic","a":1.0,"b":0.1}]}"#;
        let k = KernelSpec::from_json(text).unwrap();
        assert_eq!(k.segment_count(), 2);
        assert!(!k.is_linear());
        assert_eq!(k.last().response.eval(0.0, 2.0), 2.8);
        assert_eq!(k.segments[0].kernel.eval(5.0, 1.0), 0.92);

        let single = KernelSpec::from_json(r#"{"n":1,"K":[{"type":"const","value":0.92}]}"#).unwrap();
        assert!(single.is_linear());
    }

    #[test]
    fn config_errors() {
        assert!(KernelSpec::from_json(r#"{"n":2,"K":[{"type":"const","value":1}]}"#).is_err());
        assert!(KernelSpec::from_json(
            r#"{"n":2,"alphas":{"type":"proportional","c":[0.5]},"K":[{"type":"const","value":1}]}"#
        )
        .is_err());
        assert!(KernelSpec::from_json(r#"{"n":1,"K":[{"type":"poly"}]}"#).is_err());
    }

    #[test]
    fn kernel_floor_is_checked_on_every_node() {
        let grid = Grid::new(1.0, 10).unwrap();
        let k = KernelSpec::new(
            AlphaPartition::single(),
            vec![Segment::new(KernelFn::custom(|t, _| 1.0 - t), Response::Linear)],
        )
        .unwrap();
        let err = k.validate(&grid).unwrap_err();
        assert!(matches!(err, VolterraError::KernelFloor { node: 10, .. }));
    }

    #[test]
    fn cubic_derivative() {
        let g = Response::Cubic { a: 1.0, b: 0.1 };
        assert!((g.derivative(0.0, 2.0) - 2.2).abs() < 1e-15);
        let custom = Response::custom(|_, x| x + 0.1 * x * x * x);
        assert!((custom.derivative(0.0, 2.0) - 2.2).abs() < 1e-6);
        assert_eq!(g.linear_slope(), None);
        assert_eq!(Response::Cubic { a: 2.0, b: 0.0 }.linear_slope(), Some(2.0));
    }
}
