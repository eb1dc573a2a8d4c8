//! Declarative experiment plans (JSON, versioned).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// Free streaming, no interaction.
    Free,
    /// Newtonian pair kernel of `A(q) = amplitude exp(-|q|^2 / width^2)`.
    GaussianBump { amplitude: f64, width: f64 },
}

impl KernelSpec {
    pub fn arity(&self) -> usize {
        2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Product Gaussian on phase space `(q, p)`, coordinates in that order.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Dictionary lower estimate of `d_BL(mu_N^{X(t)}, f_t)`, averaged over reps.
    DblLower,
    /// Transport/smoothing upper estimate of the same distance.
    DblUpper,
    /// `||^1F_t - f_t||_1` on the shared histogram, reps pooled.
    L1Marginal1,
    /// `L1Marginal1` minus its multinomial fluctuation floor.
    L1Marginal1Excess,
    /// `||^2F_t - (^1F_t)^{⊗2}||_1` on the pair histogram, reps pooled.
    L1Chaos2,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::DblLower => "dbl_lower",
            MetricKind::DblUpper => "dbl_upper",
            MetricKind::L1Marginal1 => "l1_marginal1",
            MetricKind::L1Marginal1Excess => "l1_marginal1_excess",
            MetricKind::L1Chaos2 => "l1_chaos2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            MetricKind::DblLower,
            MetricKind::DblUpper,
            MetricKind::L1Marginal1,
            MetricKind::L1Marginal1Excess,
            MetricKind::L1Chaos2,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }

    pub fn needs_reference(self) -> bool {
        !matches!(self, MetricKind::L1Chaos2)
    }

    pub fn needs_grid_reference(self) -> bool {
        matches!(self, MetricKind::L1Marginal1 | MetricKind::L1Marginal1Excess)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Psi,
    #[default]
    Rk4,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationSpec {
    #[default]
    Binomial,
    SelfInclusive,
}

/// Mean-field reference `f_t`: Picard grid in 1+1 dimensions, weighted cloud in 3+3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub half_width: f64,
    pub cells: usize,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Cloud size of the 3+3 reference.
    pub atoms: usize,
    /// Partner draws per cloud force evaluation; at `>= atoms` the force is
    /// summed exactly and the Picard iteration is free of sampling noise.
    pub quadrature_samples: usize,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            half_width: 6.0,
            cells: 192,
            dt: 0.05,
            tol: 1e-6,
            max_iter: 12,
            atoms: 1000,
            quadrature_samples: 1000,
        }
    }
}

/// Shared histograms for the marginal metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramSpec {
    /// Bin width per axis of the one-particle histogram.
    pub width: f64,
    pub half_width: f64,
    /// Bin width per axis of the two-particle histogram.
    pub pair_width: f64,
    pub pair_half_width: f64,
    /// Ordered tuples per run above which subsets are sampled.
    pub cap: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            width: 0.25,
            half_width: 6.0,
            pair_width: 1.0,
            pair_half_width: 4.0,
            cap: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub schema_version: u32,
    pub kernel: KernelSpec,
    pub initial: InitialSpec,
    /// Spatial dimension `D` (phase space is `2D`-dimensional): 1 or 3.
    pub space_dim: usize,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub times: Vec<f64>,
    pub dt: f64,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub normalization: NormalizationSpec,
    pub metrics: Vec<MetricKind>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub histograms: HistogramSpec,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Plan(msg.into()))
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Plan(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialize")
    }

    /// SHA-256 of the canonical JSON with `out_dir` removed, hex encoded.
    pub fn hash(&self) -> String {
        let mut p = self.clone();
        p.out_dir = None;
        let bytes = serde_json::to_vec(&p).expect("plans serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn t_max(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !matches!(self.space_dim, 1 | 3) {
            return invalid("space_dim must be 1 or 3");
        }
        if self.n_grid.is_empty() {
            return invalid("n_grid must not be empty");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_grid must be strictly increasing");
        }
        if self.n_grid[0] < self.kernel.arity() {
            return invalid("every N must be at least the kernel arity");
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1");
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return invalid("times must be nonempty, positive and finite");
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("times must be strictly increasing");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid("dt must be positive and finite");
        }
        match &self.kernel {
            KernelSpec::Free => {}
            KernelSpec::GaussianBump { amplitude, width } => {
                if !(amplitude.is_finite() && width.is_finite() && *width > 0.0) {
                    return invalid("gaussian_bump needs a finite amplitude and a positive width");
                }
            }
        }
        match &self.initial {
            InitialSpec::Gaussian { mean, std } => {
                let d = 2 * self.space_dim;
                if mean.len() != d || std.len() != d {
                    return invalid(format!("initial mean and std need {d} entries"));
                }
                if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return invalid("initial mean must be finite and std positive");
                }
            }
        }
        let mut seen = self.metrics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.metrics.len() {
            return invalid("metrics must not repeat");
        }
        if self.space_dim != 1 && self.metrics.iter().any(|m| m.needs_grid_reference()) {
            return invalid("l1_marginal1 metrics need the grid reference (space_dim 1)");
        }
        let r = &self.reference;
        if !(r.half_width > 0.0 && r.cells >= 8 && r.dt > 0.0 && r.tol > 0.0 && r.max_iter >= 1) {
            return invalid("reference needs half_width > 0, cells >= 8, dt > 0, tol > 0, max_iter >= 1");
        }
        if r.atoms == 0 || r.quadrature_samples == 0 {
            return invalid("reference atoms and quadrature samples must be positive");
        }
        let h = &self.histograms;
        for (w, hw) in [(h.width, h.half_width), (h.pair_width, h.pair_half_width)] {
            if !(w > 0.0 && hw > 0.0 && w <= 2.0 * hw) {
                return invalid("histogram widths must be positive and fit the box");
            }
        }
        if h.cap == 0 {
            return invalid("histogram cap must be positive");
        }
        Ok(())
    }
}
