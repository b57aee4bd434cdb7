use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    #[default]
    Gcn,
    GraphSage,
}

impl GnnKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gcn" => Some(Self::Gcn),
            "graphsage" => Some(Self::GraphSage),
            _ => None,
        }
    }
}

/// Architecture of an [`MsfCnnModel`](super::MsfCnnModel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsfCnnConfig {
    pub in_channels: usize,
    /// Square input side length.
    pub image_size: usize,
    /// Output channels of the four convolutions.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Zero-based indices of the convolutions followed by 2×2 max pooling.
    pub pool_positions: Vec<usize>,
    /// Number of stage outputs fused, deepest first.
    pub scales: usize,
    /// One weight per scale, deepest first.
    pub fusion_weights: Vec<f64>,
    /// Pyramid pooling bin counts; empty disables pyramid pooling.
    pub ppm_levels: Vec<usize>,
    pub gnn_kind: GnnKind,
    pub gnn_layers: usize,
    pub gnn_hidden: usize,
    /// Neighbors sampled per node by GraphSage layers.
    pub sage_sample_size: usize,
    pub knn_k: usize,
    pub classes: usize,
}

impl Default for MsfCnnConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            image_size: 32,
            conv_channels: vec![8; 4],
            kernel: 3,
            pool_positions: vec![1, 3],
            scales: 2,
            fusion_weights: vec![0.6, 0.4],
            ppm_levels: vec![1, 2],
            gnn_kind: GnnKind::Gcn,
            gnn_layers: 2,
            gnn_hidden: 16,
            sage_sample_size: 5,
            knn_k: 4,
            classes: 2,
        }
    }
}

pub(crate) const CONV_LAYERS: usize = 4;
pub(crate) const POOL_LAYERS: usize = 2;
pub(crate) const POOL_WINDOW: usize = 2;

impl MsfCnnConfig {
    /// The single-scale baseline: same network without fusion.
    pub fn plain(&self) -> Self {
        Self {
            scales: 1,
            fusion_weights: vec![1.0],
            ..self.clone()
        }
    }

    /// Stage indices tapped for fusion, deepest first.
    pub fn tap_stages(&self) -> Vec<usize> {
        (0..self.scales).map(|j| CONV_LAYERS - 1 - j * CONV_LAYERS / self.scales).collect()
    }

    /// Spatial side length after each stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut size = self.image_size;
        (0..CONV_LAYERS)
            .map(|i| {
                if self.pool_positions.contains(&i) {
                    size /= POOL_WINDOW;
                }
                size
            })
            .collect()
    }

    pub fn fused_channels(&self) -> usize {
        self.conv_channels[CONV_LAYERS - 1]
    }

    /// Width of the per-image feature row fed to the graph layers.
    pub fn feature_dim(&self) -> usize {
        self.fused_channels() * (1 + self.ppm_levels.len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.in_channels == 0 {
            return bad("in_channels", "must be positive".into());
        }
        if self.conv_channels.len() != CONV_LAYERS || self.conv_channels.contains(&0) {
            return bad("conv_channels", format!("need {CONV_LAYERS} positive counts"));
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel", "must be odd".into());
        }
        let mut pools = self.pool_positions.clone();
        pools.sort_unstable();
        pools.dedup();
        if pools.len() != POOL_LAYERS || pools.iter().any(|&p| p >= CONV_LAYERS) {
            return bad(
                "pool_positions",
                format!("need {POOL_LAYERS} distinct indices below {CONV_LAYERS}"),
            );
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(POOL_WINDOW.pow(POOL_LAYERS as u32)) {
            return bad("image_size", format!("must be a positive multiple of {}", POOL_WINDOW.pow(2)));
        }
        if self.scales == 0 || self.scales > CONV_LAYERS {
            return bad("scales", format!("must be between 1 and {CONV_LAYERS}"));
        }
        if self.fusion_weights.len() != self.scales {
            return bad("fusion_weights", format!("need one weight per scale ({})", self.scales));
        }
        if self.fusion_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (self.fusion_weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return bad("fusion_weights", "must be non-negative and sum to 1".into());
        }
        let taps = self.tap_stages();
        let c = self.conv_channels[taps[0]];
        if taps.iter().any(|&t| self.conv_channels[t] != c) {
            return bad("conv_channels", "fused stages must have equal channel counts".into());
        }
        let sizes = self.stage_sizes();
        let largest = taps.iter().map(|&t| sizes[t]).max().unwrap_or(0);
        if taps.iter().any(|&t| largest % sizes[t] != 0) {
            return bad("pool_positions", "fused stage sizes must divide each other".into());
        }
        if self.ppm_levels.contains(&0) {
            return bad("ppm_levels", "levels must be positive".into());
        }
        if self.gnn_layers == 0 {
            return bad("gnn_layers", "must be at least 1".into());
        }
        if self.gnn_hidden == 0 {
            return bad("gnn_hidden", "must be positive".into());
        }
        if self.sage_sample_size == 0 {
            return bad("sage_sample_size", "must be positive".into());
        }
        if self.knn_k == 0 {
            return bad("knn_k", "must be positive".into());
        }
        if self.classes < 2 {
            return bad("classes", "need at least two classes".into());
        }
        Ok(())
    }
}
