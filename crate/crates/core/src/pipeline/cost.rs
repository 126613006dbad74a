//! Per-face extraction cost model. A multiply-add counts as two flops.
//!
//! * filtering, `O(P w h)`: one Gaussian-derivative tap pass per channel
//!   and pixel;
//! * pooling, `O(P Q w h)` bounded through summed-area tables: two tables
//!   per channel (`sum L`, `sum |L|`) plus four lookups per table, cell and
//!   channel for every patch;
//! * projection, `O(Q d p)`: one `d x p` matrix-vector product per patch;
//! * normalisation, `O(Q d)`: two L2 passes and a clip per descriptor.

use crate::pooling::PoolingKind;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    /// Active channels `P`.
    pub channels: usize,
    /// Active patches `Q`.
    pub patches: usize,
    /// Descriptor dimension `d`.
    pub descriptor_dim: usize,
    /// Mean projected dimension `p`.
    pub projected_dim: usize,
    pub width: usize,
    pub height: usize,
}

impl CostParams {
    /// `d` follows from the channel count under `kind`.
    pub fn new(channels: usize, patches: usize, kind: PoolingKind, projected_dim: usize, width: usize, height: usize) -> Self {
        CostParams {
            channels,
            patches,
            descriptor_dim: kind.descriptor_dim(channels),
            projected_dim,
            width,
            height,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub filter_flops: f64,
    pub pooling_flops: f64,
    pub projection_flops: f64,
    pub normalization_flops: f64,
    pub total_flops: f64,
    /// `Q d p`.
    pub projection_entries: f64,
    pub projection_bytes_f32: f64,
    /// One byte per entry plus an f32 scale and offset per column.
    pub projection_bytes_quantized: f64,
}

/// Flops and projection storage for extracting one face.
pub fn estimate_cost(p: &CostParams) -> CostReport {
    let (ch, q, d, pd) = (p.channels as f64, p.patches as f64, p.descriptor_dim as f64, p.projected_dim as f64);
    let pixels = (p.width * p.height) as f64;
    let filter_flops = 2.0 * ch * pixels;
    let tables = 2.0 * 2.0 * ch * pixels;
    let lookups = q * ch * 16.0 * 2.0 * 4.0;
    let pooling_flops = if ch == 0.0 { 0.0 } else { tables + lookups };
    let projection_flops = 2.0 * q * d * pd;
    let normalization_flops = 3.0 * q * d;
    let entries = q * d * pd;
    CostReport {
        filter_flops,
        pooling_flops,
        projection_flops,
        normalization_flops,
        total_flops: filter_flops + pooling_flops + projection_flops + normalization_flops,
        projection_entries: entries,
        projection_bytes_f32: 4.0 * entries,
        projection_bytes_quantized: entries + 8.0 * q * pd,
    }
}

impl CostReport {
    pub fn to_text(&self) -> String {
        format!(
            "filter_flops={:.0}\npooling_flops={:.0}\nprojection_flops={:.0}\nnormalization_flops={:.0}\ntotal_flops={:.0}\nprojection_entries={:.0}\nprojection_bytes_f32={:.0}\nprojection_bytes_quantized={:.0}\n",
            self.filter_flops,
            self.pooling_flops,
            self.projection_flops,
            self.normalization_flops,
            self.total_flops,
            self.projection_entries,
            self.projection_bytes_f32,
            self.projection_bytes_quantized
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_budget() {
        let r = estimate_cost(&CostParams::new(4, 240, PoolingKind::T2, 100, 128, 128));
        assert_eq!(r.projection_entries, 3_072_000.0);
        assert!(r.total_flops > 2.5e6 && r.total_flops < 1e7, "{}", r.total_flops);
        assert!((r.projection_bytes_quantized / 3e6 - 1.0).abs() < 0.1);
    }

    #[test]
    fn no_channels_no_filtering() {
        let r = estimate_cost(&CostParams::new(0, 240, PoolingKind::T2, 100, 128, 128));
        assert_eq!(r.filter_flops, 0.0);
        assert_eq!(r.pooling_flops, 0.0);
    }
}
