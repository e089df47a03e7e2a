//! Integer FLOPS, multiplication and parameter counts per layer.
//!
//! Conventions, for one inference (batch size 1):
//!
//! | layer   | flops                                  | multiplications        |
//! |---------|----------------------------------------|------------------------|
//! | conv    | `out·2·kt·kf·in_c + out` (bias adds)   | `out·kt·kf·in_c`       |
//! | dense   | `2·in·out + out`                       | `in·out`               |
//! | maxpool | `window − 1` comparisons per output    | 0                      |
//! | relu    | 1 per element                          | 0                      |
//! | dropout, slice, concat | 0                       | 0                      |
//!
//! where `out` is the number of output elements. A multiply-add is two FLOPS.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Graph, Op};
use crate::subband::ModelSpec;
use crate::tensor::Shape;

pub const CSV_SCHEMA: &str = "# subband-cnn flops-report v1";
pub const CSV_HEADER: &str = "layer,name,flops,mult,params";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub layer: &'static str,
    pub name: String,
    pub flops: u64,
    pub multiplications: u64,
    pub parameters: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Totals {
    pub flops: u64,
    pub multiplications: u64,
    pub parameters: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopsReport {
    pub input_shape: Shape,
    pub per_layer: Vec<LayerCost>,
    pub totals: Totals,
}

impl FlopsReport {
    pub fn layer(&self, name: &str) -> Option<&LayerCost> {
        self.per_layer.iter().find(|l| l.name == name)
    }

    /// Sum over layers of one kind, e.g. `"conv2d"`.
    pub fn kind_totals(&self, layer: &str) -> Totals {
        self.per_layer.iter().filter(|l| l.layer == layer).fold(Totals::default(), |acc, l| Totals {
            flops: acc.flops + l.flops,
            multiplications: acc.multiplications + l.multiplications,
            parameters: acc.parameters + l.parameters,
        })
    }

    /// CSV with a schema comment, a header, one row per layer and a `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_SCHEMA}\n{CSV_HEADER}\n");
        for l in &self.per_layer {
            let _ = writeln!(out, "{},{},{},{},{}", l.layer, l.name, l.flops, l.multiplications, l.parameters);
        }
        let t = self.totals;
        let _ = writeln!(out, "total,total,{},{},{}", t.flops, t.multiplications, t.parameters);
        out
    }

    /// TOML rendering of the whole report.
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

fn u(v: usize) -> u64 {
    v as u64
}

pub fn count_graph_flops(graph: &Graph) -> FlopsReport {
    let nodes = graph.nodes();
    let mut per_layer = Vec::new();
    for node in nodes {
        let out = u(node.shape.sample_len());
        let (layer, flops, mult, params) = match &node.op {
            Op::Input => continue,
            Op::SliceFeature { .. } => ("slice", 0, 0, 0),
            Op::Concat { .. } => ("concat", 0, 0, 0),
            Op::Dropout { .. } => ("dropout", 0, 0, 0),
            Op::Relu => ("relu", out, 0, 0),
            Op::MaxPool { window, .. } => ("maxpool", out * u(window.0 * window.1 - 1), 0, 0),
            Op::Conv { layer } => {
                let l = &graph.conv_layers()[*layer];
                let taps = u(l.kernel.0 * l.kernel.1 * l.in_channels);
                let mult = out * taps;
                let params = taps * u(l.out_channels) + u(l.out_channels);
                ("conv2d", 2 * mult + out, mult, params)
            }
            Op::Dense { layer } => {
                let l = &graph.dense_layers()[*layer];
                let mult = u(l.in_features * l.out_features);
                ("dense", 2 * mult + u(l.out_features), mult, mult + u(l.out_features))
            }
        };
        per_layer.push(LayerCost {
            layer,
            name: node.name.clone(),
            flops,
            multiplications: mult,
            parameters: params,
        });
    }
    let totals = per_layer.iter().fold(Totals::default(), |acc, l| Totals {
        flops: acc.flops + l.flops,
        multiplications: acc.multiplications + l.multiplications,
        parameters: acc.parameters + l.parameters,
    });
    FlopsReport {
        input_shape: graph.input_shape(),
        per_layer,
        totals,
    }
}

pub fn count_flops(spec: &ModelSpec) -> FlopsReport {
    count_graph_flops(spec.graph())
}

pub fn multiplications_total(spec: &ModelSpec) -> u64 {
    count_flops(spec).totals.multiplications
}

/// `100·(1 − flops(b)/flops(a))`: positive when `b` is cheaper than `a`.
pub fn flops_reduction(a: &ModelSpec, b: &ModelSpec) -> Result<f64> {
    let ra = count_flops(a);
    let rb = count_flops(b);
    if ra.input_shape != rb.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "models take different inputs: {:?} vs {:?}",
            ra.input_shape.dims(),
            rb.input_shape.dims()
        )));
    }
    if ra.totals.flops == 0 {
        return Err(Error::InvalidParameter("reference model has zero FLOPS".into()));
    }
    Ok(100.0 * (1.0 - rb.totals.flops as f64 / ra.totals.flops as f64))
}
