//! Declarative model specs for the three weight-sharing architectures.
//!
//! Every convolution block uses the same number of kernels `K`. Block order
//! in each tower is conv → ReLU → dropout, with a 2×2 max-pool after the
//! first block. Each band tower owns its weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Graph, GraphBuilder, NodeId};
use crate::subband::layout::{paper_layout, uniform_layout, BandLayout, PAPER_FEATURE_DIM};
use crate::tensor::{Axis, Shape};

pub const CONV1_KERNEL: (usize, usize) = (20, 8);
pub const CONV2_KERNEL: (usize, usize) = (10, 4);
pub const POOL: (usize, usize) = (2, 2);
pub const UNIT_STRIDE: (usize, usize) = (1, 1);
pub const NUM_CLASSES: usize = 12;
pub const PAPER_TIME_STEPS: usize = 98;
pub const PAPER_DROPOUT: f64 = 0.5;
pub const SPEC_SCHEMA: &str = "subband-cnn/model-spec/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Kernels slide over the whole feature axis.
    FullBand,
    /// Non-overlapped band towers next to a full-band tower.
    FullPlusNonoverlap,
    /// Overlapped bands with private first-layer kernels.
    OverlappedSubband,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Self::FullBand, Self::FullPlusNonoverlap, Self::OverlappedSubband];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FullBand => "full_band",
            Self::FullPlusNonoverlap => "full_plus_nonoverlap",
            Self::OverlappedSubband => "overlapped_subband",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_band" | "full" => Ok(Self::FullBand),
            "full_plus_nonoverlap" | "multiband" => Ok(Self::FullPlusNonoverlap),
            "overlapped_subband" | "overlapped" | "subband" => Ok(Self::OverlappedSubband),
            other => Err(Error::InvalidParameter(format!("unknown architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where band features are merged in the overlapped model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatVariant {
    /// Channel axis, after the first conv block.
    #[default]
    ConcatCConv1,
    /// Flattened, after a per-band second conv block.
    ConcatConv2,
    /// Feature axis, after the first conv block.
    ConcatFConv1,
}

impl ConcatVariant {
    pub const ALL: [ConcatVariant; 3] = [Self::ConcatCConv1, Self::ConcatConv2, Self::ConcatFConv1];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ConcatCConv1 => "concat_c_conv1",
            Self::ConcatConv2 => "concat_conv2",
            Self::ConcatFConv1 => "concat_f_conv1",
        }
    }
}

impl std::str::FromStr for ConcatVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat_c_conv1" | "concat-c@conv1" => Ok(Self::ConcatCConv1),
            "concat_conv2" | "concat@conv2" => Ok(Self::ConcatConv2),
            "concat_f_conv1" | "concat-f@conv1" => Ok(Self::ConcatFConv1),
            other => Err(Error::InvalidParameter(format!("unknown concat variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for ConcatVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub time: usize,
    pub feature: usize,
}

impl InputDims {
    pub const PAPER: InputDims = InputDims {
        time: PAPER_TIME_STEPS,
        feature: PAPER_FEATURE_DIM,
    };
}

/// A resolved architecture instance: its hyperparameters plus the layer graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub concat: ConcatVariant,
    pub k: usize,
    pub dropout: f64,
    pub layout: Option<BandLayout>,
    pub input: InputDims,
    pub num_classes: usize,
    graph: Graph,
}

/// Serialized form of [`ModelSpec`]; the graph is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpecDocument {
    schema: String,
    arch: Architecture,
    concat: ConcatVariant,
    k: usize,
    dropout: f64,
    num_classes: usize,
    input: InputDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bands: Option<Vec<[usize; 2]>>,
}

/// Builds a model over the 98×40 MFCC input.
pub fn build_model(
    arch: Architecture,
    k: usize,
    dropout: f64,
    layout: Option<BandLayout>,
    concat: ConcatVariant,
) -> Result<ModelSpec> {
    build_model_for(InputDims::PAPER, arch, k, dropout, layout, concat)
}

pub fn build_model_for(
    input: InputDims,
    arch: Architecture,
    k: usize,
    dropout: f64,
    layout: Option<BandLayout>,
    concat: ConcatVariant,
) -> Result<ModelSpec> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if input.time == 0 || input.feature == 0 {
        return Err(Error::InvalidParameter("input dimensions must be positive".into()));
    }
    let graph = match (arch, &layout) {
        (Architecture::FullBand, None) => {
            require_default_concat(arch, concat)?;
            full_band_graph(input, k, dropout)?
        }
        (Architecture::FullBand, Some(_)) => {
            return Err(Error::InconsistentSpec("the full band model takes no band layout".into()))
        }
        (_, None) => return Err(Error::InconsistentSpec(format!("{arch} needs a band layout"))),
        (_, Some(l)) if l.feature_dim() != input.feature => {
            return Err(Error::InconsistentSpec(format!(
                "layout spans {} bins but the input has {}",
                l.feature_dim(),
                input.feature
            )))
        }
        (Architecture::FullPlusNonoverlap, Some(l)) => {
            require_default_concat(arch, concat)?;
            if l.is_overlapping() {
                return Err(Error::InconsistentSpec(
                    "full_plus_nonoverlap needs a non-overlapping layout".into(),
                ));
            }
            warn_narrow_bands(l);
            full_plus_nonoverlap_graph(input, k, dropout, l)?
        }
        (Architecture::OverlappedSubband, Some(l)) => {
            warn_narrow_bands(l);
            overlapped_graph(input, k, dropout, l, concat)?
        }
    };
    Ok(ModelSpec {
        arch,
        concat,
        k,
        dropout,
        layout,
        input,
        num_classes: NUM_CLASSES,
        graph,
    })
}

fn require_default_concat(arch: Architecture, concat: ConcatVariant) -> Result<()> {
    if concat != ConcatVariant::default() {
        return Err(Error::InconsistentSpec(format!(
            "concat variant {concat} only applies to the overlapped sub-band model, not {arch}"
        )));
    }
    Ok(())
}

fn warn_narrow_bands(layout: &BandLayout) {
    for (i, b) in layout.bands().iter().enumerate() {
        if b.width() < CONV1_KERNEL.1 {
            log::warn!(
                "band {} is {} bins wide, narrower than the {}-bin conv1 kernel; SAME padding fills the rest",
                i + 1,
                b.width(),
                CONV1_KERNEL.1
            );
        }
    }
}

/// conv → ReLU → dropout, named `<prefix>conv<n>` etc.
fn conv_block(b: &mut GraphBuilder, prefix: &str, n: usize, x: NodeId, kernel: (usize, usize), k: usize, p: f64) -> Result<NodeId> {
    let c = b.conv(&format!("{prefix}conv{n}"), x, kernel, UNIT_STRIDE, k)?;
    let r = b.relu(&format!("{prefix}relu{n}"), c)?;
    b.dropout(&format!("{prefix}dropout{n}"), r, p)
}

/// Slice (when banded) → conv1 block → pool1; returns the pooled node.
fn first_stage(b: &mut GraphBuilder, prefix: &str, x: NodeId, k: usize, p: f64) -> Result<NodeId> {
    let d = conv_block(b, prefix, 1, x, CONV1_KERNEL, k, p)?;
    b.maxpool(&format!("{prefix}pool1"), d, POOL, POOL)
}

fn band_inputs(b: &mut GraphBuilder, x: NodeId, layout: &BandLayout) -> Result<Vec<(String, NodeId)>> {
    layout
        .bands()
        .iter()
        .enumerate()
        .map(|(i, band)| {
            let prefix = format!("band{}/", i + 1);
            let s = b.slice_feature(&format!("{prefix}slice"), x, band.lo, band.hi)?;
            Ok((prefix, s))
        })
        .collect()
}

fn full_band_graph(input: InputDims, k: usize, p: f64) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let x = b.input(input.time, input.feature, 1)?;
    let pooled = first_stage(&mut b, "", x, k, p)?;
    let d2 = conv_block(&mut b, "", 2, pooled, CONV2_KERNEL, k, p)?;
    let out = b.dense("dense", &[d2], NUM_CLASSES)?;
    b.finish(out)
}

fn overlapped_graph(input: InputDims, k: usize, p: f64, layout: &BandLayout, concat: ConcatVariant) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let x = b.input(input.time, input.feature, 1)?;
    let mut pooled = Vec::new();
    for (prefix, s) in band_inputs(&mut b, x, layout)? {
        pooled.push((prefix.clone(), first_stage(&mut b, &prefix, s, k, p)?));
    }
    let out = match concat {
        ConcatVariant::ConcatCConv1 | ConcatVariant::ConcatFConv1 => {
            let axis = if concat == ConcatVariant::ConcatCConv1 { Axis::Channel } else { Axis::Feature };
            let ids: Vec<NodeId> = pooled.iter().map(|(_, id)| *id).collect();
            let cat = b.concat("concat", &ids, axis)?;
            let d2 = conv_block(&mut b, "", 2, cat, CONV2_KERNEL, k, p)?;
            b.dense("dense", &[d2], NUM_CLASSES)?
        }
        ConcatVariant::ConcatConv2 => {
            let mut towers = Vec::new();
            for (prefix, id) in &pooled {
                towers.push(conv_block(&mut b, prefix, 2, *id, CONV2_KERNEL, k, p)?);
            }
            b.dense("dense", &towers, NUM_CLASSES)?
        }
    };
    b.finish(out)
}

fn full_plus_nonoverlap_graph(input: InputDims, k: usize, p: f64, layout: &BandLayout) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let x = b.input(input.time, input.feature, 1)?;
    let mut towers = Vec::new();
    for (prefix, s) in band_inputs(&mut b, x, layout)? {
        let pooled = first_stage(&mut b, &prefix, s, k, p)?;
        towers.push(conv_block(&mut b, &prefix, 2, pooled, CONV2_KERNEL, k, p)?);
    }
    let full_pooled = first_stage(&mut b, "full/", x, k, p)?;
    let full = conv_block(&mut b, "full/", 2, full_pooled, CONV2_KERNEL, k, p)?;

    let band_width: usize = towers.iter().map(|&t| b_shape(&b, t).f).sum();
    let full_width = b_shape(&b, full).f;
    if band_width != full_width {
        return Err(Error::InconsistentSpec(format!(
            "band towers pool to {band_width} feature bins in total but the full band tower pools to {full_width}; \
             pick band widths whose pooled sizes add up (e.g. even widths)"
        )));
    }
    let bands = b.concat("concat_feature", &towers, Axis::Feature)?;
    let both = b.concat("concat_channel", &[bands, full], Axis::Channel)?;
    let out = b.dense("dense", &[both], NUM_CLASSES)?;
    b.finish(out)
}

fn b_shape(b: &GraphBuilder, id: NodeId) -> Shape {
    b.node_shape(id).expect("node exists")
}

impl ModelSpec {
    /// Reference configuration of `arch` at `K`: three overlapped bands for the
    /// sub-band model, three equal non-overlapped bands next to the full tower
    /// for the multi-band model, dropout 0.5.
    pub fn paper(arch: Architecture, k: usize) -> Result<Self> {
        let layout = match arch {
            Architecture::FullBand => None,
            Architecture::FullPlusNonoverlap => Some(uniform_layout(3, PAPER_FEATURE_DIM, 0)?),
            Architecture::OverlappedSubband => Some(paper_layout(3)?),
        };
        build_model(arch, k, PAPER_DROPOUT, layout, ConcatVariant::default())
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, self.input.time, self.input.feature, 1)
    }

    /// Per-sample shape of a named layer output.
    pub fn layer_shape(&self, name: &str) -> Result<Shape> {
        Ok(self.graph.node(name)?.1.shape)
    }

    /// Number of values fed to the final dense layer.
    pub fn dense_input_len(&self) -> usize {
        self.graph.dense_layers()[0].in_features
    }

    /// Same hyperparameters with a different dropout rate.
    pub fn with_dropout(&self, dropout: f64) -> Result<Self> {
        build_model_for(self.input, self.arch, self.k, dropout, self.layout.clone(), self.concat)
    }

    pub fn to_toml(&self) -> Result<String> {
        let doc = SpecDocument {
            schema: SPEC_SCHEMA.to_string(),
            arch: self.arch,
            concat: self.concat,
            k: self.k,
            dropout: self.dropout,
            num_classes: self.num_classes,
            input: self.input,
            bands: self
                .layout
                .as_ref()
                .map(|l| l.bands().iter().map(|b| [b.lo, b.hi]).collect()),
        };
        toml::to_string(&doc).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: SpecDocument = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        if doc.schema != SPEC_SCHEMA {
            return Err(Error::Format(format!(
                "model spec schema `{}` is not `{SPEC_SCHEMA}`",
                doc.schema
            )));
        }
        if doc.num_classes != NUM_CLASSES {
            return Err(Error::InconsistentSpec(format!("{} classes are not supported", doc.num_classes)));
        }
        let layout = doc
            .bands
            .map(|bands| {
                let pairs: Vec<(usize, usize)> = bands.iter().map(|b| (b[0], b[1])).collect();
                BandLayout::new(&pairs, doc.input.feature)
            })
            .transpose()?;
        build_model_for(doc.input, doc.arch, doc.k, doc.dropout, layout, doc.concat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_band_topology() {
        let m = ModelSpec::paper(Architecture::FullBand, 8).unwrap();
        assert_eq!(m.layer_shape("conv1").unwrap(), Shape::new(1, 98, 40, 8));
        assert_eq!(m.layer_shape("pool1").unwrap(), Shape::new(1, 49, 20, 8));
        assert_eq!(m.layer_shape("conv2").unwrap(), Shape::new(1, 49, 20, 8));
        assert_eq!(m.dense_input_len(), 49 * 20 * 8);
        assert_eq!(m.dense_input_len(), 7840);
    }

    #[test]
    fn overlapped_topology() {
        let m = ModelSpec::paper(Architecture::OverlappedSubband, 8).unwrap();
        assert_eq!(m.layer_shape("band2/pool1").unwrap(), Shape::new(1, 49, 8, 8));
        assert_eq!(m.layer_shape("concat").unwrap(), Shape::new(1, 49, 8, 24));
        assert_eq!(m.dense_input_len(), 3136);
        assert_eq!(m.graph().conv_layers().len(), 4);

        let k = 5;
        let f = build_model(Architecture::OverlappedSubband, k, 0.5, Some(paper_layout(3).unwrap()), ConcatVariant::ConcatFConv1).unwrap();
        assert_eq!(f.layer_shape("concat").unwrap(), Shape::new(1, 49, 24, k));
        assert_eq!(f.dense_input_len(), 49 * 24 * k);

        let c2 = build_model(Architecture::OverlappedSubband, k, 0.5, Some(paper_layout(3).unwrap()), ConcatVariant::ConcatConv2).unwrap();
        assert_eq!(c2.layer_shape("band3/conv2").unwrap(), Shape::new(1, 49, 8, k));
        assert_eq!(c2.dense_input_len(), 3 * 49 * 8 * k);
        assert_eq!(c2.graph().conv_layers().len(), 6);
    }

    #[test]
    fn multiband_topology() {
        let m = ModelSpec::paper(Architecture::FullPlusNonoverlap, 4).unwrap();
        assert_eq!(m.layer_shape("concat_feature").unwrap(), Shape::new(1, 49, 20, 4));
        assert_eq!(m.layer_shape("concat_channel").unwrap(), Shape::new(1, 49, 20, 8));
        assert_eq!(m.graph().conv_layers().len(), 8);

        // 13/13/14 bins pool to 7 + 7 + 7 = 21, which cannot sit next to the 20-wide full tower.
        let odd = BandLayout::new(&[(0, 13), (13, 26), (26, 40)], 40).unwrap();
        let err = build_model(Architecture::FullPlusNonoverlap, 4, 0.5, Some(odd), ConcatVariant::default()).unwrap_err();
        assert!(err.to_string().contains("pool to 21"), "{err}");
    }

    #[test]
    fn inconsistent_specs() {
        let l3 = paper_layout(3).unwrap();
        assert!(build_model(Architecture::FullBand, 8, 0.5, Some(l3.clone()), ConcatVariant::default()).is_err());
        assert!(build_model(Architecture::OverlappedSubband, 8, 0.5, None, ConcatVariant::default()).is_err());
        assert!(build_model(Architecture::FullPlusNonoverlap, 8, 0.5, Some(l3.clone()), ConcatVariant::default()).is_err());
        assert!(build_model(Architecture::OverlappedSubband, 0, 0.5, Some(l3.clone()), ConcatVariant::default()).is_err());
        assert!(build_model(Architecture::FullBand, 8, 0.5, None, ConcatVariant::ConcatConv2).is_err());
        assert!(build_model(Architecture::OverlappedSubband, 8, 1.0, Some(l3), ConcatVariant::default()).is_err());
        let small = uniform_layout(3, 10, 2).unwrap();
        assert!(build_model(Architecture::OverlappedSubband, 8, 0.5, Some(small), ConcatVariant::default()).is_err());
    }

    #[test]
    fn narrow_bands_are_allowed() {
        let narrow = uniform_layout(8, 40, 0).unwrap();
        assert!(narrow.bands().iter().all(|b| b.width() < CONV1_KERNEL.1));
        let m = build_model(Architecture::OverlappedSubband, 2, 0.5, Some(narrow), ConcatVariant::default()).unwrap();
        assert_eq!(m.layer_shape("concat").unwrap(), Shape::new(1, 49, 3, 16));
    }

    #[test]
    fn spec_toml_roundtrip() {
        for arch in Architecture::ALL {
            let m = ModelSpec::paper(arch, 16).unwrap();
            let text = m.to_toml().unwrap();
            assert!(text.contains(SPEC_SCHEMA));
            assert_eq!(ModelSpec::from_toml(&text).unwrap(), m);
        }
        let bad = ModelSpec::paper(Architecture::FullBand, 8).unwrap().to_toml().unwrap().replace("model-spec/1", "model-spec/9");
        assert!(ModelSpec::from_toml(&bad).is_err());
    }
}
