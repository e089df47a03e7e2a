//! Receptive fields of named feature maps.
//!
//! The field of one map point is traced back through the graph as a set of
//! input bins per axis. Kernel taps landing in SAME padding read zeros and are
//! excluded, so the reference point is taken at the centre of the map where
//! the reference configurations never touch padding. For a channel-concatenated
//! map the bands contribute disjoint stretches of input bins and the feature
//! span is the size of their union.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::{same_padding, Graph, Op};
use crate::subband::model::ModelSpec;
use crate::tensor::Axis;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceptiveField {
    /// Distinct input time steps influencing the point.
    pub time: usize,
    /// Distinct input feature bins influencing the point.
    pub feature: usize,
    pub feature_bins: Vec<usize>,
}

pub fn receptive_field(spec: &ModelSpec, layer: &str) -> Result<ReceptiveField> {
    graph_receptive_field(spec.graph(), layer)
}

/// Field of the centre point `(t/2, f/2)` of `layer`.
pub fn graph_receptive_field(graph: &Graph, layer: &str) -> Result<ReceptiveField> {
    let (_, node) = graph.node(layer)?;
    receptive_field_at(graph, layer, node.shape.t / 2, node.shape.f / 2)
}

pub fn receptive_field_at(graph: &Graph, layer: &str, t: usize, f: usize) -> Result<ReceptiveField> {
    let (target, node) = graph.node(layer)?;
    if matches!(node.op, Op::Dense { .. }) {
        return Err(Error::InvalidParameter(format!("`{layer}` is not a spatial feature map")));
    }
    if t >= node.shape.t || f >= node.shape.f {
        return Err(Error::OutOfRange {
            lo: f,
            hi: f + 1,
            dim: node.shape.f,
        });
    }
    let nodes = graph.nodes();
    let mut sets: Vec<Option<(BTreeSet<usize>, BTreeSet<usize>)>> = vec![None; nodes.len()];
    sets[target] = Some((BTreeSet::from([t]), BTreeSet::from([f])));
    let mut at_input = (BTreeSet::new(), BTreeSet::new());

    let merge = |sets: &mut Vec<Option<(BTreeSet<usize>, BTreeSet<usize>)>>, id: usize, ts: BTreeSet<usize>, fs: BTreeSet<usize>| {
        let slot = sets[id].get_or_insert_with(Default::default);
        slot.0.extend(ts);
        slot.1.extend(fs);
    };

    for id in (0..=target).rev() {
        let Some((ts, fs)) = sets[id].take() else { continue };
        let node = &nodes[id];
        let in_shape = |k: usize| nodes[node.inputs[k]].shape;
        match &node.op {
            Op::Input => {
                at_input.0.extend(ts);
                at_input.1.extend(fs);
            }
            Op::Relu | Op::Dropout { .. } => merge(&mut sets, node.inputs[0], ts, fs),
            Op::SliceFeature { lo, .. } => {
                let fs = fs.into_iter().map(|v| v + lo).collect();
                merge(&mut sets, node.inputs[0], ts, fs);
            }
            Op::Conv { layer } => {
                let l = &graph.conv_layers()[*layer];
                let s = in_shape(0);
                let ts = window_union(&ts, l.kernel.0, l.stride.0, s.t);
                let fs = window_union(&fs, l.kernel.1, l.stride.1, s.f);
                merge(&mut sets, node.inputs[0], ts, fs);
            }
            Op::MaxPool { window, stride } => {
                let s = in_shape(0);
                let ts = window_union(&ts, window.0, stride.0, s.t);
                let fs = window_union(&fs, window.1, stride.1, s.f);
                merge(&mut sets, node.inputs[0], ts, fs);
            }
            Op::Concat { axis: Axis::Channel } => {
                for &i in &node.inputs {
                    merge(&mut sets, i, ts.clone(), fs.clone());
                }
            }
            Op::Concat { axis: Axis::Feature } => {
                let mut offset = 0;
                for &i in &node.inputs {
                    let w = nodes[i].shape.f;
                    let part: BTreeSet<usize> = fs.iter().filter(|&&v| v >= offset && v < offset + w).map(|v| v - offset).collect();
                    if !part.is_empty() {
                        merge(&mut sets, i, ts.clone(), part);
                    }
                    offset += w;
                }
            }
            Op::Dense { .. } => unreachable!("dense layers are terminal"),
        }
    }
    Ok(ReceptiveField {
        time: at_input.0.len(),
        feature: at_input.1.len(),
        feature_bins: at_input.1.into_iter().collect(),
    })
}

/// Input indices read by a SAME-padded window for each output index.
fn window_union(outs: &BTreeSet<usize>, kernel: usize, stride: usize, len: usize) -> BTreeSet<usize> {
    let (_, pad) = same_padding(len, kernel, stride);
    let mut acc = BTreeSet::new();
    for &o in outs {
        let start = (o * stride) as isize - pad as isize;
        for i in 0..kernel as isize {
            let v = start + i;
            if v >= 0 && (v as usize) < len {
                acc.insert(v as usize);
            }
        }
    }
    acc
}
