use super::{BranchWeights, DecoderForm, ModelError, ModelParameters, NodeRepresentation, TrainConfig, TrainedModel, PARAMETER_NAMES};
use crate::textio::{sha256_hex, write_matrix, write_reals, FormatError, LineReader};
use ndarray::Array2;
use std::fmt::Write as _;
use std::path::Path;

const MODEL_MAGIC: &str = "sgaae-model v1";

fn trace_text(trace: &[f64]) -> String {
    let mut s = String::new();
    write_reals(&mut s, trace.iter().copied());
    s
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape")
}

/// Versioned text format: settings header, the parameter matrices, the loss
/// trace and the final per-node outputs.
pub fn write_model(m: &TrainedModel) -> String {
    let c = &m.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_MAGIC}");
    let _ = writeln!(out, "archetypes {}", c.archetypes);
    let _ = writeln!(out, "feature_dim {}", m.params.feature_dim());
    let _ = writeln!(out, "hidden {}", c.hidden);
    let _ = writeln!(out, "nodes {}", m.representation.node_count());
    let _ = writeln!(out, "epochs {}", c.epochs);
    let _ = writeln!(out, "lr {}", c.lr);
    match c.block {
        Some(b) => {
            let _ = writeln!(out, "block {b}");
        }
        None => out.push_str("block auto\n"),
    }
    let _ = writeln!(out, "t0 {}", c.t0);
    let _ = writeln!(out, "t_min {}", c.t_min);
    let _ = writeln!(out, "seed {}", c.seed);
    let _ = writeln!(out, "decoder {}", c.decoder);
    let _ = writeln!(out, "graph_digest {}", m.graph_digest);
    let trace = trace_text(&m.loss_trace);
    let _ = writeln!(out, "loss_digest {}", sha256_hex(trace.as_bytes()));
    let _ = writeln!(out, "temperature {}", m.params.temperature);
    for (name, t) in PARAMETER_NAMES.iter().zip(m.params.tensors()) {
        write_matrix(&mut out, name, t);
    }
    let _ = writeln!(out, "loss_trace {}", m.loss_trace.len());
    out.push_str(&trace);
    let r = &m.representation;
    write_matrix(&mut out, "Z", &r.z);
    write_matrix(&mut out, "W", &r.w);
    write_matrix(&mut out, "gamma", &column(&r.gamma));
    write_matrix(&mut out, "delta", &column(&r.delta));
    out
}

pub fn parse_model(text: &str) -> Result<TrainedModel, ModelError> {
    let mut r = LineReader::new(text);
    if r.expect_line("model header")? != MODEL_MAGIC {
        return Err(r.error(format!("expected `{MODEL_MAGIC}`")).into());
    }
    let archetypes: usize = r.expect_field("archetypes")?;
    let _feature_dim: usize = r.expect_field("feature_dim")?;
    let hidden: usize = r.expect_field("hidden")?;
    let nodes: usize = r.expect_field("nodes")?;
    let epochs: usize = r.expect_field("epochs")?;
    let lr: f64 = r.expect_field("lr")?;
    let block: String = r.expect_field("block")?;
    let block = match block.as_str() {
        "auto" => None,
        b => Some(b.parse().map_err(|_| r.error(format!("invalid block `{b}`")))?),
    };
    let t0: f64 = r.expect_field("t0")?;
    let t_min: f64 = r.expect_field("t_min")?;
    let seed: u64 = r.expect_field("seed")?;
    let decoder: String = r.expect_field("decoder")?;
    let decoder: DecoderForm = decoder.parse().map_err(|e: String| r.error(e))?;
    let graph_digest: String = r.expect_field("graph_digest")?;
    let loss_digest: String = r.expect_field("loss_digest")?;
    let temperature: f64 = r.expect_field("temperature")?;
    let mut tensors = Vec::with_capacity(PARAMETER_NAMES.len());
    for name in PARAMETER_NAMES {
        tensors.push(r.expect_matrix(name)?);
    }
    let trace_len: usize = r.expect_field("loss_trace")?;
    let loss_trace: Vec<f64> = if trace_len == 0 {
        Vec::new()
    } else {
        r.expect_values("loss trace")?
    };
    if loss_trace.len() != trace_len {
        return Err(r.error(format!("loss trace has {} values, header says {trace_len}", loss_trace.len())).into());
    }
    if sha256_hex(trace_text(&loss_trace).as_bytes()) != loss_digest {
        return Err(r.error("loss trace does not match loss_digest").into());
    }
    let z = r.expect_matrix("Z")?;
    let w = r.expect_matrix("W")?;
    let gamma = r.expect_matrix("gamma")?.column(0).to_vec();
    let delta = r.expect_matrix("delta")?.column(0).to_vec();
    let shape_err = |what: &str| -> ModelError { FormatError::new(0, format!("inconsistent shape of {what}")).into() };
    if z.dim() != (nodes, archetypes) || w.dim() != z.dim() || gamma.len() != nodes || delta.len() != nodes {
        return Err(shape_err("node outputs"));
    }

    let mut it = tensors.into_iter();
    let mut branch = || BranchWeights {
        gcn_w1: it.next().expect("tensor"),
        gcn_b1: it.next().expect("tensor"),
        gcn_w2: it.next().expect("tensor"),
        gcn_b2: it.next().expect("tensor"),
        mlp_w1: it.next().expect("tensor"),
        mlp_b1: it.next().expect("tensor"),
        mlp_w2: it.next().expect("tensor"),
        mlp_b2: it.next().expect("tensor"),
    };
    let pos = branch();
    let neg = branch();
    let params = ModelParameters {
        pos,
        neg,
        archetypes: it.next().expect("tensor"),
        temperature,
    };
    params.check_shapes(params.feature_dim())?;
    if params.archetype_count() != archetypes || params.hidden() != hidden {
        return Err(shape_err("parameters"));
    }
    let representation = NodeRepresentation::from_parts(z, w, gamma, delta, &params.archetypes);
    Ok(TrainedModel {
        params,
        representation,
        config: TrainConfig {
            archetypes,
            hidden,
            epochs,
            lr,
            block,
            t0,
            t_min,
            seed,
            decoder,
        },
        graph_digest,
        loss_trace,
    })
}

pub fn read_model(path: impl AsRef<Path>) -> Result<TrainedModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}
