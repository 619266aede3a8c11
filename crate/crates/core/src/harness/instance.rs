//! Instance files: schema, parsing with located errors, and construction of the inclusion
//! and channel they describe.

use super::HarnessError;
use crate::algebra_core::{Block, Element, MultiMatrixAlgebra};
use crate::channel::BimoduleChannel;
use crate::linalg::CMat;
use crate::qfa::TwoBoxSpaces;
use crate::spectral::Tolerances;
use crate::tower::{self, Inclusion};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

/// Row-major complex matrix, entries as `[re, im]`.
pub type JsonMatrix = Vec<Vec<Complex64>>;
/// Element of a multi-matrix algebra as its list of blocks.
pub type JsonElement = Vec<JsonMatrix>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    ScalarsInFull,
    DiagonalInFull,
    Equal,
    /// Standard embedding with inclusion matrix `lambda[i][j]`.
    Multiplicities { lambda: Vec<Vec<usize>> },
    /// `images[i][k·n_i + l]` is the image of the matrix unit `e^{(i)}_{kl}` of `N`.
    Explicit { images: Vec<Vec<JsonElement>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSpec {
    Markov,
    /// `τ(x) = Σ_j w_j Tr(x_j)` on the blocks of `M`.
    Weights { weights: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Inclusion family for `random_cpb`: `diagonal_in_full` or `scalars_in_full`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Kraus { operators: Vec<JsonElement> },
    /// Matrix of `Φ` on `L²(M)` in the orthonormal basis `e^{(i)}_{kl}/√w_i`.
    YElement { operator: JsonMatrix },
    Generator {
        name: String,
        #[serde(default)]
        params: GeneratorParams,
    },
}

/// Analytic ground truth attached by the generator registry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_group_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_algebra_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_equals_n: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_cp: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_unital: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub schema_version: u32,
    /// Block sizes of `N`.
    pub algebra_n: Vec<usize>,
    /// Block sizes of `M`.
    pub algebra_m: Vec<usize>,
    pub embedding: EmbeddingSpec,
    pub trace: TraceSpec,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> SchemaIssue {
    SchemaIssue { path: path.into(), message: message.into() }
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<InstanceSpec, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: InstanceSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        HarnessError::Schema(vec![locate(path, message)])
    })?;
    validate(&spec)?;
    Ok(spec)
}

/// A missing field is reported at the field itself rather than at its parent.
fn locate(path: String, message: String) -> SchemaIssue {
    let missing = message
        .strip_prefix("missing field `")
        .and_then(|r| r.split('`').next())
        .map(str::to_string);
    match missing {
        // internally tagged enums report their tag at the enum's own path
        Some(f) if path == "." => issue(f, message),
        Some(f) if !["form", "mode", "kind"].contains(&f.as_str()) => issue(format!("{path}.{f}"), message),
        _ => issue(if path == "." { String::new() } else { path }, message),
    }
}

fn check_matrix(path: &str, m: &JsonMatrix, rows: usize, cols: usize, out: &mut Vec<SchemaIssue>) {
    if m.len() != rows {
        out.push(issue(path, format!("expected {rows} rows, found {}", m.len())));
        return;
    }
    for (r, row) in m.iter().enumerate() {
        if row.len() != cols {
            out.push(issue(format!("{path}[{r}]"), format!("expected {cols} columns, found {}", row.len())));
        }
        if row.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            out.push(issue(format!("{path}[{r}]"), "non-finite entry"));
        }
    }
}

fn check_element(path: &str, x: &JsonElement, sizes: &[usize], out: &mut Vec<SchemaIssue>) {
    if x.len() != sizes.len() {
        out.push(issue(path, format!("expected {} blocks, found {}", sizes.len(), x.len())));
        return;
    }
    for (b, (m, &s)) in x.iter().zip(sizes).enumerate() {
        check_matrix(&format!("{path}[{b}]"), m, s, s, out);
    }
}

fn check_sizes(path: &str, sizes: &[usize], out: &mut Vec<SchemaIssue>) {
    if sizes.is_empty() {
        out.push(issue(path, "algebra has no blocks"));
    }
    for (i, &s) in sizes.iter().enumerate() {
        if s == 0 {
            out.push(issue(format!("{path}[{i}]"), "block size must be positive"));
        }
    }
}

fn validate(spec: &InstanceSpec) -> Result<(), HarnessError> {
    let mut out = Vec::new();
    if spec.schema_version != SCHEMA_VERSION {
        out.push(issue("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", spec.schema_version)));
    }
    check_sizes("algebra_n", &spec.algebra_n, &mut out);
    check_sizes("algebra_m", &spec.algebra_m, &mut out);
    let (n, m) = (&spec.algebra_n, &spec.algebra_m);
    match &spec.embedding {
        EmbeddingSpec::ScalarsInFull => {
            if n.as_slice() != [1] || m.len() != 1 {
                out.push(issue("embedding", "scalars_in_full needs algebra_n = [1] and a single block in algebra_m"));
            }
        }
        EmbeddingSpec::DiagonalInFull => {
            if m.len() != 1 || n.len() != m[0] || n.iter().any(|&s| s != 1) {
                out.push(issue("embedding", "diagonal_in_full needs algebra_m = [k] and algebra_n = k blocks of size 1"));
            }
        }
        EmbeddingSpec::Equal => {
            if n != m {
                out.push(issue("embedding", "equal needs algebra_n = algebra_m"));
            }
        }
        EmbeddingSpec::Multiplicities { lambda } => {
            if lambda.len() != n.len() || lambda.iter().any(|r| r.len() != m.len()) {
                out.push(issue("embedding.lambda", format!("expected a {} x {} matrix", n.len(), m.len())));
            } else if tower::big_sizes(lambda, n) != *m {
                out.push(issue("embedding.lambda", "multiplicities do not reproduce the block sizes of algebra_m"));
            }
        }
        EmbeddingSpec::Explicit { images } => {
            if images.len() != n.len() {
                out.push(issue("embedding.images", format!("expected {} entries, found {}", n.len(), images.len())));
            } else {
                for (i, imgs) in images.iter().enumerate() {
                    if imgs.len() != n[i] * n[i] {
                        out.push(issue(format!("embedding.images[{i}]"), format!("expected {} unit images", n[i] * n[i])));
                        continue;
                    }
                    for (k, x) in imgs.iter().enumerate() {
                        check_element(&format!("embedding.images[{i}][{k}]"), x, m, &mut out);
                    }
                }
            }
        }
    }
    if let TraceSpec::Weights { weights } = &spec.trace {
        if weights.len() != m.len() {
            out.push(issue("trace.weights", format!("expected {} weights, found {}", m.len(), weights.len())));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            out.push(issue("trace.weights", "weights must be positive and finite"));
        }
    }
    match &spec.channel {
        ChannelSpec::Kraus { operators } => {
            if operators.is_empty() {
                out.push(issue("channel.operators", "no Kraus operators"));
            }
            for (k, x) in operators.iter().enumerate() {
                check_element(&format!("channel.operators[{k}]"), x, m, &mut out);
            }
        }
        ChannelSpec::YElement { operator } => {
            let d: usize = m.iter().map(|s| s * s).sum();
            check_matrix("channel.operator", operator, d, d, &mut out);
        }
        ChannelSpec::Generator { name, params } => {
            if super::generate::family(name).is_none() {
                return Err(HarnessError::UnknownGenerator(name.clone()));
            }
            if let Err(e) = super::generate::check_params(name, params) {
                out.push(issue("channel.params", e));
            }
        }
    }
    let t = &spec.tolerances;
    for (name, v) in [("rank", t.rank), ("phase", t.phase), ("cp", t.cp), ("residual", t.residual)] {
        if !(v.is_finite() && v >= 0.0) {
            out.push(issue(format!("tolerances.{name}"), "tolerance must be finite and non-negative"));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Schema(out))
    }
}

pub fn to_cmat(m: &JsonMatrix) -> CMat {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    CMat::from_fn(rows, cols, |r, c| m[r][c])
}

pub fn from_cmat(m: &CMat) -> JsonMatrix {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn to_element(x: &JsonElement) -> Element {
    Element { blocks: x.iter().map(to_cmat).collect() }
}

pub fn from_element(x: &Element) -> JsonElement {
    x.blocks.iter().map(from_cmat).collect()
}

fn blocks(prefix: &str, sizes: &[usize]) -> Vec<Block> {
    sizes.iter().enumerate().map(|(i, &size)| Block { label: format!("{prefix}{i}"), size }).collect()
}

fn trace_weights(spec: &InstanceSpec, lam: &[Vec<usize>]) -> Result<Vec<f64>, HarnessError> {
    match &spec.trace {
        TraceSpec::Markov => Ok(tower::markov_data(lam, &spec.algebra_n)?.weights_m),
        TraceSpec::Weights { weights } => Ok(weights.clone()),
    }
}

/// The inclusion `N ⊆ M` with the requested trace on `M`.
pub fn build_inclusion(spec: &InstanceSpec) -> Result<Inclusion, HarnessError> {
    let (n, m) = (&spec.algebra_n, &spec.algebra_m);
    let lam: Vec<Vec<usize>> = match &spec.embedding {
        EmbeddingSpec::ScalarsInFull => vec![vec![m[0]]],
        EmbeddingSpec::DiagonalInFull => vec![vec![1]; n.len()],
        EmbeddingSpec::Equal => (0..n.len()).map(|i| (0..n.len()).map(|j| usize::from(i == j)).collect()).collect(),
        EmbeddingSpec::Multiplicities { lambda } => lambda.clone(),
        EmbeddingSpec::Explicit { images } => {
            // multiplicities from the ranks of the images of e_00
            let lam: Vec<Vec<usize>> = images
                .iter()
                .map(|imgs| to_element(&imgs[0]).blocks.iter().map(|b| b.trace().re.round().max(0.0) as usize).collect())
                .collect();
            let w = trace_weights(spec, &lam)?;
            let big = MultiMatrixAlgebra::new(blocks("m", m), w)?;
            let imgs = images.iter().map(|v| v.iter().map(to_element).collect()).collect();
            return Ok(Inclusion::from_images(blocks("n", n), big, imgs, true)?);
        }
    };
    let w = trace_weights(spec, &lam)?;
    Ok(Inclusion::standard(blocks("n", n), lam, None, w)?)
}

/// The channel of an instance over an already built tower.
pub fn build_channel(spec: &InstanceSpec, spaces: &Arc<TwoBoxSpaces>) -> Result<BimoduleChannel, HarnessError> {
    match &spec.channel {
        ChannelSpec::Kraus { operators } => {
            let ks: Vec<Element> = operators.iter().map(to_element).collect();
            Ok(BimoduleChannel::from_kraus(spaces, &ks)?)
        }
        ChannelSpec::YElement { operator } => Ok(BimoduleChannel::from_action(spaces, to_cmat(operator))?),
        ChannelSpec::Generator { name, params } => {
            let explicit = super::generate::channel_on(name, params, spaces, spec.seed)?;
            build_channel(&InstanceSpec { channel: explicit, ..spec.clone() }, spaces)
        }
    }
}
