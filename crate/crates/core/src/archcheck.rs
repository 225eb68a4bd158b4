//! Static shape and parameter verification of layer-by-layer network
//! descriptions.
//!
//! Architectures are written in a small line-oriented language:
//!
//! ```text
//! # comment
//! net segmentation             # optional name, `net NAME xN` replicates
//! group g1 g2                  # declare weight-sharing tags
//! input 7 380 380
//! conv 64 k3x3 s1 p0 d1 expect 64 378 378
//! maxpool k2x2 s2 expect 64 189 189
//! transconv 64 k3x3 s1 p0 d4 share g1
//! upconv 2 256 k3x3 s1 p1
//! upsample 2
//! ```
//!
//! A declared `expect` shape that disagrees with the inferred one is reported
//! as a mismatch; tracing then continues from the declared shape so a single
//! inconsistent row is not echoed by every layer after it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArchError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{net}: layer {index} collapses its input (inferred size {size})")]
    Collapse { net: String, index: usize, size: i64 },
    #[error("{net}: layer {index} ({kind}) needs {what}")]
    Invalid {
        net: String,
        index: usize,
        kind: LayerKind,
        what: &'static str,
    },
    #[error("layer {index} of {net} references undeclared share tag `{tag}`")]
    UnknownTag {
        net: String,
        index: usize,
        tag: String,
    },
    #[error("coupling verification needs at least two networks, got {0}")]
    TooFewNets(usize),
}

/// Output size of a convolution or pooling window along one axis.
pub fn infer_conv(input: i64, kernel: i64, stride: i64, padding: i64, dilation: i64) -> Option<i64> {
    if stride < 1 {
        return None;
    }
    let span = input + 2 * padding - dilation * (kernel - 1) - 1;
    if span < 0 {
        return None;
    }
    Some(span.div_euclid(stride) + 1)
}

/// Output size of a transposed convolution (no output padding).
pub fn infer_transconv(
    input: i64,
    kernel: i64,
    stride: i64,
    padding: i64,
    dilation: i64,
) -> Option<i64> {
    if input < 1 {
        return None;
    }
    let out = (input - 1) * stride - 2 * padding + dilation * (kernel - 1) + 1;
    (out >= 1).then_some(out)
}

/// Upsampling by `factor` followed by a convolution.
pub fn infer_upconv(input: i64, factor: i64, kernel: i64, stride: i64, padding: i64) -> Option<i64> {
    if factor < 1 {
        return None;
    }
    infer_conv(input * factor, kernel, stride, padding, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv,
    TransConv,
    MaxPool,
    UpConv,
    Upsample,
}

impl LayerKind {
    pub fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::TransConv | LayerKind::UpConv)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::TransConv => "transconv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::UpConv => "upconv",
            LayerKind::Upsample => "upsample",
        })
    }
}

/// A `channels x height x width` feature map shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl Shape {
    pub fn new(channels: u32, height: u32, width: u32) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub out_channels: Option<u32>,
    pub kernel: u32,
    pub stride: u32,
    pub padding: u32,
    pub dilation: u32,
    pub upsample_factor: Option<u32>,
    pub declared_out: Option<Shape>,
    pub sharing_group: Option<String>,
    /// Source line, 0 when built in code.
    pub line: usize,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        Self {
            kind,
            out_channels: None,
            kernel: 1,
            stride: 1,
            padding: 0,
            dilation: 1,
            upsample_factor: None,
            declared_out: None,
            sharing_group: None,
            line: 0,
        }
    }

    pub fn conv(out: u32, kernel: u32, stride: u32, padding: u32, dilation: u32) -> Self {
        Self {
            out_channels: Some(out),
            kernel,
            stride,
            padding,
            dilation,
            ..Self::base(LayerKind::Conv)
        }
    }

    pub fn transconv(out: u32, kernel: u32, stride: u32, padding: u32, dilation: u32) -> Self {
        Self {
            kind: LayerKind::TransConv,
            ..Self::conv(out, kernel, stride, padding, dilation)
        }
    }

    pub fn maxpool(kernel: u32, stride: u32) -> Self {
        Self {
            kernel,
            stride,
            ..Self::base(LayerKind::MaxPool)
        }
    }

    pub fn upconv(factor: u32, out: u32, kernel: u32, stride: u32, padding: u32) -> Self {
        Self {
            kind: LayerKind::UpConv,
            upsample_factor: Some(factor),
            ..Self::conv(out, kernel, stride, padding, 1)
        }
    }

    pub fn upsample(factor: u32) -> Self {
        Self {
            upsample_factor: Some(factor),
            ..Self::base(LayerKind::Upsample)
        }
    }

    pub fn expect(mut self, shape: Shape) -> Self {
        self.declared_out = Some(shape);
        self
    }

    pub fn share(mut self, tag: &str) -> Self {
        self.sharing_group = Some(tag.to_string());
        self
    }

    /// Spatial output size along one axis, `None` when the layer collapses it.
    pub fn infer_size(&self, input: u32) -> Option<i64> {
        let (n, k, s, p, d) = (
            input as i64,
            self.kernel as i64,
            self.stride as i64,
            self.padding as i64,
            self.dilation as i64,
        );
        let factor = self.upsample_factor.unwrap_or(1) as i64;
        match self.kind {
            LayerKind::Conv | LayerKind::MaxPool => infer_conv(n, k, s, p, d),
            LayerKind::TransConv => infer_transconv(n, k, s, p, d),
            LayerKind::UpConv => infer_upconv(n, factor, k, s, p),
            LayerKind::Upsample => Some(n * factor),
        }
    }

    fn output_channels(&self, input: u32) -> u32 {
        self.out_channels.unwrap_or(input)
    }
}

/// Learnable parameters: `in * out * k² (+ out)` for weighted layers, 0 otherwise.
pub fn param_count(layer: &LayerSpec, in_channels: u32, bias: bool) -> u64 {
    if !layer.kind.has_weights() {
        return 0;
    }
    let out = layer.out_channels.unwrap_or(0) as u64;
    let k = layer.kernel as u64;
    in_channels as u64 * out * k * k + if bias { out } else { 0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// 1-based layer index.
    pub index: usize,
    pub kind: LayerKind,
    pub input: Shape,
    pub inferred: Shape,
    pub declared: Option<Shape>,
    pub params: u64,
    pub sharing_group: Option<String>,
    pub line: usize,
}

impl TraceRow {
    /// `None` when the layer declares no output shape.
    pub fn matches(&self) -> Option<bool> {
        self.declared.map(|d| d == self.inferred)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub net: String,
    pub input: Shape,
    pub rows: Vec<TraceRow>,
}

impl ShapeTrace {
    pub fn mismatches(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.matches() == Some(false))
    }

    pub fn matched(&self) -> usize {
        self.rows.iter().filter(|r| r.matches() == Some(true)).count()
    }

    pub fn declared(&self) -> usize {
        self.rows.iter().filter(|r| r.declared.is_some()).count()
    }

    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn output(&self) -> Shape {
        self.rows.last().map_or(self.input, |r| r.inferred)
    }
}

fn validate_layer(net: &str, index: usize, l: &LayerSpec) -> Result<(), ArchError> {
    let invalid = |what| ArchError::Invalid {
        net: net.to_string(),
        index,
        kind: l.kind,
        what,
    };
    if l.kernel < 1 {
        return Err(invalid("kernel >= 1"));
    }
    if l.stride < 1 {
        return Err(invalid("stride >= 1"));
    }
    if l.dilation < 1 {
        return Err(invalid("dilation >= 1"));
    }
    if l.kind.has_weights() && l.out_channels.map_or(true, |c| c == 0) {
        return Err(invalid("a positive output channel count"));
    }
    if matches!(l.kind, LayerKind::UpConv | LayerKind::Upsample)
        && l.upsample_factor.map_or(true, |f| f == 0)
    {
        return Err(invalid("an upsampling factor >= 1"));
    }
    Ok(())
}

/// Folds the input shape through every layer.
pub fn trace(spec: &ArchSpec, bias: bool) -> Result<ShapeTrace, ArchError> {
    let mut current = spec.input_shape;
    let mut rows = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let index = i + 1;
        validate_layer(&spec.name, index, layer)?;
        let collapse = |size| ArchError::Collapse {
            net: spec.name.clone(),
            index,
            size,
        };
        let h = layer.infer_size(current.height).ok_or_else(|| collapse(0))?;
        let w = layer.infer_size(current.width).ok_or_else(|| collapse(0))?;
        if h < 1 || w < 1 {
            return Err(collapse(h.min(w)));
        }
        let inferred = Shape::new(layer.output_channels(current.channels), h as u32, w as u32);
        rows.push(TraceRow {
            index,
            kind: layer.kind,
            input: current,
            inferred,
            declared: layer.declared_out,
            params: param_count(layer, current.channels, bias),
            sharing_group: layer.sharing_group.clone(),
            line: layer.line,
        });
        current = layer.declared_out.unwrap_or(inferred);
    }
    Ok(ShapeTrace {
        net: spec.name.clone(),
        input: spec.input_shape,
        rows,
    })
}

/// Hyperparameters that must agree between layers sharing weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerSignature {
    pub kind: LayerKind,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel: u32,
    pub stride: u32,
    pub padding: u32,
    pub dilation: u32,
    pub factor: u32,
}

impl fmt::Display for LayerSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}->{} k{} s{} p{} d{}",
            self.kind,
            self.in_channels,
            self.out_channels,
            self.kernel,
            self.stride,
            self.padding,
            self.dilation
        )?;
        if self.factor != 1 {
            write!(f, " x{}", self.factor)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingViolation {
    pub tag: String,
    pub net: String,
    pub index: usize,
    pub expected: LayerSignature,
    pub found: LayerSignature,
}

impl fmt::Display for CouplingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "share `{}`: {} layer {} is `{}`, group uses `{}`",
            self.tag, self.net, self.index, self.found, self.expected
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CouplingReport {
    /// Tag → number of member layers.
    pub groups: BTreeMap<String, usize>,
    pub violations: Vec<CouplingViolation>,
}

/// Checks that every layer carrying a given share tag has identical
/// hyperparameters and channel counts. The most common signature in a group
/// is taken as the reference, so a single altered copy yields one violation.
pub fn verify_coupling(
    specs: &[ArchSpec],
    declared_tags: &BTreeSet<String>,
) -> Result<CouplingReport, ArchError> {
    if specs.len() < 2 {
        return Err(ArchError::TooFewNets(specs.len()));
    }
    let mut members: BTreeMap<String, Vec<(String, usize, LayerSignature)>> = BTreeMap::new();
    for spec in specs {
        let mut channels = spec.input_shape.channels;
        for (i, layer) in spec.layers.iter().enumerate() {
            let out = layer.output_channels(channels);
            if let Some(tag) = &layer.sharing_group {
                if !declared_tags.contains(tag) {
                    return Err(ArchError::UnknownTag {
                        net: spec.name.clone(),
                        index: i + 1,
                        tag: tag.clone(),
                    });
                }
                members.entry(tag.clone()).or_default().push((
                    spec.name.clone(),
                    i + 1,
                    LayerSignature {
                        kind: layer.kind,
                        in_channels: channels,
                        out_channels: out,
                        kernel: layer.kernel,
                        stride: layer.stride,
                        padding: layer.padding,
                        dilation: layer.dilation,
                        factor: layer.upsample_factor.unwrap_or(1),
                    },
                ));
            }
            channels = out;
        }
    }
    let mut report = CouplingReport::default();
    for (tag, list) in members {
        report.groups.insert(tag.clone(), list.len());
        let mut tally: Vec<(&LayerSignature, usize)> = Vec::new();
        for (_, _, sig) in &list {
            match tally.iter_mut().find(|(s, _)| *s == sig) {
                Some((_, n)) => *n += 1,
                None => tally.push((sig, 1)),
            }
        }
        // max_by_key keeps the last maximum; scan for the first instead
        let best = tally.iter().map(|&(_, n)| n).max().unwrap_or(0);
        let reference = tally.iter().find(|&&(_, n)| n == best).unwrap().0.clone();
        for (net, index, sig) in &list {
            if *sig != reference {
                report.violations.push(CouplingViolation {
                    tag: tag.clone(),
                    net: net.clone(),
                    index: *index,
                    expected: reference.clone(),
                    found: sig.clone(),
                });
            }
        }
    }
    Ok(report)
}

/// A parsed architecture file: one or more networks plus the declared share tags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchFile {
    pub specs: Vec<ArchSpec>,
    pub groups: BTreeSet<String>,
}

fn parse_err(line: usize, message: impl Into<String>) -> ArchError {
    ArchError::Parse {
        line,
        message: message.into(),
    }
}

fn number<T: FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<T, ArchError> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{token}`")))
}

fn prefixed(line: usize, token: Option<&str>, prefix: char, what: &str) -> Result<u32, ArchError> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what} (`{prefix}N`)")))?;
    let rest = token
        .strip_prefix(prefix)
        .ok_or_else(|| parse_err(line, format!("expected {what} `{prefix}N`, got `{token}`")))?;
    rest.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{token}`")))
}

fn kernel(line: usize, token: Option<&str>) -> Result<u32, ArchError> {
    let token = token.ok_or_else(|| parse_err(line, "missing kernel (`kKxK`)"))?;
    let body = token
        .strip_prefix('k')
        .ok_or_else(|| parse_err(line, format!("expected kernel `kKxK`, got `{token}`")))?;
    let (a, b) = body.split_once('x').unwrap_or((body, body));
    let (a, b): (u32, u32) = match (a.parse(), b.parse()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(parse_err(line, format!("invalid kernel `{token}`"))),
    };
    if a != b {
        return Err(parse_err(line, format!("non-square kernel `{token}`")));
    }
    Ok(a)
}

fn shape(line: usize, tokens: &mut std::iter::Peekable<std::str::SplitWhitespace<'_>>) -> Result<Shape, ArchError> {
    let c = number(line, tokens.next(), "channel count")?;
    let h = number(line, tokens.next(), "height")?;
    let w = number(line, tokens.next(), "width")?;
    Ok(Shape::new(c, h, w))
}

struct Pending {
    name: String,
    copies: u32,
    input: Option<Shape>,
    layers: Vec<LayerSpec>,
}

impl Pending {
    fn finish(self, out: &mut Vec<ArchSpec>, line: usize) -> Result<(), ArchError> {
        let input = self
            .input
            .ok_or_else(|| parse_err(line, format!("network `{}` has no input line", self.name)))?;
        if self.layers.is_empty() {
            return Err(parse_err(line, format!("network `{}` has no layers", self.name)));
        }
        if self.copies == 1 {
            out.push(ArchSpec {
                name: self.name,
                input_shape: input,
                layers: self.layers,
            });
        } else {
            for i in 1..=self.copies {
                out.push(ArchSpec {
                    name: format!("{}/{}", self.name, i),
                    input_shape: input,
                    layers: self.layers.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Parses the architecture language. `default_name` names a network that has
/// no `net` line.
pub fn parse_arch(text: &str, default_name: &str) -> Result<ArchFile, ArchError> {
    let mut file = ArchFile::default();
    let mut pending: Option<Pending> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace().peekable();
        let keyword = tokens.next().unwrap();
        match keyword {
            "net" => {
                if let Some(p) = pending.take() {
                    p.finish(&mut file.specs, line)?;
                }
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, "missing network name"))?;
                let copies = match tokens.next() {
                    None => 1,
                    Some(t) => t
                        .strip_prefix('x')
                        .and_then(|n| n.parse().ok())
                        .filter(|&n: &u32| n >= 1)
                        .ok_or_else(|| parse_err(line, format!("expected `xN`, got `{t}`")))?,
                };
                pending = Some(Pending {
                    name: name.to_string(),
                    copies,
                    input: None,
                    layers: Vec::new(),
                });
            }
            "group" => {
                let mut any = false;
                for tag in tokens.by_ref() {
                    file.groups.insert(tag.to_string());
                    any = true;
                }
                if !any {
                    return Err(parse_err(line, "`group` needs at least one tag"));
                }
            }
            "input" => {
                let start_new = match &pending {
                    None => true,
                    Some(p) => p.input.is_some(),
                };
                if start_new {
                    if let Some(p) = pending.take() {
                        p.finish(&mut file.specs, line)?;
                    }
                    let name = if file.specs.is_empty() {
                        default_name.to_string()
                    } else {
                        format!("{default_name}#{}", file.specs.len() + 1)
                    };
                    pending = Some(Pending {
                        name,
                        copies: 1,
                        input: None,
                        layers: Vec::new(),
                    });
                }
                let s = shape(line, &mut tokens)?;
                if s.channels == 0 || s.height == 0 || s.width == 0 {
                    return Err(parse_err(line, "input dimensions must be at least 1"));
                }
                pending.as_mut().unwrap().input = Some(s);
            }
            "conv" | "transconv" | "maxpool" | "upconv" | "upsample" => {
                let p = pending
                    .as_mut()
                    .filter(|p| p.input.is_some())
                    .ok_or_else(|| parse_err(line, "layer before `input`"))?;
                let mut layer = match keyword {
                    "conv" | "transconv" => {
                        let out = number(line, tokens.next(), "output channel count")?;
                        let k = kernel(line, tokens.next())?;
                        let s = prefixed(line, tokens.next(), 's', "stride")?;
                        let pad = prefixed(line, tokens.next(), 'p', "padding")?;
                        let d = match tokens.peek() {
                            Some(t) if t.starts_with('d') => prefixed(line, tokens.next(), 'd', "dilation")?,
                            _ => 1,
                        };
                        if keyword == "conv" {
                            LayerSpec::conv(out, k, s, pad, d)
                        } else {
                            LayerSpec::transconv(out, k, s, pad, d)
                        }
                    }
                    "maxpool" => {
                        let k = kernel(line, tokens.next())?;
                        let s = prefixed(line, tokens.next(), 's', "stride")?;
                        let mut l = LayerSpec::maxpool(k, s);
                        if matches!(tokens.peek(), Some(t) if t.starts_with('p')) {
                            l.padding = prefixed(line, tokens.next(), 'p', "padding")?;
                        }
                        if matches!(tokens.peek(), Some(t) if t.starts_with('d')) {
                            l.dilation = prefixed(line, tokens.next(), 'd', "dilation")?;
                        }
                        l
                    }
                    "upconv" => {
                        let factor = number(line, tokens.next(), "upsampling factor")?;
                        let out = number(line, tokens.next(), "output channel count")?;
                        let k = kernel(line, tokens.next())?;
                        let s = prefixed(line, tokens.next(), 's', "stride")?;
                        let pad = prefixed(line, tokens.next(), 'p', "padding")?;
                        LayerSpec::upconv(factor, out, k, s, pad)
                    }
                    _ => LayerSpec::upsample(number(line, tokens.next(), "upsampling factor")?),
                };
                while let Some(t) = tokens.next() {
                    match t {
                        "expect" if layer.declared_out.is_none() => {
                            layer.declared_out = Some(shape(line, &mut tokens)?);
                        }
                        "share" if layer.sharing_group.is_none() => {
                            let tag = tokens
                                .next()
                                .ok_or_else(|| parse_err(line, "missing share tag"))?;
                            layer.sharing_group = Some(tag.to_string());
                        }
                        other => return Err(parse_err(line, format!("unexpected `{other}`"))),
                    }
                }
                layer.line = line;
                if keyword != "maxpool" && keyword != "upsample" && layer.stride == 0 {
                    return Err(parse_err(line, "stride must be at least 1"));
                }
                if layer.kernel == 0 || layer.stride == 0 || layer.dilation == 0 {
                    return Err(parse_err(line, "kernel, stride and dilation must be at least 1"));
                }
                p.layers.push(layer);
            }
            other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
        }
    }
    match pending {
        Some(p) => p.finish(&mut file.specs, last_line)?,
        None => return Err(parse_err(last_line.max(1), "no network defined")),
    }
    Ok(file)
}

/// A shape mismatch counted once: shared layers are keyed by their tag, so
/// the same row replicated across coupled networks is a single finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub key: String,
    pub nets: Vec<String>,
    pub index: usize,
    pub declared: Shape,
    pub inferred: Shape,
}

/// Traces and coupling check for a whole architecture file.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchReport {
    pub traces: Vec<ShapeTrace>,
    pub coupling: Option<CouplingReport>,
}

impl ArchReport {
    pub fn findings(&self) -> Vec<Finding> {
        let mut out: Vec<Finding> = Vec::new();
        for t in &self.traces {
            for row in t.mismatches() {
                let key = match &row.sharing_group {
                    Some(tag) => format!("share:{tag}"),
                    None => format!("{}:{}", t.net, row.index),
                };
                match out.iter_mut().find(|f| f.key == key) {
                    Some(f) => f.nets.push(t.net.clone()),
                    None => out.push(Finding {
                        key,
                        nets: vec![t.net.clone()],
                        index: row.index,
                        declared: row.declared.unwrap(),
                        inferred: row.inferred,
                    }),
                }
            }
        }
        out
    }

    pub fn coupling_violations(&self) -> usize {
        self.coupling.as_ref().map_or(0, |c| c.violations.len())
    }

    pub fn is_clean(&self) -> bool {
        self.findings().is_empty() && self.coupling_violations() == 0
    }

    /// Human-readable per-row table with mismatches marked.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.traces {
            let _ = writeln!(s, "net {} (input {})", t.net, t.input);
            let _ = writeln!(
                s,
                "  {:>3}  {:<9}  {:<14}  {:<14}  {:<14}  {:>12}  status",
                "#", "layer", "input", "inferred", "declared", "params"
            );
            for r in &t.rows {
                let declared = r.declared.map_or("-".to_string(), |d| d.to_string());
                let status = match r.matches() {
                    Some(true) => "ok".to_string(),
                    Some(false) => format!("MISMATCH (inferred {}, declared {})", r.inferred, declared),
                    None => "unchecked".to_string(),
                };
                let kind = match &r.sharing_group {
                    Some(tag) => format!("{}[{}]", r.kind, tag),
                    None => r.kind.to_string(),
                };
                let _ = writeln!(
                    s,
                    "  {:>3}  {:<9}  {:<14}  {:<14}  {:<14}  {:>12}  {}",
                    r.index,
                    kind,
                    r.input.to_string(),
                    r.inferred.to_string(),
                    declared,
                    r.params,
                    status
                );
            }
            let _ = writeln!(
                s,
                "  {}/{} declared shapes match, output {}, {} parameters",
                t.matched(),
                t.declared(),
                t.output(),
                t.total_params()
            );
        }
        if let Some(c) = &self.coupling {
            let _ = writeln!(
                s,
                "coupling: {} share groups, {} violations",
                c.groups.len(),
                c.violations.len()
            );
            for v in &c.violations {
                let _ = writeln!(s, "  {v}");
            }
        }
        let findings = self.findings();
        let _ = writeln!(s, "findings: {}", findings.len());
        for f in &findings {
            let _ = writeln!(
                s,
                "  layer {} of {}: declared {}, inferred {}",
                f.index,
                f.nets.join(", "),
                f.declared,
                f.inferred
            );
        }
        s.push_str("note: inputs concatenated through skip connections are not modelled; channel counts at merge points are unchecked\n");
        s
    }
}

/// Parses, traces every network and, when several networks are present,
/// verifies their weight sharing.
pub fn verify_text(text: &str, default_name: &str, bias: bool) -> Result<ArchReport, ArchError> {
    let file = parse_arch(text, default_name)?;
    let traces = file
        .specs
        .iter()
        .map(|s| trace(s, bias))
        .collect::<Result<Vec<_>, _>>()?;
    for spec in &file.specs {
        for (i, layer) in spec.layers.iter().enumerate() {
            if let Some(tag) = layer.sharing_group.as_ref().filter(|t| !file.groups.contains(*t)) {
                return Err(ArchError::UnknownTag {
                    net: spec.name.clone(),
                    index: i + 1,
                    tag: tag.clone(),
                });
            }
        }
    }
    let has_tags = file
        .specs
        .iter()
        .any(|s| s.layers.iter().any(|l| l.sharing_group.is_some()));
    let coupling = if file.specs.len() >= 2 && has_tags {
        Some(verify_coupling(&file.specs, &file.groups)?)
    } else {
        None
    };
    Ok(ArchReport { traces, coupling })
}
