//! Line-oriented model-file reader and writer.
//!
//! ```text
//! # comment
//! name lenet-c
//! batch 256
//! input 28 28 1
//! conv 20 k5 s1 p0 pool 2 2 act relu
//! fc 10
//! ```

use super::{
    is_identifier, Activation, InputDims, LayerKind, LayerSpec, NetworkModel, Pool,
    DEFAULT_PRECISION_BYTES, MAX_EXTENT,
};
use crate::error::{Error, ParseError, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Token<'_> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

fn tokenize(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in body
        .char_indices()
        .chain(std::iter::once((body.len(), ' ')))
    {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &body[s..i],
                    line: line_no,
                    column: body[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    tokens
}

fn number(tok: &Token<'_>, what: &str) -> std::result::Result<u64, ParseError> {
    let n = tok
        .text
        .parse::<u64>()
        .map_err(|_| tok.err(format!("expected {what}, found `{}`", tok.text)))?;
    if n > MAX_EXTENT {
        return Err(tok.err(format!("{what} exceeds {MAX_EXTENT}")));
    }
    Ok(n)
}

fn positive(tok: &Token<'_>, what: &str) -> std::result::Result<u64, ParseError> {
    match number(tok, what)? {
        0 => Err(tok.err(format!("{what} must be positive"))),
        n => Ok(n),
    }
}

/// `k5`, `s2`, `p1` style prefixed integers.
fn prefixed(tok: &Token<'_>, prefix: char, what: &str) -> std::result::Result<u64, ParseError> {
    let rest = tok.text.strip_prefix(prefix).ok_or_else(|| {
        tok.err(format!(
            "expected {what} as `{prefix}<n>`, found `{}`",
            tok.text
        ))
    })?;
    let n = rest.parse::<u64>().map_err(|_| {
        tok.err(format!(
            "expected {what} as `{prefix}<n>`, found `{}`",
            tok.text
        ))
    })?;
    if n > MAX_EXTENT {
        return Err(tok.err(format!("{what} exceeds {MAX_EXTENT}")));
    }
    Ok(n)
}

struct Cursor<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    line_no: usize,
    line_len: usize,
}

impl<'t, 'a> Cursor<'t, 'a> {
    fn next(&mut self, what: &str) -> std::result::Result<Token<'a>, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(ParseError {
                line: self.line_no,
                column: self.line_len + 1,
                message: format!("expected {what}, found end of line"),
            }),
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn finish(&self) -> std::result::Result<(), ParseError> {
        match self.peek() {
            Some(t) => Err(t.err(format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    }
}

fn activation(cur: &mut Cursor<'_, '_>) -> std::result::Result<Activation, ParseError> {
    let tok = cur.next("activation")?;
    match tok.text {
        "relu" => Ok(Activation::Relu),
        "sigmoid" => Ok(Activation::Sigmoid),
        "tanh" => Ok(Activation::Tanh),
        "none" => Ok(Activation::None),
        other => Err(tok.err(format!(
            "unknown activation `{other}` (expected relu, sigmoid, tanh)"
        ))),
    }
}

struct RawLayer {
    spec: LayerSpec,
    line: usize,
}

fn conv_line(cur: &mut Cursor<'_, '_>) -> std::result::Result<LayerSpec, ParseError> {
    let out = positive(&cur.next("output channel count")?, "output channel count")?;
    let ktok = cur.next("kernel size")?;
    let kernel = prefixed(&ktok, 'k', "kernel size")?;
    if kernel == 0 {
        return Err(ktok.err("kernel size must be positive"));
    }
    let mut spec = LayerSpec::conv(0, out, kernel);
    let (mut have_s, mut have_p, mut have_pool, mut have_act) = (false, false, false, false);
    while let Some(tok) = cur.peek() {
        cur.pos += 1;
        match tok.text {
            "pool" if !have_pool => {
                let window = positive(&cur.next("pool window")?, "pool window")?;
                let stride = positive(&cur.next("pool stride")?, "pool stride")?;
                spec.pool = Some(Pool { window, stride });
                have_pool = true;
            }
            "act" if !have_act => {
                spec.activation = activation(cur)?;
                have_act = true;
            }
            t if t.starts_with('s') && !have_s && !have_pool && !have_act => {
                spec.stride = prefixed(&tok, 's', "stride")?;
                if spec.stride == 0 {
                    return Err(tok.err("stride must be positive"));
                }
                have_s = true;
            }
            t if t.starts_with('p') && t != "pool" && !have_p && !have_pool && !have_act => {
                spec.padding = prefixed(&tok, 'p', "padding")?;
                have_p = true;
            }
            other => return Err(tok.err(format!("unexpected `{other}` in conv layer"))),
        }
    }
    Ok(spec)
}

fn fc_line(cur: &mut Cursor<'_, '_>) -> std::result::Result<LayerSpec, ParseError> {
    let out = positive(&cur.next("output width")?, "output width")?;
    let mut spec = LayerSpec::fc(0, out);
    if let Some(tok) = cur.peek() {
        if tok.text != "act" {
            return Err(tok.err(format!("unexpected `{}` in fc layer", tok.text)));
        }
        cur.pos += 1;
        spec.activation = activation(cur)?;
    }
    cur.finish()?;
    Ok(spec)
}

/// Parses a model file, validating the result. Any failure carries the line
/// and column it was detected at.
pub fn parse_model(text: &str) -> Result<NetworkModel> {
    let mut name: Option<String> = None;
    let mut batch: Option<u64> = None;
    let mut input: Option<InputDims> = None;
    let mut precision: Option<u32> = None;
    let mut layers: Vec<RawLayer> = Vec::new();
    let mut last_line = 0;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let tokens = tokenize(line_no, line);
        let Some(head) = tokens.first().copied() else {
            continue;
        };
        let mut cur = Cursor {
            tokens: &tokens,
            pos: 1,
            line_no,
            line_len: line.split('#').next().unwrap_or("").chars().count(),
        };
        let dup = |what: &str| head.err(format!("duplicate `{what}` header"));
        match head.text {
            "name" => {
                if name.is_some() {
                    return Err(dup("name").into());
                }
                let tok = cur.next("network name")?;
                if !is_identifier(tok.text) {
                    return Err(tok.err(format!("bad network name `{}`", tok.text)).into());
                }
                name = Some(tok.text.to_string());
                cur.finish()?;
            }
            "batch" => {
                if batch.is_some() {
                    return Err(dup("batch").into());
                }
                batch = Some(positive(&cur.next("batch size")?, "batch size")?);
                cur.finish()?;
            }
            "input" => {
                if input.is_some() {
                    return Err(dup("input").into());
                }
                let height = positive(&cur.next("input height")?, "input height")?;
                let width = positive(&cur.next("input width")?, "input width")?;
                let channels = positive(&cur.next("input channels")?, "input channels")?;
                input = Some(InputDims {
                    height,
                    width,
                    channels,
                });
                cur.finish()?;
            }
            "precision" => {
                if precision.is_some() {
                    return Err(dup("precision").into());
                }
                let tok = cur.next("precision in bytes")?;
                let p = positive(&tok, "precision in bytes")?;
                precision =
                    Some(u32::try_from(p).map_err(|_| tok.err("precision out of range"))?);
                cur.finish()?;
            }
            "conv" => layers.push(RawLayer {
                spec: conv_line(&mut cur)?,
                line: line_no,
            }),
            "fc" => layers.push(RawLayer {
                spec: fc_line(&mut cur)?,
                line: line_no,
            }),
            other => {
                return Err(head
                    .err(format!(
                        "unknown directive `{other}` (expected name, batch, input, precision, conv, fc)"
                    ))
                    .into())
            }
        }
    }

    let eof = |what: &str| ParseError {
        line: last_line + 1,
        column: 1,
        message: format!("missing `{what}` header"),
    };
    let name = name.ok_or_else(|| eof("name"))?;
    let batch = batch.ok_or_else(|| eof("batch"))?;
    let input = input.ok_or_else(|| eof("input"))?;
    if layers.is_empty() {
        return Err(ParseError {
            line: last_line + 1,
            column: 1,
            message: Error::EmptyNetwork.to_string(),
        }
        .into());
    }

    // Input channels follow from the running geometry.
    let mut h = input.height;
    let mut w = input.width;
    let mut c = input.channels;
    let mut specs = Vec::with_capacity(layers.len());
    for raw in layers {
        let mut spec = raw.spec;
        let at = |message: String| ParseError {
            line: raw.line,
            column: 1,
            message,
        };
        match spec.kind {
            LayerKind::Conv => {
                spec.in_channels = c;
                let reduce = |x: u64| -> Option<u64> {
                    let padded = x + 2 * spec.padding;
                    let y = padded.checked_sub(spec.kernel)? / spec.stride + 1;
                    match spec.pool {
                        Some(p) => p.reduce(y),
                        None => Some(y),
                    }
                };
                match (reduce(h), reduce(w)) {
                    (Some(nh), Some(nw)) => {
                        h = nh;
                        w = nw;
                    }
                    _ => return Err(at("output extent collapses below 1".into()).into()),
                }
                c = spec.out_channels;
            }
            LayerKind::FullyConnected => {
                spec.in_channels = h
                    .checked_mul(w)
                    .and_then(|x| x.checked_mul(c))
                    .ok_or_else(|| at("flattened input overflows".into()))?;
                h = 1;
                w = 1;
                c = spec.out_channels;
            }
        }
        specs.push((spec, raw.line));
    }

    let line_of = |layer: usize| specs.get(layer).map(|s| s.1).unwrap_or(last_line + 1);
    let model = NetworkModel {
        name,
        batch,
        input,
        layers: specs.iter().map(|s| s.0.clone()).collect(),
        precision_bytes: precision.unwrap_or(DEFAULT_PRECISION_BYTES),
    };
    model.validate().map_err(|e| {
        let line = match &e {
            Error::ChannelMismatch { layer, .. }
            | Error::ConvAfterFc { layer }
            | Error::ShapeUnderflow { layer, .. } => line_of(*layer),
            _ => last_line + 1,
        };
        Error::Parse(ParseError {
            line,
            column: 1,
            message: e.to_string(),
        })
    })?;
    Ok(model)
}

/// Byte-oriented entry point; invalid UTF-8 is reported like any other
/// syntax error.
pub fn parse_model_bytes(bytes: &[u8]) -> Result<NetworkModel> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_model(text),
        Err(e) => {
            let good = &bytes[..e.valid_up_to()];
            let line = good.iter().filter(|&&b| b == b'\n').count() + 1;
            let line_start = good.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            let column = std::str::from_utf8(&good[line_start..])
                .map(|s| s.chars().count())
                .unwrap_or(0)
                + 1;
            Err(ParseError {
                line,
                column,
                message: "invalid UTF-8".into(),
            }
            .into())
        }
    }
}

/// Writes the canonical model-file form.
pub fn emit_model(model: &NetworkModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name {}", model.name);
    let _ = writeln!(out, "batch {}", model.batch);
    let _ = writeln!(
        out,
        "input {} {} {}",
        model.input.height, model.input.width, model.input.channels
    );
    if model.precision_bytes != DEFAULT_PRECISION_BYTES {
        let _ = writeln!(out, "precision {}", model.precision_bytes);
    }
    for layer in &model.layers {
        match layer.kind {
            LayerKind::Conv => {
                let _ = write!(
                    out,
                    "conv {} k{} s{} p{}",
                    layer.out_channels, layer.kernel, layer.stride, layer.padding
                );
                if let Some(pool) = layer.pool {
                    let _ = write!(out, " pool {} {}", pool.window, pool.stride);
                }
            }
            LayerKind::FullyConnected => {
                let _ = write!(out, "fc {}", layer.out_channels);
            }
        }
        if let Some(act) = layer.activation.keyword() {
            let _ = write!(out, " act {act}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LENET: &str = "\
# lenet
name lenet-c
batch 256
input 28 28 1
conv 20 k5 pool 2 2 act relu   # trailing comment
conv 50 k5 s1 p0 pool 2 2 act relu
fc 500 act relu
fc 10
";

    #[test]
    fn parses_lenet() {
        let m = parse_model(LENET).unwrap();
        assert_eq!(m.name, "lenet-c");
        assert_eq!(m.batch, 256);
        assert_eq!(m.layers.len(), 4);
        assert_eq!(m.layers[1].in_channels, 20);
        assert_eq!(m.layers[2].in_channels, 800);
        assert_eq!(m.layers[2].activation, Activation::Relu);
        assert_eq!(m.layers[3].activation, Activation::None);
        assert_eq!(m.precision_bytes, 4);
    }

    #[test]
    fn emit_then_parse() {
        let m = parse_model(LENET).unwrap();
        assert_eq!(parse_model(&emit_model(&m)).unwrap(), m);
    }

    #[test]
    fn empty_layer_list() {
        let err = parse_model("name x\nbatch 1\ninput 1 1 1\n").unwrap_err();
        match err {
            Error::Parse(p) => {
                assert_eq!(p.line, 4);
                assert!(p.message.contains("no weighted layers"));
            }
            other => panic!("{other:?}"),
        }
    }

    fn diag(text: &str) -> ParseError {
        match parse_model(text).unwrap_err() {
            Error::Parse(p) => p,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let p = diag("name x\nbatch 0\n");
        assert_eq!((p.line, p.column), (2, 7));
        let p = diag("name x\nbatch 1\ninput 4 4 1\nconv 4 x5\n");
        assert_eq!((p.line, p.column), (4, 8));
        let p = diag("name x\nbatch 1\ninput 4 4 1\nfc 4 act gelu\n");
        assert_eq!((p.line, p.column), (4, 10));
        let p = diag("name x\nbatch 1\ninput 4 4 1\nconv 4\n");
        assert_eq!((p.line, p.column), (4, 7));
        let p = diag("bogus 1\n");
        assert_eq!((p.line, p.column), (1, 1));
        let p = diag("name x\nname y\n");
        assert_eq!(p.line, 2);
        let p = diag("name x\nbatch 1\ninput 4 4 1\nfc 4 extra\n");
        assert_eq!((p.line, p.column), (4, 6));
    }

    #[test]
    fn semantic_errors_point_at_layer() {
        let p = diag("name x\nbatch 1\ninput 4 4 1\nfc 4\nconv 2 k1\n");
        assert_eq!(p.line, 5);
        assert!(p.message.contains("follows a fully connected"));
        let p = diag("name x\nbatch 1\ninput 4 4 1\nconv 2 k5\n");
        assert_eq!(p.line, 4);
    }

    #[test]
    fn invalid_utf8_is_a_diagnostic() {
        let err = parse_model_bytes(b"name x\nba\xfftch 1\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse(ParseError {
                line: 2,
                column: 3,
                message: "invalid UTF-8".into()
            })
        );
    }

    #[test]
    fn precision_header_round_trips() {
        let m = parse_model("name x\nbatch 2\ninput 1 1 3\nprecision 2\nfc 4\n").unwrap();
        assert_eq!(m.precision_bytes, 2);
        assert_eq!(parse_model(&emit_model(&m)).unwrap(), m);
    }
}
