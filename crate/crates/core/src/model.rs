//! Plain-text model format.
//!
//! ```text
//! nlcnn-model 1
//! input <rows> <cols>
//! eps <eps>
//! classes <K>
//! layers <L>
//! layer <l> <variant> <k_h> <k_w> <stride_t> <stride_c> <activation> <channels> <v_min> <v_max> <mode>
//! tensor <name> <ndim> <dim>...
//! <row-major values separated by spaces>
//! ...
//! ```
//!
//! Per layer and channel the tensors are `w1`, `bias` and then the exponent
//! payloads in variant order (`w2`, `w3` + `w4`, `w5`); the head follows as
//! `head_w` (K x F) and `head_b`. Exponents are stored as trained, i.e. the
//! unconstrained values under reparameterization. Floats use Rust's shortest
//! round-trip scientific formatting, so save/load is exact and byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use crate::constraints::ConstraintPolicy;
use crate::error::{Error, Result};
use crate::nlconv::{Channel, Ewm, LayerParams};
use crate::numerics::Tensor;
use crate::training::{ConvLayer, Dense, Network};

pub const MODEL_MAGIC: &str = "nlcnn-model";
pub const MODEL_VERSION: u32 = 1;

fn push_tensor(out: &mut String, name: &str, t: &Tensor) {
    let _ = write!(out, "tensor {name} {}", t.ndim());
    for d in t.shape() {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    let mut first = true;
    for v in t.data() {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn exponent_names(ewm: &Ewm) -> &'static [&'static str] {
    match ewm {
        Ewm::Standard => &[],
        Ewm::Elementwise(_) => &["w2"],
        Ewm::RowShared(_) => &["w2_row"],
        Ewm::ColShared(_) => &["w2_col"],
        Ewm::Bilinear { .. } => &["w3", "w4"],
        Ewm::FullMatrix(_) => &["w5"],
    }
}

pub fn format_model(net: &Network) -> String {
    let mut out = format!("{MODEL_MAGIC} {MODEL_VERSION}\n");
    let _ = writeln!(out, "input {} {}", net.input_rows, net.input_cols);
    let _ = writeln!(out, "eps {:e}", net.eps);
    let _ = writeln!(out, "classes {}", net.classes());
    let _ = writeln!(out, "layers {}", net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let p = &layer.params;
        let _ = writeln!(
            out,
            "layer {l} {} {} {} {} {} {} {} {:e} {:e} {}",
            p.kind(),
            p.k_h,
            p.k_w,
            p.stride_t,
            p.stride_c,
            p.activation,
            p.out_channels(),
            layer.policy.v_min,
            layer.policy.v_max,
            layer.policy.mode
        );
        for ch in &p.channels {
            push_tensor(&mut out, "w1", &ch.w1);
            push_tensor(&mut out, "bias", &Tensor::vector(vec![ch.bias]).expect("finite bias"));
            for (name, t) in exponent_names(&ch.ewm).iter().zip(ch.ewm.tensors()) {
                push_tensor(&mut out, name, t);
            }
        }
    }
    push_tensor(&mut out, "head_w", &net.head.weights);
    push_tensor(&mut out, "head_b", &net.head.bias);
    out
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_model(net))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    parse_model(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    /// Reads a line that starts with `key` and returns the remaining fields.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(k) if k == key => Ok(fields.collect()),
            other => Err(self.err(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("invalid number `{s}`")))
    }

    fn count(&self, fields: &[&str], n: usize) -> Result<()> {
        if fields.len() == n {
            Ok(())
        } else {
            Err(self.err(format!("expected {n} fields, found {}", fields.len())))
        }
    }

    fn tensor(&mut self, name: &str) -> Result<Tensor> {
        let head = self.keyed("tensor")?;
        if head.first() != Some(&name) {
            return Err(self.err(format!(
                "expected tensor `{name}`, found `{}`",
                head.first().unwrap_or(&"")
            )));
        }
        let ndim: usize = self.num(head.get(1).ok_or_else(|| self.err("missing ndim"))?)?;
        self.count(&head, 2 + ndim)?;
        let shape = head[2..].iter().map(|s| self.num(s)).collect::<Result<Vec<usize>>>()?;
        let data = self
            .next_line()?
            .split_whitespace()
            .map(|s| self.num(s))
            .collect::<Result<Vec<f64>>>()?;
        Tensor::new(shape, data).map_err(|e| self.err(e.to_string()))
    }
}

pub fn parse_model(text: &str) -> Result<Network> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let magic = lines.keyed(MODEL_MAGIC)?;
    lines.count(&magic, 1)?;
    let version: u32 = lines.num(magic[0])?;
    if version != MODEL_VERSION {
        return Err(lines.err(format!("unsupported model version {version}")));
    }
    let input = lines.keyed("input")?;
    lines.count(&input, 2)?;
    let (input_rows, input_cols) = (lines.num(input[0])?, lines.num(input[1])?);
    let eps_f = lines.keyed("eps")?;
    lines.count(&eps_f, 1)?;
    let eps: f64 = lines.num(eps_f[0])?;
    let classes_f = lines.keyed("classes")?;
    lines.count(&classes_f, 1)?;
    let classes: usize = lines.num(classes_f[0])?;
    let layers_f = lines.keyed("layers")?;
    lines.count(&layers_f, 1)?;
    let n_layers: usize = lines.num(layers_f[0])?;

    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let f = lines.keyed("layer")?;
        lines.count(&f, 11)?;
        if lines.num::<usize>(f[0])? != l {
            return Err(lines.err(format!("expected layer {l}")));
        }
        let parse_err = |e: Error| lines.err(e.to_string());
        let kind = f[1].parse().map_err(parse_err)?;
        let (k_h, k_w): (usize, usize) = (lines.num(f[2])?, lines.num(f[3])?);
        let (stride_t, stride_c) = (lines.num(f[4])?, lines.num(f[5])?);
        let activation = f[6].parse().map_err(parse_err)?;
        let m: usize = lines.num(f[7])?;
        let mode = f[10].parse().map_err(parse_err)?;
        let policy = ConstraintPolicy::new(lines.num(f[8])?, lines.num(f[9])?, mode).map_err(parse_err)?;
        let names = exponent_names(&crate::constraints::neutral_exponents(kind, k_h, k_w));
        let mut channels = Vec::with_capacity(m);
        for _ in 0..m {
            let w1 = lines.tensor("w1")?;
            let bias = lines.tensor("bias")?;
            if bias.len() != 1 {
                return Err(lines.err("bias must hold one value"));
            }
            let payload = names.iter().map(|n| lines.tensor(n)).collect::<Result<Vec<_>>>()?;
            let ewm = Ewm::from_tensors(kind, payload).map_err(|e| lines.err(e.to_string()))?;
            channels.push(Channel {
                w1,
                bias: bias.data()[0],
                ewm,
            });
        }
        layers.push(ConvLayer {
            params: LayerParams {
                k_h,
                k_w,
                stride_t,
                stride_c,
                activation,
                channels,
            },
            policy,
        });
    }
    let weights = lines.tensor("head_w")?;
    let bias = lines.tensor("head_b")?;
    if weights.ndim() != 2 || weights.shape()[0] != classes {
        return Err(lines.err(format!("head_w must have {classes} rows")));
    }
    let net = Network {
        input_rows,
        input_cols,
        layers,
        head: Dense { weights, bias },
        eps,
    };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{EnforceMode, ReparamKind};
    use crate::nlconv::{Activation, VariantKind};
    use crate::numerics::SeededRng;
    use crate::training::LayerSpec;

    fn net(policy: ConstraintPolicy) -> Network {
        let specs: Vec<LayerSpec> = VariantKind::ALL
            .iter()
            .take(3)
            .map(|&variant| LayerSpec {
                variant,
                k_h: 2,
                k_w: 2,
                stride_t: 1,
                stride_c: 1,
                out_channels: 2,
                activation: Activation::Relu,
            })
            .collect();
        Network::new(9, 2, &specs, 3, policy, &mut SeededRng::new(4)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_for_all_variants() {
        for variant in VariantKind::ALL {
            let spec = LayerSpec {
                variant,
                k_h: 3,
                k_w: 2,
                stride_t: 2,
                stride_c: 1,
                out_channels: 2,
                activation: Activation::Tanh,
            };
            let policy = ConstraintPolicy::new(-1.5, 3.0, EnforceMode::Reparam(ReparamKind::HardSigmoidClip)).unwrap();
            let mut n = Network::new(7, 3, &[spec], 2, policy, &mut SeededRng::new(8)).unwrap();
            let mut rng = SeededRng::new(1);
            for ch in &mut n.layers[0].params.channels {
                for t in ch.ewm.tensors_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v += rng.normal() * 1e-3);
                }
            }
            let text = format_model(&n);
            let back = parse_model(&text).unwrap();
            assert_eq!(back, n, "{variant}");
            assert_eq!(format_model(&back), text);
        }
    }

    #[test]
    fn header_and_layout() {
        let text = format_model(&net(ConstraintPolicy::default()));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("nlcnn-model 1"));
        assert_eq!(lines.next(), Some("input 9 2"));
        assert_eq!(lines.next(), Some("eps 1e-6"));
        assert_eq!(lines.next(), Some("classes 3"));
        assert_eq!(lines.next(), Some("layers 3"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("layer 0 standard 2 2 1 1 relu 2 -2e0 4e0 clip"));
    }

    #[test]
    fn corrupt_files_rejected() {
        let good = format_model(&net(ConstraintPolicy::default()));
        assert!(parse_model(&good.replacen("nlcnn-model 1", "nlcnn-model 2", 1)).is_err());
        assert!(parse_model(&good.replacen("input 9 2", "input 9 3", 1)).is_err());
        assert!(parse_model(&good[..good.len() / 2]).is_err());
        let err = parse_model(&good.replacen("classes 3", "classes x", 1)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }
}
