//! Text snapshots of network parameters.
//!
//! Format: a header line `layers=<spec>`, then one line per parameter
//! tensor: name, rows, cols, then the values with 17 significant digits.
//! Round trips are bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{NetSpec, Network};

fn encode_dims(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("-")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('-')
        .map(|p| p.parse().map_err(|_| Error::Parse(format!("bad dimension `{}`", p))))
        .collect()
}

fn header(net: &Network) -> String {
    let spec = net.spec();
    let mut h = format!(
        "layers=enc:{};cls:{}",
        encode_dims(&spec.encoder),
        encode_dims(&spec.classifier)
    );
    if !spec.adversaries.is_empty() {
        let advs = spec
            .adversaries
            .iter()
            .map(|(name, dims, coeff)| format!("{}~{:.16e}:{}", name, coeff, encode_dims(dims)))
            .collect::<Vec<_>>()
            .join(",");
        h.push_str(";adv:");
        h.push_str(&advs);
    }
    write!(h, ";in:{}", spec.input_dim).unwrap();
    h
}

fn parse_header(line: &str) -> Result<NetSpec> {
    let body = line
        .strip_prefix("layers=")
        .ok_or_else(|| Error::Parse("snapshot header must start with `layers=`".into()))?;
    let mut encoder = None;
    let mut classifier = None;
    let mut adversaries = Vec::new();
    let mut input_dim = None;
    for part in body.split(';') {
        let (tag, rest) = part
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("bad header section `{}`", part)))?;
        match tag {
            "enc" => encoder = Some(parse_dims(rest)?),
            "cls" => classifier = Some(parse_dims(rest)?),
            "in" => {
                input_dim =
                    Some(rest.parse().map_err(|_| Error::Parse(format!("bad input dim `{}`", rest)))?)
            }
            "adv" => {
                for adv in rest.split(',') {
                    let (name, tail) = adv
                        .split_once('~')
                        .ok_or_else(|| Error::Parse(format!("bad adversary entry `{}`", adv)))?;
                    let (coeff, dims) = tail
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("bad adversary entry `{}`", adv)))?;
                    let coeff: f64 = coeff
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad reversal coefficient `{}`", coeff)))?;
                    adversaries.push((name.to_string(), parse_dims(dims)?, coeff));
                }
            }
            other => return Err(Error::Parse(format!("unknown header section `{}`", other))),
        }
    }
    Ok(NetSpec {
        input_dim: input_dim.ok_or_else(|| Error::Parse("header missing input dim".into()))?,
        encoder: encoder.ok_or_else(|| Error::Parse("header missing encoder dims".into()))?,
        classifier: classifier.ok_or_else(|| Error::Parse("header missing classifier dims".into()))?,
        adversaries,
    })
}

pub fn to_string(net: &Network) -> String {
    let mut out = header(net);
    out.push('\n');
    net.visit_params(|name, values| {
        // Weight tensors carry their matrix shape; biases are column vectors.
        let (rows, cols) = shape_of(net, name, values.len());
        write!(out, "{} {} {}", name, rows, cols).unwrap();
        for v in values {
            write!(out, " {:.16e}", v).unwrap();
        }
        out.push('\n');
    });
    out
}

fn shape_of(net: &Network, name: &str, len: usize) -> (usize, usize) {
    let find = |mlp: &super::Mlp, layer: usize, kind: &str| -> (usize, usize) {
        let l = &mlp.layers[layer];
        if kind == "w" {
            (l.weights.rows, l.weights.cols)
        } else {
            (l.bias.len(), 1)
        }
    };
    let parts: Vec<&str> = name.split('.').collect();
    let shape = match parts.as_slice() {
        ["enc", l, kind] => find(&net.encoder, l.parse().unwrap(), kind),
        ["cls", l, kind] => find(&net.classifier, l.parse().unwrap(), kind),
        ["adv", head, l, kind] => {
            let idx = net.adversary_index(head).expect("snapshot head exists");
            find(&net.adversaries[idx].mlp, l.parse().unwrap(), kind)
        }
        _ => (len, 1),
    };
    debug_assert_eq!(shape.0 * shape.1, len);
    shape
}

pub fn save(net: &Network, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(net))?;
    Ok(())
}

pub fn from_string(text: &str) -> Result<Network> {
    let mut lines = text.lines();
    let spec = parse_header(lines.next().ok_or_else(|| Error::Parse("empty snapshot".into()))?)?;
    // Build the skeleton, then overwrite every tensor from the file.
    let mut net = Network::build(&spec, 0);
    let mut tensors = std::collections::BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let name = it.next().ok_or_else(|| Error::Parse("missing tensor name".into()))?;
        let rows: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("tensor `{}`: bad rows", name)))?;
        let cols: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("tensor `{}`: bad cols", name)))?;
        let values: Vec<f64> = it
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("tensor `{}`: bad float `{}`", name, s))))
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(Error::Parse(format!(
                "tensor `{}`: expected {} values, got {}",
                name,
                rows * cols,
                values.len()
            )));
        }
        tensors.insert(name.to_string(), (rows, cols, values));
    }

    let mut names = Vec::new();
    net.visit_params(|name, _| names.push(name.to_string()));
    {
        let slices = net.param_slices_mut();
        for (name, slice) in names.iter().zip(slices) {
            let (_, _, values) = tensors
                .remove(name)
                .ok_or_else(|| Error::Parse(format!("snapshot missing tensor `{}`", name)))?;
            if values.len() != slice.len() {
                return Err(Error::Parse(format!("tensor `{}`: shape mismatch", name)));
            }
            slice.copy_from_slice(&values);
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Parse(format!("snapshot has unknown tensor `{}`", extra)));
    }
    Ok(net)
}

pub fn load(path: &Path) -> Result<Network> {
    from_string(&std::fs::read_to_string(path)?)
}
