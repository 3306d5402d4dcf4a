//! Built-in evaluation networks, stored as model files.

use crate::error::{Error, Result};
use crate::netspec::{parse_model, NetworkModel};

/// Batch size every built-in ships with.
pub const DEFAULT_BATCH: u64 = 256;

const SOURCES: [(&str, &str); 10] = [
    ("sfc", include_str!("../zoo/sfc.net")),
    ("sconv", include_str!("../zoo/sconv.net")),
    ("lenet-c", include_str!("../zoo/lenet-c.net")),
    ("cifar-c", include_str!("../zoo/cifar-c.net")),
    ("alexnet", include_str!("../zoo/alexnet.net")),
    ("vgg-a", include_str!("../zoo/vgg-a.net")),
    ("vgg-b", include_str!("../zoo/vgg-b.net")),
    ("vgg-c", include_str!("../zoo/vgg-c.net")),
    ("vgg-d", include_str!("../zoo/vgg-d.net")),
    ("vgg-e", include_str!("../zoo/vgg-e.net")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZooEntry {
    pub name: &'static str,
    pub model: NetworkModel,
    pub weighted_layer_count: usize,
}

/// Names of the built-ins, in canonical order.
pub fn names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

/// The model-file text of a built-in.
pub fn source(name: &str) -> Result<&'static str> {
    SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::UnknownNetwork {
            name: name.to_string(),
            available: names().join(", "),
        })
}

pub fn get(name: &str) -> Result<NetworkModel> {
    parse_model(source(name)?)
}

pub fn entry(name: &str) -> Result<ZooEntry> {
    let model = get(name)?;
    let (name, _) = SOURCES.iter().find(|(n, _)| *n == name).expect("checked");
    Ok(ZooEntry {
        name,
        weighted_layer_count: model.len(),
        model,
    })
}

/// Every built-in, in canonical order.
pub fn list() -> Vec<ZooEntry> {
    names()
        .into_iter()
        .map(|n| entry(n).expect("built-in models are valid"))
        .collect()
}
