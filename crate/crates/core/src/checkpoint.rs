//! Versioned binary container for trained networks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LGCK"
//! 4       4     format_version (u32, currently 1)
//! 8       4     header_len H (u32)
//! 12      H     header: UTF-8 "key=value" lines, '\n'-terminated
//! 12+H    8·P   payload: f64 parameters of every net, in header order
//! ```
//!
//! Header keys written by [`Checkpoint::encode`]:
//!
//! * `nets=<name>,<name>,...`: payload order
//! * `net.<name>.layers=<in>:<out>:<activation>;...`
//! * `net.<name>.params=<count>`
//! * any metadata entries (`kind`, `seed`, `config.*`, ...) in insertion order
//!
//! Each net's parameters follow the flat ordering of
//! [`FeedForwardNet::params`](crate::network::FeedForwardNet::params). A file
//! whose payload is not exactly the declared size is rejected whole.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::network::{Activation, FeedForwardNet, Layer};
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    /// free-form metadata, kept in order
    pub meta: Vec<(String, String)>,
    pub nets: Vec<(String, FeedForwardNet)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn with_net(mut self, name: impl Into<String>, net: FeedForwardNet) -> Self {
        self.nets.push((name.into(), net));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn net(&self, name: &str) -> Option<&FeedForwardNet> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn require_net(&self, name: &str) -> Result<&FeedForwardNet> {
        self.net(name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no net named {name:?}")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut header = String::new();
        let names: Vec<&str> = self.nets.iter().map(|(n, _)| n.as_str()).collect();
        for n in &names {
            check_token(n)?;
            if n.contains(',') {
                return Err(Error::InvalidInput(format!("net name {n:?} contains ','")));
            }
        }
        header.push_str(&format!("nets={}\n", names.join(",")));
        for (name, net) in &self.nets {
            let layers: Vec<String> = net
                .layers()
                .iter()
                .map(|l| format!("{}:{}:{}", l.in_dim(), l.out_dim(), l.activation.name()))
                .collect();
            header.push_str(&format!("net.{name}.layers={}\n", layers.join(";")));
            header.push_str(&format!("net.{name}.params={}\n", net.param_count()));
        }
        for (k, v) in &self.meta {
            check_token(k)?;
            if k.starts_with("net.") || k == "nets" || v.contains('\n') {
                return Err(Error::InvalidInput(format!("bad metadata entry {k:?}")));
            }
            header.push_str(&format!("{k}={v}\n"));
        }

        let n_params: usize = self.nets.iter().map(|(_, n)| n.param_count()).sum();
        let mut out = Vec::with_capacity(12 + header.len() + 8 * n_params);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for (_, net) in &self.nets {
            for p in net.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 12 {
            return Err(Error::Parse(format!(
                "checkpoint truncated: {} bytes, fixed header needs 12",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Parse("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Parse(format!(
                    "checkpoint truncated inside header: expected {} header bytes, have {}",
                    header_len,
                    bytes.len() - 12
                ))
            })?;
        let header = core::str::from_utf8(&bytes[12..header_end])
            .map_err(|_| Error::Parse("checkpoint header is not UTF-8".into()))?;

        let mut entries: Vec<(String, String)> = Vec::new();
        for line in header.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header line {line:?}")))?;
            if entries.iter().any(|(ek, _)| ek == k) {
                return Err(Error::Parse(format!("duplicate header key {k:?}")));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        let lookup = |key: &str| -> Result<&str> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("missing header key {key:?}")))
        };

        let names: Vec<String> = match lookup("nets")? {
            "" => Vec::new(),
            s => s.split(',').map(String::from).collect(),
        };
        let mut shapes = Vec::with_capacity(names.len());
        let mut total = 0usize;
        for name in &names {
            let layers = parse_layers(lookup(&format!("net.{name}.layers"))?)?;
            let count: usize = layers.iter().map(|(i, o, _)| i * o + o).sum();
            let declared: usize = lookup(&format!("net.{name}.params"))?
                .parse()
                .map_err(|_| Error::Parse(format!("bad param count for {name}")))?;
            if declared != count {
                return Err(Error::Parse(format!(
                    "net {name}: declared {declared} params, layers imply {count}"
                )));
            }
            total += count;
            shapes.push(layers);
        }
        let payload = &bytes[header_end..];
        let expected = total * 8;
        if payload.len() != expected {
            return Err(Error::Parse(format!(
                "checkpoint payload: expected {expected} bytes, found {}",
                payload.len()
            )));
        }

        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut nets = Vec::with_capacity(names.len());
        for (name, layers) in names.into_iter().zip(shapes) {
            let mut built = Vec::with_capacity(layers.len());
            for (n_in, n_out, act) in layers {
                let w: Vec<f64> = floats.by_ref().take(n_in * n_out).collect();
                let b: Vec<f64> = floats.by_ref().take(n_out).collect();
                built.push(Layer {
                    weight: Matrix::from_vec(n_out, n_in, w)?,
                    bias: b,
                    activation: act,
                });
            }
            nets.push((name, FeedForwardNet::new(built)?));
        }
        let meta = entries
            .into_iter()
            .filter(|(k, _)| k != "nets" && !k.starts_with("net."))
            .collect();
        Ok(Checkpoint { meta, nets })
    }
}

fn check_token(s: &str) -> Result<()> {
    if s.is_empty() || s.contains('=') || s.contains('\n') {
        return Err(Error::InvalidInput(format!("bad checkpoint key {s:?}")));
    }
    Ok(())
}

fn parse_layers(s: &str) -> Result<Vec<(usize, usize, Activation)>> {
    let mut out = vec![];
    for spec in s.split(';') {
        let mut parts = spec.splitn(3, ':');
        let (Some(i), Some(o), Some(a)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("bad layer spec {spec:?}")));
        };
        let i: usize = i.parse().map_err(|_| Error::Parse(format!("bad layer spec {spec:?}")))?;
        let o: usize = o.parse().map_err(|_| Error::Parse(format!("bad layer spec {spec:?}")))?;
        if i == 0 || o == 0 {
            return Err(Error::Parse(format!("zero-width layer {spec:?}")));
        }
        out.push((i, o, Activation::parse(a)?));
    }
    Ok(out)
}
