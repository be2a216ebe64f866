//! Network serialization.
//!
//! Text format, version 1. Blank lines and lines starting with `#` are
//! ignored. The header comes first:
//!
//! ```text
//! epirisk-network 1
//! population <N>
//! workers <n_b>
//! beds <B>
//! mean_degree <k̂>
//! ward_degrees <bed-bed mean> <bed-worker mean>
//! ```
//!
//! followed by one `node <id> <group a|b|c> <age label or -> <λ_min> <λ_max>`
//! line per node in id order, then one `<u> <v> <tag>` line per edge with tag
//! in `cc bb bc aa ab`. Bed slot `s` has id `N + s`.
//!
//! The binary cache is a magic string, a little-endian `u32` version and the
//! bincode encoding of the whole network, ward occupancy included.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ContactBounds, ContactNetwork, Edge, EdgeKind, Group, NodeMeta, WardDegrees};
use crate::age::AgeBand;
use crate::error::{Error, Result};

fn format(path: &Path, message: impl Into<String>) -> Error {
    Error::format(path, message)
}

pub const TEXT_MAGIC: &str = "epirisk-network";
pub const TEXT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"EPRNET\0\0";
pub const BINARY_VERSION: u32 = 1;

pub fn write_text(net: &ContactNetwork, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_text_to(net, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_text_to(net: &ContactNetwork, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{TEXT_MAGIC} {TEXT_VERSION}")?;
    writeln!(out, "population {}", net.population())?;
    writeln!(out, "workers {}", net.worker_count())?;
    writeln!(out, "beds {}", net.bed_count())?;
    writeln!(out, "mean_degree {}", net.mean_degree_community())?;
    let wd = net.ward.degrees;
    writeln!(out, "ward_degrees {} {}", wd.bed_mean_degree, wd.bed_worker_mean_degree)?;
    for n in net.nodes() {
        let age = n.age_band.map_or("-", AgeBand::label);
        writeln!(
            out,
            "node {} {} {} {} {}",
            n.id,
            n.group.tag(),
            age,
            n.bounds.min,
            n.bounds.max
        )?;
    }
    for e in net.edges() {
        writeln!(out, "{} {} {}", e.a, e.b, e.kind.tag())?;
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<ContactNetwork> {
    let file = File::open(path)?;
    read_text_from(BufReader::new(file), path)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str, path: &Path, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| format(path, format!("line {line}: bad or missing {what}")))
}

pub fn read_text_from(reader: impl BufRead, path: &Path) -> Result<ContactNetwork> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            l.as_ref()
                .map(|s| {
                    let t = s.trim();
                    !t.is_empty() && !t.starts_with('#')
                })
                .unwrap_or(true)
        });
    let mut next_header = |key: &str| -> Result<(usize, Vec<String>)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| format(path, format!("missing header field {key}")))?;
        let line = line?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(format(path, format!("line {no}: expected {key}")));
        }
        Ok((no, toks.map(str::to_owned).collect()))
    };

    let (no, v) = next_header(TEXT_MAGIC)?;
    let version: u32 = parse(v.first().map(String::as_str), "version", path, no)?;
    if version != TEXT_VERSION {
        return Err(format(path, format!("unsupported version {version}")));
    }
    let (no, v) = next_header("population")?;
    let population: usize = parse(v.first().map(String::as_str), "population", path, no)?;
    let (no, v) = next_header("workers")?;
    let workers: usize = parse(v.first().map(String::as_str), "workers", path, no)?;
    let (no, v) = next_header("beds")?;
    let beds: usize = parse(v.first().map(String::as_str), "beds", path, no)?;
    let (no, v) = next_header("mean_degree")?;
    let k_hat: f64 = parse(v.first().map(String::as_str), "mean degree", path, no)?;
    let (no, v) = next_header("ward_degrees")?;
    let degrees = WardDegrees {
        bed_mean_degree: parse(v.first().map(String::as_str), "bed degree", path, no)?,
        bed_worker_mean_degree: parse(v.get(1).map(String::as_str), "bed-worker degree", path, no)?,
    };
    if workers > population {
        return Err(format(path, "more workers than people"));
    }

    let total = population + beds;
    let mut nodes = Vec::with_capacity(total);
    let mut edges = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let mut toks = line.split_whitespace();
        let first = toks.next().unwrap_or_default();
        if first == "node" {
            let id: usize = parse(toks.next(), "node id", path, no)?;
            if id != nodes.len() {
                return Err(format(path, format!("line {no}: node ids must be consecutive")));
            }
            let group = toks
                .next()
                .and_then(|t| t.chars().next())
                .and_then(Group::from_tag)
                .ok_or_else(|| format(path, format!("line {no}: bad group")))?;
            let age_tok = toks.next().unwrap_or_default();
            let age_band = match age_tok {
                "-" => None,
                label => Some(
                    AgeBand::from_label(label)
                        .ok_or_else(|| format(path, format!("line {no}: bad age band {label}")))?,
                ),
            };
            let min: f64 = parse(toks.next(), "lambda_min", path, no)?;
            let max: f64 = parse(toks.next(), "lambda_max", path, no)?;
            let bounds = ContactBounds::new(min, max)
                .map_err(|_| format(path, format!("line {no}: invalid contact bounds")))?;
            let expected = if id >= population {
                Group::HospitalBed
            } else if id < workers {
                Group::HealthcareWorker
            } else {
                Group::Community
            };
            if group != expected || age_band.is_some() == (group == Group::HospitalBed) {
                return Err(format(path, format!("line {no}: node {id} inconsistent with header")));
            }
            nodes.push(NodeMeta {
                id,
                group,
                age_band,
                bounds,
                k_ext: 0,
            });
        } else {
            let a: u32 = parse(Some(first), "edge endpoint", path, no)?;
            let b: u32 = parse(toks.next(), "edge endpoint", path, no)?;
            let kind = toks
                .next()
                .and_then(EdgeKind::from_tag)
                .ok_or_else(|| format(path, format!("line {no}: bad edge tag")))?;
            if a as usize >= total || b as usize >= total || a == b {
                return Err(format(path, format!("line {no}: invalid edge {a} {b}")));
            }
            edges.push(Edge { a, b, kind });
        }
    }
    if nodes.len() != total {
        return Err(format(
            path,
            format!("expected {total} node lines, found {}", nodes.len()),
        ));
    }
    Ok(ContactNetwork::from_parts(nodes, population, workers, edges, k_hat, degrees))
}

pub fn write_binary(net: &ContactNetwork, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    bincode::serialize_into(&mut out, net)?;
    out.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<ContactNetwork> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    let mut version = [0u8; 4];
    input
        .read_exact(&mut magic)
        .and_then(|_| input.read_exact(&mut version))
        .map_err(|_| format(path, "truncated header"))?;
    if &magic != BINARY_MAGIC {
        return Err(format(path, "not a network cache"));
    }
    let version = u32::from_le_bytes(version);
    if version != BINARY_VERSION {
        return Err(format(path, format!("unsupported cache version {version}")));
    }
    bincode::deserialize_from(input).map_err(Error::from)
}

/// Load either format, picking by the first bytes of the file.
pub fn read_any(path: &Path) -> Result<ContactNetwork> {
    let mut head = [0u8; 8];
    let n = File::open(path)?.read(&mut head)?;
    if n == 8 && &head == BINARY_MAGIC {
        read_binary(path)
    } else {
        read_text(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_static_network, NetworkConfig};

    #[test]
    fn text_round_trip_preserves_graph() {
        let net = generate_static_network(&NetworkConfig::with_population(400), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.txt");
        write_text(&net, &p).unwrap();
        let back = read_any(&p).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn binary_round_trip_preserves_graph() {
        let net = generate_static_network(&NetworkConfig::with_population(400), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.bin");
        write_binary(&net, &p).unwrap();
        assert_eq!(net, read_any(&p).unwrap());
    }

    #[test]
    fn rejects_bad_version_and_bad_edges() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, "epirisk-network 9\n").unwrap();
        assert!(matches!(read_text(&p), Err(Error::Format { .. })));

        let net = generate_static_network(&NetworkConfig::with_population(100), 2).unwrap();
        let mut buf = Vec::new();
        write_text_to(&net, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("0 0 bb\n");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(read_text(&p), Err(Error::Format { .. })));

        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"EPRNET\0\0\x07\0\0\0").unwrap();
        assert!(matches!(read_binary(&p), Err(Error::Format { .. })));
    }
}
