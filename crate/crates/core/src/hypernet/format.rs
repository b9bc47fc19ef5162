//! Hypernetwork checkpoints.
//!
//! `#regionfl hypernet v1 owner=.. embed_dim=.. hidden_dim=.. peers=..`,
//! then the embedding as one comma-separated line, then one network
//! parameter per line.

use std::path::Path;

use super::Hypernetwork;
use crate::error::{Error, Result};
use crate::model::{param_count, ParamVector};
use crate::textio::{body, join, parse_field, parse_list, read_lines, write_text, Header};

pub fn write_hypernet(path: &Path, hn: &Hypernetwork) -> Result<()> {
    let mut out = Header::render(
        "hypernet",
        1,
        &[
            ("owner", hn.owner().to_string()),
            ("embed_dim", hn.embed_dim().to_string()),
            ("hidden_dim", hn.hidden_dim().to_string()),
            ("peers", join(hn.peer_ids(), ",")),
        ],
    );
    out.push('\n');
    out.push_str(&join(hn.embedding(), ","));
    out.push('\n');
    for v in hn.params().values() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_hypernet(path: &Path) -> Result<Hypernetwork> {
    let lines = read_lines(path)?;
    let header = Header::parse(path, &lines, "hypernet", 1)?;
    let owner: usize = header.get("owner")?;
    let embed_dim: usize = header.get("embed_dim")?;
    let hidden_dim: usize = header.get("hidden_dim")?;
    let peers: Vec<usize> = header.get_list("peers")?;
    let mut rows = body(&lines);
    let (line, first) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 2, "missing embedding line"))?;
    let embedding: Vec<f64> = parse_list(path, line, first, ',')?;
    if embedding.len() != embed_dim {
        return Err(Error::parse(path, line, format!("expected {embed_dim} embedding values")));
    }
    let shape = [embed_dim, hidden_dim, peers.len()];
    let values = rows
        .map(|(line, text)| parse_field::<f64>(path, line, text, "parameter"))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != param_count(&shape) {
        return Err(Error::parse(
            path,
            lines.len(),
            format!("expected {} parameters, found {}", param_count(&shape), values.len()),
        ));
    }
    let params = ParamVector::from_values(&shape, values)?;
    Hypernetwork::from_parts(owner, peers, embedding, params).map_err(|e| Error::parse(path, 1, e.to_string()))
}
