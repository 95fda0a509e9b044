//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` little-endian format version, `u64` header
//! length, a JSON header, then every tensor's values as little-endian `f64`
//! in header order, and finally a SHA-256 digest of everything before it.
//! Values are stored bit-exactly, so a reloaded learner behaves identically.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::ddpg::{Learner, LearnerConfig};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network, NetworkSpec, ParameterSet};

pub const MAGIC: &[u8; 8] = b"FLOCKRL\0";
pub const FORMAT_VERSION: u32 = 1;

const GROUPS: [&str; 8] = [
    "actor",
    "critic",
    "target_actor",
    "target_critic",
    "actor_adam_m",
    "actor_adam_v",
    "critic_adam_m",
    "critic_adam_v",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    /// Episodes completed when the checkpoint was taken.
    episodes_done: usize,
    config: TrainConfig,
    actor_spec: NetworkSpec,
    critic_spec: NetworkSpec,
    learner: LearnerConfig,
    actor_adam: AdamConfig,
    critic_adam: AdamConfig,
    actor_adam_step: u64,
    critic_adam_step: u64,
    tensors: Vec<TensorEntry>,
}

/// A learner together with the run configuration that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub episodes_done: usize,
    pub config: TrainConfig,
    pub learner: Learner,
}

fn groups(learner: &Learner) -> [&ParameterSet; 8] {
    [
        &learner.actor,
        &learner.critic,
        &learner.target_actor,
        &learner.target_critic,
        &learner.actor_adam.first_moment,
        &learner.actor_adam.second_moment,
        &learner.critic_adam.first_moment,
        &learner.critic_adam.second_moment,
    ]
}

pub fn to_bytes(learner: &Learner, config: &TrainConfig, episodes_done: usize) -> Result<Vec<u8>> {
    let sets = groups(learner);
    let tensors = GROUPS
        .iter()
        .zip(sets)
        .flat_map(|(group, set)| {
            set.tensors().iter().map(move |t| TensorEntry {
                group: group.to_string(),
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
        })
        .collect();
    let header = Header {
        episodes_done,
        config: config.clone(),
        actor_spec: learner.actor_net.spec().clone(),
        critic_spec: learner.critic_net.spec().clone(),
        learner: learner.config,
        actor_adam: learner.actor_adam.config,
        critic_adam: learner.critic_adam.config,
        actor_adam_step: learner.actor_adam.step,
        critic_adam_step: learner.critic_adam.step,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 8 * sets.iter().map(|s| s.len()).sum::<usize>() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for set in sets {
        for v in set.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn fill(
    net: &Network,
    entries: &mut std::slice::Iter<'_, TensorEntry>,
    group: &str,
    blob: &mut &[u8],
) -> Result<ParameterSet> {
    let mut set = net.zero_params();
    for k in 0..set.tensors().len() {
        let entry = entries
            .next()
            .ok_or_else(|| malformed(format!("missing tensors for {group}")))?;
        let t = set.tensor_mut(k);
        if entry.group != group || entry.name != t.name || entry.shape != t.shape {
            return Err(malformed(format!(
                "tensor {}/{} {:?} does not fit {group}/{} {:?}",
                entry.group, entry.name, entry.shape, t.name, t.shape
            )));
        }
        let bytes = t.data.len() * 8;
        if blob.len() < bytes {
            return Err(malformed("truncated tensor data"));
        }
        let (head, rest) = blob.split_at(bytes);
        for (v, chunk) in t.data.iter_mut().zip(head.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("chunks of eight"));
        }
        *blob = rest;
    }
    Ok(set)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let expected = FORMAT_VERSION.to_string();
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::FormatVersion {
            expected,
            found: "no flockrl checkpoint header".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected,
            found: version.to_string(),
        });
    }
    if bytes.len() < 20 + 32 {
        return Err(malformed("file is truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(malformed("checksum mismatch, file is corrupted"));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("eight bytes")) as usize;
    let rest = &body[20..];
    if rest.len() < header_len {
        return Err(malformed("header length exceeds file size"));
    }
    let (json, mut blob) = rest.split_at(header_len);
    let header: Header = serde_json::from_slice(json)?;

    let actor_net = Network::new(header.actor_spec)?;
    let critic_net = Network::new(header.critic_spec)?;
    let mut entries = header.tensors.iter();
    let nets = [
        &actor_net, &critic_net, &actor_net, &critic_net, &actor_net, &actor_net, &critic_net, &critic_net,
    ];
    let mut sets = Vec::with_capacity(GROUPS.len());
    for (net, group) in nets.into_iter().zip(GROUPS) {
        sets.push(fill(net, &mut entries, group, &mut blob)?);
    }
    if entries.next().is_some() || !blob.is_empty() {
        return Err(malformed("unexpected trailing tensor data"));
    }
    let mut sets = sets.into_iter();
    let mut next = || sets.next().expect("eight groups");
    let (actor, critic, target_actor, target_critic) = (next(), next(), next(), next());
    let actor_adam = AdamState {
        config: header.actor_adam,
        first_moment: next(),
        second_moment: next(),
        step: header.actor_adam_step,
    };
    let critic_adam = AdamState {
        config: header.critic_adam,
        first_moment: next(),
        second_moment: next(),
        step: header.critic_adam_step,
    };
    Ok(Checkpoint {
        episodes_done: header.episodes_done,
        config: header.config,
        learner: Learner {
            actor_net,
            critic_net,
            actor,
            critic,
            target_actor,
            target_critic,
            actor_adam,
            critic_adam,
            config: header.learner,
        },
    })
}

/// Writes through a temporary sibling and renames, so a crash never leaves
/// a half-written checkpoint under the final name.
pub fn save(path: &Path, learner: &Learner, config: &TrainConfig, episodes_done: usize) -> Result<()> {
    let bytes = to_bytes(learner, config, episodes_done)?;
    let tmp = path.with_extension("partial");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
