use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::objective::libsvm;
use crate::objective::{ClientDataset, DataPoint};
use crate::rng::{Purpose, RngStream};
use crate::shuffling::draw_permutation;

/// Reads a LibSVM file. Returns the points and the dimension (largest index).
pub fn load_libsvm(path: &Path) -> Result<(Vec<DataPoint>, usize), HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let raw = libsvm::parse(BufReader::new(file)).map_err(|e| match e {
        libsvm::LibsvmError::Io(io) => HarnessError::Io(format!("{}: {io}", path.display())),
        other => HarnessError::Data(format!("{}: {other}", path.display())),
    })?;
    let dim = raw.dim;
    let points = raw
        .into_points()
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok((points, dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Stable sort by label, then contiguous blocks.
    #[default]
    SortedEqualSplit,
    /// Seeded random permutation, then contiguous blocks.
    IidShuffleSplit,
}

/// Clients `0..M−1` get `⌊N/M⌋` points each; the last client gets the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionRule {
    pub kind: PartitionKind,
    pub clients: usize,
    /// Only used by [`PartitionKind::IidShuffleSplit`].
    pub seed: u64,
}

pub fn partition(points: Vec<DataPoint>, rule: PartitionRule) -> Result<Vec<ClientDataset>, HarnessError> {
    let (n_total, m) = (points.len(), rule.clients);
    if m == 0 || n_total < m {
        return Err(HarnessError::Config(format!("cannot split {n_total} points among {m} clients")));
    }
    let ordered: Vec<DataPoint> = match rule.kind {
        PartitionKind::SortedEqualSplit => {
            let mut p = points;
            p.sort_by(|a, b| a.label.total_cmp(&b.label));
            p
        }
        PartitionKind::IidShuffleSplit => {
            let perm = draw_permutation(n_total, &mut RngStream::new(rule.seed).rng(Purpose::Partition, 0, 0, 0));
            let mut slots: Vec<Option<DataPoint>> = points.into_iter().map(Some).collect();
            perm.iter().map(|&i| slots[i].take().expect("permutation")).collect()
        }
    };
    let base = n_total / m;
    let mut iter = ordered.into_iter();
    Ok((0..m)
        .map(|c| {
            let take = if c + 1 == m { n_total - base * (m - 1) } else { base };
            ClientDataset { client_id: c, points: iter.by_ref().take(take).collect() }
        })
        .collect())
}

/// `(count of −1, count of +1)` per client.
pub fn class_counts(clients: &[ClientDataset]) -> Vec<(usize, usize)> {
    clients
        .iter()
        .map(|c| {
            let neg = c.points.iter().filter(|p| p.label < 0.0).count();
            (neg, c.points.len() - neg)
        })
        .collect()
}
