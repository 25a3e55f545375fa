use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

pub const SPLIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Whole subjects held out per fold.
    Louo,
    /// Every subject contributes to every fold; one session per subject held out.
    Loso,
    /// Per-subject adapt/test halves.
    Online,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "louo" => Ok(Self::Louo),
            "loso" => Ok(Self::Loso),
            "online" => Ok(Self::Online),
            _ => Err(format!("unknown protocol {s:?} (louo, loso, online)")),
        }
    }
}

/// Instance counts per subject; instance indices are positions within a
/// subject's stored epoch list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub subjects: BTreeMap<u32, usize>,
}

impl Catalog {
    pub fn new(counts: impl IntoIterator<Item = (u32, usize)>) -> Self {
        Self {
            subjects: counts.into_iter().collect(),
        }
    }

    pub fn ids(&self) -> Vec<u32> {
        self.subjects.keys().copied().collect()
    }

    /// First `offline` subjects by id train the offline models; the rest
    /// are the online cohort.
    pub fn partition(&self, offline: usize) -> (Catalog, Catalog) {
        let mut it = self.subjects.iter().map(|(&k, &v)| (k, v));
        let first = Catalog::new(it.by_ref().take(offline));
        let rest = Catalog::new(it);
        (first, rest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    pub folds: usize,
    /// Fraction of each online subject's instances used for adaptation.
    pub online_rate: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            online_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineSplit {
    pub subject: u32,
    /// Adaptation stream, in presentation order.
    pub adapt: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum SplitAssignments {
    /// `folds[k]` lists the subjects tested in fold `k`.
    Louo {
        folds: Vec<Vec<u32>>,
    },
    /// `sessions[subject][k]` lists that subject's instances tested in fold `k`.
    /// Stored as a list because tagged enums cannot key maps by integer.
    Loso {
        #[serde(with = "subject_map")]
        sessions: BTreeMap<u32, Vec<Vec<usize>>>,
    },
    Online {
        subjects: Vec<OnlineSplit>,
    },
}

/// Per-subject `(train, test)` instance indices for one LOSO fold.
pub type LosoFold = BTreeMap<u32, (Vec<usize>, Vec<usize>)>;

/// Seeded, serializable assignment of instances to folds or phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub schema_version: u32,
    pub seed: u64,
    pub options: SplitOptions,
    pub assignments: SplitAssignments,
}

mod subject_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        subject: u32,
        sessions: Vec<Vec<usize>>,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<u32, Vec<Vec<usize>>>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(&subject, sessions)| Entry {
                subject,
                sessions: sessions.clone(),
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, Vec<Vec<usize>>>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.subject, e.sessions)).collect())
    }
}

fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Cut `items` into `k` contiguous chunks whose sizes differ by at most one;
/// the first `len % k` chunks get the extra element.
fn near_equal_chunks<T: Clone>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(items[at..at + len].to_vec());
        at += len;
    }
    out
}

pub fn make_splits(catalog: &Catalog, protocol: Protocol, options: &SplitOptions, seed: u64) -> Result<SplitPlan> {
    let k = options.folds;
    if k < 2 && protocol != Protocol::Online {
        return Err(DatasetError::Split(format!("need at least 2 folds, got {k}")));
    }
    if catalog.subjects.is_empty() {
        return Err(DatasetError::Split("catalog has no subjects".into()));
    }
    let assignments = match protocol {
        Protocol::Louo => {
            let ids = catalog.ids();
            if !ids.len().is_multiple_of(k) {
                return Err(DatasetError::Split(format!(
                    "{} subjects cannot be split into {k} equal folds",
                    ids.len()
                )));
            }
            let order: Vec<u32> = shuffled(ids.len(), seed, 0).into_iter().map(|i| ids[i]).collect();
            SplitAssignments::Louo {
                folds: order.chunks(ids.len() / k).map(<[u32]>::to_vec).collect(),
            }
        }
        Protocol::Loso => {
            let mut sessions = BTreeMap::new();
            for (&subject, &n) in &catalog.subjects {
                if n < k {
                    return Err(DatasetError::Split(format!(
                        "subject {subject} has {n} instances, fewer than {k} sessions"
                    )));
                }
                let order = shuffled(n, seed, u64::from(subject) + 1);
                sessions.insert(subject, near_equal_chunks(&order, k));
            }
            SplitAssignments::Loso { sessions }
        }
        Protocol::Online => {
            let rate = options.online_rate;
            if !(0.0..=1.0).contains(&rate) {
                return Err(DatasetError::Split(format!("online rate {rate} outside [0, 1]")));
            }
            let subjects = catalog
                .subjects
                .iter()
                .map(|(&subject, &n)| {
                    let order = shuffled(n, seed, u64::from(subject) + 1);
                    let cut = (n as f64 * rate).floor() as usize;
                    OnlineSplit {
                        subject,
                        adapt: order[..cut].to_vec(),
                        test: order[cut..].to_vec(),
                    }
                })
                .collect();
            SplitAssignments::Online { subjects }
        }
    };
    Ok(SplitPlan {
        schema_version: SPLIT_SCHEMA_VERSION,
        seed,
        options: *options,
        assignments,
    })
}

impl SplitPlan {
    pub fn protocol(&self) -> Protocol {
        match self.assignments {
            SplitAssignments::Louo { .. } => Protocol::Louo,
            SplitAssignments::Loso { .. } => Protocol::Loso,
            SplitAssignments::Online { .. } => Protocol::Online,
        }
    }

    /// `(train_subjects, test_subjects)` for a LOUO fold.
    pub fn louo_fold(&self, fold: usize) -> Option<(Vec<u32>, Vec<u32>)> {
        let SplitAssignments::Louo { folds } = &self.assignments else {
            return None;
        };
        let test = folds.get(fold)?.clone();
        let mut train: Vec<u32> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        Some((train, test))
    }

    /// Per subject `(train_indices, test_indices)` for a LOSO fold.
    pub fn loso_fold(&self, fold: usize) -> Option<LosoFold> {
        let SplitAssignments::Loso { sessions } = &self.assignments else {
            return None;
        };
        sessions
            .iter()
            .map(|(&s, parts)| {
                let test = parts.get(fold)?.clone();
                let mut train: Vec<usize> = parts
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != fold)
                    .flat_map(|(_, p)| p.iter().copied())
                    .collect();
                train.sort_unstable();
                Some((s, (train, test)))
            })
            .collect()
    }

    pub fn online(&self) -> Option<&[OnlineSplit]> {
        match &self.assignments {
            SplitAssignments::Online { subjects } => Some(subjects),
            _ => None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("plan serializes");
        std::fs::write(path, text).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let plan: Self = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if plan.schema_version != SPLIT_SCHEMA_VERSION {
            return Err(DatasetError::Json {
                path: path.display().to_string(),
                message: format!("unsupported split schema version {}", plan.schema_version),
            });
        }
        Ok(plan)
    }
}
