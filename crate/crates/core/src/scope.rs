use serde::{Deserialize, Serialize};

/// Which rows an analysis result describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Scope {
    Population,
    Subgroup(usize),
}

impl Scope {
    pub fn subgroup_id(&self) -> Option<usize> {
        match self {
            Scope::Population => None,
            Scope::Subgroup(id) => Some(*id),
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Population => f.write_str("population"),
            Scope::Subgroup(id) => write!(f, "subgroup {id}"),
        }
    }
}

/// Bootstrap seed for one scope of one dataset, derived from the user seed
/// so reports reproduce across sessions and scopes draw independent streams.
pub fn derive_seed(dataset_id: &str, scope: Scope, seed: u64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(dataset_id.as_bytes());
    h.update([0u8]);
    h.update(scope.to_string().as_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
