//! Named parameter storage.
//!
//! All trainable tensors live in one ordered map. The adversarial game
//! splits them into two players by name prefix: discriminator parameters
//! (`disc_text/`, `disc_mel/`) belong to the maximizing player, everything
//! else to the minimizing player. Group hashes make "this step touched only
//! its own player's weights" checkable.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::autograd::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Encoders, generators, embedding, fusion, classifier.
    MinPlayer,
    /// Discriminators.
    MaxPlayer,
}

pub fn role_of(name: &str) -> Role {
    if name.starts_with("disc_text/") || name.starts_with("disc_mel/") {
        Role::MaxPlayer
    } else {
        Role::MinPlayer
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(
            self.tensors.insert(name.clone(), t).is_none(),
            "parameter {name:?} registered twice"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Name-ordered iteration (deterministic).
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|n| role_of(n) == role)
            .cloned()
            .collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    /// SHA-256 over one player's parameters (names + little-endian bytes),
    /// in name order.
    pub fn role_hash(&self, role: Role) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.tensors {
            if role_of(name) != role {
                continue;
            }
            h.update(name.as_bytes());
            h.update([0u8]);
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Register every tensor as a leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
                .collect(),
        }
    }

    /// Export as (name, flattened data) pairs, name-ordered.
    pub fn export(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec(), t.data().to_vec()))
            .collect()
    }

    pub fn import(entries: Vec<(String, Vec<usize>, Vec<f64>)>) -> Self {
        let mut store = ParamStore::new();
        for (name, shape, data) in entries {
            store.insert(name, Tensor::new(shape, data));
        }
        store
    }
}

/// Tape leaves for one forward/backward pass.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Gradients of one player's parameters, name-ordered; parameters the
    /// objective never touched get None.
    pub fn role_grads<'g>(
        &self,
        grads: &'g Gradients,
        role: Role,
    ) -> Vec<(String, Option<&'g Tensor>)> {
        self.vars
            .iter()
            .filter(|(n, _)| role_of(n) == role)
            .map(|(n, v)| (n.clone(), grads.get(*v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("enc_text/w", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        s.insert("disc_text/w", Tensor::new(vec![2], vec![5.0, 6.0]));
        s.insert("disc_mel/b", Tensor::new(vec![1], vec![7.0]));
        s.insert("gen_mel/w", Tensor::new(vec![1], vec![8.0]));
        s
    }

    #[test]
    fn roles_split_by_prefix() {
        let s = store();
        assert_eq!(s.names_with_role(Role::MaxPlayer), vec!["disc_mel/b", "disc_text/w"]);
        assert_eq!(s.names_with_role(Role::MinPlayer), vec!["enc_text/w", "gen_mel/w"]);
        assert_eq!(role_of("disc_textual/w"), Role::MinPlayer, "prefix must end with /");
    }

    #[test]
    fn role_hash_tracks_only_its_player() {
        let mut s = store();
        let min0 = s.role_hash(Role::MinPlayer);
        let max0 = s.role_hash(Role::MaxPlayer);
        s.get_mut("disc_text/w").data_mut()[0] = 99.0;
        assert_eq!(s.role_hash(Role::MinPlayer), min0, "min hash ignores disc update");
        assert_ne!(s.role_hash(Role::MaxPlayer), max0);
        s.get_mut("enc_text/w").data_mut()[0] = -1.0;
        assert_ne!(s.role_hash(Role::MinPlayer), min0);
    }

    #[test]
    fn export_import_roundtrip() {
        let s = store();
        let back = ParamStore::import(s.export());
        assert_eq!(s, back);
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_registration_panics() {
        let mut s = store();
        s.insert("enc_text/w", Tensor::zeros(&[1]));
    }

    #[test]
    fn bind_exposes_leaves_with_values() {
        let s = store();
        let tape = Tape::new();
        let bound = s.bind(&tape);
        let v = bound.var("enc_text/w");
        assert_eq!(tape.value_of(v).data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
