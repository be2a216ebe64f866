//! Which people run the app, and how the rest of the network reaches them.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ActivityCache, ContactNetwork, Group};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Grown neighborhood by neighborhood from a random seed person.
    #[default]
    Neighbor,
    /// Uniform sample of people.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserBase {
    topology: Topology,
    /// Person ids, ascending. Position is the model node index.
    users: Vec<usize>,
    /// Model index per network node, `None` for non-users and bed slots.
    index: Vec<Option<u32>>,
    /// Static neighbors outside the user base, per model node.
    k_ext: Vec<u32>,
}

impl UserBase {
    /// User base from an explicit list of person ids.
    pub fn from_users(network: &ContactNetwork, mut users: Vec<usize>, topology: Topology) -> Result<Self> {
        users.sort_unstable();
        users.dedup();
        if let Some(&bad) = users.iter().find(|&&u| !network.is_person(u)) {
            return Err(Error::UnknownNode(bad));
        }
        let mut index = vec![None; network.node_count()];
        for (k, &u) in users.iter().enumerate() {
            index[u] = Some(k as u32);
        }
        let k_ext = users
            .iter()
            .map(|&u| network.person_neighbors(u).filter(|&v| index[v].is_none()).count() as u32)
            .collect();
        Ok(Self {
            topology,
            users,
            index,
            k_ext,
        })
    }

    pub fn everyone(network: &ContactNetwork) -> Self {
        Self::from_users(network, (0..network.population()).collect(), Topology::Neighbor)
            .expect("people are valid users")
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn index(&self) -> &[Option<u32>] {
        &self.index
    }

    pub fn model_index(&self, person: usize) -> Option<usize> {
        self.index.get(person).copied().flatten().map(|i| i as usize)
    }

    pub fn contains(&self, person: usize) -> bool {
        self.model_index(person).is_some()
    }

    pub fn k_ext(&self) -> &[u32] {
        &self.k_ext
    }

    /// Users whose static neighbors are all users.
    pub fn interior_count(&self) -> usize {
        self.k_ext.iter().filter(|&&k| k == 0).count()
    }

    /// Mean number of outside neighbors per user.
    pub fn exterior_connectivity(&self) -> f64 {
        if self.users.is_empty() {
            return 0.0;
        }
        self.k_ext.iter().map(|&k| f64::from(k)).sum::<f64>() / self.users.len() as f64
    }

    /// `k_i^x ⟨w_i⟩` per model node under the current contact bounds.
    pub fn exogenous_weights(&self, network: &ContactNetwork, cache: &mut ActivityCache) -> Vec<f64> {
        self.users
            .iter()
            .zip(&self.k_ext)
            .map(|(&u, &k)| {
                if k == 0 {
                    0.0
                } else {
                    f64::from(k) * cache.mean_edge_activity(&network.nodes()[u].bounds)
                }
            })
            .collect()
    }

    /// Model indices of users in the community group.
    pub fn community_mask(&self, network: &ContactNetwork) -> Vec<bool> {
        self.users
            .iter()
            .map(|&u| network.nodes()[u].group == Group::Community)
            .collect()
    }

    /// Store `k_ext` on the network's node metadata.
    pub fn annotate(&self, network: &mut ContactNetwork) {
        for p in 0..network.population() {
            network.set_k_ext(p, 0);
        }
        for (&u, &k) in self.users.iter().zip(&self.k_ext) {
            network.set_k_ext(u, k);
        }
    }
}

/// Select about `fraction · N` people. The neighbor topology grows whole
/// neighborhoods breadth-first from a random seed (reseeding if a component
/// runs out) and stops once the target is reached or exceeded.
pub fn select_user_base(network: &ContactNetwork, fraction: f64, topology: Topology, rng: &mut SimRng) -> Result<UserBase> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("user base fraction {fraction} must lie in (0, 1]")));
    }
    let n = network.population();
    let target = ((fraction * n as f64).round() as usize).clamp(1, n);
    if target == n {
        return UserBase::from_users(network, (0..n).collect(), topology);
    }
    let users = match topology {
        Topology::Random => rand::seq::index::sample(rng, n, target).into_vec(),
        Topology::Neighbor => {
            let mut inside = vec![false; n];
            let mut users = Vec::with_capacity(target);
            let mut queue = VecDeque::new();
            while users.len() < target {
                if queue.is_empty() {
                    let seed = loop {
                        let s = rng.random_range(0..n);
                        if !inside[s] {
                            break s;
                        }
                    };
                    inside[seed] = true;
                    users.push(seed);
                    queue.push_back(seed);
                }
                let Some(u) = queue.pop_front() else { continue };
                for v in network.person_neighbors(u) {
                    if !inside[v] {
                        inside[v] = true;
                        users.push(v);
                        queue.push_back(v);
                    }
                }
            }
            users
        }
    };
    UserBase::from_users(network, users, topology)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_static_network, NetworkConfig};
    use crate::rng::{stream, Purpose};

    #[test]
    fn full_base_has_no_exterior() {
        let net = generate_static_network(&NetworkConfig::with_population(500), 3).unwrap();
        let mut rng = stream(1, 0, Purpose::UserBase, 0);
        let ub = select_user_base(&net, 1.0, Topology::Neighbor, &mut rng).unwrap();
        assert_eq!(ub.len(), 500);
        assert!(ub.k_ext().iter().all(|&k| k == 0));
        assert_eq!(ub.interior_count(), 500);
    }

    #[test]
    fn neighbor_base_is_denser_than_random() {
        let net = generate_static_network(&NetworkConfig::with_population(4000), 3).unwrap();
        let mut rng = stream(1, 0, Purpose::UserBase, 0);
        let nb = select_user_base(&net, 0.25, Topology::Neighbor, &mut rng).unwrap();
        let rd = select_user_base(&net, 0.25, Topology::Random, &mut rng).unwrap();
        assert!(nb.len() >= 1000 && rd.len() == 1000);
        assert!(nb.interior_count() > 5 * rd.interior_count().max(1), "{} {}", nb.interior_count(), rd.interior_count());
        // each neighbor-grown user's k_ext counts outside static neighbors
        for (k, &u) in nb.users().iter().enumerate() {
            let outside = net.person_neighbors(u).filter(|&v| !nb.contains(v)).count();
            assert_eq!(nb.k_ext()[k] as usize, outside);
        }
        // at 75% the grown base is the better connected one; at 25% both
        // bases see about the same number of outside neighbors
        let nb = select_user_base(&net, 0.75, Topology::Neighbor, &mut rng).unwrap();
        let rd = select_user_base(&net, 0.75, Topology::Random, &mut rng).unwrap();
        assert!(nb.exterior_connectivity() < rd.exterior_connectivity());
    }

    #[test]
    fn invalid_fraction_rejected() {
        let net = generate_static_network(&NetworkConfig::with_population(100), 3).unwrap();
        let mut rng = stream(1, 0, Purpose::UserBase, 0);
        assert!(select_user_base(&net, 0.0, Topology::Random, &mut rng).is_err());
        assert!(select_user_base(&net, 1.5, Topology::Random, &mut rng).is_err());
    }
}
