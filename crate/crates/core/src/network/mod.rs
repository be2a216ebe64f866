//! Static three-group contact graph with diurnal edge activation.
//!
//! Node ids `0..population` are people (healthcare workers first, then the
//! community). Ids `population..` are hospital bed slots. A bed slot is a
//! place, not a person: an admitted patient occupies a slot and inherits its
//! edges to other slots and to healthcare workers for the length of the stay.

pub mod activation;
mod generate;
pub mod io;
pub mod schedule;

use serde::{Deserialize, Serialize};

use crate::age::AgeBand;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use activation::{
    day_average_edge_rate, day_average_rate, diurnal_profile, edge_activation_rate,
    mean_edge_activity, node_activation_rate, ActivityCache, DEFAULT_DEACTIVATION_RATE,
};
pub use generate::{generate_static_network, NetworkConfig};
pub use schedule::{sample_day_schedule, EdgeSchedule, Interval};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Group (a): hospital bed slots.
    HospitalBed,
    /// Group (b): healthcare workers, in contact with both hospital and community.
    HealthcareWorker,
    /// Group (c): everybody else.
    Community,
}

impl Group {
    pub fn tag(self) -> char {
        match self {
            Group::HospitalBed => 'a',
            Group::HealthcareWorker => 'b',
            Group::Community => 'c',
        }
    }

    pub fn from_tag(tag: char) -> Option<Self> {
        match tag {
            'a' => Some(Group::HospitalBed),
            'b' => Some(Group::HealthcareWorker),
            'c' => Some(Group::Community),
            _ => None,
        }
    }
}

/// Minimum (night) and maximum (midday) contact rates of a node, in day⁻¹.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactBounds {
    pub min: f64,
    pub max: f64,
}

impl ContactBounds {
    pub const DEFAULT: ContactBounds = ContactBounds { min: 4.0, max: 84.0 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min >= 0.0 && min <= max && max.is_finite()) {
            return Err(Error::InvalidBounds { min, max });
        }
        Ok(Self { min, max })
    }
}

impl Default for ContactBounds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub id: usize,
    pub group: Group,
    /// Set for people, `None` for bed slots.
    pub age_band: Option<AgeBand>,
    pub bounds: ContactBounds,
    /// Static neighbors outside the current user base.
    pub k_ext: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    CommunityCommunity,
    WorkerWorker,
    WorkerCommunity,
    BedBed,
    BedWorker,
}

impl EdgeKind {
    /// Two-letter group tag used in the text format, e.g. `cc` or `ab`.
    pub fn tag(self) -> &'static str {
        match self {
            EdgeKind::CommunityCommunity => "cc",
            EdgeKind::WorkerWorker => "bb",
            EdgeKind::WorkerCommunity => "bc",
            EdgeKind::BedBed => "aa",
            EdgeKind::BedWorker => "ab",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "cc" => Some(EdgeKind::CommunityCommunity),
            "bb" => Some(EdgeKind::WorkerWorker),
            "bc" => Some(EdgeKind::WorkerCommunity),
            "aa" => Some(EdgeKind::BedBed),
            "ab" => Some(EdgeKind::BedWorker),
            _ => None,
        }
    }

    pub fn is_hospital(self) -> bool {
        matches!(self, EdgeKind::BedBed | EdgeKind::BedWorker)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if self.a as usize == node {
            self.b as usize
        } else {
            self.a as usize
        }
    }
}

/// Degree parameters used when the bed pool has to grow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WardDegrees {
    pub bed_mean_degree: f64,
    pub bed_worker_mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Ward {
    /// Occupant of each bed slot (indexed by slot number, not node id).
    occupant: Vec<Option<u32>>,
    /// Slot number currently held by each person.
    location: Vec<Option<u32>>,
    degrees: WardDegrees,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactNetwork {
    nodes: Vec<NodeMeta>,
    population: usize,
    workers: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<u32>>,
    mean_degree_community: f64,
    saved_bounds: Vec<Option<ContactBounds>>,
    ward: Ward,
}

impl ContactNetwork {
    /// Assemble a network from explicit nodes and edges. Nodes must be in id
    /// order with workers first, then community, then bed slots.
    pub fn from_components(
        nodes: Vec<NodeMeta>,
        edges: Vec<Edge>,
        mean_degree_community: f64,
        degrees: WardDegrees,
    ) -> Result<Self> {
        let population = nodes.iter().take_while(|n| n.group != Group::HospitalBed).count();
        let workers = nodes.iter().take_while(|n| n.group == Group::HealthcareWorker).count();
        for (i, n) in nodes.iter().enumerate() {
            let expected = if i >= population {
                Group::HospitalBed
            } else if i < workers {
                Group::HealthcareWorker
            } else {
                Group::Community
            };
            if n.id != i || n.group != expected {
                return Err(Error::Generation(format!("node {i} out of group order")));
            }
            if n.age_band.is_some() == (n.group == Group::HospitalBed) {
                return Err(Error::Generation(format!("node {i}: age band required for people only")));
            }
        }
        for e in &edges {
            if e.a as usize >= nodes.len() || e.b as usize >= nodes.len() {
                return Err(Error::UnknownNode(e.a.max(e.b) as usize));
            }
            if e.a == e.b {
                return Err(Error::Generation(format!("self-edge at node {}", e.a)));
            }
        }
        Ok(Self::from_parts(nodes, population, workers, edges, mean_degree_community, degrees))
    }

    pub(crate) fn from_parts(
        nodes: Vec<NodeMeta>,
        population: usize,
        workers: usize,
        edges: Vec<Edge>,
        mean_degree_community: f64,
        degrees: WardDegrees,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (id, e) in edges.iter().enumerate() {
            adjacency[e.a as usize].push(id as u32);
            adjacency[e.b as usize].push(id as u32);
        }
        let beds = nodes.len() - population;
        Self {
            saved_bounds: vec![None; nodes.len()],
            ward: Ward {
                occupant: vec![None; beds],
                location: vec![None; population],
                degrees,
            },
            nodes,
            population,
            workers,
            edges,
            adjacency,
            mean_degree_community,
        }
    }

    /// Number of people `N` (bed slots excluded).
    pub fn population(&self) -> usize {
        self.population
    }

    pub fn worker_count(&self) -> usize {
        self.workers
    }

    pub fn community_count(&self) -> usize {
        self.population - self.workers
    }

    pub fn bed_count(&self) -> usize {
        self.nodes.len() - self.population
    }

    /// People plus bed slots.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeMeta] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&NodeMeta> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incident_edges(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    /// Mean community degree `k̂` used to normalize activation rates.
    pub fn mean_degree_community(&self) -> f64 {
        self.mean_degree_community
    }

    pub fn is_person(&self, node: usize) -> bool {
        node < self.population
    }

    pub fn bed_node(&self, slot: usize) -> usize {
        self.population + slot
    }

    pub fn people(&self) -> impl Iterator<Item = &NodeMeta> {
        self.nodes[..self.population].iter()
    }

    /// Static person neighbors of a person (hospital edges excluded).
    pub fn person_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().filter_map(move |&e| {
            let edge = &self.edges[e as usize];
            (!edge.kind.is_hospital()).then(|| edge.other(node))
        })
    }

    /// Replace contact bounds of `nodes`, remembering the first-seen originals
    /// so [`restore_contact_bounds`](Self::restore_contact_bounds) can undo it.
    pub fn apply_contact_bounds(&mut self, nodes: &[usize], min: f64, max: f64) -> Result<()> {
        let bounds = ContactBounds::new(min, max)?;
        if let Some(&bad) = nodes.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(Error::UnknownNode(bad));
        }
        for &n in nodes {
            if self.saved_bounds[n].is_none() {
                self.saved_bounds[n] = Some(self.nodes[n].bounds);
            }
            self.nodes[n].bounds = bounds;
        }
        Ok(())
    }

    pub fn restore_contact_bounds(&mut self, nodes: &[usize]) -> Result<()> {
        if let Some(&bad) = nodes.iter().find(|&&n| n >= self.nodes.len()) {
            return Err(Error::UnknownNode(bad));
        }
        for &n in nodes {
            if let Some(original) = self.saved_bounds[n].take() {
                self.nodes[n].bounds = original;
            }
        }
        Ok(())
    }

    pub fn is_modified(&self, node: usize) -> bool {
        self.saved_bounds.get(node).is_some_and(Option::is_some)
    }

    pub(crate) fn set_k_ext(&mut self, node: usize, k_ext: u32) {
        self.nodes[node].k_ext = k_ext;
    }

    pub fn is_hospitalized(&self, person: usize) -> bool {
        self.ward.location.get(person).is_some_and(Option::is_some)
    }

    /// Bed slot occupied by `person`, as a node id.
    pub fn bed_of(&self, person: usize) -> Option<usize> {
        self.ward
            .location
            .get(person)
            .copied()
            .flatten()
            .map(|slot| self.population + slot as usize)
    }

    pub fn occupant(&self, bed_node: usize) -> Option<usize> {
        bed_node
            .checked_sub(self.population)
            .and_then(|slot| self.ward.occupant.get(slot).copied().flatten())
            .map(|p| p as usize)
    }

    pub fn hospitalized_count(&self) -> usize {
        self.ward.occupant.iter().filter(|o| o.is_some()).count()
    }

    /// Move `person` into a free bed slot. Its community and worker edges stay
    /// in the graph but are unusable until discharge. The bed pool grows when
    /// every slot is taken; new slots get fresh Erdős–Rényi edges.
    pub fn transfer_to_hospital(&mut self, person: usize, rng: &mut SimRng) -> Result<usize> {
        if person >= self.nodes.len() {
            return Err(Error::UnknownNode(person));
        }
        if !self.is_person(person) {
            return Err(Error::NotAPerson(person));
        }
        if self.ward.location[person].is_some() {
            return Err(Error::AlreadyAdmitted(person));
        }
        let slot = match self.ward.occupant.iter().position(Option::is_none) {
            Some(slot) => slot,
            None => self.grow_ward(rng),
        };
        self.ward.occupant[slot] = Some(person as u32);
        self.ward.location[person] = Some(slot as u32);
        Ok(self.population + slot)
    }

    pub fn discharge(&mut self, person: usize) -> Result<()> {
        if person >= self.nodes.len() {
            return Err(Error::UnknownNode(person));
        }
        if !self.is_person(person) {
            return Err(Error::NotAPerson(person));
        }
        let slot = self.ward.location[person]
            .take()
            .ok_or(Error::NotAdmitted(person))?;
        self.ward.occupant[slot as usize] = None;
        Ok(())
    }

    fn grow_ward(&mut self, rng: &mut SimRng) -> usize {
        use rand::Rng;
        let slot = self.ward.occupant.len();
        let id = self.nodes.len();
        self.nodes.push(NodeMeta {
            id,
            group: Group::HospitalBed,
            age_band: None,
            bounds: ContactBounds::DEFAULT,
            k_ext: 0,
        });
        self.adjacency.push(Vec::new());
        self.saved_bounds.push(None);
        self.ward.occupant.push(None);

        let existing_beds = slot;
        let p_bed = if existing_beds > 0 {
            (self.ward.degrees.bed_mean_degree / existing_beds as f64).min(1.0)
        } else {
            0.0
        };
        let p_worker = if self.workers > 0 {
            (self.ward.degrees.bed_worker_mean_degree / self.workers as f64).min(1.0)
        } else {
            0.0
        };
        let mut new_edges = Vec::new();
        for other in 0..existing_beds {
            if rng.random::<f64>() < p_bed {
                new_edges.push(Edge {
                    a: (self.population + other) as u32,
                    b: id as u32,
                    kind: EdgeKind::BedBed,
                });
            }
        }
        for worker in 0..self.workers {
            if rng.random::<f64>() < p_worker {
                new_edges.push(Edge {
                    a: id as u32,
                    b: worker as u32,
                    kind: EdgeKind::BedWorker,
                });
            }
        }
        for edge in new_edges {
            let eid = self.edges.len() as u32;
            self.adjacency[edge.a as usize].push(eid);
            self.adjacency[edge.b as usize].push(eid);
            self.edges.push(edge);
        }
        slot
    }

    /// The two people an edge currently connects, if it is usable: person
    /// endpoints must not be in hospital and bed endpoints must be occupied.
    pub fn resolve_edge(&self, edge: usize) -> Option<(usize, usize)> {
        let e = &self.edges[edge];
        Some((self.resolve_endpoint(e.a as usize)?, self.resolve_endpoint(e.b as usize)?))
    }

    fn resolve_endpoint(&self, node: usize) -> Option<usize> {
        if node < self.population {
            self.ward.location[node].is_none().then_some(node)
        } else {
            self.ward.occupant[node - self.population].map(|p| p as usize)
        }
    }

    /// Degree of `person` within groups (a) and (b) at its current bed.
    pub fn hospital_degree(&self, person: usize) -> Option<usize> {
        self.bed_of(person).map(|bed| self.adjacency[bed].len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn small() -> ContactNetwork {
        let cfg = NetworkConfig {
            population: 400,
            ..NetworkConfig::default()
        };
        generate_static_network(&cfg, 11).unwrap()
    }

    #[test]
    fn bounds_apply_and_restore_round_trip() {
        let mut net = small();
        let before: Vec<ContactBounds> = net.nodes().iter().map(|n| n.bounds).collect();
        net.apply_contact_bounds(&[3, 5, 7], 4.0, 4.0).unwrap();
        assert_eq!(net.node(5).unwrap().bounds, ContactBounds { min: 4.0, max: 4.0 });
        // a second override keeps the first original
        net.apply_contact_bounds(&[5], 4.0, 33.0).unwrap();
        net.restore_contact_bounds(&[3, 5, 7]).unwrap();
        let after: Vec<ContactBounds> = net.nodes().iter().map(|n| n.bounds).collect();
        assert_eq!(before, after);
        assert!(!net.is_modified(5));
    }

    #[test]
    fn bounds_reject_unknown_nodes_and_inverted_ranges() {
        let mut net = small();
        assert!(matches!(
            net.apply_contact_bounds(&[1_000_000], 4.0, 5.0),
            Err(Error::UnknownNode(1_000_000))
        ));
        assert!(matches!(
            net.apply_contact_bounds(&[1], 5.0, 4.0),
            Err(Error::InvalidBounds { .. })
        ));
    }

    #[test]
    fn admission_disables_community_edges_and_discharge_restores_them() {
        let mut net = small();
        let mut rng = stream(1, 0, Purpose::Hospital, 0);
        let person = net.population() - 1;
        let usable_before: Vec<Option<(usize, usize)>> =
            (0..net.edges().len()).map(|e| net.resolve_edge(e)).collect();

        let bed = net.transfer_to_hospital(person, &mut rng).unwrap();
        assert!(net.is_hospitalized(person));
        assert_eq!(net.occupant(bed), Some(person));
        for &e in net.incident_edges(person) {
            assert_eq!(net.resolve_edge(e as usize), None);
        }
        assert!(matches!(
            net.transfer_to_hospital(person, &mut rng),
            Err(Error::AlreadyAdmitted(_))
        ));

        net.discharge(person).unwrap();
        assert!(matches!(net.discharge(person), Err(Error::NotAdmitted(_))));
        let usable_after: Vec<Option<(usize, usize)>> =
            (0..usable_before.len()).map(|e| net.resolve_edge(e)).collect();
        assert_eq!(usable_before, usable_after);
    }

    #[test]
    fn bed_slots_cannot_be_admitted() {
        let mut net = small();
        let mut rng = stream(1, 0, Purpose::Hospital, 0);
        let bed = net.bed_node(0);
        assert!(matches!(
            net.transfer_to_hospital(bed, &mut rng),
            Err(Error::NotAPerson(_))
        ));
    }

    #[test]
    fn ward_grows_when_full() {
        let mut net = small();
        let mut rng = stream(1, 0, Purpose::Hospital, 0);
        let beds = net.bed_count();
        for p in 0..beds + 3 {
            net.transfer_to_hospital(p, &mut rng).unwrap();
        }
        assert_eq!(net.bed_count(), beds + 3);
        assert_eq!(net.hospitalized_count(), beds + 3);
    }

    #[test]
    fn admitted_degree_to_hospital_and_workers_averages_ten() {
        // Over many independent admissions the bed degree (beds + workers)
        // averages the two configured Erdős–Rényi mean degrees, 5 + 5.
        let cfg = NetworkConfig {
            population: 2000,
            ..NetworkConfig::default()
        };
        let mut total = 0usize;
        let mut count = 0usize;
        for seed in 0..40u64 {
            let mut net = generate_static_network(&cfg, seed).unwrap();
            let mut rng = stream(seed, 0, Purpose::Hospital, 0);
            for person in 0..25 {
                net.transfer_to_hospital(person * 7, &mut rng).unwrap();
                total += net.hospital_degree(person * 7).unwrap();
                count += 1;
            }
        }
        assert_eq!(count, 1000);
        let mean = total as f64 / count as f64;
        assert!((mean - 10.0).abs() < 0.6, "mean hospital degree {mean}");
    }
}
