//! Fixation attributes of the mutations of a run.
//!
//! A mutation is `resident` if it ever became resident, `solitary` if it did
//! so at a solitary resident change, and `ancestral` if it lies on the
//! lineage of some solitary resident seen so far. Ancestry is judged against
//! the observed horizon only; flags of mutations born before the last
//! solitary change can no longer change.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pit::{Event, GenealogyTree};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationFlags {
    pub contender: bool,
    pub resident: bool,
    pub solitary: bool,
    pub ancestral: bool,
    /// Born before the last solitary change, so the flags are final.
    pub settled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixationReport {
    pub flags: BTreeMap<i64, FixationFlags>,
    pub last_solitary: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationTally {
    pub mutations: usize,
    pub contenders: usize,
    pub resident: usize,
    pub solitary: usize,
    pub ancestral: usize,
}

impl FixationReport {
    pub fn ids_where(&self, pick: impl Fn(&FixationFlags) -> bool) -> BTreeSet<i64> {
        self.flags.iter().filter(|(_, f)| pick(f)).map(|(&i, _)| i).collect()
    }

    /// Whether every solitary mutation is ancestral and every ancestral one became resident.
    pub fn lattice_holds(&self) -> bool {
        let sr = self.ids_where(|f| f.solitary);
        let ua = self.ids_where(|f| f.ancestral);
        let r = self.ids_where(|f| f.resident);
        sr.is_subset(&ua) && ua.is_subset(&r)
    }

    pub fn tally(&self) -> FixationTally {
        let count = |p: fn(&FixationFlags) -> bool| self.flags.values().filter(|f| p(f)).count();
        FixationTally {
            mutations: self.flags.len(),
            contenders: count(|f| f.contender),
            resident: count(|f| f.resident),
            solitary: count(|f| f.solitary),
            ancestral: count(|f| f.ancestral),
        }
    }
}

/// Classifies every immigrant of a logged run.
pub fn classify_fixation(events: &[Event], genealogy: &GenealogyTree) -> FixationReport {
    let mut flags: BTreeMap<i64, FixationFlags> = BTreeMap::new();
    let mut births = BTreeMap::new();
    let mut solitary_ids = Vec::new();
    let mut last_solitary = None;
    for e in events {
        match *e {
            Event::Immigration { id, slope, time, .. } => {
                births.insert(id, time);
                flags.entry(id).or_default().contender = slope > 0.0;
            }
            Event::ResidentChange { resident, time, .. } => {
                let f = flags.entry(resident).or_default();
                f.resident = true;
                if e.is_solitary_change() {
                    f.solitary = true;
                    solitary_ids.push(resident);
                    last_solitary = Some(time);
                }
            }
            Event::Extinction { .. } => {}
        }
    }
    for id in solitary_ids {
        for anc in genealogy.lineage(id) {
            if let Some(f) = flags.get_mut(&anc) {
                f.ancestral = true;
            }
        }
    }
    if let Some(l) = last_solitary {
        for (id, f) in flags.iter_mut() {
            f.settled = births.get(id).is_some_and(|&b| b < l);
        }
    }
    FixationReport { flags, last_solitary }
}
