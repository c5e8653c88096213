use std::collections::BTreeSet;

use super::{PcError, PcInstance};

/// Requests that every optimal solution serves or skips, beyond those the
/// instance already forces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForcedAdditions {
    pub forced_in: BTreeSet<usize>,
    pub forced_out: BTreeSet<usize>,
}

/// Classifies free requests as certainly profitable (the round trip costs
/// less than the prize and the request is servable on its own) or certainly
/// unprofitable (the cheapest possible detour through it is at least the
/// prize plus the largest arc cost).
pub fn preprocess(inst: &PcInstance) -> Result<ForcedAdditions, PcError> {
    inst.validate()?;
    let n = inst.len();
    let max_c = inst.max_cost() as f64;
    let mut out = ForcedAdditions::default();
    for r in 0..n {
        if inst.forced_in.contains(&r) || inst.forced_out.contains(&r) {
            continue;
        }
        let node = r + 1;
        let min_in = (0..=n).filter(|&j| j != node).map(|j| inst.travel[j][node]).min().unwrap_or(0);
        let min_out = (0..=n).filter(|&j| j != node).map(|j| inst.travel[node][j]).min().unwrap_or(0);
        let theta = inst.prizes[r];
        let unprofitable = (min_in + min_out) as f64 - theta >= max_c;
        let round_trip = (inst.travel[0][node] + inst.travel[node][0]) as f64;
        let profitable = round_trip < theta && inst.check_route(&[r]).is_ok();
        match (profitable, unprofitable) {
            (true, true) => return Err(PcError::ContradictoryForcing { index: r }),
            (true, false) => {
                out.forced_in.insert(r);
            }
            (false, true) => {
                out.forced_out.insert(r);
            }
            (false, false) => {}
        }
    }
    Ok(out)
}
