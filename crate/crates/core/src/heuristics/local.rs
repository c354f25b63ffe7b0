//! Hill climbing and iterated local search, both ordered by `compare_lex`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{perturb, single_bit_neighbors, RunError, Search};
use crate::evaluation::{compare_lex, EvaluationResult};
use crate::measures::Candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HcParams {
    /// After a failed single-flip sweep, also try swapping one applied
    /// measure for one unapplied measure.
    pub replace_moves: bool,
}

impl Default for HcParams {
    fn default() -> Self {
        Self { replace_moves: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IlsParams {
    /// Bits flipped per perturbation; capped at the catalog size.
    pub perturb_flips: usize,
    /// Accept a new local optimum that is as good as the current one.
    pub accept_equal: bool,
}

impl Default for IlsParams {
    fn default() -> Self {
        Self {
            perturb_flips: 3,
            accept_equal: true,
        }
    }
}

impl IlsParams {
    pub(crate) fn validate(&self) -> Result<(), RunError> {
        if self.perturb_flips == 0 {
            return Err(RunError::Params("ils.perturb_flips must be at least 1".into()));
        }
        Ok(())
    }
}

/// First-improvement descent from `cur`. Returns the final point and
/// whether it is a verified local optimum (false when the budget ran out).
fn descend(
    s: &mut Search<'_>,
    mut cur: Candidate,
    mut cur_r: EvaluationResult,
    p: &HcParams,
) -> (Candidate, EvaluationResult, bool) {
    'outer: loop {
        let neighbors: Vec<Candidate> = single_bit_neighbors(&cur, &mut s.rng).collect();
        for n in neighbors {
            let Some(r) = s.eval(&n) else {
                return (cur, cur_r, false);
            };
            if compare_lex(&r, &cur_r).is_lt() {
                cur = n;
                cur_r = r;
                continue 'outer;
            }
        }
        if p.replace_moves {
            let ones: Vec<usize> = cur.ones().collect();
            let zeros: Vec<usize> = (0..cur.len()).filter(|&i| !cur.get(i)).collect();
            let mut swaps: Vec<(usize, usize)> =
                ones.iter().flat_map(|&i| zeros.iter().map(move |&j| (i, j))).collect();
            swaps.shuffle(&mut s.rng);
            for (i, j) in swaps {
                let mut n = cur.clone();
                n.flip(i);
                n.flip(j);
                let Some(r) = s.eval(&n) else {
                    return (cur, cur_r, false);
                };
                if compare_lex(&r, &cur_r).is_lt() {
                    cur = n;
                    cur_r = r;
                    continue 'outer;
                }
            }
        }
        return (cur, cur_r, true);
    }
}

/// Hill climbing from the empty candidate; true when stopped at a local optimum.
pub(crate) fn hill_climb_run(s: &mut Search<'_>, p: &HcParams) -> bool {
    let start = Candidate::zeros(s.len());
    match s.eval(&start) {
        Some(r) => descend(s, start, r, p).2,
        None => false,
    }
}

pub(crate) fn iterated_local_search(s: &mut Search<'_>, hc: &HcParams, p: &IlsParams) -> bool {
    let start = Candidate::zeros(s.len());
    let Some(r) = s.eval(&start) else {
        return false;
    };
    let (mut cur, mut cur_r, at_opt) = descend(s, start, r, hc);
    if s.len() == 0 {
        return at_opt;
    }
    let k = p.perturb_flips.min(s.len());
    while !s.done() {
        let kicked = perturb(&cur, k, &mut s.rng).expect("k within 1..=len");
        let Some(r) = s.eval(&kicked) else {
            break;
        };
        let (next, next_r, _) = descend(s, kicked, r, hc);
        let ord = compare_lex(&next_r, &cur_r);
        if ord.is_lt() || (p.accept_equal && ord.is_eq()) {
            cur = next;
            cur_r = next_r;
        }
    }
    false
}
