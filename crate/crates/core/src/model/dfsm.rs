use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Deterministic finite state machine with integer-coded alphabets.
///
/// `next[i][j]` and `output[i][j]` are the successor and output for the
/// `i`-th state and `j`-th input symbol, in the order given by `states` and
/// `inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDfsm", into = "RawDfsm")]
pub struct Dfsm {
    states: Vec<i64>,
    inputs: Vec<i64>,
    outputs: Vec<i64>,
    next: Vec<Vec<i64>>,
    output: Vec<Vec<i64>>,
    initial: i64,
}

#[derive(Serialize, Deserialize)]
struct RawDfsm {
    states: Vec<i64>,
    inputs: Vec<i64>,
    outputs: Vec<i64>,
    initial: i64,
    next: Vec<Vec<i64>>,
    output: Vec<Vec<i64>>,
}

impl TryFrom<RawDfsm> for Dfsm {
    type Error = Error;

    fn try_from(r: RawDfsm) -> Result<Self> {
        Dfsm::new(r.states, r.inputs, r.outputs, r.next, r.output, r.initial)
    }
}

impl From<Dfsm> for RawDfsm {
    fn from(d: Dfsm) -> Self {
        RawDfsm {
            states: d.states,
            inputs: d.inputs,
            outputs: d.outputs,
            initial: d.initial,
            next: d.next,
            output: d.output,
        }
    }
}

fn distinct(v: &[i64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{what} set is empty")));
    }
    let set: BTreeSet<_> = v.iter().collect();
    if set.len() != v.len() {
        return Err(Error::InvalidInput(format!("{what} set has repeated symbols")));
    }
    Ok(())
}

impl Dfsm {
    pub fn new(
        states: Vec<i64>,
        inputs: Vec<i64>,
        outputs: Vec<i64>,
        next: Vec<Vec<i64>>,
        output: Vec<Vec<i64>>,
        initial: i64,
    ) -> Result<Self> {
        distinct(&states, "state")?;
        distinct(&inputs, "input")?;
        distinct(&outputs, "output")?;
        let shape_ok = |t: &Vec<Vec<i64>>| t.len() == states.len() && t.iter().all(|r| r.len() == inputs.len());
        if !shape_ok(&next) || !shape_ok(&output) {
            return Err(Error::Dimension(format!(
                "transition and output tables must be {}x{} (states x inputs)",
                states.len(),
                inputs.len()
            )));
        }
        for &q in next.iter().flatten() {
            if !states.contains(&q) {
                return Err(Error::Alphabet { alphabet: "state", value: q });
            }
        }
        for &p in output.iter().flatten() {
            if !outputs.contains(&p) {
                return Err(Error::Alphabet { alphabet: "output", value: p });
            }
        }
        if !states.contains(&initial) {
            return Err(Error::Alphabet {
                alphabet: "state",
                value: initial,
            });
        }
        Ok(Self {
            states,
            inputs,
            outputs,
            next,
            output,
            initial,
        })
    }

    /// Three-state machine over inputs {0, 1} and outputs {0, 1, 2}:
    /// q1 stays on 0 and moves to q2 on 1 with p = u; q2 stays on 0 and
    /// moves to q3 on 1 with p = 1 − u; q3 returns to q1 on either input with
    /// p = 0. States are coded 1, 2, 3.
    pub fn three_state_example() -> Self {
        Self::new(
            vec![1, 2, 3],
            vec![0, 1],
            vec![0, 1, 2],
            vec![vec![1, 2], vec![2, 3], vec![1, 1]],
            vec![vec![0, 1], vec![1, 0], vec![0, 0]],
            1,
        )
        .expect("example machine is well formed")
    }

    /// Single state, single input, single output; the discrete part of a
    /// purely continuous subsystem.
    pub fn trivial(output: i64) -> Self {
        Self::new(vec![0], vec![0], vec![output], vec![vec![0]], vec![vec![output]], 0).expect("trivial machine")
    }

    pub fn states(&self) -> &[i64] {
        &self.states
    }

    pub fn inputs(&self) -> &[i64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[i64] {
        &self.outputs
    }

    pub fn initial(&self) -> i64 {
        self.initial
    }

    pub fn state_index(&self, q: i64) -> Result<usize> {
        self.states
            .iter()
            .position(|&s| s == q)
            .ok_or(Error::Alphabet { alphabet: "state", value: q })
    }

    pub fn input_index(&self, u: i64) -> Result<usize> {
        self.inputs
            .iter()
            .position(|&s| s == u)
            .ok_or(Error::Alphabet { alphabet: "input", value: u })
    }

    /// `(g(q,u), l(q,u))`.
    pub fn step(&self, q: i64, u: i64) -> Result<(i64, i64)> {
        let i = self.state_index(q)?;
        let j = self.input_index(u)?;
        Ok((self.next[i][j], self.output[i][j]))
    }

    /// Every `(q, u, g(q,u), l(q,u))` in table order.
    pub fn transitions(&self) -> impl Iterator<Item = (i64, i64, i64, i64)> + '_ {
        self.states.iter().enumerate().flat_map(move |(i, &q)| {
            self.inputs
                .iter()
                .enumerate()
                .map(move |(j, &u)| (q, u, self.next[i][j], self.output[i][j]))
        })
    }

    /// Outputs `l(q, 𝒰)` the machine can emit while in state `q`.
    pub fn feasible_outputs(&self, q: i64) -> Result<BTreeSet<i64>> {
        let i = self.state_index(q)?;
        Ok(self.output[i].iter().copied().collect())
    }

    /// Outputs `l(𝒬 × 𝒰)`.
    pub fn emitted_outputs(&self) -> BTreeSet<i64> {
        self.output.iter().flatten().copied().collect()
    }

    /// True when some state's output depends on the current input.
    pub fn has_feedthrough(&self) -> bool {
        self.output.iter().any(|row| row.iter().any(|&p| p != row[0]))
    }

    /// Strongly connected component label per state (in `states` order).
    /// Labels are dense, starting at 0, in order of first appearance.
    pub fn components(&self) -> Vec<usize> {
        let n = self.states.len();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack = vec![s];
            row[s] = true;
            while let Some(a) = stack.pop() {
                for &qn in &self.next[a] {
                    let b = self.state_index(qn).expect("validated");
                    if !row[b] {
                        row[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        for a in 0..n {
            if label[a] != usize::MAX {
                continue;
            }
            for b in a..n {
                if reach[a][b] && reach[b][a] {
                    label[b] = count;
                }
            }
            count += 1;
        }
        label
    }
}

/// `(q⁺, p) = (g(q,u), l(q,u))`.
pub fn dfsm_step(d: &Dfsm, q: i64, u: i64) -> Result<(i64, i64)> {
    d.step(q, u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_steps() {
        let d = Dfsm::three_state_example();
        assert_eq!(dfsm_step(&d, 1, 1).unwrap(), (2, 1));
        assert_eq!(dfsm_step(&d, 2, 0).unwrap(), (2, 1));
        assert_eq!(dfsm_step(&d, 3, 0).unwrap(), (1, 0));
        assert_eq!(dfsm_step(&d, 3, 1).unwrap(), (1, 0));
        assert_eq!(dfsm_step(&d, 1, 0).unwrap(), (1, 0));
        assert_eq!(dfsm_step(&d, 2, 1).unwrap(), (3, 0));
    }

    #[test]
    fn ones_cycle_through_all_states() {
        let d = Dfsm::three_state_example();
        for &start in d.states() {
            let mut q = start;
            let mut seen = vec![q];
            for _ in 0..3 {
                q = d.step(q, 1).unwrap().0;
                seen.push(q);
            }
            assert_eq!(q, start);
            let set: BTreeSet<_> = seen.iter().collect();
            assert_eq!(set.len(), 3);
        }
    }

    #[test]
    fn rejects_out_of_alphabet() {
        let d = Dfsm::three_state_example();
        assert!(matches!(d.step(4, 0), Err(Error::Alphabet { alphabet: "state", .. })));
        assert!(matches!(d.step(1, 2), Err(Error::Alphabet { alphabet: "input", .. })));
        assert!(Dfsm::new(vec![0], vec![0], vec![0], vec![vec![1]], vec![vec![0]], 0).is_err());
        assert!(Dfsm::new(vec![0], vec![0], vec![0], vec![vec![0]], vec![vec![5]], 0).is_err());
        assert!(Dfsm::new(vec![], vec![0], vec![0], vec![], vec![], 0).is_err());
    }

    #[test]
    fn example_is_one_component_with_feedthrough() {
        let d = Dfsm::three_state_example();
        assert_eq!(d.components(), vec![0, 0, 0]);
        assert!(d.has_feedthrough());
        assert_eq!(d.emitted_outputs(), BTreeSet::from([0, 1]));
        assert_eq!(d.feasible_outputs(3).unwrap(), BTreeSet::from([0]));
    }

    #[test]
    fn chain_components_are_distinct() {
        let d = Dfsm::new(vec![0, 1, 2], vec![0], vec![0], vec![vec![1], vec![2], vec![2]], vec![vec![0]; 3], 0).unwrap();
        assert_eq!(d.components(), vec![0, 1, 2]);
    }
}
