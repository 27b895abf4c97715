use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::{invalid_arg, Result};

use super::layout::chunk_range;

/// `δ(p)`: 1 when a collective spans more than one processor, else 0.
pub fn delta(p: usize) -> u64 {
    u64::from(p > 1)
}

fn log2_ceil(p: usize) -> u64 {
    if p <= 1 {
        0
    } else {
        (usize::BITS - (p - 1).leading_zeros()) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Collective {
    AllGather,
    ReduceScatter,
    AllReduce,
}

impl Collective {
    pub fn label(self) -> &'static str {
        match self {
            Collective::AllGather => "all-gather",
            Collective::ReduceScatter => "reduce-scatter",
            Collective::AllReduce => "all-reduce",
        }
    }

    /// Messages and words of one call on groups of `p` processors moving
    /// `n` words in total (the concatenated or reduced vector).
    pub fn cost(self, p: usize, n: usize) -> (u64, u64) {
        let d = delta(p) * n as u64;
        match self {
            Collective::AllGather | Collective::ReduceScatter => (log2_ceil(p), d),
            Collective::AllReduce => (2 * log2_ceil(p), 2 * d),
        }
    }
}

/// What a collective was issued for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommPhase {
    /// Initial distribution of factors and Gram matrices.
    Setup,
    /// Exact ALS sweeps.
    Als,
    /// Scalar reductions for the residual.
    Residual,
    PpInit,
    PpApprox,
    Control,
}

impl CommPhase {
    pub fn label(self) -> &'static str {
        match self {
            CommPhase::Setup => "setup",
            CommPhase::Als => "als",
            CommPhase::Residual => "residual",
            CommPhase::PpInit => "pp-init",
            CommPhase::PpApprox => "pp-approx",
            CommPhase::Control => "control",
        }
    }
}

impl fmt::Display for CommPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub calls: u64,
    pub messages: u64,
    pub words: u64,
}

/// Per-processor (BSP) communication counts: a call on concurrent groups is
/// charged once, since every processor takes part in exactly one group.
#[derive(Clone, Debug, Default)]
pub struct CommCounters {
    tallies: BTreeMap<(CommPhase, Collective), Tally>,
}

impl CommCounters {
    pub fn new() -> Self {
        Self::default()
    }

    fn charge(&mut self, phase: CommPhase, c: Collective, p: usize, n: usize) {
        let (messages, words) = c.cost(p, n);
        let t = self.tallies.entry((phase, c)).or_default();
        t.calls += 1;
        t.messages += messages;
        t.words += words;
    }

    pub fn get(&self, phase: CommPhase, c: Collective) -> Tally {
        self.tallies.get(&(phase, c)).copied().unwrap_or_default()
    }

    pub fn phase_total(&self, phase: CommPhase) -> Tally {
        self.tallies
            .iter()
            .filter(|((ph, _), _)| *ph == phase)
            .fold(Tally::default(), |acc, (_, t)| Tally {
                calls: acc.calls + t.calls,
                messages: acc.messages + t.messages,
                words: acc.words + t.words,
            })
    }

    pub fn total(&self) -> Tally {
        self.tallies.values().fold(Tally::default(), |acc, t| Tally {
            calls: acc.calls + t.calls,
            messages: acc.messages + t.messages,
            words: acc.words + t.words,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (CommPhase, Collective, Tally)> + '_ {
        self.tallies.iter().map(|(&(p, c), &t)| (p, c, t))
    }

    /// CSV with columns `phase,collective,calls,messages,words`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["phase", "collective", "calls", "messages", "words"])?;
        for (phase, c, t) in self.iter() {
            out.write_record([
                phase.label().to_string(),
                c.label().to_string(),
                t.calls.to_string(),
                t.messages.to_string(),
                t.words.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// All-gather within each group: every member ends up with the
    /// concatenation of the members' parts in group order.
    ///
    /// `parts[p]` is processor `p`'s contribution; the result is indexed the
    /// same way.
    pub fn all_gather(&mut self, phase: CommPhase, groups: &[Vec<usize>], parts: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let p = check_groups(groups, parts.len())?;
        let mut out = vec![Vec::new(); parts.len()];
        let mut n = 0;
        for g in groups {
            let joined: Vec<f64> = g.iter().flat_map(|&q| parts[q].iter().copied()).collect();
            n = n.max(joined.len());
            for &q in g {
                out[q] = joined.clone();
            }
        }
        self.charge(phase, Collective::AllGather, p, n);
        Ok(out)
    }

    /// Reduce-scatter within each group: the members' vectors (all of the
    /// same length, a multiple of `unit`) are summed in ascending processor
    /// order and member `k` keeps the `k`-th chunk of `⌈rows/p⌉` units, the
    /// last chunk short.
    pub fn reduce_scatter(
        &mut self,
        phase: CommPhase,
        groups: &[Vec<usize>],
        data: &[Vec<f64>],
        unit: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let p = check_groups(groups, data.len())?;
        if unit == 0 {
            return Err(invalid_arg!("reduce-scatter unit must be positive"));
        }
        let mut out = vec![Vec::new(); data.len()];
        let mut n = 0;
        for g in groups {
            let sum = sum_ascending(g, data)?;
            if sum.len() % unit != 0 {
                return Err(invalid_arg!("reduce-scatter length {} is not a multiple of {unit}", sum.len()));
            }
            n = n.max(sum.len());
            for (k, &q) in g.iter().enumerate() {
                let (a, b) = chunk_range(sum.len() / unit, g.len(), k);
                out[q] = sum[a * unit..b * unit].to_vec();
            }
        }
        self.charge(phase, Collective::ReduceScatter, p, n);
        Ok(out)
    }

    /// All-reduce within each group (sum, ascending processor order).
    pub fn all_reduce(&mut self, phase: CommPhase, groups: &[Vec<usize>], data: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let p = check_groups(groups, data.len())?;
        let mut out = vec![Vec::new(); data.len()];
        let mut n = 0;
        for g in groups {
            let sum = sum_ascending(g, data)?;
            n = n.max(sum.len());
            for &q in g {
                out[q] = sum.clone();
            }
        }
        self.charge(phase, Collective::AllReduce, p, n);
        Ok(out)
    }
}

/// Groups must partition `0..procs` into sets of equal size; returns it.
fn check_groups(groups: &[Vec<usize>], procs: usize) -> Result<usize> {
    let p = groups.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(invalid_arg!("collective over an empty group"));
    }
    let mut seen = vec![false; procs];
    for g in groups {
        if g.len() != p {
            return Err(invalid_arg!("concurrent groups must have equal size"));
        }
        for &q in g {
            if q >= procs || seen[q] {
                return Err(invalid_arg!("processor {q} is missing data or appears in two groups"));
            }
            seen[q] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(invalid_arg!("groups do not cover all {procs} processors"));
    }
    Ok(p)
}

fn sum_ascending(group: &[usize], data: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut members = group.to_vec();
    members.sort_unstable();
    let mut sum = data[members[0]].clone();
    for &q in &members[1..] {
        if data[q].len() != sum.len() {
            return Err(invalid_arg!(
                "processor {q} contributes {} words, expected {}",
                data[q].len(),
                sum.len()
            ));
        }
        for (s, v) in sum.iter_mut().zip(&data[q]) {
            *s += v;
        }
    }
    Ok(sum)
}
