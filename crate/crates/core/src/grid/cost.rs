use std::fmt;
use std::str::FromStr;

use crate::error::{invalid_arg, Error, Result};

/// Algorithms (or phases) with an analytic per-sweep cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostAlgorithm {
    Dt,
    Msdt,
    PpInit,
    /// PP initialization with a globally distributed contraction.
    PpInitRef,
    PpApprox,
    /// PP approximated step with 1-D distributed operators.
    PpApproxRef,
}

impl CostAlgorithm {
    pub const ALL: [CostAlgorithm; 6] = [
        CostAlgorithm::Dt,
        CostAlgorithm::Msdt,
        CostAlgorithm::PpInit,
        CostAlgorithm::PpInitRef,
        CostAlgorithm::PpApprox,
        CostAlgorithm::PpApproxRef,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CostAlgorithm::Dt => "dt",
            CostAlgorithm::Msdt => "msdt",
            CostAlgorithm::PpInit => "pp_init",
            CostAlgorithm::PpInitRef => "pp_init_ref",
            CostAlgorithm::PpApprox => "pp_approx",
            CostAlgorithm::PpApproxRef => "pp_approx_ref",
        }
    }
}

impl fmt::Display for CostAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl FromStr for CostAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        CostAlgorithm::ALL
            .into_iter()
            .find(|a| a.label() == norm)
            .ok_or_else(|| invalid_arg!("unknown cost algorithm {s:?}"))
    }
}

/// Machine parameters of the BSP model: seconds per message (`alpha`), per
/// word moved between processors (`beta`), per flop (`gamma`) and per word
/// moved between memory and cache (`nu`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self { alpha: 1e-6, beta: 1e-9, gamma: 1e-10, nu: 1e-10 }
    }
}

/// Leading-order per-sweep costs for an order `N` tensor with all
/// dimensions `s`, rank `R` and `P` processors.
///
/// Communication entries drop the constants hidden in big-O; `None` marks
/// a phase with no horizontal communication.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostPrediction {
    pub algorithm: CostAlgorithm,
    pub sequential_flops: f64,
    pub local_flops: f64,
    pub aux_memory_words: f64,
    pub messages: Option<f64>,
    pub horizontal_words: Option<f64>,
    /// Second variant where two distributions are possible.
    pub horizontal_words_alt: Option<f64>,
    pub vertical_words: f64,
    /// `α·messages + β·words + γ·local flops + ν·vertical words`.
    pub time_seconds: f64,
}

pub fn predict_costs(
    algorithm: CostAlgorithm,
    order: usize,
    s: usize,
    rank: usize,
    procs: usize,
    params: &CostParams,
) -> Result<CostPrediction> {
    if order < 2 || s == 0 || rank == 0 || procs == 0 {
        return Err(invalid_arg!("cost model needs order >= 2 and positive s, R, P"));
    }
    let (n, s, r, p) = (order as f64, s as f64, rank as f64, procs as f64);
    let sn = s.powf(n);
    let per_proc = sn / p;
    let p_root = p.powf(1.0 / n);
    let p_root2 = p.powf(2.0 / n);
    let log_p = p.log2();
    let grid_words = n * s * r / p_root;
    let msdt_mem = per_proc.powf((n - 1.0) / n) * r;

    let (seq, local, mem, msgs, words, alt, vertical) = match algorithm {
        CostAlgorithm::Dt => {
            let mem = per_proc.sqrt() * r;
            (4.0 * sn * r, 4.0 * sn * r / p, mem, Some(n * log_p), Some(grid_words), None, per_proc + mem)
        }
        CostAlgorithm::Msdt => {
            let f = 2.0 * n / (n - 1.0) * sn * r;
            (f, f / p, msdt_mem, Some(n * log_p), Some(grid_words), None, per_proc + msdt_mem)
        }
        CostAlgorithm::PpInit => (4.0 * sn * r, 4.0 * sn * r / p, msdt_mem, None, None, None, per_proc + msdt_mem),
        CostAlgorithm::PpInitRef => (
            4.0 * sn * r,
            4.0 * sn * r / p,
            s.powf(n - 1.0) * r / p,
            Some(n * log_p),
            Some(n * (sn * r / p).powf(2.0 / 3.0)),
            Some(n * msdt_mem),
            per_proc + msdt_mem,
        ),
        CostAlgorithm::PpApprox => {
            let work = s * s * r / p_root2 + r * r / p;
            (
                2.0 * n * n * (s * s * r + r * r),
                2.0 * n * n * work,
                n * n * s * s * r / p_root2 + n * r * r / p,
                Some(n * log_p),
                Some(grid_words),
                None,
                n * n * work,
            )
        }
        CostAlgorithm::PpApproxRef => {
            let work = s * s * r / p + r * r / p;
            (
                2.0 * n * n * (s * s * r + r * r),
                2.0 * n * n * work,
                n * n * s * s * r / p + n * r * r / p,
                Some(n * n * log_p),
                Some(n * n * s * r / p),
                None,
                n * n * work,
            )
        }
    };
    let time_seconds = params.alpha * msgs.unwrap_or(0.0)
        + params.beta * words.unwrap_or(0.0)
        + params.gamma * local
        + params.nu * vertical;
    Ok(CostPrediction {
        algorithm,
        sequential_flops: seq,
        local_flops: local,
        aux_memory_words: mem,
        messages: msgs,
        horizontal_words: words,
        horizontal_words_alt: alt,
        vertical_words: vertical,
        time_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    fn at(alg: CostAlgorithm, p: usize) -> CostPrediction {
        predict_costs(alg, 3, 100, 50, p, &CostParams::default()).unwrap()
    }

    #[test]
    fn dt_row() {
        let c = at(CostAlgorithm::Dt, 1);
        assert!(close(c.sequential_flops, 2e8));
        let c = at(CostAlgorithm::Dt, 8);
        assert!(close(c.local_flops, 2.5e7));
        assert!(close(c.aux_memory_words, 125_000f64.sqrt() * 50.0));
        assert!(close(c.messages.unwrap(), 9.0));
        assert!(close(c.horizontal_words.unwrap(), 7500.0));
        assert!(close(c.vertical_words, 125_000.0 + 125_000f64.sqrt() * 50.0));
    }

    #[test]
    fn msdt_and_pp_init_rows() {
        let c = at(CostAlgorithm::Msdt, 8);
        assert!(close(c.sequential_flops, 1.5e8));
        assert!(close(c.local_flops, 1.875e7));
        assert!(close(c.aux_memory_words, 125_000.0));
        assert!(close(c.vertical_words, 250_000.0));
        let c = at(CostAlgorithm::PpInit, 8);
        assert!(close(c.sequential_flops, 2e8));
        assert_eq!(c.horizontal_words, None);
        assert_eq!(c.messages, None);
        assert!(close(c.vertical_words, 250_000.0));
        let c = at(CostAlgorithm::PpInitRef, 8);
        assert!(close(c.aux_memory_words, 1e4 * 50.0 / 8.0));
        assert!(close(c.horizontal_words_alt.unwrap(), 375_000.0));
    }

    #[test]
    fn pp_approx_rows() {
        let c = at(CostAlgorithm::PpApprox, 8);
        assert!(close(c.sequential_flops, 9_045_000.0));
        assert!(close(c.local_flops, 2.0 * 9.0 * (1e4 * 50.0 / 4.0 + 2500.0 / 8.0)));
        assert!(close(c.aux_memory_words, 1_125_937.5));
        assert!(close(c.vertical_words, 1_127_812.5));
        let c = at(CostAlgorithm::PpApproxRef, 8);
        assert!(close(c.local_flops, 1_130_625.0));
        assert!(close(c.messages.unwrap(), 27.0));
        assert!(close(c.horizontal_words.unwrap(), 5625.0));
    }

    #[test]
    fn msdt_over_dt_is_independent_of_sizes() {
        for (n, s, r, p) in [(3, 100, 50, 8), (4, 30, 7, 16), (5, 12, 3, 1), (3, 400, 200, 27)] {
            let p1 = CostParams::default();
            let dt = predict_costs(CostAlgorithm::Dt, n, s, r, p, &p1).unwrap();
            let ms = predict_costs(CostAlgorithm::Msdt, n, s, r, p, &p1).unwrap();
            let want = (n as f64) / (2.0 * (n as f64 - 1.0));
            assert!(close(ms.local_flops / dt.local_flops, want));
        }
    }

    #[test]
    fn parse_and_reject() {
        assert_eq!("pp-approx".parse::<CostAlgorithm>().unwrap(), CostAlgorithm::PpApprox);
        assert!("foo".parse::<CostAlgorithm>().is_err());
        assert!(predict_costs(CostAlgorithm::Dt, 1, 10, 1, 1, &CostParams::default()).is_err());
    }
}
