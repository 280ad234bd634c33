//! Exhaustive grid search over `(n, α, k)` maximizing the output SNR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fir::tap_count;
use crate::kernel::{design_window, KernelSpec};
use crate::pipeline::{run_with_design, Design};
use crate::reconstruct::SnrDb;
use crate::record::MultichannelRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub n_values: Vec<u32>,
    pub alpha_values: Vec<f64>,
    pub k_values: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub n: u32,
    pub alpha: f64,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub n: u32,
    pub alpha: f64,
    pub k: u32,
    pub reason: String,
}

impl TuneGrid {
    /// Default search set: `n ∈ 1..=4`, `α ∈ {n, n+2, …, 16}`, `k ∈ 1..=8`.
    pub fn default_combos() -> Vec<Combo> {
        Self::stepped((1..=4).collect(), 16.0, (1..=8).collect())
    }

    /// `α ∈ {n, n+2, …, alpha_max}` for each `n`, crossed with `k_values`.
    pub fn stepped(n_values: Vec<u32>, alpha_max: f64, k_values: Vec<u32>) -> Vec<Combo> {
        let mut out = Vec::new();
        for &n in &n_values {
            let mut a = f64::from(n);
            while a <= alpha_max {
                for &k in &k_values {
                    out.push(Combo { n, alpha: a, k });
                }
                a += 2.0;
            }
        }
        out
    }

    /// All combinations split into admissible (`α > n − 1`) and skipped.
    pub fn combos(&self) -> (Vec<Combo>, Vec<Skipped>) {
        let mut ok = Vec::new();
        let mut skipped = Vec::new();
        for &n in &self.n_values {
            for &alpha in &self.alpha_values {
                for &k in &self.k_values {
                    let bound = f64::from(n) - 1.0;
                    if n == 0 {
                        skipped.push(Skipped {
                            n,
                            alpha,
                            k,
                            reason: "derivative order must be >= 1".into(),
                        });
                    } else if alpha <= bound {
                        skipped.push(Skipped {
                            n,
                            alpha,
                            k,
                            reason: format!("alpha = {alpha} <= n - 1 = {bound}"),
                        });
                    } else if k == 0 {
                        skipped.push(Skipped {
                            n,
                            alpha,
                            k,
                            reason: "k must be >= 1".into(),
                        });
                    } else {
                        ok.push(Combo { n, alpha, k });
                    }
                }
            }
        }
        (ok, skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub n: u32,
    pub alpha: f64,
    pub k: u32,
    #[serde(rename = "T")]
    pub window: f64,
    #[serde(rename = "L")]
    pub len: usize,
    pub snr_db: SnrDb,
    pub proxy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub f0: f64,
    pub fs: f64,
    /// Sorted by descending SNR, then smaller `L`, then `(n, α, k)`.
    pub rows: Vec<TuneRow>,
    pub skipped: Vec<Skipped>,
}

impl TuneResult {
    pub fn best(&self) -> Option<&TuneRow> {
        self.rows.first()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank,n,alpha,k,T,L,snr_db,proxy\n");
        for (i, r) in self.rows.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                r.n,
                r.alpha,
                r.k,
                r.window,
                r.len,
                serde_json::to_string(&r.snr_db)
                    .expect("snr serializes")
                    .trim_matches('"'),
                r.proxy
            ));
        }
        s
    }

    /// Kernel spec of the best row.
    pub fn best_spec(&self) -> Option<KernelSpec> {
        self.best()
            .map(|r| KernelSpec::symmetric(r.n, r.alpha, r.window))
    }
}

/// Evaluate one combination with the rest of `base` unchanged.
pub fn evaluate(
    combo: Combo,
    base: &PipelineConfig,
    record: &MultichannelRecord,
    truth: Option<&MultichannelRecord>,
) -> Result<TuneRow> {
    let f0 = base.filter.f0;
    let window = design_window(combo.alpha, combo.k, f0)?;
    let spec = KernelSpec {
        poly_degree: base.filter.poly_degree,
        theta: base.filter.theta,
        ..KernelSpec::symmetric(combo.n, combo.alpha, window)
    };
    let design = Design::from_spec(spec, record.fs)?;
    let mut cfg = base.clone();
    cfg.filter.n = combo.n;
    cfg.filter.alpha = combo.alpha;
    cfg.filter.beta = None;
    cfg.filter.k = Some(combo.k);
    cfg.filter.window = None;
    let out = run_with_design(&cfg, &design, record, truth)?;
    Ok(TuneRow {
        n: combo.n,
        alpha: combo.alpha,
        k: combo.k,
        window,
        len: tap_count(window, record.fs),
        snr_db: out.snr.pooled_db,
        proxy: out.snr.proxy,
    })
}

fn rank(a: &TuneRow, b: &TuneRow) -> std::cmp::Ordering {
    // NaN sorts last; +inf first.
    let key = |r: &TuneRow| {
        if r.snr_db.0.is_nan() {
            f64::NEG_INFINITY
        } else {
            r.snr_db.0
        }
    };
    key(b)
        .total_cmp(&key(a))
        .then(a.len.cmp(&b.len))
        .then(a.n.cmp(&b.n))
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.k.cmp(&b.k))
}

/// Evaluate every admissible combination; failures are listed as skipped.
pub fn grid_search(
    grid: &TuneGrid,
    base: &PipelineConfig,
    record: &MultichannelRecord,
    truth: Option<&MultichannelRecord>,
) -> Result<TuneResult> {
    let (combos, skipped) = grid.combos();
    search_combos(&combos, skipped, base, record, truth)
}

pub fn search_combos(
    combos: &[Combo],
    mut skipped: Vec<Skipped>,
    base: &PipelineConfig,
    record: &MultichannelRecord,
    truth: Option<&MultichannelRecord>,
) -> Result<TuneResult> {
    if combos.is_empty() {
        return Err(Error::validation(format!(
            "no admissible (n, alpha, k) combination: every entry violates alpha > n - 1 ({} skipped)",
            skipped.len()
        )));
    }
    let evaluated: Vec<(Combo, Result<TuneRow>)> = combos
        .par_iter()
        .map(|c| (*c, evaluate(*c, base, record, truth)))
        .collect();
    let mut rows = Vec::new();
    for (c, r) in evaluated {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(Skipped {
                n: c.n,
                alpha: c.alpha,
                k: c.k,
                reason: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::numeric(format!(
            "all {} admissible combinations failed to evaluate",
            combos.len()
        )));
    }
    rows.sort_by(rank);
    Ok(TuneResult {
        f0: base.filter.f0,
        fs: record.fs,
        rows,
        skipped,
    })
}
