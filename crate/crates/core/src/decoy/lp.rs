//! Poisson-mixture constraints on photon-number yields and certified LP
//! bounds on single yields.
//!
//! Unknowns of one detector, all in `[0, 1]`:
//! the vacuum yield `Y00`; `M_n`, the yield of `n` photons in the supermode
//! `(a + e^{i delta} b)/sqrt2` averaged over the window around 0; `O_n`, the
//! same around `pi`; and `P_jk`, the yield of `|j>|k>`. A matched (opposite)
//! gain at intensity `nu` per party is `sum_n e^{-2nu} (2nu)^n / n! M_n`
//! (`O_n`); an independent-phase gain is the product-Poisson mixture of
//! `P_jk`. Photon numbers above `j_max` are replaced by a slack in
//! `[0, tail]`, which is rigorous because every yield is at most 1.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT,
};
use serde::{Deserialize, Serialize};
use std::fmt;

use super::dataset::{DecoyDataset, SiftClass};
use crate::error::{Error, Result};
use crate::numeric::{poisson_tail_bound, poisson_weights};
use crate::physics::Detector;

/// Default photon-number truncation of the decoy program.
pub const DEFAULT_DECOY_J_MAX: usize = 10;
/// Relative allowance on every observed gain for rounding in the data.
pub const GAIN_REL_SLACK: f64 = 1e-10;
/// Largest accepted gap between the certified bound and the primal optimum.
pub const MAX_DUALITY_GAP: f64 = 1e-9;

/// A yield the program can bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Vacuum,
    /// `n` photons in the supermode averaged around phase 0.
    Matched(usize),
    /// `n` photons in the supermode averaged around phase `pi`.
    Opposite(usize),
    /// `|j>_a |k>_b`.
    Pair(usize, usize),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Vacuum => write!(f, "Y00"),
            Target::Matched(n) => write!(f, "matched[{n}]"),
            Target::Opposite(n) => write!(f, "opposite[{n}]"),
            Target::Pair(j, k) => write!(f, "Y{j}{k}"),
        }
    }
}

/// `lower <= sum coeffs x <= upper` for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// The constraints of one detector over [`ConstraintSystem::n_vars`] unknowns.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub detector: Detector,
    pub j_max: usize,
    pub rows: Vec<IntervalRow>,
}

impl ConstraintSystem {
    pub fn n_vars(&self) -> usize {
        var_count(self.j_max)
    }

    /// Column of `target`, if representable at this truncation.
    pub fn column(&self, target: Target) -> Option<usize> {
        column(self.j_max, target)
    }

    /// Whether `x` satisfies every row within `tol`.
    pub fn is_satisfied_by(&self, x: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|r| {
            let lhs: f64 = r.coeffs.iter().map(|&(c, a)| a * x[c]).sum();
            lhs >= r.lower - tol && lhs <= r.upper + tol
        })
    }
}

fn var_count(j_max: usize) -> usize {
    1 + 2 * j_max + (j_max + 1) * (j_max + 1) - 1
}

fn column(j_max: usize, target: Target) -> Option<usize> {
    match target {
        Target::Vacuum => Some(0),
        Target::Matched(0) | Target::Opposite(0) | Target::Pair(0, 0) => Some(0),
        Target::Matched(n) if n <= j_max => Some(n),
        Target::Opposite(n) if n <= j_max => Some(j_max + n),
        Target::Pair(j, k) if j <= j_max && k <= j_max => Some(2 * j_max + j * (j_max + 1) + k),
        _ => None,
    }
}

/// Constraint rows for the observations of `det`.
pub fn build_constraints(
    ds: &DecoyDataset,
    det: Detector,
    j_max: usize,
) -> Result<ConstraintSystem> {
    ds.validate()?;
    if j_max == 0 {
        return Err(Error::IllPosedDataset(
            "photon-number truncation must be >= 1".into(),
        ));
    }
    let mut rows = Vec::new();
    for o in ds.for_detector(det) {
        let (coeffs, tail) = match o.class {
            SiftClass::Matched | SiftClass::Opposite => {
                let w = poisson_weights(2.0 * o.intensity, j_max);
                let tail = poisson_tail_bound(2.0 * o.intensity, j_max);
                let coeffs: Vec<(usize, f64)> = w
                    .iter()
                    .enumerate()
                    .map(|(n, &wn)| {
                        let t = if o.class == SiftClass::Matched {
                            Target::Matched(n)
                        } else {
                            Target::Opposite(n)
                        };
                        (column(j_max, t).unwrap(), wn)
                    })
                    .collect();
                (coeffs, tail)
            }
            SiftClass::Independent => {
                let w = poisson_weights(o.intensity, j_max);
                // 1 - (1 - a)^2 <= 2a
                let tail = (2.0 * poisson_tail_bound(o.intensity, j_max)).min(1.0);
                let mut coeffs = Vec::with_capacity(w.len() * w.len());
                for (j, &wj) in w.iter().enumerate() {
                    for (k, &wk) in w.iter().enumerate() {
                        coeffs.push((column(j_max, Target::Pair(j, k)).unwrap(), wj * wk));
                    }
                }
                (coeffs, tail)
            }
        };
        let slack = GAIN_REL_SLACK * o.gain;
        rows.push(IntervalRow {
            coeffs: merge_columns(coeffs),
            lower: (o.gain - tail - slack).max(0.0),
            upper: o.gain + slack,
        });
    }
    Ok(ConstraintSystem {
        detector: det,
        j_max,
        rows,
    })
}

fn merge_columns(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(c, _)| c);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, a) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += a,
            _ => out.push((c, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

/// A closed interval inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo: lo.clamp(0.0, 1.0),
            hi: hi.clamp(0.0, 1.0),
        }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A priori upper bound on each unknown: all coefficients are non-negative,
/// so `sum a_i x_i <= U` gives `x_j <= U / a_j`.
fn variable_scales(sys: &ConstraintSystem) -> Vec<f64> {
    let mut scale = vec![1.0f64; sys.n_vars()];
    for r in &sys.rows {
        for &(c, a) in &r.coeffs {
            // guard against rounding below the exact ratio
            scale[c] = scale[c].min(r.upper / a * (1.0 + 1e-12));
        }
    }
    scale
}

/// Rows in the scaled variables `u = x / scale`, normalised to unit largest
/// coefficient.
struct ScaledRows {
    coeffs: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn scale_rows(sys: &ConstraintSystem, scale: &[f64], name: &str) -> Result<ScaledRows> {
    let mut out = ScaledRows {
        coeffs: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
    };
    for r in &sys.rows {
        let scaled: Vec<(usize, f64)> = r
            .coeffs
            .iter()
            .map(|&(c, a)| (c, a * scale[c]))
            .filter(|&(_, a)| a != 0.0)
            .collect();
        let norm = scaled.iter().fold(0.0f64, |m, &(_, a)| m.max(a));
        if norm == 0.0 {
            if r.lower > 0.0 {
                return Err(Error::InfeasibleLp {
                    target: name.to_string(),
                });
            }
            continue;
        }
        out.coeffs
            .push(scaled.into_iter().map(|(c, a)| (c, a / norm)).collect());
        out.lower.push(r.lower / norm);
        out.upper.push(r.upper / norm);
    }
    Ok(out)
}

/// Runs the solver on `A u - (U - L) t = L`, `u, t in [0, 1]`; the width
/// column keeps near-empty slabs well conditioned. Returns one multiplier
/// per data row (convention `q + A^T y = 0`) and the primal `u`, or `None`
/// if the solver reports infeasibility.
fn run_solver(rows: &ScaledRows, q: &[f64], name: &str) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let n = q.len();
    let m_data = rows.coeffs.len();
    let n_all = n + m_data;
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_all];
    for (r, row) in rows.coeffs.iter().enumerate() {
        for &(c, a) in row {
            cols[c].push((r, a));
        }
        let width = rows.upper[r] - rows.lower[r];
        if width > 0.0 {
            cols[n + r].push((r, -width));
        }
    }
    let mut b = rows.lower.clone();
    // v <= 1, then -v <= 0
    for (j, col_entries) in cols.iter_mut().enumerate() {
        col_entries.push((m_data + j, 1.0));
        col_entries.push((m_data + n_all + j, -1.0));
    }
    b.extend(std::iter::repeat_n(1.0, n_all));
    b.extend(std::iter::repeat_n(0.0, n_all));
    let mut colptr = Vec::with_capacity(n_all + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col_entries in &cols {
        for &(r, a) in col_entries {
            rowval.push(r);
            nzval.push(a);
        }
        colptr.push(rowval.len());
    }
    let m = m_data + 2 * n_all;
    let a_mat = CscMatrix::new(m, n_all, colptr, rowval, nzval);
    let p_mat = CscMatrix::<f64>::zeros((n_all, n_all));
    let mut q_all = q.to_vec();
    q_all.resize(n_all, 0.0);

    let lp_failure = |status: String| Error::LpFailure {
        target: name.to_string(),
        status,
    };
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-13)
        .tol_gap_rel(1e-13)
        .tol_feas(1e-13)
        .max_iter(400)
        .static_regularization_constant(1e-13)
        .iterative_refinement_reltol(1e-15)
        .iterative_refinement_abstol(1e-15)
        .iterative_refinement_max_iter(50)
        .build()
        .map_err(|e| lp_failure(e.to_string()))?;
    let cones = [ZeroConeT(m_data), NonnegativeConeT(2 * n_all)];
    let mut solver = DefaultSolver::new(&p_mat, &q_all, &a_mat, &b, &cones, settings)
        .map_err(|e| lp_failure(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => return Ok(None),
        other => return Err(lp_failure(format!("{other:?}"))),
    }
    Ok(Some((sol.z[..m_data].to_vec(), sol.x[..n].to_vec())))
}

/// Certified bound on `x[col]` (minimum or maximum) and the value at the
/// solver's primal point.
fn solve_one(
    sys: &ConstraintSystem,
    scale: &[f64],
    col: usize,
    maximise: bool,
    name: &str,
) -> Result<(f64, f64)> {
    let n = sys.n_vars();
    let sign = if maximise { -1.0 } else { 1.0 };
    let mut q = vec![0.0; n];
    q[col] = sign;
    let rows = scale_rows(sys, scale, name)?;
    if rows.coeffs.is_empty() {
        let v = if maximise { scale[col] } else { 0.0 };
        return Ok((v, v));
    }
    let (y, x) = run_solver(&rows, &q, name)?.ok_or_else(|| Error::InfeasibleLp {
        target: name.to_string(),
    })?;

    // For feasible u, with r = A u in [L, U] and any multipliers y:
    //   q.u = (q + A^T y).u - y.r >= sum_j min(0, (q + A^T y)_j) - sum_r max(y_r L_r, y_r U_r)
    // which holds whatever the solver's accuracy.
    let mut reduced = q.clone();
    for (r, row) in rows.coeffs.iter().enumerate() {
        for &(c, a) in row {
            reduced[c] += a * y[r];
        }
    }
    let dual_obj = reduced.iter().map(|v| v.min(0.0)).sum::<f64>()
        - y.iter()
            .enumerate()
            .map(|(r, &yr)| (yr * rows.lower[r]).max(yr * rows.upper[r]))
            .sum::<f64>();
    let certified = sign * dual_obj * scale[col];
    let primal = x[col].clamp(0.0, 1.0) * scale[col];
    Ok((certified, primal))
}

/// Certified `[min, max]` of one unknown.
pub fn bound_target(sys: &ConstraintSystem, target: Target) -> Result<Interval> {
    let name = format!("{target} ({})", sys.detector);
    let col = sys.column(target).ok_or_else(|| {
        Error::IllPosedDataset(format!(
            "{target} lies beyond the truncation j_max = {}",
            sys.j_max
        ))
    })?;
    if sys.rows.is_empty() {
        return Ok(Interval::UNIT);
    }
    let scale = variable_scales(sys);
    let (lo, lo_primal) = solve_one(sys, &scale, col, false, &name)?;
    let (hi, hi_primal) = solve_one(sys, &scale, col, true, &name)?;
    // relative to the unknown's a priori range, never looser than absolute
    let gap = (lo_primal - lo).max(hi - hi_primal) / scale[col].max(f64::MIN_POSITIVE);
    if gap > MAX_DUALITY_GAP {
        return Err(Error::DualityGap { target: name, gap });
    }
    if lo > hi + MAX_DUALITY_GAP * scale[col] {
        return Err(Error::InfeasibleLp { target: name });
    }
    Ok(Interval::new(lo, hi.max(lo)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::dataset::Observation;

    fn obs(intensity: f64, class: SiftClass, gain: f64) -> Observation {
        Observation {
            intensity,
            class,
            detector: Detector::Right,
            gain,
        }
    }

    #[test]
    fn columns_are_distinct() {
        let j = 4;
        let mut seen = std::collections::HashSet::new();
        seen.insert(column(j, Target::Vacuum).unwrap());
        for n in 1..=j {
            assert!(seen.insert(column(j, Target::Matched(n)).unwrap()));
            assert!(seen.insert(column(j, Target::Opposite(n)).unwrap()));
        }
        for a in 0..=j {
            for b in 0..=j {
                if a + b > 0 {
                    assert!(seen.insert(column(j, Target::Pair(a, b)).unwrap()));
                }
            }
        }
        assert_eq!(seen.len(), var_count(j));
        assert_eq!(*seen.iter().max().unwrap(), var_count(j) - 1);
        assert_eq!(column(j, Target::Matched(5)), None);
    }

    #[test]
    fn vacuum_observation_pins_y00() {
        let ds = DecoyDataset::new(vec![obs(0.0, SiftClass::Independent, 3e-6)]).unwrap();
        let sys = build_constraints(&ds, Detector::Right, 3).unwrap();
        let y00 = bound_target(&sys, Target::Vacuum).unwrap();
        assert!((y00.lo - 3e-6).abs() < 1e-12 && (y00.hi - 3e-6).abs() < 1e-12);
        let m1 = bound_target(&sys, Target::Matched(1)).unwrap();
        assert_eq!((m1.lo, m1.hi), (0.0, 1.0));
    }

    #[test]
    fn single_intensity_is_underdetermined() {
        let ds = DecoyDataset::new(vec![obs(0.2, SiftClass::Matched, 0.05)]).unwrap();
        let sys = build_constraints(&ds, Detector::Right, 1).unwrap();
        let y00 = bound_target(&sys, Target::Vacuum).unwrap();
        let m1 = bound_target(&sys, Target::Matched(1)).unwrap();
        assert!(y00.lo < 1e-9);
        assert!(m1.lo < 1e-9);
        assert!(m1.width() > 0.1);
    }

    #[test]
    fn contradictory_data_is_infeasible() {
        let ds = DecoyDataset::new(vec![
            obs(0.0, SiftClass::Independent, 0.5),
            obs(0.0, SiftClass::Matched, 0.1),
        ])
        .unwrap();
        let sys = build_constraints(&ds, Detector::Right, 2).unwrap();
        assert!(matches!(
            bound_target(&sys, Target::Vacuum),
            Err(Error::InfeasibleLp { .. })
        ));
    }

    #[test]
    fn other_detector_is_unconstrained() {
        let ds = DecoyDataset::new(vec![obs(0.0, SiftClass::Independent, 0.01)]).unwrap();
        let sys = build_constraints(&ds, Detector::Left, 2).unwrap();
        assert_eq!(bound_target(&sys, Target::Vacuum).unwrap(), Interval::UNIT);
    }
}
