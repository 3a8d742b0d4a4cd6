//! Group loss: a scale-agnostic comparison of within-group distance
//! profiles between the input space and the embedding.
//!
//! For a group of `γ` points, every pairwise distance is divided by the sum
//! of all `γ(γ-1)/2` distances in that group. The group cost is the squared
//! Euclidean distance between the input-space and embedding profiles. With
//! `γ = 4` this is the stochastic quartet cost.
//!
//! Groups are drawn afresh for every batch. The default [`GroupStrategy::Headed`]
//! gives each batch point exactly one group in which it is the first member;
//! the point's loss is that group's cost and the batch loss is the mean over
//! points.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{condensed_len, euclidean, items_for_condensed_len, DenseMatrix};

/// Floor on normalisation denominators.
pub const NORMALIZATION_EPS: f64 = 1e-12;

/// How a batch is split into groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum GroupStrategy {
    /// One overlapping group per batch point, headed by that point and
    /// continuing through the next `γ-1` points of a shuffled cyclic order.
    #[default]
    Headed,
    /// Shuffle, then cut into `⌊B/γ⌋` disjoint groups; the remainder sits out.
    Disjoint,
}

impl fmt::Display for GroupStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupStrategy::Headed => "headed",
            GroupStrategy::Disjoint => "disjoint",
        })
    }
}

impl FromStr for GroupStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "headed" => Ok(GroupStrategy::Headed),
            "disjoint" => Ok(GroupStrategy::Disjoint),
            other => Err(Error::config(format!(
                "unknown group strategy {other:?} (expected headed or disjoint)"
            ))),
        }
    }
}

/// Groups of batch-row indices for one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupAssignment {
    pub gamma: usize,
    pub batch_size: usize,
    pub strategy: GroupStrategy,
    pub groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Checks the structural invariants against a batch of `batch_size` rows.
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 2 {
            return Err(Error::config("group size must be at least 2"));
        }
        let mut seen = vec![false; self.batch_size];
        for (k, g) in self.groups.iter().enumerate() {
            if g.len() != self.gamma {
                return Err(Error::shape(format!(
                    "group {k} has {} members, expected {}",
                    g.len(),
                    self.gamma
                )));
            }
            for (a, &i) in g.iter().enumerate() {
                if i >= self.batch_size {
                    return Err(Error::shape(format!(
                        "group {k} refers to row {i} of a {}-row batch",
                        self.batch_size
                    )));
                }
                if g[..a].contains(&i) {
                    return Err(Error::shape(format!("group {k} repeats row {i}")));
                }
            }
            match self.strategy {
                GroupStrategy::Headed => {
                    if g[0] != k {
                        return Err(Error::shape(format!(
                            "headed group {k} starts with row {}",
                            g[0]
                        )));
                    }
                }
                GroupStrategy::Disjoint => {
                    for &i in g {
                        if std::mem::replace(&mut seen[i], true) {
                            return Err(Error::shape(format!(
                                "row {i} appears in two disjoint groups"
                            )));
                        }
                    }
                }
            }
        }
        let expected = match self.strategy {
            GroupStrategy::Headed => self.batch_size,
            GroupStrategy::Disjoint => self.batch_size / self.gamma,
        };
        if self.groups.len() != expected {
            return Err(Error::shape(format!(
                "{} groups for a {}-row batch, expected {expected}",
                self.groups.len(),
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Draws the groups for one batch from `rng` (the "groups" stream).
pub fn assign_groups(
    batch_size: usize,
    gamma: usize,
    strategy: GroupStrategy,
    rng: &mut SeededRng,
) -> Result<GroupAssignment> {
    if gamma < 2 {
        return Err(Error::config(format!("group size {gamma} is below 2")));
    }
    if batch_size < gamma {
        return Err(Error::config(format!(
            "batch of {batch_size} rows cannot hold a group of {gamma}"
        )));
    }
    let order = rng.shuffle(batch_size);
    let groups = match strategy {
        GroupStrategy::Headed => {
            let mut position = vec![0usize; batch_size];
            for (p, &i) in order.iter().enumerate() {
                position[i] = p;
            }
            (0..batch_size)
                .map(|i| {
                    let p = position[i];
                    (0..gamma).map(|s| order[(p + s) % batch_size]).collect()
                })
                .collect()
        }
        GroupStrategy::Disjoint => order
            .chunks_exact(gamma)
            .map(|c| c.to_vec())
            .collect(),
    };
    Ok(GroupAssignment {
        gamma,
        batch_size,
        strategy,
        groups,
    })
}

/// A group-normalised distance profile.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedProfile {
    pub values: Vec<f64>,
    /// All raw distances were zero; `values` is then the uniform profile.
    pub degenerate: bool,
}

/// Divides every condensed distance by the group total.
pub fn normalize_group_distances(raw: &[f64]) -> Result<NormalizedProfile> {
    match items_for_condensed_len(raw.len()) {
        Some(n) if n >= 2 => {}
        _ => {
            return Err(Error::shape(format!(
                "{} distances do not form a group of at least 2 points",
                raw.len()
            )))
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        let u = 1.0 / raw.len() as f64;
        return Ok(NormalizedProfile {
            values: vec![u; raw.len()],
            degenerate: true,
        });
    }
    let denom = total.max(NORMALIZATION_EPS);
    Ok(NormalizedProfile {
        values: raw.iter().map(|d| d / denom).collect(),
        degenerate: false,
    })
}

/// Raw and normalised distance profiles of one group in both spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGeometry {
    pub hd_raw: Vec<f64>,
    pub ld_raw: Vec<f64>,
    pub hd_norm: Vec<f64>,
    pub ld_norm: Vec<f64>,
    pub cost: f64,
}

fn check_group_pair(hd: &DenseMatrix, ld: &DenseMatrix) -> Result<()> {
    if hd.rows() != ld.rows() {
        return Err(Error::shape(format!(
            "group has {} input rows but {} embedded rows",
            hd.rows(),
            ld.rows()
        )));
    }
    if hd.rows() < 2 {
        return Err(Error::shape("a group needs at least 2 points"));
    }
    Ok(())
}

pub fn group_geometry(hd: &DenseMatrix, ld: &DenseMatrix) -> Result<GroupGeometry> {
    check_group_pair(hd, ld)?;
    let hd_raw = crate::tensor::pairwise_euclidean(hd)?;
    let ld_raw = crate::tensor::pairwise_euclidean(ld)?;
    let hd_norm = normalize_group_distances(&hd_raw)?.values;
    let ld_norm = normalize_group_distances(&ld_raw)?.values;
    let cost = hd_norm
        .iter()
        .zip(&ld_norm)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(GroupGeometry {
        hd_raw,
        ld_raw,
        hd_norm,
        ld_norm,
        cost,
    })
}

/// Cost of one group and its gradient w.r.t. the embedded coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCost {
    pub cost: f64,
    /// `γ × w`, same layout as the embedded points.
    pub grad: DenseMatrix,
    pub degenerate_hd: bool,
    pub degenerate_ld: bool,
}

pub fn group_cost(hd: &DenseMatrix, ld: &DenseMatrix) -> Result<GroupCost> {
    check_group_pair(hd, ld)?;
    let members: Vec<usize> = (0..hd.rows()).collect();
    let mut scratch = Scratch::new(members.len());
    let mut grad = DenseMatrix::zeros(ld.rows(), ld.cols());
    let (cost, degenerate_hd, degenerate_ld) =
        cost_kernel(hd, ld, &members, &mut scratch, grad.as_mut_slice());
    Ok(GroupCost {
        cost,
        grad,
        degenerate_hd,
        degenerate_ld,
    })
}

struct Scratch {
    hd: Vec<f64>,
    ld: Vec<f64>,
    dg_dld: Vec<f64>,
}

impl Scratch {
    fn new(gamma: usize) -> Self {
        let p = condensed_len(gamma);
        Self {
            hd: vec![0.0; p],
            ld: vec![0.0; p],
            dg_dld: vec![0.0; p],
        }
    }
}

/// Cost of the group `members` (rows of `hd` / `ld`). Writes the gradient
/// for member `a` into `grad[a*w..(a+1)*w]`, overwriting.
fn cost_kernel(
    hd: &DenseMatrix,
    ld: &DenseMatrix,
    members: &[usize],
    s: &mut Scratch,
    grad: &mut [f64],
) -> (f64, bool, bool) {
    let gamma = members.len();
    let w = ld.cols();
    let mut p = 0;
    for a in 0..gamma {
        for b in a + 1..gamma {
            s.hd[p] = euclidean(hd.row(members[a]), hd.row(members[b]));
            s.ld[p] = euclidean(ld.row(members[a]), ld.row(members[b]));
            p += 1;
        }
    }
    let pairs = p;
    let hd_total: f64 = s.hd.iter().sum();
    let ld_total: f64 = s.ld.iter().sum();
    let degenerate_hd = hd_total <= 0.0;
    let degenerate_ld = ld_total <= 0.0;
    let uniform = 1.0 / pairs as f64;
    let hd_denom = hd_total.max(NORMALIZATION_EPS);
    let ld_denom = ld_total.max(NORMALIZATION_EPS);

    // u_k = dg/d(ld_norm_k) = -2 (hd_norm_k - ld_norm_k)
    let mut cost = 0.0;
    let mut weighted = 0.0;
    for k in 0..pairs {
        let hn = if degenerate_hd { uniform } else { s.hd[k] / hd_denom };
        let ln = if degenerate_ld { uniform } else { s.ld[k] / ld_denom };
        let diff = hn - ln;
        cost += diff * diff;
        let u = -2.0 * diff;
        s.dg_dld[k] = u;
        weighted += u * s.ld[k];
    }

    grad.iter_mut().for_each(|g| *g = 0.0);
    if degenerate_ld {
        return (cost, degenerate_hd, degenerate_ld);
    }
    // dg/d(ld_raw_m) = u_m / D - (Σ_k u_k ld_raw_k) / D²
    let correction = weighted / ld_denom / ld_denom;
    let mut p = 0;
    for a in 0..gamma {
        for b in a + 1..gamma {
            let d = s.ld[p];
            let dg_dd = s.dg_dld[p] / ld_denom - correction;
            p += 1;
            if d == 0.0 {
                continue;
            }
            let scale = dg_dd / d;
            let (za, zb) = (ld.row(members[a]), ld.row(members[b]));
            for j in 0..w {
                let t = scale * (za[j] - zb[j]);
                grad[a * w + j] += t;
                grad[b * w + j] -= t;
            }
        }
    }
    (cost, degenerate_hd, degenerate_ld)
}

/// Batch-averaged group loss and its gradient w.r.t. the embedded batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGroupLoss {
    pub loss: f64,
    pub grad: DenseMatrix,
    /// Groups whose input or embedded points all coincided.
    pub degenerate_groups: usize,
}

/// Mean per-point group cost over the batch.
///
/// Headed: each of the `B` groups carries weight `1/B`. Disjoint: each point
/// inherits its group's cost and the mean is over the `γ⌊B/γ⌋` covered
/// points, which is weight `1/⌊B/γ⌋` per group.
pub fn batch_group_loss(
    hd_batch: &DenseMatrix,
    ld_batch: &DenseMatrix,
    assignment: &GroupAssignment,
) -> Result<BatchGroupLoss> {
    if hd_batch.rows() != ld_batch.rows() || hd_batch.rows() != assignment.batch_size {
        return Err(Error::shape(format!(
            "input batch has {} rows, embedded batch {}, assignment expects {}",
            hd_batch.rows(),
            ld_batch.rows(),
            assignment.batch_size
        )));
    }
    assignment.validate()?;
    let gamma = assignment.gamma;
    let w = ld_batch.cols();
    let n_groups = assignment.groups.len();
    let block = gamma * w;

    let mut local = vec![0.0; n_groups * block];
    let per_group: Vec<(f64, bool)> = if block == 0 {
        assignment
            .groups
            .iter()
            .map(|g| {
                let mut s = Scratch::new(gamma);
                let (c, dh, dl) = cost_kernel(hd_batch, ld_batch, g, &mut s, &mut []);
                (c, dh || dl)
            })
            .collect()
    } else {
        local
            .par_chunks_mut(block)
            .zip(assignment.groups.par_iter())
            .with_min_len(64)
            .map_init(
                || Scratch::new(gamma),
                |s, (grad, g)| {
                    let (c, dh, dl) = cost_kernel(hd_batch, ld_batch, g, s, grad);
                    (c, dh || dl)
                },
            )
            .collect()
    };

    // fixed-order reduction so results do not depend on the worker count
    let weight = 1.0 / n_groups as f64;
    let mut loss = 0.0;
    let mut degenerate_groups = 0;
    let mut grad = DenseMatrix::zeros(ld_batch.rows(), w);
    for (k, (g, &(cost, degenerate))) in assignment.groups.iter().zip(&per_group).enumerate() {
        loss += cost;
        degenerate_groups += degenerate as usize;
        let block_grad = &local[k * block..(k + 1) * block];
        for (a, &row) in g.iter().enumerate() {
            for (o, v) in grad.row_mut(row).iter_mut().zip(&block_grad[a * w..(a + 1) * w]) {
                *o += weight * v;
            }
        }
    }
    Ok(BatchGroupLoss {
        loss: loss * weight,
        grad,
        degenerate_groups,
    })
}
