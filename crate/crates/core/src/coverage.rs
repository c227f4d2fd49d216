//! Coverage-disk geometry, the overlap graph, union-area computation, and the
//! greedy coverage-constrained vehicle scheduling.
//!
//! All areas are measured on a fixed world-anchored lattice of square cells:
//! a cell with index (i, j) has its center at ((i+0.5)·cell, (j+0.5)·cell)
//! and counts as covered by a disk when its center lies inside the disk.
//! Anchoring the lattice to the world origin (rather than to a bounding box)
//! makes subset unions directly comparable to the full union.

use crate::error::{CoreError, Result};
use crate::map::WorldPoint;

/// A vehicle's sensing footprint on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageDisk {
    pub vehicle_id: u32,
    pub center: WorldPoint,
    pub radius_m: f64,
}

impl CoverageDisk {
    pub fn new(vehicle_id: u32, center: WorldPoint, radius_m: f64) -> Result<Self> {
        if !(radius_m > 0.0) {
            return Err(CoreError::invalid("coverage radius must be positive"));
        }
        Ok(Self {
            vehicle_id,
            center,
            radius_m,
        })
    }
}

/// Index range of lattice cells whose centers fall in [lo, hi].
fn cell_range(lo: f64, hi: f64, cell: f64) -> (i64, i64) {
    let first = (lo / cell - 0.5).ceil() as i64;
    let last = (hi / cell - 0.5).floor() as i64;
    (first, last)
}

/// Column interval covered by `disk` on lattice row `j`, if any.
fn row_interval(disk: &CoverageDisk, j: i64, cell: f64) -> Option<(i64, i64)> {
    let y = (j as f64 + 0.5) * cell;
    let dy = y - disk.center.y;
    let rem = disk.radius_m * disk.radius_m - dy * dy;
    if rem < 0.0 {
        return None;
    }
    let s = rem.sqrt();
    let (lo, hi) = cell_range(disk.center.x - s, disk.center.x + s, cell);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

fn row_span(disk: &CoverageDisk, cell: f64) -> (i64, i64) {
    cell_range(
        disk.center.y - disk.radius_m,
        disk.center.y + disk.radius_m,
        cell,
    )
}

/// Number of lattice cells covered by a single disk.
fn disk_cell_count(disk: &CoverageDisk, cell: f64) -> u64 {
    let (j0, j1) = row_span(disk, cell);
    let mut n = 0u64;
    for j in j0..=j1 {
        if let Some((lo, hi)) = row_interval(disk, j, cell) {
            n += (hi - lo + 1) as u64;
        }
    }
    n
}

/// Number of lattice cells covered by both disks.
fn pair_intersection_count(a: &CoverageDisk, b: &CoverageDisk, cell: f64) -> u64 {
    let (aj0, aj1) = row_span(a, cell);
    let (bj0, bj1) = row_span(b, cell);
    let j0 = aj0.max(bj0);
    let j1 = aj1.min(bj1);
    let mut n = 0u64;
    for j in j0..=j1 {
        if let (Some((alo, ahi)), Some((blo, bhi))) =
            (row_interval(a, j, cell), row_interval(b, j, cell))
        {
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if lo <= hi {
                n += (hi - lo + 1) as u64;
            }
        }
    }
    n
}

/// Number of lattice cells covered by at least one disk.
fn union_cell_count(disks: &[CoverageDisk], cell: f64) -> u64 {
    if disks.is_empty() {
        return 0;
    }
    let mut j0 = i64::MAX;
    let mut j1 = i64::MIN;
    for d in disks {
        let (a, b) = row_span(d, cell);
        j0 = j0.min(a);
        j1 = j1.max(b);
    }
    let mut total = 0u64;
    let mut intervals: Vec<(i64, i64)> = Vec::with_capacity(disks.len());
    for j in j0..=j1 {
        intervals.clear();
        for d in disks {
            if let Some(iv) = row_interval(d, j, cell) {
                intervals.push(iv);
            }
        }
        if intervals.is_empty() {
            continue;
        }
        intervals.sort_unstable();
        let (mut lo, mut hi) = intervals[0];
        for &(l, h) in &intervals[1..] {
            if l <= hi + 1 {
                hi = hi.max(h);
            } else {
                total += (hi - lo + 1) as u64;
                lo = l;
                hi = h;
            }
        }
        total += (hi - lo + 1) as u64;
    }
    total
}

/// Area of the union of the disks, square meters. Deterministic for fixed
/// inputs; an empty list covers nothing.
pub fn union_area(disks: &[CoverageDisk], cell_m: f64) -> Result<f64> {
    if !(cell_m > 0.0) {
        return Err(CoreError::invalid("cell size must be positive"));
    }
    Ok(union_cell_count(disks, cell_m) as f64 * cell_m * cell_m)
}

/// Jaccard overlap of two disks: area(a ∩ b) / area(a ∪ b).
pub fn overlap_ratio(a: &CoverageDisk, b: &CoverageDisk, cell_m: f64) -> f64 {
    let inter = pair_intersection_count(a, b, cell_m);
    let union = disk_cell_count(a, cell_m) + disk_cell_count(b, cell_m) - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Analytic Jaccard overlap for two equal-radius disks at center distance
/// `d`: lens area 2r²·cos⁻¹(d/2r) − (d/2)·√(4r²−d²) over the union. Used as
/// the reference the grid estimate is checked against.
pub fn lens_overlap_ratio(radius: f64, d: f64) -> f64 {
    if d >= 2.0 * radius {
        return 0.0;
    }
    let lens = 2.0 * radius * radius * (d / (2.0 * radius)).acos()
        - (d / 2.0) * (4.0 * radius * radius - d * d).sqrt();
    let union = 2.0 * std::f64::consts::PI * radius * radius - lens;
    lens / union
}

/// Complete weighted graph of coverage overlaps.
#[derive(Debug, Clone)]
pub struct CoverageGraph {
    disks: Vec<CoverageDisk>,
    edges: Vec<f64>,
}

impl CoverageGraph {
    pub fn build(disks: &[CoverageDisk], cell_m: f64) -> Result<Self> {
        if !(cell_m > 0.0) {
            return Err(CoreError::invalid("cell size must be positive"));
        }
        let n = disks.len();
        let mut edges = vec![0.0; n * n];
        // Rasterize every disk once; pair overlaps then intersect the
        // cached row intervals with integer arithmetic only.
        let spans: Vec<(i64, Vec<Option<(i64, i64)>>)> = disks
            .iter()
            .map(|d| {
                let (j0, j1) = row_span(d, cell_m);
                (j0, (j0..=j1).map(|j| row_interval(d, j, cell_m)).collect())
            })
            .collect();
        let counts: Vec<u64> = spans
            .iter()
            .map(|(_, rows)| {
                rows.iter()
                    .flatten()
                    .map(|(lo, hi)| (hi - lo + 1) as u64)
                    .sum()
            })
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = disks[i].center.ground_dist(&disks[j].center);
                let e = if gap >= disks[i].radius_m + disks[j].radius_m {
                    0.0
                } else {
                    let (aj0, a_rows) = &spans[i];
                    let (bj0, b_rows) = &spans[j];
                    let lo_row = (*aj0).max(*bj0);
                    let hi_row = (aj0 + a_rows.len() as i64 - 1).min(bj0 + b_rows.len() as i64 - 1);
                    let mut inter = 0u64;
                    for row in lo_row..=hi_row {
                        if let (Some((alo, ahi)), Some((blo, bhi))) =
                            (a_rows[(row - aj0) as usize], b_rows[(row - bj0) as usize])
                        {
                            let lo = alo.max(blo);
                            let hi = ahi.min(bhi);
                            if lo <= hi {
                                inter += (hi - lo + 1) as u64;
                            }
                        }
                    }
                    let union = counts[i] + counts[j] - inter;
                    if union == 0 {
                        0.0
                    } else {
                        inter as f64 / union as f64
                    }
                };
                edges[i * n + j] = e;
                edges[j * n + i] = e;
            }
        }
        Ok(Self {
            disks: disks.to_vec(),
            edges,
        })
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn edge(&self, i: usize, j: usize) -> f64 {
        self.edges[i * self.disks.len() + j]
    }

    pub fn disks(&self) -> &[CoverageDisk] {
        &self.disks
    }
}

/// Average overlapping ratio of vertex `i` over the active set, with the
/// total vehicle count as the denominator.
pub fn aor(graph: &CoverageGraph, i: usize, active: &[bool]) -> f64 {
    let n = graph.len();
    debug_assert_eq!(active.len(), n);
    debug_assert!(active[i]);
    let sum: f64 = (0..n)
        .filter(|&j| j != i && active[j])
        .map(|j| graph.edge(i, j))
        .sum();
    sum / n as f64
}

/// Scheduling outcome: which vehicles stay scheduled and the retained
/// fraction of the full union coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub scheduled: Vec<bool>,
    pub achieved_fraction: f64,
}

impl ScheduleResult {
    pub fn scheduled_count(&self) -> usize {
        self.scheduled.iter().filter(|s| **s).count()
    }
}

/// Incrementally maintained union of the active disk set, counted on a
/// dense grid over the disks' joint bounding box. Per-disk row intervals
/// are rasterized once and reused by add/remove.
struct CoverageCounter {
    i0: i64,
    width: usize,
    counts: Vec<u16>,
    covered: u64,
    /// Per disk: first row and per-row column intervals, absolute indices.
    spans: Vec<(i64, Vec<Option<(i64, i64)>>)>,
    j0: i64,
}

impl CoverageCounter {
    fn new(disks: &[CoverageDisk], cell: f64) -> Self {
        let mut i0 = i64::MAX;
        let mut i1 = i64::MIN;
        let mut j0 = i64::MAX;
        let mut j1 = i64::MIN;
        let mut spans = Vec::with_capacity(disks.len());
        for d in disks {
            let (r0, r1) = row_span(d, cell);
            let mut rows = Vec::with_capacity((r1 - r0 + 1).max(0) as usize);
            for j in r0..=r1 {
                let iv = row_interval(d, j, cell);
                if let Some((lo, hi)) = iv {
                    i0 = i0.min(lo);
                    i1 = i1.max(hi);
                    j0 = j0.min(j);
                    j1 = j1.max(j);
                }
                rows.push(iv);
            }
            spans.push((r0, rows));
        }
        if i0 > i1 {
            // Degenerate: no disk covers any cell.
            return Self {
                i0: 0,
                width: 0,
                counts: Vec::new(),
                covered: 0,
                spans,
                j0: 0,
            };
        }
        let width = (i1 - i0 + 1) as usize;
        let height = (j1 - j0 + 1) as usize;
        Self {
            i0,
            width,
            counts: vec![0; width * height],
            covered: 0,
            spans,
            j0,
        }
    }

    fn apply(&mut self, disk_idx: usize, add: bool) {
        let (r0, rows) = &self.spans[disk_idx];
        for (k, iv) in rows.iter().enumerate() {
            let Some((lo, hi)) = iv else { continue };
            let j = r0 + k as i64;
            let base = (j - self.j0) as usize * self.width;
            let lo_ix = base + (lo - self.i0) as usize;
            let hi_ix = base + (hi - self.i0) as usize;
            for c in &mut self.counts[lo_ix..=hi_ix] {
                if add {
                    if *c == 0 {
                        self.covered += 1;
                    }
                    *c += 1;
                } else {
                    *c -= 1;
                    if *c == 0 {
                        self.covered -= 1;
                    }
                }
            }
        }
    }
}

/// Greedy coverage-constrained scheduling.
///
/// Starts with every vehicle scheduled and repeatedly removes the active
/// vertex with the highest AoR (recomputed over the remaining active set,
/// ties to the lowest vehicle id). A removal that drops the active union
/// below `beta` times the full union is undone and the loop stops. The last
/// active vehicle is never removed.
pub fn schedule(disks: &[CoverageDisk], beta: f64, cell_m: f64) -> Result<ScheduleResult> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::invalid(format!(
            "beta must be within [0, 1], got {beta}"
        )));
    }
    if !(cell_m > 0.0) {
        return Err(CoreError::invalid("cell size must be positive"));
    }
    let n = disks.len();
    if n == 0 {
        return Ok(ScheduleResult {
            scheduled: vec![],
            achieved_fraction: 1.0,
        });
    }

    let graph = CoverageGraph::build(disks, cell_m)?;
    let mut counter = CoverageCounter::new(disks, cell_m);
    for i in 0..n {
        counter.apply(i, true);
    }
    let full = counter.covered;
    let threshold = beta * full as f64;

    let mut active = vec![true; n];
    let mut active_count = n;

    while active_count > 1 {
        let mut best: Option<(f64, u32, usize)> = None;
        for (i, d) in disks.iter().enumerate() {
            if !active[i] {
                continue;
            }
            let o = aor(&graph, i, &active);
            let candidate = (o, d.vehicle_id, i);
            best = match best {
                None => Some(candidate),
                Some((bo, bid, bi)) => {
                    if o > bo || (o == bo && d.vehicle_id < bid) {
                        Some(candidate)
                    } else {
                        Some((bo, bid, bi))
                    }
                }
            };
        }
        let (_, _, k) = best.expect("active set non-empty");

        counter.apply(k, false);
        if (counter.covered as f64) < threshold {
            counter.apply(k, true);
            break;
        }
        active[k] = false;
        active_count -= 1;
    }

    let achieved_fraction = if full == 0 {
        1.0
    } else {
        counter.covered as f64 / full as f64
    };
    Ok(ScheduleResult {
        scheduled: active,
        achieved_fraction,
    })
}
