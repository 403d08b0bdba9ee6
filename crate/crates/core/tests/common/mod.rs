//! Independent reference implementations used as test oracles. None of these
//! call into the code paths they check.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scmkit::geometry::{BoundingBox, Detection, GroundTruth};
use scmkit::heatmap::Heatmap;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BoundingBox {
    let w = rng.random_range(0.5..extent / 2.0);
    let h = rng.random_range(0.5..extent / 2.0);
    bb(
        rng.random_range(-extent / 4.0..extent),
        rng.random_range(-extent / 4.0..extent),
        w,
        h,
    )
}

/// Random heatmap of at most 64x40 cells with a fraction of exact zeros.
pub fn random_heatmap(rng: &mut ChaCha8Rng, min_w: usize, min_h: usize) -> Heatmap {
    let w = rng.random_range(min_w..=64);
    let h = rng.random_range(min_h..=40);
    let values = (0..w * h)
        .map(|_| {
            if rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(0.0f32..1.0)
            }
        })
        .collect();
    Heatmap::from_values(w, h, 4, values).unwrap()
}

/// Per-window double loop over the heatmap, windows recomputed from the
/// floor formula.
pub fn naive_grid_sum(h: &Heatmap, gx: usize, gy: usize) -> Vec<f64> {
    let (w, ht) = (h.width(), h.height());
    let mut out = vec![0.0; gx * gy];
    for j in 0..gy {
        for i in 0..gx {
            let (c0, c1) = ((i * w) / gx, ((i + 1) * w) / gx);
            let (r0, r1) = ((j * ht) / gy, ((j + 1) * ht) / gy);
            let mut s = 0.0f64;
            for row in r0..r1 {
                for col in c0..c1 {
                    s += h.values()[row * w + col] as f64;
                }
            }
            out[j * gx + i] = s;
        }
    }
    out
}

/// Breadth-first flood fill over a boolean grid; returns components as
/// sorted `(i, j)` sets, ordered by their smallest row-major member.
pub fn flood_fill_components(
    cells: &BTreeSet<(usize, usize)>,
    gx: usize,
    gy: usize,
) -> Vec<BTreeSet<(usize, usize)>> {
    let mut grid = vec![false; gx * gy];
    for &(i, j) in cells {
        grid[j * gx + i] = true;
    }
    let mut seen = vec![false; gx * gy];
    let mut comps = Vec::new();
    for j in 0..gy {
        for i in 0..gx {
            if !grid[j * gx + i] || seen[j * gx + i] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([(i, j)]);
            seen[j * gx + i] = true;
            while let Some((ci, cj)) = queue.pop_front() {
                comp.insert((ci, cj));
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ni, nj) = (ci as i64 + di, cj as i64 + dj);
                        if ni < 0 || nj < 0 || ni >= gx as i64 || nj >= gy as i64 {
                            continue;
                        }
                        let idx = nj as usize * gx + ni as usize;
                        if grid[idx] && !seen[idx] {
                            seen[idx] = true;
                            queue.push_back((ni as usize, nj as usize));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

fn overlap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x().max(b.x())).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y().max(b.y())).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        0.0
    } else {
        inter / (a.w() * a.h() + b.w() * b.h() - inter)
    }
}

/// Maximum number of detection/ground-truth pairs with IoU >= t under a
/// one-to-one assignment, by exhaustive search.
pub fn max_assignment(dets: &[Detection], gts: &[GroundTruth], t: f64) -> usize {
    fn go(d: usize, dets: &[Detection], gts: &[GroundTruth], used: &mut [bool], t: f64) -> usize {
        if d == dets.len() {
            return 0;
        }
        let mut best = go(d + 1, dets, gts, used, t);
        for g in 0..gts.len() {
            if !used[g] && overlap(&dets[d].bbox, &gts[g].bbox) >= t {
                used[g] = true;
                best = best.max(1 + go(d + 1, dets, gts, used, t));
                used[g] = false;
            }
        }
        best
    }
    go(0, dets, gts, &mut vec![false; gts.len()], t)
}

/// Brute-force 101-point interpolated AP straight from the definition:
/// for each recall level, the max precision over all ranks reaching it.
pub fn ap_by_definition(labels: &[bool], n_gt: usize) -> f64 {
    let mut pr = Vec::new();
    let mut tp = 0;
    for (k, &l) in labels.iter().enumerate() {
        tp += l as usize;
        pr.push((tp as f64 / (k + 1) as f64, tp as f64 / n_gt as f64));
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        sum += pr
            .iter()
            .filter(|(_, rec)| *rec >= level)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
    }
    sum / 101.0
}
