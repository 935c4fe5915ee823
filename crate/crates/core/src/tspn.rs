//! Multi-patch tour: per-patch viewpoint neighborhoods bounded below by a
//! look-at PPA threshold, and a heuristic shortest open path visiting one
//! viewpoint from each neighborhood.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::actor::{Patch, Vec3};
use crate::error::{Error, Result};
use crate::ppa::ppa_constrained;
use crate::seeds;

/// Relative slack used when comparing a threshold against `1 / r_safe`.
const FEASIBILITY_EPS: f64 = 1e-12;
const MIN_IMPROVEMENT: f64 = 1e-12;
const RANDOM_RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub patch_index: usize,
    pub candidate_viewpoints: Vec<Vec3>,
}

impl Neighborhood {
    pub fn centroid(&self) -> Vec3 {
        self.candidate_viewpoints.iter().sum::<Vec3>() / self.candidate_viewpoints.len() as f64
    }
}

/// True when `viewpoint` satisfies both neighborhood constraints for `patch`.
pub fn satisfies_constraints(viewpoint: &Vec3, patch: &Patch, c_threshold: f64, r_safe: f64) -> bool {
    (viewpoint - patch.centroid).norm() >= r_safe
        && ppa_constrained(viewpoint, patch).is_ok_and(|v| v >= c_threshold)
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let a = n.cross(&seed).normalize();
    (a, n.cross(&a))
}

/// Samples up to `samples` viewpoints for `patch` with look-at PPA at least
/// `c_threshold` and distance at least `r_safe`.
///
/// A point at distance `d` and angle `alpha` off the normal has look-at PPA
/// `cos(alpha) / d`, so the feasible set is `cos(alpha) >= c r_safe` with
/// `r_safe <= d <= cos(alpha) / c`. At `c = 1 / r_safe` this collapses to the
/// single point on the normal at distance `r_safe`, which is returned as is.
pub fn build_neighborhood<R: Rng>(
    patch_index: usize,
    patch: &Patch,
    c_threshold: f64,
    r_safe: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Neighborhood> {
    if !(r_safe > 0.0) || !(c_threshold > 0.0) || samples == 0 {
        return Err(Error::Argument(format!(
            "neighborhood needs r_safe > 0, c > 0 and samples > 0 (got {r_safe}, {c_threshold}, {samples})"
        )));
    }
    let max = 1.0 / r_safe;
    if c_threshold > max * (1.0 + FEASIBILITY_EPS) {
        return Err(Error::InfeasibleThreshold { c: c_threshold, max });
    }
    let apex = patch.centroid + patch.normal * r_safe;
    let cos_min = c_threshold * r_safe;
    if cos_min >= 1.0 - FEASIBILITY_EPS {
        return Ok(Neighborhood {
            patch_index,
            candidate_viewpoints: vec![apex],
        });
    }

    let (a, b) = tangent_basis(&patch.normal);
    let mut kept = Vec::with_capacity(samples);
    let max_draws = samples * 64;
    for _ in 0..max_draws {
        if kept.len() == samples {
            break;
        }
        // uniform on the cap, then uniform in range along the ray
        let cos_a = rng.random_range(cos_min..=1.0);
        let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = patch.normal * cos_a + (a * phi.cos() + b * phi.sin()) * sin_a;
        let d_max = cos_a / c_threshold;
        if d_max < r_safe {
            continue;
        }
        let d = rng.random_range(r_safe..=d_max);
        let p = patch.centroid + dir * d;
        if satisfies_constraints(&p, patch, c_threshold, r_safe) {
            kept.push(p);
        }
    }
    if kept.is_empty() {
        // the feasible cap is thinner than floating-point resolution
        kept.push(apex);
    }
    Ok(Neighborhood {
        patch_index,
        candidate_viewpoints: kept,
    })
}

/// One neighborhood per patch, each drawn from its own seeded stream.
pub fn build_neighborhoods(
    patches: &[Patch],
    c_threshold: f64,
    r_safe: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Neighborhood>> {
    patches
        .par_iter()
        .enumerate()
        .map(|(i, patch)| {
            let mut rng = seeds::indexed_stream(seed, "tspn-neighborhood", i as u64);
            build_neighborhood(i, patch, c_threshold, r_safe, samples, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tour {
    /// Positions into the neighborhood list, in visiting order.
    pub order: Vec<usize>,
    /// Chosen viewpoint of each stop, parallel to `order`.
    pub viewpoints: Vec<Vec3>,
    pub total_length: f64,
}

pub fn path_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

impl Tour {
    fn from_choice(hoods: &[Neighborhood], order: Vec<usize>, choice: &[usize]) -> Self {
        let viewpoints: Vec<Vec3> = order
            .iter()
            .map(|&i| hoods[i].candidate_viewpoints[choice[i]])
            .collect();
        Self {
            total_length: path_length(&viewpoints),
            order,
            viewpoints,
        }
    }

    pub fn to_csv(&self, hoods: &[Neighborhood]) -> String {
        let mut s = String::from("stop,patch_index,x,y,z,leg_m,cumulative_m\n");
        let mut cumulative = 0.0;
        for (k, (&i, p)) in self.order.iter().zip(&self.viewpoints).enumerate() {
            let leg = if k == 0 { 0.0 } else { (p - self.viewpoints[k - 1]).norm() };
            cumulative += leg;
            let _ = writeln!(s, "{k},{},{},{},{},{leg},{cumulative}", hoods[i].patch_index, p.x, p.y, p.z);
        }
        s
    }

    pub fn write_csv(&self, hoods: &[Neighborhood], path: &Path) -> Result<()> {
        fs::write(path, self.to_csv(hoods)).map_err(|e| Error::io(path, e))
    }
}

fn closest(candidates: &[Vec3], to: &Vec3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let d = (c - to).norm();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Nearest-neighbor construction over neighborhood centroids from `start`,
/// picking on arrival the candidate closest to the previous viewpoint.
fn construct(hoods: &[Neighborhood], centroids: &[Vec3], start: usize) -> (Vec<usize>, Vec<usize>) {
    let m = hoods.len();
    let mut visited = vec![false; m];
    let mut order = vec![start];
    visited[start] = true;
    while order.len() < m {
        let last = centroids[*order.last().unwrap()];
        let next = (0..m)
            .filter(|&i| !visited[i])
            .min_by(|&i, &j| {
                (centroids[i] - last)
                    .norm()
                    .total_cmp(&(centroids[j] - last).norm())
                    .then(i.cmp(&j))
            })
            .unwrap();
        visited[next] = true;
        order.push(next);
    }
    let mut choice = vec![0; m];
    let first_target = if m > 1 { centroids[order[1]] } else { centroids[start] };
    choice[start] = closest(&hoods[start].candidate_viewpoints, &first_target);
    for k in 1..m {
        let prev = hoods[order[k - 1]].candidate_viewpoints[choice[order[k - 1]]];
        choice[order[k]] = closest(&hoods[order[k]].candidate_viewpoints, &prev);
    }
    (order, choice)
}

fn point(hoods: &[Neighborhood], choice: &[usize], i: usize) -> Vec3 {
    hoods[i].candidate_viewpoints[choice[i]]
}

/// Local search: 2-opt on the open path, single-stop relocation, and
/// per-stop re-selection of the best candidate, until nothing improves.
fn improve(hoods: &[Neighborhood], order: &mut Vec<usize>, choice: &mut [usize]) {
    let m = order.len();
    let dist = |a: &Vec3, b: &Vec3| (a - b).norm();
    loop {
        let mut improved = false;

        for i in 0..m {
            for j in i + 1..m {
                let pi = point(hoods, choice, order[i]);
                let pj = point(hoods, choice, order[j]);
                let mut delta = 0.0;
                if i > 0 {
                    let prev = point(hoods, choice, order[i - 1]);
                    delta += dist(&prev, &pj) - dist(&prev, &pi);
                }
                if j + 1 < m {
                    let next = point(hoods, choice, order[j + 1]);
                    delta += dist(&pi, &next) - dist(&pj, &next);
                }
                if delta < -MIN_IMPROVEMENT {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }

        for from in 0..m {
            for to in 0..m {
                if from == to {
                    continue;
                }
                let pts: Vec<Vec3> = order.iter().map(|&i| point(hoods, choice, i)).collect();
                let before = path_length(&pts);
                let mut trial = order.clone();
                let v = trial.remove(from);
                trial.insert(to, v);
                let after_pts: Vec<Vec3> = trial.iter().map(|&i| point(hoods, choice, i)).collect();
                if path_length(&after_pts) < before - MIN_IMPROVEMENT {
                    *order = trial;
                    improved = true;
                }
            }
        }

        for k in 0..m {
            let prev = (k > 0).then(|| point(hoods, choice, order[k - 1]));
            let next = (k + 1 < m).then(|| point(hoods, choice, order[k + 1]));
            let cost = |c: &Vec3| prev.map_or(0.0, |p| dist(&p, c)) + next.map_or(0.0, |n| dist(c, &n));
            let cands = &hoods[order[k]].candidate_viewpoints;
            let current = cost(&cands[choice[order[k]]]);
            let mut best = choice[order[k]];
            let mut best_cost = current;
            for (ci, c) in cands.iter().enumerate() {
                let v = cost(c);
                if v < best_cost - MIN_IMPROVEMENT {
                    best_cost = v;
                    best = ci;
                }
            }
            if best != choice[order[k]] {
                choice[order[k]] = best;
                improved = true;
            }
        }

        if !improved {
            break;
        }
    }
}

fn validate(hoods: &[Neighborhood]) -> Result<()> {
    if hoods.is_empty() {
        return Err(Error::Argument("no neighborhoods to visit".into()));
    }
    if let Some(h) = hoods.iter().find(|h| h.candidate_viewpoints.is_empty()) {
        return Err(Error::Argument(format!("neighborhood of patch {} is empty", h.patch_index)));
    }
    Ok(())
}

/// Best nearest-neighbor construction over all starts, before local search.
pub fn nearest_neighbor_tour(hoods: &[Neighborhood]) -> Result<Tour> {
    validate(hoods)?;
    let centroids: Vec<Vec3> = hoods.iter().map(Neighborhood::centroid).collect();
    let mut best: Option<Tour> = None;
    for start in 0..hoods.len() {
        let (order, choice) = construct(hoods, &centroids, start);
        let t = Tour::from_choice(hoods, order, &choice);
        if best.as_ref().is_none_or(|b| t.total_length < b.total_length) {
            best = Some(t);
        }
    }
    Ok(best.unwrap())
}

/// Heuristic open-path tour visiting one viewpoint per neighborhood:
/// nearest-neighbor construction from every start plus seeded random
/// restarts, each refined by local search; the shortest result wins.
pub fn solve_tour(hoods: &[Neighborhood], seed: u64) -> Result<Tour> {
    validate(hoods)?;
    let m = hoods.len();
    let centroids: Vec<Vec3> = hoods.iter().map(Neighborhood::centroid).collect();
    let mut rng = seeds::stream(seed, "tspn-restarts");

    let mut starts: Vec<(Vec<usize>, Vec<usize>)> = (0..m).map(|s| construct(hoods, &centroids, s)).collect();
    if m > 3 {
        for _ in 0..RANDOM_RESTARTS {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            let choice = hoods
                .iter()
                .map(|h| rng.random_range(0..h.candidate_viewpoints.len()))
                .collect();
            starts.push((order, choice));
        }
    }

    let mut best: Option<Tour> = None;
    for (mut order, mut choice) in starts {
        improve(hoods, &mut order, &mut choice);
        let t = Tour::from_choice(hoods, order, &choice);
        if best.as_ref().is_none_or(|b| t.total_length < b.total_length) {
            best = Some(t);
        }
    }
    Ok(best.unwrap())
}
