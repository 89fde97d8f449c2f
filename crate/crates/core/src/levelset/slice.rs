//! Zero level set of a value field on a constant-`v_AV` slice.

use std::collections::HashMap;

use crate::error::ParamError;

use super::field::ValueField;

/// Ordered `(x_rel, v_rel)` vertices of one contour piece. Closed loops
/// repeat their first vertex at the end.
pub type Polyline = Vec<[f64; 2]>;

/// Cell edge identifier: `(vertical, i, j)`. A horizontal edge runs from node
/// `(i, j)` to `(i + 1, j)`, a vertical one from `(i, j)` to `(i, j + 1)`.
type EdgeKey = (bool, usize, usize);

/// Marching-squares contour of `V = 0` on the slice at ego speed `v_av`.
///
/// Values between `v_AV` grid planes are interpolated linearly. An entirely
/// safe or entirely unsafe slice yields an empty list.
pub fn extract_slice(field: &ValueField, v_av: f64) -> Result<Vec<Polyline>, ParamError> {
    let grid = field.grid();
    let [ax, av, aa] = *grid.axes();
    let (k, frac) = aa.locate(v_av).ok_or_else(|| {
        ParamError::new(format!("slice speed {v_av} outside grid range [{}, {}]", aa.lower, aa.upper))
    })?;
    let (nx, nv) = (ax.nodes, av.nodes);
    let plane: Vec<f64> = (0..nx * nv)
        .map(|n| {
            let (i, j) = (n / nv, n % nv);
            let lo = field.node_value(i, j, k);
            let hi = field.node_value(i, j, k + 1);
            lo + frac * (hi - lo)
        })
        .collect();
    let at = |i: usize, j: usize| plane[i * nv + j];
    let above = |i: usize, j: usize| at(i, j) > 0.0;

    let vertex = |e: EdgeKey| -> [f64; 2] {
        let (vertical, i, j) = e;
        let (i2, j2) = if vertical { (i, j + 1) } else { (i + 1, j) };
        let (a, b) = (at(i, j), at(i2, j2));
        let t = if a == b { 0.5 } else { (a / (a - b)).clamp(0.0, 1.0) };
        let p0 = [ax.coord(i), av.coord(j)];
        let p1 = [ax.coord(i2), av.coord(j2)];
        [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..nv - 1 {
            // corners counter-clockwise from (i, j)
            let case = (above(i, j) as u8)
                | (above(i + 1, j) as u8) << 1
                | (above(i + 1, j + 1) as u8) << 2
                | (above(i, j + 1) as u8) << 3;
            let bottom = (false, i, j);
            let right = (true, i + 1, j);
            let top = (false, i, j + 1);
            let left = (true, i, j);
            let centre_above = || 0.25 * (at(i, j) + at(i + 1, j) + at(i + 1, j + 1) + at(i, j + 1)) > 0.0;
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if centre_above() {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if centre_above() {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let polylines = link_segments(&segments)
        .into_iter()
        .map(|chain| {
            let mut line: Polyline = Vec::with_capacity(chain.len());
            for e in chain {
                let p = vertex(e);
                if line.last() != Some(&p) {
                    line.push(p);
                }
            }
            line
        })
        .filter(|line| line.len() >= 2)
        .collect();
    Ok(polylines)
}

/// Joins segments sharing an edge into ordered chains. Open chains start at
/// an edge used once; loops come back to their first edge.
fn link_segments(segments: &[(EdgeKey, EdgeKey)]) -> Vec<Vec<EdgeKey>> {
    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (n, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(n);
        incident.entry(b).or_default().push(n);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();

    let walk = |start_seg: usize, start_edge: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut chain = vec![start_edge];
        let mut seg = start_seg;
        let mut edge = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            edge = if a == edge { b } else { a };
            chain.push(edge);
            match incident[&edge].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };

    // Open chains first, from their free ends.
    for n in 0..segments.len() {
        if used[n] {
            continue;
        }
        let (a, b) = segments[n];
        let end = if incident[&a].len() == 1 {
            Some(a)
        } else if incident[&b].len() == 1 {
            Some(b)
        } else {
            None
        };
        if let Some(e) = end {
            chains.push(walk(n, e, &mut used));
        }
    }
    for n in 0..segments.len() {
        if !used[n] {
            chains.push(walk(n, segments[n].0, &mut used));
        }
    }
    chains
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::field::{initial_payoff, SafetyCriterion};
    use crate::levelset::grid::GridSpec;

    #[test]
    fn straight_boundary_of_distance_payoff() {
        let g = GridSpec::new([-2.0, -1.0, 0.0], [2.0, 1.0, 1.0], [5, 5, 3]).unwrap();
        // l = x_rel; zero level set is the line x_rel = 0 at every speed
        let f = initial_payoff(&g, SafetyCriterion::Distance);
        let lines = extract_slice(&f, 0.5).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 5);
        assert!(lines[0].iter().all(|p| p[0].abs() < 1e-12));
    }

    #[test]
    fn headway_boundary_moves_with_speed() {
        let g = GridSpec::new([0.0, -1.0, 0.0], [20.0, 1.0, 30.0], [21, 3, 31]).unwrap();
        let f = initial_payoff(&g, SafetyCriterion::time_headway(0.4).unwrap());
        let at_20 = extract_slice(&f, 20.0).unwrap();
        let x = at_20[0][0][0];
        assert!((x - 8.0).abs() < 1e-9, "{x}");
        let at_12_5 = extract_slice(&f, 12.5).unwrap();
        assert!((at_12_5[0][0][0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_sign_gives_empty_contour() {
        let g = GridSpec::new([1.0, -1.0, 0.0], [5.0, 1.0, 1.0], [5, 5, 3]).unwrap();
        let f = initial_payoff(&g, SafetyCriterion::Distance);
        assert!(extract_slice(&f, 0.3).unwrap().is_empty());
    }

    #[test]
    fn slice_outside_grid_is_rejected() {
        let g = GridSpec::new([1.0, -1.0, 0.0], [5.0, 1.0, 1.0], [5, 5, 3]).unwrap();
        let f = initial_payoff(&g, SafetyCriterion::Distance);
        assert!(extract_slice(&f, 2.0).is_err());
    }

    #[test]
    fn closed_loop_links_back_to_start() {
        // square ring of segments around one cell block
        let segs = vec![
            ((false, 0, 0), (true, 1, 0)),
            ((true, 1, 0), (false, 0, 1)),
            ((false, 0, 1), (true, 0, 0)),
            ((true, 0, 0), (false, 0, 0)),
        ];
        let chains = link_segments(&segs);
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].first(), chains[0].last());
        assert_eq!(chains[0].len(), 5);
    }
}
