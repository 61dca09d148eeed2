//! Reliability-sorted, non-continuous-path 2-D phase unwrapping.
//!
//! Pixel reliability comes from wrapped second differences along the two
//! axes and both diagonals. Edges between masked 4-neighbours are visited in
//! order of increasing summed second difference, and each edge merges its
//! two groups after shifting the smaller one by the multiple of 2*pi that
//! makes the pair continuous.

use std::f64::consts::PI;

use crate::field::RealField;

const TWO_PI: f64 = 2.0 * PI;

fn wrap(x: f64) -> f64 {
    x - TWO_PI * (x / TWO_PI).round()
}

fn second_difference(phase: &RealField, inside: &[bool], r: usize, c: usize) -> f64 {
    let (h, w) = phase.shape();
    if r == 0 || c == 0 || r + 1 >= h || c + 1 >= w {
        return f64::INFINITY;
    }
    let neighbours = [
        (r - 1, c - 1),
        (r - 1, c),
        (r - 1, c + 1),
        (r, c - 1),
        (r, c + 1),
        (r + 1, c - 1),
        (r + 1, c),
        (r + 1, c + 1),
    ];
    if neighbours.iter().any(|&(rr, cc)| !inside[rr * w + cc]) {
        return f64::INFINITY;
    }
    let p = phase[(r, c)];
    let pair = |a: (usize, usize), b: (usize, usize)| wrap(phase[a] - p) - wrap(p - phase[b]);
    let horizontal = pair((r, c - 1), (r, c + 1));
    let vertical = pair((r - 1, c), (r + 1, c));
    let diag = pair((r - 1, c - 1), (r + 1, c + 1));
    let anti = pair((r - 1, c + 1), (r + 1, c - 1));
    (horizontal * horizontal + vertical * vertical + diag * diag + anti * anti).sqrt()
}

/// Unwraps `wrapped` inside `mask` (nonzero = inside).
///
/// Inside the mask the output differs from the input by integer multiples
/// of 2*pi; outside it is 0. Disconnected mask regions are unwrapped
/// independently, each anchored at whichever of its pixels absorbs the
/// others first.
pub fn unwrap_phase(wrapped: &RealField, mask: &RealField) -> RealField {
    assert_eq!(wrapped.shape(), mask.shape(), "phase and mask shapes differ");
    let (h, w) = wrapped.shape();
    let n = h * w;
    let inside: Vec<bool> = mask.data().iter().map(|&m| m != 0.0).collect();

    let mut unreliability = vec![f64::INFINITY; n];
    for r in 0..h {
        for c in 0..w {
            if inside[r * w + c] {
                unreliability[r * w + c] = second_difference(wrapped, &inside, r, c);
            }
        }
    }

    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !inside[i] {
                continue;
            }
            if c + 1 < w && inside[i + 1] {
                edges.push((unreliability[i] + unreliability[i + 1], i, i + 1));
            }
            if r + 1 < h && inside[i + w] {
                edges.push((unreliability[i] + unreliability[i + w], i, i + w));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut group: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut turns = vec![0i64; n];

    for &(_, a, b) in &edges {
        let (ga, gb) = (group[a], group[b]);
        if ga == gb {
            continue;
        }
        let pa = wrapped.data()[a] + TWO_PI * turns[a] as f64;
        let pb = wrapped.data()[b] + TWO_PI * turns[b] as f64;
        let k = ((pa - pb) / TWO_PI).round() as i64;
        // move the smaller group onto the larger one
        let (keep, moved, shift) = if members[ga].len() >= members[gb].len() {
            (ga, gb, k)
        } else {
            (gb, ga, -k)
        };
        let moved_members = std::mem::take(&mut members[moved]);
        for &p in &moved_members {
            turns[p] += shift;
            group[p] = keep;
        }
        members[keep].extend(moved_members);
    }

    RealField::from_fn(h, w, |r, c| {
        let i = r * w + c;
        if inside[i] {
            wrapped.data()[i] + TWO_PI * turns[i] as f64
        } else {
            0.0
        }
    })
}
