//! Multi-threaded scatter/gather.
//!
//! Work items (edge, input pixel) are split into contiguous chunks, one per
//! worker. Each worker fills a private buffer; buffers are then reduced in
//! chunk order so the result depends only on the thread count.

use std::ops::Range;

use super::{Accum, VoteContext, Voting};
use crate::field::{DisplacementField, GradSignal, ScalarField};

fn chunks(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub(super) fn scatter(
    voting: &Voting,
    c: &ScalarField,
    o: &DisplacementField,
    threads: usize,
) -> Accum {
    let out_len = c.height() * c.width() * voting.graph.num_joints();
    let ranges = chunks(voting.work_items(c), threads);
    let partials: Vec<Accum> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .into_iter()
            .map(|r| {
                s.spawn(move || {
                    let mut acc = voting.new_accum(out_len);
                    voting.scatter(c, o, r, &mut acc);
                    acc
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("vote worker panicked"))
            .collect()
    });
    let mut iter = partials.into_iter();
    let mut total = iter.next().expect("at least one chunk");
    for part in iter {
        match (&mut total, part) {
            (Accum::Sum(acc), Accum::Sum(p)) => {
                for (a, b) in acc.iter_mut().zip(p) {
                    *a += b;
                }
            }
            (
                Accum::Max { best, winners },
                Accum::Max {
                    best: pb,
                    winners: pw,
                },
            ) => {
                // later chunks hold higher (edge, pixel) indices, so they
                // only win on a strictly larger contribution
                for i in 0..best.len() {
                    if pw[i].is_some() && (winners[i].is_none() || pb[i] > best[i]) {
                        best[i] = pb[i];
                        winners[i] = pw[i];
                    }
                }
            }
            _ => unreachable!("mixed accumulators"),
        }
    }
    total
}

pub(super) fn gather(
    voting: &Voting,
    grad_m: &GradSignal,
    c: &ScalarField,
    o: &DisplacementField,
    ctx: &VoteContext,
    threads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = voting.work_items(c);
    let ranges = chunks(n, threads);
    let mut grad_ox = vec![0.0; n];
    let mut grad_oy = vec![0.0; n];
    let partial_c: Vec<Vec<f64>> = std::thread::scope(|s| {
        let mut rest_x = grad_ox.as_mut_slice();
        let mut rest_y = grad_oy.as_mut_slice();
        let mut handles = Vec::with_capacity(ranges.len());
        for r in ranges {
            let (gx, tail_x) = rest_x.split_at_mut(r.len());
            let (gy, tail_y) = rest_y.split_at_mut(r.len());
            rest_x = tail_x;
            rest_y = tail_y;
            handles.push(s.spawn(move || {
                let mut gc = vec![0.0; c.len()];
                voting.gather(grad_m, c, o, ctx, r, &mut gc, gx, gy);
                gc
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("vote worker panicked"))
            .collect()
    });
    let mut iter = partial_c.into_iter();
    let mut grad_c = iter.next().expect("at least one chunk");
    for part in iter {
        for (a, b) in grad_c.iter_mut().zip(part) {
            *a += b;
        }
    }
    (grad_c, grad_ox, grad_oy)
}

#[cfg(test)]
mod tests {
    use super::chunks;

    #[test]
    fn chunks_cover_range_in_order() {
        let r = chunks(10, 3);
        assert_eq!(r, vec![0..4, 4..7, 7..10]);
        assert_eq!(chunks(2, 8), vec![0..1, 1..2]);
        assert_eq!(chunks(0, 4), vec![0..0]);
    }
}
