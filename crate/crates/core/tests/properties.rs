use proptest::prelude::*;

use coupledpf::resampling::hilbert::hilbert_index;
use coupledpf::resampling::{
    distance_matrix, symmetrized_transport, systematic, transport_coupling, IndexCoupling, TransportParams, WeightVector,
};
use coupledpf::rng::crn_shift;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n)
}

fn pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| (weights(n), weights(n)))
}

fn normalize(w: &[f64]) -> WeightVector {
    let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
    WeightVector::from_log_weights(&logs).unwrap().0
}

proptest! {
    #[test]
    fn log_weights_normalize(log_w in prop::collection::vec(-700.0f64..700.0, 1..50)) {
        let (w, _) = WeightVector::from_log_weights(&log_w).unwrap();
        let s: f64 = w.as_slice().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn index_coupling_is_maximal((a, b) in pair(30)) {
        let (w, wt) = (normalize(&a), normalize(&b));
        let c = IndexCoupling::new(&w, &wt).unwrap();
        let n = w.len();
        let mut trace = 0.0;
        for i in 0..n {
            let row: f64 = (0..n).map(|j| c.probability(i, j)).sum();
            let col: f64 = (0..n).map(|j| c.probability(j, i)).sum();
            prop_assert!((row - w.as_slice()[i]).abs() < 1e-12);
            prop_assert!((col - wt.as_slice()[i]).abs() < 1e-12);
            let d = c.probability(i, i);
            prop_assert!(d >= w.as_slice()[i] * wt.as_slice()[i] - 1e-15);
            trace += d;
        }
        let overlap: f64 = w.as_slice().iter().zip(wt.as_slice()).map(|(x, y)| x.min(*y)).sum();
        prop_assert!((trace - overlap).abs() < 1e-12);
    }

    #[test]
    fn any_coupling_trace_is_bounded_by_overlap((a, b) in pair(8), mix in 0.0f64..1.0) {
        // A convex mix of the independent and a north-west-corner coupling.
        let (w, wt) = (normalize(&a), normalize(&b));
        let (p, q) = (w.as_slice(), wt.as_slice());
        let n = p.len();
        let mut nw = vec![vec![0.0; n]; n];
        let (mut i, mut j, mut ri, mut rj) = (0, 0, p[0], q[0]);
        while i < n && j < n {
            let m = ri.min(rj);
            nw[i][j] += m;
            ri -= m;
            rj -= m;
            if ri <= 1e-15 { i += 1; if i < n { ri = p[i]; } }
            if rj <= 1e-15 { j += 1; if j < n { rj = q[j]; } }
        }
        let trace: f64 = (0..n).map(|k| mix * p[k] * q[k] + (1.0 - mix) * nw[k][k]).sum();
        let overlap: f64 = p.iter().zip(q).map(|(x, y)| x.min(*y)).sum();
        prop_assert!(trace <= overlap + 1e-12);
    }

    #[test]
    fn transport_couplings_have_exact_margins(
        (a, b) in pair(12),
        xs in prop::collection::vec(-3.0f64..3.0, 24),
        symmetric in any::<bool>(),
    ) {
        let n = a.len();
        let (w, wt) = (normalize(&a), normalize(&b));
        let dist = distance_matrix(&xs[..n], &xs[12..12 + n], 1).unwrap();
        let params = TransportParams::default();
        let c = if symmetric {
            symmetrized_transport(&dist, &w, &wt, &params).unwrap()
        } else {
            transport_coupling(&dist, &w, &wt, &params).unwrap()
        };
        for (s, t) in c.p.row_sums().iter().zip(w.as_slice()) {
            prop_assert!((s - t).abs() < 1e-9);
        }
        for (s, t) in c.p.col_sums().iter().zip(wt.as_slice()) {
            prop_assert!((s - t).abs() < 1e-9);
        }
        prop_assert!(c.p.data.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn crn_shift_endpoints(
        u in prop::collection::vec(-4.0f64..4.0, 1..20),
        seed in prop::collection::vec(-4.0f64..4.0, 20),
    ) {
        let xi = &seed[..u.len()];
        prop_assert_eq!(crn_shift(&u, 1.0, xi).unwrap(), u.clone());
        prop_assert_eq!(crn_shift(&u, 0.0, xi).unwrap(), xi.to_vec());
    }

    #[test]
    fn systematic_counts_are_floor_or_ceil(a in weights(40), offset in 0.0f64..1.0, count in 1usize..200) {
        let w = normalize(&a);
        let idx = systematic(w.as_slice(), count, offset);
        prop_assert_eq!(idx.len(), count);
        let mut counts = vec![0usize; w.len()];
        for i in idx {
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(w.as_slice()) {
            let e = count as f64 * wi;
            prop_assert!((*c as f64) >= e.floor() - 1e-9 && (*c as f64) <= e.ceil() + 1e-9, "count {} expected {}", c, e);
        }
    }
}

fn check_hilbert_adjacency(d: usize, order: u32) {
    let side = 1u64 << order;
    let total = side.pow(d as u32);
    let mut cells: Vec<(u64, Vec<u64>)> = (0..total)
        .map(|mut k| {
            let cell: Vec<u64> = (0..d)
                .map(|_| {
                    let c = k % side;
                    k /= side;
                    c
                })
                .collect();
            (hilbert_index(&cell, order).unwrap(), cell)
        })
        .collect();
    cells.sort();
    for (k, (h, _)) in cells.iter().enumerate() {
        assert_eq!(*h, k as u64, "index is not a bijection onto 0..{total}");
    }
    for w in cells.windows(2) {
        let step: u64 = w[0].1.iter().zip(&w[1].1).map(|(a, b)| a.abs_diff(*b)).sum();
        assert_eq!(step, 1, "{:?} -> {:?}", w[0].1, w[1].1);
    }
}

#[test]
fn hilbert_consecutive_keys_are_neighbouring_cells() {
    check_hilbert_adjacency(2, 4);
    check_hilbert_adjacency(3, 3);
}
