use super::*;
use crate::kernel::KernelSpec;

fn field(h: usize, w: usize, c: usize, data: &[f64]) -> ScalarField {
    ScalarField::from_vec(h, w, c, data.to_vec()).unwrap()
}

fn offsets(h: usize, w: usize, ox: &[f64], oy: &[f64]) -> DisplacementField {
    DisplacementField::new(field(h, w, 1, ox), field(h, w, 1, oy)).unwrap()
}

fn within(kernel: KernelSpec, mode: VoteMode) -> Voting {
    Voting::new(kernel, mode, VoteGraph::within_part(1))
}

#[test]
fn zero_confidence_gives_zero_mass() {
    let c = ScalarField::new(5, 5, 1, 0.0).unwrap();
    let o = DisplacementField::new(
        ScalarField::from_fn(5, 5, 1, |_, y, x| (x as f64 - y as f64) * 0.7).unwrap(),
        ScalarField::new(5, 5, 1, 1.3).unwrap(),
    )
    .unwrap();
    for mode in VoteMode::ALL {
        for kernel in [KernelSpec::bilinear(), KernelSpec::gaussian(3).unwrap()] {
            let (m, _) = within(kernel, mode).forward(&c, &o).unwrap();
            assert!(m.data().iter().all(|&v| v == 0.0), "{mode} {kernel:?}");
        }
    }
}

#[test]
fn delta_is_preserved_by_bilinear() {
    let mut data = vec![0.0; 9];
    data[0] = 1.0;
    let c = field(3, 3, 1, &data);
    let o = DisplacementField::zeros(3, 3, 1).unwrap();
    for mode in VoteMode::ALL {
        let (m, _) = within(KernelSpec::bilinear(), mode)
            .forward(&c, &o)
            .unwrap();
        assert!((m.get(0, 0, 0) - 1.0).abs() <= 1e-12, "{mode}");
        assert!(m.data()[1..].iter().all(|&v| v == 0.0), "{mode}");
    }
}

#[test]
fn half_pixel_offset_splits_bilinear_vote() {
    let mut data = vec![0.0; 9];
    data[0] = 1.0;
    let c = field(3, 3, 1, &data);
    let o = offsets(3, 3, &[0.5; 9], &[0.0; 9]);
    let (m, _) = within(KernelSpec::bilinear(), VoteMode::Additive)
        .forward(&c, &o)
        .unwrap();
    assert_eq!(m.get(0, 0, 0), 0.5);
    assert_eq!(m.get(0, 0, 1), 0.5);
    assert_eq!(m.sum(), 1.0);
}

#[test]
fn two_half_votes_combine_per_mode() {
    // pixel (1,0) is displaced onto (0,0); both contribute 0.5 there
    let c = field(1, 2, 1, &[0.5, 0.5]);
    let o = offsets(1, 2, &[0.0, -1.0], &[0.0, 0.0]);
    let expected = [
        (VoteMode::Additive, 1.0),
        (VoteMode::NoisyOr, 0.75),
        (VoteMode::Max, 0.5),
    ];
    for (mode, want) in expected {
        let (m, _) = within(KernelSpec::bilinear(), mode)
            .forward(&c, &o)
            .unwrap();
        assert!(
            (m.get(0, 0, 0) - want).abs() < 1e-15,
            "{mode}: {}",
            m.get(0, 0, 0)
        );
        assert_eq!(m.get(0, 0, 1), 0.0);
    }
}

#[test]
fn converging_votes_exceed_one_only_when_added() {
    let (n, t) = (8usize, (3usize, 4usize));
    let c = ScalarField::new(n, n, 1, 1.0).unwrap();
    let o = DisplacementField::new(
        ScalarField::from_fn(n, n, 1, |_, _, x| t.0 as f64 - x as f64).unwrap(),
        ScalarField::from_fn(n, n, 1, |_, y, _| t.1 as f64 - y as f64).unwrap(),
    )
    .unwrap();
    let kernel = KernelSpec::gaussian(5).unwrap();
    let (add, _) = within(kernel, VoteMode::Additive).forward(&c, &o).unwrap();
    assert_eq!(add.get(0, t.1, t.0), 64.0);
    let (nor, ctx) = within(kernel, VoteMode::NoisyOr).forward(&c, &o).unwrap();
    assert!(nor.get(0, t.1, t.0) <= 1.0);
    let s = ctx.log_survival().unwrap()[t.1 * n + t.0];
    assert!(s.is_finite() && s < 0.0);
}

#[test]
fn normalized_delta_peaks_at_inverse_two_pi() {
    let n = 9;
    let c =
        ScalarField::from_fn(n, n, 1, |_, y, x| if (x, y) == (4, 4) { 1.0 } else { 0.0 }).unwrap();
    let o = DisplacementField::zeros(n, n, 1).unwrap();
    let kernel = KernelSpec::gaussian_with_sigma(5, 1.0)
        .unwrap()
        .with_normalized(true);
    let (m, _) = within(kernel, VoteMode::Additive).forward(&c, &o).unwrap();
    let peak = m.data().iter().cloned().fold(0.0, f64::max);
    assert!((peak - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    assert_eq!(m.argmax(0).unwrap(), (4, 4));
}

#[test]
fn noisy_or_context_matches_output() {
    let c = ScalarField::from_fn(6, 6, 1, |_, y, x| ((x * 7 + y * 3) % 10) as f64 / 10.0).unwrap();
    let o = DisplacementField::new(
        ScalarField::from_fn(6, 6, 1, |_, y, _| y as f64 * 0.3 - 0.8).unwrap(),
        ScalarField::from_fn(6, 6, 1, |_, _, x| 0.5 - x as f64 * 0.2).unwrap(),
    )
    .unwrap();
    let (m, ctx) = within(KernelSpec::gaussian(3).unwrap(), VoteMode::NoisyOr)
        .forward(&c, &o)
        .unwrap();
    for (mv, s) in m.data().iter().zip(ctx.log_survival().unwrap()) {
        assert!((mv - (1.0 - s.exp())).abs() < 1e-12);
    }
}

#[test]
fn single_noisy_or_contributor_gradient() {
    // w = 0.8 at (0,0), c = 0.5 => m = 0.4 and dm/dc = 0.8
    let c = field(1, 2, 1, &[0.5, 0.0]);
    let o = offsets(1, 2, &[0.2, 0.0], &[0.0, 0.0]);
    let voting = within(KernelSpec::bilinear(), VoteMode::NoisyOr);
    let (m, ctx) = voting.forward(&c, &o).unwrap();
    assert!((m.get(0, 0, 0) - 0.4).abs() < 1e-15);
    let grad_m = field(1, 2, 1, &[1.0, 0.0]);
    let g = voting.backward(&grad_m, &c, &o, &ctx).unwrap();
    assert!((g.c.get(0, 0, 0) - 0.8).abs() < 1e-15);
    // dm/dox = c * (1-m)/(1-wc) * -dK/ddx with dx = 0 - 0.2 => dK/ddx = +1
    assert!((g.ox.get(0, 0, 0) + 0.5).abs() < 1e-15);
}

#[test]
fn zero_output_gradient_gives_zero_input_gradients() {
    let c = ScalarField::from_fn(5, 5, 1, |_, y, x| ((x + 2 * y) % 5) as f64 / 5.0).unwrap();
    let o = DisplacementField::new(
        ScalarField::new(5, 5, 1, 0.3).unwrap(),
        ScalarField::new(5, 5, 1, -0.6).unwrap(),
    )
    .unwrap();
    let zero = ScalarField::new(5, 5, 1, 0.0).unwrap();
    for mode in VoteMode::ALL {
        let voting = within(KernelSpec::gaussian(3).unwrap(), mode);
        let (_, ctx) = voting.forward(&c, &o).unwrap();
        let g = voting.backward(&zero, &c, &o, &ctx).unwrap();
        for f in [&g.c, &g.ox, &g.oy] {
            assert!(f.data().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn max_ties_route_to_lowest_index() {
    let c = field(1, 3, 1, &[0.5, 0.5, 0.0]);
    // both (0,0) and (1,0) land exactly on (2,0)
    let o = offsets(1, 3, &[2.0, 1.0, 0.0], &[0.0; 3]);
    let voting = within(KernelSpec::bilinear(), VoteMode::Max);
    let (m, ctx) = voting.forward(&c, &o).unwrap();
    assert_eq!(m.get(0, 0, 2), 0.5);
    assert_eq!(
        ctx.winners().unwrap()[2],
        Some(Contributor { edge: 0, pixel: 0 })
    );
    let g = voting
        .backward(&field(1, 3, 1, &[0.0, 0.0, 1.0]), &c, &o, &ctx)
        .unwrap();
    assert_eq!(g.c.data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn out_of_grid_votes_are_dropped() {
    let c = ScalarField::new(4, 4, 1, 1.0).unwrap();
    let o = DisplacementField::new(
        ScalarField::new(4, 4, 1, 10.0).unwrap(),
        ScalarField::new(4, 4, 1, 0.0).unwrap(),
    )
    .unwrap();
    for mode in VoteMode::ALL {
        let (m, _) = within(KernelSpec::gaussian(3).unwrap(), mode)
            .forward(&c, &o)
            .unwrap();
        assert_eq!(m.sum(), 0.0);
    }
}

#[test]
fn cross_edges_write_to_target_channel() {
    let graph = VoteGraph::from_edges(2, vec![Edge::new(0, 1)]).unwrap();
    let c = ScalarField::from_fn(
        3,
        3,
        2,
        |ch, y, x| if (ch, y, x) == (0, 1, 1) { 0.9 } else { 0.0 },
    )
    .unwrap();
    let o = DisplacementField::new(
        ScalarField::new(3, 3, 1, 1.0).unwrap(),
        ScalarField::new(3, 3, 1, 0.0).unwrap(),
    )
    .unwrap();
    let (m, _) = Voting::new(KernelSpec::bilinear(), VoteMode::Additive, graph)
        .forward(&c, &o)
        .unwrap();
    assert_eq!(m.get(1, 1, 2), 0.9);
    assert_eq!(m.plane(0).iter().sum::<f64>(), 0.0);
}

#[test]
fn probabilistic_modes_reject_out_of_range_confidence() {
    let c = ScalarField::new(2, 2, 1, 1.5).unwrap();
    let o = DisplacementField::zeros(2, 2, 1).unwrap();
    for mode in [VoteMode::NoisyOr, VoteMode::Max] {
        assert!(matches!(
            within(KernelSpec::bilinear(), mode).forward(&c, &o),
            Err(MdnError::Domain(_))
        ));
    }
    assert!(within(KernelSpec::bilinear(), VoteMode::Additive)
        .forward(&c, &o)
        .is_ok());
}

#[test]
fn shape_mismatches_are_reported() {
    let c = ScalarField::new(3, 3, 2, 0.1).unwrap();
    let o = DisplacementField::zeros(3, 3, 1).unwrap();
    assert!(matches!(
        within(KernelSpec::bilinear(), VoteMode::Additive).forward(&c, &o),
        Err(MdnError::Shape(_))
    ));
    let c = ScalarField::new(3, 3, 1, 0.1).unwrap();
    let o = DisplacementField::zeros(4, 3, 1).unwrap();
    assert!(within(KernelSpec::bilinear(), VoteMode::Additive)
        .forward(&c, &o)
        .is_err());
}

#[test]
fn context_from_another_mode_is_rejected() {
    let c = ScalarField::new(3, 3, 1, 0.1).unwrap();
    let o = DisplacementField::zeros(3, 3, 1).unwrap();
    let (_, ctx) = within(KernelSpec::bilinear(), VoteMode::Additive)
        .forward(&c, &o)
        .unwrap();
    let g = ScalarField::new(3, 3, 1, 1.0).unwrap();
    assert!(matches!(
        within(KernelSpec::bilinear(), VoteMode::NoisyOr).backward(&g, &c, &o, &ctx),
        Err(MdnError::Context(_))
    ));
    let big_c = ScalarField::new(4, 4, 1, 0.1).unwrap();
    let big_o = DisplacementField::zeros(4, 4, 1).unwrap();
    let big_g = ScalarField::new(4, 4, 1, 1.0).unwrap();
    assert!(matches!(
        within(KernelSpec::bilinear(), VoteMode::Additive).backward(&big_g, &big_c, &big_o, &ctx),
        Err(MdnError::Context(_))
    ));
}

#[test]
fn parallel_paths_agree_with_reference() {
    let graph = VoteGraph::chain(3).unwrap();
    let (h, w) = (12, 11);
    let c = ScalarField::from_fn(h, w, 3, |ch, y, x| {
        ((ch * 31 + y * 7 + x * 13) % 17) as f64 / 17.0
    })
    .unwrap();
    let ox =
        ScalarField::from_fn(h, w, 7, |e, y, x| ((e + y * 3 + x) % 9) as f64 * 0.37 - 1.4).unwrap();
    let oy = ScalarField::from_fn(h, w, 7, |e, y, x| {
        ((e * 5 + y + x * 2) % 7) as f64 * 0.41 - 1.2
    })
    .unwrap();
    let o = DisplacementField::new(ox, oy).unwrap();
    let grad_m = ScalarField::from_fn(h, w, 3, |ch, y, x| ((ch + y + x) % 5) as f64 - 2.0).unwrap();
    for mode in VoteMode::ALL {
        for kernel in [KernelSpec::bilinear(), KernelSpec::gaussian(5).unwrap()] {
            let voting = Voting::new(kernel, mode, graph.clone());
            let (m_ref, ctx_ref) = voting.forward(&c, &o).unwrap();
            let g_ref = voting.backward(&grad_m, &c, &o, &ctx_ref).unwrap();
            let (m1, ctx1) = voting.forward_threads(&c, &o, 1).unwrap();
            assert_eq!(m1, m_ref);
            assert_eq!(ctx1, ctx_ref);
            for threads in [2, 3, 8] {
                let (m, ctx) = voting.forward_threads(&c, &o, threads).unwrap();
                let g = voting
                    .backward_threads(&grad_m, &c, &o, &ctx, threads)
                    .unwrap();
                let close = |a: &ScalarField, b: &ScalarField| {
                    crate::verify::relative_linf_error(a.data(), b.data()) <= 1e-10
                };
                assert!(close(&m, &m_ref), "{mode} {threads}");
                assert!(
                    close(&g.c, &g_ref.c) && close(&g.ox, &g_ref.ox) && close(&g.oy, &g_ref.oy)
                );
                if mode == VoteMode::Max {
                    assert_eq!(ctx.winners(), ctx_ref.winners());
                }
            }
        }
    }
}
