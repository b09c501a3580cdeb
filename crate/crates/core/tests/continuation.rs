use css_lattice::continuation::{
    arclength_continue, compare_folds, natural_continue, ArclengthOptions, Branch, Direction, FoldSide, StepControl,
    TerminationReason,
};
use css_lattice::stationary::{solve_from_seed, NewtonOptions, SeedSpec, StationaryState};
use css_lattice::{LatticeWindow, ModelParams};

fn solve(seed: SeedSpec, p: f64, omega: f64, h: f64) -> StationaryState {
    let prm = ModelParams::new(1.0, p, omega, h).unwrap();
    let s = solve_from_seed(
        &seed,
        LatticeWindow::centered(20, h).unwrap(),
        &prm,
        &NewtonOptions::default(),
    )
    .unwrap();
    assert!(
        s.converged,
        "{seed:?} at p = {p}, omega = {omega}, h = {h}: {:?}",
        s.failure
    );
    s
}

fn single(p: f64, omega: f64, h: f64) -> StationaryState {
    solve(SeedSpec::SingleSite { center: 0 }, p, omega, h)
}

fn double(p: f64, omega: f64, h: f64) -> StationaryState {
    solve(SeedSpec::DoubleSite { center: 0 }, p, omega, h)
}

fn branch(start: &StationaryState, direction: Direction, max_folds: Option<usize>, newton: &NewtonOptions) -> Branch {
    let options = ArclengthOptions {
        direction,
        max_folds,
        ..ArclengthOptions::default()
    };
    arclength_continue(start, &options, &StepControl::default(), newton).unwrap()
}

fn first_fold(b: &Branch, side: FoldSide) -> f64 {
    b.folds
        .iter()
        .find(|f| f.side == side)
        .map(|f| f.h)
        .expect("fold on this side")
}

#[test]
fn single_site_branch_has_the_smaller_mass_for_cubic_nonlinearity() {
    for h in [3.0, 10.0, 50.0] {
        let (s, d) = (single(1.0, 1.0, h), double(1.0, 1.0, h));
        assert!(s.mass() < d.mass(), "h = {h}: {} vs {}", s.mass(), d.mass());
    }
}

#[test]
fn natural_continuation_tracks_direct_solves() {
    let start = single(1.0, 1.0, 5.0);
    let b = natural_continue(&start, 12.0, &StepControl::default(), &NewtonOptions::default()).unwrap();
    let end = b.last().unwrap();
    assert_eq!(b.termination.as_ref().unwrap().reason, TerminationReason::ReachedTarget);
    assert_eq!(end.h, 12.0);
    let direct = single(1.0, 1.0, 12.0);
    assert!((end.mass - direct.mass()).abs() < 1e-10 * direct.mass());
    assert!(b.points.windows(2).all(|w| w[1].h > w[0].h));
}

#[test]
fn natural_continuation_stops_at_the_fold() {
    let start = single(1.0, 1.0, 5.0);
    let b = natural_continue(&start, 0.5, &StepControl::default(), &NewtonOptions::default()).unwrap();
    let t = b.termination.as_ref().unwrap();
    assert_eq!(t.reason, TerminationReason::StepFloor);
    // the last converged point sits just above the arclength fold
    let (lo, _) = b.h_range();
    assert!(lo > 1.4839 && lo < 1.49, "closest approach {lo}");
}

#[test]
fn quintic_folds_move_apart_as_omega_grows() {
    let newton = NewtonOptions::default();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (omega, h0) in [(1.0, 5.0), (2.0, 5.0)] {
        let start = single(2.0, omega, h0);
        lower.push(first_fold(
            &branch(&start, Direction::DecreasingH, Some(1), &newton),
            FoldSide::Lower,
        ));
        upper.push(first_fold(
            &branch(&start, Direction::IncreasingH, Some(1), &newton),
            FoldSide::Upper,
        ));
    }
    assert!(lower[1] < lower[0], "lower folds {lower:?}");
    assert!(upper[1] > upper[0], "upper folds {upper:?}");
    assert!((lower[0] - 0.6331857441).abs() < 1e-6 && (upper[0] - 8.4636330862).abs() < 1e-5);
}

#[test]
fn septic_branches_close_for_unit_frequency() {
    let newton = NewtonOptions::default();
    let s = branch(&single(3.0, 1.0, 1.0), Direction::DecreasingH, None, &newton);
    let d = branch(&double(3.0, 1.0, 1.0), Direction::DecreasingH, None, &newton);
    for b in [&s, &d] {
        assert_eq!(b.termination.as_ref().unwrap().reason, TerminationReason::ClosedLoop);
        assert_eq!(b.folds.len(), 2);
    }
    let [lower, upper] = compare_folds(&s, &d, 1e-6);
    assert!(lower.matched && upper.matched, "{lower:?} {upper:?}");
}

#[test]
fn septic_branches_part_at_the_upper_fold_for_frequency_two() {
    // past the upper folds the branches delocalise; a modest window cap ends them
    let newton = NewtonOptions {
        max_sites: 301,
        ..NewtonOptions::default()
    };
    let s = branch(&single(3.0, 2.0, 1.0), Direction::DecreasingH, Some(2), &newton);
    let d = branch(&double(3.0, 2.0, 1.0), Direction::DecreasingH, Some(2), &newton);
    let [lower, upper] = compare_folds(&s, &d, 1e-6);
    assert!(lower.matched, "{lower:?}");
    assert!(upper.first.is_some() && upper.second.is_some());
    assert!(!upper.matched, "{upper:?}");
}
