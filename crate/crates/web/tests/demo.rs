use neurofacs_web::{fit_curve, kernel_rgba, project, KernelPart, CURVE_GRID};

#[test]
fn kernel_pixels_cover_the_grid() {
    for part in [KernelPart::Real, KernelPart::Imaginary, KernelPart::Magnitude] {
        let px = kernel_rgba(1, 2, 21, part).unwrap();
        assert_eq!(px.len(), 21 * 21 * 4);
        assert!(px.chunks(4).all(|p| p[3] == 255));
        // The peak maps to a saturated colour.
        assert!(px.chunks(4).any(|p| (p[0] == 255 && p[1] == 0) || (p[2] == 255 && p[1] == 0)));
    }
}

#[test]
fn magnitude_is_never_blue() {
    let px = kernel_rgba(0, 0, 15, KernelPart::Magnitude).unwrap();
    assert!(px.chunks(4).all(|p| p[0] == 255));
}

#[test]
fn bad_kernel_requests_are_rejected() {
    assert!(kernel_rgba(4, 0, 21, KernelPart::Real).is_err());
    assert!(kernel_rgba(0, 4, 21, KernelPart::Real).is_err());
    assert!(kernel_rgba(0, 0, 20, KernelPart::Real).is_err());
    assert!(KernelPart::parse("phase").is_err());
}

#[test]
fn curve_fit_tracks_the_target() {
    let fit = fit_curve(5, 40, 120, 0.0, 3).unwrap();
    assert_eq!(fit.grid().len(), CURVE_GRID);
    assert_eq!(fit.memberships().len(), 5 * CURVE_GRID);
    assert_eq!(fit.samples_x().len(), 120);
    assert!(fit.train_mse() < 1e-3, "train mse {}", fit.train_mse());
    assert!(fit.grid_mse() < 5e-3, "grid mse {}", fit.grid_mse());
    assert!(fit.memberships().iter().all(|m| (0.0..=1.0).contains(m)));
}

#[test]
fn more_sets_fit_better() {
    let coarse = fit_curve(1, 20, 120, 0.0, 3).unwrap();
    let fine = fit_curve(6, 20, 120, 0.0, 3).unwrap();
    assert!(fine.train_mse() < coarse.train_mse());
}

#[test]
fn curve_fit_is_deterministic() {
    let a = fit_curve(4, 10, 60, 0.1, 9).unwrap();
    let b = fit_curve(4, 10, 60, 0.1, 9).unwrap();
    assert_eq!(a.fitted(), b.fitted());
    assert_eq!(a.samples_y(), b.samples_y());
}

#[test]
fn curve_fit_rejects_bad_input() {
    assert!(fit_curve(0, 10, 60, 0.0, 1).is_err());
    assert!(fit_curve(8, 10, 10, 0.0, 1).is_err());
    assert!(fit_curve(3, 10, 60, -1.0, 1).is_err());
}

#[test]
fn discriminant_plane_separates_better_than_pca() {
    let p = project(60, 120, 3.0, 5).unwrap();
    assert_eq!(p.bda().len(), 2 * 180);
    assert_eq!(p.pca().len(), 2 * 180);
    assert_eq!(p.labels().iter().filter(|&&l| l == 1).count(), 60);
    let ev = p.eigenvalues();
    assert!(ev[0] >= ev[1] && ev[1] > 0.0);
    // PCA spends its two axes on the nuisance directions.
    assert!(p.bda_spread() > 5.0 * p.pca_spread(), "bda {} pca {}", p.bda_spread(), p.pca_spread());
}

#[test]
fn projection_rejects_bad_input() {
    assert!(project(2, 50, 1.0, 0).is_err());
    assert!(project(50, 50, 0.0, 0).is_err());
}
