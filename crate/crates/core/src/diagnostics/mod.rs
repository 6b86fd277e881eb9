//! Quantities used to control the estimator's deviations, and Monte Carlo
//! checks of the inequalities relating them.

mod bounds;
mod bracket;
mod checks;
mod hellinger;
mod montecarlo;
mod params;
mod typicality;

pub use bounds::{bernstein_tail_bound, entropy_bound, maximal_bound};
pub use bracket::{bracket_grid, path_bracket_check, BracketGrid, PathBracketReport};
pub use checks::{
    bernstein_norm_check, bracket_beta, bracket_count_check, bracketing_check, enumerated_bracket_count,
    hellinger_sandwich_check, random_instance, BracketCountReport, BracketingCheckReport, Instance,
    InstanceCheckReport, MixtureFault,
};
pub use hellinger::{bernstein_norm, expected_bernstein_norm, hellinger_path_distance, hellinger_stationary_distance};
pub use montecarlo::{
    bernstein_mc_check, deviation_tail_mc, least_squares, lil_trajectory, lil_trajectory_seeds, typicality_trend,
    BernsteinMcReport, BernsteinMcRow, DeviationTailReport, DeviationTailRow, LilSeries, LilSummary,
    TypicalityTrendRow,
};
pub use params::BoundParams;
pub use typicality::{event_f, typicality_check, TypicalityChecker, TypicalityReport};

/// `e^x - x - 1`, evaluated without cancellation near zero.
pub fn phi(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        x2 * (0.5 + x * (1.0 / 6.0 + x / 24.0))
    } else {
        x.exp_m1() - x
    }
}
