use mihedge::field::{square_timer_field, DomainBox};
use mihedge::functionals::{FunctionalSpec, WeightFn};
use mihedge::grid::TimeGrid;
use mihedge::hedging::backtest;
use mihedge::models::ModelSpec;
use mihedge::stopping::{Approach, StoppingSet};
use std::sync::Arc;

fn main() {
    let domain = DomainBox::new(vec![1e-3, 0.0], vec![100.0, 0.041]).unwrap();
    let q = 0.04;
    let field = square_timer_field(q, domain);
    let spec = FunctionalSpec::price_and_clock("S", WeightFn::Power { of: 0, exponent: -2.0 });
    let set = StoppingSet::LevelSet { index: 1, value: q, approach: Approach::FromBelow };
    let model = ModelSpec::Gbm { s0: 1.0, sigma: 0.2 };
    for steps in [1usize << 12, 1 << 14, 1 << 16] {
        let grid = Arc::new(TimeGrid::uniform(2.0, steps).unwrap());
        let rep = backtest(&field, &spec, &set, &model, &grid, 400, 31).unwrap();
        let a = &rep.aggregates;
        println!(
            "steps {steps}: mean {:.3e} se {:.3e} rms {:.3e} meanmaxgap {:.3e}",
            a.mean_error, a.se_mean, a.rms_error, a.mean_max_gap
        );
    }
}
