mod common;

use nalgebra::DMatrix;

use common::{bs_put, equity, one_asset};
use diffpca::autodiff::record_and_differentiate;
use diffpca::config::ConfigDocument;
use diffpca::datagen;
use diffpca::dimred::{self, principal_angles, FitData, FitOptions, Mode, Truncation};
use diffpca::instruments::{par_swap_rate, Instrument};
use diffpca::lsm::{self, binomial_bermudan_put, Continuation, ExercisePolicy, LsmOptions, StudyOptions};
use diffpca::models::{Dynamics, EquityModelConfig, Model};
use diffpca::rng::{PathRng, SUB_STATE};

fn put(strike: f64, call_dates: &[f64]) -> Instrument {
    Instrument::BermudanPut {
        asset: 0,
        strike,
        call_dates: call_dates.to_vec(),
    }
}

fn small_lsm() -> LsmOptions {
    LsmOptions {
        m_train: 4096,
        ..LsmOptions::default()
    }
}

#[test]
fn single_date_is_the_european_put() {
    let (rate, vol) = (0.03, 0.25);
    let model = one_asset(vol, rate);
    let inst = put(105.0, &[1.0]);
    let policy = lsm::fit_policy(&model, &inst, &small_lsm()).unwrap();
    assert_eq!(policy, ExercisePolicy::immediate(&[1.0]));
    let (price, se) = lsm::price_lower_bound(&model, &inst, &policy, 1 << 16, 3).unwrap();
    let bs = bs_put(100.0, 105.0, rate, vol, 1.0);
    assert!((price - bs).abs() <= 3.0 * se, "{price} +/- {se} vs {bs}");
}

#[test]
fn worthless_exercise_gives_nothing() {
    let model = one_asset(0.2, 0.02);
    let otm = put(10.0, &[0.5, 1.0]);
    let policy = lsm::fit_policy(&model, &otm, &small_lsm()).unwrap();
    let (price, _) = lsm::price_lower_bound(&model, &otm, &policy, 1 << 12, 1).unwrap();
    assert!(price.abs() < 1e-12, "{price}");

    let atm = put(100.0, &[0.5, 1.0]);
    let (price, se) = lsm::price_lower_bound(&model, &atm, &ExercisePolicy::never(), 1 << 12, 1).unwrap();
    assert_eq!((price, se), (0.0, 0.0));
}

#[test]
fn pricing_is_reproducible() {
    let model = one_asset(0.2, 0.05);
    let inst = put(100.0, &[0.5, 1.0]);
    let a = lsm::fit_policy(&model, &inst, &small_lsm()).unwrap();
    let b = lsm::fit_policy(&model, &inst, &small_lsm()).unwrap();
    assert_eq!(a, b);
    let pa = lsm::price_lower_bound(&model, &inst, &a, 1 << 12, 9).unwrap();
    let pb = lsm::price_lower_bound(&model, &inst, &b, 1 << 12, 9).unwrap();
    assert_eq!(pa.0.to_bits(), pb.0.to_bits());
    assert_eq!(pa.1.to_bits(), pb.1.to_bits());
}

#[test]
fn more_call_dates_are_worth_more() {
    let (rate, vol) = (0.05, 0.2);
    let model = one_asset(vol, rate);
    let mut prev_lattice = 0.0;
    let mut prev_lsm = (0.0, 0.0);
    for dates in [vec![1.0], vec![0.5, 1.0], vec![0.25, 0.5, 0.75, 1.0]] {
        let lattice = binomial_bermudan_put(100.0, 100.0, rate, vol, &dates, 2000).unwrap();
        assert!(lattice >= prev_lattice);
        prev_lattice = lattice;

        let inst = put(100.0, &dates);
        let policy = lsm::fit_policy(&model, &inst, &small_lsm()).unwrap();
        let (price, se) = lsm::price_lower_bound(&model, &inst, &policy, 1 << 15, 5).unwrap();
        assert!(price >= prev_lsm.0 - 3.0 * (se * se + prev_lsm.1 * prev_lsm.1).sqrt(), "{dates:?}: {price}");
        // a lower bound, up to noise
        assert!(price <= lattice + 3.0 * se, "{dates:?}: {price} +/- {se} vs {lattice}");
        prev_lsm = (price, se);
    }
}

#[test]
fn zero_vol_study_is_exact() {
    let model = equity(EquityModelConfig::uniform(1, 100.0, 0.0, 0.0, Dynamics::Lognormal, 0.0));
    let inst = put(110.0, &[0.5, 1.0]);
    let options = StudyOptions {
        m_train: 256,
        m_test: 8,
        m_inner: 16,
        policy: small_lsm(),
        ..StudyOptions::default()
    };
    let report = lsm::continuation_study(&model, &inst, 0.5, &options).unwrap();
    assert!(report.truth.iter().all(|v| (v - 10.0).abs() < 1e-12));
    assert_eq!(report.truth_stderr, 0.0);
    for m in &report.methods {
        assert!(m.rmse < 1e-6, "{}: {}", m.method, m.rmse);
    }
}

#[test]
fn derivative_labels_help_the_continuation_fit() {
    let model = equity(EquityModelConfig::uniform(4, 100.0, 0.25, 0.4, Dynamics::Lognormal, 0.0));
    let inst = Instrument::BasketCall {
        weights: vec![0.4, 0.3, 0.2, 0.1],
        strike: 100.0,
        maturity: 2.0,
        smoothing: None,
    };
    // a European payoff has no policy: study it directly on the dataset
    let train = datagen::generate(&model, &inst, 1.0, 1024, 21).unwrap();
    let oracle = datagen::nested_risk_reports(&model, &inst, 1.0, 64, 4096, 22).unwrap();
    let fit = |differential: bool| {
        let enc = dimred::fit(Mode::Differential, FitData::Dataset(&train), FitOptions::new(Truncation::Dim(1))).unwrap();
        let l = enc.encode_rows(&train.x).unwrap();
        let basis = diffpca::regression::BasisSpec::monomials(1, 5);
        let opts = diffpca::regression::RegressionOptions { rescale: true };
        let reg = if differential {
            let s = enc.feature_sensitivities(&train.z).unwrap();
            diffpca::regression::fit_differential(&l, &train.y, &s, &basis, &diffpca::regression::Lambdas::Auto, opts)
        } else {
            diffpca::regression::fit_value(&l, &train.y, &basis, 0.0, opts)
        }
        .unwrap();
        let p = reg.predict_rows(&enc.encode_rows(&oracle.x).unwrap()).unwrap();
        (p.iter().zip(&oracle.v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
    };
    let (value, diff) = (fit(false), fit(true));
    assert!(diff <= value, "differential {diff} vs value-only {value}");
}

#[test]
fn last_call_date_study_prefers_differential_regression() {
    // one later call date: the continuation value is a European put
    let model = one_asset(0.3, 0.02);
    let inst = put(100.0, &[0.5, 1.5]);
    let options = StudyOptions {
        m_train: 512,
        m_test: 64,
        m_inner: 4096,
        degree_raw: 5,
        degree_features: 5,
        ..StudyOptions::default()
    };
    let report = lsm::continuation_study(&model, &inst, 0.5, &options).unwrap();
    let rmse = |m: &str| report.rmse(m).unwrap();
    assert!(rmse("differential_raw") <= rmse("value_raw"), "{:?}", report.methods.iter().map(|m| m.rmse).collect::<Vec<_>>());
    assert!(rmse("differential_pca") <= rmse("value_pca"));
}

/// Leading differential-PCA axes of the continuation fitted at the first call
/// date, and the gradients of the long swap (to maturity) and the short swap
/// (to the next call date) with respect to the forwards, at a sampled state.
fn first_call_date_axes() -> (DMatrix<f64>, DMatrix<f64>) {
    let doc = ConfigDocument::from_json(include_str!("../../../configs/bermudan_5f.json")).unwrap();
    let model = Model::new(doc.model().unwrap().clone()).unwrap();
    let inst = doc.instrument().unwrap().clone();
    let dates = inst.call_dates().to_vec();
    let policy = lsm::fit_policy(&model, &inst, &LsmOptions::default()).unwrap();
    let Continuation::Fitted { encoder, .. } = &policy.rule(dates[0]).unwrap().continuation else {
        panic!("first call date has no fitted continuation")
    };
    assert!(encoder.dim() >= 2);

    let Model::Rates(rates) = &model else { panic!("rates model expected") };
    let grid = rates.grid();
    let deltas: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    let index = |t: f64| grid.iter().position(|g| (g - t).abs() < 1e-9).unwrap();
    let (c, next, e) = (index(dates[0]), index(dates[1]), grid.len() - 1);
    let x = model.simulate_to_exposure(dates[0], &mut PathRng::new(5, 0, SUB_STATE)).unwrap();
    let gradient = |end: usize| record_and_differentiate(|f| par_swap_rate(f, &deltas, c, end), &x).unwrap().1;
    let (long, short) = (gradient(e), gradient(next));
    let swaps = DMatrix::from_fn(x.len(), 2, |i, k| [long[i], short[i]][k]);
    (encoder.h.columns(0, 2).into_owned(), swaps)
}

#[test]
fn leading_feature_lies_in_the_swap_plane() {
    let (axes, swaps) = first_call_date_axes();
    let angles = principal_angles(&axes.columns(0, 1).into_owned(), &swaps).unwrap();
    assert!(angles[0].to_degrees() <= 15.0, "{} degrees", angles[0].to_degrees());
}

#[test]
#[ignore = "does not hold in the reference 5-factor model: the second axis is ~90 degrees from the plane"]
fn top_two_features_span_the_swap_plane() {
    let (axes, swaps) = first_call_date_axes();
    let angles = principal_angles(&axes, &swaps).unwrap();
    let degrees: Vec<f64> = angles.iter().map(|a| a.to_degrees()).collect();
    assert!(degrees.iter().all(|a| *a <= 15.0), "principal angles {degrees:?}");
}
