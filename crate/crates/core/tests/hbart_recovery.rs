use sentrisk::data::{build_design, split};
use sentrisk::hbart::{fit, predict, r_squared, HbartConfig};
use sentrisk::synth::{generate, SynthSpec};
use sentrisk::{ColumnRole, Split};

fn small_config() -> HbartConfig {
    HbartConfig {
        mean_trees: 50,
        scale_trees: 10,
        iterations: 700,
        burn_in: 200,
        ..HbartConfig::default()
    }
}

#[test]
fn recovers_mean_and_scale_regions() {
    let s = generate(&SynthSpec::two_region(1500, 11)).unwrap();
    let ds = split(&s.dataset, 0.8, 2).unwrap();
    let x = build_design(&ds, ColumnRole::Relevant, &[], false).unwrap();
    let y = ds.outcome_values().unwrap();
    let tr = ds.rows_in(Split::Train);
    let te = ds.rows_in(Split::Test);
    let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
    let yte: Vec<f64> = te.iter().map(|&i| y[i]).collect();

    let model = fit(&x.select_rows(&tr), &ytr, &small_config(), 5).unwrap();
    let xte = x.select_rows(&te);
    let post = predict(&model, &xte).unwrap();
    let r2 = r_squared(&post.f_bar, &yte, x.n_cols()).unwrap();
    assert!(r2.r2 > 0.8, "test r2 {}", r2.r2);

    let x2 = x.column_names().iter().position(|c| c == "X2").unwrap();
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (i, &s) in post.s_bar.iter().enumerate() {
        if xte.get(i, x2) < 0.5 { lo.push(s) } else { hi.push(s) }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratio = mean(&hi) / mean(&lo);
    assert!(ratio > 2.0, "scale ratio {ratio}");

    let truth = s.truth.select(&te.iter().map(|&i| ds.row_ids()[i]).collect::<Vec<_>>()).unwrap();
    let err = post
        .f_bar
        .iter()
        .zip(&truth.f0)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / te.len() as f64;
    assert!(err < 3.0, "mean absolute error against f0 {err}");
}

#[test]
fn same_seed_same_draws() {
    let s = generate(&SynthSpec::two_region(300, 4)).unwrap();
    let x = build_design(&s.dataset, ColumnRole::Relevant, &[], false).unwrap();
    let y = s.dataset.outcome_values().unwrap();
    let cfg = HbartConfig {
        iterations: 120,
        burn_in: 20,
        ..small_config()
    };
    let a = fit(&x, &y, &cfg, 9).unwrap();
    let b = fit(&x, &y, &cfg, 9).unwrap();
    assert_eq!(a, b);
    let c = fit(&x, &y, &cfg, 10).unwrap();
    assert_ne!(a.train_summary.f_bar, c.train_summary.f_bar);
}
