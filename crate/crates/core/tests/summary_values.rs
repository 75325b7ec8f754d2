//! Published per-model manifestation factors reduce to the model row under equal kind weights.

use t2ibias::manifestation::eta_summary;

// (model, gender, race, age, model row)
const ROWS: [(&str, f64, f64, f64, f64); 7] = [
    ("SDXL", 0.62467837, 0.653047182, 0.558689074, 0.612138209),
    ("SDXL-L", 0.578166303, 0.721388385, 0.560832927, 0.620129205),
    ("SDXL-T", 0.545608051, 0.621537737, 0.542658768, 0.569934852),
    ("LCM", 0.60142146, 0.70951493, 0.5637583, 0.624898235),
    ("PixArt", 0.632191062, 0.671283931, 0.545250583, 0.616241859),
    ("Cascade", 0.629328861, 0.666262291, 0.557130694, 0.617573949),
    ("PG2.5", 0.664900445, 0.661665, 0.56353677, 0.630034),
];

#[test]
fn nine_digit_rows_match_to_1e9() {
    for (model, g, r, a, sum) in ROWS {
        if model != "SDXL" && model != "SDXL-T" {
            continue;
        }
        let got = eta_summary(&[(1.0, g), (1.0, r), (1.0, a)]).unwrap();
        assert!((got - sum).abs() < 1e-9, "{model}: {got} vs {sum}");
    }
}

#[test]
fn every_row_matches_its_printed_precision() {
    for (model, g, r, a, sum) in ROWS {
        let got = eta_summary(&[(1.0, g), (1.0, r), (1.0, a)]).unwrap();
        assert!((got - sum).abs() < 1e-6, "{model}: {got} vs {sum}");
    }
}
