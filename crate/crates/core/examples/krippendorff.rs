//! Krippendorff's alpha at the three measurement levels, with missing data
//! and optional ordinal quantisation.

use affectrace::reliability::{coincidence_matrix, krippendorff_alpha, MeasurementLevel, ReliabilityMatrix};

fn main() {
    let rows = vec![
        vec![Some(1.0), Some(2.0), Some(3.0), Some(3.0), Some(2.0), Some(1.0), Some(4.0), Some(1.0), Some(2.0), None],
        vec![Some(1.0), Some(2.0), Some(3.0), Some(3.0), Some(2.0), Some(2.0), Some(4.0), Some(1.0), Some(2.0), Some(5.0)],
        vec![None, Some(3.0), Some(3.0), Some(3.0), Some(2.0), Some(3.0), Some(4.0), Some(2.0), Some(2.0), Some(5.0)],
        vec![Some(1.0), Some(2.0), Some(3.0), Some(3.0), Some(2.0), Some(4.0), Some(4.0), Some(1.0), Some(2.0), Some(5.0)],
    ];
    let m = ReliabilityMatrix::new(rows).unwrap();
    let cm = coincidence_matrix(&m).unwrap();
    println!("values {:?}, pairable units {}, total {}", cm.values(), cm.pairable_units(), cm.total());
    for level in [MeasurementLevel::Nominal, MeasurementLevel::Ordinal, MeasurementLevel::Interval] {
        let r = krippendorff_alpha(&m, level).unwrap();
        println!(
            "{level:?}: alpha {:.4} (D_o {:.4}, D_e {:.4})",
            r.alpha, r.observed_disagreement, r.expected_disagreement
        );
    }

    let opposed = ReliabilityMatrix::new(vec![vec![Some(0.0); 4], vec![Some(1.0); 4]]).unwrap();
    println!("\nsystematic disagreement: {:.4}", krippendorff_alpha(&opposed, MeasurementLevel::Nominal).unwrap().alpha);

    let fine = ReliabilityMatrix::new(vec![
        (0..20).map(|i| Some(i as f64 * 0.0101)).collect(),
        (0..20).map(|i| Some(i as f64 * 0.0099)).collect(),
    ])
    .unwrap();
    let raw = krippendorff_alpha(&fine, MeasurementLevel::Ordinal).unwrap().alpha;
    let binned = krippendorff_alpha(&fine.quantised(10).unwrap(), MeasurementLevel::Ordinal).unwrap().alpha;
    println!("ordinal on distinct reals {raw:.4}, after 10-bin quantisation {binned:.4}");
}
