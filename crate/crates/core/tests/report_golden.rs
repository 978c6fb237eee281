use coastseg_core::catalog::{AltitudeClass, Tile};
use coastseg_core::dataset::CoastalType;
use coastseg_core::metrics::{aggregate_report, comparison_tables, MetricRow};

fn row(id: &str, tile: (u32, u32), year: i32, alt: AltitudeClass, ty: CoastalType, acc: f64, buf: Option<f64>) -> MetricRow {
    MetricRow {
        image_id: id.into(),
        accuracy: acc,
        precision: acc,
        recall: acc,
        f1: acc,
        fom: acc,
        buffered_accuracy: buf,
        buffered_precision: buf,
        buffered_recall: buf,
        buffered_f1: buf,
        tile: Some(Tile::new(tile.0, tile.1)),
        decade: Some(year.div_euclid(10) * 10),
        altitude_class: Some(alt),
        coastal_type: Some(ty),
    }
}

fn rows(acc: [f64; 4], buf: [Option<f64>; 4]) -> Vec<MetricRow> {
    use AltitudeClass::*;
    use CoastalType::*;
    // Deliberately out of id order: aggregation must not depend on it.
    vec![
        row("d", (207, 22), 1989, High, Rocky, acc[3], buf[3]),
        row("a", (205, 23), 1987, High, Sandy, acc[0], buf[0]),
        row("c", (207, 22), 2014, Medium, Rocky, acc[2], buf[2]),
        row("b", (205, 23), 2003, Low, Sandy, acc[1], buf[1]),
    ]
}

#[test]
fn comparison_tables_match_golden_layout() {
    let ndwi = rows([1.0, 0.8, 0.9, 0.7], [Some(0.9), Some(0.6), None, Some(0.5)]);
    let gbdt = rows([0.5, 0.6, 0.7, 0.8], [Some(0.4); 4]);
    let methods = vec![
        ("ndwi".to_string(), aggregate_report(&ndwi).unwrap()),
        ("gbdt".to_string(), aggregate_report(&gbdt).unwrap()),
    ];
    let tables = comparison_tables(&methods);
    let mut text = String::new();
    for (stem, body) in &tables {
        text.push_str(&format!("== {stem}\n{body}"));
    }
    assert_eq!(text, include_str!("golden/report_tables.txt"));
}

#[test]
fn summary_json_lists_all_four_strata() {
    let rep = aggregate_report(&rows([1.0, 0.8, 0.9, 0.7], [Some(0.9), Some(0.6), None, Some(0.5)])).unwrap();
    let v = serde_json::to_value(&rep).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys.len(), 5);
    for k in ["overall", "by_tile", "by_decade", "by_altitude", "by_coastal_type"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(v["overall"]["buffered_n"], 3);
    assert_eq!(v["by_altitude"][0]["value"], "Low");
    assert_eq!(v["by_altitude"][2]["n"], 2);
}
