//! Scene catalog: solar altitude, selection rules, and catalog CSV I/O.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Satellite {
    L5,
    L7,
    L8,
    L9,
}

impl Satellite {
    pub const ALL: [Satellite; 4] = [Satellite::L5, Satellite::L7, Satellite::L8, Satellite::L9];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AltitudeClass {
    Low,
    Medium,
    High,
}

impl fmt::Display for AltitudeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AltitudeClass::Low => "Low",
            AltitudeClass::Medium => "Medium",
            AltitudeClass::High => "High",
        })
    }
}

/// Fixed Landsat footprint, identified by WRS path and row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tile {
    pub path: u32,
    pub row: u32,
}

impl Tile {
    pub fn new(path: u32, row: u32) -> Self {
        Tile { path, row }
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.path, self.row)
    }
}

impl FromStr for Tile {
    type Err = Error;

    /// Accepts `207,22` or `(207,22)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let bad = || Error::Record(format!("invalid tile {s:?}, expected PATH,ROW"));
        let (p, r) = inner.split_once(',').ok_or_else(bad)?;
        Ok(Tile {
            path: p.trim().parse().map_err(|_| bad())?,
            row: r.trim().parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for Tile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One scene's catalog metadata. Column order matches the catalog CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub satellite: Satellite,
    pub acquired_at: DateTime<Utc>,
    pub path: u32,
    pub row: u32,
    pub tier: u32,
    pub cloud_cover_pct: f64,
    pub center_lat: f64,
    pub center_lon: f64,
    #[serde(default)]
    pub solar_altitude_deg: Option<f64>,
    #[serde(default)]
    pub altitude_class: Option<AltitudeClass>,
}

impl SceneRecord {
    pub fn tile(&self) -> Tile {
        Tile::new(self.path, self.row)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.cloud_cover_pct) {
            return Err(Error::Record(format!(
                "{}: cloud cover {} outside [0,100]",
                self.scene_id, self.cloud_cover_pct
            )));
        }
        check_coordinates(self.center_lat, self.center_lon)
            .map_err(|e| Error::Record(format!("{}: {e}", self.scene_id)))
    }

    fn selection_key(&self) -> (f64, DateTime<Utc>, &str) {
        (self.cloud_cover_pct, self.acquired_at, self.scene_id.as_str())
    }
}

fn cmp_selection(a: &SceneRecord, b: &SceneRecord) -> std::cmp::Ordering {
    let (ca, ta, ia) = a.selection_key();
    let (cb, tb, ib) = b.selection_key();
    ca.total_cmp(&cb).then(ta.cmp(&tb)).then(ia.cmp(ib))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeThresholds {
    pub low_max: f64,
    pub high_min: f64,
}

impl Default for AltitudeThresholds {
    fn default() -> Self {
        AltitudeThresholds {
            low_max: 30.0,
            high_min: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    pub max_cloud_pct: f64,
    pub allowed_satellites: BTreeSet<Satellite>,
    pub l7_cutoff_date: NaiveDate,
    pub required_tier: u32,
    pub altitude_thresholds: AltitudeThresholds,
    pub per_tile_extra: BTreeMap<Tile, usize>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy {
            max_cloud_pct: 10.0,
            allowed_satellites: Satellite::ALL.into_iter().collect(),
            l7_cutoff_date: NaiveDate::from_ymd_opt(2003, 5, 31).expect("valid date"),
            required_tier: 1,
            altitude_thresholds: AltitudeThresholds::default(),
            per_tile_extra: BTreeMap::new(),
        }
    }
}

impl SelectionPolicy {
    pub fn validate(&self) -> Result<()> {
        let t = self.altitude_thresholds;
        if !(t.low_max < t.high_min) {
            return Err(Error::OutOfRange(format!(
                "altitude thresholds need low_max < high_min, got {} and {}",
                t.low_max, t.high_min
            )));
        }
        Ok(())
    }
}

fn check_coordinates(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(Error::OutOfRange(format!("latitude {lat} outside [-90,90]")));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(Error::OutOfRange(format!("longitude {lon} outside [-180,180]")));
    }
    Ok(())
}

/// Geometric solar elevation in degrees (no refraction correction).
///
/// Uses the NOAA low-accuracy series for declination and the equation of
/// time in terms of the fractional year.
pub fn solar_altitude(lat: f64, lon: f64, t: DateTime<Utc>) -> Result<f64> {
    check_coordinates(lat, lon)?;
    if !(1970..=2100).contains(&t.year()) {
        return Err(Error::OutOfRange(format!(
            "year {} outside 1970..=2100",
            t.year()
        )));
    }
    let days_in_year = if NaiveDate::from_ymd_opt(t.year(), 2, 29).is_some() {
        366.0
    } else {
        365.0
    };
    let hours = f64::from(t.hour())
        + f64::from(t.minute()) / 60.0
        + (f64::from(t.second()) + f64::from(t.nanosecond()) * 1e-9) / 3600.0;
    let doy = f64::from(t.ordinal());
    let g = 2.0 * std::f64::consts::PI / days_in_year * (doy - 1.0 + (hours - 12.0) / 24.0);

    let eqtime = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin()
        - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();

    // Minutes of true solar time; UTC input means no timezone term.
    let true_solar = hours * 60.0 + eqtime + 4.0 * lon;
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();
    let phi = lat.to_radians();
    let sin_alt = phi.sin() * decl.sin() + phi.cos() * decl.cos() * hour_angle.cos();
    Ok(sin_alt.clamp(-1.0, 1.0).asin().to_degrees())
}

pub fn classify_altitude(alt: f64, policy: &SelectionPolicy) -> AltitudeClass {
    let t = policy.altitude_thresholds;
    if alt > t.high_min {
        AltitudeClass::High
    } else if alt > t.low_max {
        AltitudeClass::Medium
    } else {
        AltitudeClass::Low
    }
}

/// Fills `solar_altitude_deg` and `altitude_class` from center coordinates
/// and acquisition time.
pub fn annotate_altitude(
    records: &mut [SceneRecord],
    policy: &SelectionPolicy,
    exec: Exec,
) -> Result<()> {
    let alts = exec.try_map(records, |r| {
        solar_altitude(r.center_lat, r.center_lon, r.acquired_at)
            .map_err(|e| Error::Record(format!("{}: {e}", r.scene_id)))
    })?;
    for (r, alt) in records.iter_mut().zip(alts) {
        r.solar_altitude_deg = Some(alt);
        r.altitude_class = Some(classify_altitude(alt, policy));
    }
    Ok(())
}

fn l7_cutoff(policy: &SelectionPolicy) -> DateTime<Utc> {
    policy
        .l7_cutoff_date
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
}

pub fn passes_filter(r: &SceneRecord, policy: &SelectionPolicy) -> bool {
    policy.allowed_satellites.contains(&r.satellite)
        && (r.satellite != Satellite::L7 || r.acquired_at < l7_cutoff(policy))
        && r.tier == policy.required_tier
        && r.cloud_cover_pct < policy.max_cloud_pct
}

pub fn filter_catalog(records: &[SceneRecord], policy: &SelectionPolicy) -> Vec<SceneRecord> {
    records
        .iter()
        .filter(|r| passes_filter(r, policy))
        .cloned()
        .collect()
}

/// Lowest-cloud scene per (UTC year, altitude class), then the configured
/// number of extra lowest-cloud scenes per tile.
///
/// Records missing an altitude are annotated on the fly. Ties on cloud cover
/// go to the earlier acquisition, then the lexicographically smaller id.
pub fn select_scenes(records: &[SceneRecord], policy: &SelectionPolicy) -> Result<Vec<SceneRecord>> {
    policy.validate()?;
    let mut pool = records.to_vec();
    if pool.iter().any(|r| r.solar_altitude_deg.is_none()) {
        annotate_altitude(&mut pool, policy, Exec::Sequential)?;
    }
    for r in pool.iter_mut() {
        let alt = r.solar_altitude_deg.expect("annotated above");
        r.altitude_class = Some(classify_altitude(alt, policy));
    }

    let mut groups: BTreeMap<(i32, AltitudeClass), &SceneRecord> = BTreeMap::new();
    for r in &pool {
        let key = (r.acquired_at.year(), r.altitude_class.expect("classified"));
        groups
            .entry(key)
            .and_modify(|best| {
                if cmp_selection(r, best).is_lt() {
                    *best = r;
                }
            })
            .or_insert(r);
    }
    let mut chosen: Vec<&SceneRecord> = groups.into_values().collect();
    let mut taken: HashSet<&str> = chosen.iter().map(|r| r.scene_id.as_str()).collect();

    for (&tile, &extra) in &policy.per_tile_extra {
        let mut candidates: Vec<&SceneRecord> = pool
            .iter()
            .filter(|r| r.tile() == tile && !taken.contains(r.scene_id.as_str()))
            .collect();
        candidates.sort_by(|a, b| cmp_selection(a, b));
        for r in candidates.into_iter().take(extra) {
            taken.insert(r.scene_id.as_str());
            chosen.push(r);
        }
    }

    chosen.sort_by(|a, b| {
        a.acquired_at
            .cmp(&b.acquired_at)
            .then(a.scene_id.cmp(&b.scene_id))
    });
    let mut seen = HashSet::new();
    chosen.retain(|r| seen.insert(r.scene_id.as_str()));
    Ok(chosen.into_iter().cloned().collect())
}

pub fn read_catalog<R: Read>(reader: R) -> Result<Vec<SceneRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: SceneRecord = rec?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_catalog<W: Write>(records: &[SceneRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<catalog>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthAltitude {
    pub month: u32,
    pub n: usize,
    pub mean_altitude_deg: f64,
}

/// Mean solar altitude per calendar month, for months that have scenes.
pub fn altitude_by_month(records: &[SceneRecord]) -> Vec<MonthAltitude> {
    let mut acc: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for r in records {
        if let Some(a) = r.solar_altitude_deg {
            let e = acc.entry(r.acquired_at.month()).or_default();
            e.0 += 1;
            e.1 += a;
        }
    }
    acc.into_iter()
        .map(|(month, (n, sum))| MonthAltitude {
            month,
            n,
            mean_altitude_deg: sum / n as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudBin {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub n: usize,
}

/// Cloud-cover histogram with `bin_width`-percent bins over [0,100]; 100%
/// falls in the last bin.
pub fn cloud_histogram(records: &[SceneRecord], bin_width: f64) -> Vec<CloudBin> {
    let nbins = (100.0 / bin_width).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; nbins];
    for r in records {
        let b = ((r.cloud_cover_pct / bin_width).floor() as usize).min(nbins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| CloudBin {
            lower_pct: i as f64 * bin_width,
            upper_pct: ((i + 1) as f64 * bin_width).min(100.0),
            n,
        })
        .collect()
}

pub fn write_csv_rows<W: Write, T: Serialize>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    pub(crate) fn rec(id: &str, sat: Satellite, t: &str, tile: (u32, u32), tier: u32, cloud: f64) -> SceneRecord {
        SceneRecord {
            scene_id: id.into(),
            satellite: sat,
            acquired_at: ts(t),
            path: tile.0,
            row: tile.1,
            tier,
            cloud_cover_pct: cloud,
            center_lat: 53.0,
            center_lon: -8.0,
            solar_altitude_deg: None,
            altitude_class: None,
        }
    }

    #[test]
    fn altitude_class_boundaries() {
        let p = SelectionPolicy::default();
        assert_eq!(classify_altitude(50.0, &p), AltitudeClass::Medium);
        assert_eq!(classify_altitude(50.0001, &p), AltitudeClass::High);
        assert_eq!(classify_altitude(30.0, &p), AltitudeClass::Low);
        assert_eq!(classify_altitude(30.0001, &p), AltitudeClass::Medium);
        assert_eq!(classify_altitude(89.9, &p), AltitudeClass::High);
        assert_eq!(classify_altitude(-5.0, &p), AltitudeClass::Low);
    }

    #[test]
    fn equatorial_equinox_noon_is_near_zenith() {
        // Apparent solar noon at Greenwich meridian on 2020-03-20 is ~12:07 UTC.
        let alt = solar_altitude(0.0, 0.0, ts("2020-03-20T12:07:00Z")).unwrap();
        assert!((alt - 90.0).abs() < 1.5, "{alt}");
    }

    #[test]
    fn dublin_summer_above_winter() {
        let june = solar_altitude(53.35, -6.26, ts("2020-06-21T12:00:00Z")).unwrap();
        let dec = solar_altitude(53.35, -6.26, ts("2020-12-21T12:00:00Z")).unwrap();
        assert!(june > dec);
        // NREL SPA geometric elevation for the June case: 59.6525.
        assert!((june - 59.6525).abs() < 0.5, "{june}");
    }

    #[test]
    fn solar_altitude_rejects_bad_input() {
        let t = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        assert!(solar_altitude(91.0, 0.0, t).is_err());
        assert!(solar_altitude(0.0, -181.0, t).is_err());
        let old = Utc.with_ymd_and_hms(1969, 12, 31, 0, 0, 0).unwrap();
        assert!(solar_altitude(0.0, 0.0, old).is_err());
    }

    #[test]
    fn filter_rules() {
        let p = SelectionPolicy::default();
        let l7_late = rec("a", Satellite::L7, "2004-01-01T11:00:00Z", (205, 23), 1, 1.0);
        let l7_early = rec("b", Satellite::L7, "2003-05-30T11:00:00Z", (205, 23), 1, 1.0);
        let l7_on_cutoff = rec("c", Satellite::L7, "2003-05-31T00:00:00Z", (205, 23), 1, 1.0);
        let l8_ok = rec("d", Satellite::L8, "2015-01-01T11:00:00Z", (205, 23), 1, 9.9);
        let l8_cloud = rec("e", Satellite::L8, "2015-01-01T11:00:00Z", (205, 23), 1, 10.0);
        let tier2 = rec("f", Satellite::L5, "1990-01-01T11:00:00Z", (205, 23), 2, 0.0);
        let all = vec![l7_late, l7_early, l7_on_cutoff, l8_ok, l8_cloud, tier2];
        let ids: Vec<_> = filter_catalog(&all, &p).into_iter().map(|r| r.scene_id).collect();
        assert_eq!(ids, vec!["b", "d"]);
    }

    #[test]
    fn argmin_and_tie_break() {
        let p = SelectionPolicy::default();
        let mut rs = vec![
            rec("x", Satellite::L8, "2016-01-10T11:00:00Z", (205, 23), 1, 3.1),
            rec("y", Satellite::L8, "2016-01-20T11:00:00Z", (205, 23), 1, 2.7),
        ];
        let sel = select_scenes(&rs, &p).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].scene_id, "y");

        rs = vec![
            rec("mar", Satellite::L8, "2016-03-01T11:00:00Z", (205, 23), 1, 5.0),
            rec("jan", Satellite::L8, "2016-01-05T11:00:00Z", (205, 23), 1, 5.0),
        ];
        // Pin both into the same altitude class.
        for r in rs.iter_mut() {
            r.solar_altitude_deg = Some(15.0);
        }
        let sel = select_scenes(&rs, &p).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].scene_id, "jan");
    }

    #[test]
    fn catalog_csv_round_trip() {
        let mut rs = vec![rec("s1", Satellite::L5, "1990-07-01T11:00:00Z", (207, 22), 1, 2.5)];
        annotate_altitude(&mut rs, &SelectionPolicy::default(), Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        write_catalog(&rs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "scene_id,satellite,acquired_at,path,row,tier,cloud_cover_pct,center_lat,center_lon,solar_altitude_deg,altitude_class\n"
        ));
        let back = read_catalog(buf.as_slice()).unwrap();
        assert_eq!(back, rs);
    }

    #[test]
    fn reads_input_schema_without_derived_columns() {
        let csv = "scene_id,satellite,acquired_at,path,row,tier,cloud_cover_pct,center_lat,center_lon\n\
                   LT05_A,L5,1988-06-01T11:10:00Z,206,23,1,4.2,53.9,-9.1\n";
        let rs = read_catalog(csv.as_bytes()).unwrap();
        assert_eq!(rs[0].tile(), Tile::new(206, 23));
        assert_eq!(rs[0].solar_altitude_deg, None);

        let bad = "scene_id,satellite,acquired_at,path,row,tier,cloud_cover_pct,center_lat,center_lon\n\
                   X,L5,1988-06-01T11:10:00Z,206,23,1,140.0,53.9,-9.1\n";
        assert!(read_catalog(bad.as_bytes()).is_err());
    }

    #[test]
    fn tile_parsing() {
        assert_eq!("207,22".parse::<Tile>().unwrap(), Tile::new(207, 22));
        assert_eq!("(207, 22)".parse::<Tile>().unwrap(), Tile::new(207, 22));
        assert!("207".parse::<Tile>().is_err());
        assert_eq!(Tile::new(205, 23).to_string(), "(205,23)");
    }

    #[test]
    fn histograms() {
        let mut rs = vec![
            rec("a", Satellite::L8, "2016-01-10T11:00:00Z", (205, 23), 1, 0.0),
            rec("b", Satellite::L8, "2016-01-20T11:00:00Z", (205, 23), 1, 9.99),
            rec("c", Satellite::L8, "2016-06-20T11:00:00Z", (205, 23), 1, 100.0),
        ];
        let h = cloud_histogram(&rs, 10.0);
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].n, 2);
        assert_eq!(h[9].n, 1);
        annotate_altitude(&mut rs, &SelectionPolicy::default(), Exec::Sequential).unwrap();
        let m = altitude_by_month(&rs);
        assert_eq!(m.iter().map(|x| x.month).collect::<Vec<_>>(), vec![1, 6]);
        assert_eq!(m[0].n, 2);
        assert!(m[1].mean_altitude_deg > m[0].mean_altitude_deg);
    }

    fn arb_record() -> impl Strategy<Value = SceneRecord> {
        (
            0usize..4,
            1984i32..2023,
            1u32..13,
            0u32..4,
            1u32..3,
            0.0f64..30.0,
        )
            .prop_map(|(s, y, m, tile, tier, cloud)| {
                let t = Utc.with_ymd_and_hms(y, m, 15, 11, 30, 0).unwrap();
                SceneRecord {
                    scene_id: String::new(),
                    satellite: Satellite::ALL[s],
                    acquired_at: t,
                    path: 205 + tile,
                    row: 23,
                    tier,
                    cloud_cover_pct: (cloud * 10.0).round() / 10.0,
                    center_lat: 53.0,
                    center_lon: -8.0,
                    solar_altitude_deg: None,
                    altitude_class: None,
                }
            })
    }

    fn arb_catalog() -> impl Strategy<Value = Vec<SceneRecord>> {
        prop::collection::vec(arb_record(), 0..40).prop_map(|mut v| {
            for (i, r) in v.iter_mut().enumerate() {
                r.scene_id = format!("S{i:04}");
            }
            v
        })
    }

    proptest! {
        #[test]
        fn raising_cloud_cap_never_shrinks(records in arb_catalog(), a in 0.0f64..30.0, b in 0.0f64..30.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = SelectionPolicy { max_cloud_pct: lo, ..Default::default() };
            let p_hi = SelectionPolicy { max_cloud_pct: hi, ..Default::default() };
            let small = filter_catalog(&records, &p_lo);
            let big = filter_catalog(&records, &p_hi);
            prop_assert!(small.len() <= big.len());
            prop_assert!(small.iter().all(|r| big.contains(r)));
        }

        #[test]
        fn selection_is_consistent_subset(records in arb_catalog(), extra in 0usize..3) {
            let mut p = SelectionPolicy::default();
            p.per_tile_extra.insert(Tile::new(206, 23), extra);
            let filtered = filter_catalog(&records, &p);
            let sel = select_scenes(&filtered, &p).unwrap();
            let again = select_scenes(&filtered, &p).unwrap();
            prop_assert_eq!(&sel, &again);
            for r in &sel {
                prop_assert!(filtered.iter().any(|f| f.scene_id == r.scene_id));
                let alt = r.solar_altitude_deg.unwrap();
                prop_assert_eq!(r.altitude_class, Some(classify_altitude(alt, &p)));
            }
            let mut ids: Vec<_> = sel.iter().map(|r| &r.scene_id).collect();
            ids.dedup();
            prop_assert_eq!(ids.len(), sel.len());
        }
    }
}
