//! File formats: sample CSV, point CSV, JSON with non-finite sentinels.
//!
//! JSON never carries NaN or infinities as numbers. Non-finite reals are
//! written as the strings `"NaN"`, `"Infinity"` and `"-Infinity"`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qstein_core::sampler::SampleBatch;
use serde::Serialize;

pub type IoResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Serde adapters for reals that may be non-finite.
pub mod real {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub const NAN: &str = "NaN";
    pub const POS_INF: &str = "Infinity";
    pub const NEG_INF: &str = "-Infinity";

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str(NAN)
        } else if *v == f64::INFINITY {
            s.serialize_str(POS_INF)
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str(NEG_INF)
        } else {
            s.serialize_f64(*v)
        }
    }

    struct RealVisitor;

    impl Visitor<'_> for RealVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number or one of \"NaN\", \"Infinity\", \"-Infinity\"")
        }
        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                NAN => Ok(f64::NAN),
                POS_INF => Ok(f64::INFINITY),
                NEG_INF => Ok(f64::NEG_INFINITY),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(RealVisitor)
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&Wrap(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v: Vec<Wrap> = Vec::deserialize(d)?;
            Ok(v.into_iter().map(|w| w.0).collect())
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Wrap(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            v.map(Wrap).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> IoResult<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> IoResult<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// Path of the config echo written next to an output file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

/// Writes a batch as CSV with columns `x_1, …, x_D, s`.
pub fn write_batch_csv<W: Write>(batch: &SampleBatch, out: W) -> IoResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = batch.dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("s".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(d + 1);
    for (x, s) in batch.rows().zip(batch.s_values()) {
        row.clear();
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(s.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_batch_csv_file(batch: &SampleBatch, path: &Path) -> IoResult<()> {
    write_batch_csv(batch, BufWriter::new(File::create(path)?))
}

/// Reads the `x_1, …, x_D` columns of a CSV file; other columns are ignored.
pub fn read_points_csv(path: &Path) -> IoResult<(usize, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut cols: Vec<(usize, usize)> = Vec::new();
    for (idx, h) in headers.iter().enumerate() {
        if let Some(k) = h.trim().strip_prefix("x_").and_then(|k| k.parse::<usize>().ok()) {
            cols.push((k, idx));
        }
    }
    cols.sort();
    if cols.is_empty() || cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
        return Err(format!("{}: expected columns x_1..x_D", path.display()).into());
    }
    let d = cols.len();
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for &(_, idx) in &cols {
            let v: f64 = rec.get(idx).unwrap_or("").trim().parse()?;
            points.push(v);
        }
    }
    Ok((d, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use qstein_core::exec::Sequential;
    use qstein_core::sampler::{sample, Source};
    use qstein_core::QGaussian;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Probe {
        #[serde(with = "real")]
        a: f64,
        #[serde(with = "real::vec")]
        b: Vec<f64>,
        #[serde(with = "real::option")]
        c: Option<f64>,
    }

    #[test]
    fn sentinels_round_trip() {
        let p = Probe { a: f64::INFINITY, b: vec![1.5, f64::NEG_INFINITY, 0.1 + 0.2], c: Some(f64::NAN) };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"a":"Infinity","b":[1.5,"-Infinity",0.30000000000000004],"c":"NaN"}"#);
        let back: Probe = serde_json::from_str(&s).unwrap();
        assert_eq!(back.a, f64::INFINITY);
        assert_eq!(back.b[1], f64::NEG_INFINITY);
        assert_eq!(back.b[2], 0.1 + 0.2);
        assert!(back.c.unwrap().is_nan());
        assert!(serde_json::from_str::<Probe>(r#"{"a":"inf","b":[],"c":null}"#).is_err());
    }

    #[test]
    fn batch_csv_round_trip() {
        let p = QGaussian::standard(2, 0.3).unwrap();
        let batch = sample(&p, 50, 3, Source::Base, &Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        write_batch_csv_file(&batch, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x_1,x_2,s\n"));
        assert_eq!(text.lines().count(), 51);
        let (d, pts) = read_points_csv(&path).unwrap();
        assert_eq!(d, 2);
        assert_eq!(pts, batch.points());
    }

    proptest::proptest! {
        #[test]
        fn any_real_round_trips_through_json(bits in proptest::prelude::any::<u64>()) {
            let a = f64::from_bits(bits);
            let p = Probe { a, b: vec![a, -a], c: Some(a) };
            let s = serde_json::to_string(&p).unwrap();
            let back: Probe = serde_json::from_str(&s).unwrap();
            if a.is_nan() {
                proptest::prop_assert!(back.a.is_nan() && back.c.unwrap().is_nan());
            } else {
                proptest::prop_assert_eq!(back, p);
            }
        }

        #[test]
        fn csv_points_round_trip_exactly(seed in 0u64..1000, d in 1usize..4, q in -1.0f64..0.99) {
            let law = QGaussian::standard(d, q).unwrap();
            let batch = sample(&law, 7, seed, Source::Base, &Sequential).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("b.csv");
            write_batch_csv_file(&batch, &path).unwrap();
            let (dd, pts) = read_points_csv(&path).unwrap();
            proptest::prop_assert_eq!(dd, d);
            proptest::prop_assert_eq!(pts.as_slice(), batch.points());
        }
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("out/b.csv")), PathBuf::from("out/b.csv.config.json"));
    }
}
