//! Long-format CSV (`gesture_id,class,frame,ch0..`) plus a JSON sidecar.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, GestureSample, PipelineState, DEFAULT_SAMPLE_RATE_HZ, DIRECTION_CLASSES};
use crate::error::{CsvError, Error, Result};
use crate::numkernel::Mat;

/// Metadata stored next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub sample_rate: f64,
    pub channels: usize,
    pub frames: usize,
    pub class_names: Vec<String>,
    pub pipeline: PipelineState,
}

impl DatasetMeta {
    pub fn of(ds: &Dataset) -> Self {
        DatasetMeta {
            sample_rate: ds.sample_rate,
            channels: ds.channels(),
            frames: ds.frames(),
            class_names: ds.class_names.clone(),
            pipeline: ds.pipeline,
        }
    }
}

/// `data/tap.csv` -> `data/tap.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => CsvError::Malformed {
            line,
            message: format!("{other:?}"),
        }
        .into(),
    }
}

/// Writes the dataset as CSV. Values use the shortest representation that
/// round-trips exactly.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["gesture_id".to_string(), "class".into(), "frame".into()];
    header.extend((0..ds.channels()).map(|c| format!("ch{c}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for s in &ds.samples {
        for t in 0..s.x.cols() {
            record.clear();
            record.push(s.id.clone());
            record.push(ds.class_names[s.label].clone());
            record.push(t.to_string());
            record.extend((0..s.x.rows()).map(|c| s.x[(c, t)].to_string()));
            w.write_record(&record).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

struct Pending {
    id: String,
    label: usize,
    frames: Vec<Vec<f64>>,
}

impl Pending {
    fn finish(self, channels: usize) -> Result<GestureSample> {
        let t = self.frames.len();
        let mut x = Mat::zeros(channels, t);
        for (f, row) in self.frames.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                x[(c, f)] = v;
            }
        }
        Ok(GestureSample {
            x,
            label: self.label,
            id: self.id,
        })
    }
}

/// Parses a dataset CSV. `class_names` maps the `class` column to labels.
pub fn load_csv(path: &Path, class_names: &[String]) -> Result<Dataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::from(CsvError::MissingColumn(name.to_string())))
    };
    let id_col = column("gesture_id")?;
    let class_col = column("class")?;
    let frame_col = column("frame")?;
    let mut ch_cols = Vec::new();
    while let Some(pos) = header
        .iter()
        .position(|h| h.trim() == format!("ch{}", ch_cols.len()))
    {
        ch_cols.push(pos);
    }
    if ch_cols.is_empty() {
        return Err(CsvError::MissingColumn("ch0".into()).into());
    }

    let mut samples: Vec<GestureSample> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut pending: Option<Pending> = None;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| csv_err(path, e))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let malformed = |message: String| Error::from(CsvError::Malformed { line, message });
        if record.len() != header.len() {
            return Err(malformed(format!(
                "expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let id = field(id_col).to_string();
        let class = field(class_col);
        let label =
            class_names
                .iter()
                .position(|c| c == class)
                .ok_or_else(|| CsvError::UnknownClass {
                    line,
                    label: class.to_string(),
                })?;
        let frame: usize = field(frame_col)
            .parse()
            .map_err(|_| malformed(format!("bad frame index `{}`", field(frame_col))))?;
        let values = ch_cols
            .iter()
            .enumerate()
            .map(|(c, &i)| {
                let v: f64 = field(i)
                    .parse()
                    .map_err(|_| malformed(format!("bad value `{}` in ch{c}", field(i))))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(malformed(format!("non-finite value in ch{c}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;

        let same = pending.as_ref().is_some_and(|p| p.id == id);
        if !same {
            if let Some(done) = pending.take() {
                samples.push(done.finish(ch_cols.len())?);
            }
            if !seen.insert(id.clone()) {
                return Err(malformed(format!(
                    "gesture `{id}` appears in two separate blocks"
                )));
            }
            pending = Some(Pending {
                id: id.clone(),
                label,
                frames: Vec::new(),
            });
        }
        let p = pending.as_mut().expect("pending gesture");
        if p.label != label {
            return Err(malformed(format!(
                "gesture `{id}` changes class mid-gesture"
            )));
        }
        if frame != p.frames.len() {
            return Err(CsvError::RaggedFrames {
                gesture_id: id,
                detail: format!(
                    "line {line}: expected frame {}, found {frame}",
                    p.frames.len()
                ),
            }
            .into());
        }
        p.frames.push(values);
    }
    if let Some(done) = pending.take() {
        samples.push(done.finish(ch_cols.len())?);
    }
    if let Some(first) = samples.first() {
        let t = first.x.cols();
        if let Some(bad) = samples.iter().find(|s| s.x.cols() != t) {
            return Err(CsvError::RaggedFrames {
                gesture_id: bad.id.clone(),
                detail: format!("{} frames, other gestures have {t}", bad.x.cols()),
            }
            .into());
        }
    }
    Ok(Dataset {
        samples,
        class_names: class_names.to_vec(),
        sample_rate: DEFAULT_SAMPLE_RATE_HZ,
        pipeline: PipelineState {
            segmented: true,
            ..PipelineState::default()
        },
    })
}

/// Writes the CSV and its metadata sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    save_csv(ds, path)?;
    let meta_file = meta_path(path);
    let json = serde_json::to_string_pretty(&DatasetMeta::of(ds))
        .map_err(|e| Error::invalid(format!("metadata encoding: {e}")))?;
    let mut f = File::create(&meta_file).map_err(io_err(&meta_file))?;
    f.write_all(json.as_bytes()).map_err(io_err(&meta_file))?;
    f.write_all(b"\n").map_err(io_err(&meta_file))?;
    Ok(())
}

/// Loads a CSV, taking class names, sample rate and pipeline flags from the
/// sidecar when present (direction classes otherwise).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let meta_file = meta_path(path);
    let meta = if meta_file.exists() {
        let text = std::fs::read_to_string(&meta_file).map_err(io_err(&meta_file))?;
        let meta: DatasetMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: bad metadata: {e}", meta_file.display())))?;
        Some(meta)
    } else {
        None
    };
    let names: Vec<String> = match &meta {
        Some(m) => m.class_names.clone(),
        None => DIRECTION_CLASSES.iter().map(|s| s.to_string()).collect(),
    };
    let mut ds = load_csv(path, &names)?;
    if let Some(m) = meta {
        if !ds.is_empty() && (ds.channels() != m.channels || ds.frames() != m.frames) {
            return Err(Error::Dataset(format!(
                "{}: CSV is {}x{} but metadata says {}x{}",
                path.display(),
                ds.channels(),
                ds.frames(),
                m.channels,
                m.frames
            )));
        }
        ds.sample_rate = m.sample_rate;
        ds.pipeline = m.pipeline;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_generate, SynthConfig};

    fn names() -> Vec<String> {
        DIRECTION_CLASSES.iter().map(|s| s.to_string()).collect()
    }

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("d.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_generate(&SynthConfig {
            samples_per_class: 4,
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let path = dir.path().join("tap.csv");
        save_dataset(&ds, &path).unwrap();
        assert!(meta_path(&path).exists());
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn frame_gap_names_gesture() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "gesture_id,class,frame,ch0\ng1,north,0,1.0\ng1,north,2,1.0\n",
        );
        match load_csv(&p, &names()).unwrap_err() {
            Error::Csv(CsvError::RaggedFrames { gesture_id, .. }) => assert_eq!(gesture_id, "g1"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn distinct_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "gesture_id,frame,ch0\ng1,0,1.0\n");
        assert!(matches!(
            load_csv(&p, &names()).unwrap_err(),
            Error::Csv(CsvError::MissingColumn(c)) if c == "class"
        ));

        let p = write(dir.path(), "gesture_id,class,frame,ch0\ng1,up,0,1.0\n");
        assert!(matches!(
            load_csv(&p, &names()).unwrap_err(),
            Error::Csv(CsvError::UnknownClass { line: 2, .. })
        ));

        let p = write(
            dir.path(),
            "gesture_id,class,frame,ch0\ng1,north,0,1.0\ng1,north,1,abc\n",
        );
        assert!(matches!(
            load_csv(&p, &names()).unwrap_err(),
            Error::Csv(CsvError::Malformed { line: 3, .. })
        ));

        let p = write(
            dir.path(),
            "gesture_id,class,frame,ch0\ng1,north,0,1\ng1,north,1,1\ng2,east,0,1\n",
        );
        assert!(matches!(
            load_csv(&p, &names()).unwrap_err(),
            Error::Csv(CsvError::RaggedFrames { gesture_id, .. }) if gesture_id == "g2"
        ));
    }
}
