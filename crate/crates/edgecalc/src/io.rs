//! Field files (JSON header plus raw little-endian samples), JSON with
//! fixed float formatting, and CSV tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{decompose_form, FormField, Label};
use crate::grid::{ModelGrid, ScalarField};

/// serde_json formatter printing every float with 17 significant digits.
struct Precise;

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Serialize with fixed key order (struct order) and 17-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|c| c.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

/// Float cell for CSV output.
pub fn cell(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Form,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: ModelGrid,
    pub kind: FieldKind,
    pub degree: Option<usize>,
    pub components: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldFile {
    Scalar(ScalarField),
    Form(FormField),
}

/// Raw sample file next to a header: same stem, `.bin` extension.
pub fn data_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

fn write_samples(path: &Path, parts: &[&[Complex64]]) -> Result<()> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut buf = Vec::with_capacity(16 * total);
    for p in parts {
        for v in *p {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

fn read_samples(path: &Path, count: usize) -> Result<Vec<Complex64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != 16 * count {
        return Err(Error::Invalid(format!(
            "{} holds {} bytes, header declares {} complex samples",
            path.display(),
            bytes.len(),
            count
        )));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    Ok(bytes
        .chunks_exact(16)
        .map(|c| Complex64::new(f(&c[..8]), f(&c[8..])))
        .collect())
}

pub fn write_scalar_field(path: &Path, f: &ScalarField) -> Result<()> {
    let header = FieldHeader {
        grid: f.grid.clone(),
        kind: FieldKind::Scalar,
        degree: None,
        components: vec!["f".into()],
    };
    write_json(path, &header)?;
    write_samples(&data_path(path), &[&f.values])
}

pub fn write_form_field(path: &Path, f: &FormField) -> Result<()> {
    let header = FieldHeader {
        grid: f.grid.clone(),
        kind: FieldKind::Form,
        degree: f.degree,
        components: f.components.iter().map(|(l, _)| l.to_string()).collect(),
    };
    write_json(path, &header)?;
    let parts: Vec<&[Complex64]> = f
        .components
        .iter()
        .map(|(_, c)| c.values.as_slice())
        .collect();
    write_samples(&data_path(path), &parts)
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let header: FieldHeader = read_json(path)?;
    header.grid.validate()?;
    let n = header.grid.len();
    let data = read_samples(&data_path(path), n * header.components.len())?;
    match header.kind {
        FieldKind::Scalar => {
            if header.components.len() != 1 {
                return Err(Error::Invalid(
                    "scalar field files hold exactly one component".into(),
                ));
            }
            Ok(FieldFile::Scalar(ScalarField::new(header.grid, data)?))
        }
        FieldKind::Form => {
            let mut raw = Vec::with_capacity(header.components.len());
            for (i, name) in header.components.iter().enumerate() {
                let label: Label = name.parse()?;
                let values = data[i * n..(i + 1) * n].to_vec();
                raw.push((label, ScalarField::new(header.grid.clone(), values)?));
            }
            let f = match header.degree {
                Some(k) => decompose_form(&header.grid, raw, k)?,
                None => {
                    let mut out = FormField::zeros_full(&header.grid)?;
                    for (l, v) in raw {
                        *out.get_mut(l)
                            .ok_or_else(|| Error::Labels(format!("label {l} not on grid")))? = v;
                    }
                    out
                }
            };
            Ok(FieldFile::Form(f))
        }
    }
}

/// Scalar content of a field file; a form must have a single component.
pub fn read_scalar_field(path: &Path) -> Result<ScalarField> {
    match read_field(path)? {
        FieldFile::Scalar(f) => Ok(f),
        FieldFile::Form(f) if f.components.len() == 1 => {
            Ok(f.components.into_iter().next().expect("one").1)
        }
        FieldFile::Form(_) => Err(Error::Invalid(format!(
            "{} holds a multi-component form",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_model_grid;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_model_grid(1, 1, 4.0, 16, 8, 8, 0.5, 0.1, 0.3).unwrap();
        let f = ScalarField::from_fn(&g, |t, s, u| Complex64::new((-t * t).exp(), s[0] * u[0]));
        let p = dir.path().join("f.json");
        write_scalar_field(&p, &f).unwrap();
        assert_eq!(read_scalar_field(&p).unwrap(), f);

        let mut form = FormField::zeros(&g, 1).unwrap();
        form.components[0].1 = f.clone();
        let p = dir.path().join("xi.json");
        write_form_field(&p, &form).unwrap();
        assert_eq!(read_field(&p).unwrap(), FieldFile::Form(form));
    }

    #[test]
    fn truncated_data_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_model_grid(1, 0, 4.0, 16, 8, 8, 0.5, 0.1, 0.3).unwrap();
        let p = dir.path().join("f.json");
        write_scalar_field(&p, &ScalarField::zeros(&g)).unwrap();
        fs::write(data_path(&p), [0u8; 24]).unwrap();
        assert!(matches!(read_field(&p), Err(Error::Invalid(_))));
    }

    #[test]
    fn json_floats_have_17_digits() {
        let s = to_json_string(&serde_json::json!({ "x": 0.1, "y": [1.0, -2.5e-300] })).unwrap();
        assert_eq!(
            s,
            "{\"x\":1.0000000000000001e-1,\"y\":[1.0000000000000000e0,-2.5000000000000000e-300]}\n"
        );
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"].as_f64().unwrap(), 0.1);
    }
}
