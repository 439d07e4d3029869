//! File formats: CSV tables for kernels, brackets and frame reports, and
//! the binary dumps (`TWSF` functions, `TWKF` kernels, `TWZF` Zak fields,
//! `TWRF` range-field coefficient matrices).
//!
//! Binary layout: 4-byte magic, little-endian `u32` dimensions, then
//! row-major complex samples as little-endian `f64` (re, im) pairs. Writes
//! go through a temp file in the target directory followed by a rename.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::FrameReport;
use crate::grids::{GridSpec, SampledFunction};
use crate::rangeops::{FiberOperatorField, PropertyTransferReport};
use crate::weyl::KernelField;
use crate::zak::{BracketField, ZakField};

/// Write bytes through a temporary file and rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile_path(path);
    let mut n = 0u32;
    while tmp.exists() {
        n += 1;
        tmp = tmp.with_extension(format!("tmp{n}"));
    }
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tempfile_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Kernel dump: columns `(xi, eta, re, im)`.
pub fn write_kernel_csv(kernel: &KernelField, path: &Path) -> Result<()> {
    let spec = kernel.spec();
    let q = spec.len();
    let mut out = String::with_capacity(q * q * 32);
    out.push_str("xi,eta,re,im\n");
    for a in 0..q {
        for b in 0..q {
            let v = kernel.values()[[a, b]];
            out.push_str(&format!("{},{},{},{}\n", spec.coord(a), spec.coord(b), v.re, v.im));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Bracket dump: columns `(xi, xi_prime, re, im, in_omega)`.
pub fn write_bracket_csv(bracket: &BracketField, path: &Path) -> Result<()> {
    let spec = bracket.spec();
    let mut out = String::new();
    out.push_str("xi,xi_prime,re,im,in_omega\n");
    for a in 0..spec.torus_samples() {
        for b in 0..spec.periods() {
            let v = bracket.values()[[a, b]];
            let m = bracket.omega_mask()[[a, b]];
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                spec.xi(a),
                spec.xi_prime(b),
                v.re,
                v.im,
                if m { 1 } else { 0 }
            ));
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Frame report table: `(label, A, B, A_est, B_est, is_frame, is_parseval,
/// omega_fraction, Kmax)`.
pub fn write_frame_reports_csv(reports: &[FrameReport], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label,A,B,A_est,B_est,is_frame,is_parseval,omega_fraction,Kmax\n");
    for r in reports {
        let a_est = r.lower_estimate.map(|v| v.to_string()).unwrap_or_default();
        let b_est = r.upper_estimate.map(|v| v.to_string()).unwrap_or_default();
        let kmax = r.kmax.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_quote(&r.label),
            r.lower,
            r.upper,
            a_est,
            b_est,
            r.is_frame,
            r.is_parseval,
            r.omega_fraction,
            kmax
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_property_report(report: &PropertyTransferReport, path: &Path) -> Result<()> {
    atomic_write(path, report.to_string().as_bytes())
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_complex(buf: &mut Vec<u8>, v: Complex64) {
    buf.extend_from_slice(&v.re.to_le_bytes());
    buf.extend_from_slice(&v.im.to_le_bytes());
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    *pos = end;
    Ok(u32::from_le_bytes(slice.try_into().unwrap()))
}

fn read_complex(bytes: &[u8], pos: &mut usize) -> Result<Complex64> {
    let end = *pos + 16;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format("truncated body".into()))?;
    *pos = end;
    let re = f64::from_le_bytes(slice[0..8].try_into().unwrap());
    let im = f64::from_le_bytes(slice[8..16].try_into().unwrap());
    Ok(Complex64::new(re, im))
}

fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<usize> {
    if bytes.len() < 4 || &bytes[0..4] != magic {
        return Err(Error::Format(format!(
            "missing magic {:?}",
            std::str::from_utf8(magic).unwrap_or("?")
        )));
    }
    Ok(4)
}

/// `TWSF`: function samples, dims (rows, cols).
pub fn write_function_binary(f: &SampledFunction, path: &Path) -> Result<()> {
    let (rows, cols) = f.values().dim();
    let mut buf = Vec::with_capacity(12 + rows * cols * 16);
    buf.extend_from_slice(b"TWSF");
    push_u32(&mut buf, rows as u32);
    push_u32(&mut buf, cols as u32);
    for v in f.values().iter() {
        push_complex(&mut buf, *v);
    }
    atomic_write(path, &buf)
}

pub fn read_function_binary(spec: GridSpec, path: &Path) -> Result<SampledFunction> {
    let bytes = std::fs::read(path)?;
    let mut pos = check_magic(&bytes, b"TWSF")?;
    let rows = read_u32(&bytes, &mut pos)? as usize;
    let cols = read_u32(&bytes, &mut pos)? as usize;
    let mut values = Array2::<Complex64>::zeros((rows, cols));
    for v in values.iter_mut() {
        *v = read_complex(&bytes, &mut pos)?;
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "file".into());
    SampledFunction::new(spec, values, label)
}

/// `TWKF`: kernel samples, dims (rows, cols).
pub fn write_kernel_binary(kernel: &KernelField, path: &Path) -> Result<()> {
    let (rows, cols) = kernel.values().dim();
    let mut buf = Vec::with_capacity(12 + rows * cols * 16);
    buf.extend_from_slice(b"TWKF");
    push_u32(&mut buf, rows as u32);
    push_u32(&mut buf, cols as u32);
    for v in kernel.values().iter() {
        push_complex(&mut buf, *v);
    }
    atomic_write(path, &buf)
}

pub fn read_kernel_binary(spec: GridSpec, path: &Path) -> Result<KernelField> {
    let bytes = std::fs::read(path)?;
    let mut pos = check_magic(&bytes, b"TWKF")?;
    let rows = read_u32(&bytes, &mut pos)? as usize;
    let cols = read_u32(&bytes, &mut pos)? as usize;
    let mut values = Array2::<Complex64>::zeros((rows, cols));
    for v in values.iter_mut() {
        *v = read_complex(&bytes, &mut pos)?;
    }
    Ok(KernelField::new(spec, values, "file"))
}

/// `TWZF`: Zak field samples, dims (M, P, Q).
pub fn write_zak_binary(field: &ZakField, path: &Path) -> Result<()> {
    let (m, p, q) = field.values().dim();
    let mut buf = Vec::with_capacity(16 + m * p * q * 16);
    buf.extend_from_slice(b"TWZF");
    push_u32(&mut buf, m as u32);
    push_u32(&mut buf, p as u32);
    push_u32(&mut buf, q as u32);
    for v in field.values().iter() {
        push_complex(&mut buf, *v);
    }
    atomic_write(path, &buf)
}

pub fn read_zak_binary(spec: GridSpec, path: &Path) -> Result<ZakField> {
    let bytes = std::fs::read(path)?;
    let mut pos = check_magic(&bytes, b"TWZF")?;
    let m = read_u32(&bytes, &mut pos)? as usize;
    let p = read_u32(&bytes, &mut pos)? as usize;
    let q = read_u32(&bytes, &mut pos)? as usize;
    let mut values = Array3::<Complex64>::zeros((m, p, q));
    for v in values.iter_mut() {
        *v = read_complex(&bytes, &mut pos)?;
    }
    ZakField::new(spec, values, "file")
}

/// `TWRF`: range-field coefficient matrices, dims (S, M, P) then per fiber
/// an S-by-S row-major complex block, fibers in row-major torus order.
pub fn write_range_field_binary(field: &FiberOperatorField, path: &Path) -> Result<()> {
    let spec = field.spec();
    let s = field.size();
    let (m, p) = (spec.torus_samples(), spec.periods());
    let mut buf = Vec::with_capacity(16 + m * p * s * s * 16);
    buf.extend_from_slice(b"TWRF");
    push_u32(&mut buf, s as u32);
    push_u32(&mut buf, m as u32);
    push_u32(&mut buf, p as u32);
    for a in 0..m {
        for b in 0..p {
            let c = field.coefficient_matrix(a, b);
            for i in 0..s {
                for j in 0..s {
                    push_complex(&mut buf, c[(i, j)]);
                }
            }
        }
    }
    atomic_write(path, &buf)
}

/// Read back the coefficient blocks of a `TWRF` dump, indexed
/// `[fiber][i][j]` with fibers in row-major torus order.
pub fn read_range_field_binary(path: &Path) -> Result<(usize, usize, usize, Vec<Array2<Complex64>>)> {
    let bytes = std::fs::read(path)?;
    let mut pos = check_magic(&bytes, b"TWRF")?;
    let s = read_u32(&bytes, &mut pos)? as usize;
    let m = read_u32(&bytes, &mut pos)? as usize;
    let p = read_u32(&bytes, &mut pos)? as usize;
    let mut mats = Vec::with_capacity(m * p);
    for _ in 0..m * p {
        let mut block = Array2::<Complex64>::zeros((s, s));
        for v in block.iter_mut() {
            *v = read_complex(&bytes, &mut pos)?;
        }
        mats.push(block);
    }
    Ok((s, m, p, mats))
}
