//! Binary file formats for tensor fields, masks and traces, plus a CSV
//! interchange format for tensor fields. All numbers are little-endian.
//!
//! Tensor field (`SPDF`): magic, `u16` version, `u8` p, `u8` ndims, `u32`
//! per axis, `u16`-prefixed UTF-8 subject id, `u8` group, `u8` mask flag,
//! the bit-packed activity mask when the flag is set, then `p(p+1)/2`
//! `f64` upper-triangle values per active site in raster order.
//!
//! Mask (`SPDM`): magic, `u16` version, `u8` ndims, `u32` per axis, then
//! one bit per grid site.
//!
//! Trace (`SPDT`): magic, `u16` version, `u64`-prefixed JSON header, then
//! the hyperparameter draws (`5 f64` per retained iteration), the agreement
//! bit rows, and the snapshots (`u32` iteration, `K p(p+1)/2 f64` atoms,
//! `N n` subject labels and `2 n` group labels as `u16`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::potts::{Group, Label};
use crate::sampler::{Acceptance, HyperSample, Snapshot, TraceMeta, TraceStore};
use crate::spd::packed_len;
use crate::tensor::{Dataset, TensorField};

pub const TENSOR_MAGIC: &[u8; 4] = b"SPDF";
pub const MASK_MAGIC: &[u8; 4] = b"SPDM";
pub const TRACE_MAGIC: &[u8; 4] = b"SPDT";
pub const FORMAT_VERSION: u16 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Truncated input is a format problem, not an I/O failure.
fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    read_exact_or_format(r, &mut m, "header")?;
    if &m != magic {
        return Err(format_err(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let mut v = [0u8; 2];
    read_exact_or_format(r, &mut v, "header")?;
    let version = u16::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    Ok(())
}

fn write_dims<W: Write>(w: &mut W, dims: &[usize]) -> Result<()> {
    w.write_u8(dims.len() as u8)?;
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| format_err("grid extent does not fit in u32"))?;
        w.write_u32::<LE>(d)?;
    }
    Ok(())
}

fn read_dims<R: Read>(r: &mut R) -> Result<Vec<usize>> {
    let mut buf = vec![0u8; 1];
    read_exact_or_format(r, &mut buf, "dimensions")?;
    let nd = buf[0] as usize;
    if !(1..=3).contains(&nd) {
        return Err(format_err(format!("grid must have 1-3 axes, header says {nd}")));
    }
    let mut raw = vec![0u8; 4 * nd];
    read_exact_or_format(r, &mut raw, "dimensions")?;
    Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect())
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

fn read_f64s<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; 8 * n];
    read_exact_or_format(r, &mut raw, what)?;
    Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut raw = Vec::with_capacity(8 * values.len());
    for v in values {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&raw)?;
    Ok(())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(format_err("trailing bytes after the body")),
    }
}

pub fn write_tensor_field<W: Write>(mut w: W, field: &TensorField) -> Result<()> {
    let lat = field.lattice();
    w.write_all(TENSOR_MAGIC)?;
    w.write_u16::<LE>(FORMAT_VERSION)?;
    w.write_u8(u8::try_from(field.dim()).map_err(|_| format_err("matrix dimension too large"))?)?;
    write_dims(&mut w, lat.dims())?;
    let id = field.subject_id().as_bytes();
    w.write_u16::<LE>(u16::try_from(id.len()).map_err(|_| format_err("subject id too long"))?)?;
    w.write_all(id)?;
    w.write_u8(field.group().index() as u8)?;
    if lat.is_fully_active() {
        w.write_u8(0)?;
    } else {
        w.write_u8(1)?;
        w.write_all(&pack_bits(lat.mask()))?;
    }
    write_f64s(&mut w, field.values())?;
    Ok(())
}

/// Reads a tensor field. With `strict`, every tensor must be finite and
/// positive definite.
pub fn read_tensor_field<R: Read>(mut r: R, strict: bool) -> Result<TensorField> {
    check_header(&mut r, TENSOR_MAGIC)?;
    let mut b = [0u8; 1];
    read_exact_or_format(&mut r, &mut b, "header")?;
    let p = b[0] as usize;
    if p == 0 {
        return Err(format_err("matrix dimension is zero"));
    }
    let dims = read_dims(&mut r)?;
    let mut len = [0u8; 2];
    read_exact_or_format(&mut r, &mut len, "subject id")?;
    let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact_or_format(&mut r, &mut id, "subject id")?;
    let id = String::from_utf8(id).map_err(|_| format_err("subject id is not UTF-8"))?;
    read_exact_or_format(&mut r, &mut b, "group")?;
    let group = Group::from_indicator(b[0])?;
    read_exact_or_format(&mut r, &mut b, "mask flag")?;
    let n: usize = dims.iter().product();
    let lattice = match b[0] {
        0 => Lattice::grid(&dims)?,
        1 => {
            let mut raw = vec![0u8; n.div_ceil(8)];
            read_exact_or_format(&mut r, &mut raw, "mask")?;
            Lattice::with_mask(&dims, unpack_bits(&raw, n))?
        }
        f => return Err(format_err(format!("mask flag must be 0 or 1, got {f}"))),
    };
    let values = read_f64s(&mut r, lattice.len() * packed_len(p), "tensor body")?;
    expect_eof(&mut r)?;
    TensorField::from_packed(Arc::new(lattice), p, id, group, values, strict)
}

pub fn save_tensor_field(path: impl AsRef<Path>, field: &TensorField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor_field(path: impl AsRef<Path>, strict: bool) -> Result<TensorField> {
    read_tensor_field(BufReader::new(File::open(path)?), strict)
}

/// Loads several fields into one dataset, sharing one lattice.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P], strict: bool) -> Result<Dataset> {
    let mut fields: Vec<TensorField> = Vec::with_capacity(paths.len());
    for p in paths {
        let f = load_tensor_field(p, strict)?;
        let f = match fields.first() {
            Some(first) if **first.lattice() == **f.lattice() => {
                let dim = f.dim();
                let (id, group) = (f.subject_id().to_string(), f.group());
                TensorField::from_packed(first.lattice().clone(), dim, id, group, f.values().to_vec(), false)?
            }
            _ => f,
        };
        fields.push(f);
    }
    Dataset::new(fields)
}

/// One boolean per grid site.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskFile {
    pub dims: Vec<usize>,
    pub values: Vec<bool>,
}

impl MaskFile {
    /// Spreads per-active-site flags over the grid; inactive sites are false.
    pub fn from_active(lattice: &Lattice, flags: &[bool]) -> Result<Self> {
        if flags.len() != lattice.len() {
            return Err(Error::LengthMismatch(flags.len(), lattice.len()));
        }
        let mut values = vec![false; lattice.grid_len()];
        for (a, &f) in flags.iter().enumerate() {
            values[lattice.grid_index(a)] = f;
        }
        Ok(Self { dims: lattice.dims().to_vec(), values })
    }

    /// Per-active-site flags.
    pub fn to_active(&self, lattice: &Lattice) -> Result<Vec<bool>> {
        if self.dims != lattice.dims() {
            return Err(Error::LatticeMismatch(format!(
                "mask grid {:?} does not match lattice {:?}",
                self.dims,
                lattice.dims()
            )));
        }
        Ok((0..lattice.len()).map(|a| self.values[lattice.grid_index(a)]).collect())
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}

pub fn write_mask<W: Write>(mut w: W, mask: &MaskFile) -> Result<()> {
    if mask.values.len() != mask.dims.iter().product::<usize>() {
        return Err(Error::LengthMismatch(mask.values.len(), mask.dims.iter().product()));
    }
    w.write_all(MASK_MAGIC)?;
    w.write_u16::<LE>(FORMAT_VERSION)?;
    write_dims(&mut w, &mask.dims)?;
    w.write_all(&pack_bits(&mask.values))?;
    Ok(())
}

pub fn read_mask<R: Read>(mut r: R) -> Result<MaskFile> {
    check_header(&mut r, MASK_MAGIC)?;
    let dims = read_dims(&mut r)?;
    let n = dims.iter().product();
    let mut raw = vec![0u8; usize::div_ceil(n, 8)];
    read_exact_or_format(&mut r, &mut raw, "mask body")?;
    expect_eof(&mut r)?;
    Ok(MaskFile { dims, values: unpack_bits(&raw, n) })
}

pub fn save_mask(path: impl AsRef<Path>, mask: &MaskFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mask(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskFile> {
    read_mask(BufReader::new(File::open(path)?))
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    meta: TraceMeta,
    mask: Vec<bool>,
    acceptance: Acceptance,
    interrupted: bool,
    n_retained: usize,
    n_snapshots: usize,
}

pub fn write_trace<W: Write>(mut w: W, trace: &TraceStore) -> Result<()> {
    let header = TraceHeader {
        meta: trace.meta.clone(),
        mask: trace.mask.clone(),
        acceptance: trace.acceptance,
        interrupted: trace.interrupted,
        n_retained: trace.n_retained(),
        n_snapshots: trace.snapshots.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(e.to_string()))?;
    w.write_all(TRACE_MAGIC)?;
    w.write_u16::<LE>(FORMAT_VERSION)?;
    w.write_u64::<LE>(json.len() as u64)?;
    w.write_all(&json)?;
    let draws: Vec<f64> = trace.samples.iter().flat_map(HyperSample::as_array).collect();
    write_f64s(&mut w, &draws)?;
    w.write_all(trace.agreement_bytes())?;
    for s in &trace.snapshots {
        w.write_u32::<LE>(s.iteration)?;
        write_f64s(&mut w, &s.atoms)?;
        let mut raw = Vec::with_capacity(2 * (s.g.len() + s.h.len()));
        for l in s.g.iter().chain(&s.h) {
            raw.extend_from_slice(&l.to_le_bytes());
        }
        w.write_all(&raw)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<TraceStore> {
    check_header(&mut r, TRACE_MAGIC)?;
    let mut len = [0u8; 8];
    read_exact_or_format(&mut r, &mut len, "trace header")?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 32 {
        return Err(format_err("trace header is implausibly large"));
    }
    let mut json = vec![0u8; len as usize];
    read_exact_or_format(&mut r, &mut json, "trace header")?;
    let h: TraceHeader = serde_json::from_slice(&json).map_err(|e| format_err(format!("trace header: {e}")))?;
    let n_sites = h.meta.n_sites;
    if h.mask.iter().filter(|&&b| b).count() != n_sites {
        return Err(format_err("trace mask does not match the site count"));
    }
    let draws = read_f64s(&mut r, 5 * h.n_retained, "hyperparameter draws")?;
    let samples = draws.chunks_exact(5).map(|c| HyperSample::from_array(c.try_into().unwrap())).collect();
    let mut agreement = vec![0u8; h.n_retained * n_sites.div_ceil(8)];
    read_exact_or_format(&mut r, &mut agreement, "agreement rows")?;
    let n_atoms = h.meta.config.k * packed_len(h.meta.dim);
    let n_labels = (h.meta.groups.len() + 2) * n_sites;
    let mut snapshots = Vec::with_capacity(h.n_snapshots);
    for _ in 0..h.n_snapshots {
        let mut it = [0u8; 4];
        read_exact_or_format(&mut r, &mut it, "snapshot")?;
        let atoms = read_f64s(&mut r, n_atoms, "snapshot atoms")?;
        let mut raw = vec![0u8; 2 * n_labels];
        read_exact_or_format(&mut r, &mut raw, "snapshot labels")?;
        let mut labels: Vec<Label> = raw.chunks_exact(2).map(|c| Label::from_le_bytes([c[0], c[1]])).collect();
        let h_layers = labels.split_off(h.meta.groups.len() * n_sites);
        snapshots.push(Snapshot { iteration: u32::from_le_bytes(it), atoms, g: labels, h: h_layers });
    }
    expect_eof(&mut r)?;
    TraceStore::from_parts(h.meta, h.mask, samples, agreement, snapshots, h.acceptance, h.interrupted)
}

pub fn save_trace(path: impl AsRef<Path>, trace: &TraceStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace(&mut w, trace)?;
    w.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceStore> {
    read_trace(BufReader::new(File::open(path)?))
}

/// Reads a tensor field from CSV rows of voxel coordinates (one column per
/// axis) followed by the `p(p+1)/2` upper-triangle components in row-major
/// order (`d11,d12,d13,d22,d23,d33` for p = 3). A header row is expected.
/// Voxels that do not appear are inactive.
pub fn read_tensor_csv<R: Read>(
    r: R,
    dims: &[usize],
    subject_id: &str,
    group: Group,
    strict: bool,
) -> Result<TensorField> {
    let nd = dims.len();
    let grid: usize = dims.iter().product();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let width = rdr.headers().map_err(|e| format_err(format!("CSV header: {e}")))?.len();
    let q = width
        .checked_sub(nd)
        .filter(|&q| q > 0)
        .ok_or_else(|| format_err(format!("CSV needs {nd} coordinate columns plus tensor components")))?;
    let p = (1..=8).find(|&p| packed_len(p) == q).ok_or_else(|| {
        format_err(format!("{q} component columns do not form an upper triangle"))
    })?;
    let full = Lattice::grid(dims)?;
    let mut by_grid: Vec<Option<Vec<f64>>> = vec![None; grid];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err(format!("CSV row {}: {e}", line + 2)))?;
        if rec.len() != width {
            return Err(format_err(format!("CSV row {} has {} fields, expected {width}", line + 2, rec.len())));
        }
        let coords: Vec<usize> = rec
            .iter()
            .take(nd)
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(format!("CSV row {}: bad coordinate: {e}", line + 2)))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(nd)
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(format!("CSV row {}: bad component: {e}", line + 2)))?;
        let g = full
            .grid_index_of(&coords)
            .ok_or_else(|| format_err(format!("CSV row {}: voxel {coords:?} outside the grid", line + 2)))?;
        if by_grid[g].replace(values).is_some() {
            return Err(format_err(format!("CSV row {}: voxel {coords:?} listed twice", line + 2)));
        }
    }
    let mask: Vec<bool> = by_grid.iter().map(Option::is_some).collect();
    let lattice = Arc::new(Lattice::with_mask(dims, mask)?);
    let values: Vec<f64> = by_grid.into_iter().flatten().flatten().collect();
    TensorField::from_packed(lattice, p, subject_id, group, values, strict)
}

/// Writes the CSV layout read by [`read_tensor_csv`], with columns
/// `x0,x1,..` for coordinates and `aIJ` (1-based) for components.
pub fn write_tensor_csv<W: Write>(w: W, field: &TensorField) -> Result<()> {
    let lat = field.lattice();
    let p = field.dim();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..lat.ndims()).map(|a| format!("x{a}")).collect();
    for i in 0..p {
        for j in i..p {
            header.push(format!("a{}{}", i + 1, j + 1));
        }
    }
    wtr.write_record(&header).map_err(|e| format_err(e.to_string()))?;
    for a in 0..lat.len() {
        let c = lat.coords(a);
        let row: Vec<String> = c[..lat.ndims()]
            .iter()
            .map(usize::to_string)
            .chain(field.packed(a).iter().map(|v| format!("{v:?}")))
            .collect();
        wtr.write_record(&row).map_err(|e| format_err(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sampler::{run_chain, FitConfig};
    use crate::spd::SpdMatrix;
    use crate::wishart::{invwishart_sample, InvWishartParams};

    fn random_field(lat: Arc<Lattice>, seed: u64, group: Group) -> TensorField {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let params = InvWishartParams::new(SpdMatrix::identity(3), 6.0).unwrap();
        let ts: Vec<SpdMatrix> = (0..lat.len()).map(|_| invwishart_sample(&params, &mut r)).collect();
        TensorField::new(lat, format!("subject-{seed}"), group, &ts).unwrap()
    }

    #[test]
    fn tensor_round_trip_is_bitwise() {
        for lat in [
            Lattice::grid(&[4, 5]).unwrap(),
            Lattice::with_mask(&[3, 3, 2], (0..18).map(|i| i % 4 != 1).collect()).unwrap(),
        ] {
            let f = random_field(Arc::new(lat), 3, Group::Treatment);
            let mut buf = Vec::new();
            write_tensor_field(&mut buf, &f).unwrap();
            let g = read_tensor_field(&buf[..], true).unwrap();
            assert_eq!(f, g);
            assert!(f.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn strict_rejects_indefinite_tensors() {
        let lat = Arc::new(Lattice::grid(&[2]).unwrap());
        let bad = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 0.0, 1.0];
        let f = TensorField::from_packed(lat, 3, "x", Group::Control, bad, false).unwrap();
        let mut buf = Vec::new();
        write_tensor_field(&mut buf, &f).unwrap();
        assert!(matches!(read_tensor_field(&buf[..], true), Err(Error::NotPositiveDefinite { .. })));
        assert!(read_tensor_field(&buf[..], false).is_ok());
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let f = random_field(Arc::new(Lattice::grid(&[3]).unwrap()), 1, Group::Control);
        let mut buf = Vec::new();
        write_tensor_field(&mut buf, &f).unwrap();
        assert!(matches!(read_tensor_field(&buf[..buf.len() - 3], true), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_tensor_field(&extra[..], true), Err(Error::Format(_))));
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(matches!(read_tensor_field(&magic[..], true), Err(Error::Format(_))));
        let mut version = buf;
        version[4] = 9;
        assert!(matches!(read_tensor_field(&version[..], true), Err(Error::Format(_))));
    }

    #[test]
    fn mask_round_trip() {
        let lat = Lattice::with_mask(&[3, 4], (0..12).map(|i| i != 5).collect()).unwrap();
        let flags: Vec<bool> = (0..lat.len()).map(|a| a % 3 == 0).collect();
        let m = MaskFile::from_active(&lat, &flags).unwrap();
        let mut buf = Vec::new();
        write_mask(&mut buf, &m).unwrap();
        let back = read_mask(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_active(&lat).unwrap(), flags);
        assert!(back.to_active(&Lattice::grid(&[12]).unwrap()).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let lat = Arc::new(Lattice::grid(&[4, 4]).unwrap());
        let fields = (0..4)
            .map(|i| random_field(lat.clone(), i, if i < 2 { Group::Control } else { Group::Treatment }))
            .collect();
        let data = Dataset::new(fields).unwrap();
        let cfg = FitConfig { k: 3, iterations: 40, burn_in: 10, thin: 7, ..Default::default() };
        let mut t = run_chain(&data, &cfg).unwrap();
        t.interrupted = true;
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        let back = read_trace(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(matches!(read_trace(&buf[..buf.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip_with_holes() {
        let lat = Arc::new(Lattice::with_mask(&[3, 3], (0..9).map(|i| i != 4).collect()).unwrap());
        let f = random_field(lat, 8, Group::Control);
        let mut buf = Vec::new();
        write_tensor_csv(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,a11,a12,a13,a22,a23,a33\n"));
        let back = read_tensor_csv(&buf[..], &[3, 3], "subject-8", Group::Control, true).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_errors() {
        let dup = "x,y,a,b,c,d,e,f\n0,0,1,0,0,1,0,1\n0,0,1,0,0,1,0,1\n";
        assert!(matches!(read_tensor_csv(dup.as_bytes(), &[2, 2], "s", Group::Control, true), Err(Error::Format(_))));
        let outside = "x,y,a,b,c,d,e,f\n5,0,1,0,0,1,0,1\n";
        assert!(read_tensor_csv(outside.as_bytes(), &[2, 2], "s", Group::Control, true).is_err());
        let ragged = "x,y,a,b,c,d,e\n0,0,1,0,0,1,0\n";
        assert!(read_tensor_csv(ragged.as_bytes(), &[2, 2], "s", Group::Control, true).is_err());
        let p2 = "x,a,b,c\n0,2,0.5,1\n1,1,0,1\n";
        let f = read_tensor_csv(p2.as_bytes(), &[2], "s", Group::Control, true).unwrap();
        assert_eq!(f.dim(), 2);
    }
}
