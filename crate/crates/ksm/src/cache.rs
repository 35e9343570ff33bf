//! Binary orbit cache.
//!
//! Layout: the magic `KSMORBIT`, a little-endian `u32` format version, the
//! orbit fields as little-endian `u64`/`f64` values (vectors prefixed by their
//! length), and finally the SHA-256 of everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use ksm_core::homoclinic::OrbitTrajectory;
use ksm_core::SampledPath;
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 8] = b"KSMORBIT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cache file has format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("cache file checksum does not match its contents")]
    ChecksumMismatch,
    #[error("cache file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CacheError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CacheError::Malformed("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CacheError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, CacheError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(CacheError::Malformed(format!("length {n} exceeds the file")));
        }
        Ok(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CacheError> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode_orbit(orbit: &OrbitTrajectory) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.u64(orbit.path.dim() as u64);
    w.f64s(orbit.path.times());
    w.f64s(orbit.path.states_flat());
    w.f64s(orbit.path.derivs_flat());
    w.f64s(&orbit.steady);
    w.f64s(&orbit.end_equilibrium);
    for v in [
        orbit.return_distance,
        orbit.initial_return_distance,
        orbit.peak_excursion,
        orbit.time_offset,
        orbit.delta,
    ] {
        w.f64(v);
    }
    w.f64s(&orbit.direction);
    w.u64(orbit.shots as u64);
    w.0.push(orbit.converged as u8);
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    w.0
}

pub fn decode_orbit(bytes: &[u8]) -> Result<OrbitTrajectory, CacheError> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CacheError::ChecksumMismatch);
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(CacheError::ChecksumMismatch);
    }
    if &body[..8] != MAGIC {
        return Err(CacheError::Malformed("not an orbit cache".into()));
    }
    let found = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if found != FORMAT_VERSION {
        return Err(CacheError::VersionMismatch { found, expected: FORMAT_VERSION });
    }
    let mut r = Reader { bytes: body, pos: 12 };
    let dim = r.u64()? as usize;
    let times = r.f64s()?;
    let states = r.f64s()?;
    let derivs = r.f64s()?;
    let path = SampledPath::from_parts(dim, times, states, derivs)
        .map_err(|e| CacheError::Malformed(e.to_string()))?;
    let steady = r.f64s()?;
    let end_equilibrium = r.f64s()?;
    let return_distance = r.f64()?;
    let initial_return_distance = r.f64()?;
    let peak_excursion = r.f64()?;
    let time_offset = r.f64()?;
    let delta = r.f64()?;
    let direction = r.f64s()?;
    let shots = r.u64()? as usize;
    let converged = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(CacheError::Malformed(format!("converged flag {b}"))),
    };
    if r.pos != body.len() {
        return Err(CacheError::Malformed("trailing bytes".into()));
    }
    Ok(OrbitTrajectory {
        path,
        steady,
        end_equilibrium,
        return_distance,
        initial_return_distance,
        peak_excursion,
        time_offset,
        delta,
        direction,
        shots,
        converged,
    })
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_orbit_cache(orbit: &OrbitTrajectory, path: &Path) -> Result<(), CacheError> {
    Ok(write_atomic(path, &encode_orbit(orbit))?)
}

pub fn read_orbit_cache(path: &Path) -> Result<OrbitTrajectory, CacheError> {
    decode_orbit(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_orbit() -> OrbitTrajectory {
        let mut path = SampledPath::new(3);
        for i in 0..20 {
            let t = -1.0 + 0.1 * i as f64;
            let y = [t.sin(), t.cos() * 1e-300, 1.0 / 3.0 + t];
            let dy = [t.cos(), -t.sin(), 1.0];
            path.push(t, &y, &dy);
        }
        OrbitTrajectory {
            path,
            steady: vec![0.1, -0.2, f64::MIN_POSITIVE],
            end_equilibrium: vec![0.3, 0.0, -0.0],
            return_distance: 4.2e-8,
            initial_return_distance: 3.5e-5,
            peak_excursion: 0.93,
            time_offset: 17.61,
            delta: 5e-2,
            direction: vec![0.97, 0.0, -1.4e-37],
            shots: 33,
            converged: true,
        }
    }

    fn bits(o: &OrbitTrajectory) -> Vec<u64> {
        let mut v: Vec<f64> = o.path.times().to_vec();
        v.extend(o.path.states_flat());
        v.extend(o.path.derivs_flat());
        v.extend(&o.steady);
        v.extend(&o.end_equilibrium);
        v.extend(&o.direction);
        v.extend([o.return_distance, o.initial_return_distance, o.peak_excursion, o.time_offset, o.delta]);
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let o = sample_orbit();
        let back = decode_orbit(&encode_orbit(&o)).unwrap();
        assert_eq!(bits(&o), bits(&back));
        assert_eq!((back.shots, back.converged, back.path.dim()), (33, true, 3));
    }

    #[test]
    fn truncated_or_corrupted_files_fail_the_checksum() {
        let bytes = encode_orbit(&sample_orbit());
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_orbit(&bytes[..cut]), Err(CacheError::ChecksumMismatch)));
        }
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(decode_orbit(&flipped), Err(CacheError::ChecksumMismatch)));
    }

    #[test]
    fn other_versions_are_refused() {
        let mut bytes = encode_orbit(&sample_orbit());
        bytes.truncate(bytes.len() - 32);
        bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        assert!(matches!(
            decode_orbit(&bytes),
            Err(CacheError::VersionMismatch { found, .. }) if found == FORMAT_VERSION + 1
        ));
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("orbit.bin");
        write_orbit_cache(&sample_orbit(), &p).unwrap();
        assert_eq!(bits(&read_orbit_cache(&p).unwrap()), bits(&sample_orbit()));
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
