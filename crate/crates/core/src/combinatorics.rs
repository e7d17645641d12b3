//! Log-space counting primitives. All results are natural logarithms.

use std::f64::consts::{LN_2, PI};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock, RwLock};

use crate::error::{Error, Result};

const LFACT_TABLE: usize = 1 << 16;
const STIRLING_FROM: u64 = 256;

fn lfact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LFACT_TABLE);
        t.push(0.0);
        let mut acc = 0.0f64;
        for i in 1..LFACT_TABLE as u64 {
            if i < STIRLING_FROM {
                acc += (i as f64).ln();
                t.push(acc);
            } else {
                t.push(stirling(i));
            }
        }
        t
    })
}

fn stirling(n: u64) -> f64 {
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0))));
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln() + series
}

/// ln(n!).
#[inline]
pub fn log_factorial(n: u64) -> f64 {
    if (n as usize) < LFACT_TABLE {
        lfact_table()[n as usize]
    } else {
        stirling(n)
    }
}

#[inline]
pub(crate) fn lbinom(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    log_factorial(n) - log_factorial(k) - log_factorial(n - k)
}

/// ln C(n, k); a domain error unless `0 <= k <= n`.
pub fn log_binomial(n: i64, k: i64) -> Result<f64> {
    if k < 0 || n < 0 || k > n {
        return Err(Error::Domain(format!("binomial({n}, {k}) requires 0 <= k <= n")));
    }
    Ok(lbinom(n as u64, k as u64))
}

#[inline]
pub(crate) fn lmultiset(n: u64, k: u64) -> f64 {
    debug_assert!(n >= 1);
    lbinom(n + k - 1, k)
}

/// ln of the number of multisets of size `k` over `n` symbols, ln C(n+k-1, k).
pub fn log_multiset(n: i64, k: i64) -> Result<f64> {
    if n < 1 || k < 0 {
        return Err(Error::Domain(format!("multiset({n}, {k}) requires n >= 1, k >= 0")));
    }
    Ok(lmultiset(n as u64, k as u64))
}

#[inline]
pub(crate) fn ldfact_even(x: u64) -> f64 {
    debug_assert!(x % 2 == 0);
    (x / 2) as f64 * LN_2 + log_factorial(x / 2)
}

/// ln(x!!) for even `x`.
pub fn log_double_factorial_even(x: u64) -> Result<f64> {
    if x % 2 != 0 {
        return Err(Error::Domain(format!("double factorial argument {x} is odd")));
    }
    Ok(ldfact_even(x))
}

/// Default upper bound on `n` for exact evaluation of q(n, m).
pub const DEFAULT_EXACT_CAP: usize = 10_000;

const CACHE_MAGIC: &[u8; 4] = b"MBXQ";
const CACHE_VERSION: u32 = 1;
const CACHE_FILE: &str = "qtable-v1.bin";

/// Environment variable naming a directory for the on-disk q(n, m) cache.
pub const CACHE_DIR_ENV: &str = "METABLOX_CACHE_DIR";

/// Dense table of ln q(n, m) for `n <= n_max`, `1 <= m <= m_max`.
#[derive(Debug)]
struct QData {
    n_max: usize,
    m_max: usize,
    // row-major by m: logs[(m - 1) * (n_max + 1) + n]
    logs: Vec<f64>,
}

impl QData {
    fn empty() -> QData {
        QData {
            n_max: 0,
            m_max: 0,
            logs: Vec::new(),
        }
    }

    /// Fills the table from q_m(n) = q_{m-1}(n) + q_m(n - m), counting
    /// partitions of n into parts no larger than m (conjugate to at most m
    /// parts). Values stay below f64::MAX for n up to ~1.3e5.
    fn build(n_max: usize, m_max: usize) -> QData {
        let width = n_max + 1;
        let mut logs = vec![0.0; m_max * width];
        let mut prev = vec![1.0f64; width];
        let mut cur = vec![0.0f64; width];
        for m in 1..=m_max {
            if m == 1 {
                cur.copy_from_slice(&prev);
            } else {
                for n in 0..width {
                    cur[n] = prev[n] + if n >= m { cur[n - m] } else { 0.0 };
                }
            }
            let row = &mut logs[(m - 1) * width..m * width];
            for (dst, &v) in row.iter_mut().zip(&cur) {
                *dst = v.ln();
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        QData {
            n_max,
            m_max,
            logs,
        }
    }

    #[inline]
    fn covers(&self, n: usize, m: usize) -> bool {
        n <= self.n_max && m <= self.m_max
    }

    #[inline]
    fn get(&self, n: usize, m: usize) -> f64 {
        self.logs[(m - 1) * (self.n_max + 1) + n]
    }

    fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_max as u64).to_le_bytes())?;
        w.write_all(&(self.m_max as u64).to_le_bytes())?;
        for v in &self.logs {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    fn read_from<R: Read>(mut r: R) -> io::Result<QData> {
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(invalid("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != CACHE_VERSION {
            return Err(invalid("unsupported version"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n_max = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let m_max = u64::from_le_bytes(b8) as usize;
        if m_max > n_max.max(1) || n_max > 1 << 20 {
            return Err(invalid("implausible dimensions"));
        }
        let len = m_max * (n_max + 1);
        let mut logs = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            logs.push(f64::from_bits(u64::from_le_bytes(b8)));
        }
        Ok(QData {
            n_max,
            m_max,
            logs,
        })
    }
}

#[derive(Debug)]
struct QInner {
    exact_cap: usize,
    data: RwLock<Arc<QData>>,
    cache_path: Option<PathBuf>,
}

/// Memoized ln q(n, m), the number of partitions of the integer `n` into at
/// most `m` parts.
///
/// Values with `n <= exact_cap` come from the exact recurrence evaluated in
/// double precision. Beyond the cap an asymptotic expansion is used, clamped
/// so that it never drops below the last exact value. Cloning is cheap; all
/// clones share one table.
#[derive(Debug, Clone)]
pub struct QTable {
    inner: Arc<QInner>,
}

impl Default for QTable {
    fn default() -> Self {
        QTable::new(DEFAULT_EXACT_CAP)
    }
}

impl QTable {
    pub fn new(exact_cap: usize) -> QTable {
        QTable {
            inner: Arc::new(QInner {
                exact_cap,
                data: RwLock::new(Arc::new(QData::empty())),
                cache_path: None,
            }),
        }
    }

    /// A table that loads from, and saves to, `dir/qtable-v1.bin`. A missing
    /// or unreadable cache file is ignored.
    pub fn with_cache_dir(exact_cap: usize, dir: &Path) -> QTable {
        let path = dir.join(CACHE_FILE);
        let data = fs::File::open(&path)
            .and_then(|f| QData::read_from(io::BufReader::new(f)))
            .map(|d| {
                log::debug!("loaded q cache {} ({}x{})", path.display(), d.n_max, d.m_max);
                d
            })
            .unwrap_or_else(|_| QData::empty());
        QTable {
            inner: Arc::new(QInner {
                exact_cap,
                data: RwLock::new(Arc::new(data)),
                cache_path: Some(path),
            }),
        }
    }

    /// Process-wide table, honouring the cache-directory environment variable.
    pub fn global() -> &'static QTable {
        static GLOBAL: OnceLock<QTable> = OnceLock::new();
        GLOBAL.get_or_init(|| match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) => QTable::with_cache_dir(DEFAULT_EXACT_CAP, Path::new(&dir)),
            None => QTable::default(),
        })
    }

    pub fn exact_cap(&self) -> usize {
        self.inner.exact_cap
    }

    /// Writes the current table to the cache file, if one was configured.
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.inner.cache_path else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let data = self.snapshot();
        let tmp = path.with_extension("tmp");
        data.write_to(io::BufWriter::new(fs::File::create(&tmp)?))?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn snapshot(&self) -> Arc<QData> {
        self.inner.data.read().unwrap().clone()
    }

    /// Makes sure every exact query with `n <= n_max`, `m <= m_max` is a table
    /// lookup.
    pub fn reserve(&self, n_max: usize, m_max: usize) {
        let n_max = n_max.min(self.inner.exact_cap);
        let m_max = m_max.min(n_max).max(1);
        if self.snapshot().covers(n_max, m_max) {
            return;
        }
        let mut guard = self.inner.data.write().unwrap();
        if guard.covers(n_max, m_max) {
            return;
        }
        let cap = self.inner.exact_cap;
        let new_n = n_max.max(guard.n_max).max(64).next_power_of_two().min(cap);
        let new_m = m_max.max(guard.m_max).max(16).next_power_of_two().min(new_n);
        *guard = Arc::new(QData::build(new_n, new_m));
    }

    /// A lock-free read handle over the current table.
    pub fn view(&self) -> QView {
        QView {
            data: self.snapshot(),
            table: self.clone(),
        }
    }

    /// ln q(n, m) for `m >= 1`.
    pub fn log_q(&self, n: u64, m: u64) -> f64 {
        debug_assert!(m >= 1, "q(n, m) needs m >= 1");
        let (n, m) = (n as usize, m.min(n) as usize);
        if n == 0 || m <= 1 {
            return 0.0;
        }
        if n > self.inner.exact_cap {
            return self.approx_beyond_cap(n, m);
        }
        {
            let data = self.snapshot();
            if data.covers(n, m) {
                return data.get(n, m);
            }
        }
        self.reserve(n, m);
        self.snapshot().get(n, m)
    }

    fn approx_beyond_cap(&self, n: usize, m: usize) -> f64 {
        log::debug!("q({n}, {m}) beyond exact cap; using asymptotic approximation");
        let cap = self.inner.exact_cap;
        let floor = if cap >= 1 {
            self.log_q(cap as u64, m.min(cap) as u64)
        } else {
            0.0
        };
        log_q_asymptotic(n as u64, m as u64).max(floor)
    }
}

/// Read handle returned by [`QTable::view`]; falls back to the shared table
/// for entries outside the snapshot.
#[derive(Debug, Clone)]
pub struct QView {
    data: Arc<QData>,
    table: QTable,
}

impl QView {
    #[inline]
    pub fn log_q(&self, n: u64, m: u64) -> f64 {
        let mm = m.min(n) as usize;
        if n == 0 || mm <= 1 {
            return 0.0;
        }
        if self.data.covers(n as usize, mm) {
            self.data.get(n as usize, mm)
        } else {
            self.table.log_q(n, m)
        }
    }
}

/// Asymptotic ln q(n, k) (Szekeres' uniform expansion), with the small-k
/// limit ln C(n-1, k-1) - ln k!.
pub fn log_q_asymptotic(n: u64, k: u64) -> f64 {
    let k = k.min(n);
    if n == 0 || k <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let kf = k as f64;
    if kf < nf.powf(0.25) {
        return lbinom(n - 1, k - 1) - log_factorial(k);
    }
    let u = kf / nf.sqrt();
    let v = szekeres_v(u);
    let lf = v.ln() - (-(-v).exp() * (1.0 + u * u / 2.0)).ln_1p() / 2.0 - 1.5 * LN_2 - u.ln() - PI.ln();
    let g = 2.0 * v / u - u * (-(-v).exp()).ln_1p();
    lf - nf.ln() + nf.sqrt() * g
}

fn szekeres_v(u: f64) -> f64 {
    let mut v = u;
    for _ in 0..1000 {
        let next = u * dilog(1.0 - (-v).exp()).sqrt();
        let delta = (next - v).abs();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    v
}

/// Real dilogarithm Li2(x) for x in [0, 1].
fn dilog(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return PI * PI / 6.0;
    }
    if x > 0.5 {
        return PI * PI / 6.0 - x.ln() * (1.0 - x).ln() - dilog(1.0 - x);
    }
    let mut sum = 0.0;
    let mut pow = x;
    for k in 1..200 {
        let term = pow / (k * k) as f64;
        sum += term;
        if term < 1e-18 {
            break;
        }
        pow *= x;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn factorial_small() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        assert!(close(log_factorial(5), 120f64.ln(), 1e-14));
    }

    #[test]
    fn factorial_continuity_at_stirling_switch() {
        for n in STIRLING_FROM - 3..STIRLING_FROM + 3 {
            let step = log_factorial(n + 1) - log_factorial(n);
            assert!(close(step, ((n + 1) as f64).ln(), 1e-12), "n={n}");
        }
        let n = LFACT_TABLE as u64;
        assert!(close(log_factorial(n) - log_factorial(n - 1), (n as f64).ln(), 1e-10));
    }

    #[test]
    fn binomial_values_and_domain() {
        assert_eq!(log_binomial(7, 0).unwrap(), 0.0);
        assert!(close(log_binomial(4, 2).unwrap(), 6f64.ln(), 1e-14));
        assert!(close(log_binomial(52, 5).unwrap(), 2_598_960f64.ln(), 1e-13));
        assert!(log_binomial(3, 4).is_err());
        assert!(log_binomial(3, -1).is_err());
    }

    #[test]
    fn multiset_values_and_domain() {
        assert_eq!(log_multiset(1, 17).unwrap(), 0.0);
        assert!(close(log_multiset(3, 2).unwrap(), 6f64.ln(), 1e-14));
        assert!(close(log_multiset(2, 3).unwrap(), 4f64.ln(), 1e-14));
        assert!(log_multiset(0, 3).is_err());
    }

    #[test]
    fn double_factorial() {
        assert_eq!(log_double_factorial_even(0).unwrap(), 0.0);
        assert!(close(log_double_factorial_even(6).unwrap(), 48f64.ln(), 1e-14));
        assert!(log_double_factorial_even(5).is_err());
    }

    #[test]
    fn q_small_values() {
        let qt = QTable::default();
        assert_eq!(qt.log_q(0, 5), 0.0);
        assert!(close(qt.log_q(4, 2), 3f64.ln(), 1e-14));
        assert!(close(qt.log_q(5, 5), 7f64.ln(), 1e-14));
        assert!(close(qt.log_q(6, 4), 9f64.ln(), 1e-14));
        assert_eq!(qt.log_q(9, 1), 0.0);
        assert_eq!(qt.log_q(7, 100), qt.log_q(7, 7));
    }

    #[test]
    fn view_matches_table_and_grows() {
        let qt = QTable::new(500);
        qt.reserve(20, 5);
        let view = qt.view();
        assert_eq!(view.log_q(10, 3), qt.log_q(10, 3));
        // outside the snapshot: falls back and grows the shared table
        assert_eq!(view.log_q(300, 200), qt.log_q(300, 200));
    }

    #[test]
    fn asymptotic_is_close_near_cap() {
        let qt = QTable::new(4000);
        for &(n, m) in &[(3000u64, 3000u64), (3000, 60), (4000, 500)] {
            let exact = qt.log_q(n, m);
            let approx = log_q_asymptotic(n, m);
            assert!((exact - approx).abs() / exact < 0.01, "n={n} m={m}: {exact} vs {approx}");
        }
    }

    #[test]
    fn beyond_cap_is_monotone_in_n() {
        let qt = QTable::new(200);
        let mut prev = qt.log_q(200, 50);
        for n in 201..400 {
            let cur = qt.log_q(n, 50);
            assert!(cur >= prev - 1e-9, "n={n}");
            prev = cur;
        }
    }

    #[test]
    fn dilog_known_values() {
        assert!(close(dilog(0.5), PI * PI / 12.0 - LN_2 * LN_2 / 2.0, 1e-14));
        assert!(close(dilog(1.0), PI * PI / 6.0, 1e-15));
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let qt = QTable::with_cache_dir(1000, dir.path());
        qt.reserve(100, 30);
        let expected = qt.log_q(90, 20);
        qt.save().unwrap();
        let reloaded = QTable::with_cache_dir(1000, dir.path());
        assert!(reloaded.snapshot().covers(90, 20));
        assert_eq!(reloaded.log_q(90, 20), expected);
    }

    #[test]
    fn corrupt_cache_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(CACHE_FILE), b"garbage").unwrap();
        let qt = QTable::with_cache_dir(1000, dir.path());
        assert!(close(qt.log_q(5, 5), 7f64.ln(), 1e-14));
    }
}
