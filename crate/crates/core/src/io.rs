//! File formats: sample-frame CSV (`id,y,d,t,f`), real-data node tables
//! (`id,y,d`), and effect-table CSV.
//!
//! All CSV files are comma separated with a mandatory header. Lines starting
//! with `#` are metadata comments and precede the header. Reals are written
//! with 17 significant digits so they parse back to the same `f64`.

use std::io::{Read, Write};

use crate::dgp::{frame_from_observations, FrameRow, SampleFrame};
use crate::effects::EffectTable;
use crate::error::{Error, Result};
use crate::graph::{csv_reader, ingest_network};

pub const FRAME_HEADER: [&str; 5] = ["id", "y", "d", "t", "f"];
pub const EFFECT_HEADER: [&str; 8] = ["f", "t", "delta0", "tau0", "tau_pm", "tau1", "delta_t", "baseline"];

pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn write_comments<W: Write>(w: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// Writes the frame. `n_total` is recorded as a `# n_total=` comment so the
/// file parses back into an identical frame.
pub fn write_frame_csv<W: Write>(frame: &SampleFrame, mut w: W, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "# n_total={}", frame.n_total)?;
    writeln!(w, "{}", FRAME_HEADER.join(","))?;
    for r in &frame.rows {
        writeln!(w, "{},{},{},{},{}", r.id, fmt_real(r.y), r.d, r.t, r.f)?;
    }
    Ok(())
}

fn header_positions(headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::Parse {
                row: 0,
                msg: format!("missing `{name}` column in header"),
            })
        })
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("cannot parse `{raw}` as {name}"),
    })
}

pub fn read_frame_csv<R: Read>(mut source: R) -> Result<SampleFrame> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let declared_total = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("n_total="))
        .map(|v| {
            v.trim().parse::<usize>().map_err(|_| Error::Parse {
                row: 0,
                msg: format!("bad n_total comment `{v}`"),
            })
        })
        .transpose()?;

    let mut rdr = csv_reader(text.as_bytes());
    let cols = header_positions(rdr.headers()?, &FRAME_HEADER)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let r = FrameRow {
            id: field(&rec, cols[0], row, "id")?,
            y: field(&rec, cols[1], row, "y")?,
            d: field(&rec, cols[2], row, "d")?,
            t: field(&rec, cols[3], row, "t")?,
            f: field(&rec, cols[4], row, "f")?,
        };
        if r.d > 1 || r.f < 1 || r.t > r.f || !r.y.is_finite() {
            return Err(Error::Parse {
                row,
                msg: format!("need finite y, d in {{0,1}}, f >= 1 and t <= f; got d={}, t={}, f={}", r.d, r.t, r.f),
            });
        }
        rows.push(r);
    }
    let n_total = declared_total.unwrap_or(rows.len());
    SampleFrame::new(rows, n_total)
}

/// Real-data mode: `nodes` has columns `id,y,d`, `edges` has `src,dst`.
/// Treated-friend counts are computed from the network and units without
/// friends are dropped.
pub fn read_observed_frame(nodes: &str, edges: &str) -> Result<SampleFrame> {
    let ingested = ingest_network(nodes.as_bytes(), edges.as_bytes())?;
    let mut rdr = csv_reader(nodes.as_bytes());
    let cols = header_positions(rdr.headers()?, &["y", "d"])?;
    let (mut y, mut d) = (Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let yv: f64 = field(&rec, cols[0], row, "y")?;
        let dv: u8 = field(&rec, cols[1], row, "d")?;
        if dv > 1 || !yv.is_finite() {
            return Err(Error::Parse {
                row,
                msg: "y must be finite and d must be 0 or 1".into(),
            });
        }
        y.push(yv);
        d.push(dv);
    }
    frame_from_observations(&ingested.network, &ingested.ids, &y, &d)
}

pub fn write_effect_table_csv<W: Write>(table: &EffectTable, mut w: W, comments: &[String]) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{}", EFFECT_HEADER.join(","))?;
    for e in &table.entries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.f,
            e.t,
            fmt_opt(e.delta0),
            fmt_opt(e.tau0),
            fmt_opt(e.tau_pm),
            fmt_opt(e.tau1),
            fmt_opt(e.delta_t),
            fmt_opt(e.baseline)
        )?;
    }
    Ok(())
}
