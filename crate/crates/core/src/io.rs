//! CSV output, and the slice reader used by the audit.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! results give byte-identical files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{invalid, Result};
use crate::estimators::{DiscrepancyCurve, PlateauPoint, SurvivalEstimate, YaglomReport};
use crate::lossnet::{Clan, CoupledSlices, Occupation};
use crate::oracle::Horizon;
use crate::site::Site;

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

fn coords(s: &Site, dim: usize) -> Vec<String> {
    s[..dim].iter().map(|c| c.to_string()).collect()
}

/// `t,p_hat,se,n`
pub fn write_survival<W: Write>(w: W, s: &SurvivalEstimate) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "p_hat", "se", "n"])?;
    for i in 0..s.grid.len() {
        out.write_record([
            s.grid[i].to_string(),
            s.p_hat[i].to_string(),
            s.se[i].to_string(),
            s.n.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `t,value,ci_lo,ci_hi`
pub fn write_plateau<W: Write>(w: W, series: &[PlateauPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "value", "ci_lo", "ci_hi"])?;
    for p in series {
        out.write_record([
            p.t.to_string(),
            p.value.to_string(),
            p.ci_lo.to_string(),
            p.ci_hi.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `x1..xd,mean,var,target,z`
pub fn write_yaglom<W: Write>(w: W, r: &YaglomReport, dim: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = coord_header(dim);
    header.extend(["mean", "var", "target", "z"].map(String::from));
    out.write_record(&header)?;
    for c in &r.sites {
        let mut row = coords(&c.site, dim);
        row.extend([c.mean, c.var, c.target, c.z].map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `t,D_hat,se`
pub fn write_discrepancy<W: Write>(w: W, d: &DiscrepancyCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "D_hat", "se"])?;
    for i in 0..d.t.len() {
        out.write_record([
            d.t[i].to_string(),
            d.d_hat[i].to_string(),
            d.se[i].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `replica,generation,size,width_intervals,width_length`, one row per
/// generation of each clan. Replica ids are the clan positions.
pub fn write_clans<W: Write>(w: W, clans: &[Clan]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replica",
        "generation",
        "size",
        "width_intervals",
        "width_length",
    ])?;
    for (rep, c) in clans.iter().enumerate() {
        let width = c.width_length().to_string();
        let pieces = c.width.len().to_string();
        for (g, n) in c.generation_sizes.iter().enumerate() {
            out.write_record([
                rep.to_string(),
                g.to_string(),
                n.to_string(),
                pieces.clone(),
                width.clone(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One oracle table row.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRow {
    pub site: Site,
    pub quantity: String,
    pub value: f64,
    pub error_bound: f64,
}

/// `x1..xd,quantity,value,error_bound`
pub fn write_oracle<W: Write>(w: W, rows: &[OracleRow], dim: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = coord_header(dim);
    header.extend(["quantity", "value", "error_bound"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let mut row = coords(&r.site, dim);
        row.extend([
            r.quantity.clone(),
            r.value.to_string(),
            r.error_bound.to_string(),
        ]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn write_occupation<W: Write>(
    out: &mut csv::Writer<W>,
    rep: &str,
    kind: &str,
    t: &str,
    o: &Occupation,
    dim: usize,
) -> Result<()> {
    // A row with blank coordinates declares the slice even when it is empty.
    let mut marker = vec![rep.to_string(), kind.to_string(), t.to_string()];
    marker.extend(std::iter::repeat_n(String::new(), dim));
    marker.push("0".into());
    out.write_record(&marker)?;
    for (s, c) in &o.counts {
        let mut row = vec![rep.to_string(), kind.to_string(), t.to_string()];
        row.extend(coords(s, dim));
        row.push(c.to_string());
        out.write_record(&row)?;
    }
    Ok(())
}

/// `replica,kind,t,x1..xd,count` with kind one of `conditioned`, `zero`,
/// `free`; `t` is `inf` for the infinite horizon and blank for the free
/// slice.
pub fn write_slices<W: Write>(w: W, batch: &[CoupledSlices], dim: usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["replica", "kind", "t"].map(String::from).to_vec();
    header.extend(coord_header(dim));
    header.push("count".into());
    out.write_record(&header)?;
    for c in batch {
        let rep = c.replica.to_string();
        for (j, h) in c.horizons.iter().enumerate() {
            write_occupation(
                &mut out,
                &rep,
                "conditioned",
                &h.label(),
                &c.conditioned[j],
                dim,
            )?;
            write_occupation(&mut out, &rep, "zero", &h.label(), &c.zero[j], dim)?;
        }
        write_occupation(&mut out, &rep, "free", "", &c.free, dim)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_horizon(s: &str) -> Result<Horizon> {
    if s == "inf" {
        return Ok(Horizon::Infinite);
    }
    s.parse::<f64>()
        .map(Horizon::Finite)
        .map_err(|_| invalid(format!("bad horizon {s:?}")))
}

#[derive(Default)]
struct Partial {
    horizons: Vec<Horizon>,
    conditioned: BTreeMap<usize, Occupation>,
    zero: BTreeMap<usize, Occupation>,
    free: Option<Occupation>,
}

/// Reads a file written by [`write_slices`]. Replicas keep file order.
pub fn read_slices<R: Read>(r: R, dim: usize) -> Result<Vec<CoupledSlices>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut order: Vec<u64> = Vec::new();
    let mut parts: BTreeMap<u64, Partial> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != dim + 4 {
            return Err(invalid(format!(
                "slice row has {} fields, expected {}",
                rec.len(),
                dim + 4
            )));
        }
        let rep: u64 = rec[0].parse().map_err(|_| invalid("bad replica id"))?;
        let count: u32 = rec[dim + 3].parse().map_err(|_| invalid("bad count"))?;
        if !parts.contains_key(&rep) {
            order.push(rep);
        }
        let p = parts.entry(rep).or_default();
        let occ = match &rec[1] {
            "free" => p.free.get_or_insert_with(|| Occupation::new(rep, None)),
            kind @ ("conditioned" | "zero") => {
                let h = parse_horizon(&rec[2])?;
                let j = match p.horizons.iter().position(|x| *x == h) {
                    Some(j) => j,
                    None => {
                        p.horizons.push(h);
                        p.horizons.len() - 1
                    }
                };
                let map = if kind == "zero" {
                    &mut p.zero
                } else {
                    &mut p.conditioned
                };
                map.entry(j)
                    .or_insert_with(|| Occupation::new(rep, Some(h)))
            }
            other => return Err(invalid(format!("unknown slice kind {other:?}"))),
        };
        if rec[3].is_empty() {
            continue;
        }
        let mut s: Site = [0; 4];
        for k in 0..dim {
            s[k] = rec[3 + k]
                .parse()
                .map_err(|_| invalid("bad site coordinate"))?;
        }
        occ.add(s, count);
    }
    order
        .into_iter()
        .map(|rep| {
            let mut p = parts.remove(&rep).expect("replica recorded");
            let n = p.horizons.len();
            let take = |m: &mut BTreeMap<usize, Occupation>| -> Result<Vec<Occupation>> {
                (0..n)
                    .map(|j| {
                        m.remove(&j)
                            .ok_or_else(|| invalid(format!("replica {rep}: missing slice")))
                    })
                    .collect()
            };
            let conditioned = take(&mut p.conditioned)?;
            let zero = take(&mut p.zero)?;
            let free = p
                .free
                .ok_or_else(|| invalid(format!("replica {rep}: missing free slice")))?;
            Ok(CoupledSlices {
                replica: rep,
                horizons: p.horizons,
                conditioned,
                zero,
                free,
                shared: 0,
                extensions: 0,
            })
        })
        .collect()
}
