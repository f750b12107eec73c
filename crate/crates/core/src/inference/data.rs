//! Observation datasets and their CSV format.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::models::CovarianceLayout;
use crate::network::{Network, PointOnNetwork, SiteGeometry};

use super::InferenceError;

/// One CSV row: location, time, optional response and covariates (without
/// the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: PointOnNetwork,
    pub time: f64,
    pub response: Option<f64>,
    pub covariates: Vec<f64>,
}

/// Space-time observations on a network with a linear mean design.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub net: Network,
    pub sites: Vec<PointOnNetwork>,
    /// `(site index, time)` per record.
    pub records: Vec<(usize, f64)>,
    pub response: DVector<f64>,
    /// Design matrix, intercept in the first column when built from observations.
    pub design: DMatrix<f64>,
    geometry: SiteGeometry,
    layout: CovarianceLayout,
}

/// Total order on points: by edge index, then offset.
pub fn point_order(a: &PointOnNetwork, b: &PointOnNetwork) -> Ordering {
    a.edge.cmp(&b.edge).then(a.offset.total_cmp(&b.offset))
}

impl Dataset {
    pub fn new(
        net: Network,
        sites: Vec<PointOnNetwork>,
        records: Vec<(usize, f64)>,
        response: DVector<f64>,
        design: DMatrix<f64>,
    ) -> Result<Self, InferenceError> {
        let n = records.len();
        if n == 0 {
            return Err(InferenceError::EmptyDataset);
        }
        if response.len() != n || design.nrows() != n {
            return Err(InferenceError::DimensionMismatch(format!(
                "{n} records, {} responses, {} design rows",
                response.len(),
                design.nrows()
            )));
        }
        let mut seen = HashSet::new();
        for &(s, t) in &records {
            if s >= sites.len() {
                return Err(InferenceError::DimensionMismatch(format!("site index {s} with {} sites", sites.len())));
            }
            if !t.is_finite() {
                return Err(InferenceError::InvalidInput(format!("non-finite time {t}")));
            }
            if !seen.insert((s, t.to_bits())) {
                return Err(InferenceError::DuplicateRecord { site: net.format_point(&sites[s]), time: t });
            }
        }
        for p in &sites {
            net.check_point(p)?;
        }
        let geometry = SiteGeometry::new(&net, &sites)?;
        let layout = CovarianceLayout::new(&records);
        Ok(Self { net, sites, records, response, design, geometry, layout })
    }

    /// Groups rows at identical points into sites and prepends an intercept
    /// column. Rows without a response are rejected.
    pub fn from_observations(net: Network, obs: &[Observation]) -> Result<Self, InferenceError> {
        let (sites, records) = group_sites(obs);
        let response = obs
            .iter()
            .map(|o| o.response.ok_or_else(|| InferenceError::InvalidInput("missing response".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        let design = design_matrix(obs)?;
        Self::new(net, sites, records, DVector::from_vec(response), design)
    }

    pub fn read_csv(net: Network, path: impl AsRef<Path>) -> Result<Self, InferenceError> {
        let obs = read_observations(&net, std::fs::File::open(path.as_ref()).map_err(io_err)?)?;
        Self::from_observations(net, &obs)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.design.ncols()
    }

    pub fn geometry(&self) -> &SiteGeometry {
        &self.geometry
    }

    pub fn layout(&self) -> &CovarianceLayout {
        &self.layout
    }

    /// Rows as observations, covariates without the intercept column.
    pub fn observations(&self) -> Vec<Observation> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, &(s, t))| Observation {
                point: self.sites[s],
                time: t,
                response: Some(self.response[i]),
                covariates: self.design.row(i).iter().skip(1).copied().collect(),
            })
            .collect()
    }

    /// Same data with a new response vector.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self, InferenceError> {
        if response.len() != self.len() {
            return Err(InferenceError::DimensionMismatch("response length".into()));
        }
        let mut out = self.clone();
        out.response = response;
        Ok(out)
    }

    /// Sub-dataset keeping the given sites (indices into `sites`), with sites
    /// in canonical point order and records sorted by (site, time).
    pub fn restrict_to_sites(&self, keep: &[usize]) -> Result<Self, InferenceError> {
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_by(|&a, &b| point_order(&self.sites[a], &self.sites[b]));
        kept.dedup();
        let mut new_index = vec![usize::MAX; self.sites.len()];
        for (k, &s) in kept.iter().enumerate() {
            new_index[s] = k;
        }
        let mut rows: Vec<usize> = (0..self.len()).filter(|&i| new_index[self.records[i].0] != usize::MAX).collect();
        rows.sort_by(|&i, &j| {
            new_index[self.records[i].0].cmp(&new_index[self.records[j].0]).then(self.records[i].1.total_cmp(&self.records[j].1))
        });
        let sites = kept.iter().map(|&s| self.sites[s]).collect();
        let records = rows.iter().map(|&i| (new_index[self.records[i].0], self.records[i].1)).collect();
        let response = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.response[i]));
        let design = DMatrix::from_fn(rows.len(), self.design.ncols(), |r, c| self.design[(rows[r], c)]);
        Self::new(self.net.clone(), sites, records, response, design)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), InferenceError> {
        write_observations(&self.net, &self.observations(), w)
    }
}

/// Distinct points in first-seen order and `(site, time)` per row.
pub fn group_sites(obs: &[Observation]) -> (Vec<PointOnNetwork>, Vec<(usize, f64)>) {
    let mut sites: Vec<PointOnNetwork> = Vec::new();
    let records = obs
        .iter()
        .map(|o| {
            let s = match sites.iter().position(|p| *p == o.point) {
                Some(s) => s,
                None => {
                    sites.push(o.point);
                    sites.len() - 1
                }
            };
            (s, o.time)
        })
        .collect();
    (sites, records)
}

/// Intercept column followed by the covariates of each row.
pub fn design_matrix(obs: &[Observation]) -> Result<DMatrix<f64>, InferenceError> {
    let k = obs.first().map(|o| o.covariates.len()).unwrap_or(0);
    if obs.iter().any(|o| o.covariates.len() != k) {
        return Err(InferenceError::DimensionMismatch("ragged covariate rows".into()));
    }
    Ok(DMatrix::from_fn(obs.len(), k + 1, |i, j| if j == 0 { 1.0 } else { obs[i].covariates[j - 1] }))
}

fn io_err(e: std::io::Error) -> InferenceError {
    InferenceError::Io(e.to_string())
}

fn csv_err(e: csv::Error) -> InferenceError {
    InferenceError::Csv(e.to_string())
}

/// Parse the observation CSV. Empty or `NA` responses become `None`.
pub fn read_observations<R: Read>(net: &Network, reader: R) -> Result<Vec<Observation>, InferenceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let expected = ["site_edge", "site_offset", "time", "response"];
    if headers.len() < 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(InferenceError::Csv(format!(
            "header must start with site_edge,site_offset,time,response (got {})",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = line + 2;
        let num = |i: usize| -> Result<f64, InferenceError> {
            rec[i].parse::<f64>().map_err(|_| InferenceError::Csv(format!("row {row}: cannot parse '{}' as a number", &rec[i])))
        };
        let edge = net
            .edge_index(&rec[0])
            .ok_or_else(|| InferenceError::Csv(format!("row {row}: unknown edge '{}'", &rec[0])))?;
        let point = PointOnNetwork::new(edge, num(1)?);
        net.check_point(&point)?;
        let response = match &rec[3] {
            "" | "NA" | "na" | "NaN" => None,
            _ => Some(num(3)?),
        };
        let covariates = (4..rec.len()).map(num).collect::<Result<Vec<_>, _>>()?;
        out.push(Observation { point, time: num(2)?, response, covariates });
    }
    Ok(out)
}

pub fn write_observations<W: Write>(net: &Network, obs: &[Observation], w: W) -> Result<(), InferenceError> {
    let mut wtr = csv::Writer::from_writer(w);
    let k = obs.first().map(|o| o.covariates.len()).unwrap_or(0);
    let mut header: Vec<String> = ["site_edge", "site_offset", "time", "response"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|i| format!("cov{i}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for o in obs {
        let mut row = vec![
            net.edge(o.point.edge).id.clone(),
            o.point.offset.to_string(),
            o.time.to_string(),
            o.response.map(|r| r.to_string()).unwrap_or_default(),
        ];
        row.extend(o.covariates.iter().map(|c| c.to_string()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}
