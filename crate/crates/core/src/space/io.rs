use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, MetricMeasureSpace, MetricMode};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceFormat {
    Json,
    Csv,
}

impl SpaceFormat {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Vec<f64>>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: u64,
    pub b: u64,
    pub len: f64,
}

/// On-disk JSON layout of a space.
///
/// Matrix rows follow the order of `points` as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub mode: MetricMode,
    #[serde(default)]
    pub normalize_weights: bool,
    pub points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl SpaceFile {
    pub fn into_space(self) -> Result<MetricMeasureSpace> {
        let n = self.points.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.points[i].id);
        let ids: Vec<u64> = order.iter().map(|&i| self.points[i].id).collect();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(LabError::Parse("duplicate point id".into()));
        }
        let mut weights: Vec<f64> = order.iter().map(|&i| self.points[i].weight).collect();
        for (k, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(LabError::NonPositiveWeight { id: ids[k], weight: w });
            }
        }
        if self.normalize_weights {
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let coords = if self.points.iter().all(|p| p.coord.is_some()) && n > 0 {
            Some(order.iter().map(|&i| self.points[i].coord.clone().unwrap()).collect())
        } else if self.points.iter().any(|p| p.coord.is_some()) {
            return Err(LabError::Parse("either all points or none carry coordinates".into()));
        } else {
            None
        };
        let index = |id: u64| -> Result<usize> {
            ids.binary_search(&id).map_err(|_| LabError::Parse(format!("edge references unknown point {id}")))
        };
        let edges = self
            .edges
            .iter()
            .map(|e| Ok(Edge { a: index(e.a)?, b: index(e.b)?, len: e.len }))
            .collect::<Result<Vec<_>>>()?;
        let matrix = match self.matrix {
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(LabError::Parse(format!("matrix must be {n} x {n}")));
                }
                let mut m = vec![0.0; n * n];
                for (a, &ia) in order.iter().enumerate() {
                    for (b, &ib) in order.iter().enumerate() {
                        m[a * n + b] = rows[ia][ib];
                    }
                }
                Some(m)
            }
            None => None,
        };
        MetricMeasureSpace::from_parts(ids, coords, self.mode, weights, edges, matrix)
    }
}

/// Reads a space from a JSON space file or a CSV point cloud
/// (header `x1,..,xn,weight`; ids are row numbers; euclidean metric).
pub fn load_space(path: impl AsRef<Path>, format: SpaceFormat) -> Result<MetricMeasureSpace> {
    let path = path.as_ref();
    match format {
        SpaceFormat::Json => {
            let text = std::fs::read_to_string(path)?;
            parse_space_json(&text)
        }
        SpaceFormat::Csv => {
            let reader = csv::Reader::from_path(path).map_err(|e| LabError::Parse(e.to_string()))?;
            parse_space_csv(reader)
        }
    }
}

pub(crate) fn parse_space_json(text: &str) -> Result<MetricMeasureSpace> {
    let file: SpaceFile = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
    file.into_space()
}

fn parse_space_csv<R: std::io::Read>(mut reader: csv::Reader<R>) -> Result<MetricMeasureSpace> {
    let headers = reader.headers().map_err(|e| LabError::Parse(e.to_string()))?.clone();
    let weight_col = headers
        .iter()
        .position(|h| h.trim() == "weight")
        .ok_or_else(|| LabError::Parse("csv needs a 'weight' column".into()))?;
    let coord_cols: Vec<usize> =
        headers.iter().enumerate().filter(|(_, h)| h.trim().starts_with('x')).map(|(i, _)| i).collect();
    if coord_cols.is_empty() {
        return Err(LabError::Parse("csv needs coordinate columns x1..xn".into()));
    }
    let num =
        |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|_| LabError::Parse(format!("bad number '{s}'"))) };
    let mut points = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LabError::Parse(e.to_string()))?;
        let coord = coord_cols.iter().map(|&c| num(&rec[c])).collect::<Result<Vec<_>>>()?;
        points.push(PointRecord { id: row as u64, coord: Some(coord), weight: num(&rec[weight_col])? });
    }
    SpaceFile { mode: MetricMode::Euclidean, normalize_weights: false, points, edges: vec![], matrix: None }
        .into_space()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_three_collinear_points() {
        let s = parse_space_json(
            r#"{"mode":"euclidean","points":[
                {"id":0,"coord":[0.0],"weight":1},
                {"id":1,"coord":[0.6],"weight":1},
                {"id":2,"coord":[1.2],"weight":1}]}"#,
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.total_mass(), 3.0);
    }

    #[test]
    fn json_graph_path_shortest_path() {
        let s = parse_space_json(
            r#"{"mode":"graph-shortest-path","points":[
                {"id":0,"weight":1},{"id":1,"weight":1},{"id":2,"weight":1}],
                "edges":[{"a":0,"b":1,"len":1},{"a":1,"b":2,"len":1}]}"#,
        )
        .unwrap();
        assert_eq!(s.dist(0, 2), 2.0);
    }

    #[test]
    fn matrix_triangle_violation() {
        let r = parse_space_json(
            r#"{"mode":"explicit-matrix","points":[
                {"id":0,"weight":1},{"id":1,"weight":1},{"id":2,"weight":1}],
                "matrix":[[0,1,3],[1,0,1],[3,1,0]]}"#,
        );
        assert!(matches!(r, Err(LabError::TriangleViolation { .. })));
    }

    #[test]
    fn matrix_asymmetry_and_weights() {
        let r = parse_space_json(
            r#"{"mode":"explicit-matrix","points":[{"id":0,"weight":1},{"id":1,"weight":1}],
                "matrix":[[0,1],[2,0]]}"#,
        );
        assert!(matches!(r, Err(LabError::Asymmetric { .. })));
        let r = parse_space_json(r#"{"mode":"euclidean","points":[{"id":0,"coord":[0],"weight":0}]}"#);
        assert!(matches!(r, Err(LabError::NonPositiveWeight { .. })));
        assert!(matches!(parse_space_json("{not json"), Err(LabError::Parse(_))));
    }

    #[test]
    fn normalization_only_on_request() {
        let s = parse_space_json(
            r#"{"mode":"euclidean","normalize_weights":true,"points":[
                {"id":5,"coord":[0],"weight":1},{"id":2,"coord":[1],"weight":3}]}"#,
        )
        .unwrap();
        assert_eq!(s.ids(), &[2, 5]);
        assert_eq!(s.weights(), &[0.75, 0.25]);
    }

    #[test]
    fn matrix_rows_follow_file_order() {
        let s = parse_space_json(
            r#"{"mode":"explicit-matrix","points":[
                {"id":2,"weight":1},{"id":0,"weight":1},{"id":1,"weight":1}],
                "matrix":[[0,2,1],[2,0,1.5],[1,1.5,0]]}"#,
        )
        .unwrap();
        // ids sorted to [0, 1, 2]; d(0, 2) = 2, d(0, 1) = 1.5, d(1, 2) = 1
        assert_eq!(s.dist(0, 2), 2.0);
        assert_eq!(s.dist(0, 1), 1.5);
        assert_eq!(s.dist(1, 2), 1.0);
    }

    #[test]
    fn csv_point_cloud() {
        let data = "x1,x2,weight\n0,0,1\n3,4,2\n";
        let s = parse_space_csv(csv::Reader::from_reader(data.as_bytes())).unwrap();
        assert_eq!(s.dist(0, 1), 5.0);
        assert_eq!(s.total_mass(), 3.0);
    }

    #[test]
    fn file_round_trip() {
        let s = crate::space::generate_space(&crate::space::SpaceKind::Circle { n: 6, radius: 2.0 }).unwrap();
        let text = serde_json::to_string(&s.to_file()).unwrap();
        let t = parse_space_json(&text).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((s.dist(i, j) - t.dist(i, j)).abs() < 1e-12);
            }
        }
    }
}
