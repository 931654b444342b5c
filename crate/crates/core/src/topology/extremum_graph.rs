use super::{all_termini, classify_flags, CpFlags, CriticalPoint, Polarity};
use crate::grid::{ScalarField, VertexId};
use crate::{par, Error, Result};

/// Saddle–extremum edges of one polarity, sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtremumGraph {
    polarity: Polarity,
    extrema: Vec<VertexId>,
    saddles: Vec<VertexId>,
    edges: Vec<(VertexId, VertexId)>,
}

impl ExtremumGraph {
    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// `(saddle, extremum)` pairs, sorted.
    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    /// All extrema of this polarity, including ones without edges.
    pub fn extrema(&self) -> &[VertexId] {
        &self.extrema
    }

    /// All saddles of this polarity, ascending by id.
    pub fn saddles(&self) -> &[VertexId] {
        &self.saddles
    }

    /// Extrema connected to `saddle`.
    pub fn extrema_of(&self, saddle: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        let start = self.edges.partition_point(|&(s, _)| s < saddle);
        self.edges[start..]
            .iter()
            .take_while(move |&&(s, _)| s == saddle)
            .map(|&(_, e)| e)
    }
}

/// Builds the extremum graph: saddle `s` is linked to extremum `e` when a
/// steepest path started at a lower (upper, for `Split`) neighbour of `s`
/// ends in `e`.
pub fn build_extremum_graph(
    field: &ScalarField,
    cps: &[CriticalPoint],
    polarity: Polarity,
) -> Result<ExtremumGraph> {
    let mut flags = vec![CpFlags::REGULAR; field.len()];
    for cp in cps {
        field.grid().check(cp.vertex.index())?;
        flags[cp.vertex.index()] = cp.flags();
    }
    if flags != classify_flags(field) {
        return Err(Error::InvalidArgument(
            "critical points do not belong to this field".into(),
        ));
    }
    Ok(extremum_graph_from_flags(field, &flags, polarity))
}

pub(crate) fn extremum_graph_from_flags(
    field: &ScalarField,
    flags: &[CpFlags],
    polarity: Polarity,
) -> ExtremumGraph {
    let termini = all_termini(field, polarity.direction());
    extremum_graph_with_termini(field, flags, polarity, &termini)
}

pub(crate) fn extremum_graph_with_termini(
    field: &ScalarField,
    flags: &[CpFlags],
    polarity: Polarity,
    termini: &[u32],
) -> ExtremumGraph {
    let grid = field.grid();
    let values = field.values();
    let saddle_flag = polarity.saddle_flag();
    let extremum_flag = polarity.extremum_flag();

    let saddles: Vec<VertexId> = (0..field.len())
        .filter(|&v| flags[v].contains(saddle_flag))
        .map(VertexId::from)
        .collect();
    let extrema: Vec<VertexId> = (0..field.len())
        .filter(|&v| flags[v].contains(extremum_flag))
        .map(VertexId::from)
        .collect();

    let edges = par::flat_map_range(saddles.len(), |i, out| {
        let s = saddles[i].index();
        let mut ends: Vec<u32> = grid
            .neighbors_iter(s)
            .filter(|&k| polarity.before(values, k, s))
            .map(|k| termini[k])
            .collect();
        ends.sort_unstable();
        ends.dedup();
        out.extend(ends.into_iter().map(|e| (VertexId::from(s), VertexId(e))));
    });

    ExtremumGraph {
        polarity,
        extrema,
        saddles,
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{classify_critical_points, steepest_terminus};

    fn graph(f: &ScalarField, p: Polarity) -> ExtremumGraph {
        build_extremum_graph(f, &classify_critical_points(f), p).unwrap()
    }

    #[test]
    fn single_basin_has_no_join_edges() {
        let f = ScalarField::from_fn(&[5, 5], |c| {
            let (y, x) = (c[1] as f64 - 2.0, c[2] as f64 - 2.0);
            x * x + y * y
        })
        .unwrap();
        let g = graph(&f, Polarity::Join);
        assert!(g.edges().is_empty());
        assert_eq!(g.extrema(), &[VertexId(12)]);
    }

    #[test]
    fn two_basins_one_saddle() {
        // 1 x 5 profile: minima at 0 and 4, join saddle at 2
        let f = ScalarField::new(&[1, 5], vec![0.0, 1.0, 2.0, 1.5, 0.5]).unwrap();
        let g = graph(&f, Polarity::Join);
        assert_eq!(
            g.edges(),
            &[(VertexId(2), VertexId(0)), (VertexId(2), VertexId(4))]
        );
    }

    #[test]
    fn saddle_reaching_two_minima_connects_both() {
        // on a path, interior maxima act as join saddles: 2 separates the
        // basins of 0 and 3
        let f =
            ScalarField::new(&[1, 9], vec![1.0, 2.0, 3.0, 1.5, 4.0, 0.5, 0.0, 2.5, 0.8]).unwrap();
        let g = graph(&f, Polarity::Join);
        let i: Vec<VertexId> = g.extrema_of(VertexId(2)).collect();
        assert_eq!(i, vec![VertexId(0), VertexId(3)]);
    }

    #[test]
    fn matches_enumerated_descents() {
        let f = crate::synth::gaussian_mix(&[12, 10], 5, 11).unwrap();
        let cps = classify_critical_points(&f);
        for p in Polarity::BOTH {
            let g = build_extremum_graph(&f, &cps, p).unwrap();
            let mut expect = Vec::new();
            for cp in &cps {
                let is_saddle = match p {
                    Polarity::Join => cp.is_join_saddle,
                    Polarity::Split => cp.is_split_saddle,
                };
                if !is_saddle {
                    continue;
                }
                let s = cp.vertex.index();
                for k in f.grid().neighbors_iter(s) {
                    if p.before(f.values(), k, s) {
                        let e = steepest_terminus(&f, VertexId::from(k), p.direction()).unwrap();
                        expect.push((cp.vertex, e));
                    }
                }
            }
            expect.sort();
            expect.dedup();
            assert_eq!(g.edges(), expect.as_slice());
        }
    }

    #[test]
    fn rejects_foreign_critical_points() {
        let f = ScalarField::new(&[1, 5], vec![0.0, 1.0, 2.0, 1.5, 0.5]).unwrap();
        let other = ScalarField::new(&[1, 5], vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let cps = classify_critical_points(&other);
        assert!(build_extremum_graph(&f, &cps, Polarity::Join).is_err());
    }
}
