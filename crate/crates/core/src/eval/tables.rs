//! CSV renderings of the verification tables.

use std::fmt::Write as _;

use super::{
    scores, BiasRmse, ContingencyTable, CoverageTable, DensityScatter, ErrorStats,
    IntensityHistogram, MaeBucket, Stratified,
};

fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.4}")
    }
}

/// Contingency percentages, one block of rows per surface class:
///
/// ```text
/// surface,reference,A Rain,A No Rain,B Rain,B No Rain
/// OCEAN,Rain,6.0100,1.9700,5.9300,2.0500
/// OCEAN,No Rain,1.2300,90.7900,13.1400,78.8800
/// ```
pub fn contingency_csv(estimators: &[(&str, Stratified<Option<ContingencyTable>>)]) -> String {
    let mut s = String::from("surface,reference");
    for (name, _) in estimators {
        write!(s, ",{name} Rain,{name} No Rain").unwrap();
    }
    s.push('\n');
    for (k, surface) in ["LAND", "OCEAN", "TOTAL"].iter().enumerate() {
        for (row, label) in [(0usize, "Rain"), (1, "No Rain")] {
            write!(s, "{surface},{label}").unwrap();
            for (_, strat) in estimators {
                let t = strat.rows()[k].1;
                match t {
                    Some(t) => {
                        let p = t.percentages();
                        write!(s, ",{},{}", num(p[2 * row]), num(p[2 * row + 1])).unwrap();
                    }
                    None => s.push_str(",NaN,NaN"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// POD and FAR per estimator and surface.
pub fn pod_far_csv(estimators: &[(&str, Stratified<Option<ContingencyTable>>)]) -> String {
    let mut s = String::from("estimator,OCEAN POD,OCEAN FAR,LAND POD,LAND FAR,TOTAL POD,TOTAL FAR\n");
    for (name, strat) in estimators {
        s.push_str(name);
        for t in [&strat.ocean, &strat.land, &strat.total] {
            let (pod, far) = t.map(|t| {
                let sc = scores(&t);
                (sc.pod, sc.far)
            })
            .unwrap_or((f64::NAN, f64::NAN));
            write!(s, ",{},{}", num(pod), num(far)).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Bias and RMSE over true positives, rows LAND / OCEAN / TOTAL.
pub fn bias_rmse_csv(estimators: &[(&str, Stratified<BiasRmse>)]) -> String {
    let mut s = String::from("surface");
    for (name, _) in estimators {
        write!(s, ",{name} Bias,{name} RMSE,{name} N").unwrap();
    }
    s.push('\n');
    for k in 0..3 {
        s.push_str(estimators.first().map(|e| e.1.rows()[k].0).unwrap_or(""));
        for (_, strat) in estimators {
            let b = strat.rows()[k].1;
            write!(s, ",{},{},{}", num(b.bias), num(b.rmse), b.n).unwrap();
        }
        s.push('\n');
    }
    s
}

/// False-alarm and bad-detection statistics, rows LAND / OCEAN / TOTAL.
pub fn error_stats_csv(estimators: &[(&str, Stratified<ErrorStats>)]) -> String {
    let mut s = String::from("surface,estimator,FA mean,FA RMSE,FA N,BD mean,BD N\n");
    for k in 0..3 {
        for (name, strat) in estimators {
            let (surface, e) = strat.rows()[k];
            writeln!(
                s,
                "{surface},{name},{},{},{},{},{}",
                num(e.fa_mean),
                num(e.fa_rmse),
                e.fa_n,
                num(e.bd_mean),
                e.bd_n
            )
            .unwrap();
        }
    }
    s
}

/// Band coverage by reference-intensity interval.
pub fn coverage_csv(t: &CoverageTable) -> String {
    let mut s = String::from("Rain interval mm/hr,50%,90%,N\n");
    for r in t.rows.iter().chain(std::iter::once(&t.all)) {
        writeln!(s, "{},{},{},{}", r.label, num(r.cov50), num(r.cov90), r.n).unwrap();
    }
    s
}

/// Contingency table with POD, FAR, precision and F1 for one estimator.
pub fn f1_table_csv(name: &str, t: &ContingencyTable) -> String {
    let p = t.percentages();
    let sc = scores(t);
    let mut s = String::new();
    writeln!(s, "Ref.\\{name},Positive,Negative,POD").unwrap();
    writeln!(s, "Positive,{},{},{}", num(p[0]), num(p[1]), num(sc.pod)).unwrap();
    writeln!(s, "Negative,{},{},FAR", num(p[2]), num(p[3])).unwrap();
    writeln!(s, "Precision,{},,{}", num(sc.precision), num(sc.far)).unwrap();
    writeln!(s, "F1-score,{},,", num(sc.f1)).unwrap();
    writeln!(s, "Co-located pixels,{},,", t.total()).unwrap();
    s
}

/// Bin edges with per-estimator counts and densities.
pub fn histogram_csv(edges: &[f64], hists: &[IntensityHistogram]) -> String {
    let mut s = String::from("bin_lo,bin_hi");
    for h in hists {
        write!(s, ",{0} count,{0} density", h.name).unwrap();
    }
    s.push('\n');
    for (k, e) in edges.windows(2).enumerate() {
        write!(s, "{},{}", num(e[0]), num(e[1])).unwrap();
        for h in hists {
            write!(s, ",{},{}", h.counts[k], num(h.density[k])).unwrap();
        }
        s.push('\n');
    }
    s
}

/// 2-D counts as long-form rows; regression summary in a leading comment-free
/// header block.
pub fn scatter_csv(sc: &DensityScatter) -> String {
    let nb = sc.edges.len() - 1;
    let mut s = String::new();
    writeln!(s, "slope,intercept,r2,n").unwrap();
    writeln!(s, "{},{},{},{}", num(sc.slope), num(sc.intercept), num(sc.r2), sc.n).unwrap();
    writeln!(s, "est_lo,est_hi,ref_lo,ref_hi,count").unwrap();
    for i in 0..nb {
        for j in 0..nb {
            let c = sc.counts[i * nb + j];
            if c > 0 {
                writeln!(
                    s,
                    "{},{},{},{},{c}",
                    num(sc.edges[i]),
                    num(sc.edges[i + 1]),
                    num(sc.edges[j]),
                    num(sc.edges[j + 1])
                )
                .unwrap();
            }
        }
    }
    s
}

/// One row per time bucket, one MAE column per estimator.
pub fn mae_csv(series: &[(&str, Vec<MaeBucket>)]) -> String {
    let mut labels: Vec<&str> = series
        .iter()
        .flat_map(|(_, b)| b.iter().map(|x| x.label.as_str()))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let mut s = String::from("period");
    for (name, _) in series {
        write!(s, ",{name} MAE,{name} N").unwrap();
    }
    s.push('\n');
    for l in labels {
        s.push_str(l);
        for (_, buckets) in series {
            match buckets.iter().find(|b| b.label == l) {
                Some(b) => write!(s, ",{},{}", num(b.mae), b.n).unwrap(),
                None => s.push_str(",NaN,0"),
            }
        }
        s.push('\n');
    }
    s
}
