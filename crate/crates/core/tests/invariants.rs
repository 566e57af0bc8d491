use markpower::agg::{
    income_shares, markup_backout, profit_share_domar, profit_share_theorem, rents_decomposition, TheoremFirm,
    TheoremMode,
};
use markpower::dynamics::{hhi_of_sales, markup_change_decomposition, MarkupObs, Reference};
use markpower::oracle::{
    gen_cobb_douglas_panel, gen_network_economy, FirmPrimitives, InputPrimitive, NetworkSpec, SyntheticSpec,
    Topology,
};
use markpower::panel::{clean_sample, CleaningConfig, FirmYear, PanelDataset};
use proptest::prelude::*;

fn primitives() -> impl Strategy<Value = FirmPrimitives> {
    (
        0.5f64..100.0,
        1.0f64..3.0,
        prop::collection::vec((0.05f64..0.6, 0.3f64..=1.0), 1..5),
        0.0f64..0.5,
    )
        .prop_map(|(sale, markup, inputs, fc_ratio)| FirmPrimitives {
            sale,
            markup,
            inputs: inputs.into_iter().map(|(theta, nu)| InputPrimitive { theta, nu }).collect(),
            fc_ratio,
        })
}

fn theorem_firm() -> impl Strategy<Value = TheoremFirm> {
    (0.01f64..10.0, 0.8f64..3.0, 0.6f64..1.4, 1.0f64..1.5).prop_map(|(omega, markup, rs, fc_adj)| TheoremFirm {
        id: String::new(),
        omega,
        markup,
        rs,
        fc_adj,
        rs_adj: rs * fc_adj,
        monopsony: 0.0,
    })
}

fn year(prefix: &'static str) -> impl Strategy<Value = Vec<MarkupObs>> {
    prop::collection::btree_map(0u8..30, (0.01f64..100.0, 0.7f64..4.0), 1..20).prop_map(move |m| {
        m.into_iter()
            .map(|(id, (sale, markup))| MarkupObs {
                firm_id: format!("{prefix}{id}"),
                sale,
                markup,
            })
            .collect()
    })
}

fn harmonic(obs: &[MarkupObs]) -> f64 {
    let total: f64 = obs.iter().map(|o| o.sale).sum();
    1.0 / obs.iter().map(|o| o.sale / total / o.markup).sum::<f64>()
}

fn firm_year() -> impl Strategy<Value = (u8, i32, Option<u16>, [Option<f64>; 6])> {
    let cell = prop::option::weighted(0.95, -2.0f64..100.0);
    (
        0u8..40,
        2000i32..2006,
        prop::sample::select(vec![Some(31u16), Some(51), Some(62), None]),
        [cell.clone(), cell.clone(), cell.clone(), cell.clone(), cell.clone(), cell],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn firm_measures_stay_in_range(p in primitives()) {
        let fc_adj = p.fc_adj().unwrap();
        let s = p.profit_rate().unwrap();
        prop_assert!(fc_adj >= 1.0);
        prop_assert!(s <= 1.0);
        let a = p.accounts();
        prop_assert!((s - a.profit / p.sale).abs() < 1e-12);
    }

    #[test]
    fn networks_close_and_aggregate_consistently(
        seed in 0u64..100_000,
        n in 1usize..=12,
        density in 0.0f64..0.9,
        markdowns in any::<bool>(),
    ) {
        let spec = NetworkSpec {
            seed,
            n_nodes: n,
            topology: Topology::RandomAcyclic { density },
            markdown_range: markdowns.then_some((0.6, 1.0)),
            ..Default::default()
        };
        let e = gen_network_economy(&spec).unwrap();
        prop_assert!(e.truth.check_closure(1e-12).is_ok());
        prop_assert!(e.chi() >= 1.0 - 1e-12);
        let m = e.firm_measures().unwrap();
        let sales: Vec<f64> = m.iter().map(|f| f.sale).collect();
        let rates: Vec<f64> = m.iter().map(|f| f.profit_rate).collect();
        let domar = profit_share_domar(&sales, &rates, e.gdp()).unwrap();
        let firms: Vec<TheoremFirm> = m.iter().map(TheoremFirm::from).collect();
        let thm = profit_share_theorem(e.chi(), &firms, TheoremMode::Full).unwrap().profit_share;
        prop_assert!((domar - e.profit_share()).abs() < 1e-10);
        prop_assert!((thm - e.profit_share()).abs() < 1e-10);
    }

    #[test]
    fn corollaries_nest(mut firms in prop::collection::vec(theorem_firm(), 1..30), chi in 1.0f64..3.0) {
        let share = |f: &[TheoremFirm], mode| profit_share_theorem(chi, f, mode).unwrap().profit_share;
        prop_assert!((share(&firms, TheoremMode::Full) - share(&firms, TheoremMode::Cor1)).abs() < 1e-12);
        for f in &mut firms {
            f.fc_adj = 1.0;
            f.rs_adj = f.rs;
        }
        prop_assert!((share(&firms, TheoremMode::Cor1) - share(&firms, TheoremMode::Cor2)).abs() < 1e-12);
        for f in &mut firms {
            f.rs = 1.0;
            f.rs_adj = 1.0;
        }
        let cor3 = share(&firms, TheoremMode::Cor3);
        prop_assert!((share(&firms, TheoremMode::Cor2) - cor3).abs() < 1e-12);
        let mu = profit_share_theorem(chi, &firms, TheoremMode::Cor3).unwrap().mu_hsw;
        prop_assert!((markup_backout(chi, cor3).unwrap() - mu).abs() < 1e-12 * mu.max(1.0));
    }

    #[test]
    fn rents_components_sum_to_profit_share(
        firms in prop::collection::vec(theorem_firm(), 1..30),
        chi in 1.0f64..3.0,
    ) {
        let c = profit_share_theorem(chi, &firms, TheoremMode::Cor1).unwrap();
        let d = rents_decomposition(chi, c.mu_hsw, c.rs_adj_bar, c.cov_rs_invmu).unwrap();
        prop_assert!((d.total() - c.profit_share).abs() < 1e-12);
    }

    #[test]
    fn income_shares_sum_to_one(labor in 0.1f64..10.0, gdp in 1.0f64..20.0, profit in -0.2f64..0.6) {
        let s = income_shares(labor, gdp, profit).unwrap();
        prop_assert!((s.labor + s.capital + s.profit - 1.0).abs() < 1e-12);
        prop_assert_eq!(s.profit, profit);
    }

    #[test]
    fn decomposition_is_additive(prev in year("f"), cur in year("f"), c in 0.2f64..1.5) {
        let delta = harmonic(&cur) - harmonic(&prev);
        for reference in [Reference::Midpoint, Reference::Custom(c)] {
            let d = markup_change_decomposition(&prev, &cur, (0, 1), reference).unwrap();
            prop_assert!((d.within + d.between + d.net_entry - delta).abs() < 1e-12);
            prop_assert!(d.residual.abs() < 1e-12);
            prop_assert!((d.delta_mu - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn hhi_bounds_and_scale_invariance(sales in prop::collection::vec(0.001f64..1e3, 1..50), k in 1e-3f64..1e3) {
        let h = hhi_of_sales(&sales).unwrap();
        let n = sales.len() as f64;
        prop_assert!(h >= 1.0 / n - 1e-12 && h <= 1.0 + 1e-12);
        let scaled: Vec<f64> = sales.iter().map(|s| s * k).collect();
        prop_assert!((hhi_of_sales(&scaled).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn cleaning_accounts_for_every_row(rows in prop::collection::vec(firm_year(), 1..80)) {
        let mut obs: Vec<FirmYear> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for (id, year, industry, [sale, cogs, sga, rd, ppegt, capx]) in rows {
            if !seen.insert((id, year)) {
                continue;
            }
            let mut o = FirmYear::new(format!("f{id}"), year, industry);
            o.sale = sale;
            o.cogs = cogs;
            o.sga = sga;
            o.rd = rd;
            o.ppegt = ppegt;
            o.capx = capx;
            obs.push(o);
        }
        let data = PanelDataset::new(obs, Vec::new()).unwrap();
        let (clean, report) = match clean_sample(&data, &CleaningConfig::default()) {
            Err(markpower::Error::EmptySample) => return Ok(()),
            r => r.unwrap(),
        };
        prop_assert_eq!(report.rows_in, data.len());
        prop_assert_eq!(report.rows_out, clean.len());
        prop_assert_eq!(report.dropped_total(), report.rows_in - report.rows_out);
        for o in clean.observations() {
            for v in [o.sale, o.cogs, o.sga, o.rd, o.capx] {
                prop_assert!(v.is_some_and(|x| x >= 0.0));
            }
            prop_assert!(o.industry.is_some());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_panels_close(seed in 0u64..10_000, noise in 0.0f64..0.2, churn in 0.0f64..0.5) {
        let spec = SyntheticSpec {
            seed,
            n_firms: 20,
            n_years: 6,
            noise_sd: noise,
            churn,
            ..Default::default()
        };
        let (data, truth) = gen_cobb_douglas_panel(&spec).unwrap();
        prop_assert!(truth.check_closure(1e-10).is_ok());
        prop_assert!(!data.is_empty());
        for o in data.observations() {
            prop_assert!(o.sale.is_some_and(|s| s > 0.0));
        }
    }
}
