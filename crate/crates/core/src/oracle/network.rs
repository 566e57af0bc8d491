use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FirmPrimitives, InputPrimitive, TruthFirm, TruthRecord, TruthTotals};
use crate::error::{Error, Result};
use crate::mpower::FirmMeasures;
use crate::numeric::pairwise_sum;

/// Largest economy the generator builds.
pub const MAX_NODES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// No intermediate inputs.
    Isolated,
    /// Node `i` buys only from node `i + 1`.
    Vertical,
    /// Each pair `i < j` is linked (i buys from j) with probability `density`.
    RandomAcyclic { density: f64 },
    /// Explicit `(buyer, supplier)` links; rejected if they form a cycle.
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub seed: u64,
    pub n_nodes: usize,
    pub topology: Topology,
    pub markup_range: (f64, f64),
    /// `None` for price-taking input markets.
    pub markdown_range: Option<(f64, f64)>,
    /// Fixed costs as a multiple of variable costs.
    pub fc_ratio_range: (f64, f64),
    pub rs_range: (f64, f64),
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            seed: 0,
            n_nodes: 10,
            topology: Topology::RandomAcyclic { density: 0.3 },
            markup_range: (1.0, 1.6),
            markdown_range: Some((0.7, 1.0)),
            fc_ratio_range: (0.0, 0.3),
            rs_range: (0.8, 1.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supplier {
    pub node: usize,
    pub input: InputPrimitive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkNode {
    pub id: String,
    /// Final consumption of this node's output.
    pub consumption: f64,
    pub markup: f64,
    pub labor: InputPrimitive,
    pub capital: InputPrimitive,
    pub suppliers: Vec<Supplier>,
    pub fc_ratio: f64,
}

/// A solved production network: every node's sales, costs and profits.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkEconomy {
    pub nodes: Vec<NetworkNode>,
    pub sales: Vec<f64>,
    pub truth: TruthRecord,
}

impl NetworkNode {
    fn primitives(&self, sale: f64) -> FirmPrimitives {
        let mut inputs = vec![self.labor, self.capital];
        inputs.extend(self.suppliers.iter().map(|s| s.input));
        FirmPrimitives {
            sale,
            markup: self.markup,
            inputs,
            fc_ratio: self.fc_ratio,
        }
    }
}

/// Orders nodes so that every buyer precedes its suppliers.
fn downstream_order(n: usize, nodes: &[NetworkNode]) -> Result<Vec<usize>> {
    let mut pending_buyers = vec![0usize; n];
    for node in nodes {
        for s in &node.suppliers {
            pending_buyers[s.node] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| pending_buyers[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for s in &nodes[i].suppliers {
            pending_buyers[s.node] -= 1;
            if pending_buyers[s.node] == 0 {
                ready.push(s.node);
            }
        }
    }
    if order.len() < n {
        return Err(Error::UnsupportedTopology("supply links contain a cycle".into()));
    }
    Ok(order)
}

/// Solves sales from final demand and input spending, then records the
/// accounting of every node.
pub fn solve_network(nodes: Vec<NetworkNode>) -> Result<NetworkEconomy> {
    let n = nodes.len();
    for (i, node) in nodes.iter().enumerate() {
        for s in &node.suppliers {
            if s.node >= n || s.node == i {
                return Err(Error::UnsupportedTopology(format!("invalid link {i} -> {}", s.node)));
            }
        }
        if !(node.consumption >= 0.0) || !(node.markup > 0.0) {
            return Err(Error::Parameter(format!("node {i}: invalid consumption or markup")));
        }
    }
    let order = downstream_order(n, &nodes)?;
    let mut sales: Vec<f64> = nodes.iter().map(|nd| nd.consumption).collect();
    for &i in &order {
        let spend = nodes[i].primitives(sales[i]).accounts().spending;
        for (s, amount) in nodes[i].suppliers.iter().zip(&spend[2..]) {
            sales[s.node] += amount;
        }
    }

    let mut firms = Vec::with_capacity(n);
    for (i, node) in nodes.iter().enumerate() {
        let p = node.primitives(sales[i]);
        let a = p.accounts();
        let intermediates = pairwise_sum(&a.spending[2..]);
        let value_added = sales[i] - intermediates;
        if !(value_added > 0.0) {
            return Err(Error::Domain(format!("node {i} has nonpositive value added")));
        }
        firms.push(TruthFirm {
            firm_id: node.id.clone(),
            year: 0,
            industry: None,
            theta_v: p.rs() - node.capital.theta,
            theta_k: node.capital.theta,
            rs: p.rs(),
            markup: node.markup,
            markdown: p.inputs.iter().map(|x| x.nu).fold(1.0, f64::min),
            monopsony: p.monopsony()?,
            fc_adj: p.fc_adj()?,
            fixed_cost: a.fixed_cost,
            marginal_cost: 1.0 / node.markup,
            sale: sales[i],
            variable_cost: a.variable_cost - a.spending[1],
            intermediates,
            capital_cost: a.spending[1],
            total_cost: a.total_cost,
            profit: a.profit,
            value_added,
            omega: None,
        });
    }
    let sum = |g: fn(&TruthFirm) -> f64| pairwise_sum(&firms.iter().map(g).collect::<Vec<_>>());
    let gdp = pairwise_sum(&nodes.iter().map(|nd| nd.consumption).collect::<Vec<_>>());
    let total_sales = sum(|f| f.sale);
    let totals = TruthTotals {
        year: 0,
        gdp,
        total_sales,
        profits: sum(|f| f.profit),
        chi: total_sales / gdp,
        labor_comp: sum(|f| f.variable_cost - f.intermediates + f.fixed_cost),
        capital_payments: sum(|f| f.capital_cost),
    };
    let truth = TruthRecord {
        firms,
        totals: vec![totals],
    };
    truth.check_closure(1e-12)?;
    Ok(NetworkEconomy { nodes, sales, truth })
}

impl NetworkEconomy {
    pub fn gdp(&self) -> f64 {
        self.truth.totals[0].gdp
    }

    pub fn chi(&self) -> f64 {
        self.truth.totals[0].chi
    }

    /// Aggregate profits over GDP from the accounting tables.
    pub fn profit_share(&self) -> f64 {
        self.truth.totals[0].profits / self.gdp()
    }

    pub fn primitives(&self, i: usize) -> FirmPrimitives {
        self.nodes[i].primitives(self.sales[i])
    }

    /// Value-added weights `VA/GDP` and value-added profit rates `pi/VA`.
    pub fn va_weights_and_rates(&self) -> (Vec<f64>, Vec<f64>) {
        let gdp = self.gdp();
        self.truth
            .firms
            .iter()
            .map(|f| (f.value_added / gdp, f.profit / f.value_added))
            .unzip()
    }

    /// Firm measures computed from the primitives, as the estimator would
    /// report them with perfect elasticities.
    pub fn firm_measures(&self) -> Result<Vec<FirmMeasures>> {
        let total_sales = self.truth.totals[0].total_sales;
        let gdp = self.gdp();
        self.truth
            .firms
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let p = self.primitives(i);
                Ok(FirmMeasures {
                    firm_id: f.firm_id.clone(),
                    year: 0,
                    industry: None,
                    sale: f.sale,
                    markup: f.markup,
                    alpha_v: f.variable_cost / f.sale,
                    theta_v: f.theta_v,
                    theta_k: f.theta_k,
                    rs: f.rs,
                    fc_adj: f.fc_adj,
                    rs_adj: f.rs * f.fc_adj,
                    monopsony: f.monopsony,
                    profit_rate: p.profit_rate()?,
                    user_cost: None,
                    capital: None,
                    tc: f.total_cost,
                    fc: f.fixed_cost,
                    omega: f.sale / total_sales,
                    domar_weight: f.sale / gdp,
                })
            })
            .collect()
    }
}

fn draw_markdown(rng: &mut ChaCha8Rng, range: Option<(f64, f64)>) -> f64 {
    match range {
        Some((lo, hi)) if rng.gen_bool(0.6) && hi > lo => rng.gen_range(lo..hi),
        _ => 1.0,
    }
}

/// Random acyclic network with heterogeneous markups, markdowns and
/// fixed costs; identities are checked before returning.
pub fn gen_network_economy(spec: &NetworkSpec) -> Result<NetworkEconomy> {
    let n = spec.n_nodes;
    if n == 0 || n > MAX_NODES {
        return Err(Error::Parameter(format!("network size {n} outside 1..={MAX_NODES}")));
    }
    let (lo, hi) = spec.markup_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Parameter("invalid markup range".into()));
    }
    if let Some((a, b)) = spec.markdown_range {
        if !(a > 0.0 && b <= 1.0 && b >= a) {
            return Err(Error::Parameter("markdowns must lie in (0, 1]".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let links: Vec<Vec<usize>> = match &spec.topology {
        Topology::Isolated => vec![Vec::new(); n],
        Topology::Vertical => (0..n).map(|i| if i + 1 < n { vec![i + 1] } else { vec![] }).collect(),
        Topology::RandomAcyclic { density } => (0..n)
            .map(|i| (i + 1..n).filter(|_| rng.gen_bool(density.clamp(0.0, 1.0))).collect())
            .collect(),
        Topology::Edges(edges) => {
            let mut links = vec![Vec::new(); n];
            for &(buyer, supplier) in edges {
                if buyer >= n || supplier >= n {
                    return Err(Error::UnsupportedTopology(format!("link {buyer} -> {supplier} out of range")));
                }
                links[buyer].push(supplier);
            }
            links
        }
    };
    let uniform = |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| if b > a { rng.gen_range(a..b) } else { a };
    let nodes = links
        .into_iter()
        .enumerate()
        .map(|(i, sup)| {
            let markup = uniform(&mut rng, spec.markup_range);
            let rs = uniform(&mut rng, spec.rs_range);
            let int_share = if sup.is_empty() { 0.0 } else { rng.gen_range(0.3..0.7) };
            let raw: Vec<f64> = sup.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
            let raw_total: f64 = raw.iter().sum();
            let labor_w = rng.gen_range(0.3..1.0);
            let capital_w = rng.gen_range(0.1..0.6);
            let primary = rs * (1.0 - int_share);
            let suppliers = sup
                .iter()
                .zip(&raw)
                .map(|(&node, w)| Supplier {
                    node,
                    input: InputPrimitive {
                        theta: rs * int_share * w / raw_total,
                        nu: draw_markdown(&mut rng, spec.markdown_range),
                    },
                })
                .collect();
            NetworkNode {
                id: format!("n{i}"),
                consumption: rng.gen_range(10.0..100.0),
                markup,
                labor: InputPrimitive {
                    theta: primary * labor_w / (labor_w + capital_w),
                    nu: draw_markdown(&mut rng, spec.markdown_range),
                },
                capital: InputPrimitive {
                    theta: primary * capital_w / (labor_w + capital_w),
                    nu: 1.0,
                },
                suppliers,
                fc_ratio: uniform(&mut rng, spec.fc_ratio_range),
            }
        })
        .collect();
    solve_network(nodes)
}

/// A supply chain in which every producer earns the same profit rate;
/// node 0 sells `consumer_spend` to households, the last node uses labor only.
pub fn gen_vertical_chain(length: usize, profit_rate: f64, consumer_spend: f64) -> Result<NetworkEconomy> {
    if length == 0 || !(0.0..1.0).contains(&profit_rate) || !(consumer_spend > 0.0) {
        return Err(Error::Parameter("invalid vertical chain".into()));
    }
    let price_taking = |theta: f64| InputPrimitive { theta, nu: 1.0 };
    let nodes = (0..length)
        .map(|i| {
            let last = i + 1 == length;
            NetworkNode {
                id: format!("n{i}"),
                consumption: if i == 0 { consumer_spend } else { 0.0 },
                markup: 1.0 / (1.0 - profit_rate),
                labor: price_taking(if last { 1.0 } else { 0.0 }),
                capital: price_taking(0.0),
                suppliers: if last {
                    vec![]
                } else {
                    vec![Supplier {
                        node: i + 1,
                        input: price_taking(1.0),
                    }]
                },
                fc_ratio: 0.0,
            }
        })
        .collect();
    solve_network(nodes)
}

/// Two producers in a chain: households spend 100 on the downstream firm,
/// which buys 90 from the upstream firm; both earn 10% of sales.
pub fn gen_vertical_economy() -> NetworkEconomy {
    gen_vertical_chain(2, 0.1, 100.0).expect("fixed parameters are valid")
}
