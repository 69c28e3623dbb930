use ecap::*;

fn rayleigh(scheme: Scheme, rate: f64, snr_db: f64, k: usize) -> HarqConfig {
    HarqConfig {
        scheme,
        max_rounds: k,
        rates: vec![rate],
        snr_db,
        fading: vec![Fading::RAYLEIGH; k],
        packet_bits: Some(1080.0),
        subcodeword_symbols: None,
    }
}

#[test]
fn closed_forms_agree_with_simulation() {
    let params = McParams::new(1_000_000, 2024);
    for rate in [1.0, 2.5, 4.0] {
        for snr_db in [0.0, 10.0, 20.0] {
            for scheme in [Scheme::TypeI, Scheme::Cc] {
                let cfg = rayleigh(scheme, rate, snr_db, 3);
                let mc = estimate_reward_table(&cfg, &params).unwrap();
                for k in 1..=3 {
                    let exact = outage_closed_form(&cfg, k).unwrap();
                    let se = (exact * (1.0 - exact) / params.samples as f64).sqrt();
                    let diff = (mc.curve.p()[k] - exact).abs();
                    assert!(
                        diff <= 3.0 * se + 1e-12,
                        "{scheme} R={rate} {snr_db} dB k={k}: {diff} > 3·{se}"
                    );
                }
            }
        }
    }
}

#[test]
fn outage_never_exceeds_max_arrival() {
    for scheme in [Scheme::TypeI, Scheme::Cc] {
        let cfg = HarqConfig::reference_defaults(scheme);
        let curve = outage_curve_closed_form(&cfg).unwrap();
        let mut theta = 1e-4;
        while theta <= 1e4 {
            let out = ec_outage(&cfg, &curve, theta).unwrap().capacity;
            let max = ec_max_arrival(&curve, 4.0, theta).unwrap().capacity;
            assert!(out <= max, "{scheme} θ̄={theta}");
            theta *= 10.0;
        }
    }
}

#[test]
fn ir_table_capacity_within_jackknife_of_long_run() {
    let cfg = rayleigh(Scheme::Ir, 3.0, 10.0, 3);
    let short = estimate_reward_table(&cfg, &McParams::new(100_000, 1)).unwrap();
    let long = estimate_reward_table(&cfg, &McParams::new(2_000_000, 99)).unwrap();
    let est = short.capacity_estimate(&cfg, 0.05).unwrap();
    let reference = long.effective_capacity(0.05).unwrap().capacity;
    assert!(
        (est.mean - reference).abs() <= 4.0 * est.stderr,
        "{} vs {reference} ± {}",
        est.mean,
        est.stderr
    );
}

#[test]
fn vr_lattice_resolution_does_not_matter() {
    // Rates 4 and 2 give a tick of 1/4; a copy on a lattice seven times finer
    // must give the same capacity.
    let curve = OutageCurve::new(vec![1.0, 0.3, 0.05]).unwrap();
    let coarse = reward_table_outage(&curve, &[4.0, 2.0], Scheme::Vr).unwrap();
    let entries = coarse
        .table
        .entries()
        .iter()
        .map(|e| RewardEntry::new(e.interarrival * 7, e.state.clone(), e.prob, e.reward))
        .collect();
    let fine = HarqTable {
        table: RewardTable::new(entries).unwrap(),
        tick: coarse.tick / 7.0,
    };
    for theta in [1e-3, 0.3, 5.0] {
        let a = coarse.effective_capacity(theta).unwrap().capacity;
        let b = fine.effective_capacity(theta).unwrap().capacity;
        assert!((a - b).abs() <= 1e-12 * a);
    }
}
