use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use epichaos::dynsys::tree::{g_tree_infected, growth_map};
use epichaos::sim::{
    run, snapshot, variance, Dispersal, ModelConfig, Offspring, Simulation, Snapshot, TopologySpec,
};

fn torus(side: usize, r: usize, alpha: f64, seed: u64) -> ModelConfig {
    ModelConfig {
        topology: TopologySpec::Torus { dim: 2, side },
        beta: 2.25,
        offspring: Offspring::Poisson,
        dispersal: Dispersal::Radius { r },
        alpha,
        epidemic_range_cap: None,
        seed,
        record_half: false,
    }
}

#[test]
fn fixed_range_state_is_patchy() {
    let sim = Simulation::new(torus(450, 5, 5e-6, 6)).unwrap();
    let mut last = None;
    sim.run_observed(0.1, 200, |k, s| {
        if k == 200 {
            last = Some(snapshot(s).unwrap());
        }
    })
    .unwrap();
    let snap = last.unwrap();
    let observed = variance(&snap.block_densities(30).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut cells = snap.cells.clone();
    let null: Vec<f64> = (0..200)
        .map(|_| {
            cells.shuffle(&mut rng);
            let shuffled = Snapshot {
                side: snap.side,
                cells: cells.clone(),
            };
            variance(&shuffled.block_densities(30).unwrap())
        })
        .collect();
    let mean = null.iter().sum::<f64>() / null.len() as f64;
    let sd = variance(&null).sqrt();
    assert!(
        observed > mean + 3.0 * sd,
        "observed {observed}, shuffled {mean} ± {sd}"
    );
}

#[test]
fn mean_field_graph_tracks_finite_alpha_tree_orbit() {
    // The α → 0 map h_T ignores small clusters hit by the epidemic; at
    // α = 0.05 the survival probability of a finite tree cluster is used.
    let beta = 2.0 * 3f64.ln();
    let alpha = 0.05;
    let mut orbit = vec![0.1f64];
    for _ in 0..10 {
        let p = *orbit.last().unwrap();
        orbit.push(g_tree_infected(growth_map(p, beta).unwrap(), alpha).unwrap());
    }
    for seed in [1, 2, 3] {
        let cfg = ModelConfig {
            topology: TopologySpec::Rrg { n: 100_000 },
            beta,
            offspring: Offspring::Poisson,
            dispersal: Dispersal::Global,
            alpha,
            epidemic_range_cap: None,
            seed,
            record_half: false,
        };
        let rec = run(&cfg, 0.1, 10).unwrap();
        let dev = rec
            .densities
            .iter()
            .zip(&orbit)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.02, "seed {seed}: {dev}");
    }
}
